#ifndef QQSE_TESTS_HELPERS_H_
#define QQSE_TESTS_HELPERS_H_

#include <filesystem>
#include <string>

#include "qqse/catalog.h"
#include "qqse/model.h"
#include "qqse/ranking.h"

namespace qqse::testing {

const Catalog& shipped_catalog();

/// Fresh empty directory under the system temp dir, unique per call.
std::filesystem::path scratch_dir(const std::string& name);

std::string fixture_path(const std::string& relative);

/// Returns the same scores for every query.
class FixedScorer : public Scorer {
 public:
  explicit FixedScorer(ScoreVector scores, std::string name = "fixed")
      : scores_(scores), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  ScoreVector score(const Tokens&) const override { return scores_; }

 private:
  ScoreVector scores_;
  std::string name_;
};

/// Small network sizes that keep per-parameter loops fast.
HyperParams tiny_hyperparams(std::uint64_t seed = 0);

/// Entries with N(0, 1) components for the given tokens.
EmbeddingTable random_table(const std::vector<std::string>& tokens, std::size_t dim,
                            std::uint64_t seed);

}  // namespace qqse::testing

#endif  // QQSE_TESTS_HELPERS_H_
