#ifndef QQSE_CATALOG_H_
#define QQSE_CATALOG_H_

#include <array>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qqse/tokenizer.h"

namespace qqse {

/// Number of clarification questions in the catalog.
inline constexpr int kNumQuestions = 16;

/// One score per catalog question; index i holds question id i + 1.
using ScoreVector = std::array<double, kNumQuestions>;

struct ClarificationQuestion {
  int id = 0;
  std::string text;
  std::vector<std::string> common_answers;

  bool operator==(const ClarificationQuestion&) const = default;
};

/// The 16 clarification questions, ordered by id.
class Catalog {
 public:
  /// Validates: exactly ids 1..16, each once, non-empty text.
  Catalog(std::vector<ClarificationQuestion> questions, std::string version);

  const std::vector<ClarificationQuestion>& questions() const { return questions_; }
  const ClarificationQuestion& at(int id) const;
  const std::string& version() const { return version_; }
  std::size_t size() const { return questions_.size(); }

  auto begin() const { return questions_.begin(); }
  auto end() const { return questions_.end(); }

 private:
  std::vector<ClarificationQuestion> questions_;
  std::string version_;
};

/// Parses the catalog JSON array. The version is the FNV-1a digest of the
/// bytes, prefixed "cq16-".
Catalog parse_catalog(std::string_view json_text);
Catalog load_catalog(const std::filesystem::path& path);

/// Location of the shipped catalog: $QQSE_DATA_DIR, then the install prefix,
/// then the source tree's data directory when built in-tree.
std::filesystem::path default_catalog_path();

/// Question text tokens and the answers flattened into one token sequence
/// in catalog order.
Tokens question_tokens(const ClarificationQuestion& question);
Tokens answer_tokens(const ClarificationQuestion& question);

enum class Origin { kSeed, kAugmented };

struct AnnotatedQuery {
  std::string id;
  Tokens tokens;
  std::set<int> valid_cq_ids;
  Origin origin = Origin::kSeed;
  std::string seed_id;

  bool operator==(const AnnotatedQuery&) const = default;
};

/// Checks token and cq-id invariants of a single query. Empty
/// `valid_cq_ids` are accepted only when `allow_unlabeled` is set.
void validate_query(const AnnotatedQuery& query, bool allow_unlabeled);

/// A list of queries with unique ids and pairwise distinct token sequences.
///
/// catalog_version is carried in memory only; the JSONL file holds queries.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<AnnotatedQuery> queries, std::string catalog_version = {},
                  bool allow_unlabeled = true);

  const std::vector<AnnotatedQuery>& queries() const { return queries_; }
  const std::string& catalog_version() const { return catalog_version_; }
  std::size_t size() const { return queries_.size(); }
  bool empty() const { return queries_.empty(); }
  bool contains_tokens(const Tokens& tokens) const;

  bool operator==(const Corpus& other) const { return queries_ == other.queries_; }

 private:
  std::vector<AnnotatedQuery> queries_;
  std::string catalog_version_;
};

/// One JSONL line per query. Seed queries must carry at least one valid
/// question; errors report the 1-based line number.
Corpus parse_corpus(std::string_view jsonl);
Corpus load_corpus(const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct Triplet {
  const AnnotatedQuery* query = nullptr;
  const ClarificationQuestion* cq = nullptr;
  int label = 0;
};

/// 16 triplets per query, in (query order) x (ascending cq id). The triplets
/// point into `corpus` and `catalog`, which must outlive them.
std::vector<Triplet> make_triplets(const Corpus& corpus, const Catalog& catalog);

enum class SplitMode {
  /// Every query is assigned independently.
  kQuery,
  /// Augmented variants follow their seed query.
  kSeedGroup,
};

/// Seeded query-level split. The train side receives round(fraction * N)
/// queries (half away from zero); in kSeedGroup mode whole seed groups are
/// assigned until that target is reached, so sizes are approximate.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction,
                                       std::uint64_t seed,
                                       SplitMode mode = SplitMode::kQuery);

}  // namespace qqse

#endif  // QQSE_CATALOG_H_
