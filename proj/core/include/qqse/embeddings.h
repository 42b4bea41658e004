#ifndef QQSE_EMBEDDINGS_H_
#define QQSE_EMBEDDINGS_H_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qqse/tokenizer.h"

namespace qqse {
/// Dimension of the Stack Overflow GloVe vectors the model is trained on.
/// Paper configuration for the GloVe vectors.
inline constexpr std::size_t kDefaultEmbeddingDim = 200;

/// Immutable token -> vector map loaded from a GloVe text file.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  /// Builds a table from in-memory entries. The fingerprint is computed over
  /// the GloVe text rendering of the entries, so it matches what
  /// `load_embeddings` reports for the same content written to disk.
  static EmbeddingTable from_entries(
      const std::vector<std::pair<std::string, std::vector<float>>>& entries);

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  const std::string& fingerprint() const { return fingerprint_; }

  /// Vector for `token`, or an empty span when out of vocabulary.
  std::span<const float> find(std::string_view token) const;
  bool contains(std::string_view token) const { return !find(token).empty(); }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  friend EmbeddingTable parse_embeddings(std::string_view, std::optional<std::size_t>);

  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };

  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t, Hash, std::equal_to<>> index_;
  std::string fingerprint_;
};

/// Parses GloVe text: "token v1 ... vD" per line, no header. The dimension is
/// inferred from the first line unless `expected_dimension` is given.
EmbeddingTable parse_embeddings(std::string_view text,
                                std::optional<std::size_t> expected_dimension = std::nullopt);
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dimension = std::nullopt);

/// GloVe text rendering of a table (round-trips through parse_embeddings).
std::string serialize_embeddings(const EmbeddingTable& table);

/// Fixed-shape, zero-padded token matrix (row-major, max_len x dim).
struct SequenceMatrix {
  std::size_t max_len = 0;
  std::size_t dim = 0;
  std::size_t true_length = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  const float* data() const { return values.data(); }
};

/// Row i holds the vector of tokens[i] (zero when OOV) for the first
/// min(|tokens|, max_len) tokens; remaining rows are zero.
SequenceMatrix embed_sequence(const EmbeddingTable& table, const Tokens& tokens,
                              std::size_t max_len);

/// Mean of token vectors; OOV tokens count as zero vectors in the
/// denominator. An empty token list yields the zero vector.
std::vector<double> average_embedding(const EmbeddingTable& table, const Tokens& tokens);

/// dot(a, b) / (|a| |b|), or 0 when either norm is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace qqse

#endif  // QQSE_EMBEDDINGS_H_
