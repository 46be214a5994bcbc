#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace clozebias {

enum class EmbeddingFormat { Word2VecText, GloveText };

const char* to_string(EmbeddingFormat format);

struct EmbeddingLoadOptions {
  std::optional<EmbeddingFormat> format_hint;
  // Lowercase ASCII letters of keys and queries. A no-op for scripts without case.
  bool case_fold = true;
};

// Immutable word -> vector map. Safe to share across threads once constructed.
class EmbeddingTable {
 public:
  using Entry = std::pair<std::string, std::vector<float>>;

  // Duplicate keys (after case folding) keep the first occurrence.
  EmbeddingTable(std::size_t dimension, const std::vector<Entry>& entries, bool case_fold = true,
                 std::string source_path = {}, EmbeddingFormat format = EmbeddingFormat::GloveText);

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return index_.size(); }
  const std::string& source_path() const { return source_path_; }
  EmbeddingFormat format() const { return format_; }
  std::size_t duplicate_count() const { return duplicates_; }
  bool case_fold() const { return case_fold_; }

  std::optional<std::span<const float>> find(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word).has_value(); }

 private:
  std::string key(std::string_view word) const;

  std::size_t dimension_;
  bool case_fold_;
  std::string source_path_;
  EmbeddingFormat format_;
  std::size_t duplicates_ = 0;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

EmbeddingTable load_embeddings(const std::string& path, const EmbeddingLoadOptions& options = {});

// Parses the text formats from memory. `source` is used in error messages.
EmbeddingTable parse_embeddings(std::string_view content, const EmbeddingLoadOptions& options = {},
                                const std::string& source = "<memory>");

// dot(u,v) / (|u| |v|), clamped to [-1, 1]. Throws Error(Degenerate) for a zero vector.
double cosine(std::span<const double> u, std::span<const double> v);
double cosine(std::span<const float> u, std::span<const float> v);

struct CombinedVector {
  std::vector<double> vector;  // unit norm
  std::vector<std::string> resolved;
  std::vector<std::string> oov;
};

// Mean of the resolved vectors, renormalized to unit length.
// Throws Error(Oov) when no word resolves, Error(Degenerate) when the mean is zero.
CombinedVector combine_vectors(const EmbeddingTable& table, std::span<const std::string> words);

struct SimilarityResult {
  double value = 0.0;       // clamp(raw_cosine, 0, 1), or 0 when a side is unresolved
  double raw_cosine = 0.0;  // in [-1, 1]; 0 when a side is unresolved
  bool resolved = false;
  std::vector<std::string> oov_terms;
};

// Similarity of two word groups. OOV is a soft outcome: value 0, terms listed.
SimilarityResult similarity(const EmbeddingTable& table, std::span<const std::string> left,
                            std::span<const std::string> right);

}  // namespace clozebias
