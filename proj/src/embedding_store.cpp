#include "clozebias/embedding_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "clozebias/error.hpp"
#include "clozebias/text.hpp"

namespace clozebias {

const char* to_string(EmbeddingFormat format) {
  return format == EmbeddingFormat::Word2VecText ? "word2vec-text" : "glove-text";
}

EmbeddingTable::EmbeddingTable(std::size_t dimension, const std::vector<Entry>& entries,
                               bool case_fold, std::string source_path, EmbeddingFormat format)
    : dimension_(dimension),
      case_fold_(case_fold),
      source_path_(std::move(source_path)),
      format_(format) {
  if (dimension_ == 0) throw Error(ErrorKind::Format, "embedding dimension must be positive");
  data_.reserve(entries.size() * dimension_);
  index_.reserve(entries.size());
  for (const auto& [word, vec] : entries) {
    if (vec.size() != dimension_) {
      throw Error(ErrorKind::Format, "vector for '" + word + "' has dimension " +
                                         std::to_string(vec.size()) + ", expected " +
                                         std::to_string(dimension_));
    }
    auto [it, inserted] = index_.emplace(key(word), data_.size());
    if (!inserted) {
      ++duplicates_;
      continue;
    }
    data_.insert(data_.end(), vec.begin(), vec.end());
  }
}

std::string EmbeddingTable::key(std::string_view word) const {
  return case_fold_ ? text::ascii_lower(word) : std::string(word);
}

std::optional<std::span<const float>> EmbeddingTable::find(std::string_view word) const {
  auto it = index_.find(key(word));
  if (it == index_.end()) return std::nullopt;
  return std::span<const float>(data_.data() + it->second, dimension_);
}

namespace {

bool parse_size(std::string_view token, std::size_t& out) {
  if (token.empty()) return false;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

bool parse_float(std::string_view token, float& out) {
  if (token.empty()) return false;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

std::vector<std::string_view> split_single_space(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t pos = line.find(' ', start);
    if (pos == std::string_view::npos) pos = line.size();
    if (pos > start) out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

EmbeddingTable parse_embeddings(std::string_view content, const EmbeddingLoadOptions& options,
                                const std::string& source) {
  auto all_lines = text::lines(content);
  while (!all_lines.empty() && all_lines.back().empty()) all_lines.pop_back();
  if (all_lines.empty()) throw Error(ErrorKind::Format, source + ": empty embedding file");

  std::size_t first_data = 0;
  std::size_t dimension = 0;
  EmbeddingFormat format = EmbeddingFormat::GloveText;

  auto head = split_single_space(all_lines.front());
  std::size_t header_count = 0;
  std::size_t header_dim = 0;
  bool looks_like_header = head.size() == 2 && parse_size(head[0], header_count) &&
                           parse_size(head[1], header_dim);
  bool use_header = options.format_hint ? *options.format_hint == EmbeddingFormat::Word2VecText
                                        : looks_like_header;
  if (use_header) {
    if (!looks_like_header) {
      throw Error(ErrorKind::Format, source + ": line 1: expected word2vec header 'count dim'");
    }
    if (header_dim == 0) throw Error(ErrorKind::Format, source + ": line 1: zero dimension");
    format = EmbeddingFormat::Word2VecText;
    dimension = header_dim;
    first_data = 1;
  }

  std::vector<EmbeddingTable::Entry> entries;
  entries.reserve(all_lines.size());
  for (std::size_t i = first_data; i < all_lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto& line = all_lines[i];
    if (line.empty()) continue;
    auto tokens = split_single_space(line);
    if (tokens.size() < 2) {
      throw Error(ErrorKind::Format,
                  source + ": line " + std::to_string(line_no) + ": expected a word and a vector");
    }
    const std::size_t row_dim = tokens.size() - 1;
    if (dimension == 0) dimension = row_dim;
    if (row_dim != dimension) {
      throw Error(ErrorKind::Format, source + ": dimension mismatch at line " +
                                         std::to_string(line_no) + " (got " +
                                         std::to_string(row_dim) + ", expected " +
                                         std::to_string(dimension) + ")");
    }
    std::vector<float> vec(dimension);
    for (std::size_t d = 0; d < dimension; ++d) {
      if (!parse_float(tokens[d + 1], vec[d])) {
        throw Error(ErrorKind::Format, source + ": unparseable float '" +
                                           std::string(tokens[d + 1]) + "' at line " +
                                           std::to_string(line_no));
      }
    }
    entries.emplace_back(std::string(tokens[0]), std::move(vec));
  }
  if (entries.empty()) throw Error(ErrorKind::Format, source + ": no vectors in embedding file");
  return EmbeddingTable(dimension, entries, options.case_fold, source, format);
}

EmbeddingTable load_embeddings(const std::string& path, const EmbeddingLoadOptions& options) {
  return parse_embeddings(text::read_file(path), options, path);
}

namespace {

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::Precondition, "cosine: dimension mismatch (" +
                                             std::to_string(u.size()) + " vs " +
                                             std::to_string(v.size()) + ")");
  }
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = static_cast<double>(u[i]);
    const double b = static_cast<double>(v[i]);
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorKind::Degenerate, "cosine: zero-norm vector");
  const double c = dot / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace

double cosine(std::span<const double> u, std::span<const double> v) { return cosine_impl(u, v); }
double cosine(std::span<const float> u, std::span<const float> v) { return cosine_impl(u, v); }

CombinedVector combine_vectors(const EmbeddingTable& table, std::span<const std::string> words) {
  CombinedVector out;
  std::vector<double> sum(table.dimension(), 0.0);
  for (const auto& w : words) {
    auto vec = table.find(w);
    if (!vec) {
      out.oov.push_back(w);
      continue;
    }
    out.resolved.push_back(w);
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += static_cast<double>((*vec)[d]);
  }
  if (out.resolved.empty()) {
    std::string listed;
    for (const auto& w : words) listed += (listed.empty() ? "" : ", ") + w;
    throw Error(ErrorKind::Oov, "no word resolves in the embedding table: [" + listed + "]");
  }
  const auto n = static_cast<double>(out.resolved.size());
  double norm2 = 0.0;
  for (double& x : sum) {
    x /= n;
    norm2 += x * x;
  }
  if (norm2 == 0.0) throw Error(ErrorKind::Degenerate, "combined vector has zero norm");
  const double norm = std::sqrt(norm2);
  for (double& x : sum) x /= norm;
  out.vector = std::move(sum);
  return out;
}

SimilarityResult similarity(const EmbeddingTable& table, std::span<const std::string> left,
                            std::span<const std::string> right) {
  SimilarityResult result;
  std::optional<CombinedVector> l;
  std::optional<CombinedVector> r;
  auto resolve = [&](std::span<const std::string> words, std::optional<CombinedVector>& slot) {
    try {
      slot = combine_vectors(table, words);
      result.oov_terms.insert(result.oov_terms.end(), slot->oov.begin(), slot->oov.end());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Oov && e.kind() != ErrorKind::Degenerate) throw;
      for (const auto& w : words) {
        if (!table.contains(w) || e.kind() == ErrorKind::Degenerate) result.oov_terms.push_back(w);
      }
      if (words.empty()) result.oov_terms.emplace_back("<empty>");
    }
  };
  resolve(left, l);
  resolve(right, r);
  if (!l || !r) return result;
  result.resolved = true;
  result.raw_cosine = cosine(std::span<const double>(l->vector), std::span<const double>(r->vector));
  result.value = std::clamp(result.raw_cosine, 0.0, 1.0);
  return result;
}

}  // namespace clozebias
