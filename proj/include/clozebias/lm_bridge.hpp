#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace clozebias {

struct TokenOffset {
  std::size_t start = 0;  // code point index into the sentence
  std::size_t end = 0;    // exclusive

  bool operator==(const TokenOffset&) const = default;
};

// Per-token natural-log probabilities of one sentence under one model.
// logprobs[i] = ln P(tokens[i] | tokens[<i]); the first entry is usually null.
struct SentenceScore {
  std::string sentence_id;
  std::string model_id;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<std::optional<double>> logprobs;
  std::vector<TokenOffset> token_offsets;

  bool operator==(const SentenceScore&) const = default;
};

struct PronounSpan {
  std::size_t token_start = 0;
  std::size_t token_end = 0;  // exclusive
};

enum class SentenceAggregation { MeanProb, GeoMean };

const char* to_string(SentenceAggregation agg);
SentenceAggregation parse_sentence_aggregation(std::string_view name);

// Probability of a multi-token pronoun: the product over its tokens, or the
// per-token geometric mean.
enum class PronounProb { Raw, PerToken };

const char* to_string(PronounProb norm);
PronounProb parse_pronoun_prob(std::string_view name);

// Schema problems of one wire record; empty when the record is valid.
std::vector<std::string> validate_record(const nlohmann::json& record);

// Problems of a JSON-lines logprob file, prefixed with "line N:".
std::vector<std::string> validate_logprob_file(std::string_view content);

// Problems of an HTTP response body (a JSON array of records, or an error envelope).
std::vector<std::string> validate_http_response(std::string_view body);

// Throws Error(Validation) listing every schema problem.
SentenceScore score_from_json(const nlohmann::json& record);
nlohmann::json to_json(const SentenceScore& score);

// Maps a pronoun's code point range to the tokens covering it. The first token
// may carry leading whitespace; any other misalignment throws Error(InvalidSpan).
PronounSpan locate_span(const SentenceScore& score, std::size_t char_begin, std::size_t char_end);

// exp of the summed (or, for PerToken, averaged) in-span logprobs. Throws
// Error(InvalidSpan) for a span that touches token 0, is empty or out of range,
// or covers a null logprob.
double pronoun_prob(const SentenceScore& score, PronounSpan span, PronounProb norm = PronounProb::Raw);

// Aggregate probability over tokens 1..n-1 (null entries skipped).
// Throws Error(Degenerate) if nothing is scored.
double sentence_mean_prob(const SentenceScore& score, SentenceAggregation agg);

class LmProvider {
 public:
  virtual ~LmProvider() = default;
  virtual std::string model_id() const = 0;
  virtual std::string describe() const = 0;
  virtual SentenceScore score(const std::string& sentence) = 0;
  virtual std::vector<SentenceScore> score_batch(std::span<const std::string> sentences);
};

struct MockTokenization {
  std::vector<std::string> tokens;
  std::vector<TokenOffset> offsets;
};

// Splits into ASCII word runs and single non-ASCII/punctuation code points,
// each carrying its leading whitespace; trailing whitespace joins the last token.
MockTokenization mock_tokenize(std::string_view sentence);

// -(1 + (fnv1a64(seed '\x1f' prefix '\x1f' token) mod 1000) / 1000)
double mock_logprob(std::uint64_t seed, std::string_view prefix, std::string_view token);

class MockProvider : public LmProvider {
 public:
  struct Fixed {
    std::vector<std::string> tokens;
    std::vector<std::optional<double>> logprobs;
  };

  explicit MockProvider(std::uint64_t seed = 0, std::string model_id = "mock");

  // Sentences in the table are answered verbatim instead of hashed.
  void set_fixed(const std::string& sentence, Fixed fixed);

  std::string model_id() const override { return model_id_; }
  std::string describe() const override;
  SentenceScore score(const std::string& sentence) override;

 private:
  std::uint64_t seed_;
  std::string model_id_;
  std::map<std::string, Fixed> fixed_;
};

// Reads a JSON-lines logprob file. When the file holds several models,
// `model_id` selects one; otherwise the single model present is used.
class FileProvider : public LmProvider {
 public:
  explicit FileProvider(const std::string& path, std::optional<std::string> model_id = {});
  static FileProvider from_string(std::string_view content, std::optional<std::string> model_id = {},
                                  const std::string& source = "<memory>");

  std::string model_id() const override { return model_id_; }
  std::string describe() const override { return "file:" + source_; }
  SentenceScore score(const std::string& sentence) override;
  std::size_t size() const { return records_.size(); }

 private:
  FileProvider() = default;
  void load(std::string_view content, std::optional<std::string> model_id);

  std::string source_;
  std::string model_id_;
  std::unordered_map<std::string, SentenceScore> records_;
};

struct HttpOptions {
  std::size_t batch_size = 16;
  std::size_t max_in_flight = 4;
  int retries = 2;
  int connect_timeout_ms = 2000;
  int read_timeout_ms = 60000;
};

// Client for POST /v1/logprobs.
class HttpProvider : public LmProvider {
 public:
  HttpProvider(std::string url, std::string model_id, HttpOptions options = {});

  std::string model_id() const override { return model_id_; }
  std::string describe() const override { return "http:" + url_; }
  const std::string& url() const { return url_; }

  SentenceScore score(const std::string& sentence) override;
  std::vector<SentenceScore> score_batch(std::span<const std::string> sentences) override;

 private:
  std::vector<SentenceScore> post(std::span<const std::string> sentences) const;

  std::string url_;
  std::string host_base_;  // scheme://host:port
  std::string path_prefix_;
  std::string model_id_;
  HttpOptions options_;
};

// Memoizes another provider by sentence id. Concurrent reads share a lock;
// writes are exclusive.
class CachingProvider : public LmProvider {
 public:
  explicit CachingProvider(std::unique_ptr<LmProvider> inner);

  std::string model_id() const override { return inner_->model_id(); }
  std::string describe() const override { return inner_->describe(); }
  SentenceScore score(const std::string& sentence) override;
  std::vector<SentenceScore> score_batch(std::span<const std::string> sentences) override;

  // Number of sentences forwarded to the wrapped provider.
  std::size_t inner_calls() const { return inner_calls_.load(); }
  std::size_t cache_size() const;

 private:
  std::unique_ptr<LmProvider> inner_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, SentenceScore> cache_;
  std::atomic<std::size_t> inner_calls_{0};
};

}  // namespace clozebias
