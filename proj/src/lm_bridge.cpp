#include "clozebias/lm_bridge.hpp"

#include <cmath>
#include <future>
#include <mutex>
#include <thread>

#include "clozebias/error.hpp"
#include "clozebias/text.hpp"
#include "httplib.h"

namespace clozebias {

using nlohmann::json;

const char* to_string(SentenceAggregation agg) {
  return agg == SentenceAggregation::MeanProb ? "mean-prob" : "geo-mean";
}

SentenceAggregation parse_sentence_aggregation(std::string_view name) {
  if (name == "mean-prob") return SentenceAggregation::MeanProb;
  if (name == "geo-mean") return SentenceAggregation::GeoMean;
  throw Error(ErrorKind::Validation, "unknown sentence aggregation '" + std::string(name) +
                                         "' (expected mean-prob or geo-mean)");
}

// ---------------------------------------------------------------------------
// Wire records

std::vector<std::string> validate_record(const json& record) {
  std::vector<std::string> problems;
  if (!record.is_object()) {
    problems.emplace_back("record is not a JSON object");
    return problems;
  }
  auto require_string = [&](const char* field) -> const json* {
    auto it = record.find(field);
    if (it == record.end()) {
      problems.push_back(std::string("missing field '") + field + "'");
      return nullptr;
    }
    if (!it->is_string()) {
      problems.push_back(std::string("field '") + field + "' must be a string");
      return nullptr;
    }
    return &*it;
  };
  auto require_array = [&](const char* field) -> const json* {
    auto it = record.find(field);
    if (it == record.end()) {
      problems.push_back(std::string("missing field '") + field + "'");
      return nullptr;
    }
    if (!it->is_array()) {
      problems.push_back(std::string("field '") + field + "' must be an array");
      return nullptr;
    }
    return &*it;
  };

  const json* id = require_string("sentence_id");
  if (id && id->get_ref<const std::string&>().empty()) problems.emplace_back("empty sentence_id");
  require_string("model_id");
  const json* text_field = require_string("text");
  const json* tokens = require_array("tokens");
  const json* logprobs = require_array("logprobs");
  const json* offsets = require_array("token_offsets");
  if (!problems.empty()) return problems;

  const std::size_t n = tokens->size();
  if (n == 0) problems.emplace_back("tokens is empty");
  if (logprobs->size() != n) {
    problems.push_back("len(logprobs)=" + std::to_string(logprobs->size()) +
                       " != len(tokens)=" + std::to_string(n));
  }
  if (offsets->size() != n) {
    problems.push_back("len(token_offsets)=" + std::to_string(offsets->size()) +
                       " != len(tokens)=" + std::to_string(n));
  }
  for (std::size_t i = 0; i < tokens->size(); ++i) {
    if (!(*tokens)[i].is_string()) problems.push_back("tokens[" + std::to_string(i) + "] is not a string");
  }
  for (std::size_t i = 0; i < logprobs->size(); ++i) {
    const auto& lp = (*logprobs)[i];
    if (lp.is_null()) continue;
    if (!lp.is_number()) {
      problems.push_back("logprobs[" + std::to_string(i) + "] is not a number or null");
      continue;
    }
    double v = lp.get<double>();
    if (!std::isfinite(v) || v > 0.0) {
      problems.push_back("logprobs[" + std::to_string(i) + "] must be finite and <= 0");
    }
  }
  if (!problems.empty()) return problems;

  const auto& sentence = text_field->get_ref<const std::string&>();
  const auto expected_id = text::sentence_id(record["model_id"].get<std::string>(), sentence);
  if (id->get_ref<const std::string&>() != expected_id) {
    problems.push_back("sentence_id '" + id->get<std::string>() + "' does not match hash of (model_id, text) '" +
                       expected_id + "'");
  }
  std::size_t text_len = 0;
  try {
    text_len = text::decode_utf8(sentence).size();
  } catch (const Error& e) {
    problems.push_back(std::string("text: ") + e.what());
    return problems;
  }
  std::size_t covered = 0;
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& off = (*offsets)[i];
    const std::string where = "token_offsets[" + std::to_string(i) + "]";
    if (!off.is_array() || off.size() != 2 || !off[0].is_number_unsigned() ||
        !off[1].is_number_unsigned()) {
      if (off.is_array() && off.size() == 2 && off[0].is_number_integer() && off[1].is_number_integer()) {
        problems.push_back(where + " has a negative offset");
      } else {
        problems.push_back(where + " must be [start, end] non-negative integers");
      }
      continue;
    }
    auto s = off[0].get<std::size_t>();
    auto e = off[1].get<std::size_t>();
    if (s > e || e > text_len) {
      problems.push_back(where + " out of range for text of length " + std::to_string(text_len));
      continue;
    }
    if (s < prev_end) problems.push_back(where + " overlaps the previous token");
    prev_end = e;
    covered += e - s;
    if (text::slice(sentence, s, e) != (*tokens)[i].get_ref<const std::string&>()) {
      problems.push_back("tokens[" + std::to_string(i) + "] does not match text at " + where);
    }
  }
  if (problems.empty() && covered != text_len) {
    problems.push_back("token_offsets cover " + std::to_string(covered) + " of " +
                       std::to_string(text_len) + " characters");
  }
  return problems;
}

std::vector<std::string> validate_logprob_file(std::string_view content) {
  std::vector<std::string> problems;
  auto all = text::lines(content);
  std::size_t records = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (text::trim(all[i]).empty()) continue;
    const std::string prefix = "line " + std::to_string(i + 1) + ": ";
    json record;
    try {
      record = json::parse(all[i]);
    } catch (const json::parse_error& e) {
      problems.push_back(prefix + "invalid JSON: " + e.what());
      continue;
    }
    ++records;
    for (auto& p : validate_record(record)) problems.push_back(prefix + p);
  }
  if (records == 0 && problems.empty()) problems.emplace_back("no records");
  return problems;
}

std::vector<std::string> validate_http_response(std::string_view body) {
  std::vector<std::string> problems;
  json parsed;
  try {
    parsed = json::parse(body);
  } catch (const json::parse_error& e) {
    problems.push_back(std::string("invalid JSON: ") + e.what());
    return problems;
  }
  if (parsed.is_object()) {
    auto err = parsed.find("error");
    if (err == parsed.end() || !err->is_object()) {
      problems.emplace_back("object response must be an error envelope {\"error\": {...}}");
      return problems;
    }
    if (!err->contains("code")) problems.emplace_back("error envelope missing 'code'");
    if (!err->contains("message") || !(*err)["message"].is_string()) {
      problems.emplace_back("error envelope missing string 'message'");
    }
    return problems;
  }
  if (!parsed.is_array()) {
    problems.emplace_back("response must be an array of records or an error envelope");
    return problems;
  }
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    for (auto& p : validate_record(parsed[i])) {
      problems.push_back("record " + std::to_string(i) + ": " + p);
    }
  }
  return problems;
}

SentenceScore score_from_json(const json& record) {
  auto problems = validate_record(record);
  if (!problems.empty()) {
    std::string msg = "invalid logprob record";
    if (record.is_object() && record.contains("text") && record["text"].is_string()) {
      msg += " for \"" + record["text"].get<std::string>() + "\"";
    }
    for (const auto& p : problems) msg += "; " + p;
    throw Error(ErrorKind::Validation, msg);
  }
  SentenceScore s;
  s.sentence_id = record["sentence_id"].get<std::string>();
  s.model_id = record["model_id"].get<std::string>();
  s.text = record["text"].get<std::string>();
  s.tokens = record["tokens"].get<std::vector<std::string>>();
  for (const auto& lp : record["logprobs"]) {
    s.logprobs.push_back(lp.is_null() ? std::nullopt : std::optional<double>(lp.get<double>()));
  }
  for (const auto& off : record["token_offsets"]) {
    s.token_offsets.push_back({off[0].get<std::size_t>(), off[1].get<std::size_t>()});
  }
  return s;
}

json to_json(const SentenceScore& score) {
  json logprobs = json::array();
  for (const auto& lp : score.logprobs) logprobs.push_back(lp ? json(*lp) : json(nullptr));
  json offsets = json::array();
  for (const auto& off : score.token_offsets) offsets.push_back(json::array({off.start, off.end}));
  json out = json::object();
  out["sentence_id"] = score.sentence_id;
  out["model_id"] = score.model_id;
  out["text"] = score.text;
  out["tokens"] = score.tokens;
  out["logprobs"] = std::move(logprobs);
  out["token_offsets"] = std::move(offsets);
  return out;
}

// ---------------------------------------------------------------------------
// Probabilities

PronounSpan locate_span(const SentenceScore& score, std::size_t char_begin, std::size_t char_end) {
  auto misaligned = [&]() {
    return Error(ErrorKind::InvalidSpan,
                 "pronoun at characters [" + std::to_string(char_begin) + ", " +
                     std::to_string(char_end) + ") does not align with token boundaries in \"" +
                     score.text + "\"");
  };
  if (char_begin >= char_end) throw misaligned();
  const auto& offs = score.token_offsets;
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < offs.size(); ++i) {
    if (offs[i].start <= char_begin && char_begin < offs[i].end) {
      first = i;
      break;
    }
  }
  if (!first) throw misaligned();
  if (offs[*first].start < char_begin) {
    auto lead = text::decode_utf8(text::slice(score.text, offs[*first].start, char_begin));
    for (char32_t cp : lead) {
      if (!text::is_space(cp)) throw misaligned();
    }
  }
  for (std::size_t j = *first; j < offs.size(); ++j) {
    if (offs[j].end == char_end) return PronounSpan{*first, j + 1};
    if (offs[j].end > char_end) break;
  }
  throw misaligned();
}

const char* to_string(PronounProb norm) { return norm == PronounProb::Raw ? "raw" : "per-token"; }

PronounProb parse_pronoun_prob(std::string_view name) {
  if (name == "raw") return PronounProb::Raw;
  if (name == "per-token") return PronounProb::PerToken;
  throw Error(ErrorKind::Validation, "unknown pronoun probability '" + std::string(name) + "' (expected raw or per-token)");
}

double pronoun_prob(const SentenceScore& score, PronounSpan span, PronounProb norm) {
  if (span.token_start == 0) {
    throw Error(ErrorKind::InvalidSpan, "pronoun span includes token 0, which has no conditioning context");
  }
  if (span.token_start >= span.token_end || span.token_end > score.logprobs.size()) {
    throw Error(ErrorKind::InvalidSpan, "pronoun span [" + std::to_string(span.token_start) + ", " +
                                            std::to_string(span.token_end) + ") is empty or out of range");
  }
  double total = 0.0;
  for (std::size_t i = span.token_start; i < span.token_end; ++i) {
    if (!score.logprobs[i]) {
      throw Error(ErrorKind::InvalidSpan, "pronoun span covers token " + std::to_string(i) +
                                              " with no logprob");
    }
    total += *score.logprobs[i];
  }
  if (norm == PronounProb::PerToken) total /= static_cast<double>(span.token_end - span.token_start);
  return std::exp(total);
}

double sentence_mean_prob(const SentenceScore& score, SentenceAggregation agg) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 1; i < score.logprobs.size(); ++i) {
    if (!score.logprobs[i]) continue;
    sum += agg == SentenceAggregation::MeanProb ? std::exp(*score.logprobs[i]) : *score.logprobs[i];
    ++n;
  }
  if (n == 0) {
    throw Error(ErrorKind::Degenerate, "no scored tokens beyond the first in \"" + score.text + "\"");
  }
  const double mean = sum / static_cast<double>(n);
  return agg == SentenceAggregation::MeanProb ? mean : std::exp(mean);
}

// ---------------------------------------------------------------------------
// Providers

std::vector<SentenceScore> LmProvider::score_batch(std::span<const std::string> sentences) {
  std::vector<SentenceScore> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(score(s));
  return out;
}

MockTokenization mock_tokenize(std::string_view sentence) {
  const auto cps = text::decode_utf8(sentence);
  MockTokenization out;
  std::size_t i = 0;
  while (i < cps.size()) {
    const std::size_t start = i;
    while (i < cps.size() && text::is_space(cps[i])) ++i;
    if (i == cps.size()) {
      // Trailing whitespace joins the previous token.
      if (out.offsets.empty()) break;
      out.offsets.back().end = i;
      break;
    }
    if (text::is_ascii_word_char(cps[i])) {
      while (i < cps.size() && text::is_ascii_word_char(cps[i])) ++i;
    } else {
      ++i;
    }
    out.offsets.push_back({start, i});
  }
  for (const auto& off : out.offsets) {
    std::vector<char32_t> piece(cps.begin() + static_cast<std::ptrdiff_t>(off.start),
                                cps.begin() + static_cast<std::ptrdiff_t>(off.end));
    out.tokens.push_back(text::encode_utf8(piece));
  }
  return out;
}

double mock_logprob(std::uint64_t seed, std::string_view prefix, std::string_view token) {
  std::string key = std::to_string(seed);
  key.push_back('\x1f');
  key.append(prefix);
  key.push_back('\x1f');
  key.append(token);
  const auto bucket = text::fnv1a64(key) % 1000;
  return -(1.0 + static_cast<double>(bucket) / 1000.0);
}

MockProvider::MockProvider(std::uint64_t seed, std::string model_id)
    : seed_(seed), model_id_(std::move(model_id)) {}

void MockProvider::set_fixed(const std::string& sentence, Fixed fixed) {
  if (fixed.tokens.size() != fixed.logprobs.size()) {
    throw Error(ErrorKind::Validation, "mock fixture: tokens and logprobs differ in length");
  }
  std::string joined;
  for (const auto& t : fixed.tokens) joined += t;
  if (joined != sentence) {
    throw Error(ErrorKind::Validation, "mock fixture: tokens do not concatenate to \"" + sentence + "\"");
  }
  fixed_[sentence] = std::move(fixed);
}

std::string MockProvider::describe() const { return "mock:seed=" + std::to_string(seed_); }

SentenceScore MockProvider::score(const std::string& sentence) {
  SentenceScore s;
  s.model_id = model_id_;
  s.text = sentence;
  s.sentence_id = text::sentence_id(model_id_, sentence);
  if (auto it = fixed_.find(sentence); it != fixed_.end()) {
    s.tokens = it->second.tokens;
    s.logprobs = it->second.logprobs;
    std::size_t pos = 0;
    for (const auto& t : s.tokens) {
      const std::size_t len = text::length(t);
      s.token_offsets.push_back({pos, pos + len});
      pos += len;
    }
    return s;
  }
  auto tok = mock_tokenize(sentence);
  if (tok.tokens.empty()) {
    throw Error(ErrorKind::Degenerate, "mock provider: sentence has no tokens");
  }
  s.tokens = std::move(tok.tokens);
  s.token_offsets = std::move(tok.offsets);
  std::string prefix;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (i == 0) {
      s.logprobs.emplace_back(std::nullopt);
    } else {
      s.logprobs.emplace_back(mock_logprob(seed_, prefix, s.tokens[i]));
    }
    prefix += s.tokens[i];
  }
  return s;
}

FileProvider::FileProvider(const std::string& path, std::optional<std::string> model_id)
    : source_(path) {
  load(text::read_file(path), std::move(model_id));
}

FileProvider FileProvider::from_string(std::string_view content, std::optional<std::string> model_id,
                                       const std::string& source) {
  FileProvider p;
  p.source_ = source;
  p.load(content, std::move(model_id));
  return p;
}

void FileProvider::load(std::string_view content, std::optional<std::string> model_id) {
  auto all = text::lines(content);
  std::vector<SentenceScore> parsed;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (text::trim(all[i]).empty()) continue;
    const std::string prefix = source_ + ": line " + std::to_string(i + 1) + ": ";
    try {
      parsed.push_back(score_from_json(json::parse(all[i])));
    } catch (const json::parse_error& e) {
      problems.push_back(prefix + "invalid JSON: " + e.what());
    } catch (const Error& e) {
      problems.push_back(prefix + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "\n") + p;
    throw Error(ErrorKind::Validation, msg);
  }
  if (!model_id) {
    for (const auto& s : parsed) {
      if (!model_id) {
        model_id = s.model_id;
      } else if (*model_id != s.model_id) {
        throw Error(ErrorKind::Validation,
                    source_ + ": file holds several models ('" + *model_id + "', '" + s.model_id +
                        "'); select one with a model id");
      }
    }
  }
  model_id_ = model_id.value_or("");
  for (auto& s : parsed) {
    if (s.model_id != model_id_) continue;
    records_.try_emplace(s.text, std::move(s));
  }
  if (records_.empty() && !parsed.empty()) {
    throw Error(ErrorKind::Validation, source_ + ": no record for model '" + model_id_ + "'");
  }
}

SentenceScore FileProvider::score(const std::string& sentence) {
  auto it = records_.find(sentence);
  if (it == records_.end()) {
    throw Error(ErrorKind::MissingScore, "no logprob record for \"" + sentence + "\" (model '" +
                                             model_id_ + "') in " + source_);
  }
  return it->second;
}

namespace {

void split_url(const std::string& url, std::string& host_base, std::string& path_prefix) {
  const auto scheme_end = url.find("://");
  if (url.rfind("http://", 0) != 0) {
    throw Error(ErrorKind::Validation, "server URL must start with http:// : " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    host_base = url;
    path_prefix.clear();
  } else {
    host_base = url.substr(0, path_start);
    path_prefix = url.substr(path_start);
    while (!path_prefix.empty() && path_prefix.back() == '/') path_prefix.pop_back();
  }
}

}  // namespace

HttpProvider::HttpProvider(std::string url, std::string model_id, HttpOptions options)
    : url_(std::move(url)), model_id_(std::move(model_id)), options_(options) {
  split_url(url_, host_base_, path_prefix_);
  if (options_.batch_size == 0) options_.batch_size = 1;
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

std::vector<SentenceScore> HttpProvider::post(std::span<const std::string> sentences) const {
  json body = json::object();
  body["model_id"] = model_id_;
  body["texts"] = json::array();
  for (const auto& s : sentences) body["texts"].push_back(s);
  const std::string payload = body.dump();
  const std::string path = path_prefix_ + "/v1/logprobs";

  httplib::Client client(host_base_);
  client.set_connection_timeout(std::chrono::milliseconds(options_.connect_timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(options_.read_timeout_ms));

  const int attempts = options_.retries + 1;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto res = client.Post(path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      if (attempt < attempts) std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      std::string detail = "HTTP " + std::to_string(res->status);
      try {
        auto envelope = json::parse(res->body);
        if (envelope.is_object() && envelope.contains("error")) {
          const auto& err = envelope["error"];
          if (err.contains("code")) detail += " code=" + err["code"].dump();
          if (err.contains("message") && err["message"].is_string()) {
            detail += ": " + err["message"].get<std::string>();
          }
        }
      } catch (const json::parse_error&) {
      }
      // Client errors are not retried.
      if (res->status < 500 || attempt == attempts) {
        throw Error(ErrorKind::Transport, "POST " + url_ + "/v1/logprobs failed: " + detail + " (attempt " +
                                              std::to_string(attempt) + " of " +
                                              std::to_string(attempts) + ")");
      }
      last_error = detail;
      continue;
    }
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::Transport, "POST " + url_ + "/v1/logprobs: invalid JSON response: " + e.what());
    }
    if (!parsed.is_array() || parsed.size() != sentences.size()) {
      throw Error(ErrorKind::Transport, "POST " + url_ + "/v1/logprobs: expected an array of " +
                                            std::to_string(sentences.size()) + " records");
    }
    std::vector<SentenceScore> out;
    out.reserve(sentences.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      auto s = score_from_json(parsed[i]);
      if (s.text != sentences[i]) {
        throw Error(ErrorKind::Transport, "POST " + url_ + "/v1/logprobs: record " + std::to_string(i) +
                                              " text does not match the request");
      }
      out.push_back(std::move(s));
    }
    return out;
  }
  throw Error(ErrorKind::Transport, "POST " + url_ + "/v1/logprobs failed after " +
                                        std::to_string(attempts) + " attempts (" +
                                        std::to_string(options_.retries) + " retries): " + last_error);
}

SentenceScore HttpProvider::score(const std::string& sentence) {
  return post(std::span<const std::string>(&sentence, 1)).front();
}

std::vector<SentenceScore> HttpProvider::score_batch(std::span<const std::string> sentences) {
  std::vector<SentenceScore> out(sentences.size());
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  for (std::size_t i = 0; i < sentences.size(); i += options_.batch_size) {
    chunks.emplace_back(i, std::min(sentences.size(), i + options_.batch_size));
  }
  for (std::size_t wave = 0; wave < chunks.size(); wave += options_.max_in_flight) {
    std::vector<std::future<std::vector<SentenceScore>>> pending;
    const std::size_t wave_end = std::min(chunks.size(), wave + options_.max_in_flight);
    for (std::size_t c = wave; c < wave_end; ++c) {
      auto [b, e] = chunks[c];
      pending.push_back(std::async(std::launch::async, [this, sentences, b, e] {
        return post(sentences.subspan(b, e - b));
      }));
    }
    for (std::size_t c = wave; c < wave_end; ++c) {
      auto results = pending[c - wave].get();
      std::move(results.begin(), results.end(),
                out.begin() + static_cast<std::ptrdiff_t>(chunks[c].first));
    }
  }
  return out;
}

CachingProvider::CachingProvider(std::unique_ptr<LmProvider> inner) : inner_(std::move(inner)) {}

SentenceScore CachingProvider::score(const std::string& sentence) {
  const auto id = text::sentence_id(inner_->model_id(), sentence);
  {
    std::shared_lock lock(mutex_);
    if (auto it = cache_.find(id); it != cache_.end()) return it->second;
  }
  auto result = inner_->score(sentence);
  ++inner_calls_;
  std::unique_lock lock(mutex_);
  return cache_.try_emplace(id, std::move(result)).first->second;
}

std::vector<SentenceScore> CachingProvider::score_batch(std::span<const std::string> sentences) {
  const auto model = inner_->model_id();
  std::vector<std::string> misses;
  {
    std::shared_lock lock(mutex_);
    std::unordered_map<std::string, bool> queued;
    for (const auto& s : sentences) {
      const auto id = text::sentence_id(model, s);
      if (cache_.count(id) == 0 && !queued[id]) {
        queued[id] = true;
        misses.push_back(s);
      }
    }
  }
  if (!misses.empty()) {
    auto fetched = inner_->score_batch(misses);
    inner_calls_ += misses.size();
    std::unique_lock lock(mutex_);
    for (std::size_t i = 0; i < misses.size(); ++i) {
      cache_.try_emplace(text::sentence_id(model, misses[i]), std::move(fetched[i]));
    }
  }
  std::vector<SentenceScore> out;
  out.reserve(sentences.size());
  std::shared_lock lock(mutex_);
  for (const auto& s : sentences) out.push_back(cache_.at(text::sentence_id(model, s)));
  return out;
}

std::size_t CachingProvider::cache_size() const {
  std::shared_lock lock(mutex_);
  return cache_.size();
}

}  // namespace clozebias
