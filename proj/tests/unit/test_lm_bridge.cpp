#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "clozebias/error.hpp"
#include "clozebias/lm_bridge.hpp"
#include "clozebias/text.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace clozebias;
using nlohmann::json;

namespace {

SentenceScore make_score(std::vector<std::string> tokens, std::vector<std::optional<double>> logprobs) {
  SentenceScore s;
  s.model_id = "m";
  std::size_t pos = 0;
  for (const auto& t : tokens) {
    s.text += t;
    const auto len = text::length(t);
    s.token_offsets.push_back({pos, pos + len});
    pos += len;
  }
  s.sentence_id = text::sentence_id(s.model_id, s.text);
  s.tokens = std::move(tokens);
  s.logprobs = std::move(logprobs);
  return s;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Format;
}

class CountingProvider : public LmProvider {
 public:
  std::string model_id() const override { return "mock"; }
  std::string describe() const override { return "counting"; }
  SentenceScore score(const std::string& sentence) override {
    ++calls;
    return inner.score(sentence);
  }
  MockProvider inner;
  std::atomic<int> calls{0};
};

// In-process /v1/logprobs server answering with the mock LM.
class TestServer {
 public:
  explicit TestServer(int fail_first = 0, int status = 503) : fail_first_(fail_first), status_(status) {
    server_.Post("/api/v1/logprobs", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      if (failures_.fetch_add(1) < fail_first_) {
        res.status = status_;
        res.set_content(R"({"error":{"code":"busy","message":"try later"}})", "application/json");
        return;
      }
      json body;
      try {
        body = json::parse(req.body);
      } catch (...) {
        res.status = 400;
        res.set_content(R"({"error":{"code":"bad_request","message":"malformed body"}})", "application/json");
        return;
      }
      MockProvider mock(0, body["model_id"].get<std::string>());
      json out = json::array();
      std::size_t n = 0;
      for (const auto& t : body["texts"]) {
        out.push_back(to_json(mock.score(t.get<std::string>())));
        ++n;
      }
      max_batch = std::max<std::size_t>(max_batch, n);
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/api"; }

  std::atomic<int> requests{0};
  std::atomic<std::size_t> max_batch{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  int fail_first_;
  int status_;
  std::atomic<int> failures_{0};
};

}  // namespace

TEST_CASE("pronoun_prob examples") {
  const auto one = make_score({"a", " b"}, {std::nullopt, std::log(0.5)});
  CHECK(pronoun_prob(one, {1, 2}) == doctest::Approx(0.5));
  const auto two = make_score({"a", " b", "c"}, {std::nullopt, std::log(0.5), std::log(0.2)});
  CHECK(pronoun_prob(two, {1, 3}) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(pronoun_prob(two, {1, 3}, PronounProb::PerToken) == doctest::Approx(std::sqrt(0.1)).epsilon(1e-12));
  CHECK(pronoun_prob(one, {1, 2}, PronounProb::PerToken) == pronoun_prob(one, {1, 2}));
  CHECK(parse_pronoun_prob("per-token") == PronounProb::PerToken);
  CHECK(kind_of([] { (void)parse_pronoun_prob("mean"); }) == ErrorKind::Validation);
  CHECK(kind_of([&] { (void)pronoun_prob(two, {0, 2}); }) == ErrorKind::InvalidSpan);
  CHECK(kind_of([&] { (void)pronoun_prob(two, {2, 2}); }) == ErrorKind::InvalidSpan);
  CHECK(kind_of([&] { (void)pronoun_prob(two, {2, 4}); }) == ErrorKind::InvalidSpan);
  const auto missing = make_score({"a", " b", "c"}, {std::nullopt, std::nullopt, std::log(0.2)});
  CHECK(kind_of([&] { (void)pronoun_prob(missing, {1, 3}); }) == ErrorKind::InvalidSpan);
}

TEST_CASE("pronoun_prob is strictly monotone in span logprobs") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lp(-8.0, -0.01);
  for (int i = 0; i < 200; ++i) {
    const double a = lp(rng), b = lp(rng);
    const auto base = make_score({"x", " y", " z"}, {std::nullopt, a, b});
    const auto raised = make_score({"x", " y", " z"}, {std::nullopt, a, b * 0.5});
    CHECK(pronoun_prob(raised, {1, 3}) > pronoun_prob(base, {1, 3}));
  }
}

TEST_CASE("sentence_mean_prob examples") {
  const auto one = make_score({"a", " b"}, {std::nullopt, std::log(0.5)});
  CHECK(sentence_mean_prob(one, SentenceAggregation::MeanProb) == doctest::Approx(0.5));
  CHECK(sentence_mean_prob(one, SentenceAggregation::GeoMean) == doctest::Approx(0.5));
  const auto two = make_score({"a", " b", " c"}, {std::nullopt, std::log(0.5), std::log(0.2)});
  CHECK(sentence_mean_prob(two, SentenceAggregation::MeanProb) == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(sentence_mean_prob(two, SentenceAggregation::GeoMean) == doctest::Approx(0.31623).epsilon(1e-5));
  const auto none = make_score({"a"}, {std::nullopt});
  CHECK(kind_of([&] { (void)sentence_mean_prob(none, SentenceAggregation::MeanProb); }) == ErrorKind::Degenerate);
}

TEST_CASE("sentence_mean_prob bounds on random scores") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lp(-12.0, 0.0);
  for (int i = 0; i < 300; ++i) {
    std::vector<std::string> tokens = {"t"};
    std::vector<std::optional<double>> lps = {std::nullopt};
    double lo = 1.0, hi = 0.0;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int k = 0; k < n; ++k) {
      tokens.push_back(" t");
      const double v = lp(rng);
      lps.emplace_back(v);
      lo = std::min(lo, std::exp(v));
      hi = std::max(hi, std::exp(v));
    }
    const auto s = make_score(tokens, lps);
    const double geo = sentence_mean_prob(s, SentenceAggregation::GeoMean);
    const double mean = sentence_mean_prob(s, SentenceAggregation::MeanProb);
    CHECK(geo <= 1.0);
    CHECK(geo >= lo * (1 - 1e-12));
    CHECK(mean >= lo * (1 - 1e-12));
    CHECK(mean <= hi * (1 + 1e-12));
    CHECK(geo <= mean * (1 + 1e-12));
  }
}

TEST_CASE("locate_span maps characters to whole tokens") {
  const auto s = make_score({"The", " chef", " thanked", " him", "."},
                            {std::nullopt, -1.0, -1.0, -1.0, -1.0});
  const auto span = locate_span(s, 17, 20);
  CHECK(span.token_start == 3);
  CHECK(span.token_end == 4);
  CHECK(kind_of([&] { (void)locate_span(s, 18, 20); }) == ErrorKind::InvalidSpan);
  CHECK(kind_of([&] { (void)locate_span(s, 17, 19); }) == ErrorKind::InvalidSpan);
  CHECK(kind_of([&] { (void)locate_span(s, 17, 40); }) == ErrorKind::InvalidSpan);
}

TEST_CASE("mock tokenizer") {
  auto t = mock_tokenize("The chef's knife, by him.  ");
  CHECK(t.tokens == std::vector<std::string>{"The", " chef's", " knife", ",", " by", " him", ".  "});
  CHECK(t.offsets.front().start == 0);
  CHECK(t.offsets.back().end == 27);
  auto ja = mock_tokenize("シェフは彼に");
  CHECK(ja.tokens.size() == 6);
  CHECK(ja.tokens[4] == "彼");
  CHECK(ja.offsets[4].start == 4);
  CHECK(ja.offsets[4].end == 5);
}

TEST_CASE("mock provider is deterministic and valid") {
  MockProvider a(3);
  MockProvider b(3);
  MockProvider c(4);
  const auto s = a.score("The chef mentioned that the recipe was crafted by her.");
  CHECK(s == b.score(s.text));
  CHECK_FALSE(s.logprobs == c.score(s.text).logprobs);
  CHECK_FALSE(s.logprobs[0].has_value());
  for (std::size_t i = 1; i < s.logprobs.size(); ++i) {
    CHECK(*s.logprobs[i] <= -1.0);
    CHECK(*s.logprobs[i] > -2.0);
    std::string prefix;
    for (std::size_t k = 0; k < i; ++k) prefix += s.tokens[k];
    CHECK(*s.logprobs[i] == mock_logprob(3, prefix, s.tokens[i]));
  }
  CHECK(validate_record(to_json(s)).empty());
  CHECK(s.sentence_id == text::sentence_id("mock", s.text));
}

TEST_CASE("mock provider echoes fixed tables") {
  MockProvider m;
  m.set_fixed("a b", {{"a", " b"}, {std::nullopt, -0.5}});
  const auto s = m.score("a b");
  CHECK(s.tokens == std::vector<std::string>{"a", " b"});
  CHECK_FALSE(s.logprobs[0].has_value());
  CHECK(*s.logprobs[1] == -0.5);
  CHECK(kind_of([&] { m.set_fixed("a b", {{"a", "b"}, {std::nullopt, -0.5}}); }) == ErrorKind::Validation);
  CHECK(kind_of([&] { m.set_fixed("a b", {{"a", " b"}, {std::nullopt}}); }) == ErrorKind::Validation);
}

TEST_CASE("record validation") {
  const auto good = to_json(make_score({"a", " b"}, {std::nullopt, -0.5}));
  CHECK(validate_record(good).empty());

  auto bad = good;
  bad["logprobs"][1] = 0.5;
  CHECK_FALSE(validate_record(bad).empty());
  bad = good;
  bad["tokens"].push_back("c");
  CHECK_FALSE(validate_record(bad).empty());
  bad = good;
  bad["token_offsets"][1] = json::array({1, 2});
  CHECK_FALSE(validate_record(bad).empty());
  bad = good;
  bad["token_offsets"][1] = json::array({1, 4});
  CHECK_FALSE(validate_record(bad).empty());
  bad = good;
  bad.erase("model_id");
  CHECK_FALSE(validate_record(bad).empty());
  bad = good;
  bad["sentence_id"] = "0000000000000000";
  CHECK_FALSE(validate_record(bad).empty());
  CHECK_FALSE(validate_record(json::array()).empty());
}

TEST_CASE("offsets must cover the text exactly") {
  auto rec = to_json(make_score({"ab", " c"}, {std::nullopt, -0.1}));
  rec["text"] = "ab c ";
  rec["sentence_id"] = text::sentence_id("m", "ab c ");
  CHECK_FALSE(validate_record(rec).empty());
}

TEST_CASE("score_from_json round trip") {
  const auto s = make_score({"彼", "は", "。"}, {std::nullopt, -0.25, -3.0});
  CHECK(score_from_json(to_json(s)) == s);
  CHECK(kind_of([] { (void)score_from_json(json::object()); }) == ErrorKind::Validation);
}

TEST_CASE("logprob file fixtures validate") {
  CHECK(validate_logprob_file(text::read_file(testing::fixture("logprobs_valid.jsonl"))).empty());
  const auto problems = validate_logprob_file(text::read_file(testing::fixture("logprobs_invalid.jsonl")));
  REQUIRE(problems.size() >= 3);
  CHECK(problems[0].rfind("line ", 0) == 0);
}

TEST_CASE("HTTP response fixtures validate") {
  CHECK(validate_http_response(text::read_file(testing::fixture("http_response_valid.json"))).empty());
  CHECK(validate_http_response(text::read_file(testing::fixture("http_response_error.json"))).empty());
  CHECK_FALSE(validate_http_response(R"({"error":{"message":"no code"}})").empty());
  CHECK_FALSE(validate_http_response("{").empty());
  CHECK_FALSE(validate_http_response(R"([{"text":"x"}])").empty());
}

TEST_CASE("file provider lookups") {
  FileProvider p(testing::fixture("logprobs_valid.jsonl"));
  CHECK(p.model_id() == "gpt2");
  const auto s = p.score("The chef mentioned that the recipe was crafted by him.");
  CHECK(s.model_id == "gpt2");
  CHECK(s.tokens.size() == s.logprobs.size());
  try {
    (void)p.score("A sentence nobody scored.");
    FAIL("expected a missing-score error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingScore);
    CHECK(std::string(e.what()).find("A sentence nobody scored.") != std::string::npos);
  }
}

TEST_CASE("file provider with several models needs a selection") {
  const auto a = to_json(make_score({"x", " y"}, {std::nullopt, -0.1})).dump();
  auto other = make_score({"x", " y"}, {std::nullopt, -0.2});
  other.model_id = "n";
  other.sentence_id = text::sentence_id("n", other.text);
  const std::string content = a + "\n" + to_json(other).dump() + "\n";
  CHECK(kind_of([&] { (void)FileProvider::from_string(content); }) == ErrorKind::Validation);
  auto chosen = FileProvider::from_string(content, std::string("n"));
  CHECK(*chosen.score("x y").logprobs[1] == -0.2);
  CHECK(kind_of([&] { (void)FileProvider::from_string(content, std::string("zzz")); }) == ErrorKind::Validation);
}

TEST_CASE("caching provider calls through once per sentence") {
  auto inner = std::make_unique<CountingProvider>();
  auto* counter = inner.get();
  CachingProvider cache(std::move(inner));
  const auto first = cache.score("a b c");
  const auto second = cache.score("a b c");
  CHECK(first == second);
  CHECK(counter->calls == 1);
  CHECK(cache.inner_calls() == 1);

  std::vector<std::string> batch = {"a b c", "d e", "d e", "f g"};
  const auto scored = cache.score_batch(batch);
  CHECK(scored.size() == 4);
  CHECK(scored[1] == scored[2]);
  CHECK(counter->calls == 3);
  CHECK(cache.cache_size() == 3);

  MockProvider plain;
  for (const auto& s : batch) CHECK(cache.score(s) == plain.score(s));
}

TEST_CASE("caching provider under concurrent readers") {
  CachingProvider cache(std::make_unique<MockProvider>());
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      MockProvider plain;
      for (int i = 0; i < 200; ++i) {
        const std::string s = "sentence " + std::to_string((i * 7 + t) % 25);
        if (!(cache.score(s) == plain.score(s))) ++mismatches;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(mismatches == 0);
  CHECK(cache.cache_size() == 25);
}

TEST_CASE("http provider against an in-process server") {
  TestServer server;
  HttpOptions opts;
  opts.batch_size = 3;
  opts.max_in_flight = 2;
  HttpProvider http(server.url(), "mock", opts);
  MockProvider mock;
  const auto one = http.score("The chef thanked her.");
  CHECK(one == mock.score("The chef thanked her."));

  std::vector<std::string> batch;
  for (int i = 0; i < 10; ++i) batch.push_back("sentence number " + std::to_string(i) + ".");
  const auto all = http.score_batch(batch);
  REQUIRE(all.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(all[i] == mock.score(batch[i]));
  CHECK(server.max_batch <= 3);
  CHECK(server.requests == 1 + 4);
}

TEST_CASE("http provider retries server errors") {
  TestServer server(2, 503);
  HttpOptions opts;
  opts.retries = 2;
  HttpProvider http(server.url(), "mock", opts);
  CHECK(http.score("x y").tokens.size() == 2);
  CHECK(server.requests == 3);
}

TEST_CASE("http provider reports exhausted retries and client errors") {
  {
    TestServer server(10, 503);
    HttpOptions opts;
    opts.retries = 1;
    HttpProvider http(server.url(), "mock", opts);
    try {
      (void)http.score("x y");
      FAIL("expected transport error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Transport);
      const std::string msg = e.what();
      CHECK(msg.find("503") != std::string::npos);
      CHECK(msg.find("try later") != std::string::npos);
      CHECK(msg.find("2 of 2") != std::string::npos);
    }
  }
  {
    TestServer server(10, 400);
    HttpOptions opts;
    opts.retries = 3;
    HttpProvider http(server.url(), "mock", opts);
    CHECK(kind_of([&] { (void)http.score("x y"); }) == ErrorKind::Transport);
    CHECK(server.requests == 1);
  }
}

TEST_CASE("http provider with the server down names the URL") {
  HttpOptions opts;
  opts.retries = 1;
  opts.connect_timeout_ms = 500;
  HttpProvider http("http://127.0.0.1:9", "mock", opts);
  try {
    (void)http.score("x y");
    FAIL("expected transport error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Transport);
    const std::string msg = e.what();
    CHECK(msg.find("http://127.0.0.1:9") != std::string::npos);
    CHECK(msg.find("2 attempts") != std::string::npos);
  }
  CHECK(kind_of([] { HttpProvider bad("ftp://x", "m"); }) == ErrorKind::Validation);
}
