#include <random>

#include "clozebias/corpus.hpp"
#include "clozebias/error.hpp"
#include "clozebias/text.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace clozebias;

namespace {

std::string error_of(const std::function<void()>& f, ErrorKind* kind = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (kind) *kind = e.kind();
    return e.what();
  }
  FAIL("no error thrown");
  return {};
}

const LexiconEntry kHim{"m", "him", {"him"}};
const LexiconEntry kHer{"w", "her", {"her"}};
const LexiconEntry kThem{"n", "them", {"them"}};

}  // namespace

TEST_CASE("genderlex record with three contexts") {
  const auto v = parse_genderlex(
      R"({"id":"1","template":"The chef mentioned that the recipe was crafted by {P}.","occupation":"chef","noun":"recipe","verb":"crafted"})");
  REQUIRE(v.size() == 1);
  CHECK(v[0].id == "1");
  CHECK(v[0].family == Family::GenderLex);
  CHECK(v[0].contexts.size() == 3);
  CHECK(v[0].contexts.at(ContextKind::Noun) == "recipe");
  CHECK(v[0].pronoun_is_final());
}

TEST_CASE("genderlex validation reports every bad line") {
  ErrorKind kind{};
  const auto msg = error_of([] { (void)load_corpus(testing::fixture("genderlex_invalid.jsonl"), Family::GenderLex); },
                            &kind);
  CHECK(kind == ErrorKind::Validation);
  CHECK(msg.find("line 1") != std::string::npos);
  CHECK(msg.find("line 2") != std::string::npos);
  CHECK(msg.find("soup") != std::string::npos);
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(msg.find("verb") != std::string::npos);
  CHECK(msg.find("line 4") != std::string::npos);
}

TEST_CASE("genderlex rejects a template without {P}") {
  ErrorKind kind{};
  (void)error_of([] { (void)parse_genderlex(R"({"id":"x","template":"No slot.","occupation":"No","noun":"slot","verb":"slot"})"); },
                 &kind);
  CHECK(kind == ErrorKind::Validation);
}

TEST_CASE("ids default to the line number and must be unique") {
  const auto v = parse_genderlex(
      "\n{\"template\":\"The chef thanked {P}.\",\"occupation\":\"chef\",\"noun\":\"chef\",\"verb\":\"thanked\"}\n");
  CHECK(v.at(0).id == "2");
  const std::string dup =
      R"({"id":"a","template":"The chef thanked {P}.","occupation":"chef","noun":"chef","verb":"thanked"})";
  CHECK(error_of([&] { (void)parse_genderlex(dup + "\n" + dup); }).find("duplicate") != std::string::npos);
}

TEST_CASE("neutralize with someone") {
  const auto inst = parse_genderlex(
      R"({"id":"1","template":"The chef mentioned that the recipe was crafted by {P}.","occupation":"chef","noun":"recipe","verb":"crafted"})")[0];
  const auto n = neutralize(inst, NeutralEntity::Someone);
  CHECK(n.template_text == "Someone mentioned that the recipe was crafted by {P}.");
  CHECK(n.family == Family::GenderLexNeutral);
  CHECK(n.contexts.size() == 2);
  CHECK_FALSE(n.contexts.count(ContextKind::Occupation));
}

TEST_CASE("neutralize with person") {
  auto inst = testing::instance("1", "The chef mentioned that the recipe was crafted by {P}.",
                                {{ContextKind::Occupation, "chef"}, {ContextKind::Noun, "recipe"}});
  CHECK(neutralize(inst, NeutralEntity::Person).template_text ==
        "The person mentioned that the recipe was crafted by {P}.");
  inst.template_text = "She met an engineer who thanked {P}.";
  inst.contexts = {{ContextKind::Occupation, "engineer"}};
  CHECK(neutralize(inst, NeutralEntity::Person).template_text == "She met a person who thanked {P}.");
  CHECK(neutralize(inst, NeutralEntity::Someone).template_text == "She met someone who thanked {P}.");
  inst.template_text = "Chefs like {P}. The chef waved.";
  inst.contexts = {{ContextKind::Occupation, "chef"}};
  CHECK(neutralize(inst, NeutralEntity::Someone).template_text == "Chefs like {P}. Someone waved.");
}

TEST_CASE("neutralizing twice is a precondition error") {
  auto inst = testing::instance("1", "The chef thanked {P}.", {{ContextKind::Occupation, "chef"}});
  const auto once = neutralize(inst, NeutralEntity::Someone);
  ErrorKind kind{};
  (void)error_of([&] { (void)neutralize(once, NeutralEntity::Someone); }, &kind);
  CHECK(kind == ErrorKind::Precondition);
}

TEST_CASE("neutralize removes every occupation mention on the fixture corpus") {
  const auto corpus = load_corpus(testing::fixture("genderlex12.jsonl"), Family::GenderLex);
  for (auto entity : {NeutralEntity::Someone, NeutralEntity::Person}) {
    for (const auto& inst : corpus) {
      const auto occ = inst.contexts.at(ContextKind::Occupation);
      const auto n = neutralize(inst, entity);
      for (const auto& v : expand_variants(n, std::vector<LexiconEntry>{kHim, kHer})) {
        CHECK(v.sentence.find(occ) == std::string::npos);
      }
    }
  }
}

TEST_CASE("variant expansion") {
  auto inst = testing::instance("1", "The chef mentioned that the recipe was crafted by {P}.",
                                {{ContextKind::Occupation, "chef"}});
  const auto v = expand_variants(inst, std::vector<LexiconEntry>{kHim, kHer});
  REQUIRE(v.size() == 2);
  CHECK(v[0].sentence == "The chef mentioned that the recipe was crafted by him.");
  CHECK(v[1].sentence == "The chef mentioned that the recipe was crafted by her.");
  CHECK(v[0].char_begin == 50);
  CHECK(v[0].char_end == 53);
  CHECK(expand_variant(inst, kThem).sentence == "The chef mentioned that the recipe was crafted by them.");
  inst.template_text = "{P} cooked.";
  CHECK(expand_variant(inst, kHer).sentence == "Her cooked.");
}

TEST_CASE("Japanese variants carry code point ranges") {
  auto inst = testing::instance("jp", "シェフは{P}に感謝した。", {{ContextKind::Concept, "料理"}});
  inst.family = Family::JpPairs;
  const auto lex = load_lexicon(CLOZEBIAS_SOURCE_DIR "/data/lexicons/ja.json");
  const auto v = expand_variants(inst, lex.genders);
  REQUIRE(v.size() == 2);
  CHECK(v[0].sentence == "シェフは彼に感謝した。");
  CHECK(v[0].char_begin == 4);
  CHECK(v[0].char_end == 5);
  CHECK(v[1].sentence == "シェフは彼女に感謝した。");
  CHECK(v[1].char_begin == 4);
  CHECK(v[1].char_end == 6);
  CHECK(text::slice(v[1].sentence, v[1].char_begin, v[1].char_end) == "彼女");
  CHECK(lex.case_fold == false);
}

TEST_CASE("variant pair property: sentences differ only inside the pronoun range") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> words = {"the", "chef", "said", "to", "彼", "。", "recipe", "a"};
  for (int i = 0; i < 200; ++i) {
    std::string before, after;
    for (int k = 0; k < static_cast<int>(rng() % 6); ++k) before += words[rng() % words.size()] + " ";
    for (int k = 0; k < static_cast<int>(rng() % 6); ++k) after += " " + words[rng() % words.size()];
    auto inst = testing::instance("p", "x " + before + "{P}" + after, {});
    const auto v = expand_variants(inst, std::vector<LexiconEntry>{kHim, kHer});
    const auto a = text::decode_utf8(v[0].sentence);
    const auto b = text::decode_utf8(v[1].sentence);
    CHECK(v[0].char_begin == v[1].char_begin);
    CHECK(std::equal(a.begin(), a.begin() + v[0].char_begin, b.begin()));
    CHECK(std::equal(a.begin() + v[0].char_end, a.end(), b.begin() + v[1].char_end, b.end()));
  }
}

TEST_CASE("winograd records") {
  const auto v = load_corpus(testing::fixture("winograd.jsonl"), Family::Winograd);
  REQUIRE(v.size() == 3);
  CHECK(v[0].contexts.at(ContextKind::Verb) == "slapped");
  CHECK_FALSE(v[0].pronoun_is_final());
  CHECK_FALSE(v[1].pronoun_is_final());
  CHECK(v[2].pronoun_is_final());
  CHECK(v[2].human_label == "w");
  ErrorKind kind{};
  (void)error_of([] { (void)parse_winograd(R"({"template":"The person slapped {P}.","verb":"slapped"})"); }, &kind);
  CHECK(kind == ErrorKind::Validation);
}

TEST_CASE("concept pair records") {
  const auto v = parse_concept_pairs(R"({"template":"{P} are bad at learning.","concept":"ineptitude"})");
  REQUIRE(v.size() == 1);
  CHECK(v[0].contexts.at(ContextKind::Concept) == "ineptitude");
  const auto ja = load_corpus(testing::fixture("jp_pairs.jsonl"), Family::JpPairs);
  CHECK(ja.size() == 2);
  CHECK(ja[0].contexts.at(ContextKind::Concept) == "主婦");
  CHECK(ja[0].pronoun_is_final() == false);
  CHECK(ja[1].pronoun_is_final() == false);
  ErrorKind kind{};
  (void)error_of([] { (void)parse_concept_pairs(R"({"template":"{P} are late."})"); }, &kind);
  CHECK(kind == ErrorKind::Validation);
  (void)error_of([] { (void)parse_concept_pairs(R"({"template":"{P} are late.","concept":""})"); }, &kind);
  CHECK(kind == ErrorKind::Validation);
}

TEST_CASE("entity placeholder") {
  const auto v = load_corpus(testing::fixture("entity.jsonl"), Family::GenderLex);
  REQUIRE(v.size() == 1);
  CHECK(v[0].resolved_template() == "The chef mentioned that the recipe was crafted by {P}.");
  const auto n = neutralize(v[0], NeutralEntity::Someone);
  CHECK(n.resolved_template() == "Someone mentioned that the recipe was crafted by {P}.");
  ErrorKind kind{};
  (void)error_of([] { (void)parse_genderlex(R"({"template":"{E} thanked {P}.","occupation":"x","noun":"x","verb":"thanked"})"); },
                 &kind);
  CHECK(kind == ErrorKind::Validation);
}

TEST_CASE("family mismatch and forbidden fields") {
  ErrorKind kind{};
  (void)error_of([] {
    (void)parse_genderlex(
        R"({"family":"winograd","template":"The chef thanked {P}.","occupation":"chef","noun":"chef","verb":"thanked"})");
  }, &kind);
  CHECK(kind == ErrorKind::Validation);
  (void)error_of([] {
    (void)parse_genderlex(
        R"({"template":"Someone thanked {P}.","occupation":"Someone","noun":"Someone","verb":"thanked"})", "<m>",
        Family::GenderLexNeutral);
  }, &kind);
  CHECK(kind == ErrorKind::Validation);
}

TEST_CASE("round trip is the identity for every family") {
  const std::vector<std::pair<std::string, Family>> files = {
      {"genderlex12.jsonl", Family::GenderLex},
      {"genderlex_neutral.jsonl", Family::GenderLexNeutral},
      {"winograd.jsonl", Family::Winograd},
      {"crows_pairs.jsonl", Family::CrowsPairs},
      {"jp_pairs.jsonl", Family::JpPairs},
      {"entity.jsonl", Family::GenderLex}};
  for (const auto& [file, family] : files) {
    CAPTURE(file);
    const auto once = load_corpus(testing::fixture(file), family);
    const auto text1 = serialize_instances(once);
    const auto twice = parse_corpus(text1, family);
    CHECK(once == twice);
    CHECK(serialize_instances(twice) == text1);
  }
}

TEST_CASE("lexicon parsing") {
  const auto lex = load_lexicon(CLOZEBIAS_SOURCE_DIR "/data/lexicons/en_with_them.json");
  CHECK(lex.genders.size() == 2);
  REQUIRE(lex.neutral.has_value());
  CHECK(lex.neutral->pronoun == "them");
  CHECK(lex.group("B").words == std::vector<std::string>{"black", "african"});
  CHECK(lex.group_pairs.size() == 3);

  const auto defaults = parse_lexicon(
      R"({"genders":[{"label":"m","pronoun":"him","embedding_words":["him"]},{"label":"w","pronoun":"her","embedding_words":["her"]}],
          "groups":[{"label":"A","words":["a"]},{"label":"B","words":["b"]},{"label":"C","words":["c"]}]})");
  CHECK(defaults.group_pairs.size() == 3);

  for (const char* bad : {
           R"({"genders":[{"label":"m","pronoun":"him","embedding_words":["him"]}]})",
           R"({"genders":[{"label":"m","pronoun":"him","embedding_words":["him"]},{"label":"w","pronoun":"him","embedding_words":["her"]}]})",
           R"({"genders":[{"label":"m","pronoun":"him","embedding_words":[]},{"label":"w","pronoun":"her","embedding_words":["her"]}]})",
           R"({"genders":[{"label":"m","pronoun":"him","embedding_words":["him"]},{"label":"m","pronoun":"her","embedding_words":["her"]}]})",
           R"({"genders":[{"label":"m","pronoun":"him","embedding_words":["him"]},{"label":"w","pronoun":"her","embedding_words":["her"]}],"group_pairs":[["X","Y"]]})",
           "[1,2]", "{"}) {
    CAPTURE(bad);
    ErrorKind kind{};
    (void)error_of([&] { (void)parse_lexicon(bad); }, &kind);
    CHECK((kind == ErrorKind::Validation || kind == ErrorKind::Format));
  }
}
