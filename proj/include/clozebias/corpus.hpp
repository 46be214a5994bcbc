#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clozebias {

enum class Family { GenderLex, GenderLexNeutral, Winograd, CrowsPairs, JpPairs };
enum class ContextKind { Occupation, Noun, Verb, Concept, Group };
enum class NeutralEntity { Someone, Person };

const char* to_string(Family family);
const char* to_string(ContextKind kind);
const char* to_string(NeutralEntity entity);
Family parse_family(std::string_view name);
ContextKind parse_context_kind(std::string_view name);
NeutralEntity parse_neutral_entity(std::string_view name);

// Context kinds a family's records carry.
std::vector<ContextKind> family_contexts(Family family);

inline constexpr std::string_view kPronounSlot = "{P}";
inline constexpr std::string_view kEntitySlot = "{E}";

// One dataset item. `template_text` holds exactly one {P}; an optional {E} is
// filled from `entity` when sentences are rendered.
struct TemplateInstance {
  std::string id;
  Family family = Family::GenderLex;
  std::string template_text;
  std::optional<std::string> entity;
  std::map<ContextKind, std::string> contexts;
  std::optional<std::string> human_label;

  // Template with {E} substituted and {P} left in place.
  std::string resolved_template() const;

  // {P} is the last word, ignoring trailing punctuation.
  bool pronoun_is_final() const;

  bool operator==(const TemplateInstance&) const = default;
};

struct LexiconEntry {
  std::string label;
  std::string pronoun;  // surface form placed in {P}
  std::vector<std::string> embedding_words;

  bool operator==(const LexiconEntry&) const = default;
};

struct GroupSpec {
  std::string label;
  std::vector<std::string> words;  // combined into one vector for similarity
};

struct PronounLexicon {
  std::string name;
  std::vector<LexiconEntry> genders;
  std::optional<LexiconEntry> neutral;
  std::vector<GroupSpec> groups;
  std::vector<std::pair<std::string, std::string>> group_pairs;
  std::optional<bool> case_fold;

  const LexiconEntry& gender(std::string_view label) const;
  const GroupSpec& group(std::string_view label) const;

  // him/her; the default when no lexicon file is given.
  static PronounLexicon english_binary();
};

// Parses and validates a lexicon JSON document. Throws Error(Validation).
PronounLexicon parse_lexicon(std::string_view json_text, const std::string& source = "<memory>");
PronounLexicon load_lexicon(const std::string& path);

struct Variant {
  std::string label;
  std::string sentence;
  std::size_t char_begin = 0;  // code point range of the pronoun
  std::size_t char_end = 0;
};

// One concrete sentence per lexicon entry. A pronoun that opens the sentence
// is capitalized.
std::vector<Variant> expand_variants(const TemplateInstance& instance,
                                     std::span<const LexiconEntry> entries);
Variant expand_variant(const TemplateInstance& instance, const LexiconEntry& entry);

// Replaces the occupation (and its article) with `someone` or `a/the person`.
// Throws Error(Precondition) when the instance has no occupation context.
TemplateInstance neutralize(const TemplateInstance& instance, NeutralEntity entity);

// Parsers read JSON-lines and report every invalid line in one Error(Validation).
std::vector<TemplateInstance> parse_genderlex(std::string_view content,
                                              const std::string& source = "<memory>",
                                              Family family = Family::GenderLex);
std::vector<TemplateInstance> parse_winograd(std::string_view content,
                                             const std::string& source = "<memory>");
std::vector<TemplateInstance> parse_concept_pairs(std::string_view content,
                                                  const std::string& source = "<memory>",
                                                  Family family = Family::CrowsPairs);

std::vector<TemplateInstance> parse_corpus(std::string_view content, Family family,
                                           const std::string& source = "<memory>");
std::vector<TemplateInstance> load_corpus(const std::string& path, Family family);

// JSON-lines in the per-family schema accepted by the parsers above.
std::string serialize_instances(std::span<const TemplateInstance> instances);

}  // namespace clozebias
