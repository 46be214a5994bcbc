#include "clozebias/corpus.hpp"

#include <set>

#include "clozebias/error.hpp"
#include "clozebias/text.hpp"
#include "json.hpp"

namespace clozebias {

using nlohmann::json;

const char* to_string(Family family) {
  switch (family) {
    case Family::GenderLex: return "genderlex";
    case Family::GenderLexNeutral: return "genderlex-neutral";
    case Family::Winograd: return "winograd";
    case Family::CrowsPairs: return "crows-pairs";
    case Family::JpPairs: return "jp-pairs";
  }
  return "?";
}

const char* to_string(ContextKind kind) {
  switch (kind) {
    case ContextKind::Occupation: return "occupation";
    case ContextKind::Noun: return "noun";
    case ContextKind::Verb: return "verb";
    case ContextKind::Concept: return "concept";
    case ContextKind::Group: return "group";
  }
  return "?";
}

const char* to_string(NeutralEntity entity) {
  return entity == NeutralEntity::Someone ? "someone" : "person";
}

Family parse_family(std::string_view name) {
  for (auto f : {Family::GenderLex, Family::GenderLexNeutral, Family::Winograd, Family::CrowsPairs,
                 Family::JpPairs}) {
    if (name == to_string(f)) return f;
  }
  throw Error(ErrorKind::Validation, "unknown corpus family '" + std::string(name) + "'");
}

ContextKind parse_context_kind(std::string_view name) {
  for (auto k : {ContextKind::Occupation, ContextKind::Noun, ContextKind::Verb, ContextKind::Concept,
                 ContextKind::Group}) {
    if (name == to_string(k)) return k;
  }
  throw Error(ErrorKind::Validation, "unknown context kind '" + std::string(name) + "'");
}

NeutralEntity parse_neutral_entity(std::string_view name) {
  if (name == "someone") return NeutralEntity::Someone;
  if (name == "person") return NeutralEntity::Person;
  throw Error(ErrorKind::Validation, "unknown neutral entity '" + std::string(name) +
                                         "' (expected someone or person)");
}

std::vector<ContextKind> family_contexts(Family family) {
  switch (family) {
    case Family::GenderLex: return {ContextKind::Occupation, ContextKind::Noun, ContextKind::Verb};
    case Family::GenderLexNeutral: return {ContextKind::Noun, ContextKind::Verb};
    case Family::Winograd: return {ContextKind::Occupation, ContextKind::Verb};
    case Family::CrowsPairs:
    case Family::JpPairs: return {ContextKind::Concept};
  }
  return {};
}

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string replace_first(std::string s, std::string_view needle, std::string_view with) {
  auto pos = s.find(needle);
  if (pos != std::string::npos) s.replace(pos, needle.size(), with);
  return s;
}

std::string capitalize_ascii(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

bool only_space_before(std::string_view s, std::size_t pos) {
  for (std::size_t i = 0; i < pos; ++i) {
    if (s[i] != ' ' && s[i] != '\t') return false;
  }
  return true;
}

}  // namespace

std::string TemplateInstance::resolved_template() const {
  if (!entity) return template_text;
  return replace_first(template_text, kEntitySlot, *entity);
}

bool TemplateInstance::pronoun_is_final() const {
  const std::string resolved = resolved_template();
  const auto pos = resolved.find(kPronounSlot);
  if (pos == std::string::npos) return false;
  for (char32_t cp : text::decode_utf8(std::string_view(resolved).substr(pos + kPronounSlot.size()))) {
    if (!text::is_trailing_punct(cp)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Lexicons

const LexiconEntry& PronounLexicon::gender(std::string_view label) const {
  for (const auto& g : genders) {
    if (g.label == label) return g;
  }
  if (neutral && neutral->label == label) return *neutral;
  throw Error(ErrorKind::Validation, "lexicon has no gender labelled '" + std::string(label) + "'");
}

const GroupSpec& PronounLexicon::group(std::string_view label) const {
  for (const auto& g : groups) {
    if (g.label == label) return g;
  }
  throw Error(ErrorKind::Validation, "lexicon has no group labelled '" + std::string(label) + "'");
}

PronounLexicon PronounLexicon::english_binary() {
  PronounLexicon lex;
  lex.name = "en-binary";
  lex.genders = {{"m", "him", {"him"}}, {"w", "her", {"her"}}};
  return lex;
}

namespace {

LexiconEntry parse_entry(const json& j, const std::string& where, std::vector<std::string>& problems) {
  LexiconEntry e;
  if (!j.is_object()) {
    problems.push_back(where + ": must be an object");
    return e;
  }
  if (!j.contains("label") || !j["label"].is_string() || j["label"].get<std::string>().empty()) {
    problems.push_back(where + ": missing non-empty string 'label'");
  } else {
    e.label = j["label"].get<std::string>();
  }
  if (!j.contains("pronoun") || !j["pronoun"].is_string() || j["pronoun"].get<std::string>().empty()) {
    problems.push_back(where + ": missing non-empty string 'pronoun'");
  } else {
    e.pronoun = j["pronoun"].get<std::string>();
  }
  if (j.contains("embedding_words") && j["embedding_words"].is_array()) {
    for (const auto& w : j["embedding_words"]) {
      if (w.is_string() && !w.get<std::string>().empty()) e.embedding_words.push_back(w.get<std::string>());
    }
  }
  if (e.embedding_words.empty()) {
    problems.push_back(where + ": needs at least one embedding query word in 'embedding_words'");
  }
  return e;
}

}  // namespace

PronounLexicon parse_lexicon(std::string_view json_text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Format, source + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::Validation, source + ": lexicon must be a JSON object");

  std::vector<std::string> problems;
  PronounLexicon lex;
  lex.name = doc.value("name", std::string("custom"));
  if (doc.contains("case_fold")) {
    if (!doc["case_fold"].is_boolean()) {
      problems.emplace_back("'case_fold' must be a boolean");
    } else {
      lex.case_fold = doc["case_fold"].get<bool>();
    }
  }
  if (!doc.contains("genders") || !doc["genders"].is_array() || doc["genders"].size() < 2) {
    problems.emplace_back("'genders' must list at least two entries");
  } else {
    for (std::size_t i = 0; i < doc["genders"].size(); ++i) {
      lex.genders.push_back(parse_entry(doc["genders"][i], "genders[" + std::to_string(i) + "]", problems));
    }
  }
  if (doc.contains("neutral") && !doc["neutral"].is_null()) {
    lex.neutral = parse_entry(doc["neutral"], "neutral", problems);
  }
  std::set<std::string> labels;
  std::set<std::string> forms;
  for (const auto& g : lex.genders) {
    if (!g.label.empty() && !labels.insert(g.label).second) {
      problems.push_back("duplicate gender label '" + g.label + "'");
    }
    if (!g.pronoun.empty() && !forms.insert(g.pronoun).second) {
      problems.push_back("gender pronoun forms must be distinct ('" + g.pronoun + "' repeats)");
    }
  }
  if (lex.neutral && labels.count(lex.neutral->label) != 0) {
    problems.push_back("neutral label '" + lex.neutral->label + "' collides with a gender label");
  }
  if (doc.contains("groups")) {
    if (!doc["groups"].is_array()) {
      problems.emplace_back("'groups' must be an array");
    } else {
      std::set<std::string> group_labels;
      for (std::size_t i = 0; i < doc["groups"].size(); ++i) {
        const auto& g = doc["groups"][i];
        GroupSpec spec;
        const std::string where = "groups[" + std::to_string(i) + "]";
        if (!g.is_object() || !g.contains("label") || !g["label"].is_string()) {
          problems.push_back(where + ": missing string 'label'");
          continue;
        }
        spec.label = g["label"].get<std::string>();
        if (g.contains("words") && g["words"].is_array()) {
          for (const auto& w : g["words"]) {
            if (w.is_string() && !w.get<std::string>().empty()) spec.words.push_back(w.get<std::string>());
          }
        }
        if (spec.words.empty()) problems.push_back(where + ": needs at least one word");
        if (!group_labels.insert(spec.label).second) {
          problems.push_back("duplicate group label '" + spec.label + "'");
        }
        lex.groups.push_back(std::move(spec));
      }
    }
  }
  if (doc.contains("group_pairs")) {
    for (const auto& p : doc["group_pairs"]) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) {
        problems.emplace_back("'group_pairs' entries must be [label, label]");
        continue;
      }
      lex.group_pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
  } else {
    for (std::size_t i = 0; i < lex.groups.size(); ++i) {
      for (std::size_t j = i + 1; j < lex.groups.size(); ++j) {
        lex.group_pairs.emplace_back(lex.groups[i].label, lex.groups[j].label);
      }
    }
  }
  for (const auto& [a, b] : lex.group_pairs) {
    bool has_a = false;
    bool has_b = false;
    for (const auto& g : lex.groups) {
      has_a = has_a || g.label == a;
      has_b = has_b || g.label == b;
    }
    if (!has_a || !has_b || a == b) problems.push_back("group pair [" + a + ", " + b + "] is invalid");
  }
  if (!problems.empty()) {
    std::string msg = source + ": invalid lexicon";
    for (const auto& p : problems) msg += "; " + p;
    throw Error(ErrorKind::Validation, msg);
  }
  return lex;
}

PronounLexicon load_lexicon(const std::string& path) { return parse_lexicon(text::read_file(path), path); }

// ---------------------------------------------------------------------------
// Variants

Variant expand_variant(const TemplateInstance& instance, const LexiconEntry& entry) {
  const std::string resolved = instance.resolved_template();
  const auto pos = resolved.find(kPronounSlot);
  if (pos == std::string::npos) {
    throw Error(ErrorKind::Validation, "instance " + instance.id + ": template has no {P}");
  }
  std::string pronoun = only_space_before(resolved, pos) ? capitalize_ascii(entry.pronoun) : entry.pronoun;
  Variant v;
  v.label = entry.label;
  v.char_begin = text::length(std::string_view(resolved).substr(0, pos));
  v.char_end = v.char_begin + text::length(pronoun);
  v.sentence = resolved.substr(0, pos) + pronoun + resolved.substr(pos + kPronounSlot.size());
  return v;
}

std::vector<Variant> expand_variants(const TemplateInstance& instance,
                                     std::span<const LexiconEntry> entries) {
  std::vector<Variant> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(expand_variant(instance, e));
  return out;
}

// ---------------------------------------------------------------------------
// Neutralization

namespace {

bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

std::string neutralize_text(std::string s, const std::string& occupation, NeutralEntity entity) {
  std::size_t search = 0;
  while (true) {
    const auto pos = s.find(occupation, search);
    if (pos == std::string::npos) break;
    std::size_t start = pos;
    std::string det;
    if (pos >= 2 && s[pos - 1] == ' ') {
      std::size_t w = pos - 1;
      while (w > 0 && is_ascii_alpha(s[w - 1])) --w;
      std::string word = s.substr(w, pos - 1 - w);
      const std::string lower = text::ascii_lower(word);
      if (lower == "the" || lower == "a" || lower == "an") {
        det = word;
        start = w;
      }
    }
    bool sentence_start = true;
    for (std::size_t i = start; i > 0; --i) {
      const char c = s[i - 1];
      if (c == ' ' || c == '\t') continue;
      sentence_start = c == '.' || c == '!' || c == '?';
      break;
    }
    std::string replacement;
    if (entity == NeutralEntity::Someone) {
      replacement = sentence_start ? "Someone" : "someone";
    } else if (det.empty()) {
      replacement = sentence_start ? "A person" : "a person";
    } else {
      const std::string lower = text::ascii_lower(det);
      std::string article = lower == "an" ? "a" : det;
      if (lower == "an" && det[0] == 'A') article = "A";
      replacement = article + " person";
    }
    s.replace(start, pos + occupation.size() - start, replacement);
    search = start + replacement.size();
  }
  return s;
}

}  // namespace

TemplateInstance neutralize(const TemplateInstance& instance, NeutralEntity entity) {
  auto occ = instance.contexts.find(ContextKind::Occupation);
  if (occ == instance.contexts.end()) {
    throw Error(ErrorKind::Precondition, "instance " + instance.id +
                                             ": cannot neutralize an instance without an occupation context");
  }
  TemplateInstance out = instance;
  out.family = Family::GenderLexNeutral;
  out.contexts.erase(ContextKind::Occupation);
  out.template_text = neutralize_text(instance.template_text, occ->second, entity);
  if (out.entity) out.entity = neutralize_text(*out.entity, occ->second, entity);
  const std::string resolved = out.resolved_template();
  for (const auto& [kind, word] : out.contexts) {
    if (kind != ContextKind::Concept && resolved.find(word) == std::string::npos) {
      throw Error(ErrorKind::Validation, "instance " + instance.id + ": " + to_string(kind) + " '" + word +
                                             "' lost when neutralizing the occupation");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct FieldRules {
  std::vector<ContextKind> required;
  std::vector<ContextKind> optional;
  std::vector<ContextKind> forbidden;
};

FieldRules rules_for(Family family) {
  switch (family) {
    case Family::GenderLex:
      return {{ContextKind::Occupation, ContextKind::Noun, ContextKind::Verb}, {}, {ContextKind::Concept}};
    case Family::GenderLexNeutral:
      return {{ContextKind::Noun, ContextKind::Verb}, {}, {ContextKind::Occupation, ContextKind::Concept}};
    case Family::Winograd:
      return {{ContextKind::Occupation, ContextKind::Verb}, {ContextKind::Noun}, {ContextKind::Concept}};
    case Family::CrowsPairs:
    case Family::JpPairs:
      return {{ContextKind::Concept}, {}, {ContextKind::Occupation, ContextKind::Noun, ContextKind::Verb}};
  }
  return {};
}

std::vector<TemplateInstance> parse_jsonl(std::string_view content, const std::string& source,
                                          Family family) {
  const FieldRules rules = rules_for(family);
  std::vector<TemplateInstance> out;
  std::vector<std::string> problems;
  std::set<std::string> ids;
  auto all = text::lines(content);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (text::trim(all[i]).empty()) continue;
    const std::string line_no = std::to_string(i + 1);
    std::vector<std::string> line_problems;
    json rec;
    try {
      rec = json::parse(all[i]);
    } catch (const json::parse_error& e) {
      problems.push_back("line " + line_no + ": invalid JSON: " + e.what());
      continue;
    }
    if (!rec.is_object()) {
      problems.push_back("line " + line_no + ": record must be a JSON object");
      continue;
    }
    TemplateInstance inst;
    inst.family = family;
    if (rec.contains("id")) {
      if (rec["id"].is_string()) {
        inst.id = rec["id"].get<std::string>();
      } else if (rec["id"].is_number_integer()) {
        inst.id = std::to_string(rec["id"].get<long long>());
      } else {
        line_problems.emplace_back("'id' must be a string or integer");
      }
    } else {
      inst.id = line_no;
    }
    if (inst.id.empty()) line_problems.emplace_back("empty 'id'");
    if (rec.contains("family")) {
      if (!rec["family"].is_string() || rec["family"].get<std::string>() != to_string(family)) {
        line_problems.push_back(std::string("record family does not match '") + to_string(family) + "'");
      }
    }
    if (!rec.contains("template") || !rec["template"].is_string()) {
      line_problems.emplace_back("missing field 'template'");
    } else {
      inst.template_text = rec["template"].get<std::string>();
      const auto slots = count_occurrences(inst.template_text, kPronounSlot);
      if (slots == 0) line_problems.emplace_back("template has no {P} placeholder");
      if (slots > 1) line_problems.emplace_back("template has more than one {P} placeholder");
      const auto entities = count_occurrences(inst.template_text, kEntitySlot);
      if (entities > 1) line_problems.emplace_back("template has more than one {E} placeholder");
      if (entities == 1) {
        if (!rec.contains("entity") || !rec["entity"].is_string() || rec["entity"].get<std::string>().empty()) {
          line_problems.emplace_back("template uses {E} but 'entity' is missing");
        } else {
          inst.entity = rec["entity"].get<std::string>();
        }
      } else if (rec.contains("entity")) {
        line_problems.emplace_back("'entity' given but template has no {E}");
      }
      try {
        (void)text::decode_utf8(inst.template_text);
      } catch (const Error& e) {
        line_problems.emplace_back(e.what());
      }
    }
    auto read_context = [&](ContextKind kind, bool required) {
      const char* name = to_string(kind);
      if (!rec.contains(name) || rec[name].is_null()) {
        if (required) line_problems.push_back(std::string("missing field '") + name + "'");
        return;
      }
      if (!rec[name].is_string() || text::trim(rec[name].get<std::string>()).empty()) {
        line_problems.push_back(std::string("empty ") + name);
        return;
      }
      inst.contexts[kind] = rec[name].get<std::string>();
    };
    for (auto k : rules.required) read_context(k, true);
    for (auto k : rules.optional) read_context(k, false);
    for (auto k : rules.forbidden) {
      if (rec.contains(to_string(k)) && !rec[to_string(k)].is_null()) {
        line_problems.push_back(std::string("field '") + to_string(k) + "' not allowed for family " +
                                to_string(family));
      }
    }
    if (rec.contains("human_label") && !rec["human_label"].is_null()) {
      if (!rec["human_label"].is_string() || rec["human_label"].get<std::string>().empty()) {
        line_problems.emplace_back("'human_label' must be a non-empty string");
      } else {
        inst.human_label = rec["human_label"].get<std::string>();
      }
    }
    if (line_problems.empty()) {
      const std::string resolved = inst.resolved_template();
      for (const auto& [kind, word] : inst.contexts) {
        if (kind == ContextKind::Concept) continue;
        if (resolved.find(word) == std::string::npos) {
          line_problems.push_back(std::string(to_string(kind)) + " '" + word + "' not found in template");
        }
      }
    }
    if (line_problems.empty() && !ids.insert(inst.id).second) {
      line_problems.push_back("duplicate id '" + inst.id + "'");
    }
    if (!line_problems.empty()) {
      for (const auto& p : line_problems) problems.push_back("line " + line_no + ": " + p);
      continue;
    }
    out.push_back(std::move(inst));
  }
  if (!problems.empty()) {
    std::string msg = source + ": " + std::to_string(problems.size()) + " validation problem(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(ErrorKind::Validation, msg);
  }
  return out;
}

}  // namespace

std::vector<TemplateInstance> parse_genderlex(std::string_view content, const std::string& source,
                                              Family family) {
  if (family != Family::GenderLex && family != Family::GenderLexNeutral) {
    throw Error(ErrorKind::Precondition, "parse_genderlex: family must be genderlex or genderlex-neutral");
  }
  return parse_jsonl(content, source, family);
}

std::vector<TemplateInstance> parse_winograd(std::string_view content, const std::string& source) {
  return parse_jsonl(content, source, Family::Winograd);
}

std::vector<TemplateInstance> parse_concept_pairs(std::string_view content, const std::string& source,
                                                  Family family) {
  if (family != Family::CrowsPairs && family != Family::JpPairs) {
    throw Error(ErrorKind::Precondition, "parse_concept_pairs: family must be crows-pairs or jp-pairs");
  }
  return parse_jsonl(content, source, family);
}

std::vector<TemplateInstance> parse_corpus(std::string_view content, Family family,
                                           const std::string& source) {
  switch (family) {
    case Family::GenderLex:
    case Family::GenderLexNeutral: return parse_genderlex(content, source, family);
    case Family::Winograd: return parse_winograd(content, source);
    case Family::CrowsPairs:
    case Family::JpPairs: return parse_concept_pairs(content, source, family);
  }
  return {};
}

std::vector<TemplateInstance> load_corpus(const std::string& path, Family family) {
  return parse_corpus(text::read_file(path), family, path);
}

std::string serialize_instances(std::span<const TemplateInstance> instances) {
  std::string out;
  for (const auto& inst : instances) {
    nlohmann::ordered_json rec;
    rec["id"] = inst.id;
    rec["family"] = to_string(inst.family);
    rec["template"] = inst.template_text;
    if (inst.entity) rec["entity"] = *inst.entity;
    for (const auto& [kind, word] : inst.contexts) rec[to_string(kind)] = word;
    if (inst.human_label) rec["human_label"] = *inst.human_label;
    out += rec.dump(-1, ' ', false, json::error_handler_t::strict);
    out += '\n';
  }
  return out;
}

}  // namespace clozebias
