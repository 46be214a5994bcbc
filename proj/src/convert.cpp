#include "clozebias/convert.hpp"

#include <algorithm>
#include <cctype>

#include "clozebias/error.hpp"
#include "clozebias/text.hpp"
#include "json.hpp"

namespace clozebias {

using nlohmann::json;

RawFormat parse_raw_format(std::string_view name) {
  if (name == "winobias") return RawFormat::WinoBias;
  if (name == "winogender") return RawFormat::WinoGender;
  if (name == "crows-pairs") return RawFormat::CrowsPairs;
  throw Error(ErrorKind::Validation, "unknown raw format '" + std::string(name) +
                                         "' (expected winobias, winogender or crows-pairs)");
}

const char* to_string(RawFormat format) {
  switch (format) {
    case RawFormat::WinoBias: return "winobias";
    case RawFormat::WinoGender: return "winogender";
    case RawFormat::CrowsPairs: return "crows-pairs";
  }
  return "?";
}

Annotations parse_annotations(std::string_view content, const std::string& source) {
  Annotations out;
  auto all = text::lines(content);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (text::trim(all[i]).empty()) continue;
    const std::string where = source + ": line " + std::to_string(i + 1);
    json rec;
    try {
      rec = json::parse(all[i]);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::Format, where + ": invalid JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string()) {
      throw Error(ErrorKind::Validation, where + ": annotation needs a string 'id'");
    }
    auto& fields = out[rec["id"].get<std::string>()];
    for (const char* key : {"occupation", "noun", "verb", "concept", "human_label"}) {
      if (rec.contains(key) && rec[key].is_string()) fields[key] = rec[key].get<std::string>();
    }
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw Error(ErrorKind::Format, "CSV: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

// Gender of common gendered words; empty when the word is not gendered.
std::string gender_of(std::string_view word) {
  static const std::map<std::string, std::string> kWords = {
      {"he", "m"},        {"him", "m"},      {"his", "m"},      {"himself", "m"},   {"man", "m"},
      {"men", "m"},       {"boy", "m"},      {"boys", "m"},     {"male", "m"},      {"males", "m"},
      {"father", "m"},    {"son", "m"},      {"brother", "m"},  {"husband", "m"},   {"gentleman", "m"},
      {"guy", "m"},       {"guys", "m"},     {"she", "w"},      {"her", "w"},       {"hers", "w"},
      {"herself", "w"},   {"woman", "w"},    {"women", "w"},    {"girl", "w"},      {"girls", "w"},
      {"female", "w"},    {"females", "w"},  {"mother", "w"},   {"daughter", "w"},  {"sister", "w"},
      {"wife", "w"},      {"lady", "w"},     {"ladies", "w"}};
  auto it = kWords.find(text::ascii_lower(word));
  return it == kWords.end() ? std::string() : it->second;
}

bool is_pronoun(std::string_view word) {
  const auto w = text::ascii_lower(word);
  return w == "he" || w == "she" || w == "him" || w == "her" || w == "his" || w == "hers";
}

// Splits "“Women," into ("“", "Women", ",").
struct Core {
  std::string lead;
  std::string word;
  std::string tail;
};

Core split_core(const std::string& token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  while (b < e && !std::isalnum(static_cast<unsigned char>(token[b]))) ++b;
  while (e > b && !std::isalnum(static_cast<unsigned char>(token[e - 1]))) --e;
  return {token.substr(0, b), token.substr(b, e - b), token.substr(e)};
}

void apply_annotation(TemplateInstance& inst, const std::map<std::string, std::string>& fields) {
  for (const auto& [key, value] : fields) {
    if (key == "human_label") {
      inst.human_label = value;
    } else {
      const auto kind = parse_context_kind(key);
      const auto allowed = family_contexts(inst.family);
      if (std::find(allowed.begin(), allowed.end(), kind) != allowed.end()) inst.contexts[kind] = value;
    }
  }
}

void validate_all(const ConversionResult& result) {
  // Round-trip through the family parser to apply the corpus rules.
  if (result.instances.empty()) return;
  (void)parse_corpus(serialize_instances(result.instances), result.instances.front().family, "<converted>");
}

}  // namespace

ConversionResult convert_winobias(std::string_view content, const Annotations& annotations) {
  ConversionResult out;
  auto all = text::lines(content);
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::string line = text::trim(all[i]);
    if (line.empty()) continue;
    std::size_t p = 0;
    while (p < line.size() && std::isdigit(static_cast<unsigned char>(line[p]))) ++p;
    if (p > 0 && p < line.size() && line[p] == ' ') line = line.substr(p + 1);

    std::string templ;
    bool first_entity = true;
    bool pronoun_done = false;
    std::size_t pos = 0;
    while (pos < line.size()) {
      const auto open = line.find('[', pos);
      if (open == std::string::npos) {
        templ += line.substr(pos);
        break;
      }
      const auto close = line.find(']', open);
      if (close == std::string::npos) {
        templ += line.substr(pos);
        break;
      }
      templ += line.substr(pos, open - pos);
      const std::string inner = line.substr(open + 1, close - open - 1);
      if (!pronoun_done && is_pronoun(inner)) {
        templ += std::string(kPronounSlot);
        pronoun_done = true;
      } else if (first_entity) {
        const bool upper = !inner.empty() && std::isupper(static_cast<unsigned char>(inner[0]));
        templ += (upper ? "The person" : "the person");
        first_entity = false;
      } else {
        templ += inner;
      }
      pos = close + 1;
    }
    if (!pronoun_done) {
      ++out.skipped_unusable;
      continue;
    }
    const std::string id = "wb-" + std::to_string(i + 1);
    auto ann = annotations.find(id);
    if (ann == annotations.end()) {
      ++out.skipped_unannotated;
      continue;
    }
    TemplateInstance inst;
    inst.id = id;
    inst.family = Family::Winograd;
    inst.template_text = templ;
    apply_annotation(inst, ann->second);
    out.instances.push_back(std::move(inst));
  }
  validate_all(out);
  return out;
}

ConversionResult convert_winogender(std::string_view content, const Annotations& annotations) {
  ConversionResult out;
  static constexpr std::string_view kMale = ".male.txt";
  for (const auto& raw : text::lines(content)) {
    if (text::trim(raw).empty()) continue;
    const auto tab = raw.find('\t');
    if (tab == std::string::npos) {
      ++out.skipped_unusable;
      continue;
    }
    const std::string sentid = raw.substr(0, tab);
    if (sentid == "sentid") continue;
    if (sentid.size() <= kMale.size() || sentid.compare(sentid.size() - kMale.size(), kMale.size(), kMale) != 0) {
      continue;
    }
    const std::string id = sentid.substr(0, sentid.size() - kMale.size());
    auto tokens = text::split_ws(text::trim(raw.substr(tab + 1)));
    bool replaced = false;
    for (auto& tok : tokens) {
      auto core = split_core(tok);
      if (gender_of(core.word) == "m" && is_pronoun(core.word)) {
        tok = core.lead + std::string(kPronounSlot) + core.tail;
        replaced = true;
        break;
      }
    }
    if (!replaced) {
      ++out.skipped_unusable;
      continue;
    }
    auto ann = annotations.find(id);
    if (ann == annotations.end()) {
      ++out.skipped_unannotated;
      continue;
    }
    TemplateInstance inst;
    inst.id = id;
    inst.family = Family::Winograd;
    for (std::size_t k = 0; k < tokens.size(); ++k) inst.template_text += (k ? " " : "") + tokens[k];
    apply_annotation(inst, ann->second);
    out.instances.push_back(std::move(inst));
  }
  validate_all(out);
  return out;
}

ConversionResult convert_crows_pairs(std::string_view content, const Annotations& annotations) {
  ConversionResult out;
  auto rows = parse_csv(content);
  if (rows.empty()) return out;
  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw Error(ErrorKind::Format, "CrowS-Pairs CSV lacks column '" + std::string(name) + "'");
  };
  const std::size_t c_more = column("sent_more");
  const std::size_t c_less = column("sent_less");
  const std::size_t c_type = column("bias_type");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < header.size()) {
      ++out.skipped_unusable;
      continue;
    }
    if (row[c_type] != "gender") continue;
    auto more = text::split_ws(row[c_more]);
    auto less = text::split_ws(row[c_less]);
    if (more.size() != less.size()) {
      ++out.skipped_unusable;
      continue;
    }
    std::vector<std::size_t> diffs;
    for (std::size_t k = 0; k < more.size(); ++k) {
      if (more[k] != less[k]) diffs.push_back(k);
    }
    if (diffs.size() != 1) {
      ++out.skipped_unusable;
      continue;
    }
    const auto core_more = split_core(more[diffs[0]]);
    const auto core_less = split_core(less[diffs[0]]);
    const auto g_more = gender_of(core_more.word);
    const auto g_less = gender_of(core_less.word);
    if (g_more.empty() || g_less.empty() || g_more == g_less) {
      ++out.skipped_unusable;
      continue;
    }
    const std::string id = "cp-" + (header.front().empty() && !row.front().empty() ? row.front() : std::to_string(r));
    auto ann = annotations.find(id);
    if (ann == annotations.end()) {
      ++out.skipped_unannotated;
      continue;
    }
    more[diffs[0]] = core_more.lead + std::string(kPronounSlot) + core_more.tail;
    TemplateInstance inst;
    inst.id = id;
    inst.family = Family::CrowsPairs;
    for (std::size_t k = 0; k < more.size(); ++k) inst.template_text += (k ? " " : "") + more[k];
    inst.human_label = g_more;
    apply_annotation(inst, ann->second);
    out.instances.push_back(std::move(inst));
  }
  validate_all(out);
  return out;
}

ConversionResult convert(RawFormat format, std::string_view content, const Annotations& annotations) {
  switch (format) {
    case RawFormat::WinoBias: return convert_winobias(content, annotations);
    case RawFormat::WinoGender: return convert_winogender(content, annotations);
    case RawFormat::CrowsPairs: return convert_crows_pairs(content, annotations);
  }
  return {};
}

}  // namespace clozebias
