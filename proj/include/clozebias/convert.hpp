#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "clozebias/corpus.hpp"

namespace clozebias {

enum class RawFormat { WinoBias, WinoGender, CrowsPairs };

RawFormat parse_raw_format(std::string_view name);
const char* to_string(RawFormat format);

// Hand-made context labels keyed by the converter's instance id, read from
// JSON-lines records {"id", "occupation"?, "verb"?, "noun"?, "concept"?, "human_label"?}.
using Annotations = std::map<std::string, std::map<std::string, std::string>>;
Annotations parse_annotations(std::string_view content, const std::string& source = "<memory>");

struct ConversionResult {
  std::vector<TemplateInstance> instances;
  std::size_t skipped_unannotated = 0;
  std::size_t skipped_unusable = 0;  // no gendered slot found, wrong bias type, ...
};

// WinoBias lines: "N [The developer] argued with [the designer] ... [him] ...".
// The first bracketed entity becomes "the person"; the bracketed pronoun becomes {P}.
ConversionResult convert_winobias(std::string_view content, const Annotations& annotations);

// WinoGender TSV "sentid<TAB>sentence"; only the male rows are read, ids drop
// the gender suffix ("technician.customer.1").
ConversionResult convert_winogender(std::string_view content, const Annotations& annotations);

// CrowS-Pairs CSV with sent_more, sent_less, stereo_antistereo, bias_type
// columns. Gender rows differing in exactly one word become {P} templates;
// the stereotyped gender is recorded as the human label.
ConversionResult convert_crows_pairs(std::string_view content, const Annotations& annotations);

ConversionResult convert(RawFormat format, std::string_view content, const Annotations& annotations);

// Minimal RFC 4180 reader (quoted fields, doubled quotes, embedded newlines).
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

}  // namespace clozebias
