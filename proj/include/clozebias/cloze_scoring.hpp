#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clozebias/corpus.hpp"
#include "clozebias/embedding_store.hpp"
#include "clozebias/lm_bridge.hpp"

namespace clozebias {

enum class ClozeMode { Last, All };

// How per-context exponents combine: base^(mean(1 - sim_c)) or base^(sum(1 - sim_c)).
enum class CombinedFormula { Mean, Sum };

const char* to_string(ClozeMode mode);
const char* to_string(CombinedFormula formula);
ClozeMode parse_cloze_mode(std::string_view name);
CombinedFormula parse_combined_formula(std::string_view name);

// Smallest base probability used when a score underflows to zero.
inline constexpr double kUnderflowFloor = 1e-300;

struct ScoringOptions {
  ClozeMode mode = ClozeMode::Last;
  SentenceAggregation aggregation = SentenceAggregation::MeanProb;
  PronounProb pronoun = PronounProb::Raw;
  CombinedFormula combined = CombinedFormula::Mean;
  // Strict mode fails on underflow instead of flooring it.
  bool strict = false;
  // Score a mid-sentence pronoun in cloze-all mode instead of failing when
  // cloze-last was requested.
  bool fallback_to_all = false;
};

struct Warning {
  std::string subject;  // instance id or word
  std::string message;

  bool operator==(const Warning&) const = default;
};

struct VariantScore {
  std::string label;
  std::string sentence;
  double base_prob = 0.0;
  // Mean similarity across the contexts evaluated; 0 for the baseline.
  double sim_used = 0.0;
  double raw_cosine = 0.0;
  double exponent = 1.0;
  double cgs = 0.0;
  double base_ratio = 0.0;
  double ratio = 0.0;
  std::vector<std::string> oov_terms;
};

struct BiasResult {
  std::string instance_id;
  ClozeMode mode = ClozeMode::Last;
  std::string context;  // "none", a context kind, "combined", or "group"
  std::vector<std::string> context_words;
  std::vector<VariantScore> variants;
  // One label for a unique argmax; several for an exact tie.
  std::vector<std::string> winners;
  std::vector<Warning> warnings;

  bool tie() const { return winners.size() > 1; }
  const VariantScore& variant(std::string_view label) const;
};

// base_prob^(1 - sim). Throws Error(Degenerate) for base_prob == 0 and
// Error(Precondition) for arguments outside (0,1] x [0,1].
double cgs(double base_prob, double sim);

// base_prob^exponent with the same argument checks; exponent >= 0.
double cgs_with_exponent(double base_prob, double exponent);

// Fills base_ratio, ratio and winners from base_prob and cgs of each variant.
void finalize_result(BiasResult& result);

// Scores one instance against one context kind, or against no context
// (plain LM ratios) when `context` is empty.
BiasResult score_instance(const TemplateInstance& instance, std::span<const LexiconEntry> genders,
                          std::optional<ContextKind> context, const ScoringOptions& options,
                          const EmbeddingTable& table, LmProvider& provider);

// Applies every listed context at once (all of the instance's contexts when
// `contexts` is empty) using the configured combined formula.
BiasResult combined_score(const TemplateInstance& instance, std::span<const LexiconEntry> genders,
                          std::span<const ContextKind> contexts, const ScoringOptions& options,
                          const EmbeddingTable& table, LmProvider& provider);

// Scores the neutral-pronoun sentence once and updates it per social group by
// similarity between the group's combined vector and the occupation.
BiasResult group_score(const TemplateInstance& instance, const LexiconEntry& neutral,
                       std::span<const GroupSpec> groups, const ScoringOptions& options,
                       const EmbeddingTable& table, LmProvider& provider);

}  // namespace clozebias
