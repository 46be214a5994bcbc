#include "clozebias/cloze_scoring.hpp"

#include <cmath>

#include "clozebias/error.hpp"
#include "clozebias/text.hpp"

namespace clozebias {

const char* to_string(ClozeMode mode) { return mode == ClozeMode::Last ? "cloze-last" : "cloze-all"; }

const char* to_string(CombinedFormula formula) {
  return formula == CombinedFormula::Mean ? "mean" : "sum";
}

ClozeMode parse_cloze_mode(std::string_view name) {
  if (name == "last" || name == "cloze-last") return ClozeMode::Last;
  if (name == "all" || name == "cloze-all") return ClozeMode::All;
  throw Error(ErrorKind::Validation, "unknown mode '" + std::string(name) + "' (expected last or all)");
}

CombinedFormula parse_combined_formula(std::string_view name) {
  if (name == "mean") return CombinedFormula::Mean;
  if (name == "sum") return CombinedFormula::Sum;
  throw Error(ErrorKind::Validation, "unknown combined formula '" + std::string(name) +
                                         "' (expected mean or sum)");
}

const VariantScore& BiasResult::variant(std::string_view label) const {
  for (const auto& v : variants) {
    if (v.label == label) return v;
  }
  throw Error(ErrorKind::Precondition, "result " + instance_id + " has no variant '" + std::string(label) + "'");
}

double cgs_with_exponent(double base_prob, double exponent) {
  if (base_prob == 0.0) throw Error(ErrorKind::Degenerate, "cgs: base probability is zero");
  if (!(base_prob > 0.0 && base_prob <= 1.0)) {
    throw Error(ErrorKind::Precondition, "cgs: base probability must lie in (0, 1]");
  }
  if (!(exponent >= 0.0) || !std::isfinite(exponent)) {
    throw Error(ErrorKind::Precondition, "cgs: exponent must be finite and non-negative");
  }
  return std::pow(base_prob, exponent);
}

double cgs(double base_prob, double sim) {
  if (!(sim >= 0.0 && sim <= 1.0)) throw Error(ErrorKind::Precondition, "cgs: similarity must lie in [0, 1]");
  return cgs_with_exponent(base_prob, 1.0 - sim);
}

void finalize_result(BiasResult& result) {
  double base_total = 0.0;
  double cgs_total = 0.0;
  for (const auto& v : result.variants) {
    base_total += v.base_prob;
    cgs_total += v.cgs;
  }
  double best = -1.0;
  for (auto& v : result.variants) {
    v.base_ratio = v.base_prob / base_total;
    v.ratio = v.cgs / cgs_total;
    best = std::max(best, v.cgs);
  }
  result.winners.clear();
  for (const auto& v : result.variants) {
    if (v.cgs == best) result.winners.push_back(v.label);
  }
}

namespace {

double base_probability(const TemplateInstance& instance, const Variant& variant,
                        const ScoringOptions& options, LmProvider& provider, ClozeMode& used_mode,
                        std::vector<Warning>& warnings) {
  used_mode = options.mode;
  if (used_mode == ClozeMode::Last && !instance.pronoun_is_final()) {
    if (!options.fallback_to_all) {
      throw Error(ErrorKind::Mode, "instance " + instance.id +
                                       ": cloze-last needs a sentence-final pronoun; use cloze-all");
    }
    used_mode = ClozeMode::All;
  }
  const SentenceScore score = provider.score(variant.sentence);
  double p = 0.0;
  if (used_mode == ClozeMode::Last) {
    p = pronoun_prob(score, locate_span(score, variant.char_begin, variant.char_end), options.pronoun);
  } else {
    p = sentence_mean_prob(score, options.aggregation);
  }
  if (p == 0.0) {
    if (options.strict) {
      throw Error(ErrorKind::Degenerate, "instance " + instance.id + ": probability underflow for \"" +
                                             variant.sentence + "\"");
    }
    warnings.push_back({instance.id, "probability underflow for variant '" + variant.label +
                                         "'; floored to 1e-300"});
    p = kUnderflowFloor;
  }
  return p;
}

struct ContextSim {
  double value = 0.0;
  double raw = 0.0;
};

ContextSim context_similarity(const TemplateInstance& instance, const EmbeddingTable& table,
                              std::span<const std::string> target_words, const std::string& context_text,
                              std::vector<std::string>& oov, std::vector<Warning>& warnings,
                              const std::string& target_label) {
  const auto context_words = text::split_ws(context_text);
  auto sim = similarity(table, target_words, context_words);
  if (!sim.oov_terms.empty()) {
    std::string listed;
    for (const auto& w : sim.oov_terms) {
      listed += (listed.empty() ? "" : ", ") + w;
      oov.push_back(w);
    }
    warnings.push_back({instance.id, sim.resolved
                                         ? "partially out of vocabulary for '" + target_label + "': " + listed
                                         : "out of vocabulary for '" + target_label + "', no similarity update: " +
                                               listed});
  }
  return {sim.value, sim.raw_cosine};
}

BiasResult score_contexts(const TemplateInstance& instance, std::span<const LexiconEntry> genders,
                          std::span<const ContextKind> contexts, CombinedFormula formula,
                          std::string context_name, const ScoringOptions& options,
                          const EmbeddingTable& table, LmProvider& provider) {
  if (genders.empty()) throw Error(ErrorKind::Precondition, "no genders to score");
  BiasResult result;
  result.instance_id = instance.id;
  result.context = std::move(context_name);
  std::vector<const std::string*> context_texts;
  for (auto kind : contexts) {
    auto it = instance.contexts.find(kind);
    if (it == instance.contexts.end()) {
      throw Error(ErrorKind::Precondition, "instance " + instance.id + " has no " + to_string(kind) + " context");
    }
    context_texts.push_back(&it->second);
    for (auto& w : text::split_ws(it->second)) result.context_words.push_back(std::move(w));
  }
  for (const auto& entry : genders) {
    const Variant variant = expand_variant(instance, entry);
    VariantScore vs;
    vs.label = entry.label;
    vs.sentence = variant.sentence;
    vs.base_prob = base_probability(instance, variant, options, provider, result.mode, result.warnings);
    double exponent_sum = 0.0;
    double sim_sum = 0.0;
    double raw_sum = 0.0;
    for (const auto* ctx : context_texts) {
      auto s = context_similarity(instance, table, entry.embedding_words, *ctx, vs.oov_terms,
                                  result.warnings, entry.label);
      exponent_sum += 1.0 - s.value;
      sim_sum += s.value;
      raw_sum += s.raw;
    }
    const auto n = static_cast<double>(context_texts.size());
    if (context_texts.empty()) {
      vs.exponent = 1.0;
    } else {
      vs.exponent = formula == CombinedFormula::Mean ? exponent_sum / n : exponent_sum;
      vs.sim_used = sim_sum / n;
      vs.raw_cosine = raw_sum / n;
    }
    vs.cgs = cgs_with_exponent(vs.base_prob, vs.exponent);
    result.variants.push_back(std::move(vs));
  }
  finalize_result(result);
  return result;
}

}  // namespace

BiasResult score_instance(const TemplateInstance& instance, std::span<const LexiconEntry> genders,
                          std::optional<ContextKind> context, const ScoringOptions& options,
                          const EmbeddingTable& table, LmProvider& provider) {
  if (context == ContextKind::Group) {
    throw Error(ErrorKind::Precondition, "group contexts are scored with group_score");
  }
  std::vector<ContextKind> kinds;
  if (context) kinds.push_back(*context);
  return score_contexts(instance, genders, kinds, CombinedFormula::Mean,
                        context ? to_string(*context) : "none", options, table, provider);
}

BiasResult combined_score(const TemplateInstance& instance, std::span<const LexiconEntry> genders,
                          std::span<const ContextKind> contexts, const ScoringOptions& options,
                          const EmbeddingTable& table, LmProvider& provider) {
  std::vector<ContextKind> kinds(contexts.begin(), contexts.end());
  if (kinds.empty()) {
    for (const auto& [kind, word] : instance.contexts) kinds.push_back(kind);
  }
  if (kinds.empty()) {
    throw Error(ErrorKind::Precondition, "instance " + instance.id + " has no contexts to combine");
  }
  return score_contexts(instance, genders, kinds, options.combined, "combined", options, table, provider);
}

BiasResult group_score(const TemplateInstance& instance, const LexiconEntry& neutral,
                       std::span<const GroupSpec> groups, const ScoringOptions& options,
                       const EmbeddingTable& table, LmProvider& provider) {
  auto occ = instance.contexts.find(ContextKind::Occupation);
  if (occ == instance.contexts.end()) {
    throw Error(ErrorKind::Precondition, "instance " + instance.id + ": group scoring needs an occupation context");
  }
  if (groups.size() < 2) throw Error(ErrorKind::Precondition, "group scoring needs at least two groups");
  BiasResult result;
  result.instance_id = instance.id;
  result.context = "group";
  result.context_words = text::split_ws(occ->second);
  const Variant variant = expand_variant(instance, neutral);
  const double base = base_probability(instance, variant, options, provider, result.mode, result.warnings);
  for (const auto& group : groups) {
    VariantScore vs;
    vs.label = group.label;
    vs.sentence = variant.sentence;
    vs.base_prob = base;
    auto s = context_similarity(instance, table, group.words, occ->second, vs.oov_terms, result.warnings,
                                group.label);
    vs.sim_used = s.value;
    vs.raw_cosine = s.raw;
    vs.exponent = 1.0 - s.value;
    vs.cgs = cgs_with_exponent(base, vs.exponent);
    result.variants.push_back(std::move(vs));
  }
  finalize_result(result);
  return result;
}

}  // namespace clozebias
