#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clozebias/cloze_scoring.hpp"
#include "clozebias/embedding_store.hpp"

namespace clozebias {

enum class RatioAggregation { MeanRatio, WinCount };

// Update: baseline (normalized base probabilities) against the
// similarity-adjusted distribution of the same instance.
// Pair: adjusted distribution against its own label-swapped mirror, which is
// zero exactly when the two gendered sentences end up equally likely.
enum class KlMode { Update, Pair };
enum class KlDirection { Forward, Reverse, Jeffreys };

const char* to_string(RatioAggregation agg);
const char* to_string(KlMode mode);
const char* to_string(KlDirection direction);
RatioAggregation parse_ratio_aggregation(std::string_view name);
KlMode parse_kl_mode(std::string_view name);
KlDirection parse_kl_direction(std::string_view name);

inline constexpr double kKlEpsilon = 1e-12;

// Neumaier-compensated sum; the result does not depend on thread scheduling.
double compensated_sum(std::span<const double> values);

// b(g): share of label `g` across instances. Throws Error(Degenerate) on empty input.
double bias_ratio(std::span<const BiasResult> results, std::string_view label, RatioAggregation agg);

// KL(p || q) in nats. Zero components are replaced by kKlEpsilon and counted in `smoothed`.
double kl_divergence(std::span<const double> p, std::span<const double> q, std::size_t* smoothed = nullptr);

struct KlResult {
  double mean = 0.0;
  std::size_t smoothed = 0;  // instances that needed epsilon smoothing
};

KlResult kl_bias(std::span<const BiasResult> results, KlMode mode, KlDirection direction);

struct WeatResult {
  double score = 0.0;
  std::optional<double> effect_size;
  std::vector<std::string> dropped;  // OOV words removed from the sets
};

// mean_x s(x,A,B) - mean_y s(y,A,B), s(w,A,B) = mean_a cos(w,a) - mean_b cos(w,b).
// The effect size divides by the sample standard deviation of s over X and Y.
WeatResult weat(std::span<const std::string> x, std::span<const std::string> y,
                std::span<const std::string> a, std::span<const std::string> b,
                const EmbeddingTable& table, bool effect_size = false);

struct WeatSets {
  std::vector<std::string> x;
  std::vector<std::string> y;
  std::vector<std::string> a;  // context words of instances won by the first label
  std::vector<std::string> b;  // context words of instances won by the second label
};

// Targets from the two leading lexicon entries, attributes from the context
// words of the instances each one won. Duplicates are kept. Throws
// Error(Degenerate) when either attribute set is empty.
WeatSets derive_weat_sets(std::span<const BiasResult> results, std::span<const LexiconEntry> genders);

// Share of labelled instances whose winner matches the human label; ties count
// 1/k. Throws Error(Degenerate) when no labelled instance is present.
double human_agreement(std::span<const BiasResult> results,
                       const std::map<std::string, std::string>& labels);

}  // namespace clozebias
