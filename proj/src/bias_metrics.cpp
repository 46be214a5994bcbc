#include "clozebias/bias_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "clozebias/error.hpp"

namespace clozebias {

const char* to_string(RatioAggregation agg) {
  return agg == RatioAggregation::MeanRatio ? "mean-ratio" : "win-count";
}

const char* to_string(KlMode mode) { return mode == KlMode::Update ? "update" : "pair"; }

const char* to_string(KlDirection direction) {
  switch (direction) {
    case KlDirection::Forward: return "forward";
    case KlDirection::Reverse: return "reverse";
    case KlDirection::Jeffreys: return "jeffreys";
  }
  return "?";
}

RatioAggregation parse_ratio_aggregation(std::string_view name) {
  if (name == "mean" || name == "mean-ratio") return RatioAggregation::MeanRatio;
  if (name == "wins" || name == "win-count") return RatioAggregation::WinCount;
  throw Error(ErrorKind::Validation, "unknown ratio aggregation '" + std::string(name) + "' (expected mean or wins)");
}

KlMode parse_kl_mode(std::string_view name) {
  if (name == "update") return KlMode::Update;
  if (name == "pair") return KlMode::Pair;
  throw Error(ErrorKind::Validation, "unknown KL mode '" + std::string(name) + "' (expected update or pair)");
}

KlDirection parse_kl_direction(std::string_view name) {
  if (name == "forward") return KlDirection::Forward;
  if (name == "reverse") return KlDirection::Reverse;
  if (name == "jeffreys") return KlDirection::Jeffreys;
  throw Error(ErrorKind::Validation, "unknown KL direction '" + std::string(name) + "'");
}

double compensated_sum(std::span<const double> values) {
  double sum = 0.0;
  double c = 0.0;
  for (double x : values) {
    const double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x)) {
      c += (sum - t) + x;
    } else {
      c += (x - t) + sum;
    }
    sum = t;
  }
  return sum + c;
}

namespace {

double mean_of(const std::vector<double>& values) {
  return compensated_sum(values) / static_cast<double>(values.size());
}

}  // namespace

double bias_ratio(std::span<const BiasResult> results, std::string_view label, RatioAggregation agg) {
  if (results.empty()) throw Error(ErrorKind::Degenerate, "bias_ratio: no results");
  std::vector<double> shares;
  shares.reserve(results.size());
  for (const auto& r : results) {
    if (agg == RatioAggregation::MeanRatio) {
      shares.push_back(r.variant(label).ratio);
    } else {
      (void)r.variant(label);
      const bool won = std::find(r.winners.begin(), r.winners.end(), label) != r.winners.end();
      shares.push_back(won ? 1.0 / static_cast<double>(r.winners.size()) : 0.0);
    }
  }
  return mean_of(shares);
}

double kl_divergence(std::span<const double> p, std::span<const double> q, std::size_t* smoothed) {
  if (p.size() != q.size() || p.empty()) {
    throw Error(ErrorKind::Precondition, "kl_divergence: distributions must be non-empty and equal length");
  }
  bool needs_smoothing = false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw Error(ErrorKind::Precondition, "kl_divergence: negative probability");
    if (p[i] == 0.0 || q[i] == 0.0) needs_smoothing = true;
  }
  if (needs_smoothing && smoothed) ++*smoothed;
  std::vector<double> terms;
  terms.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i] == 0.0 ? kKlEpsilon : p[i];
    const double qi = q[i] == 0.0 ? kKlEpsilon : q[i];
    terms.push_back(pi * std::log(pi / qi));
  }
  // Clamp rounding residue.
  return std::max(0.0, compensated_sum(terms));
}

KlResult kl_bias(std::span<const BiasResult> results, KlMode mode, KlDirection direction) {
  if (results.empty()) throw Error(ErrorKind::Degenerate, "kl_bias: no results");
  KlResult out;
  std::vector<double> per_instance;
  per_instance.reserve(results.size());
  for (const auto& r : results) {
    std::vector<double> p;
    std::vector<double> q;
    for (const auto& v : r.variants) {
      if (mode == KlMode::Update) {
        p.push_back(v.base_ratio);
        q.push_back(v.ratio);
      } else {
        p.push_back(v.ratio);
      }
    }
    if (mode == KlMode::Pair) {
      if (p.size() != 2) {
        throw Error(ErrorKind::Precondition, "pair KL needs exactly two variants (instance " + r.instance_id + ")");
      }
      q = {p[1], p[0]};
    }
    std::size_t smoothed = 0;
    double value = 0.0;
    switch (direction) {
      case KlDirection::Forward: value = kl_divergence(p, q, &smoothed); break;
      case KlDirection::Reverse: value = kl_divergence(q, p, &smoothed); break;
      case KlDirection::Jeffreys:
        value = 0.5 * (kl_divergence(p, q, &smoothed) + kl_divergence(q, p, nullptr));
        break;
    }
    if (smoothed != 0) ++out.smoothed;
    per_instance.push_back(value);
  }
  out.mean = mean_of(per_instance);
  return out;
}

namespace {

struct ResolvedSet {
  std::vector<std::span<const float>> vectors;
};

ResolvedSet resolve_set(std::span<const std::string> words, const EmbeddingTable& table, const char* name,
                        std::vector<std::string>& dropped) {
  ResolvedSet out;
  for (const auto& w : words) {
    auto v = table.find(w);
    if (v) {
      out.vectors.push_back(*v);
    } else {
      dropped.push_back(w);
    }
  }
  if (out.vectors.empty()) {
    throw Error(ErrorKind::Oov, std::string("WEAT: set ") + name + " has no word in the embedding table");
  }
  return out;
}

double association(std::span<const float> w, const ResolvedSet& a, const ResolvedSet& b) {
  std::vector<double> ca;
  std::vector<double> cb;
  for (auto v : a.vectors) ca.push_back(cosine(w, v));
  for (auto v : b.vectors) cb.push_back(cosine(w, v));
  return mean_of(ca) - mean_of(cb);
}

}  // namespace

WeatResult weat(std::span<const std::string> x, std::span<const std::string> y,
                std::span<const std::string> a, std::span<const std::string> b,
                const EmbeddingTable& table, bool effect_size) {
  WeatResult out;
  const auto rx = resolve_set(x, table, "X", out.dropped);
  const auto ry = resolve_set(y, table, "Y", out.dropped);
  const auto ra = resolve_set(a, table, "A", out.dropped);
  const auto rb = resolve_set(b, table, "B", out.dropped);
  std::vector<double> sx;
  std::vector<double> sy;
  for (auto v : rx.vectors) sx.push_back(association(v, ra, rb));
  for (auto v : ry.vectors) sy.push_back(association(v, ra, rb));
  out.score = mean_of(sx) - mean_of(sy);
  if (effect_size) {
    std::vector<double> all(sx);
    all.insert(all.end(), sy.begin(), sy.end());
    if (all.size() >= 2) {
      const double m = mean_of(all);
      std::vector<double> sq;
      for (double s : all) sq.push_back((s - m) * (s - m));
      const double sd = std::sqrt(compensated_sum(sq) / static_cast<double>(all.size() - 1));
      if (sd > 0.0) out.effect_size = out.score / sd;
    }
  }
  return out;
}

WeatSets derive_weat_sets(std::span<const BiasResult> results, std::span<const LexiconEntry> genders) {
  if (genders.size() < 2) throw Error(ErrorKind::Precondition, "WEAT sets need two lexicon entries");
  WeatSets sets;
  sets.x = genders[0].embedding_words;
  sets.y = genders[1].embedding_words;
  for (const auto& r : results) {
    if (r.tie() || r.winners.empty()) continue;
    const auto& w = r.winners.front();
    if (w == genders[0].label) {
      sets.a.insert(sets.a.end(), r.context_words.begin(), r.context_words.end());
    } else if (w == genders[1].label) {
      sets.b.insert(sets.b.end(), r.context_words.begin(), r.context_words.end());
    }
  }
  if (sets.a.empty() || sets.b.empty()) {
    throw Error(ErrorKind::Degenerate,
                std::string("WEAT attribute set ") + (sets.a.empty() ? "A" : "B") + " is empty: no instance won by '" +
                    (sets.a.empty() ? genders[0].label : genders[1].label) +
                    "' carries context words; inspect the mean-ratio columns instead");
  }
  return sets;
}

double human_agreement(std::span<const BiasResult> results, const std::map<std::string, std::string>& labels) {
  std::vector<double> hits;
  for (const auto& r : results) {
    auto it = labels.find(r.instance_id);
    if (it == labels.end()) continue;
    const bool match = std::find(r.winners.begin(), r.winners.end(), it->second) != r.winners.end();
    hits.push_back(match ? 1.0 / static_cast<double>(r.winners.size()) : 0.0);
  }
  if (hits.empty()) throw Error(ErrorKind::Degenerate, "human_agreement: no labelled instance among the results");
  return mean_of(hits);
}

}  // namespace clozebias
