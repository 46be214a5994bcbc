#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clozebias/bias_metrics.hpp"
#include "clozebias/cloze_scoring.hpp"
#include "clozebias/corpus.hpp"
#include "clozebias/lm_bridge.hpp"
#include "json.hpp"

namespace clozebias {

enum class ProviderKind { File, Http, Mock };
enum class OutputFormat { Json, Tsv, Markdown };

const char* to_string(ProviderKind kind);
const char* to_string(OutputFormat format);
OutputFormat parse_output_format(std::string_view name);

struct EmbeddingSpec {
  std::string name;
  std::string path;
};

// Parses "name=path" or "path" (name = file stem).
EmbeddingSpec parse_embedding_spec(std::string_view spec);

struct RunConfig {
  std::string corpus_path;
  Family family = Family::GenderLex;
  std::optional<NeutralEntity> neutralize;

  std::vector<EmbeddingSpec> embeddings;
  std::optional<bool> case_fold;  // defaults to the lexicon's setting, else true

  std::optional<ProviderKind> provider;
  std::string logprobs_path;
  std::string server_url;
  std::uint64_t mock_seed = 0;
  std::string model_id;
  HttpOptions http;

  ClozeMode mode = ClozeMode::Last;
  SentenceAggregation sentence_aggregation = SentenceAggregation::MeanProb;
  PronounProb pronoun_prob = PronounProb::Raw;
  RatioAggregation ratio = RatioAggregation::MeanRatio;
  KlMode kl = KlMode::Update;
  KlDirection kl_direction = KlDirection::Forward;
  CombinedFormula combined = CombinedFormula::Mean;
  bool weat_effect_size = false;

  std::optional<std::string> lexicon_path;
  // Names from {none, occupation, noun, verb, concept, combined, group};
  // empty selects the family's contexts plus combined.
  std::vector<std::string> contexts;

  OutputFormat format = OutputFormat::Json;
  std::string out_path;
  bool strict = false;
  std::size_t jobs = 1;
};

// Throws Error(Validation) describing the first inconsistency.
void validate_config(const RunConfig& config);

struct AggregateRow {
  std::string embedding;
  std::string context;
  std::vector<std::string> labels;
  std::vector<double> ratios;  // aligned with labels
  double kl = 0.0;
  std::optional<double> weat;
  std::optional<double> weat_effect_size;
  std::optional<double> human_agreement;
  std::size_t n_instances = 0;
  RatioAggregation aggregation = RatioAggregation::MeanRatio;
};

struct InstanceRecord {
  std::string embedding;
  BiasResult result;
};

struct InputDigest {
  std::string role;
  std::string name;  // file name without directories
  std::string fnv1a64;
};

struct BiasReport {
  nlohmann::ordered_json config;
  std::vector<InputDigest> inputs;
  std::vector<AggregateRow> rows;
  std::vector<InstanceRecord> instances;
  std::vector<Warning> warnings;
};

// Loads the inputs named by `config` and runs the whole pipeline. Errors are
// rethrown with the failing stage named in the message.
BiasReport run(const RunConfig& config);

// Same, with caller-supplied inputs. `provider` is used as-is (wrap it in a
// CachingProvider to memoize).
BiasReport run_with(const RunConfig& config, const std::vector<TemplateInstance>& corpus,
                    const PronounLexicon& lexicon,
                    const std::vector<std::pair<std::string, const EmbeddingTable*>>& tables,
                    LmProvider& provider);

nlohmann::ordered_json report_to_json(const BiasReport& report);
std::string emit(const BiasReport& report, OutputFormat format);

struct SentenceManifest {
  std::vector<std::pair<std::string, std::string>> entries;  // (sentence_id, text)
  std::size_t duplicates = 0;
  std::string to_jsonl() const;
};

// Every sentence a run with `config` will score, deduplicated in first-seen order.
SentenceManifest export_sentences(const RunConfig& config);
SentenceManifest collect_sentences(const RunConfig& config, const std::vector<TemplateInstance>& corpus,
                                   const PronounLexicon& lexicon);

// Corpus after optional neutralization.
std::vector<TemplateInstance> prepare_corpus(const RunConfig& config);
PronounLexicon resolve_lexicon(const RunConfig& config);

}  // namespace clozebias
