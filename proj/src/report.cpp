#include "clozebias/report.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <mutex>
#include <set>
#include <thread>

#include "clozebias/error.hpp"
#include "clozebias/text.hpp"

namespace clozebias {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::File: return "file";
    case ProviderKind::Http: return "http";
    case ProviderKind::Mock: return "mock";
  }
  return "?";
}

const char* to_string(OutputFormat format) {
  switch (format) {
    case OutputFormat::Json: return "json";
    case OutputFormat::Tsv: return "tsv";
    case OutputFormat::Markdown: return "markdown";
  }
  return "?";
}

OutputFormat parse_output_format(std::string_view name) {
  if (name == "json") return OutputFormat::Json;
  if (name == "tsv") return OutputFormat::Tsv;
  if (name == "markdown" || name == "md") return OutputFormat::Markdown;
  throw Error(ErrorKind::Validation, "unknown output format '" + std::string(name) + "'");
}

EmbeddingSpec parse_embedding_spec(std::string_view spec) {
  EmbeddingSpec out;
  const auto eq = spec.find('=');
  if (eq != std::string_view::npos) {
    out.name = std::string(spec.substr(0, eq));
    out.path = std::string(spec.substr(eq + 1));
  } else {
    out.path = std::string(spec);
    out.name = std::filesystem::path(out.path).stem().string();
  }
  if (out.name.empty() || out.path.empty()) {
    throw Error(ErrorKind::Validation, "invalid embedding spec '" + std::string(spec) + "'");
  }
  return out;
}

namespace {

std::string basename(const std::string& path) { return std::filesystem::path(path).filename().string(); }

struct PlanItem {
  std::string name;
  std::optional<ContextKind> kind;  // single-context scoring
  bool combined = false;
  bool group = false;
};

Family effective_family(const RunConfig& config) {
  return config.neutralize ? Family::GenderLexNeutral : config.family;
}

std::vector<PlanItem> make_plan(const RunConfig& config) {
  const Family family = effective_family(config);
  const auto allowed = family_contexts(family);
  std::vector<std::string> names = config.contexts;
  if (names.empty()) {
    for (auto k : allowed) names.emplace_back(to_string(k));
    if (allowed.size() >= 2) names.emplace_back("combined");
  }
  std::vector<PlanItem> plan;
  std::set<std::string> seen;
  for (const auto& raw : names) {
    const std::string name = text::trim(raw);
    if (!seen.insert(name).second) continue;
    PlanItem item;
    item.name = name;
    if (name == "none") {
    } else if (name == "combined") {
      item.combined = true;
    } else if (name == "group") {
      item.group = true;
      if (std::find(allowed.begin(), allowed.end(), ContextKind::Occupation) == allowed.end()) {
        throw Error(ErrorKind::Validation, std::string("group scoring needs an occupation context, which family ") +
                                               to_string(family) + " lacks");
      }
    } else {
      const auto kind = parse_context_kind(name);
      if (std::find(allowed.begin(), allowed.end(), kind) == allowed.end()) {
        throw Error(ErrorKind::Validation, "context '" + name + "' is not valid for family " + to_string(family));
      }
      item.kind = kind;
    }
    plan.push_back(std::move(item));
  }
  if (plan.empty()) throw Error(ErrorKind::Validation, "no contexts selected");
  return plan;
}

[[noreturn]] void rethrow_in_stage(const std::string& stage) {
  try {
    throw;
  } catch (const Error& e) {
    throw Error(e.kind(), "[" + stage + "] " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Validation, "[" + stage + "] " + e.what());
  }
}

std::string effective_model_id(const RunConfig& config) {
  if (!config.model_id.empty()) return config.model_id;
  if (config.provider == ProviderKind::Mock) return "mock";
  return config.model_id;
}

}  // namespace

void validate_config(const RunConfig& config) {
  if (config.corpus_path.empty()) throw Error(ErrorKind::Validation, "no corpus given (--corpus)");
  if (config.embeddings.empty()) throw Error(ErrorKind::Validation, "no embeddings given (--embeddings)");
  if (!config.provider) {
    throw Error(ErrorKind::Validation, "exactly one LM source is required: --logprobs, --server or --mock");
  }
  if (*config.provider == ProviderKind::File && config.logprobs_path.empty()) {
    throw Error(ErrorKind::Validation, "file provider needs --logprobs");
  }
  if (config.neutralize && config.family != Family::GenderLex && config.family != Family::Winograd) {
    throw Error(ErrorKind::Validation, std::string("cannot neutralize family ") + to_string(config.family));
  }
  std::set<std::string> names;
  for (const auto& e : config.embeddings) {
    if (!names.insert(e.name).second) {
      throw Error(ErrorKind::Validation, "duplicate embedding name '" + e.name + "'");
    }
  }
  (void)make_plan(config);
}

std::vector<TemplateInstance> prepare_corpus(const RunConfig& config) {
  auto corpus = load_corpus(config.corpus_path, config.family);
  if (config.neutralize) {
    for (auto& inst : corpus) inst = neutralize(inst, *config.neutralize);
  }
  return corpus;
}

PronounLexicon resolve_lexicon(const RunConfig& config) {
  return config.lexicon_path ? load_lexicon(*config.lexicon_path) : PronounLexicon::english_binary();
}

// ---------------------------------------------------------------------------
// Manifest

std::string SentenceManifest::to_jsonl() const {
  std::string out;
  for (const auto& [id, sentence] : entries) {
    ordered_json rec;
    rec["sentence_id"] = id;
    rec["text"] = sentence;
    out += rec.dump(-1, ' ', false) + "\n";
  }
  return out;
}

SentenceManifest collect_sentences(const RunConfig& config, const std::vector<TemplateInstance>& corpus,
                                   const PronounLexicon& lexicon) {
  const auto plan = make_plan(config);
  const bool needs_genders = std::any_of(plan.begin(), plan.end(), [](const PlanItem& p) { return !p.group; });
  const bool needs_neutral = std::any_of(plan.begin(), plan.end(), [](const PlanItem& p) { return p.group; });
  if (needs_neutral && !lexicon.neutral) {
    throw Error(ErrorKind::Validation, "group scoring needs a neutral pronoun in the lexicon");
  }
  const std::string model = effective_model_id(config);
  SentenceManifest manifest;
  std::set<std::string> seen;
  auto add = [&](const Variant& v) {
    if (!seen.insert(v.sentence).second) {
      ++manifest.duplicates;
      return;
    }
    manifest.entries.emplace_back(text::sentence_id(model, v.sentence), v.sentence);
  };
  for (const auto& inst : corpus) {
    if (needs_genders) {
      for (const auto& v : expand_variants(inst, lexicon.genders)) add(v);
    }
    if (needs_neutral) add(expand_variant(inst, *lexicon.neutral));
  }
  return manifest;
}

SentenceManifest export_sentences(const RunConfig& config) {
  std::vector<TemplateInstance> corpus;
  PronounLexicon lexicon;
  try {
    corpus = prepare_corpus(config);
  } catch (...) {
    rethrow_in_stage("corpus");
  }
  try {
    lexicon = resolve_lexicon(config);
  } catch (...) {
    rethrow_in_stage("lexicon");
  }
  if (corpus.empty()) throw Error(ErrorKind::Degenerate, "[corpus] corpus is empty");
  return collect_sentences(config, corpus, lexicon);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

struct ScoredCell {
  std::string context;
  std::vector<std::string> labels;
  std::vector<LexiconEntry> targets;  // WEAT target sets
  std::vector<BiasResult> results;
};

std::vector<ScoredCell> score_embedding(const RunConfig& config, const std::vector<PlanItem>& plan,
                                        const std::vector<TemplateInstance>& corpus,
                                        const PronounLexicon& lexicon, const EmbeddingTable& table,
                                        LmProvider& provider) {
  ScoringOptions options;
  options.mode = config.mode;
  options.aggregation = config.sentence_aggregation;
  options.pronoun = config.pronoun_prob;
  options.combined = config.combined;
  options.strict = config.strict;
  options.fallback_to_all = !config.strict;

  std::vector<ScoredCell> cells;
  std::vector<std::pair<std::size_t, std::vector<GroupSpec>>> group_cells;
  std::vector<std::size_t> plan_cell;
  for (std::size_t p = 0; p < plan.size(); ++p) {
    if (plan[p].group) {
      for (const auto& [a, b] : lexicon.group_pairs) {
        ScoredCell cell;
        cell.context = "group:" + a + "/" + b;
        cell.labels = {a, b};
        const auto& ga = lexicon.group(a);
        const auto& gb = lexicon.group(b);
        cell.targets = {{ga.label, "", ga.words}, {gb.label, "", gb.words}};
        cell.results.resize(corpus.size());
        group_cells.push_back({cells.size(), {ga, gb}});
        plan_cell.push_back(p);
        cells.push_back(std::move(cell));
      }
      continue;
    }
    ScoredCell cell;
    cell.context = plan[p].name;
    for (const auto& g : lexicon.genders) cell.labels.push_back(g.label);
    cell.targets = lexicon.genders;
    cell.results.resize(corpus.size());
    plan_cell.push_back(p);
    cells.push_back(std::move(cell));
  }

  std::vector<std::exception_ptr> errors(corpus.size());
  auto score_one = [&](std::size_t i) {
    try {
      const auto& inst = corpus[i];
      std::size_t group_index = 0;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const PlanItem& item = plan[plan_cell[c]];
        BiasResult r;
        if (item.group) {
          const auto& groups = group_cells[group_index++].second;
          r = group_score(inst, *lexicon.neutral, groups, options, table, provider);
          r.context = cells[c].context;
        } else if (item.combined) {
          r = combined_score(inst, lexicon.genders, {}, options, table, provider);
        } else {
          r = score_instance(inst, lexicon.genders, item.kind, options, table, provider);
        }
        if (r.mode != config.mode) {
          r.warnings.push_back({inst.id, "pronoun is not sentence-final; scored in cloze-all mode"});
        }
        cells[c].results[i] = std::move(r);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, corpus.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) score_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < corpus.size(); i = next++) score_one(i);
      });
    }
    for (auto& t : workers) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (auto& cell : cells) {
    std::stable_sort(cell.results.begin(), cell.results.end(),
                     [](const BiasResult& a, const BiasResult& b) { return a.instance_id < b.instance_id; });
  }
  return cells;
}

AggregateRow aggregate(const RunConfig& config, const std::string& embedding, const ScoredCell& cell,
                       const EmbeddingTable& table, const std::map<std::string, std::string>& human_labels,
                       std::vector<Warning>& warnings) {
  AggregateRow row;
  row.embedding = embedding;
  row.context = cell.context;
  row.labels = cell.labels;
  row.aggregation = config.ratio;
  row.n_instances = cell.results.size();
  for (const auto& label : cell.labels) row.ratios.push_back(bias_ratio(cell.results, label, config.ratio));
  for (const auto& r : cell.results) {
    for (const auto& v : r.variants) {
      if (v.ratio == 0.0 || v.base_ratio == 0.0) {
        warnings.push_back({r.instance_id, "zero probability component in " + cell.context +
                                               "; KL uses epsilon smoothing"});
        break;
      }
    }
  }
  row.kl = kl_bias(cell.results, config.kl, config.kl_direction).mean;
  if (cell.context != "none") {
    try {
      auto sets = derive_weat_sets(cell.results, cell.targets);
      auto w = weat(sets.x, sets.y, sets.a, sets.b, table, config.weat_effect_size);
      row.weat = w.score;
      row.weat_effect_size = w.effect_size;
      std::set<std::string> reported;
      for (const auto& word : w.dropped) {
        if (reported.insert(word).second) {
          warnings.push_back({word, "[" + embedding + "] dropped from WEAT sets for " + cell.context +
                                        ": out of vocabulary"});
        }
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Degenerate && e.kind() != ErrorKind::Oov) throw;
      std::string subject = cell.results.empty() ? cell.context : cell.results.front().instance_id;
      warnings.push_back({subject, "[" + embedding + "] WEAT unavailable for " + cell.context + ": " + e.what()});
    }
  }
  if (!human_labels.empty()) {
    try {
      row.human_agreement = human_agreement(cell.results, human_labels);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Degenerate) throw;
    }
  }
  return row;
}

ordered_json number_or_null(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json config_echo(const RunConfig& config, const PronounLexicon& lexicon, const std::vector<PlanItem>& plan,
                         const std::vector<std::pair<std::string, const EmbeddingTable*>>& tables,
                         const std::string& model_id) {
  ordered_json c;
  c["corpus"] = basename(config.corpus_path);
  c["family"] = to_string(config.family);
  c["neutralize"] = config.neutralize ? ordered_json(to_string(*config.neutralize)) : ordered_json(nullptr);
  c["embeddings"] = ordered_json::array();
  for (const auto& [name, table] : tables) {
    ordered_json e;
    e["name"] = name;
    e["dimension"] = table->dimension();
    e["size"] = table->size();
    e["format"] = to_string(table->format());
    e["duplicates"] = table->duplicate_count();
    e["case_fold"] = table->case_fold();
    c["embeddings"].push_back(e);
  }
  c["provider"] = config.provider ? to_string(*config.provider) : "";
  if (config.provider == ProviderKind::File) c["logprobs"] = basename(config.logprobs_path);
  if (config.provider == ProviderKind::Http) c["server"] = config.server_url;
  if (config.provider == ProviderKind::Mock) c["mock_seed"] = config.mock_seed;
  c["model_id"] = model_id;
  c["mode"] = to_string(config.mode);
  c["sentence_aggregation"] = to_string(config.sentence_aggregation);
  c["pronoun_prob"] = to_string(config.pronoun_prob);
  c["ratio"] = to_string(config.ratio);
  c["kl"] = to_string(config.kl);
  c["kl_direction"] = to_string(config.kl_direction);
  c["combined"] = to_string(config.combined);
  c["weat"] = config.weat_effect_size ? "effect-size" : "differential-association";
  c["lexicon"] = lexicon.name;
  c["contexts"] = ordered_json::array();
  for (const auto& p : plan) c["contexts"].push_back(p.name);
  c["strict"] = config.strict;
  return c;
}

}  // namespace

BiasReport run_with(const RunConfig& config, const std::vector<TemplateInstance>& corpus,
                    const PronounLexicon& lexicon,
                    const std::vector<std::pair<std::string, const EmbeddingTable*>>& tables,
                    LmProvider& provider) {
  std::vector<PlanItem> plan;
  try {
    plan = make_plan(config);
    if (config.kl == KlMode::Pair && lexicon.genders.size() != 2) {
      throw Error(ErrorKind::Validation, "pair KL needs a lexicon with exactly two genders");
    }
  } catch (...) {
    rethrow_in_stage("config");
  }
  if (corpus.empty()) throw Error(ErrorKind::Degenerate, "[corpus] corpus is empty");
  if (tables.empty()) throw Error(ErrorKind::Validation, "[embeddings] no embedding tables");

  SentenceManifest manifest;
  try {
    manifest = collect_sentences(config, corpus, lexicon);
  } catch (...) {
    rethrow_in_stage("lexicon");
  }
  try {
    std::vector<std::string> texts;
    texts.reserve(manifest.entries.size());
    for (const auto& [id, sentence] : manifest.entries) texts.push_back(sentence);
    (void)provider.score_batch(texts);
  } catch (...) {
    rethrow_in_stage("lm");
  }

  std::map<std::string, std::string> human_labels;
  for (const auto& inst : corpus) {
    if (inst.human_label) human_labels[inst.id] = *inst.human_label;
  }

  BiasReport report;
  report.config = config_echo(config, lexicon, plan, tables, provider.model_id());
  std::vector<Warning> warnings;
  for (const auto& [name, table] : tables) {
    std::vector<ScoredCell> cells;
    try {
      cells = score_embedding(config, plan, corpus, lexicon, *table, provider);
    } catch (...) {
      rethrow_in_stage("scoring:" + name);
    }
    try {
      for (auto& cell : cells) {
        report.rows.push_back(aggregate(config, name, cell, *table, human_labels, warnings));
        for (auto& r : cell.results) {
          for (auto& w : r.warnings) warnings.push_back({w.subject, "[" + name + "] " + w.message});
          report.instances.push_back({name, std::move(r)});
        }
      }
    } catch (...) {
      rethrow_in_stage("metrics:" + name);
    }
  }
  std::set<std::pair<std::string, std::string>> seen;
  for (auto& w : warnings) {
    if (seen.insert({w.subject, w.message}).second) report.warnings.push_back(std::move(w));
  }
  return report;
}

BiasReport run(const RunConfig& config) {
  try {
    validate_config(config);
  } catch (...) {
    rethrow_in_stage("config");
  }
  std::vector<TemplateInstance> corpus;
  PronounLexicon lexicon;
  try {
    corpus = prepare_corpus(config);
  } catch (...) {
    rethrow_in_stage("corpus");
  }
  try {
    lexicon = resolve_lexicon(config);
  } catch (...) {
    rethrow_in_stage("lexicon");
  }

  EmbeddingLoadOptions load_options;
  load_options.case_fold = config.case_fold.value_or(lexicon.case_fold.value_or(true));
  std::vector<EmbeddingTable> tables;
  tables.reserve(config.embeddings.size());
  try {
    for (const auto& spec : config.embeddings) tables.push_back(load_embeddings(spec.path, load_options));
  } catch (...) {
    rethrow_in_stage("embeddings");
  }

  std::unique_ptr<LmProvider> inner;
  RunConfig effective = config;
  try {
    switch (*config.provider) {
      case ProviderKind::File:
        inner = std::make_unique<FileProvider>(
            config.logprobs_path, config.model_id.empty() ? std::nullopt : std::optional(config.model_id));
        break;
      case ProviderKind::Http: {
        if (effective.server_url.empty()) {
          if (const char* env = std::getenv("CLOZEBIAS_LM_URL")) effective.server_url = env;
        }
        if (effective.server_url.empty()) {
          throw Error(ErrorKind::Validation, "HTTP provider needs --server or CLOZEBIAS_LM_URL");
        }
        inner = std::make_unique<HttpProvider>(effective.server_url, config.model_id, config.http);
        break;
      }
      case ProviderKind::Mock:
        inner = std::make_unique<MockProvider>(config.mock_seed, effective_model_id(config));
        break;
    }
  } catch (...) {
    rethrow_in_stage("lm");
  }
  CachingProvider provider(std::move(inner));

  std::vector<std::pair<std::string, const EmbeddingTable*>> named;
  for (std::size_t i = 0; i < tables.size(); ++i) named.emplace_back(config.embeddings[i].name, &tables[i]);

  BiasReport report = run_with(effective, corpus, lexicon, named, provider);

  auto digest = [&](const std::string& role, const std::string& path) {
    report.inputs.push_back({role, basename(path), text::hex64(text::fnv1a64(text::read_file(path)))});
  };
  digest("corpus", config.corpus_path);
  for (const auto& spec : config.embeddings) digest("embeddings:" + spec.name, spec.path);
  if (config.provider == ProviderKind::File) digest("logprobs", config.logprobs_path);
  if (config.lexicon_path) digest("lexicon", *config.lexicon_path);
  return report;
}

// ---------------------------------------------------------------------------
// Emission

ordered_json report_to_json(const BiasReport& report) {
  ordered_json out;
  out["tool"] = "clozebias";
  out["config"] = report.config;
  out["inputs"] = ordered_json::array();
  for (const auto& in : report.inputs) {
    ordered_json j;
    j["role"] = in.role;
    j["name"] = in.name;
    j["fnv1a64"] = in.fnv1a64;
    out["inputs"].push_back(j);
  }
  out["rows"] = ordered_json::array();
  for (const auto& row : report.rows) {
    ordered_json j;
    j["embedding"] = row.embedding;
    j["context"] = row.context;
    j["aggregation"] = to_string(row.aggregation);
    j["n_instances"] = row.n_instances;
    ordered_json ratios;
    for (std::size_t i = 0; i < row.labels.size(); ++i) ratios[row.labels[i]] = row.ratios[i];
    j["ratios"] = ratios;
    j["kl"] = row.kl;
    j["weat"] = number_or_null(row.weat);
    if (row.weat_effect_size) j["weat_effect_size"] = *row.weat_effect_size;
    j["human_agreement"] = number_or_null(row.human_agreement);
    out["rows"].push_back(j);
  }
  out["instances"] = ordered_json::array();
  for (const auto& rec : report.instances) {
    const auto& r = rec.result;
    ordered_json j;
    j["embedding"] = rec.embedding;
    j["context"] = r.context;
    j["id"] = r.instance_id;
    j["mode"] = to_string(r.mode);
    j["context_words"] = r.context_words;
    j["winners"] = r.winners;
    j["tie"] = r.tie();
    j["variants"] = ordered_json::array();
    for (const auto& v : r.variants) {
      ordered_json vj;
      vj["label"] = v.label;
      vj["sentence"] = v.sentence;
      vj["base_prob"] = v.base_prob;
      vj["sim"] = v.sim_used;
      vj["raw_cosine"] = v.raw_cosine;
      vj["exponent"] = v.exponent;
      vj["cgs"] = v.cgs;
      vj["base_ratio"] = v.base_ratio;
      vj["ratio"] = v.ratio;
      vj["oov"] = v.oov_terms;
      j["variants"].push_back(vj);
    }
    out["instances"].push_back(j);
  }
  out["warnings"] = ordered_json::array();
  for (const auto& w : report.warnings) {
    ordered_json j;
    j["subject"] = w.subject;
    j["message"] = w.message;
    out["warnings"].push_back(j);
  }
  return out;
}

namespace {

std::string upper(std::string s) {
  for (char& c : s) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return s;
}

std::string opt_fixed(const std::optional<double>& v) { return v ? text::fixed(*v) : "NA"; }

std::string bar(double ratio) {
  const int cells = static_cast<int>(std::lround(std::clamp(ratio, 0.0, 1.0) * 20.0));
  return std::string(static_cast<std::size_t>(cells), '#') + std::string(static_cast<std::size_t>(20 - cells), '.');
}

std::string emit_tsv(const BiasReport& report) {
  std::vector<std::string> labels;
  for (const auto& row : report.rows) {
    for (const auto& l : row.labels) {
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    }
  }
  std::string out = "embedding\tcontext\taggregation\tn_instances";
  for (const auto& l : labels) out += "\tratio_" + l;
  out += "\tkl\tweat\thuman_agreement\n";
  for (const auto& row : report.rows) {
    out += row.embedding + "\t" + row.context + "\t" + to_string(row.aggregation) + "\t" +
           std::to_string(row.n_instances);
    for (const auto& l : labels) {
      auto it = std::find(row.labels.begin(), row.labels.end(), l);
      out += "\t";
      out += it == row.labels.end() ? "NA" : text::fixed(row.ratios[static_cast<std::size_t>(it - row.labels.begin())]);
    }
    out += "\t" + text::fixed(row.kl) + "\t" + opt_fixed(row.weat) + "\t" + opt_fixed(row.human_agreement) + "\n";
  }
  return out;
}

std::string emit_markdown(const BiasReport& report) {
  std::string out = "# Contextual gender bias report\n\n";
  if (!report.rows.empty()) {
    const auto& c = report.config;
    auto field = [&](const char* key) {
      return c.contains(key) && c[key].is_string() ? c[key].get<std::string>() : std::string("?");
    };
    out += "Ratios: " + std::string(to_string(report.rows.front().aggregation)) + "; KL: " + field("kl") + "/" +
           field("kl_direction") + " (nats); mode: " + field("mode") + "\n";
  }
  std::vector<std::string> embeddings;
  for (const auto& row : report.rows) {
    if (std::find(embeddings.begin(), embeddings.end(), row.embedding) == embeddings.end()) {
      embeddings.push_back(row.embedding);
    }
  }
  for (const auto& emb : embeddings) {
    out += "\n## " + emb + "\n";
    std::vector<std::vector<std::string>> label_sets;
    for (const auto& row : report.rows) {
      if (row.embedding == emb &&
          std::find(label_sets.begin(), label_sets.end(), row.labels) == label_sets.end()) {
        label_sets.push_back(row.labels);
      }
    }
    for (const auto& labels : label_sets) {
      bool with_hb = false;
      for (const auto& row : report.rows) {
        if (row.embedding == emb && row.labels == labels && row.human_agreement) with_hb = true;
      }
      out += "\n| context |";
      for (const auto& l : labels) out += " " + upper(l) + " |";
      out += " KL | WEAT |";
      if (with_hb) out += " HB% |";
      out += "\n|---|";
      for (std::size_t i = 0; i < labels.size(); ++i) out += "---|";
      out += "---|---|";
      if (with_hb) out += "---|";
      out += "\n";
      for (const auto& row : report.rows) {
        if (row.embedding != emb || row.labels != labels) continue;
        out += "| " + row.context + " |";
        for (double r : row.ratios) out += " " + text::fixed(r) + " |";
        out += " " + text::fixed(row.kl) + " | " + opt_fixed(row.weat) + " |";
        if (with_hb) {
          out += " " + (row.human_agreement ? text::fixed(*row.human_agreement * 100.0) : std::string("NA")) + " |";
        }
        out += "\n";
      }
    }
    out += "\n```\n";
    for (const auto& row : report.rows) {
      if (row.embedding != emb) continue;
      out += row.context + "\n";
      for (std::size_t i = 0; i < row.labels.size(); ++i) {
        out += "  " + upper(row.labels[i]) + " " + bar(row.ratios[i]) + " " + text::fixed(row.ratios[i], 2) + "\n";
      }
    }
    out += "```\n";
  }
  if (!report.warnings.empty()) {
    out += "\n" + std::to_string(report.warnings.size()) + " warning(s); see the JSON report for details.\n";
  }
  return out;
}

}  // namespace

std::string emit(const BiasReport& report, OutputFormat format) {
  switch (format) {
    case OutputFormat::Json: return report_to_json(report).dump(2, ' ', false) + "\n";
    case OutputFormat::Tsv: return emit_tsv(report);
    case OutputFormat::Markdown: return emit_markdown(report);
  }
  return {};
}

}  // namespace clozebias
