// clozebias: score contextual gender bias of language-model cloze completions.
//
//   clozebias export-sentences --corpus data.jsonl --out manifest.jsonl
//   clozebias score --corpus data.jsonl --embeddings glove=glove.txt --logprobs lp.jsonl
//   clozebias weat --embeddings glove.txt --x him --y her --a slapped --b recipe
//   clozebias convert --from winobias --input raw.txt --annotations ann.jsonl --out wb.jsonl
//   clozebias validate --logprobs lp.jsonl

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clozebias/bias_metrics.hpp"
#include "clozebias/convert.hpp"
#include "clozebias/error.hpp"
#include "clozebias/lm_bridge.hpp"
#include "clozebias/report.hpp"
#include "clozebias/text.hpp"
#include "json.hpp"

namespace {

using namespace clozebias;

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Validation, "cannot write " + path);
  out << content;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  for (auto& item : text::split(value, ',')) {
    auto t = text::trim(item);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

struct ScoreArgs {
  std::string corpus;
  std::string family = "genderlex";
  std::vector<std::string> embeddings;
  std::string logprobs;
  std::string server;
  bool mock = false;
  std::uint64_t mock_seed = 0;
  std::string model_id;
  std::string mode = "last";
  std::string agg = "mean-prob";
  std::string pronoun_prob = "raw";
  std::string ratio = "mean";
  std::string kl = "update";
  std::string kl_direction = "forward";
  std::string combined = "mean";
  std::string lexicon;
  std::string contexts;
  std::string neutralize;
  std::string out;
  std::string format = "json";
  bool strict = false;
  bool no_case_fold = false;
  bool effect_size = false;
  std::size_t jobs = 1;
  std::size_t batch_size = 16;
  std::size_t max_in_flight = 4;
  int retries = 2;
};

void add_corpus_options(CLI::App* cmd, ScoreArgs& a) {
  cmd->add_option("--corpus", a.corpus, "Corpus JSON-lines file")->required();
  cmd->add_option("--family", a.family, "genderlex | genderlex-neutral | winograd | crows-pairs | jp-pairs");
  cmd->add_option("--lexicon", a.lexicon, "Pronoun lexicon JSON (default: him/her)");
  cmd->add_option("--contexts", a.contexts,
                  "Comma list from none, occupation, noun, verb, concept, combined, group");
  cmd->add_option("--neutralize", a.neutralize, "Replace the occupation with someone | person");
  cmd->add_option("--model-id", a.model_id, "Model identifier for sentence ids and providers");
  cmd->add_option("--out", a.out, "Output path (default: stdout)");
}

RunConfig to_config(const ScoreArgs& a) {
  RunConfig c;
  c.corpus_path = a.corpus;
  c.family = parse_family(a.family);
  if (!a.neutralize.empty()) c.neutralize = parse_neutral_entity(a.neutralize);
  for (const auto& e : a.embeddings) c.embeddings.push_back(parse_embedding_spec(e));
  if (a.no_case_fold) c.case_fold = false;

  std::string server = a.server;
  const int sources = (a.logprobs.empty() ? 0 : 1) + (server.empty() ? 0 : 1) + (a.mock ? 1 : 0);
  if (sources > 1) {
    throw Error(ErrorKind::Validation, "give exactly one of --logprobs, --server, --mock");
  }
  if (!a.logprobs.empty()) {
    c.provider = ProviderKind::File;
  } else if (!server.empty()) {
    c.provider = ProviderKind::Http;
  } else if (a.mock) {
    c.provider = ProviderKind::Mock;
  } else if (const char* env = std::getenv("CLOZEBIAS_LM_URL"); env && *env) {
    c.provider = ProviderKind::Http;
    server = env;
  }
  c.logprobs_path = a.logprobs;
  c.server_url = server;
  c.mock_seed = a.mock_seed;
  c.model_id = a.model_id;
  c.http.batch_size = a.batch_size;
  c.http.max_in_flight = a.max_in_flight;
  c.http.retries = a.retries;

  c.mode = parse_cloze_mode(a.mode);
  c.sentence_aggregation = parse_sentence_aggregation(a.agg);
  c.pronoun_prob = parse_pronoun_prob(a.pronoun_prob);
  c.ratio = parse_ratio_aggregation(a.ratio);
  c.kl = parse_kl_mode(a.kl);
  c.kl_direction = parse_kl_direction(a.kl_direction);
  c.combined = parse_combined_formula(a.combined);
  c.weat_effect_size = a.effect_size;
  if (!a.lexicon.empty()) c.lexicon_path = a.lexicon;
  c.contexts = split_list(a.contexts);
  c.format = parse_output_format(a.format);
  c.out_path = a.out;
  c.strict = a.strict;
  c.jobs = a.jobs;
  return c;
}

int report_error(const Error& e) {
  std::cerr << "clozebias: " << to_string(e.kind()) << ": " << e.what() << "\n";
  return exit_code_for(e.kind());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual gender bias scoring for language-model cloze completions"};
  app.require_subcommand(1);

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Score a corpus and write a bias report");
  add_corpus_options(score, score_args);
  score->add_option("--embeddings", score_args.embeddings, "Embedding file, optionally name=path (repeatable)")
      ->required();
  score->add_option("--logprobs", score_args.logprobs, "Logprob JSON-lines file");
  score->add_option("--server", score_args.server, "Logprob server URL (or CLOZEBIAS_LM_URL)");
  score->add_flag("--mock", score_args.mock, "Use the deterministic offline mock LM");
  score->add_option("--mock-seed", score_args.mock_seed, "Seed of the mock LM");
  score->add_option("--mode", score_args.mode, "last | all");
  score->add_option("--agg", score_args.agg, "Cloze-all aggregation: mean-prob | geo-mean");
  score->add_option("--pronoun-prob", score_args.pronoun_prob,
                    "Multi-token pronoun probability: raw | per-token");
  score->add_option("--ratio", score_args.ratio, "Ratio aggregation: mean | wins");
  score->add_option("--kl", score_args.kl, "update | pair");
  score->add_option("--kl-direction", score_args.kl_direction, "forward | reverse | jeffreys");
  score->add_option("--combined", score_args.combined, "Combined-context exponent: mean | sum");
  score->add_option("--format", score_args.format, "json | tsv | markdown");
  score->add_flag("--strict", score_args.strict, "Fail on underflow and mode fallbacks");
  score->add_flag("--no-case-fold", score_args.no_case_fold, "Match embedding keys case-sensitively");
  score->add_flag("--weat-effect-size", score_args.effect_size, "Also report the WEAT effect size");
  score->add_option("--jobs", score_args.jobs, "Scoring threads");
  score->add_option("--batch-size", score_args.batch_size, "Sentences per HTTP request");
  score->add_option("--max-in-flight", score_args.max_in_flight, "Concurrent HTTP requests");
  score->add_option("--retries", score_args.retries, "HTTP retries per request");

  ScoreArgs export_args;
  auto* export_cmd = app.add_subcommand("export-sentences", "Write the sentence manifest a run will need");
  add_corpus_options(export_cmd, export_args);

  std::string weat_embeddings;
  std::string wx, wy, wa, wb;
  bool weat_effect = false;
  bool weat_no_fold = false;
  auto* weat_cmd = app.add_subcommand("weat", "WEAT differential association for explicit word sets");
  weat_cmd->add_option("--embeddings", weat_embeddings, "Embedding file")->required();
  weat_cmd->add_option("--x", wx, "Target set X (comma list)")->required();
  weat_cmd->add_option("--y", wy, "Target set Y (comma list)")->required();
  weat_cmd->add_option("--a", wa, "Attribute set A (comma list)")->required();
  weat_cmd->add_option("--b", wb, "Attribute set B (comma list)")->required();
  weat_cmd->add_flag("--effect-size", weat_effect, "Also report the effect size");
  weat_cmd->add_flag("--no-case-fold", weat_no_fold, "Match embedding keys case-sensitively");

  std::string conv_from, conv_input, conv_annotations, conv_out;
  auto* convert_cmd = app.add_subcommand("convert", "Convert a raw benchmark file to corpus JSON-lines");
  convert_cmd->add_option("--from", conv_from, "winobias | winogender | crows-pairs")->required();
  convert_cmd->add_option("--input", conv_input, "Raw dataset file")->required();
  convert_cmd->add_option("--annotations", conv_annotations, "Context annotations JSON-lines")->required();
  convert_cmd->add_option("--out", conv_out, "Output path (default: stdout)");

  std::string val_logprobs, val_response, val_corpus, val_family = "genderlex";
  auto* validate_cmd = app.add_subcommand("validate", "Check logprob files, HTTP responses or corpora");
  validate_cmd->add_option("--logprobs", val_logprobs, "Logprob JSON-lines file");
  validate_cmd->add_option("--http-response", val_response, "Saved /v1/logprobs response body");
  validate_cmd->add_option("--corpus", val_corpus, "Corpus JSON-lines file");
  validate_cmd->add_option("--family", val_family, "Corpus family");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*score) {
      const RunConfig config = to_config(score_args);
      const BiasReport report = run(config);
      write_output(config.out_path, emit(report, config.format));
      if (!report.warnings.empty()) {
        std::cerr << "clozebias: " << report.warnings.size() << " warning(s) recorded in the report\n";
      }
      return 0;
    }
    if (*export_cmd) {
      RunConfig config;
      config.corpus_path = export_args.corpus;
      config.family = parse_family(export_args.family);
      if (!export_args.neutralize.empty()) config.neutralize = parse_neutral_entity(export_args.neutralize);
      if (!export_args.lexicon.empty()) config.lexicon_path = export_args.lexicon;
      config.contexts = split_list(export_args.contexts);
      config.model_id = export_args.model_id;
      const auto manifest = export_sentences(config);
      write_output(export_args.out, manifest.to_jsonl());
      std::cerr << "clozebias: " << manifest.entries.size() << " sentence(s), " << manifest.duplicates
                << " duplicate(s) removed\n";
      return 0;
    }
    if (*weat_cmd) {
      EmbeddingLoadOptions opts;
      opts.case_fold = !weat_no_fold;
      const auto table = load_embeddings(weat_embeddings, opts);
      const auto result = weat(split_list(wx), split_list(wy), split_list(wa), split_list(wb), table, weat_effect);
      nlohmann::ordered_json out;
      out["weat"] = result.score;
      out["effect_size"] = result.effect_size ? nlohmann::ordered_json(*result.effect_size)
                                              : nlohmann::ordered_json(nullptr);
      out["dropped"] = result.dropped;
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (*convert_cmd) {
      const auto format = parse_raw_format(conv_from);
      const auto annotations = parse_annotations(text::read_file(conv_annotations), conv_annotations);
      const auto result = convert(format, text::read_file(conv_input), annotations);
      write_output(conv_out, serialize_instances(result.instances));
      std::cerr << "clozebias: converted " << result.instances.size() << " instance(s); skipped "
                << result.skipped_unannotated << " without annotation, " << result.skipped_unusable
                << " unusable\n";
      return 0;
    }
    if (*validate_cmd) {
      std::vector<std::string> problems;
      if (!val_logprobs.empty()) {
        for (auto& p : validate_logprob_file(text::read_file(val_logprobs))) {
          problems.push_back(val_logprobs + ": " + p);
        }
      }
      if (!val_response.empty()) {
        for (auto& p : validate_http_response(text::read_file(val_response))) {
          problems.push_back(val_response + ": " + p);
        }
      }
      if (!val_corpus.empty()) {
        try {
          (void)load_corpus(val_corpus, parse_family(val_family));
        } catch (const Error& e) {
          problems.emplace_back(e.what());
        }
      }
      for (const auto& p : problems) std::cerr << p << "\n";
      if (!problems.empty()) return 1;
      std::cout << "ok\n";
      return 0;
    }
  } catch (const Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << "clozebias: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
