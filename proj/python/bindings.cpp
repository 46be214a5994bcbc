#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "clozebias/bias_metrics.hpp"
#include "clozebias/cloze_scoring.hpp"
#include "clozebias/corpus.hpp"
#include "clozebias/embedding_store.hpp"
#include "clozebias/error.hpp"
#include "clozebias/lm_bridge.hpp"
#include "clozebias/report.hpp"
#include "clozebias/text.hpp"

namespace py = pybind11;
using namespace clozebias;

namespace {

py::dict score_to_dict(const SentenceScore& s) {
  py::dict d;
  d["sentence_id"] = s.sentence_id;
  d["model_id"] = s.model_id;
  d["text"] = s.text;
  d["tokens"] = s.tokens;
  d["logprobs"] = s.logprobs;
  std::vector<std::pair<std::size_t, std::size_t>> offsets;
  for (const auto& o : s.token_offsets) offsets.emplace_back(o.start, o.end);
  d["token_offsets"] = offsets;
  return d;
}

RunConfig config_from(const std::string& corpus, const std::string& family,
                      const std::vector<std::string>& embeddings, const std::string& logprobs,
                      const std::string& server, bool mock, std::uint64_t seed, const std::string& model_id,
                      const std::string& mode, const std::string& aggregation,
                      const std::string& pronoun_prob, const std::string& ratio,
                      const std::string& kl, const std::string& kl_direction, const std::string& combined,
                      const std::optional<std::string>& lexicon, const std::vector<std::string>& contexts,
                      const std::optional<std::string>& neutralize, bool strict, bool effect_size,
                      std::size_t jobs) {
  RunConfig c;
  c.corpus_path = corpus;
  c.family = parse_family(family);
  for (const auto& e : embeddings) c.embeddings.push_back(parse_embedding_spec(e));
  if (!logprobs.empty()) {
    c.provider = ProviderKind::File;
    c.logprobs_path = logprobs;
  } else if (!server.empty()) {
    c.provider = ProviderKind::Http;
    c.server_url = server;
  } else if (mock) {
    c.provider = ProviderKind::Mock;
  }
  if ((logprobs.empty() ? 0 : 1) + (server.empty() ? 0 : 1) + (mock ? 1 : 0) > 1) {
    throw Error(ErrorKind::Validation, "give exactly one of logprobs, server, mock");
  }
  c.mock_seed = seed;
  c.model_id = model_id;
  c.mode = parse_cloze_mode(mode);
  c.sentence_aggregation = parse_sentence_aggregation(aggregation);
  c.pronoun_prob = parse_pronoun_prob(pronoun_prob);
  c.ratio = parse_ratio_aggregation(ratio);
  c.kl = parse_kl_mode(kl);
  c.kl_direction = parse_kl_direction(kl_direction);
  c.combined = parse_combined_formula(combined);
  c.lexicon_path = lexicon;
  c.contexts = contexts;
  if (neutralize) c.neutralize = parse_neutral_entity(*neutralize);
  c.strict = strict;
  c.weat_effect_size = effect_size;
  c.jobs = jobs;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Contextual gender bias scoring (C++ core)";

  static py::exception<Error> error_type(m, "ClozeBiasError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(std::string(to_string(e.kind())) + ": " + e.what());
      exc.attr("kind") = to_string(e.kind());
      exc.attr("exit_code") = exit_code_for(e.kind());
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("cgs", &cgs, py::arg("base_prob"), py::arg("sim"));
  m.def("cgs_with_exponent", &cgs_with_exponent, py::arg("base_prob"), py::arg("exponent"));
  m.def(
      "cosine",
      [](const std::vector<double>& u, const std::vector<double>& v) { return cosine(u, v); }, py::arg("u"),
      py::arg("v"));
  m.def(
      "kl_divergence",
      [](const std::vector<double>& p, const std::vector<double>& q) { return kl_divergence(p, q, nullptr); },
      py::arg("p"), py::arg("q"));
  m.def("sentence_id", [](const std::string& model, const std::string& s) { return text::sentence_id(model, s); },
        py::arg("model_id"), py::arg("text"));

  py::class_<EmbeddingTable>(m, "EmbeddingTable")
      .def_property_readonly("dimension", &EmbeddingTable::dimension)
      .def("__len__", &EmbeddingTable::size)
      .def("__contains__", &EmbeddingTable::contains)
      .def_property_readonly("duplicates", &EmbeddingTable::duplicate_count)
      .def(
          "vector",
          [](const EmbeddingTable& t, const std::string& word) -> std::optional<std::vector<float>> {
            auto v = t.find(word);
            if (!v) return std::nullopt;
            return std::vector<float>(v->begin(), v->end());
          },
          py::arg("word"))
      .def(
          "similarity",
          [](const EmbeddingTable& t, const std::vector<std::string>& left, const std::vector<std::string>& right) {
            auto r = similarity(t, left, right);
            py::dict d;
            d["value"] = r.value;
            d["raw_cosine"] = r.raw_cosine;
            d["resolved"] = r.resolved;
            d["oov"] = r.oov_terms;
            return d;
          },
          py::arg("left"), py::arg("right"))
      .def(
          "weat",
          [](const EmbeddingTable& t, const std::vector<std::string>& x, const std::vector<std::string>& y,
             const std::vector<std::string>& a, const std::vector<std::string>& b, bool effect_size) {
            auto r = weat(x, y, a, b, t, effect_size);
            py::dict d;
            d["weat"] = r.score;
            d["effect_size"] = r.effect_size;
            d["dropped"] = r.dropped;
            return d;
          },
          py::arg("x"), py::arg("y"), py::arg("a"), py::arg("b"), py::arg("effect_size") = false);

  m.def(
      "load_embeddings",
      [](const std::string& path, bool case_fold) {
        EmbeddingLoadOptions opts;
        opts.case_fold = case_fold;
        return load_embeddings(path, opts);
      },
      py::arg("path"), py::arg("case_fold") = true);
  m.def(
      "parse_embeddings",
      [](const std::string& content, bool case_fold) {
        EmbeddingLoadOptions opts;
        opts.case_fold = case_fold;
        return parse_embeddings(content, opts);
      },
      py::arg("content"), py::arg("case_fold") = true);

  m.def(
      "mock_score",
      [](const std::string& sentence, std::uint64_t seed, const std::string& model_id) {
        MockProvider p(seed, model_id);
        return score_to_dict(p.score(sentence));
      },
      py::arg("sentence"), py::arg("seed") = 0, py::arg("model_id") = "mock");
  m.def("validate_logprob_file", &validate_logprob_file, py::arg("content"));
  m.def("validate_http_response", &validate_http_response, py::arg("body"));

  m.def(
      "parse_corpus",
      [](const std::string& content, const std::string& family) {
        return serialize_instances(parse_corpus(content, parse_family(family)));
      },
      py::arg("content"), py::arg("family") = "genderlex",
      "Validates a corpus and returns its canonical JSON-lines form.");
  m.def(
      "neutralize",
      [](const std::string& content, const std::string& family, const std::string& entity) {
        std::vector<TemplateInstance> out;
        for (const auto& inst : parse_corpus(content, parse_family(family))) {
          out.push_back(neutralize(inst, parse_neutral_entity(entity)));
        }
        return serialize_instances(out);
      },
      py::arg("content"), py::arg("family") = "genderlex", py::arg("entity") = "someone");

  m.def(
      "run",
      [](const std::string& corpus, const std::string& family, const std::vector<std::string>& embeddings,
         const std::string& logprobs, const std::string& server, bool mock, std::uint64_t seed,
         const std::string& model_id, const std::string& mode, const std::string& aggregation,
         const std::string& pronoun_prob, const std::string& ratio, const std::string& kl, const std::string& kl_direction,
         const std::string& combined, const std::optional<std::string>& lexicon,
         const std::vector<std::string>& contexts, const std::optional<std::string>& neutralize, bool strict,
         bool effect_size, std::size_t jobs, const std::string& format) {
        auto config = config_from(corpus, family, embeddings, logprobs, server, mock, seed, model_id, mode,
                                  aggregation, pronoun_prob, ratio, kl, kl_direction, combined, lexicon, contexts, neutralize,
                                  strict, effect_size, jobs);
        BiasReport report;
        {
          py::gil_scoped_release release;
          report = run(config);
        }
        return emit(report, parse_output_format(format));
      },
      py::arg("corpus"), py::arg("family") = "genderlex", py::arg("embeddings") = std::vector<std::string>(),
      py::arg("logprobs") = "", py::arg("server") = "", py::arg("mock") = false, py::arg("seed") = 0,
      py::arg("model_id") = "", py::arg("mode") = "last", py::arg("aggregation") = "mean-prob", py::arg("pronoun_prob") = "raw",
      py::arg("ratio") = "mean", py::arg("kl") = "update", py::arg("kl_direction") = "forward",
      py::arg("combined") = "mean", py::arg("lexicon") = std::optional<std::string>(),
      py::arg("contexts") = std::vector<std::string>(), py::arg("neutralize") = std::optional<std::string>(),
      py::arg("strict") = false, py::arg("effect_size") = false, py::arg("jobs") = 1, py::arg("format") = "json",
      "Runs the scoring pipeline and returns the emitted report.");

  m.def(
      "export_sentences",
      [](const std::string& corpus, const std::string& family, const std::optional<std::string>& lexicon,
         const std::vector<std::string>& contexts, const std::optional<std::string>& neutralize,
         const std::string& model_id) {
        RunConfig c;
        c.corpus_path = corpus;
        c.family = parse_family(family);
        c.lexicon_path = lexicon;
        c.contexts = contexts;
        if (neutralize) c.neutralize = parse_neutral_entity(*neutralize);
        c.model_id = model_id;
        auto manifest = export_sentences(c);
        return py::make_tuple(manifest.to_jsonl(), manifest.duplicates);
      },
      py::arg("corpus"), py::arg("family") = "genderlex", py::arg("lexicon") = std::optional<std::string>(),
      py::arg("contexts") = std::vector<std::string>(), py::arg("neutralize") = std::optional<std::string>(),
      py::arg("model_id") = "",
      "Returns (manifest JSON-lines, number of duplicate sentences removed).");
}
