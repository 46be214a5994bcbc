#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "clozebias/corpus.hpp"
#include "clozebias/embedding_store.hpp"
#include "clozebias/lm_bridge.hpp"
#include "clozebias/text.hpp"

#ifndef CLOZEBIAS_FIXTURE_DIR
#define CLOZEBIAS_FIXTURE_DIR "tests/fixtures"
#endif

namespace testing {

inline std::string fixture(const std::string& name) { return std::string(CLOZEBIAS_FIXTURE_DIR) + "/" + name; }

inline clozebias::EmbeddingTable table(std::size_t dim, const std::vector<clozebias::EmbeddingTable::Entry>& rows,
                                       bool case_fold = true) {
  return clozebias::EmbeddingTable(dim, rows, case_fold);
}

// Mock answer for `sentence` where the token spelling `pronoun` has
// probability `p` and every other scored token ln(0.9).
inline clozebias::MockProvider::Fixed fixed_with(const std::string& sentence, const std::string& pronoun, double p) {
  auto tok = clozebias::mock_tokenize(sentence);
  clozebias::MockProvider::Fixed f;
  f.tokens = tok.tokens;
  for (std::size_t i = 0; i < tok.tokens.size(); ++i) {
    if (i == 0) {
      f.logprobs.emplace_back(std::nullopt);
    } else if (clozebias::text::trim(tok.tokens[i]) == pronoun) {
      f.logprobs.emplace_back(std::log(p));
    } else {
      f.logprobs.emplace_back(std::log(0.9));
    }
  }
  return f;
}

inline clozebias::TemplateInstance instance(const std::string& id, const std::string& templ,
                                            std::map<clozebias::ContextKind, std::string> contexts) {
  clozebias::TemplateInstance t;
  t.id = id;
  t.template_text = templ;
  t.contexts = std::move(contexts);
  return t;
}

}  // namespace testing
