#include "appraisal/strategy.hpp"

#include <fmt/format.h>

#include "appraisal/errors.hpp"

namespace appraisal {

namespace {

std::vector<PromptStrategy> make_strategies() {
  struct Block {
    const char* label;
    std::optional<SelectionSpec> spec;
  };
  const std::vector<Block> blocks = {
      {"", std::nullopt},
      {"3 ex. geo", SelectionSpec{SelectionMode::Geo, 3, false}},
      {"3 ex. hedonic", SelectionSpec{SelectionMode::Hedonic, 3, false}},
      {"10 ex. geo", SelectionSpec{SelectionMode::Geo, 10, false}},
      {"10 ex. hedonic", SelectionSpec{SelectionMode::Hedonic, 10, false}},
      {"10 ex. mixed", SelectionSpec{SelectionMode::Mixed, 10, false}},
  };
  std::vector<PromptStrategy> out;
  for (const bool report : {false, true}) {
    for (const auto& b : blocks) {
      std::string name;
      if (!report) {
        name = b.spec ? b.label : "zero-shot";
      } else {
        name = b.spec ? fmt::format("report + {}", b.label) : "report";
      }
      out.push_back({std::move(name), report, b.spec});
    }
  }
  return out;
}

}  // namespace

const std::vector<PromptStrategy>& all_strategies() {
  static const std::vector<PromptStrategy> strategies = make_strategies();
  return strategies;
}

const PromptStrategy& find_strategy(const std::string& name) {
  for (const auto& s : all_strategies()) {
    if (s.name == name) return s;
  }
  std::vector<std::string> names;
  for (const auto& s : all_strategies()) names.push_back('"' + s.name + '"');
  throw ConfigError(fmt::format("unknown strategy '{}'; valid: {}", name, fmt::join(names, ", ")));
}

const PromptStrategy& without_report(const PromptStrategy& strategy) {
  if (!strategy.use_report) return strategy;
  for (const auto& s : all_strategies()) {
    if (!s.use_report && s.examples == strategy.examples) return s;
  }
  return strategy;
}

}  // namespace appraisal
