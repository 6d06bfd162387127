#pragma once

#include <optional>
#include <string>
#include <vector>

#include "appraisal/selection.hpp"

namespace appraisal {

/// One prompting configuration: optional market report plus optional
/// in-context examples.
struct PromptStrategy {
  std::string name;
  bool use_report = false;
  std::optional<SelectionSpec> examples;

  std::size_t example_count() const { return examples ? examples->count : 0; }
};

/// The twelve configurations, in a fixed order. Names are stable identifiers
/// used by configs, reports, the CLI and the HTTP API.
const std::vector<PromptStrategy>& all_strategies();

/// Throws ConfigError listing the valid names.
const PromptStrategy& find_strategy(const std::string& name);

/// The same strategy without its report block ("report" -> "zero-shot").
const PromptStrategy& without_report(const PromptStrategy& strategy);

}  // namespace appraisal
