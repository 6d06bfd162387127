#pragma once

#include <string>
#include <vector>

#include "appraisal/llm.hpp"
#include "appraisal/prompt.hpp"
#include "appraisal/reply_parser.hpp"

namespace appraisal {

/// Result of the three-step exchange for one property. Invalid steps keep
/// their raw replies; nothing is imputed.
struct ConversationOutcome {
  ParsedPrice price;
  ParsedInterval interval;
  ParsedFeatures features;
  bool interval_excludes_point = false;  // kept, but flagged
  int price_reprompts = 0;
  int interval_reprompts = 0;
  bool failed = false;  // provider unreachable after retries
  std::string error;
  std::vector<ChatMessage> transcript;
  Usage usage;
  long cache_hits = 0;
  double latency_ms = 0.0;
};

/// Runs price, interval and feature steps with the history carried across
/// steps. Steps 1 and 2 get one format reminder each before being declared
/// invalid. A provider failure stops the conversation and marks it failed.
ConversationOutcome run_conversation(ChatClient& client, const Conversation& conv, const std::string& currency,
                                     const std::vector<std::string>& vocabulary);

}  // namespace appraisal
