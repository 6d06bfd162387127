#include "appraisal/conversation.hpp"

#include <chrono>

namespace appraisal {

namespace {

class Session {
 public:
  Session(ChatClient& client, ConversationOutcome& out) : client_(client), out_(out) {}

  // Sends one user turn and records the reply; false when the provider failed.
  bool ask(const std::string& content, int max_tokens, std::string& reply) {
    out_.transcript.push_back({"user", content});
    const Exchange ex = client_.complete(out_.transcript, max_tokens);
    if (!ex.ok) {
      out_.failed = true;
      out_.error = ex.error;
      return false;
    }
    out_.usage.prompt_tokens += ex.usage.prompt_tokens;
    out_.usage.completion_tokens += ex.usage.completion_tokens;
    out_.cache_hits += ex.cache_hit ? 1 : 0;
    out_.transcript.push_back({"assistant", ex.text});
    reply = ex.text;
    return true;
  }

 private:
  ChatClient& client_;
  ConversationOutcome& out_;
};

}  // namespace

ConversationOutcome run_conversation(ChatClient& client, const Conversation& conv, const std::string& currency,
                                     const std::vector<std::string>& vocabulary) {
  const auto started = std::chrono::steady_clock::now();
  ConversationOutcome out;
  out.transcript.push_back({"system", conv.system});
  Session session(client, out);
  const int short_tokens = client.endpoint().max_tokens;
  const int long_tokens = client.endpoint().feature_max_tokens;

  const auto finish = [&] {
    out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return out;
  };

  std::string reply;
  if (!session.ask(conv.price_request, short_tokens, reply)) return finish();
  out.price = parse_price(reply, currency);
  if (!out.price.valid()) {
    ++out.price_reprompts;
    if (!session.ask(conv.price_reminder, short_tokens, reply)) return finish();
    out.price = parse_price(reply, currency);
  }

  if (!session.ask(conv.interval_request, short_tokens, reply)) return finish();
  out.interval = parse_interval(reply, currency);
  if (!out.interval.valid()) {
    ++out.interval_reprompts;
    if (!session.ask(conv.interval_reminder, short_tokens, reply)) return finish();
    out.interval = parse_interval(reply, currency);
  }
  if (out.interval.valid() && out.price.valid()) {
    const double p = *out.price.value;
    out.interval_excludes_point = p < out.interval.bounds->first || p > out.interval.bounds->second;
  }

  if (!session.ask(conv.feature_request, long_tokens, reply)) return finish();
  out.features = parse_features(reply, vocabulary);
  return finish();
}

}  // namespace appraisal
