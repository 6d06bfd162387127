#include "appraisal/llm.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <regex>
#include <sstream>
#include <thread>

#include "appraisal/digest.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/reply_parser.hpp"

namespace appraisal {

using nlohmann::json;

const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::OpenAiCompatible: return "openai-compatible";
    case ProviderKind::LocalServer: return "local-server";
    case ProviderKind::Mock: return "mock";
  }
  return "mock";
}

ProviderKind parse_provider_kind(const std::string& text) {
  if (text == "openai-compatible") return ProviderKind::OpenAiCompatible;
  if (text == "local-server") return ProviderKind::LocalServer;
  if (text == "mock") return ProviderKind::Mock;
  throw ConfigError(fmt::format("unknown provider kind '{}' (openai-compatible, local-server, mock)", text));
}

std::string ModelEndpoint::identity() const {
  json j = {{"kind", to_string(kind)}, {"base_url", base_url}, {"model", model},
            {"temperature", temperature}, {"seed", seed}};
  if (kind == ProviderKind::Mock) {
    j["mock"] = mock == MockBehavior::CompMedian ? "comp-median" : "scripted";
    if (mock == MockBehavior::Scripted) j["script"] = script;
  }
  return j.dump();
}

// ---------------------------------------------------------------------------
// Cache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& turns, int max_tokens) {
  json messages = json::array();
  for (const auto& t : turns) messages.push_back({{"role", t.role}, {"content", t.content}});
  const json j = {{"endpoint", endpoint.identity()}, {"max_tokens", max_tokens}, {"messages", messages}};
  return sha256_hex(j.dump());
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<CachedExchange> ResponseCache::get(const std::string& key) const {
  const auto path = path_for(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    const json j = json::parse(in);
    CachedExchange e;
    e.key = key;
    e.response_text = j.at("response_text").get<std::string>();
    e.usage.prompt_tokens = j.value("prompt_tokens", 0L);
    e.usage.completion_tokens = j.value("completion_tokens", 0L);
    e.created_at = j.value("created_at", "");
    return e;
  } catch (const json::exception& ex) {
    spdlog::warn("cache entry {} is unreadable ({}); ignoring", path.string(), ex.what());
    return std::nullopt;
  }
}

void ResponseCache::put(const CachedExchange& exchange) const {
  const auto path = path_for(exchange.key);
  std::filesystem::create_directories(path.parent_path());
  const json j = {{"key", exchange.key},
                  {"response_text", exchange.response_text},
                  {"prompt_tokens", exchange.usage.prompt_tokens},
                  {"completion_tokens", exchange.usage.completion_tokens},
                  {"created_at", exchange.created_at}};
  const auto tmp = path.parent_path() /
                   fmt::format(".{}.{}.tmp", exchange.key, std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write cache file {}", tmp.string()));
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Transport

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path below the origin, no trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto slash = url.find('/', host_start);
  SplitUrl out;
  out.origin = slash == std::string::npos ? url : url.substr(0, slash);
  out.prefix = slash == std::string::npos ? "" : url.substr(slash);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

HttpReply HttpChatTransport::post_json(const std::string& base_url, const std::string& path, const std::string& body,
                                       const std::vector<std::pair<std::string, std::string>>& headers,
                                       std::chrono::milliseconds timeout) {
  const SplitUrl url = split_url(base_url);
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(url.prefix + path, h, body, "application/json");
  HttpReply reply;
  if (!res) {
    reply.error = httplib::to_string(res.error());
    return reply;
  }
  reply.status = res->status;
  reply.body = res->body;
  return reply;
}

// ---------------------------------------------------------------------------
// Limiter

CallLimiter& CallLimiter::global() {
  static CallLimiter limiter;
  return limiter;
}

void CallLimiter::set_limit(int n) {
  {
    std::lock_guard lock(mu_);
    limit_ = std::max(1, n);
  }
  cv_.notify_all();
}

int CallLimiter::limit() const {
  std::lock_guard lock(mu_);
  return limit_;
}

void CallLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < limit_; });
  ++in_flight_;
}

void CallLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

namespace {

struct LimiterSlot {
  LimiterSlot() { CallLimiter::global().acquire(); }
  ~LimiterSlot() { CallLimiter::global().release(); }
  LimiterSlot(const LimiterSlot&) = delete;
  LimiterSlot& operator=(const LimiterSlot&) = delete;
};

}  // namespace

// ---------------------------------------------------------------------------
// Mock

namespace {

std::string first_user(const std::vector<ChatMessage>& turns) {
  for (const auto& t : turns) {
    if (t.role == "user") return t.content;
  }
  return {};
}

std::string currency_of(const std::string& step1) {
  static const std::regex re("format 'price ([^']+)'");
  std::smatch m;
  if (std::regex_search(step1, m, re)) return m[1].str();
  return "USD";
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::string comp_median_reply(const std::vector<ChatMessage>& turns) {
  const std::string step1 = first_user(turns);
  const std::string cur = currency_of(step1);
  std::string last_user;
  std::size_t last_user_at = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].role == "user") {
      last_user = turns[i].content;
      last_user_at = i;
    }
  }

  if (last_user.find("top 5 features") != std::string::npos) {
    const std::string marker = "using the feature names: ";
    const auto at = last_user.find(marker);
    if (at == std::string::npos) return "";
    std::string list = last_user.substr(at + marker.size());
    if (!list.empty() && list.back() == '.') list.pop_back();
    std::vector<std::string> names;
    std::size_t start = 0;
    while (names.size() < 5 && start <= list.size()) {
      const auto comma = list.find(", ", start);
      names.push_back(list.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 2;
    }
    return fmt::format("{}", fmt::join(names, ", "));
  }

  if (last_user.find("interval") != std::string::npos) {
    for (std::size_t i = last_user_at; i-- > 0;) {
      if (turns[i].role != "assistant") continue;
      const auto p = parse_price(turns[i].content, cur);
      if (p.valid()) return fmt::format("{} - {}", std::llround(0.8 * *p.value), std::llround(1.2 * *p.value));
    }
    return "";
  }

  static const std::regex price_re("transaction price is ([0-9]+(?:\\.[0-9]+)?) ");
  std::vector<double> prices;
  for (auto it = std::sregex_iterator(step1.begin(), step1.end(), price_re); it != std::sregex_iterator(); ++it) {
    prices.push_back(std::stod((*it)[1].str()));
  }
  if (prices.empty()) {
    static const std::regex median_re("with a median price of ([0-9]+(?:\\.[0-9]+)?) ");
    std::smatch m;
    if (!std::regex_search(step1, m, median_re)) return "";
    prices.push_back(std::stod(m[1].str()));
  }
  return fmt::format("{} {}", median_of(std::move(prices)), cur);
}

}  // namespace

std::string mock_reply(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& turns) {
  if (endpoint.mock == MockBehavior::Scripted) {
    const auto assistant_turns =
        static_cast<std::size_t>(std::count_if(turns.begin(), turns.end(), [](const auto& t) { return t.role == "assistant"; }));
    return assistant_turns < endpoint.script.size() ? endpoint.script[assistant_turns] : std::string{};
  }
  return comp_median_reply(turns);
}

// ---------------------------------------------------------------------------
// Client

ChatClient::ChatClient(ModelEndpoint endpoint, std::shared_ptr<ResponseCache> cache,
                       std::shared_ptr<ChatTransport> transport, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), cache_(std::move(cache)), transport_(std::move(transport)), retry_(retry) {
  if (!transport_ && endpoint_.kind != ProviderKind::Mock) transport_ = std::make_shared<HttpChatTransport>();
  sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ClientStats ChatClient::stats() const { return {calls_.load(), hits_.load(), failures_.load(), attempts_.load()}; }

Exchange ChatClient::complete(const std::vector<ChatMessage>& turns, int max_tokens) {
  std::string key;
  if (cache_) {
    key = ResponseCache::key(endpoint_, turns, max_tokens);
    if (auto hit = cache_->get(key)) {
      ++hits_;
      return {true, hit->response_text, hit->usage, true, 0, {}};
    }
  }
  ++calls_;
  Exchange ex = call_provider(turns, max_tokens);
  attempts_ += ex.attempts;
  if (!ex.ok) {
    ++failures_;
    return ex;
  }
  if (cache_) cache_->put({key, ex.text, ex.usage, utc_now()});
  return ex;
}

Exchange ChatClient::call_provider(const std::vector<ChatMessage>& turns, int max_tokens) {
  if (endpoint_.kind == ProviderKind::Mock) {
    Exchange ex;
    ex.ok = true;
    ex.attempts = 1;
    ex.text = mock_reply(endpoint_, turns);
    return ex;
  }

  std::vector<std::pair<std::string, std::string>> headers;
  if (!endpoint_.api_key_env.empty()) {
    const char* secret = std::getenv(endpoint_.api_key_env.c_str());
    if (secret == nullptr || *secret == '\0') {
      throw AuthError(fmt::format("endpoint '{}': environment variable {} is not set", endpoint_.name, endpoint_.api_key_env));
    }
    headers.emplace_back("Authorization", std::string("Bearer ") + secret);
  }

  json messages = json::array();
  for (const auto& t : turns) messages.push_back({{"role", t.role}, {"content", t.content}});
  const json body = {{"model", endpoint_.model},     {"messages", messages},       {"temperature", endpoint_.temperature},
                     {"seed", endpoint_.seed},       {"max_tokens", max_tokens}};
  const std::string payload = body.dump();

  Exchange ex;
  for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
    if (attempt > 0) sleep_(retry_.base_delay * (1 << (attempt - 1)));
    HttpReply reply;
    {
      LimiterSlot slot;
      {
        std::lock_guard lock(rejected_mu_);
        if (rejected_) throw AuthError(*rejected_);
      }
      reply = transport_->post_json(endpoint_.base_url, "/chat/completions", payload, headers, endpoint_.timeout);
    }
    ex.attempts = attempt + 1;
    spdlog::info("endpoint '{}' attempt {}: {}", endpoint_.name, ex.attempts,
                 reply.status == 0 ? fmt::format("no response ({})", reply.error) : fmt::format("HTTP {}", reply.status));
    if (reply.status == 401 || reply.status == 403) {
      const auto msg = fmt::format("endpoint '{}' rejected the credentials from {} (HTTP {})", endpoint_.name,
                                   endpoint_.api_key_env.empty() ? "<no key configured>" : endpoint_.api_key_env,
                                   reply.status);
      std::lock_guard lock(rejected_mu_);
      if (!rejected_) rejected_ = msg;
      throw AuthError(msg);
    }
    if (reply.status == 200) {
      try {
        const json j = json::parse(reply.body);
        ex.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage")) {
          ex.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
          ex.usage.completion_tokens = j["usage"].value("completion_tokens", 0L);
        }
        ex.ok = true;
        return ex;
      } catch (const json::exception& e) {
        ex.error = fmt::format("malformed completion body: {}", e.what());
        continue;
      }
    }
    const bool transient = reply.status == 0 || reply.status == 429 || reply.status >= 500;
    ex.error = reply.status == 0 ? fmt::format("no response: {}", reply.error) : fmt::format("HTTP {}", reply.status);
    if (!transient) break;
  }
  spdlog::warn("endpoint '{}' failed after {} attempt(s): {}", endpoint_.name, ex.attempts, ex.error);
  return ex;
}

}  // namespace appraisal
