#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "appraisal/dataset.hpp"
#include "appraisal/llm.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return APPRAISAL_SOURCE_DIR; }
inline std::filesystem::path demo_dir() { return source_dir() / "data" / "demo"; }
inline std::filesystem::path fixture(const std::string& name) { return source_dir() / "tests" / "fixtures" / name; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("appraisal-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

/// Transport that answers from a handler and records every request.
class FakeTransport : public appraisal::ChatTransport {
 public:
  using Handler = std::function<appraisal::HttpReply(const std::string& body, int call)>;
  explicit FakeTransport(Handler handler) : handler_(std::move(handler)) {}

  appraisal::HttpReply post_json(const std::string& base_url, const std::string& path, const std::string& body,
                                 const std::vector<std::pair<std::string, std::string>>& headers,
                                 std::chrono::milliseconds) override {
    std::lock_guard lock(mu_);
    urls.push_back(base_url + path);
    bodies.push_back(body);
    last_headers = headers;
    return handler_(body, calls++);
  }

  std::mutex mu_;
  int calls = 0;
  std::vector<std::string> urls;
  std::vector<std::string> bodies;
  std::vector<std::pair<std::string, std::string>> last_headers;

 private:
  Handler handler_;
};

/// OpenAI-style chat completion body with one message.
inline std::string completion_body(const std::string& content, int prompt_tokens = 10, int completion_tokens = 5) {
  std::string escaped;
  for (const char c : content) {
    if (c == '"' || c == '\\') escaped += '\\';
    if (c == '\n') {
      escaped += "\\n";
      continue;
    }
    escaped += c;
  }
  return R"({"choices":[{"message":{"role":"assistant","content":")" + escaped + R"("}}],"usage":{"prompt_tokens":)" +
         std::to_string(prompt_tokens) + R"(,"completion_tokens":)" + std::to_string(completion_tokens) + "}}";
}

/// Small hand-made dataset with numeric, categorical and coordinate columns.
inline appraisal::Dataset tiny_dataset(std::size_t n = 40, unsigned seed = 3) {
  appraisal::Dataset ds;
  ds.name = "tiny";
  ds.currency = "USD";
  ds.region = "Testville, USA";
  ds.report_scope = "tiny";
  ds.schema.add_numeric("sqft", "sqft");
  ds.schema.add_numeric("rooms");
  ds.schema.add_categorical("view");
  ds.schema.set_coordinates("lat", "lon");
  ds.schema.set_date("date");
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    appraisal::PropertyRecord r;
    r.id = std::to_string(100 + i);
    const double sqft = 800 + std::floor(u(rng) * 2000);
    const double rooms = 1 + std::floor(u(rng) * 5);
    r.numeric = {sqft, rooms};
    r.categorical = {i % 3 == 0 ? "good" : "none"};
    r.lat = 47.5 + u(rng) * 0.2;
    r.lon = -122.4 + u(rng) * 0.3;
    r.date = appraisal::Date(2014, 5 + static_cast<unsigned>(i % 8), 1 + static_cast<unsigned>(i % 27));
    r.price = std::round(100.0 * sqft + 20000.0 * rooms + (i % 3 == 0 ? 50000.0 : 0.0));
    ds.records.push_back(std::move(r));
  }
  ds.source_rows = n;
  return ds;
}

}  // namespace testing
