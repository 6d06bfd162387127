#include "appraisal/geo.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include "appraisal/dataset.hpp"
#include "appraisal/errors.hpp"

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

namespace appraisal {

bool GeoPoint::valid() const {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
}

GeoPoint make_point(double lat, double lon) {
  if (!(lat >= -90.0 && lat <= 90.0)) throw DataError(fmt::format("latitude {} outside [-90, 90]", lat));
  if (!(lon >= -180.0 && lon <= 180.0)) throw DataError(fmt::format("longitude {} outside [-180, 180]", lon));
  return {lat, lon};
}

double haversine(const GeoPoint& a, const GeoPoint& b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double phi_a = a.lat * kRad;
  const double phi_b = b.lat * kRad;
  const double sin_dphi = std::sin((b.lat - a.lat) * kRad / 2.0);
  const double sin_dlambda = std::sin((b.lon - a.lon) * kRad / 2.0);
  const double h = sin_dphi * sin_dphi + std::cos(phi_a) * std::cos(phi_b) * sin_dlambda * sin_dlambda;
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::min(1.0, h)));
}

const char* to_string(GeocodeSource s) {
  switch (s) {
    case GeocodeSource::Service: return "service";
    case GeocodeSource::Cache: return "cache";
    case GeocodeSource::Manual: return "manual";
  }
  return "manual";
}

std::string geocode_key(const GeoPoint& p) {
  // Round half away from zero at 1e-5 degrees; "-0.00000" normalized to "0.00000".
  const auto fix = [](double v) {
    double r = std::round(v * 1e5) / 1e5;
    if (r == 0.0) r = 0.0;
    return r;
  };
  return fmt::format("{:.5f},{:.5f}", fix(p.lat), fix(p.lon));
}

// ---------------------------------------------------------------------------
// Cache file

namespace {

std::string escape_field(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[++i];
      out.push_back(n == 't' ? '\t' : n == 'n' ? '\n' : n == 'r' ? '\r' : n);
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace

GeocodeCache::GeocodeCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(file_);
  if (!in) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      spdlog::warn("{}:{}: malformed geocode cache line skipped", file_.string(), n);
      continue;
    }
    const std::string key = line.substr(0, t1);
    const auto comma = key.find(',');
    if (comma == std::string::npos) continue;
    GeocodeEntry e;
    try {
      e.point = {std::stod(key.substr(0, comma)), std::stod(key.substr(comma + 1))};
      e.fetched_at = std::stoll(line.substr(t2 + 1));
    } catch (const std::exception&) {
      spdlog::warn("{}:{}: malformed geocode cache line skipped", file_.string(), n);
      continue;
    }
    e.address = unescape_field(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    e.source = GeocodeSource::Cache;
    entries_[key] = std::move(e);
  }
}

std::optional<GeocodeEntry> GeocodeCache::lookup(const GeoPoint& p) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(geocode_key(p));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void GeocodeCache::store(const GeocodeEntry& entry) {
  std::unique_lock lock(mutex_);
  const std::string key = geocode_key(entry.point);
  GeocodeEntry cached = entry;
  cached.source = GeocodeSource::Cache;
  entries_[key] = cached;
  if (file_.empty()) return;
  if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
  std::ofstream out(file_, std::ios::app);
  if (!out) throw DataError(fmt::format("cannot append to geocode cache '{}'", file_.string()));
  out << key << '\t' << escape_field(entry.address) << '\t' << entry.fetched_at << '\n';
}

std::size_t GeocodeCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Nominatim transport

NominatimService::NominatimService(NominatimOptions options) : options_(std::move(options)) {}

GeocodeResponse NominatimService::reverse(const GeoPoint& p) {
  httplib::Client client(options_.base_url);
  const auto secs = options_.timeout.count() / 1000;
  const auto usecs = (options_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  const std::string path = fmt::format("/reverse?format=jsonv2&lat={:.6f}&lon={:.6f}&zoom={}", p.lat, p.lon, options_.zoom);
  const auto res = client.Get(path, {{"User-Agent", options_.user_agent}, {"Accept-Language", "en"}});
  if (!res) return {0, {}};
  if (res->status != 200) return {res->status, {}};
  const auto body = nlohmann::json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.is_object() || !body.contains("display_name")) return {res->status, {}};
  return {200, body.value("display_name", std::string{})};
}

// ---------------------------------------------------------------------------
// Geocoder

Geocoder::Geocoder(std::shared_ptr<GeocodeCache> cache, std::shared_ptr<GeocodeService> service,
                   std::chrono::milliseconds min_interval)
    : cache_(std::move(cache)), service_(std::move(service)), min_interval_(min_interval) {
  if (!cache_) cache_ = std::make_shared<GeocodeCache>();
}

GeocodeResponse Geocoder::call_service(const GeoPoint& p) {
  std::lock_guard lock(network_mutex_);
  if (last_call_) {
    const auto next = *last_call_ + min_interval_;
    const auto now = std::chrono::steady_clock::now();
    if (now < next) std::this_thread::sleep_for(next - now);
  }
  last_call_ = std::chrono::steady_clock::now();
  {
    std::lock_guard s(stats_mutex_);
    ++stats_.service_calls;
  }
  return service_->reverse(p);
}

GeocodeEntry Geocoder::lookup(const GeoPoint& p) const {
  if (auto hit = cache_->lookup(p)) return *hit;
  return {p, {}, 0, GeocodeSource::Manual};
}

GeocodeEntry Geocoder::reverse_geocode(const GeoPoint& p) {
  if (auto hit = cache_->lookup(p)) {
    std::lock_guard s(stats_mutex_);
    ++stats_.cache_hits;
    return *hit;
  }
  if (service_) {
    GeocodeResponse res = call_service(p);
    if (res.status != 0 && res.status != 200) res = call_service(p);  // one retry on HTTP error
    if (res.status == 200 && !res.address.empty()) {
      GeocodeEntry entry{p, res.address, now_seconds(), GeocodeSource::Service};
      cache_->store(entry);
      return entry;
    }
  }
  std::lock_guard s(stats_mutex_);
  ++stats_.fallbacks;
  return {p, {}, now_seconds(), GeocodeSource::Manual};
}

GeocoderStats Geocoder::stats() const {
  std::lock_guard s(stats_mutex_);
  return stats_;
}

WarmCacheReport warm_cache(Geocoder& geocoder, const Dataset& ds) {
  WarmCacheReport report;
  for (const auto& rec : ds.records) {
    const GeoPoint p{rec.lat, rec.lon};
    if (geocoder.cache().lookup(p)) continue;
    const GeocodeEntry e = geocoder.reverse_geocode(p);
    if (e.source == GeocodeSource::Service) {
      ++report.fetched;
    } else {
      report.unresolved_ids.push_back(rec.id);
    }
  }
  return report;
}

}  // namespace appraisal
