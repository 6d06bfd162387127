#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace appraisal {

struct Dataset;
struct PropertyRecord;

inline constexpr double kEarthRadiusKm = 6371.0088;  // IUGG mean radius

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  bool valid() const;
};

/// Throws DataError naming the violated bound.
GeoPoint make_point(double lat, double lon);

/// Great-circle distance in kilometers.
double haversine(const GeoPoint& a, const GeoPoint& b);

enum class GeocodeSource { Service, Cache, Manual };
const char* to_string(GeocodeSource s);

struct GeocodeEntry {
  GeoPoint point;
  std::string address;  // empty when unresolved
  std::int64_t fetched_at = 0;  // unix seconds
  GeocodeSource source = GeocodeSource::Manual;

  bool resolved() const { return !address.empty(); }
};

/// "lat,lon" rounded to 5 decimals (about 1.1 m).
std::string geocode_key(const GeoPoint& p);

/// Append-only, one tab-separated line per entry: key, address, timestamp.
/// Later lines win when a key repeats. Reads are concurrent, writes exclusive.
class GeocodeCache {
 public:
  GeocodeCache() = default;
  explicit GeocodeCache(std::filesystem::path file);

  std::optional<GeocodeEntry> lookup(const GeoPoint& p) const;
  void store(const GeocodeEntry& entry);
  std::size_t size() const;
  const std::filesystem::path& file() const { return file_; }

 private:
  std::filesystem::path file_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, GeocodeEntry> entries_;
};

struct GeocodeResponse {
  int status = 0;  // HTTP status; 0 when the service could not be reached
  std::string address;
};

/// Transport to a reverse-geocoding service.
class GeocodeService {
 public:
  virtual ~GeocodeService() = default;
  virtual GeocodeResponse reverse(const GeoPoint& p) = 0;
};

struct NominatimOptions {
  std::string base_url = "https://nominatim.openstreetmap.org";
  std::string user_agent = "appraisal-engine/0.1";
  int zoom = 18;  // street-level detail
  std::chrono::milliseconds timeout{10000};
};

/// OpenStreetMap-compatible /reverse endpoint returning JSON with display_name.
class NominatimService final : public GeocodeService {
 public:
  explicit NominatimService(NominatimOptions options);
  GeocodeResponse reverse(const GeoPoint& p) override;

 private:
  NominatimOptions options_;
};

struct GeocoderStats {
  std::size_t service_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t fallbacks = 0;
};

/// Cache-first reverse geocoder. Network access is serialized behind a
/// minimum interval between requests; a non-200 reply is retried once.
class Geocoder {
 public:
  Geocoder(std::shared_ptr<GeocodeCache> cache, std::shared_ptr<GeocodeService> service,
           std::chrono::milliseconds min_interval = std::chrono::milliseconds(1000));

  GeocodeEntry reverse_geocode(const GeoPoint& p);

  // Cache only; never touches the network.
  GeocodeEntry lookup(const GeoPoint& p) const;

  GeocoderStats stats() const;
  GeocodeCache& cache() { return *cache_; }

 private:
  GeocodeResponse call_service(const GeoPoint& p);

  std::shared_ptr<GeocodeCache> cache_;
  std::shared_ptr<GeocodeService> service_;
  std::chrono::milliseconds min_interval_;
  std::mutex network_mutex_;
  std::optional<std::chrono::steady_clock::time_point> last_call_;
  mutable std::mutex stats_mutex_;
  GeocoderStats stats_;
};

struct WarmCacheReport {
  std::size_t fetched = 0;
  std::vector<std::string> unresolved_ids;
};

/// Ensures every record's coordinates have a cache entry. Idempotent.
WarmCacheReport warm_cache(Geocoder& geocoder, const Dataset& ds);

}  // namespace appraisal
