#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "appraisal/config.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/runner.hpp"

namespace appraisal {

struct FieldError {
  std::string field;    // "property.lat", "strategy", ...
  std::string message;
};

/// A request that failed validation; carries one entry per offending field.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<FieldError> fields);
  ValidationError(const std::string& field, const std::string& message);
  const std::vector<FieldError>& fields() const { return fields_; }
  nlohmann::json to_json() const;

 private:
  std::vector<FieldError> fields_;
};

struct AppraisalRequest {
  std::string dataset;   // empty: the first configured dataset
  std::string strategy = "10 ex. mixed";
  std::string endpoint;  // empty: the first configured endpoint
  std::optional<double> temperature;
  PropertyRecord property;
};

struct AppraisalResponse {
  nlohmann::json body;
  bool upstream_failed = false;  // model unreachable or rejected credentials
};

using TransportFactory = std::function<std::shared_ptr<ChatTransport>(const ModelEndpoint&)>;

/// Single-property appraisal shared by the CLI and the HTTP service. Datasets
/// and comparable pools are loaded once at construction.
class Appraiser {
 public:
  explicit Appraiser(RunConfig config, TransportFactory transport = {}, std::optional<RetryPolicy> retry = std::nullopt);

  /// Throws ValidationError listing every bad field.
  AppraisalRequest parse_request(const nlohmann::json& body) const;
  AppraisalResponse appraise(const AppraisalRequest& request) const;

  /// GET /api/comparables: lat, lon, mode, k, optional dataset, date and feature values.
  nlohmann::json comparables(const std::vector<std::pair<std::string, std::string>>& query) const;

  nlohmann::json datasets_json() const;
  nlohmann::json health_json() const;
  const DatasetContext& context(const std::string& name) const;
  const RunConfig& config() const { return config_; }

 private:
  nlohmann::json comparable_json(const DatasetContext& ctx, const Comparable& c) const;

  RunConfig config_;
  TransportFactory transport_;
  std::optional<RetryPolicy> retry_;
  std::shared_ptr<GeocodeCache> geocode_;
  std::shared_ptr<ResponseCache> cache_;
  ReportLibrary reports_;
  std::vector<std::unique_ptr<DatasetContext>> contexts_;
};

/// The twelve strategies as served by /api/strategies.
nlohmann::json strategies_json();

}  // namespace appraisal
