#include "appraisal/enbpi.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "appraisal/errors.hpp"
#include "appraisal/random.hpp"

namespace appraisal {

namespace {

class GbtRegressor : public Regressor {
 public:
  GbtRegressor(GbtModel model, TargetTransform target) : model_(std::move(model)), target_(target) {}
  double predict(const double* row) const override {
    const double v = model_.predict(row);
    return target_ == TargetTransform::Log ? std::exp(v) : v;
  }

 private:
  GbtModel model_;
  TargetTransform target_;
};

}  // namespace

LearnerFactory gbt_learner(GbtParams params, TargetTransform target) {
  return [params, target](const Matrix& x, const std::vector<double>& y, const std::vector<std::size_t>& rows) {
    Matrix sub(rows.size(), x.cols);
    std::vector<double> t(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy(x.row(rows[i]), x.row(rows[i]) + x.cols, sub.row(i));
      t[i] = target == TargetTransform::Log ? std::log(y[rows[i]]) : y[rows[i]];
    }
    return std::make_unique<GbtRegressor>(GbtModel::fit(sub, t, params), target);
  };
}

double higher_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::ceil(static_cast<double>(values.size() - 1) * q - 1e-12);
  const auto idx = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(values.size() - 1)));
  return values[idx];
}

double EnbpiModel::aggregate(std::vector<double>& values) const {
  if (params_.aggregation == Aggregation::Median) return median(values);
  double s = 0.0;
  for (const double v : values) s += v;
  return s / static_cast<double>(values.size());
}

EnbpiModel EnbpiModel::fit(const Matrix& x, const std::vector<double>& y, const LearnerFactory& learner,
                           const EnbpiParams& params) {
  if (params.members < 10) throw ConfigError(fmt::format("enbpi: at least 10 members required, got {}", params.members));
  if (!(params.alpha > 0.0 && params.alpha < 1.0)) throw ConfigError("enbpi: alpha must lie in (0, 1)");
  if (x.rows != y.size() || x.rows == 0) throw DataError("enbpi: empty or mismatched training data");

  const std::size_t n = x.rows;
  const auto b_count = static_cast<std::size_t>(params.members);
  EnbpiModel m;
  m.params_ = params;

  std::vector<char> in_bag;
  std::vector<std::size_t> uncovered;
  for (int attempt = 0; attempt <= params.max_redraws; ++attempt) {
    m.bags_.assign(b_count, {});
    in_bag.assign(b_count * n, 0);
    for (std::size_t b = 0; b < b_count; ++b) {
      Rng rng(derive_seed(params.seed, seed_stream::kBootstrap, attempt * b_count + b));
      auto& bag = m.bags_[b];
      bag.resize(n);
      for (auto& r : bag) {
        r = static_cast<std::size_t>(rng.below(n));
        in_bag[b * n + r] = 1;
      }
    }
    uncovered.clear();
    for (std::size_t i = 0; i < n; ++i) {
      bool oob = false;
      for (std::size_t b = 0; b < b_count && !oob; ++b) oob = !in_bag[b * n + i];
      if (!oob) uncovered.push_back(i);
    }
    m.redraws_ = attempt;
    if (uncovered.empty()) break;
  }
  if (!uncovered.empty()) {
    spdlog::warn("enbpi: {} training row(s) are in every bag after {} redraws; excluded from residuals", uncovered.size(),
                 params.max_redraws);
  }
  m.uncovered_ = uncovered;

  m.oob_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < b_count; ++b) {
      if (!in_bag[b * n + i]) m.oob_[i].push_back(static_cast<int>(b));
    }
  }

  m.members_.reserve(b_count);
  for (std::size_t b = 0; b < b_count; ++b) m.members_.push_back(learner(x, y, m.bags_[b]));

  std::vector<double> preds;
  for (std::size_t i = 0; i < n; ++i) {
    if (m.oob_[i].empty()) continue;
    preds.clear();
    for (const int b : m.oob_[i]) preds.push_back(m.members_[b]->predict(x.row(i)));
    m.residuals_.push_back(y[i] - m.aggregate(preds));
  }
  return m;
}

double EnbpiModel::point(const double* row) const {
  std::vector<double> preds;
  preds.reserve(members_.size());
  for (const auto& mem : members_) preds.push_back(mem->predict(row));
  return aggregate(preds);
}

double EnbpiModel::quantile(std::optional<std::size_t> window) const {
  if (residuals_.empty()) throw DataError("enbpi: no residuals");
  std::size_t start = 0;
  if (window && *window > 0 && *window < residuals_.size()) start = residuals_.size() - *window;
  std::vector<double> abs_res;
  abs_res.reserve(residuals_.size() - start);
  for (std::size_t i = start; i < residuals_.size(); ++i) abs_res.push_back(std::abs(residuals_[i]));
  return higher_quantile(std::move(abs_res), 1.0 - params_.alpha);
}

EnbpiInterval EnbpiModel::interval(const double* row, std::optional<std::size_t> window) const {
  const double p = point(row);
  const double q = quantile(window);
  return {p - q, p + q, p};
}

}  // namespace appraisal
