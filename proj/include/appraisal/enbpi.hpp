#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "appraisal/encoder.hpp"
#include "appraisal/gbt.hpp"

namespace appraisal {

/// A fitted point model over encoded rows.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual double predict(const double* row) const = 0;
};

/// Fits a regressor on the given row subset (indices may repeat).
using LearnerFactory =
    std::function<std::unique_ptr<Regressor>(const Matrix& x, const std::vector<double>& y, const std::vector<std::size_t>& rows)>;

/// Boosted trees as an ensemble member; log-target optional.
LearnerFactory gbt_learner(GbtParams params = {}, TargetTransform target = TargetTransform::Log);

enum class Aggregation { Mean, Median };

struct EnbpiParams {
  int members = 30;
  double alpha = 0.1;
  Aggregation aggregation = Aggregation::Mean;
  int max_redraws = 20;  // fresh bootstrap sets tried while some row is in every bag
  std::uint64_t seed = 0;
};

struct EnbpiInterval {
  double lo = 0.0;
  double hi = 0.0;
  double point = 0.0;
};

/// Ensemble-bootstrap conformal intervals: B members on bootstrap resamples,
/// out-of-bag residuals, symmetric point +- quantile of |residual|.
class EnbpiModel {
 public:
  static EnbpiModel fit(const Matrix& x, const std::vector<double>& y, const LearnerFactory& learner,
                        const EnbpiParams& params = {});

  double point(const double* row) const;
  /// window: use only the most recent w residuals (training order).
  EnbpiInterval interval(const double* row, std::optional<std::size_t> window = std::nullopt) const;
  /// Half-width for the given residual window.
  double quantile(std::optional<std::size_t> window = std::nullopt) const;

  /// Signed residuals y_i - f_{-i}(x_i), training order; uncovered rows omitted.
  const std::vector<double>& residuals() const { return residuals_; }
  /// Training rows that were in every bag and so have no residual.
  const std::vector<std::size_t>& uncovered() const { return uncovered_; }
  /// For each training row, the members whose bag excluded it.
  const std::vector<std::vector<int>>& oob_members() const { return oob_; }
  const std::vector<std::vector<std::size_t>>& bags() const { return bags_; }
  int redraws() const { return redraws_; }
  const EnbpiParams& params() const { return params_; }
  std::size_t member_count() const { return members_.size(); }

  /// Appends a residual observed after deployment (sequential use).
  void push_residual(double residual) { residuals_.push_back(residual); }

 private:
  double aggregate(std::vector<double>& values) const;

  EnbpiParams params_;
  std::vector<std::shared_ptr<const Regressor>> members_;
  std::vector<std::vector<std::size_t>> bags_;
  std::vector<std::vector<int>> oob_;
  std::vector<double> residuals_;
  std::vector<std::size_t> uncovered_;
  int redraws_ = 0;
};

/// "higher" empirical quantile: sorted[ceil((n - 1) * q)].
double higher_quantile(std::vector<double> values, double q);

}  // namespace appraisal
