#pragma once

#include "cfdens/basis.hpp"
#include "cfdens/measure_grid.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace cfdens {

struct Observation {
  double outcome = 0.0;
  CovariateVector covariates;
  double weight = 1.0;
};

/// Rows of one group; covariate vectors are aligned with `schema`.
class ObservationTable {
 public:
  ObservationTable() = default;
  ObservationTable(std::vector<std::string> schema, std::string group = {})
      : schema_(std::move(schema)), group_(std::move(group)) {}

  void add(double outcome, CovariateVector covariates, double weight = 1.0);

  const std::vector<std::string>& schema() const { return schema_; }
  const std::string& group() const { return group_; }
  const std::vector<Observation>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  std::size_t column_index(const std::string& name) const;
  std::vector<CovariateValue> column(const std::string& name) const;

 private:
  std::vector<std::string> schema_;
  std::string group_;
  std::vector<Observation> rows_;
};

/// Weighted histogram counts per unique covariate combination.
struct PooledHistogram {
  Grid grid;
  std::vector<CovariateVector> combinations;  // sorted
  Eigen::MatrixXd counts;                     // combinations x cells
  Eigen::VectorXd totals;
};

PooledHistogram bin_and_pool(const ObservationTable& data, const Grid& grid);

struct ModelSpec {
  std::vector<PartialEffectSpec> effects;  // an intercept is prepended when missing
  std::size_t spline_count = 12;
  std::size_t spline_degree = 3;
};

/// Builds the outcome basis on `grid` and the covariate bases from the table's columns.
std::shared_ptr<const AdditiveBasis> build_additive_basis(const ObservationTable& data,
                                                          const Grid& grid, const ModelSpec& spec);

/// What to do when the deviance has converged but some coefficients keep
/// drifting because empty cells separate part of the data.
enum class SeparationPolicy {
  error,   // throw SeparationError
  accept,  // stop at the converged deviance and flag the report
};

struct FitOptions {
  double penalty = 0.0;  // ridge weight on theta; nuisance intercepts are unpenalized
  std::size_t max_iterations = 100;
  double tolerance = 1e-8;  // relative change of the (penalized) deviance
  SeparationPolicy separation = SeparationPolicy::error;
};

struct ConvergenceReport {
  std::size_t iterations = 0;
  bool converged = false;
  bool separated = false;
  std::vector<double> deviance_trace;  // starting value first
  double score_norm = 0.0;
};

class FittedDensityModel {
 public:
  FittedDensityModel(std::shared_ptr<const AdditiveBasis> basis, Eigen::VectorXd theta,
                     Eigen::VectorXd nuisance, std::vector<CovariateVector> combinations,
                     Eigen::MatrixXd fisher, ConvergenceReport report, double penalty);

  const AdditiveBasis& basis() const { return *basis_; }
  const std::shared_ptr<const AdditiveBasis>& basis_ptr() const { return basis_; }
  const Grid& grid() const { return basis_->grid(); }
  const Eigen::VectorXd& theta() const { return theta_; }
  const Eigen::VectorXd& nuisance() const { return nuisance_; }
  const std::vector<CovariateVector>& combinations() const { return combinations_; }
  /// Observed information for theta with the nuisance intercepts profiled out.
  const Eigen::MatrixXd& fisher_information() const { return fisher_; }
  const ConvergenceReport& report() const { return report_; }
  double penalty() const { return penalty_; }

  /// Same bases and information, different coefficients (used for band draws).
  FittedDensityModel with_theta(Eigen::VectorXd theta) const;

  /// Clr of the conditional density at covariate row b(x).
  Eigen::VectorXd clr_values(const Eigen::VectorXd& covariate_row) const;

 private:
  std::shared_ptr<const AdditiveBasis> basis_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd nuisance_;
  std::vector<CovariateVector> combinations_;
  Eigen::MatrixXd fisher_;
  ConvergenceReport report_;
  double penalty_;
};

/// p_g proportional to width_g * exp(clr value at cell g).
Eigen::VectorXd class_probabilities(const AdditiveBasis& basis, const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& covariate_row);

/// Poisson IRLS with log link, log-width offsets and one free intercept per
/// covariate combination; equivalent to the multinomial maximum likelihood fit.
FittedDensityModel fit(const PooledHistogram& pooled, std::shared_ptr<const AdditiveBasis> basis,
                       const FitOptions& options = {});

FittedDensityModel fit_density_model(const ObservationTable& data, const Grid& grid,
                                     const ModelSpec& spec, const FitOptions& options = {});

/// sum_i w_i (clr_i(y_i) - log integral exp(clr_i)); the integral over the
/// continuous part uses Gauss-Legendre quadrature independent of the grid.
double bayes_loglik(const AdditiveBasis& basis, const Eigen::VectorXd& theta,
                    const ObservationTable& data);

/// sum_i sum_g n_ig (eta_ig - log sum_k width_k exp(eta_ik)).
double multinomial_loglik(const AdditiveBasis& basis, const Eigen::VectorXd& theta,
                          const PooledHistogram& pooled);

GridDensity predict_density(const FittedDensityModel& model, const CovariateVector& x);
GridDensity predict_density_row(const FittedDensityModel& model, const Eigen::VectorXd& covariate_row);

/// Clr contribution of effect j alone at the covariate value.
ClrFunction predict_partial(const FittedDensityModel& model, std::size_t j,
                            const CovariateValue& value);

/// Draws from N(theta_hat, I^-1) truncated by rejection to the (1 - alpha) Wald
/// ellipsoid. Draw b uses its own stream derived from (seed, b). alpha = 1 pins
/// every draw at theta_hat.
std::vector<Eigen::VectorXd> sample_theta(const FittedDensityModel& model, double alpha,
                                          std::size_t draws, std::uint64_t seed);

/// (theta - theta_hat)' I (theta - theta_hat)
double wald_statistic(const FittedDensityModel& model, const Eigen::VectorXd& theta);
double wald_radius(std::size_t dimension, double alpha);

}  // namespace cfdens
