#pragma once

#include "cfdens/measure_grid.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cfdens {

/// Clamped B-spline basis on [lower, upper] with equally spaced interior knots.
class BSplineBasis {
 public:
  BSplineBasis(double lower, double upper, std::size_t count, std::size_t degree);

  std::size_t size() const { return count_; }
  std::size_t degree() const { return degree_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Values of all basis functions at x; x is clamped into [lower, upper].
  Eigen::VectorXd evaluate(double x) const;

  /// Exact integral of basis function i over [lower, upper].
  double integral(std::size_t i) const;

 private:
  double lower_;
  double upper_;
  std::size_t count_;
  std::size_t degree_;
  std::vector<double> knots_;
};

using CovariateValue = std::variant<double, std::string>;
using CovariateVector = std::vector<CovariateValue>;

std::string to_string(const CovariateValue& value);

struct InterceptEffect {};

struct CategoricalEffect {
  std::vector<std::string> levels;
  std::string reference;
};

/// `count` B-spline functions of the given degree before the sum-to-zero constraint.
struct SmoothEffect {
  std::size_t count = 8;
  std::size_t degree = 3;
};

struct PartialEffectSpec {
  std::string covariate;  // unused for the intercept
  std::variant<InterceptEffect, CategoricalEffect, SmoothEffect> kind;

  static PartialEffectSpec intercept() { return {"(intercept)", InterceptEffect{}}; }
  static PartialEffectSpec categorical(std::string name, std::vector<std::string> levels,
                                       std::string reference) {
    return {std::move(name), CategoricalEffect{std::move(levels), std::move(reference)}};
  }
  static PartialEffectSpec smooth(std::string name, std::size_t count, std::size_t degree = 3) {
    return {std::move(name), SmoothEffect{count, degree}};
  }

  bool is_intercept() const { return std::holds_alternative<InterceptEffect>(kind); }
  void validate() const;
};

/// Clr-transformed outcome basis: B-splines over the continuous part and
/// indicators of the atoms, each centred to zero measure-integral, with one
/// linearly dependent column dropped.
class OutcomeBasis {
 public:
  const Grid& grid() const { return grid_; }
  std::size_t size() const { return static_cast<std::size_t>(matrix_.cols()); }
  std::size_t spline_count() const { return splines_ ? splines_->size() : 0; }
  std::size_t degree() const { return degree_; }

  /// Cells x columns.
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  ClrFunction column(std::size_t m) const;

  /// Basis row at an arbitrary point of the support (interval or atom location).
  Eigen::VectorXd evaluate(double y) const;

  friend OutcomeBasis build_outcome_basis(const Grid&, std::size_t, std::size_t);

 private:
  OutcomeBasis(Grid grid, std::optional<BSplineBasis> splines, std::size_t degree,
               Eigen::VectorXd offsets, Eigen::MatrixXd matrix)
      : grid_(std::move(grid)),
        splines_(std::move(splines)),
        degree_(degree),
        offsets_(std::move(offsets)),
        matrix_(std::move(matrix)) {}

  Grid grid_;
  std::optional<BSplineBasis> splines_;
  std::size_t degree_;
  Eigen::VectorXd offsets_;  // measure-means of the raw columns that are kept
  Eigen::MatrixXd matrix_;
};

/// `spline_count` applies to the continuous part; atoms get one indicator each.
/// The result has spline_count + atom_count - 1 columns.
OutcomeBasis build_outcome_basis(const Grid& grid, std::size_t spline_count,
                                 std::size_t degree = 3);

class CovariateBasis {
 public:
  const PartialEffectSpec& spec() const { return spec_; }
  std::size_t size() const { return size_; }

  /// Intercept ignores its argument.
  Eigen::VectorXd evaluate(const CovariateValue& value) const;

  /// Smooth effects: maps raw B-spline coefficients onto the constrained ones
  /// (count x count-1). Identity for the other kinds.
  const Eigen::MatrixXd& centering() const { return centering_; }

  friend CovariateBasis build_covariate_basis(const PartialEffectSpec&,
                                              std::span<const CovariateValue>);

 private:
  CovariateBasis(PartialEffectSpec spec, std::size_t size, std::optional<BSplineBasis> splines,
                 Eigen::MatrixXd centering)
      : spec_(std::move(spec)),
        size_(size),
        splines_(std::move(splines)),
        centering_(std::move(centering)) {}

  PartialEffectSpec spec_;
  std::size_t size_;
  std::optional<BSplineBasis> splines_;
  Eigen::MatrixXd centering_;
};

CovariateBasis build_covariate_basis(const PartialEffectSpec& spec,
                                     std::span<const CovariateValue> training_values);

/// The full additive tensor-product structure of one group's model.
/// `schema` names the covariate columns that CovariateVectors are aligned with.
class AdditiveBasis {
 public:
  AdditiveBasis(OutcomeBasis outcome, std::vector<CovariateBasis> effects,
                std::vector<std::string> schema);

  const OutcomeBasis& outcome() const { return outcome_; }
  const std::vector<CovariateBasis>& effects() const { return effects_; }
  const std::vector<std::string>& schema() const { return schema_; }
  const Grid& grid() const { return outcome_.grid(); }

  /// Length of b(x), i.e. the sum of d_j.
  std::size_t covariate_width() const { return covariate_width_; }
  /// R = covariate_width * d_T.
  std::size_t coefficient_count() const { return covariate_width_ * outcome_.size(); }
  /// First entry of effect j within b(x).
  std::size_t effect_offset(std::size_t j) const { return offsets_[j]; }
  std::size_t effect_index(const std::string& covariate) const;

  Eigen::VectorXd covariate_row(const CovariateVector& x) const;
  /// Value of effect j's basis at the covariate value, or zeros of width d_j.
  Eigen::VectorXd effect_row(std::size_t j, const CovariateValue& value) const;

  /// b(x) kron outcome basis: cells x R.
  Eigen::MatrixXd design(const Eigen::VectorXd& covariate_row) const;
  /// design(b) * theta without forming the block.
  Eigen::VectorXd linear_predictor(const Eigen::VectorXd& covariate_row,
                                   const Eigen::VectorXd& theta) const;

 private:
  OutcomeBasis outcome_;
  std::vector<CovariateBasis> effects_;
  std::vector<std::string> schema_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> columns_;  // schema column per effect (unused for the intercept)
  std::size_t covariate_width_ = 0;
};

Eigen::MatrixXd design_row(const AdditiveBasis& basis, const CovariateVector& x);

}  // namespace cfdens
