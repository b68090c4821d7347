#pragma once

#include "cfdens/density_regression.hpp"
#include "cfdens/measure_grid.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cfdens {

/// Weighted empirical covariate distribution, pooled over identical rows.
class CovariateSample {
 public:
  CovariateSample(std::vector<std::string> schema, const std::vector<CovariateVector>& rows,
                  const std::vector<double>& weights);

  static CovariateSample from_table(const ObservationTable& data);

  const std::vector<std::string>& schema() const { return schema_; }
  /// Unique rows in sorted order.
  const std::vector<CovariateVector>& rows() const { return rows_; }
  /// Normalized to sum to one.
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return rows_.size(); }

  std::size_t column_index(const std::string& covariate) const;

 private:
  std::vector<std::string> schema_;
  std::vector<CovariateVector> rows_;
  std::vector<double> weights_;
};

/// Cellwise numerator / denominator; cells whose denominator is below the
/// validity floor are masked and hold NaN.
class RatioFunction {
 public:
  static constexpr double kValidityFloor = 1e-12;

  static RatioFunction ratio(const GridDensity& numerator, const GridDensity& denominator);
  RatioFunction(Grid grid, Eigen::VectorXd values, std::vector<bool> valid);

  const Grid& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  const std::vector<bool>& valid() const { return valid_; }
  double operator[](std::size_t cell) const { return values_[static_cast<Eigen::Index>(cell)]; }
  bool is_valid(std::size_t cell) const { return valid_[cell]; }

 private:
  Grid grid_;
  Eigen::VectorXd values_;
  std::vector<bool> valid_;
};

/// Plug-in counterfactual density: the model's conditional densities averaged
/// over the sample's empirical covariate distribution.
GridDensity counterfactual_density(const FittedDensityModel& model, const CovariateSample& sample);

/// f11 / f01
RatioFunction distribution_effect(const GridDensity& f11, const GridDensity& f01);
/// f01 / f00
RatioFunction covariate_effect(const GridDensity& f01, const GridDensity& f00);
/// f11 / f00
RatioFunction total_effect(const GridDensity& f11, const GridDensity& f00);

struct ProductMeasureOptions {
  std::size_t exact_pair_limit = 10'000'000;
  std::size_t monte_carlo_pairs = 1'000'000;
  std::uint64_t seed = 0;
};

/// Average of the model's conditional density over the product of the joint
/// distribution of all covariates but `covariate` in `rest_sample` and the
/// marginal of `covariate` in `marginal_sample`.
GridDensity product_counterfactual_density(const FittedDensityModel& model,
                                           const CovariateSample& rest_sample,
                                           const CovariateSample& marginal_sample,
                                           const std::string& covariate,
                                           const ProductMeasureOptions& options = {});

/// Contribution of one covariate to the covariate effect (control model, the
/// covariate's marginal moved to the treated group).
RatioFunction marginal_effect_ce_j(const FittedDensityModel& model_0, const CovariateSample& sample_0,
                                   const CovariateSample& sample_1, const std::string& covariate,
                                   const ProductMeasureOptions& options = {});

/// Interaction-free shortcut: mixtures of (intercept + effect of the covariate)
/// under each group's marginal of that covariate.
RatioFunction marginal_effect_ce_j_additive(const FittedDensityModel& model_0,
                                            const CovariateSample& sample_0,
                                            const CovariateSample& sample_1,
                                            const std::string& covariate);

/// Contribution of one covariate to the distribution effect.
RatioFunction marginal_effect_de_j(const FittedDensityModel& model_1, const FittedDensityModel& model_0,
                                   const CovariateSample& sample_1, const CovariateSample& sample_0,
                                   const std::string& covariate,
                                   const ProductMeasureOptions& options = {});

enum class EffectKind { distribution, covariate, total, covariate_j, distribution_j };

struct EffectRequest {
  EffectKind kind = EffectKind::distribution;
  std::string covariate;  // for the per-covariate kinds
};

std::string effect_name(const EffectRequest& request);

RatioFunction compute_effect(const FittedDensityModel& model_1, const FittedDensityModel& model_0,
                             const CovariateSample& sample_1, const CovariateSample& sample_0,
                             const EffectRequest& request,
                             const ProductMeasureOptions& options = {});

struct EffectBands {
  RatioFunction estimate;
  std::vector<RatioFunction> draws;
};

/// Pointwise bands: each draw resamples both groups' coefficients independently
/// from their Wald regions and recomputes the effect.
EffectBands effect_bands(const FittedDensityModel& model_1, const FittedDensityModel& model_0,
                         const CovariateSample& sample_1, const CovariateSample& sample_0,
                         const EffectRequest& request, double alpha, std::size_t draws,
                         std::uint64_t seed, const ProductMeasureOptions& options = {});

enum class DensityMetric { tv };

double scalar_density_effect(const GridDensity& f1, const GridDensity& f0,
                             DensityMetric metric = DensityMetric::tv);

/// Mean of the outcome under f; atoms contribute location * value * weight.
double mean_functional(const GridDensity& f);

}  // namespace cfdens
