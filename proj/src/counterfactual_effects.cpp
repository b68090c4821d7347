#include "cfdens/counterfactual_effects.hpp"

#include "cfdens/errors.hpp"
#include "cfdens/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace cfdens {

CovariateSample::CovariateSample(std::vector<std::string> schema,
                                 const std::vector<CovariateVector>& rows,
                                 const std::vector<double>& weights)
    : schema_(std::move(schema)) {
  if (rows.size() != weights.size()) throw StructuralError("covariate sample: rows and weights differ in length");
  if (rows.empty()) throw DataError("covariate sample: no rows");
  std::map<CovariateVector, double> pooled;
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != schema_.size()) throw StructuralError("covariate sample: row does not match the schema");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw DataError("covariate sample: weights must be positive");
    }
    pooled[rows[i]] += weights[i];
    total += weights[i];
  }
  for (auto& [row, w] : pooled) {
    rows_.push_back(row);
    weights_.push_back(w / total);
  }
}

CovariateSample CovariateSample::from_table(const ObservationTable& data) {
  std::vector<CovariateVector> rows;
  std::vector<double> weights;
  rows.reserve(data.size());
  weights.reserve(data.size());
  for (const auto& row : data.rows()) {
    rows.push_back(row.covariates);
    weights.push_back(row.weight);
  }
  return CovariateSample(data.schema(), rows, weights);
}

std::size_t CovariateSample::column_index(const std::string& covariate) const {
  const auto it = std::find(schema_.begin(), schema_.end(), covariate);
  if (it == schema_.end()) throw ConfigError("unknown covariate '" + covariate + "'");
  return static_cast<std::size_t>(it - schema_.begin());
}

RatioFunction::RatioFunction(Grid grid, Eigen::VectorXd values, std::vector<bool> valid)
    : grid_(std::move(grid)), values_(std::move(values)), valid_(std::move(valid)) {
  if (static_cast<std::size_t>(values_.size()) != grid_.size() || valid_.size() != grid_.size()) {
    throw StructuralError("ratio function: length does not match the grid");
  }
}

RatioFunction RatioFunction::ratio(const GridDensity& numerator, const GridDensity& denominator) {
  require_same_grid(numerator.grid(), denominator.grid(), "ratio");
  const auto n = static_cast<Eigen::Index>(numerator.size());
  Eigen::VectorXd values(n);
  std::vector<bool> valid(static_cast<std::size_t>(n));
  for (Eigen::Index g = 0; g < n; ++g) {
    const double den = denominator.values()[g];
    const bool ok = den >= kValidityFloor;
    valid[static_cast<std::size_t>(g)] = ok;
    values[g] = ok ? numerator.values()[g] / den : std::numeric_limits<double>::quiet_NaN();
  }
  return RatioFunction(numerator.grid(), std::move(values), std::move(valid));
}

namespace {

void require_schema(const FittedDensityModel& model, const CovariateSample& sample) {
  if (model.basis().schema() != sample.schema()) {
    throw StructuralError("covariate sample schema does not match the model");
  }
}

// Accumulates weighted densities from clr values without renormalizing the sum
// until the end.
class MixtureAccumulator {
 public:
  explicit MixtureAccumulator(const Grid& grid)
      : grid_(grid), sum_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()))) {}

  void add(double weight, const Eigen::VectorXd& clr_values) {
    const double shift = clr_values.maxCoeff();
    scratch_ = (clr_values.array() - shift).exp().matrix();
    sum_ += (weight / scratch_.dot(grid_.widths())) * scratch_;
  }

  GridDensity result() const { return GridDensity::normalized(grid_, sum_); }

 private:
  const Grid& grid_;
  Eigen::VectorXd sum_;
  Eigen::VectorXd scratch_;
};

}  // namespace

GridDensity counterfactual_density(const FittedDensityModel& model, const CovariateSample& sample) {
  require_schema(model, sample);
  MixtureAccumulator mix(model.grid());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    mix.add(sample.weights()[i], model.clr_values(model.basis().covariate_row(sample.rows()[i])));
  }
  return mix.result();
}

RatioFunction distribution_effect(const GridDensity& f11, const GridDensity& f01) {
  return RatioFunction::ratio(f11, f01);
}

RatioFunction covariate_effect(const GridDensity& f01, const GridDensity& f00) {
  return RatioFunction::ratio(f01, f00);
}

RatioFunction total_effect(const GridDensity& f11, const GridDensity& f00) {
  return RatioFunction::ratio(f11, f00);
}

GridDensity product_counterfactual_density(const FittedDensityModel& model,
                                           const CovariateSample& rest_sample,
                                           const CovariateSample& marginal_sample,
                                           const std::string& covariate,
                                           const ProductMeasureOptions& options) {
  require_schema(model, rest_sample);
  require_schema(model, marginal_sample);
  const auto column = rest_sample.column_index(covariate);
  const auto& basis = model.basis();

  // Effects driven by the covariate; the remaining effects only see x_{-j}.
  std::vector<std::size_t> own;
  for (std::size_t j = 0; j < basis.effects().size(); ++j) {
    const auto& spec = basis.effects()[j].spec();
    if (!spec.is_intercept() && spec.covariate == covariate) own.push_back(j);
  }
  auto own_row = [&](const CovariateValue& value) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.covariate_width()));
    for (auto j : own) {
      row.segment(static_cast<Eigen::Index>(basis.effect_offset(j)),
                  static_cast<Eigen::Index>(basis.effects()[j].size())) = basis.effect_row(j, value);
    }
    return row;
  };

  // Joint distribution of x_{-j}: pool rows after blanking the covariate.
  std::map<CovariateVector, double> rest;
  for (std::size_t i = 0; i < rest_sample.size(); ++i) {
    auto key = rest_sample.rows()[i];
    key[column] = CovariateValue{std::string{}};
    rest[key] += rest_sample.weights()[i];
  }
  std::map<CovariateValue, double> marginal;
  for (std::size_t i = 0; i < marginal_sample.size(); ++i) {
    marginal[marginal_sample.rows()[i][column]] += marginal_sample.weights()[i];
  }

  std::vector<Eigen::VectorXd> rest_clr;
  std::vector<double> rest_w;
  for (const auto& [key, w] : rest) {
    // Any valid value fills the blanked column; its contribution is removed.
    auto x = key;
    x[column] = marginal.begin()->first;
    const Eigen::VectorXd row = basis.covariate_row(x) - own_row(x[column]);
    rest_clr.push_back(model.clr_values(row));
    rest_w.push_back(w);
  }
  std::vector<Eigen::VectorXd> own_clr;
  std::vector<double> own_w;
  for (const auto& [value, w] : marginal) {
    own_clr.push_back(model.clr_values(own_row(value)));
    own_w.push_back(w);
  }

  MixtureAccumulator mix(model.grid());
  const double pairs = static_cast<double>(rest_clr.size()) * static_cast<double>(own_clr.size());
  if (pairs <= static_cast<double>(options.exact_pair_limit)) {
    for (std::size_t a = 0; a < rest_clr.size(); ++a) {
      for (std::size_t b = 0; b < own_clr.size(); ++b) {
        mix.add(rest_w[a] * own_w[b], rest_clr[a] + own_clr[b]);
      }
    }
  } else {
    std::mt19937_64 rng(options.seed);
    std::discrete_distribution<std::size_t> pick_rest(rest_w.begin(), rest_w.end());
    std::discrete_distribution<std::size_t> pick_own(own_w.begin(), own_w.end());
    const double w = 1.0 / static_cast<double>(options.monte_carlo_pairs);
    for (std::size_t s = 0; s < options.monte_carlo_pairs; ++s) {
      const auto a = pick_rest(rng);
      const auto b = pick_own(rng);
      mix.add(w, rest_clr[a] + own_clr[b]);
    }
  }
  return mix.result();
}

RatioFunction marginal_effect_ce_j(const FittedDensityModel& model_0, const CovariateSample& sample_0,
                                   const CovariateSample& sample_1, const std::string& covariate,
                                   const ProductMeasureOptions& options) {
  const auto numerator = product_counterfactual_density(model_0, sample_0, sample_1, covariate, options);
  return RatioFunction::ratio(numerator, counterfactual_density(model_0, sample_0));
}

RatioFunction marginal_effect_ce_j_additive(const FittedDensityModel& model_0,
                                            const CovariateSample& sample_0,
                                            const CovariateSample& sample_1,
                                            const std::string& covariate) {
  require_schema(model_0, sample_0);
  require_schema(model_0, sample_1);
  const auto column = sample_0.column_index(covariate);
  const auto& basis = model_0.basis();
  Eigen::VectorXd intercept_row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.covariate_width()));
  std::vector<std::size_t> own;
  for (std::size_t j = 0; j < basis.effects().size(); ++j) {
    const auto& spec = basis.effects()[j].spec();
    if (spec.is_intercept()) {
      intercept_row.segment(static_cast<Eigen::Index>(basis.effect_offset(j)), 1).setOnes();
    } else if (spec.covariate == covariate) {
      own.push_back(j);
    }
  }
  auto mixture = [&](const CovariateSample& sample) {
    std::map<CovariateValue, double> marginal;
    for (std::size_t i = 0; i < sample.size(); ++i) marginal[sample.rows()[i][column]] += sample.weights()[i];
    MixtureAccumulator mix(model_0.grid());
    for (const auto& [value, w] : marginal) {
      Eigen::VectorXd row = intercept_row;
      for (auto j : own) {
        row.segment(static_cast<Eigen::Index>(basis.effect_offset(j)),
                    static_cast<Eigen::Index>(basis.effects()[j].size())) = basis.effect_row(j, value);
      }
      mix.add(w, model_0.clr_values(row));
    }
    return mix.result();
  };
  return RatioFunction::ratio(mixture(sample_1), mixture(sample_0));
}

RatioFunction marginal_effect_de_j(const FittedDensityModel& model_1, const FittedDensityModel& model_0,
                                   const CovariateSample& sample_1, const CovariateSample& sample_0,
                                   const std::string& covariate,
                                   const ProductMeasureOptions& options) {
  require_same_grid(model_1.grid(), model_0.grid(), "marginal_effect_de_j");
  const auto numerator = product_counterfactual_density(model_1, sample_1, sample_0, covariate, options);
  return RatioFunction::ratio(numerator, counterfactual_density(model_0, sample_0));
}

std::string effect_name(const EffectRequest& request) {
  switch (request.kind) {
    case EffectKind::distribution: return "DE";
    case EffectKind::covariate: return "CE";
    case EffectKind::total: return "TE";
    case EffectKind::covariate_j: return "CE_" + request.covariate;
    case EffectKind::distribution_j: return "DE_" + request.covariate;
  }
  return "unknown";
}

RatioFunction compute_effect(const FittedDensityModel& model_1, const FittedDensityModel& model_0,
                             const CovariateSample& sample_1, const CovariateSample& sample_0,
                             const EffectRequest& request, const ProductMeasureOptions& options) {
  switch (request.kind) {
    case EffectKind::distribution:
      return distribution_effect(counterfactual_density(model_1, sample_1),
                                 counterfactual_density(model_0, sample_1));
    case EffectKind::covariate:
      return covariate_effect(counterfactual_density(model_0, sample_1),
                              counterfactual_density(model_0, sample_0));
    case EffectKind::total:
      return total_effect(counterfactual_density(model_1, sample_1),
                          counterfactual_density(model_0, sample_0));
    case EffectKind::covariate_j:
      return marginal_effect_ce_j(model_0, sample_0, sample_1, request.covariate, options);
    case EffectKind::distribution_j:
      return marginal_effect_de_j(model_1, model_0, sample_1, sample_0, request.covariate, options);
  }
  throw ConfigError("unknown effect kind");
}

EffectBands effect_bands(const FittedDensityModel& model_1, const FittedDensityModel& model_0,
                         const CovariateSample& sample_1, const CovariateSample& sample_0,
                         const EffectRequest& request, double alpha, std::size_t draws,
                         std::uint64_t seed, const ProductMeasureOptions& options) {
  EffectBands bands{compute_effect(model_1, model_0, sample_1, sample_0, request, options), {}};
  const auto theta_1 = sample_theta(model_1, alpha, draws, derive_seed(seed, 1));
  const auto theta_0 = sample_theta(model_0, alpha, draws, derive_seed(seed, 0));
  bands.draws.reserve(draws);
  for (std::size_t b = 0; b < draws; ++b) {
    bands.draws.push_back(compute_effect(model_1.with_theta(theta_1[b]), model_0.with_theta(theta_0[b]),
                                         sample_1, sample_0, request, options));
  }
  return bands;
}

double scalar_density_effect(const GridDensity& f1, const GridDensity& f0, DensityMetric metric) {
  switch (metric) {
    case DensityMetric::tv: return tv_distance(f1, f0);
  }
  throw ConfigError("unknown density metric");
}

double mean_functional(const GridDensity& f) {
  return integrate(f.grid().centers().cwiseProduct(f.values()), f.grid());
}

}  // namespace cfdens
