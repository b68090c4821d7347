#include "cfdens/density_regression.hpp"

#include "cfdens/errors.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace cfdens {

void ObservationTable::add(double outcome, CovariateVector covariates, double weight) {
  if (covariates.size() != schema_.size()) {
    throw DataError("row " + std::to_string(rows_.size()) + ": expected " +
                    std::to_string(schema_.size()) + " covariates, got " +
                    std::to_string(covariates.size()));
  }
  if (!(weight > 0.0) || !std::isfinite(weight)) {
    throw DataError("row " + std::to_string(rows_.size()) + ": weight must be positive");
  }
  if (!std::isfinite(outcome)) {
    throw DataError("row " + std::to_string(rows_.size()) + ": outcome is not finite");
  }
  rows_.push_back({outcome, std::move(covariates), weight});
}

std::size_t ObservationTable::column_index(const std::string& name) const {
  const auto it = std::find(schema_.begin(), schema_.end(), name);
  if (it == schema_.end()) throw DataError("missing covariate column '" + name + "'");
  return static_cast<std::size_t>(it - schema_.begin());
}

std::vector<CovariateValue> ObservationTable::column(const std::string& name) const {
  const auto c = column_index(name);
  std::vector<CovariateValue> out;
  out.reserve(rows_.size());
  for (const auto& row : rows_) out.push_back(row.covariates[c]);
  return out;
}

PooledHistogram bin_and_pool(const ObservationTable& data, const Grid& grid) {
  std::map<CovariateVector, std::size_t> index;
  std::vector<std::size_t> placement;  // cell per row
  placement.reserve(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& row = data.rows()[r];
    const auto cell = grid.locate(row.outcome);
    if (!cell) {
      std::ostringstream os;
      os << "row " << r << ": outcome " << row.outcome << " is outside the support";
      throw DataError(os.str());
    }
    index.try_emplace(row.covariates, 0);
    placement.push_back(*cell);
  }
  // Sorted combination order makes the result independent of row order.
  std::vector<CovariateVector> combinations;
  combinations.reserve(index.size());
  for (auto& [key, i] : index) {
    i = combinations.size();
    combinations.push_back(key);
  }
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(combinations.size()),
                                                 static_cast<Eigen::Index>(grid.size()));
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& row = data.rows()[r];
    const auto i = index.at(row.covariates);
    counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(placement[r])) += row.weight;
  }
  Eigen::VectorXd totals = counts.rowwise().sum();
  return {grid, std::move(combinations), std::move(counts), std::move(totals)};
}

std::shared_ptr<const AdditiveBasis> build_additive_basis(const ObservationTable& data,
                                                          const Grid& grid, const ModelSpec& spec) {
  auto outcome = build_outcome_basis(grid, spec.spline_count, spec.spline_degree);
  std::vector<PartialEffectSpec> effects = spec.effects;
  if (effects.empty() || !effects.front().is_intercept()) {
    effects.insert(effects.begin(), PartialEffectSpec::intercept());
  }
  std::vector<CovariateBasis> bases;
  for (const auto& effect : effects) {
    if (effect.is_intercept()) {
      bases.push_back(build_covariate_basis(effect, {}));
    } else {
      const auto values = data.column(effect.covariate);
      bases.push_back(build_covariate_basis(effect, values));
    }
  }
  return std::make_shared<const AdditiveBasis>(std::move(outcome), std::move(bases), data.schema());
}

FittedDensityModel::FittedDensityModel(std::shared_ptr<const AdditiveBasis> basis,
                                       Eigen::VectorXd theta, Eigen::VectorXd nuisance,
                                       std::vector<CovariateVector> combinations,
                                       Eigen::MatrixXd fisher, ConvergenceReport report,
                                       double penalty)
    : basis_(std::move(basis)),
      theta_(std::move(theta)),
      nuisance_(std::move(nuisance)),
      combinations_(std::move(combinations)),
      fisher_(std::move(fisher)),
      report_(std::move(report)),
      penalty_(penalty) {
  if (theta_.size() != static_cast<Eigen::Index>(basis_->coefficient_count())) {
    throw StructuralError("fitted model: coefficient vector does not match the basis");
  }
}

FittedDensityModel FittedDensityModel::with_theta(Eigen::VectorXd theta) const {
  FittedDensityModel copy = *this;
  if (theta.size() != theta_.size()) {
    throw StructuralError("fitted model: replacement coefficients have the wrong length");
  }
  copy.theta_ = std::move(theta);
  return copy;
}

Eigen::VectorXd FittedDensityModel::clr_values(const Eigen::VectorXd& covariate_row) const {
  return basis_->linear_predictor(covariate_row, theta_);
}

Eigen::VectorXd class_probabilities(const AdditiveBasis& basis, const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& covariate_row) {
  const Eigen::VectorXd eta = basis.linear_predictor(covariate_row, theta);
  const Eigen::ArrayXd unnormalized =
      basis.grid().widths().array() * (eta.array() - eta.maxCoeff()).exp();
  return (unnormalized / unnormalized.sum()).matrix();
}

namespace {

struct PoissonState {
  Eigen::VectorXd nu;
  Eigen::VectorXd theta;
  Eigen::MatrixXd mu;  // combinations x cells
  double deviance = 0.0;
};

// Sum over combinations of kron(b, v) for per-combination cell vectors.
class PoissonProblem {
 public:
  PoissonProblem(const PooledHistogram& pooled, const AdditiveBasis& basis, double penalty)
      : pooled_(pooled), basis_(basis), penalty_(penalty) {
    const auto n_comb = static_cast<Eigen::Index>(pooled.combinations.size());
    rows_.resize(basis.covariate_width(), n_comb);
    for (Eigen::Index i = 0; i < n_comb; ++i) {
      rows_.col(i) = basis.covariate_row(pooled.combinations[static_cast<std::size_t>(i)]);
    }
    log_widths_ = basis.grid().widths().array().log().matrix();
  }

  Eigen::Index combinations() const { return rows_.cols(); }
  Eigen::Index coefficients() const {
    return static_cast<Eigen::Index>(basis_.coefficient_count());
  }

  void evaluate(PoissonState& state) const {
    const auto& b = basis_.outcome().matrix();
    const Eigen::Index d_t = b.cols();
    const Eigen::Map<const Eigen::MatrixXd> coef(state.theta.data(), d_t, rows_.rows());
    // eta = nu_i + log width_g + B coef b_i, for all combinations at once.
    Eigen::MatrixXd eta = (b * (coef * rows_)).transpose();
    eta.colwise() += state.nu;
    eta.rowwise() += log_widths_.transpose();
    state.mu = eta.array().exp().matrix();
    double deviance = 0.0;
    const auto& y = pooled_.counts;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      for (Eigen::Index g = 0; g < y.cols(); ++g) {
        const double yi = y(i, g);
        const double mi = state.mu(i, g);
        deviance += (yi > 0.0 ? yi * (std::log(yi) - eta(i, g)) : 0.0) - (yi - mi);
      }
    }
    state.deviance = 2.0 * deviance + 2.0 * penalty_ * state.theta.squaredNorm();
  }

  struct Newton {
    Eigen::VectorXd score_nu;
    Eigen::VectorXd score_theta;
    Eigen::VectorXd info_nu;     // diagonal block
    Eigen::MatrixXd cross;       // coefficients x combinations
    Eigen::MatrixXd info_theta;  // coefficients x coefficients
    Eigen::MatrixXd profiled;    // Schur complement
  };

  Newton derivatives(const PoissonState& state) const {
    const auto& b = basis_.outcome().matrix();
    const Eigen::Index d_t = b.cols();
    const Eigen::Index width = rows_.rows();
    const Eigen::Index r = coefficients();
    Newton out;
    const Eigen::MatrixXd resid = pooled_.counts - state.mu;
    out.score_nu = resid.rowwise().sum();
    out.info_nu = state.mu.rowwise().sum();
    out.score_theta = Eigen::VectorXd::Zero(r);
    out.cross = Eigen::MatrixXd::Zero(r, combinations());
    out.info_theta = Eigen::MatrixXd::Zero(r, r);
    for (Eigen::Index i = 0; i < combinations(); ++i) {
      const Eigen::VectorXd bi = rows_.col(i);
      const Eigen::VectorXd bt_resid = b.transpose() * resid.row(i).transpose();
      const Eigen::VectorXd bt_mu = b.transpose() * state.mu.row(i).transpose();
      const Eigen::MatrixXd btwb = b.transpose() * state.mu.row(i).transpose().asDiagonal() * b;
      for (Eigen::Index l = 0; l < width; ++l) {
        if (bi[l] == 0.0) continue;
        out.score_theta.segment(l * d_t, d_t) += bi[l] * bt_resid;
        out.cross.col(i).segment(l * d_t, d_t) = bi[l] * bt_mu;
        for (Eigen::Index k = 0; k < width; ++k) {
          if (bi[k] == 0.0) continue;
          out.info_theta.block(l * d_t, k * d_t, d_t, d_t) += (bi[l] * bi[k]) * btwb;
        }
      }
    }
    out.score_theta -= 2.0 * penalty_ * state.theta;
    out.info_theta.diagonal().array() += 2.0 * penalty_;
    out.profiled = out.info_theta -
                   out.cross * out.info_nu.cwiseInverse().asDiagonal() * out.cross.transpose();
    out.profiled = 0.5 * (out.profiled + out.profiled.transpose()).eval();
    return out;
  }

 private:
  const PooledHistogram& pooled_;
  const AdditiveBasis& basis_;
  double penalty_;
  Eigen::MatrixXd rows_;  // covariate rows as columns
  Eigen::VectorXd log_widths_;
};

std::string trace_text(const std::vector<double>& trace) {
  std::ostringstream os;
  os.precision(10);
  for (std::size_t k = 0; k < trace.size(); ++k) os << (k ? ", " : "") << trace[k];
  return os.str();
}

}  // namespace

FittedDensityModel fit(const PooledHistogram& pooled, std::shared_ptr<const AdditiveBasis> basis,
                       const FitOptions& options) {
  if (!(pooled.grid == basis->grid())) throw StructuralError("fit: histogram and basis grids differ");
  if (!(options.penalty >= 0.0)) throw ConfigError("fit: penalty must be nonnegative");
  if (pooled.combinations.empty() || !(pooled.totals.sum() > 0.0)) {
    throw DataError("fit: no positive counts");
  }

  PoissonProblem problem(pooled, *basis, options.penalty);
  const Eigen::Index r = problem.coefficients();

  PoissonState state;
  state.theta = Eigen::VectorXd::Zero(r);
  state.nu = (pooled.totals.array() / basis->grid().total_mass()).log().matrix();
  problem.evaluate(state);

  ConvergenceReport report;
  report.deviance_trace.push_back(state.deviance);

  constexpr double kStepTolerance = 1e-6;
  constexpr double kSeparationStep = 1e-2;
  constexpr std::size_t kFlatIterations = 3;
  std::size_t flat_large_steps = 0;

  auto on_separation = [&]() {
    if (options.separation == SeparationPolicy::error) {
      throw SeparationError(
          "fit: coefficients diverge while the deviance is flat (empty cells separate the data); "
          "refit with penalty > 0");
    }
    report.converged = true;
    report.separated = true;
  };

  for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
    const auto newton = problem.derivatives(state);
    const Eigen::VectorXd rhs =
        newton.score_theta - newton.cross * newton.score_nu.cwiseQuotient(newton.info_nu);
    Eigen::VectorXd step_theta;
    Eigen::LLT<Eigen::MatrixXd> llt(newton.profiled);
    if (llt.info() == Eigen::Success) {
      step_theta = llt.solve(rhs);
    } else {
      // Directions with vanishing information (diverging coefficients) are left alone.
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(newton.profiled);
      const double cutoff = 1e-12 * std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
      Eigen::VectorXd inverse = Eigen::VectorXd::Zero(r);
      for (Eigen::Index k = 0; k < r; ++k) {
        if (eig.eigenvalues()[k] > cutoff) inverse[k] = 1.0 / eig.eigenvalues()[k];
      }
      if (inverse.isZero()) throw NumericalError("fit: information matrix is zero");
      step_theta = eig.eigenvectors() * inverse.asDiagonal() * (eig.eigenvectors().transpose() * rhs);
    }
    const Eigen::VectorXd step_nu =
        (newton.score_nu - newton.cross.transpose() * step_theta).cwiseQuotient(newton.info_nu);
    const double step_size = std::max(step_theta.size() ? step_theta.cwiseAbs().maxCoeff() : 0.0,
                                      step_nu.cwiseAbs().maxCoeff());

    PoissonState next;
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      next.theta = state.theta + scale * step_theta;
      next.nu = state.nu + scale * step_nu;
      problem.evaluate(next);
      if (std::isfinite(next.deviance) && next.deviance <= state.deviance) {
        improved = true;
        break;
      }
    }
    report.iterations = iter;
    if (!improved) {
      // No decrease along the Newton direction: the deviance is at its numerical minimum.
      if (step_size < kSeparationStep) {
        report.converged = true;
      } else {
        on_separation();
      }
      break;
    }
    const double change = std::abs(state.deviance - next.deviance) / (std::abs(next.deviance) + 0.1);
    state = std::move(next);
    report.deviance_trace.push_back(state.deviance);

    if (change < options.tolerance) {
      if (scale * step_size < kStepTolerance) {
        report.converged = true;
        break;
      }
      if (scale * step_size > kSeparationStep && ++flat_large_steps >= kFlatIterations) {
        on_separation();
        break;
      }
    } else {
      flat_large_steps = 0;
    }
  }

  if (!report.converged) {
    throw ConvergenceError("fit: no convergence after " + std::to_string(report.iterations) +
                               " iterations; deviance trace: " + trace_text(report.deviance_trace),
                           report.deviance_trace);
  }

  const auto final_newton = problem.derivatives(state);
  report.score_norm = std::sqrt(final_newton.score_theta.squaredNorm() +
                                final_newton.score_nu.squaredNorm());
  return FittedDensityModel(std::move(basis), std::move(state.theta), std::move(state.nu),
                            pooled.combinations, final_newton.profiled, std::move(report),
                            options.penalty);
}

FittedDensityModel fit_density_model(const ObservationTable& data, const Grid& grid,
                                     const ModelSpec& spec, const FitOptions& options) {
  auto basis = build_additive_basis(data, grid, spec);
  return fit(bin_and_pool(data, grid), std::move(basis), options);
}

double bayes_loglik(const AdditiveBasis& basis, const Eigen::VectorXd& theta,
                    const ObservationTable& data) {
  const auto& outcome = basis.outcome();
  const auto& measure = basis.grid().measure();
  const Eigen::Index d_t = static_cast<Eigen::Index>(outcome.size());
  const Eigen::Map<const Eigen::MatrixXd> coef(theta.data(), d_t,
                                               static_cast<Eigen::Index>(basis.covariate_width()));

  // Composite 15-point Gauss-Legendre over the continuous part, independent of the grid.
  std::vector<double> nodes, weights;
  if (const auto& interval = measure.interval()) {
    constexpr int kPanels = 256;
    using rule = boost::math::quadrature::gauss<double, 15>;
    const double h = (interval->upper - interval->lower) / kPanels;
    for (int p = 0; p < kPanels; ++p) {
      const double left = interval->lower + h * p;
      const double mid = left + 0.5 * h;
      const auto& abscissa = rule::abscissa();
      const auto& weight = rule::weights();
      for (std::size_t k = 0; k < abscissa.size(); ++k) {
        const double offsets[2] = {abscissa[k], -abscissa[k]};
        for (int s = 0; s < (abscissa[k] == 0.0 ? 1 : 2); ++s) {
          nodes.push_back(mid + 0.5 * h * offsets[s]);
          weights.push_back(0.5 * h * weight[k]);
        }
      }
    }
  }
  for (const auto& atom : measure.atoms()) {
    nodes.push_back(atom.location);
    weights.push_back(atom.weight);
  }
  Eigen::MatrixXd node_basis(static_cast<Eigen::Index>(nodes.size()), d_t);
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    node_basis.row(static_cast<Eigen::Index>(q)) = outcome.evaluate(nodes[q]).transpose();
  }
  const Eigen::Map<const Eigen::VectorXd> node_weights(weights.data(), static_cast<Eigen::Index>(weights.size()));

  std::map<CovariateVector, std::pair<Eigen::VectorXd, double>> cache;  // (coef * b, log normalizer)
  double total = 0.0;
  for (const auto& row : data.rows()) {
    auto it = cache.find(row.covariates);
    if (it == cache.end()) {
      const Eigen::VectorXd weights_t = coef * basis.covariate_row(row.covariates);
      const Eigen::VectorXd values = node_basis * weights_t;
      const double shift = values.size() ? values.maxCoeff() : 0.0;
      const double log_norm =
          shift + std::log(node_weights.dot((values.array() - shift).exp().matrix()));
      it = cache.emplace(row.covariates, std::make_pair(weights_t, log_norm)).first;
    }
    total += row.weight * (outcome.evaluate(row.outcome).dot(it->second.first) - it->second.second);
  }
  return total;
}

double multinomial_loglik(const AdditiveBasis& basis, const Eigen::VectorXd& theta,
                          const PooledHistogram& pooled) {
  require_same_grid(basis.grid(), pooled.grid, "multinomial_loglik");
  const auto& widths = basis.grid().widths();
  double total = 0.0;
  for (std::size_t i = 0; i < pooled.combinations.size(); ++i) {
    const Eigen::VectorXd eta =
        basis.linear_predictor(basis.covariate_row(pooled.combinations[i]), theta);
    const double shift = eta.maxCoeff();
    const double log_norm = shift + std::log(widths.dot((eta.array() - shift).exp().matrix()));
    const auto counts = pooled.counts.row(static_cast<Eigen::Index>(i));
    total += counts.dot(eta) - counts.sum() * log_norm;
  }
  return total;
}

GridDensity predict_density_row(const FittedDensityModel& model, const Eigen::VectorXd& covariate_row) {
  return exp_normalize(model.grid(), model.clr_values(covariate_row));
}

GridDensity predict_density(const FittedDensityModel& model, const CovariateVector& x) {
  return clr_inverse(ClrFunction(model.grid(), model.clr_values(model.basis().covariate_row(x))));
}

ClrFunction predict_partial(const FittedDensityModel& model, std::size_t j,
                            const CovariateValue& value) {
  const auto& basis = model.basis();
  if (j >= basis.effects().size()) throw ConfigError("predict_partial: unknown effect index");
  Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.covariate_width()));
  row.segment(static_cast<Eigen::Index>(basis.effect_offset(j)),
              static_cast<Eigen::Index>(basis.effects()[j].size())) = basis.effect_row(j, value);
  return ClrFunction(model.grid(), model.clr_values(row));
}

double wald_statistic(const FittedDensityModel& model, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd d = theta - model.theta();
  return d.dot(model.fisher_information() * d);
}

double wald_radius(std::size_t dimension, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (alpha == 1.0 || dimension == 0) return 0.0;
  return boost::math::quantile(boost::math::chi_squared(static_cast<double>(dimension)), 1.0 - alpha);
}

std::vector<Eigen::VectorXd> sample_theta(const FittedDensityModel& model, double alpha,
                                          std::size_t draws, std::uint64_t seed) {
  const auto r = model.theta().size();
  const double radius = wald_radius(static_cast<std::size_t>(r), alpha);
  std::vector<Eigen::VectorXd> out;
  if (draws == 0) return out;
  out.reserve(draws);
  if (radius == 0.0) {
    out.assign(draws, model.theta());
    return out;
  }

  Eigen::MatrixXd info = model.fisher_information();
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    info.diagonal().array() += 1e-10;
    llt.compute(info);
  }
  if (llt.info() != Eigen::Success) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.fisher_information(),
                                                             Eigen::EigenvaluesOnly);
    std::ostringstream os;
    os << "sample_theta: Fisher information is singular (smallest eigenvalue "
       << eig.eigenvalues().minCoeff() << ")";
    throw NumericalError(os.str());
  }
  const Eigen::MatrixXd upper = llt.matrixU();

  for (std::size_t b = 0; b < draws; ++b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    for (;;) {
      Eigen::VectorXd z(r);
      for (Eigen::Index k = 0; k < r; ++k) z[k] = normal(rng);
      if (z.squaredNorm() > radius) continue;
      // I = U'U, so theta_hat + U^-1 z has Wald statistic |z|^2.
      Eigen::VectorXd theta =
          model.theta() + upper.triangularView<Eigen::Upper>().solve(z);
      if (wald_statistic(model, theta) <= radius) {
        out.push_back(std::move(theta));
        break;
      }
    }
  }
  return out;
}

}  // namespace cfdens
