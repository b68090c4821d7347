#include "cfdens/basis.hpp"

#include "cfdens/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cfdens {

BSplineBasis::BSplineBasis(double lower, double upper, std::size_t count, std::size_t degree)
    : lower_(lower), upper_(upper), count_(count), degree_(degree) {
  if (!(lower < upper)) throw ConfigError("b-spline: lower bound must be below upper bound");
  if (degree < 1) throw ConfigError("b-spline: degree must be at least 1");
  if (count <= degree) {
    throw ConfigError("b-spline: basis size " + std::to_string(count) +
                      " must exceed the degree " + std::to_string(degree));
  }
  const std::size_t segments = count - degree;
  knots_.reserve(count + degree + 1);
  for (std::size_t i = 0; i < degree; ++i) knots_.push_back(lower);
  for (std::size_t i = 0; i <= segments; ++i) {
    knots_.push_back(lower + (upper - lower) * static_cast<double>(i) / static_cast<double>(segments));
  }
  knots_[degree + segments] = upper;
  for (std::size_t i = 0; i < degree; ++i) knots_.push_back(upper);
}

Eigen::VectorXd BSplineBasis::evaluate(double x) const {
  x = std::clamp(x, lower_, upper_);
  const std::size_t p = degree_;
  // Knot span s with t_s <= x < t_{s+1}; the right end belongs to the last span.
  std::size_t span = count_ - 1;
  if (x < upper_) {
    const auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(p),
                                     knots_.begin() + static_cast<std::ptrdiff_t>(count_ + 1), x);
    span = static_cast<std::size_t>(it - knots_.begin()) - 1;
  }

  std::vector<double> local(p + 1, 0.0), left(p + 1), right(p + 1);
  local[0] = 1.0;
  for (std::size_t j = 1; j <= p; ++j) {
    left[j] = x - knots_[span + 1 - j];
    right[j] = knots_[span + j] - x;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double temp = local[r] / (right[r + 1] + left[j - r]);
      local[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    local[j] = saved;
  }

  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count_));
  for (std::size_t r = 0; r <= p; ++r) out[static_cast<Eigen::Index>(span - p + r)] = local[r];
  return out;
}

double BSplineBasis::integral(std::size_t i) const {
  return (knots_[i + degree_ + 1] - knots_[i]) / static_cast<double>(degree_ + 1);
}

std::string to_string(const CovariateValue& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  std::ostringstream os;
  os.precision(17);
  os << std::get<double>(value);
  return os.str();
}

void PartialEffectSpec::validate() const {
  if (const auto* cat = std::get_if<CategoricalEffect>(&kind)) {
    if (cat->levels.size() < 2) {
      throw ConfigError("effect '" + covariate + "': categorical needs at least two levels");
    }
    auto sorted = cat->levels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ConfigError("effect '" + covariate + "': duplicate categorical level");
    }
    if (std::find(cat->levels.begin(), cat->levels.end(), cat->reference) == cat->levels.end()) {
      throw ConfigError("effect '" + covariate + "': reference level '" + cat->reference +
                        "' is not among the levels");
    }
  } else if (const auto* smooth = std::get_if<SmoothEffect>(&kind)) {
    if (smooth->degree < 1) throw ConfigError("effect '" + covariate + "': degree must be >= 1");
    if (smooth->count < smooth->degree + 1) {
      throw ConfigError("effect '" + covariate + "': count must be at least degree + 1");
    }
  }
}

ClrFunction OutcomeBasis::column(std::size_t m) const {
  return ClrFunction(grid_, matrix_.col(static_cast<Eigen::Index>(m)));
}

Eigen::VectorXd OutcomeBasis::evaluate(double y) const {
  const std::size_t splines = spline_count();
  const auto& atoms = grid_.measure().atoms();
  Eigen::VectorXd raw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(splines + atoms.size()));
  bool placed = false;
  for (std::size_t d = 0; d < atoms.size(); ++d) {
    if (atoms[d].location == y) {
      raw[static_cast<Eigen::Index>(splines + d)] = 1.0;
      placed = true;
    }
  }
  if (!placed) {
    const auto& interval = grid_.measure().interval();
    if (!interval || y < interval->lower || y > interval->upper) {
      throw DataError("outcome basis: " + std::to_string(y) + " is outside the support");
    }
    raw.head(static_cast<Eigen::Index>(splines)) = splines_->evaluate(y);
  }
  return raw.head(static_cast<Eigen::Index>(size())) - offsets_;
}

OutcomeBasis build_outcome_basis(const Grid& grid, std::size_t spline_count, std::size_t degree) {
  const auto& measure = grid.measure();
  std::optional<BSplineBasis> splines;
  if (const auto& interval = measure.interval()) {
    if (spline_count <= degree) {
      throw ConfigError("outcome basis: spline count " + std::to_string(spline_count) +
                        " must exceed the degree " + std::to_string(degree));
    }
    splines.emplace(interval->lower, interval->upper, spline_count, degree);
  }
  const std::size_t n_splines = splines ? splines->size() : 0;
  const std::size_t n_atoms = measure.atoms().size();
  const auto cells = static_cast<Eigen::Index>(grid.size());
  const auto raw_cols = static_cast<Eigen::Index>(n_splines + n_atoms);

  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(cells, raw_cols);
  for (std::size_t g = 0; g < grid.bin_count(); ++g) {
    raw.row(static_cast<Eigen::Index>(g)).head(static_cast<Eigen::Index>(n_splines)) =
        splines->evaluate(grid.centers()[static_cast<Eigen::Index>(g)]).transpose();
  }
  for (std::size_t d = 0; d < n_atoms; ++d) {
    raw(static_cast<Eigen::Index>(grid.bin_count() + d), static_cast<Eigen::Index>(n_splines + d)) = 1.0;
  }

  // Every raw row sums to one, so the centred columns have a one-dimensional
  // null space; dropping the last column restores full rank.
  const Eigen::VectorXd means = (raw.transpose() * grid.widths()) / grid.total_mass();
  const Eigen::Index kept = std::max<Eigen::Index>(raw_cols - 1, 0);
  Eigen::MatrixXd matrix = raw.leftCols(kept).rowwise() - means.head(kept).transpose();

  if (kept > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(matrix);
    qr.setThreshold(1e-10);
    if (qr.rank() < kept) {
      throw NumericalError("outcome basis: rank " + std::to_string(qr.rank()) + " < " +
                           std::to_string(kept) + " columns on a grid of " +
                           std::to_string(grid.size()) + " cells");
    }
  }
  return OutcomeBasis(grid, std::move(splines), degree, means.head(kept), std::move(matrix));
}

Eigen::VectorXd CovariateBasis::evaluate(const CovariateValue& value) const {
  return std::visit(
      [&](const auto& kind) -> Eigen::VectorXd {
        using Kind = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<Kind, InterceptEffect>) {
          return Eigen::VectorXd::Ones(1);
        } else if constexpr (std::is_same_v<Kind, CategoricalEffect>) {
          const auto* level = std::get_if<std::string>(&value);
          if (!level) {
            throw DataError("covariate '" + spec_.covariate + "': expected a categorical level");
          }
          Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size_));
          if (*level == kind.reference) return row;
          Eigen::Index col = 0;
          for (const auto& l : kind.levels) {
            if (l == kind.reference) continue;
            if (l == *level) {
              row[col] = 1.0;
              return row;
            }
            ++col;
          }
          throw DataError("covariate '" + spec_.covariate + "': unseen level '" + *level + "'");
        } else {
          const auto* x = std::get_if<double>(&value);
          if (!x) throw DataError("covariate '" + spec_.covariate + "': expected a number");
          return centering_.transpose() * splines_->evaluate(*x);
        }
      },
      spec_.kind);
}

CovariateBasis build_covariate_basis(const PartialEffectSpec& spec,
                                     std::span<const CovariateValue> training_values) {
  spec.validate();
  if (spec.is_intercept()) {
    return CovariateBasis(spec, 1, std::nullopt, Eigen::MatrixXd::Identity(1, 1));
  }
  if (training_values.empty()) {
    throw DataError("covariate '" + spec.covariate + "': no training values");
  }
  if (const auto* cat = std::get_if<CategoricalEffect>(&spec.kind)) {
    std::vector<std::string> unseen;
    for (const auto& v : training_values) {
      const auto* level = std::get_if<std::string>(&v);
      if (!level) throw DataError("covariate '" + spec.covariate + "': expected a categorical level");
      if (std::find(cat->levels.begin(), cat->levels.end(), *level) == cat->levels.end() &&
          std::find(unseen.begin(), unseen.end(), *level) == unseen.end()) {
        unseen.push_back(*level);
      }
    }
    if (!unseen.empty()) {
      std::string list;
      for (const auto& u : unseen) list += (list.empty() ? "" : ", ") + u;
      throw DataError("covariate '" + spec.covariate + "': undeclared levels " + list);
    }
    const auto width = cat->levels.size() - 1;
    return CovariateBasis(spec, width, std::nullopt,
                          Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(width),
                                                    static_cast<Eigen::Index>(width)));
  }

  const auto& smooth = std::get<SmoothEffect>(spec.kind);
  std::vector<double> xs;
  xs.reserve(training_values.size());
  for (const auto& v : training_values) {
    const auto* x = std::get_if<double>(&v);
    if (!x || !std::isfinite(*x)) {
      throw DataError("covariate '" + spec.covariate + "': expected finite numbers");
    }
    xs.push_back(*x);
  }
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  if (!(*lo < *hi)) {
    throw DataError("covariate '" + spec.covariate + "': smooth effect needs at least two distinct values");
  }
  BSplineBasis splines(*lo, *hi, smooth.count, smooth.degree);

  // Sum-to-zero over the training sample: restrict coefficients to the
  // orthogonal complement of the column means.
  Eigen::VectorXd column_means = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(smooth.count));
  for (double x : xs) column_means += splines.evaluate(x);
  column_means /= static_cast<double>(xs.size());
  const Eigen::MatrixXd constraint = column_means;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(constraint);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd centering = q.rightCols(static_cast<Eigen::Index>(smooth.count - 1));
  return CovariateBasis(spec, smooth.count - 1, std::move(splines), std::move(centering));
}

AdditiveBasis::AdditiveBasis(OutcomeBasis outcome, std::vector<CovariateBasis> effects,
                             std::vector<std::string> schema)
    : outcome_(std::move(outcome)), effects_(std::move(effects)), schema_(std::move(schema)) {
  for (const auto& effect : effects_) {
    offsets_.push_back(covariate_width_);
    covariate_width_ += effect.size();
    std::size_t column = 0;
    if (!effect.spec().is_intercept()) {
      const auto it = std::find(schema_.begin(), schema_.end(), effect.spec().covariate);
      if (it == schema_.end()) {
        throw DataError("covariate '" + effect.spec().covariate + "' is missing from the data");
      }
      column = static_cast<std::size_t>(it - schema_.begin());
    }
    columns_.push_back(column);
  }
}

std::size_t AdditiveBasis::effect_index(const std::string& covariate) const {
  for (std::size_t j = 0; j < effects_.size(); ++j) {
    if (!effects_[j].spec().is_intercept() && effects_[j].spec().covariate == covariate) return j;
  }
  throw ConfigError("unknown covariate effect '" + covariate + "'");
}

Eigen::VectorXd AdditiveBasis::effect_row(std::size_t j, const CovariateValue& value) const {
  return effects_[j].evaluate(value);
}

Eigen::VectorXd AdditiveBasis::covariate_row(const CovariateVector& x) const {
  if (x.size() != schema_.size()) {
    throw DataError("covariate vector has " + std::to_string(x.size()) + " values, schema has " +
                    std::to_string(schema_.size()));
  }
  Eigen::VectorXd row(static_cast<Eigen::Index>(covariate_width_));
  for (std::size_t j = 0; j < effects_.size(); ++j) {
    const auto value = effects_[j].spec().is_intercept() ? CovariateValue{1.0} : x[columns_[j]];
    row.segment(static_cast<Eigen::Index>(offsets_[j]), static_cast<Eigen::Index>(effects_[j].size())) =
        effects_[j].evaluate(value);
  }
  return row;
}

Eigen::MatrixXd AdditiveBasis::design(const Eigen::VectorXd& covariate_row) const {
  const auto& b = outcome_.matrix();
  const Eigen::Index d_t = b.cols();
  Eigen::MatrixXd block(b.rows(), covariate_row.size() * d_t);
  for (Eigen::Index l = 0; l < covariate_row.size(); ++l) {
    block.middleCols(l * d_t, d_t) = covariate_row[l] * b;
  }
  return block;
}

Eigen::VectorXd AdditiveBasis::linear_predictor(const Eigen::VectorXd& covariate_row,
                                                const Eigen::VectorXd& theta) const {
  const auto& b = outcome_.matrix();
  if (theta.size() != static_cast<Eigen::Index>(coefficient_count())) {
    throw StructuralError("linear predictor: coefficient vector has the wrong length");
  }
  if (b.cols() == 0) return Eigen::VectorXd::Zero(b.rows());
  const Eigen::Map<const Eigen::MatrixXd> coef(theta.data(), b.cols(), covariate_row.size());
  return b * (coef * covariate_row);
}

Eigen::MatrixXd design_row(const AdditiveBasis& basis, const CovariateVector& x) {
  return basis.design(basis.covariate_row(x));
}

}  // namespace cfdens
