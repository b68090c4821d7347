#include "cfdens/measure_grid.hpp"

#include "cfdens/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace cfdens {

namespace {

constexpr double kUnitMassTolerance = 1e-8;

std::string cell_name(const Grid& grid, std::size_t cell) {
  std::ostringstream os;
  if (grid.cell_type(cell) == CellType::bin) {
    os << "bin " << cell << " [" << grid.edges()[cell] << ", " << grid.edges()[cell + 1] << "]";
  } else {
    os << "atom at " << grid.centers()[static_cast<Eigen::Index>(cell)];
  }
  return os.str();
}

}  // namespace

ReferenceMeasure::ReferenceMeasure(std::optional<Interval> interval, std::vector<Atom> atoms)
    : interval_(interval), atoms_(std::move(atoms)) {
  if (interval_ && !(interval_->lower < interval_->upper)) {
    throw ConfigError("reference measure: interval lower bound must be below upper bound");
  }
  if (!interval_ && atoms_.empty()) {
    throw ConfigError("reference measure: needs an interval or at least one atom");
  }
  std::sort(atoms_.begin(), atoms_.end(),
            [](const Atom& a, const Atom& b) { return a.location < b.location; });
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (!(atoms_[i].weight > 0.0) || !std::isfinite(atoms_[i].weight)) {
      throw ConfigError("reference measure: atom weights must be positive");
    }
    if (!std::isfinite(atoms_[i].location)) {
      throw ConfigError("reference measure: atom locations must be finite");
    }
    if (i > 0 && atoms_[i].location == atoms_[i - 1].location) {
      throw ConfigError("reference measure: duplicate atom location " +
                        std::to_string(atoms_[i].location));
    }
  }
}

ReferenceMeasure ReferenceMeasure::continuous(double lower, double upper) {
  return ReferenceMeasure(Interval{lower, upper}, {});
}

double ReferenceMeasure::total_mass() const {
  double mass = interval_ ? interval_->upper - interval_->lower : 0.0;
  for (const auto& atom : atoms_) mass += atom.weight;
  return mass;
}

Grid::Grid(const ReferenceMeasure& measure, std::vector<double> edges) {
  const auto& interval = measure.interval();
  if (interval) {
    if (edges.size() < 2) throw ConfigError("grid: need at least one bin over the interval");
    if (edges.front() != interval->lower || edges.back() != interval->upper) {
      throw ConfigError("grid: outer edges must equal the interval bounds");
    }
    for (std::size_t g = 1; g < edges.size(); ++g) {
      if (!(edges[g] > edges[g - 1])) throw ConfigError("grid: edges must be strictly increasing");
    }
  } else if (!edges.empty()) {
    throw ConfigError("grid: edges given but the measure has no continuous part");
  }
  for (const auto& atom : measure.atoms()) {
    if (std::binary_search(edges.begin(), edges.end(), atom.location)) {
      throw ConfigError("grid: atom location " + std::to_string(atom.location) +
                        " duplicates a bin edge");
    }
  }

  const std::size_t bins = edges.empty() ? 0 : edges.size() - 1;
  const std::size_t cells = bins + measure.atoms().size();
  Eigen::VectorXd centers(static_cast<Eigen::Index>(cells));
  Eigen::VectorXd widths(static_cast<Eigen::Index>(cells));
  for (std::size_t g = 0; g < bins; ++g) {
    centers[static_cast<Eigen::Index>(g)] = 0.5 * (edges[g] + edges[g + 1]);
    widths[static_cast<Eigen::Index>(g)] = edges[g + 1] - edges[g];
  }
  for (std::size_t d = 0; d < measure.atoms().size(); ++d) {
    centers[static_cast<Eigen::Index>(bins + d)] = measure.atoms()[d].location;
    widths[static_cast<Eigen::Index>(bins + d)] = measure.atoms()[d].weight;
  }
  const double mass = widths.sum();
  data_ = std::make_shared<const Data>(
      Data{measure, std::move(edges), std::move(centers), std::move(widths), mass});
}

Grid Grid::uniform(const ReferenceMeasure& measure, std::size_t bins) {
  std::vector<double> edges;
  if (const auto& interval = measure.interval()) {
    if (bins == 0) throw ConfigError("grid: bin count must be positive");
    edges.resize(bins + 1);
    const double span = interval->upper - interval->lower;
    for (std::size_t g = 0; g <= bins; ++g) {
      edges[g] = interval->lower + span * static_cast<double>(g) / static_cast<double>(bins);
    }
    edges.back() = interval->upper;
  }
  return Grid(measure, std::move(edges));
}

std::optional<std::size_t> Grid::locate(double y) const {
  const auto& atoms = data_->measure.atoms();
  for (std::size_t d = 0; d < atoms.size(); ++d) {
    if (atoms[d].location == y) return bin_count() + d;
  }
  const auto& edges = data_->edges;
  if (edges.empty() || !(y >= edges.front() && y <= edges.back())) return std::nullopt;
  if (y == edges.back()) return bin_count() - 1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), y);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

bool Grid::operator==(const Grid& other) const {
  if (data_ == other.data_) return true;
  const auto& a = data_->measure;
  const auto& b = other.data_->measure;
  if (data_->edges != other.data_->edges) return false;
  if (a.atoms().size() != b.atoms().size()) return false;
  for (std::size_t d = 0; d < a.atoms().size(); ++d) {
    if (a.atoms()[d].location != b.atoms()[d].location ||
        a.atoms()[d].weight != b.atoms()[d].weight) {
      return false;
    }
  }
  return true;
}

void require_same_grid(const Grid& a, const Grid& b, const char* operation) {
  if (!(a == b)) throw StructuralError(std::string(operation) + ": grids differ");
}

double integrate(const Eigen::VectorXd& values, const Grid& grid) {
  if (static_cast<std::size_t>(values.size()) != grid.size()) {
    throw StructuralError("integrate: " + std::to_string(values.size()) + " values for " +
                          std::to_string(grid.size()) + " cells");
  }
  return values.dot(grid.widths());
}

GridDensity::GridDensity(Grid grid, Eigen::VectorXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.size()) != grid_.size()) {
    throw StructuralError("density: value count does not match the grid");
  }
  for (Eigen::Index g = 0; g < values_.size(); ++g) {
    if (!(values_[g] >= 0.0) || !std::isfinite(values_[g])) {
      throw DomainError("density: negative or non-finite value in " +
                        cell_name(grid_, static_cast<std::size_t>(g)));
    }
  }
  const double mass = integrate(values_, grid_);
  if (std::abs(mass - 1.0) > kUnitMassTolerance) {
    throw DomainError("density: integrates to " + std::to_string(mass) + ", not 1");
  }
}

GridDensity::GridDensity(Grid grid, Eigen::VectorXd values, trusted_tag)
    : grid_(std::move(grid)), values_(std::move(values)) {}

GridDensity GridDensity::normalized(Grid grid, Eigen::VectorXd values) {
  if (static_cast<std::size_t>(values.size()) != grid.size()) {
    throw StructuralError("density: value count does not match the grid");
  }
  for (Eigen::Index g = 0; g < values.size(); ++g) {
    if (!(values[g] >= 0.0) || !std::isfinite(values[g])) {
      throw DomainError("density: negative or non-finite value in " +
                        cell_name(grid, static_cast<std::size_t>(g)));
    }
  }
  const double mass = integrate(values, grid);
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw DomainError("density: cannot normalize a function with zero mass");
  }
  values /= mass;
  return GridDensity(std::move(grid), std::move(values), trusted_tag{});
}

GridDensity GridDensity::uniform(Grid grid) {
  const double mass = grid.total_mass();
  Eigen::VectorXd values = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.size()), 1.0 / mass);
  return GridDensity(std::move(grid), std::move(values), trusted_tag{});
}

ClrFunction::ClrFunction(Grid grid, Eigen::VectorXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  const double total = integrate(values_, grid_);
  const double scale = std::max(1.0, integrate(values_.cwiseAbs(), grid_));
  if (!std::isfinite(total) || std::abs(total) > kUnitMassTolerance * scale) {
    throw DomainError("clr function: integral " + std::to_string(total) + " is not zero");
  }
}

ClrFunction ClrFunction::centered(Grid grid, Eigen::VectorXd values) {
  const double mean = integrate(values, grid) / grid.total_mass();
  values.array() -= mean;
  return ClrFunction(std::move(grid), std::move(values));
}

GridDensity exp_normalize(const Grid& grid, const Eigen::VectorXd& log_values) {
  if (static_cast<std::size_t>(log_values.size()) != grid.size()) {
    throw StructuralError("exp_normalize: value count does not match the grid");
  }
  if (!log_values.allFinite()) throw DomainError("exp_normalize: non-finite log value");
  const double shift = log_values.maxCoeff();
  Eigen::VectorXd values = (log_values.array() - shift).exp().matrix();
  return GridDensity::normalized(grid, std::move(values));
}

ClrFunction clr(const GridDensity& f) {
  const auto& v = f.values();
  for (Eigen::Index g = 0; g < v.size(); ++g) {
    if (!(v[g] > 0.0)) {
      throw DomainError("clr: nonpositive density in " +
                        cell_name(f.grid(), static_cast<std::size_t>(g)));
    }
  }
  return ClrFunction::centered(f.grid(), v.array().log().matrix());
}

GridDensity clr_inverse(const ClrFunction& g) { return exp_normalize(g.grid(), g.values()); }

GridDensity oplus(const GridDensity& f1, const GridDensity& f2) {
  require_same_grid(f1.grid(), f2.grid(), "oplus");
  return GridDensity::normalized(f1.grid(), f1.values().cwiseProduct(f2.values()));
}

GridDensity odot(double alpha, const GridDensity& f) {
  // Powering through logs keeps large exponents finite.
  const auto& v = f.values();
  if ((v.array() > 0.0).all()) {
    return exp_normalize(f.grid(), alpha * v.array().log().matrix());
  }
  return GridDensity::normalized(f.grid(), v.array().pow(alpha).matrix());
}

GridDensity ominus(const GridDensity& f1, const GridDensity& f2) {
  require_same_grid(f1.grid(), f2.grid(), "ominus");
  const auto& d = f2.values();
  for (Eigen::Index g = 0; g < d.size(); ++g) {
    if (!(d[g] > 0.0)) {
      throw DomainError("ominus: zero denominator in " +
                        cell_name(f2.grid(), static_cast<std::size_t>(g)));
    }
  }
  return GridDensity::normalized(f1.grid(), f1.values().cwiseQuotient(d));
}

double inner_product_b2(const GridDensity& f1, const GridDensity& f2) {
  require_same_grid(f1.grid(), f2.grid(), "inner_product_b2");
  const auto c1 = clr(f1);
  const auto c2 = clr(f2);
  return integrate(c1.values().cwiseProduct(c2.values()), f1.grid());
}

double tv_distance(const GridDensity& f1, const GridDensity& f2) {
  require_same_grid(f1.grid(), f2.grid(), "tv_distance");
  return 0.5 * integrate((f1.values() - f2.values()).cwiseAbs(), f1.grid());
}

}  // namespace cfdens
