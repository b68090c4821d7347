#pragma once

// Reference measures on the real line, their computational grids, and the
// Bayes Hilbert space arithmetic on densities represented over those grids.

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace cfdens {

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

struct Atom {
  double location = 0.0;
  double weight = 1.0;
};

/// Lebesgue measure on an optional interval plus weighted Dirac atoms.
class ReferenceMeasure {
 public:
  ReferenceMeasure(std::optional<Interval> interval, std::vector<Atom> atoms);

  static ReferenceMeasure continuous(double lower, double upper);

  const std::optional<Interval>& interval() const { return interval_; }
  /// Sorted by location.
  const std::vector<Atom>& atoms() const { return atoms_; }
  double total_mass() const;

 private:
  std::optional<Interval> interval_;
  std::vector<Atom> atoms_;
};

enum class CellType { bin, atom };

/// Histogram bins over the continuous part followed by one cell per atom.
/// Bin cells have width a_g - a_{g-1}; atom cells have width equal to the atom weight.
/// Copies share the same immutable storage.
class Grid {
 public:
  Grid(const ReferenceMeasure& measure, std::vector<double> edges);

  /// `bins` equal-width bins over the interval (ignored when there is none).
  static Grid uniform(const ReferenceMeasure& measure, std::size_t bins);

  std::size_t size() const { return data_->widths.size(); }
  std::size_t bin_count() const { return data_->edges.empty() ? 0 : data_->edges.size() - 1; }
  std::size_t atom_count() const { return data_->measure.atoms().size(); }

  const ReferenceMeasure& measure() const { return data_->measure; }
  std::span<const double> edges() const { return data_->edges; }
  const Eigen::VectorXd& centers() const { return data_->centers; }
  const Eigen::VectorXd& widths() const { return data_->widths; }
  CellType cell_type(std::size_t cell) const {
    return cell < bin_count() ? CellType::bin : CellType::atom;
  }
  double total_mass() const { return data_->total_mass; }

  /// Cell containing y: atoms take precedence, bins are [a_{g-1}, a_g) with the
  /// last one closed. Empty when y is outside the support.
  std::optional<std::size_t> locate(double y) const;

  /// Exact equality of edges and atoms.
  bool operator==(const Grid& other) const;

 private:
  struct Data {
    ReferenceMeasure measure;
    std::vector<double> edges;
    Eigen::VectorXd centers;
    Eigen::VectorXd widths;
    double total_mass = 0.0;
  };
  std::shared_ptr<const Data> data_;
};

/// Midpoint-rule integral against the reference measure.
double integrate(const Eigen::VectorXd& values, const Grid& grid);

/// Nonnegative cell heights integrating to one against the reference measure.
class GridDensity {
 public:
  /// Validates nonnegativity and unit integral (1e-8).
  GridDensity(Grid grid, Eigen::VectorXd values);

  /// Rescales nonnegative values with a positive integral to unit mass.
  static GridDensity normalized(Grid grid, Eigen::VectorXd values);
  static GridDensity uniform(Grid grid);

  const Grid& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  double operator[](std::size_t cell) const { return values_[static_cast<Eigen::Index>(cell)]; }
  std::size_t size() const { return grid_.size(); }

 private:
  struct trusted_tag {};
  GridDensity(Grid grid, Eigen::VectorXd values, trusted_tag);

  Grid grid_;
  Eigen::VectorXd values_;
};

/// Cell values with zero integral against the reference measure.
class ClrFunction {
 public:
  /// Validates the zero-integral constraint (1e-8, relative to the L1 mass when larger than one).
  ClrFunction(Grid grid, Eigen::VectorXd values);

  /// Subtracts the measure-mean so the result has zero integral.
  static ClrFunction centered(Grid grid, Eigen::VectorXd values);

  const Grid& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  double operator[](std::size_t cell) const { return values_[static_cast<Eigen::Index>(cell)]; }

 private:
  Grid grid_;
  Eigen::VectorXd values_;
};

/// Density proportional to exp(log_values); max-subtraction guards overflow.
GridDensity exp_normalize(const Grid& grid, const Eigen::VectorXd& log_values);

ClrFunction clr(const GridDensity& f);
GridDensity clr_inverse(const ClrFunction& g);

GridDensity oplus(const GridDensity& f1, const GridDensity& f2);
GridDensity odot(double alpha, const GridDensity& f);
GridDensity ominus(const GridDensity& f1, const GridDensity& f2);

double inner_product_b2(const GridDensity& f1, const GridDensity& f2);

/// Half the measure-integral of |f1 - f2|; atoms contribute weight * |difference|.
double tv_distance(const GridDensity& f1, const GridDensity& f2);

void require_same_grid(const Grid& a, const Grid& b, const char* operation);

}  // namespace cfdens
