#pragma once

#include "cfdens/density_regression.hpp"
#include "cfdens/measure_grid.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cfdens {

enum class Group { control = 0, treated = 1 };

/// Three binary covariates (eight cells) with beta-distributed outcomes on [0, 1].
/// Cell c has x1 = 1 + bit 2, x2 = 1 + bit 1, x3 = 1 + bit 0 of c.
struct DgpSpec {
  static constexpr std::size_t kCells = 8;
  using CellArray = std::array<double, kCells>;

  CellArray treated_probabilities{};
  CellArray control_probabilities{};
  CellArray treated_alpha{}, treated_beta{};
  CellArray control_alpha{}, control_beta{};

  static DgpSpec beta_mixture();

  void validate() const;
  /// Class probabilities divided by their sum.
  CellArray probabilities(Group group) const;
  double raw_probability_total(Group group) const;
  double alpha(Group group, std::size_t cell) const;
  double beta(Group group, std::size_t cell) const;

  static std::vector<std::string> schema() { return {"x1", "x2", "x3"}; }
  static CovariateVector cell_covariates(std::size_t cell);
  static ModelSpec model_spec(std::size_t spline_count = 12, std::size_t degree = 3);
};

ObservationTable simulate(const DgpSpec& spec, Group group, std::size_t n, std::uint64_t seed);

double beta_pdf(double y, double a, double b);

/// Beta density of one cell evaluated at the bin centres and normalized on the grid.
GridDensity true_conditional(const DgpSpec& spec, Group group, std::size_t cell, const Grid& grid);

/// Group-k conditionals mixed over group-l class probabilities.
GridDensity true_counterfactual(const DgpSpec& spec, Group model_group, Group covariate_group,
                                const Grid& grid);

struct KdeOptions {
  double constant = 0.9;  // 0.9 * min(s, IQR / 1.34) * n^(-1/5)
  double floor_fraction = 1e-6;  // bandwidth floor as a fraction of the interval length
};

/// Silverman's rule of thumb; returns 0 for constant or single-point samples.
double silverman_bandwidth(std::span<const double> samples, double constant = 0.9);

/// Gaussian-kernel density of every combination in `cells`, evaluated at the bin
/// centres and renormalized on the grid. An empty combination is an error.
std::map<CovariateVector, GridDensity> kde_conditional(const ObservationTable& data, const Grid& grid,
                                                       const std::vector<CovariateVector>& cells,
                                                       const KdeOptions& options = {});

enum class Estimator { bayes, kde };

std::string to_string(Estimator estimator);

struct StudySettings {
  std::vector<std::size_t> sample_sizes{500, 1000, 5000};
  std::size_t replications = 200;
  std::vector<Estimator> estimators{Estimator::bayes, Estimator::kde};
  std::uint64_t seed = 1;
  std::size_t bins = 50;
  std::size_t spline_count = 12;
  std::size_t spline_degree = 3;
  double penalty = 0.0;
  KdeOptions kde{};
  std::size_t threads = 0;  // 0: hardware concurrency

  static StudySettings desk_scale() { return {}; }
  static StudySettings full_scale();
};

/// Counterfactual targets f_kl (model group k, covariate group l) followed by
/// the conditional-density averages of each group.
inline const std::array<std::string, 6>& study_targets() {
  static const std::array<std::string, 6> targets{"f_11", "f_10", "f_01", "f_00", "cond_1", "cond_0"};
  return targets;
}

struct McRow {
  Estimator estimator = Estimator::bayes;
  std::size_t n = 0;
  std::string target;
  double mean_tv = 0.0;
  double standard_error = 0.0;
  std::size_t replications = 0;  // successful replications averaged
  std::size_t failed = 0;
};

struct McReport {
  std::uint64_t seed = 0;
  std::size_t requested_replications = 0;
  std::vector<McRow> rows;
  std::vector<std::string> notes;

  const McRow& row(Estimator estimator, std::size_t n, const std::string& target) const;
};

/// Per-replication TV distances for one estimator; empty when the fit failed.
struct ReplicationScores {
  bool ok = false;
  std::array<double, 6> tv{};
};

ReplicationScores score_replication(const DgpSpec& spec, const ObservationTable& treated,
                                    const ObservationTable& control, Estimator estimator,
                                    const StudySettings& settings);

McReport run_study(const DgpSpec& spec, const StudySettings& settings);

}  // namespace cfdens
