#include "cfdens/sim_benchmark.hpp"

#include "cfdens/counterfactual_effects.hpp"
#include "cfdens/errors.hpp"
#include "cfdens/seeding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace cfdens {

DgpSpec DgpSpec::beta_mixture() {
  DgpSpec spec;
  spec.treated_probabilities.fill(1.0 / kCells);
  spec.control_probabilities = {0.25, 0.2, 0.14, 0.125, 0.095, 0.008, 0.06, 0.05};
  spec.treated_alpha = {1, 5, 5, 9, 2, 6, 6, 10};
  spec.treated_beta = spec.treated_alpha;
  spec.control_alpha = {1, 10, 2, 11, 2, 11, 3, 12};
  spec.control_beta = {1, 2, 10, 11, 2, 3, 11, 12};
  return spec;
}

void DgpSpec::validate() const {
  for (const auto* arr : {&treated_alpha, &treated_beta, &control_alpha, &control_beta}) {
    for (double v : *arr) {
      if (!(v > 0.0)) throw ConfigError("dgp: beta parameters must be positive");
    }
  }
  for (const auto* arr : {&treated_probabilities, &control_probabilities}) {
    double total = 0.0;
    for (double v : *arr) {
      if (!(v >= 0.0)) throw ConfigError("dgp: class probabilities must be nonnegative");
      total += v;
    }
    if (!(total > 0.0)) throw ConfigError("dgp: class probabilities sum to zero");
  }
}

double DgpSpec::raw_probability_total(Group group) const {
  const auto& p = group == Group::treated ? treated_probabilities : control_probabilities;
  return std::accumulate(p.begin(), p.end(), 0.0);
}

DgpSpec::CellArray DgpSpec::probabilities(Group group) const {
  auto p = group == Group::treated ? treated_probabilities : control_probabilities;
  const double total = raw_probability_total(group);
  for (auto& v : p) v /= total;
  return p;
}

double DgpSpec::alpha(Group group, std::size_t cell) const {
  return (group == Group::treated ? treated_alpha : control_alpha)[cell];
}

double DgpSpec::beta(Group group, std::size_t cell) const {
  return (group == Group::treated ? treated_beta : control_beta)[cell];
}

CovariateVector DgpSpec::cell_covariates(std::size_t cell) {
  auto level = [](bool bit) { return CovariateValue{std::string(bit ? "2" : "1")}; };
  return {level(cell & 4u), level(cell & 2u), level(cell & 1u)};
}

ModelSpec DgpSpec::model_spec(std::size_t spline_count, std::size_t degree) {
  ModelSpec spec;
  spec.spline_count = spline_count;
  spec.spline_degree = degree;
  for (const auto& name : schema()) {
    spec.effects.push_back(PartialEffectSpec::categorical(name, {"1", "2"}, "1"));
  }
  return spec;
}

ObservationTable simulate(const DgpSpec& spec, Group group, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw ConfigError("simulate: n must be at least 1");
  const auto probs = spec.probabilities(group);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick_cell(probs.begin(), probs.end());
  ObservationTable table(DgpSpec::schema(), group == Group::treated ? "treated" : "control");
  for (std::size_t i = 0; i < n; ++i) {
    const auto cell = pick_cell(rng);
    std::gamma_distribution<double> ga(spec.alpha(group, cell), 1.0);
    std::gamma_distribution<double> gb(spec.beta(group, cell), 1.0);
    const double a = ga(rng);
    const double b = gb(rng);
    table.add(a / (a + b), DgpSpec::cell_covariates(cell));
  }
  return table;
}

double beta_pdf(double y, double a, double b) {
  if (y < 0.0 || y > 1.0) return 0.0;
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return std::exp(log_norm + (a - 1.0) * std::log(y) + (b - 1.0) * std::log1p(-y));
}

GridDensity true_conditional(const DgpSpec& spec, Group group, std::size_t cell, const Grid& grid) {
  Eigen::VectorXd values(static_cast<Eigen::Index>(grid.size()));
  for (Eigen::Index g = 0; g < values.size(); ++g) {
    values[g] = grid.cell_type(static_cast<std::size_t>(g)) == CellType::bin
                    ? beta_pdf(grid.centers()[g], spec.alpha(group, cell), spec.beta(group, cell))
                    : 0.0;
  }
  return GridDensity::normalized(grid, std::move(values));
}

GridDensity true_counterfactual(const DgpSpec& spec, Group model_group, Group covariate_group,
                                const Grid& grid) {
  spec.validate();
  const auto probs = spec.probabilities(covariate_group);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t c = 0; c < DgpSpec::kCells; ++c) {
    if (probs[c] == 0.0) continue;
    values += probs[c] * true_conditional(spec, model_group, c, grid).values();
  }
  return GridDensity::normalized(grid, std::move(values));
}

namespace {

double quantile_type7(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double silverman_bandwidth(std::span<const double> samples, double constant) {
  const std::size_t n = samples.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile_type7(sorted, 0.75) - quantile_type7(sorted, 0.25);
  return constant * std::min(sd, iqr / 1.34) * std::pow(static_cast<double>(n), -0.2);
}

std::map<CovariateVector, GridDensity> kde_conditional(const ObservationTable& data, const Grid& grid,
                                                       const std::vector<CovariateVector>& cells,
                                                       const KdeOptions& options) {
  std::map<CovariateVector, std::pair<std::vector<double>, std::vector<double>>> by_cell;
  for (const auto& cell : cells) by_cell[cell];
  for (const auto& row : data.rows()) {
    const auto it = by_cell.find(row.covariates);
    if (it == by_cell.end()) continue;
    it->second.first.push_back(row.outcome);
    it->second.second.push_back(row.weight);
  }
  const auto& interval = grid.measure().interval();
  if (!interval) throw ConfigError("kde: the measure has no continuous part");
  const double floor = options.floor_fraction * (interval->upper - interval->lower);

  std::map<CovariateVector, GridDensity> out;
  for (const auto& [cell, samples] : by_cell) {
    const auto& [ys, ws] = samples;
    if (ys.empty()) {
      std::string name;
      for (const auto& v : cell) name += (name.empty() ? "" : ",") + to_string(v);
      throw DataError("kde: covariate combination (" + name + ") has no observations");
    }
    const double h = std::max(silverman_bandwidth(ys, options.constant), floor);
    Eigen::VectorXd values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t g = 0; g < grid.bin_count(); ++g) {
      const double u = grid.centers()[static_cast<Eigen::Index>(g)];
      double acc = 0.0;
      for (std::size_t i = 0; i < ys.size(); ++i) {
        const double z = (u - ys[i]) / h;
        acc += ws[i] * std::exp(-0.5 * z * z);
      }
      values[static_cast<Eigen::Index>(g)] = acc;
    }
    if (!(values.sum() > 0.0)) {
      // Bandwidth far below the bin spacing: put the mass in the bins holding the data.
      for (std::size_t i = 0; i < ys.size(); ++i) {
        if (const auto g = grid.locate(ys[i])) values[static_cast<Eigen::Index>(*g)] += ws[i];
      }
    }
    out.emplace(cell, GridDensity::normalized(grid, std::move(values)));
  }
  return out;
}

std::string to_string(Estimator estimator) {
  return estimator == Estimator::bayes ? "bayes" : "kde";
}

StudySettings StudySettings::full_scale() {
  StudySettings s;
  s.sample_sizes = {500, 1000, 5000, 10000, 20000, 100000};
  s.replications = 1000;
  return s;
}

const McRow& McReport::row(Estimator estimator, std::size_t n, const std::string& target) const {
  for (const auto& r : rows) {
    if (r.estimator == estimator && r.n == n && r.target == target) return r;
  }
  throw ConfigError("mc report: no row for " + to_string(estimator) + ", n=" + std::to_string(n) +
                    ", " + target);
}

ReplicationScores score_replication(const DgpSpec& spec, const ObservationTable& treated,
                                    const ObservationTable& control, Estimator estimator,
                                    const StudySettings& settings) {
  const auto grid = Grid::uniform(ReferenceMeasure::continuous(0.0, 1.0), settings.bins);
  std::vector<CovariateVector> cells;
  for (std::size_t c = 0; c < DgpSpec::kCells; ++c) cells.push_back(DgpSpec::cell_covariates(c));

  // conditional[k][c]
  std::array<std::vector<GridDensity>, 2> conditional;
  try {
    for (const auto group : {Group::control, Group::treated}) {
      const auto& data = group == Group::treated ? treated : control;
      auto& out = conditional[static_cast<std::size_t>(group)];
      if (estimator == Estimator::bayes) {
        FitOptions options;
        options.penalty = settings.penalty;
        // Unpenalized fits on this design routinely leave tail bins empty for
        // whole covariate levels; the deviance still converges.
        options.separation = SeparationPolicy::accept;
        const auto model = fit_density_model(
            data, grid, DgpSpec::model_spec(settings.spline_count, settings.spline_degree), options);
        for (const auto& cell : cells) out.push_back(predict_density(model, cell));
      } else {
        auto kde = kde_conditional(data, grid, cells, settings.kde);
        for (const auto& cell : cells) out.push_back(kde.at(cell));
      }
    }
  } catch (const Error&) {
    return {};
  }

  // Empirical class frequencies of each group.
  std::array<std::array<double, DgpSpec::kCells>, 2> freq{};
  for (const auto group : {Group::control, Group::treated}) {
    const auto& data = group == Group::treated ? treated : control;
    auto& f = freq[static_cast<std::size_t>(group)];
    double total = 0.0;
    for (const auto& row : data.rows()) {
      const auto it = std::find(cells.begin(), cells.end(), row.covariates);
      f[static_cast<std::size_t>(it - cells.begin())] += row.weight;
      total += row.weight;
    }
    for (auto& v : f) v /= total;
  }

  ReplicationScores scores;
  scores.ok = true;
  const std::array<std::pair<Group, Group>, 4> pairs{{{Group::treated, Group::treated},
                                                      {Group::treated, Group::control},
                                                      {Group::control, Group::treated},
                                                      {Group::control, Group::control}}};
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    const auto [k, l] = pairs[t];
    Eigen::VectorXd mix = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t c = 0; c < DgpSpec::kCells; ++c) {
      mix += freq[static_cast<std::size_t>(l)][c] * conditional[static_cast<std::size_t>(k)][c].values();
    }
    const auto estimate = GridDensity::normalized(grid, std::move(mix));
    scores.tv[t] = tv_distance(estimate, true_counterfactual(spec, k, l, grid));
  }
  for (const auto group : {Group::treated, Group::control}) {
    double total = 0.0;
    for (std::size_t c = 0; c < DgpSpec::kCells; ++c) {
      total += tv_distance(conditional[static_cast<std::size_t>(group)][c],
                           true_conditional(spec, group, c, grid));
    }
    scores.tv[group == Group::treated ? 4 : 5] = total / DgpSpec::kCells;
  }
  return scores;
}

McReport run_study(const DgpSpec& spec, const StudySettings& settings) {
  spec.validate();
  if (settings.replications < 1) throw ConfigError("study: replications must be at least 1");
  const std::size_t n_sizes = settings.sample_sizes.size();
  const std::size_t n_est = settings.estimators.size();
  const std::size_t reps = settings.replications;

  // scores[(size * reps + rep) * n_est + estimator]
  std::vector<ReplicationScores> scores(n_sizes * reps * n_est);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t task = next++; task < n_sizes * reps; task = next++) {
      const std::size_t s = task / reps;
      const std::size_t rep = task % reps;
      const std::uint64_t rep_seed = settings.seed + rep;
      const auto n = settings.sample_sizes[s];
      const auto treated = simulate(spec, Group::treated, n, derive_seed(rep_seed, 1));
      const auto control = simulate(spec, Group::control, n, derive_seed(rep_seed, 0));
      for (std::size_t e = 0; e < n_est; ++e) {
        scores[task * n_est + e] =
            score_replication(spec, treated, control, settings.estimators[e], settings);
      }
    }
  };
  std::size_t threads = settings.threads ? settings.threads : std::thread::hardware_concurrency();
  threads = std::max<std::size_t>(1, std::min(threads, n_sizes * reps));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  McReport report;
  report.seed = settings.seed;
  report.requested_replications = reps;
  const double control_total = spec.raw_probability_total(Group::control);
  const double treated_total = spec.raw_probability_total(Group::treated);
  for (const auto& [name, total] : {std::pair{"control", control_total}, std::pair{"treated", treated_total}}) {
    if (std::abs(total - 1.0) > 1e-12) {
      std::ostringstream os;
      os.precision(17);
      os << name << " class probabilities summed to " << total << " and were renormalized";
      report.notes.push_back(os.str());
    }
  }

  // Means in replication order so the report does not depend on scheduling.
  for (std::size_t e = 0; e < n_est; ++e) {
    for (std::size_t s = 0; s < n_sizes; ++s) {
      for (std::size_t t = 0; t < study_targets().size(); ++t) {
        double sum = 0.0, sum_sq = 0.0;
        std::size_t ok = 0;
        for (std::size_t rep = 0; rep < reps; ++rep) {
          const auto& sc = scores[(s * reps + rep) * n_est + e];
          if (!sc.ok) continue;
          sum += sc.tv[t];
          sum_sq += sc.tv[t] * sc.tv[t];
          ++ok;
        }
        McRow row;
        row.estimator = settings.estimators[e];
        row.n = settings.sample_sizes[s];
        row.target = study_targets()[t];
        row.replications = ok;
        row.failed = reps - ok;
        if (ok > 0) {
          row.mean_tv = sum / static_cast<double>(ok);
          const double var = ok > 1 ? std::max(0.0, (sum_sq - ok * row.mean_tv * row.mean_tv) /
                                                        static_cast<double>(ok - 1))
                                    : 0.0;
          row.standard_error = std::sqrt(var / static_cast<double>(ok));
        } else {
          row.mean_tv = std::numeric_limits<double>::quiet_NaN();
          row.standard_error = std::numeric_limits<double>::quiet_NaN();
        }
        report.rows.push_back(row);
      }
    }
  }
  return report;
}

}  // namespace cfdens
