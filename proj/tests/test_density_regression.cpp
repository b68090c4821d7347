#include "cfdens/density_regression.hpp"
#include "cfdens/errors.hpp"
#include "cfdens/sim_benchmark.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace cfdens;

namespace {

ObservationTable binary_sample(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.4);
  std::gamma_distribution<double> g2(2.0), g3(3.0), g1(1.0);
  ObservationTable t({"x"}, "g");
  for (std::size_t i = 0; i < n; ++i) {
    const bool b = coin(rng);
    const double a = b ? g2(rng) : g1(rng);
    const double c = b ? g1(rng) : g3(rng);
    t.add(a / (a + c), {std::string(b ? "b" : "a")});
  }
  return t;
}

ModelSpec binary_spec(std::size_t count, std::size_t degree) {
  ModelSpec spec;
  spec.effects = {PartialEffectSpec::categorical("x", {"a", "b"}, "a")};
  spec.spline_count = count;
  spec.spline_degree = degree;
  return spec;
}

}  // namespace

TEST_CASE("binning and pooling") {
  const auto grid = oracle::unit_grid(10);
  SUBCASE("single row at a bin centre") {
    ObservationTable t({}, "g");
    t.add(0.35, {});
    const auto p = bin_and_pool(t, grid);
    CHECK(p.counts.rows() == 1);
    CHECK(p.counts(0, 3) == 1.0);
    CHECK(p.counts.sum() == 1.0);
  }
  SUBCASE("weights pool within a combination") {
    ObservationTable t({"x"}, "g");
    t.add(0.51, {std::string("a")}, 0.5);
    t.add(0.52, {std::string("a")}, 1.5);
    const auto p = bin_and_pool(t, grid);
    CHECK(p.combinations.size() == 1);
    CHECK(p.counts(0, 5) == 2.0);
    CHECK(p.totals[0] == 2.0);
  }
  SUBCASE("interior edges belong to the upper bin") {
    ObservationTable t({}, "g");
    t.add(grid.edges()[4], {});
    CHECK(bin_and_pool(t, grid).counts(0, 4) == 1.0);
  }
  SUBCASE("outcomes outside the support are rejected") {
    ObservationTable t({}, "g");
    t.add(1.5, {});
    CHECK_THROWS_AS(bin_and_pool(t, grid), DataError);
  }
  SUBCASE("atom outcomes land in atom cells") {
    const auto mixed = Grid::uniform(ReferenceMeasure(Interval{0.0, 1.0}, {{2.0, 1.0}}), 10);
    ObservationTable t({}, "g");
    t.add(2.0, {}, 3.0);
    CHECK(bin_and_pool(t, mixed).counts(0, 10) == 3.0);
  }
}

TEST_CASE("class probabilities") {
  const auto grid = Grid::uniform(ReferenceMeasure(Interval{0.0, 2.0}, {{3.0, 0.5}}), 4);
  ObservationTable t({}, "g");
  t.add(0.1, {});
  const auto basis = build_additive_basis(t, grid, ModelSpec{{}, 4, 2});
  const auto row = basis->covariate_row({});
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis->coefficient_count()));
  auto p = class_probabilities(*basis, theta, row);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  for (Eigen::Index g = 0; g < p.size(); ++g) CHECK(p[g] == doctest::Approx(grid.widths()[g] / 2.5));

  theta[1] = 0.7;
  p = class_probabilities(*basis, theta, row);
  const auto& m = basis->outcome().matrix();
  CHECK(p[0] / p[4] == doctest::Approx(grid.widths()[0] / grid.widths()[4] * std::exp(0.7 * (m(0, 1) - m(4, 1)))));
  theta[1] = 800.0;
  p = class_probabilities(*basis, theta, row);
  CHECK(p.allFinite());
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("intercept-only fit reproduces cell frequencies") {
  const auto grid = oracle::unit_grid(3);
  ObservationTable t({}, "g");
  const double ys[] = {0.1, 0.5, 0.9};
  const double counts[] = {10, 30, 60};
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < counts[c]; ++k) t.add(ys[c], {});
  }
  const auto model = fit_density_model(t, grid, ModelSpec{{}, 3, 1});
  const auto p = class_probabilities(model.basis(), model.theta(), model.basis().covariate_row({}));
  CHECK(p[0] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(model.report().converged);
}

TEST_CASE("saturated binary model matches histograms and the multinomial maximizer") {
  const auto grid = oracle::unit_grid(10);
  const auto data = binary_sample(4000, 21);
  const auto model = fit_density_model(data, grid, binary_spec(10, 3));
  const auto pooled = bin_and_pool(data, grid);
  REQUIRE(pooled.counts.minCoeff() > 0.0);
  for (std::size_t i = 0; i < pooled.combinations.size(); ++i) {
    const auto f = predict_density(model, pooled.combinations[i]);
    CHECK((f.values() - oracle::histogram_density(pooled, i)).cwiseAbs().maxCoeff() < 1e-6);
  }
  const auto direct = oracle::multinomial_maximizer(model.basis(), pooled);
  CHECK((direct - model.theta()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("non-saturated fit agrees with the multinomial maximizer and is optimal") {
  const auto grid = oracle::unit_grid(30);
  const auto data = binary_sample(1500, 4);
  const auto model = fit_density_model(data, grid, binary_spec(6, 3));
  const auto pooled = bin_and_pool(data, grid);
  const auto direct = oracle::multinomial_maximizer(model.basis(), pooled);
  CHECK((direct - model.theta()).cwiseAbs().maxCoeff() < 1e-6);

  const double best = multinomial_loglik(model.basis(), model.theta(), pooled);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01(0.0, 0.05);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd theta = model.theta();
    for (auto& t : theta) t += n01(rng);
    CHECK(multinomial_loglik(model.basis(), theta, pooled) <= best);
  }

  SUBCASE("report and information") {
    const auto& trace = model.report().deviance_trace;
    for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] <= trace[k - 1] * (1.0 + 1e-12));
    CHECK(model.report().score_norm < 1e-6);
    const auto& info = model.fisher_information();
    CHECK((info - info.transpose()).cwiseAbs().maxCoeff() < 1e-8 * info.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
    CHECK(es.eigenvalues().minCoeff() > -1e-8);
  }
  SUBCASE("row order does not matter") {
    auto rows = data.rows();
    std::shuffle(rows.begin(), rows.end(), std::mt19937_64(99));
    ObservationTable shuffled(data.schema(), data.group());
    for (const auto& r : rows) shuffled.add(r.outcome, r.covariates, r.weight);
    const auto again = fit_density_model(shuffled, grid, binary_spec(6, 3));
    CHECK((again.theta() - model.theta()).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("partial effects add up to the clr of the prediction") {
    const CovariateVector x{std::string("b")};
    Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
    total += predict_partial(model, 0, CovariateValue{1.0}).values();
    total += predict_partial(model, 1, x[0]).values();
    CHECK((total - clr(predict_density(model, x)).values()).cwiseAbs().maxCoeff() < 1e-10);
    const auto ref = predict_density(model, {std::string("a")});
    const auto intercept = clr_inverse(predict_partial(model, 0, CovariateValue{1.0}));
    CHECK((ref.values() - intercept.values()).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("unseen level") {
    CHECK_THROWS_AS(predict_density(model, {std::string("z")}), DataError);
  }
}

TEST_CASE("heavy penalty shrinks to the uniform density") {
  const auto grid = oracle::unit_grid(20);
  const auto data = binary_sample(500, 2);
  FitOptions options;
  options.penalty = 1e6;
  const auto model = fit_density_model(data, grid, binary_spec(8, 3), options);
  CHECK(model.theta().cwiseAbs().maxCoeff() < 1e-3);
  for (const char* level : {"a", "b"}) {
    const auto f = predict_density(model, {std::string(level)});
    CHECK((f.values().array() - 1.0).abs().maxCoeff() < 1e-3);
  }
}

TEST_CASE("separation policy") {
  const auto grid = oracle::unit_grid(20);
  ObservationTable t({}, "g");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  for (int i = 0; i < 400; ++i) t.add(u(rng), {});  // upper half of the support is empty
  CHECK_THROWS_AS(fit_density_model(t, grid, ModelSpec{{}, 12, 3}), SeparationError);
  FitOptions accept;
  accept.separation = SeparationPolicy::accept;
  const auto model = fit_density_model(t, grid, ModelSpec{{}, 12, 3}, accept);
  CHECK(model.report().separated);
  const auto f = predict_density(model, {});
  CHECK(f.values().tail(10).sum() * 0.05 < 1e-4);
  FitOptions ridge;
  ridge.penalty = 1e-2;
  CHECK(fit_density_model(t, grid, ModelSpec{{}, 12, 3}, ridge).report().converged);
}

TEST_CASE("log-likelihoods") {
  SUBCASE("uniform theta") {
    const auto grid = Grid::uniform(ReferenceMeasure::continuous(0.0, 2.0), 25);
    ObservationTable t({}, "g");
    for (int i = 0; i < 40; ++i) t.add(0.05 * i, {});
    const auto basis = build_additive_basis(t, grid, ModelSpec{{}, 8, 3});
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis->coefficient_count()));
    CHECK(bayes_loglik(*basis, zero, t) == doctest::Approx(-40.0 * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("the multinomial version approaches the Bayes version as bins shrink") {
    const auto data = binary_sample(800, 17);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n01(0.0, 0.5);
    Eigen::VectorXd theta;
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t bins : {25, 50, 100, 200}) {
      const auto grid = oracle::unit_grid(bins);
      const auto basis = build_additive_basis(data, grid, binary_spec(8, 3));
      if (theta.size() == 0) {
        theta.resize(static_cast<Eigen::Index>(basis->coefficient_count()));
        for (auto& v : theta) v = n01(rng);
      }
      const double multinomial = multinomial_loglik(*basis, theta, bin_and_pool(data, grid));
      const double gap = std::abs(multinomial - bayes_loglik(*basis, theta, data));
      CHECK(gap < previous);
      previous = gap;
    }
  }
}

TEST_CASE("Wald region draws") {
  const auto grid = oracle::unit_grid(20);
  const auto data = binary_sample(2000, 6);
  const auto model = fit_density_model(data, grid, binary_spec(6, 3));
  CHECK(sample_theta(model, 0.05, 0, 1).empty());

  const auto draws = sample_theta(model, 0.05, 200, 42);
  REQUIRE(draws.size() == 200);
  const double radius = wald_radius(model.theta().size(), 0.05);
  for (const auto& d : draws) CHECK(wald_statistic(model, d) <= radius);
  const auto again = sample_theta(model, 0.05, 200, 42);
  for (std::size_t b = 0; b < draws.size(); ++b) CHECK((draws[b] - again[b]).cwiseAbs().maxCoeff() == 0.0);

  const auto pinned = sample_theta(model, 1.0, 3, 42);
  for (const auto& d : pinned) CHECK((d - model.theta()).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("the truncated Gaussian is centred at the estimate") {
    const std::size_t b = 10000;
    const auto many = sample_theta(model, 0.05, b, 7);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(model.theta().size());
    for (const auto& d : many) mean += d;
    mean /= static_cast<double>(b);
    const Eigen::VectorXd sd = model.fisher_information().inverse().diagonal().cwiseSqrt();
    const Eigen::VectorXd z = (mean - model.theta()).cwiseQuotient(sd) * std::sqrt(static_cast<double>(b));
    CHECK(z.cwiseAbs().maxCoeff() < 4.0);
    CHECK(z.cwiseAbs().mean() < 1.2);
  }
}

TEST_CASE("grid refinement changes fitted densities only slightly") {
  const auto spec = DgpSpec::beta_mixture();
  FitOptions options;
  options.separation = SeparationPolicy::accept;
  const auto coarse_grid = oracle::unit_grid(50);
  const auto fine_grid = oracle::unit_grid(200);
  for (std::uint64_t seed : {5, 77, 123}) {
    const auto data = simulate(spec, Group::treated, 5000, seed);
    const auto coarse = fit_density_model(data, coarse_grid, DgpSpec::model_spec(), options);
    const auto fine = fit_density_model(data, fine_grid, DgpSpec::model_spec(), options);
    // Separated fits stop wherever the drifting tail coefficients happen to be,
    // so they only get the looser bound.
    const bool separated = coarse.report().separated || fine.report().separated;
    const double bound = separated ? 0.02 : 0.01;
    for (std::size_t cell = 0; cell < DgpSpec::kCells; ++cell) {
      const auto x = DgpSpec::cell_covariates(cell);
      const auto fc = predict_density(coarse, x);
      const auto ff = predict_density(fine, x);
      Eigen::VectorXd aggregated(50);
      for (Eigen::Index g = 0; g < 50; ++g) aggregated[g] = ff.values().segment(4 * g, 4).mean();
      CAPTURE(seed);
      CAPTURE(cell);
      CHECK(tv_distance(fc, GridDensity::normalized(coarse_grid, aggregated)) < bound);
    }
  }
}
