#include "nodemap/mrf.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace nodemap;
using namespace nodemap::mrf;

namespace {

priors::GroupPrior make_prior(Vector mu) {
  const auto k = mu.size();
  priors::GroupPrior g;
  g.mu = std::move(mu);
  g.k_diag = Vector::Ones(k);
  g.nu = static_cast<double>(k) + 2.0;
  g.lambda_inv = 0.5 * Matrix::Identity(k, k);
  return g;
}

priors::GroupPriors three_priors() {
  return {make_prior(Eigen::Vector2d(-3, 0)), make_prior(Eigen::Vector2d(3, 0)), make_prior(Eigen::Vector2d(0, 5))};
}

em::MixtureState state_at_priors(const priors::GroupPriors& pr, int n, int label) {
  em::MixtureState s;
  for (int j = 0; j < 3; ++j) {
    s.mu[static_cast<std::size_t>(j)] = pr[static_cast<std::size_t>(j)].mu;
    s.sigma[static_cast<std::size_t>(j)] = Matrix::Identity(2, 2);
  }
  s.y.assign(static_cast<std::size_t>(n), label);
  return s;
}

const std::array<double, 3> kThirds{1.0 / 3, 1.0 / 3, 1.0 / 3};

// Labels from a non-spatial pass, as stage 1 would hand over. A uniform
// starting field is already an ICM fixed point at large beta.
em::MixtureState initial_labels(const Matrix& x, const priors::GroupPriors& pr, const priors::PositionField& field,
                                const Neighborhood& nb) {
  auto s = state_at_priors(pr, static_cast<int>(x.rows()), 1);
  MrfConfig plain;
  plain.beta = 0.0;
  icm_sweep(x, s, field, plain, nb);
  return s;
}

}  // namespace

TEST_CASE("eight-neighbourhood") {
  const auto nb = eight_neighborhood(5, 6);
  CHECK(nb.of(pixel_index(1, 1, 6)).size() == 3);
  CHECK(nb.of(pixel_index(1, 3, 6)).size() == 5);
  CHECK(nb.of(pixel_index(3, 3, 6)).size() == 8);
  CHECK(nb.of(pixel_index(5, 6, 6)).size() == 3);
  for (int i = 0; i < 30; ++i)
    for (int q : nb.of(i)) {
      const auto& back = nb.of(q);
      CHECK(std::find(back.begin(), back.end(), i) != back.end());
      CHECK(std::abs(pixel_row(q, 6) - pixel_row(i, 6)) <= 1);
      CHECK(std::abs(pixel_col(q, 6) - pixel_col(i, 6)) <= 1);
      CHECK(q != i);
    }
  CHECK(eight_neighborhood(1, 1).of(0).empty());
}

TEST_CASE("neighbour disagreement fraction") {
  const auto nb = eight_neighborhood(3, 3);
  std::vector<int> labels(9, 1);
  CHECK(gamma_frac(4, 1, labels, nb) == 0.0);
  CHECK(gamma_frac(4, 2, labels, nb) == 1.0);
  labels[0] = 2;
  labels[8] = 3;
  CHECK(gamma_frac(4, 1, labels, nb) == 0.25);
  CHECK(gamma_frac(4, 2, labels, nb) == 7.0 / 8.0);
  // Corner pixel 1 sees pixels 0, 2, 3, 4, 5.
  CHECK(gamma_frac(1, 2, labels, nb) == 0.8);
}

TEST_CASE("conditional label prior") {
  const auto nb = eight_neighborhood(3, 3);
  const std::vector<int> labels(9, 1);
  SUBCASE("beta zero returns the position probabilities") {
    const std::array<double, 3> a{0.2, 0.3, 0.5};
    const auto p = mrf_prior(4, labels, a, 0.0, nb);
    for (int j = 0; j < 3; ++j) CHECK(p[static_cast<std::size_t>(j)] == doctest::Approx(a[static_cast<std::size_t>(j)]));
  }
  SUBCASE("beta one in a uniform neighbourhood") {
    const auto p = mrf_prior(4, labels, kThirds, 1.0, nb);
    const double e = std::exp(-1.0);
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + 2.0 * e)));
    CHECK(p[0] == doctest::Approx(0.5761).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.2119).epsilon(1e-3));
    CHECK(p[2] == p[1]);
  }
}

TEST_CASE("a lone pixel is absorbed by its neighbours at beta 15") {
  const auto pr = three_priors();
  const int rows = 5, cols = 5;
  Matrix x(25, 2);
  for (int i = 0; i < 25; ++i) x.row(i) = pr[0].mu.transpose();
  x.row(12) = Eigen::RowVector2d(1.0, 0.0);  // mildly closer to the metastatic mean
  auto s = state_at_priors(pr, 25, 1);
  s.y[12] = 2;
  const auto field = priors::uniform_field(rows, cols, kThirds);
  const auto nb = eight_neighborhood(rows, cols);
  MrfConfig cfg;
  cfg.freeze_theta = true;
  icm_sweep(x, s, field, cfg, nb);
  CHECK(s.y[12] == 1);

  SUBCASE("but stays without the spatial term") {
    auto s0 = state_at_priors(pr, 25, 1);
    s0.y[12] = 2;
    cfg.beta = 0.0;
    icm_sweep(x, s0, field, cfg, nb);
    CHECK(s0.y[12] == 2);
  }
}

TEST_CASE("frozen-theta stage 2 ends at a fixed point of the conditional argmax") {
  std::mt19937_64 rng(4);
  const auto pr = three_priors();
  const int rows = 12, cols = 12;
  Matrix x(rows * cols, 2);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int i = 0; i < rows * cols; ++i) {
    const int c = (pixel_row(i, cols) <= 6) ? 0 : (pixel_col(i, cols) <= 6 ? 1 : 2);
    x.row(i) = pr[static_cast<std::size_t>(c)].mu.transpose() + Eigen::RowVector2d(g(rng), g(rng));
  }
  const auto field = priors::position_field(rows, cols, 1.0);
  const auto nb = eight_neighborhood(rows, cols);
  for (double beta : {0.0, 1.0, 5.0, 15.0}) {
    auto s = state_at_priors(pr, rows * cols, 1);
    for (int i = 0; i < rows * cols; ++i) s.y[static_cast<std::size_t>(i)] = 1 + static_cast<int>(rng() % 3);
    MrfConfig cfg;
    cfg.beta = beta;
    cfg.freeze_theta = true;
    const auto r = run_stage2(x, s, field, pr, cfg, nb);
    REQUIRE(r.converged);
    const std::array<em::TDensity, 3> dens{em::TDensity(pr[0].mu, Matrix::Identity(2, 2), cfg.nu),
                                           em::TDensity(pr[1].mu, Matrix::Identity(2, 2), cfg.nu),
                                           em::TDensity(pr[2].mu, Matrix::Identity(2, 2), cfg.nu)};
    for (int i = 0; i < rows * cols; ++i) {
      const auto lp = conditional_log_posterior(i, x.row(i).transpose(), r.state.y, field, beta, nb, dens);
      const int label = r.state.y[static_cast<std::size_t>(i)];
      for (int j = 0; j < 3; ++j) CHECK(lp[static_cast<std::size_t>(label - 1)] >= lp[static_cast<std::size_t>(j)]);
    }
  }
}

TEST_CASE("beta zero with frozen theta labels each pixel by position-weighted density") {
  std::mt19937_64 rng(5);
  const auto pr = three_priors();
  const int rows = 10, cols = 10;
  Matrix x = testing::random_matrix(rows * cols, 2, rng, 3.0);
  const auto field = priors::position_field(rows, cols, 5.0);
  const auto nb = eight_neighborhood(rows, cols);
  MrfConfig cfg;
  cfg.beta = 0.0;
  cfg.freeze_theta = true;
  const auto r = run_stage2(x, state_at_priors(pr, rows * cols, 2), field, pr, cfg, nb);
  for (int i = 0; i < rows * cols; ++i) {
    int best = 0;
    double best_v = -1e300;
    for (int j = 0; j < 3; ++j) {
      const double v = field.alpha[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
                       std::exp(em::t_logpdf(x.row(i).transpose(), pr[static_cast<std::size_t>(j)].mu,
                                             Matrix::Identity(2, 2), cfg.nu));
      if (v > best_v) best_v = v, best = j;
    }
    CHECK(r.state.y[static_cast<std::size_t>(i)] == best + 1);
  }
  CHECK(r.sweeps <= 2);
}

TEST_CASE("a node drawn from one component is labelled uniformly") {
  std::mt19937_64 rng(6);
  const auto pr = three_priors();
  Matrix x(64, 2);
  std::normal_distribution<double> g(0.0, 0.4);
  for (int i = 0; i < 64; ++i) x.row(i) = pr[1].mu.transpose() + Eigen::RowVector2d(g(rng), g(rng));
  const auto field = priors::uniform_field(8, 8, kThirds);
  const auto nb = eight_neighborhood(8, 8);
  auto s = initial_labels(x, pr, field, nb);
  const auto r = run_stage2(x, s, field, pr, MrfConfig{}, nb);
  CHECK(r.converged);
  for (int y : r.state.y) CHECK(y == 2);
}

TEST_CASE("stage 2 updates theta from soft responsibilities") {
  std::mt19937_64 rng(7);
  const auto pr = three_priors();
  Matrix x(100, 2);
  std::normal_distribution<double> g(0.0, 0.5);
  for (int i = 0; i < 100; ++i)
    x.row(i) = pr[static_cast<std::size_t>(pixel_col(i, 10) <= 5 ? 0 : 1)].mu.transpose() +
               Eigen::RowVector2d(1.0 + g(rng), g(rng));
  const auto field = priors::uniform_field(10, 10, kThirds);
  const auto nb = eight_neighborhood(10, 10);
  auto s = initial_labels(x, pr, field, nb);
  const auto r = run_stage2(x, s, field, pr, MrfConfig{}, nb);
  CHECK(r.converged);
  // Means move from the prior means towards the shifted data.
  CHECK(r.state.mu[0](0) > pr[0].mu(0) + 0.5);
  CHECK(r.state.mu[1](0) > pr[1].mu(0) + 0.5);
  CHECK(r.changes.back() == 0);
}

TEST_CASE("isolated pixel count") {
  const auto nb = eight_neighborhood(4, 4);
  std::vector<int> labels(16, 1);
  CHECK(isolated_count(labels, nb) == 0);
  labels[pixel_index(2, 2, 4)] = 2;
  CHECK(isolated_count(labels, nb) == 1);
  labels[pixel_index(3, 3, 4)] = 2;
  CHECK(isolated_count(labels, nb) == 0);
  labels[pixel_index(1, 4, 4)] = 3;
  CHECK(isolated_count(labels, nb) == 1);
}

TEST_CASE("stage 2 config validation") {
  MrfConfig c;
  c.beta = -1.0;
  CHECK_THROWS_AS(validate(c), InputError);
  c = MrfConfig{};
  c.max_sweeps = 0;
  CHECK_THROWS_AS(validate(c), InputError);
}
