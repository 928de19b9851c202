#include "nodemap/priors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace nodemap;
using namespace nodemap::priors;

TEST_CASE("scaled distance on a 20x20 grid") {
  // Centre at (10.5, 10.5); corner distance 9.5 * sqrt(2).
  CHECK(scaled_distance(10, 10, 20, 20) == doctest::Approx(1.0 / 19.0).epsilon(1e-14));
  CHECK(scaled_distance(1, 1, 20, 20) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(scaled_distance(20, 1, 20, 20) == doctest::Approx(1.0).epsilon(1e-15));
  for (int r = 1; r <= 20; ++r)
    for (int c = 1; c <= 20; ++c) {
      const double d = scaled_distance(r, c, 20, 20);
      CHECK(d == doctest::Approx(scaled_distance(21 - r, c, 20, 20)).epsilon(1e-15));
      CHECK(d == doctest::Approx(scaled_distance(c, r, 20, 20)).epsilon(1e-15));
      CHECK(d >= 1.0 / 19.0 - 1e-15);
      CHECK(d <= 1.0 + 1e-15);
    }
  CHECK(scaled_distance(1, 1, 1, 1) == 0.0);
}

TEST_CASE("background score") {
  CHECK(background_score(1.0, 5.0) == 0.97);
  CHECK(background_score(0.5, 5.0) == 0.5);
  CHECK(background_score(0.7, 5.0) == doctest::Approx(std::pow(0.7, 0.2)).epsilon(1e-15));
  CHECK(background_score(0.7, 1.0) == doctest::Approx(0.7));
  CHECK(background_score(0.56, 5.0) == 0.56);
  CHECK(background_score(0.99, 1.0) == 0.97);
}

TEST_CASE("position parameters sum to one") {
  for (double w : {0.0, 0.1, 0.56, 0.97}) {
    const auto a = position_params(w);
    CHECK(a[0] + a[1] + a[2] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(a[0] == a[1]);
    CHECK(a[2] == w);
  }
}

TEST_CASE("position field invariants") {
  for (double rho : {1.0, 5.0}) {
    const auto f = position_field(20, 20, rho);
    REQUIRE(f.pixels() == 400);
    double dmin = 2, dmax = -1;
    for (int i = 0; i < 400; ++i) {
      const auto s = static_cast<std::size_t>(i);
      dmin = std::min(dmin, f.d[s]);
      dmax = std::max(dmax, f.d[s]);
      CHECK(f.omega[s] <= 0.97);
      CHECK(f.omega[s] >= 0.0);
      CHECK(f.alpha[s][2] == f.omega[s]);
      CHECK(f.alpha[s][0] + f.alpha[s][1] + f.alpha[s][2] == doctest::Approx(1.0));
      CHECK(f.alpha[s][0] > 0.0);
    }
    CHECK(dmin == doctest::Approx(1.0 / 19.0));
    CHECK(dmax == doctest::Approx(1.0));
    CHECK(f.omega[0] == 0.97);
    CHECK(f.omega[399] == 0.97);
  }
  SUBCASE("omega is non-decreasing in d") {
    const auto f = position_field(20, 20, 5.0);
    std::vector<std::size_t> order(400);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return f.d[a] < f.d[b]; });
    // A jump at the fringe threshold is expected; within each branch omega rises with d.
    for (std::size_t i = 1; i < order.size(); ++i)
      CHECK(f.omega[order[i]] >= f.omega[order[i - 1]] - 1e-15);
  }
  CHECK_THROWS_AS(position_field(0, 3, 1.0), InputError);
  CHECK_THROWS_AS(position_field(3, 3, 0.0), InputError);
}

TEST_CASE("group priors") {
  std::mt19937_64 rng(2);
  dimred::PriorMoments pm;
  pm.normal = {testing::random_matrix(2, 1, rng).col(0), testing::random_spd(2, rng), 10};
  pm.metastatic = {testing::random_matrix(2, 1, rng).col(0), testing::random_spd(2, rng), 10};
  const dimred::Moments nn{testing::random_matrix(2, 1, rng).col(0), testing::random_spd(2, rng), 10};

  const auto g = build_group_priors(pm, &nn, PriorWeights{});
  CHECK(g[0].nu == 4.0);
  CHECK(g[2].nu == 4.0);
  CHECK(g[0].lambda_inv == pm.normal.cov);
  CHECK(g[1].mu == pm.metastatic.mean);
  CHECK(g[2].lambda_inv == nn.cov);
  CHECK(g[0].k_diag == Eigen::Vector2d(5.0, 2.0));
  CHECK(g[1].k_diag == Eigen::Vector2d(3.0, 1.25));
  CHECK(g[2].k_diag == Eigen::Vector2d(3.85, 10.0));

  CHECK_THROWS_WITH_AS(build_group_priors(pm, nullptr, PriorWeights{}), doctest::Contains("priors.nonnodal"),
                       InputError);
}

TEST_CASE("prior weight diagonal padding") {
  CHECK(weight_diagonal({5.0, 2.0}, 4) == Eigen::Vector4d(5.0, 2.0, 2.0, 2.0));
  CHECK(weight_diagonal({5.0, 2.0}, 1) == Eigen::Matrix<double, 1, 1>(5.0));
  CHECK_THROWS_AS(weight_diagonal({}, 2), InputError);
  CHECK_THROWS_AS(weight_diagonal({1.0, -1.0}, 2), InputError);
}

TEST_CASE("prior validation") {
  GroupPrior g;
  g.mu = Vector::Zero(2);
  g.k_diag = Vector::Ones(2);
  g.nu = 4.0;
  g.lambda_inv = Matrix::Identity(2, 2);
  CHECK_NOTHROW(validate(g));
  g.lambda_inv(0, 0) = -1.0;
  CHECK_THROWS_AS(validate(g), InputError);
  g.lambda_inv = Matrix::Identity(2, 2);
  g.nu = 0.5;
  CHECK_THROWS_AS(validate(g), InputError);
}
