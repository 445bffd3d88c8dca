// Apache License, Version 2.0, refer to LICENSE.txt

#include <doctest.h>

#include "support/fixtures.hpp"

#include <algorithm>

using namespace tvc;

namespace {

bool mentions(const std::vector<std::string>& issues, const std::string& word) {
  return std::any_of(issues.begin(), issues.end(),
                     [&](const std::string& s) { return s.find(word) != std::string::npos; });
}

struct Consistent {
  ModelConfig config;
  Dataset data;
};

Consistent consistent_pair(int K) {
  fixture::Dims d;
  d.K = K;
  d.r = 3;
  d.T = 12;
  d.M = 3;
  Rng rng(4);
  ModelConfig config = fixture::small_config(d);
  config.decay_rates.assign(static_cast<std::size_t>(K), {1.0 / 24.0, 1.0 / 3.0, 1.0});
  const Design design = synthetic_design(d.n, d.T, d.M, d.p_x, rng);
  return {config, fixture::to_dataset(design, std::vector<MatrixXd>(static_cast<std::size_t>(d.n),
                                                                    MatrixXd::Zero(d.T, K)))};
}

}  // namespace

TEST_CASE("hourly, eight-hourly and daily decay grid validates") {
  const auto p = consistent_pair(2);
  CHECK(validate_config(p.config, p.data).empty());
  CHECK(validate_config(p.config).empty());
}

TEST_CASE("non-increasing decay rates are reported once") {
  fixture::Dims d;
  d.K = 1;
  d.r = 2;
  ModelConfig config = fixture::small_config(d);
  config.decay_rates = {{1.0, 1.0 / 3.0}};
  const auto issues = validate_config(config);
  REQUIRE(issues.size() == 1);
  CHECK(mentions(issues, "increasing"));
}

TEST_CASE("non-contiguous partitions are reported once") {
  auto p = consistent_pair(1);
  p.config.n_partitions = 2;
  const int T = 3;
  p.data.times = VectorXd::LinSpaced(T, 0.0, T - 1.0);
  p.data.partition_of = {0, 1, 0};
  for (auto* cube : {&p.data.y, &p.data.x, &p.data.z})
    for (auto& mtx : *cube) mtx = mtx.topRows(T).eval();
  const auto issues = validate_config(p.config, p.data);
  REQUIRE(issues.size() == 1);
  CHECK(mentions(issues, "contiguous"));
}

TEST_CASE("dimension mismatches between config and data are reported") {
  auto p = consistent_pair(2);
  SUBCASE("site count") {
    p.config.n_sites = 5;
    CHECK_FALSE(validate_config(p.config, p.data).empty());
  }
  SUBCASE("component count") {
    p.data.y[1] = MatrixXd::Zero(p.data.n_times(), 3);
    CHECK_FALSE(validate_config(p.config, p.data).empty());
  }
  SUBCASE("covariate rows") {
    p.data.x[0] = MatrixXd::Zero(p.data.n_times() - 1, p.data.p_x());
    CHECK_FALSE(validate_config(p.config, p.data).empty());
  }
  SUBCASE("times not increasing") {
    p.data.times[3] = p.data.times[2];
    CHECK_FALSE(validate_config(p.config, p.data).empty());
  }
}

TEST_CASE("state validator flags broken invariants") {
  auto prob = fixture::random_problem({}, 5);
  const auto T = prob.model.T(), px = prob.model.p_x(), pz = prob.model.p_z();
  REQUIRE(validate_state(prob.truth, prob.config, T, px, pz).empty());
  SUBCASE("diagonal of A") {
    prob.truth.coreg(1, 1) = 0.9;
    CHECK_FALSE(validate_state(prob.truth, prob.config, T, px, pz).empty());
  }
  SUBCASE("upper triangle of A") {
    prob.truth.coreg(0, 1) = 0.1;
    CHECK_FALSE(validate_state(prob.truth, prob.config, T, px, pz).empty());
  }
  SUBCASE("nonpositive tau2") {
    prob.truth.tau2[0] = 0.0;
    CHECK_FALSE(validate_state(prob.truth, prob.config, T, px, pz).empty());
  }
  SUBCASE("stale counts") {
    prob.truth.clusters.dps[0].counts[0] += 1;
    CHECK_FALSE(validate_state(prob.truth, prob.config, T, px, pz).empty());
  }
}

TEST_CASE("retained draw schedule") {
  McmcSchedule s;
  s.n_iterations = 150000;
  s.burn_in = 50000;
  s.thin = 10;
  CHECK(s.retained_draws() == 10000);
  CHECK_FALSE(s.retains(50000));
  CHECK(s.retains(50010));
  CHECK(s.retains(150000));
}
