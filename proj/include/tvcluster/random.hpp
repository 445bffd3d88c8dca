// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>

namespace tvc {

// Random stream used by every stochastic operation. Its full state (engine and
// the cached normal deviate) round-trips through save/restore, so a resumed
// chain continues bit-identically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1);

  // Stream j of a root seed: the engine is seeded from
  // std::seed_seq{low32(root), high32(root), j}.
  static Rng stream(std::uint64_t root_seed, std::uint32_t stream_index);

  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double gamma(double shape, double rate);
  double inverse_gamma(double shape, double rate) { return 1.0 / gamma(shape, rate); }
  int uniform_int(int n);  // in [0, n)
  Eigen::VectorXd standard_normal(Eigen::Index n);

  std::mt19937_64& engine() { return engine_; }

  std::string save() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace tvc
