// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/random.hpp"

#include <sstream>
#include <stdexcept>

namespace tvc {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng Rng::stream(std::uint64_t root_seed, std::uint32_t stream_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(root_seed & 0xffffffffULL),
                    static_cast<std::uint32_t>(root_seed >> 32), stream_index};
  Rng rng;
  rng.engine_.seed(seq);
  return rng;
}

double Rng::gamma(double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
}

int Rng::uniform_int(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }

Eigen::VectorXd Rng::standard_normal(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

std::string Rng::save() const {
  std::ostringstream os;
  os.precision(17);
  os << engine_ << '\n' << normal_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_ >> normal_;
  if (!is) throw std::runtime_error("corrupt RNG state");
}

}  // namespace tvc
