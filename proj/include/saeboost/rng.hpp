#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sae {

// Every random stream in the toolkit is a pure function of
// (master seed, stream name, index), so reruns and concurrent
// schedules see the same draws.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform();      // [0, 1)
  double uniform_pos();  // (0, 1]
  double uniform(double lo, double hi);
  double normal(double mean, double sd);
  std::size_t uniform_index(std::size_t n);  // {0, ..., n-1}

  // SRSWOR: k distinct indices out of {0, ..., n-1}.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace sae
