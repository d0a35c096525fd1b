#pragma once

#include <cstdint>
#include <random>

namespace chainperturb {

// Independent random substream identified by (master seed, stream index).
// Each trajectory or replicate owns one, so results do not depend on the
// order in which worker threads pick up work.
class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, std::uint64_t stream_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                      static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(stream_index),
                      static_cast<std::uint32_t>(stream_index >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
  }

  // Uniform on [0, 1) with 53 random bits; identical across standard
  // library implementations.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace chainperturb
