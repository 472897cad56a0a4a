#pragma once

#include <cstdint>
#include <span>

namespace rswitch {

// Counter-based stream generator: output g = mix(key + golden * counter).
// Streams derived from (master seed, stream id) are independent and
// reproducible bit-for-bit across platforms; distributions are hand-rolled
// so no implementation-defined std::random behavior leaks in.
class Rng {
 public:
  Rng(uint64_t master_seed, uint64_t stream);

  uint64_t next_u64();

  // Uniform on the open interval (0, 1).
  double uniform01();
  double uniform(double lo, double hi);

  double normal();                       // standard normal, Box-Muller
  double cauchy(double scale);           // symmetric, location 0
  double gamma(double shape);            // scale 1, Marsaglia-Tsang
  double beta(double a, double b);
  long poisson(double mean);
  int bernoulli(double p);

  uint64_t master_seed() const { return master_; }
  uint64_t stream() const { return stream_; }

 private:
  uint64_t master_ = 0, stream_ = 0, key_ = 0, ctr_ = 0;
};

}  // namespace rswitch
