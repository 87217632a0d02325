#pragma once

#include <string>
#include <vector>

#include "ghyena/longconv.hpp"

namespace ghyena {

struct CheckResult {
  std::string name;
  bool pass;
  std::string detail;
};

int count_failures(const std::vector<CheckResult>& results);

// FFT-path convolutions vs O(N^2) brute-force oracles over
// N in {1,2,3,5,8,16,64,257}, rel err < 1e-10 (64-bit). The plan parameter
// exists so tests can inject a corrupted Levi-Civita table.
std::vector<CheckResult> oracle_suite(const LeviCivitaPlan& plan = LeviCivitaPlan::standard());

// SO(3)/SE(3) equivariance of every layer and the full model under random
// group elements; block/model tolerance 1e-8, kernels 1e-10.
std::vector<CheckResult> equivariance_suite(uint64_t seed, int group_elements = 20);

// Per-primitive analytic vs central-difference gradients (20 seeds, 1e-5) and
// the end-to-end 2-block model MSE gradcheck (eps 1e-6, 1e-4).
std::vector<CheckResult> gradcheck_suite(uint64_t seed);

// Every toggle combination forward-executes; the published ablation rows get
// a short training budget; kv-norm instability detector results included.
std::vector<CheckResult> ablation_suite(uint64_t seed);

struct StabilityResult {
  double exponent_norm_on;
  double exponent_norm_off;
  bool pass;  // on <= 1.1 and off >= 2.5
};

// Output-magnitude growth exponent vs input scale over {1,10,100,1000}.
StabilityResult kv_norm_stability(uint64_t seed);

}  // namespace ghyena
