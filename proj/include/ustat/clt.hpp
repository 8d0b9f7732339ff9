#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ustat/hoeffding.hpp"
#include "ustat/kernel.hpp"
#include "ustat/law.hpp"
#include "ustat/weights.hpp"

namespace ustat {

/// Gaussian chaos K_P(f) for f = sum_q c_q psi_q^{(x)m} with centered psi_q.
struct ChaosSpec {
  int m = 1;
  std::vector<double> coeffs;
  std::vector<std::vector<double>> sigma;  // P(psi_q psi_q')

  /// Reads coefficients and factor covariances off a separable kernel.
  /// Terms with zero coefficient are dropped.
  static ChaosSpec from_kernel(const Kernel& kernel, const Law& law);

  std::vector<double> second_moments() const;
};

/// R_m(b_1, ..., b_m), the Newton polynomial.
double eval_R_m(std::span<const double> b, int m);

/// Draws sum_q c_q sqrt(m!) R_m(G_q, E psi_q^2, 0, ..., 0) with G ~ N(0, sigma).
std::vector<double> sample_chaos(const ChaosSpec& spec, std::size_t n_draws, std::uint64_t seed);

/// Upper `level` quantile of KS(replicates-sized chaos sample, reference-sized
/// chaos sample) over `reps` independent pairs: the noise floor of a KS check.
double null_ks_quantile(const ChaosSpec& spec, std::size_t replicates, std::size_t reference,
                        std::size_t reps, double level, std::uint64_t seed);

struct CltConfig {
  std::size_t n = 500;
  std::size_t B = 2000;
  std::size_t ref_draws = 50000;
  std::size_t c2_reps = 1000;
  std::size_t degeneracy_mc = 10000;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct CltExperimentResult {
  std::string kind;
  std::vector<double> replicates;  // binom(n,m)^{1/2} U
  std::vector<double> reference;   // (c-hat) K_P draws
  double ks = 0.0;
  double c_hat = 1.0;
  double c_hat_se = 0.0;
  std::uint64_t data_seed = 0;
  std::uint64_t weight_seed = 0;
  std::uint64_t reference_seed = 0;
};

/// Fresh (sample, multipliers) per replicate; compares with K_P.
CltExperimentResult multiplier_clt_experiment(const Kernel& kernel, const Law& law, const WeightScheme& scheme,
                                              const CltConfig& config);

/// One frozen sample, B bootstrap weight draws of the centered multiplier
/// statistic; compares with c-hat K_P.
CltExperimentResult bootstrap_clt_experiment(const Kernel& kernel, const Law& law, const WeightScheme& scheme,
                                             const CltConfig& config);

}  // namespace ustat
