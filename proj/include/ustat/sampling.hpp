#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ustat/kernel.hpp"
#include "ustat/law.hpp"
#include "ustat/mestimation.hpp"
#include "ustat/numeric.hpp"

namespace ustat {

struct Design {
  enum class Kind { Bernoulli, PoissonUnequal, Srswor, Stratified };
  Kind kind = Kind::Bernoulli;
  double p = 1.0;                      // Bernoulli
  double pi0 = 0.01;                   // floor on every pi_i
  std::size_t n_of_N = 0;              // Srswor; 0 means use fraction
  double fraction = 0.0;               // Srswor sample fraction
  std::vector<double> strata_bounds;   // increasing cut points on z
  std::vector<std::size_t> strata_n;   // per-stratum sample sizes
  std::vector<double> strata_fraction; // used when strata_n is empty

  static Design bernoulli(double p, double pi0 = 0.01);
  /// pi_i = clamp(pi0 + (1 - pi0) logistic(z_i), pi0, 1).
  static Design poisson_unequal(double pi0);
  static Design srswor(std::size_t n_of_N, double pi0 = 0.01);
  static Design srswor_fraction(double fraction, double pi0 = 0.01);
  static Design stratified(std::vector<double> bounds, std::vector<std::size_t> sizes, double pi0 = 0.01);
  static Design stratified_fraction(std::vector<double> bounds, std::vector<double> fractions, double pi0 = 0.01);

  std::string name() const;
  bool independent() const noexcept { return kind == Kind::Bernoulli || kind == Kind::PoissonUnequal; }
  bool needs_z() const noexcept { return kind == Kind::PoissonUnequal || kind == Kind::Stratified; }
};

struct DesignDraw {
  std::vector<double> xi;           // 0/1
  std::vector<double> pi;
  std::vector<int> stratum;         // Srswor: all 0; independent designs: empty
  std::vector<double> stratum_pair; // pi_ij for i != j in the same stratum

  std::size_t size() const noexcept { return xi.size(); }
  std::size_t sample_size() const;
  /// pi_ij for i != j.
  double pair_probability(std::size_t i, std::size_t j) const;
  /// xi_i / pi_i.
  std::vector<double> ht_weights() const;
  static DesignDraw full(std::size_t N);
};

/// First-order inclusion probabilities of the design for a population of
/// size N; throws B1Violation when any falls below pi0.
DesignDraw design_probabilities(const Design& design, std::size_t N, std::span<const double> z = {});
DesignDraw draw_design(const Design& design, std::size_t N, std::span<const double> z, std::uint64_t seed);

/// (1 / (m! binom(N, m))) sum over distinct tuples of prod(xi/pi) f.
double ht_ustat(const Sample& sample, const DesignDraw& draw, const Kernel& kernel);

/// Exact design expectation of ht_ustat for m = 2 through pi_ij.
double ht_ustat_expectation(const Sample& sample, const DesignDraw& probabilities, const Kernel& kernel);

std::vector<double> ht_m_estimator(const MCriterion& problem, const Sample& sample, const DesignDraw& draw,
                                   const Optimizer& optimizer);

struct HtBiasResult {
  std::size_t N = 0;
  double full_value = 0.0;       // ustat on the whole population
  Estimate ht;                   // MC mean of ht_ustat over design draws
  double mc_bias = 0.0;          // ht.mean - full_value
  std::optional<double> exact_bias;
  double z_unbiased = 0.0;       // mc_bias / ht.se
};

/// Fixed population, `reps` design draws.
HtBiasResult ht_bias_experiment(const Sample& population, const Design& design, const Kernel& kernel,
                                std::span<const double> z, std::size_t reps, std::uint64_t seed, int threads = 1);

struct LinearizationLevel {
  std::size_t N = 0;
  double rms = 0.0;
  double rms_se = 0.0;
  double max_abs = 0.0;
};

/// RMS over `reps` populations of |sqrt(N)(theta_hat^pi - theta0) - m V^{-1} G_N^pi Delta|.
/// z is taken as the first coordinate of X for designs that need it.
std::vector<LinearizationLevel> linearization_check(const MCriterion& problem, const Law& law, const Design& design,
                                                    std::span<const std::size_t> Ns, std::size_t reps,
                                                    const Optimizer& optimizer, std::uint64_t seed, int threads = 1);

struct ErmProblem {
  std::string name;
  Law law = Law::uniform01();
  std::vector<Kernel> kernels;
  std::vector<double> labels;       // parameter of each kernel
  std::vector<double> excess_risk;  // E_P(f) per kernel, minimum 0
  /// Optional fast path: sum_{i != j} w_i w_j f(Z_i, Z_j) for every kernel.
  std::function<std::vector<double>(const Sample&, std::span<const double>)> criteria;

  /// Rankers s_tau(x) = 1{x >= tau} on labeled Uniform01 data with pairwise
  /// misranking loss, tau on a grid of the given step.
  static ErmProblem threshold_ranking(double step = 0.05);
  static ErmProblem singleton(Kernel kernel, Law law, double excess);

  std::vector<double> criterion_values(const Sample& sample, std::span<const double> weights) const;
};

/// Population pairwise risk of the threshold ranker at tau.
double threshold_ranking_risk(double tau);
/// Pairwise loss 1{y != y'} [1{(y - y')(s - s') < 0} + 1{s = s'} / 2].
Kernel threshold_ranking_kernel(double tau);

struct ErmLevel {
  std::size_t N = 0;
  std::vector<double> excess;  // per replicate
  double median = 0.0;
  double mean = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

std::vector<ErmLevel> erm_experiment(const ErmProblem& problem, const Design& design, std::span<const std::size_t> Ns,
                                     std::size_t reps, std::uint64_t seed, int threads = 1);

struct BValidationLevel {
  std::size_t N = 0;
  double sd = 0.0;                       // MC SD of N^-1 sum (xi/pi - 1)
  std::optional<double> predicted_sd;    // independent designs
  double max_abs = 0.0;
};

struct BValidation {
  bool b1_pass = false;
  std::string b1_failure;
  double min_pi = 0.0;
  std::vector<BValidationLevel> levels;  // N, 2N, 4N
  bool sd_decreasing = false;
};

BValidation validate_B(const Design& design, std::size_t N, std::size_t reps, std::uint64_t seed);

struct Population {
  Sample x;
  std::optional<std::vector<double>> z;
};

/// CSV with a header row: `x` or `x1,x2`, optional `z`.
Population read_population_csv(const std::string& path);

}  // namespace ustat
