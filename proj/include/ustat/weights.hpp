#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ustat/law.hpp"
#include "ustat/numeric.hpp"
#include "ustat/rng.hpp"

namespace ustat {

/// Generator of multiplier / bootstrap weight vectors.
struct WeightScheme {
  enum class Kind {
    IidGaussian,
    IidRademacher,
    IidPareto,    // P(xi > t) = t^-alpha, t >= 1
    IidUniform01,
    EfronMultinomial,
    BayesianBootstrap,
    Constant,     // xi_i = value for all i; value 1 is the degenerate bootstrap
  };

  Kind kind = Kind::IidGaussian;
  double param = 0.0;  // alpha for IidPareto, value for Constant

  static WeightScheme gaussian() { return {Kind::IidGaussian, 0.0}; }
  static WeightScheme rademacher() { return {Kind::IidRademacher, 0.0}; }
  static WeightScheme pareto(double alpha) { return {Kind::IidPareto, alpha}; }
  static WeightScheme uniform01() { return {Kind::IidUniform01, 0.0}; }
  static WeightScheme efron() { return {Kind::EfronMultinomial, 0.0}; }
  static WeightScheme bayesian() { return {Kind::BayesianBootstrap, 0.0}; }
  static WeightScheme constant(double value) { return {Kind::Constant, value}; }

  std::string name() const;
  bool is_iid() const noexcept;
  /// Mean zero and variance one: valid for the multiplier CLT.
  bool is_centered_unit_variance() const noexcept;
  /// Limit of n^-1 sum (xi_i - 1)^2 when known in closed form.
  std::optional<double> declared_c2() const;
  /// Whether ||xi_1||_{p,1} is finite.
  bool lp1_finite(double p) const;
};

std::vector<double> gen_weights(const WeightScheme& scheme, std::size_t n, Rng& rng);
std::vector<double> gen_weights(const WeightScheme& scheme, std::size_t n, std::uint64_t seed);

/// Monte Carlo mean of n^-1 sum (xi_i - 1)^2 with its standard error.
Estimate estimate_c2(const WeightScheme& scheme, std::size_t n, std::size_t n_reps, std::uint64_t seed);

/// Distribution of |xi| described through its tail t -> P(|xi| > t).
struct TailMarginal {
  std::function<double(double)> tail;
  std::optional<double> upper;          // support bound of |xi|
  std::vector<double> atoms;            // set for purely discrete marginals
  std::vector<double> atom_probs;
  std::optional<double> pareto_alpha;   // polynomial tail exponent
  std::string name;

  static TailMarginal of(const Law& law, int coord = 0);
  static TailMarginal of(const WeightScheme& scheme, std::size_t n);
};

struct QuadratureConfig {
  double tolerance = 1e-10;
  std::size_t max_refinements = 15;
};

struct Lp1Result {
  double p = 1.0;
  bool infinite = false;
  double value = 0.0;
  double error = 0.0;  // quadrature (or truncation) error estimate
};

/// ||xi||_{p,1} = int_0^inf P(|xi| > t)^{1/p} dt.
Lp1Result lp1_norm(const TailMarginal& marginal, double p, const QuadratureConfig& config = {});
Lp1Result lp1_norm(const WeightScheme& scheme, std::size_t n, double p, const QuadratureConfig& config = {});
Lp1Result lp1_norm(const Law& law, double p, const QuadratureConfig& config = {});

/// Empirical-tail version: `n_draws` draws, t-integral truncated at the
/// empirical 1 - 1e-5 quantile; `error` reports the dropped tail piece.
Lp1Result lp1_norm_mc(const std::function<double(Rng&)>& draw, double p, std::size_t n_draws,
                      std::uint64_t seed);

struct WeightValidationLevel {
  std::size_t n = 0;
  Estimate max_term;  // n^-1 max_i (xi_i - 1)^2
  Estimate c2;
};

struct WeightValidation {
  bool w1_pass = false;
  bool multiplier_only = false;  // fails W1, usable only as an iid multiplier
  std::string w1_failure;
  std::vector<WeightValidationLevel> levels;  // n/4, n/2, n
  bool max_term_decreasing = false;
};

WeightValidation validate_W(const WeightScheme& scheme, std::size_t n, std::size_t n_reps,
                            std::uint64_t seed);

}  // namespace ustat
