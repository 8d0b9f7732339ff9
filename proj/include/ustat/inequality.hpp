#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ustat/kernel.hpp"
#include "ustat/law.hpp"
#include "ustat/numeric.hpp"
#include "ustat/weights.hpp"

namespace ustat {

/// 2^{2m} prod_{k=2}^m (k^k - 1); the empty product gives 4 at m = 1.
double K_m(int m);

/// Tabulated bound psi(l_1, ..., l_m) on the decoupled Rademacher sup for
/// caps in {0..n}^m. Any zero cap gives 0.
struct PsiEnvelope {
  int m = 1;
  std::size_t n = 0;
  std::vector<double> values;  // (n+1)^m, row-major in (l_1, ..., l_m)
  bool monotonized = false;
  std::size_t reps = 0;
  double inflation_z = 0.0;
  std::optional<double> power_gamma;
  std::optional<double> kappa0;

  double at(std::span<const std::size_t> caps) const;

  static PsiEnvelope zero(int m, std::size_t n);
  /// kappa0 prod_k l_k^{1/gamma}.
  static PsiEnvelope power_law(int m, std::size_t n, double kappa0, double gamma);
};

struct PsiOptions {
  std::size_t reps = 1000;
  double inflation_z = 4.0;
  bool check_degeneracy = true;
  std::size_t degeneracy_mc = 10000;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// MC mean + z SE of the decoupled sup at every cap vector, followed by a
/// running max along each axis.
PsiEnvelope estimate_psi(const FunctionClass& cls, const Law& law, std::size_t n, const PsiOptions& options);

/// Least kappa0 with envelope <= kappa0 prod l_k^{1/gamma} on the grid.
double fit_kappa0(const PsiEnvelope& env, double gamma);

/// int_{R_+^m} psi(N(t_1), ..., N(t_m)) dt with N(t) = #{i : |xi_i| > t},
/// exact through the order statistics of |xi|.
double exact_count_integral(const PsiEnvelope& env, std::span<const double> xi);

/// K_m times the MC mean of exact_count_integral over weight draws.
Estimate multiplier_rhs(const PsiEnvelope& env, const WeightScheme& scheme, std::size_t n, std::size_t reps,
                       std::uint64_t seed);

/// K_m kappa0 ||xi||_{m gamma, 1}^m n^{m / gamma}.
double rhs_corollary23(double kappa0, double gamma, const WeightScheme& scheme, int m, std::size_t n);

/// MC estimate of E max_f |sum over all i_1..i_m in [n]^m of xi_{i_1}...xi_{i_m} f(X_{i_1}, ...)|.
Estimate lhs_estimate(const FunctionClass& cls, const Law& law, const WeightScheme& scheme, std::size_t n,
                      std::size_t reps, std::uint64_t seed, int threads = 1);

struct InequalityConfig {
  std::string label;
  FunctionClass cls;
  Law law;
  WeightScheme scheme;
  std::size_t n = 10;
  std::size_t lhs_reps = 2000;
  std::size_t rhs_reps = 2000;
  PsiOptions psi;
  /// Precomputed envelope (e.g. shared across n, or the zero envelope).
  std::optional<PsiEnvelope> envelope;
};

struct InequalityReport {
  std::string label;
  int m = 1;
  std::size_t n = 0;
  std::string scheme;
  Estimate lhs;
  Estimate rhs;
  double K = 0.0;
  double margin = 0.0;  // rhs - (lhs - 4 se)
  bool pass = false;
};

InequalityReport check_inequality(const InequalityConfig& config);

/// Standard test classes: centered Legendre powers of degree 1..3, and
/// signed mixtures of them.
FunctionClass legendre_class(int m);
FunctionClass legendre_mixture_class(int m);

enum class HuskovaMode { Exhaustive, MonteCarlo };

struct HuskovaResult {
  double lhs = 0.0;         // |E_R prod_i (xi_{R_i} - 1)^{alpha_i}|
  double lhs_signed = 0.0;
  double lhs_se = 0.0;      // MonteCarlo only
  double scale = 0.0;       // n^{-l} [sum (xi_i - 1)^2]^{sum alpha / 2}
  double fitted_c = 0.0;    // lhs / scale (0 when both vanish)
  std::size_t l = 0;
  int sum_alpha = 0;
};

HuskovaResult huskova_check(std::span<const double> weights, std::span<const int> alpha, HuskovaMode mode,
                            std::size_t reps = 0, std::uint64_t seed = 0);

}  // namespace ustat
