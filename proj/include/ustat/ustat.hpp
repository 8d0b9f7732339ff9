#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ustat/kernel.hpp"
#include "ustat/law.hpp"

namespace ustat {

enum class Normalization {
  BinomialAverage,   // divide by binom(n, m)
  RawSum,            // sum over i_1 < ... < i_m
  DistinctTupleSum,  // sum over pairwise distinct i_1, ..., i_m
};

struct UStatValue {
  double value = 0.0;
  int m = 0;
  std::size_t n = 0;
  Normalization normalization = Normalization::BinomialAverage;
};

inline constexpr double kMaxUStatTuples = 1e9;
inline constexpr double kMaxDecoupledTuples = 1e8;

UStatValue ustat(const Sample& sample, const Kernel& kernel,
                 Normalization normalization = Normalization::BinomialAverage);

/// e_m(t) = sum_{i_1<...<i_m} t_{i_1}...t_{i_m}, from power sums through
/// Newton's recurrence e_k = (1/k) sum_j (-1)^{j-1} e_{k-j} p_j.
/// Integer inputs are handled in exact 128-bit arithmetic; otherwise the
/// recurrence runs in extended precision.
double elementary_symmetric(std::span<const double> t, int m);

/// e_0 .. e_m in extended precision.
std::vector<long double> elementary_symmetric_all(std::span<const double> t, int m);

/// Newton polynomial R_m evaluated at power-sum arguments b_1..b_m, so that
/// R_m(p_1(t), ..., p_m(t)) = e_m(t).
double newton_polynomial(std::span<const double> power_sums, int m);

/// (1/binom(n,m)) sum_{i_1<...<i_m} xi_{i_1}...xi_{i_m} f(X_{i_1},...).
/// Separable kernels take the O(n m) path through elementary_symmetric.
UStatValue multiplier_ustat(const Sample& sample, std::span<const double> weights,
                            const Kernel& kernel,
                            Normalization normalization = Normalization::BinomialAverage);

/// multiplier_ustat with weights xi_i - 1.
UStatValue centered_multiplier_ustat(const Sample& sample, std::span<const double> weights,
                                     const Kernel& kernel,
                                     Normalization normalization = Normalization::BinomialAverage);

/// Brute-force reference for multiplier_ustat (always enumerates).
UStatValue multiplier_ustat_enumerated(const Sample& sample, std::span<const double> weights,
                                       const Kernel& kernel,
                                       Normalization normalization = Normalization::BinomialAverage);

/// m independent sample copies with m independent Rademacher sign arrays.
struct DecoupledData {
  std::vector<Sample> copies;
  std::vector<std::vector<int>> signs;

  static DecoupledData draw(const Law& law, int m, std::size_t length, Rng& rng);
  std::size_t length() const noexcept { return copies.empty() ? 0 : copies.front().size(); }
};

/// max_f |sum_{i_k <= caps_k} eps^(1)_{i_1}...eps^(m)_{i_m} f(X^(1)_{i_1},...,X^(m)_{i_m})|
/// by full enumeration.
double decoupled_sym_sup(const FunctionClass& cls, const DecoupledData& data,
                         std::span<const std::size_t> caps);

/// The same supremum for every cap vector in {1..L}^m at once, through
/// m-dimensional prefix sums. Entry for caps (l_1..l_m) sits at
/// sum_k (l_k - 1) L^(m-1-k).
std::vector<double> decoupled_sym_sup_table(const FunctionClass& cls, const DecoupledData& data);

}  // namespace ustat
