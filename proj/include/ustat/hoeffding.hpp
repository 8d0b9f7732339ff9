#pragma once

#include <cstdint>
#include <vector>

#include "ustat/kernel.hpp"
#include "ustat/law.hpp"

namespace ustat {

enum class ProjectionMethod { Symbolic, FiniteSupportExact, MonteCarlo };

struct ProjectionConfig {
  ProjectionMethod method = ProjectionMethod::Symbolic;
  std::size_t n_mc = 100000;  // MonteCarlo only
  std::uint64_t seed = 0;     // MonteCarlo only
};

/// pi_k f = (delta_{x_1} - P) x ... x (delta_{x_k} - P) x P^{m-k} f.
///
/// Symbolic: separable kernels with exact factor means; the result is
/// separable again. FiniteSupportExact: exact sums over the support.
/// MonteCarlo: nested MC with n_mc common draws; projections built from
/// the same (n_mc, seed) share draws, which keeps the reconstruction
/// identity exact draw by draw.
Kernel hoeffding_project(const Kernel& kernel, const Law& law, int k, const ProjectionConfig& config);

struct HoeffdingDecomposition {
  Kernel base;
  Law law;
  std::vector<Kernel> projections;      // pi_0 .. pi_m
  ProjectionMethod method;
  std::vector<double> error_estimates;  // per projection; 0 for exact methods
  std::size_t n_mc = 0;
};

HoeffdingDecomposition decompose(const Kernel& kernel, const Law& law, const ProjectionConfig& config);

struct DegeneracyOptions {
  std::size_t n_mc = 100000;
  double tol_sd = 4.0;
  /// Compare conditional means against 0 instead of an estimate of P^m f.
  bool centered = false;
  std::size_t grid_points = 32;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct DegeneracyReport {
  bool pass = false;
  double max_standardized = 0.0;
  std::vector<Point> worst_point;  // fixed arguments of the worst offender
  double target = 0.0;             // constant the conditional means are compared against
  double target_se = 0.0;
  std::size_t points_checked = 0;
};

/// Checks that integrating out all but the first `claimed_order` arguments
/// gives a constant (P-degenerate of order `claimed_order`).
DegeneracyReport check_degeneracy(const Kernel& kernel, const Law& law, int claimed_order,
                                  const DegeneracyOptions& options = {});

/// Degenerate of order m-1 and P-centered; what the multiplier inequality needs.
DegeneracyReport check_complete_degeneracy(const Kernel& kernel, const Law& law,
                                           const DegeneracyOptions& options = {});

struct Reconstruction {
  double residual = 0.0;        // |U_n(f) - sum_k binom(m,k) U_n^(k)(pi_k f)|
  double ustat_value = 0.0;
  double standard_error = 0.0;  // from projection error estimates
};

Reconstruction reconstruct(const HoeffdingDecomposition& decomp, const Sample& sample);

}  // namespace ustat
