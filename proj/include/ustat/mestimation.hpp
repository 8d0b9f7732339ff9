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
#include "ustat/weights.hpp"

namespace ustat {

enum class DepthAlgo { Brute, Sweep };

/// sum_{i<j<k} w_i w_j w_k 1{theta in open triangle(x_i, x_j, x_k)}.
/// Zero-weight points are ignored. Sweep sorts by angle about theta and
/// subtracts the triples lying in an open half-plane, O(n log n).
double simplicial_depth(const Sample& points, const Point& theta, std::span<const double> weights = {},
                        DepthAlgo algo = DepthAlgo::Sweep);

struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;
};

struct Optimizer {
  enum class Kind { GridRefine, SimplexSearch };
  Kind kind = Kind::GridRefine;
  int levels = 3;
  int points_per_axis = 21;
  std::size_t max_iter = 500;
  double tol = 1e-10;
  std::optional<Bounds> bounds;
  /// Use the bounding box of the (positive-weight) data when bounds are absent.
  bool data_bounds = true;

  static Optimizer grid_refine(int levels, int points_per_axis) {
    Optimizer o;
    o.levels = levels;
    o.points_per_axis = points_per_axis;
    return o;
  }
  static Optimizer simplex(std::size_t max_iter, double tol) {
    Optimizer o;
    o.kind = Kind::SimplexSearch;
    o.max_iter = max_iter;
    o.tol = tol;
    return o;
  }
  /// Grid spacing after the last level, given the initial box width.
  double resolution(double width) const;
};

/// theta -> f_theta of order m, maximized through a U-statistic criterion.
struct MCriterion {
  using Objective = std::function<double(std::span<const double>)>;
  using Prepare = std::function<Objective(const Sample&, std::span<const double>)>;

  std::string name;
  int dim = 1;
  int order = 1;
  std::function<Kernel(std::span<const double>)> family;
  /// Optional fast evaluator of the weighted criterion for one dataset.
  Prepare prepare;
  std::optional<std::vector<double>> theta0;
  std::optional<std::vector<std::vector<double>>> V;
  std::function<std::vector<double>(const Point&)> delta;

  /// Weighted distinct-tuple criterion sum_{i_1 != ... != i_m} prod w f_theta
  /// (prepared criteria may differ by a positive factor and a theta-free constant).
  Objective objective(const Sample& sample, std::span<const double> weights) const;

  /// f_theta(x1, x2) = -(theta - (x1 + x2) / 2)^2, with theta0 = mu, V = 2,
  /// Delta(x) = x - mu.
  static MCriterion quadratic_mean(std::optional<double> mu = std::nullopt);
  /// f_theta = 1{theta in open triangle(x1, x2, x3)}; theta0 optional.
  static MCriterion simplicial_median(std::optional<Point> theta0 = std::nullopt);
};

/// Closed-form maximizer of the weighted quadratic criterion:
/// sum_i w_i x_i (W - w_i) / (W^2 - sum w_i^2).
double quadratic_argmax(const Sample& sample, std::span<const double> weights);

std::vector<double> fit_m_estimator(const MCriterion& problem, const Sample& sample,
                                    std::span<const double> weights, const Optimizer& optimizer);

struct BootstrapMConfig {
  std::size_t n = 300;
  std::size_t B = 1000;
  std::size_t mc_datasets = 1000;
  std::size_t c2_reps = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct BootstrapMResult {
  std::vector<double> theta_hat;
  std::vector<std::vector<double>> bootstrap;  // sqrt(n)(theta* - theta_hat)
  std::vector<std::vector<double>> sampling;   // c-hat sqrt(n)(theta_hat - theta0)
  std::vector<double> ks;                      // per coordinate
  std::vector<double> bootstrap_sd;
  std::vector<double> sampling_sd;             // without the c-hat factor
  double c_hat = 1.0;
  std::uint64_t data_seed = 0;
  std::uint64_t weight_seed = 0;
  std::uint64_t mc_seed = 0;
};

BootstrapMResult bootstrap_m_experiment(const MCriterion& problem, const Law& law, const WeightScheme& scheme,
                                        const Optimizer& optimizer, const BootstrapMConfig& config);

struct CoverageResult {
  std::size_t datasets = 0;
  std::size_t covered = 0;
  double coverage = 0.0;
  double level = 0.95;
  double cutoff = 0.0;  // chi2_d quantile at `level`
  std::vector<double> statistics;  // n (theta_hat - theta0)' S^{-1} (theta_hat - theta0)
};

/// Bootstrap confidence ellipsoids {theta : n (theta_hat - theta)' S^{-1} (theta_hat - theta) <= chi2_d(level)},
/// S the covariance of sqrt(n)(theta* - theta_hat) / c-hat^2, over independent datasets.
CoverageResult bootstrap_ci_coverage(const MCriterion& problem, const Law& law, const WeightScheme& scheme,
                                     const Optimizer& optimizer, std::size_t n, std::size_t B,
                                     std::size_t datasets, double level, std::uint64_t seed, int threads = 1);

}  // namespace ustat
