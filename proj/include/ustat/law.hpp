#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ustat/rng.hpp"

namespace ustat {

/// An observation. Scalar laws use only the first coordinate.
using Point = std::array<double, 2>;

inline Point scalar(double x) { return Point{x, 0.0}; }

/// Ordered observations sharing one dimension (1 or 2).
class Sample {
 public:
  Sample() = default;
  Sample(std::vector<Point> points, int dim);
  static Sample from_scalars(std::span<const double> xs);

  std::size_t size() const noexcept { return points_.size(); }
  int dim() const noexcept { return dim_; }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Point> points() const noexcept { return points_; }
  std::vector<double> coordinate(int c) const;

 private:
  std::vector<Point> points_;
  int dim_ = 1;
};

/// A law P on the observation space.
class Law {
 public:
  enum class Kind { Uniform01, Normal, FiniteSupport, BivariateNormal, LabeledUniform01 };

  static Law uniform01();
  static Law normal(double mean, double sd);
  static Law finite_support(std::vector<Point> points, std::vector<double> probs, int dim = 1);
  /// Uniform law on the rows of an observed population.
  static Law empirical(const Sample& population);
  static Law bivariate_normal(std::array<double, 2> mean, std::array<std::array<double, 2>, 2> cov);
  /// X ~ Uniform(0,1) and a label Y in {0,1} with P(Y = 1 | X = x) = x;
  /// points are (x, y).
  static Law labeled_uniform01();

  Kind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  std::string name() const;

  Point draw(Rng& rng) const;
  Sample sample(std::size_t n, Rng& rng) const;

  /// Maps u in (0,1)^dim to a point through the (conditional) quantile
  /// transform; used for quasi-random test grids.
  Point quantile_point(std::span<const double> u) const;

  /// Exact E[X_coord^k] where available.
  std::optional<double> raw_moment(int coord, int k) const;

  const std::vector<Point>& support() const noexcept { return points_; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  double mean_param() const noexcept { return mean_[0]; }
  double sd_param() const noexcept { return sd_; }
  const std::array<double, 2>& mean2() const noexcept { return mean_; }
  const std::array<std::array<double, 2>, 2>& cov2() const noexcept { return cov_; }

 private:
  Law() = default;

  Kind kind_ = Kind::Uniform01;
  int dim_ = 1;
  std::array<double, 2> mean_{0.0, 0.0};
  double sd_ = 1.0;
  std::array<std::array<double, 2>, 2> cov_{};
  std::array<std::array<double, 2>, 2> chol_{};
  std::vector<Point> points_;
  std::vector<double> probs_;
  std::vector<double> cdf_;
};

}  // namespace ustat
