#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ustat {

/// Neumaier-compensated accumulator. Used for every sum that can run over
/// many terms (tuple enumerations, Monte Carlo averages).
class KahanSum {
 public:
  KahanSum& add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
    return *this;
  }
  KahanSum& operator+=(double x) noexcept { return add(x); }
  KahanSum& operator+=(const KahanSum& other) noexcept {
    add(other.sum_);
    add(other.comp_);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Welford running mean/variance.
class RunningStats {
 public:
  void push(double x) noexcept {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept {
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
  }
  double sd() const noexcept { return std::sqrt(variance()); }
  double standard_error() const noexcept {
    return count_ > 0 ? sd() / std::sqrt(static_cast<double>(count_)) : 0.0;
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// A Monte Carlo point estimate with its standard error.
struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

Estimate mean_and_se(std::span<const double> xs);
double sample_sd(std::span<const double> xs);
double median(std::vector<double> xs);
double quantile(std::vector<double> xs, double q);

/// binom(n, k) as a double; exact while the result fits in 53 bits.
double binomial(std::size_t n, std::size_t k);
double factorial(int k);

/// Two-sample Kolmogorov–Smirnov distance sup_t |F_a(t) - F_b(t)|.
/// Ties across and within samples are handled by stepping over equal values.
double ks_distance(std::span<const double> a, std::span<const double> b);

/// Radical-inverse Halton point (bases are the first `dim` primes). The
/// sequence starts at index 1, so no coordinate equals 0.
std::vector<double> halton_point(std::size_t index, std::size_t dim);

}  // namespace ustat
