#include "ustat/numeric.hpp"

#include <algorithm>
#include <array>

#include "ustat/error.hpp"

namespace ustat {

Estimate mean_and_se(std::span<const double> xs) {
  RunningStats stats;
  for (double x : xs) stats.push(x);
  return {stats.mean(), stats.standard_error()};
}

double sample_sd(std::span<const double> xs) {
  RunningStats stats;
  for (double x : xs) stats.push(x);
  return stats.sd();
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of empty vector");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level outside [0,1]");
  std::sort(xs.begin(), xs.end());
  // linear interpolation between order statistics (type 7)
  const double h = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  long double r = 1.0L;
  for (std::size_t i = 1; i <= k; ++i) {
    r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
  }
  return static_cast<double>(std::round(r));
}

double factorial(int k) {
  double r = 1.0;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

double ks_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::InvalidArgument, "KS distance needs two non-empty samples");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double na = static_cast<double>(x.size());
  const double nb = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == t) ++i;
    while (j < y.size() && y[j] == t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

std::vector<double> halton_point(std::size_t index, std::size_t dim) {
  static constexpr std::array<unsigned, 12> primes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  if (dim > primes.size()) throw Error(ErrorCode::InvalidArgument, "Halton dimension too large");
  std::vector<double> u(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const unsigned base = primes[d];
    double f = 1.0;
    double r = 0.0;
    std::size_t i = index + 1;
    while (i > 0) {
      f /= base;
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    u[d] = r;
  }
  return u;
}

}  // namespace ustat
