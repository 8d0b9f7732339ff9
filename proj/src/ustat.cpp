#include "ustat/ustat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ustat/error.hpp"
#include "ustat/numeric.hpp"

namespace ustat {

namespace {

double normalize(double raw_sum, std::size_t n, int m, Normalization normalization) {
  switch (normalization) {
    case Normalization::BinomialAverage: return raw_sum / binomial(n, static_cast<std::size_t>(m));
    case Normalization::RawSum: return raw_sum;
    case Normalization::DistinctTupleSum: return raw_sum * factorial(m);
  }
  return raw_sum;
}

void require_size(std::size_t n, int m) {
  if (n < static_cast<std::size_t>(m)) {
    throw Error(ErrorCode::SampleTooSmall,
                "sample of size " + std::to_string(n) + " is smaller than kernel order " + std::to_string(m));
  }
}

void require_enumerable(std::size_t n, int m) {
  if (binomial(n, static_cast<std::size_t>(m)) > kMaxUStatTuples) {
    throw Error(ErrorCode::EnumerationTooLarge,
                "binom(" + std::to_string(n) + "," + std::to_string(m) + ") exceeds the enumeration cap");
  }
}

/// Calls visit(idx) for every increasing m-tuple of {0..n-1}.
template <typename Visit>
void for_each_combination(std::size_t n, int m, Visit&& visit) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (m == 0) {
    visit(idx);
    return;
  }
  const auto mm = static_cast<std::size_t>(m);
  while (true) {
    visit(idx);
    std::size_t k = mm;
    while (k > 0 && idx[k - 1] == n - mm + (k - 1)) --k;
    if (k == 0) return;
    ++idx[k - 1];
    for (std::size_t j = k; j < mm; ++j) idx[j] = idx[j - 1] + 1;
  }
}

bool all_small_integers(std::span<const double> t) {
  return std::all_of(t.begin(), t.end(),
                     [](double v) { return std::isfinite(v) && v == std::trunc(v) && std::abs(v) < 0x1.0p52; });
}

/// Exact integer Newton recurrence; nullopt on 128-bit overflow.
std::optional<__int128> elementary_symmetric_int(std::span<const double> t, int m) {
  const auto mm = static_cast<std::size_t>(m);
  std::vector<__int128> p(mm + 1, 0);
  for (double v : t) {
    const auto x = static_cast<__int128>(static_cast<long long>(v));
    __int128 pw = 1;
    for (std::size_t j = 1; j <= mm; ++j) {
      if (__builtin_mul_overflow(pw, x, &pw)) return std::nullopt;
      if (__builtin_add_overflow(p[j], pw, &p[j])) return std::nullopt;
    }
  }
  std::vector<__int128> e(mm + 1, 0);
  e[0] = 1;
  for (std::size_t k = 1; k <= mm; ++k) {
    __int128 acc = 0;
    for (std::size_t j = 1; j <= k; ++j) {
      __int128 term;
      if (__builtin_mul_overflow(e[k - j], p[j], &term)) return std::nullopt;
      if (j % 2 == 0) term = -term;
      if (__builtin_add_overflow(acc, term, &acc)) return std::nullopt;
    }
    e[k] = acc / static_cast<__int128>(k);
  }
  return e[mm];
}

std::vector<long double> newton_from_power_sums(std::span<const long double> p, int m) {
  const auto mm = static_cast<std::size_t>(m);
  std::vector<long double> e(mm + 1, 0.0L);
  e[0] = 1.0L;
  for (std::size_t k = 1; k <= mm; ++k) {
    long double acc = 0.0L;
    for (std::size_t j = 1; j <= k; ++j) {
      const long double term = e[k - j] * p[j];
      acc += (j % 2 == 1) ? term : -term;
    }
    e[k] = acc / static_cast<long double>(k);
  }
  return e;
}

}  // namespace

UStatValue ustat(const Sample& sample, const Kernel& kernel, Normalization normalization) {
  const int m = kernel.order();
  const std::size_t n = sample.size();
  require_size(n, m);
  require_enumerable(n, m);
  const auto pts = sample.points();
  std::vector<Point> args(static_cast<std::size_t>(m));
  KahanSum sum;
  for_each_combination(n, m, [&](const std::vector<std::size_t>& idx) {
    for (std::size_t k = 0; k < idx.size(); ++k) args[k] = pts[idx[k]];
    sum += kernel(args);
  });
  return {normalize(sum.value(), n, m, normalization), m, n, normalization};
}

std::vector<long double> elementary_symmetric_all(std::span<const double> t, int m) {
  if (m < 0) throw Error(ErrorCode::OrderOutOfRange, "elementary symmetric order must be non-negative");
  const auto mm = static_cast<std::size_t>(m);
  std::vector<long double> p(mm + 1, 0.0L);
  for (double v : t) {
    long double pw = 1.0L;
    for (std::size_t j = 1; j <= mm; ++j) {
      pw *= static_cast<long double>(v);
      p[j] += pw;
    }
  }
  auto e = newton_from_power_sums(p, m);
  for (std::size_t k = t.size() + 1; k <= mm; ++k) e[k] = 0.0L;
  return e;
}

double elementary_symmetric(std::span<const double> t, int m) {
  if (m < 0) throw Error(ErrorCode::OrderOutOfRange, "elementary symmetric order must be non-negative");
  if (m == 0) return 1.0;
  if (static_cast<std::size_t>(m) > t.size()) return 0.0;
  if (all_small_integers(t)) {
    if (auto exact = elementary_symmetric_int(t, m)) return static_cast<double>(*exact);
  }
  return static_cast<double>(elementary_symmetric_all(t, m)[static_cast<std::size_t>(m)]);
}

double newton_polynomial(std::span<const double> power_sums, int m) {
  if (m < 0) throw Error(ErrorCode::OrderOutOfRange, "Newton polynomial order must be non-negative");
  if (power_sums.size() < static_cast<std::size_t>(m)) {
    throw Error(ErrorCode::LengthMismatch, "R_m needs m power-sum arguments");
  }
  std::vector<long double> p(static_cast<std::size_t>(m) + 1, 0.0L);
  for (int j = 1; j <= m; ++j) p[static_cast<std::size_t>(j)] = power_sums[static_cast<std::size_t>(j - 1)];
  return static_cast<double>(newton_from_power_sums(p, m)[static_cast<std::size_t>(m)]);
}

UStatValue multiplier_ustat_enumerated(const Sample& sample, std::span<const double> weights,
                                       const Kernel& kernel, Normalization normalization) {
  const int m = kernel.order();
  const std::size_t n = sample.size();
  if (weights.size() != n) throw Error(ErrorCode::LengthMismatch, "weights and sample lengths differ");
  require_size(n, m);
  require_enumerable(n, m);
  const auto pts = sample.points();
  std::vector<Point> args(static_cast<std::size_t>(m));
  KahanSum sum;
  for_each_combination(n, m, [&](const std::vector<std::size_t>& idx) {
    double w = 1.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      w *= weights[idx[k]];
      args[k] = pts[idx[k]];
    }
    if (w != 0.0) sum += w * kernel(args);
  });
  return {normalize(sum.value(), n, m, normalization), m, n, normalization};
}

UStatValue multiplier_ustat(const Sample& sample, std::span<const double> weights, const Kernel& kernel,
                            Normalization normalization) {
  const int m = kernel.order();
  const std::size_t n = sample.size();
  if (weights.size() != n) throw Error(ErrorCode::LengthMismatch, "weights and sample lengths differ");
  require_size(n, m);
  const SeparableForm* sep = kernel.separable();
  if (sep == nullptr) return multiplier_ustat_enumerated(sample, weights, kernel, normalization);
  std::vector<double> t(n);
  KahanSum sum;
  for (std::size_t q = 0; q < sep->coeffs.size(); ++q) {
    if (sep->coeffs[q] == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) t[i] = weights[i] * sep->factors[q](sample[i]);
    sum += sep->coeffs[q] * elementary_symmetric(t, m);
  }
  return {normalize(sum.value(), n, m, normalization), m, n, normalization};
}

UStatValue centered_multiplier_ustat(const Sample& sample, std::span<const double> weights,
                                     const Kernel& kernel, Normalization normalization) {
  std::vector<double> centered(weights.begin(), weights.end());
  for (double& w : centered) w -= 1.0;
  return multiplier_ustat(sample, centered, kernel, normalization);
}

DecoupledData DecoupledData::draw(const Law& law, int m, std::size_t length, Rng& rng) {
  if (m < 1) throw Error(ErrorCode::OrderOutOfRange, "decoupling needs m >= 1");
  if (length < 1) throw Error(ErrorCode::SampleTooSmall, "decoupled copies need length >= 1");
  DecoupledData data;
  for (int k = 0; k < m; ++k) {
    data.copies.push_back(law.sample(length, rng));
    std::vector<int> eps(length);
    for (auto& e : eps) e = (rng() >> 63) ? 1 : -1;
    data.signs.push_back(std::move(eps));
  }
  return data;
}

namespace {

void check_decoupled(const FunctionClass& cls, const DecoupledData& data) {
  const auto m = static_cast<std::size_t>(cls.order());
  if (data.copies.size() != m || data.signs.size() != m) {
    throw Error(ErrorCode::LengthMismatch, "decoupled data must have one copy per kernel argument");
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (data.copies[k].size() != data.length() || data.signs[k].size() != data.length()) {
      throw Error(ErrorCode::LengthMismatch, "decoupled copies have unequal lengths");
    }
  }
}

}  // namespace

double decoupled_sym_sup(const FunctionClass& cls, const DecoupledData& data,
                         std::span<const std::size_t> caps) {
  check_decoupled(cls, data);
  const auto m = static_cast<std::size_t>(cls.order());
  if (caps.size() != m) throw Error(ErrorCode::LengthMismatch, "one cap per kernel argument required");
  double total = 1.0;
  for (std::size_t c : caps) {
    if (c > data.length()) throw Error(ErrorCode::CapOutOfRange, "cap exceeds copy length");
    total *= static_cast<double>(c);
  }
  if (total * static_cast<double>(cls.size()) > kMaxDecoupledTuples) {
    throw Error(ErrorCode::EnumerationTooLarge, "decoupled enumeration exceeds the cap");
  }
  if (total == 0.0) return 0.0;
  std::vector<std::size_t> idx(m, 0);
  std::vector<Point> args(m);
  double best = 0.0;
  for (const Kernel& f : cls.kernels()) {
    KahanSum sum;
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      int sign = 1;
      for (std::size_t k = 0; k < m; ++k) {
        sign *= data.signs[k][idx[k]];
        args[k] = data.copies[k][idx[k]];
      }
      sum += sign * f(args);
      std::size_t k = m;
      while (k > 0) {
        if (++idx[k - 1] < caps[k - 1]) break;
        idx[k - 1] = 0;
        --k;
      }
      if (k == 0) break;
    }
    best = std::max(best, std::abs(sum.value()));
  }
  return best;
}

std::vector<double> decoupled_sym_sup_table(const FunctionClass& cls, const DecoupledData& data) {
  check_decoupled(cls, data);
  const auto m = static_cast<std::size_t>(cls.order());
  const std::size_t len = data.length();
  const double cells = std::pow(static_cast<double>(len), static_cast<double>(m));
  if (cells * static_cast<double>(cls.size()) > kMaxDecoupledTuples) {
    throw Error(ErrorCode::EnumerationTooLarge, "decoupled table exceeds the cap");
  }
  const auto total = static_cast<std::size_t>(cells);
  std::vector<double> best(total, 0.0);
  std::vector<double> table(total);
  std::vector<std::size_t> stride(m, 1);
  for (std::size_t k = m - 1; k-- > 0;) stride[k] = stride[k + 1] * len;
  std::vector<Point> args(m);

  for (const Kernel& f : cls.kernels()) {
    if (const SeparableForm* sep = f.separable()) {
      // value(l) = sum_q c_q prod_k S_k^q(l_k) with per-axis prefix sums S
      std::fill(table.begin(), table.end(), 0.0);
      std::vector<std::vector<double>> prefix(m, std::vector<double>(len));
      for (std::size_t q = 0; q < sep->coeffs.size(); ++q) {
        for (std::size_t k = 0; k < m; ++k) {
          KahanSum run;
          for (std::size_t i = 0; i < len; ++i) {
            run += data.signs[k][i] * sep->factors[q](data.copies[k][i]);
            prefix[k][i] = run.value();
          }
        }
        for (std::size_t cell = 0; cell < total; ++cell) {
          double prod = sep->coeffs[q];
          for (std::size_t k = 0; k < m; ++k) prod *= prefix[k][(cell / stride[k]) % len];
          table[cell] += prod;
        }
      }
    } else {
      for (std::size_t cell = 0; cell < total; ++cell) {
        int sign = 1;
        for (std::size_t k = 0; k < m; ++k) {
          const std::size_t i = (cell / stride[k]) % len;
          sign *= data.signs[k][i];
          args[k] = data.copies[k][i];
        }
        table[cell] = sign * f(args);
      }
      // inclusive prefix sums along each axis in turn
      for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t cell = 0; cell < total; ++cell) {
          if ((cell / stride[k]) % len != 0) table[cell] += table[cell - stride[k]];
        }
      }
    }
    for (std::size_t cell = 0; cell < total; ++cell) best[cell] = std::max(best[cell], std::abs(table[cell]));
  }
  return best;
}

}  // namespace ustat
