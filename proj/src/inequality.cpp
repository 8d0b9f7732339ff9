#include "ustat/inequality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ustat/error.hpp"
#include "ustat/hoeffding.hpp"
#include "ustat/ustat.hpp"

namespace ustat {

double K_m(int m) {
  if (m < 1) throw Error(ErrorCode::OrderOutOfRange, "K_m needs m >= 1");
  double k = std::pow(2.0, 2 * m);
  for (int j = 2; j <= m; ++j) k *= std::pow(static_cast<double>(j), j) - 1.0;
  return k;
}

namespace {

std::size_t grid_index(std::span<const std::size_t> caps, std::size_t side) {
  std::size_t idx = 0;
  for (std::size_t c : caps) idx = idx * side + c;
  return idx;
}

std::size_t grid_cells(int m, std::size_t side) {
  std::size_t cells = 1;
  for (int k = 0; k < m; ++k) cells *= side;
  return cells;
}

void decode(std::size_t cell, std::size_t side, std::vector<std::size_t>& caps) {
  for (std::size_t k = caps.size(); k-- > 0;) {
    caps[k] = cell % side;
    cell /= side;
  }
}

}  // namespace

double PsiEnvelope::at(std::span<const std::size_t> caps) const {
  if (caps.size() != static_cast<std::size_t>(m)) throw Error(ErrorCode::LengthMismatch, "one cap per argument");
  for (std::size_t c : caps) {
    if (c > n) throw Error(ErrorCode::EnvelopeIncomplete, "cap beyond the tabulated envelope");
  }
  return values[grid_index(caps, n + 1)];
}

PsiEnvelope PsiEnvelope::zero(int m, std::size_t n) {
  PsiEnvelope env;
  env.m = m;
  env.n = n;
  env.values.assign(grid_cells(m, n + 1), 0.0);
  env.monotonized = true;
  return env;
}

PsiEnvelope PsiEnvelope::power_law(int m, std::size_t n, double kappa0, double gamma) {
  PsiEnvelope env = zero(m, n);
  std::vector<std::size_t> caps(static_cast<std::size_t>(m));
  for (std::size_t cell = 0; cell < env.values.size(); ++cell) {
    decode(cell, n + 1, caps);
    double prod = 1.0;
    for (std::size_t c : caps) prod *= static_cast<double>(c);
    env.values[cell] = kappa0 * std::pow(prod, 1.0 / gamma);
  }
  env.power_gamma = gamma;
  env.kappa0 = kappa0;
  return env;
}

PsiEnvelope estimate_psi(const FunctionClass& cls, const Law& law, std::size_t n, const PsiOptions& options) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "envelope needs n >= 1");
  if (options.reps < 2) throw Error(ErrorCode::InvalidArgument, "envelope needs at least 2 replicates");
  const int m = cls.order();
  if (options.check_degeneracy) {
    DegeneracyOptions deg;
    deg.n_mc = options.degeneracy_mc;
    deg.seed = derive_seed(options.seed, {"psi", "degeneracy"});
    deg.threads = options.threads;
    for (const Kernel& f : cls.kernels()) {
      const auto report = check_complete_degeneracy(f, law, deg);
      if (!report.pass) {
        throw Error(ErrorCode::DegeneracyCheckFailed, "class member '" + f.name() + "' is not completely degenerate");
      }
    }
  }
  const std::size_t cells = grid_cells(m, n);
  std::vector<std::vector<double>> tables(options.reps);
  parallel_for(options.reps, options.threads, [&](std::size_t r) {
    Rng rng(derive_seed(options.seed, {"psi", r}));
    const auto data = DecoupledData::draw(law, m, n, rng);
    tables[r] = decoupled_sym_sup_table(cls, data);
  });
  PsiEnvelope env = PsiEnvelope::zero(m, n);
  env.reps = options.reps;
  env.inflation_z = options.inflation_z;
  std::vector<std::size_t> caps(static_cast<std::size_t>(m));
  std::vector<std::size_t> full(static_cast<std::size_t>(m));
  for (std::size_t cell = 0; cell < cells; ++cell) {
    RunningStats stats;
    for (const auto& t : tables) stats.push(t[cell]);
    decode(cell, n, caps);
    for (std::size_t k = 0; k < caps.size(); ++k) full[k] = caps[k] + 1;
    env.values[grid_index(full, n + 1)] = stats.mean() + options.inflation_z * stats.standard_error();
  }
  // running max along every axis
  const std::size_t side = n + 1;
  std::size_t stride = 1;
  for (int k = m - 1; k >= 0; --k) {
    for (std::size_t cell = 0; cell < env.values.size(); ++cell) {
      if ((cell / stride) % side != 0) env.values[cell] = std::max(env.values[cell], env.values[cell - stride]);
    }
    stride *= side;
  }
  env.monotonized = true;
  return env;
}

double fit_kappa0(const PsiEnvelope& env, double gamma) {
  double kappa = 0.0;
  std::vector<std::size_t> caps(static_cast<std::size_t>(env.m));
  for (std::size_t cell = 0; cell < env.values.size(); ++cell) {
    decode(cell, env.n + 1, caps);
    double prod = 1.0;
    for (std::size_t c : caps) prod *= static_cast<double>(c);
    if (prod > 0.0) kappa = std::max(kappa, env.values[cell] / std::pow(prod, 1.0 / gamma));
  }
  return kappa;
}

double exact_count_integral(const PsiEnvelope& env, std::span<const double> xi) {
  const std::size_t n = xi.size();
  if (n > env.n) throw Error(ErrorCode::EnvelopeIncomplete, "envelope does not cover caps up to n");
  // a_(1) >= ... >= a_(n) >= a_(n+1) = 0; N(t) = l on [a_(l+1), a_(l))
  std::vector<double> a(n + 2, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i + 1] = std::abs(xi[i]);
  std::sort(a.begin() + 1, a.begin() + static_cast<std::ptrdiff_t>(n) + 1, std::greater<>());
  std::vector<double> width(n + 1, 0.0);
  for (std::size_t l = 1; l <= n; ++l) width[l] = a[l] - a[l + 1];
  const auto m = static_cast<std::size_t>(env.m);
  std::vector<std::size_t> caps(m, 1);
  KahanSum total;
  while (true) {
    double w = 1.0;
    for (std::size_t c : caps) w *= width[c];
    if (w != 0.0) total += w * env.at(caps);
    std::size_t k = m;
    while (k > 0) {
      if (++caps[k - 1] <= n) break;
      caps[k - 1] = 1;
      --k;
    }
    if (k == 0) break;
  }
  return total.value();
}

Estimate multiplier_rhs(const PsiEnvelope& env, const WeightScheme& scheme, std::size_t n, std::size_t reps,
                       std::uint64_t seed) {
  if (env.n < n) throw Error(ErrorCode::EnvelopeIncomplete, "envelope tabulated only up to " + std::to_string(env.n));
  if (reps < 1) throw Error(ErrorCode::InvalidArgument, "rhs needs at least one replicate");
  std::vector<double> values(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto xi = gen_weights(scheme, n, derive_seed(seed, {"rhs", r}));
    values[r] = exact_count_integral(env, xi);
  }
  const Estimate e = mean_and_se(values);
  const double k = K_m(env.m);
  return {k * e.mean, k * e.se};
}

double rhs_corollary23(double kappa0, double gamma, const WeightScheme& scheme, int m, std::size_t n) {
  if (!(gamma > 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma must exceed 1");
  const double p = m * gamma;
  const Lp1Result norm = lp1_norm(scheme, std::max<std::size_t>(n, 1), p);
  if (norm.infinite) {
    throw Error(ErrorCode::InfiniteMomentNorm, scheme.name() + " has infinite L_{" + std::to_string(p) + ",1} norm");
  }
  return K_m(m) * kappa0 * std::pow(norm.value, m) * std::pow(static_cast<double>(n), m / gamma);
}

Estimate lhs_estimate(const FunctionClass& cls, const Law& law, const WeightScheme& scheme, std::size_t n,
                      std::size_t reps, std::uint64_t seed, int threads) {
  const int m = cls.order();
  if (!cls.all_separable() &&
      std::pow(static_cast<double>(n), m) * static_cast<double>(cls.size() * reps) > kMaxUStatTuples) {
    throw Error(ErrorCode::EnumerationTooLarge, "full-tuple enumeration exceeds the cap");
  }
  std::vector<double> values(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, {"lhs", "data", r}));
    const Sample x = law.sample(n, rng);
    const auto xi = gen_weights(scheme, n, derive_seed(seed, {"lhs", "weights", r}));
    double best = 0.0;
    for (const Kernel& f : cls.kernels()) {
      KahanSum total;
      if (const SeparableForm* sep = f.separable()) {
        // sum over all tuples factorizes: sum_q c_q (sum_i xi_i psi_q(X_i))^m
        for (std::size_t q = 0; q < sep->coeffs.size(); ++q) {
          KahanSum s;
          for (std::size_t i = 0; i < n; ++i) s += xi[i] * sep->factors[q](x[i]);
          total += sep->coeffs[q] * std::pow(s.value(), m);
        }
      } else {
        const auto mm = static_cast<std::size_t>(m);
        std::vector<std::size_t> idx(mm, 0);
        std::vector<Point> args(mm);
        while (true) {
          double w = 1.0;
          for (std::size_t k = 0; k < mm; ++k) {
            w *= xi[idx[k]];
            args[k] = x[idx[k]];
          }
          total += w * f(args);
          std::size_t k = mm;
          while (k > 0) {
            if (++idx[k - 1] < n) break;
            idx[k - 1] = 0;
            --k;
          }
          if (k == 0) break;
        }
      }
      best = std::max(best, std::abs(total.value()));
    }
    values[r] = best;
  });
  return mean_and_se(values);
}

InequalityReport check_inequality(const InequalityConfig& config) {
  const int m = config.cls.order();
  InequalityReport report;
  report.label = config.label;
  report.m = m;
  report.n = config.n;
  report.scheme = config.scheme.name();
  report.K = K_m(m);
  const PsiEnvelope env = config.envelope ? *config.envelope : estimate_psi(config.cls, config.law, config.n, config.psi);
  report.rhs = multiplier_rhs(env, config.scheme, config.n, config.rhs_reps,
                             derive_seed(config.psi.seed, {"inequality", "rhs", config.n}));
  report.lhs = lhs_estimate(config.cls, config.law, config.scheme, config.n, config.lhs_reps,
                            derive_seed(config.psi.seed, {"inequality", "lhs", config.n}), config.psi.threads);
  report.margin = report.rhs.mean - (report.lhs.mean - 4.0 * report.lhs.se);
  report.pass = report.margin >= 0.0;
  return report;
}

FunctionClass legendre_class(int m) {
  std::vector<Kernel> ks;
  for (int d = 1; d <= 3; ++d) ks.push_back(builtin::legendre_power(d, m));
  return FunctionClass(std::move(ks));
}

FunctionClass legendre_mixture_class(int m) {
  const Factor p1 = Factor::legendre(1);
  const Factor p2 = Factor::legendre(2);
  const Factor p3 = Factor::legendre(3);
  const double r3 = 1.0 / std::sqrt(3.0);
  std::vector<Kernel> ks;
  ks.push_back(Kernel::separable(m, {1.0, 1.0}, {p1, p2}, "mix(1+2)"));
  ks.push_back(Kernel::separable(m, {1.0, -1.0}, {p2, p3}, "mix(2-3)"));
  ks.push_back(Kernel::separable(m, {r3, r3, r3}, {p1, p2, p3}, "mix(1+2+3)"));
  return FunctionClass(std::move(ks));
}

namespace {

double signed_sum(std::vector<double>& pos, std::vector<double>& neg) {
  // sorted, separately accumulated: symmetric term multisets cancel exactly
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  KahanSum p;
  KahanSum q;
  for (double v : pos) p += v;
  for (double v : neg) q += v;
  return p.value() - q.value();
}

}  // namespace

HuskovaResult huskova_check(std::span<const double> weights, std::span<const int> alpha, HuskovaMode mode,
                            std::size_t reps, std::uint64_t seed) {
  const std::size_t n = weights.size();
  const std::size_t l = alpha.size();
  if (n == 0 || l == 0 || l > n) throw Error(ErrorCode::InvalidArgument, "need 1 <= l <= n");
  KahanSum total;
  KahanSum sq;
  for (double w : weights) {
    if (w < 0.0) throw Error(ErrorCode::SumConstraintViolated, "weights must be non-negative");
    total += w;
    sq += (w - 1.0) * (w - 1.0);
  }
  if (std::abs(total.value() - static_cast<double>(n)) > 1e-9) {
    throw Error(ErrorCode::SumConstraintViolated, "weights sum to " + std::to_string(total.value()) + ", not n");
  }
  HuskovaResult out;
  out.l = l;
  for (int a : alpha) {
    if (a < 1) throw Error(ErrorCode::InvalidArgument, "alpha entries must be positive");
    out.sum_alpha += a;
  }
  std::vector<double> centered(weights.begin(), weights.end());
  for (double& c : centered) c -= 1.0;
  auto term = [&](std::span<const std::size_t> idx) {
    double prod = 1.0;
    for (std::size_t i = 0; i < l; ++i) {
      for (int a = 0; a < alpha[i]; ++a) prod *= centered[idx[i]];
    }
    return prod;
  };

  if (mode == HuskovaMode::Exhaustive) {
    if (n > 8) throw Error(ErrorCode::InvalidArgument, "exhaustive mode needs n <= 8");
    // only the first l positions of R matter: average over injective l-tuples
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<double> pos;
    std::vector<double> neg;
    std::size_t count = 0;
    do {
      const double v = term(std::span<const std::size_t>(perm.data(), l));
      (v >= 0.0 ? pos : neg).push_back(std::abs(v));
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.lhs_signed = signed_sum(pos, neg) / static_cast<double>(count);
  } else {
    if (reps < 2) throw Error(ErrorCode::InvalidArgument, "MC mode needs reps >= 2");
    Rng rng(derive_seed(seed, {"huskova"}));
    std::vector<std::size_t> perm(n);
    RunningStats stats;
    for (std::size_t r = 0; r < reps; ++r) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      stats.push(term(std::span<const std::size_t>(perm.data(), l)));
    }
    out.lhs_signed = stats.mean();
    out.lhs_se = stats.standard_error();
  }
  out.lhs = std::abs(out.lhs_signed);
  out.scale = std::pow(static_cast<double>(n), -static_cast<double>(l)) * std::pow(sq.value(), out.sum_alpha / 2.0);
  out.fitted_c = out.scale > 0.0 ? out.lhs / out.scale : 0.0;
  return out;
}

}  // namespace ustat
