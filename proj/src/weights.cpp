#include "ustat/weights.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "ustat/error.hpp"

namespace ustat {

std::string WeightScheme::name() const {
  std::ostringstream out;
  switch (kind) {
    case Kind::IidGaussian: return "gaussian";
    case Kind::IidRademacher: return "rademacher";
    case Kind::IidPareto: out << "pareto(" << param << ")"; return out.str();
    case Kind::IidUniform01: return "uniform01";
    case Kind::EfronMultinomial: return "efron";
    case Kind::BayesianBootstrap: return "bayesian";
    case Kind::Constant: out << "constant(" << param << ")"; return out.str();
  }
  return "unknown";
}

bool WeightScheme::is_iid() const noexcept {
  return kind != Kind::EfronMultinomial && kind != Kind::BayesianBootstrap;
}

bool WeightScheme::is_centered_unit_variance() const noexcept {
  return kind == Kind::IidGaussian || kind == Kind::IidRademacher;
}

std::optional<double> WeightScheme::declared_c2() const {
  switch (kind) {
    case Kind::IidGaussian: return 2.0;
    case Kind::IidRademacher: return 2.0;
    case Kind::IidUniform01: return 1.0 / 3.0;
    case Kind::EfronMultinomial: return 1.0;
    case Kind::BayesianBootstrap: return 1.0;
    case Kind::Constant: return (param - 1.0) * (param - 1.0);
    case Kind::IidPareto: {
      const double a = param;
      if (a <= 2.0) return std::nullopt;
      return a / (a - 2.0) - 2.0 * a / (a - 1.0) + 1.0;
    }
  }
  return std::nullopt;
}

bool WeightScheme::lp1_finite(double p) const { return kind != Kind::IidPareto || param > p; }

std::vector<double> gen_weights(const WeightScheme& scheme, std::size_t n, Rng& rng) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "weight vector length must be positive");
  std::vector<double> xi(n);
  switch (scheme.kind) {
    case WeightScheme::Kind::IidGaussian: {
      std::normal_distribution<double> z(0.0, 1.0);
      for (auto& x : xi) x = z(rng);
      break;
    }
    case WeightScheme::Kind::IidRademacher:
      for (auto& x : xi) x = (rng() >> 63) ? 1.0 : -1.0;
      break;
    case WeightScheme::Kind::IidPareto:
      if (!(scheme.param > 0.0)) throw Error(ErrorCode::InvalidArgument, "Pareto index must be positive");
      for (auto& x : xi) x = std::pow(uniform_open(rng), -1.0 / scheme.param);
      break;
    case WeightScheme::Kind::IidUniform01:
      for (auto& x : xi) x = uniform_open(rng);
      break;
    case WeightScheme::Kind::EfronMultinomial: {
      std::uniform_int_distribution<std::size_t> cell(0, n - 1);
      std::fill(xi.begin(), xi.end(), 0.0);
      for (std::size_t b = 0; b < n; ++b) xi[cell(rng)] += 1.0;
      break;
    }
    case WeightScheme::Kind::BayesianBootstrap: {
      std::exponential_distribution<double> e(1.0);
      KahanSum total;
      for (auto& x : xi) {
        x = e(rng);
        total += x;
      }
      const double scale = static_cast<double>(n) / total.value();
      for (auto& x : xi) x *= scale;
      break;
    }
    case WeightScheme::Kind::Constant:
      std::fill(xi.begin(), xi.end(), scheme.param);
      break;
  }
  return xi;
}

std::vector<double> gen_weights(const WeightScheme& scheme, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return gen_weights(scheme, n, rng);
}

namespace {

double centered_square_mean(std::span<const double> xi) {
  KahanSum s;
  for (double x : xi) s += (x - 1.0) * (x - 1.0);
  return s.value() / static_cast<double>(xi.size());
}

double max_term(std::span<const double> xi) {
  double worst = 0.0;
  for (double x : xi) worst = std::max(worst, (x - 1.0) * (x - 1.0));
  return worst / static_cast<double>(xi.size());
}

}  // namespace

Estimate estimate_c2(const WeightScheme& scheme, std::size_t n, std::size_t n_reps, std::uint64_t seed) {
  if (n < 50) throw Error(ErrorCode::InvalidArgument, "estimate_c2 needs n >= 50");
  if (n_reps < 100) throw Error(ErrorCode::InvalidArgument, "estimate_c2 needs n_reps >= 100");
  std::vector<double> values(n_reps);
  for (std::size_t r = 0; r < n_reps; ++r) {
    const auto xi = gen_weights(scheme, n, derive_seed(seed, {"c2", r}));
    values[r] = centered_square_mean(xi);
  }
  return mean_and_se(values);
}

namespace {

double std_normal_two_sided_tail(double t) { return std::erfc(t / std::sqrt(2.0)); }

TailMarginal discrete(std::vector<double> atoms, std::vector<double> probs, std::string name) {
  TailMarginal out;
  for (double& a : atoms) a = std::abs(a);
  std::map<double, double> merged;
  for (std::size_t i = 0; i < atoms.size(); ++i) merged[atoms[i]] += probs[i];
  for (const auto& [a, p] : merged) {
    out.atoms.push_back(a);
    out.atom_probs.push_back(p);
  }
  out.upper = out.atoms.back();
  const auto a = out.atoms;
  const auto p = out.atom_probs;
  out.tail = [a, p](double t) {
    KahanSum s;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] > t) s += p[i];
    }
    return std::min(1.0, s.value());
  };
  out.name = std::move(name);
  return out;
}

TailMarginal uniform01_tail() {
  TailMarginal out;
  out.tail = [](double t) { return t < 0.0 ? 1.0 : (t >= 1.0 ? 0.0 : 1.0 - t); };
  out.upper = 1.0;
  out.name = "uniform01";
  return out;
}

TailMarginal normal_tail(double mu, double sd, std::string name) {
  TailMarginal out;
  out.tail = [mu, sd](double t) {
    if (t < 0.0) return 1.0;
    // P(X > t) + P(X < -t)
    return 0.5 * std::erfc((t - mu) / (sd * std::sqrt(2.0))) + 0.5 * std::erfc((t + mu) / (sd * std::sqrt(2.0)));
  };
  out.name = std::move(name);
  return out;
}

}  // namespace

TailMarginal TailMarginal::of(const Law& law, int coord) {
  switch (law.kind()) {
    case Law::Kind::Uniform01: return uniform01_tail();
    case Law::Kind::Normal: return normal_tail(law.mean_param(), law.sd_param(), law.name());
    case Law::Kind::BivariateNormal: {
      const auto c = static_cast<std::size_t>(coord);
      return normal_tail(law.mean2()[c], std::sqrt(law.cov2()[c][c]), law.name());
    }
    case Law::Kind::FiniteSupport: {
      std::vector<double> atoms;
      for (const Point& p : law.support()) atoms.push_back(p[static_cast<std::size_t>(coord)]);
      return discrete(std::move(atoms), law.probs(), law.name());
    }
    case Law::Kind::LabeledUniform01:
      if (coord == 0) return uniform01_tail();
      return discrete({0.0, 1.0}, {0.5, 0.5}, "label");
  }
  throw Error(ErrorCode::UnsupportedMethod, "no tail function for law");
}

TailMarginal TailMarginal::of(const WeightScheme& scheme, std::size_t n) {
  switch (scheme.kind) {
    case WeightScheme::Kind::IidGaussian: {
      TailMarginal out;
      out.tail = [](double t) { return t < 0.0 ? 1.0 : std_normal_two_sided_tail(t); };
      out.name = scheme.name();
      return out;
    }
    case WeightScheme::Kind::IidRademacher: return discrete({1.0}, {1.0}, scheme.name());
    case WeightScheme::Kind::IidPareto: {
      TailMarginal out;
      const double a = scheme.param;
      out.tail = [a](double t) { return t < 1.0 ? 1.0 : std::pow(t, -a); };
      out.pareto_alpha = a;
      out.name = scheme.name();
      return out;
    }
    case WeightScheme::Kind::IidUniform01: return uniform01_tail();
    case WeightScheme::Kind::EfronMultinomial: {
      // marginal count is Binomial(n, 1/n)
      std::vector<double> atoms(n + 1);
      std::vector<double> probs(n + 1);
      const double q = 1.0 / static_cast<double>(n);
      for (std::size_t k = 0; k <= n; ++k) {
        atoms[k] = static_cast<double>(k);
        probs[k] = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                            k * std::log(q) + (n - k) * std::log1p(-q));
      }
      return discrete(std::move(atoms), std::move(probs), scheme.name());
    }
    case WeightScheme::Kind::BayesianBootstrap: {
      // xi = n D with D ~ Beta(1, n - 1)
      TailMarginal out;
      const double nn = static_cast<double>(n);
      out.tail = [nn](double t) {
        if (t <= 0.0) return 1.0;
        if (t >= nn) return 0.0;
        return std::pow(1.0 - t / nn, nn - 1.0);
      };
      out.upper = nn;
      out.name = scheme.name();
      return out;
    }
    case WeightScheme::Kind::Constant: return discrete({scheme.param}, {1.0}, scheme.name());
  }
  throw Error(ErrorCode::UnsupportedMethod, "no tail function for scheme");
}

Lp1Result lp1_norm(const TailMarginal& marginal, double p, const QuadratureConfig& config) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidArgument, "L_{p,1} norm needs p >= 1");
  Lp1Result out;
  out.p = p;
  if (marginal.pareto_alpha) {
    // int_0^1 dt + int_1^inf t^(-alpha/p) dt
    const double a = *marginal.pareto_alpha;
    if (a <= p) {
      out.infinite = true;
      return out;
    }
    out.value = a / (a - p);
    return out;
  }
  if (!marginal.atoms.empty()) {
    KahanSum total;
    double prev = 0.0;
    for (std::size_t i = 0; i < marginal.atoms.size(); ++i) {
      const double a = marginal.atoms[i];
      if (a > prev) total += std::pow(marginal.tail(prev), 1.0 / p) * (a - prev);
      prev = std::max(prev, a);
    }
    out.value = total.value();
    return out;
  }
  const auto integrand = [&](double t) {
    const double tail = marginal.tail(t);
    return tail <= 0.0 ? 0.0 : std::pow(tail, 1.0 / p);
  };
  double error = 0.0;
  double l1 = 0.0;
  if (marginal.upper && *marginal.upper <= 64.0) {
    boost::math::quadrature::tanh_sinh<double> integrator(config.max_refinements);
    out.value = integrator.integrate(integrand, 0.0, *marginal.upper, config.tolerance, &error, &l1);
  } else {
    boost::math::quadrature::exp_sinh<double> integrator(config.max_refinements);
    out.value = integrator.integrate(integrand, config.tolerance, &error, &l1);
  }
  out.error = error;
  if (!std::isfinite(out.value) || error > 1e-6 * std::max(1.0, l1)) {
    std::ostringstream msg;
    msg << "tail integral for " << marginal.name << " at p=" << p << " reached error " << error;
    throw Error(ErrorCode::QuadratureNotConverged, msg.str());
  }
  return out;
}

Lp1Result lp1_norm(const WeightScheme& scheme, std::size_t n, double p, const QuadratureConfig& config) {
  return lp1_norm(TailMarginal::of(scheme, n), p, config);
}

Lp1Result lp1_norm(const Law& law, double p, const QuadratureConfig& config) {
  return lp1_norm(TailMarginal::of(law), p, config);
}

Lp1Result lp1_norm_mc(const std::function<double(Rng&)>& draw, double p, std::size_t n_draws,
                      std::uint64_t seed) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidArgument, "L_{p,1} norm needs p >= 1");
  if (n_draws < 1000) throw Error(ErrorCode::InvalidArgument, "MC tail estimation needs at least 1000 draws");
  Rng rng(derive_seed(seed, {"lp1-mc"}));
  std::vector<double> a(n_draws);
  for (auto& x : a) x = std::abs(draw(rng));
  std::sort(a.begin(), a.end());
  const double nd = static_cast<double>(n_draws);
  const double cut = quantile(a, 1.0 - 1e-5);
  // empirical tail is (n - i - 1)/n on [a_(i), a_(i+1))
  KahanSum total;
  double prev = 0.0;
  for (std::size_t i = 0; i < a.size() && prev < cut; ++i) {
    const double hi = std::min(a[i], cut);
    if (hi > prev) total += std::pow(static_cast<double>(n_draws - i) / nd, 1.0 / p) * (hi - prev);
    prev = std::max(prev, hi);
  }
  Lp1Result out;
  out.p = p;
  out.value = total.value();
  // dropped piece: tail mass beyond the cut is at most 1e-5 (plus one draw)
  out.error = std::pow(1e-5 + 1.0 / nd, 1.0 / p) * (a.back() - cut);
  return out;
}

WeightValidation validate_W(const WeightScheme& scheme, std::size_t n, std::size_t n_reps, std::uint64_t seed) {
  if (n < 4 || n_reps < 2) throw Error(ErrorCode::InvalidArgument, "validate_W needs n >= 4 and n_reps >= 2");
  WeightValidation out;
  out.w1_pass = true;
  const std::size_t sizes[] = {std::max<std::size_t>(n / 4, 1), std::max<std::size_t>(n / 2, 1), n};
  for (std::size_t level = 0; level < 3; ++level) {
    const std::size_t nn = sizes[level];
    std::vector<double> max_terms(n_reps);
    std::vector<double> c2(n_reps);
    for (std::size_t r = 0; r < n_reps; ++r) {
      const auto xi = gen_weights(scheme, nn, derive_seed(seed, {"validate-w", nn, r}));
      if (out.w1_pass) {
        KahanSum total;
        for (double x : xi) {
          total += x;
          if (x < 0.0) {
            out.w1_pass = false;
            out.w1_failure = "negative weight";
            break;
          }
        }
        if (out.w1_pass && std::abs(total.value() - static_cast<double>(nn)) > 1e-9 * static_cast<double>(nn)) {
          out.w1_pass = false;
          out.w1_failure = "weights do not sum to n";
        }
      }
      max_terms[r] = max_term(xi);
      c2[r] = centered_square_mean(xi);
    }
    out.levels.push_back({nn, mean_and_se(max_terms), mean_and_se(c2)});
  }
  out.multiplier_only = !out.w1_pass && scheme.is_iid();
  out.max_term_decreasing = out.levels[0].max_term.mean > out.levels[1].max_term.mean &&
                            out.levels[1].max_term.mean > out.levels[2].max_term.mean;
  return out;
}

}  // namespace ustat
