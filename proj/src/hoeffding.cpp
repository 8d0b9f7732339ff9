#include "ustat/hoeffding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "ustat/error.hpp"
#include "ustat/numeric.hpp"
#include "ustat/ustat.hpp"

namespace ustat {

namespace {

constexpr std::size_t kErrorTestPoints = 8;

void check_order(const Kernel& kernel, int k) {
  if (k < 0 || k > kernel.order()) {
    throw Error(ErrorCode::OrderOutOfRange,
                "projection order " + std::to_string(k) + " outside [0," + std::to_string(kernel.order()) + "]");
  }
}

std::string projection_name(const Kernel& kernel, int k) {
  return "pi" + std::to_string(k) + "(" + kernel.name() + ")";
}

Kernel symbolic_projection(const Kernel& kernel, const Law& law, int k) {
  const SeparableForm* sep = kernel.separable();
  if (sep == nullptr) throw Error(ErrorCode::UnsupportedMethod, "symbolic projection needs a separable kernel");
  const int m = kernel.order();
  std::vector<double> coeffs;
  std::vector<Factor> factors;
  for (std::size_t q = 0; q < sep->coeffs.size(); ++q) {
    const auto mu = sep->factors[q].mean(law);
    if (!mu) {
      throw Error(ErrorCode::UnsupportedMethod,
                  "factor '" + sep->factors[q].name() + "' has no exact mean under " + law.name());
    }
    coeffs.push_back(sep->coeffs[q] * std::pow(*mu, m - k));
    factors.push_back(sep->factors[q].shifted(*mu));
  }
  return Kernel::separable(k, std::move(coeffs), std::move(factors), projection_name(kernel, k));
}

/// Sum over A subset of [k] of (-1)^(k-|A|) g(x_A), where g(x_A) integrates
/// the kernel over m - |A| remaining arguments.
template <typename Fill>
double inclusion_exclusion(const Kernel& kernel, std::span<const Point> x, Fill&& g) {
  const auto k = x.size();
  std::vector<Point> sub;
  sub.reserve(k);
  KahanSum total;
  for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
    sub.clear();
    for (std::size_t j = 0; j < k; ++j) {
      if (mask & (std::size_t{1} << j)) sub.push_back(x[j]);
    }
    const double sign = ((k - sub.size()) % 2 == 0) ? 1.0 : -1.0;
    total += sign * g(kernel, sub);
  }
  return total.value();
}

Kernel finite_support_projection(const Kernel& kernel, const Law& law, int k) {
  if (law.kind() != Law::Kind::FiniteSupport) {
    throw Error(ErrorCode::UnsupportedMethod, "exact summation needs a finite-support law");
  }
  const int m = kernel.order();
  const std::size_t s = law.support().size();
  if (std::pow(static_cast<double>(s), m) > kMaxUStatTuples) {
    throw Error(ErrorCode::EnumerationTooLarge, "support enumeration exceeds the cap");
  }
  auto g = [law, m, s](const Kernel& f, const std::vector<Point>& xa) {
    const std::size_t free = static_cast<std::size_t>(m) - xa.size();
    std::vector<Point> args(xa);
    args.resize(static_cast<std::size_t>(m));
    std::vector<std::size_t> idx(free, 0);
    KahanSum sum;
    while (true) {
      double w = 1.0;
      for (std::size_t j = 0; j < free; ++j) {
        args[xa.size() + j] = law.support()[idx[j]];
        w *= law.probs()[idx[j]];
      }
      sum += w * f(args);
      std::size_t j = free;
      while (j > 0) {
        if (++idx[j - 1] < s) break;
        idx[j - 1] = 0;
        --j;
      }
      if (j == 0) break;
    }
    return sum.value();
  };
  if (k == 0) {
    const double c = g(kernel, {});
    return Kernel::separable(0, {c}, {Factor::constant(1.0)}, projection_name(kernel, 0));
  }
  return Kernel::general(
      k, [kernel, g](std::span<const Point> x) { return inclusion_exclusion(kernel, x, g); },
      projection_name(kernel, k));
}

/// n_mc draws of m points each, shared by every projection of one decomposition.
using McDraws = std::shared_ptr<const std::vector<Point>>;

McDraws make_mc_draws(const Law& law, int m, const ProjectionConfig& config) {
  if (config.n_mc < 1) throw Error(ErrorCode::InvalidArgument, "n_mc must be positive");
  Rng rng(derive_seed(config.seed, {"hoeffding", "mc-draws"}));
  auto draws = std::make_shared<std::vector<Point>>();
  draws->reserve(config.n_mc * static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < config.n_mc * static_cast<std::size_t>(m); ++i) draws->push_back(law.draw(rng));
  return draws;
}

/// h_d(x) = sum_A (-1)^(k-|A|) f(x_A, Y^d_{|A|+1..m}) for one draw d.
double mc_term(const Kernel& f, std::span<const Point> x, const Point* y, std::vector<Point>& args) {
  const auto k = x.size();
  const auto m = static_cast<std::size_t>(f.order());
  double total = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
    std::size_t a = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (mask & (std::size_t{1} << j)) args[a++] = x[j];
    }
    const double sign = ((k - a) % 2 == 0) ? 1.0 : -1.0;
    for (std::size_t j = a; j < m; ++j) args[j] = y[j];
    total += sign * f(args);
  }
  return total;
}

Kernel mc_projection(const Kernel& kernel, int k, McDraws draws) {
  const auto m = static_cast<std::size_t>(kernel.order());
  auto eval = [kernel, draws, m](std::span<const Point> x) {
    std::vector<Point> args(m);
    const std::size_t n_mc = draws->size() / m;
    KahanSum sum;
    for (std::size_t d = 0; d < n_mc; ++d) sum += mc_term(kernel, x, draws->data() + d * m, args);
    return sum.value() / static_cast<double>(n_mc);
  };
  if (k == 0) {
    const double c = eval({});
    return Kernel::separable(0, {c}, {Factor::constant(1.0)}, projection_name(kernel, 0));
  }
  return Kernel::general(k, eval, projection_name(kernel, k));
}

double mc_projection_error(const Kernel& kernel, const Law& law, int k, const McDraws& draws) {
  const auto m = static_cast<std::size_t>(kernel.order());
  const std::size_t n_mc = draws->size() / m;
  std::vector<Point> args(m);
  std::vector<Point> x(static_cast<std::size_t>(k));
  const std::size_t points = k == 0 ? 1 : kErrorTestPoints;
  const auto ldim = static_cast<std::size_t>(law.dim());
  double worst = 0.0;
  for (std::size_t g = 0; g < points; ++g) {
    const auto u = halton_point(g, static_cast<std::size_t>(k) * ldim);
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] = law.quantile_point(std::span<const double>(u.data() + j * ldim, ldim));
    }
    RunningStats stats;
    for (std::size_t d = 0; d < n_mc; ++d) stats.push(mc_term(kernel, x, draws->data() + d * m, args));
    worst = std::max(worst, stats.standard_error());
  }
  return worst;
}

}  // namespace

Kernel hoeffding_project(const Kernel& kernel, const Law& law, int k, const ProjectionConfig& config) {
  check_order(kernel, k);
  switch (config.method) {
    case ProjectionMethod::Symbolic: return symbolic_projection(kernel, law, k);
    case ProjectionMethod::FiniteSupportExact: return finite_support_projection(kernel, law, k);
    case ProjectionMethod::MonteCarlo: return mc_projection(kernel, k, make_mc_draws(law, kernel.order(), config));
  }
  throw Error(ErrorCode::UnsupportedMethod, "unknown projection method");
}

HoeffdingDecomposition decompose(const Kernel& kernel, const Law& law, const ProjectionConfig& config) {
  const int m = kernel.order();
  HoeffdingDecomposition out{kernel, law, {}, config.method, {}, 0};
  if (config.method == ProjectionMethod::MonteCarlo) {
    const McDraws draws = make_mc_draws(law, m, config);
    out.n_mc = config.n_mc;
    for (int k = 0; k <= m; ++k) {
      out.projections.push_back(mc_projection(kernel, k, draws));
      out.error_estimates.push_back(mc_projection_error(kernel, law, k, draws));
    }
    return out;
  }
  for (int k = 0; k <= m; ++k) {
    out.projections.push_back(hoeffding_project(kernel, law, k, config));
    out.error_estimates.push_back(0.0);
  }
  return out;
}

DegeneracyReport check_degeneracy(const Kernel& kernel, const Law& law, int claimed_order,
                                  const DegeneracyOptions& options) {
  const int m = kernel.order();
  if (m < 1) throw Error(ErrorCode::OrderOutOfRange, "degeneracy check needs order >= 1");
  if (claimed_order < 0 || claimed_order > m) {
    throw Error(ErrorCode::OrderOutOfRange, "claimed order outside [0, m]");
  }
  if (options.n_mc < 100) throw Error(ErrorCode::InvalidArgument, "degeneracy check needs n_mc >= 100");
  const auto r = static_cast<std::size_t>(claimed_order);
  const auto mm = static_cast<std::size_t>(m);
  const auto ldim = static_cast<std::size_t>(law.dim());

  DegeneracyReport report;
  if (!options.centered) {
    Rng rng(derive_seed(options.seed, {"degeneracy", "target"}));
    std::vector<Point> args(mm);
    RunningStats stats;
    for (std::size_t d = 0; d < options.n_mc; ++d) {
      for (auto& a : args) a = law.draw(rng);
      stats.push(kernel(args));
    }
    report.target = stats.mean();
    report.target_se = stats.standard_error();
  }

  const std::size_t points = r == 0 ? 1 : std::max<std::size_t>(options.grid_points, 1);
  std::vector<double> standardized(points, 0.0);
  std::vector<std::vector<Point>> fixed(points, std::vector<Point>(r));
  parallel_for(points, options.threads, [&](std::size_t g) {
    const auto u = halton_point(g, r * ldim);
    for (std::size_t j = 0; j < r; ++j) {
      fixed[g][j] = law.quantile_point(std::span<const double>(u.data() + j * ldim, ldim));
    }
    std::vector<Point> args(mm);
    std::copy(fixed[g].begin(), fixed[g].end(), args.begin());
    Rng rng(derive_seed(options.seed, {"degeneracy", "point", g}));
    RunningStats stats;
    const std::size_t reps = r == mm ? 1 : options.n_mc;
    for (std::size_t d = 0; d < reps; ++d) {
      for (std::size_t j = r; j < mm; ++j) args[j] = law.draw(rng);
      stats.push(kernel(args));
    }
    const double se = std::hypot(stats.standard_error(), report.target_se);
    const double diff = std::abs(stats.mean() - report.target);
    if (se > 0.0) {
      standardized[g] = diff / se;
    } else {
      standardized[g] = diff <= 1e-12 * (1.0 + std::abs(report.target)) ? 0.0
                                                                          : std::numeric_limits<double>::infinity();
    }
  });
  const auto worst = std::max_element(standardized.begin(), standardized.end());
  report.max_standardized = *worst;
  report.worst_point = fixed[static_cast<std::size_t>(worst - standardized.begin())];
  report.points_checked = points;
  report.pass = report.max_standardized <= options.tol_sd;
  return report;
}

DegeneracyReport check_complete_degeneracy(const Kernel& kernel, const Law& law, const DegeneracyOptions& options) {
  DegeneracyOptions centered = options;
  centered.centered = true;
  return check_degeneracy(kernel, law, kernel.order() - 1, centered);
}

Reconstruction reconstruct(const HoeffdingDecomposition& decomp, const Sample& sample) {
  const int m = decomp.base.order();
  if (sample.size() < static_cast<std::size_t>(m)) {
    throw Error(ErrorCode::SampleTooSmall, "reconstruction needs n >= m");
  }
  if (decomp.projections.size() != static_cast<std::size_t>(m) + 1) {
    throw Error(ErrorCode::InvalidArgument, "decomposition does not match kernel order");
  }
  Reconstruction out;
  out.ustat_value = ustat(sample, decomp.base).value;
  KahanSum total;
  for (int k = 0; k <= m; ++k) {
    const double w = binomial(static_cast<std::size_t>(m), static_cast<std::size_t>(k));
    total += w * ustat(sample, decomp.projections[static_cast<std::size_t>(k)]).value;
    out.standard_error += w * decomp.error_estimates[static_cast<std::size_t>(k)];
  }
  out.residual = std::abs(out.ustat_value - total.value());
  return out;
}

}  // namespace ustat
