#include "ustat/mestimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "ustat/error.hpp"
#include "ustat/geometry.hpp"
#include "ustat/numeric.hpp"
#include "ustat/ustat.hpp"

namespace ustat {

namespace {

double weight_of(std::span<const double> weights, std::size_t i) { return weights.empty() ? 1.0 : weights[i]; }

void check_weights(const Sample& sample, std::span<const double> weights) {
  if (!weights.empty() && weights.size() != sample.size()) {
    throw Error(ErrorCode::LengthMismatch, "weights and sample lengths differ");
  }
}

/// Monotone in the counterclockwise angle of v, range [0, 4).
double pseudo_angle(double x, double y) {
  const double s = std::abs(x) + std::abs(y);
  if (y >= 0.0) return x >= 0.0 ? y / s : 1.0 - x / s;
  return x < 0.0 ? 2.0 - y / s : 3.0 + x / s;
}

[[noreturn]] void degenerate(const std::string& what) { throw Error(ErrorCode::DegeneratePosition, what); }

double brute_depth(const Sample& points, const Point& theta, std::span<const double> weights) {
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (weight_of(weights, i) != 0.0) active.push_back(i);
  }
  for (std::size_t a = 0; a < active.size(); ++a) {
    const Point& p = points[active[a]];
    if (p[0] == theta[0] && p[1] == theta[1]) degenerate("theta coincides with a data point");
    for (std::size_t b = a + 1; b < active.size(); ++b) {
      if (orientation(theta, p, points[active[b]]) == 0) degenerate("theta is collinear with two data points");
    }
  }
  KahanSum total;
  for (std::size_t a = 0; a < active.size(); ++a) {
    for (std::size_t b = a + 1; b < active.size(); ++b) {
      for (std::size_t c = b + 1; c < active.size(); ++c) {
        if (in_open_triangle(theta, points[active[a]], points[active[b]], points[active[c]])) {
          total += weight_of(weights, active[a]) * weight_of(weights, active[b]) * weight_of(weights, active[c]);
        }
      }
    }
  }
  return total.value();
}

}  // namespace

namespace {

struct Ray {
  double key;
  double x;
  double y;
  double r2;
  double w;
};

/// Sweep over positive-weight points sorted by angle about theta.
double sweep_depth(const Sample& points, const Point& theta, std::span<const double> weights) {
  thread_local std::vector<Ray> rays;
  thread_local std::vector<double> s1;
  thread_local std::vector<double> s2;
  rays.clear();
  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = weight_of(weights, i);
    if (w == 0.0) continue;
    const double x = points[i][0] - theta[0];
    const double y = points[i][1] - theta[1];
    if (x == 0.0 && y == 0.0) degenerate("theta coincides with a data point");
    rays.push_back({pseudo_angle(x, y), x, y, x * x + y * y, w});
    e3 += w * e2;
    e2 += w * e1;
    e1 += w;
  }
  const std::size_t n = rays.size();
  if (n < 3) return 0.0;
  std::sort(rays.begin(), rays.end(), [](const Ray& a, const Ray& b) { return a.key < b.key; });
  // prefix sums of w and w^2 over the doubled circular order
  s1.assign(2 * n + 1, 0.0);
  s2.assign(2 * n + 1, 0.0);
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const double w = rays[i % n].w;
    s1[i + 1] = s1[i] + w;
    s2[i + 1] = s2[i] + w * w;
  }
  const auto orient = [&](std::size_t i, std::size_t j) {
    const Ray& a = rays[i % n];
    const Ray& b = rays[j % n];
    return orientation_rel(a.x, a.y, a.r2, b.x, b.y, b.r2);
  };
  for (std::size_t i = 0; i < n; ++i) {
    // same direction, or exactly opposite with nothing between
    if (orient(i, i + 1) == 0) degenerate("theta is collinear with two data points");
  }
  KahanSum complement;
  std::size_t end = 1;
  for (std::size_t i = 0; i < n; ++i) {
    end = std::max(end, i + 1);
    while (end < i + n) {
      const int o = orient(i, end);
      if (o == 0) degenerate("theta is collinear with two data points");
      if (o < 0) break;
      ++end;
    }
    // points strictly counterclockwise within (0, pi) of ray i: [i+1, end)
    const double p1 = s1[end] - s1[i + 1];
    const double p2 = s2[end] - s2[i + 1];
    complement += rays[i].w * (p1 * p1 - p2) / 2.0;
  }
  return e3 - complement.value();
}

}  // namespace

double simplicial_depth(const Sample& points, const Point& theta, std::span<const double> weights, DepthAlgo algo) {
  check_weights(points, weights);
  if (points.dim() != 2) throw Error(ErrorCode::InvalidArgument, "simplicial depth needs planar points");
  if (algo == DepthAlgo::Brute) return brute_depth(points, theta, weights);
  return sweep_depth(points, theta, weights);
}

double Optimizer::resolution(double width) const {
  if (kind == Kind::SimplexSearch) return tol;
  double h = width / (points_per_axis - 1);
  for (int l = 1; l < levels; ++l) h = 2.0 * h / (points_per_axis - 1);
  return h;
}

MCriterion::Objective MCriterion::objective(const Sample& sample, std::span<const double> weights) const {
  check_weights(sample, weights);
  if (prepare) return prepare(sample, weights);
  std::vector<double> w(sample.size(), 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  return [this, &sample, w](std::span<const double> theta) {
    return multiplier_ustat(sample, w, family(theta), Normalization::DistinctTupleSum).value;
  };
}

double quadratic_argmax(const Sample& sample, std::span<const double> weights) {
  check_weights(sample, weights);
  KahanSum W;
  KahanSum W2;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double w = weight_of(weights, i);
    W += w;
    W2 += w * w;
  }
  KahanSum A;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double w = weight_of(weights, i);
    A += w * sample[i][0] * (W.value() - w);
  }
  const double denom = W.value() * W.value() - W2.value();
  if (!(denom > 0.0)) throw Error(ErrorCode::SampleTooSmall, "fewer than two units carry weight");
  return A.value() / denom;
}

MCriterion MCriterion::quadratic_mean(std::optional<double> mu) {
  MCriterion c;
  c.name = "quadratic_mean";
  c.dim = 1;
  c.order = 2;
  c.family = [](std::span<const double> theta) {
    const double t = theta[0];
    return Kernel::general(
        2,
        [t](std::span<const Point> x) {
          const double d = t - (x[0][0] + x[1][0]) / 2.0;
          return -d * d;
        },
        "quadratic_mean");
  };
  c.prepare = [](const Sample& sample, std::span<const double> weights) -> Objective {
    // sum_{i != j} w_i w_j (theta - a_ij)^2 = W2 theta^2 - 2 A theta + C
    KahanSum W;
    KahanSum Wsq;
    KahanSum Wx;
    KahanSum Wsqx2;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const double w = weight_of(weights, i);
      const double x = sample[i][0];
      W += w;
      Wsq += w * w;
      Wx += w * x;
      Wsqx2 += w * w * x * x;
    }
    KahanSum A;
    KahanSum Cx2;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const double w = weight_of(weights, i);
      const double x = sample[i][0];
      A += w * x * (W.value() - w);
      Cx2 += w * x * x * (W.value() - w);
    }
    const double w2 = W.value() * W.value() - Wsq.value();
    const double a = A.value();
    const double cc = 0.5 * Cx2.value() + 0.5 * (Wx.value() * Wx.value() - Wsqx2.value());
    if (w2 <= 0.0) {
      return [a, cc](std::span<const double> theta) { return 2.0 * a * theta[0] - cc; };
    }
    // vertex form without the theta-free part; the expanded quadratic only
    // resolves theta to ~sqrt(eps) near the top
    const double vertex = a / w2;
    return [w2, vertex](std::span<const double> theta) {
      const double d = theta[0] - vertex;
      return -w2 * d * d;
    };
  };
  if (mu) {
    const double m = *mu;
    c.theta0 = std::vector<double>{m};
    c.V = std::vector<std::vector<double>>{{2.0}};
    c.delta = [m](const Point& x) { return std::vector<double>{x[0] - m}; };
  }
  return c;
}

MCriterion MCriterion::simplicial_median(std::optional<Point> theta0) {
  MCriterion c;
  c.name = "simplicial_median";
  c.dim = 2;
  c.order = 3;
  c.family = [](std::span<const double> theta) { return builtin::simplicial_indicator(Point{theta[0], theta[1]}); };
  c.prepare = [](const Sample& sample, std::span<const double> weights) -> Objective {
    std::vector<double> w(sample.size(), 1.0);
    if (!weights.empty()) w.assign(weights.begin(), weights.end());
    return [&sample, w](std::span<const double> theta) {
      return simplicial_depth(sample, Point{theta[0], theta[1]}, w, DepthAlgo::Sweep);
    };
  };
  if (theta0) c.theta0 = std::vector<double>{(*theta0)[0], (*theta0)[1]};
  return c;
}

namespace {

Bounds resolve_bounds(const MCriterion& problem, const Sample& sample, std::span<const double> weights,
                      const Optimizer& optimizer) {
  const auto d = static_cast<std::size_t>(problem.dim);
  if (optimizer.bounds) {
    if (optimizer.bounds->lo.size() != d || optimizer.bounds->hi.size() != d) {
      throw Error(ErrorCode::OptimizerBoundsMissing, "optimizer bounds do not match the parameter dimension");
    }
    for (std::size_t k = 0; k < d; ++k) {
      if (!std::isfinite(optimizer.bounds->lo[k]) || !std::isfinite(optimizer.bounds->hi[k]) ||
          optimizer.bounds->lo[k] > optimizer.bounds->hi[k]) {
        throw Error(ErrorCode::OptimizerBoundsMissing, "optimizer bounds must be finite and ordered");
      }
    }
    return *optimizer.bounds;
  }
  if (!optimizer.data_bounds) throw Error(ErrorCode::OptimizerBoundsMissing, "no bounds and data bounds disabled");
  if (d > static_cast<std::size_t>(sample.dim())) {
    throw Error(ErrorCode::OptimizerBoundsMissing, "cannot derive bounds for this parameter dimension");
  }
  Bounds b{std::vector<double>(d, std::numeric_limits<double>::infinity()),
           std::vector<double>(d, -std::numeric_limits<double>::infinity())};
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (weight_of(weights, i) == 0.0) continue;
    for (std::size_t k = 0; k < d; ++k) {
      b.lo[k] = std::min(b.lo[k], sample[i][k]);
      b.hi[k] = std::max(b.hi[k], sample[i][k]);
    }
  }
  if (!std::isfinite(b.lo[0])) throw Error(ErrorCode::SampleTooSmall, "no unit carries positive weight");
  return b;
}

std::vector<double> coordinate_median(const Sample& sample, std::span<const double> weights, std::size_t d) {
  std::vector<double> med(d);
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> xs;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (weight_of(weights, i) != 0.0) xs.push_back(sample[i][k]);
    }
    med[k] = median(std::move(xs));
  }
  return med;
}

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

std::vector<double> grid_refine(const MCriterion::Objective& objective, Bounds box, const Optimizer& optimizer,
                                std::span<const double> anchor) {
  if (optimizer.levels < 1 || optimizer.points_per_axis < 2) {
    throw Error(ErrorCode::InvalidArgument, "grid refinement needs levels >= 1 and >= 2 points per axis");
  }
  const std::size_t d = box.lo.size();
  const auto p = static_cast<std::size_t>(optimizer.points_per_axis);
  std::size_t cells = 1;
  for (std::size_t k = 0; k < d; ++k) cells *= p;
  std::vector<double> best(d);
  std::vector<double> theta(d);
  std::vector<double> h(d);
  for (int level = 0; level < optimizer.levels; ++level) {
    for (std::size_t k = 0; k < d; ++k) h[k] = (box.hi[k] - box.lo[k]) / static_cast<double>(p - 1);
    double best_value = -std::numeric_limits<double>::infinity();
    double best_dist = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      std::size_t rest = cell;
      for (std::size_t k = d; k-- > 0;) {
        theta[k] = box.lo[k] + h[k] * static_cast<double>(rest % p);
        rest /= p;
      }
      double value;
      try {
        value = objective(theta);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::DegeneratePosition) continue;
        throw;
      }
      const double dist = dist2(theta, anchor);
      if (!found || value > best_value || (value == best_value && dist < best_dist)) {
        best_value = value;
        best_dist = dist;
        best = theta;
        found = true;
      }
    }
    if (!found) throw Error(ErrorCode::DegeneratePosition, "every grid point is degenerate");
    for (std::size_t k = 0; k < d; ++k) {
      box.lo[k] = best[k] - h[k];
      box.hi[k] = best[k] + h[k];
    }
  }
  return best;
}

std::vector<double> nelder_mead(const MCriterion::Objective& objective, const Bounds& box, const Optimizer& optimizer) {
  const std::size_t d = box.lo.size();
  // minimize -objective; degenerate points count as -infinity
  auto f = [&](const std::vector<double>& x) {
    try {
      return -objective(x);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DegeneratePosition) return std::numeric_limits<double>::infinity();
      throw;
    }
  };
  std::vector<std::vector<double>> simplex(d + 1, std::vector<double>(d));
  for (std::size_t k = 0; k < d; ++k) simplex[0][k] = 0.5 * (box.lo[k] + box.hi[k]);
  for (std::size_t j = 1; j <= d; ++j) {
    simplex[j] = simplex[0];
    simplex[j][j - 1] += 0.1 * std::max(box.hi[j - 1] - box.lo[j - 1], 1e-3);
  }
  std::vector<double> values(d + 1);
  for (std::size_t j = 0; j <= d; ++j) values[j] = f(simplex[j]);
  std::vector<std::size_t> order(d + 1);
  for (std::size_t iter = 0; iter < optimizer.max_iter; ++iter) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t lo = order.front();
    const std::size_t hi = order.back();
    if (std::abs(values[hi] - values[lo]) <= optimizer.tol * (1.0 + std::abs(values[lo]))) break;
    std::vector<double> centroid(d, 0.0);
    for (std::size_t j = 0; j + 1 < order.size(); ++j) {
      for (std::size_t k = 0; k < d; ++k) centroid[k] += simplex[order[j]][k] / static_cast<double>(d);
    }
    auto along = [&](double t) {
      std::vector<double> x(d);
      for (std::size_t k = 0; k < d; ++k) x[k] = centroid[k] + t * (simplex[hi][k] - centroid[k]);
      return x;
    };
    const auto xr = along(-1.0);
    const double fr = f(xr);
    if (fr < values[lo]) {
      const auto xe = along(-2.0);
      const double fe = f(xe);
      if (fe < fr) {
        simplex[hi] = xe;
        values[hi] = fe;
      } else {
        simplex[hi] = xr;
        values[hi] = fr;
      }
    } else if (fr < values[order[order.size() - 2]]) {
      simplex[hi] = xr;
      values[hi] = fr;
    } else {
      const auto xc = along(0.5);
      const double fc = f(xc);
      if (fc < values[hi]) {
        simplex[hi] = xc;
        values[hi] = fc;
      } else {
        for (std::size_t j = 0; j <= d; ++j) {
          if (j == lo) continue;
          for (std::size_t k = 0; k < d; ++k) simplex[j][k] = simplex[lo][k] + 0.5 * (simplex[j][k] - simplex[lo][k]);
          values[j] = f(simplex[j]);
        }
      }
    }
  }
  const auto best = std::min_element(values.begin(), values.end()) - values.begin();
  return simplex[static_cast<std::size_t>(best)];
}

}  // namespace

std::vector<double> fit_m_estimator(const MCriterion& problem, const Sample& sample, std::span<const double> weights,
                                    const Optimizer& optimizer) {
  check_weights(sample, weights);
  if (sample.size() < static_cast<std::size_t>(problem.order)) {
    throw Error(ErrorCode::SampleTooSmall, "sample smaller than the criterion order");
  }
  const Bounds box = resolve_bounds(problem, sample, weights, optimizer);
  const auto objective = problem.objective(sample, weights);
  if (optimizer.kind == Optimizer::Kind::SimplexSearch) return nelder_mead(objective, box, optimizer);
  const auto anchor = coordinate_median(sample, weights, static_cast<std::size_t>(problem.dim));
  return grid_refine(objective, box, optimizer, anchor);
}

namespace {

void require_w1(const WeightScheme& scheme, std::size_t n, std::uint64_t seed) {
  const auto w = validate_W(scheme, n, 20, seed);
  if (!w.w1_pass) throw Error(ErrorCode::W1Violation, scheme.name() + ": " + w.w1_failure);
}

double c_hat_for(const WeightScheme& scheme, std::size_t n, std::size_t reps, std::uint64_t seed) {
  const Estimate c2 = estimate_c2(scheme, std::max<std::size_t>(n, 50), std::max<std::size_t>(reps, 100), seed);
  return std::sqrt(std::max(c2.mean, 0.0));
}

}  // namespace

BootstrapMResult bootstrap_m_experiment(const MCriterion& problem, const Law& law, const WeightScheme& scheme,
                                        const Optimizer& optimizer, const BootstrapMConfig& config) {
  if (!problem.theta0) throw Error(ErrorCode::MissingAnalyticFields, "bootstrap M experiment needs theta0");
  require_w1(scheme, config.n, derive_seed(config.seed, {"bootstrap-m", "w1"}));
  const auto d = static_cast<std::size_t>(problem.dim);
  const double root_n = std::sqrt(static_cast<double>(config.n));

  BootstrapMResult out;
  out.data_seed = derive_seed(config.seed, {"bootstrap-m", "data"});
  out.weight_seed = derive_seed(config.seed, {"bootstrap-m", "weights"});
  out.mc_seed = derive_seed(config.seed, {"bootstrap-m", "mc"});
  out.c_hat = c_hat_for(scheme, config.n, config.c2_reps, derive_seed(config.seed, {"bootstrap-m", "c2"}));

  Rng data_rng(out.data_seed);
  const Sample x = law.sample(config.n, data_rng);
  out.theta_hat = fit_m_estimator(problem, x, {}, optimizer);

  out.bootstrap.assign(config.B, std::vector<double>(d));
  parallel_for(config.B, config.threads, [&](std::size_t r) {
    const auto xi = gen_weights(scheme, config.n, derive_seed(out.weight_seed, {r}));
    const auto star = fit_m_estimator(problem, x, xi, optimizer);
    for (std::size_t k = 0; k < d; ++k) out.bootstrap[r][k] = root_n * (star[k] - out.theta_hat[k]);
  });

  std::vector<std::vector<double>> raw(config.mc_datasets, std::vector<double>(d));
  parallel_for(config.mc_datasets, config.threads, [&](std::size_t r) {
    Rng rng(derive_seed(out.mc_seed, {r}));
    const Sample xr = law.sample(config.n, rng);
    const auto fit = fit_m_estimator(problem, xr, {}, optimizer);
    for (std::size_t k = 0; k < d; ++k) raw[r][k] = root_n * (fit[k] - (*problem.theta0)[k]);
  });
  out.sampling = raw;
  for (auto& row : out.sampling) {
    for (double& v : row) v *= out.c_hat;
  }
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> c;
    for (const auto& row : out.bootstrap) a.push_back(row[k]);
    for (const auto& row : out.sampling) b.push_back(row[k]);
    for (const auto& row : raw) c.push_back(row[k]);
    out.ks.push_back(ks_distance(a, b));
    out.bootstrap_sd.push_back(sample_sd(a));
    out.sampling_sd.push_back(sample_sd(c));
  }
  return out;
}

CoverageResult bootstrap_ci_coverage(const MCriterion& problem, const Law& law, const WeightScheme& scheme,
                                     const Optimizer& optimizer, std::size_t n, std::size_t B, std::size_t datasets,
                                     double level, std::uint64_t seed, int threads) {
  if (!problem.theta0) throw Error(ErrorCode::MissingAnalyticFields, "coverage needs theta0");
  if (B < 3) throw Error(ErrorCode::InvalidArgument, "coverage needs B >= 3");
  require_w1(scheme, n, derive_seed(seed, {"coverage", "w1"}));
  const auto d = static_cast<std::size_t>(problem.dim);
  const double c_hat = c_hat_for(scheme, n, 1000, derive_seed(seed, {"coverage", "c2"}));
  const boost::math::chi_squared_distribution<double> chi2(static_cast<double>(d));
  const double cutoff = boost::math::quantile(chi2, level);
  const double root_n = std::sqrt(static_cast<double>(n));

  CoverageResult out;
  out.datasets = datasets;
  out.level = level;
  out.cutoff = cutoff;
  out.statistics.assign(datasets, 0.0);
  for (std::size_t j = 0; j < datasets; ++j) {
    Rng rng(derive_seed(seed, {"coverage", "data", j}));
    const Sample x = law.sample(n, rng);
    const auto theta_hat = fit_m_estimator(problem, x, {}, optimizer);
    std::vector<std::vector<double>> star(B, std::vector<double>(d));
    parallel_for(B, threads, [&](std::size_t r) {
      const auto xi = gen_weights(scheme, n, derive_seed(seed, {"coverage", "weights", j, r}));
      const auto fit = fit_m_estimator(problem, x, xi, optimizer);
      for (std::size_t k = 0; k < d; ++k) star[r][k] = root_n * (fit[k] - theta_hat[k]) / c_hat;
    });
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    for (const auto& row : star) {
      for (std::size_t k = 0; k < d; ++k) mean(static_cast<Eigen::Index>(k)) += row[k] / static_cast<double>(B);
    }
    for (const auto& row : star) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(d));
      for (std::size_t k = 0; k < d; ++k) v(static_cast<Eigen::Index>(k)) = row[k] - mean(static_cast<Eigen::Index>(k));
      s += v * v.transpose() / static_cast<double>(B - 1);
    }
    Eigen::VectorXd e(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
      e(static_cast<Eigen::Index>(k)) = root_n * (theta_hat[k] - (*problem.theta0)[k]);
    }
    const double stat = e.dot(s.ldlt().solve(e));
    out.statistics[j] = stat;
    if (stat <= cutoff) ++out.covered;
  }
  out.coverage = static_cast<double>(out.covered) / static_cast<double>(datasets);
  return out;
}

}  // namespace ustat
