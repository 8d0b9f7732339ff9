#include "ustat/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "ustat/error.hpp"
#include "ustat/rng.hpp"
#include "ustat/ustat.hpp"

namespace ustat {

Design Design::bernoulli(double p, double pi0) {
  Design d;
  d.kind = Kind::Bernoulli;
  d.p = p;
  d.pi0 = pi0;
  return d;
}

Design Design::poisson_unequal(double pi0) {
  Design d;
  d.kind = Kind::PoissonUnequal;
  d.pi0 = pi0;
  return d;
}

Design Design::srswor(std::size_t n_of_N, double pi0) {
  Design d;
  d.kind = Kind::Srswor;
  d.n_of_N = n_of_N;
  d.pi0 = pi0;
  return d;
}

Design Design::srswor_fraction(double fraction, double pi0) {
  Design d;
  d.kind = Kind::Srswor;
  d.fraction = fraction;
  d.pi0 = pi0;
  return d;
}

Design Design::stratified(std::vector<double> bounds, std::vector<std::size_t> sizes, double pi0) {
  Design d;
  d.kind = Kind::Stratified;
  d.strata_bounds = std::move(bounds);
  d.strata_n = std::move(sizes);
  d.pi0 = pi0;
  return d;
}

Design Design::stratified_fraction(std::vector<double> bounds, std::vector<double> fractions, double pi0) {
  Design d;
  d.kind = Kind::Stratified;
  d.strata_bounds = std::move(bounds);
  d.strata_fraction = std::move(fractions);
  d.pi0 = pi0;
  return d;
}

std::string Design::name() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Bernoulli: os << "bernoulli(" << p << ")"; break;
    case Kind::PoissonUnequal: os << "poisson_unequal(pi0=" << pi0 << ")"; break;
    case Kind::Srswor:
      if (n_of_N > 0) {
        os << "srswor(n=" << n_of_N << ")";
      } else {
        os << "srswor(f=" << fraction << ")";
      }
      break;
    case Kind::Stratified: os << "stratified(" << (strata_bounds.size() + 1) << " strata)"; break;
  }
  return os.str();
}

std::size_t DesignDraw::sample_size() const {
  return static_cast<std::size_t>(std::count_if(xi.begin(), xi.end(), [](double v) { return v != 0.0; }));
}

double DesignDraw::pair_probability(std::size_t i, std::size_t j) const {
  if (stratum.empty() || stratum[i] != stratum[j]) return pi[i] * pi[j];
  return stratum_pair[static_cast<std::size_t>(stratum[i])];
}

std::vector<double> DesignDraw::ht_weights() const {
  std::vector<double> w(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) w[i] = xi[i] / pi[i];
  return w;
}

DesignDraw DesignDraw::full(std::size_t N) {
  DesignDraw d;
  d.xi.assign(N, 1.0);
  d.pi.assign(N, 1.0);
  return d;
}

namespace {

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

std::size_t round_size(double f, std::size_t N) {
  return static_cast<std::size_t>(std::llround(f * static_cast<double>(N)));
}

void check_z(const Design& design, std::size_t N, std::span<const double> z) {
  if (design.needs_z() && z.size() != N) {
    throw Error(ErrorCode::LengthMismatch, design.name() + " needs an auxiliary value per unit");
  }
}

}  // namespace

DesignDraw design_probabilities(const Design& design, std::size_t N, std::span<const double> z) {
  if (N < 1) throw Error(ErrorCode::SampleTooSmall, "empty population");
  if (!(design.pi0 > 0.0 && design.pi0 <= 1.0)) throw Error(ErrorCode::InvalidArgument, "pi0 must lie in (0, 1]");
  check_z(design, N, z);
  DesignDraw d;
  d.xi.assign(N, 0.0);
  d.pi.assign(N, 0.0);
  switch (design.kind) {
    case Design::Kind::Bernoulli:
      if (!(design.p > 0.0 && design.p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "Bernoulli p must lie in (0, 1]");
      std::fill(d.pi.begin(), d.pi.end(), design.p);
      break;
    case Design::Kind::PoissonUnequal:
      for (std::size_t i = 0; i < N; ++i) {
        d.pi[i] = std::clamp(design.pi0 + (1.0 - design.pi0) * logistic(z[i]), design.pi0, 1.0);
      }
      break;
    case Design::Kind::Srswor: {
      const std::size_t n = design.n_of_N > 0 ? design.n_of_N : round_size(design.fraction, N);
      if (n < 1 || n > N) throw Error(ErrorCode::InvalidArgument, "SRSWOR size must lie in [1, N]");
      std::fill(d.pi.begin(), d.pi.end(), static_cast<double>(n) / static_cast<double>(N));
      d.stratum.assign(N, 0);
      d.stratum_pair = {N > 1 ? static_cast<double>(n) * static_cast<double>(n - 1) /
                                    (static_cast<double>(N) * static_cast<double>(N - 1))
                              : 0.0};
      break;
    }
    case Design::Kind::Stratified: {
      const std::size_t H = design.strata_bounds.size() + 1;
      if (!std::is_sorted(design.strata_bounds.begin(), design.strata_bounds.end())) {
        throw Error(ErrorCode::InvalidArgument, "strata bounds must be increasing");
      }
      const bool by_size = !design.strata_n.empty();
      if ((by_size ? design.strata_n.size() : design.strata_fraction.size()) != H) {
        throw Error(ErrorCode::LengthMismatch, "need one sample size per stratum");
      }
      d.stratum.assign(N, 0);
      std::vector<std::size_t> counts(H, 0);
      for (std::size_t i = 0; i < N; ++i) {
        const auto h = std::upper_bound(design.strata_bounds.begin(), design.strata_bounds.end(), z[i]) -
                       design.strata_bounds.begin();
        d.stratum[i] = static_cast<int>(h);
        ++counts[static_cast<std::size_t>(h)];
      }
      d.stratum_pair.assign(H, 0.0);
      std::vector<double> pi_h(H, 0.0);
      for (std::size_t h = 0; h < H; ++h) {
        if (counts[h] == 0) continue;
        const std::size_t n = by_size ? design.strata_n[h] : round_size(design.strata_fraction[h], counts[h]);
        if (n > counts[h]) throw Error(ErrorCode::InvalidArgument, "stratum sample size exceeds stratum size");
        const double Nh = static_cast<double>(counts[h]);
        const double nh = static_cast<double>(n);
        pi_h[h] = nh / Nh;
        d.stratum_pair[h] = counts[h] > 1 ? nh * (nh - 1.0) / (Nh * (Nh - 1.0)) : 0.0;
      }
      for (std::size_t i = 0; i < N; ++i) d.pi[i] = pi_h[static_cast<std::size_t>(d.stratum[i])];
      break;
    }
  }
  const auto lowest = std::min_element(d.pi.begin(), d.pi.end());
  if (*lowest < design.pi0) {
    std::ostringstream os;
    os << design.name() << ": pi_" << (lowest - d.pi.begin()) << " = " << *lowest << " below pi0 = " << design.pi0;
    throw Error(ErrorCode::B1Violation, os.str());
  }
  return d;
}

DesignDraw draw_design(const Design& design, std::size_t N, std::span<const double> z, std::uint64_t seed) {
  DesignDraw d = design_probabilities(design, N, z);
  Rng rng(seed);
  const auto choose = [&](std::vector<std::size_t>& units, std::size_t n) {
    // partial Fisher-Yates
    for (std::size_t k = 0; k < n; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, units.size() - 1);
      std::swap(units[k], units[pick(rng)]);
      d.xi[units[k]] = 1.0;
    }
  };
  switch (design.kind) {
    case Design::Kind::Bernoulli:
    case Design::Kind::PoissonUnequal:
      for (std::size_t i = 0; i < N; ++i) d.xi[i] = uniform_open(rng) < d.pi[i] ? 1.0 : 0.0;
      break;
    case Design::Kind::Srswor: {
      std::vector<std::size_t> units(N);
      std::iota(units.begin(), units.end(), std::size_t{0});
      choose(units, static_cast<std::size_t>(std::llround(d.pi[0] * static_cast<double>(N))));
      break;
    }
    case Design::Kind::Stratified: {
      std::vector<std::vector<std::size_t>> members(d.stratum_pair.size());
      for (std::size_t i = 0; i < N; ++i) members[static_cast<std::size_t>(d.stratum[i])].push_back(i);
      for (auto& units : members) {
        if (units.empty()) continue;
        const double nh = d.pi[units.front()] * static_cast<double>(units.size());
        choose(units, static_cast<std::size_t>(std::llround(nh)));
      }
      break;
    }
  }
  return d;
}

double ht_ustat(const Sample& sample, const DesignDraw& draw, const Kernel& kernel) {
  if (draw.size() != sample.size()) throw Error(ErrorCode::LengthMismatch, "design draw and sample lengths differ");
  if (sample.size() < static_cast<std::size_t>(kernel.order())) {
    throw Error(ErrorCode::SampleTooSmall, "population smaller than the kernel order");
  }
  const auto w = draw.ht_weights();
  return multiplier_ustat(sample, w, kernel, Normalization::BinomialAverage).value;
}

double ht_ustat_expectation(const Sample& sample, const DesignDraw& probabilities, const Kernel& kernel) {
  if (kernel.order() != 2) throw Error(ErrorCode::OrderOutOfRange, "exact HT expectation is implemented for m = 2");
  const std::size_t N = sample.size();
  if (probabilities.size() != N) throw Error(ErrorCode::LengthMismatch, "design and sample lengths differ");
  if (N < 2) throw Error(ErrorCode::SampleTooSmall, "population smaller than the kernel order");
  if (binomial(N, 2) > kMaxUStatTuples) throw Error(ErrorCode::EnumerationTooLarge, "too many pairs");
  KahanSum total;
  std::array<Point, 2> args{};
  for (std::size_t i = 0; i < N; ++i) {
    args[0] = sample[i];
    for (std::size_t j = i + 1; j < N; ++j) {
      args[1] = sample[j];
      const double ratio = probabilities.pair_probability(i, j) / (probabilities.pi[i] * probabilities.pi[j]);
      total += ratio * kernel(args);
    }
  }
  return total.value() / binomial(N, 2);
}

std::vector<double> ht_m_estimator(const MCriterion& problem, const Sample& sample, const DesignDraw& draw,
                                   const Optimizer& optimizer) {
  if (draw.size() != sample.size()) throw Error(ErrorCode::LengthMismatch, "design draw and sample lengths differ");
  const auto w = draw.ht_weights();
  return fit_m_estimator(problem, sample, w, optimizer);
}

HtBiasResult ht_bias_experiment(const Sample& population, const Design& design, const Kernel& kernel,
                                std::span<const double> z, std::size_t reps, std::uint64_t seed, int threads) {
  if (reps < 2) throw Error(ErrorCode::InvalidArgument, "need at least two design draws");
  HtBiasResult out;
  out.N = population.size();
  out.full_value = ustat(population, kernel).value;
  std::vector<double> values(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    const auto d = draw_design(design, population.size(), z, derive_seed(seed, {"ht-bias", r}));
    values[r] = ht_ustat(population, d, kernel);
  });
  out.ht = mean_and_se(values);
  out.mc_bias = out.ht.mean - out.full_value;
  out.z_unbiased = out.ht.se > 0.0 ? out.mc_bias / out.ht.se : (out.mc_bias == 0.0 ? 0.0 : INFINITY);
  if (kernel.order() == 2) {
    const auto probs = design_probabilities(design, population.size(), z);
    out.exact_bias = ht_ustat_expectation(population, probs, kernel) - out.full_value;
  }
  return out;
}

std::vector<LinearizationLevel> linearization_check(const MCriterion& problem, const Law& law, const Design& design,
                                                    std::span<const std::size_t> Ns, std::size_t reps,
                                                    const Optimizer& optimizer, std::uint64_t seed, int threads) {
  if (!problem.theta0 || !problem.V || !problem.delta) {
    throw Error(ErrorCode::MissingAnalyticFields, problem.name + " lacks theta0, V or Delta");
  }
  const auto d = static_cast<Eigen::Index>(problem.dim);
  Eigen::MatrixXd V(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      V(a, b) = (*problem.V)[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }
  }
  const Eigen::MatrixXd scale = static_cast<double>(problem.order) * V.inverse();
  std::vector<LinearizationLevel> out;
  for (const std::size_t N : Ns) {
    if (N <= static_cast<std::size_t>(problem.order)) {
      throw Error(ErrorCode::SampleTooSmall, "linearization needs N > m");
    }
    const double root_N = std::sqrt(static_cast<double>(N));
    std::vector<double> sq(reps);
    parallel_for(reps, threads, [&](std::size_t r) {
      Rng rng(derive_seed(seed, {"linearization", N, r}));
      const Sample x = law.sample(N, rng);
      const auto z = x.coordinate(0);
      const auto draw = draw_design(design, N, z, derive_seed(seed, {"linearization", "design", N, r}));
      const auto w = draw.ht_weights();
      const auto theta = fit_m_estimator(problem, x, w, optimizer);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
      for (std::size_t i = 0; i < N; ++i) {
        if (w[i] == 0.0) continue;
        const auto delta = problem.delta(x[i]);
        for (Eigen::Index k = 0; k < d; ++k) g(k) += w[i] * delta[static_cast<std::size_t>(k)];
      }
      g /= root_N;
      const Eigen::VectorXd lin = scale * g;
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double e = root_N * (theta[static_cast<std::size_t>(k)] - (*problem.theta0)[static_cast<std::size_t>(k)]) - lin(k);
        s += e * e;
      }
      sq[r] = s;
    });
    LinearizationLevel level;
    level.N = N;
    const Estimate ms = mean_and_se(sq);
    level.rms = std::sqrt(ms.mean);
    level.rms_se = level.rms > 0.0 ? ms.se / (2.0 * level.rms) : 0.0;
    level.max_abs = std::sqrt(*std::max_element(sq.begin(), sq.end()));
    out.push_back(level);
  }
  return out;
}

double threshold_ranking_risk(double tau) {
  const double ia = tau * tau / 2.0;
  const double ja = tau - tau * tau / 2.0;
  const double ib = (1.0 - tau * tau) / 2.0;
  const double jb = (1.0 - tau) * (1.0 - tau) / 2.0;
  return 2.0 * ia * jb + ia * ja + ib * jb;
}

Kernel threshold_ranking_kernel(double tau) {
  return Kernel::general(
      2,
      [tau](std::span<const Point> z) {
        if (z[0][1] == z[1][1]) return 0.0;
        const double s0 = z[0][0] >= tau ? 1.0 : 0.0;
        const double s1 = z[1][0] >= tau ? 1.0 : 0.0;
        if (s0 == s1) return 0.5;
        return (z[0][1] - z[1][1]) * (s0 - s1) < 0.0 ? 1.0 : 0.0;
      },
      "threshold_ranker(" + std::to_string(tau) + ")");
}

ErmProblem ErmProblem::threshold_ranking(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold step must lie in (0, 1]");
  ErmProblem p;
  p.name = "threshold_ranking";
  p.law = Law::labeled_uniform01();
  const auto count = static_cast<std::size_t>(std::llround(1.0 / step));
  std::vector<double> risk;
  for (std::size_t k = 0; k <= count; ++k) {
    const double tau = std::min(1.0, static_cast<double>(k) * step);
    p.labels.push_back(tau);
    p.kernels.push_back(threshold_ranking_kernel(tau));
    risk.push_back(threshold_ranking_risk(tau));
  }
  const double best = *std::min_element(risk.begin(), risk.end());
  for (const double r : risk) p.excess_risk.push_back(r - best);
  const auto taus = p.labels;
  p.criteria = [taus](const Sample& s, std::span<const double> w) {
    std::vector<double> out;
    out.reserve(taus.size());
    for (const double tau : taus) {
      // weighted label mass below / above the threshold
      double s1a = 0.0, s0a = 0.0, s1b = 0.0, s0b = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        if (wi == 0.0) continue;
        const bool above = s[i][0] >= tau;
        const bool positive = s[i][1] != 0.0;
        (above ? (positive ? s1b : s0b) : (positive ? s1a : s0a)) += wi;
      }
      out.push_back(2.0 * s1a * s0b + s1a * s0a + s1b * s0b);
    }
    return out;
  };
  return p;
}

ErmProblem ErmProblem::singleton(Kernel kernel, Law law, double excess) {
  ErmProblem p;
  p.name = "singleton";
  p.law = std::move(law);
  p.kernels.push_back(std::move(kernel));
  p.labels.push_back(0.0);
  p.excess_risk.push_back(excess);
  return p;
}

std::vector<double> ErmProblem::criterion_values(const Sample& sample, std::span<const double> weights) const {
  if (criteria) return criteria(sample, weights);
  std::vector<double> w(sample.size(), 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  std::vector<double> out;
  for (const auto& k : kernels) out.push_back(multiplier_ustat(sample, w, k, Normalization::DistinctTupleSum).value);
  return out;
}

std::vector<ErmLevel> erm_experiment(const ErmProblem& problem, const Design& design, std::span<const std::size_t> Ns,
                                     std::size_t reps, std::uint64_t seed, int threads) {
  if (problem.kernels.empty() || problem.excess_risk.size() != problem.kernels.size()) {
    throw Error(ErrorCode::InvalidArgument, "ERM class needs one excess risk per kernel");
  }
  if (reps < 1) throw Error(ErrorCode::InvalidArgument, "need at least one replicate");
  std::vector<ErmLevel> out;
  for (const std::size_t N : Ns) {
    if (N < static_cast<std::size_t>(problem.kernels.front().order())) {
      throw Error(ErrorCode::SampleTooSmall, "population smaller than the kernel order");
    }
    ErmLevel level;
    level.N = N;
    level.excess.assign(reps, 0.0);
    parallel_for(reps, threads, [&](std::size_t r) {
      Rng rng(derive_seed(seed, {"erm", N, r}));
      const Sample x = problem.law.sample(N, rng);
      const auto z = x.coordinate(0);
      const auto draw = draw_design(design, N, z, derive_seed(seed, {"erm", "design", N, r}));
      const auto values = problem.criterion_values(x, draw.ht_weights());
      const auto best = std::min_element(values.begin(), values.end()) - values.begin();
      level.excess[r] = problem.excess_risk[static_cast<std::size_t>(best)];
    });
    level.median = median(level.excess);
    level.mean = mean_and_se(level.excess).mean;
    level.q25 = quantile(level.excess, 0.25);
    level.q75 = quantile(level.excess, 0.75);
    out.push_back(std::move(level));
  }
  return out;
}

BValidation validate_B(const Design& design, std::size_t N, std::size_t reps, std::uint64_t seed) {
  if (reps < 2) throw Error(ErrorCode::InvalidArgument, "need at least two replicates");
  BValidation out;
  std::vector<double> z;
  const auto aux = [&](std::size_t size) {
    z.clear();
    if (!design.needs_z()) return;
    Rng rng(derive_seed(seed, {"validate-B", "z", size}));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < size; ++i) z.push_back(normal(rng));
  };
  try {
    aux(N);
    const auto probs = design_probabilities(design, N, z);
    out.min_pi = *std::min_element(probs.pi.begin(), probs.pi.end());
    out.b1_pass = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::B1Violation) throw;
    out.b1_failure = e.what();
    return out;
  }
  for (const std::size_t size : {N, 2 * N, 4 * N}) {
    aux(size);
    BValidationLevel level;
    level.N = size;
    std::vector<double> stats(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto d = draw_design(design, size, z, derive_seed(seed, {"validate-B", size, r}));
      KahanSum s;
      for (std::size_t i = 0; i < size; ++i) s += d.xi[i] / d.pi[i] - 1.0;
      stats[r] = s.value() / static_cast<double>(size);
      level.max_abs = std::max(level.max_abs, std::abs(stats[r]));
    }
    level.sd = sample_sd(stats);
    if (design.independent()) {
      const auto probs = design_probabilities(design, size, z);
      double v = 0.0;
      for (const double p : probs.pi) v += (1.0 - p) / p;
      level.predicted_sd = std::sqrt(v) / static_cast<double>(size);
    }
    out.levels.push_back(level);
  }
  out.sd_decreasing = true;
  for (std::size_t k = 1; k < out.levels.size(); ++k) {
    if (out.levels[k].sd > out.levels[k - 1].sd) out.sd_decreasing = false;
  }
  return out;
}

Population read_population_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open population file " + path);
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::InvalidArgument, path + ": missing header");
  const auto header = split(line);
  int cx = -1, cx1 = -1, cx2 = -1, cz = -1;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const int c = static_cast<int>(k);
    if (header[k] == "x") cx = c;
    else if (header[k] == "x1") cx1 = c;
    else if (header[k] == "x2") cx2 = c;
    else if (header[k] == "z") cz = c;
  }
  const bool planar = cx1 >= 0 && cx2 >= 0;
  if (!planar && cx < 0) throw Error(ErrorCode::InvalidArgument, path + ": header needs x or x1,x2");
  std::vector<Point> points;
  std::vector<double> z;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    const auto field = [&](int c) {
      if (c < 0 || static_cast<std::size_t>(c) >= cells.size()) {
        throw Error(ErrorCode::InvalidArgument, path + ":" + std::to_string(line_no) + ": missing column");
      }
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[static_cast<std::size_t>(c)], &used);
        if (used != cells[static_cast<std::size_t>(c)].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, path + ":" + std::to_string(line_no) + ": bad number '" +
                                                    cells[static_cast<std::size_t>(c)] + "'");
      }
    };
    points.push_back(planar ? Point{field(cx1), field(cx2)} : Point{field(cx), 0.0});
    if (cz >= 0) z.push_back(field(cz));
  }
  if (points.empty()) throw Error(ErrorCode::InvalidArgument, path + ": no rows");
  Population pop{Sample(std::move(points), planar ? 2 : 1), std::nullopt};
  if (cz >= 0) pop.z = std::move(z);
  return pop;
}

}  // namespace ustat
