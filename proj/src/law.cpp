#include "ustat/law.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "ustat/error.hpp"
#include "ustat/numeric.hpp"

namespace ustat {

Sample::Sample(std::vector<Point> points, int dim) : points_(std::move(points)), dim_(dim) {
  if (dim_ != 1 && dim_ != 2) throw Error(ErrorCode::InvalidArgument, "sample dimension must be 1 or 2");
  if (points_.empty()) throw Error(ErrorCode::SampleTooSmall, "sample must hold at least one point");
}

Sample Sample::from_scalars(std::span<const double> xs) {
  std::vector<Point> pts;
  pts.reserve(xs.size());
  for (double x : xs) pts.push_back(scalar(x));
  return Sample(std::move(pts), 1);
}

std::vector<double> Sample::coordinate(int c) const {
  std::vector<double> out;
  out.reserve(points_.size());
  for (const Point& p : points_) out.push_back(p[static_cast<std::size_t>(c)]);
  return out;
}

namespace {

double normal_moment(double mu, double sd, int k) {
  // E (mu + sd Z)^k = sum over even j of binom(k,j) mu^(k-j) sd^j (j-1)!!
  double total = 0.0;
  double dfact = 1.0;
  for (int j = 0; j <= k; j += 2) {
    if (j >= 2) dfact *= (j - 1);
    total += binomial(static_cast<std::size_t>(k), static_cast<std::size_t>(j)) *
             std::pow(mu, k - j) * std::pow(sd, j) * dfact;
  }
  return total;
}

double std_normal_quantile(double u) {
  static const boost::math::normal_distribution<double> std_normal(0.0, 1.0);
  return boost::math::quantile(std_normal, u);
}

}  // namespace

Law Law::uniform01() { return Law(); }

Law Law::normal(double mean, double sd) {
  if (!(sd > 0.0) || !std::isfinite(mean)) throw Error(ErrorCode::InvalidArgument, "normal law needs sd > 0");
  Law law;
  law.kind_ = Kind::Normal;
  law.mean_ = {mean, 0.0};
  law.sd_ = sd;
  return law;
}

Law Law::finite_support(std::vector<Point> points, std::vector<double> probs, int dim) {
  if (points.empty() || points.size() != probs.size()) {
    throw Error(ErrorCode::InvalidArgument, "finite support needs matching, non-empty points and probs");
  }
  if (dim != 1 && dim != 2) throw Error(ErrorCode::InvalidArgument, "dimension must be 1 or 2");
  KahanSum total;
  for (double p : probs) {
    if (!(p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative probability in finite support");
    total += p;
  }
  if (std::abs(total.value() - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg << "probabilities sum to " << total.value() << ", not 1";
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  Law law;
  law.kind_ = Kind::FiniteSupport;
  law.dim_ = dim;
  law.points_ = std::move(points);
  law.probs_ = std::move(probs);
  law.cdf_.resize(law.probs_.size());
  KahanSum run;
  for (std::size_t i = 0; i < law.probs_.size(); ++i) {
    run += law.probs_[i];
    law.cdf_[i] = run.value();
  }
  law.cdf_.back() = 1.0;
  return law;
}

Law Law::empirical(const Sample& population) {
  const std::size_t n = population.size();
  std::vector<Point> pts(population.points().begin(), population.points().end());
  std::vector<double> probs(n, 1.0 / static_cast<double>(n));
  // 1/n rounding can leave the sum a few ulps off; renormalize the last cell
  KahanSum head;
  for (std::size_t i = 0; i + 1 < n; ++i) head += probs[i];
  probs.back() = 1.0 - head.value();
  return finite_support(std::move(pts), std::move(probs), population.dim());
}

Law Law::bivariate_normal(std::array<double, 2> mean, std::array<std::array<double, 2>, 2> cov) {
  const double a = cov[0][0];
  const double b = cov[0][1];
  const double c = cov[1][1];
  if (std::abs(b - cov[1][0]) > 1e-12) throw Error(ErrorCode::CovarianceNotPSD, "covariance not symmetric");
  if (a < 0.0 || c < 0.0 || a * c - b * b < -1e-12) {
    throw Error(ErrorCode::CovarianceNotPSD, "covariance matrix is not positive semi-definite");
  }
  Law law;
  law.kind_ = Kind::BivariateNormal;
  law.dim_ = 2;
  law.mean_ = mean;
  law.cov_ = cov;
  const double l00 = std::sqrt(a);
  const double l10 = l00 > 0.0 ? b / l00 : 0.0;
  const double l11 = std::sqrt(std::max(0.0, c - l10 * l10));
  law.chol_ = {{{l00, 0.0}, {l10, l11}}};
  return law;
}

Law Law::labeled_uniform01() {
  Law law;
  law.kind_ = Kind::LabeledUniform01;
  law.dim_ = 2;
  return law;
}

std::string Law::name() const {
  std::ostringstream out;
  switch (kind_) {
    case Kind::Uniform01: return "uniform01";
    case Kind::Normal: out << "normal(" << mean_[0] << "," << sd_ << ")"; return out.str();
    case Kind::FiniteSupport: out << "finite_support[" << points_.size() << "]"; return out.str();
    case Kind::BivariateNormal: return "bivariate_normal";
    case Kind::LabeledUniform01: return "labeled_uniform01";
  }
  return "law";
}

Point Law::draw(Rng& rng) const {
  switch (kind_) {
    case Kind::Uniform01: return scalar(uniform_open(rng));
    case Kind::Normal: {
      std::normal_distribution<double> z(0.0, 1.0);
      return scalar(mean_[0] + sd_ * z(rng));
    }
    case Kind::FiniteSupport: {
      const double u = uniform_open(rng);
      const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
      return points_[static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                                                        static_cast<std::ptrdiff_t>(cdf_.size()) - 1))];
    }
    case Kind::BivariateNormal: {
      std::normal_distribution<double> z(0.0, 1.0);
      const double z0 = z(rng);
      const double z1 = z(rng);
      return Point{mean_[0] + chol_[0][0] * z0, mean_[1] + chol_[1][0] * z0 + chol_[1][1] * z1};
    }
    case Kind::LabeledUniform01: {
      const double x = uniform_open(rng);
      const double y = uniform_open(rng) < x ? 1.0 : 0.0;
      return Point{x, y};
    }
  }
  return scalar(0.0);
}

Sample Law::sample(std::size_t n, Rng& rng) const {
  std::vector<Point> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.push_back(draw(rng));
  return Sample(std::move(pts), dim_);
}

Point Law::quantile_point(std::span<const double> u) const {
  if (u.size() < static_cast<std::size_t>(dim_)) {
    throw Error(ErrorCode::InvalidArgument, "quantile_point needs one uniform per coordinate");
  }
  switch (kind_) {
    case Kind::Uniform01: return scalar(u[0]);
    case Kind::Normal: return scalar(mean_[0] + sd_ * std_normal_quantile(u[0]));
    case Kind::FiniteSupport: {
      const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u[0]);
      return points_[static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                                                        static_cast<std::ptrdiff_t>(cdf_.size()) - 1))];
    }
    case Kind::BivariateNormal: {
      const double z0 = std_normal_quantile(u[0]);
      const double z1 = std_normal_quantile(u[1]);
      return Point{mean_[0] + chol_[0][0] * z0, mean_[1] + chol_[1][0] * z0 + chol_[1][1] * z1};
    }
    case Kind::LabeledUniform01: return Point{u[0], u[1] < u[0] ? 1.0 : 0.0};
  }
  return scalar(0.0);
}

std::optional<double> Law::raw_moment(int coord, int k) const {
  if (k < 0 || coord < 0 || coord >= dim_) return std::nullopt;
  if (k == 0) return 1.0;
  switch (kind_) {
    case Kind::Uniform01: return 1.0 / (k + 1);
    case Kind::Normal: return normal_moment(mean_[0], sd_, k);
    case Kind::FiniteSupport: {
      KahanSum s;
      for (std::size_t i = 0; i < points_.size(); ++i) {
        s += probs_[i] * std::pow(points_[i][static_cast<std::size_t>(coord)], k);
      }
      return s.value();
    }
    case Kind::BivariateNormal: {
      const auto c = static_cast<std::size_t>(coord);
      return normal_moment(mean_[c], std::sqrt(cov_[c][c]), k);
    }
    case Kind::LabeledUniform01: return coord == 0 ? 1.0 / (k + 1) : 0.5;
  }
  return std::nullopt;
}

}  // namespace ustat
