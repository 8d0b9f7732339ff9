#include "config.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "ustat/inequality.hpp"

namespace ustat::cfg {

Node::Node(YAML::Node node, std::string path)
    : node_(std::move(node)), path_(std::move(path)), used_(std::make_shared<std::set<std::string>>()) {}

int Node::line() const {
  const auto mark = node_.Mark();
  return mark.is_null() ? 0 : mark.line + 1;
}

void Node::fail(const std::string& message) const {
  std::ostringstream os;
  if (line() > 0) os << "line " << line() << ", ";
  os << "field '" << (path_.empty() ? "<root>" : path_) << "': " << message;
  throw Error(ErrorCode::ConfigInvalid, os.str());
}

bool Node::has(const std::string& key) const {
  if (!node_.IsMap()) return false;
  const YAML::Node& self = node_;
  return static_cast<bool>(self[key]);
}

std::optional<Node> Node::find(const std::string& key) const {
  // a bare name (scalar) stands for a spec with every field defaulted
  if (!node_.IsMap()) return std::nullopt;
  used_->insert(key);
  const YAML::Node& self = node_;
  const YAML::Node child = self[key];
  if (!child || child.IsNull()) return std::nullopt;
  return Node(child, path_.empty() ? key : path_ + "." + key);
}

Node Node::at(const std::string& key) const {
  auto child = find(key);
  if (!child) fail("missing required key '" + key + "'");
  return *child;
}

Node Node::operator[](std::size_t i) const {
  if (!node_.IsSequence() || i >= node_.size()) fail("expected a list with more than " + std::to_string(i) + " items");
  return Node(node_[i], path_ + "[" + std::to_string(i) + "]");
}

std::string Node::str() const {
  if (!node_.IsScalar()) fail("expected a scalar");
  return node_.Scalar();
}

double Node::real() const {
  const std::string s = str();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail("expected a finite number, got '" + s + "'");
  }
}

long long Node::integer() const {
  const std::string s = str();
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail("expected an integer, got '" + s + "'");
  }
}

std::size_t Node::count() const {
  const long long v = integer();
  if (v <= 0) fail("expected a positive integer");
  return static_cast<std::size_t>(v);
}

bool Node::boolean() const {
  const std::string s = str();
  if (s == "true" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "no" || s == "off") return false;
  fail("expected true or false, got '" + s + "'");
}

std::vector<double> Node::reals() const {
  if (node_.IsScalar()) return {real()};
  if (!node_.IsSequence()) fail("expected a number or a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].real());
  return out;
}

std::vector<std::size_t> Node::counts() const {
  if (node_.IsScalar()) return {count()};
  if (!node_.IsSequence() || node_.size() == 0) fail("expected a positive integer or a non-empty list");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].count());
  return out;
}

std::string Node::str(const std::string& key, const std::string& fallback) const {
  const auto c = find(key);
  return c ? c->str() : fallback;
}

double Node::real(const std::string& key, double fallback) const {
  const auto c = find(key);
  return c ? c->real() : fallback;
}

std::size_t Node::count(const std::string& key, std::size_t fallback) const {
  const auto c = find(key);
  return c ? c->count() : fallback;
}

bool Node::boolean(const std::string& key, bool fallback) const {
  const auto c = find(key);
  return c ? c->boolean() : fallback;
}

void Node::finish() const {
  if (!node_.IsMap()) return;
  for (const auto& kv : node_) {
    const std::string key = kv.first.Scalar();
    if (used_->count(key) == 0) {
      Node(kv.first, path_.empty() ? key : path_ + "." + key).fail("unknown key '" + key + "'");
    }
  }
}

namespace {

/// Name of a spec given either as a bare string or as a map with `name`.
std::string spec_name(const Node& node) {
  if (node.is_scalar()) return node.str();
  if (!node.is_map()) node.fail("expected a name or a mapping with 'name'");
  return node.at("name").str();
}

Point point(const Node& node) {
  const auto v = node.reals();
  if (v.size() == 1) return scalar(v[0]);
  if (v.size() != 2) node.fail("expected a point with one or two coordinates");
  return Point{v[0], v[1]};
}

}  // namespace

Kernel kernel(const Node& node) {
  const std::string name = spec_name(node);
  Kernel k = [&] {
    if (name == "legendre_power") {
      const auto degree = static_cast<int>(node.count("degree", 1));
      const auto order = static_cast<int>(node.count("order", 2));
      return builtin::legendre_power(degree, order);
    }
    if (name == "simplicial_indicator" && node.is_map() && node.has("theta")) {
      return builtin::simplicial_indicator(point(node.at("theta")));
    }
    if (auto found = builtin::kernel_by_name(name)) return *found;
    node.fail("unknown kernel '" + name + "'");
  }();
  node.finish();
  return k;
}

Law law(const Node& node, const std::string& base_dir) {
  const std::string name = spec_name(node);
  Law out = [&] {
    if (name == "uniform01") return Law::uniform01();
    if (name == "labeled_uniform01") return Law::labeled_uniform01();
    if (name == "normal") return Law::normal(node.real("mean", 0.0), node.real("sd", 1.0));
    if (name == "standard_bivariate_normal") return Law::bivariate_normal({0.0, 0.0}, {{{1.0, 0.0}, {0.0, 1.0}}});
    if (name == "bivariate_normal") {
      const auto mean = node.find("mean") ? node.at("mean").reals() : std::vector<double>{0.0, 0.0};
      if (mean.size() != 2) node.at("mean").fail("expected two coordinates");
      std::array<std::array<double, 2>, 2> cov{{{1.0, 0.0}, {0.0, 1.0}}};
      if (const auto c = node.find("cov")) {
        if (!c->is_sequence() || c->size() != 2) c->fail("expected a 2x2 matrix");
        for (std::size_t a = 0; a < 2; ++a) {
          const auto row = (*c)[a].reals();
          if (row.size() != 2) (*c)[a].fail("expected two entries");
          cov[a] = {row[0], row[1]};
        }
      }
      return Law::bivariate_normal({mean[0], mean[1]}, cov);
    }
    if (name == "finite_support") {
      const Node pts = node.at("points");
      if (!pts.is_sequence() || pts.size() == 0) pts.fail("expected a non-empty list");
      std::vector<Point> points;
      int dim = 1;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto v = pts[i].reals();
        if (v.size() == 2) dim = 2;
        points.push_back(point(pts[i]));
      }
      std::vector<double> probs = node.find("probs") ? node.at("probs").reals()
                                                     : std::vector<double>(points.size(), 1.0 / points.size());
      try {
        return Law::finite_support(std::move(points), std::move(probs), dim);
      } catch (const Error& e) {
        node.fail(e.what());
      }
    }
    if (name == "population") {
      std::filesystem::path p = node.at("path").str();
      if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
      return Law::empirical(read_population_csv(p.string()).x);
    }
    node.fail("unknown law '" + name + "'");
  }();
  node.finish();
  return out;
}

WeightScheme scheme(const Node& node) {
  const std::string name = spec_name(node);
  WeightScheme out = [&] {
    if (name == "gaussian") return WeightScheme::gaussian();
    if (name == "rademacher") return WeightScheme::rademacher();
    if (name == "uniform01") return WeightScheme::uniform01();
    if (name == "efron") return WeightScheme::efron();
    if (name == "bayesian") return WeightScheme::bayesian();
    if (name == "pareto") {
      const double alpha = node.at("alpha").real();
      if (!(alpha > 0.0)) node.at("alpha").fail("alpha must be positive");
      return WeightScheme::pareto(alpha);
    }
    if (name == "constant") return WeightScheme::constant(node.real("value", 1.0));
    node.fail("unknown weight scheme '" + name + "'");
  }();
  node.finish();
  return out;
}

Design design(const Node& node) {
  const std::string name = spec_name(node);
  const double pi0 = node.is_map() ? node.real("pi0", 0.01) : 0.01;
  Design out = [&] {
    if (name == "full") return Design::bernoulli(1.0, pi0);
    if (name == "bernoulli") return Design::bernoulli(node.at("p").real(), pi0);
    if (name == "poisson_unequal") return Design::poisson_unequal(pi0);
    if (name == "srswor") {
      if (node.has("n")) return Design::srswor(node.at("n").count(), pi0);
      return Design::srswor_fraction(node.at("fraction").real(), pi0);
    }
    if (name == "stratified") {
      auto bounds = node.at("bounds").reals();
      if (node.has("sizes")) return Design::stratified(std::move(bounds), node.at("sizes").counts(), pi0);
      return Design::stratified_fraction(std::move(bounds), node.at("fractions").reals(), pi0);
    }
    node.fail("unknown design '" + name + "'");
  }();
  node.finish();
  return out;
}

MCriterion criterion(const Node& node) {
  const std::string name = spec_name(node);
  MCriterion out = [&] {
    if (name == "quadratic_mean") {
      const auto mu = node.is_map() ? node.find("mu") : std::nullopt;
      return MCriterion::quadratic_mean(mu ? std::optional<double>(mu->real()) : std::nullopt);
    }
    if (name == "simplicial_median") {
      const auto t = node.is_map() ? node.find("theta0") : std::nullopt;
      return MCriterion::simplicial_median(t ? std::optional<Point>(point(*t)) : std::nullopt);
    }
    node.fail("unknown criterion '" + name + "'");
  }();
  node.finish();
  return out;
}

Optimizer default_optimizer(const MCriterion& problem) {
  // the quadratic criterion is smooth; refine far below sampling error
  if (problem.name == "quadratic_mean") return Optimizer::grid_refine(10, 21);
  return Optimizer::grid_refine(3, 21);
}

Optimizer optimizer(const std::optional<Node>& node, const MCriterion& problem) {
  if (!node) return default_optimizer(problem);
  const std::string kind = node->str("kind", "grid_refine");
  Optimizer out;
  if (kind == "grid_refine") {
    const Optimizer def = default_optimizer(problem);
    out = Optimizer::grid_refine(static_cast<int>(node->count("levels", static_cast<std::size_t>(def.levels))),
                                 static_cast<int>(node->count("points_per_axis",
                                                              static_cast<std::size_t>(def.points_per_axis))));
    if (out.points_per_axis < 2) node->at("points_per_axis").fail("need at least 2 points per axis");
  } else if (kind == "simplex") {
    out = Optimizer::simplex(node->count("max_iter", 500), node->real("tol", 1e-10));
  } else {
    node->at("kind").fail("unknown optimizer '" + kind + "'");
  }
  if (const auto b = node->find("bounds")) {
    Bounds bounds{b->at("lo").reals(), b->at("hi").reals()};
    if (bounds.lo.size() != static_cast<std::size_t>(problem.dim) || bounds.hi.size() != bounds.lo.size()) {
      b->fail("bounds need one entry per parameter coordinate");
    }
    b->finish();
    out.bounds = bounds;
  }
  node->finish();
  return out;
}

FunctionClass function_class(const Node& node, int m) {
  const std::string name = node.str();
  if (name == "legendre") return legendre_class(m);
  if (name == "legendre_mixture") return legendre_mixture_class(m);
  node.fail("unknown function class '" + name + "'");
}

Normalization normalization(const Node& node) {
  const std::string name = node.str();
  if (name == "binomial_average") return Normalization::BinomialAverage;
  if (name == "raw_sum") return Normalization::RawSum;
  if (name == "distinct_tuple_sum") return Normalization::DistinctTupleSum;
  node.fail("unknown normalization '" + name + "'");
}

ProjectionMethod projection_method(const Node& node) {
  const std::string name = node.str();
  if (name == "symbolic") return ProjectionMethod::Symbolic;
  if (name == "finite_support_exact") return ProjectionMethod::FiniteSupportExact;
  if (name == "monte_carlo") return ProjectionMethod::MonteCarlo;
  node.fail("unknown projection method '" + name + "'");
}

std::vector<std::string> kernel_names() {
  auto names = builtin::kernel_names();
  names.push_back("legendre_power{degree, order}");
  names.push_back("simplicial_indicator{theta}");
  return names;
}

std::vector<std::string> law_names() {
  return {"uniform01", "labeled_uniform01", "normal{mean, sd}", "standard_bivariate_normal",
          "bivariate_normal{mean, cov}", "finite_support{points, probs}", "population{path}"};
}

std::vector<std::string> scheme_names() {
  return {"gaussian", "rademacher", "uniform01", "efron", "bayesian", "pareto{alpha}", "constant{value}"};
}

std::vector<std::string> design_names() {
  return {"full", "bernoulli{p}", "poisson_unequal{pi0}", "srswor{n | fraction}", "stratified{bounds, sizes | fractions}"};
}

std::vector<std::string> criterion_names() { return {"quadratic_mean{mu}", "simplicial_median{theta0}"}; }

std::vector<std::string> class_names() { return {"legendre", "legendre_mixture"}; }

}  // namespace ustat::cfg
