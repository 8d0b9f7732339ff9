#include "ustat/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "config.hpp"
#include "ustat/clt.hpp"
#include "ustat/inequality.hpp"

namespace ustat {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("USTAT_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string s(raw);
  if (s.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(ErrorCode::ConfigInvalid, "USTAT_SEED must be an unsigned integer, got '" + s + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigInvalid, "USTAT_SEED out of range: '" + s + "'");
  }
}

std::vector<std::string> list_builtins() {
  std::vector<std::string> out;
  const auto add = [&](const std::string& group, const std::vector<std::string>& names) {
    for (const auto& n : names) out.push_back(group + "\t" + n);
  };
  add("kernel", cfg::kernel_names());
  add("law", cfg::law_names());
  add("scheme", cfg::scheme_names());
  add("design", cfg::design_names());
  add("criterion", cfg::criterion_names());
  add("class", cfg::class_names());
  add("experiment", {"ustat", "hoeffding", "multiplier-clt", "bootstrap-clt", "inequality", "bootstrap-m", "sampling",
                     "erm", "validate-weights"});
  return out;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// JSON cannot hold inf/nan; they become strings.
json jnum(double v) {
  if (std::isfinite(v)) return v;
  return num(v);
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }
  std::string text() const {
    std::ostringstream os;
    write_line(os, header_);
    for (const auto& r : rows_) write_line(os, r);
    return os.str();
  }

 private:
  static void write_line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  }
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct Context {
  cfg::Node root;
  std::string kind;
  std::uint64_t seed = 0;
  int threads = 1;
  fs::path base_dir;
  json summary = json::object();
  json seeds = json::object();
  std::map<std::string, std::string> files;  // name -> contents
  bool pass = true;

  explicit Context(cfg::Node r) : root(std::move(r)) {}

  std::uint64_t seed_for(const std::string& label) {
    const std::uint64_t s = derive_seed(seed, {kind, label});
    seeds[label] = std::to_string(s);
    return s;
  }
  void table(const std::string& name, const Table& t) { files[name] = t.text(); }
  void check(const std::string& name, bool ok, json detail = json::object()) {
    detail["pass"] = ok;
    summary["checks"][name] = std::move(detail);
    pass = pass && ok;
  }
};

Sample inline_sample(const cfg::Node& node) {
  if (!node.is_sequence() || node.size() == 0) node.fail("expected a non-empty list");
  std::vector<Point> points;
  int dim = 1;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const auto v = node[i].reals();
    if (v.size() == 2) {
      dim = 2;
      points.push_back({v[0], v[1]});
    } else if (v.size() == 1) {
      points.push_back(scalar(v[0]));
    } else {
      node[i].fail("expected one or two coordinates");
    }
  }
  if (dim == 2) {
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (node[i].reals().size() != 2) node[i].fail("mixed 1-d and 2-d points");
    }
  }
  return Sample(std::move(points), dim);
}

Law root_law(Context& ctx, const std::string& fallback = "") {
  if (const auto l = ctx.root.find("law")) return cfg::law(*l, ctx.base_dir.string());
  if (fallback.empty()) ctx.root.at("law");
  return cfg::law(cfg::Node(YAML::Node(fallback), "law"));
}

std::vector<WeightScheme> root_schemes(Context& ctx) {
  std::vector<WeightScheme> out;
  if (const auto list = ctx.root.find("schemes")) {
    if (!list->is_sequence() || list->size() == 0) list->fail("expected a non-empty list");
    for (std::size_t i = 0; i < list->size(); ++i) out.push_back(cfg::scheme((*list)[i]));
  } else {
    out.push_back(cfg::scheme(ctx.root.at("scheme")));
  }
  return out;
}

// ---------------------------------------------------------------- ustat

void run_ustat(Context& ctx) {
  const Kernel kernel = cfg::kernel(ctx.root.at("kernel"));
  const auto norm_node = ctx.root.find("normalization");
  const Normalization norm = norm_node ? cfg::normalization(*norm_node) : Normalization::BinomialAverage;
  Sample sample;
  if (const auto s = ctx.root.find("sample")) {
    sample = inline_sample(*s);
  } else {
    const Law law = root_law(ctx);
    Rng rng(ctx.seed_for("sample"));
    sample = law.sample(ctx.root.at("n").count(), rng);
  }
  const auto value = ustat(sample, kernel, norm);
  Table t({"kernel", "n", "normalization", "value"});
  const std::string norm_name = norm_node ? norm_node->str() : "binomial_average";
  t.row({kernel.name(), std::to_string(sample.size()), norm_name, num(value.value)});
  ctx.table("values.csv", t);
  ctx.summary["value"] = jnum(value.value);
  ctx.summary["n"] = sample.size();
  ctx.summary["kernel"] = kernel.name();
  if (const auto e = ctx.root.find("expect")) {
    const double expect = e->real();
    const double tol = ctx.root.real("tol", 1e-10);
    const double err = std::abs(value.value - expect) / std::max(1.0, std::abs(expect));
    ctx.check("expected_value", err <= tol, {{"expected", expect}, {"relative_error", err}, {"tol", tol}});
  }
}

// ------------------------------------------------------------ hoeffding

void run_hoeffding(Context& ctx) {
  const Kernel kernel = cfg::kernel(ctx.root.at("kernel"));
  const Law law = root_law(ctx);
  ProjectionConfig pc;
  if (const auto m = ctx.root.find("method")) pc.method = cfg::projection_method(*m);
  pc.n_mc = ctx.root.count("n_mc", pc.n_mc);
  pc.seed = ctx.seed_for("projection");
  const auto sizes = ctx.root.find("sizes") ? ctx.root.at("sizes").counts() : std::vector<std::size_t>{5, 50};
  if (sizes.size() != 2 || sizes[0] > sizes[1]) ctx.root.at("sizes").fail("expected [min, max]");
  const std::size_t samples = ctx.root.count("samples", 50);
  const bool exact = pc.method != ProjectionMethod::MonteCarlo;
  const double tol = ctx.root.real("tol", exact ? 1e-10 : 5.0);

  const auto decomp = decompose(kernel, law, pc);
  Rng rng(ctx.seed_for("samples"));
  std::uniform_int_distribution<std::size_t> size_dist(sizes[0], sizes[1]);
  Table t({"sample", "n", "ustat", "residual", "relative_residual", "standard_error"});
  double worst = 0.0;
  bool ok = true;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t n = size_dist(rng);
    const Sample x = law.sample(n, rng);
    const auto r = reconstruct(decomp, x);
    const double rel = r.residual / std::max(1.0, std::abs(r.ustat_value));
    worst = std::max(worst, rel);
    ok = ok && (exact ? rel <= tol : r.residual <= tol * r.standard_error + 1e-10);
    t.row({std::to_string(s), std::to_string(n), num(r.ustat_value), num(r.residual), num(rel), num(r.standard_error)});
  }
  ctx.table("reconstruction.csv", t);
  ctx.check("reconstruction", ok, {{"max_relative_residual", worst}, {"tol", tol}, {"samples", samples}});

  if (const auto d = ctx.root.find("degeneracy")) {
    DegeneracyOptions opt;
    opt.n_mc = d->count("n_mc", opt.n_mc);
    opt.tol_sd = d->real("tol_sd", opt.tol_sd);
    opt.grid_points = d->count("grid_points", opt.grid_points);
    opt.threads = ctx.threads;
    d->finish();
    Table dt({"k", "pass", "max_standardized", "points_checked"});
    bool all = true;
    json rows = json::array();
    for (int k = 1; k <= kernel.order(); ++k) {
      opt.seed = ctx.seed_for("degeneracy-" + std::to_string(k));
      const auto rep = check_complete_degeneracy(decomp.projections[static_cast<std::size_t>(k)], law, opt);
      all = all && rep.pass;
      dt.row({std::to_string(k), rep.pass ? "true" : "false", num(rep.max_standardized),
              std::to_string(rep.points_checked)});
      rows.push_back({{"k", k}, {"pass", rep.pass}, {"max_standardized", jnum(rep.max_standardized)}});
    }
    ctx.table("degeneracy.csv", dt);
    ctx.check("projection_degeneracy", all, {{"projections", rows}, {"tol_sd", opt.tol_sd}});
  }
}

// ------------------------------------------------------------------ CLT

CltConfig clt_config(Context& ctx) {
  CltConfig c;
  c.n = ctx.root.count("n", c.n);
  c.B = ctx.root.count("B", c.B);
  c.ref_draws = ctx.root.count("ref_draws", c.ref_draws);
  c.c2_reps = ctx.root.count("c2_reps", c.c2_reps);
  c.degeneracy_mc = ctx.root.count("degeneracy_mc", c.degeneracy_mc);
  c.threads = ctx.threads;
  return c;
}

void write_replicates(Context& ctx, const std::string& name, const CltExperimentResult& r) {
  Table t({"replicate", "value"});
  for (std::size_t i = 0; i < r.replicates.size(); ++i) t.row({std::to_string(i), num(r.replicates[i])});
  ctx.table(name, t);
}

json null_ks(Context& ctx, const Kernel& kernel, const Law& law, const CltConfig& c, double scale) {
  const std::size_t reps = ctx.root.count("null_ks_reps", 0);
  if (reps == 0) return nullptr;
  auto spec = ChaosSpec::from_kernel(kernel, law);
  for (double& q : spec.coeffs) q *= scale;
  return null_ks_quantile(spec, c.B, c.ref_draws, reps, 0.99, ctx.seed_for("null-ks"));
}

void run_multiplier_clt(Context& ctx) {
  const Kernel kernel = cfg::kernel(ctx.root.at("kernel"));
  const Law law = root_law(ctx);
  const WeightScheme scheme = cfg::scheme(ctx.root.at("scheme"));
  CltConfig c = clt_config(ctx);
  c.seed = ctx.seed_for("experiment");
  const double ks_max = ctx.root.real("ks_max", 0.06);
  const auto r = multiplier_clt_experiment(kernel, law, scheme, c);
  ctx.seeds["data"] = std::to_string(r.data_seed);
  ctx.seeds["weights"] = std::to_string(r.weight_seed);
  ctx.seeds["reference"] = std::to_string(r.reference_seed);
  write_replicates(ctx, "replicates.csv", r);
  const json q99 = null_ks(ctx, kernel, law, c, 1.0);
  ctx.summary["ks"] = r.ks;
  ctx.summary["null_ks_q99"] = q99;
  ctx.check("ks", r.ks <= ks_max, {{"ks", r.ks}, {"ks_max", ks_max}, {"scheme", scheme.name()}});
}

void run_bootstrap_clt(Context& ctx) {
  const Kernel kernel = cfg::kernel(ctx.root.at("kernel"));
  const Law law = root_law(ctx);
  const auto schemes = root_schemes(ctx);
  CltConfig c = clt_config(ctx);
  const double ks_max = ctx.root.real("ks_max", 0.08);
  json rows = json::array();
  bool ok = true;
  for (const auto& scheme : schemes) {
    c.seed = ctx.seed_for("experiment-" + scheme.name());
    const auto r = bootstrap_clt_experiment(kernel, law, scheme, c);
    write_replicates(ctx, "bootstrap_" + scheme.name() + ".csv", r);
    const bool pass = r.ks <= ks_max;
    ok = ok && pass;
    rows.push_back({{"scheme", scheme.name()},
                    {"ks", r.ks},
                    {"c_hat", r.c_hat},
                    {"c_hat_se", r.c_hat_se},
                    {"null_ks_q99", null_ks(ctx, kernel, law, c, r.c_hat)},
                    {"pass", pass}});
  }
  ctx.summary["schemes"] = rows;
  ctx.check("ks", ok, {{"ks_max", ks_max}});
}

// ----------------------------------------------------------- inequality

void run_inequality(Context& ctx) {
  const Law law = root_law(ctx, "uniform01");
  const auto ms = ctx.root.find("m") ? ctx.root.at("m").counts() : std::vector<std::size_t>{1, 2};
  const auto ns = ctx.root.find("n") ? ctx.root.at("n").counts() : std::vector<std::size_t>{10, 20, 40};
  std::vector<WeightScheme> schemes;
  if (ctx.root.has("schemes") || ctx.root.has("scheme")) {
    schemes = root_schemes(ctx);
  } else {
    schemes = {WeightScheme::gaussian(), WeightScheme::rademacher(), WeightScheme::pareto(5.0)};
  }
  std::vector<std::string> classes{"legendre", "legendre_mixture"};
  if (const auto cl = ctx.root.find("classes")) {
    classes.clear();
    for (std::size_t i = 0; i < cl->size(); ++i) classes.push_back((*cl)[i].str());
  }
  const std::size_t lhs_reps = ctx.root.count("lhs_reps", 2000);
  const std::size_t rhs_reps = ctx.root.count("rhs_reps", 2000);
  PsiOptions psi;
  if (const auto p = ctx.root.find("psi")) {
    psi.reps = p->count("reps", psi.reps);
    psi.inflation_z = p->real("inflation_z", psi.inflation_z);
    psi.degeneracy_mc = p->count("degeneracy_mc", psi.degeneracy_mc);
    p->finish();
  }
  psi.threads = ctx.threads;
  const std::size_t n_max = *std::max_element(ns.begin(), ns.end());

  Table t({"config", "m", "n", "scheme", "class", "lhs", "se", "rhs", "K_m", "margin", "pass"});
  json rows = json::array();
  bool ok = true;
  std::size_t count = 0;
  for (const std::size_t m : ms) {
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      const cfg::Node cls_node = ctx.root.has("classes") ? ctx.root.at("classes")[ci]
                                                         : cfg::Node(YAML::Node(classes[ci]), "classes");
      const FunctionClass cls = cfg::function_class(cls_node, static_cast<int>(m));
      psi.seed = ctx.seed_for("psi-m" + std::to_string(m) + "-" + classes[ci]);
      const PsiEnvelope env = estimate_psi(cls, law, n_max, psi);
      for (const std::size_t n : ns) {
        for (const auto& scheme : schemes) {
          InequalityConfig ic{"m" + std::to_string(m) + "-n" + std::to_string(n) + "-" + scheme.name() + "-" + classes[ci],
                              cls, law, scheme, n, lhs_reps, rhs_reps, psi, env};
          ic.psi.seed = ctx.seed_for(ic.label);
          const auto r = check_inequality(ic);
          ok = ok && r.pass;
          ++count;
          t.row({r.label, std::to_string(m), std::to_string(n), scheme.name(), classes[ci], num(r.lhs.mean),
                 num(r.lhs.se), num(r.rhs.mean), num(r.K), num(r.margin), r.pass ? "true" : "false"});
          rows.push_back({{"config", r.label},
                          {"LHS", jnum(r.lhs.mean)},
                          {"SE", jnum(r.lhs.se)},
                          {"RHS", jnum(r.rhs.mean)},
                          {"K_m", r.K},
                          {"margin", jnum(r.margin)},
                          {"pass", r.pass}});
        }
      }
    }
  }
  ctx.table("inequality.csv", t);
  ctx.summary["rows"] = rows;
  ctx.check("all_configs", ok, {{"configs", count}});
}

// ---------------------------------------------------------- bootstrap-m

void run_bootstrap_m(Context& ctx) {
  const MCriterion problem = cfg::criterion(ctx.root.at("criterion"));
  const Law law = root_law(ctx);
  const WeightScheme scheme = cfg::scheme(ctx.root.at("scheme"));
  const Optimizer opt = cfg::optimizer(ctx.root.find("optimizer"), problem);
  const std::string mode = ctx.root.str("mode", "distribution");
  const auto d = static_cast<std::size_t>(problem.dim);
  if (mode == "distribution") {
    BootstrapMConfig c;
    c.n = ctx.root.count("n", c.n);
    c.B = ctx.root.count("B", c.B);
    c.mc_datasets = ctx.root.count("mc_datasets", c.mc_datasets);
    c.c2_reps = ctx.root.count("c2_reps", c.c2_reps);
    c.seed = ctx.seed_for("experiment");
    c.threads = ctx.threads;
    const auto r = bootstrap_m_experiment(problem, law, scheme, opt, c);
    ctx.seeds["data"] = std::to_string(r.data_seed);
    ctx.seeds["weights"] = std::to_string(r.weight_seed);
    ctx.seeds["mc"] = std::to_string(r.mc_seed);
    std::vector<std::string> header{"kind", "replicate"};
    for (std::size_t k = 0; k < d; ++k) header.push_back("theta" + std::to_string(k + 1));
    Table t(header);
    const auto emit = [&](const std::string& kind, const std::vector<std::vector<double>>& rows) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<std::string> cells{kind, std::to_string(i)};
        for (const double v : rows[i]) cells.push_back(num(v));
        t.row(cells);
      }
    };
    emit("bootstrap", r.bootstrap);
    emit("sampling", r.sampling);
    ctx.table("replicates.csv", t);
    ctx.summary["theta_hat"] = r.theta_hat;
    ctx.summary["ks"] = r.ks;
    ctx.summary["bootstrap_sd"] = r.bootstrap_sd;
    ctx.summary["sampling_sd"] = r.sampling_sd;
    ctx.summary["c_hat"] = r.c_hat;
    const double ks_max = ctx.root.real("ks_max", 0.1);
    ctx.check("ks", *std::max_element(r.ks.begin(), r.ks.end()) <= ks_max, {{"ks_max", ks_max}});
    if (const auto sd = ctx.root.find("sd_reference")) {
      const double ref = sd->real();
      const double tol = ctx.root.real("sd_rel_tol", 0.1);
      bool ok = true;
      for (std::size_t k = 0; k < d; ++k) {
        ok = ok && std::abs(r.bootstrap_sd[k] / ref - 1.0) <= tol && std::abs(r.sampling_sd[k] / ref - 1.0) <= tol;
      }
      ctx.check("sd", ok, {{"reference", ref}, {"rel_tol", tol}});
    }
  } else if (mode == "coverage") {
    const std::size_t n = ctx.root.count("n", 100);
    const std::size_t B = ctx.root.count("B", 200);
    const std::size_t datasets = ctx.root.count("datasets", 200);
    const double level = ctx.root.real("level", 0.95);
    const auto band = ctx.root.find("band") ? ctx.root.at("band").reals() : std::vector<double>{0.88, 0.98};
    if (band.size() != 2) ctx.root.at("band").fail("expected [lo, hi]");
    const auto r = bootstrap_ci_coverage(problem, law, scheme, opt, n, B, datasets, level, ctx.seed_for("coverage"),
                                         ctx.threads);
    Table t({"dataset", "statistic", "covered"});
    for (std::size_t j = 0; j < r.statistics.size(); ++j) {
      t.row({std::to_string(j), num(r.statistics[j]), r.statistics[j] <= r.cutoff ? "true" : "false"});
    }
    ctx.table("coverage.csv", t);
    ctx.summary["coverage"] = r.coverage;
    ctx.summary["covered"] = r.covered;
    ctx.summary["datasets"] = r.datasets;
    ctx.check("coverage", r.coverage >= band[0] && r.coverage <= band[1], {{"band", band}, {"level", level}});
  } else {
    ctx.root.at("mode").fail("expected distribution or coverage");
  }
}

// ------------------------------------------------------------- sampling

struct PopulationSource {
  std::optional<Law> law;
  std::optional<Population> file;

  std::pair<Sample, std::vector<double>> draw(std::size_t N, std::uint64_t seed) const {
    if (file) {
      const auto z = file->z ? *file->z : file->x.coordinate(0);
      return {file->x, z};
    }
    Rng rng(seed);
    Sample x = law->sample(N, rng);
    auto z = x.coordinate(0);
    return {std::move(x), std::move(z)};
  }
};

PopulationSource population_source(Context& ctx) {
  PopulationSource src;
  if (const auto p = ctx.root.find("population")) {
    fs::path path = p->str();
    if (path.is_relative()) path = ctx.base_dir / path;
    src.file = read_population_csv(path.string());
  } else {
    src.law = root_law(ctx);
  }
  return src;
}

std::vector<std::size_t> sizes_for(const PopulationSource& src, const cfg::Node& node) {
  if (src.file) return {src.file->x.size()};
  return node.at("N").counts();
}

void run_sampling(Context& ctx) {
  const Design design = cfg::design(ctx.root.at("design"));
  const PopulationSource src = population_source(ctx);
  ctx.summary["design"] = design.name();
  bool any = false;

  if (const auto hb = ctx.root.find("ht_bias")) {
    any = true;
    const Kernel kernel = cfg::kernel(hb->at("kernel"));
    const auto Ns = sizes_for(src, *hb);
    const std::size_t reps = hb->count("reps", 10000);
    const double max_z = hb->real("max_z", 4.0);
    const auto min_shrink = hb->find("min_shrink");
    Table t({"N", "full_value", "ht_mean", "ht_se", "mc_bias", "exact_bias", "z"});
    json rows = json::array();
    std::vector<HtBiasResult> results;
    for (const std::size_t N : Ns) {
      const auto [x, z] = src.draw(N, ctx.seed_for("population-" + std::to_string(N)));
      const auto r = ht_bias_experiment(x, design, kernel, z, reps, ctx.seed_for("ht-bias-" + std::to_string(N)),
                                        ctx.threads);
      results.push_back(r);
      const double exact = r.exact_bias.value_or(NAN);
      t.row({std::to_string(N), num(r.full_value), num(r.ht.mean), num(r.ht.se), num(r.mc_bias), num(exact),
             num(r.z_unbiased)});
      rows.push_back({{"N", N}, {"mc_bias", jnum(r.mc_bias)}, {"se", jnum(r.ht.se)}, {"exact_bias", jnum(exact)},
                      {"z", jnum(r.z_unbiased)}});
    }
    ctx.table("ht_bias.csv", t);
    ctx.summary["ht_bias"] = rows;
    if (design.independent()) {
      bool ok = true;
      for (const auto& r : results) ok = ok && std::abs(r.z_unbiased) <= max_z;
      ctx.check("ht_unbiased", ok, {{"max_z", max_z}});
    }
    if (min_shrink) {
      const double want = min_shrink->real();
      if (results.size() < 2 || !results.front().exact_bias || !results.back().exact_bias) {
        min_shrink->fail("needs at least two N values and an order-2 kernel");
      }
      const double shrink = std::abs(*results.front().exact_bias) / std::abs(*results.back().exact_bias);
      // the MC bias must agree with the exact design expectation
      bool consistent = true;
      for (const auto& r : results) consistent = consistent && std::abs(r.mc_bias - *r.exact_bias) <= max_z * r.ht.se;
      ctx.check("bias_shrink", shrink >= want && consistent,
                {{"shrink", shrink}, {"min_shrink", want}, {"mc_consistent", consistent}});
    }
    hb->finish();
  }

  if (const auto lin = ctx.root.find("linearization")) {
    any = true;
    const MCriterion problem = cfg::criterion(lin->at("criterion"));
    if (!src.law) lin->fail("linearization needs a law");
    const auto Ns = lin->at("N").counts();
    const std::size_t reps = lin->count("reps", 1000);
    const Optimizer opt = cfg::optimizer(lin->find("optimizer"), problem);
    const auto levels = linearization_check(problem, *src.law, design, Ns, reps, opt, ctx.seed_for("linearization"),
                                            ctx.threads);
    Table t({"N", "rms", "rms_se", "max_abs"});
    json rows = json::array();
    for (const auto& l : levels) {
      t.row({std::to_string(l.N), num(l.rms), num(l.rms_se), num(l.max_abs)});
      rows.push_back({{"N", l.N}, {"rms", jnum(l.rms)}, {"rms_se", jnum(l.rms_se)}});
    }
    ctx.table("linearization.csv", t);
    ctx.summary["linearization"] = rows;
    if (const auto md = lin->find("min_decay")) {
      const double decay = levels.back().rms > 0.0 ? levels.front().rms / levels.back().rms : INFINITY;
      ctx.check("linearization_decay", decay >= md->real(), {{"decay", jnum(decay)}, {"min_decay", md->real()}});
    }
    if (const auto mx = lin->find("max_rms")) {
      bool ok = true;
      for (const auto& l : levels) ok = ok && l.rms <= mx->real();
      ctx.check("linearization_rms", ok, {{"max_rms", mx->real()}});
    }
    lin->finish();
  }

  if (const auto vb = ctx.root.find("validate_b")) {
    any = true;
    const auto r = validate_B(design, vb->at("N").count(), vb->count("reps", 1000), ctx.seed_for("validate-b"));
    Table t({"N", "sd", "predicted_sd", "max_abs"});
    for (const auto& l : r.levels) {
      t.row({std::to_string(l.N), num(l.sd), num(l.predicted_sd.value_or(NAN)), num(l.max_abs)});
    }
    ctx.table("validate_b.csv", t);
    ctx.summary["b1_pass"] = r.b1_pass;
    ctx.summary["min_pi"] = r.min_pi;
    ctx.check("b1", r.b1_pass, {{"failure", r.b1_failure}});
    vb->finish();
  }
  if (!any) ctx.root.fail("sampling needs at least one of ht_bias, linearization, validate_b");
}

// ------------------------------------------------------------------ ERM

/// Non-increasing medians, allowing one inversion no larger than the
/// combined notch half-widths 1.58 IQR / sqrt(reps).
bool medians_non_increasing(const std::vector<ErmLevel>& levels, std::size_t reps, json& detail) {
  std::size_t inversions = 0;
  bool within = true;
  for (std::size_t k = 1; k < levels.size(); ++k) {
    const double rise = levels[k].median - levels[k - 1].median;
    if (rise <= 0.0) continue;
    ++inversions;
    const double notch = 1.58 * ((levels[k].q75 - levels[k].q25) + (levels[k - 1].q75 - levels[k - 1].q25)) /
                         std::sqrt(static_cast<double>(reps));
    within = within && rise <= notch;
  }
  detail["inversions"] = inversions;
  return inversions == 0 || (inversions == 1 && within);
}

void run_erm(Context& ctx) {
  const cfg::Node pn = ctx.root.at("problem");
  const std::string name = pn.is_scalar() ? pn.str() : pn.at("name").str();
  if (name != "threshold_ranking") pn.fail("unknown ERM problem '" + name + "'");
  const ErmProblem problem = ErmProblem::threshold_ranking(pn.real("step", 0.05));
  pn.finish();
  const Design design = cfg::design(ctx.root.at("design"));
  const auto Ns = ctx.root.at("N").counts();
  const std::size_t reps = ctx.root.count("reps", 500);
  const auto levels = erm_experiment(problem, design, Ns, reps, ctx.seed_for("erm"), ctx.threads);
  Table t({"N", "median", "mean", "q25", "q75"});
  json rows = json::array();
  for (const auto& l : levels) {
    t.row({std::to_string(l.N), num(l.median), num(l.mean), num(l.q25), num(l.q75)});
    rows.push_back({{"N", l.N}, {"median", l.median}, {"mean", l.mean}});
  }
  ctx.table("erm.csv", t);
  ctx.summary["levels"] = rows;
  json detail;
  ctx.check("median_non_increasing", medians_non_increasing(levels, reps, detail), detail);
}

// ----------------------------------------------------- validate-weights

void run_validate_weights(Context& ctx) {
  const auto schemes = root_schemes(ctx);
  const std::size_t n = ctx.root.count("n", 200);
  const std::size_t reps = ctx.root.count("reps", 500);
  const auto ps = ctx.root.find("lp1_p") ? ctx.root.at("lp1_p").reals() : std::vector<double>{};
  Table t({"scheme", "w1_pass", "multiplier_only", "max_term_decreasing", "c2"});
  Table lt({"scheme", "p", "infinite", "value", "error"});
  json rows = json::array();
  for (const auto& scheme : schemes) {
    const auto v = validate_W(scheme, n, reps, ctx.seed_for("validate-" + scheme.name()));
    const double c2 = v.levels.empty() ? NAN : v.levels.back().c2.mean;
    t.row({scheme.name(), v.w1_pass ? "true" : "false", v.multiplier_only ? "true" : "false",
           v.max_term_decreasing ? "true" : "false", num(c2)});
    json lp = json::array();
    for (const double p : ps) {
      const auto l = lp1_norm(scheme, n, p);
      lt.row({scheme.name(), num(p), l.infinite ? "true" : "false", num(l.value), num(l.error)});
      lp.push_back({{"p", p}, {"infinite", l.infinite}, {"value", jnum(l.value)}});
    }
    rows.push_back({{"scheme", scheme.name()},
                    {"w1_pass", v.w1_pass},
                    {"multiplier_only", v.multiplier_only},
                    {"max_term_decreasing", v.max_term_decreasing},
                    {"c2", jnum(c2)},
                    {"lp1", lp}});
  }
  ctx.table("weights.csv", t);
  if (!ps.empty()) ctx.table("lp1.csv", lt);
  ctx.summary["schemes"] = rows;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Map: {
      json out = json::object();
      for (const auto& kv : node) out[kv.first.Scalar()] = yaml_to_json(kv.second);
      return out;
    }
    case YAML::NodeType::Sequence: {
      json out = json::array();
      for (const auto& item : node) out.push_back(yaml_to_json(item));
      return out;
    }
    case YAML::NodeType::Scalar: {
      // quoted scalars carry the "!" tag and stay strings
      if (node.Tag() == "!") return node.Scalar();
      long long i = 0;
      double d = 0.0;
      bool b = false;
      if (YAML::convert<long long>::decode(node, i)) return i;
      if (YAML::convert<double>::decode(node, d) && std::isfinite(d)) return d;
      if (YAML::convert<bool>::decode(node, b)) return b;
      return node.Scalar();
    }
    default: return nullptr;
  }
}

}  // namespace

RunResult run_experiment(const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path config_path = options.config_path;
  const std::string text = read_text(config_path);
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ConfigInvalid, "line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!doc.IsMap()) throw Error(ErrorCode::ConfigInvalid, "config must be a mapping");

  Context ctx{cfg::Node(doc, "")};
  ctx.base_dir = config_path.parent_path();
  ctx.kind = ctx.root.at("kind").str();
  const cfg::Node seed_node = ctx.root.at("seed");
  const std::string seed_text = seed_node.str();
  if (seed_text.empty() || seed_text.find_first_not_of("0123456789") != std::string::npos) {
    seed_node.fail("seed must be an unsigned integer");
  }
  try {
    ctx.seed = options.seed_override ? *options.seed_override : std::stoull(seed_text);
  } catch (const std::exception&) {
    seed_node.fail("seed out of range");
  }
  ctx.threads = options.threads ? *options.threads : static_cast<int>(ctx.root.count("threads", 1));
  if (ctx.threads < 1) throw Error(ErrorCode::ConfigInvalid, "threads must be positive");
  fs::path out_dir = options.out_dir ? fs::path(*options.out_dir)
                                     : fs::path(ctx.root.str("output", ("out/" + config_path.stem().string())));

  ctx.summary["kind"] = ctx.kind;
  ctx.summary["seed"] = std::to_string(ctx.seed);
  if (ctx.kind == "ustat") {
    run_ustat(ctx);
  } else if (ctx.kind == "hoeffding") {
    run_hoeffding(ctx);
  } else if (ctx.kind == "multiplier-clt") {
    run_multiplier_clt(ctx);
  } else if (ctx.kind == "bootstrap-clt") {
    run_bootstrap_clt(ctx);
  } else if (ctx.kind == "inequality") {
    run_inequality(ctx);
  } else if (ctx.kind == "bootstrap-m") {
    run_bootstrap_m(ctx);
  } else if (ctx.kind == "sampling") {
    run_sampling(ctx);
  } else if (ctx.kind == "erm") {
    run_erm(ctx);
  } else if (ctx.kind == "validate-weights") {
    run_validate_weights(ctx);
  } else {
    ctx.root.at("kind").fail("unknown experiment kind '" + ctx.kind + "'");
  }
  ctx.root.finish();
  ctx.summary["pass"] = ctx.pass;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  RunResult result;
  result.out_dir = out_dir.string();
  ctx.files["summary.json"] = ctx.summary.dump(2) + "\n";
  for (const auto& [name, contents] : ctx.files) {
    write_text(out_dir / name, contents);
    result.digests[name] = sha256_hex(contents);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json manifest = {{"version", kVersion},
                   {"config_path", config_path.string()},
                   {"config_text", text},
                   {"config", yaml_to_json(doc)},
                   {"master_seed", std::to_string(ctx.seed)},
                   {"threads", ctx.threads},
                   {"derived_seeds", ctx.seeds},
                   {"wall_time_s", wall},
                   {"files", result.digests}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  result.summary_path = (out_dir / "summary.json").string();
  result.manifest_path = (out_dir / "manifest.json").string();
  result.pass = ctx.pass;
  result.exit_code = ctx.pass ? 0 : 2;
  return result;
}

}  // namespace ustat
