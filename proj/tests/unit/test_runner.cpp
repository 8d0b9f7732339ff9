#include <unistd.h>

#include <cstdlib>
#include <functional>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>

#include <json.hpp>

#include "doctest.h"
#include "ustat/error.hpp"
#include "ustat/rng.hpp"
#include "ustat/runner.hpp"

using namespace ustat;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("ustat_runner_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }

  std::string config(const std::string& name, const std::string& text) const {
    const fs::path p = dir / (name + ".yaml");
    std::ofstream(p) << text;
    return p.string();
  }
  RunResult run(const std::string& name, const std::string& text, int threads = 1,
                const std::string& out = "") const {
    RunOptions o;
    o.config_path = config(name, text);
    o.threads = threads;
    o.out_dir = (dir / (out.empty() ? name : out)).string();
    return run_experiment(o);
  }
};

json load(const std::string& path) {
  std::ifstream in(path);
  return json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("minimal ustat config") {
    Scratch s;
    const auto r = s.run("min", "kind: ustat\nseed: 1\nkernel: product_xy\nsample: [1, 2, 3]\nexpect: 3.6666666666666667\n");
    CHECK(r.exit_code == 0);
    const auto summary = load(r.summary_path);
    CHECK(summary["value"].get<double>() == doctest::Approx(11.0 / 3.0));
    CHECK(slurp(fs::path(r.out_dir) / "values.csv").find("3.66666666666666") != std::string::npos);
  }

  TEST_CASE("failed check gives exit code 2") {
    Scratch s;
    const auto r = s.run("bad", "kind: ustat\nseed: 1\nkernel: product_xy\nsample: [1, 2, 3]\nexpect: 4\n");
    CHECK(r.exit_code == 2);
    CHECK_FALSE(r.pass);
  }

  TEST_CASE("config errors name the field and line") {
    Scratch s;
    const auto unknown_kernel = [&] { s.run("k", "kind: ustat\nseed: 1\nkernel: nope\nsample: [1, 2]\n"); };
    CHECK(code_of(unknown_kernel) == ErrorCode::ConfigInvalid);
    const std::string msg = message_of(unknown_kernel);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("kernel") != std::string::npos);

    CHECK(code_of([&] { s.run("u", "kind: ustat\nseed: 1\nkernel: product_xy\nsample: [1, 2]\ncolour: red\n"); }) ==
          ErrorCode::ConfigInvalid);
    CHECK(code_of([&] { s.run("s", "kind: ustat\nkernel: product_xy\nsample: [1, 2]\n"); }) ==
          ErrorCode::ConfigInvalid);
    CHECK(code_of([&] { s.run("n", "kind: ustat\nseed: 1\nkernel: product_xy\nlaw: uniform01\nn: -3\n"); }) ==
          ErrorCode::ConfigInvalid);
    CHECK(code_of([&] { s.run("x", "kind: nonsense\nseed: 1\n"); }) == ErrorCode::ConfigInvalid);
    CHECK(code_of([&] { s.run("y", "kind: ustat\nseed: 1\nkernel: [unclosed\n"); }) == ErrorCode::ConfigInvalid);
  }

  TEST_CASE("manifest digests match the emitted files") {
    Scratch s;
    const auto r = s.run("erm", "kind: erm\nseed: 3\nproblem: {name: threshold_ranking, step: 0.1}\ndesign: {name: bernoulli, p: 0.5}\n"
                                "N: [50, 100]\nreps: 20\n");
    const auto manifest = load(r.manifest_path);
    CHECK(manifest["version"] == kVersion);
    CHECK(manifest["master_seed"] == "3");
    CHECK(manifest["config"]["N"] == json::array({50, 100}));
    REQUIRE(!r.digests.empty());
    for (const auto& [file, digest] : manifest["files"].items()) {
      CHECK(sha256_file((fs::path(r.out_dir) / file).string()) == digest.get<std::string>());
    }
  }

  TEST_CASE("seed override changes the derived streams") {
    Scratch s;
    const std::string text = "kind: ustat\nseed: 1\nkernel: product_xy\nlaw: uniform01\nn: 30\n";
    RunOptions a{s.config("a", text), 1, (s.dir / "a").string(), std::nullopt};
    RunOptions b{s.config("a", text), 1, (s.dir / "b").string(), 99};
    const auto va = load(run_experiment(a).summary_path)["value"].get<double>();
    const auto vb = load(run_experiment(b).summary_path)["value"].get<double>();
    CHECK(va != vb);
    ::setenv("USTAT_SEED", "99", 1);
    CHECK(seed_from_env() == std::optional<std::uint64_t>(99));
    ::setenv("USTAT_SEED", "abc", 1);
    CHECK_THROWS_AS(seed_from_env(), Error);
    ::unsetenv("USTAT_SEED");
    CHECK_FALSE(seed_from_env().has_value());
  }

  TEST_CASE("threaded runs agree with single-thread runs") {
    Scratch s;
    const std::string text =
        "kind: multiplier-clt\nseed: 2\nkernel: centered_legendre1_pair\nlaw: uniform01\nscheme: rademacher\n"
        "n: 60\nB: 300\nref_draws: 2000\nks_max: 1\n";
    const auto one = s.run("clt", text, 1, "one");
    const auto four = s.run("clt", text, 4, "four");
    CHECK(load(one.summary_path)["ks"].get<double>() == doctest::Approx(load(four.summary_path)["ks"].get<double>()).epsilon(1e-9));
    CHECK(one.digests.at("replicates.csv") == four.digests.at("replicates.csv"));
  }

  TEST_CASE("every experiment kind runs") {
    Scratch s;
    const std::vector<std::pair<std::string, std::string>> configs{
        {"hoeffding", "kind: hoeffding\nseed: 1\nkernel: product_xy\nlaw: uniform01\nsizes: [5, 10]\nsamples: 5\n"},
        {"hoeffding_mc", "kind: hoeffding\nseed: 1\nkernel: product_xy\nlaw: uniform01\nmethod: monte_carlo\n"
                         "n_mc: 2000\nsizes: [5, 6]\nsamples: 3\n"},
        {"bclt", "kind: bootstrap-clt\nseed: 1\nkernel: centered_legendre1_pair\nlaw: uniform01\nschemes: [efron]\n"
                 "n: 60\nB: 100\nref_draws: 1000\nc2_reps: 100\nks_max: 1\n"},
        {"ineq", "kind: inequality\nseed: 1\nm: [2]\nn: [10]\nschemes: [gaussian]\nclasses: [legendre]\n"
                 "lhs_reps: 200\nrhs_reps: 200\npsi: {reps: 100}\n"},
        {"bm", "kind: bootstrap-m\nseed: 1\ncriterion: {name: quadratic_mean, mu: 0.5}\nlaw: uniform01\n"
               "scheme: bayesian\nn: 40\nB: 40\nmc_datasets: 40\nc2_reps: 100\nks_max: 1\n"},
        {"cov", "kind: bootstrap-m\nseed: 1\nmode: coverage\ncriterion: {name: simplicial_median, theta0: [0, 0]}\n"
                "law: standard_bivariate_normal\nscheme: efron\nn: 20\nB: 20\ndatasets: 4\nband: [0, 1]\n"},
        {"samp", "kind: sampling\nseed: 1\nlaw: {name: normal, mean: 0, sd: 1}\ndesign: {name: bernoulli, p: 0.5}\n"
                 "ht_bias: {kernel: product_xy, N: [40], reps: 200}\n"
                 "linearization: {criterion: {name: quadratic_mean, mu: 0}, N: [40, 80], reps: 20}\n"
                 "validate_b: {N: 40, reps: 50}\n"},
        {"strat", "kind: sampling\nseed: 1\nlaw: uniform01\n"
                  "design: {name: stratified, bounds: [0.5], fractions: [0.3, 0.6]}\n"
                  "ht_bias: {kernel: product_xy, N: [40], reps: 100}\n"},
        {"weights", "kind: validate-weights\nseed: 1\nschemes: [efron, gaussian]\nn: 100\nreps: 50\nlp1_p: [2]\n"},
    };
    for (const auto& [name, text] : configs) {
      CAPTURE(name);
      const auto r = s.run(name, text);
      CHECK(fs::exists(r.summary_path));
      CHECK(fs::exists(r.manifest_path));
      CHECK(load(r.summary_path)["kind"].is_string());
    }
  }

  TEST_CASE("population file input") {
    Scratch s;
    std::ofstream(s.dir / "pop.csv") << "x,z\n0.1,-1\n0.4,0.2\n0.7,1.5\n0.2,0.3\n0.9,-0.4\n";
    const auto r = s.run("pop", "kind: sampling\nseed: 1\npopulation: pop.csv\ndesign: {name: poisson_unequal, pi0: 0.2}\n"
                                "ht_bias: {kernel: product_xy, reps: 500}\n");
    CHECK(load(r.summary_path)["ht_bias"][0]["N"] == 5);
  }

  TEST_CASE("built-in listing") {
    const auto names = list_builtins();
    const auto has = [&](const std::string& needle) {
      for (const auto& n : names) {
        if (n.find(needle) != std::string::npos) return true;
      }
      return false;
    };
    CHECK(has("product_xy"));
    CHECK(has("efron"));
    CHECK(has("srswor"));
    CHECK(has("simplicial_median"));
  }

  TEST_CASE("sha256 test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }
}

TEST_SUITE("seeds") {
  TEST_CASE("no collisions over a million replicate indices") {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(2000000);
    for (std::uint64_t i = 0; i < 1000000; ++i) seen.insert(derive_seed(2024, {"replicate", i}));
    CHECK(seen.size() == 1000000);
  }

  TEST_CASE("empty label path is pinned") {
    CHECK(derive_seed(42, {}) == derive_seed(42, {}));
    CHECK(derive_seed(42, {}) != derive_seed(43, {}));
    CHECK(derive_seed(42, {}) == UINT64_C(13679457532755275413));
  }
}
