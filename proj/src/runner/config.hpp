#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "ustat/error.hpp"
#include "ustat/hoeffding.hpp"
#include "ustat/kernel.hpp"
#include "ustat/law.hpp"
#include "ustat/mestimation.hpp"
#include "ustat/sampling.hpp"
#include "ustat/ustat.hpp"
#include "ustat/weights.hpp"

namespace ustat::cfg {

/// A YAML node with its dotted field path, for diagnostics. Map keys that
/// are never read are reported by `finish`.
class Node {
 public:
  Node(YAML::Node node, std::string path);

  [[noreturn]] void fail(const std::string& message) const;

  bool has(const std::string& key) const;
  Node at(const std::string& key) const;
  std::optional<Node> find(const std::string& key) const;

  bool is_map() const { return node_.IsMap(); }
  bool is_sequence() const { return node_.IsSequence(); }
  bool is_scalar() const { return node_.IsScalar(); }
  std::size_t size() const { return node_.size(); }
  Node operator[](std::size_t i) const;

  std::string str() const;
  double real() const;
  long long integer() const;
  std::size_t count() const;  // positive integer
  bool boolean() const;
  std::vector<double> reals() const;
  std::vector<std::size_t> counts() const;

  std::string str(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key, double fallback) const;
  std::size_t count(const std::string& key, std::size_t fallback) const;
  bool boolean(const std::string& key, bool fallback) const;

  /// Fails on any key of this map that was never looked up.
  void finish() const;

  const std::string& path() const { return path_; }
  int line() const;
  const YAML::Node& raw() const { return node_; }

 private:
  YAML::Node node_;
  std::string path_;
  std::shared_ptr<std::set<std::string>> used_;
};

Kernel kernel(const Node& node);
Law law(const Node& node, const std::string& base_dir = "");
WeightScheme scheme(const Node& node);
Design design(const Node& node);
MCriterion criterion(const Node& node);
Optimizer default_optimizer(const MCriterion& problem);
Optimizer optimizer(const std::optional<Node>& node, const MCriterion& problem);
FunctionClass function_class(const Node& node, int m);
Normalization normalization(const Node& node);
ProjectionMethod projection_method(const Node& node);

std::vector<std::string> kernel_names();
std::vector<std::string> law_names();
std::vector<std::string> scheme_names();
std::vector<std::string> design_names();
std::vector<std::string> criterion_names();
std::vector<std::string> class_names();

}  // namespace ustat::cfg
