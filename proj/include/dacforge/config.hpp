#pragma once

/**
 * Key-value config files ("key = value" lines, # comments). Keys mirror the
 * iteration config; command-line flags override file values. Unknown keys are
 * errors so typos fail loudly.
 */

#include <map>
#include <optional>
#include <set>
#include <string>

#include "dacforge/common.hpp"
#include "dacforge/engine.hpp"

namespace dacforge::config {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text) {
    KeyValueConfig cfg;
    size_t line_no = 0;
    for (const std::string& raw_line : split(text, '\n')) {
      ++line_no;
      std::string line = raw_line;
      if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::string_view t = trim_view(line);
      if (t.empty()) continue;
      size_t eq = t.find('=');
      if (eq == std::string_view::npos)
        throw std::runtime_error("config line " + std::to_string(line_no) +
                                 ": expected key = value");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    return parse(slurp_file(path));
  }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }

  std::optional<int> get_int(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    try {
      size_t pos = 0;
      int out = std::stoi(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing characters");
      return out;
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "' is not an integer: " + *v);
    }
  }

  std::optional<double> get_double(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    try {
      size_t pos = 0;
      double out = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing characters");
      return out;
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "' is not a number: " + *v);
    }
  }

  std::optional<bool> get_bool(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    std::string s = to_lower(*v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::runtime_error("config: key '" + key + "' is not a boolean: " + *v);
  }

  /// Fill an IterationConfig from file keys, then reject any leftover unknown
  /// key.
  void apply(engine::IterationConfig& cfg) const {
    if (auto v = get_int("gd")) cfg.g_d = *v;
    if (auto v = get_int("gc")) cfg.g_c = *v;
    if (auto v = get_int("ns")) cfg.n_s = *v;
    if (auto v = get_int("batch_size")) cfg.batch_size = *v;
    if (auto v = get_int("max_tokens")) cfg.max_tokens = *v;
    if (auto v = get_double("eps_low")) cfg.eps_low = *v;
    if (auto v = get_double("eps_high")) cfg.eps_high = *v;
    if (auto v = get_double("t_acc")) cfg.t_acc = *v;
    if (auto v = get_int("cot_group_size")) cfg.cot_group_size = *v;
    if (auto v = get_bool("format_constraint")) cfg.format_constraint = *v;
    if (auto v = get("division_reward_mode")) {
      if (*v == "eq2") cfg.division_reward_mode = reward::DivisionRewardMode::eq2;
      else if (*v == "accuracy_variant")
        cfg.division_reward_mode = reward::DivisionRewardMode::accuracy_variant;
      else
        throw std::runtime_error("config: division_reward_mode must be eq2 or accuracy_variant");
    }
    if (auto v = get_int("max_subproblems")) cfg.max_subproblems = *v;
    if (auto v = get("system_prompt")) cfg.system_prompt = *v;

    if (auto v = get_double("temperature")) {
      cfg.division_sampling.temperature = *v;
      cfg.conquering_sampling.temperature = *v;
      cfg.cot_sampling.temperature = *v;
    }
    if (auto v = get_double("top_p")) {
      cfg.division_sampling.top_p = *v;
      cfg.conquering_sampling.top_p = *v;
      cfg.cot_sampling.top_p = *v;
    }
    if (auto v = get_double("division_temperature")) cfg.division_sampling.temperature = *v;
    if (auto v = get_double("division_top_p")) cfg.division_sampling.top_p = *v;
    if (auto v = get_double("conquering_temperature")) cfg.conquering_sampling.temperature = *v;
    if (auto v = get_double("conquering_top_p")) cfg.conquering_sampling.top_p = *v;
    if (auto v = get_double("cot_temperature")) cfg.cot_sampling.temperature = *v;
    if (auto v = get_double("cot_top_p")) cfg.cot_sampling.top_p = *v;
  }

  /// Keys that apply() and the CLI do not consume are typos.
  void reject_unknown_keys() const {
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace dacforge::config
