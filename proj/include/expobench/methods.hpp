#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expobench/controllers.hpp"
#include "expobench/plugin.hpp"

namespace expobench {

/// A named controller instance: `name` labels results, `type` picks the policy.
struct MethodSpec {
  std::string name;
  std::string type;
  ControllerConfig config;
};

inline const std::vector<std::string>& builtin_method_types() {
  static const std::vector<std::string> types{"Fix", "AE30", "AE50", "AE70", "Shim", "Kim", "Wang"};
  return types;
}

inline bool is_known_method_type(const std::string& type) {
  const auto& b = builtin_method_types();
  return type == "plugin" || std::find(b.begin(), b.end(), type) != b.end();
}

inline std::unique_ptr<ExposureController> make_controller(const MethodSpec& spec,
                                                           const std::vector<ExposureTime>& ladder, const Crf& crf) {
  const ExposureBounds bounds = detail::bounds_for(spec.config, ladder);
  const auto& cfg = spec.config;
  if (spec.type == "Fix") return std::make_unique<FixedExposure>(bounds, cfg.initial_exposure_ms);
  if (spec.type == "AE30" || spec.type == "AE50" || spec.type == "AE70") {
    const double target = std::stoi(spec.type.substr(2)) / 100.0;
    return std::make_unique<BrightnessTarget>(bounds, target, cfg.ae_gain, cfg.initial_exposure_ms);
  }
  if (spec.type == "Shim") return std::make_unique<GammaSearch>(bounds, cfg);
  if (spec.type == "Kim") return std::make_unique<GpQualitySearch>(bounds, cfg);
  if (spec.type == "Wang") return std::make_unique<VirtualImageSearch>(bounds, cfg, crf);
  if (spec.type == "plugin") return std::make_unique<PluginController>(bounds, cfg);
  fail(ErrorKind::InvalidArgument, "unknown method type '" + spec.type + "'");
}

/// Parses `name` or `name=type`; a bare name must be a built-in type.
inline MethodSpec parse_method_token(const std::string& token) {
  MethodSpec spec;
  const auto eq = token.find('=');
  spec.name = token.substr(0, eq);
  spec.type = eq == std::string::npos ? spec.name : token.substr(eq + 1);
  if (spec.name.empty()) fail(ErrorKind::InvalidArgument, "empty method name");
  if (!is_known_method_type(spec.type)) fail(ErrorKind::InvalidArgument, "unknown method type '" + spec.type + "'");
  return spec;
}

/// Overlays JSON fields onto a controller configuration. Unknown keys are rejected.
inline void apply_config_json(ControllerConfig& cfg, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "exp_min_ms") cfg.exp_min_ms = value.get<double>();
    else if (key == "exp_max_ms") cfg.exp_max_ms = value.get<double>();
    else if (key == "initial_exposure_ms") cfg.initial_exposure_ms = value.get<double>();
    else if (key == "ae_gain") cfg.ae_gain = value.get<double>();
    else if (key == "shim_gammas") cfg.shim_gammas = value.get<std::vector<double>>();
    else if (key == "shim_gain") cfg.shim_gain = value.get<double>();
    else if (key == "shim_poly_order") cfg.shim_poly_order = value.get<int>();
    else if (key == "kim_entropy_weight") cfg.kim_entropy_weight = value.get<double>();
    else if (key == "kim_window") cfg.kim_window = value.get<std::size_t>();
    else if (key == "kim_length_scale_octaves") cfg.kim_length_scale_octaves = value.get<double>();
    else if (key == "kim_noise") cfg.kim_noise = value.get<double>();
    else if (key == "kim_signal_variance") cfg.kim_signal_variance = value.get<double>();
    else if (key == "kim_beta") cfg.kim_beta = value.get<double>();
    else if (key == "kim_grid") cfg.kim_grid = value.get<int>();
    else if (key == "wang_iterations") cfg.wang_iterations = value.get<int>();
    else if (key == "wang_step") cfg.wang_step = value.get<double>();
    else if (key == "gradient_activation") cfg.gradient.activation = value.get<double>();
    else if (key == "gradient_lambda") cfg.gradient.lambda = value.get<double>();
    else if (key == "plugin_command") cfg.plugin_command = value.get<std::vector<std::string>>();
    else if (key == "plugin_timeout_s") cfg.plugin_timeout_s = value.get<double>();
    else fail(ErrorKind::InvalidArgument, "unknown controller parameter '" + key + "'");
  }
}

/// Reads a methods file:
///   {"version": 1, "defaults": {...}, "methods": [{"name": "AE50"}, {"name": "DRL", "type": "plugin",
///    "params": {"plugin_command": ["python3", "agent.py"]}}]}
inline std::vector<MethodSpec> parse_methods_json(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) fail(ErrorKind::InvalidArgument, "methods file must declare \"version\": 1");
  ControllerConfig defaults;
  if (j.contains("defaults")) apply_config_json(defaults, j.at("defaults"));
  std::vector<MethodSpec> out;
  for (const auto& m : j.at("methods")) {
    MethodSpec spec;
    spec.name = m.at("name").get<std::string>();
    spec.type = m.value("type", spec.name);
    if (!is_known_method_type(spec.type)) fail(ErrorKind::InvalidArgument, "unknown method type '" + spec.type + "'");
    spec.config = defaults;
    if (m.contains("params")) apply_config_json(spec.config, m.at("params"));
    if (spec.type == "plugin" && spec.config.plugin_command.empty())
      fail(ErrorKind::InvalidArgument, "plugin method '" + spec.name + "' needs plugin_command");
    out.push_back(std::move(spec));
  }
  return out;
}

}  // namespace expobench
