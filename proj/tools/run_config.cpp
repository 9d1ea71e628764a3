#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "ccsoc/error.hpp"

namespace ccsoc::cli {

namespace {

using nlohmann::json;

const json& section(const json& raw, const char* key) {
  static const json empty = json::object();
  return raw.contains(key) ? raw.at(key) : empty;
}

template <class T>
T positive(const json& sec, const char* key, T fallback) {
  const T v = sec.value(key, fallback);
  if (!(v > T{0})) throw ValidationError(fmt::format("{} must be positive", key));
  return v;
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path.string());
  RunConfig cfg;
  try {
    cfg.raw = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  if (!cfg.raw.is_object() || !cfg.raw.contains("case")) throw ValidationError("config needs a \"case\" entry");
  cfg.base_dir = path.parent_path();
  return cfg;
}

void RunConfig::set(const std::string& dotted, json value) {
  json* node = &raw;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    if (!node->contains(parts[k])) (*node)[parts[k]] = json::object();
    node = &(*node)[parts[k]];
  }
  (*node)[parts.back()] = std::move(value);
}

std::string RunConfig::hash() const {
  json copy = raw;
  copy.erase("output");
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : copy.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

NetworkCase RunConfig::network() const {
  const auto path = base_dir / raw.at("case").get<std::string>();
  if (!std::filesystem::exists(path)) throw ParseError("case file not found: " + path.string());
  auto net = load_case(path, raw.value("transformer_taps", false));
  const auto& mod = section(raw, "modifiers");
  std::vector<WindAddition> wind;
  for (const auto& w : mod.value("wind", json::array())) {
    wind.push_back({w.at("bus").get<int>(), w.at("p_mw").get<double>(), w.value("sigma_mw", 0.0),
                    w.value("pf_min", 0.95)});
  }
  net = apply_modifiers(std::move(net), mod.value("rating_scale", 1.0), wind);
  for (auto& b : net.buses) {
    if (mod.contains("v_min")) b.v_min = mod.at("v_min").get<double>();
    if (mod.contains("v_max")) b.v_max = mod.at("v_max").get<double>();
  }
  validate_case(net);
  return net;
}

UncertaintySpec RunConfig::uncertainty(const NetworkCase& net) const {
  return uncertainty_from_json(section(raw, "uncertainty"), net);
}

SequentialOptions RunConfig::sequential() const {
  const auto& t = section(raw, "tolerances");
  SequentialOptions o;
  o.angle_tol = positive(t, "angle_tol", o.angle_tol);
  o.solver_tol = positive(t, "solver_tol", o.solver_tol);
  o.max_outer = positive(t, "max_angle_passes", o.max_outer);
  o.tighten_cones = t.value("tighten_cones", o.tighten_cones);
  o.loss_penalty = t.value("loss_penalty", o.loss_penalty);
  if (o.loss_penalty < 0.0) throw ValidationError("loss_penalty must be nonnegative");
  return o;
}

CcOptions RunConfig::cc() const {
  const auto& t = section(raw, "tolerances");
  CcOptions o;
  o.inner = sequential();
  o.rho = positive(t, "rho", o.rho);
  o.max_outer = positive(t, "max_outer", o.max_outer);
  o.limits_tol = limits_tol();
  return o;
}

double RunConfig::pf_tol() const { return positive(section(raw, "tolerances"), "pf_tol", 1e-8); }

double RunConfig::limits_tol() const { return positive(section(raw, "tolerances"), "limits_tol", 1e-6); }

std::size_t RunConfig::mc_samples() const {
  return positive<std::size_t>(section(raw, "mc"), "samples", 10000);
}

std::uint64_t RunConfig::seed() const { return section(raw, "mc").value("seed", std::uint64_t{1}); }

std::vector<BetaAxis> RunConfig::sweep_axes(const NetworkCase& net) const {
  std::vector<BetaAxis> axes;
  for (const auto& a : section(raw, "sweep").value("axes", json::array())) {
    BetaAxis ax;
    ax.name = a.at("name").get<std::string>();
    for (const auto& line : a.at("lines")) {
      const auto l = net.branch_by_label(line.at("branch").get<int>());
      const auto dir = line.value("direction", std::string("both"));
      if (dir == "forward" || dir == "both") ax.lines.push_back({l, FlowDirection::Forward});
      if (dir == "reverse" || dir == "both") ax.lines.push_back({l, FlowDirection::Reverse});
      if (dir != "forward" && dir != "reverse" && dir != "both") {
        throw ValidationError("sweep direction must be forward, reverse or both");
      }
    }
    if (a.contains("values")) {
      for (const auto& v : a.at("values")) {
        ax.values.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      }
    } else {
      const auto& r = a.at("range");
      const double start = r.at("start"), stop = r.at("stop");
      const int count = r.at("count");
      if (count < 1) throw ValidationError("sweep range count must be at least 1");
      for (int k = 0; k < count; ++k) {
        ax.values.push_back(count == 1 ? start : start + (stop - start) * k / (count - 1));
      }
    }
    axes.push_back(std::move(ax));
  }
  if (axes.empty()) throw ValidationError("sweep needs at least one axis");
  return axes;
}

std::size_t RunConfig::sweep_samples() const {
  return positive<std::size_t>(section(raw, "sweep"), "samples", 2000);
}

std::filesystem::path RunConfig::output_dir() const {
  return section(raw, "output").value("dir", std::string("ccsoc_out"));
}

}  // namespace ccsoc::cli
