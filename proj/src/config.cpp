#include "lanequest/config.hpp"

#include <functional>
#include <map>

#include "lanequest/text.hpp"

namespace lanequest {

namespace {

struct Field {
  std::function<void(PipelineConfig&, std::string_view, std::size_t)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

double num(std::string_view v, std::size_t line) { return text::parse_double(v, line); }

bool boolean(std::string_view v, std::size_t line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(line, "expected true or false, got '" + std::string(v) + "'");
}

std::string str(double v) { return text::format_double(v); }
std::string str(bool v) { return v ? "true" : "false"; }

template <typename T>
Field real(T PipelineConfig::*group, double T::*member) {
  return {[=](PipelineConfig& c, std::string_view v, std::size_t l) { (c.*group).*member = num(v, l); },
          [=](const PipelineConfig& c) { return str((c.*group).*member); }};
}

template <typename T>
Field optional_real(T PipelineConfig::*group, std::optional<double> T::*member) {
  return {[=](PipelineConfig& c, std::string_view v, std::size_t l) {
            if (v == "auto")
              (c.*group).*member = std::nullopt;
            else
              (c.*group).*member = num(v, l);
          },
          [=](const PipelineConfig& c) {
            const auto& o = (c.*group).*member;
            return o ? str(*o) : std::string("auto");
          }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> f = [] {
    using D = DetectorConfig;
    using F = FilterConfig;
    using C = ClusterParams;
    using R = ReorientConfig;
    std::map<std::string, Field, std::less<>> m;
    m["phone_frame"] = {[](PipelineConfig& c, std::string_view v, std::size_t l) { c.phone_frame = boolean(v, l); },
                        [](const PipelineConfig& c) { return str(c.phone_frame); }};
    m["smoothing_window"] = {
        [](PipelineConfig& c, std::string_view v, std::size_t l) { c.smoothing_window_s = num(v, l); },
        [](const PipelineConfig& c) { return str(c.smoothing_window_s); }};
    m["rotation_mask"] = {[](PipelineConfig& c, std::string_view v, std::size_t l) { c.rotation_mask_s = num(v, l); },
                          [](const PipelineConfig& c) { return str(c.rotation_mask_s); }};

    m["stationary_gyro_max"] = real(&PipelineConfig::reorient, &R::stationary_gyro_max);
    m["stationary_min"] = real(&PipelineConfig::reorient, &R::stationary_min_s);
    m["burst_accel_min"] = real(&PipelineConfig::reorient, &R::burst_accel_min);
    m["burst_min"] = real(&PipelineConfig::reorient, &R::burst_min_s);

    m["lane_change_window"] = real(&PipelineConfig::detector, &D::lane_change_window_s);
    m["lane_change_threshold"] = real(&PipelineConfig::detector, &D::lane_change_threshold);
    m["peak_proximity"] = real(&PipelineConfig::detector, &D::peak_proximity_s);
    m["min_prominence"] = real(&PipelineConfig::detector, &D::min_prominence);
    m["min_excursion"] = real(&PipelineConfig::detector, &D::min_excursion);
    m["stop_minutes"] = real(&PipelineConfig::detector, &D::stop_minutes);
    m["stop_speed"] = real(&PipelineConfig::detector, &D::stop_speed);
    m["turn_angle"] = real(&PipelineConfig::detector, &D::turn_angle_deg);
    m["turn_band"] = real(&PipelineConfig::detector, &D::turn_band_deg);
    m["uturn_angle"] = real(&PipelineConfig::detector, &D::uturn_angle_deg);
    m["uturn_band"] = real(&PipelineConfig::detector, &D::uturn_band_deg);
    m["omega_min"] = real(&PipelineConfig::detector, &D::omega_min);
    m["curve_min"] = real(&PipelineConfig::detector, &D::curve_min_s);
    m["curve_trim"] = real(&PipelineConfig::detector, &D::curve_trim_s);
    m["tunnel_window"] = real(&PipelineConfig::detector, &D::tunnel_window_s);
    m["anomaly_window"] = real(&PipelineConfig::detector, &D::anomaly_window_s);
    m["anomaly_merge"] = real(&PipelineConfig::detector, &D::anomaly_merge_s);
    m["anomaly_var_threshold"] = optional_real(&PipelineConfig::detector, &D::anomaly_var_threshold);
    m["tunnel_var_threshold"] = optional_real(&PipelineConfig::detector, &D::tunnel_var_threshold);
    m["adaptive_threshold_factor"] = real(&PipelineConfig::detector, &D::adaptive_threshold_factor);
    m["special_lane_radius"] = real(&PipelineConfig::detector, &D::special_lane_radius_m);

    m["association_radius"] = real(&PipelineConfig::filter, &F::association_radius_m);
    m["negative_sigma"] = real(&PipelineConfig::filter, &F::negative_sigma);
    m["bootstrap_fallback"] = {
        [](PipelineConfig& c, std::string_view v, std::size_t l) { c.filter.bootstrap_fallback = boolean(v, l); },
        [](const PipelineConfig& c) { return str(c.filter.bootstrap_fallback); }};
    m["use_organic"] = {[](PipelineConfig& c, std::string_view v, std::size_t l) { c.filter.use_organic = boolean(v, l); },
                        [](const PipelineConfig& c) { return str(c.filter.use_organic); }};
    m["confusion"] = {[](PipelineConfig& c, std::string_view v, std::size_t l) {
                        const auto f = text::split_fields(v);
                        if (f.size() != 9) throw ParseError(l, "confusion expects 9 numbers, row by row");
                        for (std::size_t i = 0; i < 9; ++i) c.filter.confusion.m[i / 3][i % 3] = num(f[i], l);
                      },
                      [](const PipelineConfig& c) {
                        std::string o;
                        for (const auto& row : c.filter.confusion.m)
                          for (double x : row) o += (o.empty() ? "" : " ") + str(x);
                        return o;
                      }};

    m["spatial_eps"] = real(&PipelineConfig::cluster, &C::spatial_eps_m);
    m["curve_feature_eps"] = real(&PipelineConfig::cluster, &C::curve_feature_eps_m);
    m["tunnel_feature_eps_log"] = real(&PipelineConfig::cluster, &C::tunnel_feature_eps_log);
    m["min_pts"] = {[](PipelineConfig& c, std::string_view v, std::size_t l) {
                      const long long n = text::parse_int(v, l);
                      if (n < 0) throw ParseError(l, "min_pts must be non-negative");
                      c.cluster.min_pts = static_cast<std::size_t>(n);
                    },
                    [](const PipelineConfig& c) { return std::to_string(c.cluster.min_pts); }};
    m["bootstrap_prior_weight"] = real(&PipelineConfig::cluster, &C::bootstrap_prior_weight);
    m["anomaly_concentration"] = real(&PipelineConfig::cluster, &C::anomaly_concentration);
    return m;
  }();
  return f;
}

}  // namespace

void apply_config_text(std::string_view body, PipelineConfig& cfg) {
  std::size_t pos = 0, line_no = 0;
  while (pos < body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    std::string_view line = text::chomp(body.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto trim = [](std::string_view s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
      return s;
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw ParseError(line_no, "unknown key '" + std::string(key) + "'");
    if (value.empty()) throw ParseError(line_no, "missing value for '" + std::string(key) + "'");
    it->second.set(cfg, value, line_no);
  }
  validate(cfg.detector);
  validate(cfg.filter.confusion);
  validate(cfg.cluster);
  if (!(cfg.smoothing_window_s > 0.0)) throw ValidationError("smoothing_window must be positive");
  if (!(cfg.rotation_mask_s >= 0.0)) throw ValidationError("rotation_mask must be >= 0");
  if (!(cfg.filter.association_radius_m > 0.0)) throw ValidationError("association_radius must be positive");
  if (!(cfg.filter.negative_sigma > 0.0)) throw ValidationError("negative_sigma must be positive");
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg;
  const std::string body = text::read_file(path);
  try {
    apply_config_text(body, cfg);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
  return cfg;
}

std::string format_config(const PipelineConfig& cfg) {
  std::string o;
  for (const auto& [key, f] : fields()) o += key + " = " + f.get(cfg) + '\n';
  return o;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, f] : fields()) out.push_back(key);
  return out;
}

}  // namespace lanequest
