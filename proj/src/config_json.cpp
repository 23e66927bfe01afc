#include "slate/config_json.hpp"

#include <set>
#include <string>

#include "slate/errors.hpp"

namespace slate {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError(std::string("unknown ") + what + " key '" + key + "'");
  }
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"patch_h", c.patch_h},     {"patch_w", c.patch_w},   {"e_dim", c.e_dim},
                     {"down", c.down},           {"up", c.up},             {"depth", c.depth},
                     {"heads", c.heads},         {"l_dim", c.l_dim},       {"b_bits", c.b_bits},
                     {"window_h", c.window_h},   {"window_w", c.window_w}, {"mlp_ratio", c.mlp_ratio},
                     {"n_tx", c.n_tx},           {"n_sb", c.n_sb},         {"lrelu_slope", c.lrelu_slope}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  reject_unknown(j,
                 {"patch_h", "patch_w", "e_dim", "down", "up", "depth", "heads", "l_dim", "b_bits", "window_h",
                  "window_w", "mlp_ratio", "n_tx", "n_sb", "lrelu_slope"},
                 "model config");
  read(j, "patch_h", c.patch_h);
  read(j, "patch_w", c.patch_w);
  read(j, "e_dim", c.e_dim);
  read(j, "down", c.down);
  read(j, "up", c.up);
  read(j, "depth", c.depth);
  read(j, "heads", c.heads);
  read(j, "l_dim", c.l_dim);
  read(j, "b_bits", c.b_bits);
  read(j, "window_h", c.window_h);
  read(j, "window_w", c.window_w);
  read(j, "mlp_ratio", c.mlp_ratio);
  read(j, "n_tx", c.n_tx);
  read(j, "n_sb", c.n_sb);
  read(j, "lrelu_slope", c.lrelu_slope);
}

void to_json(nlohmann::json& j, const ChannelConfig& c) {
  j = nlohmann::json{{"n_tx", c.n_tx},
                     {"n_rx", c.n_rx},
                     {"n_rb", c.n_rb},
                     {"rb_per_subband", c.rb_per_subband},
                     {"n_sb", c.n_sb},
                     {"n_time", c.n_time},
                     {"t_csi_s", c.t_csi_s},
                     {"n_paths", c.n_paths},
                     {"max_doppler_hz", c.max_doppler_hz},
                     {"carrier_hz", c.carrier_hz},
                     {"subcarrier_spacing_hz", c.subcarrier_spacing_hz},
                     {"delay_spread_s", c.delay_spread_s},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ChannelConfig& c) {
  reject_unknown(j,
                 {"n_tx", "n_rx", "n_rb", "rb_per_subband", "n_sb", "n_time", "t_csi_s", "n_paths",
                  "max_doppler_hz", "carrier_hz", "subcarrier_spacing_hz", "delay_spread_s", "seed"},
                 "channel config");
  read(j, "n_tx", c.n_tx);
  read(j, "n_rx", c.n_rx);
  read(j, "n_rb", c.n_rb);
  read(j, "rb_per_subband", c.rb_per_subband);
  read(j, "n_sb", c.n_sb);
  read(j, "n_time", c.n_time);
  read(j, "t_csi_s", c.t_csi_s);
  read(j, "n_paths", c.n_paths);
  read(j, "max_doppler_hz", c.max_doppler_hz);
  read(j, "carrier_hz", c.carrier_hz);
  read(j, "subcarrier_spacing_hz", c.subcarrier_spacing_hz);
  read(j, "delay_spread_s", c.delay_spread_s);
  read(j, "seed", c.seed);
}

}  // namespace slate
