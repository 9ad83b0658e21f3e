#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ota/error.hpp"
#include "ota/harness.hpp"

namespace ota {

namespace {

using nlohmann::json;

const std::vector<std::string> kTopKeys = {"attacks", "pnr_db",  "snr_db", "trials", "seed",   "model",
                                           "substitute", "output", "pnr_reference", "threads", "channel",
                                           "uap", "limited_draws", "epochs", "search", "mmse", "samples_per_symbol"};

void reject_unknown(const json& j, const std::vector<std::string>& keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& s) {
  std::filesystem::path p(s);
  return p.is_absolute() || base.empty() ? p : base / p;
}

ChannelModelParams parse_channel(const json& j) {
  reject_unknown(j, {"K", "d0", "d", "gamma_pl", "shadow_sigma_db", "fading", "shadowing", "normalize_gain"}, "channel");
  ChannelModelParams c;
  c.K = j.value("K", c.K);
  c.d0 = j.value("d0", c.d0);
  c.d = j.value("d", c.d);
  c.gamma_pl = j.value("gamma_pl", c.gamma_pl);
  c.shadow_sigma_db = j.value("shadow_sigma_db", c.shadow_sigma_db);
  c.normalize_gain = j.value("normalize_gain", c.normalize_gain);
  const std::string fading = j.value("fading", std::string("rayleigh"));
  if (fading == "rayleigh")
    c.fading = Fading::Rayleigh;
  else if (fading == "none")
    c.fading = Fading::None;
  else
    throw ConfigError("channel.fading must be 'rayleigh' or 'none'");
  const std::string sh = j.value("shadowing", std::string("db"));
  if (sh == "db")
    c.shadowing = Shadowing::Decibel;
  else if (sh == "ln")
    c.shadowing = Shadowing::NaturalLog;
  else
    throw ConfigError("channel.shadowing must be 'db' or 'ln'");
  c.validate();
  return c;
}

}  // namespace

ChannelModelParams parse_channel_params(const std::string& text) {
  try {
    return parse_channel(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("channel params: ") + e.what());
  }
}

SweepConfig parse_sweep_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("sweep config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("sweep config must be a JSON object");
  reject_unknown(j, kTopKeys, "sweep config");

  SweepConfig cfg;
  try {
    for (const auto& a : j.at("attacks")) cfg.attacks.push_back(parse_attack_kind(a.get<std::string>()));
    cfg.pnr_grid = j.at("pnr_db").get<std::vector<double>>();
    cfg.snr_db = j.value("snr_db", cfg.snr_db);
    cfg.trials = j.value("trials", cfg.trials);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("model")) cfg.model_path = resolve(base_dir, j["model"].get<std::string>());
    if (j.contains("substitute")) cfg.substitute_path = resolve(base_dir, j["substitute"].get<std::string>());
    if (j.contains("output")) cfg.output = resolve(base_dir, j["output"].get<std::string>());
    cfg.pnr_reference = parse_pnr_reference(j.value("pnr_reference", std::string("receiver")));
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("channel")) cfg.channel = parse_channel(j["channel"]);

    EvalSettings& e = cfg.eval;
    e.limited_draws = j.value("limited_draws", e.limited_draws);
    e.white_box.epochs = j.value("epochs", e.white_box.epochs);
    e.samples_per_symbol = j.value("samples_per_symbol", e.samples_per_symbol);
    if (j.contains("uap")) {
      const auto& u = j["uap"];
      reject_unknown(u, {"inputs", "inner", "centered", "pairing", "crossed_channels"}, "uap");
      e.uap_inputs = u.value("inputs", e.uap_inputs);
      if (u.contains("inner")) e.uap.inner = parse_attack_kind(u["inner"].get<std::string>());
      e.uap.centered = u.value("centered", e.uap.centered);
      const std::string pairing = u.value("pairing", std::string("paired"));
      if (pairing == "paired")
        e.uap.pairing = Pairing::Paired;
      else if (pairing == "crossed")
        e.uap.pairing = Pairing::Crossed;
      else
        throw ConfigError("uap.pairing must be 'paired' or 'crossed'");
      e.uap.crossed_channels = u.value("crossed_channels", e.uap.crossed_channels);
    }
    if (j.contains("search")) {
      const auto& s = j["search"];
      reject_unknown(s, {"eps_acc_fraction", "minimum_power"}, "search");
      e.white_box.search.eps_acc_fraction = s.value("eps_acc_fraction", e.white_box.search.eps_acc_fraction);
      e.white_box.search.minimum_power = s.value("minimum_power", e.white_box.search.minimum_power);
    }
    if (j.contains("mmse")) {
      const auto& m = j["mmse"];
      reject_unknown(m, {"gamma_grid", "lambda_mode", "lambda"}, "mmse");
      if (m.contains("gamma_grid")) e.white_box.mmse.gamma_grid = m["gamma_grid"].get<std::vector<double>>();
      const std::string mode = m.value("lambda_mode", std::string("power-constrained"));
      if (mode == "power-constrained")
        e.white_box.mmse.lambda_mode = LambdaMode::PowerConstrained;
      else if (mode == "fixed")
        e.white_box.mmse.lambda_mode = LambdaMode::Fixed;
      else
        throw ConfigError("mmse.lambda_mode must be 'power-constrained' or 'fixed'");
      e.white_box.mmse.lambda = m.value("lambda", e.white_box.mmse.lambda);
    }
    e.uap.white_box = e.white_box;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("sweep config: ") + ex.what());
  }
  cfg.validate();
  return cfg;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_sweep_config(ss.str(), path.parent_path());
}

}  // namespace ota
