// ota-adv: synth -> train -> eval -> attack -> sweep -> plot.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ota/attack.hpp"
#include "ota/classifier.hpp"
#include "ota/error.hpp"
#include "ota/harness.hpp"
#include "ota/numerics.hpp"
#include "ota/signal.hpp"
#include "ota/universal.hpp"

namespace {

using nlohmann::json;

// Relative paths resolve against $OTA_DATA_DIR when it is set.
std::filesystem::path data_path(const std::string& s) {
  std::filesystem::path p(s);
  if (p.is_absolute()) return p;
  if (const char* dir = std::getenv("OTA_DATA_DIR"); dir && *dir) return std::filesystem::path(dir) / p;
  return p;
}

template <class T>
std::vector<T> split_list(const std::string& s, T (*conv)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(conv(item));
  return out;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ota::ConfigError("not a number: '" + s + "'");
}

ota::ModulationType to_mod(const std::string& s) { return ota::parse_modulation(s); }

// "conv:16x5,8x3;dense:64"
void apply_arch(ota::ArchitectureSpec& a, const std::string& text) {
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ota::ConfigError("--arch: expected 'conv:FxW,...;dense:N,...'");
    const std::string key = part.substr(0, colon), val = part.substr(colon + 1);
    if (key == "conv") {
      a.conv.clear();
      std::stringstream vs(val);
      std::string layer;
      while (std::getline(vs, layer, ',')) {
        const auto x = layer.find('x');
        if (x == std::string::npos) throw ota::ConfigError("--arch: conv layer must be FILTERSxWIDTH");
        a.conv.push_back({static_cast<std::size_t>(to_double(layer.substr(0, x))),
                          static_cast<std::size_t>(to_double(layer.substr(x + 1)))});
      }
    } else if (key == "dense") {
      a.dense.clear();
      for (double d : split_list<double>(val, to_double)) a.dense.push_back(static_cast<std::size_t>(d));
    } else {
      throw ota::ConfigError("--arch: unknown section '" + key + "'");
    }
  }
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ota::IoError("cannot open '" + p.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ota::IoError("cannot open '" + p.string() + "' for writing");
  f << s;
}

ota::ChannelModelParams channel_from_flag(const std::string& v) {
  if (v.empty()) return {};
  const std::string text = v.front() == '{' ? v : read_text(data_path(v));
  return ota::parse_channel_params(text);
}

std::vector<std::size_t> model_labels(const ota::ClassifierModel& m, const std::vector<ota::IQSample>& s) {
  std::vector<std::size_t> out;
  for (const auto& x : s) {
    auto idx = m.class_index(x.label);
    if (!idx) throw ota::ShapeError("sample class " + std::string(ota::to_string(x.label)) + " is not a model class");
    out.push_back(*idx);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Over-the-air adversarial attacks on a modulation classifier.\nAttack kinds: " +
               ota::attack_kind_list()};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a labeled I/Q dataset");
  std::string s_classes = "BPSK,QPSK,8PSK,QAM16,QAM64,PAM4,CPFSK,GFSK", s_snr = "10", s_out;
  ota::GenerationSpec gen;
  synth->add_option("--classes", s_classes, "Comma-separated modulation list")->capture_default_str();
  synth->add_option("--snr-grid", s_snr, "Comma-separated SNR values in dB")->capture_default_str();
  synth->add_option("--per-class", gen.per_class, "Samples per class per SNR")->capture_default_str();
  synth->add_option("--seed", gen.seed, "Generation seed")->capture_default_str();
  synth->add_option("--length", gen.p, "Samples per vector")->capture_default_str();
  synth->add_option("--samples-per-symbol", gen.samples_per_symbol)->capture_default_str();
  synth->add_option("--test-fraction", gen.test_fraction)->capture_default_str();
  synth->add_option("--out", s_out, "Output dataset file")->required();

  // train
  auto* trn = app.add_subcommand("train", "Train the classifier");
  std::string t_data, t_arch, t_out, t_metrics, t_opt = "adam";
  ota::TrainConfig tcfg;
  tcfg.learning_rate = 0.002;
  std::uint64_t t_seed = 1;
  double t_momentum = -1.0;
  trn->add_option("--data", t_data, "Dataset file")->required();
  trn->add_option("--arch", t_arch, "Architecture, e.g. 'conv:16x5,8x3;dense:64'");
  trn->add_option("--epochs", tcfg.epochs)->capture_default_str();
  trn->add_option("--batch", tcfg.batch)->capture_default_str();
  trn->add_option("--lr", tcfg.learning_rate)->capture_default_str();
  trn->add_option("--optimizer", t_opt, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}))->capture_default_str();
  auto* mom = trn->add_option("--momentum", t_momentum, "SGD momentum");
  trn->add_option("--seed", t_seed, "Initialization and shuffle seed")->capture_default_str();
  trn->add_option("--out", t_out, "Output model file")->required();
  trn->add_option("--metrics", t_metrics, "Metrics JSON (default: <out>.json)");

  // eval
  auto* ev = app.add_subcommand("eval", "Clean accuracy of a model on a dataset");
  std::string e_model, e_data, e_split = "test";
  ev->add_option("--model", e_model)->required();
  ev->add_option("--data", e_data)->required();
  ev->add_option("--split", e_split)->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();

  // attack
  auto* atk = app.add_subcommand("attack", "Craft one perturbation and report it as JSON");
  std::string a_model, a_data, a_kind, a_channel, a_out, a_sub, a_ref = "receiver";
  double a_pnr = 0.0, a_snr = 10.0;
  std::uint64_t a_seed = 1;
  std::size_t a_index = 0, a_n = 40, a_epochs = 4;
  atk->add_option("--model", a_model)->required();
  atk->add_option("--data", a_data, "Dataset providing the input (and crafting inputs for UAPs)")->required();
  atk->add_option("--kind", a_kind, "Attack kind: " + ota::attack_kind_list())->required();
  atk->add_option("--pnr", a_pnr, "Perturbation-to-noise ratio in dB")->capture_default_str();
  atk->add_option("--snr", a_snr, "Receiver SNR in dB (sets the noise variance)")->capture_default_str();
  atk->add_option("--reference", a_ref)->check(CLI::IsMember({"adversary", "receiver"}))->capture_default_str();
  atk->add_option("--channel-params", a_channel, "Channel JSON object or file");
  atk->add_option("--seed", a_seed)->capture_default_str();
  atk->add_option("--index", a_index, "Dataset sample to attack")->capture_default_str();
  atk->add_option("--n", a_n, "N for limited-channel and UAP kinds")->capture_default_str();
  atk->add_option("--epochs", a_epochs, "Steps of the non-targeted attacks")->capture_default_str();
  atk->add_option("--substitute", a_sub, "Substitute model for uap-blackbox");
  atk->add_option("--out", a_out, "Perturbation file")->required();

  // sweep
  auto* swp = app.add_subcommand("sweep", "Accuracy-vs-PNR sweep from a JSON config");
  std::string w_config, w_out;
  std::optional<std::size_t> w_trials;
  std::optional<std::uint64_t> w_seed;
  swp->add_option("--config", w_config)->required();
  swp->add_option("--out", w_out, "CSV path (overrides the config)");
  swp->add_option("--trials", w_trials, "Trials per point (overrides the config)");
  swp->add_option("--seed", w_seed, "Seed (overrides the config)");

  // plot
  auto* plt = app.add_subcommand("plot", "Render a sweep CSV as SVG");
  std::string p_csv, p_out;
  plt->add_option("--csv", p_csv)->required();
  plt->add_option("--out", p_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (threads) ota::set_max_threads(threads);

    if (*synth) {
      gen.classes = split_list<ota::ModulationType>(s_classes, to_mod);
      gen.snr_grid = split_list<double>(s_snr, to_double);
      const ota::Dataset ds = ota::build_dataset(gen);
      ota::save_dataset(ds, data_path(s_out));
      std::cout << json{{"out", data_path(s_out).string()}, {"samples", ds.size()},
                        {"train", ds.count(ota::Split::Train)}, {"test", ds.count(ota::Split::Test)}}
                       .dump()
                << '\n';
    } else if (*trn) {
      if (*mom && t_opt != "sgd") throw ota::ConfigError("usage: --momentum only applies to --optimizer sgd");
      const ota::Dataset ds = ota::load_dataset(data_path(t_data));
      ota::ArchitectureSpec arch;
      arch.p = ds.spec.p;
      arch.classes = ds.spec.classes;
      arch.seed = t_seed;
      if (!t_arch.empty()) apply_arch(arch, t_arch);
      tcfg.seed = t_seed;
      tcfg.optimizer = t_opt == "adam" ? ota::Optimizer::Adam : ota::Optimizer::Sgd;
      if (*mom) tcfg.momentum = t_momentum;
      tcfg.on_epoch = [](std::size_t e, double l, double a) {
        std::cerr << "epoch " << e + 1 << " loss " << l << " train_acc " << a << '\n';
      };
      ota::ClassifierModel model(arch);
      const ota::TrainingReport rep = ota::train(model, ds, tcfg);
      ota::save_model(model, data_path(t_out));
      const json metrics{{"train_accuracy", rep.train_accuracy},
                         {"test_accuracy", rep.test_accuracy},
                         {"epoch_loss", rep.epoch_loss},
                         {"epochs", tcfg.epochs},
                         {"seed", t_seed},
                         {"optimizer", t_opt},
                         {"learning_rate", tcfg.learning_rate},
                         {"data", data_path(t_data).string()}};
      write_text(t_metrics.empty() ? data_path(t_out + ".json") : data_path(t_metrics), metrics.dump(2) + "\n");
      std::cout << metrics.dump() << '\n';
    } else if (*ev) {
      const auto model = ota::load_model(data_path(e_model));
      const auto ds = ota::load_dataset(data_path(e_data));
      std::optional<ota::Split> split;
      if (e_split == "train") split = ota::Split::Train;
      if (e_split == "test") split = ota::Split::Test;
      std::cout << json{{"accuracy", ota::evaluate(model, ds, split)}, {"split", e_split}}.dump() << '\n';
    } else if (*atk) {
      const ota::AttackKind kind = ota::parse_attack_kind(a_kind);
      if (kind == ota::AttackKind::None) throw ota::ConfigError("usage: --kind none crafts nothing");
      if (kind == ota::AttackKind::UapBlackbox && a_sub.empty())
        throw ota::ConfigError("usage: --kind uap-blackbox requires --substitute");
      if (kind != ota::AttackKind::UapBlackbox && !a_sub.empty())
        throw ota::ConfigError("usage: --substitute only applies to --kind uap-blackbox");
      const auto model = ota::load_model(data_path(a_model));
      const auto ds = ota::load_dataset(data_path(a_data));
      const ota::ChannelModelParams channel = channel_from_flag(a_channel);
      const std::size_t p = model.spec().p;
      const double sigma2 = ota::NoiseSpec::from_snr_db(a_snr).sigma2;
      const ota::PowerBudget budget =
          ota::pnr_to_budget(a_pnr, sigma2, p, ota::parse_pnr_reference(a_ref), channel);
      ota::Rng ch(a_seed, ota::Stream::Channel, 0);
      const ota::CVec h = ota::sample_channel(channel, p, ch).h;
      ota::UapSettings uap;
      uap.white_box.epochs = a_epochs;
      json report;
      report["kind"] = a_kind;
      report["pnr_db"] = a_pnr;
      report["snr_db"] = a_snr;
      report["seed"] = a_seed;
      report["p_max"] = budget.p_max;
      if (ota::is_universal(kind)) {
        std::vector<ota::IQSample> picked;
        for (std::size_t i = 0; i < ds.size() && picked.size() < a_n; ++i)
          if (ds.split[i] == ota::Split::Test) picked.push_back(ds.samples[i]);
        std::vector<ota::CVec> inputs;
        for (const auto& s : picked) inputs.push_back(s.iq);
        const auto labels = model_labels(model, picked);
        ota::Rng rng(a_seed, ota::Stream::CraftChannel, 0);
        ota::UapPerturbation u;
        if (kind == ota::AttackKind::UapInputs) {
          u = ota::craft_uap_inputs(model, inputs, labels, h, budget, uap);
        } else if (kind == ota::AttackKind::UapLimited) {
          u = ota::craft_uap_limited(model, inputs, labels, channel, budget, rng, uap);
        } else {
          const auto sub = ota::load_model(data_path(a_sub));
          u = ota::blackbox_uap(sub, inputs, labels, channel, budget, rng, uap);
        }
        ota::save_uap(u, data_path(a_out));
        report["uap"] = json::parse(ota::uap_to_json(u));
      } else {
        if (a_index >= ds.size()) throw ota::ConfigError("--index beyond dataset size");
        const auto& sample = ds.samples[a_index];
        const std::size_t label = model_labels(model, {sample}).front();
        if (kind == ota::AttackKind::LimitedChannel) {
          ota::Rng rng(a_seed, ota::Stream::CraftChannel, 1);
          const auto u = ota::craft_limited_channel(model, sample.iq, label, channel, a_n, budget, rng, uap);
          ota::save_uap(u, data_path(a_out));
          report["uap"] = json::parse(ota::uap_to_json(u));
        } else {
          ota::WhiteBoxSettings wb;
          wb.epochs = a_epochs;
          const auto o = ota::craft_white_box(kind, model, sample.iq, label, h, budget, wb);
          ota::save_outcome(o, data_path(a_out));
          report["outcome"] = json::parse(ota::outcome_to_json(o, &model));
        }
        report["true_label"] = std::string(ota::to_string(sample.label));
      }
      std::cout << report.dump(2) << '\n';
    } else if (*swp) {
      ota::SweepConfig cfg = ota::load_sweep_config(data_path(w_config));
      if (!w_out.empty()) cfg.output = data_path(w_out);
      if (w_trials) cfg.trials = *w_trials;
      if (w_seed) cfg.seed = *w_seed;
      if (cfg.output.empty()) throw ota::ConfigError("usage: no CSV output given (config 'output' or --out)");
      const auto res = ota::run_sweep(cfg);
      std::cout << json{{"rows", res.rows.size()}, {"out", cfg.output.string()}}.dump() << '\n';
    } else if (*plt) {
      ota::emit_plot(data_path(p_csv), data_path(p_out));
    }
  } catch (const ota::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
