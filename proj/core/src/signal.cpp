#include "ota/signal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>

#include "container.hpp"
#include "ota/error.hpp"
#include "ota/numerics.hpp"

namespace ota {

namespace {

constexpr double kPi = std::numbers::pi;

struct ModInfo {
  ModulationType type;
  std::string_view name;
};

constexpr std::array<ModInfo, 11> kNames = {{{ModulationType::BPSK, "BPSK"},
                                             {ModulationType::QPSK, "QPSK"},
                                             {ModulationType::PSK8, "8PSK"},
                                             {ModulationType::QAM16, "QAM16"},
                                             {ModulationType::QAM64, "QAM64"},
                                             {ModulationType::PAM4, "PAM4"},
                                             {ModulationType::CPFSK, "CPFSK"},
                                             {ModulationType::GFSK, "GFSK"},
                                             {ModulationType::WBFM, "WBFM"},
                                             {ModulationType::AMSSB, "AM-SSB"},
                                             {ModulationType::AMDSB, "AM-DSB"}}};

std::string canonical(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != '-' && c != '_' && c != ' ') out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

std::vector<cdouble> make_constellation(ModulationType m) {
  std::vector<cdouble> pts;
  auto square_qam = [&](int side) {
    double e = 0.0;
    for (int i = 0; i < side; ++i)
      for (int q = 0; q < side; ++q) {
        const cdouble z(2.0 * i - (side - 1), 2.0 * q - (side - 1));
        pts.push_back(z);
        e += std::norm(z);
      }
    const double g = 1.0 / std::sqrt(e / static_cast<double>(pts.size()));
    for (auto& z : pts) z *= g;
  };
  switch (m) {
    case ModulationType::BPSK:
      pts = {{1.0, 0.0}, {-1.0, 0.0}};
      break;
    case ModulationType::QPSK:
      for (int k = 0; k < 4; ++k) pts.push_back(std::polar(1.0, kPi / 4.0 + k * kPi / 2.0));
      break;
    case ModulationType::PSK8:
      for (int k = 0; k < 8; ++k) pts.push_back(std::polar(1.0, k * kPi / 4.0));
      break;
    case ModulationType::QAM16:
      square_qam(4);
      break;
    case ModulationType::QAM64:
      square_qam(8);
      break;
    case ModulationType::PAM4: {
      const double g = 1.0 / std::sqrt(5.0);
      pts = {{-3.0 * g, 0.0}, {-1.0 * g, 0.0}, {1.0 * g, 0.0}, {3.0 * g, 0.0}};
      break;
    }
    default:
      break;
  }
  return pts;
}

// Windowed-sinc low-pass used for the analog message process.
RVec lowpass_taps(double cutoff, std::size_t taps) {
  RVec h(taps);
  const double mid = 0.5 * static_cast<double>(taps - 1);
  double sum = 0.0;
  for (std::size_t n = 0; n < taps; ++n) {
    const double t = static_cast<double>(n) - mid;
    const double sinc = t == 0.0 ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * t) / (kPi * t);
    const double w = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(n) / static_cast<double>(taps - 1));
    h[n] = sinc * w;
    sum += h[n];
  }
  for (auto& x : h) x /= sum;
  return h;
}

RVec message_process(std::size_t p, Rng& rng) {
  const RVec taps = lowpass_taps(0.04, 41);
  const std::size_t n = p + taps.size();
  RVec white(n);
  for (auto& w : white) w = rng.normal();
  RVec m(p, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < taps.size(); ++k) m[i] += taps[k] * white[i + k];
  double var = 0.0;
  for (double v : m) var += v * v;
  var /= static_cast<double>(p);
  if (var > 0.0)
    for (auto& v : m) v /= std::sqrt(var);
  return m;
}

CVec analytic_signal(const RVec& m) {
  const std::size_t p = m.size();
  CVec spec(p);
  for (std::size_t k = 0; k < p; ++k) {
    cdouble acc = 0.0;
    for (std::size_t n = 0; n < p; ++n) acc += m[n] * std::polar(1.0, -2.0 * kPi * double(k * n % p) / double(p));
    spec[k] = acc;
  }
  for (std::size_t k = 1; k < p; ++k) {
    if (2 * k < p)
      spec[k] *= 2.0;
    else if (2 * k > p)
      spec[k] = 0.0;
  }
  CVec out(p);
  for (std::size_t n = 0; n < p; ++n) {
    cdouble acc = 0.0;
    for (std::size_t k = 0; k < p; ++k) acc += spec[k] * std::polar(1.0, 2.0 * kPi * double(k * n % p) / double(p));
    out[n] = acc / static_cast<double>(p);
  }
  return out;
}

CVec frequency_modulate(const RVec& freq, double sensitivity) {
  CVec out(freq.size());
  double phase = 0.0;
  for (std::size_t n = 0; n < freq.size(); ++n) {
    phase += sensitivity * freq[n];
    out[n] = std::polar(1.0, phase);
  }
  return out;
}

double bipolar_bit(Rng& rng) { return rng.below(2) == 0 ? -1.0 : 1.0; }

}  // namespace

std::string_view to_string(ModulationType m) {
  for (const auto& info : kNames)
    if (info.type == m) return info.name;
  return "?";
}

ModulationType parse_modulation(std::string_view name) {
  const std::string key = canonical(name);
  for (const auto& info : kNames)
    if (canonical(info.name) == key) return info.type;
  if (key == "PSK8") return ModulationType::PSK8;
  if (key == "AMSSB") return ModulationType::AMSSB;
  if (key == "AMDSB") return ModulationType::AMDSB;
  throw ConfigError("unknown modulation '" + std::string(name) + "'");
}

bool is_linear(ModulationType m) {
  switch (m) {
    case ModulationType::BPSK:
    case ModulationType::QPSK:
    case ModulationType::PSK8:
    case ModulationType::QAM16:
    case ModulationType::QAM64:
    case ModulationType::PAM4:
      return true;
    default:
      return false;
  }
}

bool is_analog(ModulationType m) {
  return m == ModulationType::WBFM || m == ModulationType::AMSSB || m == ModulationType::AMDSB;
}

const std::vector<cdouble>& constellation(ModulationType m) {
  static const auto table = [] {
    std::array<std::vector<cdouble>, kAllModulations.size()> t;
    for (auto mod : kAllModulations) t[static_cast<std::size_t>(mod)] = make_constellation(mod);
    return t;
  }();
  return table[static_cast<std::size_t>(m)];
}

const RVec& rrc_pulse(std::size_t p, std::size_t sps) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, RVec> cache;
  std::lock_guard lock(mu);
  auto [it, inserted] = cache.try_emplace({p, sps});
  if (!inserted) return it->second;

  RVec& g = it->second;
  g.assign(p, 0.0);
  if (sps == 1) {
    g[0] = 1.0;
    return g;
  }
  // Exact root-raised-cosine spectrum on the DFT grid. The folded raised-cosine
  // spectrum is flat, so the circular matched-filter output is ISI-free.
  RVec spectrum(p);
  const double lo = (1.0 - kRolloff) / 2.0;
  const double hi = (1.0 + kRolloff) / 2.0;
  for (std::size_t k = 0; k < p; ++k) {
    const double ks = 2 * k < p ? double(k) : double(k) - double(p);
    const double f = std::abs(ks) * double(sps) / double(p);  // cycles per symbol
    double h = 0.0;
    if (f <= lo)
      h = 1.0;
    else if (f <= hi)
      h = std::sqrt(0.5 * (1.0 + std::cos(kPi / kRolloff * (f - lo))));
    spectrum[k] = h;
  }
  for (std::size_t n = 0; n < p; ++n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < p; ++k) acc += spectrum[k] * std::cos(2.0 * kPi * double(k * n % p) / double(p));
    g[n] = acc / double(p);
  }
  double e = 0.0;
  for (double v : g) e += v * v;
  const double scale = std::sqrt(double(sps) / e);
  for (auto& v : g) v *= scale;
  return g;
}

Waveform synthesize_waveform(ModulationType mod, std::size_t p, std::size_t sps, Rng& rng) {
  if (sps == 0 || p % sps != 0)
    throw ConfigError("length " + std::to_string(p) + " is not a multiple of samples-per-symbol " + std::to_string(sps));
  if (p < 8 * sps)
    throw ConfigError("length " + std::to_string(p) + " is shorter than 8 symbols at " + std::to_string(sps) +
                      " samples per symbol");
  const std::size_t nsym = p / sps;
  Waveform w;

  if (is_linear(mod)) {
    const auto& pts = constellation(mod);
    w.symbols.resize(nsym);
    for (auto& s : w.symbols) s = pts[rng.below(pts.size())];
    const RVec& g = rrc_pulse(p, sps);
    w.iq.assign(p, 0.0);
    for (std::size_t m = 0; m < nsym; ++m)
      for (std::size_t n = 0; n < p; ++n) w.iq[(n + m * sps) % p] += w.symbols[m] * g[n];
    return w;
  }

  switch (mod) {
    case ModulationType::CPFSK: {
      // Binary continuous-phase FSK, modulation index 0.5.
      RVec freq(p);
      for (std::size_t m = 0; m < nsym; ++m) {
        const double a = bipolar_bit(rng);
        for (std::size_t k = 0; k < sps; ++k) freq[m * sps + k] = a;
      }
      w.iq = frequency_modulate(freq, kPi * 0.5 / double(sps));
      break;
    }
    case ModulationType::GFSK: {
      // Gaussian-filtered binary FSK, BT = 0.3, modulation index 0.35.
      constexpr double bt = 0.3;
      constexpr std::size_t span = 2;  // symbols each side
      const std::size_t half = span * sps;
      const double sigma = std::sqrt(std::log(2.0)) / (2.0 * kPi * bt) * double(sps);
      RVec gauss(2 * half + 1);
      double sum = 0.0;
      for (std::size_t i = 0; i < gauss.size(); ++i) {
        const double t = double(i) - double(half);
        gauss[i] = std::exp(-0.5 * t * t / (sigma * sigma));
        sum += gauss[i];
      }
      for (auto& v : gauss) v /= sum;
      const std::size_t total = p + 2 * half;
      RVec nrz(total + 2 * half);
      for (std::size_t m = 0; m * sps < nrz.size(); ++m) {
        const double a = bipolar_bit(rng);
        for (std::size_t k = 0; k < sps && m * sps + k < nrz.size(); ++k) nrz[m * sps + k] = a;
      }
      RVec freq(p, 0.0);
      for (std::size_t n = 0; n < p; ++n)
        for (std::size_t i = 0; i < gauss.size(); ++i) freq[n] += gauss[i] * nrz[n + half + i];
      w.iq = frequency_modulate(freq, kPi * 0.35 / double(sps));
      break;
    }
    case ModulationType::WBFM:
      w.iq = frequency_modulate(message_process(p, rng), 2.0 * kPi * 0.08);
      break;
    case ModulationType::AMDSB: {
      const RVec m = message_process(p, rng);
      w.iq.resize(p);
      for (std::size_t n = 0; n < p; ++n) w.iq[n] = 1.0 + 0.5 * m[n];
      break;
    }
    case ModulationType::AMSSB:
      w.iq = analytic_signal(message_process(p, rng));
      break;
    default:
      throw ConfigError("unsupported modulation " + std::string(to_string(mod)));
  }
  return w;
}

double normalize_power(CVec& v) {
  const double pw = mean_power(v);
  if (!(pw > 0.0)) throw NumericError("cannot normalize a zero-power vector");
  const double g = 1.0 / std::sqrt(pw);
  for (auto& z : v) z *= g;
  return g;
}

IQSample synth_sample(ModulationType mod, double snr_db, std::size_t p, Rng& rng, std::size_t sps) {
  Waveform w = synthesize_waveform(mod, p, sps, rng);
  normalize_power(w.iq);
  if (std::isfinite(snr_db)) {
    const double sigma2 = std::pow(10.0, -snr_db / 10.0);
    for (auto& z : w.iq) z += rng.complex_normal(sigma2);
  } else if (snr_db < 0.0) {
    throw ConfigError("snr_db = -inf is not a valid sample SNR");
  }
  normalize_power(w.iq);
  return {std::move(w.iq), mod, snr_db};
}

CVec matched_sample(std::span<const cdouble> iq, std::size_t sps) {
  const std::size_t p = iq.size();
  if (sps == 0 || p % sps != 0) throw ConfigError("matched_sample: length not a multiple of samples-per-symbol");
  const RVec& g = rrc_pulse(p, sps);
  const std::size_t nsym = p / sps;
  CVec out(nsym, 0.0);
  for (std::size_t m = 0; m < nsym; ++m) {
    cdouble acc = 0.0;
    for (std::size_t n = 0; n < p; ++n) acc += iq[(n + m * sps) % p] * g[n];
    out[m] = acc / double(sps);
  }
  return out;
}

std::size_t Dataset::count(Split s) const { return static_cast<std::size_t>(std::count(split.begin(), split.end(), s)); }

Dataset build_dataset(const GenerationSpec& spec) {
  if (spec.classes.empty()) throw ConfigError("build_dataset: empty class subset");
  if (spec.snr_grid.empty()) throw ConfigError("build_dataset: empty SNR grid");
  if (spec.per_class == 0) throw ConfigError("build_dataset: zero samples requested");
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0))
    throw ConfigError("build_dataset: test_fraction must lie in [0, 1)");
  for (double s : spec.snr_grid)
    if (std::isnan(s) || s == -std::numeric_limits<double>::infinity())
      throw ConfigError("build_dataset: invalid SNR in grid");
  {
    Rng probe(0);
    (void)synthesize_waveform(spec.classes.front(), spec.p, spec.samples_per_symbol, probe);
  }

  Dataset ds;
  ds.spec = spec;
  const std::size_t groups = spec.snr_grid.size() * spec.classes.size();
  const std::size_t total = groups * spec.per_class;
  ds.samples.resize(total);
  ds.split.assign(total, Split::Train);

  parallel_for(total, [&](std::size_t j) {
    const std::size_t group = j / spec.per_class;
    const double snr = spec.snr_grid[group / spec.classes.size()];
    const ModulationType mod = spec.classes[group % spec.classes.size()];
    Rng rng(spec.seed, Stream::Synth, j);
    ds.samples[j] = synth_sample(mod, snr, spec.p, rng, spec.samples_per_symbol);
  });

  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * double(spec.per_class)));
  std::vector<std::size_t> perm(spec.per_class);
  for (std::size_t g = 0; g < groups; ++g) {
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(spec.seed, Stream::Split, g);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < n_test; ++i) ds.split[g * spec.per_class + perm[i]] = Split::Test;
  }
  return ds;
}

namespace {

nlohmann::json snr_to_json(double s) { return std::isfinite(s) ? nlohmann::json(s) : nlohmann::json(nullptr); }

double snr_from_json(const nlohmann::json& j) {
  if (j.is_null()) return kNoiseless;
  return j.get<double>();
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const std::size_t p = ds.spec.p;
  nlohmann::json h;
  h["format"] = "ota-dataset";
  h["version"] = 1;
  h["p"] = p;
  h["samples_per_symbol"] = ds.spec.samples_per_symbol;
  h["seed"] = ds.spec.seed;
  h["per_class"] = ds.spec.per_class;
  h["test_fraction"] = ds.spec.test_fraction;
  h["classes"] = nlohmann::json::array();
  for (auto c : ds.spec.classes) h["classes"].push_back(std::string(to_string(c)));
  h["snr_grid"] = nlohmann::json::array();
  for (double s : ds.spec.snr_grid) h["snr_grid"].push_back(snr_to_json(s));
  h["count"] = ds.samples.size();

  auto labels = nlohmann::json::array();
  auto snrs = nlohmann::json::array();
  std::string split;
  std::vector<unsigned char> payload;
  payload.reserve(ds.samples.size() * p * 8);
  for (std::size_t j = 0; j < ds.samples.size(); ++j) {
    const auto& s = ds.samples[j];
    if (s.iq.size() != p) throw ShapeError("save_dataset: sample " + std::to_string(j) + " has wrong length");
    const auto it = std::find(ds.spec.classes.begin(), ds.spec.classes.end(), s.label);
    if (it == ds.spec.classes.end()) throw ShapeError("save_dataset: sample label outside class list");
    labels.push_back(it - ds.spec.classes.begin());
    snrs.push_back(snr_to_json(s.snr_db));
    split.push_back(j < ds.split.size() && ds.split[j] == Split::Test ? '1' : '0');
    for (const auto& z : s.iq) {
      detail::append_f32(payload, z.real());
      detail::append_f32(payload, z.imag());
    }
  }
  h["labels"] = std::move(labels);
  h["snr"] = std::move(snrs);
  h["split"] = split;
  detail::write_container(path, h, payload);
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto c = detail::read_container(path, "ota-dataset", 1);
  Dataset ds;
  try {
    const auto& h = c.header;
    ds.spec.p = h.at("p").get<std::size_t>();
    ds.spec.samples_per_symbol = h.at("samples_per_symbol").get<std::size_t>();
    ds.spec.seed = h.at("seed").get<std::uint64_t>();
    ds.spec.per_class = h.at("per_class").get<std::size_t>();
    ds.spec.test_fraction = h.at("test_fraction").get<double>();
    ds.spec.classes.clear();
    for (const auto& n : h.at("classes")) ds.spec.classes.push_back(parse_modulation(n.get<std::string>()));
    ds.spec.snr_grid.clear();
    for (const auto& s : h.at("snr_grid")) ds.spec.snr_grid.push_back(snr_from_json(s));
    const auto count = h.at("count").get<std::size_t>();
    const auto& labels = h.at("labels");
    const auto& snrs = h.at("snr");
    const auto split = h.at("split").get<std::string>();
    if (labels.size() != count || snrs.size() != count || split.size() != count)
      throw CorruptFileError(path.string() + ": per-sample metadata does not match count");
    const std::size_t p = ds.spec.p;
    if (c.payload.size() != count * p * 8)
      throw CorruptFileError(path.string() + ": payload is " + std::to_string(c.payload.size()) + " bytes, header implies " +
                             std::to_string(count * p * 8));
    ds.samples.resize(count);
    ds.split.resize(count);
    for (std::size_t j = 0; j < count; ++j) {
      const auto li = labels[j].get<std::size_t>();
      if (li >= ds.spec.classes.size()) throw CorruptFileError(path.string() + ": label index out of range");
      auto& s = ds.samples[j];
      s.label = ds.spec.classes[li];
      s.snr_db = snr_from_json(snrs[j]);
      s.iq.resize(p);
      for (std::size_t i = 0; i < p; ++i) {
        const std::size_t k = (j * p + i) * 2;
        s.iq[i] = {detail::read_f32(c.payload, k), detail::read_f32(c.payload, k + 1)};
      }
      ds.split[j] = split[j] == '1' ? Split::Test : Split::Train;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(path.string() + ": malformed header (" + e.what() + ")");
  }
  return ds;
}

Dataset quantize_f32(Dataset ds) {
  for (auto& s : ds.samples)
    for (auto& z : s.iq) z = {static_cast<float>(z.real()), static_cast<float>(z.imag())};
  return ds;
}

}  // namespace ota
