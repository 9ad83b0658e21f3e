#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ota/error.hpp"
#include "ota/harness.hpp"

namespace ota {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line, const char* what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw ParseError("line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line, const char* what) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw ParseError("line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  return std::stoull(s);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000", "#aec7e8"};

}  // namespace

SweepResult parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  SweepResult result;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != kCsvHeader)
        throw ParseError("line " + std::to_string(lineno) + ": expected header '" + std::string(kCsvHeader) + "'");
      header = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 6)
      throw ParseError("line " + std::to_string(lineno) + ": expected 6 fields, got " + std::to_string(f.size()));
    SweepRow r;
    try {
      r.attack = parse_attack_kind(f[0]);
    } catch (const ConfigError&) {
      throw ParseError("line " + std::to_string(lineno) + ": unknown attack '" + f[0] + "'");
    }
    r.pnr_db = parse_double(f[1], lineno, "pnr_db");
    r.snr_db = parse_double(f[2], lineno, "snr_db");
    r.accuracy = parse_double(f[3], lineno, "accuracy");
    if (r.accuracy < 0.0 || r.accuracy > 1.0)
      throw ParseError("line " + std::to_string(lineno) + ": accuracy outside [0, 1]");
    r.trials = parse_uint(f[4], lineno, "trials");
    r.seed = parse_uint(f[5], lineno, "seed");
    r.correct = static_cast<std::size_t>(std::llround(r.accuracy * static_cast<double>(r.trials)));
    result.rows.push_back(r);
  }
  if (!header) throw ParseError("line " + std::to_string(lineno) + ": missing CSV header");
  if (result.rows.empty()) throw ParseError("line " + std::to_string(lineno) + ": CSV has no data rows");
  return result;
}

SweepResult read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

std::string render_plot(const SweepResult& result) {
  if (result.rows.empty()) throw ConfigError("nothing to plot");
  std::map<AttackKind, std::vector<std::pair<double, double>>> series;
  double xmin = result.rows.front().pnr_db, xmax = xmin;
  for (const auto& r : result.rows) {
    series[r.attack].emplace_back(r.pnr_db, r.accuracy);
    xmin = std::min(xmin, r.pnr_db);
    xmax = std::max(xmax, r.pnr_db);
  }
  if (xmax == xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  const double W = 640, H = 420, L = 60, R = 180, T = 20, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return T + (1.0 - y) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = i / 5.0;
    s << "<text x=\"" << L - 8 << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double x = xmin + (xmax - xmin) * i / 4.0;
    s << "<text x=\"" << num(sx(x)) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
  }
  s << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">PNR (dB)</text>\n";
  s << "<text x=\"16\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << T + ph / 2
    << ")\">Accuracy</text>\n";

  std::size_t k = 0;
  for (auto& [attack, pts] : series) {
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const char* color = kPalette[k % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" data-attack=\"" << to_string(attack)
      << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) s << (i ? " " : "") << num(sx(pts[i].first)) << ',' << num(sy(pts[i].second));
    s << "\"/>\n";
    const double ly = T + 14 + 18.0 * static_cast<double>(k);
    s << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << L + pw + 36 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << L + pw + 42 << "\" y=\"" << ly << "\">" << to_string(attack) << "</text>\n";
    ++k;
  }
  s << "</svg>\n";
  return s.str();
}

void emit_plot(const std::filesystem::path& csv, const std::filesystem::path& out) {
  const std::string svg = render_plot(read_csv(csv));
  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot open '" + out.string() + "' for writing");
  f << svg;
}

}  // namespace ota
