#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "snlevy/errors.hpp"

namespace snlevy::app {

namespace {

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string f2(double x, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

/// 1, 2 or 5 times a power of ten, about `target` ticks over the span.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double p = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0}) {
    if (m * p >= raw) return m * p;
  }
  return 10.0 * p;
}

}  // namespace

json verdict_json(const Verdict& v, const json& details) {
  json params = json::object();
  for (const auto& [k, x] : v.params) params[k] = number_or_null(x);
  json j{{"check", v.check},
         {"model_hash", v.model_hash},
         {"params", params},
         {"target", number_or_null(v.target)},
         {"estimate", number_or_null(v.estimate)},
         {"se", number_or_null(v.se)},
         {"window", json::array({number_or_null(v.window_lo), number_or_null(v.window_hi)})},
         {"n", v.n},
         {"verdict", v.pass ? "PASS" : "FAIL"}};
  if (v.tolerance > 0.0) j["tolerance"] = number_or_null(v.tolerance);
  if (!v.note.empty()) j["note"] = v.note;
  if (!details.is_null()) j["details"] = details;
  return j;
}

void CheckResult::add(Verdict v, json d) {
  verdicts.push_back(std::move(v));
  details.push_back(std::move(d));
}

bool CheckResult::pass() const {
  return error.empty() &&
         std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

json CheckResult::to_json() const {
  json list = json::array();
  for (std::size_t i = 0; i < verdicts.size(); ++i) list.push_back(verdict_json(verdicts[i], details[i]));
  json j{{"check", check},
         {"model_hash", model_hash},
         {"verdict", !error.empty() ? "ERROR" : (pass() ? "PASS" : "FAIL")},
         {"verdicts", list},
         {"artifacts", artifacts}};
  if (!error.empty()) j["error"] = error;
  return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw InputError("cannot write " + path);
}

void write_tail_csv(const TailEstimate& tail, const std::optional<RateFit>& fit, const std::string& path) {
  std::ostringstream s;
  s.precision(17);
  s << "# axis=" << tail.axis << " n=" << tail.n << " excluded=" << tail.excluded << "\n";
  s << "threshold,count,survival,ci_lo,ci_hi,fitted\n";
  for (std::size_t i = 0; i < tail.thresholds.size(); ++i) {
    const double x = tail.thresholds[i];
    s << x << ',' << tail.counts[i] << ',' << tail.survival[i] << ',' << tail.ci_lo[i] << ',' << tail.ci_hi[i] << ',';
    if (fit && x >= fit->lo && x <= fit->hi) s << std::exp(fit->predict(x).first);
    s << '\n';
  }
  write_text(path, s.str());
}

void emit_plot(const TailEstimate& tail, const std::optional<RateFit>& fit, std::optional<double> target,
               const std::string& title, const std::string& path, const std::string& warning) {
  if (tail.thresholds.empty()) throw InputError("emit_plot: empty tail for " + path);
  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;

  double ymin = 0.0, ymax = -1e300;
  for (std::size_t i = 0; i < tail.thresholds.size(); ++i) {
    if (tail.survival[i] <= 0.0) continue;
    ymin = std::min(ymin, std::log10(std::max(tail.ci_lo[i], tail.survival[i] * 1e-3)));
    ymax = std::max(ymax, std::log10(std::max(tail.ci_hi[i], tail.survival[i])));
  }
  if (ymax < -1e299) ymax = 0.0;
  ymin = std::floor(ymin);
  ymax = std::min(0.0, std::ceil(ymax + 1e-12));
  if (ymax <= ymin) ymin = ymax - 1.0;
  const double xmin = std::min(0.0, tail.thresholds.front());
  const double xmax = tail.thresholds.back() > xmin ? tail.thresholds.back() : xmin + 1.0;

  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double ly) { return T + (ymax - std::clamp(ly, ymin, ymax)) / (ymax - ymin) * (H - T - B); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << L << "\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";

  // Axes, decade grid on y, nice ticks on x.
  s << "<g stroke=\"#ccc\">\n";
  for (double d = ymin; d <= ymax + 1e-9; d += 1.0) {
    s << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << f2(py(d)) << "\" y2=\"" << f2(py(d)) << "\"/>\n";
  }
  s << "</g>\n<g>\n";
  for (double d = ymin; d <= ymax + 1e-9; d += 1.0) {
    s << "<text x=\"" << L - 6 << "\" y=\"" << f2(py(d) + 4) << "\" text-anchor=\"end\">1e" << static_cast<int>(d)
      << "</text>\n";
  }
  const double step = nice_step(xmax - xmin, 8);
  for (double x = std::ceil(xmin / step) * step; x <= xmax + 1e-9; x += step) {
    s << "<text x=\"" << f2(px(x)) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << f2(x, "%g")
      << "</text>\n";
  }
  s << "</g>\n";
  s << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << (tail.axis == "t" ? "t" : "x") << "</text>\n";
  s << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 " << (T + H - B) / 2
    << ")\" text-anchor=\"middle\">" << (tail.axis == "t" ? "P(zeta &gt; t)" : "P(M &gt;= x)") << "</text>\n";

  // Wilson band.
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < tail.thresholds.size(); ++i) {
    if (tail.survival[i] > 0.0) pos.push_back(i);
  }
  if (pos.size() >= 2) {
    s << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\" points=\"";
    for (std::size_t i : pos) s << f2(px(tail.thresholds[i])) << ',' << f2(py(std::log10(tail.ci_hi[i]))) << ' ';
    for (auto it = pos.rbegin(); it != pos.rend(); ++it) {
      const double lo = tail.ci_lo[*it] > 0.0 ? std::log10(tail.ci_lo[*it]) : ymin;
      s << f2(px(tail.thresholds[*it])) << ',' << f2(py(lo)) << ' ';
    }
    s << "\"/>\n";
  }
  s << "<g fill=\"#08519c\">\n";
  for (std::size_t i : pos) {
    s << "<circle cx=\"" << f2(px(tail.thresholds[i])) << "\" cy=\"" << f2(py(std::log10(tail.survival[i])))
      << "\" r=\"2.5\"/>\n";
  }
  s << "</g>\n";

  double text_y = T + 18;
  auto note = [&](const std::string& text, const char* colour) {
    s << "<text x=\"" << W - R - 8 << "\" y=\"" << text_y << "\" text-anchor=\"end\" fill=\"" << colour << "\">"
      << escape(text) << "</text>\n";
    text_y += 16;
  };
  if (fit) {
    s << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"";
    for (int k = 0; k <= 60; ++k) {
      const double x = fit->lo + (fit->hi - fit->lo) * k / 60.0;
      s << f2(px(x)) << ',' << f2(py(fit->predict(x).first / std::log(10.0))) << ' ';
    }
    s << "\"/>\n";
    if (target) note("target " + f2(*target, "%.5g"), "black");
    note("estimate " + f2(fit->slope, "%.5g") + " +/- " + f2(fit->slope_se, "%.2g"), "#d62728");
    if (fit->log_coef) note("log coefficient " + f2(*fit->log_coef, "%.4g") + " +/- " + f2(*fit->log_coef_se, "%.2g"), "#d62728");
    note("window [" + f2(fit->lo, "%g") + ", " + f2(fit->hi, "%g") + "]", "black");
  } else {
    if (target) note("target " + f2(*target, "%.5g"), "black");
    note("no fit: " + (warning.empty() ? std::string("empty window after cuts") : warning), "#b00");
  }
  s << "</svg>\n";
  write_text(path, s.str());
}

}  // namespace snlevy::app
