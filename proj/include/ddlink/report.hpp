// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "ddlink/errors.hpp"
#include "ddlink/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace ddlink {

/// One (scheme, sweep point) result. Monte Carlo rows carry a confidence
/// half-width and a trial count; closed-form rows leave them absent.
struct ResultRow {
    std::string scheme;
    std::string sweep; // sweep variable name (possibly tagged, e.g. "gamma@snr15")
    double x = 0.0;
    double fer = 0.0;
    bool has_ci = false;
    double ci_half = 0.0;
    std::uint64_t n_trials = 0; // 0 means absent
    bool has_wall = false;
    std::int64_t wall_ms = 0;
    bool has_tau_p = false;
    double tau_p_ms = 0.0;
};

namespace detail {

/// RFC 4180 style quoting: quote when the field contains a comma, a quote
/// or a line break; embedded quotes double.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out += ch;
    }
    out += "\"";
    return out;
}

} // namespace detail

/// CSV text for result rows. Header is fixed as
/// scheme,sweep,x,fer,ci_half,n_trials,wall_ms with a tau_p_ms column
/// appended when any row carries a precoder latency. Absent optional fields
/// are empty. Numbers use shortest round-trip formatting, so identical
/// results serialize to identical bytes.
inline std::string csv_text(const std::vector<ResultRow>& rows) {
    const bool with_tau = std::any_of(rows.begin(), rows.end(),
                                      [](const ResultRow& r) { return r.has_tau_p; });
    std::ostringstream o;
    o << "scheme,sweep,x,fer,ci_half,n_trials,wall_ms";
    if (with_tau) o << ",tau_p_ms";
    o << "\n";
    for (const ResultRow& r : rows) {
        o << detail::csv_field(r.scheme) << "," << detail::csv_field(r.sweep) << ","
          << detail::format_double(r.x) << "," << detail::format_double(r.fer) << ",";
        if (r.has_ci) o << detail::format_double(r.ci_half);
        o << ",";
        if (r.n_trials > 0) o << r.n_trials;
        o << ",";
        if (r.has_wall) o << r.wall_ms;
        if (with_tau) {
            o << ",";
            if (r.has_tau_p) o << detail::format_double(r.tau_p_ms);
        }
        o << "\n";
    }
    return o.str();
}

inline void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << csv_text(rows);
    if (!out) throw IoError("write failed for '" + path + "'");
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

inline const char* svg_color(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[i % 8];
}

} // namespace detail

/// Self-contained SVG 1.1 plot: linear x axis, log10 y axis, one polyline
/// per scheme. FER values are clamped to 1e-12 for plotting so zero Monte
/// Carlo estimates stay drawable on the log axis.
inline std::string svg_text(const std::vector<ResultRow>& rows, const std::string& title,
                            const std::string& x_label) {
    using detail::format_double;
    const double width = 640, height = 480;
    const double ml = 70, mr = 20, mt = 40, mb = 50;
    const double floor_fer = 1e-12;

    double x_min = 0, x_max = 1, y_min_log = -4, y_max_log = 0;
    if (!rows.empty()) {
        x_min = x_max = rows.front().x;
        y_min_log = 0;
        y_max_log = -12;
        for (const auto& r : rows) {
            x_min = std::min(x_min, r.x);
            x_max = std::max(x_max, r.x);
            const double l = std::log10(std::max(r.fer, floor_fer));
            y_min_log = std::min(y_min_log, l);
            y_max_log = std::max(y_max_log, l);
        }
        if (x_max == x_min) x_max = x_min + 1;
        y_min_log = std::floor(y_min_log);
        y_max_log = std::ceil(std::max(y_max_log, y_min_log + 1));
    }

    auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr); };
    auto py = [&](double fer) {
        const double l = std::log10(std::max(fer, floor_fer));
        return height - mb - (l - y_min_log) / (y_max_log - y_min_log) * (height - mt - mb);
    };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    o << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" << detail::xml_escape(title) << "</text>\n";
    // axes box
    o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << width - ml - mr
      << "\" height=\"" << height - mt - mb << "\" fill=\"none\" stroke=\"black\"/>\n";
    // y ticks per decade
    for (double l = y_min_log; l <= y_max_log + 0.5; l += 1.0) {
        const double y = height - mb - (l - y_min_log) / (y_max_log - y_min_log) * (height - mt - mb);
        o << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e"
          << static_cast<int>(l) << "</text>\n";
    }
    // x ticks at data points (deduplicated)
    {
        std::vector<double> xs;
        for (const auto& r : rows) xs.push_back(r.x);
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        for (double x : xs) {
            o << "<line x1=\"" << px(x) << "\" y1=\"" << height - mb << "\" x2=\"" << px(x)
              << "\" y2=\"" << height - mb + 4 << "\" stroke=\"black\"/>\n";
            o << "<text x=\"" << px(x) << "\" y=\"" << height - mb + 18
              << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
              << format_double(x) << "</text>\n";
        }
    }
    o << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << detail::xml_escape(x_label) << "</text>\n";

    // per-scheme polylines + legend
    std::map<std::string, std::vector<const ResultRow*>> by_scheme;
    for (const auto& r : rows) by_scheme[r.scheme].push_back(&r);
    std::size_t si = 0;
    double legend_y = mt + 14;
    for (auto& [scheme, list] : by_scheme) {
        std::sort(list.begin(), list.end(),
                  [](const ResultRow* a, const ResultRow* b) { return a->x < b->x; });
        const char* color = detail::svg_color(si++);
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const ResultRow* r : list) o << px(r->x) << "," << py(r->fer) << " ";
        o << "\"/>\n";
        for (const ResultRow* r : list)
            o << "<circle cx=\"" << px(r->x) << "\" cy=\"" << py(r->fer)
              << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        o << "<rect x=\"" << width - mr - 150 << "\" y=\"" << legend_y - 9
          << "\" width=\"12\" height=\"4\" fill=\"" << color << "\"/>\n";
        o << "<text x=\"" << width - mr - 132 << "\" y=\"" << legend_y
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << detail::xml_escape(scheme)
          << "</text>\n";
        legend_y += 16;
    }
    o << "</svg>\n";
    return o.str();
}

inline void emit_svg(const std::vector<ResultRow>& rows, const std::string& path,
                     const std::string& title, const std::string& x_label) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << svg_text(rows, title, x_label);
    if (!out) throw IoError("write failed for '" + path + "'");
}

} // namespace ddlink
