#include "hbsynth/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hbsynth/error.hpp"

namespace hbsynth {
namespace {

constexpr double kWidth = 800.0, kHeight = 360.0;
constexpr double kLeft = 48.0, kRight = 16.0, kTop = 34.0, kBottom = 28.0;

const char* kSynthColors[] = {"#1f6fb4", "#c9541e", "#2d8a4e", "#8450a8", "#b03a5b"};

double quantile(std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    if (i + 1 >= n) return sorted[n - 1];
    return sorted[i] * (1.0 - frac) + sorted[i + 1] * frac;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

struct Axes {
    int n = 0;
    double y_lo = 0.0, y_hi = 1.0;

    double x(int i) const {
        return kLeft + (kWidth - kLeft - kRight) * static_cast<double>(i) /
                           static_cast<double>(n > 1 ? n - 1 : 1);
    }
    double y(double v) const {
        const double t = (v - y_lo) / (y_hi - y_lo);
        return kHeight - kBottom - (kHeight - kTop - kBottom) * t;
    }
};

void append_band(std::string& svg, const Axes& ax, const std::vector<double>& lo,
                 const std::vector<double>& hi, const char* fill) {
    svg += "<path fill=\"";
    svg += fill;
    svg += "\" stroke=\"none\" d=\"M";
    for (int i = 0; i < ax.n; ++i) {
        svg += fmt(ax.x(i)) + " " + fmt(ax.y(hi[static_cast<std::size_t>(i)]));
        if (i + 1 < ax.n) svg += " L";
    }
    for (int i = ax.n - 1; i >= 0; --i)
        svg += " L" + fmt(ax.x(i)) + " " + fmt(ax.y(lo[static_cast<std::size_t>(i)]));
    svg += " Z\"/>\n";
}

void append_line(std::string& svg, const Axes& ax, const std::vector<double>& v,
                 const char* stroke, const char* extra) {
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += stroke;
    svg += "\" ";
    svg += extra;
    svg += " points=\"";
    for (int i = 0; i < ax.n; ++i) {
        if (i) svg += " ";
        svg += fmt(ax.x(i)) + "," + fmt(ax.y(v[static_cast<std::size_t>(i)]));
    }
    svg += "\"/>\n";
}

}  // namespace

void write_beat_plot_svg(const std::string& path, const std::string& title,
                         const std::vector<Heartbeat>& real, const std::vector<Heartbeat>& synth) {
    require(!real.empty(), "empty set");
    const int n = real.front().length();
    for (const Heartbeat& b : real) require(b.length() == n, "length mismatch");
    for (const Heartbeat& b : synth) require(b.length() == n, "length mismatch");

    std::vector<double> lo(static_cast<std::size_t>(n)), hi(static_cast<std::size_t>(n)),
        q1(static_cast<std::size_t>(n)), q3(static_cast<std::size_t>(n)),
        med(static_cast<std::size_t>(n));
    std::vector<double> column(real.size());
    for (int i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < real.size(); ++r)
            column[r] = real[r].samples[static_cast<std::size_t>(i)];
        std::sort(column.begin(), column.end());
        lo[static_cast<std::size_t>(i)] = column.front();
        hi[static_cast<std::size_t>(i)] = column.back();
        q1[static_cast<std::size_t>(i)] = quantile(column, 0.25);
        q3[static_cast<std::size_t>(i)] = quantile(column, 0.75);
        med[static_cast<std::size_t>(i)] = quantile(column, 0.5);
    }

    Axes ax;
    ax.n = n;
    double y_lo = lo[0], y_hi = hi[0];
    for (int i = 0; i < n; ++i) {
        y_lo = std::min(y_lo, lo[static_cast<std::size_t>(i)]);
        y_hi = std::max(y_hi, hi[static_cast<std::size_t>(i)]);
    }
    for (const Heartbeat& b : synth)
        for (double v : b.samples) {
            y_lo = std::min(y_lo, v);
            y_hi = std::max(y_hi, v);
        }
    const double pad = std::max(1e-6, 0.05 * (y_hi - y_lo));
    ax.y_lo = y_lo - pad;
    ax.y_hi = y_hi + pad;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
           fmt(kHeight) + "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt(kLeft) + "\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\">" +
           title + "</text>\n";
    append_band(svg, ax, lo, hi, "#e3e3e3");
    append_band(svg, ax, q1, q3, "#c2c2c2");
    append_line(svg, ax, med, "#8a8a8a", "stroke-width=\"1\" stroke-dasharray=\"4 3\"");
    for (std::size_t s = 0; s < synth.size(); ++s)
        append_line(svg, ax, synth[s].samples,
                    kSynthColors[s % (sizeof(kSynthColors) / sizeof(kSynthColors[0]))],
                    "stroke-width=\"1.2\"");
    // axis frame
    svg += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" +
           fmt(kWidth - kLeft - kRight) + "\" height=\"" + fmt(kHeight - kTop - kBottom) +
           "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kHeight - 8.0) +
           "\" font-family=\"sans-serif\" font-size=\"11\">sample</text>\n";
    svg += "<text x=\"6\" y=\"" + fmt(kTop + 12.0) +
           "\" font-family=\"sans-serif\" font-size=\"11\">amplitude</text>\n";
    svg += "</svg>\n";

    std::ofstream out(path);
    require(out.good(), "cannot open " + path);
    out << svg;
    require(out.good(), "write failed: " + path);
}

std::vector<std::string> write_class_plots(const std::string& prefix,
                                           const std::vector<Heartbeat>& real,
                                           const std::vector<Heartbeat>& synth) {
    std::vector<std::string> written;
    for (const BeatClass c : kAllClasses) {
        std::vector<Heartbeat> rc, sc;
        for (const Heartbeat& b : real)
            if (b.label == c) rc.push_back(b);
        for (const Heartbeat& b : synth)
            if (b.label == c) sc.push_back(b);
        if (sc.empty() || rc.empty()) continue;
        const char code = beat_class_char(c);
        const std::string path = prefix + code + std::string(".svg");
        write_beat_plot_svg(path, std::string("class ") + code + ": synthetic over real band", rc,
                            sc);
        written.push_back(path);
    }
    return written;
}

}  // namespace hbsynth
