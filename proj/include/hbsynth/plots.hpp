#pragma once

#include <string>
#include <vector>

#include "hbsynth/signal_core.hpp"

namespace hbsynth {

/// Renders synthetic beats over the real set's per-sample distribution:
/// a light band spanning min..max, a darker interquartile band, the
/// median, and one polyline per synthetic beat. Output is plain SVG text,
/// deterministic for identical inputs.
///
/// Throws "empty set" without real beats and "length mismatch" when beat
/// lengths disagree.
void write_beat_plot_svg(const std::string& path, const std::string& title,
                         const std::vector<Heartbeat>& real, const std::vector<Heartbeat>& synth);

/// Per-class plot files `<prefix><class>.svg` for classes present in
/// `synth`; returns the paths written. Classes with no real counterpart
/// are skipped (there is no distribution to draw against).
std::vector<std::string> write_class_plots(const std::string& prefix,
                                           const std::vector<Heartbeat>& real,
                                           const std::vector<Heartbeat>& synth);

}  // namespace hbsynth
