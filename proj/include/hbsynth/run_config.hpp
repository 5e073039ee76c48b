#pragma once

#include <cstdint>
#include <string>

#include "hbsynth/denoiser.hpp"
#include "hbsynth/engine.hpp"
#include "hbsynth/metrics.hpp"
#include "hbsynth/schedule.hpp"
#include "hbsynth/spectral.hpp"

namespace hbsynth {

/// Flat sectioned key-value run configuration. Every key has a default;
/// parsing rejects keys outside the registry, so typos fail loudly
/// instead of silently running with defaults.
///
/// File format: `[section]` headers, `key = value` lines, `#` comments.
/// Sections: data, spectral, schedule, model, train, eval, synth-data.
struct RunConfig {
    struct Data {
        std::string records;          // WFDB record directory; empty = none
        std::string channel = "MLII";
        double split = 0.7;           // train fraction of records
        std::uint64_t seed = 1;       // split shuffle seed
        double pre_ms = 350.0;        // segmentation window before the R-peak
        double post_ms = 400.0;       // and after
    } data;

    SpectralConfig spectral;

    struct Schedule {
        int steps = 1000;
        double beta_min = 1e-4;
        double beta_max = 0.02;
        BetaSpacing spacing = BetaSpacing::Linear;
        ReverseVariance variance = ReverseVariance::Beta;
    } schedule;

    DenoiserConfig model;

    struct Train {
        double learning_rate = 1e-3;
        int batch_size = 8;
        int epochs = 1;
        std::array<double, 3> task_weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
        double aux_weight = 1.0;
        std::uint64_t seed = 0;
        int checkpoint_every = 0;
        double gap_min = 0.10;  // imputation gap, fraction of beat length
        double gap_max = 0.50;
        bool log_timing = false;
    } train;

    struct Eval {
        Pairing pairing = Pairing::NearestReal;
        std::string extractor = "stats";  // built-in statistical features
    } eval;

    struct SynthData {
        bool toy = false;           // use the parametric generator instead of records
        int per_class = 200;
        int beats_per_record = 10;
        std::uint64_t seed = 7;
        int length = kDefaultBeatLength;
    } synth;
};

/// Parses config text. Throws "config parse error at line N",
/// "unknown config key <section.key>", or
/// "bad config value for <section.key>: <value>".
RunConfig parse_run_config(const std::string& text);

RunConfig load_run_config(const std::string& path);  // "cannot open ..."

/// Applies one `section.key=value` override (the CLI flag path).
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Canonical text listing every key (defaults merged in); parses back to
/// an identical config. This is what gets echoed into run directories.
std::string format_run_config(const RunConfig& cfg);

/// FNV-1a over the canonical text; names run directories.
std::uint64_t config_hash(const RunConfig& cfg);

/// Cross-checks section consistency (delegating to the per-module
/// validators) before a config is acted on.
void validate_config(const RunConfig& cfg);

TrainConfig train_config_of(const RunConfig& cfg);

}  // namespace hbsynth
