#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hbsynth/signal_core.hpp"

namespace hbsynth {

/// One signal description line of a WFDB header.
struct SignalSpec {
    std::string file_name;
    int format = 0;          // only 212 is decodable here
    double adc_gain = 200.0; // adu per mV
    double baseline = 0.0;   // adu offset subtracted before gain division
    int adc_resolution = 0;
    int adc_zero = 0;
    std::string name;        // e.g. "MLII"
};

struct RecordHeader {
    std::string record_id;
    int n_signals = 0;
    double sampling_rate = 0.0;  // Hz
    long n_samples = 0;          // 0 when unknown
    std::vector<SignalSpec> signals;
};

struct Annotation {
    long sample_index = 0;
    char symbol = 'N';
};

/// A labeled beat collection plus where it came from.
struct BeatDataset {
    std::vector<Heartbeat> beats;
    std::string split_tag;  // "train" or "test"
    std::map<std::string, std::string> provenance;  // record_id -> source file

    std::size_t size() const { return beats.size(); }
};

/// Parses a WFDB-style text header. Strict about the sampling rate being
/// present; the total sample count is optional. Unsupported signal formats
/// parse fine but cannot be decoded later.
RecordHeader parse_wfdb_header(const std::string& text);

/// Unpacks format-212 payloads: two 12-bit two's-complement samples per
/// 3 bytes. Returns one sample sequence per signal (samples interleaved
/// across signals in storage order).
std::vector<std::vector<int>> decode_format212(const std::vector<std::uint8_t>& payload,
                                               int n_signals = 2);

/// Inverse of decode_format212 for two equal-length channels.
std::vector<std::uint8_t> encode_format212(const std::vector<int>& ch0,
                                           const std::vector<int>& ch1);

/// (raw - baseline) / gain, in mV.
std::vector<double> adc_to_physical(const std::vector<int>& raw, double gain, double baseline);

/// Parses rdann-style annotation text: whitespace-separated columns with
/// the sample index in column 2 and the symbol in column 3. When a filter
/// set is given, only those symbols are kept. Out-of-order indices are an
/// error unless `lenient` re-sorting is requested.
std::vector<Annotation> parse_annotations(const std::string& text,
                                          const std::set<char>* filter = nullptr,
                                          bool lenient = false);

struct SegmentResult {
    std::vector<Heartbeat> beats;
    int dropped = 0;           // windows falling outside the record
    int unknown_symbols = 0;   // annotations with no N/V/F mapping
};

/// Cuts fixed windows around annotated R-peaks:
/// [r - round(pre_ms*fs/1000), r + round(post_ms*fs/1000)).
/// At 360 Hz with the 350/400 ms defaults each beat is 270 samples.
SegmentResult segment_beats(const std::vector<double>& signal, const std::vector<Annotation>& anns,
                            double fs, double pre_ms = 350.0, double post_ms = 400.0,
                            const std::string& record_id = "");

struct NormalizedRecord {
    std::vector<double> samples;  // in [0, 1]
    double min = 0.0, max = 0.0;  // stored so physical units are recoverable
};

/// Per-record min-max normalization to [0, 1].
NormalizedRecord normalize_record(const std::vector<double>& samples);

/// Record-level train/test split: no record contributes to both sides.
/// Deterministic given the seed.
std::pair<BeatDataset, BeatDataset> split_dataset(const BeatDataset& all, double ratio,
                                                  std::uint64_t seed);

// ---- Parametric synthetic beats (dataset-free fixtures) ----

/// One Gaussian bump of the five-wave beat model.
struct WaveParam {
    double amplitude = 0.0;  // normalized units, relative to the baseline
    double center = 0.0;     // samples relative to the R-peak
    double width = 1.0;      // Gaussian sigma in samples
};

/// Per-class template description: baseline level plus P, Q, R, S, T bumps.
struct BeatTemplate {
    double baseline = 0.0;
    WaveParam waves[5];
};

const BeatTemplate& beat_template_params(BeatClass c);

/// Jitter scale parameters of the toy generator: record-level offsets
/// shared by every beat of a record, and per-beat perturbations on top.
struct ToyJitterParams {
    double record_amp_sigma = 0.0;
    double record_width_sigma = 0.0;
    double record_baseline_sigma = 0.0;
    double beat_amp_sigma = 0.0;
    double beat_center_sigma = 0.0;
    double sample_noise_sigma = 0.0;
};

const ToyJitterParams& toy_jitter_params();

/// The noise-free class template of the given length.
std::vector<double> synth_template(BeatClass c, int length = kDefaultBeatLength);

/// One random beat around the class template. `jitter` scales every random
/// perturbation; 0 reproduces the template exactly.
Heartbeat synth_beat(BeatClass c, Rng& rng, double jitter = 1.0,
                     int length = kDefaultBeatLength);

/// Dataset of `per_class` beats per class, grouped into records of
/// `beats_per_record` consecutive beats. Beats within one record share
/// record-level amplitude/width/baseline offsets, so neighbours are more
/// alike than the class at large.
BeatDataset make_toy_dataset(int per_class, int beats_per_record, std::uint64_t seed,
                             int length = kDefaultBeatLength);

// ---- Beats CSV (header: beat_id,record_id,class,r_peak,s0,...) ----

void write_beats_csv(const BeatDataset& ds, const std::string& path);
BeatDataset read_beats_csv(const std::string& path);

}  // namespace hbsynth
