#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hbsynth/ingest.hpp"
#include "hbsynth/signal_core.hpp"

namespace hbsynth {

/// √mean((a-b)²). Throws "length mismatch".
double rmse(const std::vector<double>& a, const std::vector<double>& b);

/// mean|a-b|. Throws "length mismatch".
double mae(const std::vector<double>& a, const std::vector<double>& b);

/// RMSE restricted to positions where select[i] != 0. Throws "length
/// mismatch"; an all-zero selection is an error ("empty selection").
double rmse_masked(const std::vector<double>& a, const std::vector<double>& b,
                   const std::vector<std::uint8_t>& select);
double mae_masked(const std::vector<double>& a, const std::vector<double>& b,
                  const std::vector<std::uint8_t>& select);

/// Dynamic-time-warping alignment cost: absolute-difference local cost,
/// steps {(1,0),(0,1),(1,1)}, no window. Throws "empty input".
double dtw(const std::vector<double>& a, const std::vector<double>& b);

/// Mean over time indices of the 1-D Wasserstein-1 distance between the
/// per-index sample distributions of the two sets. Exact for empirical
/// distributions of any sizes (merged-quantile integration). Throws
/// "empty set" / "length mismatch".
double emd_1d(const std::vector<std::vector<double>>& X,
              const std::vector<std::vector<double>>& Y);

/// Biased squared-MMD estimate with a Gaussian kernel
/// k(x,y) = exp(-|x-y|² / (2σ²)) on whole-beat vectors. σ defaults to the
/// median pairwise distance over X ∪ Y (even count: mean of the middle
/// two). If every pooled point is identical the bandwidth is degenerate:
/// the result is 0 and *degenerate is set when provided. Requires at
/// least two vectors per side ("set too small").
double mmd(const std::vector<std::vector<double>>& X,
           const std::vector<std::vector<double>>& Y,
           std::optional<double> bandwidth = std::nullopt, bool* degenerate = nullptr);

/// 13 hand-crafted per-beat features: mean, variance, skewness, kurtosis,
/// peak amplitude, and 8 contiguous-band shares of the DFT energy.
/// Moments are population moments; skewness and kurtosis are 0 for
/// (near-)constant signals.
std::vector<double> statistical_features(const std::vector<double>& x);

using FeatureExtractor = std::function<std::vector<double>(const std::vector<double>&)>;

/// Feature matrix (one row per beat) for the named extractor:
/// "statistical" (built in) or "classifier-penultimate" (requires the
/// classifier callback, else "no feature extractor").
std::vector<std::vector<double>> extract_features(const std::vector<Heartbeat>& beats,
                                                  const std::string& extractor_tag,
                                                  const FeatureExtractor* classifier = nullptr);

/// Fréchet distance between Gaussian fits of two feature sets:
/// |μx-μy|² + Tr(Σx + Σy - 2(Σx Σy)^½). Covariances use the n-1
/// denominator; the matrix square root is by symmetric eigendecomposition
/// with small negative eigenvalues clamped to 0. Needs ≥ 2 rows per side.
double fid(const std::vector<std::vector<double>>& FX,
           const std::vector<std::vector<double>>& FY);

enum class Pairing : std::uint8_t {
    NearestReal,  // each synthetic beat vs its Euclidean-nearest real beat of the class
    GroundTruth   // positional pairing within each class; counts must match
};

const char* pairing_name(Pairing p);

struct ClassMetrics {
    double rmse = 0.0, mae = 0.0, dtw = 0.0;
    double fid = 0.0, emd = 0.0, mmd = 0.0;
    std::size_t n_real = 0, n_synth = 0;
    bool mmd_degenerate = false;
};

struct MetricsReport {
    std::map<char, ClassMetrics> per_class;  // keyed by class code
    ClassMetrics overall;                    // pooled over the common classes
    std::vector<char> missing_classes;       // present in synth, absent in real
    std::string pairing_tag;
    std::string extractor_tag;
};

/// Per-class and pooled metrics for a synthetic set against a real set.
/// rmse/mae/dtw are means over synthetic beats of the per-pair values;
/// fid/emd/mmd compare whole per-class sets. Classes only present in the
/// synthetic set are listed as missing. Each common class needs ≥ 2 beats
/// per side ("set too small"); GroundTruth pairing also needs equal
/// per-class counts ("pairing mismatch").
MetricsReport evaluate_sets(const BeatDataset& real, const BeatDataset& synth, Pairing pairing,
                            const std::string& extractor_tag = "statistical",
                            const FeatureExtractor* classifier = nullptr);

/// CSV: one row per class plus "overall"; columns
/// class,status,n_real,n_synth,rmse,mae,dtw,fid,emd,mmd,pairing,features.
void write_report_csv(const MetricsReport& r, const std::string& path);

/// Fixed-width text rendering of the same table.
std::string format_report(const MetricsReport& r);

}  // namespace hbsynth
