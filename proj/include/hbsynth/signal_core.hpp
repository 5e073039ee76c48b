#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hbsynth/error.hpp"
#include "hbsynth/rng.hpp"

namespace hbsynth {

/// Default heartbeat length in samples: 350 ms + 400 ms around the R-peak
/// at 360 Hz.
inline constexpr int kDefaultBeatLength = 270;

enum class BeatClass : std::uint8_t { Normal, Ventricular, Fusion };

inline constexpr BeatClass kAllClasses[] = {BeatClass::Normal, BeatClass::Ventricular,
                                            BeatClass::Fusion};
inline constexpr int kNumClasses = 3;

char beat_class_char(BeatClass c);
BeatClass beat_class_from_char(char c);  // throws "unknown class"

enum class TaskKind : std::uint8_t { Generation, Imputation, Forecasting };

inline constexpr TaskKind kAllTasks[] = {TaskKind::Generation, TaskKind::Imputation,
                                         TaskKind::Forecasting};
inline constexpr int kNumTasks = 3;

const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);  // throws "unknown task"

/// One segmented cardiac cycle with normalized amplitude in [0, 1].
struct Heartbeat {
    std::vector<double> samples;
    BeatClass label = BeatClass::Normal;
    std::string record_id;
    int beat_index = 0;   // position of the beat within its record
    long r_peak = 0;      // sample index of the R-peak in the source record

    int length() const { return static_cast<int>(samples.size()); }
};

/// Binary retention mask for one task. bits[i] == 1 keeps sample i of the
/// context signal, 0 marks it as absent.
struct Mask {
    std::vector<std::uint8_t> bits;
    TaskKind task = TaskKind::Generation;
    /// Present iff task == Imputation: the inclusive [start, end] gap.
    std::optional<std::pair<int, int>> gap;

    int length() const { return static_cast<int>(bits.size()); }
};

/// Selects the conditioning beat for (beat index h, task s): beat h for
/// generation and imputation, beat h-1 for forecasting.
const Heartbeat& select_context(const std::vector<Heartbeat>& record_beats, int h, TaskKind s);

/// Fraction-of-length range for randomly drawn imputation gaps.
struct GapRange {
    double min_frac = 0.10;
    double max_frac = 0.50;
};

/// Builds the task mask of the given length. For imputation, `gap` may fix
/// the missing interval; otherwise it is drawn from `rng` with a width
/// uniform in [min_frac, max_frac] of the length.
Mask build_mask(TaskKind s, int length, std::optional<std::pair<int, int>> gap = std::nullopt,
                Rng* rng = nullptr, GapRange range = {});

/// Elementwise product of a signal with the mask bits.
std::vector<double> apply_mask(const std::vector<double>& x, const Mask& m);

}  // namespace hbsynth
