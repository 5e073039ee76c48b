#include "hbsynth/signal_core.hpp"

#include <algorithm>
#include <cmath>

namespace hbsynth {

char beat_class_char(BeatClass c) {
    switch (c) {
        case BeatClass::Normal: return 'N';
        case BeatClass::Ventricular: return 'V';
        case BeatClass::Fusion: return 'F';
    }
    fail("unknown class");
}

BeatClass beat_class_from_char(char c) {
    switch (c) {
        case 'N': return BeatClass::Normal;
        case 'V': return BeatClass::Ventricular;
        case 'F': return BeatClass::Fusion;
        default: fail("unknown class");
    }
}

const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::Generation: return "generation";
        case TaskKind::Imputation: return "imputation";
        case TaskKind::Forecasting: return "forecasting";
    }
    fail("unknown task");
}

TaskKind task_from_name(const std::string& name) {
    for (TaskKind t : kAllTasks)
        if (name == task_name(t)) return t;
    fail("unknown task");
}

const Heartbeat& select_context(const std::vector<Heartbeat>& record_beats, int h, TaskKind s) {
    require(!record_beats.empty() && h >= 0 && h < static_cast<int>(record_beats.size()),
            "unknown beat index");
    if (s == TaskKind::Forecasting) {
        require(h >= 1, "no predecessor beat");
        return record_beats[static_cast<std::size_t>(h - 1)];
    }
    return record_beats[static_cast<std::size_t>(h)];
}

Mask build_mask(TaskKind s, int length, std::optional<std::pair<int, int>> gap, Rng* rng,
                GapRange range) {
    require(length > 0, "bad mask length");
    Mask m;
    m.task = s;
    switch (s) {
        case TaskKind::Generation:
            m.bits.assign(static_cast<std::size_t>(length), 0);
            return m;
        case TaskKind::Forecasting:
            m.bits.assign(static_cast<std::size_t>(length), 1);
            return m;
        case TaskKind::Imputation: break;
    }
    int start, end;
    if (gap) {
        start = gap->first;
        end = gap->second;
        require(0 <= start && start <= end && end < length, "gap out of bounds");
    } else {
        require(rng != nullptr, "rng required for random gap");
        int wmin = std::max(1, static_cast<int>(std::lround(range.min_frac * length)));
        int wmax = std::max(wmin, static_cast<int>(std::lround(range.max_frac * length)));
        wmax = std::min(wmax, length);
        const int width = static_cast<int>(rng->uniform_int(wmin, wmax));
        start = static_cast<int>(rng->uniform_int(0, length - width));
        end = std::min(start + width - 1, length - 1);
    }
    m.bits.assign(static_cast<std::size_t>(length), 1);
    for (int i = start; i <= end; ++i) m.bits[static_cast<std::size_t>(i)] = 0;
    m.gap = std::make_pair(start, end);
    return m;
}

std::vector<double> apply_mask(const std::vector<double>& x, const Mask& m) {
    require(static_cast<int>(x.size()) == m.length(), "dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * static_cast<double>(m.bits[i]);
    return out;
}

}  // namespace hbsynth
