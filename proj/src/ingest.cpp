#include "hbsynth/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hbsynth {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

bool parse_long_strict(const std::string& s, long& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stol(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size();
}

// Leading numeric prefix, tolerating WFDB suffixes like "360/360" or "200(1024)/mV".
bool parse_double_prefix(const std::string& s, double& out, std::size_t* end = nullptr) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (...) {
        return false;
    }
    if (end) *end = pos;
    return pos > 0;
}

int sign_extend_12(int v) { return (v & 0x800) ? v - 4096 : v; }

}  // namespace

RecordHeader parse_wfdb_header(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    RecordHeader hdr;
    bool have_record_line = false;
    int signals_parsed = 0;

    auto parse_error = [&](int n) -> Error {
        return Error("header parse error at line " + std::to_string(n));
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> tok = split_ws(line);
        if (tok.empty()) continue;

        if (!have_record_line) {
            if (tok.size() < 2) throw parse_error(line_no);
            hdr.record_id = tok[0];
            long nsig = 0;
            if (!parse_long_strict(tok[1], nsig) || nsig < 1) throw parse_error(line_no);
            hdr.n_signals = static_cast<int>(nsig);
            if (tok.size() < 3) fail("missing sampling rate");
            double fs = 0.0;
            if (!parse_double_prefix(tok[2], fs) || fs <= 0.0) throw parse_error(line_no);
            hdr.sampling_rate = fs;
            if (tok.size() >= 4) {
                long n = 0;
                if (!parse_long_strict(tok[3], n)) throw parse_error(line_no);
                hdr.n_samples = n;
            }
            have_record_line = true;
            continue;
        }

        if (signals_parsed == hdr.n_signals) break;  // trailing info lines
        if (tok.size() < 3) throw parse_error(line_no);
        SignalSpec sig;
        sig.file_name = tok[0];
        double fmt = 0.0;
        if (!parse_double_prefix(tok[1], fmt)) throw parse_error(line_no);
        sig.format = static_cast<int>(fmt);

        std::size_t gain_end = 0;
        if (!parse_double_prefix(tok[2], sig.adc_gain, &gain_end)) throw parse_error(line_no);
        bool baseline_in_gain = false;
        if (gain_end < tok[2].size() && tok[2][gain_end] == '(') {
            const std::size_t close = tok[2].find(')', gain_end);
            if (close == std::string::npos) throw parse_error(line_no);
            long b = 0;
            if (!parse_long_strict(tok[2].substr(gain_end + 1, close - gain_end - 1), b))
                throw parse_error(line_no);
            sig.baseline = static_cast<double>(b);
            baseline_in_gain = true;
        }
        if (tok.size() >= 4) {
            long v = 0;
            if (!parse_long_strict(tok[3], v)) throw parse_error(line_no);
            sig.adc_resolution = static_cast<int>(v);
        }
        if (tok.size() >= 5) {
            long v = 0;
            if (!parse_long_strict(tok[4], v)) throw parse_error(line_no);
            sig.adc_zero = static_cast<int>(v);
            if (!baseline_in_gain) sig.baseline = static_cast<double>(v);
        }
        if (tok.size() >= 9) {
            std::string name = tok[8];
            for (std::size_t i = 9; i < tok.size(); ++i) name += " " + tok[i];
            sig.name = name;
        }
        hdr.signals.push_back(sig);
        ++signals_parsed;
    }

    if (!have_record_line) fail("header parse error at line 1");
    if (signals_parsed != hdr.n_signals)
        fail("header parse error at line " + std::to_string(line_no + 1));
    return hdr;
}

std::vector<std::vector<int>> decode_format212(const std::vector<std::uint8_t>& payload,
                                               int n_signals) {
    require(n_signals == 1 || n_signals == 2, "unsupported signal count");
    require(payload.size() % 3 == 0, "truncated 212 payload");
    std::vector<std::vector<int>> out(static_cast<std::size_t>(n_signals));
    const std::size_t triplets = payload.size() / 3;
    for (auto& ch : out) ch.reserve(n_signals == 1 ? triplets * 2 : triplets);
    for (std::size_t i = 0; i < triplets; ++i) {
        const int b0 = payload[3 * i];
        const int b1 = payload[3 * i + 1];
        const int b2 = payload[3 * i + 2];
        const int s1 = sign_extend_12(((b1 & 0x0F) << 8) | b0);
        const int s2 = sign_extend_12(((b1 & 0xF0) << 4) | b2);
        if (n_signals == 2) {
            out[0].push_back(s1);
            out[1].push_back(s2);
        } else {
            out[0].push_back(s1);
            out[0].push_back(s2);
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_format212(const std::vector<int>& ch0,
                                           const std::vector<int>& ch1) {
    require(ch0.size() == ch1.size(), "dimension mismatch");
    std::vector<std::uint8_t> out;
    out.reserve(ch0.size() * 3);
    for (std::size_t i = 0; i < ch0.size(); ++i) {
        require(ch0[i] >= -2048 && ch0[i] <= 2047 && ch1[i] >= -2048 && ch1[i] <= 2047,
                "sample out of 12-bit range");
        const int s1 = ch0[i] & 0xFFF;
        const int s2 = ch1[i] & 0xFFF;
        out.push_back(static_cast<std::uint8_t>(s1 & 0xFF));
        out.push_back(static_cast<std::uint8_t>(((s2 >> 8) << 4) | (s1 >> 8)));
        out.push_back(static_cast<std::uint8_t>(s2 & 0xFF));
    }
    return out;
}

std::vector<double> adc_to_physical(const std::vector<int>& raw, double gain, double baseline) {
    require(gain != 0.0, "invalid gain");
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - baseline) / gain;
    return out;
}

std::vector<Annotation> parse_annotations(const std::string& text, const std::set<char>* filter,
                                          bool lenient) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::vector<Annotation> anns;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() < 3) fail("annotation parse error at line " + std::to_string(line_no));
        long sample = 0;
        if (!parse_long_strict(tok[1], sample) || sample < 0)
            fail("annotation parse error at line " + std::to_string(line_no));
        const char symbol = tok[2][0];
        if (filter && filter->count(symbol) == 0) continue;
        anns.push_back(Annotation{sample, symbol});
    }
    bool sorted = true;
    for (std::size_t i = 1; i < anns.size(); ++i)
        if (anns[i].sample_index <= anns[i - 1].sample_index) sorted = false;
    if (!sorted) {
        if (!lenient) fail("annotations not sorted");
        std::stable_sort(anns.begin(), anns.end(),
                         [](const Annotation& a, const Annotation& b) {
                             return a.sample_index < b.sample_index;
                         });
        anns.erase(std::unique(anns.begin(), anns.end(),
                               [](const Annotation& a, const Annotation& b) {
                                   return a.sample_index == b.sample_index;
                               }),
                   anns.end());
    }
    return anns;
}

SegmentResult segment_beats(const std::vector<double>& signal, const std::vector<Annotation>& anns,
                            double fs, double pre_ms, double post_ms,
                            const std::string& record_id) {
    require(fs > 0.0, "invalid sampling rate");
    const long pre = std::lround(pre_ms * fs / 1000.0);
    const long post = std::lround(post_ms * fs / 1000.0);
    const long n = static_cast<long>(signal.size());
    SegmentResult res;
    int index = 0;
    for (const Annotation& a : anns) {
        BeatClass label;
        switch (a.symbol) {
            case 'N': label = BeatClass::Normal; break;
            case 'V': label = BeatClass::Ventricular; break;
            case 'F': label = BeatClass::Fusion; break;
            default: ++res.unknown_symbols; continue;
        }
        const long lo = a.sample_index - pre;
        const long hi = a.sample_index + post;  // exclusive
        if (lo < 0 || hi > n) {
            ++res.dropped;
            continue;
        }
        Heartbeat b;
        b.samples.assign(signal.begin() + lo, signal.begin() + hi);
        b.label = label;
        b.record_id = record_id;
        b.beat_index = index++;
        b.r_peak = a.sample_index;
        res.beats.push_back(std::move(b));
    }
    return res;
}

NormalizedRecord normalize_record(const std::vector<double>& samples) {
    require(!samples.empty(), "degenerate record");
    const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    require(*hi > *lo, "degenerate record");
    NormalizedRecord out;
    out.min = *lo;
    out.max = *hi;
    out.samples.resize(samples.size());
    const double scale = 1.0 / (*hi - *lo);
    for (std::size_t i = 0; i < samples.size(); ++i) out.samples[i] = (samples[i] - *lo) * scale;
    return out;
}

std::pair<BeatDataset, BeatDataset> split_dataset(const BeatDataset& all, double ratio,
                                                  std::uint64_t seed) {
    std::vector<std::string> records;
    for (const Heartbeat& b : all.beats)
        if (std::find(records.begin(), records.end(), b.record_id) == records.end())
            records.push_back(b.record_id);
    require(records.size() >= 2, "cannot split");

    Rng rng(seed);
    for (std::size_t i = records.size() - 1; i > 0; --i)
        std::swap(records[i], records[rng.uniform_index(i + 1)]);

    const long n = static_cast<long>(records.size());
    long n_train = std::lround(ratio * static_cast<double>(n));
    require(n_train < n, "empty test side");
    require(n_train > 0, "empty train side");

    std::set<std::string> train_ids(records.begin(), records.begin() + n_train);
    BeatDataset train, test;
    train.split_tag = "train";
    test.split_tag = "test";
    for (const Heartbeat& b : all.beats) {
        if (train_ids.count(b.record_id))
            train.beats.push_back(b);
        else
            test.beats.push_back(b);
    }
    for (const auto& [rec, src] : all.provenance) {
        if (train_ids.count(rec))
            train.provenance[rec] = src;
        else
            test.provenance[rec] = src;
    }
    return {std::move(train), std::move(test)};
}

// ---- Synthetic beats ----

namespace {

// Template tables, in samples relative to the R-peak for a 270-sample beat.
// Documented in docs/toy_generator_params.csv; a unit test keeps the two in
// sync. Class F is the componentwise mean of N and V.
const BeatTemplate kTemplateN = {
    0.34,
    {{0.085, -45.0, 7.5},   // P
     {-0.065, -9.0, 3.0},   // Q
     {0.560, 0.0, 4.2},     // R
     {-0.110, 9.0, 3.4},    // S
     {0.160, 54.0, 13.0}}   // T
};

const BeatTemplate kTemplateV = {
    0.34,
    {{0.0, -45.0, 7.5},     // P suppressed
     {-0.120, -20.0, 8.0},  // Q
     {0.470, 2.0, 11.5},    // R widened
     {-0.190, 24.0, 10.0},  // S
     {-0.160, 72.0, 17.0}}  // T inverted
};

BeatTemplate blend_templates(const BeatTemplate& a, const BeatTemplate& b) {
    BeatTemplate f;
    f.baseline = 0.5 * (a.baseline + b.baseline);
    for (int i = 0; i < 5; ++i) {
        f.waves[i].amplitude = 0.5 * (a.waves[i].amplitude + b.waves[i].amplitude);
        f.waves[i].center = 0.5 * (a.waves[i].center + b.waves[i].center);
        f.waves[i].width = 0.5 * (a.waves[i].width + b.waves[i].width);
    }
    return f;
}

// Jitter scales (all multiplied by the caller's jitter factor). The record
// sigmas deliberately dominate the per-beat ones: consecutive beats of one
// record stay much more alike than the class at large, which is what makes
// forecasting from the previous beat genuinely informative.
constexpr double kRecordAmpSigma = 0.10;
constexpr double kRecordWidthSigma = 0.03;
constexpr double kRecordBaselineSigma = 0.035;
constexpr double kBeatAmpSigma = 0.02;
constexpr double kBeatCenterSigma = 0.20;
constexpr double kSampleNoiseSigma = 0.004;

struct RecordOffsets {
    double amp_scale = 1.0;
    double width_scale = 1.0;
    double baseline_shift = 0.0;
};

RecordOffsets draw_record_offsets(Rng& rng, double jitter) {
    RecordOffsets o;
    o.amp_scale = 1.0 + jitter * kRecordAmpSigma * rng.normal();
    o.width_scale = 1.0 + jitter * kRecordWidthSigma * rng.normal();
    o.baseline_shift = jitter * kRecordBaselineSigma * rng.normal();
    return o;
}

Heartbeat synth_with_offsets(BeatClass c, const RecordOffsets& off, Rng& rng, double jitter,
                             int length) {
    require(length > 0, "bad beat length");
    const BeatTemplate& tpl = beat_template_params(c);
    const double scale = static_cast<double>(length) / kDefaultBeatLength;
    const double r_index = 126.0 * scale;

    double amp[5], center[5], width[5];
    for (int k = 0; k < 5; ++k) {
        const double amp_jit = 1.0 + jitter * kBeatAmpSigma * rng.normal();
        const double center_jit = jitter * kBeatCenterSigma * rng.normal();
        amp[k] = tpl.waves[k].amplitude * off.amp_scale * amp_jit;
        center[k] = r_index + (tpl.waves[k].center + center_jit) * scale;
        width[k] = std::max(0.5, tpl.waves[k].width * off.width_scale * scale);
    }

    Heartbeat b;
    b.label = c;
    b.samples.resize(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) {
        double v = tpl.baseline + off.baseline_shift;
        for (int k = 0; k < 5; ++k) {
            const double d = (i - center[k]) / width[k];
            v += amp[k] * std::exp(-0.5 * d * d);
        }
        v += jitter * kSampleNoiseSigma * rng.normal();
        b.samples[static_cast<std::size_t>(i)] = std::clamp(v, 0.0, 1.0);
    }
    return b;
}

}  // namespace

const BeatTemplate& beat_template_params(BeatClass c) {
    static const BeatTemplate f = blend_templates(kTemplateN, kTemplateV);
    switch (c) {
        case BeatClass::Normal: return kTemplateN;
        case BeatClass::Ventricular: return kTemplateV;
        case BeatClass::Fusion: return f;
    }
    fail("unknown class");
}

const ToyJitterParams& toy_jitter_params() {
    static const ToyJitterParams p = {kRecordAmpSigma,  kRecordWidthSigma, kRecordBaselineSigma,
                                      kBeatAmpSigma,    kBeatCenterSigma,  kSampleNoiseSigma};
    return p;
}

std::vector<double> synth_template(BeatClass c, int length) {
    Rng dummy(0);
    RecordOffsets none;
    return synth_with_offsets(c, none, dummy, 0.0, length).samples;
}

Heartbeat synth_beat(BeatClass c, Rng& rng, double jitter, int length) {
    const RecordOffsets off = draw_record_offsets(rng, jitter);
    return synth_with_offsets(c, off, rng, jitter, length);
}

BeatDataset make_toy_dataset(int per_class, int beats_per_record, std::uint64_t seed, int length) {
    require(per_class > 0 && beats_per_record > 0, "bad toy dataset parameters");
    BeatDataset ds;
    for (int ci = 0; ci < kNumClasses; ++ci) {
        const BeatClass c = kAllClasses[ci];
        const int n_records = (per_class + beats_per_record - 1) / beats_per_record;
        int emitted = 0;
        for (int r = 0; r < n_records && emitted < per_class; ++r) {
            Rng rng(substream_seed(seed, static_cast<std::uint64_t>(ci),
                                   static_cast<std::uint64_t>(r)));
            const RecordOffsets off = draw_record_offsets(rng, 1.0);
            char id[32];
            std::snprintf(id, sizeof(id), "toy%c-%03d", beat_class_char(c), r);
            for (int k = 0; k < beats_per_record && emitted < per_class; ++k, ++emitted) {
                Heartbeat b = synth_with_offsets(c, off, rng, 1.0, length);
                b.record_id = id;
                b.beat_index = k;
                b.r_peak = static_cast<long>(k) * length + std::lround(126.0 * length / 270.0);
                ds.beats.push_back(std::move(b));
            }
            ds.provenance[id] = "synthetic";
        }
    }
    return ds;
}

// ---- Beats CSV ----

void write_beats_csv(const BeatDataset& ds, const std::string& path) {
    require(!ds.beats.empty(), "empty dataset");
    const int L = ds.beats.front().length();
    std::ofstream out(path);
    require(out.good(), "cannot open " + path);
    out << "beat_id,record_id,class,r_peak";
    for (int i = 0; i < L; ++i) out << ",s" << i;
    out << "\n";
    char buf[40];
    for (const Heartbeat& b : ds.beats) {
        require(b.length() == L, "dimension mismatch");
        out << b.beat_index << ',' << b.record_id << ',' << beat_class_char(b.label) << ','
            << b.r_peak;
        for (double v : b.samples) {
            std::snprintf(buf, sizeof(buf), ",%.12g", v);
            out << buf;
        }
        out << "\n";
    }
    require(out.good(), "write failed: " + path);
}

BeatDataset read_beats_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open " + path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "bad beats file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> cols;
    {
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    require(cols.size() > 4 && cols[0] == "beat_id" && cols[1] == "record_id" &&
                cols[2] == "class" && cols[3] == "r_peak",
            "bad beats file");
    const int L = static_cast<int>(cols.size()) - 4;
    for (int i = 0; i < L; ++i)
        require(cols[static_cast<std::size_t>(4 + i)] == "s" + std::to_string(i),
                "bad beats file");

    BeatDataset ds;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) f.push_back(tok);
        require(static_cast<int>(f.size()) == 4 + L, "bad beats file");
        Heartbeat b;
        long idx = 0, rp = 0;
        require(parse_long_strict(f[0], idx) && parse_long_strict(f[3], rp), "bad beats file");
        b.beat_index = static_cast<int>(idx);
        b.record_id = f[1];
        require(f[2].size() == 1, "unknown class");
        b.label = beat_class_from_char(f[2][0]);
        b.r_peak = rp;
        b.samples.resize(static_cast<std::size_t>(L));
        for (int i = 0; i < L; ++i) {
            double v;
            std::size_t end = 0;
            const std::string& s = f[static_cast<std::size_t>(4 + i)];
            if (!parse_double_prefix(s, v, &end) || end != s.size()) fail("bad beats file");
            b.samples[static_cast<std::size_t>(i)] = v;
        }
        ds.beats.push_back(std::move(b));
    }
    return ds;
}

}  // namespace hbsynth
