// Acceptance suite for the heartbeat synthesis toolkit. Runs ten
// self-contained checks, prints one PASS/FAIL line each, and exits 0 only
// when every check passes. argv[1] must point at the hbsynth CLI binary
// (used by the rerun-determinism check).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hbsynth/augment.hpp"
#include "hbsynth/engine.hpp"
#include "hbsynth/ingest.hpp"
#include "hbsynth/metrics.hpp"
#include "hbsynth/run_config.hpp"

namespace fs = std::filesystem;
using namespace hbsynth;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string note;
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// ---- 1. mask and context-selector conformance ----

Outcome check_masks() {
    // generation drops the whole context, forecasting keeps all of it
    for (int L : {1, 2, 7, 64, 270}) {
        const Mask g = build_mask(TaskKind::Generation, L);
        const Mask f = build_mask(TaskKind::Forecasting, L);
        if (g.length() != L || f.length() != L) return {false, "wrong mask length"};
        for (int i = 0; i < L; ++i) {
            if (g.bits[static_cast<std::size_t>(i)] != 0) return {false, "generation mask not all-zero"};
            if (f.bits[static_cast<std::size_t>(i)] != 1) return {false, "forecasting mask not all-one"};
        }
        if (g.gap.has_value() || f.gap.has_value()) return {false, "unexpected gap record"};
    }

    // imputation: exhaustive over every gap of every short length
    for (int L = 1; L <= 24; ++L)
        for (int a = 0; a < L; ++a)
            for (int b = a; b < L; ++b) {
                const Mask m = build_mask(TaskKind::Imputation, L, std::make_pair(a, b));
                if (!m.gap.has_value() || m.gap->first != a || m.gap->second != b)
                    return {false, "gap not recorded"};
                for (int i = 0; i < L; ++i) {
                    const bool in_gap = i >= a && i <= b;
                    if (m.bits[static_cast<std::size_t>(i)] != (in_gap ? 0 : 1))
                        return {false, fmt("wrong bit at %d for gap [%d,%d]", i, a, b)};
                }
            }

    // randomly drawn gaps: one contiguous zero-run, width within the range
    Rng rng(31);
    const GapRange range{0.10, 0.50};
    const int L = 270;
    for (int trial = 0; trial < 2000; ++trial) {
        const Mask m = build_mask(TaskKind::Imputation, L, std::nullopt, &rng, range);
        if (!m.gap.has_value()) return {false, "drawn gap not recorded"};
        const auto [a, b] = *m.gap;
        const int width = b - a + 1;
        const int wmin = std::max(1, static_cast<int>(std::lround(range.min_frac * L)));
        const int wmax = static_cast<int>(std::lround(range.max_frac * L));
        if (a < 0 || b >= L || width < wmin || width > wmax)
            return {false, fmt("drawn gap [%d,%d] out of range", a, b)};
        int zero_runs = 0;
        for (int i = 0; i < L; ++i)
            if (m.bits[static_cast<std::size_t>(i)] == 0 &&
                (i == 0 || m.bits[static_cast<std::size_t>(i - 1)] == 1))
                ++zero_runs;
        if (zero_runs != 1) return {false, "gap not contiguous"};
        for (int i = 0; i < L; ++i) {
            const bool in_gap = i >= a && i <= b;
            if (m.bits[static_cast<std::size_t>(i)] != (in_gap ? 0 : 1))
                return {false, "drawn mask disagrees with recorded gap"};
        }
    }

    // context selector: beat h for generation/imputation, beat h-1 for forecasting
    std::vector<Heartbeat> record(6);
    for (int h = 0; h < 6; ++h) record[static_cast<std::size_t>(h)].beat_index = h;
    for (int h = 0; h < 6; ++h) {
        if (&select_context(record, h, TaskKind::Generation) != &record[static_cast<std::size_t>(h)])
            return {false, "generation context is not the beat itself"};
        if (&select_context(record, h, TaskKind::Imputation) != &record[static_cast<std::size_t>(h)])
            return {false, "imputation context is not the beat itself"};
        if (h >= 1 &&
            &select_context(record, h, TaskKind::Forecasting) != &record[static_cast<std::size_t>(h - 1)])
            return {false, "forecasting context is not the predecessor"};
    }
    return {true, "exhaustive gaps L<=24, 2000 drawn masks, selector over 6-beat record"};
}

// ---- 2. spectral round trip ----

Outcome check_spectral() {
    Rng rng(202);
    const std::vector<int> sizes = {4, 8, 12, 16, 24, 32, 48, 64, 96, 128};
    double worst = 0.0;
    int n_beats = 0;
    for (int c = 0; c < 50; ++c) {
        SpectralConfig sc;
        sc.n_fft = sizes[static_cast<std::size_t>(rng.uniform_index(sizes.size()))];
        std::vector<int> hops;
        for (int h = 1; h <= sc.n_fft / 2; ++h)
            if (sc.n_fft % h == 0) hops.push_back(h);
        sc.hop = hops[static_cast<std::size_t>(rng.uniform_index(hops.size()))];
        sc.window = rng.uniform() < 0.5 ? "hann" : "rect";
        sc.pad_mode = rng.uniform() < 0.5 ? "reflect" : "zero";
        for (int k = 0; k < 20; ++k) {
            const BeatClass cls = kAllClasses[rng.uniform_index(3)];
            const Heartbeat b = synth_beat(cls, rng, 1.0, kDefaultBeatLength);
            const std::vector<double> back = istft(stft(b.samples, sc));
            for (int i = 0; i < kDefaultBeatLength; ++i)
                worst = std::max(worst,
                                 std::abs(back[static_cast<std::size_t>(i)] -
                                          b.samples[static_cast<std::size_t>(i)]));
            ++n_beats;
        }
    }
    return {worst <= 1e-6, fmt("max |istft(stft(x))-x| = %.3g over %d beats, 50 configs", worst,
                               n_beats)};
}

// ---- 3. noise schedule algebra ----

Outcome check_schedule() {
    const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    if (s.betas.front() != 1e-4 || s.betas.back() != 0.02) return {false, "beta endpoints off"};
    for (int t = 2; t <= s.T; ++t)
        if (!(s.alpha_bar(t) < s.alpha_bar(t - 1))) return {false, "alpha_bar not decreasing"};
    if (!(s.alpha_bar(s.T) < 7e-5))
        return {false, fmt("alpha_bar_T = %.3g not < 7e-5", s.alpha_bar(s.T))};

    // q_sample / predict_x0 inverse identity
    SpectralConfig sc;
    sc.n_fft = 16;
    sc.hop = 8;
    Rng rng(77);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Heartbeat b = synth_beat(kAllClasses[trial % 3], rng, 1.0, 64);
        const Spectrogram x0 = stft(b.samples, sc);
        const int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(s.T)));
        Tensor3 eps(x0.grid.c, x0.grid.h, x0.grid.w);
        for (double& v : eps.v) v = rng.normal();
        const Spectrogram st = q_sample(x0, t, eps, s);
        const Spectrogram back = predict_x0(st, eps, t, s);
        for (std::size_t i = 0; i < x0.grid.v.size(); ++i)
            worst = std::max(worst, std::abs(back.grid.v[i] - x0.grid.v[i]));
    }
    if (worst > 1e-9) return {false, fmt("inverse identity error %.3g", worst)};

    // marginal at t = T is (nearly) unit normal: 1e4 draws on one cell
    const double x0_cell = 0.83;
    const int n = 10000;
    double sum = 0.0, sum2 = 0.0;
    Spectrogram x0 = zero_spectrogram(sc, 64);
    for (double& v : x0.grid.v) v = x0_cell;
    for (int k = 0; k < n; ++k) {
        Tensor3 eps(x0.grid.c, x0.grid.h, x0.grid.w);
        eps.v.assign(eps.v.size(), 0.0);
        eps.v[0] = rng.normal();
        const Spectrogram st = q_sample(x0, s.T, eps, s);
        sum += st.grid.v[0];
        sum2 += st.grid.v[0] * st.grid.v[0];
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double want_mean = std::sqrt(s.alpha_bar(s.T)) * x0_cell;
    const double want_var = 1.0 - s.alpha_bar(s.T);
    const double se_mean = std::sqrt(want_var / n);
    const double se_var = want_var * std::sqrt(2.0 / n);
    if (std::abs(mean - want_mean) > 4.0 * se_mean)
        return {false, fmt("marginal mean %.4f vs %.4f", mean, want_mean)};
    if (std::abs(var - want_var) > 4.0 * se_var)
        return {false, fmt("marginal var %.4f vs %.4f", var, want_var)};
    return {true, fmt("abar_T %.3g, inverse %.2g, marginal mean/var within 4 SE",
                      s.alpha_bar(s.T), worst)};
}

// ---- 4. reverse-chain inversion oracle ----

Outcome check_chain_inversion() {
    SpectralConfig sc;
    sc.n_fft = 16;
    sc.hop = 8;
    DenoiserConfig dc;
    dc.base_channels = 2;
    dc.channel_mult = {1, 1, 1, 1};
    dc.d_emb = 4;
    Rng rng(404);
    double worst = 0.0;
    for (int T : {1, 5, 10}) {
        const NoiseSchedule sched = make_schedule(T, 1e-4, 0.2);
        Engine eng(dc, sc, sched);
        const Heartbeat b = synth_beat(BeatClass::Ventricular, rng, 1.0, 64);
        std::vector<Spectrogram> chain;
        chain.push_back(stft(b.samples, sc));
        for (int t = 1; t <= T; ++t) {
            const Spectrogram& prev = chain.back();
            Spectrogram next = prev;
            for (double& v : next.grid.v) v = 0.0;
            for (std::size_t i = 0; i < prev.grid.v.size(); ++i)
                next.grid.v[i] = std::sqrt(1.0 - sched.beta(t)) * prev.grid.v[i] +
                                 std::sqrt(sched.beta(t)) * rng.normal();
            chain.push_back(next);
        }
        // oracle denoiser: recover the exact step noise from the stored chain
        const Engine::EpsFn eps_fn = [&](const Spectrogram& st, int t) {
            const Spectrogram& prev = chain[static_cast<std::size_t>(t - 1)];
            Tensor3 eps(st.grid.c, st.grid.h, st.grid.w);
            const double sa = std::sqrt(1.0 - sched.beta(t));
            const double scale = std::sqrt(1.0 - sched.alpha_bar(t)) / sched.beta(t);
            for (std::size_t i = 0; i < st.grid.v.size(); ++i)
                eps.v[i] = (st.grid.v[i] - sa * prev.grid.v[i]) * scale;
            return eps;
        };
        const Spectrogram back = eng.run_reverse_chain(chain.back(), eps_fn, nullptr);
        for (std::size_t i = 0; i < back.grid.v.size(); ++i)
            worst = std::max(worst, std::abs(back.grid.v[i] - chain.front().grid.v[i]));
    }
    return {worst <= 1e-5, fmt("max inversion error %.3g over T in {1,5,10}", worst)};
}

// ---- 5. hybrid-loss gradients vs finite differences ----

Outcome check_gradients() {
    DenoiserConfig dc;
    dc.base_channels = 2;
    dc.channel_mult = {1, 1, 1, 1};
    dc.subblocks_per_block = 1;
    dc.convs_per_subblock = 1;
    dc.d_emb = 4;
    dc.embed_planes = 1;
    SpectralConfig sc;
    sc.n_fft = 16;
    sc.hop = 8;
    Engine eng(dc, sc, make_schedule(10, 1e-4, 0.2));
    const BeatDataset data = make_toy_dataset(6, 3, 21, 64);
    const DataIndex index = build_index(data);
    const double aux = 0.7;

    long ok = 0, total = 0;
    double worst_rel = 0.0;
    for (int task = 0; task < 3; ++task) {
        TrainConfig tc;
        tc.batch_size = 2;
        tc.aux_weight = aux;
        tc.steps = 10;
        tc.beta_max = 0.2;
        tc.seed = 60 + static_cast<std::uint64_t>(task);
        tc.task_weights = {0.0, 0.0, 0.0};
        tc.task_weights[static_cast<std::size_t>(task)] = 1.0;
        // scan forward from step 1 until the stream lands on this task
        std::vector<PreparedElement> batch;
        for (long step = 1; step <= 200; ++step) {
            batch = eng.prepare_batch(index, step, tc);
            if (batch.front().task == kAllTasks[task]) break;
        }
        DenoiserParams params = eng.denoiser().init_params(5);
        DenoiserParams grads = zeros_like(params);
        eng.batch_gradients(batch, params, aux, &grads);

        const double h = 1e-5;
        for (std::size_t ti = 0; ti < params.tensors.size(); ++ti)
            for (std::size_t i = 0; i < params.tensors[ti].v.size(); ++i) {
                double& p = params.tensors[ti].v[i];
                const double saved = p;
                p = saved + h;
                const double up = eng.batch_gradients(batch, params, aux, nullptr).loss_total;
                p = saved - h;
                const double dn = eng.batch_gradients(batch, params, aux, nullptr).loss_total;
                p = saved;
                const double fd = (up - dn) / (2.0 * h);
                const double an = grads.tensors[ti].v[i];
                const double scale = std::max({std::abs(fd), std::abs(an), 1e-8});
                const double rel = std::abs(fd - an) / scale;
                worst_rel = std::max(worst_rel, rel);
                if (rel <= 1e-3) ++ok;
                ++total;
            }
    }
    const double frac = static_cast<double>(ok) / static_cast<double>(total);
    return {frac >= 0.99,
            fmt("%ld/%ld coords within 1e-3 (%.2f%%), worst rel %.2g, all tasks", ok, total,
                100.0 * frac, worst_rel)};
}

// ---- 6. format-212 codec ----

Outcome check_format212() {
    // hand-derived vectors
    {
        const std::vector<std::uint8_t> bytes = {0x30, 0x43, 0x21};
        const auto two = decode_format212(bytes, 2);
        if (two[0] != std::vector<int>{816} || two[1] != std::vector<int>{1057})
            return {false, "hand vector (two signals) decoded wrong"};
        const auto one = decode_format212(bytes, 1);
        if (one[0] != std::vector<int>{816, 1057})
            return {false, "hand vector (one signal) decoded wrong"};
    }
    {
        const std::vector<std::uint8_t> bytes = {0x00, 0xF8, 0x00};
        const auto two = decode_format212(bytes, 2);
        if (two[0] != std::vector<int>{-2048} || two[1] != std::vector<int>{-256})
            return {false, "negative hand vector decoded wrong"};
    }

    Rng rng(212);
    // sample-pair round trip
    for (int k = 0; k < 100000; ++k) {
        const int a = static_cast<int>(rng.uniform_index(4096)) - 2048;
        const int b = static_cast<int>(rng.uniform_index(4096)) - 2048;
        const std::vector<std::uint8_t> bytes = encode_format212({a}, {b});
        const auto back = decode_format212(bytes, 2);
        if (back[0][0] != a || back[1][0] != b)
            return {false, fmt("pair (%d,%d) did not round trip", a, b)};
    }
    // byte-triplet round trip (covers every bit pattern class)
    for (int k = 0; k < 100000; ++k) {
        const std::vector<std::uint8_t> bytes = {
            static_cast<std::uint8_t>(rng.uniform_index(256)),
            static_cast<std::uint8_t>(rng.uniform_index(256)),
            static_cast<std::uint8_t>(rng.uniform_index(256))};
        const auto vals = decode_format212(bytes, 2);
        const std::vector<std::uint8_t> again = encode_format212(vals[0], vals[1]);
        if (again != bytes) return {false, "byte triplet did not round trip"};
    }
    return {true, "hand vectors + 1e5 pair and 1e5 triplet round trips, exact"};
}

// ---- 7. distance-metric oracles ----

double dtw_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size(), m = b.size();
    double best = 1e300;
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j,
                                                                     double cost) {
        cost += std::abs(a[i] - b[j]);
        if (i == n - 1 && j == m - 1) {
            best = std::min(best, cost);
            return;
        }
        if (i + 1 < n) walk(i + 1, j, cost);
        if (j + 1 < m) walk(i, j + 1, cost);
        if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, cost);
    };
    walk(0, 0, 0.0);
    return best;
}

double w1_oracle(std::vector<double> x, std::vector<double> y) {
    std::vector<double> support = x;
    support.insert(support.end(), y.begin(), y.end());
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < support.size(); ++k) {
        const double t = support[k];
        const auto below = [t](const std::vector<double>& v) {
            return static_cast<double>(std::count_if(v.begin(), v.end(),
                                                     [t](double u) { return u <= t; })) /
                   static_cast<double>(v.size());
        };
        total += std::abs(below(x) - below(y)) * (support[k + 1] - support[k]);
    }
    return total;
}

Outcome check_metric_oracles() {
    Rng rng(700);
    // DTW against exhaustive path enumeration
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(2 + rng.uniform_index(5)), b(2 + rng.uniform_index(5));
        for (double& v : a) v = rng.uniform() * 4.0 - 2.0;
        for (double& v : b) v = rng.uniform() * 4.0 - 2.0;
        const double got = dtw(a, b), want = dtw_oracle(a, b);
        if (got != want) return {false, fmt("dtw %.12g != oracle %.12g", got, want)};
    }

    // EMD against the one-dimensional transport optimum (CDF integral)
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t L = 3 + rng.uniform_index(4);
        std::vector<std::vector<double>> xs(2 + rng.uniform_index(3)),
            ys(2 + rng.uniform_index(3));
        for (auto& v : xs) {
            v.resize(L);
            for (double& u : v) u = rng.uniform() * 2.0 - 1.0;
        }
        for (auto& v : ys) {
            v.resize(L);
            for (double& u : v) u = rng.uniform() * 2.0 - 1.0;
        }
        double want = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            std::vector<double> xi, yi;
            for (const auto& v : xs) xi.push_back(v[i]);
            for (const auto& v : ys) yi.push_back(v[i]);
            want += w1_oracle(xi, yi) / static_cast<double>(L);
        }
        const double got = emd_1d(xs, ys);
        if (std::abs(got - want) > 1e-9)
            return {false, fmt("emd %.12g vs transport oracle %.12g", got, want)};
    }

    // MMD against the naive double sum in extended precision
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t L = 2 + rng.uniform_index(3);
        std::vector<std::vector<double>> xs(3 + rng.uniform_index(3)), ys(3 + rng.uniform_index(3));
        for (auto& v : xs) {
            v.resize(L);
            for (double& u : v) u = rng.normal();
        }
        for (auto& v : ys) {
            v.resize(L);
            for (double& u : v) u = rng.normal();
        }
        // bandwidth rule: median pairwise distance over the pooled set
        std::vector<double> dists;
        std::vector<std::vector<double>> pool = xs;
        pool.insert(pool.end(), ys.begin(), ys.end());
        for (std::size_t i = 0; i < pool.size(); ++i)
            for (std::size_t j = i + 1; j < pool.size(); ++j) {
                double d2 = 0;
                for (std::size_t k = 0; k < L; ++k) {
                    const double d = pool[i][k] - pool[j][k];
                    d2 += d * d;
                }
                dists.push_back(std::sqrt(d2));
            }
        std::sort(dists.begin(), dists.end());
        const std::size_t nd = dists.size();
        const double sigma = nd % 2 == 1 ? dists[nd / 2]
                                         : 0.5 * (dists[nd / 2 - 1] + dists[nd / 2]);
        const double got = mmd(xs, ys);
        long double kxx = 0, kyy = 0, kxy = 0;
        const long double s2 = static_cast<long double>(sigma) * sigma;
        auto kern = [&](const std::vector<double>& a, const std::vector<double>& b) {
            long double d2 = 0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const long double d = static_cast<long double>(a[i]) - b[i];
                d2 += d * d;
            }
            return std::exp(static_cast<long double>(-d2 / (2.0L * s2)));
        };
        for (const auto& a : xs)
            for (const auto& b : xs) kxx += kern(a, b);
        for (const auto& a : ys)
            for (const auto& b : ys) kyy += kern(a, b);
        for (const auto& a : xs)
            for (const auto& b : ys) kxy += kern(a, b);
        const long double nx = static_cast<long double>(xs.size());
        const long double ny = static_cast<long double>(ys.size());
        long double want = kxx / (nx * nx) + kyy / (ny * ny) - 2.0L * kxy / (nx * ny);
        if (want < 0) want = 0;
        if (std::abs(got - static_cast<double>(want)) > 1e-12)
            return {false, fmt("mmd %.15g vs naive %.15g", got, static_cast<double>(want))};
    }

    // FID properties: zero on identical sets, exact under mean shifts,
    // invariant under rotation of the feature space
    {
        std::vector<std::vector<double>> xs;
        for (int k = 0; k < 40; ++k)
            xs.push_back({rng.normal(), 0.5 * rng.normal() + 0.2});
        if (std::abs(fid(xs, xs)) > 1e-6) return {false, "fid(X,X) not ~0"};

        std::vector<std::vector<double>> shifted;
        for (const auto& v : xs) shifted.push_back({v[0] + 0.3, v[1] - 0.4});
        const double got = fid(xs, shifted);
        const double want = 0.3 * 0.3 + 0.4 * 0.4;
        if (std::abs(got - want) > 1e-6)
            return {false, fmt("fid under mean shift %.9g vs %.9g", got, want)};

        std::vector<std::vector<double>> ys;
        for (int k = 0; k < 40; ++k)
            ys.push_back({0.8 * rng.normal() + 0.1, 1.3 * rng.normal() - 0.2});
        const double base = fid(xs, ys);
        const double th = 0.7, c = std::cos(th), s = std::sin(th);
        auto rot = [&](const std::vector<std::vector<double>>& vs) {
            std::vector<std::vector<double>> out;
            for (const auto& v : vs) out.push_back({c * v[0] - s * v[1], s * v[0] + c * v[1]});
            return out;
        };
        const double rotated = fid(rot(xs), rot(ys));
        if (std::abs(base - rotated) > 1e-6)
            return {false, fmt("fid not rotation invariant: %.9g vs %.9g", base, rotated)};
    }
    return {true, "dtw exact x200, emd<=1e-9 x50, mmd<=1e-12 x30, fid properties <=1e-6"};
}

// ---- 8/9. toy end-to-end study ----

struct ToyStudy {
    Outcome training;   // criterion 8
    Outcome augment;    // criterion 9
    double train_seconds = 0;
};

ToyStudy run_toy_study() {
    ToyStudy out;
    const auto t_start = Clock::now();

    const int L = 96;
    const BeatDataset all = make_toy_dataset(200, 10, 2026, L);
    const auto [train, test] = split_dataset(all, 0.7, 1);

    SpectralConfig sc;
    sc.n_fft = 16;
    sc.hop = 8;
    DenoiserConfig mc;
    mc.base_channels = 12;
    mc.channel_mult = {1, 2, 2, 2};
    mc.subblocks_per_block = 1;
    mc.convs_per_subblock = 2;
    mc.d_emb = 16;
    mc.embed_planes = 2;
    mc.channel_norm = true;

    TrainConfig tc;
    tc.learning_rate = 2e-3;
    tc.batch_size = 16;
    tc.epochs = 450;
    tc.aux_weight = 20.0;
    tc.steps = 50;
    tc.beta_min = 1e-4;
    tc.beta_max = 0.2;
    tc.variance = ReverseVariance::BetaTilde;
    tc.seed = 11;

    Engine engine(mc, sc, make_schedule(tc.steps, tc.beta_min, tc.beta_max, tc.spacing,
                                        tc.variance));
    auto [params, log] = engine.train(train, tc);
    out.train_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();

    std::string notes;
    bool all_ok = true;

    // (a) smoothed loss halves
    {
        const std::size_t n = log.rows.size();
        const std::size_t k = std::max<std::size_t>(1, n / 10);
        double first = 0, last = 0;
        for (std::size_t i = 0; i < k; ++i) {
            first += log.rows[i].loss_total / static_cast<double>(k);
            last += log.rows[n - 1 - i].loss_total / static_cast<double>(k);
        }
        const bool ok = last < 0.5 * first;
        all_ok = all_ok && ok;
        notes += fmt("loss %.1f->%.1f %s", first, last, ok ? "ok" : "FAIL");
    }

    // per-class centroids of the real training set
    std::vector<std::vector<double>> real_cent(3, std::vector<double>(static_cast<std::size_t>(L), 0.0));
    {
        std::vector<long> counts(3, 0);
        for (const Heartbeat& b : train.beats) {
            const auto c = static_cast<std::size_t>(b.label);
            ++counts[c];
            for (int i = 0; i < L; ++i) real_cent[c][static_cast<std::size_t>(i)] += b.samples[static_cast<std::size_t>(i)];
        }
        for (std::size_t c = 0; c < 3; ++c)
            for (double& v : real_cent[c]) v /= static_cast<double>(counts[c]);
    }

    // (b) generated centroids land DTW-nearest to their own class
    {
        int own = 0;
        for (int c = 0; c < 3; ++c) {
            std::vector<double> cent(static_cast<std::size_t>(L), 0.0);
            const int n_gen = 24;
            for (int j = 0; j < n_gen; ++j) {
                const Heartbeat g = engine.generate(
                    kAllClasses[c], params,
                    substream_seed(500, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(j)),
                    L);
                for (int i = 0; i < L; ++i) cent[static_cast<std::size_t>(i)] += g.samples[static_cast<std::size_t>(i)] / n_gen;
            }
            int arg = 0;
            double best = 1e300;
            for (int r = 0; r < 3; ++r) {
                const double d = dtw(cent, real_cent[static_cast<std::size_t>(r)]);
                if (d < best) {
                    best = d;
                    arg = r;
                }
            }
            if (arg == c) ++own;
        }
        const bool ok = own >= 2;
        all_ok = all_ok && ok;
        notes += fmt(", gen %d/3 %s", own, ok ? "ok" : "FAIL");
    }

    // (c) imputation beats linear interpolation across wide gaps
    {
        Rng gap_rng(505);
        double se_model = 0, se_lin = 0;
        long n_gap = 0;
        const int n_imp = std::min<int>(60, static_cast<int>(test.beats.size()));
        for (int i = 0; i < n_imp; ++i) {
            const Heartbeat& b = test.beats[static_cast<std::size_t>(i)];
            const int wmin = static_cast<int>(0.30 * L) + 1;
            const int wmax = static_cast<int>(0.45 * L);
            const int w = wmin + static_cast<int>(gap_rng.uniform_index(static_cast<std::uint64_t>(wmax - wmin + 1)));
            const int start = 1 + static_cast<int>(gap_rng.uniform_index(static_cast<std::uint64_t>(L - w - 1)));
            const int end = start + w - 1;
            const Mask mask = build_mask(TaskKind::Imputation, L, std::make_pair(start, end));
            const Heartbeat imp = engine.impute(b, mask, b.label, params,
                                                substream_seed(600, static_cast<std::uint64_t>(i), 0));
            const double ya = b.samples[static_cast<std::size_t>(start - 1)];
            const double yb = b.samples[static_cast<std::size_t>(end + 1)];
            for (int j = start; j <= end; ++j) {
                const double truth = b.samples[static_cast<std::size_t>(j)];
                const double em = imp.samples[static_cast<std::size_t>(j)] - truth;
                const double tf = static_cast<double>(j - start + 1) / static_cast<double>(w + 1);
                const double el = ya + (yb - ya) * tf - truth;
                se_model += em * em;
                se_lin += el * el;
                ++n_gap;
            }
        }
        const double rm = std::sqrt(se_model / static_cast<double>(n_gap));
        const double rl = std::sqrt(se_lin / static_cast<double>(n_gap));
        const bool ok = rm < rl;
        all_ok = all_ok && ok;
        notes += fmt(", imp %.3f<%.3f %s", rm, rl, ok ? "ok" : "FAIL");
    }

    // (d) predictive-mean forecast beats the class-mean baseline
    {
        std::map<std::string, std::vector<const Heartbeat*>> by_record;
        for (const Heartbeat& b : test.beats) by_record[b.record_id].push_back(&b);
        double se_fc = 0, se_base = 0;
        long n_s = 0;
        int n_pairs = 0;
        for (auto& [rid, beats] : by_record) {
            for (std::size_t j = 1; j < beats.size() && n_pairs < 40; ++j) {
                if (beats[j]->beat_index != beats[j - 1]->beat_index + 1) continue;
                const Heartbeat& prev = *beats[j - 1];
                const Heartbeat& truth = *beats[j];
                const int ens = 8;
                std::vector<double> mean_fc(static_cast<std::size_t>(L), 0.0);
                for (int e = 0; e < ens; ++e) {
                    const Heartbeat f = engine.forecast(
                        prev, truth.label, params,
                        substream_seed(700, static_cast<std::uint64_t>(n_pairs),
                                       static_cast<std::uint64_t>(e)));
                    for (int i = 0; i < L; ++i)
                        mean_fc[static_cast<std::size_t>(i)] += f.samples[static_cast<std::size_t>(i)] / ens;
                }
                const std::vector<double>& base =
                    real_cent[static_cast<std::size_t>(static_cast<int>(truth.label))];
                for (int i = 0; i < L; ++i) {
                    const double ef = mean_fc[static_cast<std::size_t>(i)] - truth.samples[static_cast<std::size_t>(i)];
                    const double eb = base[static_cast<std::size_t>(i)] - truth.samples[static_cast<std::size_t>(i)];
                    se_fc += ef * ef;
                    se_base += eb * eb;
                    ++n_s;
                }
                ++n_pairs;
            }
        }
        const double rf = std::sqrt(se_fc / static_cast<double>(n_s));
        const double rb = std::sqrt(se_base / static_cast<double>(n_s));
        const bool ok = rf < rb;
        all_ok = all_ok && ok;
        notes += fmt(", fc %.3f<%.3f %s", rf, rb, ok ? "ok" : "FAIL");
    }

    const double elapsed = std::chrono::duration<double>(Clock::now() - t_start).count();
    const bool in_budget = elapsed <= 900.0;
    out.training = {all_ok && in_budget, notes + fmt(", %.0fs%s", elapsed,
                                                     in_budget ? "" : " OVER BUDGET")};

    // criterion 9: imbalanced real set, synthetic top-up must not hurt macro F1
    {
        BeatDataset imb;
        long keep[3] = {90, 30, 18};
        for (const Heartbeat& b : train.beats) {
            long& kleft = keep[static_cast<int>(b.label)];
            if (kleft > 0) {
                --kleft;
                imb.beats.push_back(b);
            }
        }
        ClassifierConfig clf_cfg;
        clf_cfg.seed = 3;
        const AugmentResult ar = run_settings(imb, test, engine, params, -1, clf_cfg);
        const bool ok = ar.augmented.macro_f1 >= ar.baseline.macro_f1 - 0.02;
        out.augment = {ok, fmt("real-only F1 %.4f, real+synthetic F1 %.4f (added %ld/%ld/%ld)",
                               ar.baseline.macro_f1, ar.augmented.macro_f1, ar.added_per_class[0],
                               ar.added_per_class[1], ar.added_per_class[2])};
    }
    return out;
}

// ---- 10. byte-identical reruns through the CLI ----

std::string slurp_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in.good()) return "<missing " + p.string() + ">";
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome check_cli_determinism(const std::string& cli) {
    const fs::path root = fs::temp_directory_path() / "hbsynth_accept_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "toy.ini";
    {
        std::ofstream out(cfg);
        out << "[spectral]\nn_fft = 16\nhop = 8\n"
            << "[schedule]\nsteps = 10\nbeta_max = 0.2\n"
            << "[model]\nbase_channels = 2\nchannel_mult = 1,1,1,1\nsubblocks_per_block = 1\n"
            << "convs_per_subblock = 1\nd_emb = 4\nembed_planes = 1\n"
            << "[train]\nlearning_rate = 0.01\nbatch_size = 4\nepochs = 2\nseed = 9\n"
            << "[synth-data]\ntoy = true\nper_class = 12\nbeats_per_record = 4\nlength = 64\n";
    }
    const auto run = [&](const std::string& args) {
        const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    const std::string c = " --config " + (root / "toy.ini").string();
    if (!run("ingest" + c + " --out " + (root / "ing").string()))
        return {false, "ingest failed"};
    if (!run("train" + c + " --data " + (root / "ing/train.csv").string() + " --out " +
             (root / "t1").string()))
        return {false, "train failed"};
    // rerun from the echoed config
    if (!run("train --config " + (root / "t1/config.ini").string() + " --data " +
             (root / "ing/train.csv").string() + " --out " + (root / "t2").string()))
        return {false, "train rerun failed"};
    for (const char* f : {"ckpt_final.ckpt", "train_log.csv", "config.ini"})
        if (slurp_bytes(root / "t1" / f) != slurp_bytes(root / "t2" / f))
            return {false, fmt("train artifact %s differs across reruns", f)};

    const std::string gen_args = " --checkpoint " + (root / "t1/ckpt_final.ckpt").string() +
                                 " --config " + (root / "t1/config.ini").string() +
                                 " --class N --class V --count 3 --seed 4";
    if (!run("generate" + gen_args + " --out " + (root / "g1").string()) ||
        !run("generate" + gen_args + " --out " + (root / "g2").string()))
        return {false, "generate failed"};
    if (slurp_bytes(root / "g1/generated.csv") != slurp_bytes(root / "g2/generated.csv"))
        return {false, "generated.csv differs across reruns"};

    const std::string eval_args = " --config " + (root / "t1/config.ini").string() + " --real " +
                                  (root / "ing/test.csv").string() + " --synth " +
                                  (root / "g1/generated.csv").string();
    if (!run("evaluate" + eval_args + " --out " + (root / "e1").string()) ||
        !run("evaluate" + eval_args + " --out " + (root / "e2").string()))
        return {false, "evaluate failed"};
    for (const char* f : {"report.csv", "report.txt"})
        if (slurp_bytes(root / "e1" / f) != slurp_bytes(root / "e2" / f))
            return {false, fmt("evaluate artifact %s differs across reruns", f)};

    fs::remove_all(root);
    return {true, "train/generate/evaluate artifacts byte-identical across reruns"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <path-to-hbsynth-cli>\n", argv[0]);
        return 2;
    }
    const std::string cli = argv[1];

    struct Row {
        int id;
        const char* name;
        Outcome out;
        double seconds;
    };
    std::vector<Row> rows;
    const auto timed = [&](int id, const char* name, const std::function<Outcome()>& f) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        rows.push_back({id, name, o, std::chrono::duration<double>(Clock::now() - t0).count()});
    };

    timed(1, "mask and context-selector conformance", check_masks);
    timed(2, "spectral round trip", check_spectral);
    timed(3, "noise-schedule algebra", check_schedule);
    timed(4, "reverse-chain inversion oracle", check_chain_inversion);
    timed(5, "hybrid-loss gradients vs finite differences", check_gradients);
    timed(6, "format-212 codec", check_format212);
    timed(7, "distance-metric oracles", check_metric_oracles);

    {
        const auto t0 = Clock::now();
        ToyStudy study;
        try {
            study = run_toy_study();
        } catch (const std::exception& e) {
            study.training = {false, std::string("exception: ") + e.what()};
            study.augment = {false, "skipped (training threw)"};
        }
        const double mid = std::chrono::duration<double>(Clock::now() - t0).count();
        rows.push_back({8, "toy end-to-end training study", study.training, mid});
        rows.push_back({9, "augmentation non-degradation", study.augment,
                        std::chrono::duration<double>(Clock::now() - t0).count() - mid});
    }

    timed(10, "byte-identical CLI reruns", [&] { return check_cli_determinism(cli); });

    bool all = true;
    for (const Row& r : rows) {
        all = all && r.out.pass;
        std::printf("%s  %2d/10 %-44s (%6.1fs)  %s\n", r.out.pass ? "PASS" : "FAIL", r.id, r.name,
                    r.seconds, r.out.note.c_str());
    }
    std::printf("%s\n", all ? "acceptance: all criteria passed" : "acceptance: FAILURES present");
    return all ? 0 : 1;
}
