#include "hbsynth/spectral.hpp"

#include <cmath>

namespace hbsynth {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<double> make_window(const SpectralConfig& cfg) {
    std::vector<double> w(static_cast<std::size_t>(cfg.n_fft));
    if (cfg.window == "hann") {
        for (int n = 0; n < cfg.n_fft; ++n)
            w[static_cast<std::size_t>(n)] = 0.5 * (1.0 - std::cos(kTwoPi * n / cfg.n_fft));
    } else {  // rect
        std::fill(w.begin(), w.end(), 1.0);
    }
    return w;
}

// Padded copy of x: n_fft/2 samples on each side, reflect or zero rule.
std::vector<double> pad_signal(const std::vector<double>& x, const SpectralConfig& cfg) {
    const int L = static_cast<int>(x.size());
    const int p = cfg.n_fft / 2;
    std::vector<double> y(static_cast<std::size_t>(L + 2 * p), 0.0);
    for (int i = 0; i < L; ++i) y[static_cast<std::size_t>(i + p)] = x[static_cast<std::size_t>(i)];
    if (cfg.pad_mode == "reflect") {
        for (int j = 1; j <= p; ++j) {
            y[static_cast<std::size_t>(p - j)] = x[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(p + L - 1 + j)] = x[static_cast<std::size_t>(L - 1 - j)];
        }
    }
    return y;
}

struct DftTables {
    // cs[k][n] = cos(2 pi k n / n_fft), sn[k][n] = sin(2 pi k n / n_fft)
    std::vector<std::vector<double>> cs, sn;
    explicit DftTables(int n_fft) {
        const int bins = n_fft / 2 + 1;
        cs.resize(static_cast<std::size_t>(bins));
        sn.resize(static_cast<std::size_t>(bins));
        for (int k = 0; k < bins; ++k) {
            cs[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(n_fft));
            sn[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(n_fft));
            for (int n = 0; n < n_fft; ++n) {
                const double a = kTwoPi * k * n / n_fft;
                cs[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)] = std::cos(a);
                sn[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)] = std::sin(a);
            }
        }
    }
};

// Accumulated squared-window normalizer over the padded support.
std::vector<double> ola_norm(const SpectralConfig& cfg, int length, int frames,
                             const std::vector<double>& w) {
    const int p = cfg.n_fft / 2;
    std::vector<double> norm(static_cast<std::size_t>(length + 2 * p), 0.0);
    for (int m = 0; m < frames; ++m)
        for (int n = 0; n < cfg.n_fft; ++n)
            norm[static_cast<std::size_t>(m * cfg.hop + n)] +=
                w[static_cast<std::size_t>(n)] * w[static_cast<std::size_t>(n)];
    return norm;
}

}  // namespace

void validate_config(const SpectralConfig& cfg, int signal_length) {
    const bool ok = cfg.n_fft >= 4 && cfg.n_fft % 2 == 0 && cfg.hop >= 1 && cfg.hop <= cfg.n_fft &&
                    cfg.n_fft % cfg.hop == 0 &&
                    (cfg.window == "hann" || cfg.window == "rect") &&
                    (cfg.pad_mode == "reflect" || cfg.pad_mode == "zero");
    require(ok, "bad spectral config");
    if (signal_length >= 0) {
        require(signal_length >= 1, "bad spectral config");
        if (cfg.pad_mode == "reflect")
            require(signal_length > cfg.n_fft / 2, "bad spectral config");
    }
}

Spectrogram zero_spectrogram(const SpectralConfig& cfg, int source_length) {
    validate_config(cfg, source_length);
    Spectrogram s;
    s.config = cfg;
    s.source_length = source_length;
    s.grid = Tensor3(2, cfg.freq_bins(), cfg.frames_for(source_length));
    return s;
}

Spectrogram stft(const std::vector<double>& x, const SpectralConfig& cfg) {
    const int L = static_cast<int>(x.size());
    validate_config(cfg, L);
    const int F = cfg.freq_bins();
    const int M = cfg.frames_for(L);
    const std::vector<double> w = make_window(cfg);
    const std::vector<double> y = pad_signal(x, cfg);
    const DftTables dft(cfg.n_fft);

    Spectrogram s;
    s.config = cfg;
    s.source_length = L;
    s.grid = Tensor3(2, F, M);
    std::vector<double> frame(static_cast<std::size_t>(cfg.n_fft));
    for (int m = 0; m < M; ++m) {
        for (int n = 0; n < cfg.n_fft; ++n)
            frame[static_cast<std::size_t>(n)] =
                w[static_cast<std::size_t>(n)] * y[static_cast<std::size_t>(m * cfg.hop + n)];
        for (int k = 0; k < F; ++k) {
            const double* ck = dft.cs[static_cast<std::size_t>(k)].data();
            const double* sk = dft.sn[static_cast<std::size_t>(k)].data();
            double re = 0.0, im = 0.0;
            for (int n = 0; n < cfg.n_fft; ++n) {
                re += frame[static_cast<std::size_t>(n)] * ck[n];
                im -= frame[static_cast<std::size_t>(n)] * sk[n];
            }
            s.grid.at(0, k, m) = re;
            s.grid.at(1, k, m) = im;
        }
    }
    return s;
}

std::vector<double> istft(const Spectrogram& s) {
    const SpectralConfig& cfg = s.config;
    const int L = s.source_length;
    validate_config(cfg, L);
    const int F = cfg.freq_bins();
    const int M = s.frames();
    require(s.grid.c == 2 && s.grid.h == F && M == cfg.frames_for(L), "bad spectral config");

    const std::vector<double> w = make_window(cfg);
    const DftTables dft(cfg.n_fft);
    const int p = cfg.n_fft / 2;
    const int half = cfg.n_fft / 2;
    std::vector<double> acc(static_cast<std::size_t>(L + 2 * p), 0.0);
    std::vector<double> norm = ola_norm(cfg, L, M, w);

    // Interior samples must be covered with nonzero window energy.
    double norm_max = 0.0;
    for (double v : norm) norm_max = std::max(norm_max, v);
    for (int i = 0; i < L; ++i)
        require(norm[static_cast<std::size_t>(i + p)] > 1e-10 * norm_max, "non-invertible config");

    std::vector<double> u(static_cast<std::size_t>(cfg.n_fft));
    for (int m = 0; m < M; ++m) {
        // Real inverse DFT assuming conjugate symmetry; the imaginary parts
        // of bins 0 and n_fft/2 do not enter the reconstruction.
        for (int n = 0; n < cfg.n_fft; ++n) {
            double acc_n = s.grid.at(0, 0, m);
            for (int k = 1; k < half; ++k) {
                acc_n += 2.0 * (s.grid.at(0, k, m) * dft.cs[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)] -
                                s.grid.at(1, k, m) * dft.sn[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)]);
            }
            acc_n += s.grid.at(0, half, m) *
                     dft.cs[static_cast<std::size_t>(half)][static_cast<std::size_t>(n)];
            u[static_cast<std::size_t>(n)] = acc_n / cfg.n_fft;
        }
        for (int n = 0; n < cfg.n_fft; ++n)
            acc[static_cast<std::size_t>(m * cfg.hop + n)] +=
                w[static_cast<std::size_t>(n)] * u[static_cast<std::size_t>(n)];
    }

    std::vector<double> out(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i)
        out[static_cast<std::size_t>(i)] =
            acc[static_cast<std::size_t>(i + p)] / norm[static_cast<std::size_t>(i + p)];
    return out;
}

Tensor3 istft_adjoint(const std::vector<double>& dout, const SpectralConfig& cfg, int frames) {
    const int L = static_cast<int>(dout.size());
    validate_config(cfg, L);
    const int F = cfg.freq_bins();
    const int M = frames;
    require(M == cfg.frames_for(L), "bad spectral config");

    const std::vector<double> w = make_window(cfg);
    const DftTables dft(cfg.n_fft);
    const int p = cfg.n_fft / 2;
    const int half = cfg.n_fft / 2;
    const std::vector<double> norm = ola_norm(cfg, L, M, w);

    // Transpose of: crop -> divide by norm -> overlap-add of windowed
    // real inverse DFTs.
    std::vector<double> dacc(static_cast<std::size_t>(L + 2 * p), 0.0);
    for (int i = 0; i < L; ++i)
        dacc[static_cast<std::size_t>(i + p)] =
            dout[static_cast<std::size_t>(i)] / norm[static_cast<std::size_t>(i + p)];

    Tensor3 grad(2, F, M);
    std::vector<double> du(static_cast<std::size_t>(cfg.n_fft));
    for (int m = 0; m < M; ++m) {
        for (int n = 0; n < cfg.n_fft; ++n)
            du[static_cast<std::size_t>(n)] = w[static_cast<std::size_t>(n)] *
                                              dacc[static_cast<std::size_t>(m * cfg.hop + n)] /
                                              cfg.n_fft;
        double g0 = 0.0, gh = 0.0;
        for (int n = 0; n < cfg.n_fft; ++n) {
            g0 += du[static_cast<std::size_t>(n)];
            gh += du[static_cast<std::size_t>(n)] *
                  dft.cs[static_cast<std::size_t>(half)][static_cast<std::size_t>(n)];
        }
        grad.at(0, 0, m) = g0;
        grad.at(0, half, m) = gh;
        for (int k = 1; k < half; ++k) {
            double gre = 0.0, gim = 0.0;
            const double* ck = dft.cs[static_cast<std::size_t>(k)].data();
            const double* sk = dft.sn[static_cast<std::size_t>(k)].data();
            for (int n = 0; n < cfg.n_fft; ++n) {
                gre += 2.0 * du[static_cast<std::size_t>(n)] * ck[n];
                gim -= 2.0 * du[static_cast<std::size_t>(n)] * sk[n];
            }
            grad.at(0, k, m) = gre;
            grad.at(1, k, m) = gim;
        }
    }
    return grad;
}

}  // namespace hbsynth
