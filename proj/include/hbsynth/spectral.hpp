#pragma once

#include <string>
#include <vector>

#include "hbsynth/tensor.hpp"

namespace hbsynth {

/// Parameters of the signal <-> spectrogram transform pair. The same
/// config is shared by the diffusion state and both conditioning
/// spectrograms; checkpoints record it so sampling matches training.
struct SpectralConfig {
    int n_fft = 64;                   // window length, even
    int hop = 4;                      // hop length; must divide n_fft
    std::string window = "hann";      // "hann" or "rect"
    std::string pad_mode = "reflect"; // "reflect" or "zero", centered frames

    int freq_bins() const { return n_fft / 2 + 1; }
    int frames_for(int length) const { return length / hop + 1; }
};

/// Throws "bad spectral config" when the parameters are inconsistent
/// (optionally against a concrete signal length).
void validate_config(const SpectralConfig& cfg, int signal_length = -1);

/// Complex short-time Fourier grid stored as two real channels
/// (0 = real part, 1 = imaginary part), shape 2 x freq_bins x frames.
struct Spectrogram {
    Tensor3 grid;
    SpectralConfig config;
    int source_length = 0;

    int freq_bins() const { return grid.h; }
    int frames() const { return grid.w; }
};

Spectrogram zero_spectrogram(const SpectralConfig& cfg, int source_length);

/// Centered one-sided STFT of a real signal.
Spectrogram stft(const std::vector<double>& x, const SpectralConfig& cfg);

/// Overlap-add inverse with window-square normalization. Exact inverse of
/// stft up to round-off for valid configs; arbitrary grids are projected
/// through the conjugate-symmetric real inverse.
std::vector<double> istft(const Spectrogram& s);

/// Adjoint of the linear map istft: grid -> signal, evaluated at `dout`.
/// Satisfies <istft(G), y> == <G, istft_adjoint(y)> for all G, y; used to
/// backpropagate signal-domain losses into spectrogram space.
Tensor3 istft_adjoint(const std::vector<double>& dout, const SpectralConfig& cfg, int frames);

}  // namespace hbsynth
