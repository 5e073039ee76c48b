#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hbsynth/spectral.hpp"
#include "hbsynth/tensor.hpp"

namespace hbsynth {

enum class BetaSpacing : std::uint8_t { Linear, Cosine };
enum class ReverseVariance : std::uint8_t { Beta, BetaTilde };

const char* spacing_name(BetaSpacing s);
BetaSpacing spacing_from_name(const std::string& name);      // "linear" / "cosine"
const char* variance_name(ReverseVariance v);
ReverseVariance variance_from_name(const std::string& name); // "beta" / "beta-tilde"

/// Per-step noise variances and their running products. Steps are
/// 1-indexed (t = 1..T); the tables are stored 0-based.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // beta_t
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // prod_{i<=t} alpha_i
    BetaSpacing spacing = BetaSpacing::Linear;
    ReverseVariance variance = ReverseVariance::Beta;

    double beta(int t) const { return betas[static_cast<std::size_t>(t - 1)]; }
    double alpha(int t) const { return alphas[static_cast<std::size_t>(t - 1)]; }
    double alpha_bar(int t) const { return alpha_bars[static_cast<std::size_t>(t - 1)]; }

    /// Reverse-step standard deviation sigma_t under the configured choice.
    double sigma(int t) const;
};

/// Betas spaced from beta_min to beta_max over T steps (endpoints
/// inclusive), derived tables populated.
NoiseSchedule make_schedule(int T, double beta_min, double beta_max,
                            BetaSpacing spacing = BetaSpacing::Linear,
                            ReverseVariance variance = ReverseVariance::Beta);

/// Forward closed form: S_t = sqrt(abar_t) S0 + sqrt(1 - abar_t) eps.
Spectrogram q_sample(const Spectrogram& s0, int t, const Tensor3& eps, const NoiseSchedule& sched);

/// Algebraic inverse of q_sample under the eps-parameterization:
/// S0 = (S_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
/// Ill-conditioned near t = T where abar_t is tiny; stays finite.
Spectrogram predict_x0(const Spectrogram& st, const Tensor3& eps_hat, int t,
                       const NoiseSchedule& sched);

/// One reverse ancestral step:
/// S_{t-1} = (S_t - beta_t/sqrt(1-abar_t) eps_hat)/sqrt(alpha_t) + sigma_t z.
/// An empty z is treated as zero; no noise is ever added at t = 1.
Spectrogram posterior_step(const Spectrogram& st, const Tensor3& eps_hat, int t,
                           const NoiseSchedule& sched, const Tensor3& z);

}  // namespace hbsynth
