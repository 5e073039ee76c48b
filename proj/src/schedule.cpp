#include "hbsynth/schedule.hpp"

#include <cmath>

namespace hbsynth {
namespace {

void check_step(int t, const NoiseSchedule& sched) {
    require(t >= 1 && t <= sched.T, "step out of range");
}

}  // namespace

const char* spacing_name(BetaSpacing s) {
    return s == BetaSpacing::Linear ? "linear" : "cosine";
}

BetaSpacing spacing_from_name(const std::string& name) {
    if (name == "linear") return BetaSpacing::Linear;
    if (name == "cosine") return BetaSpacing::Cosine;
    fail("unknown beta spacing: " + name);
}

const char* variance_name(ReverseVariance v) {
    return v == ReverseVariance::Beta ? "beta" : "beta-tilde";
}

ReverseVariance variance_from_name(const std::string& name) {
    if (name == "beta") return ReverseVariance::Beta;
    if (name == "beta-tilde") return ReverseVariance::BetaTilde;
    fail("unknown reverse variance: " + name);
}

double NoiseSchedule::sigma(int t) const {
    if (variance == ReverseVariance::Beta) return std::sqrt(beta(t));
    // beta~_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t, with abar_0 = 1.
    const double abar_prev = (t > 1) ? alpha_bar(t - 1) : 1.0;
    return std::sqrt((1.0 - abar_prev) / (1.0 - alpha_bar(t)) * beta(t));
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max, BetaSpacing spacing,
                            ReverseVariance variance) {
    require(T >= 1 && 0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0,
            "bad schedule parameters");
    NoiseSchedule s;
    s.T = T;
    s.spacing = spacing;
    s.variance = variance;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alphas.resize(static_cast<std::size_t>(T));
    s.alpha_bars.resize(static_cast<std::size_t>(T));
    double abar = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = (T == 1) ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        double beta;
        if (spacing == BetaSpacing::Linear) {
            beta = beta_min + (beta_max - beta_min) * frac;
        } else {
            // Half-cosine ramp between the same endpoints.
            beta = beta_min + (beta_max - beta_min) * 0.5 *
                                  (1.0 - std::cos(3.14159265358979323846 * frac));
        }
        s.betas[static_cast<std::size_t>(t - 1)] = beta;
        s.alphas[static_cast<std::size_t>(t - 1)] = 1.0 - beta;
        abar *= 1.0 - beta;
        s.alpha_bars[static_cast<std::size_t>(t - 1)] = abar;
    }
    return s;
}

Spectrogram q_sample(const Spectrogram& s0, int t, const Tensor3& eps, const NoiseSchedule& sched) {
    check_step(t, sched);
    check_same_shape(s0.grid, eps, "dimension mismatch");
    const double a = std::sqrt(sched.alpha_bar(t));
    const double b = std::sqrt(1.0 - sched.alpha_bar(t));
    Spectrogram out = s0;
    for (std::size_t i = 0; i < out.grid.size(); ++i)
        out.grid.v[i] = a * s0.grid.v[i] + b * eps.v[i];
    return out;
}

Spectrogram predict_x0(const Spectrogram& st, const Tensor3& eps_hat, int t,
                       const NoiseSchedule& sched) {
    check_step(t, sched);
    check_same_shape(st.grid, eps_hat, "dimension mismatch");
    const double a = std::sqrt(sched.alpha_bar(t));
    const double b = std::sqrt(1.0 - sched.alpha_bar(t));
    Spectrogram out = st;
    for (std::size_t i = 0; i < out.grid.size(); ++i)
        out.grid.v[i] = (st.grid.v[i] - b * eps_hat.v[i]) / a;
    return out;
}

Spectrogram posterior_step(const Spectrogram& st, const Tensor3& eps_hat, int t,
                           const NoiseSchedule& sched, const Tensor3& z) {
    check_step(t, sched);
    check_same_shape(st.grid, eps_hat, "dimension mismatch");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    Spectrogram out = st;
    for (std::size_t i = 0; i < out.grid.size(); ++i)
        out.grid.v[i] = inv_sqrt_alpha * (st.grid.v[i] - coef * eps_hat.v[i]);
    if (t > 1 && z.size() > 0) {
        check_same_shape(st.grid, z, "dimension mismatch");
        const double sigma = sched.sigma(t);
        for (std::size_t i = 0; i < out.grid.size(); ++i) out.grid.v[i] += sigma * z.v[i];
    }
    return out;
}

}  // namespace hbsynth
