#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hbsynth/signal_core.hpp"
#include "hbsynth/spectral.hpp"
#include "hbsynth/tensor.hpp"

namespace hbsynth {

/// Noise-predictor topology. The network is always 7 blocks: 3 encoder
/// blocks (each followed by 2x2 ceil-mode max-pooling), one bottleneck,
/// and 3 decoder blocks (each preceded by a 2x2 stride-2 transposed
/// convolution and joined to its encoder mirror by a skip connection).
/// Every block is `subblocks_per_block` sub-blocks of
/// `convs_per_subblock` 3x3 same-padding convolutions, each followed by
/// SiLU.
struct DenoiserConfig {
    int base_channels = 16;
    std::vector<int> channel_mult = {1, 2, 4, 4};  // 3 encoder stages + bottleneck
    int subblocks_per_block = 3;
    int convs_per_subblock = 2;
    int d_emb = 64;
    int embed_planes = 1;  // channel planes per embedding in the input stack
    bool channel_norm = false;  // optional per-channel normalization after each sub-block

    /// Input channels: 2 (noisy spectrogram) + 2 (mask spectrogram)
    /// + 2 (masked-context spectrogram) + 3 * embed_planes.
    int in_channels() const { return 6 + 3 * embed_planes; }
};

void validate_config(const DenoiserConfig& cfg);  // throws "bad denoiser config"

/// One named learnable tensor.
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> v;

    std::size_t size() const { return v.size(); }
};

/// The full parameter set, in a stable order fixed by the config.
struct DenoiserParams {
    std::vector<ParamTensor> tensors;

    std::size_t total_size() const;
    ParamTensor& at(const std::string& name);             // throws "unknown parameter"
    const ParamTensor& at(const std::string& name) const;
    bool same_layout(const DenoiserParams& other) const;
};

/// Zero-valued tensors with the same names and shapes (gradient buffers).
DenoiserParams zeros_like(const DenoiserParams& p);

/// Sinusoidal timestep embedding: components (sin, cos) of t at
/// geometrically spaced frequencies 10000^(-i/(d/2-1)), interleaved.
/// d_emb must be even and positive ("bad embedding dimension").
std::vector<double> timestep_embedding(long t, int d_emb);

/// Everything the denoiser is conditioned on for one (beat, task, step).
struct ConditionBundle {
    std::vector<double> e_l;  // class embedding row
    std::vector<double> e_T;  // sinusoidal timestep embedding
    std::vector<double> e_s;  // task embedding row
    Spectrogram C1;           // spectrogram of the mask
    Spectrogram C2;           // spectrogram of the masked context
    int class_index = 0;      // source rows, kept for gradient routing
    int task_index = 0;
};

/// Caches made by assemble_input and consumed by assemble_backward.
struct AssembleCache {
    ConditionBundle bundle;
    int freq_bins = 0, frames = 0;
};

class Denoiser {
public:
    Denoiser(const DenoiserConfig& cfg, const SpectralConfig& spectral);

    const DenoiserConfig& config() const { return cfg_; }
    const SpectralConfig& spectral() const { return spectral_; }

    /// Deterministic fan-in-scaled initialization.
    DenoiserParams init_params(std::uint64_t seed) const;

    /// Learnable scalar count. Pure function of the config:
    /// sum over convolutions of (in*out*3*3 + out), plus transposed
    /// convolutions (in*out*2*2 + out), the 1x1 output head, two 3 x d_emb
    /// embedding tables, three (planes x d_emb + planes) projections, and
    /// per-channel norm gains/biases when enabled.
    std::size_t param_count() const;

    /// Builds the conditioning bundle for (label, task, step t).
    ConditionBundle make_bundle(const DenoiserParams& p, BeatClass label, TaskKind task, long t,
                                const Mask& mask, const std::vector<double>& context) const;

    /// Channel stack [S_t | C1 | C2 | projected e_l, e_T, e_s planes].
    /// Shape checks throw "condition shape mismatch".
    Tensor3 assemble_input(const Spectrogram& St, const ConditionBundle& cond,
                           const DenoiserParams& p, AssembleCache* cache = nullptr) const;

    /// Routes the stack gradient into the projection weights and the
    /// learned embedding tables.
    void assemble_backward(const Tensor3& d_stack, const AssembleCache& cache,
                           const DenoiserParams& p, DenoiserParams& grads) const;

    /// Per-node activation tape for one forward pass.
    struct Workspace {
        std::vector<Tensor3> nodes;
        std::vector<std::vector<std::int32_t>> pool_argmax;
        std::vector<std::vector<double>> norm_stats;
    };

    /// Noise prediction, shaped like the 2-channel diffusion state.
    /// Throws "numerical blow-up" if the output is non-finite.
    Tensor3 denoise(const Tensor3& stack, const DenoiserParams& p) const;

    /// denoise() that keeps the activation tape for backward().
    Tensor3 forward(const Tensor3& stack, const DenoiserParams& p, Workspace& ws) const;

    /// Backpropagates d(loss)/d(eps_hat); accumulates parameter gradients
    /// into `grads` and returns d(loss)/d(stack).
    Tensor3 backward(const Tensor3& d_eps, const DenoiserParams& p, Workspace& ws,
                     DenoiserParams& grads) const;

private:
    // One step of the fixed op sequence; parameters referenced by their
    // index in the stable layout.
    struct Op {
        int kind = 0;
        int out = -1, in = -1, in2 = -1;
        int w = -1, b = -1, g = -1;
    };

    void build_plan();

    DenoiserConfig cfg_;
    SpectralConfig spectral_;
    std::vector<int> stage_channels_;  // channels after each of the 4 stages
    std::vector<std::pair<std::string, std::vector<int>>> layout_;
    std::vector<Op> plan_;
    int n_nodes_ = 0;
    int n_pools_ = 0;
    int n_norms_ = 0;
};

}  // namespace hbsynth
