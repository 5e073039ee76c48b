#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hbsynth/checkpoint.hpp"
#include "hbsynth/denoiser.hpp"
#include "hbsynth/ingest.hpp"
#include "hbsynth/schedule.hpp"

namespace hbsynth {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 8;
    int epochs = 1;
    /// Sampling weights for (generation, imputation, forecasting); must be
    /// non-negative and sum to 1.
    std::array<double, 3> task_weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    double aux_weight = 1.0;  // lambda on the signal-domain MSE term
    int steps = 1000;         // diffusion steps T
    double beta_min = 1e-4;
    double beta_max = 0.02;
    BetaSpacing spacing = BetaSpacing::Linear;
    ReverseVariance variance = ReverseVariance::Beta;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;        // steps between periodic checkpoints; 0 = final only
    std::string checkpoint_dir;     // empty = no checkpoint files
    GapRange gap;                   // imputation gap driver
    /// When false the seconds column logs 0, keeping training logs
    /// byte-identical across reruns.
    bool log_timing = false;
};

void validate_config(const TrainConfig& cfg);  // "bad train config" / "bad task weights"

struct TrainLogRow {
    long step = 0;
    TaskKind task = TaskKind::Generation;
    double loss_diff = 0.0, loss_mse = 0.0, loss_total = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
};

/// CSV with header step,task,loss_diff,loss_mse,loss_total,seconds.
void write_train_log_csv(const TrainLog& log, const std::string& path);

struct SynthesisRequest {
    TaskKind task = TaskKind::Generation;
    BeatClass label = BeatClass::Normal;
    std::optional<Heartbeat> context;  // imputation: the partial beat; forecasting: the previous beat
    std::optional<Mask> mask;          // imputation only
    std::uint64_t seed = 0;
    int length = kDefaultBeatLength;   // generation only; otherwise from the context
    /// Imputation: overwrite observed positions with the request's values
    /// after sampling (the contract-preserving default).
    bool paste_observed = true;
};

/// Precomputed lookup over one dataset for batch assembly.
struct DataIndex {
    const BeatDataset* data = nullptr;
    std::vector<long> prev;                 // index of the in-record predecessor, -1 if none
    std::vector<std::size_t> forecastable;  // beats with a predecessor
};

DataIndex build_index(const BeatDataset& data);

/// One training example with every random draw already materialized.
struct PreparedElement {
    TaskKind task = TaskKind::Generation;
    const Heartbeat* target = nullptr;   // x0
    const Heartbeat* context = nullptr;  // the beat itself, or the predecessor
    Mask mask;
    int t = 1;
    Spectrogram x0;
    Spectrogram st;
    Tensor3 eps;
};

/// Adam moment buffers.
struct AdamState {
    DenoiserParams m, v;
    long t = 0;
};

class Engine {
public:
    Engine(const DenoiserConfig& model_cfg, const SpectralConfig& spectral_cfg,
           NoiseSchedule schedule);
    static Engine from_checkpoint(const Checkpoint& ckpt);

    const Denoiser& denoiser() const { return den_; }
    const NoiseSchedule& schedule() const { return sched_; }

    /// Deterministic batch assembly. The step's task comes from the stream
    /// (seed, step, 2^64-1); element e then draws from (seed, step, e) in
    /// the fixed order: beat index, diffusion step t, imputation gap,
    /// noise grid (row-major).
    std::vector<PreparedElement> prepare_batch(const DataIndex& index, long step,
                                               const TrainConfig& cfg) const;

    struct StepResult {
        double loss_diff = 0.0, loss_mse = 0.0, loss_total = 0.0;
        TaskKind task = TaskKind::Generation;
    };

    /// Hybrid loss over one batch, with parameter gradients accumulated
    /// into *grads (skipped when null, leaving a loss-only evaluation).
    StepResult batch_gradients(const std::vector<PreparedElement>& batch,
                               const DenoiserParams& params, double aux_weight,
                               DenoiserParams* grads) const;

    /// Forward, hybrid loss, backward, and one Adam update.
    /// loss_diff is the batch mean of the summed squared noise-prediction
    /// error; loss_mse the batch mean of the per-sample signal MSE
    /// (imputation/forecasting elements only); loss_total their
    /// lambda-weighted sum. Throws "numerical blow-up" on non-finite loss.
    StepResult training_step(const std::vector<PreparedElement>& batch, DenoiserParams& params,
                             AdamState& adam, const TrainConfig& cfg);

    /// Full loop: epochs * ceil(n/batch) steps over randomly assembled
    /// batches. Deterministic given cfg.seed. Writes periodic and final
    /// checkpoints when cfg.checkpoint_dir is set.
    std::pair<DenoiserParams, TrainLog> train(const BeatDataset& data, const TrainConfig& cfg);

    /// Noise-prediction callback: (S_t, t) -> eps_hat.
    using EpsFn = std::function<Tensor3(const Spectrogram&, int)>;

    /// Ancestral reverse chain from the given S_T down to S_0. z draws
    /// come from `noise_rng` for t > 1; a null rng runs the deterministic
    /// (z = 0) chain.
    Spectrogram run_reverse_chain(const Spectrogram& sT, const EpsFn& eps_fn,
                                  Rng* noise_rng) const;

    /// Conditional sampling for one request. Draw order from the request
    /// seed: S_T grid, then one z grid per reverse step with t > 1.
    /// Output clipped to [0, 1]; imputation pastes observed samples back
    /// unless the request disables it. Throws "incomplete request" when
    /// the task's context or mask is missing.
    Heartbeat synthesize(const SynthesisRequest& req, const DenoiserParams& params) const;

    Heartbeat generate(BeatClass label, const DenoiserParams& params, std::uint64_t seed,
                       int length = kDefaultBeatLength) const;
    Heartbeat impute(const Heartbeat& beat_with_gap, const Mask& mask, BeatClass label,
                     const DenoiserParams& params, std::uint64_t seed) const;
    Heartbeat forecast(const Heartbeat& prev, BeatClass label, const DenoiserParams& params,
                       std::uint64_t seed) const;

private:
    Denoiser den_;
    NoiseSchedule sched_;
};

}  // namespace hbsynth
