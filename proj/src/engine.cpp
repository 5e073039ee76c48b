#include "hbsynth/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

namespace hbsynth {
namespace {

constexpr std::uint64_t kStepElement = ~0ULL;  // substream id for per-step draws

Tensor3 draw_normal_grid(int c, int h, int w, Rng& rng) {
    Tensor3 g(c, h, w);
    for (double& v : g.v) v = rng.normal();
    return g;
}

TaskKind draw_task(const std::array<double, 3>& weights, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
        acc += weights[static_cast<std::size_t>(i)];
        if (u < acc) return kAllTasks[i];
    }
    return TaskKind::Forecasting;  // u landed on accumulated round-off
}

}  // namespace

void validate_config(const TrainConfig& cfg) {
    require(cfg.learning_rate > 0.0 && cfg.batch_size >= 1 && cfg.epochs >= 1 &&
                cfg.aux_weight >= 0.0 && cfg.checkpoint_every >= 0,
            "bad train config");
    double sum = 0.0;
    for (double w : cfg.task_weights) {
        require(w >= 0.0, "bad task weights");
        sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-6, "bad task weights");
    // Schedule parameters are validated by make_schedule.
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "cannot open " + path);
    out << "step,task,loss_diff,loss_mse,loss_total,seconds\n";
    char buf[192];
    for (const TrainLogRow& r : log.rows) {
        std::snprintf(buf, sizeof(buf), "%ld,%s,%.12g,%.12g,%.12g,%.6g\n", r.step,
                      task_name(r.task), r.loss_diff, r.loss_mse, r.loss_total, r.seconds);
        out << buf;
    }
    require(out.good(), "write failed: " + path);
}

DataIndex build_index(const BeatDataset& data) {
    DataIndex idx;
    idx.data = &data;
    idx.prev.assign(data.beats.size(), -1);
    std::map<std::pair<std::string, int>, std::size_t> pos;
    for (std::size_t i = 0; i < data.beats.size(); ++i)
        pos[{data.beats[i].record_id, data.beats[i].beat_index}] = i;
    for (std::size_t i = 0; i < data.beats.size(); ++i) {
        const Heartbeat& b = data.beats[i];
        const auto it = pos.find({b.record_id, b.beat_index - 1});
        if (it != pos.end() && it->second != i) {
            idx.prev[i] = static_cast<long>(it->second);
            idx.forecastable.push_back(i);
        }
    }
    return idx;
}

Engine::Engine(const DenoiserConfig& model_cfg, const SpectralConfig& spectral_cfg,
               NoiseSchedule schedule)
    : den_(model_cfg, spectral_cfg), sched_(std::move(schedule)) {
    require(sched_.T >= 1, "bad schedule parameters");
}

Engine Engine::from_checkpoint(const Checkpoint& ckpt) {
    return Engine(ckpt.config, ckpt.spectral, ckpt.schedule);
}

std::vector<PreparedElement> Engine::prepare_batch(const DataIndex& index, long step,
                                                   const TrainConfig& cfg) const {
    require(index.data != nullptr && !index.data->beats.empty(), "no training data");
    const BeatDataset& data = *index.data;
    const SpectralConfig& scfg = den_.spectral();

    Rng step_rng(substream_seed(cfg.seed, static_cast<std::uint64_t>(step), kStepElement));
    const TaskKind task = draw_task(cfg.task_weights, step_rng);
    if (task == TaskKind::Forecasting)
        require(!index.forecastable.empty(), "no forecastable beats");

    std::vector<PreparedElement> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int e = 0; e < cfg.batch_size; ++e) {
        Rng rng(substream_seed(cfg.seed, static_cast<std::uint64_t>(step),
                               static_cast<std::uint64_t>(e)));
        PreparedElement el;
        el.task = task;
        std::size_t bi;
        if (task == TaskKind::Forecasting) {
            bi = index.forecastable[rng.uniform_index(index.forecastable.size())];
            el.context = &data.beats[static_cast<std::size_t>(index.prev[bi])];
        } else {
            bi = rng.uniform_index(data.beats.size());
            el.context = &data.beats[bi];
        }
        el.target = &data.beats[bi];

        const int L = el.target->length();
        validate_config(scfg, L);
        el.t = static_cast<int>(1 + rng.uniform_index(static_cast<std::uint64_t>(sched_.T)));
        el.mask = build_mask(task, L, std::nullopt,
                             task == TaskKind::Imputation ? &rng : nullptr, cfg.gap);
        el.x0 = stft(el.target->samples, scfg);
        el.eps = draw_normal_grid(el.x0.grid.c, el.x0.grid.h, el.x0.grid.w, rng);
        el.st = q_sample(el.x0, el.t, el.eps, sched_);
        batch.push_back(std::move(el));
    }
    return batch;
}

Engine::StepResult Engine::batch_gradients(const std::vector<PreparedElement>& batch,
                                           const DenoiserParams& params, double aux_weight,
                                           DenoiserParams* grads) const {
    require(!batch.empty(), "no training data");
    const double B = static_cast<double>(batch.size());

    StepResult res;
    res.task = batch.front().task;
    for (const PreparedElement& el : batch) {
        ConditionBundle bundle = den_.make_bundle(params, el.target->label, el.task,
                                                  el.t, el.mask, el.context->samples);
        AssembleCache cache;
        const Tensor3 stack = den_.assemble_input(el.st, bundle, params, &cache);
        Denoiser::Workspace ws;
        const Tensor3 eps_hat = den_.forward(stack, params, ws);

        // Diffusion term: summed squared error of the noise prediction.
        double diff = 0.0;
        Tensor3 d_eps(eps_hat.c, eps_hat.h, eps_hat.w);
        for (std::size_t i = 0; i < eps_hat.v.size(); ++i) {
            const double d = el.eps.v[i] - eps_hat.v[i];
            diff += d * d;
            d_eps.v[i] = -2.0 * d / B;
        }
        res.loss_diff += diff / B;

        // Auxiliary signal-domain MSE for the conditioned tasks, through
        // the one-step x0 estimate and the exact inverse transform.
        if (el.task != TaskKind::Generation && aux_weight > 0.0) {
            const Spectrogram x0_hat = predict_x0(el.st, eps_hat, el.t, sched_);
            const std::vector<double> sig = istft(x0_hat);
            const std::vector<double>& ref = el.target->samples;
            require(sig.size() == ref.size(), "dimension mismatch");
            const double L = static_cast<double>(sig.size());
            double mse = 0.0;
            std::vector<double> d_sig(sig.size());
            for (std::size_t i = 0; i < sig.size(); ++i) {
                const double d = sig[i] - ref[i];
                mse += d * d;
                d_sig[i] = aux_weight * 2.0 * d / (L * B);
            }
            res.loss_mse += (mse / L) / B;
            const Tensor3 d_grid =
                istft_adjoint(d_sig, den_.spectral(), x0_hat.grid.w);
            // x0_hat = (S_t - sqrt(1-abar) eps_hat) / sqrt(abar)
            const double abar = sched_.alpha_bar(el.t);
            const double scale = -std::sqrt(1.0 - abar) / std::sqrt(abar);
            for (std::size_t i = 0; i < d_eps.v.size(); ++i)
                d_eps.v[i] += scale * d_grid.v[i];
        }

        if (grads != nullptr) {
            const Tensor3 d_stack = den_.backward(d_eps, params, ws, *grads);
            den_.assemble_backward(d_stack, cache, params, *grads);
        }
    }
    res.loss_total = res.loss_diff + aux_weight * res.loss_mse;
    require(std::isfinite(res.loss_total), "numerical blow-up");
    return res;
}

Engine::StepResult Engine::training_step(const std::vector<PreparedElement>& batch,
                                         DenoiserParams& params, AdamState& adam,
                                         const TrainConfig& cfg) {
    DenoiserParams grads = zeros_like(params);
    const StepResult res = batch_gradients(batch, params, cfg.aux_weight, &grads);

    // Adam update, tensors in layout order.
    if (adam.t == 0) {
        adam.m = zeros_like(params);
        adam.v = zeros_like(params);
    }
    ++adam.t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
    for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
        auto& pv = params.tensors[ti].v;
        auto& gv = grads.tensors[ti].v;
        auto& mv = adam.m.tensors[ti].v;
        auto& vv = adam.v.tensors[ti].v;
        for (std::size_t i = 0; i < pv.size(); ++i) {
            mv[i] = b1 * mv[i] + (1.0 - b1) * gv[i];
            vv[i] = b2 * vv[i] + (1.0 - b2) * gv[i] * gv[i];
            const double mh = mv[i] / corr1;
            const double vh = vv[i] / corr2;
            pv[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + eps);
        }
    }
    return res;
}

std::pair<DenoiserParams, TrainLog> Engine::train(const BeatDataset& data,
                                                  const TrainConfig& cfg) {
    validate_config(cfg);
    require(!data.beats.empty(), "no training data");
    const DataIndex index = build_index(data);
    if (cfg.task_weights[2] > 0.0)
        require(!index.forecastable.empty(), "no forecastable beats");

    DenoiserParams params = den_.init_params(cfg.seed);
    AdamState adam;
    TrainLog log;

    const long n = static_cast<long>(data.beats.size());
    const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const long total = static_cast<long>(cfg.epochs) * steps_per_epoch;

    const bool emit = !cfg.checkpoint_dir.empty();
    if (emit) std::filesystem::create_directories(cfg.checkpoint_dir);
    auto write_ckpt = [&](const std::string& name) {
        Checkpoint ckpt{den_.config(), den_.spectral(), sched_, cfg.seed, params, {}};
        save_checkpoint((std::filesystem::path(cfg.checkpoint_dir) / name).string(), ckpt);
    };

    for (long step = 1; step <= total; ++step) {
        const auto start = std::chrono::steady_clock::now();
        const std::vector<PreparedElement> batch = prepare_batch(index, step, cfg);
        StepResult r;
        try {
            r = training_step(batch, params, adam, cfg);
        } catch (const Error& e) {
            if (std::string(e.what()).rfind("numerical blow-up", 0) == 0) {
                if (emit) write_ckpt("blowup.ckpt");  // diagnostic snapshot
                fail("numerical blow-up at step " + std::to_string(step));
            }
            throw;
        }
        TrainLogRow row;
        row.step = step;
        row.task = r.task;
        row.loss_diff = r.loss_diff;
        row.loss_mse = r.loss_mse;
        row.loss_total = r.loss_total;
        if (cfg.log_timing) {
            const auto end = std::chrono::steady_clock::now();
            row.seconds = std::chrono::duration<double>(end - start).count();
        }
        log.rows.push_back(row);
        if (emit && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != total) {
            char name[48];
            std::snprintf(name, sizeof(name), "ckpt_step%06ld.ckpt", step);
            write_ckpt(name);
        }
    }
    if (emit) write_ckpt("ckpt_final.ckpt");
    return {std::move(params), std::move(log)};
}

Spectrogram Engine::run_reverse_chain(const Spectrogram& sT, const EpsFn& eps_fn,
                                      Rng* noise_rng) const {
    Spectrogram s = sT;
    for (int t = sched_.T; t >= 1; --t) {
        const Tensor3 eps_hat = eps_fn(s, t);
        Tensor3 z;
        if (t > 1 && noise_rng != nullptr)
            z = draw_normal_grid(s.grid.c, s.grid.h, s.grid.w, *noise_rng);
        s = posterior_step(s, eps_hat, t, sched_, z);
    }
    return s;
}

Heartbeat Engine::synthesize(const SynthesisRequest& req, const DenoiserParams& params) const {
    int length = req.length;
    std::vector<double> context;
    Mask mask;
    switch (req.task) {
        case TaskKind::Generation:
            mask = build_mask(TaskKind::Generation, length);
            context.assign(static_cast<std::size_t>(length), 0.0);
            break;
        case TaskKind::Imputation: {
            require(req.context.has_value() && req.mask.has_value(), "incomplete request");
            require(req.mask->task == TaskKind::Imputation, "mask task mismatch");
            length = req.context->length();
            require(req.mask->length() == length, "bad mask length");
            mask = *req.mask;
            context = req.context->samples;
            break;
        }
        case TaskKind::Forecasting:
            require(req.context.has_value(), "incomplete request");
            length = req.context->length();
            mask = build_mask(TaskKind::Forecasting, length);
            context = req.context->samples;
            break;
    }
    const SpectralConfig& scfg = den_.spectral();
    validate_config(scfg, length);

    // The bundle's C1/C2 and the class/task rows are fixed across the
    // chain; only the timestep embedding changes per step.
    ConditionBundle bundle = den_.make_bundle(params, req.label, req.task, sched_.T, mask, context);

    Rng rng(req.seed);
    Spectrogram s = zero_spectrogram(scfg, length);
    for (double& v : s.grid.v) v = rng.normal();

    const EpsFn eps_fn = [&](const Spectrogram& st, int t) {
        bundle.e_T = timestep_embedding(t, den_.config().d_emb);
        return den_.denoise(den_.assemble_input(st, bundle, params), params);
    };
    const Spectrogram s0 = run_reverse_chain(s, eps_fn, &rng);

    Heartbeat out;
    out.label = req.label;
    out.samples = istft(s0);
    for (double& v : out.samples) v = std::clamp(v, 0.0, 1.0);
    if (req.task == TaskKind::Imputation && req.paste_observed) {
        for (int i = 0; i < length; ++i)
            if (mask.bits[static_cast<std::size_t>(i)])
                out.samples[static_cast<std::size_t>(i)] =
                    req.context->samples[static_cast<std::size_t>(i)];
    }
    return out;
}

Heartbeat Engine::generate(BeatClass label, const DenoiserParams& params, std::uint64_t seed,
                           int length) const {
    SynthesisRequest req;
    req.task = TaskKind::Generation;
    req.label = label;
    req.seed = seed;
    req.length = length;
    return synthesize(req, params);
}

Heartbeat Engine::impute(const Heartbeat& beat_with_gap, const Mask& mask, BeatClass label,
                         const DenoiserParams& params, std::uint64_t seed) const {
    SynthesisRequest req;
    req.task = TaskKind::Imputation;
    req.label = label;
    req.context = beat_with_gap;
    req.mask = mask;
    req.seed = seed;
    return synthesize(req, params);
}

Heartbeat Engine::forecast(const Heartbeat& prev, BeatClass label, const DenoiserParams& params,
                           std::uint64_t seed) const {
    SynthesisRequest req;
    req.task = TaskKind::Forecasting;
    req.label = label;
    req.context = prev;
    req.seed = seed;
    return synthesize(req, params);
}

}  // namespace hbsynth
