#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hbsynth/engine.hpp"

using namespace hbsynth;

namespace {

DenoiserConfig tiny_model() {
    DenoiserConfig cfg;
    cfg.base_channels = 2;
    cfg.channel_mult = {1, 1, 1, 1};
    cfg.subblocks_per_block = 1;
    cfg.convs_per_subblock = 1;
    cfg.d_emb = 4;
    return cfg;
}

SpectralConfig tiny_spectral() {
    SpectralConfig sc;
    sc.n_fft = 16;
    sc.hop = 8;
    return sc;
}

TrainConfig tiny_train(std::uint64_t seed = 11) {
    TrainConfig tc;
    tc.batch_size = 4;
    tc.steps = 10;
    tc.beta_max = 0.2;
    tc.seed = seed;
    return tc;
}

Engine tiny_engine(const TrainConfig& tc) {
    return Engine(tiny_model(), tiny_spectral(),
                  make_schedule(tc.steps, tc.beta_min, tc.beta_max, tc.spacing, tc.variance));
}

TaskKind oracle_task(const std::array<double, 3>& weights, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
        acc += weights[static_cast<std::size_t>(i)];
        if (u < acc) return kAllTasks[i];
    }
    return TaskKind::Forecasting;
}

std::string temp_dir(const char* name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    return p.string();
}

}  // namespace

TEST_CASE("training config validation") {
    CHECK_NOTHROW(validate_config(TrainConfig{}));
    TrainConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_WITH(validate_config(bad), "bad train config");
    bad = TrainConfig{};
    bad.task_weights = {0.5, 0.5, 0.5};
    CHECK_THROWS_WITH(validate_config(bad), "bad task weights");
    bad.task_weights = {1.2, -0.2, 0.0};
    CHECK_THROWS_WITH(validate_config(bad), "bad task weights");
    bad = TrainConfig{};
    bad.batch_size = 0;
    CHECK_THROWS_WITH(validate_config(bad), "bad train config");
}

TEST_CASE("dataset index links each beat to its in-record predecessor") {
    BeatDataset ds;
    auto add = [&](const char* rec, int k) {
        Heartbeat b;
        b.samples = {0.1, 0.2};
        b.record_id = rec;
        b.beat_index = k;
        ds.beats.push_back(b);
    };
    add("a", 0);  // 0
    add("b", 0);  // 1
    add("a", 1);  // 2
    add("b", 1);  // 3
    add("a", 2);  // 4
    add("c", 5);  // 5: no predecessor (index gap)

    const DataIndex idx = build_index(ds);
    CHECK(idx.prev == std::vector<long>{-1, -1, 0, 1, 2, -1});
    CHECK(idx.forecastable == std::vector<std::size_t>{2, 3, 4});
}

TEST_CASE("batch assembly follows the published substream contract exactly") {
    const BeatDataset data = make_toy_dataset(6, 3, 21, 64);
    const DataIndex idx = build_index(data);
    const TrainConfig tc = tiny_train(33);
    const Engine eng = tiny_engine(tc);
    const NoiseSchedule& sched = eng.schedule();

    for (long step : {1L, 2L, 9L}) {
        const auto batch = eng.prepare_batch(idx, step, tc);
        REQUIRE(batch.size() == 4);

        Rng step_rng(substream_seed(tc.seed, static_cast<std::uint64_t>(step), ~0ULL));
        const TaskKind task = oracle_task(tc.task_weights, step_rng);
        for (int e = 0; e < 4; ++e) {
            const PreparedElement& el = batch[static_cast<std::size_t>(e)];
            CHECK(el.task == task);

            Rng rng(substream_seed(tc.seed, static_cast<std::uint64_t>(step),
                                   static_cast<std::uint64_t>(e)));
            std::size_t bi;
            const Heartbeat* ctx;
            if (task == TaskKind::Forecasting) {
                bi = idx.forecastable[rng.uniform_index(idx.forecastable.size())];
                ctx = &data.beats[static_cast<std::size_t>(idx.prev[bi])];
            } else {
                bi = rng.uniform_index(data.beats.size());
                ctx = &data.beats[bi];
            }
            CHECK(el.target == &data.beats[bi]);
            CHECK(el.context == ctx);

            const int t = static_cast<int>(1 + rng.uniform_index(10));
            CHECK(el.t == t);

            const Mask want = build_mask(task, el.target->length(), std::nullopt,
                                         task == TaskKind::Imputation ? &rng : nullptr, tc.gap);
            CHECK(el.mask.bits == want.bits);
            CHECK(el.mask.gap == want.gap);

            const Spectrogram x0 = stft(el.target->samples, tiny_spectral());
            CHECK(el.x0.grid.v == x0.grid.v);
            Tensor3 eps(x0.grid.c, x0.grid.h, x0.grid.w);
            for (double& v : eps.v) v = rng.normal();
            CHECK(el.eps.v == eps.v);
            CHECK(el.st.grid.v == q_sample(x0, t, eps, sched).grid.v);
        }
    }

    // repeat call: bitwise identical
    const auto a = eng.prepare_batch(idx, 3, tc);
    const auto b = eng.prepare_batch(idx, 3, tc);
    for (std::size_t e = 0; e < a.size(); ++e) {
        CHECK(a[e].eps.v == b[e].eps.v);
        CHECK(a[e].t == b[e].t);
        CHECK(a[e].target == b[e].target);
    }
}

TEST_CASE("batch assembly failure modes") {
    const TrainConfig tc = tiny_train();
    const Engine eng = tiny_engine(tc);
    DataIndex empty;
    CHECK_THROWS_WITH(eng.prepare_batch(empty, 1, tc), "no training data");

    // single-beat records: nothing can be forecast
    const BeatDataset singles = make_toy_dataset(4, 1, 3, 64);
    const DataIndex idx = build_index(singles);
    CHECK(idx.forecastable.empty());
    TrainConfig fc = tc;
    fc.task_weights = {0.0, 0.0, 1.0};
    CHECK_THROWS_WITH(eng.prepare_batch(idx, 1, fc), "no forecastable beats");
}

TEST_CASE("repeated training steps on one batch drive its loss down") {
    const BeatDataset data = make_toy_dataset(6, 3, 5, 64);
    const DataIndex idx = build_index(data);
    TrainConfig tc = tiny_train(2);
    tc.learning_rate = 1e-2;
    const Engine eng = tiny_engine(tc);

    // scan for one batch per task kind
    std::vector<PreparedElement> gen_batch, imp_batch;
    for (long step = 1; step < 200 && (gen_batch.empty() || imp_batch.empty()); ++step) {
        auto batch = eng.prepare_batch(idx, step, tc);
        if (batch.front().task == TaskKind::Generation && gen_batch.empty())
            gen_batch = std::move(batch);
        else if (batch.front().task == TaskKind::Imputation && imp_batch.empty())
            imp_batch = std::move(batch);
    }
    REQUIRE(!gen_batch.empty());
    REQUIRE(!imp_batch.empty());

    DenoiserParams params = eng.denoiser().init_params(2);
    Engine mutable_eng = tiny_engine(tc);
    AdamState adam;
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 80; ++i) {
        const auto r = mutable_eng.training_step(gen_batch, params, adam, tc);
        CHECK(r.task == TaskKind::Generation);
        CHECK(r.loss_mse == 0.0);  // no signal-domain term for generation
        CHECK(r.loss_total == r.loss_diff);
        if (i == 0) first = r.loss_total;
        last = r.loss_total;
    }
    CHECK(adam.t == 80);
    CHECK(last < 0.6 * first);

    // conditioned task: auxiliary term appears and the weighting is honored
    const auto r = mutable_eng.training_step(imp_batch, params, adam, tc);
    CHECK(r.task == TaskKind::Imputation);
    CHECK(r.loss_mse > 0.0);
    CHECK(r.loss_total == doctest::Approx(r.loss_diff + tc.aux_weight * r.loss_mse).epsilon(1e-12));

    CHECK_THROWS_WITH(mutable_eng.training_step({}, params, adam, tc), "no training data");
}

TEST_CASE("reverse chain inverts a recorded forward chain step by step") {
    for (int T : {1, 5, 10}) {
        const NoiseSchedule sched = make_schedule(T, 1e-4, 0.2);
        const Engine eng(tiny_model(), tiny_spectral(), sched);

        Rng rng(static_cast<std::uint64_t>(400 + T));
        std::vector<double> beat(64);
        for (double& v : beat) v = rng.uniform();
        const Spectrogram x0 = stft(beat, tiny_spectral());

        // stepwise forward: S_t = sqrt(alpha_t) S_{t-1} + sqrt(beta_t) eps_t
        std::vector<Spectrogram> chain(static_cast<std::size_t>(T) + 1, x0);
        for (int t = 1; t <= T; ++t) {
            const Spectrogram& prev = chain[static_cast<std::size_t>(t - 1)];
            Spectrogram cur = prev;
            const double sa = std::sqrt(sched.alpha(t)), sb = std::sqrt(sched.beta(t));
            for (std::size_t i = 0; i < cur.grid.v.size(); ++i)
                cur.grid.v[i] = sa * prev.grid.v[i] + sb * rng.normal();
            chain[static_cast<std::size_t>(t)] = std::move(cur);
        }

        // the noise value that makes the posterior mean retrace the chain
        std::vector<int> seen_ts;
        const Engine::EpsFn eps_fn = [&](const Spectrogram& st, int t) {
            seen_ts.push_back(t);
            const Spectrogram& prev = chain[static_cast<std::size_t>(t - 1)];
            const double sa = std::sqrt(sched.alpha(t));
            const double scale = std::sqrt(1.0 - sched.alpha_bar(t)) / sched.beta(t);
            Tensor3 eps(st.grid.c, st.grid.h, st.grid.w);
            for (std::size_t i = 0; i < eps.v.size(); ++i)
                eps.v[i] = (st.grid.v[i] - sa * prev.grid.v[i]) * scale;
            return eps;
        };

        const Spectrogram back = eng.run_reverse_chain(chain[static_cast<std::size_t>(T)],
                                                       eps_fn, nullptr);
        double worst = 0.0;
        for (std::size_t i = 0; i < back.grid.v.size(); ++i)
            worst = std::max(worst, std::abs(back.grid.v[i] - x0.grid.v[i]));
        CHECK(worst < 1e-9);

        std::vector<int> want_ts;
        for (int t = T; t >= 1; --t) want_ts.push_back(t);
        CHECK(seen_ts == want_ts);
    }
}

TEST_CASE("stochastic reverse chain equals a manual replay of its draws") {
    const NoiseSchedule sched = make_schedule(8, 1e-3, 0.15);
    const Engine eng(tiny_model(), tiny_spectral(), sched);
    Rng init(71);
    Spectrogram sT = zero_spectrogram(tiny_spectral(), 64);
    for (double& v : sT.grid.v) v = init.normal();

    const Engine::EpsFn eps_fn = [&](const Spectrogram& st, int t) {
        Tensor3 eps(st.grid.c, st.grid.h, st.grid.w);
        for (std::size_t i = 0; i < eps.v.size(); ++i)
            eps.v[i] = 0.3 * st.grid.v[i] + 0.01 * static_cast<double>(t);
        return eps;
    };

    Rng a(99);
    const Spectrogram via_engine = eng.run_reverse_chain(sT, eps_fn, &a);

    Rng b(99);
    Spectrogram s = sT;
    for (int t = 8; t >= 1; --t) {
        const Tensor3 eps_hat = eps_fn(s, t);
        Tensor3 z;
        if (t > 1) {
            z = Tensor3(s.grid.c, s.grid.h, s.grid.w);
            for (double& v : z.v) v = b.normal();
        }
        s = posterior_step(s, eps_hat, t, sched, z);
    }
    CHECK(via_engine.grid.v == s.grid.v);
}

TEST_CASE("synthesis: deterministic, bounded, and seed-sensitive") {
    const TrainConfig tc = tiny_train();
    const Engine eng = tiny_engine(tc);
    const DenoiserParams params = eng.denoiser().init_params(4);

    const Heartbeat g1 = eng.generate(BeatClass::Ventricular, params, 42, 64);
    const Heartbeat g2 = eng.generate(BeatClass::Ventricular, params, 42, 64);
    const Heartbeat g3 = eng.generate(BeatClass::Ventricular, params, 43, 64);
    CHECK(g1.samples == g2.samples);
    CHECK(g1.samples != g3.samples);
    CHECK(g1.label == BeatClass::Ventricular);
    CHECK(g1.length() == 64);
    for (double v : g1.samples) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("generation replays as: S_T draw, then one z grid per step above 1") {
    const TrainConfig tc = tiny_train();
    const Engine eng = tiny_engine(tc);
    const DenoiserParams params = eng.denoiser().init_params(4);
    const std::uint64_t seed = 1234;
    const int L = 64;

    const Mask mask = build_mask(TaskKind::Generation, L);
    ConditionBundle bundle = eng.denoiser().make_bundle(
        params, BeatClass::Normal, TaskKind::Generation, eng.schedule().T, mask,
        std::vector<double>(static_cast<std::size_t>(L), 0.0));

    Rng rng(seed);
    Spectrogram sT = zero_spectrogram(tiny_spectral(), L);
    for (double& v : sT.grid.v) v = rng.normal();

    const Engine::EpsFn eps_fn = [&](const Spectrogram& st, int t) {
        bundle.e_T = timestep_embedding(t, 4);
        return eng.denoiser().denoise(eng.denoiser().assemble_input(st, bundle, params), params);
    };
    const Spectrogram s0 = eng.run_reverse_chain(sT, eps_fn, &rng);
    std::vector<double> want = istft(s0);
    for (double& v : want) v = std::clamp(v, 0.0, 1.0);

    const Heartbeat got = eng.generate(BeatClass::Normal, params, seed, L);
    CHECK(got.samples == want);
}

TEST_CASE("imputation pastes the observed region back verbatim") {
    const TrainConfig tc = tiny_train();
    const Engine eng = tiny_engine(tc);
    const DenoiserParams params = eng.denoiser().init_params(4);

    const BeatDataset data = make_toy_dataset(2, 1, 9, 64);
    const Heartbeat& input = data.beats.front();
    const Mask mask = build_mask(TaskKind::Imputation, 64, std::make_pair(20, 39));

    const Heartbeat out = eng.impute(input, mask, input.label, params, 7);
    REQUIRE(out.length() == 64);
    int changed_in_gap = 0;
    for (int i = 0; i < 64; ++i) {
        if (i >= 20 && i <= 39) {
            if (out.samples[static_cast<std::size_t>(i)] != input.samples[static_cast<std::size_t>(i)])
                ++changed_in_gap;
        } else {
            CHECK(out.samples[static_cast<std::size_t>(i)] ==
                  input.samples[static_cast<std::size_t>(i)]);
        }
    }
    CHECK(changed_in_gap > 0);

    SUBCASE("pasting can be disabled") {
        SynthesisRequest req;
        req.task = TaskKind::Imputation;
        req.label = input.label;
        req.context = input;
        req.mask = mask;
        req.seed = 7;
        req.paste_observed = false;
        const Heartbeat raw = eng.synthesize(req, params);
        int outside_diff = 0;
        for (int i = 0; i < 20; ++i)
            if (raw.samples[static_cast<std::size_t>(i)] !=
                input.samples[static_cast<std::size_t>(i)])
                ++outside_diff;
        CHECK(outside_diff > 0);
    }
}

TEST_CASE("synthesis request validation") {
    const TrainConfig tc = tiny_train();
    const Engine eng = tiny_engine(tc);
    const DenoiserParams params = eng.denoiser().init_params(4);
    const BeatDataset data = make_toy_dataset(2, 1, 9, 64);

    SynthesisRequest req;
    req.task = TaskKind::Imputation;
    req.context = data.beats.front();
    CHECK_THROWS_WITH(eng.synthesize(req, params), "incomplete request");

    req.mask = build_mask(TaskKind::Generation, 64);
    CHECK_THROWS_WITH(eng.synthesize(req, params), "mask task mismatch");

    req.mask = build_mask(TaskKind::Imputation, 32, std::make_pair(4, 9));
    CHECK_THROWS_WITH(eng.synthesize(req, params), "bad mask length");

    SynthesisRequest fore;
    fore.task = TaskKind::Forecasting;
    CHECK_THROWS_WITH(eng.synthesize(fore, params), "incomplete request");

    fore.context = data.beats.front();
    const Heartbeat next = eng.synthesize(fore, params);
    CHECK(next.length() == 64);  // length follows the context
}

TEST_CASE("full training loop: logs, checkpoints, determinism") {
    const BeatDataset data = make_toy_dataset(4, 2, 13, 64);  // 12 beats
    TrainConfig tc = tiny_train(6);
    tc.batch_size = 5;
    tc.epochs = 2;          // ceil(12/5) = 3 steps per epoch -> 6 total
    tc.checkpoint_every = 2;
    const std::string dir = temp_dir("hbsynth_test_train");
    tc.checkpoint_dir = dir;

    Engine eng = tiny_engine(tc);
    auto [params, log] = eng.train(data, tc);
    REQUIRE(log.rows.size() == 6);
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
        CHECK(log.rows[i].step == static_cast<long>(i + 1));
        CHECK(log.rows[i].seconds == 0.0);  // timing off by default
        CHECK(std::isfinite(log.rows[i].loss_total));
    }

    CHECK(std::filesystem::exists(dir + "/ckpt_step000002.ckpt"));
    CHECK(std::filesystem::exists(dir + "/ckpt_step000004.ckpt"));
    CHECK(!std::filesystem::exists(dir + "/ckpt_step000006.ckpt"));  // final step: only ckpt_final
    CHECK(std::filesystem::exists(dir + "/ckpt_final.ckpt"));

    const Checkpoint ck = load_checkpoint(dir + "/ckpt_final.ckpt");
    CHECK(ck.seed == 6);
    CHECK(ck.schedule.T == 10);
    REQUIRE(ck.params.tensors.size() == params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
        CHECK(ck.params.tensors[i].v == params.tensors[i].v);

    // a fresh engine retrains to the same weights and losses
    Engine eng2 = tiny_engine(tc);
    TrainConfig tc2 = tc;
    tc2.checkpoint_dir.clear();
    auto [params2, log2] = eng2.train(data, tc2);
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
        CHECK(params2.tensors[i].v == params.tensors[i].v);
    REQUIRE(log2.rows.size() == 6);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(log2.rows[i].loss_total == log.rows[i].loss_total);

    // the stored model behaves identically after a round trip
    const Engine resumed = Engine::from_checkpoint(ck);
    const Heartbeat a = eng.generate(BeatClass::Normal, params, 5, 64);
    const Heartbeat b = resumed.generate(BeatClass::Normal, ck.params, 5, 64);
    CHECK(a.samples == b.samples);

    std::filesystem::remove_all(dir);
}

TEST_CASE("training refuses datasets without forecastable beats") {
    const BeatDataset singles = make_toy_dataset(3, 1, 2, 64);
    TrainConfig tc = tiny_train();
    Engine eng = tiny_engine(tc);
    CHECK_THROWS_WITH(eng.train(singles, tc), "no forecastable beats");
    CHECK_THROWS_WITH(eng.train(BeatDataset{}, tc), "no training data");
}

TEST_CASE("training log CSV format") {
    TrainLog log;
    log.rows.push_back({1, TaskKind::Generation, 1.5, 0.0, 1.5, 0.0});
    log.rows.push_back({2, TaskKind::Imputation, 1.25, 0.5, 1.75, 0.0});
    const std::string path =
        (std::filesystem::temp_directory_path() / "hbsynth_test_log.csv").string();
    write_train_log_csv(log, path);
    std::ifstream in(path);
    std::string line;
    REQUIRE(static_cast<bool>(std::getline(in, line)));
    CHECK(line == "step,task,loss_diff,loss_mse,loss_total,seconds");
    REQUIRE(static_cast<bool>(std::getline(in, line)));
    CHECK(line == "1,generation,1.5,0,1.5,0");
    REQUIRE(static_cast<bool>(std::getline(in, line)));
    CHECK(line == "2,imputation,1.25,0.5,1.75,0");
    std::remove(path.c_str());
}
