#include "hbsynth/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace hbsynth {
namespace {

using nlohmann::json;

struct Stage {
    std::vector<double> pre;   // conv output before ReLU
    std::vector<double> act;   // after ReLU
    std::vector<std::int32_t> argmax;
    std::vector<double> pooled;
    int len = 0, pooled_len = 0, ch = 0;
};

struct ForwardCache {
    std::vector<double> input;
    std::vector<Stage> stages;
    std::vector<double> gap;      // global average pool
    std::vector<double> hidden_pre, hidden;
    std::vector<double> logits;
};

void conv1d(const std::vector<double>& x, int in_c, int len, const ParamTensor& w,
            const ParamTensor& b, std::vector<double>& y) {
    const int out_c = w.shape[0], k = w.shape[2];
    const int pad = k / 2;
    y.assign(static_cast<std::size_t>(out_c) * len, 0.0);
    for (int oc = 0; oc < out_c; ++oc) {
        double* yp = y.data() + static_cast<std::size_t>(oc) * len;
        for (int i = 0; i < len; ++i) yp[i] = b.v[static_cast<std::size_t>(oc)];
        for (int ic = 0; ic < in_c; ++ic) {
            const double* xp = x.data() + static_cast<std::size_t>(ic) * len;
            const double* wp = &w.v[static_cast<std::size_t>((oc * in_c + ic) * k)];
            for (int j = 0; j < k; ++j) {
                const double wv = wp[j];
                const int lo = std::max(0, pad - j), hi = std::min(len, len + pad - j);
                for (int i = lo; i < hi; ++i) yp[i] += wv * xp[i - pad + j];
            }
        }
    }
}

void conv1d_backward(const std::vector<double>& dy, const std::vector<double>& x, int in_c,
                     int len, const ParamTensor& w, ParamTensor& dw, ParamTensor& db,
                     std::vector<double>& dx) {
    const int out_c = w.shape[0], k = w.shape[2];
    const int pad = k / 2;
    dx.assign(static_cast<std::size_t>(in_c) * len, 0.0);
    for (int oc = 0; oc < out_c; ++oc) {
        const double* dyp = dy.data() + static_cast<std::size_t>(oc) * len;
        double s = 0.0;
        for (int i = 0; i < len; ++i) s += dyp[i];
        db.v[static_cast<std::size_t>(oc)] += s;
        for (int ic = 0; ic < in_c; ++ic) {
            const double* xp = x.data() + static_cast<std::size_t>(ic) * len;
            double* dxp = dx.data() + static_cast<std::size_t>(ic) * len;
            const double* wp = &w.v[static_cast<std::size_t>((oc * in_c + ic) * k)];
            double* dwp = &dw.v[static_cast<std::size_t>((oc * in_c + ic) * k)];
            for (int j = 0; j < k; ++j) {
                double g = 0.0;
                const int lo = std::max(0, pad - j), hi = std::min(len, len + pad - j);
                for (int i = lo; i < hi; ++i) {
                    g += dyp[i] * xp[i - pad + j];
                    dxp[i - pad + j] += wp[j] * dyp[i];
                }
                dwp[j] += g;
            }
        }
    }
}

ForwardCache classifier_forward(const Classifier& clf, const std::vector<double>& x) {
    require(static_cast<int>(x.size()) == clf.input_length, "length mismatch");
    const ClassifierConfig& cfg = clf.config;
    ForwardCache fc;
    fc.input = x;

    std::vector<double> cur = x;
    int len = clf.input_length;
    int in_c = 1;
    fc.stages.resize(cfg.channels.size());
    for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
        Stage& st = fc.stages[s];
        st.len = len;
        st.ch = cfg.channels[s];
        const ParamTensor& w = clf.params.at("conv" + std::to_string(s) + ".w");
        const ParamTensor& b = clf.params.at("conv" + std::to_string(s) + ".b");
        conv1d(cur, in_c, len, w, b, st.pre);
        st.act.resize(st.pre.size());
        for (std::size_t i = 0; i < st.pre.size(); ++i) st.act[i] = std::max(0.0, st.pre[i]);
        // 2x ceil-mode max pooling
        st.pooled_len = (len + 1) / 2;
        st.pooled.assign(static_cast<std::size_t>(st.ch) * st.pooled_len, 0.0);
        st.argmax.assign(st.pooled.size(), 0);
        for (int c = 0; c < st.ch; ++c) {
            const double* ap = st.act.data() + static_cast<std::size_t>(c) * len;
            double* pp = st.pooled.data() + static_cast<std::size_t>(c) * st.pooled_len;
            std::int32_t* am = st.argmax.data() + static_cast<std::size_t>(c) * st.pooled_len;
            for (int i = 0; i < st.pooled_len; ++i) {
                const int i0 = 2 * i;
                if (i0 + 1 < len && ap[i0 + 1] > ap[i0]) {
                    pp[i] = ap[i0 + 1];
                    am[i] = static_cast<std::int32_t>(i0 + 1);
                } else {
                    pp[i] = ap[i0];
                    am[i] = static_cast<std::int32_t>(i0);
                }
            }
        }
        cur = st.pooled;
        len = st.pooled_len;
        in_c = st.ch;
    }

    // global average pool over time
    fc.gap.assign(static_cast<std::size_t>(in_c), 0.0);
    for (int c = 0; c < in_c; ++c) {
        const double* p = cur.data() + static_cast<std::size_t>(c) * len;
        double s = 0.0;
        for (int i = 0; i < len; ++i) s += p[i];
        fc.gap[static_cast<std::size_t>(c)] = s / static_cast<double>(len);
    }

    const ParamTensor& w1 = clf.params.at("fc1.w");
    const ParamTensor& b1 = clf.params.at("fc1.b");
    fc.hidden_pre.assign(static_cast<std::size_t>(cfg.hidden_dim), 0.0);
    for (int h = 0; h < cfg.hidden_dim; ++h) {
        double s = b1.v[static_cast<std::size_t>(h)];
        for (int c = 0; c < in_c; ++c)
            s += w1.v[static_cast<std::size_t>(h * in_c + c)] * fc.gap[static_cast<std::size_t>(c)];
        fc.hidden_pre[static_cast<std::size_t>(h)] = s;
    }
    fc.hidden.resize(fc.hidden_pre.size());
    for (std::size_t i = 0; i < fc.hidden.size(); ++i)
        fc.hidden[i] = std::max(0.0, fc.hidden_pre[i]);

    const ParamTensor& wh = clf.params.at("head.w");
    const ParamTensor& bh = clf.params.at("head.b");
    const int n_out = wh.shape[0];
    fc.logits.assign(static_cast<std::size_t>(n_out), 0.0);
    for (int o = 0; o < n_out; ++o) {
        double s = bh.v[static_cast<std::size_t>(o)];
        for (int h = 0; h < cfg.hidden_dim; ++h)
            s += wh.v[static_cast<std::size_t>(o * cfg.hidden_dim + h)] *
                 fc.hidden[static_cast<std::size_t>(h)];
        fc.logits[static_cast<std::size_t>(o)] = s;
    }
    return fc;
}

void classifier_backward(const Classifier& clf, const ForwardCache& fc,
                         const std::vector<double>& d_logits, DenoiserParams& grads) {
    const ClassifierConfig& cfg = clf.config;
    const int n_out = static_cast<int>(d_logits.size());
    const int in_c = cfg.channels.back();

    const ParamTensor& wh = clf.params.at("head.w");
    ParamTensor& dwh = grads.at("head.w");
    ParamTensor& dbh = grads.at("head.b");
    std::vector<double> d_hidden(static_cast<std::size_t>(cfg.hidden_dim), 0.0);
    for (int o = 0; o < n_out; ++o) {
        const double g = d_logits[static_cast<std::size_t>(o)];
        dbh.v[static_cast<std::size_t>(o)] += g;
        for (int h = 0; h < cfg.hidden_dim; ++h) {
            dwh.v[static_cast<std::size_t>(o * cfg.hidden_dim + h)] +=
                g * fc.hidden[static_cast<std::size_t>(h)];
            d_hidden[static_cast<std::size_t>(h)] +=
                g * wh.v[static_cast<std::size_t>(o * cfg.hidden_dim + h)];
        }
    }
    for (int h = 0; h < cfg.hidden_dim; ++h)
        if (fc.hidden_pre[static_cast<std::size_t>(h)] <= 0.0)
            d_hidden[static_cast<std::size_t>(h)] = 0.0;

    const ParamTensor& w1 = clf.params.at("fc1.w");
    ParamTensor& dw1 = grads.at("fc1.w");
    ParamTensor& db1 = grads.at("fc1.b");
    std::vector<double> d_gap(static_cast<std::size_t>(in_c), 0.0);
    for (int h = 0; h < cfg.hidden_dim; ++h) {
        const double g = d_hidden[static_cast<std::size_t>(h)];
        if (g == 0.0) continue;
        db1.v[static_cast<std::size_t>(h)] += g;
        for (int c = 0; c < in_c; ++c) {
            dw1.v[static_cast<std::size_t>(h * in_c + c)] +=
                g * fc.gap[static_cast<std::size_t>(c)];
            d_gap[static_cast<std::size_t>(c)] += g * w1.v[static_cast<std::size_t>(h * in_c + c)];
        }
    }

    // back through global average pooling into the last stage
    const Stage& last = fc.stages.back();
    std::vector<double> d_cur(static_cast<std::size_t>(in_c) * last.pooled_len, 0.0);
    for (int c = 0; c < in_c; ++c) {
        const double g = d_gap[static_cast<std::size_t>(c)] / static_cast<double>(last.pooled_len);
        double* p = d_cur.data() + static_cast<std::size_t>(c) * last.pooled_len;
        for (int i = 0; i < last.pooled_len; ++i) p[i] = g;
    }

    for (int s = static_cast<int>(fc.stages.size()) - 1; s >= 0; --s) {
        const Stage& st = fc.stages[static_cast<std::size_t>(s)];
        // unpool
        std::vector<double> d_act(static_cast<std::size_t>(st.ch) * st.len, 0.0);
        for (int c = 0; c < st.ch; ++c) {
            const double* dp = d_cur.data() + static_cast<std::size_t>(c) * st.pooled_len;
            const std::int32_t* am = st.argmax.data() + static_cast<std::size_t>(c) * st.pooled_len;
            double* da = d_act.data() + static_cast<std::size_t>(c) * st.len;
            for (int i = 0; i < st.pooled_len; ++i) da[am[i]] += dp[i];
        }
        // ReLU
        for (std::size_t i = 0; i < d_act.size(); ++i)
            if (st.pre[i] <= 0.0) d_act[i] = 0.0;
        // conv
        const std::vector<double>& x_in =
            s == 0 ? fc.input : fc.stages[static_cast<std::size_t>(s - 1)].pooled;
        const int cin = s == 0 ? 1 : fc.stages[static_cast<std::size_t>(s - 1)].ch;
        const ParamTensor& w = clf.params.at("conv" + std::to_string(s) + ".w");
        ParamTensor& dw = grads.at("conv" + std::to_string(s) + ".w");
        ParamTensor& db = grads.at("conv" + std::to_string(s) + ".b");
        std::vector<double> dx;
        conv1d_backward(d_act, x_in, cin, st.len, w, dw, db, dx);
        d_cur = std::move(dx);
    }
}

DenoiserParams classifier_layout(const ClassifierConfig& cfg, int n_classes,
                                 std::uint64_t seed) {
    DenoiserParams p;
    Rng rng(mix_seed(seed));
    auto add = [&](const std::string& name, std::vector<int> shape, double std_dev) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        ParamTensor t{name, std::move(shape), std::vector<double>(n, 0.0)};
        if (std_dev > 0.0)
            for (double& v : t.v) v = std_dev * rng.normal();
        p.tensors.push_back(std::move(t));
    };
    int in_c = 1;
    for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
        const int out_c = cfg.channels[s], k = cfg.kernels[s];
        add("conv" + std::to_string(s) + ".w", {out_c, in_c, k},
            1.0 / std::sqrt(static_cast<double>(in_c * k)));
        add("conv" + std::to_string(s) + ".b", {out_c}, 0.0);
        in_c = out_c;
    }
    add("fc1.w", {cfg.hidden_dim, in_c}, 1.0 / std::sqrt(static_cast<double>(in_c)));
    add("fc1.b", {cfg.hidden_dim}, 0.0);
    add("head.w", {n_classes, cfg.hidden_dim}, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)));
    add("head.b", {n_classes}, 0.0);
    return p;
}

int class_position(const std::vector<char>& classes, char code) {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == code) return static_cast<int>(i);
    return -1;
}

}  // namespace

void validate_config(const ClassifierConfig& cfg) {
    const bool ok = !cfg.channels.empty() && cfg.channels.size() == cfg.kernels.size() &&
                    std::all_of(cfg.channels.begin(), cfg.channels.end(),
                                [](int c) { return c >= 1; }) &&
                    std::all_of(cfg.kernels.begin(), cfg.kernels.end(),
                                [](int k) { return k >= 1 && k % 2 == 1; }) &&
                    cfg.hidden_dim >= 1 && cfg.learning_rate > 0.0 && cfg.epochs >= 1 &&
                    cfg.batch_size >= 1;
    require(ok, "bad classifier config");
}

Classifier train_classifier(const BeatDataset& train, const ClassifierConfig& cfg) {
    validate_config(cfg);
    require(!train.beats.empty(), "no training data");
    std::vector<char> classes;
    for (const Heartbeat& b : train.beats) {
        const char code = beat_class_char(b.label);
        if (class_position(classes, code) < 0) classes.push_back(code);
    }
    std::sort(classes.begin(), classes.end());
    require(classes.size() >= 2, "degenerate training set");
    const int L = train.beats.front().length();
    for (const Heartbeat& b : train.beats) require(b.length() == L, "length mismatch");

    Classifier clf;
    clf.config = cfg;
    clf.input_length = L;
    clf.classes = classes;
    clf.params = classifier_layout(cfg, static_cast<int>(classes.size()), cfg.seed);

    DenoiserParams m = zeros_like(clf.params), v = zeros_like(clf.params);
    long adam_t = 0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

    const std::size_t n = train.beats.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(substream_seed(cfg.seed, static_cast<std::uint64_t>(epoch), ~0ULL));
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            DenoiserParams grads = zeros_like(clf.params);
            const double B = static_cast<double>(stop - start);
            for (std::size_t bi = start; bi < stop; ++bi) {
                const Heartbeat& beat = train.beats[order[bi]];
                const ForwardCache fc = classifier_forward(clf, beat.samples);
                // softmax cross-entropy
                double mx = fc.logits[0];
                for (double l : fc.logits) mx = std::max(mx, l);
                double z = 0.0;
                std::vector<double> d_logits(fc.logits.size());
                for (std::size_t o = 0; o < fc.logits.size(); ++o) {
                    d_logits[o] = std::exp(fc.logits[o] - mx);
                    z += d_logits[o];
                }
                const int label = class_position(classes, beat_class_char(beat.label));
                for (std::size_t o = 0; o < d_logits.size(); ++o) {
                    d_logits[o] = d_logits[o] / z;
                    if (static_cast<int>(o) == label) d_logits[o] -= 1.0;
                    d_logits[o] /= B;
                }
                classifier_backward(clf, fc, d_logits, grads);
            }
            ++adam_t;
            const double corr1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
            const double corr2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
            for (std::size_t ti = 0; ti < clf.params.tensors.size(); ++ti) {
                auto& pv = clf.params.tensors[ti].v;
                auto& gv = grads.tensors[ti].v;
                auto& mv = m.tensors[ti].v;
                auto& vv = v.tensors[ti].v;
                for (std::size_t i = 0; i < pv.size(); ++i) {
                    mv[i] = b1 * mv[i] + (1.0 - b1) * gv[i];
                    vv[i] = b2 * vv[i] + (1.0 - b2) * gv[i] * gv[i];
                    pv[i] -= cfg.learning_rate * (mv[i] / corr1) / (std::sqrt(vv[i] / corr2) + eps);
                }
            }
        }
    }
    return clf;
}

std::vector<double> classifier_features(const Classifier& clf, const std::vector<double>& x) {
    return classifier_forward(clf, x).hidden;
}

int classify(const Classifier& clf, const std::vector<double>& x) {
    const ForwardCache fc = classifier_forward(clf, x);
    int best = 0;
    for (std::size_t o = 1; o < fc.logits.size(); ++o)
        if (fc.logits[o] > fc.logits[static_cast<std::size_t>(best)])
            best = static_cast<int>(o);
    return best;
}

ClassificationReport evaluate_classifier(const Classifier& clf, const BeatDataset& test) {
    require(!test.beats.empty(), "empty set");
    const std::size_t k = clf.classes.size();
    ClassificationReport rep;
    rep.classes = clf.classes;
    rep.seed = clf.config.seed;
    rep.confusion.assign(k, std::vector<long>(k, 0));

    long correct = 0;
    for (const Heartbeat& b : test.beats) {
        const int truth = class_position(clf.classes, beat_class_char(b.label));
        require(truth >= 0, "class mismatch");
        const int pred = classify(clf, b.samples);
        ++rep.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)];
        if (pred == truth) ++correct;
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(test.beats.size());

    double psum = 0.0, rsum = 0.0, fsum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        long col = 0, row = 0;
        for (std::size_t i = 0; i < k; ++i) {
            col += rep.confusion[i][c];
            row += rep.confusion[c][i];
        }
        const long diag = rep.confusion[c][c];
        const double p = col > 0 ? static_cast<double>(diag) / static_cast<double>(col) : 0.0;
        const double r = row > 0 ? static_cast<double>(diag) / static_cast<double>(row) : 0.0;
        psum += p;
        rsum += r;
        fsum += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    rep.macro_precision = psum / static_cast<double>(k);
    rep.macro_recall = rsum / static_cast<double>(k);
    rep.macro_f1 = fsum / static_cast<double>(k);
    return rep;
}

AugmentResult run_settings(const BeatDataset& real_train, const BeatDataset& real_test,
                           const Engine& engine, const DenoiserParams& diffusion_params,
                           long n_synth_per_class, const ClassifierConfig& cfg) {
    require(!real_train.beats.empty(), "no training data");
    require(n_synth_per_class >= -1, "bad augmentation count");
    const int L = real_train.beats.front().length();

    AugmentResult res;
    {
        const Classifier base = train_classifier(real_train, cfg);
        res.baseline = evaluate_classifier(base, real_test);
        res.baseline.setting_tag = "real-only";
    }

    std::map<char, long> counts;
    for (const Heartbeat& b : real_train.beats) ++counts[beat_class_char(b.label)];
    long majority = 0;
    for (const auto& [code, cnt] : counts) majority = std::max(majority, cnt);

    BeatDataset augmented = real_train;
    res.added_per_class.assign(static_cast<std::size_t>(kNumClasses), 0);
    for (int ci = 0; ci < kNumClasses; ++ci) {
        const BeatClass c = kAllClasses[ci];
        const char code = beat_class_char(c);
        if (counts.find(code) == counts.end()) continue;  // class absent from real data
        const long want = n_synth_per_class >= 0 ? n_synth_per_class : majority - counts[code];
        for (long j = 0; j < want; ++j) {
            Heartbeat b = engine.generate(
                c, diffusion_params,
                substream_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(ci),
                               static_cast<std::uint64_t>(j)),
                L);
            char id[32];
            std::snprintf(id, sizeof(id), "synth%c", code);
            b.record_id = id;
            b.beat_index = static_cast<int>(j);
            augmented.beats.push_back(std::move(b));
        }
        res.added_per_class[static_cast<std::size_t>(ci)] = want;
        if (want > 0) augmented.provenance[std::string("synth") + code] = "diffusion";
    }

    const Classifier aug = train_classifier(augmented, cfg);
    res.augmented = evaluate_classifier(aug, real_test);
    res.augmented.setting_tag = "real+synthetic";
    return res;
}

namespace {

void settings_row(std::string& out, const ClassificationReport& r) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%llu\n", r.setting_tag.c_str(),
                  r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1,
                  static_cast<unsigned long long>(r.seed));
    out += buf;
}

}  // namespace

void write_settings_csv(const AugmentResult& r, const std::string& path) {
    std::string out = "setting,accuracy,macro_precision,macro_recall,macro_f1,seed\n";
    settings_row(out, r.baseline);
    settings_row(out, r.augmented);
    std::ofstream f(path);
    require(f.good(), "cannot open " + path);
    f << out;
    require(f.good(), "write failed: " + path);
}

std::string format_settings(const AugmentResult& r) {
    std::string out;
    char buf[192];
    for (const ClassificationReport* rep : {&r.baseline, &r.augmented}) {
        std::snprintf(buf, sizeof(buf),
                      "%-14s acc %.4f  precision %.4f  recall %.4f  F1 %.4f\n",
                      rep->setting_tag.c_str(), rep->accuracy, rep->macro_precision,
                      rep->macro_recall, rep->macro_f1);
        out += buf;
        out += "  confusion (rows = truth):\n";
        for (std::size_t i = 0; i < rep->classes.size(); ++i) {
            out += "    ";
            out += rep->classes[i];
            for (std::size_t j = 0; j < rep->classes.size(); ++j) {
                std::snprintf(buf, sizeof(buf), " %6ld", rep->confusion[i][j]);
                out += buf;
            }
            out += "\n";
        }
    }
    std::snprintf(buf, sizeof(buf), "synthetic beats added per class:");
    out += buf;
    for (int ci = 0; ci < kNumClasses; ++ci) {
        std::snprintf(buf, sizeof(buf), " %c=%ld", beat_class_char(kAllClasses[ci]),
                      r.added_per_class[static_cast<std::size_t>(ci)]);
        out += buf;
    }
    out += "\n";
    return out;
}

void save_classifier(const std::string& path, const Classifier& clf) {
    json manifest;
    manifest["format_version"] = 1;
    manifest["channels"] = clf.config.channels;
    manifest["kernels"] = clf.config.kernels;
    manifest["hidden_dim"] = clf.config.hidden_dim;
    manifest["learning_rate"] = clf.config.learning_rate;
    manifest["epochs"] = clf.config.epochs;
    manifest["batch_size"] = clf.config.batch_size;
    manifest["seed"] = clf.config.seed;
    manifest["input_length"] = clf.input_length;
    manifest["classes"] = std::string(clf.classes.begin(), clf.classes.end());
    json params = json::array();
    for (const ParamTensor& t : clf.params.tensors)
        params.push_back({{"name", t.name}, {"shape", t.shape}});
    manifest["params"] = params;

    const std::string text = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open " + path);
    const char magic[8] = {'H', 'B', 'S', 'C', 'L', 'S', 'F', '\n'};
    out.write(magic, 8);
    std::uint64_t len = text.size();
    char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<char>((len >> (8 * i)) & 0xFF);
    out.write(lenb, 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const ParamTensor& t : clf.params.tensors)
        out.write(reinterpret_cast<const char*>(t.v.data()),
                  static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    require(out.good(), "write failed: " + path);
}

Classifier load_classifier(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    const char expect[8] = {'H', 'B', 'S', 'C', 'L', 'S', 'F', '\n'};
    require(in.good() && std::memcmp(magic, expect, 8) == 0, "bad classifier file");
    char lenb[8];
    in.read(lenb, 8);
    require(in.good(), "bad classifier file");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i)
        len |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenb[i])) << (8 * i);
    require(len > 0 && len < (1ULL << 28), "bad classifier file");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    require(in.good(), "bad classifier file");

    Classifier clf;
    try {
        const json manifest = json::parse(text);
        require(manifest.at("format_version").get<int>() == 1, "bad classifier file");
        clf.config.channels = manifest.at("channels").get<std::vector<int>>();
        clf.config.kernels = manifest.at("kernels").get<std::vector<int>>();
        clf.config.hidden_dim = manifest.at("hidden_dim").get<int>();
        clf.config.learning_rate = manifest.at("learning_rate").get<double>();
        clf.config.epochs = manifest.at("epochs").get<int>();
        clf.config.batch_size = manifest.at("batch_size").get<int>();
        clf.config.seed = manifest.at("seed").get<std::uint64_t>();
        clf.input_length = manifest.at("input_length").get<int>();
        const std::string cls = manifest.at("classes").get<std::string>();
        clf.classes.assign(cls.begin(), cls.end());
        for (const json& p : manifest.at("params")) {
            ParamTensor t;
            t.name = p.at("name").get<std::string>();
            t.shape = p.at("shape").get<std::vector<int>>();
            std::size_t n = 1;
            for (int d : t.shape) {
                require(d > 0, "bad classifier file");
                n *= static_cast<std::size_t>(d);
            }
            t.v.resize(n);
            clf.params.tensors.push_back(std::move(t));
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail("bad classifier file");
    }
    for (ParamTensor& t : clf.params.tensors) {
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        require(in.good(), "bad classifier file");
    }
    validate_config(clf.config);
    require(clf.input_length > 0 && clf.classes.size() >= 2, "bad classifier file");
    return clf;
}

}  // namespace hbsynth
