#include "hbsynth/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "hbsynth/rng.hpp"

namespace hbsynth {
namespace {

enum OpKind : int { kConv = 0, kDeconv, kSiLU, kPool, kConcat, kCrop, kNorm };

constexpr double kNormEps = 1e-5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void validate_config(const DenoiserConfig& cfg) {
    const bool ok = cfg.base_channels >= 1 && cfg.channel_mult.size() == 4 &&
                    std::all_of(cfg.channel_mult.begin(), cfg.channel_mult.end(),
                                [](int m) { return m >= 1; }) &&
                    cfg.subblocks_per_block >= 1 && cfg.convs_per_subblock >= 1 &&
                    cfg.d_emb >= 2 && cfg.d_emb % 2 == 0 && cfg.embed_planes >= 1;
    require(ok, "bad denoiser config");
}

std::size_t DenoiserParams::total_size() const {
    std::size_t n = 0;
    for (const ParamTensor& t : tensors) n += t.size();
    return n;
}

ParamTensor& DenoiserParams::at(const std::string& name) {
    for (ParamTensor& t : tensors)
        if (t.name == name) return t;
    fail("unknown parameter: " + name);
}

const ParamTensor& DenoiserParams::at(const std::string& name) const {
    for (const ParamTensor& t : tensors)
        if (t.name == name) return t;
    fail("unknown parameter: " + name);
}

bool DenoiserParams::same_layout(const DenoiserParams& other) const {
    if (tensors.size() != other.tensors.size()) return false;
    for (std::size_t i = 0; i < tensors.size(); ++i)
        if (tensors[i].name != other.tensors[i].name || tensors[i].shape != other.tensors[i].shape)
            return false;
    return true;
}

DenoiserParams zeros_like(const DenoiserParams& p) {
    DenoiserParams z;
    z.tensors.reserve(p.tensors.size());
    for (const ParamTensor& t : p.tensors)
        z.tensors.push_back({t.name, t.shape, std::vector<double>(t.size(), 0.0)});
    return z;
}

std::vector<double> timestep_embedding(long t, int d_emb) {
    require(d_emb >= 2 && d_emb % 2 == 0, "bad embedding dimension");
    const int half = d_emb / 2;
    const double denom = half > 1 ? static_cast<double>(half - 1) : 1.0;
    std::vector<double> out(static_cast<std::size_t>(d_emb));
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / denom);
        const double a = static_cast<double>(t) * freq;
        out[static_cast<std::size_t>(2 * i)] = std::sin(a);
        out[static_cast<std::size_t>(2 * i + 1)] = std::cos(a);
    }
    return out;
}

Denoiser::Denoiser(const DenoiserConfig& cfg, const SpectralConfig& spectral)
    : cfg_(cfg), spectral_(spectral) {
    validate_config(cfg_);
    validate_config(spectral_);
    for (int m : cfg_.channel_mult) stage_channels_.push_back(cfg_.base_channels * m);
    build_plan();
}

void Denoiser::build_plan() {
    const int n_convs = cfg_.subblocks_per_block * cfg_.convs_per_subblock;
    const int k = cfg_.embed_planes;

    layout_.push_back({"embed.class.table", {kNumClasses, cfg_.d_emb}});
    layout_.push_back({"embed.task.table", {kNumTasks, cfg_.d_emb}});
    for (const char* which : {"class", "time", "task"}) {
        layout_.push_back({std::string("proj.") + which + ".w", {k, cfg_.d_emb}});
        layout_.push_back({std::string("proj.") + which + ".b", {k}});
    }

    std::map<std::string, int> index;
    auto add_param = [&](const std::string& name, std::vector<int> shape) {
        index[name] = static_cast<int>(layout_.size());
        layout_.push_back({name, std::move(shape)});
        return index[name];
    };
    for (std::size_t i = 0; i < layout_.size(); ++i) index[layout_[i].first] = static_cast<int>(i);

    int next_node = 1;  // node 0 is the input stack
    auto conv_block = [&](const std::string& blk, int node_in, int c_in, int c_out) {
        int cur = node_in;
        int c_prev = c_in;
        for (int s = 0; s < cfg_.subblocks_per_block; ++s) {
            for (int c = 0; c < cfg_.convs_per_subblock; ++c) {
                const std::string base = blk + ".s" + std::to_string(s) + ".c" + std::to_string(c);
                const int wi = add_param(base + ".w", {c_out, c_prev, 3, 3});
                const int bi = add_param(base + ".b", {c_out});
                plan_.push_back({kConv, next_node, cur, -1, wi, bi, -1});
                cur = next_node++;
                plan_.push_back({kSiLU, next_node, cur, -1, -1, -1, -1});
                cur = next_node++;
                c_prev = c_out;
            }
            if (cfg_.channel_norm) {
                const std::string base = blk + ".s" + std::to_string(s) + ".norm";
                const int gi = add_param(base + ".g", {c_out});
                const int bi = add_param(base + ".b", {c_out});
                plan_.push_back({kNorm, next_node, cur, -1, -1, bi, gi});
                cur = next_node++;
                ++n_norms_;
            }
        }
        (void)n_convs;
        return cur;
    };

    const int c_in = cfg_.in_channels();
    const int ch0 = stage_channels_[0], ch1 = stage_channels_[1], ch2 = stage_channels_[2],
              ch3 = stage_channels_[3];

    const int skip0 = conv_block("enc0", 0, c_in, ch0);
    plan_.push_back({kPool, next_node, skip0, -1, -1, -1, -1});
    const int p0 = next_node++;
    ++n_pools_;
    const int skip1 = conv_block("enc1", p0, ch0, ch1);
    plan_.push_back({kPool, next_node, skip1, -1, -1, -1, -1});
    const int p1 = next_node++;
    ++n_pools_;
    const int skip2 = conv_block("enc2", p1, ch1, ch2);
    plan_.push_back({kPool, next_node, skip2, -1, -1, -1, -1});
    const int p2 = next_node++;
    ++n_pools_;

    int cur = conv_block("mid", p2, ch2, ch3);

    const int skips[3] = {skip2, skip1, skip0};
    const int up_in[3] = {ch3, ch2, ch1};
    const int up_out[3] = {ch2, ch1, ch0};
    for (int d = 0; d < 3; ++d) {
        const std::string blk = "dec" + std::to_string(d);
        const int wi = add_param(blk + ".up.w", {up_in[d], up_out[d], 2, 2});
        const int bi = add_param(blk + ".up.b", {up_out[d]});
        plan_.push_back({kDeconv, next_node, cur, -1, wi, bi, -1});
        cur = next_node++;
        plan_.push_back({kCrop, next_node, cur, skips[d], -1, -1, -1});
        cur = next_node++;
        plan_.push_back({kConcat, next_node, cur, skips[d], -1, -1, -1});
        cur = next_node++;
        cur = conv_block(blk, cur, 2 * up_out[d], up_out[d]);
    }

    const int wi = add_param("head.w", {2, ch0, 1, 1});
    const int bi = add_param("head.b", {2});
    plan_.push_back({kConv, next_node, cur, -1, wi, bi, -1});
    ++next_node;
    n_nodes_ = next_node;
}

DenoiserParams Denoiser::init_params(std::uint64_t seed) const {
    DenoiserParams p;
    p.tensors.reserve(layout_.size());
    Rng rng(mix_seed(seed));
    for (const auto& [name, shape] : layout_) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        ParamTensor t{name, shape, std::vector<double>(n, 0.0)};
        const bool is_table = name.rfind("embed.", 0) == 0;
        const bool is_proj_w = name.rfind("proj.", 0) == 0 && name.back() == 'w';
        const bool is_norm_gain = name.size() > 6 && name.compare(name.size() - 7, 7, ".norm.g") == 0;
        if (is_norm_gain) {
            std::fill(t.v.begin(), t.v.end(), 1.0);
        } else if (is_table) {
            for (double& v : t.v) v = 0.1 * rng.normal();
        } else if (is_proj_w) {
            const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.d_emb));
            for (double& v : t.v) v = s * rng.normal();
        } else if (name.back() == 'w' && shape.size() == 4) {
            // conv {out,in,kh,kw} or deconv {in,out,2,2}; fan-in per output
            // is in*kh*kw for convs and in*1 for stride-2 2x2 deconvs.
            const bool deconv = name.find(".up.") != std::string::npos;
            const double fan_in = deconv ? static_cast<double>(shape[0])
                                         : static_cast<double>(shape[1] * shape[2] * shape[3]);
            const double s = 1.0 / std::sqrt(fan_in);
            for (double& v : t.v) v = s * rng.normal();
        }
        // biases and norm shifts stay zero
        p.tensors.push_back(std::move(t));
    }
    return p;
}

std::size_t Denoiser::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, shape] : layout_) {
        std::size_t s = 1;
        for (int d : shape) s *= static_cast<std::size_t>(d);
        n += s;
    }
    return n;
}

ConditionBundle Denoiser::make_bundle(const DenoiserParams& p, BeatClass label, TaskKind task,
                                      long t, const Mask& mask,
                                      const std::vector<double>& context) const {
    require(mask.length() == static_cast<int>(context.size()), "dimension mismatch");
    ConditionBundle b;
    b.class_index = static_cast<int>(label);
    b.task_index = static_cast<int>(task);

    const ParamTensor& cls = p.at("embed.class.table");
    const ParamTensor& tsk = p.at("embed.task.table");
    b.e_l.assign(cls.v.begin() + b.class_index * cfg_.d_emb,
                 cls.v.begin() + (b.class_index + 1) * cfg_.d_emb);
    b.e_s.assign(tsk.v.begin() + b.task_index * cfg_.d_emb,
                 tsk.v.begin() + (b.task_index + 1) * cfg_.d_emb);
    b.e_T = timestep_embedding(t, cfg_.d_emb);

    std::vector<double> mask_signal(mask.bits.begin(), mask.bits.end());
    b.C1 = stft(mask_signal, spectral_);
    b.C2 = stft(apply_mask(context, mask), spectral_);
    return b;
}

Tensor3 Denoiser::assemble_input(const Spectrogram& St, const ConditionBundle& cond,
                                 const DenoiserParams& p, AssembleCache* cache) const {
    const int F = St.grid.h, M = St.grid.w;
    require(St.grid.c == 2, "condition shape mismatch");
    require(cond.C1.grid.c == 2 && cond.C1.grid.h == F && cond.C1.grid.w == M,
            "condition shape mismatch");
    require(cond.C2.grid.c == 2 && cond.C2.grid.h == F && cond.C2.grid.w == M,
            "condition shape mismatch");
    const std::size_t d = static_cast<std::size_t>(cfg_.d_emb);
    require(cond.e_l.size() == d && cond.e_T.size() == d && cond.e_s.size() == d,
            "condition shape mismatch");

    const int k = cfg_.embed_planes;
    Tensor3 stack(6 + 3 * k, F, M);
    const std::size_t plane = static_cast<std::size_t>(F) * static_cast<std::size_t>(M);
    std::copy(St.grid.v.begin(), St.grid.v.end(), stack.v.begin());
    std::copy(cond.C1.grid.v.begin(), cond.C1.grid.v.end(), stack.v.begin() + 2 * plane);
    std::copy(cond.C2.grid.v.begin(), cond.C2.grid.v.end(), stack.v.begin() + 4 * plane);

    const std::vector<double>* embs[3] = {&cond.e_l, &cond.e_T, &cond.e_s};
    const char* names[3] = {"class", "time", "task"};
    for (int e = 0; e < 3; ++e) {
        const ParamTensor& w = p.at(std::string("proj.") + names[e] + ".w");
        const ParamTensor& bias = p.at(std::string("proj.") + names[e] + ".b");
        for (int j = 0; j < k; ++j) {
            double val = bias.v[static_cast<std::size_t>(j)];
            for (int q = 0; q < cfg_.d_emb; ++q)
                val += w.v[static_cast<std::size_t>(j * cfg_.d_emb + q)] *
                       (*embs[e])[static_cast<std::size_t>(q)];
            double* out = stack.plane(6 + e * k + j);
            std::fill(out, out + plane, val);
        }
    }
    if (cache) {
        cache->bundle = cond;
        cache->freq_bins = F;
        cache->frames = M;
    }
    return stack;
}

void Denoiser::assemble_backward(const Tensor3& d_stack, const AssembleCache& cache,
                                 const DenoiserParams& p, DenoiserParams& grads) const {
    const int k = cfg_.embed_planes;
    const int F = cache.freq_bins, M = cache.frames;
    require(d_stack.c == 6 + 3 * k && d_stack.h == F && d_stack.w == M,
            "condition shape mismatch");
    const std::size_t plane = static_cast<std::size_t>(F) * static_cast<std::size_t>(M);

    const std::vector<double>* embs[3] = {&cache.bundle.e_l, &cache.bundle.e_T, &cache.bundle.e_s};
    const char* names[3] = {"class", "time", "task"};
    for (int e = 0; e < 3; ++e) {
        const ParamTensor& w = p.at(std::string("proj.") + names[e] + ".w");
        ParamTensor& dw = grads.at(std::string("proj.") + names[e] + ".w");
        ParamTensor& db = grads.at(std::string("proj.") + names[e] + ".b");
        std::vector<double> d_emb_vec(static_cast<std::size_t>(cfg_.d_emb), 0.0);
        for (int j = 0; j < k; ++j) {
            const double* dp = d_stack.plane(6 + e * k + j);
            double g = 0.0;
            for (std::size_t i = 0; i < plane; ++i) g += dp[i];
            db.v[static_cast<std::size_t>(j)] += g;
            for (int q = 0; q < cfg_.d_emb; ++q) {
                dw.v[static_cast<std::size_t>(j * cfg_.d_emb + q)] +=
                    g * (*embs[e])[static_cast<std::size_t>(q)];
                d_emb_vec[static_cast<std::size_t>(q)] +=
                    g * w.v[static_cast<std::size_t>(j * cfg_.d_emb + q)];
            }
        }
        if (e == 0) {
            ParamTensor& dt = grads.at("embed.class.table");
            for (int q = 0; q < cfg_.d_emb; ++q)
                dt.v[static_cast<std::size_t>(cache.bundle.class_index * cfg_.d_emb + q)] +=
                    d_emb_vec[static_cast<std::size_t>(q)];
        } else if (e == 2) {
            ParamTensor& dt = grads.at("embed.task.table");
            for (int q = 0; q < cfg_.d_emb; ++q)
                dt.v[static_cast<std::size_t>(cache.bundle.task_index * cfg_.d_emb + q)] +=
                    d_emb_vec[static_cast<std::size_t>(q)];
        }
        // e == 1: the timestep embedding is deterministic, nothing to route
    }
}

namespace {

Tensor3 conv_forward(const Tensor3& x, const ParamTensor& w, const ParamTensor& b) {
    const int out_c = w.shape[0], in_c = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    require(x.c == in_c, "dimension mismatch");
    const int ph = kh / 2, pw = kw / 2;
    Tensor3 y(out_c, x.h, x.w);
    for (int oc = 0; oc < out_c; ++oc) {
        double* yp = y.plane(oc);
        const double bias = b.v[static_cast<std::size_t>(oc)];
        for (std::size_t i = 0; i < static_cast<std::size_t>(x.h) * x.w; ++i) yp[i] = bias;
        for (int ic = 0; ic < in_c; ++ic) {
            const double* xp = x.plane(ic);
            const double* wp = &w.v[static_cast<std::size_t>(((oc * in_c) + ic) * kh * kw)];
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double wv = wp[ky * kw + kx];
                    if (wv == 0.0) continue;
                    const int y0 = std::max(0, ph - ky), y1 = std::min(x.h, x.h + ph - ky);
                    const int x0 = std::max(0, pw - kx), x1 = std::min(x.w, x.w + pw - kx);
                    for (int yy = y0; yy < y1; ++yy) {
                        const double* xr = xp + static_cast<std::size_t>(yy - ph + ky) * x.w;
                        double* yr = yp + static_cast<std::size_t>(yy) * x.w;
                        for (int xx = x0; xx < x1; ++xx) yr[xx] += wv * xr[xx - pw + kx];
                    }
                }
            }
        }
    }
    return y;
}

Tensor3 conv_backward(const Tensor3& dout, const Tensor3& x, const ParamTensor& w,
                      ParamTensor& dw, ParamTensor& db) {
    const int out_c = w.shape[0], in_c = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    const int ph = kh / 2, pw = kw / 2;
    Tensor3 dx(x.c, x.h, x.w);
    for (int oc = 0; oc < out_c; ++oc) {
        const double* dp = dout.plane(oc);
        double dbv = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(x.h) * x.w; ++i) dbv += dp[i];
        db.v[static_cast<std::size_t>(oc)] += dbv;
        for (int ic = 0; ic < in_c; ++ic) {
            const double* xp = x.plane(ic);
            double* dxp = dx.plane(ic);
            const double* wp = &w.v[static_cast<std::size_t>(((oc * in_c) + ic) * kh * kw)];
            double* dwp = &dw.v[static_cast<std::size_t>(((oc * in_c) + ic) * kh * kw)];
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double wv = wp[ky * kw + kx];
                    double dwv = 0.0;
                    const int y0 = std::max(0, ph - ky), y1 = std::min(x.h, x.h + ph - ky);
                    const int x0 = std::max(0, pw - kx), x1 = std::min(x.w, x.w + pw - kx);
                    for (int yy = y0; yy < y1; ++yy) {
                        const double* dr = dp + static_cast<std::size_t>(yy) * x.w;
                        const double* xr = xp + static_cast<std::size_t>(yy - ph + ky) * x.w;
                        double* dxr = dxp + static_cast<std::size_t>(yy - ph + ky) * x.w;
                        for (int xx = x0; xx < x1; ++xx) {
                            dwv += dr[xx] * xr[xx - pw + kx];
                            dxr[xx - pw + kx] += wv * dr[xx];
                        }
                    }
                    dwp[ky * kw + kx] += dwv;
                }
            }
        }
    }
    return dx;
}

Tensor3 deconv_forward(const Tensor3& x, const ParamTensor& w, const ParamTensor& b) {
    const int in_c = w.shape[0], out_c = w.shape[1];
    require(x.c == in_c, "dimension mismatch");
    Tensor3 y(out_c, 2 * x.h, 2 * x.w);
    for (int oc = 0; oc < out_c; ++oc) {
        double* yp = y.plane(oc);
        const double bias = b.v[static_cast<std::size_t>(oc)];
        for (std::size_t i = 0; i < static_cast<std::size_t>(y.h) * y.w; ++i) yp[i] = bias;
    }
    for (int ic = 0; ic < in_c; ++ic) {
        const double* xp = x.plane(ic);
        for (int oc = 0; oc < out_c; ++oc) {
            double* yp = y.plane(oc);
            const double* wp = &w.v[static_cast<std::size_t>(((ic * out_c) + oc) * 4)];
            for (int yy = 0; yy < x.h; ++yy) {
                const double* xr = xp + static_cast<std::size_t>(yy) * x.w;
                double* y0 = yp + static_cast<std::size_t>(2 * yy) * y.w;
                double* y1 = y0 + y.w;
                for (int xx = 0; xx < x.w; ++xx) {
                    const double v = xr[xx];
                    y0[2 * xx] += wp[0] * v;
                    y0[2 * xx + 1] += wp[1] * v;
                    y1[2 * xx] += wp[2] * v;
                    y1[2 * xx + 1] += wp[3] * v;
                }
            }
        }
    }
    return y;
}

Tensor3 deconv_backward(const Tensor3& dout, const Tensor3& x, const ParamTensor& w,
                        ParamTensor& dw, ParamTensor& db) {
    const int in_c = w.shape[0], out_c = w.shape[1];
    Tensor3 dx(x.c, x.h, x.w);
    for (int oc = 0; oc < out_c; ++oc) {
        const double* dp = dout.plane(oc);
        double dbv = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(dout.h) * dout.w; ++i) dbv += dp[i];
        db.v[static_cast<std::size_t>(oc)] += dbv;
    }
    for (int ic = 0; ic < in_c; ++ic) {
        const double* xp = x.plane(ic);
        double* dxp = dx.plane(ic);
        for (int oc = 0; oc < out_c; ++oc) {
            const double* dp = dout.plane(oc);
            const double* wp = &w.v[static_cast<std::size_t>(((ic * out_c) + oc) * 4)];
            double* dwp = &dw.v[static_cast<std::size_t>(((ic * out_c) + oc) * 4)];
            double dw0 = 0.0, dw1 = 0.0, dw2 = 0.0, dw3 = 0.0;
            for (int yy = 0; yy < x.h; ++yy) {
                const double* xr = xp + static_cast<std::size_t>(yy) * x.w;
                double* dxr = dxp + static_cast<std::size_t>(yy) * x.w;
                const double* d0 = dp + static_cast<std::size_t>(2 * yy) * dout.w;
                const double* d1 = d0 + dout.w;
                for (int xx = 0; xx < x.w; ++xx) {
                    const double v = xr[xx];
                    const double g0 = d0[2 * xx], g1 = d0[2 * xx + 1];
                    const double g2 = d1[2 * xx], g3 = d1[2 * xx + 1];
                    dw0 += g0 * v;
                    dw1 += g1 * v;
                    dw2 += g2 * v;
                    dw3 += g3 * v;
                    dxr[xx] += wp[0] * g0 + wp[1] * g1 + wp[2] * g2 + wp[3] * g3;
                }
            }
            dwp[0] += dw0;
            dwp[1] += dw1;
            dwp[2] += dw2;
            dwp[3] += dw3;
        }
    }
    return dx;
}

Tensor3 pool_forward(const Tensor3& x, std::vector<std::int32_t>& argmax) {
    const int oh = (x.h + 1) / 2, ow = (x.w + 1) / 2;
    Tensor3 y(x.c, oh, ow);
    argmax.assign(static_cast<std::size_t>(x.c) * oh * ow, 0);
    std::size_t o = 0;
    for (int c = 0; c < x.c; ++c) {
        const double* xp = x.plane(c);
        for (int yy = 0; yy < oh; ++yy) {
            for (int xx = 0; xx < ow; ++xx, ++o) {
                double best = -std::numeric_limits<double>::infinity();
                std::int32_t best_i = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    const int sy = 2 * yy + dy;
                    if (sy >= x.h) break;
                    for (int dx = 0; dx < 2; ++dx) {
                        const int sx = 2 * xx + dx;
                        if (sx >= x.w) break;
                        const double v = xp[static_cast<std::size_t>(sy) * x.w + sx];
                        if (v > best) {
                            best = v;
                            best_i = static_cast<std::int32_t>(sy * x.w + sx);
                        }
                    }
                }
                y.v[o] = best;
                argmax[o] = best_i;
            }
        }
    }
    return y;
}

Tensor3 pool_backward(const Tensor3& dout, const Tensor3& x,
                      const std::vector<std::int32_t>& argmax) {
    Tensor3 dx(x.c, x.h, x.w);
    const std::size_t plane_in = static_cast<std::size_t>(x.h) * x.w;
    std::size_t o = 0;
    for (int c = 0; c < x.c; ++c) {
        double* dxp = dx.v.data() + static_cast<std::size_t>(c) * plane_in;
        const std::size_t n = static_cast<std::size_t>(dout.h) * dout.w;
        const double* dp = dout.plane(c);
        for (std::size_t i = 0; i < n; ++i, ++o) dxp[argmax[o]] += dp[i];
    }
    return dx;
}

Tensor3 silu_forward(const Tensor3& x) {
    Tensor3 y(x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] = x.v[i] * sigmoid(x.v[i]);
    return y;
}

Tensor3 silu_backward(const Tensor3& dout, const Tensor3& x) {
    Tensor3 dx(x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        const double s = sigmoid(x.v[i]);
        dx.v[i] = dout.v[i] * s * (1.0 + x.v[i] * (1.0 - s));
    }
    return dx;
}

Tensor3 crop_forward(const Tensor3& x, int th, int tw) {
    require(th <= x.h && tw <= x.w, "dimension mismatch");
    Tensor3 y(x.c, th, tw);
    for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < th; ++yy)
            std::copy_n(x.plane(c) + static_cast<std::size_t>(yy) * x.w, tw,
                        y.plane(c) + static_cast<std::size_t>(yy) * tw);
    return y;
}

Tensor3 crop_backward(const Tensor3& dout, const Tensor3& x) {
    Tensor3 dx(x.c, x.h, x.w);
    for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < dout.h; ++yy)
            std::copy_n(dout.plane(c) + static_cast<std::size_t>(yy) * dout.w, dout.w,
                        dx.plane(c) + static_cast<std::size_t>(yy) * x.w);
    return dx;
}

Tensor3 concat_forward(const Tensor3& a, const Tensor3& b) {
    require(a.h == b.h && a.w == b.w, "dimension mismatch");
    Tensor3 y(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    return y;
}

// Per-channel normalization over the spatial grid with learned gain/shift.
Tensor3 norm_forward(const Tensor3& x, const ParamTensor& g, const ParamTensor& b,
                     std::vector<double>& stats) {
    const std::size_t n = static_cast<std::size_t>(x.h) * x.w;
    Tensor3 y(x.c, x.h, x.w);
    stats.assign(static_cast<std::size_t>(x.c) * 2, 0.0);
    for (int c = 0; c < x.c; ++c) {
        const double* xp = x.plane(c);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += xp[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = xp[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + kNormEps);
        stats[static_cast<std::size_t>(2 * c)] = mean;
        stats[static_cast<std::size_t>(2 * c + 1)] = inv;
        const double gain = g.v[static_cast<std::size_t>(c)];
        const double shift = b.v[static_cast<std::size_t>(c)];
        double* yp = y.plane(c);
        for (std::size_t i = 0; i < n; ++i) yp[i] = gain * (xp[i] - mean) * inv + shift;
    }
    return y;
}

Tensor3 norm_backward(const Tensor3& dout, const Tensor3& x, const ParamTensor& g,
                      const std::vector<double>& stats, ParamTensor& dg, ParamTensor& db) {
    const std::size_t n = static_cast<std::size_t>(x.h) * x.w;
    Tensor3 dx(x.c, x.h, x.w);
    for (int c = 0; c < x.c; ++c) {
        const double mean = stats[static_cast<std::size_t>(2 * c)];
        const double inv = stats[static_cast<std::size_t>(2 * c + 1)];
        const double gain = g.v[static_cast<std::size_t>(c)];
        const double* xp = x.plane(c);
        const double* dp = dout.plane(c);
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double xh = (xp[i] - mean) * inv;
            sum_d += dp[i];
            sum_dx += dp[i] * xh;
        }
        dg.v[static_cast<std::size_t>(c)] += sum_dx;
        db.v[static_cast<std::size_t>(c)] += sum_d;
        const double mean_d = sum_d / static_cast<double>(n);
        const double mean_dx = sum_dx / static_cast<double>(n);
        double* dxp = dx.plane(c);
        for (std::size_t i = 0; i < n; ++i) {
            const double xh = (xp[i] - mean) * inv;
            dxp[i] = gain * inv * (dp[i] - mean_d - xh * mean_dx);
        }
    }
    return dx;
}

}  // namespace

Tensor3 Denoiser::forward(const Tensor3& stack, const DenoiserParams& p, Workspace& ws) const {
    require(stack.c == cfg_.in_channels(), "condition shape mismatch");
    require(p.tensors.size() == layout_.size(), "parameter layout mismatch");
    ws.nodes.assign(static_cast<std::size_t>(n_nodes_), Tensor3());
    ws.pool_argmax.assign(static_cast<std::size_t>(n_pools_), {});
    ws.norm_stats.assign(static_cast<std::size_t>(std::max(n_norms_, 1)), {});
    ws.nodes[0] = stack;

    int pool_i = 0, norm_i = 0;
    for (const Op& op : plan_) {
        const Tensor3& in = ws.nodes[static_cast<std::size_t>(op.in)];
        Tensor3& out = ws.nodes[static_cast<std::size_t>(op.out)];
        switch (op.kind) {
            case kConv:
                out = conv_forward(in, p.tensors[static_cast<std::size_t>(op.w)],
                                   p.tensors[static_cast<std::size_t>(op.b)]);
                break;
            case kDeconv:
                out = deconv_forward(in, p.tensors[static_cast<std::size_t>(op.w)],
                                     p.tensors[static_cast<std::size_t>(op.b)]);
                break;
            case kSiLU:
                out = silu_forward(in);
                break;
            case kPool:
                out = pool_forward(in, ws.pool_argmax[static_cast<std::size_t>(pool_i++)]);
                break;
            case kConcat:
                out = concat_forward(in, ws.nodes[static_cast<std::size_t>(op.in2)]);
                break;
            case kCrop: {
                const Tensor3& ref = ws.nodes[static_cast<std::size_t>(op.in2)];
                out = crop_forward(in, ref.h, ref.w);
                break;
            }
            case kNorm:
                out = norm_forward(in, p.tensors[static_cast<std::size_t>(op.g)],
                                   p.tensors[static_cast<std::size_t>(op.b)],
                                   ws.norm_stats[static_cast<std::size_t>(norm_i++)]);
                break;
            default:
                fail("bad op");
        }
    }
    const Tensor3& out = ws.nodes[static_cast<std::size_t>(n_nodes_ - 1)];
    for (double v : out.v) require(std::isfinite(v), "numerical blow-up");
    return out;
}

Tensor3 Denoiser::denoise(const Tensor3& stack, const DenoiserParams& p) const {
    Workspace ws;
    return forward(stack, p, ws);
}

Tensor3 Denoiser::backward(const Tensor3& d_eps, const DenoiserParams& p, Workspace& ws,
                           DenoiserParams& grads) const {
    require(grads.tensors.size() == layout_.size(), "parameter layout mismatch");
    std::vector<Tensor3> dnodes(static_cast<std::size_t>(n_nodes_));
    check_same_shape(d_eps, ws.nodes[static_cast<std::size_t>(n_nodes_ - 1)], "output gradient");
    dnodes[static_cast<std::size_t>(n_nodes_ - 1)] = d_eps;

    auto accumulate = [&](int node, Tensor3&& grad) {
        Tensor3& slot = dnodes[static_cast<std::size_t>(node)];
        if (slot.v.empty()) {
            slot = std::move(grad);
        } else {
            for (std::size_t i = 0; i < slot.v.size(); ++i) slot.v[i] += grad.v[i];
        }
    };

    int pool_i = n_pools_, norm_i = n_norms_;
    for (auto it = plan_.rbegin(); it != plan_.rend(); ++it) {
        const Op& op = *it;
        Tensor3& dout = dnodes[static_cast<std::size_t>(op.out)];
        if (dout.v.empty()) {
            // An output no consumer cared about; propagate zeros.
            const Tensor3& shape = ws.nodes[static_cast<std::size_t>(op.out)];
            dout = Tensor3(shape.c, shape.h, shape.w);
        }
        const Tensor3& in = ws.nodes[static_cast<std::size_t>(op.in)];
        switch (op.kind) {
            case kConv:
                accumulate(op.in, conv_backward(dout, in,
                                                p.tensors[static_cast<std::size_t>(op.w)],
                                                grads.tensors[static_cast<std::size_t>(op.w)],
                                                grads.tensors[static_cast<std::size_t>(op.b)]));
                break;
            case kDeconv:
                accumulate(op.in, deconv_backward(dout, in,
                                                  p.tensors[static_cast<std::size_t>(op.w)],
                                                  grads.tensors[static_cast<std::size_t>(op.w)],
                                                  grads.tensors[static_cast<std::size_t>(op.b)]));
                break;
            case kSiLU:
                accumulate(op.in, silu_backward(dout, in));
                break;
            case kPool:
                accumulate(op.in,
                           pool_backward(dout, in,
                                         ws.pool_argmax[static_cast<std::size_t>(--pool_i)]));
                break;
            case kConcat: {
                const Tensor3& skip = ws.nodes[static_cast<std::size_t>(op.in2)];
                Tensor3 da(in.c, in.h, in.w), dbv(skip.c, skip.h, skip.w);
                std::copy_n(dout.v.begin(), da.v.size(), da.v.begin());
                std::copy_n(dout.v.begin() + static_cast<std::ptrdiff_t>(da.v.size()),
                            dbv.v.size(), dbv.v.begin());
                accumulate(op.in, std::move(da));
                accumulate(op.in2, std::move(dbv));
                break;
            }
            case kCrop:
                accumulate(op.in, crop_backward(dout, in));
                break;
            case kNorm:
                accumulate(op.in, norm_backward(dout, in,
                                                p.tensors[static_cast<std::size_t>(op.g)],
                                                ws.norm_stats[static_cast<std::size_t>(--norm_i)],
                                                grads.tensors[static_cast<std::size_t>(op.g)],
                                                grads.tensors[static_cast<std::size_t>(op.b)]));
                break;
            default:
                fail("bad op");
        }
    }
    return std::move(dnodes[0]);
}

}  // namespace hbsynth
