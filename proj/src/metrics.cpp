#include "hbsynth/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace hbsynth {
namespace {

void check_lengths(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "length mismatch");
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
    require(!rows.empty(), "empty set");
    const std::size_t d = rows.front().size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == d, "dimension mismatch");
        for (std::size_t j = 0; j < d; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    require(es.info() == Eigen::Success, "eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = ev[i] > 0.0 ? std::sqrt(ev[i]) : 0.0;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
    check_lengths(a, b);
    require(!a.empty(), "empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

double mae(const std::vector<double>& a, const std::vector<double>& b) {
    check_lengths(a, b);
    require(!a.empty(), "empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double rmse_masked(const std::vector<double>& a, const std::vector<double>& b,
                   const std::vector<std::uint8_t>& select) {
    check_lengths(a, b);
    require(a.size() == select.size(), "length mismatch");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!select[i]) continue;
        const double d = a[i] - b[i];
        s += d * d;
        ++n;
    }
    require(n > 0, "empty selection");
    return std::sqrt(s / static_cast<double>(n));
}

double mae_masked(const std::vector<double>& a, const std::vector<double>& b,
                  const std::vector<std::uint8_t>& select) {
    check_lengths(a, b);
    require(a.size() == select.size(), "length mismatch");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!select[i]) continue;
        s += std::abs(a[i] - b[i]);
        ++n;
    }
    require(n > 0, "empty selection");
    return s / static_cast<double>(n);
}

double dtw(const std::vector<double>& a, const std::vector<double>& b) {
    require(!a.empty() && !b.empty(), "empty input");
    const std::size_t n = a.size(), m = b.size();
    const double inf = std::numeric_limits<double>::infinity();
    // One rolling row of the (n+1) x (m+1) accumulated-cost table.
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            const double c = std::abs(a[i - 1] - b[j - 1]);
            cur[j] = c + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double emd_1d(const std::vector<std::vector<double>>& X,
              const std::vector<std::vector<double>>& Y) {
    require(!X.empty() && !Y.empty(), "empty set");
    const std::size_t L = X.front().size();
    for (const auto& x : X) require(x.size() == L, "length mismatch");
    for (const auto& y : Y) require(y.size() == L, "length mismatch");
    require(L > 0, "empty input");

    const std::size_t n = X.size(), m = Y.size();
    std::vector<double> xs(n), ys(m);
    double total = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t i = 0; i < n; ++i) xs[i] = X[i][t];
        for (std::size_t j = 0; j < m; ++j) ys[j] = Y[j][t];
        std::sort(xs.begin(), xs.end());
        std::sort(ys.begin(), ys.end());
        // W1 = integral over quantile level q of |Fx^-1(q) - Fy^-1(q)|.
        // Both inverses are step functions with breakpoints at i/n and
        // j/m; walk the merged breakpoints exactly in units of 1/(n·m).
        double w = 0.0;
        std::size_t i = 0, j = 0;
        long long q_prev = 0;
        while (i < n && j < m) {
            const long long qa = static_cast<long long>(i + 1) * static_cast<long long>(m);
            const long long qb = static_cast<long long>(j + 1) * static_cast<long long>(n);
            const long long q = std::min(qa, qb);
            w += static_cast<double>(q - q_prev) * std::abs(xs[i] - ys[j]);
            q_prev = q;
            if (qa == q) ++i;
            if (qb == q) ++j;
        }
        total += w / static_cast<double>(n * m);
    }
    return total / static_cast<double>(L);
}

double mmd(const std::vector<std::vector<double>>& X, const std::vector<std::vector<double>>& Y,
           std::optional<double> bandwidth, bool* degenerate) {
    require(X.size() >= 2 && Y.size() >= 2, "set too small");
    const std::size_t d = X.front().size();
    for (const auto& x : X) require(x.size() == d, "dimension mismatch");
    for (const auto& y : Y) require(y.size() == d, "dimension mismatch");
    if (degenerate) *degenerate = false;

    double sigma;
    if (bandwidth) {
        require(*bandwidth > 0.0, "bad bandwidth");
        sigma = *bandwidth;
    } else {
        std::vector<const std::vector<double>*> pool;
        pool.reserve(X.size() + Y.size());
        for (const auto& x : X) pool.push_back(&x);
        for (const auto& y : Y) pool.push_back(&y);
        std::vector<double> dists;
        dists.reserve(pool.size() * (pool.size() - 1) / 2);
        for (std::size_t i = 0; i < pool.size(); ++i)
            for (std::size_t j = i + 1; j < pool.size(); ++j)
                dists.push_back(std::sqrt(sq_dist(*pool[i], *pool[j])));
        sigma = median_of(std::move(dists));
        if (sigma <= 0.0) {
            if (degenerate) *degenerate = true;
            return 0.0;
        }
    }

    const double inv = -1.0 / (2.0 * sigma * sigma);
    const std::size_t n = X.size(), m = Y.size();
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) kxx += std::exp(inv * sq_dist(X[i], X[j]));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) kyy += std::exp(inv * sq_dist(Y[i], Y[j]));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) kxy += std::exp(inv * sq_dist(X[i], Y[j]));
    const double v = kxx / static_cast<double>(n * n) + kyy / static_cast<double>(m * m) -
                     2.0 * kxy / static_cast<double>(n * m);
    return v > 0.0 ? v : 0.0;
}

std::vector<double> statistical_features(const std::vector<double>& x) {
    require(!x.empty(), "empty input");
    const std::size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    const double var = m2;
    const double skew = var > 1e-24 ? m3 / std::pow(var, 1.5) : 0.0;
    const double kurt = var > 1e-24 ? m4 / (var * var) : 0.0;
    const double peak = *std::max_element(x.begin(), x.end());

    std::vector<double> out = {mean, var, skew, kurt, peak};

    // Energy shares of 8 contiguous bands of the one-sided DFT spectrum.
    const std::size_t half = n / 2 + 1;
    std::vector<double> power(half, 0.0);
    const double w0 = 2.0 * 3.14159265358979323846 / static_cast<double>(n);
    for (std::size_t k = 0; k < half; ++k) {
        double re = 0.0, im = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double a = w0 * static_cast<double>(k) * static_cast<double>(t);
            re += x[t] * std::cos(a);
            im -= x[t] * std::sin(a);
        }
        power[k] = re * re + im * im;
    }
    double total = 0.0;
    for (double p : power) total += p;
    double bands[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t k = 0; k < half; ++k) {
        std::size_t b = k * 8 / half;
        if (b > 7) b = 7;
        bands[b] += power[k];
    }
    for (double b : bands) out.push_back(total > 0.0 ? b / total : 0.0);
    return out;
}

std::vector<std::vector<double>> extract_features(const std::vector<Heartbeat>& beats,
                                                  const std::string& extractor_tag,
                                                  const FeatureExtractor* classifier) {
    std::vector<std::vector<double>> out;
    out.reserve(beats.size());
    if (extractor_tag == "statistical") {
        for (const Heartbeat& b : beats) out.push_back(statistical_features(b.samples));
    } else if (extractor_tag == "classifier-penultimate") {
        require(classifier != nullptr && *classifier, "no feature extractor");
        for (const Heartbeat& b : beats) out.push_back((*classifier)(b.samples));
    } else {
        fail("unknown feature extractor");
    }
    return out;
}

double fid(const std::vector<std::vector<double>>& FX, const std::vector<std::vector<double>>& FY) {
    require(FX.size() >= 2 && FY.size() >= 2, "set too small");
    const Eigen::MatrixXd mx = to_matrix(FX);
    const Eigen::MatrixXd my = to_matrix(FY);
    require(mx.cols() == my.cols(), "dimension mismatch");

    const Eigen::VectorXd mux = mx.colwise().mean();
    const Eigen::VectorXd muy = my.colwise().mean();
    const Eigen::MatrixXd cx = (mx.rowwise() - mux.transpose()).transpose() *
                               (mx.rowwise() - mux.transpose()) /
                               static_cast<double>(mx.rows() - 1);
    const Eigen::MatrixXd cy = (my.rowwise() - muy.transpose()).transpose() *
                               (my.rowwise() - muy.transpose()) /
                               static_cast<double>(my.rows() - 1);

    // Tr((Σx Σy)^½) = Tr((A Σy A)^½) with A = Σx^½; the inner matrix is
    // symmetric PSD, so one more symmetric square root suffices.
    const Eigen::MatrixXd a = sqrtm_psd(cx);
    const Eigen::MatrixXd inner = a * cy * a;
    const Eigen::MatrixXd s = sqrtm_psd(0.5 * (inner + inner.transpose()));

    const double v = (mux - muy).squaredNorm() + cx.trace() + cy.trace() - 2.0 * s.trace();
    return v > 0.0 ? v : 0.0;
}

const char* pairing_name(Pairing p) {
    switch (p) {
        case Pairing::NearestReal: return "nearest-real";
        case Pairing::GroundTruth: return "ground-truth";
    }
    fail("unknown pairing");
}

namespace {

struct ClassSets {
    std::vector<const std::vector<double>*> real, synth;
};

std::vector<std::vector<double>> features_of(const std::vector<const std::vector<double>*>& xs,
                                             const std::string& extractor_tag,
                                             const FeatureExtractor* classifier) {
    std::vector<std::vector<double>> out;
    out.reserve(xs.size());
    if (extractor_tag == "statistical") {
        for (const auto* x : xs) out.push_back(statistical_features(*x));
    } else if (extractor_tag == "classifier-penultimate") {
        require(classifier != nullptr && *classifier, "no feature extractor");
        for (const auto* x : xs) out.push_back((*classifier)(*x));
    } else {
        fail("unknown feature extractor");
    }
    return out;
}

void paired_metrics_for(const ClassSets& sets, Pairing pairing, ClassMetrics& cm) {
    double sum_rmse = 0.0, sum_mae = 0.0, sum_dtw = 0.0;
    if (pairing == Pairing::GroundTruth) {
        require(sets.real.size() == sets.synth.size(), "pairing mismatch");
        for (std::size_t i = 0; i < sets.synth.size(); ++i) {
            sum_rmse += rmse(*sets.synth[i], *sets.real[i]);
            sum_mae += mae(*sets.synth[i], *sets.real[i]);
            sum_dtw += dtw(*sets.synth[i], *sets.real[i]);
        }
    } else {
        for (const auto* s : sets.synth) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < sets.real.size(); ++i) {
                require(sets.real[i]->size() == s->size(), "length mismatch");
                const double d = sq_dist(*s, *sets.real[i]);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            sum_rmse += rmse(*s, *sets.real[best]);
            sum_mae += mae(*s, *sets.real[best]);
            sum_dtw += dtw(*s, *sets.real[best]);
        }
    }
    cm.rmse = sum_rmse / static_cast<double>(sets.synth.size());
    cm.mae = sum_mae / static_cast<double>(sets.synth.size());
    cm.dtw = sum_dtw / static_cast<double>(sets.synth.size());
}

void set_metrics_for(const ClassSets& sets, const std::string& extractor_tag,
                     const FeatureExtractor* classifier, ClassMetrics& cm) {
    std::vector<std::vector<double>> xr, xs;
    xr.reserve(sets.real.size());
    xs.reserve(sets.synth.size());
    for (const auto* b : sets.real) xr.push_back(*b);
    for (const auto* b : sets.synth) xs.push_back(*b);
    cm.emd = emd_1d(xr, xs);
    cm.mmd = mmd(xr, xs, std::nullopt, &cm.mmd_degenerate);
    cm.fid = fid(features_of(sets.real, extractor_tag, classifier),
                 features_of(sets.synth, extractor_tag, classifier));
}

}  // namespace

MetricsReport evaluate_sets(const BeatDataset& real, const BeatDataset& synth, Pairing pairing,
                            const std::string& extractor_tag, const FeatureExtractor* classifier) {
    require(!real.beats.empty() && !synth.beats.empty(), "empty set");
    std::map<char, ClassSets> by_class;
    for (const Heartbeat& b : real.beats)
        by_class[beat_class_char(b.label)].real.push_back(&b.samples);
    for (const Heartbeat& b : synth.beats)
        by_class[beat_class_char(b.label)].synth.push_back(&b.samples);

    MetricsReport rep;
    rep.pairing_tag = pairing_name(pairing);
    rep.extractor_tag = extractor_tag;

    ClassSets pooled;
    double sum_rmse = 0.0, sum_mae = 0.0, sum_dtw = 0.0;
    std::size_t n_pairs = 0;
    for (const auto& [code, sets] : by_class) {
        if (sets.synth.empty()) continue;  // real-only class: nothing to score
        if (sets.real.empty()) {
            rep.missing_classes.push_back(code);
            continue;
        }
        require(sets.real.size() >= 2 && sets.synth.size() >= 2, "set too small");
        ClassMetrics cm;
        cm.n_real = sets.real.size();
        cm.n_synth = sets.synth.size();
        paired_metrics_for(sets, pairing, cm);
        set_metrics_for(sets, extractor_tag, classifier, cm);
        rep.per_class[code] = cm;
        sum_rmse += cm.rmse * static_cast<double>(sets.synth.size());
        sum_mae += cm.mae * static_cast<double>(sets.synth.size());
        sum_dtw += cm.dtw * static_cast<double>(sets.synth.size());
        n_pairs += sets.synth.size();
        pooled.real.insert(pooled.real.end(), sets.real.begin(), sets.real.end());
        pooled.synth.insert(pooled.synth.end(), sets.synth.begin(), sets.synth.end());
    }
    require(!rep.per_class.empty(), "no overlapping classes");

    // Pooled row: paired metrics aggregate the per-class pairings (pairing
    // never crosses a class boundary); set metrics run on the unions.
    rep.overall.n_real = pooled.real.size();
    rep.overall.n_synth = pooled.synth.size();
    rep.overall.rmse = sum_rmse / static_cast<double>(n_pairs);
    rep.overall.mae = sum_mae / static_cast<double>(n_pairs);
    rep.overall.dtw = sum_dtw / static_cast<double>(n_pairs);
    set_metrics_for(pooled, extractor_tag, classifier, rep.overall);
    return rep;
}

namespace {

void append_row(std::string& out, const std::string& cls, const std::string& status,
                const ClassMetrics* cm, const MetricsReport& r, bool csv) {
    char buf[256];
    if (csv) {
        if (cm) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%s,%s\n",
                          cls.c_str(), status.c_str(), cm->n_real, cm->n_synth, cm->rmse, cm->mae,
                          cm->dtw, cm->fid, cm->emd, cm->mmd, r.pairing_tag.c_str(),
                          r.extractor_tag.c_str());
        } else {
            std::snprintf(buf, sizeof(buf), "%s,%s,,,,,,,,,%s,%s\n", cls.c_str(), status.c_str(),
                          r.pairing_tag.c_str(), r.extractor_tag.c_str());
        }
    } else {
        if (cm) {
            std::snprintf(buf, sizeof(buf),
                          "%-8s %-12s %6zu %7zu %12.5g %12.5g %12.5g %12.5g %12.5g %12.5g\n",
                          cls.c_str(), status.c_str(), cm->n_real, cm->n_synth, cm->rmse, cm->mae,
                          cm->dtw, cm->fid, cm->emd, cm->mmd);
        } else {
            std::snprintf(buf, sizeof(buf), "%-8s %-12s %6s %7s\n", cls.c_str(), status.c_str(),
                          "-", "-");
        }
    }
    out += buf;
}

}  // namespace

void write_report_csv(const MetricsReport& r, const std::string& path) {
    std::string out = "class,status,n_real,n_synth,rmse,mae,dtw,fid,emd,mmd,pairing,features\n";
    for (const auto& [code, cm] : r.per_class)
        append_row(out, std::string(1, code), "ok", &cm, r, true);
    for (char code : r.missing_classes)
        append_row(out, std::string(1, code), "missing-real", nullptr, r, true);
    append_row(out, "overall", "ok", &r.overall, r, true);
    std::ofstream f(path);
    require(f.good(), "cannot open " + path);
    f << out;
    require(f.good(), "write failed: " + path);
}

std::string format_report(const MetricsReport& r) {
    char head[256];
    std::snprintf(head, sizeof(head),
                  "%-8s %-12s %6s %7s %12s %12s %12s %12s %12s %12s\n", "class", "status",
                  "n_real", "n_synth", "rmse", "mae", "dtw", "fid", "emd", "mmd");
    std::string out = head;
    for (const auto& [code, cm] : r.per_class)
        append_row(out, std::string(1, code), "ok", &cm, r, false);
    for (char code : r.missing_classes)
        append_row(out, std::string(1, code), "missing-real", nullptr, r, false);
    append_row(out, "overall", "ok", &r.overall, r, false);
    out += "pairing: " + r.pairing_tag + "  features: " + r.extractor_tag + "\n";
    return out;
}

}  // namespace hbsynth
