#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "hbsynth/error.hpp"

namespace hbsynth {

/// Dense row-major (channels, height, width) array of doubles.
/// The workhorse container for spectrogram grids and network activations.
struct Tensor3 {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor3() = default;
    Tensor3(int c_, int h_, int w_, double fill = 0.0)
        : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor3& o) const { return c == o.c && h == o.h && w == o.w; }

    double& at(int ci, int hi, int wi) {
        return v[(static_cast<std::size_t>(ci) * h + hi) * w + wi];
    }
    double at(int ci, int hi, int wi) const {
        return v[(static_cast<std::size_t>(ci) * h + hi) * w + wi];
    }

    double* plane(int ci) { return v.data() + static_cast<std::size_t>(ci) * h * w; }
    const double* plane(int ci) const { return v.data() + static_cast<std::size_t>(ci) * h * w; }

    double* row(int ci, int hi) { return plane(ci) + static_cast<std::size_t>(hi) * w; }
    const double* row(int ci, int hi) const { return plane(ci) + static_cast<std::size_t>(hi) * w; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

inline void check_same_shape(const Tensor3& a, const Tensor3& b, const char* what) {
    require(a.same_shape(b), what);
}

}  // namespace hbsynth
