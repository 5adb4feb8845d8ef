#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "stylebias/errors.hpp"

namespace stylebias {

// Dense CHW feature map / image. Images are c=3, h=w, values in [0,1].
struct Fmap {
    int c = 0, h = 0, w = 0;
    std::vector<float> v;

    Fmap() = default;
    Fmap(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.f) {}

    std::size_t size() const { return v.size(); }
    int plane() const { return h * w; }
    float* channel(int ci) { return v.data() + static_cast<std::size_t>(ci) * plane(); }
    const float* channel(int ci) const { return v.data() + static_cast<std::size_t>(ci) * plane(); }
    float& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
    float at(int ci, int y, int x) const { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }

    bool same_shape(const Fmap& o) const { return c == o.c && h == o.h && w == o.w; }

    bool finite() const {
        for (float x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void clamp01() {
        for (float& x : v) x = std::clamp(x, 0.f, 1.f);
    }
};

using ImageTensor = Fmap;

// Per-channel spatial mean and epsilon-stabilized std.
struct ChannelStats {
    std::vector<float> mean, std;
};

inline constexpr float kStatsEpsilon = 1e-5f;

inline ChannelStats channel_stats(const Fmap& f, float eps = kStatsEpsilon) {
    ChannelStats s;
    s.mean.resize(f.c);
    s.std.resize(f.c);
    const int n = f.plane();
    for (int c = 0; c < f.c; ++c) {
        const float* p = f.channel(c);
        double m = 0;
        for (int i = 0; i < n; ++i) m += p[i];
        m /= n;
        double var = 0;
        for (int i = 0; i < n; ++i) {
            double d = p[i] - m;
            var += d * d;
        }
        var /= n;
        s.mean[c] = static_cast<float>(m);
        s.std[c] = static_cast<float>(std::sqrt(var + eps));
    }
    return s;
}

// Bilinear resize of a CHW map to side x side.
Fmap resize_bilinear(const Fmap& src, int out_h, int out_w);

inline Fmap resize_to_side(const Fmap& src, int side) {
    if (src.h == side && src.w == side) return src;
    return resize_bilinear(src, side, side);
}

}  // namespace stylebias
