#include "stylebias/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

namespace stylebias::nn {

namespace {
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

// col is (in_c*9) x (oh*ow), column-major: one column per output position.
void im2col(const Fmap& x, int stride, std::vector<float>& col, int oh, int ow) {
    const int K = x.c * 9;
    col.assign(static_cast<std::size_t>(K) * oh * ow, 0.f);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            float* dst = col.data() + (static_cast<std::size_t>(oy) * ow + ox) * K;
            const int iy0 = oy * stride - 1, ix0 = ox * stride - 1;
            for (int c = 0; c < x.c; ++c) {
                const float* src = x.channel(c);
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= x.h) { dst += 3; continue; }
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = ix0 + kx;
                        *dst++ = (ix >= 0 && ix < x.w) ? src[iy * x.w + ix] : 0.f;
                    }
                }
            }
        }
    }
}

void col2im(const std::vector<float>& col, int stride, Fmap& gx, int oh, int ow) {
    const int K = gx.c * 9;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const float* src = col.data() + (static_cast<std::size_t>(oy) * ow + ox) * K;
            const int iy0 = oy * stride - 1, ix0 = ox * stride - 1;
            for (int c = 0; c < gx.c; ++c) {
                float* dst = gx.channel(c);
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= gx.h) { src += 3; continue; }
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix >= 0 && ix < gx.w) dst[iy * gx.w + ix] += *src;
                        ++src;
                    }
                }
            }
        }
    }
}
}  // namespace

Conv2d::Conv2d(int in_c_, int out_c_, int stride_)
    : in_c(in_c_), out_c(out_c_), stride(stride_),
      w(static_cast<std::size_t>(out_c_) * in_c_ * 9, 0.f), b(out_c_, 0.f),
      gw(w.size(), 0.f), gb(b.size(), 0.f) {}

void Conv2d::he_init(Rng& rng) {
    const float s = std::sqrt(2.f / (in_c * 9));
    for (float& x : w) x = normal(rng, 0.f, s);
    for (float& x : b) x = 0.f;
}

void Conv2d::zero_grad() {
    std::fill(gw.begin(), gw.end(), 0.f);
    std::fill(gb.begin(), gb.end(), 0.f);
}

std::vector<ParamView> Conv2d::params() {
    return {{w.data(), gw.data(), w.size()}, {b.data(), gb.data(), b.size()}};
}

Fmap Conv2d::forward(const Fmap& x, std::vector<float>* col) const {
    if (x.c != in_c) throw ShapeError("conv: input channels mismatch");
    const int oh = out_side(x.h), ow = out_side(x.w);
    std::vector<float> local;
    std::vector<float>& cl = col ? *col : local;
    im2col(x, stride, cl, oh, ow);

    Fmap y(out_c, oh, ow);
    const int K = in_c * 9, P = oh * ow;
    Eigen::Map<const RowMat> W(w.data(), out_c, K);
    Eigen::Map<const ColMat> C(cl.data(), K, P);
    Eigen::Map<RowMat> Y(y.v.data(), out_c, P);
    Y.noalias() = W * C;
    for (int c = 0; c < out_c; ++c) Y.row(c).array() += b[c];
    return y;
}

void Conv2d::accumulate_grads(const std::vector<float>& col, const Fmap& gout) {
    const int P = gout.h * gout.w, K = in_c * 9;
    Eigen::Map<const RowMat> GY(gout.v.data(), out_c, P);
    Eigen::Map<const ColMat> C(col.data(), K, P);
    Eigen::Map<RowMat> GW(gw.data(), out_c, K);
    GW.noalias() += GY * C.transpose();
    // Plain reduction: Eigen's redux over a Map peels to an aligned start
    // that depends on the heap address, breaking bit-exact reproducibility.
    for (int c = 0; c < out_c; ++c) {
        const float* gy = gout.v.data() + static_cast<size_t>(c) * P;
        float acc = 0.f;
        for (int p = 0; p < P; ++p) acc += gy[p];
        gb[c] += acc;
    }
}

Fmap Conv2d::input_grad(const Fmap& gout, int in_h, int in_w) const {
    const int oh = gout.h, ow = gout.w, P = oh * ow, K = in_c * 9;
    Eigen::Map<const RowMat> GY(gout.v.data(), out_c, P);
    std::vector<float> gcol(static_cast<std::size_t>(K) * P);
    Eigen::Map<ColMat> GC(gcol.data(), K, P);
    Eigen::Map<const RowMat> W(w.data(), out_c, K);
    GC.noalias() = W.transpose() * GY;
    Fmap gx(in_c, in_h, in_w);
    col2im(gcol, stride, gx, oh, ow);
    return gx;
}

Linear::Linear(int in_n_, int out_n_)
    : in_n(in_n_), out_n(out_n_), w(static_cast<std::size_t>(in_n_) * out_n_, 0.f),
      b(out_n_, 0.f), gw(w.size(), 0.f), gb(b.size(), 0.f) {}

void Linear::he_init(Rng& rng) {
    const float s = std::sqrt(2.f / in_n);
    for (float& x : w) x = normal(rng, 0.f, s);
    for (float& x : b) x = 0.f;
}

void Linear::zero_grad() {
    std::fill(gw.begin(), gw.end(), 0.f);
    std::fill(gb.begin(), gb.end(), 0.f);
}

std::vector<ParamView> Linear::params() {
    return {{w.data(), gw.data(), w.size()}, {b.data(), gb.data(), b.size()}};
}

std::vector<float> Linear::forward(const std::vector<float>& x) const {
    if (static_cast<int>(x.size()) != in_n) throw ShapeError("linear: input size mismatch");
    // Plain loops: Eigen's gemv picks aligned/unaligned kernels from the
    // runtime pointer address, which breaks bit-exact reproducibility.
    std::vector<float> y(out_n);
    for (int i = 0; i < out_n; ++i) {
        float acc = b[i];
        const float* wi = w.data() + static_cast<size_t>(i) * in_n;
        for (int j = 0; j < in_n; ++j) acc += wi[j] * x[j];
        y[i] = acc;
    }
    return y;
}

void Linear::accumulate_grads(const std::vector<float>& x, const std::vector<float>& gout) {
    for (int i = 0; i < out_n; ++i) {
        float* gwi = gw.data() + static_cast<size_t>(i) * in_n;
        for (int j = 0; j < in_n; ++j) gwi[j] += gout[i] * x[j];
        gb[i] += gout[i];
    }
}

std::vector<float> Linear::input_grad(const std::vector<float>& gout) const {
    std::vector<float> gx(in_n, 0.f);
    for (int i = 0; i < out_n; ++i) {
        const float* wi = w.data() + static_cast<size_t>(i) * in_n;
        for (int j = 0; j < in_n; ++j) gx[j] += wi[j] * gout[i];
    }
    return gx;
}

void relu_inplace(Fmap& f) {
    for (float& x : f.v)
        if (x < 0.f) x = 0.f;
}

void relu_backward_inplace(Fmap& g, const Fmap& y) {
    for (std::size_t i = 0; i < g.v.size(); ++i)
        if (y.v[i] <= 0.f) g.v[i] = 0.f;
}

Fmap upsample2_nearest(const Fmap& x) {
    Fmap y(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c) {
        const float* src = x.channel(c);
        float* dst = y.channel(c);
        for (int iy = 0; iy < x.h; ++iy)
            for (int ix = 0; ix < x.w; ++ix) {
                const float val = src[iy * x.w + ix];
                float* d = dst + (2 * iy) * y.w + 2 * ix;
                d[0] = val; d[1] = val;
                d[y.w] = val; d[y.w + 1] = val;
            }
    }
    return y;
}

Fmap upsample2_backward(const Fmap& gout) {
    Fmap gx(gout.c, gout.h / 2, gout.w / 2);
    for (int c = 0; c < gout.c; ++c) {
        const float* src = gout.channel(c);
        float* dst = gx.channel(c);
        for (int iy = 0; iy < gx.h; ++iy)
            for (int ix = 0; ix < gx.w; ++ix) {
                const float* s = src + (2 * iy) * gout.w + 2 * ix;
                dst[iy * gx.w + ix] = s[0] + s[1] + s[gout.w] + s[gout.w + 1];
            }
    }
    return gx;
}

std::vector<float> global_avg_pool(const Fmap& x) {
    std::vector<float> y(x.c);
    const int n = x.plane();
    for (int c = 0; c < x.c; ++c) {
        const float* p = x.channel(c);
        double s = 0;
        for (int i = 0; i < n; ++i) s += p[i];
        y[c] = static_cast<float>(s / n);
    }
    return y;
}

Fmap global_avg_pool_backward(const std::vector<float>& gout, int h, int w) {
    Fmap gx(static_cast<int>(gout.size()), h, w);
    const float inv = 1.f / (h * w);
    for (int c = 0; c < gx.c; ++c) {
        float* p = gx.channel(c);
        const float g = gout[c] * inv;
        for (int i = 0; i < h * w; ++i) p[i] = g;
    }
    return gx;
}

std::vector<float> softmax(std::span<const float> logits) {
    float mx = logits[0];
    for (float x : logits) mx = std::max(mx, x);
    std::vector<float> p(logits.size());
    double z = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (float& x : p) x = static_cast<float>(x / z);
    return p;
}

double cross_entropy(std::span<const float> logits, int label, std::vector<float>* dlogits) {
    if (label < 0 || label >= static_cast<int>(logits.size()))
        throw ArgumentError("cross_entropy: label out of range");
    for (float x : logits)
        if (!std::isfinite(x)) throw ArgumentError("cross_entropy: non-finite logits");
    float mx = logits[0];
    for (float x : logits) mx = std::max(mx, x);
    double z = 0;
    for (float x : logits) z += std::exp(static_cast<double>(x) - mx);
    const double logz = std::log(z) + mx;
    const double loss = logz - logits[label];
    if (dlogits) {
        dlogits->resize(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i)
            (*dlogits)[i] = static_cast<float>(std::exp(logits[i] - logz));
        (*dlogits)[label] -= 1.f;
    }
    return loss;
}

void Adam::step(std::vector<ParamView>& params) {
    if (m.empty()) {
        m.resize(params.size());
        v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i].assign(params[i].n, 0.f);
            v[i].assign(params[i].n, 0.f);
        }
    }
    ++t;
    const float bc1 = 1.f - std::pow(beta1, static_cast<float>(t));
    const float bc2 = 1.f - std::pow(beta2, static_cast<float>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        ParamView& p = params[i];
        for (std::size_t j = 0; j < p.n; ++j) {
            const float g = p.grad[j];
            m[i][j] = beta1 * m[i][j] + (1.f - beta1) * g;
            v[i][j] = beta2 * v[i][j] + (1.f - beta2) * g * g;
            const float mh = m[i][j] / bc1, vh = v[i][j] / bc2;
            p.value[j] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

std::uint64_t param_hash(const std::vector<ParamView>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const ParamView& p : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.value);
        for (std::size_t i = 0; i < p.n * sizeof(float); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace stylebias::nn
