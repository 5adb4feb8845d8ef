#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stylebias/fmap.hpp"
#include "stylebias/rng.hpp"

namespace stylebias::nn {

// View over one parameter blob and its gradient accumulator.
struct ParamView {
    float* value = nullptr;
    float* grad = nullptr;
    std::size_t n = 0;
};

// 3x3 convolution, zero padding 1, stride 1 or 2.
struct Conv2d {
    int in_c = 0, out_c = 0, stride = 1;
    std::vector<float> w, b;    // w: out_c x (in_c*9), row-major
    std::vector<float> gw, gb;

    Conv2d() = default;
    Conv2d(int in_c_, int out_c_, int stride_);

    void he_init(Rng& rng);
    void zero_grad();
    std::vector<ParamView> params();

    int out_side(int in_side) const { return (in_side + 2 - 3) / stride + 1; }

    // col, when non-null, receives the im2col matrix for reuse in backward.
    Fmap forward(const Fmap& x, std::vector<float>* col = nullptr) const;

    void accumulate_grads(const std::vector<float>& col, const Fmap& gout);
    // Gradient wrt the layer input (which had spatial size in_h x in_w).
    Fmap input_grad(const Fmap& gout, int in_h, int in_w) const;
};

// Fully connected layer.
struct Linear {
    int in_n = 0, out_n = 0;
    std::vector<float> w, b;  // w: out_n x in_n, row-major
    std::vector<float> gw, gb;

    Linear() = default;
    Linear(int in_n_, int out_n_);

    void he_init(Rng& rng);
    void zero_grad();
    std::vector<ParamView> params();

    std::vector<float> forward(const std::vector<float>& x) const;
    void accumulate_grads(const std::vector<float>& x, const std::vector<float>& gout);
    std::vector<float> input_grad(const std::vector<float>& gout) const;
};

void relu_inplace(Fmap& f);
// grad through relu given the post-activation output
void relu_backward_inplace(Fmap& g, const Fmap& y);

Fmap upsample2_nearest(const Fmap& x);
Fmap upsample2_backward(const Fmap& gout);

std::vector<float> global_avg_pool(const Fmap& x);
Fmap global_avg_pool_backward(const std::vector<float>& gout, int h, int w);

// Softmax cross entropy; returns loss and writes dlogits if requested.
double cross_entropy(std::span<const float> logits, int label, std::vector<float>* dlogits = nullptr);

std::vector<float> softmax(std::span<const float> logits);

// SGD with momentum and decoupled-into-gradient weight decay:
//   v <- momentum*v + g + weight_decay*w ;  w <- w - lr*v
template <class Scalar>
void sgd_step(std::span<Scalar> w, std::span<const Scalar> g, std::span<Scalar> velocity,
              Scalar lr, Scalar momentum, Scalar weight_decay) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        velocity[i] = momentum * velocity[i] + g[i] + weight_decay * w[i];
        w[i] -= lr * velocity[i];
    }
}

// Adam, bias-corrected.
struct Adam {
    float lr = 1e-3f, beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
    std::vector<std::vector<float>> m, v;
    std::int64_t t = 0;

    void step(std::vector<ParamView>& params);
};

// FNV-1a over raw parameter bytes; used for isolation checks.
std::uint64_t param_hash(const std::vector<ParamView>& params);

}  // namespace stylebias::nn
