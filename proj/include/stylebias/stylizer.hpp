#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stylebias/dataset.hpp"
#include "stylebias/nn.hpp"
#include "stylebias/rng.hpp"

namespace stylebias {

// Per-channel moment transfer: content rescaled to the style channel's
// spatial mean/std. Sigma is epsilon-stabilized so constant channels stay
// finite.
Fmap adain(const Fmap& content_feats, const Fmap& style_feats, float eps = kStatsEpsilon);

inline constexpr std::array<int, 4> kEncoderWidths = {32, 64, 128, 256};

// Four stride-2 conv blocks with ReLU; taps after every block.
struct Encoder {
    std::array<nn::Conv2d, 4> conv;

    Encoder();
    void init(Rng& rng);

    struct Acts {
        Fmap in;
        std::array<Fmap, 4> f;                  // post-ReLU block outputs
        std::array<std::vector<float>, 4> col;  // im2col caches
    };
    Acts forward(const Fmap& img) const;
    // tap_grads[i] may be empty (no gradient at that tap). Returns grad wrt input.
    Fmap backward_to_input(const Acts& acts, std::array<Fmap, 4> tap_grads) const;

    std::vector<nn::ParamView> params();
};

// Mirror of the encoder: upsample + conv per block, final conv to RGB.
struct Decoder {
    std::array<nn::Conv2d, 4> conv;

    Decoder();
    void init(Rng& rng);

    struct Acts {
        Fmap in;
        std::array<Fmap, 4> up;                 // post-upsample conv inputs
        std::array<Fmap, 4> out;                // post-activation block outputs
        std::array<std::vector<float>, 4> col;
    };
    Acts forward(const Fmap& feats) const;
    // Accumulates parameter gradients; returns grad wrt the decoder input.
    Fmap backward(const Acts& acts, const Fmap& gout);

    std::vector<nn::ParamView> params();
    void zero_grad();
};

struct StylizerMeta {
    std::string content_corpus;
    std::string style_corpus;
    std::uint64_t seed = 0;
    int epochs = 0;
    bool trained = false;
};

struct StylizerWeights {
    Encoder encoder;
    Decoder decoder;
    StylizerMeta meta;

    static StylizerWeights random_init(std::uint64_t seed);

    void save(const std::filesystem::path& file) const;
    static StylizerWeights load(const std::filesystem::path& file);
};

// Feed-forward stylization: decode(alpha * adain(e(c), e(s)) + (1-alpha) * e(c)),
// clamped to [0,1]. The style image is resized to the content side first.
ImageTensor stylize(const ImageTensor& content, const ImageTensor& style, float alpha,
                    const StylizerWeights& weights);

enum class StyleRegimeKind { External, InterSource, IntraSource, LimitedSources };

struct StyleRegime {
    StyleRegimeKind kind = StyleRegimeKind::InterSource;
    std::vector<std::string> limited_names;  // LimitedSources only
};

struct StylizationConfig {
    double p = 0.1;
    float alpha = 1.f;
    StyleRegime regime;
    std::uint64_t seed = 0;
};

struct StyleRef {
    const ImageTensor* image = nullptr;
    std::string domain;
    int index = -1;
};

// Resolves the style set Q implied by a regime. Validation (empty implied
// sets, unknown domain names) happens here, at construction, not per call.
class StyleSampler {
  public:
    StyleSampler(const StyleRegime& regime, const std::vector<const DomainDataset*>& sources,
                 const std::vector<ImageTensor>* external_corpus = nullptr);

    const std::vector<StyleRef>& pool_for(const std::string& origin_domain) const;

  private:
    StyleRegimeKind kind_;
    std::map<std::string, std::vector<StyleRef>> per_origin_;  // Inter/IntraSource
    std::vector<StyleRef> shared_;                             // External/LimitedSources
};

struct TransformResult {
    ImageTensor image;
    bool stylized = false;
    std::string style_domain;  // provenance, empty when passthrough
    int style_index = -1;
};

// Probabilistic stylization: with probability config.p, replace x with a
// stylized version of itself, style drawn uniformly from the sampler's pool.
TransformResult transform(const ImageTensor& x, const std::string& origin_domain,
                          const StyleSampler& sampler, const StylizationConfig& config,
                          const StylizerWeights& weights, Rng& rng);

struct StylizerTrainOptions {
    float lr = 1e-3f;
    int batch_size = 4;
    float content_weight = 1.f;
    float style_weight = 10.f;
    std::string content_corpus_name = "content";
    std::string style_corpus_name = "style";
};

// Content + style loss of the decoder on one (content, style) pair; fills the
// decoder parameter gradients when compute_grad is set. Encoder is frozen.
double stylizer_loss(StylizerWeights& weights, const ImageTensor& content,
                     const ImageTensor& style, float content_weight, float style_weight,
                     bool compute_grad);

// Trains the decoder (Adam) against a frozen random-feature encoder.
// epochs == 0 returns the random initialization flagged untrained.
StylizerWeights train_stylizer(const std::vector<ImageTensor>& content_corpus,
                               const std::vector<ImageTensor>& style_corpus, int epochs,
                               std::uint64_t seed, const StylizerTrainOptions& opts = {},
                               std::vector<double>* epoch_losses = nullptr);

}  // namespace stylebias
