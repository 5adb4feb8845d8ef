#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stylebias/dataset.hpp"
#include "stylebias/nn.hpp"
#include "stylebias/stylizer.hpp"

namespace stylebias {

inline constexpr std::array<int, 4> kClassifierWidths = {16, 32, 64, 128};
inline constexpr int kFeatureDim = 128;  // penultimate dimension F

// Small conv classifier: 4 stride-2 conv blocks, global average pool, linear
// head. Trained from scratch; architecture tag "smallconv".
struct Classifier {
    std::array<nn::Conv2d, 4> conv;
    nn::Linear head;
    int n_classes = 0;
    std::string arch = "smallconv";
    std::vector<std::string> classes;

    Classifier() = default;
    explicit Classifier(int n_classes_);
    void init(Rng& rng);

    struct Acts {
        Fmap in;
        std::array<Fmap, 4> f;
        std::array<std::vector<float>, 4> col;
        std::vector<float> feat;    // post-GAP penultimate features
        std::vector<float> logits;
    };
    Acts forward(const ImageTensor& img) const;
    // Accumulates parameter gradients from dlogits.
    void backward(const Acts& acts, const std::vector<float>& dlogits);

    std::vector<float> penultimate(const ImageTensor& img) const;
    int predict(const ImageTensor& img) const;

    std::vector<nn::ParamView> params();
    void zero_grad();

    void save(const std::filesystem::path& file, int epoch, const std::string& config_hash) const;
    static Classifier load(const std::filesystem::path& file, int* epoch = nullptr,
                           std::string* config_hash = nullptr);
};

struct AugmentFlags {
    bool hflip = true;
    bool crop = true;           // random area in [0.92, 1.0], resized back
    bool color_jitter = true;   // strengths 0.4/0.4/0.4/0.1
};

ImageTensor augment(const ImageTensor& img, const AugmentFlags& flags, Rng& rng);

enum class Protocol { SourceVal, MaxTarget };

struct TrainConfig {
    double lr = 0.02;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int batch_size = 32;
    int epochs = 20;
    int lr_drop_epoch = 15;      // effective lr = lr * lr_drop_factor from this epoch on
    double lr_drop_factor = 0.1;
    double val_fraction = 0.10;
    AugmentFlags augmentations;
    StylizationConfig stylization;
    Protocol selection = Protocol::SourceVal;
    bool stylize_before_augment = true;
    bool domain_balanced_batches = false;  // pooled-uniform sampling by default
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double source_val_acc = 0;
    double target_acc = 0;
    double lr = 0;
};

struct RunRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string target_domain;
    std::vector<EpochRecord> epochs;
    int selected_epoch = -1;
    double selected_target_acc = 0;
    double max_target_acc = 0;
    double wall_seconds = 0;  // kept out of the serialized rows

    // JSON-lines: one row per epoch plus a summary row. Deterministic bytes
    // for a given record (wall time excluded).
    void write_jsonl(const std::filesystem::path& file) const;
    std::string to_jsonl() const;
};

struct TrainResult {
    Classifier model;
    RunRecord record;
};

// Leave-one-domain-out training under the probabilistic-stylization objective.
// `stylizer` is required when config.stylization.p > 0. Deterministic in seed.
TrainResult train(const std::vector<const DomainDataset*>& sources, const DomainDataset& target,
                  const TrainConfig& config, const StylizerWeights* stylizer,
                  const std::vector<ImageTensor>* external_styles = nullptr);

// Argmax accuracy without augmentation.
double evaluate(const Classifier& model, const DomainDataset& dataset);

struct RunStats {
    double mean = 0;
    double stddev = 0;  // sample std; 0 for a single run
    std::vector<double> values;
};

RunStats mean_std(const std::vector<double>& values);

// Runs `run(seed)` for seeds base_seed + 0..n_runs-1.
RunStats repeat_runs(const std::function<double(std::uint64_t)>& run, int n_runs,
                     std::uint64_t base_seed);

}  // namespace stylebias
