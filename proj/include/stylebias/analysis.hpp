#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stylebias/dataset.hpp"
#include "stylebias/stylizer.hpp"
#include "stylebias/trainer.hpp"

namespace stylebias {

// Channel inner-product matrix of a feature map, normalized by the number of
// spatial positions: G = X X^T / (h*w), with X the c x (h*w) unrolling.
std::vector<float> gram_matrix(const Fmap& feats);  // c*c row-major

struct GramTransferOptions {
    float content_weight = 1.f;
    float style_weight = 1e3f;
    float initial_lr = 0.05f;
    std::vector<int> style_taps = {0, 1, 2, 3};  // encoder blocks used for the Gram terms
};

// Iterative pixel-space style transfer: optimizes the image (initialized at
// the content) against deep-feature content loss plus Gram-matrix style loss
// computed with the stylizer's encoder. Steps that would increase the loss
// are retried with a halved rate, so the full-run loss is non-increasing.
ImageTensor gram_style_transfer(const ImageTensor& content, const ImageTensor& texture,
                                int iterations, const Encoder& encoder,
                                const GramTransferOptions& opts = {},
                                std::vector<double>* loss_curve = nullptr);

struct CueConflictSample {
    ImageTensor image;
    int shape_label = 0;    // y_s
    int texture_label = 0;  // y_t, always != y_s
    int content_index = -1;  // provenance into the content pool
    int texture_index = -1;  // provenance into the texture pool
};

struct CueConflictSet {
    std::vector<CueConflictSample> samples;
    int per_class_cap = 0;
    std::vector<std::string> classes;
    std::uint64_t seed = 0;
    std::vector<std::string> manifest_notes;  // omissions and filter counts

    void validate() const;  // y_s != y_t, per-class cap
    void save(const std::filesystem::path& dir) const;  // images + manifest.json
    static CueConflictSet load(const std::filesystem::path& dir);
};

struct CueConflictOptions {
    int gram_iterations = 150;
    GramTransferOptions gram;
};

// Filters both pools to all-models-correct items, pairs each surviving
// content image with a random different-class texture, caps per shape class,
// and stylizes each pair. Deterministic in seed.
CueConflictSet build_cue_conflict(const std::vector<const Classifier*>& models,
                                  const DomainDataset& content_pool,
                                  const DomainDataset& texture_pool, int cap, std::uint64_t seed,
                                  const Encoder& encoder, const CueConflictOptions& opts = {});

struct BiasReport {
    std::string model_tag;
    std::vector<double> per_class_bias;       // indexed by class
    std::vector<bool> class_defined;          // zero-denominator classes excluded
    double average_bias = 0;                  // unweighted mean over defined classes
    double sample_average_bias = 0;           // shape-matches / (shape+texture matches)
    std::optional<double> shape_accuracy;     // filled by probe runs
    std::optional<double> texture_accuracy;

    std::string to_json(const std::vector<std::string>& classes) const;
};

// Per-class shape bias: among cue-conflict predictions of class c that match
// either cue, the fraction matching the shape cue.
BiasReport shape_bias(const Classifier& model, const CueConflictSet& set);

// Same computation on a precomputed prediction table (one entry per sample).
BiasReport shape_bias_from_predictions(const std::vector<int>& predictions,
                                       const std::vector<int>& shape_labels,
                                       const std::vector<int>& texture_labels, int n_classes);

struct ProbeOptions {
    int folds = 5;
    int epochs = 200;
    float lr = 0.01f;
    std::uint64_t seed = 0;
};

enum class ProbeLabel { Shape, Texture };

// Five-fold CV linear probe on arbitrary fixed feature vectors (full-batch
// gradient descent on a softmax head; per-fold max validation accuracy).
double linear_probe_cv(const std::vector<std::vector<float>>& features,
                       const std::vector<int>& labels, int n_classes, const ProbeOptions& opts);

// Five-fold CV linear probe on frozen penultimate features; returns the mean
// over folds of the max validation accuracy over probe training.
double probe_accuracy(const Classifier& model, const CueConflictSet& set, ProbeLabel label,
                      const ProbeOptions& opts = {});

struct AblationRow {
    std::vector<std::string> subset;
    RunStats stats;
};

// Table 5-style sweep: one train/evaluate cycle per style-source subset per
// run, using the LimitedSources regime.
std::vector<AblationRow> limited_source_ablation(
    const DatasetGroup& group, const std::string& target,
    const std::vector<std::vector<std::string>>& subsets, int runs, const TrainConfig& base_config,
    const StylizerWeights& stylizer);

// Text rendering of bias / probe results in the two-table layout.
std::string render_bias_table(const std::vector<BiasReport>& reports,
                              const std::vector<std::string>& classes);

}  // namespace stylebias
