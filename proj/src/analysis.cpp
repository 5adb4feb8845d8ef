#include "stylebias/analysis.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include "stylebias/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace stylebias {

namespace {
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

std::vector<float> gram_matrix(const Fmap& feats) {
    const int c = feats.c, p = feats.plane();
    std::vector<float> g(static_cast<std::size_t>(c) * c);
    Eigen::Map<const RowMat> X(feats.v.data(), c, p);
    Eigen::Map<RowMat> G(g.data(), c, c);
    G.noalias() = X * X.transpose() / static_cast<float>(p);
    return g;
}

namespace {

struct GramLoss {
    double total = 0;
    std::array<Fmap, 4> tap_grads;  // empty when compute_grad is false
};

GramLoss gram_loss(const Encoder::Acts& acts, const Fmap& content_f3,
                   const std::array<std::vector<float>, 4>& texture_grams,
                   const GramTransferOptions& opts, bool compute_grad) {
    GramLoss out;
    const std::size_t n3 = content_f3.v.size();
    double lc = 0;
    for (std::size_t i = 0; i < n3; ++i) {
        const double d = acts.f[3].v[i] - content_f3.v[i];
        lc += d * d;
    }
    out.total = opts.content_weight * lc / static_cast<double>(n3);

    std::array<std::vector<float>, 4> diffs;
    for (int l : opts.style_taps) {
        const int c = acts.f[l].c;
        std::vector<float> g = gram_matrix(acts.f[l]);
        double ls = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] -= texture_grams[l][i];
            ls += static_cast<double>(g[i]) * g[i];
        }
        diffs[l] = std::move(g);
        out.total += opts.style_weight * ls / (static_cast<double>(c) * c);
    }
    if (!compute_grad) return out;

    for (int l : opts.style_taps) {
        const Fmap& f = acts.f[l];
        const int c = f.c, p = f.plane();
        out.tap_grads[l] = Fmap(c, f.h, f.w);
        Eigen::Map<const RowMat> D(diffs[l].data(), c, c);
        Eigen::Map<const RowMat> X(f.v.data(), c, p);
        Eigen::Map<RowMat> G(out.tap_grads[l].v.data(), c, p);
        const float scale = opts.style_weight * 4.f / (static_cast<float>(c) * c * p);
        G.noalias() = scale * (D * X);
    }
    if (out.tap_grads[3].v.empty()) out.tap_grads[3] = Fmap(acts.f[3].c, acts.f[3].h, acts.f[3].w);
    const float cw = 2.f * opts.content_weight / static_cast<float>(n3);
    for (std::size_t i = 0; i < n3; ++i)
        out.tap_grads[3].v[i] += cw * (acts.f[3].v[i] - content_f3.v[i]);
    return out;
}

}  // namespace

ImageTensor gram_style_transfer(const ImageTensor& content, const ImageTensor& texture,
                                int iterations, const Encoder& encoder,
                                const GramTransferOptions& opts,
                                std::vector<double>* loss_curve) {
    if (iterations < 1) throw ArgumentError("gram_style_transfer: iterations must be >= 1");
    const Fmap texture_r = resize_to_side(texture, content.h);
    const Encoder::Acts tex_acts = encoder.forward(texture_r);
    std::array<std::vector<float>, 4> tex_grams;
    for (int l : opts.style_taps) tex_grams[l] = gram_matrix(tex_acts.f[l]);
    const Fmap content_f3 = encoder.forward(content).f[3];

    ImageTensor x = content;
    Encoder::Acts acts = encoder.forward(x);
    double loss = gram_loss(acts, content_f3, tex_grams, opts, false).total;
    if (loss_curve) loss_curve->push_back(loss);
    float lr = opts.initial_lr;

    for (int it = 0; it < iterations; ++it) {
        GramLoss gl = gram_loss(acts, content_f3, tex_grams, opts, true);
        if (!std::isfinite(gl.total))
            throw OptimizationError("gram_style_transfer: non-finite loss", it);
        const Fmap grad = encoder.backward_to_input(acts, std::move(gl.tap_grads));

        // backtracking step: never accept an increase
        bool accepted = false;
        for (int attempt = 0; attempt < 10; ++attempt) {
            ImageTensor cand = x;
            for (std::size_t i = 0; i < cand.v.size(); ++i) cand.v[i] -= lr * grad.v[i];
            cand.clamp01();
            Encoder::Acts cand_acts = encoder.forward(cand);
            const double cand_loss = gram_loss(cand_acts, content_f3, tex_grams, opts, false).total;
            if (cand_loss <= loss) {
                x = std::move(cand);
                acts = std::move(cand_acts);
                loss = cand_loss;
                lr = std::min(opts.initial_lr, lr * 1.2f);
                accepted = true;
                break;
            }
            lr *= 0.5f;
        }
        if (loss_curve) loss_curve->push_back(loss);
        if (!accepted) break;  // converged; further steps cannot improve
    }
    return x;
}

void CueConflictSet::validate() const {
    std::vector<int> counts(classes.size(), 0);
    for (const CueConflictSample& s : samples) {
        if (s.shape_label == s.texture_label)
            throw SchemaError("cue-conflict: shape and texture labels match");
        ++counts[s.shape_label];
    }
    for (int c : counts)
        if (per_class_cap > 0 && c > per_class_cap)
            throw SchemaError("cue-conflict: per-class cap exceeded");
}


void CueConflictSet::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["classes"] = classes;
    manifest["per_class_cap"] = per_class_cap;
    manifest["seed"] = seed;
    manifest["notes"] = manifest_notes;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04zu.png", i);
        save_image(samples[i].image, dir / name);
        rows.push_back({{"file", name},
                        {"shape_label", samples[i].shape_label},
                        {"texture_label", samples[i].texture_label},
                        {"content_index", samples[i].content_index},
                        {"texture_index", samples[i].texture_index}});
    }
    manifest["samples"] = rows;
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

CueConflictSet CueConflictSet::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IngestError("missing manifest: " + (dir / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(in);
    CueConflictSet set;
    set.classes = manifest["classes"].get<std::vector<std::string>>();
    set.per_class_cap = manifest["per_class_cap"].get<int>();
    set.seed = manifest["seed"].get<std::uint64_t>();
    set.manifest_notes = manifest["notes"].get<std::vector<std::string>>();
    for (const auto& row : manifest["samples"]) {
        CueConflictSample s;
        s.image = load_image(dir / row["file"].get<std::string>());
        s.shape_label = row["shape_label"].get<int>();
        s.texture_label = row["texture_label"].get<int>();
        s.content_index = row["content_index"].get<int>();
        s.texture_index = row["texture_index"].get<int>();
        set.samples.push_back(std::move(s));
    }
    return set;
}

CueConflictSet build_cue_conflict(const std::vector<const Classifier*>& models,
                                  const DomainDataset& content_pool,
                                  const DomainDataset& texture_pool, int cap, std::uint64_t seed,
                                  const Encoder& encoder, const CueConflictOptions& opts) {
    if (models.empty()) throw ArgumentError("build_cue_conflict: need at least one model");
    if (content_pool.items.empty() || texture_pool.items.empty())
        throw ArgumentError("build_cue_conflict: pools must be non-empty");
    if (cap < 1) throw ArgumentError("build_cue_conflict: cap must be >= 1");

    auto all_correct = [&](const DatasetItem& item) {
        for (const Classifier* m : models)
            if (m->predict(item.image) != item.label) return false;
        return true;
    };

    const int n_classes = static_cast<int>(content_pool.classes.size());
    std::vector<std::vector<int>> content_by_class(n_classes);
    for (int i = 0; i < static_cast<int>(content_pool.items.size()); ++i)
        if (all_correct(content_pool.items[i]))
            content_by_class[content_pool.items[i].label].push_back(i);

    std::vector<int> textures;
    for (int i = 0; i < static_cast<int>(texture_pool.items.size()); ++i)
        if (all_correct(texture_pool.items[i])) textures.push_back(i);

    CueConflictSet set;
    set.classes = content_pool.classes;
    set.per_class_cap = cap;
    set.seed = seed;
    {
        std::size_t kept = 0;
        for (const auto& v : content_by_class) kept += v.size();
        set.manifest_notes.push_back("content survivors: " + std::to_string(kept) + "/" +
                                     std::to_string(content_pool.items.size()));
        set.manifest_notes.push_back("texture survivors: " + std::to_string(textures.size()) + "/" +
                                     std::to_string(texture_pool.items.size()));
    }

    for (int c = 0; c < n_classes; ++c) {
        std::vector<int>& pool = content_by_class[c];
        if (pool.empty()) {
            set.manifest_notes.push_back("class '" + set.classes[c] +
                                         "' omitted: no all-models-correct content");
            continue;
        }
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(c), 0xCC01ULL);
        std::shuffle(pool.begin(), pool.end(), rng);
        int taken = 0;
        for (int ci : pool) {
            if (taken >= cap) break;
            std::vector<int> candidates;
            for (int ti : textures)
                if (texture_pool.items[ti].label != c) candidates.push_back(ti);
            if (candidates.empty()) {
                set.manifest_notes.push_back("class '" + set.classes[c] +
                                             "' omitted: no different-class textures");
                break;
            }
            const int ti = candidates[uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1)];
            CueConflictSample s;
            s.image = gram_style_transfer(content_pool.items[ci].image,
                                          texture_pool.items[ti].image, opts.gram_iterations,
                                          encoder, opts.gram);
            s.shape_label = c;
            s.texture_label = texture_pool.items[ti].label;
            s.content_index = ci;
            s.texture_index = ti;
            set.samples.push_back(std::move(s));
            ++taken;
        }
    }
    set.validate();
    return set;
}

BiasReport shape_bias_from_predictions(const std::vector<int>& predictions,
                                       const std::vector<int>& shape_labels,
                                       const std::vector<int>& texture_labels, int n_classes) {
    if (predictions.empty()) throw ArgumentError("shape_bias: empty prediction table");
    if (predictions.size() != shape_labels.size() || predictions.size() != texture_labels.size())
        throw ArgumentError("shape_bias: label/prediction length mismatch");
    std::vector<int> shape_matches(n_classes, 0), texture_matches(n_classes, 0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int pred = predictions[i];
        if (pred == shape_labels[i]) ++shape_matches[pred];
        if (pred == texture_labels[i]) ++texture_matches[pred];
    }
    BiasReport report;
    report.per_class_bias.assign(n_classes, 0.0);
    report.class_defined.assign(n_classes, false);
    double sum = 0;
    int defined = 0;
    int total_shape = 0, total_tex = 0;
    for (int c = 0; c < n_classes; ++c) {
        const int den = shape_matches[c] + texture_matches[c];
        total_shape += shape_matches[c];
        total_tex += texture_matches[c];
        if (den == 0) continue;
        report.per_class_bias[c] = static_cast<double>(shape_matches[c]) / den;
        report.class_defined[c] = true;
        sum += report.per_class_bias[c];
        ++defined;
    }
    if (defined == 0) throw ReportError("shape_bias: all class denominators are zero");
    report.average_bias = sum / defined;
    report.sample_average_bias = static_cast<double>(total_shape) / (total_shape + total_tex);
    return report;
}

BiasReport shape_bias(const Classifier& model, const CueConflictSet& set) {
    if (set.samples.empty()) throw ArgumentError("shape_bias: empty cue-conflict set");
    std::vector<int> preds, ys, yt;
    for (const CueConflictSample& s : set.samples) {
        preds.push_back(model.predict(s.image));
        ys.push_back(s.shape_label);
        yt.push_back(s.texture_label);
    }
    return shape_bias_from_predictions(preds, ys, yt, static_cast<int>(set.classes.size()));
}

std::string BiasReport::to_json(const std::vector<std::string>& classes) const {
    nlohmann::json j;
    j["model"] = model_tag;
    nlohmann::json per;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (class_defined[c])
            per[classes[c]] = per_class_bias[c];
        else
            per[classes[c]] = nullptr;
    }
    j["per_class_bias"] = per;
    j["average_bias_over_classes"] = average_bias;
    j["average_bias_over_samples"] = sample_average_bias;
    if (shape_accuracy) j["shape_accuracy"] = *shape_accuracy;
    if (texture_accuracy) j["texture_accuracy"] = *texture_accuracy;
    return j.dump(2);
}

double linear_probe_cv(const std::vector<std::vector<float>>& features,
                       const std::vector<int>& labels, int n_classes, const ProbeOptions& opts) {
    const int n = static_cast<int>(features.size());
    if (n < opts.folds) throw ArgumentError("probe: set size must be >= folds");
    const int dim = static_cast<int>(features.front().size());

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(opts.seed, 0x9F01DULL);
    std::shuffle(order.begin(), order.end(), rng);

    double sum = 0;
    int used_folds = 0;
    for (int fold = 0; fold < opts.folds; ++fold) {
        std::vector<int> train_idx, val_idx;
        for (int i = 0; i < n; ++i)
            ((i % opts.folds == fold) ? val_idx : train_idx).push_back(order[i]);
        std::vector<int> seen(n_classes, 0);
        for (int i : train_idx) seen[labels[i]] = 1;
        if (std::accumulate(seen.begin(), seen.end(), 0) < 2 || val_idx.empty())
            continue;  // degenerate fold

        std::vector<float> w(static_cast<std::size_t>(n_classes) * dim, 0.f), b(n_classes, 0.f);
        auto logits_of = [&](const std::vector<float>& f) {
            std::vector<float> lg(n_classes);
            for (int c = 0; c < n_classes; ++c) {
                float s = b[c];
                const float* wc = w.data() + static_cast<std::size_t>(c) * dim;
                for (int d = 0; d < dim; ++d) s += wc[d] * f[d];
                lg[c] = s;
            }
            return lg;
        };

        double best_val = 0;
        for (int epoch = 0; epoch < opts.epochs; ++epoch) {
            std::vector<float> gw(w.size(), 0.f), gb(b.size(), 0.f);
            for (int i : train_idx) {
                std::vector<float> dlogits;
                nn::cross_entropy(logits_of(features[i]), labels[i], &dlogits);
                for (int c = 0; c < n_classes; ++c) {
                    gb[c] += dlogits[c];
                    float* gwc = gw.data() + static_cast<std::size_t>(c) * dim;
                    for (int d = 0; d < dim; ++d) gwc[d] += dlogits[c] * features[i][d];
                }
            }
            const float inv = 1.f / train_idx.size();
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= opts.lr * gw[i] * inv;
            for (int c = 0; c < n_classes; ++c) b[c] -= opts.lr * gb[c] * inv;

            int correct = 0;
            for (int i : val_idx) {
                const std::vector<float> lg = logits_of(features[i]);
                const int pred =
                    static_cast<int>(std::max_element(lg.begin(), lg.end()) - lg.begin());
                correct += pred == labels[i];
            }
            best_val = std::max(best_val, static_cast<double>(correct) / val_idx.size());
        }
        sum += best_val;
        ++used_folds;
    }
    if (used_folds == 0) throw ReportError("probe: all folds degenerate");
    return sum / used_folds;
}

double probe_accuracy(const Classifier& model, const CueConflictSet& set, ProbeLabel label,
                      const ProbeOptions& opts) {
    if (static_cast<int>(set.samples.size()) < opts.folds)
        throw ArgumentError("probe_accuracy: set size must be >= folds");
    std::vector<std::vector<float>> features;
    std::vector<int> labels;
    for (const CueConflictSample& s : set.samples) {
        features.push_back(model.penultimate(s.image));
        labels.push_back(label == ProbeLabel::Shape ? s.shape_label : s.texture_label);
    }
    return linear_probe_cv(features, labels, static_cast<int>(set.classes.size()), opts);
}

std::vector<AblationRow> limited_source_ablation(
    const DatasetGroup& group, const std::string& target,
    const std::vector<std::vector<std::string>>& subsets, int runs, const TrainConfig& base_config,
    const StylizerWeights& stylizer) {
    const LeaveOneOut loo = leave_one_out(group, target);
    std::vector<AblationRow> rows;
    for (const std::vector<std::string>& subset : subsets) {
        if (subset.empty()) throw ArgumentError("ablation: empty style-source subset");
        TrainConfig config = base_config;
        config.stylization.regime.kind = StyleRegimeKind::LimitedSources;
        config.stylization.regime.limited_names = subset;
        RunStats stats = repeat_runs(
            [&](std::uint64_t seed) {
                TrainConfig c = config;
                c.seed = seed;
                return train(loo.sources, *loo.target, c, &stylizer).record.selected_target_acc;
            },
            runs, base_config.seed);
        rows.push_back({subset, std::move(stats)});
    }
    return rows;
}

std::string render_bias_table(const std::vector<BiasReport>& reports,
                              const std::vector<std::string>& classes) {
    std::ostringstream out;
    out << "Shape Bias\n";
    out << "model";
    for (const std::string& c : classes) out << "\t" << c;
    out << "\tAvg.\n";
    out << std::fixed;
    for (const BiasReport& r : reports) {
        out << r.model_tag;
        out.precision(2);
        for (std::size_t c = 0; c < classes.size(); ++c) {
            out << "\t";
            if (r.class_defined[c])
                out << 100.0 * r.per_class_bias[c];
            else
                out << "-";
        }
        out << "\t" << 100.0 * r.average_bias << "\n";
    }
    out << "\nShape / Texture Accuracy\n";
    out << "model\tShape\tTexture\n";
    for (const BiasReport& r : reports) {
        out << r.model_tag << "\t";
        if (r.shape_accuracy)
            out << 100.0 * *r.shape_accuracy;
        else
            out << "-";
        out << "\t";
        if (r.texture_accuracy)
            out << 100.0 * *r.texture_accuracy;
        else
            out << "-";
        out << "\n";
    }
    return out.str();
}

}  // namespace stylebias
