#include "stylebias/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "stylebias/serialize.hpp"

namespace stylebias {

namespace {
constexpr char kMagic[4] = {'S', 'B', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;

std::vector<std::vector<float>> snapshot_params(std::vector<nn::ParamView>& ps) {
    std::vector<std::vector<float>> snap;
    for (nn::ParamView& p : ps) snap.emplace_back(p.value, p.value + p.n);
    return snap;
}

void restore_params(std::vector<nn::ParamView>& ps, const std::vector<std::vector<float>>& snap) {
    for (std::size_t i = 0; i < ps.size(); ++i)
        std::copy(snap[i].begin(), snap[i].end(), ps[i].value);
}
}  // namespace

Classifier::Classifier(int n_classes_) : n_classes(n_classes_) {
    int in_c = 3;
    for (int i = 0; i < 4; ++i) {
        conv[i] = nn::Conv2d(in_c, kClassifierWidths[i], 2);
        in_c = kClassifierWidths[i];
    }
    head = nn::Linear(kFeatureDim, n_classes);
}

void Classifier::init(Rng& rng) {
    for (auto& c : conv) c.he_init(rng);
    head.he_init(rng);
}

Classifier::Acts Classifier::forward(const ImageTensor& img) const {
    Acts a;
    a.in = img;
    const Fmap* x = &a.in;
    for (int i = 0; i < 4; ++i) {
        a.f[i] = conv[i].forward(*x, &a.col[i]);
        nn::relu_inplace(a.f[i]);
        x = &a.f[i];
    }
    a.feat = nn::global_avg_pool(a.f[3]);
    a.logits = head.forward(a.feat);
    return a;
}

void Classifier::backward(const Acts& acts, const std::vector<float>& dlogits) {
    head.accumulate_grads(acts.feat, dlogits);
    std::vector<float> dfeat = head.input_grad(dlogits);
    Fmap g = nn::global_avg_pool_backward(dfeat, acts.f[3].h, acts.f[3].w);
    for (int i = 3; i >= 0; --i) {
        nn::relu_backward_inplace(g, acts.f[i]);
        conv[i].accumulate_grads(acts.col[i], g);
        const Fmap& in = (i == 0) ? acts.in : acts.f[i - 1];
        if (i > 0) g = conv[i].input_grad(g, in.h, in.w);
    }
}

std::vector<float> Classifier::penultimate(const ImageTensor& img) const {
    return forward(img).feat;
}

int Classifier::predict(const ImageTensor& img) const {
    const std::vector<float> logits = forward(img).logits;
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<nn::ParamView> Classifier::params() {
    std::vector<nn::ParamView> out;
    for (auto& c : conv)
        for (auto& p : c.params()) out.push_back(p);
    for (auto& p : head.params()) out.push_back(p);
    return out;
}

void Classifier::zero_grad() {
    for (auto& c : conv) c.zero_grad();
    head.zero_grad();
}

void Classifier::save(const std::filesystem::path& file, int epoch,
                      const std::string& config_hash) const {
    BinaryWriter bw(file);
    bw.u8(kVersion);
    for (char c : kMagic) bw.u8(static_cast<std::uint8_t>(c));
    bw.str(arch);
    bw.u32(static_cast<std::uint32_t>(n_classes));
    bw.u32(static_cast<std::uint32_t>(classes.size()));
    for (const std::string& c : classes) bw.str(c);
    bw.i32(epoch);
    bw.str(config_hash);
    for (const auto& c : conv) {
        bw.floats(c.w);
        bw.floats(c.b);
    }
    bw.floats(head.w);
    bw.floats(head.b);
    if (!bw.good()) throw IngestError("failed writing checkpoint: " + file.string());
}

Classifier Classifier::load(const std::filesystem::path& file, int* epoch,
                            std::string* config_hash) {
    BinaryReader br(file);
    if (br.u8() != kVersion) throw IngestError("checkpoint: unsupported version");
    for (char c : kMagic)
        if (br.u8() != static_cast<std::uint8_t>(c)) throw IngestError("checkpoint: bad magic");
    const std::string arch = br.str();
    if (arch != "smallconv") throw ShapeError("checkpoint: unsupported architecture '" + arch + "'");
    Classifier model(static_cast<int>(br.u32()));
    const std::uint32_t n_names = br.u32();
    for (std::uint32_t i = 0; i < n_names; ++i) model.classes.push_back(br.str());
    const int ep = br.i32();
    const std::string hash = br.str();
    if (epoch) *epoch = ep;
    if (config_hash) *config_hash = hash;
    for (auto& c : model.conv) {
        c.w = br.floats();
        c.b = br.floats();
    }
    model.head.w = br.floats();
    model.head.b = br.floats();
    return model;
}

namespace {

void hue_rotate(ImageTensor& img, float theta) {
    const float u = std::cos(theta), w = std::sin(theta);
    const float m[3][3] = {
        {.299f + .701f * u + .168f * w, .587f - .587f * u + .330f * w, .114f - .114f * u - .497f * w},
        {.299f - .299f * u - .328f * w, .587f + .413f * u + .035f * w, .114f - .114f * u + .292f * w},
        {.299f - .300f * u + 1.25f * w, .587f - .588f * u - 1.05f * w, .114f + .886f * u - .203f * w}};
    const int n = img.plane();
    for (int i = 0; i < n; ++i) {
        const float r = img.v[i], g = img.v[n + i], b = img.v[2 * n + i];
        img.v[i] = m[0][0] * r + m[0][1] * g + m[0][2] * b;
        img.v[n + i] = m[1][0] * r + m[1][1] * g + m[1][2] * b;
        img.v[2 * n + i] = m[2][0] * r + m[2][1] * g + m[2][2] * b;
    }
}

}  // namespace

ImageTensor augment(const ImageTensor& img, const AugmentFlags& flags, Rng& rng) {
    ImageTensor out = img;
    const int side = img.h;
    if (flags.crop) {
        const float area = uniform(rng, 0.92f, 1.0f);
        const int crop_side = std::max(1, static_cast<int>(std::lround(side * std::sqrt(area))));
        if (crop_side < side) {
            const int x0 = uniform_int(rng, 0, side - crop_side);
            const int y0 = uniform_int(rng, 0, side - crop_side);
            ImageTensor crop(3, crop_side, crop_side);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < crop_side; ++y)
                    for (int x = 0; x < crop_side; ++x)
                        crop.at(c, y, x) = out.at(c, y0 + y, x0 + x);
            out = resize_bilinear(crop, side, side);
        }
    }
    if (flags.hflip && uniform(rng, 0.f, 1.f) < 0.5f) {
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side / 2; ++x)
                    std::swap(out.at(c, y, x), out.at(c, y, side - 1 - x));
    }
    if (flags.color_jitter) {
        const float fb = uniform(rng, 0.6f, 1.4f);
        const float fc = uniform(rng, 0.6f, 1.4f);
        const float fs = uniform(rng, 0.6f, 1.4f);
        const float dh = uniform(rng, -0.1f, 0.1f);
        for (float& v : out.v) v *= fb;
        const int n = out.plane();
        double mean_gray = 0;
        for (int i = 0; i < n; ++i)
            mean_gray += .299f * out.v[i] + .587f * out.v[n + i] + .114f * out.v[2 * n + i];
        mean_gray /= n;
        for (float& v : out.v) v = static_cast<float>((v - mean_gray) * fc + mean_gray);
        for (int i = 0; i < n; ++i) {
            const float gray = .299f * out.v[i] + .587f * out.v[n + i] + .114f * out.v[2 * n + i];
            out.v[i] = (out.v[i] - gray) * fs + gray;
            out.v[n + i] = (out.v[n + i] - gray) * fs + gray;
            out.v[2 * n + i] = (out.v[2 * n + i] - gray) * fs + gray;
        }
        hue_rotate(out, dh * 2.f * 3.14159265f);
    }
    out.clamp01();
    return out;
}

void TrainConfig::validate() const {
    if (lr <= 0) throw ArgumentError("config: lr must be > 0");
    if (momentum < 0 || momentum >= 1) throw ArgumentError("config: momentum must be in [0,1)");
    if (batch_size < 1) throw ArgumentError("config: batch_size must be >= 1");
    if (lr_drop_epoch > epochs) throw ArgumentError("config: lr_drop_epoch must be <= epochs");
    if (stylization.p < 0 || stylization.p > 1) throw ArgumentError("config: p must be in [0,1]");
    if (stylization.alpha < 0 || stylization.alpha > 1)
        throw ArgumentError("config: alpha must be in [0,1]");
    if (!(val_fraction > 0 && val_fraction < 1))
        throw ArgumentError("config: val_fraction must be in (0,1)");
}

std::string RunRecord::to_jsonl() const {
    std::string out;
    for (const EpochRecord& e : epochs) {
        nlohmann::json row{{"row", "epoch"},
                           {"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"source_val_acc", e.source_val_acc},
                           {"target_acc", e.target_acc},
                           {"lr", e.lr}};
        out += row.dump() + "\n";
    }
    nlohmann::json summary{{"row", "summary"},
                           {"config_hash", config_hash},
                           {"seed", seed},
                           {"target_domain", target_domain},
                           {"selected_epoch", selected_epoch},
                           {"selected_target_acc", selected_target_acc},
                           {"max_target_acc", max_target_acc}};
    out += summary.dump() + "\n";
    return out;
}

void RunRecord::write_jsonl(const std::filesystem::path& file) const {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IngestError("cannot write run record: " + file.string());
    out << to_jsonl();
}

namespace {

struct SampleRef {
    int source = 0;  // index into sources
    int item = 0;
};

double pooled_accuracy(const Classifier& model, const std::vector<const DomainDataset*>& sources,
                       const std::vector<SampleRef>& refs) {
    if (refs.empty()) return 0;
    int correct = 0;
    for (const SampleRef& r : refs)
        correct += model.predict(sources[r.source]->items[r.item].image) ==
                   sources[r.source]->items[r.item].label;
    return static_cast<double>(correct) / refs.size();
}

}  // namespace

TrainResult train(const std::vector<const DomainDataset*>& sources, const DomainDataset& target,
                  const TrainConfig& config, const StylizerWeights* stylizer,
                  const std::vector<ImageTensor>* external_styles) {
    config.validate();
    if (sources.empty()) throw ArgumentError("train: no source domains");
    for (const DomainDataset* s : sources) {
        if (s->classes != target.classes)
            throw SchemaError("train: class vocabulary of '" + s->name + "' differs from target");
        if (s->name == target.name)
            throw SchemaError("train: target domain appears among sources");
    }
    const bool use_stylization = config.stylization.p > 0;
    if (use_stylization && !stylizer)
        throw ArgumentError("train: stylization.p > 0 requires stylizer weights");

    std::optional<StyleSampler> sampler;
    if (use_stylization)
        sampler.emplace(config.stylization.regime, sources, external_styles);

    std::vector<SampleRef> train_refs, val_refs;
    for (int s = 0; s < static_cast<int>(sources.size()); ++s) {
        const Split sp = split(*sources[s], config.val_fraction,
                               mix64(config.seed, static_cast<std::uint64_t>(s), 0x591EFULL));
        for (int i : sp.train) train_refs.push_back({s, i});
        for (int i : sp.val) val_refs.push_back({s, i});
    }

    const int n_classes = static_cast<int>(target.classes.size());
    Classifier model(n_classes);
    model.classes = target.classes;
    Rng init_rng = make_rng(config.seed, 0xC1A5ULL);
    model.init(init_rng);

    std::vector<nn::ParamView> params = model.params();
    std::vector<std::vector<float>> velocity;
    for (nn::ParamView& p : params) velocity.emplace_back(p.n, 0.f);

    RunRecord record;
    record.seed = config.seed;
    record.target_domain = target.name;

    std::vector<std::vector<float>> best_snapshot = snapshot_params(params);
    double best_val = -1;
    int best_epoch = -1;
    double best_target_at_selected = 0;
    std::vector<std::vector<float>> max_target_snapshot;
    double max_target = -1;
    int max_target_epoch = -1;

    std::vector<double> loss_history;
    const auto t_start = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double eff_lr =
            epoch < config.lr_drop_epoch ? config.lr : config.lr * config.lr_drop_factor;

        std::vector<SampleRef> order = train_refs;
        Rng shuffle_rng = make_rng(config.seed, static_cast<std::uint64_t>(epoch), 0x0DDULL);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        if (config.domain_balanced_batches) {
            // round-robin across domains after the per-epoch shuffle
            std::vector<std::vector<SampleRef>> per(sources.size());
            for (const SampleRef& r : order) per[r.source].push_back(r);
            std::vector<SampleRef> interleaved;
            interleaved.reserve(order.size());
            for (std::size_t i = 0; interleaved.size() < order.size(); ++i)
                for (const auto& bucket : per)
                    if (i < bucket.size()) interleaved.push_back(bucket[i]);
            order = std::move(interleaved);
        }

        double epoch_loss = 0;
        std::size_t n_seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            model.zero_grad();
            double batch_loss = 0;
            for (std::size_t gi = start; gi < end; ++gi) {
                const SampleRef& ref = order[gi];
                const DomainDataset& src = *sources[ref.source];
                const DatasetItem& item = src.items[ref.item];
                Rng srng = make_rng(config.seed, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(gi), 0x5AULL);
                ImageTensor x = item.image;
                auto apply_style = [&] {
                    if (!use_stylization) return;
                    TransformResult tr =
                        transform(x, src.name, *sampler, config.stylization, *stylizer, srng);
                    x = std::move(tr.image);
                };
                if (config.stylize_before_augment) apply_style();
                x = augment(x, config.augmentations, srng);
                if (!config.stylize_before_augment) apply_style();

                const Classifier::Acts acts = model.forward(x);
                std::vector<float> dlogits;
                batch_loss += nn::cross_entropy(acts.logits, item.label, &dlogits);
                model.backward(acts, dlogits);
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            batch_loss *= inv;
            if (!std::isfinite(batch_loss))
                throw TrainingError("classifier training diverged", epoch, loss_history);
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                for (std::size_t i = 0; i < params[pi].n; ++i)
                    params[pi].grad[i] *= static_cast<float>(inv);
                nn::sgd_step<float>({params[pi].value, params[pi].n},
                                    {params[pi].grad, params[pi].n},
                                    {velocity[pi].data(), params[pi].n},
                                    static_cast<float>(eff_lr), static_cast<float>(config.momentum),
                                    static_cast<float>(config.weight_decay));
            }
            epoch_loss += batch_loss * (end - start);
            n_seen += end - start;
        }
        epoch_loss /= std::max<std::size_t>(1, n_seen);
        loss_history.push_back(epoch_loss);

        const double val_acc = pooled_accuracy(model, sources, val_refs);
        const double target_acc = evaluate(model, target);
        record.epochs.push_back({epoch, epoch_loss, val_acc, target_acc, eff_lr});

        if (val_acc >= best_val) {  // ties broken by later epoch
            best_val = val_acc;
            best_epoch = epoch;
            best_target_at_selected = target_acc;
            best_snapshot = snapshot_params(params);
        }
        if (target_acc > max_target) {
            max_target = target_acc;
            max_target_epoch = epoch;
            max_target_snapshot = snapshot_params(params);
        }
    }

    record.max_target_acc = std::max(0.0, max_target);
    if (config.selection == Protocol::SourceVal) {
        record.selected_epoch = best_epoch;
        record.selected_target_acc = best_target_at_selected;
        restore_params(params, best_snapshot);
    } else {
        record.selected_epoch = max_target_epoch;
        record.selected_target_acc = record.max_target_acc;
        if (!max_target_snapshot.empty()) restore_params(params, max_target_snapshot);
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    return {std::move(model), std::move(record)};
}

double evaluate(const Classifier& model, const DomainDataset& dataset) {
    if (dataset.items.empty()) throw ArgumentError("evaluate: empty dataset");
    if (!model.classes.empty() && model.classes != dataset.classes)
        throw SchemaError("evaluate: class vocabulary mismatch");
    int correct = 0;
    for (const DatasetItem& item : dataset.items)
        correct += model.predict(item.image) == item.label;
    return static_cast<double>(correct) / dataset.items.size();
}

RunStats mean_std(const std::vector<double>& values) {
    RunStats s;
    s.values = values;
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / (values.size() - 1));
    }
    return s;
}

RunStats repeat_runs(const std::function<double(std::uint64_t)>& run, int n_runs,
                     std::uint64_t base_seed) {
    if (n_runs < 1) throw ArgumentError("repeat_runs: n_runs must be >= 1");
    std::vector<double> values;
    for (int i = 0; i < n_runs; ++i) values.push_back(run(base_seed + i));
    return mean_std(values);
}

}  // namespace stylebias
