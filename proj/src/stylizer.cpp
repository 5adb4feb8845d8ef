#include "stylebias/stylizer.hpp"

#include <cmath>

#include "stylebias/serialize.hpp"

namespace stylebias {

namespace {
constexpr char kMagic[4] = {'S', 'B', 'W', 'T'};
constexpr std::uint8_t kVersion = 1;
}  // namespace

Fmap adain(const Fmap& content_feats, const Fmap& style_feats, float eps) {
    if (content_feats.c != style_feats.c)
        throw ShapeError("adain: channel count mismatch");
    const ChannelStats cs = channel_stats(content_feats, eps);
    const ChannelStats ss = channel_stats(style_feats, eps);
    Fmap out(content_feats.c, content_feats.h, content_feats.w);
    const int n = content_feats.plane();
    for (int c = 0; c < out.c; ++c) {
        const float* src = content_feats.channel(c);
        float* dst = out.channel(c);
        const float scale = ss.std[c] / cs.std[c];
        const float shift = ss.mean[c] - cs.mean[c] * scale;
        for (int i = 0; i < n; ++i) dst[i] = src[i] * scale + shift;
    }
    return out;
}

Encoder::Encoder() {
    int in_c = 3;
    for (int i = 0; i < 4; ++i) {
        conv[i] = nn::Conv2d(in_c, kEncoderWidths[i], 2);
        in_c = kEncoderWidths[i];
    }
}

void Encoder::init(Rng& rng) {
    for (auto& c : conv) c.he_init(rng);
}

Encoder::Acts Encoder::forward(const Fmap& img) const {
    Acts a;
    a.in = img;
    const Fmap* x = &a.in;
    for (int i = 0; i < 4; ++i) {
        a.f[i] = conv[i].forward(*x, &a.col[i]);
        nn::relu_inplace(a.f[i]);
        x = &a.f[i];
    }
    return a;
}

Fmap Encoder::backward_to_input(const Acts& acts, std::array<Fmap, 4> tap_grads) const {
    Fmap g;
    for (int i = 3; i >= 0; --i) {
        if (g.v.empty()) {
            g = std::move(tap_grads[i]);
            if (g.v.empty()) continue;
        } else if (!tap_grads[i].v.empty()) {
            for (std::size_t j = 0; j < g.v.size(); ++j) g.v[j] += tap_grads[i].v[j];
        }
        nn::relu_backward_inplace(g, acts.f[i]);
        const Fmap& in = (i == 0) ? acts.in : acts.f[i - 1];
        g = conv[i].input_grad(g, in.h, in.w);
    }
    if (g.v.empty()) g = Fmap(acts.in.c, acts.in.h, acts.in.w);
    return g;
}

std::vector<nn::ParamView> Encoder::params() {
    std::vector<nn::ParamView> out;
    for (auto& c : conv)
        for (auto& p : c.params()) out.push_back(p);
    return out;
}

Decoder::Decoder() {
    const int widths[5] = {kEncoderWidths[3], kEncoderWidths[2], kEncoderWidths[1],
                           kEncoderWidths[0], 3};
    for (int i = 0; i < 4; ++i) conv[i] = nn::Conv2d(widths[i], widths[i + 1], 1);
}

void Decoder::init(Rng& rng) {
    for (auto& c : conv) c.he_init(rng);
}

Decoder::Acts Decoder::forward(const Fmap& feats) const {
    Acts a;
    a.in = feats;
    const Fmap* x = &a.in;
    for (int i = 0; i < 4; ++i) {
        a.up[i] = nn::upsample2_nearest(*x);
        a.out[i] = conv[i].forward(a.up[i], &a.col[i]);
        if (i < 3) nn::relu_inplace(a.out[i]);
        x = &a.out[i];
    }
    return a;
}

Fmap Decoder::backward(const Acts& acts, const Fmap& gout) {
    Fmap g = gout;
    for (int i = 3; i >= 0; --i) {
        if (i < 3) nn::relu_backward_inplace(g, acts.out[i]);
        conv[i].accumulate_grads(acts.col[i], g);
        g = conv[i].input_grad(g, acts.up[i].h, acts.up[i].w);
        g = nn::upsample2_backward(g);
    }
    return g;
}

std::vector<nn::ParamView> Decoder::params() {
    std::vector<nn::ParamView> out;
    for (auto& c : conv)
        for (auto& p : c.params()) out.push_back(p);
    return out;
}

void Decoder::zero_grad() {
    for (auto& c : conv) c.zero_grad();
}

StylizerWeights StylizerWeights::random_init(std::uint64_t seed) {
    StylizerWeights w;
    Rng enc_rng = make_rng(seed, 0xE4Cu);
    Rng dec_rng = make_rng(seed, 0xDECu);
    w.encoder.init(enc_rng);
    w.decoder.init(dec_rng);
    w.meta.seed = seed;
    return w;
}

void StylizerWeights::save(const std::filesystem::path& file) const {
    BinaryWriter bw(file);
    bw.u8(kVersion);
    for (char c : kMagic) bw.u8(static_cast<std::uint8_t>(c));
    bw.u32(4);
    for (int wd : kEncoderWidths) bw.u32(static_cast<std::uint32_t>(wd));
    bw.str(meta.content_corpus);
    bw.str(meta.style_corpus);
    bw.u64(meta.seed);
    bw.i32(meta.epochs);
    bw.u8(meta.trained ? 1 : 0);
    for (const auto& c : encoder.conv) {
        bw.floats(c.w);
        bw.floats(c.b);
    }
    for (const auto& c : decoder.conv) {
        bw.floats(c.w);
        bw.floats(c.b);
    }
    if (!bw.good()) throw IngestError("failed writing stylizer weights: " + file.string());
}

StylizerWeights StylizerWeights::load(const std::filesystem::path& file) {
    BinaryReader br(file);
    if (br.u8() != kVersion) throw IngestError("stylizer weights: unsupported version");
    for (char c : kMagic)
        if (br.u8() != static_cast<std::uint8_t>(c))
            throw IngestError("stylizer weights: bad magic");
    if (br.u32() != 4) throw ShapeError("stylizer weights: block count mismatch");
    for (int wd : kEncoderWidths)
        if (br.u32() != static_cast<std::uint32_t>(wd))
            throw ShapeError("stylizer weights: architecture width mismatch");
    StylizerWeights w;
    w.meta.content_corpus = br.str();
    w.meta.style_corpus = br.str();
    w.meta.seed = br.u64();
    w.meta.epochs = br.i32();
    w.meta.trained = br.u8() != 0;
    for (auto& c : w.encoder.conv) {
        c.w = br.floats();
        c.b = br.floats();
    }
    for (auto& c : w.decoder.conv) {
        c.w = br.floats();
        c.b = br.floats();
    }
    return w;
}

ImageTensor stylize(const ImageTensor& content, const ImageTensor& style, float alpha,
                    const StylizerWeights& weights) {
    if (alpha < 0.f || alpha > 1.f) throw ArgumentError("stylize: alpha must be in [0,1]");
    const Fmap style_r = resize_to_side(style, content.h);
    const Encoder::Acts fc = weights.encoder.forward(content);
    const Encoder::Acts fs = weights.encoder.forward(style_r);
    Fmap t = adain(fc.f[3], fs.f[3]);
    for (std::size_t i = 0; i < t.v.size(); ++i)
        t.v[i] = alpha * t.v[i] + (1.f - alpha) * fc.f[3].v[i];
    Decoder::Acts da = weights.decoder.forward(t);
    ImageTensor out = da.out[3];
    if (!out.same_shape(content))
        throw ShapeError("stylize: decoder output shape does not match content");
    out.clamp01();
    return out;
}

StyleSampler::StyleSampler(const StyleRegime& regime,
                           const std::vector<const DomainDataset*>& sources,
                           const std::vector<ImageTensor>* external_corpus)
    : kind_(regime.kind) {
    auto refs_of = [](const DomainDataset& d) {
        std::vector<StyleRef> refs;
        for (int i = 0; i < static_cast<int>(d.items.size()); ++i)
            refs.push_back({&d.items[i].image, d.name, i});
        return refs;
    };
    switch (kind_) {
        case StyleRegimeKind::External: {
            if (!external_corpus || external_corpus->empty())
                throw ConfigError("External regime requires a non-empty style corpus");
            for (int i = 0; i < static_cast<int>(external_corpus->size()); ++i)
                shared_.push_back({&(*external_corpus)[i], "external", i});
            break;
        }
        case StyleRegimeKind::InterSource: {
            for (const DomainDataset* s : sources) {
                std::vector<StyleRef> pool;
                for (const DomainDataset* o : sources) {
                    if (o->name == s->name) continue;
                    for (const StyleRef& r : refs_of(*o)) pool.push_back(r);
                }
                if (pool.empty())
                    throw ConfigError("InterSource: no style images outside domain '" + s->name +
                                      "' (single source?)");
                per_origin_[s->name] = std::move(pool);
            }
            break;
        }
        case StyleRegimeKind::IntraSource: {
            for (const DomainDataset* s : sources) {
                std::vector<StyleRef> pool = refs_of(*s);
                if (pool.empty())
                    throw ConfigError("IntraSource: domain '" + s->name + "' has no images");
                per_origin_[s->name] = std::move(pool);
            }
            break;
        }
        case StyleRegimeKind::LimitedSources: {
            if (regime.limited_names.empty())
                throw ConfigError("LimitedSources: empty domain set");
            for (const std::string& name : regime.limited_names) {
                bool found = false;
                for (const DomainDataset* s : sources) {
                    if (s->name != name) continue;
                    found = true;
                    for (const StyleRef& r : refs_of(*s)) shared_.push_back(r);
                }
                if (!found)
                    throw ConfigError("LimitedSources: '" + name + "' is not a source domain");
            }
            if (shared_.empty()) throw ConfigError("LimitedSources: implied style set is empty");
            break;
        }
    }
}

const std::vector<StyleRef>& StyleSampler::pool_for(const std::string& origin_domain) const {
    if (kind_ == StyleRegimeKind::External || kind_ == StyleRegimeKind::LimitedSources)
        return shared_;
    auto it = per_origin_.find(origin_domain);
    if (it == per_origin_.end())
        throw ArgumentError("transform: origin domain '" + origin_domain + "' is not a source");
    return it->second;
}

TransformResult transform(const ImageTensor& x, const std::string& origin_domain,
                          const StyleSampler& sampler, const StylizationConfig& config,
                          const StylizerWeights& weights, Rng& rng) {
    TransformResult res;
    const double roll = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (roll >= config.p) {
        res.image = x;
        return res;
    }
    const std::vector<StyleRef>& pool = sampler.pool_for(origin_domain);
    const int idx = uniform_int(rng, 0, static_cast<int>(pool.size()) - 1);
    res.image = stylize(x, *pool[idx].image, config.alpha, weights);
    res.stylized = true;
    res.style_domain = pool[idx].domain;
    res.style_index = pool[idx].index;
    return res;
}

double stylizer_loss(StylizerWeights& weights, const ImageTensor& content,
                     const ImageTensor& style, float content_weight, float style_weight,
                     bool compute_grad) {
    const Fmap style_r = resize_to_side(style, content.h);
    const Encoder::Acts fc = weights.encoder.forward(content);
    const Encoder::Acts fs = weights.encoder.forward(style_r);
    const Fmap t = adain(fc.f[3], fs.f[3]);
    const Decoder::Acts da = weights.decoder.forward(t);
    const Fmap& out = da.out[3];
    const Encoder::Acts fo = weights.encoder.forward(out);

    // content term: deepest-layer distance to the AdaIN target
    double loss = 0;
    const std::size_t n4 = t.v.size();
    for (std::size_t i = 0; i < n4; ++i) {
        const double d = fo.f[3].v[i] - t.v[i];
        loss += d * d;
    }
    loss = content_weight * loss / static_cast<double>(n4);

    // style term: mean/std distance to the style features at every tap
    std::array<ChannelStats, 4> so, ss;
    for (int l = 0; l < 4; ++l) {
        so[l] = channel_stats(fo.f[l]);
        ss[l] = channel_stats(fs.f[l]);
        double ls = 0;
        for (int c = 0; c < fo.f[l].c; ++c) {
            const double dm = so[l].mean[c] - ss[l].mean[c];
            const double dv = so[l].std[c] - ss[l].std[c];
            ls += dm * dm + dv * dv;
        }
        loss += style_weight * ls / fo.f[l].c;
    }

    if (!compute_grad) return loss;

    std::array<Fmap, 4> taps;
    for (int l = 0; l < 4; ++l) {
        const Fmap& f = fo.f[l];
        taps[l] = Fmap(f.c, f.h, f.w);
        const int n = f.plane();
        const float wl = 2.f * style_weight / f.c;
        for (int c = 0; c < f.c; ++c) {
            const float* src = f.channel(c);
            float* dst = taps[l].channel(c);
            const float dm = so[l].mean[c] - ss[l].mean[c];
            const float dv = so[l].std[c] - ss[l].std[c];
            const float a = wl * dm / n;
            const float b = wl * dv / (n * so[l].std[c]);
            for (int i = 0; i < n; ++i) dst[i] = a + b * (src[i] - so[l].mean[c]);
        }
    }
    const float cw = 2.f * content_weight / static_cast<float>(n4);
    for (std::size_t i = 0; i < n4; ++i) taps[3].v[i] += cw * (fo.f[3].v[i] - t.v[i]);

    const Fmap g_out = weights.encoder.backward_to_input(fo, std::move(taps));
    weights.decoder.backward(da, g_out);
    return loss;
}

StylizerWeights train_stylizer(const std::vector<ImageTensor>& content_corpus,
                               const std::vector<ImageTensor>& style_corpus, int epochs,
                               std::uint64_t seed, const StylizerTrainOptions& opts,
                               std::vector<double>* epoch_losses) {
    if (content_corpus.empty() || style_corpus.empty())
        throw ArgumentError("train_stylizer: corpora must be non-empty");

    StylizerWeights w = StylizerWeights::random_init(seed);
    w.meta.content_corpus = opts.content_corpus_name;
    w.meta.style_corpus = opts.style_corpus_name;
    w.meta.epochs = epochs;
    w.meta.trained = epochs > 0;
    if (epochs == 0) return w;

    nn::Adam adam;
    adam.lr = opts.lr;
    std::vector<nn::ParamView> dparams = w.decoder.params();

    std::vector<double> history;
    const int steps = std::max<int>(1, static_cast<int>(content_corpus.size()) / opts.batch_size);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(epoch), 0x7EA1ULL);
        double epoch_loss = 0;
        for (int step = 0; step < steps; ++step) {
            w.decoder.zero_grad();
            double batch_loss = 0;
            for (int b = 0; b < opts.batch_size; ++b) {
                const int ci = uniform_int(rng, 0, static_cast<int>(content_corpus.size()) - 1);
                const int si = uniform_int(rng, 0, static_cast<int>(style_corpus.size()) - 1);
                batch_loss += stylizer_loss(w, content_corpus[ci], style_corpus[si],
                                            opts.content_weight, opts.style_weight, true);
            }
            batch_loss /= opts.batch_size;
            if (!std::isfinite(batch_loss))
                throw TrainingError("stylizer training diverged", epoch, history);
            for (nn::ParamView& p : dparams)
                for (std::size_t i = 0; i < p.n; ++i) p.grad[i] /= opts.batch_size;
            adam.step(dparams);
            epoch_loss += batch_loss;
        }
        history.push_back(epoch_loss / steps);
        if (epoch_losses) *epoch_losses = history;
    }
    return w;
}

}  // namespace stylebias
