#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "stylebias/analysis.hpp"
#include "stylebias/synth.hpp"
#include "stylebias/trainer.hpp"

using namespace stylebias;

namespace {

// Brute-force double-loop Eq. 3 oracle: per predicted class c, count
// predictions matching the shape cue and the texture cue, bias = shape/(both).
struct Eq3Oracle {
    std::vector<double> bias;
    std::vector<bool> defined;
    double average = 0;
};

Eq3Oracle eq3_brute_force(const std::vector<int>& pred, const std::vector<int>& ys,
                          const std::vector<int>& yt, int n_classes) {
    Eq3Oracle o;
    o.bias.assign(n_classes, 0.0);
    o.defined.assign(n_classes, false);
    int defined_count = 0;
    for (int c = 0; c < n_classes; ++c) {
        int shape = 0, texture = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] != c) continue;
            if (pred[i] == ys[i]) ++shape;
            if (pred[i] == yt[i]) ++texture;
        }
        if (shape + texture == 0) continue;
        o.defined[c] = true;
        o.bias[c] = static_cast<double>(shape) / (shape + texture);
        o.average += o.bias[c];
        ++defined_count;
    }
    if (defined_count > 0) o.average /= defined_count;
    return o;
}

ImageTensor random_image(Rng& rng, int side) {
    ImageTensor img(3, side, side);
    for (float& v : img.v) v = uniform(rng, 0.f, 1.f);
    return img;
}

CueConflictSet tiny_set(int n, int n_classes, int side, std::uint64_t seed) {
    CueConflictSet set;
    set.per_class_cap = n;  // generous cap
    set.seed = seed;
    for (int c = 0; c < n_classes; ++c) set.classes.push_back("class" + std::to_string(c));
    Rng rng = make_rng(seed);
    for (int i = 0; i < n; ++i) {
        CueConflictSample s;
        s.image = random_image(rng, side);
        s.shape_label = i % n_classes;
        s.texture_label = (i + 1) % n_classes;
        s.content_index = i;
        s.texture_index = i;
        set.samples.push_back(std::move(s));
    }
    return set;
}

}  // namespace

TEST_CASE("gram matrix matches a brute-force dot-product oracle on a 3x2x2 map") {
    Fmap f(3, 2, 2);
    for (int i = 0; i < 12; ++i) f.v[i] = i / 10.f - 0.3f;  // channel-major fill
    const std::vector<float> g = gram_matrix(f);
    REQUIRE(g.size() == 9);
    // Oracle: G[a][b] = dot(channel a, channel b) / 4, computed by hand.
    const std::vector<double> expected = {0.035,  -0.025, -0.085, -0.025, 0.075,
                                          0.175,  -0.085, 0.175,  0.435};
    for (int i = 0; i < 9; ++i) CHECK(g[i] == doctest::Approx(expected[i]).epsilon(1e-5));
    // Symmetry and positive semidefiniteness (v' G v >= 0 for random v).
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) CHECK(g[a * 3 + b] == g[b * 3 + a]);
    Rng rng = make_rng(4);
    for (int t = 0; t < 20; ++t) {
        float v[3] = {uniform(rng, -1.f, 1.f), uniform(rng, -1.f, 1.f), uniform(rng, -1.f, 1.f)};
        double q = 0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) q += static_cast<double>(v[a]) * g[a * 3 + b] * v[b];
        CHECK(q >= -1e-6);
    }
}

TEST_CASE("gram style transfer decreases the loss and clamps the output") {
    Rng rng = make_rng(9);
    Encoder enc;
    enc.init(rng);
    const DatasetGroup g = synthesize_group(21, 2, 2, 2, 32);
    const ImageTensor& content = g.domains[0].items[0].image;
    const ImageTensor& texture = g.domains[1].items[3].image;

    std::vector<double> curve;
    const ImageTensor out = gram_style_transfer(content, texture, 12, enc, {}, &curve);
    CHECK(out.c == content.c);
    CHECK(out.h == content.h);
    REQUIRE(curve.size() >= 2);
    CHECK(curve.back() < curve.front());
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1] + 1e-12);
    for (float v : out.v) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }

    // texture == content: already near the minimum, output stays close.
    const ImageTensor same = gram_style_transfer(content, content, 8, enc);
    double l2 = 0;
    for (std::size_t i = 0; i < same.v.size(); ++i) {
        const double d = same.v[i] - content.v[i];
        l2 += d * d;
    }
    CHECK(l2 / same.v.size() < 1e-3);

    CHECK_NOTHROW(gram_style_transfer(content, texture, 1, enc));
    CHECK_THROWS_AS(gram_style_transfer(content, texture, 0, enc), ArgumentError);
}

TEST_CASE("shape bias reproduces the hand-enumerated three-sample table") {
    // (pred, y_s, y_t): (A,A,B), (A,C,A), (B,B,A) with A=0, B=1, C=2.
    const BiasReport r = shape_bias_from_predictions({0, 0, 1}, {0, 2, 1}, {1, 0, 0}, 3);
    REQUIRE(r.per_class_bias.size() == 3);
    CHECK(r.class_defined[0]);
    CHECK(r.per_class_bias[0] == doctest::Approx(0.5));
    CHECK(r.class_defined[1]);
    CHECK(r.per_class_bias[1] == doctest::Approx(1.0));
    CHECK_FALSE(r.class_defined[2]);
    CHECK(r.average_bias == doctest::Approx(0.75));
    CHECK(r.sample_average_bias == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("shape bias agrees with the brute-force oracle on random tables") {
    Rng rng = make_rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const int n_classes = uniform_int(rng, 2, 6);
        const int n = uniform_int(rng, 1, 40);
        std::vector<int> pred(n), ys(n), yt(n);
        for (int i = 0; i < n; ++i) {
            pred[i] = uniform_int(rng, 0, n_classes - 1);
            ys[i] = uniform_int(rng, 0, n_classes - 1);
            do {
                yt[i] = uniform_int(rng, 0, n_classes - 1);
            } while (yt[i] == ys[i]);
        }
        const Eq3Oracle oracle = eq3_brute_force(pred, ys, yt, n_classes);
        const bool any_defined =
            std::any_of(oracle.defined.begin(), oracle.defined.end(), [](bool b) { return b; });
        if (!any_defined) {
            CHECK_THROWS_AS(shape_bias_from_predictions(pred, ys, yt, n_classes), ReportError);
            continue;
        }
        const BiasReport r = shape_bias_from_predictions(pred, ys, yt, n_classes);
        CHECK(r.average_bias == doctest::Approx(oracle.average).epsilon(1e-12));
        for (int c = 0; c < n_classes; ++c) {
            CHECK(r.class_defined[c] == oracle.defined[c]);
            if (oracle.defined[c])
                CHECK(r.per_class_bias[c] == doctest::Approx(oracle.bias[c]).epsilon(1e-12));
        }
    }
}

TEST_CASE("a pure shape oracle scores bias 1.0 and pure texture throws nothing") {
    // Predictions equal to the shape labels: bias 1 for every present class.
    const std::vector<int> ys = {0, 1, 2, 0, 1}, yt = {1, 2, 0, 2, 0};
    const BiasReport r = shape_bias_from_predictions(ys, ys, yt, 3);
    for (int c = 0; c < 3; ++c) {
        CHECK(r.class_defined[c]);
        CHECK(r.per_class_bias[c] == doctest::Approx(1.0));
    }
    CHECK(r.average_bias == doctest::Approx(1.0));

    // Predictions matching neither cue for any class: every denominator zero.
    CHECK_THROWS_AS(shape_bias_from_predictions({2, 2}, {0, 0}, {1, 1}, 3), ReportError);
}

TEST_CASE("linear probe reaches 1.0 on one-hot features and rejects degenerate folds") {
    std::vector<std::vector<float>> feats;
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) {
        const int y = i % 3;
        std::vector<float> f(3, 0.f);
        f[y] = 1.f;
        feats.push_back(std::move(f));
        labels.push_back(y);
    }
    ProbeOptions opts;
    opts.seed = 5;
    CHECK(linear_probe_cv(feats, labels, 3, opts) == doctest::Approx(1.0));

    // Single-class labels: every fold is degenerate.
    std::vector<int> constant(labels.size(), 1);
    CHECK_THROWS_AS(linear_probe_cv(feats, constant, 3, opts), ReportError);
}

TEST_CASE("probe accuracy leaves the backbone untouched and lands in [0,1]") {
    Rng rng = make_rng(12);
    Classifier model(3);
    model.init(rng);
    const std::uint64_t before = nn::param_hash(model.params());

    const CueConflictSet set = tiny_set(15, 3, 32, 6);
    ProbeOptions opts;
    opts.epochs = 40;
    opts.seed = 2;
    const double shape_acc = probe_accuracy(model, set, ProbeLabel::Shape, opts);
    const double texture_acc = probe_accuracy(model, set, ProbeLabel::Texture, opts);
    CHECK(shape_acc >= 0.0);
    CHECK(shape_acc <= 1.0);
    CHECK(texture_acc >= 0.0);
    CHECK(texture_acc <= 1.0);
    CHECK(nn::param_hash(model.params()) == before);
}

TEST_CASE("cue-conflict validation enforces the label and cap invariants") {
    CueConflictSet set = tiny_set(6, 3, 16, 3);
    CHECK_NOTHROW(set.validate());

    CueConflictSet bad = set;
    bad.samples[0].texture_label = bad.samples[0].shape_label;
    CHECK_THROWS_AS(bad.validate(), SchemaError);

    CueConflictSet over = set;
    over.per_class_cap = 1;  // tiny_set has 2 samples per class
    CHECK_THROWS_AS(over.validate(), SchemaError);
}

TEST_CASE("cue-conflict sets round-trip through save and load") {
    const CueConflictSet set = tiny_set(5, 3, 16, 8);
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "stylebias_cc_roundtrip";
    std::filesystem::remove_all(dir);
    set.save(dir);
    const CueConflictSet back = CueConflictSet::load(dir);
    REQUIRE(back.samples.size() == set.samples.size());
    CHECK(back.classes == set.classes);
    CHECK(back.per_class_cap == set.per_class_cap);
    CHECK(back.seed == set.seed);
    CHECK(back.manifest_notes == set.manifest_notes);
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        CHECK(back.samples[i].shape_label == set.samples[i].shape_label);
        CHECK(back.samples[i].texture_label == set.samples[i].texture_label);
        CHECK(back.samples[i].content_index == set.samples[i].content_index);
        CHECK(back.samples[i].texture_index == set.samples[i].texture_index);
        float max_err = 0.f;
        for (std::size_t j = 0; j < set.samples[i].image.v.size(); ++j)
            max_err = std::max(max_err,
                               std::abs(back.samples[i].image.v[j] - set.samples[i].image.v[j]));
        CHECK(max_err <= 1.f / 255.f + 1e-6f);  // 8-bit image quantization
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("cue-conflict builder filters, caps, pairs cross-class and is deterministic") {
    const DatasetGroup g = synthesize_group(13, 3, 3, 8, 32);
    const LeaveOneOut loo = leave_one_out(g, g.domains[2].name);
    TrainConfig c;
    c.epochs = 6;
    c.lr_drop_epoch = 5;
    c.batch_size = 8;
    c.stylization.p = 0.0;
    c.seed = 4;
    const TrainResult r = train(loo.sources, *loo.target, c, nullptr);

    Rng rng = make_rng(77);
    Encoder enc;
    enc.init(rng);
    CueConflictOptions opts;
    opts.gram_iterations = 2;

    const DomainDataset& content_pool = g.domains[0];
    const DomainDataset& texture_pool = g.domains[1];
    const std::vector<const Classifier*> models = {&r.model};
    const CueConflictSet set =
        build_cue_conflict(models, content_pool, texture_pool, 2, 19, enc, opts);

    REQUIRE_FALSE(set.samples.empty());
    std::vector<int> per_class(3, 0);
    for (const CueConflictSample& s : set.samples) {
        CHECK(s.shape_label != s.texture_label);
        CHECK(content_pool.items[s.content_index].label == s.shape_label);
        CHECK(texture_pool.items[s.texture_index].label == s.texture_label);
        // provenance: both source images survived the all-models-correct filter
        CHECK(r.model.predict(content_pool.items[s.content_index].image) == s.shape_label);
        CHECK(r.model.predict(texture_pool.items[s.texture_index].image) == s.texture_label);
        ++per_class[s.shape_label];
    }
    for (int n : per_class) CHECK(n <= 2);
    REQUIRE(set.manifest_notes.size() >= 2);
    CHECK(set.manifest_notes[0].rfind("content survivors:", 0) == 0);
    CHECK(set.manifest_notes[1].rfind("texture survivors:", 0) == 0);

    const CueConflictSet again =
        build_cue_conflict(models, content_pool, texture_pool, 2, 19, enc, opts);
    REQUIRE(again.samples.size() == set.samples.size());
    for (std::size_t i = 0; i < set.samples.size(); ++i)
        CHECK(again.samples[i].image.v == set.samples[i].image.v);
}

TEST_CASE("cue-conflict builder reports omissions when no content survives") {
    const DatasetGroup g = synthesize_group(14, 2, 3, 4, 32);
    Rng rng = make_rng(5);
    Classifier model(3);
    model.init(rng);

    // Mislabeled pool: a model can never be "correct", so every class is omitted.
    DomainDataset shifted = g.domains[0];
    for (DatasetItem& item : shifted.items) {
        const int pred = model.predict(item.image);
        item.label = (pred + 1) % 3;
    }
    Encoder enc;
    enc.init(rng);
    const std::vector<const Classifier*> models = {&model};
    const CueConflictSet set = build_cue_conflict(models, shifted, shifted, 2, 3, enc, {});
    CHECK(set.samples.empty());
    int omissions = 0;
    for (const std::string& note : set.manifest_notes)
        if (note.find("omitted") != std::string::npos) ++omissions;
    CHECK(omissions == 3);
}

TEST_CASE("limited-source ablation emits one row per subset with per-run values") {
    const DatasetGroup g = synthesize_group(17, 3, 3, 6, 32);
    std::vector<ImageTensor> corpus;
    for (const DomainDataset& d : g.domains)
        for (const DatasetItem& item : d.items) corpus.push_back(item.image);
    const StylizerWeights stylizer = train_stylizer(corpus, corpus, 1, 3);

    TrainConfig base;
    base.epochs = 2;
    base.lr_drop_epoch = 2;
    base.batch_size = 8;
    base.stylization.p = 0.5;
    base.seed = 11;
    const std::string d0 = g.domains[0].name, d1 = g.domains[1].name;
    const std::vector<std::vector<std::string>> subsets = {{d0}, {d0, d1}};
    const std::vector<AblationRow> rows =
        limited_source_ablation(g, g.domains[2].name, subsets, 2, base, stylizer);
    REQUIRE(rows.size() == 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].subset == subsets[i]);
        CHECK(rows[i].stats.values.size() == 2);
        for (double v : rows[i].stats.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_THROWS_AS(limited_source_ablation(g, g.domains[2].name, {{}}, 1, base, stylizer),
                    ArgumentError);
}

TEST_CASE("bias table rendering includes classes, tags, and undefined markers") {
    BiasReport r = shape_bias_from_predictions({0, 0, 1}, {0, 2, 1}, {1, 0, 0}, 3);
    r.model_tag = "baseline";
    r.shape_accuracy = 0.5;
    r.texture_accuracy = 0.75;
    const std::string table = render_bias_table({r}, {"circle", "square", "bar"});
    CHECK(table.find("baseline") != std::string::npos);
    CHECK(table.find("circle") != std::string::npos);
    CHECK(table.find("50.00") != std::string::npos);   // bias(circle) = 1/2
    CHECK(table.find("100.00") != std::string::npos);  // bias(square) = 1
    CHECK(table.find("-") != std::string::npos);       // bar undefined
    CHECK(table.find("75.00") != std::string::npos);   // average and texture accuracy
}
