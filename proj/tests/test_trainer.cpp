#include <doctest.h>
#include <algorithm>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stylebias/synth.hpp"
#include "stylebias/trainer.hpp"

#include "dref.hpp"

using namespace stylebias;

namespace {

// Double-precision reference of the classifier cross-entropy loss, used as
// the finite-difference oracle (see dref.hpp).
double ref_classifier_loss(const Classifier& model, const ImageTensor& img, int label) {
    dref::DShape sh{img.c, img.h, img.w};
    dref::DMap x = dref::to_dmap(img);
    for (int i = 0; i < 4; ++i) {
        x = dref::dconv(x, sh, model.conv[i]);
        dref::drelu(x);
    }
    std::vector<double> feat(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) {
        double m = 0;
        for (double v : x[c]) m += v;
        feat[c] = m / x[c].size();
    }
    const int out_n = model.head.out_n, in_n = model.head.in_n;
    std::vector<double> logits(out_n);
    for (int i = 0; i < out_n; ++i) {
        double acc = model.head.b[i];
        for (int j = 0; j < in_n; ++j)
            acc += static_cast<double>(model.head.w[static_cast<std::size_t>(i) * in_n + j]) *
                   feat[j];
        logits[i] = acc;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double l : logits) z += std::exp(l - mx);
    return std::log(z) - (logits[label] - mx);
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.epochs = 3;
    c.lr_drop_epoch = 2;
    c.batch_size = 8;
    c.stylization.p = 0.0;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("classifier shapes, prediction range, and feature dimension") {
    Rng rng = make_rng(1);
    Classifier model(5);
    model.init(rng);
    ImageTensor img(3, 48, 48);
    for (float& v : img.v) v = uniform(rng, 0.f, 1.f);
    const Classifier::Acts acts = model.forward(img);
    CHECK(acts.logits.size() == 5);
    CHECK(acts.feat.size() == kFeatureDim);
    const int pred = model.predict(img);
    CHECK(pred >= 0);
    CHECK(pred < 5);
    CHECK(model.penultimate(img).size() == kFeatureDim);
}

TEST_CASE("classifier loss gradients match finite differences") {
    Rng rng = make_rng(3);
    Classifier model(3);
    model.init(rng);
    ImageTensor img(3, 32, 32);
    for (float& v : img.v) v = uniform(rng, 0.f, 1.f);
    const int label = 1;

    model.zero_grad();
    Classifier::Acts acts = model.forward(img);
    std::vector<float> dlogits;
    nn::cross_entropy(acts.logits, label, &dlogits);
    model.backward(acts, dlogits);

    std::vector<nn::ParamView> params = model.params();
    Rng pick = make_rng(17);
    int checked = 0;
    for (int trial = 0; trial < 80 && checked < 25; ++trial) {
        nn::ParamView& blob = params[uniform_int(pick, 0, static_cast<int>(params.size()) - 1)];
        const int i = uniform_int(pick, 0, static_cast<int>(blob.n) - 1);
        const float keep = blob.value[i];
        auto loss_at = [&](float h) {
            blob.value[i] = keep + h;
            const double l = ref_classifier_loss(model, img, label);
            blob.value[i] = keep;
            return l;
        };
        // Small step: the double-precision reference has no round-off pressure,
        // and a tiny h stays on one side of nearby relu kinks. Divide by the
        // exact float-representable step, not the nominal one.
        auto fd_at = [&](float h) {
            const double hp = static_cast<double>(keep + h) - keep;
            const double hm = static_cast<double>(keep) - static_cast<double>(keep - h);
            return (loss_at(h) - loss_at(-h)) / (hp + hm);
        };
        const double f1 = fd_at(2e-5f), f2 = fd_at(1e-5f);
        if (std::abs(f1 - f2) > 1e-4 * std::max(1.0, std::abs(f2))) continue;  // relu kinks
        if (std::abs(f2) < 1e-5) continue;                                     // dead units
        CHECK(std::abs(blob.grad[i] - f2) <= 1e-3 * std::max(1.0, std::abs(f2)));
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("augmentations are deterministic, bounded, and optional") {
    const DatasetGroup g = synthesize_group(8, 2, 3, 2, 48);
    const ImageTensor& img = g.domains[0].items[0].image;

    AugmentFlags off;
    off.hflip = off.crop = off.color_jitter = false;
    Rng rng = make_rng(1);
    CHECK(augment(img, off, rng).v == img.v);  // no-op when all flags are off

    AugmentFlags on;
    Rng r1 = make_rng(2), r2 = make_rng(2);
    const ImageTensor a = augment(img, on, r1);
    const ImageTensor b = augment(img, on, r2);
    CHECK(a.v == b.v);
    CHECK(a.h == img.h);
    for (float v : a.v) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }
    Rng r3 = make_rng(3);
    CHECK(augment(img, on, r3).v != a.v);  // different stream, different crop/jitter
}

TEST_CASE("training is deterministic in config and seed") {
    const DatasetGroup g = synthesize_group(10, 3, 3, 6, 48);
    const LeaveOneOut loo = leave_one_out(g, g.domains[2].name);
    const TrainConfig c = tiny_config();

    TrainResult a = train(loo.sources, *loo.target, c, nullptr);
    TrainResult b = train(loo.sources, *loo.target, c, nullptr);
    CHECK(a.record.to_jsonl() == b.record.to_jsonl());
    CHECK(nn::param_hash(a.model.params()) == nn::param_hash(b.model.params()));

    TrainConfig c2 = c;
    c2.seed = 6;
    TrainResult d = train(loo.sources, *loo.target, c2, nullptr);
    CHECK(nn::param_hash(d.model.params()) != nn::param_hash(a.model.params()));
}

TEST_CASE("learning-rate schedule drops at the configured epoch") {
    const DatasetGroup g = synthesize_group(10, 2, 3, 4, 48);
    const LeaveOneOut loo = leave_one_out(g, g.domains[1].name);
    TrainConfig c = tiny_config();
    c.epochs = 4;
    c.lr_drop_epoch = 2;
    const TrainResult r = train(loo.sources, *loo.target, c, nullptr);
    REQUIRE(r.record.epochs.size() == 4);
    CHECK(r.record.epochs[0].lr == doctest::Approx(c.lr));
    CHECK(r.record.epochs[1].lr == doctest::Approx(c.lr));
    CHECK(r.record.epochs[2].lr == doctest::Approx(c.lr * c.lr_drop_factor));
    CHECK(r.record.epochs[3].lr == doctest::Approx(c.lr * c.lr_drop_factor));
}

TEST_CASE("max-target protocol dominates source-val selection") {
    const DatasetGroup g = synthesize_group(10, 3, 3, 6, 48);
    const LeaveOneOut loo = leave_one_out(g, g.domains[2].name);
    TrainConfig c = tiny_config();
    c.epochs = 4;
    c.lr_drop_epoch = 3;

    const TrainResult sv = train(loo.sources, *loo.target, c, nullptr);
    CHECK(sv.record.max_target_acc >= sv.record.selected_target_acc);

    c.selection = Protocol::MaxTarget;
    const TrainResult mt = train(loo.sources, *loo.target, c, nullptr);
    CHECK(mt.record.selected_target_acc == doctest::Approx(mt.record.max_target_acc));
    CHECK(mt.record.selected_target_acc >= sv.record.selected_target_acc);
}

TEST_CASE("training rejects inconsistent inputs") {
    const DatasetGroup g = synthesize_group(10, 3, 3, 4, 48);
    const LeaveOneOut loo = leave_one_out(g, g.domains[2].name);
    TrainConfig c = tiny_config();

    c.stylization.p = 0.5;
    CHECK_THROWS_AS(train(loo.sources, *loo.target, c, nullptr), ArgumentError);

    c.stylization.p = 0.0;
    CHECK_THROWS_AS(train(loo.sources, g.domains[0], c, nullptr), SchemaError);

    DomainDataset other;
    other.name = "other";
    other.classes = {"x", "y"};
    other.items.push_back({ImageTensor(3, 48, 48), 0});
    CHECK_THROWS_AS(train(loo.sources, other, c, nullptr), SchemaError);

    TrainConfig bad = c;
    bad.lr = -1.0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = c;
    bad.stylization.p = 1.5;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("evaluate is side-effect free and validates its inputs") {
    const DatasetGroup g = synthesize_group(10, 2, 3, 4, 48);
    Rng rng = make_rng(4);
    Classifier model(3);
    model.init(rng);
    model.classes = g.domains[0].classes;
    const std::uint64_t before = nn::param_hash(model.params());
    const double acc = evaluate(model, g.domains[0]);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    CHECK(nn::param_hash(model.params()) == before);

    DomainDataset empty;
    empty.name = "e";
    empty.classes = g.domains[0].classes;
    CHECK_THROWS_AS(evaluate(model, empty), ArgumentError);
}

TEST_CASE("run records serialize one epoch row plus a summary row") {
    const DatasetGroup g = synthesize_group(10, 2, 3, 4, 48);
    const LeaveOneOut loo = leave_one_out(g, g.domains[1].name);
    TrainConfig c = tiny_config();
    c.epochs = 2;
    c.lr_drop_epoch = 2;
    TrainResult r = train(loo.sources, *loo.target, c, nullptr);
    r.record.config_hash = "cafef00d";

    const std::string text = r.record.to_jsonl();
    std::vector<std::string> lines;
    std::stringstream ss(text);
    for (std::string line; std::getline(ss, line);) lines.push_back(line);
    REQUIRE(lines.size() == 3);  // 2 epochs + summary
    CHECK(lines[0].find("\"row\":\"epoch\"") != std::string::npos);
    CHECK(lines[2].find("\"row\":\"summary\"") != std::string::npos);
    CHECK(lines[2].find("cafef00d") != std::string::npos);
    CHECK(text.find("wall") == std::string::npos);  // wall time never serialized

    const std::filesystem::path file =
        std::filesystem::temp_directory_path() / "sb_record.jsonl";
    r.record.write_jsonl(file);
    std::ifstream in(file);
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == text);
    std::filesystem::remove(file);
}

TEST_CASE("checkpoints round-trip parameters and metadata") {
    Rng rng = make_rng(9);
    Classifier model(4);
    model.init(rng);
    model.classes = {"a", "b", "c", "d"};
    const std::filesystem::path file =
        std::filesystem::temp_directory_path() / "sb_ckpt.bin";
    model.save(file, 7, "deadbeef");
    int epoch = -1;
    std::string hash;
    Classifier back = Classifier::load(file, &epoch, &hash);
    CHECK(epoch == 7);
    CHECK(hash == "deadbeef");
    CHECK(back.classes == model.classes);
    CHECK(back.arch == model.arch);
    CHECK(nn::param_hash(back.params()) == nn::param_hash(model.params()));
    std::filesystem::remove(file);
    CHECK_THROWS(Classifier::load(file));
}

TEST_CASE("stylized training consumes the stylizer deterministically") {
    const DatasetGroup g = synthesize_group(10, 3, 3, 4, 48);
    const LeaveOneOut loo = leave_one_out(g, g.domains[2].name);
    const StylizerWeights w = StylizerWeights::random_init(6);
    TrainConfig c = tiny_config();
    c.epochs = 2;
    c.lr_drop_epoch = 2;
    c.stylization.p = 0.5;

    const TrainResult a = train(loo.sources, *loo.target, c, &w);
    const TrainResult b = train(loo.sources, *loo.target, c, &w);
    CHECK(a.record.to_jsonl() == b.record.to_jsonl());
    CHECK(nn::param_hash(TrainResult(a).model.params()) ==
          nn::param_hash(TrainResult(b).model.params()));
}

TEST_CASE("mean_std matches the sample-deviation closed form") {
    const RunStats s = mean_std({0.845, 0.846, 0.847});
    CHECK(s.mean == doctest::Approx(0.846).epsilon(1e-12));
    CHECK(s.stddev == doctest::Approx(0.001).epsilon(1e-9));
    CHECK(mean_std({0.5}).stddev == 0.0);

    const RunStats r = repeat_runs([](std::uint64_t seed) { return 0.1 * seed; }, 3, 10);
    REQUIRE(r.values.size() == 3);
    CHECK(r.values[0] == doctest::Approx(1.0));
    CHECK(r.values[1] == doctest::Approx(1.1));
    CHECK(r.values[2] == doctest::Approx(1.2));
}
