// Command-line front end for the style-bias experimentation toolkit.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "stylebias/analysis.hpp"
#include "stylebias/experiment.hpp"
#include "stylebias/ingest.hpp"
#include "stylebias/synth.hpp"

namespace sb = stylebias;

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep))
        if (!part.empty()) out.push_back(part);
    return out;
}

void print_group_summary(const sb::DatasetGroup& group) {
    std::size_t total = 0;
    for (const sb::DomainDataset& d : group.domains) total += d.items.size();
    std::cout << group.domains.size() << " domains, " << group.domains.front().classes.size()
              << " classes, " << total << " images\n";
    for (const sb::DomainDataset& d : group.domains)
        std::cout << "  " << d.name << ": " << d.items.size() << " images\n";
}

std::string default_data_root(const std::string& explicit_root) {
    if (!explicit_root.empty()) return explicit_root;
    const char* env = std::getenv("STYLEBIAS_DATA_ROOT");
    if (env && *env) return env;
    throw sb::ConfigError("no dataset root given and STYLEBIAS_DATA_ROOT is unset");
}

struct SynthFlags {
    std::uint64_t seed = 1;
    int domains = 4;
    int classes = 7;
    int per_class = 60;
    int side = 64;

    void attach(CLI::App* cmd) {
        cmd->add_option("--seed", seed, "generator seed");
        cmd->add_option("--domains", domains, "number of domains");
        cmd->add_option("--classes", classes, "number of classes");
        cmd->add_option("--per-class", per_class, "images per class per domain");
        cmd->add_option("--side", side, "image side in pixels");
    }
    sb::DatasetGroup make() const {
        return sb::synthesize_group(seed, domains, classes, per_class, side);
    }
};

int run(int argc, char** argv) {
    CLI::App app{"style-bias domain generalization toolkit"};
    app.require_subcommand(1);

    // ---- dataset synth | export | ingest -------------------------------
    CLI::App* dataset = app.add_subcommand("dataset", "dataset generation and ingest");
    dataset->require_subcommand(1);

    SynthFlags synth_flags;
    std::string synth_out;
    CLI::App* synth = dataset->add_subcommand("synth", "generate the synthetic benchmark");
    synth_flags.attach(synth);
    synth->add_option("--out", synth_out, "optionally export the generated tree");

    SynthFlags export_flags;
    std::string export_out;
    CLI::App* exp = dataset->add_subcommand("export", "write the synthetic benchmark to disk");
    export_flags.attach(exp);
    exp->add_option("--out", export_out, "output directory")->required();

    std::string ingest_root;
    int ingest_side = 64;
    CLI::App* ingest = dataset->add_subcommand("ingest", "validate a directory-layout dataset");
    ingest->add_option("--root", ingest_root, "dataset root (default STYLEBIAS_DATA_ROOT)");
    ingest->add_option("--side", ingest_side, "resize side");

    // ---- stylizer train | apply ----------------------------------------
    CLI::App* stylizer = app.add_subcommand("stylizer", "stylizer network");
    stylizer->require_subcommand(1);

    SynthFlags stz_flags;
    std::string stz_out = "stylizer.bin";
    int stz_epochs = 12;
    std::uint64_t stz_seed = 7;
    CLI::App* stz_train = stylizer->add_subcommand("train", "train the stylizer decoder");
    stz_flags.attach(stz_train);
    stz_train->add_option("--out", stz_out, "weights file");
    stz_train->add_option("--epochs", stz_epochs, "training epochs");
    stz_train->add_option("--train-seed", stz_seed, "training seed");

    std::string ap_weights, ap_content, ap_style, ap_out = "stylized.png";
    float ap_alpha = 1.f;
    CLI::App* stz_apply = stylizer->add_subcommand("apply", "stylize one image");
    stz_apply->add_option("--weights", ap_weights, "stylizer weights")->required();
    stz_apply->add_option("--content", ap_content, "content image")->required();
    stz_apply->add_option("--style", ap_style, "style image")->required();
    stz_apply->add_option("--alpha", ap_alpha, "stylization strength in [0,1]");
    stz_apply->add_option("--out", ap_out, "output image");

    // ---- train / eval ----------------------------------------------------
    std::string train_config, train_target;
    int train_run = 0;
    bool train_force = false;
    CLI::App* train_cmd = app.add_subcommand("train", "one leave-one-out training run");
    train_cmd->add_option("--config", train_config, "experiment config file")->required();
    train_cmd->add_option("--target", train_target, "held-out target domain")->required();
    train_cmd->add_option("--run", train_run, "run index (seed offset)");
    train_cmd->add_flag("--force", train_force, "overwrite an existing ledger entry");

    std::string eval_ckpt, eval_root;
    int eval_side = 64;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--dataset", eval_root, "dataset root (default STYLEBIAS_DATA_ROOT)");
    eval_cmd->add_option("--side", eval_side, "resize side");

    // ---- matrix / sweep-p / ablate-sources ------------------------------
    std::string matrix_config;
    bool matrix_force = false;
    CLI::App* matrix_cmd = app.add_subcommand("matrix", "full leave-one-out matrix");
    matrix_cmd->add_option("--config", matrix_config, "experiment config file")->required();
    matrix_cmd->add_flag("--force", matrix_force, "overwrite existing ledger entries");

    std::string sweep_config, sweep_probs = "0.1,0.5,1.0";
    bool sweep_force = false;
    CLI::App* sweep_cmd = app.add_subcommand("sweep-p", "style-probability ablation sweep");
    sweep_cmd->add_option("--config", sweep_config, "experiment config file")->required();
    sweep_cmd->add_option("--probs", sweep_probs, "comma-separated probabilities");
    sweep_cmd->add_flag("--force", sweep_force, "overwrite existing ledger entries");

    std::string abl_config, abl_target, abl_subsets;
    int abl_runs = 3;
    CLI::App* abl_cmd = app.add_subcommand("ablate-sources", "limited style-source ablation");
    abl_cmd->add_option("--config", abl_config, "experiment config file")->required();
    abl_cmd->add_option("--target", abl_target, "held-out target domain")->required();
    abl_cmd
        ->add_option("--subsets", abl_subsets,
                     "style-source subsets, ';' between subsets, ',' within")
        ->required();
    abl_cmd->add_option("--runs", abl_runs, "runs per subset");

    // ---- cueconflict build / bias / probe --------------------------------
    std::string cc_checkpoints, cc_weights, cc_out = "cueconflict";
    SynthFlags cc_flags;
    int cc_cap = 45, cc_iters = 150, cc_texture_per_class = 6;
    std::uint64_t cc_seed = 3;
    CLI::App* cue = app.add_subcommand("cueconflict", "cue-conflict evaluation sets");
    cue->require_subcommand(1);
    CLI::App* cc_build = cue->add_subcommand("build", "build a cue-conflict set");
    cc_build->add_option("--checkpoints", cc_checkpoints, "comma-separated model checkpoints")
        ->required();
    cc_build->add_option("--stylizer", cc_weights, "stylizer weights (for its encoder)")
        ->required();
    cc_flags.attach(cc_build);
    cc_build->add_option("--cap", cc_cap, "max images per shape class");
    cc_build->add_option("--iterations", cc_iters, "style-transfer iterations");
    cc_build->add_option("--texture-per-class", cc_texture_per_class, "texture pool size");
    cc_build->add_option("--set-seed", cc_seed, "pairing seed");
    cc_build->add_option("--out", cc_out, "output directory");

    std::string bias_ckpt, bias_set, bias_tag = "model";
    CLI::App* bias_cmd = app.add_subcommand("bias", "shape-bias report for a checkpoint");
    bias_cmd->add_option("--checkpoint", bias_ckpt, "model checkpoint")->required();
    bias_cmd->add_option("--set", bias_set, "cue-conflict set directory")->required();
    bias_cmd->add_option("--tag", bias_tag, "row label");

    std::string probe_ckpt, probe_set, probe_label = "shape";
    std::uint64_t probe_seed = 0;
    CLI::App* probe_cmd = app.add_subcommand("probe", "linear probe on frozen features");
    probe_cmd->add_option("--checkpoint", probe_ckpt, "model checkpoint")->required();
    probe_cmd->add_option("--set", probe_set, "cue-conflict set directory")->required();
    probe_cmd->add_option("--label", probe_label, "shape | texture");
    probe_cmd->add_option("--probe-seed", probe_seed, "fold shuffle seed");

    // ---- report -----------------------------------------------------------
    std::string rep_out = "out", rep_hashes, rep_labels, rep_domains, rep_json_file;
    CLI::App* report_cmd = app.add_subcommand("report", "render a results table from the ledger");
    report_cmd->add_option("--out-dir", rep_out, "ledger root");
    report_cmd->add_option("--hashes", rep_hashes, "comma-separated config hashes")->required();
    report_cmd->add_option("--labels", rep_labels, "comma-separated row labels");
    report_cmd->add_option("--domains", rep_domains, "comma-separated target domains")->required();
    report_cmd->add_option("--json", rep_json_file, "also write machine-readable rows here");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        sb::DatasetGroup group = synth_flags.make();
        print_group_summary(group);
        if (!synth_out.empty()) sb::export_group(group, synth_out);
        return 0;
    }
    if (exp->parsed()) {
        sb::export_group(export_flags.make(), export_out);
        std::cout << "wrote " << export_out << "\n";
        return 0;
    }
    if (ingest->parsed()) {
        print_group_summary(sb::ingest_directory(default_data_root(ingest_root), ingest_side));
        return 0;
    }
    if (stz_train->parsed()) {
        sb::DatasetGroup group = stz_flags.make();
        std::vector<sb::ImageTensor> corpus;
        for (const sb::DomainDataset& d : group.domains)
            for (const sb::DatasetItem& item : d.items) corpus.push_back(item.image);
        std::vector<double> losses;
        sb::StylizerWeights weights =
            sb::train_stylizer(corpus, corpus, stz_epochs, stz_seed, {}, &losses);
        weights.save(stz_out);
        std::cout << "trained " << stz_epochs << " epochs";
        if (!losses.empty()) std::cout << ", final loss " << losses.back();
        std::cout << ", wrote " << stz_out << "\n";
        return 0;
    }
    if (stz_apply->parsed()) {
        sb::StylizerWeights weights = sb::StylizerWeights::load(ap_weights);
        const sb::ImageTensor content = sb::load_image(ap_content);
        const sb::ImageTensor style = sb::load_image(ap_style);
        sb::save_image(sb::stylize(content, style, ap_alpha, weights), ap_out);
        std::cout << "wrote " << ap_out << "\n";
        return 0;
    }
    if (train_cmd->parsed()) {
        sb::ExperimentConfig config = sb::ExperimentConfig::load(train_config);
        sb::DatasetGroup group = sb::load_dataset(config.dataset);
        sb::LeaveOneOut loo = sb::leave_one_out(group, train_target);
        sb::ResultsLedger ledger(config.out_dir);
        const sb::StylizerWeights* stylizer = nullptr;
        sb::StylizerWeights local;
        if (config.train.stylization.p > 0) {
            local = sb::prepare_stylizer(config, group, ledger.root());
            stylizer = &local;
        }
        sb::TrainConfig tc = config.train;
        tc.seed = config.base_seed + static_cast<std::uint64_t>(train_run);
        sb::TrainResult tr = sb::train(loo.sources, *loo.target, tc, stylizer);
        tr.record.config_hash = config.hash();
        ledger.write(config.hash(), train_target, train_run, tr.record, tr.model, train_force);
        std::cout << "target " << train_target << " selected epoch " << tr.record.selected_epoch
                  << " target acc " << tr.record.selected_target_acc << "\n";
        return 0;
    }
    if (eval_cmd->parsed()) {
        sb::Classifier model = sb::Classifier::load(eval_ckpt);
        sb::DatasetGroup group = sb::ingest_directory(default_data_root(eval_root), eval_side);
        for (const sb::DomainDataset& d : group.domains)
            std::cout << d.name << "\t" << sb::evaluate(model, d) << "\n";
        return 0;
    }
    if (matrix_cmd->parsed()) {
        sb::ExperimentConfig config = sb::ExperimentConfig::load(matrix_config);
        sb::ResultsLedger ledger(config.out_dir);
        sb::MatrixResult result = sb::run_matrix(config, ledger, matrix_force);
        std::cout << result.table;
        bool any_failed = false;
        for (const sb::MatrixCell& c : result.cells)
            if (!c.ok) {
                any_failed = true;
                std::cerr << "failed " << c.target << " run " << c.run << ": " << c.error << "\n";
            }
        return any_failed ? 2 : 0;
    }
    if (sweep_cmd->parsed()) {
        sb::ExperimentConfig config = sb::ExperimentConfig::load(sweep_config);
        std::vector<double> probs;
        for (const std::string& p : split_list(sweep_probs, ',')) probs.push_back(std::stod(p));
        sb::ResultsLedger ledger(config.out_dir);
        std::cout << sb::render_sweep_table(
            sb::sweep_style_probability(config, probs, ledger, sweep_force));
        return 0;
    }
    if (abl_cmd->parsed()) {
        sb::ExperimentConfig config = sb::ExperimentConfig::load(abl_config);
        sb::DatasetGroup group = sb::load_dataset(config.dataset);
        std::vector<std::vector<std::string>> subsets;
        for (const std::string& s : split_list(abl_subsets, ';'))
            subsets.push_back(split_list(s, ','));
        sb::ResultsLedger ledger(config.out_dir);
        sb::StylizerWeights weights = sb::prepare_stylizer(config, group, ledger.root());
        sb::TrainConfig base = config.train;
        base.seed = config.base_seed;
        for (const sb::AblationRow& row :
             sb::limited_source_ablation(group, abl_target, subsets, abl_runs, base, weights)) {
            std::string name;
            for (const std::string& s : row.subset) name += (name.empty() ? "" : "+") + s;
            std::cout << name << "\t" << 100.0 * row.stats.mean << " ± "
                      << 100.0 * row.stats.stddev << "\n";
        }
        return 0;
    }
    if (cc_build->parsed()) {
        std::vector<sb::Classifier> models;
        std::vector<const sb::Classifier*> model_ptrs;
        for (const std::string& f : split_list(cc_checkpoints, ','))
            models.push_back(sb::Classifier::load(f));
        for (const sb::Classifier& m : models) model_ptrs.push_back(&m);
        sb::StylizerWeights weights = sb::StylizerWeights::load(cc_weights);
        sb::DatasetGroup group = cc_flags.make();
        sb::DomainDataset texture_pool = sb::make_texture_pool(
            cc_flags.seed, cc_flags.classes, cc_texture_per_class, cc_flags.side);
        sb::CueConflictOptions opts;
        opts.gram_iterations = cc_iters;
        sb::CueConflictSet set = sb::build_cue_conflict(
            model_ptrs, group.domains.front(), texture_pool, cc_cap, cc_seed, weights.encoder,
            opts);
        set.save(cc_out);
        std::cout << set.samples.size() << " cue-conflict images -> " << cc_out << "\n";
        for (const std::string& note : set.manifest_notes) std::cout << "  note: " << note << "\n";
        return 0;
    }
    if (bias_cmd->parsed()) {
        sb::Classifier model = sb::Classifier::load(bias_ckpt);
        sb::CueConflictSet set = sb::CueConflictSet::load(bias_set);
        sb::BiasReport report = sb::shape_bias(model, set);
        report.model_tag = bias_tag;
        std::cout << report.to_json(set.classes) << "\n";
        std::cout << sb::render_bias_table({report}, set.classes);
        return 0;
    }
    if (probe_cmd->parsed()) {
        sb::Classifier model = sb::Classifier::load(probe_ckpt);
        sb::CueConflictSet set = sb::CueConflictSet::load(probe_set);
        sb::ProbeOptions opts;
        opts.seed = probe_seed;
        const sb::ProbeLabel label = probe_label == "texture" ? sb::ProbeLabel::Texture
                                                              : sb::ProbeLabel::Shape;
        std::cout << probe_label << " probe accuracy: "
                  << sb::probe_accuracy(model, set, label, opts) << "\n";
        return 0;
    }
    if (report_cmd->parsed()) {
        sb::ResultsLedger ledger(rep_out);
        const std::vector<std::string> hashes = split_list(rep_hashes, ',');
        std::vector<std::string> labels = split_list(rep_labels, ',');
        const std::vector<std::string> domains = split_list(rep_domains, ',');
        while (labels.size() < hashes.size()) labels.push_back(hashes[labels.size()]);
        std::vector<sb::ReportRow> rows;
        for (std::size_t i = 0; i < hashes.size(); ++i)
            rows.push_back(sb::ledger_row(ledger, hashes[i], labels[i], domains));
        std::cout << sb::render_report(domains, rows);
        if (!rep_json_file.empty()) {
            std::ofstream j(rep_json_file);
            j << sb::report_json(domains, rows).dump(2) << "\n";
        }
        return 0;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const sb::ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const sb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
