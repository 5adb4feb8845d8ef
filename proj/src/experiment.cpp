#include "stylebias/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stylebias/ingest.hpp"
#include "stylebias/synth.hpp"

namespace stylebias {

namespace {

std::string regime_name(StyleRegimeKind k) {
    switch (k) {
        case StyleRegimeKind::External: return "external";
        case StyleRegimeKind::InterSource: return "inter_source";
        case StyleRegimeKind::IntraSource: return "intra_source";
        case StyleRegimeKind::LimitedSources: return "limited_sources";
    }
    throw ArgumentError("unknown regime");
}

StyleRegimeKind regime_from_name(const std::string& s) {
    if (s == "external") return StyleRegimeKind::External;
    if (s == "inter_source") return StyleRegimeKind::InterSource;
    if (s == "intra_source") return StyleRegimeKind::IntraSource;
    if (s == "limited_sources") return StyleRegimeKind::LimitedSources;
    throw ConfigError("unknown style regime: " + s);
}

std::string protocol_name(Protocol p) {
    return p == Protocol::SourceVal ? "source_val" : "max_target";
}

Protocol protocol_from_name(const std::string& s) {
    if (s == "source_val") return Protocol::SourceVal;
    if (s == "max_target") return Protocol::MaxTarget;
    throw ConfigError("unknown selection protocol: " + s);
}

ExperimentConfig preset_defaults(const std::string& preset) {
    ExperimentConfig c;
    c.preset = preset;
    if (preset == "desk") {
        return c;  // struct defaults are the desk preset
    }
    c.dataset.kind = "ingest";
    c.train.lr = 0.001;
    c.train.momentum = 0.9;
    c.train.weight_decay = 0.0005;
    c.train.batch_size = 128;
    c.train.epochs = 80;
    c.train.lr_drop_epoch = 60;
    c.train.stylization.p = 0.1;
    c.stylizer_epochs = 40;
    if (preset == "pacs" || preset == "officehome") return c;
    if (preset == "vlcs") {
        c.train.lr = 0.0005;
        c.train.weight_decay = 0.00005;
        return c;
    }
    throw ConfigError("unknown preset: " + preset);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

void atomic_write(const std::filesystem::path& file, const std::string& bytes) {
    const std::filesystem::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw LedgerError("cannot write " + tmp.string());
        out << bytes;
    }
    std::filesystem::rename(tmp, file);
}

}  // namespace

void ExperimentConfig::validate() const {
    if (backbone != "smallconv") throw ConfigError("unknown backbone: " + backbone);
    if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
    if (stylizer_epochs < 0) throw ConfigError("stylizer_epochs must be >= 0");
    if (dataset.kind != "synthetic" && dataset.kind != "ingest")
        throw ConfigError("unknown dataset kind: " + dataset.kind);
    train.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json d{{"kind", dataset.kind}};
    if (dataset.kind == "synthetic") {
        d["seed"] = dataset.seed;
        d["n_domains"] = dataset.n_domains;
        d["n_classes"] = dataset.n_classes;
        d["per_class"] = dataset.per_class;
        d["side"] = dataset.side;
    } else {
        d["root"] = dataset.root;
    }
    nlohmann::json t{{"lr", train.lr},
                     {"momentum", train.momentum},
                     {"weight_decay", train.weight_decay},
                     {"batch_size", train.batch_size},
                     {"epochs", train.epochs},
                     {"lr_drop_epoch", train.lr_drop_epoch},
                     {"lr_drop_factor", train.lr_drop_factor},
                     {"val_fraction", train.val_fraction},
                     {"hflip", train.augmentations.hflip},
                     {"crop", train.augmentations.crop},
                     {"color_jitter", train.augmentations.color_jitter},
                     {"stylize_before_augment", train.stylize_before_augment},
                     {"domain_balanced_batches", train.domain_balanced_batches},
                     {"selection", protocol_name(train.selection)}};
    nlohmann::json s{{"p", train.stylization.p},
                     {"alpha", train.stylization.alpha},
                     {"regime", regime_name(train.stylization.regime.kind)},
                     {"limited_names", train.stylization.regime.limited_names}};
    return nlohmann::json{{"preset", preset},
                          {"dataset", d},
                          {"backbone", backbone},
                          {"train", t},
                          {"stylization", s},
                          {"stylizer_epochs", stylizer_epochs},
                          {"stylizer_seed", stylizer_seed},
                          {"n_runs", n_runs},
                          {"base_seed", base_seed},
                          {"out_dir", out_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c = preset_defaults(j.value("preset", "desk"));
    if (j.contains("dataset")) {
        const nlohmann::json& d = j["dataset"];
        c.dataset.kind = d.value("kind", c.dataset.kind);
        c.dataset.seed = d.value("seed", c.dataset.seed);
        c.dataset.n_domains = d.value("n_domains", c.dataset.n_domains);
        c.dataset.n_classes = d.value("n_classes", c.dataset.n_classes);
        c.dataset.per_class = d.value("per_class", c.dataset.per_class);
        c.dataset.side = d.value("side", c.dataset.side);
        c.dataset.root = d.value("root", c.dataset.root);
    }
    c.backbone = j.value("backbone", c.backbone);
    if (j.contains("train")) {
        const nlohmann::json& t = j["train"];
        c.train.lr = t.value("lr", c.train.lr);
        c.train.momentum = t.value("momentum", c.train.momentum);
        c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.epochs = t.value("epochs", c.train.epochs);
        c.train.lr_drop_epoch = t.value("lr_drop_epoch", c.train.lr_drop_epoch);
        c.train.lr_drop_factor = t.value("lr_drop_factor", c.train.lr_drop_factor);
        c.train.val_fraction = t.value("val_fraction", c.train.val_fraction);
        c.train.augmentations.hflip = t.value("hflip", c.train.augmentations.hflip);
        c.train.augmentations.crop = t.value("crop", c.train.augmentations.crop);
        c.train.augmentations.color_jitter =
            t.value("color_jitter", c.train.augmentations.color_jitter);
        c.train.stylize_before_augment =
            t.value("stylize_before_augment", c.train.stylize_before_augment);
        c.train.domain_balanced_batches =
            t.value("domain_balanced_batches", c.train.domain_balanced_batches);
        if (t.contains("selection")) c.train.selection = protocol_from_name(t["selection"]);
    }
    if (j.contains("stylization")) {
        const nlohmann::json& s = j["stylization"];
        c.train.stylization.p = s.value("p", c.train.stylization.p);
        c.train.stylization.alpha = s.value("alpha", c.train.stylization.alpha);
        if (s.contains("regime")) c.train.stylization.regime.kind = regime_from_name(s["regime"]);
        c.train.stylization.regime.limited_names =
            s.value("limited_names", c.train.stylization.regime.limited_names);
    }
    c.stylizer_epochs = j.value("stylizer_epochs", c.stylizer_epochs);
    c.stylizer_seed = j.value("stylizer_seed", c.stylizer_seed);
    c.n_runs = j.value("n_runs", c.n_runs);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config: " + file.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + file.string() + ": " + e.what());
    }
    return from_json(j);
}

std::string ExperimentConfig::hash() const {
    nlohmann::json j = to_json();
    j.erase("out_dir");
    return fnv1a_hex(j.dump());  // nlohmann objects dump with sorted keys
}

DatasetGroup load_dataset(const DatasetSpec& spec) {
    if (spec.kind == "synthetic")
        return synthesize_group(spec.seed, spec.n_domains, spec.n_classes, spec.per_class,
                                spec.side);
    std::string root = spec.root;
    if (root.empty()) {
        const char* env = std::getenv("STYLEBIAS_DATA_ROOT");
        if (!env || !*env)
            throw ConfigError("ingest dataset needs a root (config or STYLEBIAS_DATA_ROOT)");
        root = env;
    }
    return ingest_directory(root, spec.side);
}

ResultsLedger::ResultsLedger(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
}

std::filesystem::path ResultsLedger::run_dir(const std::string& config_hash,
                                             const std::string& target, int run) const {
    return root_ / config_hash / target / ("run" + std::to_string(run));
}

bool ResultsLedger::has(const std::string& config_hash, const std::string& target,
                        int run) const {
    return std::filesystem::exists(run_dir(config_hash, target, run) / "records.jsonl");
}

void ResultsLedger::write(const std::string& config_hash, const std::string& target, int run,
                          const RunRecord& record, const Classifier& model, bool force) {
    const std::filesystem::path dir = run_dir(config_hash, target, run);
    if (!force && std::filesystem::exists(dir / "records.jsonl"))
        throw LedgerError("ledger entry exists: " + dir.string() + " (use --force)");
    std::filesystem::create_directories(dir);
    {
        const std::filesystem::path tmp = dir / "checkpoint.bin.tmp";
        model.save(tmp, record.selected_epoch, record.config_hash);
        std::filesystem::rename(tmp, dir / "checkpoint.bin");
    }
    atomic_write(dir / "records.jsonl", record.to_jsonl());
}

std::vector<double> ResultsLedger::selected_accuracies(const std::string& config_hash,
                                                       const std::string& target) const {
    std::vector<double> accs;
    for (int run = 0;; ++run) {
        const std::filesystem::path file = run_dir(config_hash, target, run) / "records.jsonl";
        std::ifstream in(file);
        if (!in) break;
        std::string line, last;
        while (std::getline(in, line))
            if (!line.empty()) last = line;
        if (last.empty()) throw LedgerError("empty record file: " + file.string());
        const nlohmann::json row = nlohmann::json::parse(last);
        if (row.value("row", "") != "summary")
            throw LedgerError("malformed record file: " + file.string());
        accs.push_back(row["selected_target_acc"].get<double>());
    }
    return accs;
}

StylizerWeights prepare_stylizer(const ExperimentConfig& config, const DatasetGroup& group,
                                 const std::filesystem::path& cache_dir) {
    nlohmann::json key = config.to_json()["dataset"];
    key["stylizer_epochs"] = config.stylizer_epochs;
    key["stylizer_seed"] = config.stylizer_seed;
    const std::filesystem::path file =
        cache_dir / ("stylizer-" + fnv1a_hex(key.dump()) + ".bin");
    if (std::filesystem::exists(file)) return StylizerWeights::load(file);

    std::vector<ImageTensor> corpus;
    for (const DomainDataset& d : group.domains)
        for (const DatasetItem& item : d.items) corpus.push_back(item.image);
    StylizerTrainOptions opts;
    opts.content_corpus_name = opts.style_corpus_name = "benchmark-pool";
    StylizerWeights weights =
        train_stylizer(corpus, corpus, config.stylizer_epochs, config.stylizer_seed, opts);
    std::filesystem::create_directories(cache_dir);
    const std::filesystem::path tmp = file.string() + ".tmp";
    weights.save(tmp);
    std::filesystem::rename(tmp, file);
    return weights;
}

MatrixResult run_matrix(const ExperimentConfig& config, ResultsLedger& ledger, bool force,
                        const StylizerWeights* stylizer) {
    config.validate();
    const std::string hash = config.hash();
    const DatasetGroup group = load_dataset(config.dataset);

    if (!force) {
        std::vector<std::string> existing;
        for (const DomainDataset& d : group.domains)
            for (int run = 0; run < config.n_runs; ++run)
                if (ledger.has(hash, d.name, run))
                    existing.push_back(ledger.run_dir(hash, d.name, run).string());
        if (!existing.empty()) {
            std::string msg = "ledger entries exist (use --force):";
            for (const std::string& e : existing) msg += "\n  " + e;
            throw LedgerError(msg);
        }
    }

    StylizerWeights local_stylizer;
    if (config.train.stylization.p > 0 && !stylizer) {
        local_stylizer = prepare_stylizer(config, group, ledger.root());
        stylizer = &local_stylizer;
    }

    MatrixResult result;
    result.config_hash = hash;
    for (const DomainDataset& d : group.domains) result.domains.push_back(d.name);

    for (const std::string& target : result.domains) {
        const LeaveOneOut loo = leave_one_out(group, target);
        for (int run = 0; run < config.n_runs; ++run) {
            MatrixCell cell;
            cell.target = target;
            cell.run = run;
            try {
                TrainConfig tc = config.train;
                tc.seed = config.base_seed + static_cast<std::uint64_t>(run);
                TrainResult tr = train(loo.sources, *loo.target, tc,
                                       config.train.stylization.p > 0 ? stylizer : nullptr);
                tr.record.config_hash = hash;
                ledger.write(hash, target, run, tr.record, tr.model, force);
                cell.ok = true;
                cell.selected_target_acc = tr.record.selected_target_acc;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            result.cells.push_back(std::move(cell));
        }
    }

    std::vector<std::vector<double>> by_domain(result.domains.size());
    for (const MatrixCell& c : result.cells)
        if (c.ok) {
            const auto it = std::find(result.domains.begin(), result.domains.end(), c.target);
            by_domain[it - result.domains.begin()].push_back(c.selected_target_acc);
        }
    bool rectangular = true;
    for (const std::vector<double>& v : by_domain) {
        result.per_domain.push_back(mean_std(v));
        if (static_cast<int>(v.size()) != config.n_runs) rectangular = false;
    }
    if (rectangular) {
        std::vector<double> run_avgs(config.n_runs, 0.0);
        for (int run = 0; run < config.n_runs; ++run) {
            for (const std::vector<double>& v : by_domain) run_avgs[run] += v[run];
            run_avgs[run] /= by_domain.size();
        }
        result.average = mean_std(run_avgs);
    } else {
        std::vector<double> means;
        for (const RunStats& s : result.per_domain)
            if (!s.values.empty()) means.push_back(s.mean);
        result.average = mean_std(means);
    }

    ReportRow row;
    row.label = config.preset + " p=" + fmt_pct(config.train.stylization.p / 100.0) + " " +
                regime_name(config.train.stylization.regime.kind);
    row.per_domain = result.per_domain;
    row.average = result.average;
    result.table = render_report(result.domains, {row});
    return result;
}

std::vector<SweepRow> sweep_style_probability(const ExperimentConfig& config,
                                              std::vector<double> probs, ResultsLedger& ledger,
                                              bool force, const StylizerWeights* stylizer) {
    if (probs.empty()) throw ArgumentError("sweep: need at least one probability");
    for (double p : probs)
        if (p < 0 || p > 1) throw ArgumentError("sweep: probabilities must lie in [0, 1]");
    std::sort(probs.begin(), probs.end());
    std::vector<SweepRow> rows;
    for (double p : probs) {
        ExperimentConfig c = config;
        c.train.stylization.p = p;
        rows.push_back({p, run_matrix(c, ledger, force, p > 0 ? stylizer : nullptr)});
    }
    return rows;
}

std::string render_sweep_table(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "p\tAvg.\n";
    for (const SweepRow& r : rows) {
        char pbuf[16];
        std::snprintf(pbuf, sizeof(pbuf), "%.2f", r.p);
        out << pbuf << "\t" << fmt_pct(r.matrix.average.mean) << " ± "
            << fmt_pct(r.matrix.average.stddev) << "\n";
    }
    return out.str();
}

std::string render_report(const std::vector<std::string>& domains,
                          const std::vector<ReportRow>& rows) {
    if (rows.empty()) throw ReportError("report: empty selection");
    std::ostringstream out;
    out << "method";
    for (const std::string& d : domains) out << "\t" << d;
    out << "\tAvg.\n";
    for (const ReportRow& r : rows) {
        if (r.per_domain.size() != domains.size())
            throw ReportError("report: row '" + r.label + "' covers " +
                              std::to_string(r.per_domain.size()) + " domains, header has " +
                              std::to_string(domains.size()));
        out << r.label;
        for (const RunStats& s : r.per_domain)
            out << "\t" << fmt_pct(s.mean) << " ± " << fmt_pct(s.stddev);
        out << "\t" << fmt_pct(r.average.mean) << " ± " << fmt_pct(r.average.stddev) << "\n";
    }
    return out.str();
}

nlohmann::json report_json(const std::vector<std::string>& domains,
                           const std::vector<ReportRow>& rows) {
    if (rows.empty()) throw ReportError("report: empty selection");
    nlohmann::json out;
    out["domains"] = domains;
    nlohmann::json jrows = nlohmann::json::array();
    for (const ReportRow& r : rows) {
        if (r.per_domain.size() != domains.size())
            throw ReportError("report: row '" + r.label + "' domain count mismatch");
        nlohmann::json per;
        for (std::size_t i = 0; i < domains.size(); ++i)
            per[domains[i]] = {{"mean", r.per_domain[i].mean},
                               {"std", r.per_domain[i].stddev},
                               {"values", r.per_domain[i].values}};
        jrows.push_back({{"label", r.label},
                         {"per_domain", per},
                         {"average", {{"mean", r.average.mean}, {"std", r.average.stddev}}}});
    }
    out["rows"] = jrows;
    return out;
}

ReportRow ledger_row(const ResultsLedger& ledger, const std::string& config_hash,
                     const std::string& label, const std::vector<std::string>& domains) {
    ReportRow row;
    row.label = label;
    std::size_t runs = 0;
    bool rectangular = true;
    for (const std::string& d : domains) {
        std::vector<double> accs = ledger.selected_accuracies(config_hash, d);
        if (accs.empty()) throw LedgerError("no ledger entries for " + config_hash + "/" + d);
        if (row.per_domain.empty())
            runs = accs.size();
        else if (accs.size() != runs)
            rectangular = false;
        row.per_domain.push_back(mean_std(accs));
    }
    if (rectangular) {
        std::vector<double> run_avgs(runs, 0.0);
        for (const RunStats& s : row.per_domain)
            for (std::size_t r = 0; r < runs; ++r) run_avgs[r] += s.values[r];
        for (double& v : run_avgs) v /= domains.size();
        row.average = mean_std(run_avgs);
    } else {
        std::vector<double> means;
        for (const RunStats& s : row.per_domain) means.push_back(s.mean);
        row.average = mean_std(means);
    }
    return row;
}

}  // namespace stylebias
