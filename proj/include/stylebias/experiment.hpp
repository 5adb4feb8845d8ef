#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylebias/analysis.hpp"
#include "stylebias/dataset.hpp"
#include "stylebias/stylizer.hpp"
#include "stylebias/trainer.hpp"

namespace stylebias {

// Where to source the dataset group from. "synthetic" generates the built-in
// shapes-on-textures benchmark; "ingest" reads a directory-per-domain tree.
struct DatasetSpec {
    std::string kind = "synthetic";
    // synthetic parameters
    std::uint64_t seed = 1;
    int n_domains = 4;
    int n_classes = 7;
    int per_class = 60;
    int side = 64;
    // ingest parameters
    std::string root;  // falls back to STYLEBIAS_DATA_ROOT when empty
};

// Fully explicit description of one experiment matrix. A config file may set
// `preset` (desk | pacs | vlcs | officehome) plus overrides; load() expands
// the preset so every field has an explicit value before hashing.
struct ExperimentConfig {
    std::string preset = "desk";
    DatasetSpec dataset;
    std::string backbone = "smallconv";
    TrainConfig train;
    int stylizer_epochs = 12;
    std::uint64_t stylizer_seed = 7;
    int n_runs = 3;
    std::uint64_t base_seed = 1;
    std::string out_dir = "out";

    void validate() const;
    nlohmann::json to_json() const;  // canonical, fully expanded
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& file);

    // Content hash over the canonical JSON with out_dir excluded: two configs
    // that run the same experiment share a hash regardless of where results go.
    std::string hash() const;
};

// Loads the dataset group named by the spec (generating or ingesting).
DatasetGroup load_dataset(const DatasetSpec& spec);

// Append-only run store laid out as <root>/<config-hash>/<target>/run<k>/
// holding records.jsonl and checkpoint.bin. Writes are atomic
// (temp file + rename) and a key is written at most once unless forced.
class ResultsLedger {
  public:
    explicit ResultsLedger(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path run_dir(const std::string& config_hash, const std::string& target,
                                  int run) const;
    bool has(const std::string& config_hash, const std::string& target, int run) const;
    void write(const std::string& config_hash, const std::string& target, int run,
               const RunRecord& record, const Classifier& model, bool force = false);

    // selected_target_acc of every stored run for (hash, target), run order.
    std::vector<double> selected_accuracies(const std::string& config_hash,
                                            const std::string& target) const;

  private:
    std::filesystem::path root_;
};

struct MatrixCell {
    std::string target;
    int run = 0;
    bool ok = false;
    double selected_target_acc = 0;
    std::string error;  // set when !ok
};

struct MatrixResult {
    std::string config_hash;
    std::vector<std::string> domains;
    std::vector<MatrixCell> cells;
    std::vector<RunStats> per_domain;  // over ok cells, domain order
    RunStats average;                  // of per-domain means, per run
    std::string table;                 // Table-1-shaped text summary
};

// Leave-one-out over every domain as target, n_runs seeds each. Completed
// cells persist in the ledger even when later cells fail; failures are listed
// in the returned cells. Without `force`, pre-existing ledger entries for
// this config are rejected up front by naming them.
MatrixResult run_matrix(const ExperimentConfig& config, ResultsLedger& ledger, bool force = false,
                        const StylizerWeights* stylizer = nullptr);

// Trains (or loads from the ledger-root cache) the stylizer a config implies.
StylizerWeights prepare_stylizer(const ExperimentConfig& config, const DatasetGroup& group,
                                 const std::filesystem::path& cache_dir);

struct SweepRow {
    double p = 0;
    MatrixResult matrix;
};

// One run_matrix per probability, ordered by probability.
std::vector<SweepRow> sweep_style_probability(const ExperimentConfig& config,
                                              std::vector<double> probs, ResultsLedger& ledger,
                                              bool force = false,
                                              const StylizerWeights* stylizer = nullptr);

std::string render_sweep_table(const std::vector<SweepRow>& rows);

struct ReportRow {
    std::string label;
    std::vector<RunStats> per_domain;  // one entry per domain, domain order
    RunStats average;
};

// Fixed-order text table: one column per domain then Avg., cells formatted
// "mean ± std" to two decimals (percent scale). Throws ReportError when a
// row's domain count disagrees with the header.
std::string render_report(const std::vector<std::string>& domains,
                          const std::vector<ReportRow>& rows);

// Machine-readable counterpart of render_report.
nlohmann::json report_json(const std::vector<std::string>& domains,
                           const std::vector<ReportRow>& rows);

// Builds a report row for one config from stored ledger entries.
ReportRow ledger_row(const ResultsLedger& ledger, const std::string& config_hash,
                     const std::string& label, const std::vector<std::string>& domains);

}  // namespace stylebias
