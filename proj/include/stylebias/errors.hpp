#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stylebias {

struct ArgumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a training loop produces a non-finite loss. Carries the epoch
// index and the loss history up to the failure.
struct TrainingError : std::runtime_error {
    int epoch;
    std::vector<double> loss_history;
    TrainingError(const std::string& msg, int epoch_, std::vector<double> history)
        : std::runtime_error(msg), epoch(epoch_), loss_history(std::move(history)) {}
};

struct OptimizationError : std::runtime_error {
    int iteration;
    OptimizationError(const std::string& msg, int iteration_)
        : std::runtime_error(msg), iteration(iteration_) {}
};

struct LedgerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ReportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace stylebias
