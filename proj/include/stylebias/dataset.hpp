#pragma once

#include <string>
#include <vector>

#include "stylebias/fmap.hpp"

namespace stylebias {

struct DatasetItem {
    ImageTensor image;
    int label = 0;
};

// One named visual domain. Class vocabulary is shared across the domains of a
// DatasetGroup; labels index into `classes`.
struct DomainDataset {
    std::string name;
    std::vector<std::string> classes;
    std::vector<DatasetItem> items;

    void validate() const;  // throws SchemaError on invariant violations
};

struct DatasetGroup {
    std::string name;
    std::vector<DomainDataset> domains;

    const DomainDataset& domain(const std::string& domain_name) const;
    void validate() const;
};

struct Split {
    std::vector<int> train;
    std::vector<int> val;
};

// Stratified 90/10-style split, deterministic in seed. Classes with fewer
// than 2 items go entirely to train.
Split split(const DomainDataset& dataset, double val_fraction, std::uint64_t seed);

struct LeaveOneOut {
    std::vector<const DomainDataset*> sources;
    const DomainDataset* target = nullptr;
};

LeaveOneOut leave_one_out(const DatasetGroup& group, const std::string& target);

}  // namespace stylebias
