#include "stylebias/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "stylebias/rng.hpp"

namespace stylebias {

void DomainDataset::validate() const {
    for (const DatasetItem& it : items) {
        if (it.label < 0 || it.label >= static_cast<int>(classes.size()))
            throw SchemaError("domain '" + name + "': label out of range");
        if (it.image.c != 3 || it.image.h != it.image.w)
            throw SchemaError("domain '" + name + "': image must be square with 3 channels");
        for (float v : it.image.v)
            if (!std::isfinite(v) || v < 0.f || v > 1.f)
                throw SchemaError("domain '" + name + "': pixel outside [0,1]");
    }
}

const DomainDataset& DatasetGroup::domain(const std::string& domain_name) const {
    for (const DomainDataset& d : domains)
        if (d.name == domain_name) return d;
    throw ArgumentError("unknown domain '" + domain_name + "' in group '" + name + "'");
}

void DatasetGroup::validate() const {
    if (domains.size() < 2) throw SchemaError("group '" + name + "': needs at least 2 domains");
    std::set<std::string> names;
    for (const DomainDataset& d : domains) {
        if (!names.insert(d.name).second)
            throw SchemaError("group '" + name + "': duplicate domain name '" + d.name + "'");
        if (d.classes != domains.front().classes)
            throw SchemaError("group '" + name + "': class vocabulary differs in '" + d.name + "'");
        d.validate();
    }
}

Split split(const DomainDataset& dataset, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ArgumentError("split: val_fraction must be in (0,1)");
    std::vector<std::vector<int>> by_class(dataset.classes.size());
    for (int i = 0; i < static_cast<int>(dataset.items.size()); ++i)
        by_class[dataset.items[i].label].push_back(i);

    Split s;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::vector<int>& idx = by_class[c];
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(c), 0x5B117ULL);
        std::shuffle(idx.begin(), idx.end(), rng);
        int n_val = 0;
        if (idx.size() >= 2)
            n_val = static_cast<int>(std::llround(val_fraction * static_cast<double>(idx.size())));
        n_val = std::min<int>(n_val, static_cast<int>(idx.size()) - 1);
        for (int i = 0; i < static_cast<int>(idx.size()); ++i)
            (i < n_val ? s.val : s.train).push_back(idx[i]);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    return s;
}

LeaveOneOut leave_one_out(const DatasetGroup& group, const std::string& target) {
    LeaveOneOut split;
    for (const DomainDataset& d : group.domains) {
        if (d.name == target)
            split.target = &d;
        else
            split.sources.push_back(&d);
    }
    if (!split.target)
        throw ArgumentError("leave_one_out: unknown target domain '" + target + "'");
    return split;
}

}  // namespace stylebias
