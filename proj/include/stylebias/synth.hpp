#pragma once

#include <cstdint>
#include <vector>

#include "stylebias/dataset.hpp"

namespace stylebias {

// Procedural shapes-on-textures benchmark. Shape family encodes the class,
// texture family encodes the domain: silhouettes are shared across domains
// for matched (class, sample) pairs while fill/background statistics differ.
// The last of the four base texture families is grayscale line art, which
// makes it the most texture-shifted target for leave-one-out runs.
DatasetGroup synthesize_group(std::uint64_t seed, int n_domains, int n_classes, int per_class,
                              int side);

// Full-frame renderings of the per-class texture signatures (no silhouette),
// labeled by class. `families` selects which domain texture families to draw
// from; defaults to the colorful ones.
DomainDataset make_texture_pool(std::uint64_t seed, int n_classes, int per_class, int side,
                                const std::vector<int>& families = {0, 1, 2});

// Binary foreground mask of one synthesized sample, for factorization checks.
std::vector<std::uint8_t> synth_shape_mask(std::uint64_t seed, int class_idx, int sample_idx,
                                           int side);

}  // namespace stylebias
