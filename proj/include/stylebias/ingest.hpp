#pragma once

#include <filesystem>

#include "stylebias/dataset.hpp"

namespace stylebias {

// Reads a root/<domain>/<class>/<image> tree (PACS/VLCS/Office-Home layout).
// Domains and classes are ordered lexicographically; all domains must carry
// the same class subdirectories. Images are resized to `side` and scaled to
// [0,1].
DatasetGroup ingest_directory(const std::filesystem::path& root, int side);

// Writes a group back out in the same layout (PNG files).
void export_group(const DatasetGroup& group, const std::filesystem::path& root);

// Single-image helpers. `side` 0 keeps the stored resolution; otherwise the
// image is resized square as in ingest_directory.
ImageTensor load_image(const std::filesystem::path& file, int side = 0);
void save_image(const ImageTensor& img, const std::filesystem::path& file);

}  // namespace stylebias
