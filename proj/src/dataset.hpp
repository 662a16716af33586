#pragma once

#include "image.hpp"
#include "rng.hpp"

#include <string>
#include <vector>

namespace glma {

// One line of a dataset manifest. image_path is relative to the manifest's
// directory.
struct ManifestRecord {
    std::string image_path;
    std::string caption;
};

struct Manifest {
    std::vector<ManifestRecord> records;
    std::string base_dir;
    std::string resolve(size_t index) const;
};

// Line-delimited records; every image path must resolve to an existing file.
Manifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<ManifestRecord>& records);

// Synthetic corpus: one solid shape on a solid background, captioned by the
// fixed template "a <color> <shape> on a <color> background". Geometry is
// jittered per record from `rng`.
const std::vector<std::string>& synth_colors();
const std::vector<std::string>& synth_shapes();

Image render_shape(int img_size, const std::string& shape, const std::string& fg,
                   const std::string& bg, int cx, int cy, int half);

// Writes <out_dir>/images/NNNN.png and <out_dir>/manifest.jsonl.
Manifest synth_dataset(const std::string& out_dir, int count, int img_size, RngStream& rng);

} // namespace glma
