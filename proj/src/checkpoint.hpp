#pragma once

#include "config.hpp"
#include "train.hpp"

#include <string>

namespace glma {

// Binary training checkpoint. Header carries identity and resume cursors;
// the body is a sequence of named tensor blocks (adapter parameters and Adam
// moments) followed by a whole-file checksum. Layout is fixed and documented
// in FORMATS.md; all fields little-endian, tensor payloads column-major f64.
struct CheckpointHeader {
    uint32_t version = 0;
    uint64_t config_hash = 0;
    uint64_t seed = 0;
    uint32_t epoch = 0;
    uint64_t step = 0;
    double phi = 0.0;
    uint64_t rng_cursor = 0;
    ScaleProfile profile;
    uint32_t n_blocks = 0;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const TrainState& state, const RunConfig& cfg);

// Header only; validates magic, version and the trailing checksum reachability
// (truncation shows up as a format error).
CheckpointHeader read_checkpoint_header(const std::string& path);

// Full load. The checkpoint's config hash must match `cfg` unless `force`;
// tensor shapes must match the adapter structure implied by `cfg` always.
TrainState load_checkpoint(const std::string& path, const RunConfig& cfg, bool force);

} // namespace glma
