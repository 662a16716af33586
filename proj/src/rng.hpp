#pragma once

#include "common.hpp"

#include <random>
#include <string>

namespace glma {

// Deterministic named stream derived from (seed, label). Every stochastic
// operation in the pipeline draws from one of these, so a run is fully
// reproducible from its RunConfig. Normals use Box-Muller on top of the
// engine's raw output (std::normal_distribution is implementation-defined),
// and no spare value is cached: each draw consumes a fixed number of raw
// engine words, which makes `raw_count` a complete cursor for resume.
class RngStream {
public:
    RngStream(uint64_t seed, const std::string& label);

    // Uniform double in [0, 1), one raw word.
    double uniform();
    // Standard normal, exactly two raw words.
    double normal();
    // Uniform integer in [0, n), one raw word. n must be positive.
    uint64_t uniform_int(uint64_t n);

    // Raw engine words consumed so far; replay with `discard_raw`.
    uint64_t raw_count() const { return raw_; }
    void discard_raw(uint64_t n);

    const std::string& label() const { return label_; }
    uint64_t seed() const { return seed_; }

private:
    uint64_t next_raw();

    std::mt19937_64 eng_;
    uint64_t raw_ = 0;
    uint64_t seed_;
    std::string label_;
};

// Fill helpers draw in storage order (column-major), so results are a pure
// function of (stream state, shape).
Matrix randn_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols, double stddev);
Matrix uniform_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi);

} // namespace glma
