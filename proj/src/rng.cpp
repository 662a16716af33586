#include "rng.hpp"

#include <cmath>

namespace glma {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace

RngStream::RngStream(uint64_t seed, const std::string& label)
    : seed_(seed), label_(label) {
    uint64_t h = fnv1a64(label);
    h ^= seed * 0x9e3779b97f4a7c15ull;
    eng_.seed(splitmix64(h));
}

uint64_t RngStream::next_raw() {
    ++raw_;
    return eng_();
}

double RngStream::uniform() {
    // 53 mantissa bits -> [0, 1).
    return static_cast<double>(next_raw() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint64_t RngStream::uniform_int(uint64_t n) {
    if (n == 0) fail(ErrorKind::input, "uniform_int: n must be positive");
    return next_raw() % n;
}

void RngStream::discard_raw(uint64_t n) {
    eng_.discard(n);
    raw_ += n;
}

Matrix randn_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    Matrix m(rows, cols);
    double* p = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) p[i] = stddev * rng.normal();
    return m;
}

Matrix uniform_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
    Matrix m(rows, cols);
    double* p = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) p[i] = lo + (hi - lo) * rng.uniform();
    return m;
}

} // namespace glma
