#pragma once

#include "common.hpp"

namespace glma {

// 3-channel image, values normalized to [-1, 1].
// `chw` packs channels as rows: row c holds the h*w pixels of channel c
// in row-major pixel order.
struct Image {
    int h = 0;
    int w = 0;
    Matrix chw; // (3 x h*w)

    static Image zeros(int h, int w) {
        Image im;
        im.h = h;
        im.w = w;
        im.chw = Matrix::Zero(3, static_cast<Eigen::Index>(h) * w);
        return im;
    }

    double& at(int c, int y, int x) { return chw(c, static_cast<Eigen::Index>(y) * w + x); }
    double at(int c, int y, int x) const { return chw(c, static_cast<Eigen::Index>(y) * w + x); }
};

} // namespace glma
