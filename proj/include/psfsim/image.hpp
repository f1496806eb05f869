#pragma once

#include <cstddef>
#include <vector>

#include "psfsim/errors.hpp"

namespace psfsim {

/// Planar real-valued image in linear intensity scale.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data; // channel-major planes, each row-major

    Image() = default;
    Image(int w, int h, int c = 1, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
                   static_cast<std::size_t>(c),
               fill) {}

    std::size_t plane_size() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    double* plane(int c) { return data.data() + plane_size() * static_cast<std::size_t>(c); }
    const double* plane(int c) const {
        return data.data() + plane_size() * static_cast<std::size_t>(c);
    }
    double at(int row, int col, int c = 0) const {
        return plane(c)[static_cast<std::size_t>(row) * width + col];
    }
    double& at(int row, int col, int c = 0) {
        return plane(c)[static_cast<std::size_t>(row) * width + col];
    }

    /// Single-channel view copy of channel c.
    Image channel(int c) const;
};

} // namespace psfsim
