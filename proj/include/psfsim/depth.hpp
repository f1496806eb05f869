#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "psfsim/errors.hpp"

namespace psfsim {

/// Per-pixel object distance in meters; infinity is a valid distance.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> meters;

    DepthMap() = default;
    DepthMap(int w, int h, double fill = 0.0)
        : width(w), height(h),
          meters(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    double at(int row, int col) const {
        return meters[static_cast<std::size_t>(row) * width + col];
    }
    double& at(int row, int col) {
        return meters[static_cast<std::size_t>(row) * width + col];
    }
};

enum class DefocusFlag : std::uint8_t {
    ok = 0,
    clamped_low = 1,
    clamped_high = 2,
    invalid = 3, // object at or inside the focal length
};

/// Per-pixel defocus in µm plus a flag recording clamping or invalid pixels.
struct DefocusMap {
    int width = 0;
    int height = 0;
    std::vector<double> dz_um;
    std::vector<DefocusFlag> flags;

    DefocusMap() = default;
    DefocusMap(int w, int h)
        : width(w), height(h),
          dz_um(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0),
          flags(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), DefocusFlag::ok) {}

    double at(int row, int col) const {
        return dz_um[static_cast<std::size_t>(row) * width + col];
    }
    DefocusFlag flag_at(int row, int col) const {
        return flags[static_cast<std::size_t>(row) * width + col];
    }
};

/// Fixed-focus camera: the lens-imager distance is set once for an object at
/// focus_distance_m (infinity allowed). near/far describe the z-buffer clip
/// planes used when decoding buffers.
struct CameraFocusSpec {
    double focal_mm = 6.0;
    double focus_distance_m = std::numeric_limits<double>::infinity();
    double near_m = 0.1;
    double far_m = 1000.0;
};

/// Thin lens formula 1/f = 1/o + 1/i, returning the image distance in mm.
/// Throws ObjectInsideFocalError for o <= f.
double thin_lens_image_distance_mm(double focal_mm, double object_m);

/// Defocus of an object at distance object_m relative to the fixed image
/// plane, in µm. Objects nearer than the focus distance give positive dz.
double defocus_from_distance_um(const CameraFocusSpec& spec, double object_m);

/// Standard perspective z-buffer decode: v in [0,1], v = 0 at the near
/// plane. z_eye = n*f / (f - v*(f - n)).
DepthMap linearize_zbuffer(const std::vector<double>& values01, int width, int height,
                           double near_m, double far_m);

/// Inverse of linearize_zbuffer for a single value.
double encode_zbuffer(double z_m, double near_m, double far_m);

/// Per-pixel defocus_from_distance, clamped into [dz_min, dz_max] with flags.
/// Pixels with o <= f are flagged invalid (dz = 0), not an abort.
DefocusMap defocus_map(const CameraFocusSpec& spec, const DepthMap& depth,
                       double dz_min_um, double dz_max_um);

/// Defocus varying linearly with column from dz_left to dz_right; rows equal.
DefocusMap gradient_defocus(int width, int height, double dz_left_um, double dz_right_um);

/// Depth-map file: PGM (16-bit, z-buffer encoded) or PFM (meters or z-buffer
/// values) plus a sidecar text header <path>.dhdr describing the encoding.
struct DepthFileHeader {
    std::string encoding; // "linear_meters" or "zbuffer"
    double near_m = 0.0;
    double far_m = 0.0;
    std::string v_convention = "zero_at_near";
};

void save_depth_map(const DepthMap& depth, const std::string& path,
                    const DepthFileHeader& header);
DepthMap load_depth_map(const std::string& path);
DepthFileHeader load_depth_header(const std::string& path);

} // namespace psfsim
