#pragma once

#include <array>
#include <vector>

#include "psfsim/errors.hpp"

namespace psfsim {

/// One point of the PSF parameter space: defocus (µm), image height (mm,
/// signed; the sign folds into the azimuth like in a measurement sweep) and
/// azimuth (degrees).
struct FieldPoint {
    double dz_um = 0.0;
    double r_mm = 0.0;
    double phi_deg = 0.0;
};

/// A k x k grid of nonnegative intensities with a physical pixel pitch; the
/// optical transfer function at one field point. The centroid is allowed to
/// sit off-center: off-center mass encodes local distortion and is never
/// re-centered by any operation in this library.
struct PsfKernel {
    int size_k = 0;
    double pitch_um = 0.0;
    std::vector<double> values; // row-major, size_k * size_k
    bool normalized = false;

    PsfKernel() = default;
    PsfKernel(int size, double pitch)
        : size_k(size), pitch_um(pitch),
          values(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0.0) {}

    double& at(int row, int col) {
        return values[static_cast<std::size_t>(row) * size_k + col];
    }
    double at(int row, int col) const {
        return values[static_cast<std::size_t>(row) * size_k + col];
    }
    int center() const { return (size_k - 1) / 2; }
    double sum() const;

    /// Flux centroid in continuous pixel coordinates (pixel (i,j) spans
    /// [i,i+1) x [j,j+1), so the geometric center of the grid is size_k/2).
    std::array<double, 2> centroid() const;
};

/// Throws if the kernel violates its invariants (odd size >= 1, values >= 0,
/// unit sum when flagged normalized).
void validate_kernel(const PsfKernel& k);

/// High resolution measurement (or synthetic) scan of a single PSF.
struct HighResScan {
    int width = 0;
    int height = 0;
    double pitch_um = 0.0;
    std::vector<double> values; // row-major

    HighResScan() = default;
    HighResScan(int w, int h, double pitch)
        : width(w), height(h), pitch_um(pitch),
          values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0) {}

    double& at(int row, int col) {
        return values[static_cast<std::size_t>(row) * width + col];
    }
    double at(int row, int col) const {
        return values[static_cast<std::size_t>(row) * width + col];
    }

    double sum() const;
    /// Flux centroid in continuous pixel coordinates, (row, col).
    std::array<double, 2> centroid() const;
};

/// Scales the kernel to unit total flux. Throws AllZeroKernelError when the
/// kernel carries no flux at all.
PsfKernel normalize(const PsfKernel& kernel);

/// Cuts an out_px x out_px window whose physical center is as close as
/// possible to (center_row, center_col), given in continuous pixel
/// coordinates. Windows that would leave the scan are an error, never padded.
HighResScan crop_centered(const HighResScan& scan, int out_px,
                          double center_row, double center_col);

/// Flux-preserving downsampling: each output pixel is the plain sum of its
/// factor x factor source block, so total flux is conserved exactly up to
/// floating point summation. Requires a square scan of size factor * k with
/// odd k.
PsfKernel bin_downsample(const HighResScan& scan, int factor);

/// Element-wise bilinear blend of four kernels sharing shape and pitch.
/// k10 is the +x (column) neighbor, k01 the +y (row) neighbor.
PsfKernel interpolate_kernels(const PsfKernel& k00, const PsfKernel& k10,
                              const PsfKernel& k01, const PsfKernel& k11,
                              double wx, double wy);

} // namespace psfsim
