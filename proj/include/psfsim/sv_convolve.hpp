#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "psfsim/depth.hpp"
#include "psfsim/image.hpp"
#include "psfsim/psf_core.hpp"
#include "psfsim/regressor.hpp"
#include "psfsim/synthetic_lens.hpp"

namespace psfsim {

/// Sensor raster and its position relative to the optical axis. Pixel
/// positions are indices; the optical center may sit between pixels.
struct SensorGeometry {
    int width = 0;
    int height = 0;
    double pixel_pitch_um = 6.0;
    double center_row = 0.0;
    double center_col = 0.0;
    double r_max_mm = 3.0;
};

SensorGeometry centered_geometry(int width, int height, double pixel_pitch_um,
                                 double r_max_mm);

/// Field coordinates of one pixel: R from the pitch-scaled distance to the
/// optical center, phi from atan2 with y pointing up, dz supplied by the
/// caller. phi is 0 by convention when the pixel is the optical center.
FieldPoint field_of_pixel(const SensorGeometry& geom, int row, int col, double dz_um);

/// True iff R(pixel) <= r_max; the degrade path forces everything outside to
/// zero, imitating an undersized aperture.
std::vector<std::uint8_t> valid_mask(const SensorGeometry& geom);

/// Copy of the image with pixels outside the valid aperture set to zero.
Image apply_valid_mask(const Image& img, const SensorGeometry& geom);

/// Anything that can produce a normalized kernel for a field point within
/// its validity ranges. Implemented by the trained regressor and by the
/// analytic lens (which doubles as the test oracle).
class PsfSource {
public:
    virtual ~PsfSource() = default;
    virtual int size_k() const = 0;
    virtual double pitch_um() const = 0;
    virtual double dz_min_um() const = 0;
    virtual double dz_max_um() const = 0;
    virtual double r_max_mm() const = 0;
    virtual PsfKernel kernel_at(const FieldPoint& fp) const = 0;
};

class ModelPsfSource final : public PsfSource {
public:
    explicit ModelPsfSource(const RegressorModel& model) : model_(&model) {}
    int size_k() const override { return model_->size_k; }
    double pitch_um() const override { return model_->pitch_um; }
    double dz_min_um() const override { return -model_->dz_scale_um; }
    double dz_max_um() const override { return model_->dz_scale_um; }
    double r_max_mm() const override { return model_->r_scale_mm; }
    PsfKernel kernel_at(const FieldPoint& fp) const override { return forward(*model_, fp); }

private:
    const RegressorModel* model_;
};

class SyntheticPsfSource final : public PsfSource {
public:
    SyntheticPsfSource(const SyntheticLensSpec& spec, int size_k, double pitch_um,
                       int oversample = 0)
        : spec_(spec), size_k_(size_k), pitch_um_(pitch_um), oversample_(oversample) {}
    int size_k() const override { return size_k_; }
    double pitch_um() const override { return pitch_um_; }
    double dz_min_um() const override { return -spec_.dz_range_um; }
    double dz_max_um() const override { return spec_.dz_range_um; }
    double r_max_mm() const override { return spec_.r_max_mm; }
    PsfKernel kernel_at(const FieldPoint& fp) const override {
        return analytic_psf(spec_, fp, size_k_, pitch_um_, oversample_);
    }

private:
    SyntheticLensSpec spec_;
    int size_k_;
    double pitch_um_;
    int oversample_;
};

/// Per-pixel defocus lookup: either a constant or a DefocusMap matching the
/// image dimensions.
struct DefocusQuery {
    const DefocusMap* map = nullptr;
    double constant_um = 0.0;

    double at(int row, int col) const {
        return map ? map->at(row, col) : constant_um;
    }
};

/// Uniformly spaced kernel nodes at pixel positions (i*s, j*s), covering the
/// whole image plus one guard ring so every pixel lies in a complete cell.
struct KernelGrid {
    int spacing = 0;
    int nodes_x = 0; // columns
    int nodes_y = 0; // rows
    int size_k = 0;
    double pitch_um = 0.0;
    std::vector<PsfKernel> kernels;       // row-major nodes_y x nodes_x
    std::vector<std::uint8_t> clamped;    // node field point was clamped into validity

    const PsfKernel& node(int i, int j) const {
        return kernels[static_cast<std::size_t>(i) * nodes_x + j];
    }
    PsfKernel& node(int i, int j) {
        return kernels[static_cast<std::size_t>(i) * nodes_x + j];
    }
};

int grid_nodes_along(int extent, int spacing);

/// Bilinear cell of a (possibly border-clamped) pixel position: node indices
/// (i, j) of the low corner plus fractional weights in [0, 1).
struct CellWeights {
    int i = 0;
    int j = 0;
    double wx = 0.0;
    double wy = 0.0;
};
CellWeights cell_weights(int spacing, int height, int width, int row, int col);

/// Samples the source on the node lattice. Node field points outside the
/// source validity are clamped (R and dz) and flagged. When
/// spatially_invariant is set, every node queries (dz, 0, 0), reproducing a
/// purely defocus-driven blur.
KernelGrid build_kernel_grid(const PsfSource& source, const SensorGeometry& geom,
                             const DefocusQuery& defocus, int spacing,
                             bool spatially_invariant = false);

/// Reference scatter convolution, evaluated in gather form so a plain
/// triple loop reproduces it bit-for-bit: every source pixel spreads by its
/// own kernel, bilinearly interpolated from the grid. The input must already
/// be masked; reads outside the image clamp to the border.
Image convolve_exact(const Image& img, const KernelGrid& grid);

/// Same reference semantics with per-pixel kernels taken directly from the
/// source (no grid). Single-threaded; kernel rows are cached internally.
Image convolve_exact(const Image& img, const PsfSource& source, const SensorGeometry& geom,
                     const DefocusQuery& defocus, bool spatially_invariant = false);

/// Fast path: per grid node, the bilinear weight pyramid times the image is
/// convolved with that node's kernel and accumulated. Mathematically
/// identical to convolve_exact on the same grid; floating point reordering
/// only. Output is bit-reproducible for any thread count.
Image convolve_blockwise(const Image& img, const KernelGrid& grid, int threads = 1);

struct ErrorReportRow {
    int spacing = 0;
    double max_err = 0.0;
    double mean_err = 0.0;
    double wall_ms = 0.0; // excluded from persisted reports; see cmd_error_report
};

/// Compares grid-interpolated convolution against per-pixel source kernels
/// for each spacing. The exact reference is computed once and reused.
std::vector<ErrorReportRow> interpolation_error_report(
    const Image& img, const PsfSource& source, const SensorGeometry& geom,
    const DefocusQuery& defocus, const std::vector<int>& spacings, int threads = 1,
    bool spatially_invariant = false);

struct DegradeOptions {
    int spacing = 16;
    bool spatially_invariant = false;
    int threads = 1;
};

/// End-to-end entry point: mask -> kernel grid -> blockwise convolve ->
/// mask. Pixels outside the valid aperture are zero in the result.
Image degrade(const Image& img, const PsfSource& source, const SensorGeometry& geom,
              const DefocusQuery& defocus, const DegradeOptions& options = {});

} // namespace psfsim
