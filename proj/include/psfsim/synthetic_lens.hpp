#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psfsim/dataset.hpp"
#include "psfsim/psf_core.hpp"

namespace psfsim {

/// Analytic ground-truth lens. Its PSF is an elliptical Gaussian whose
/// tangential/sagittal widths grow with the distance from the (field
/// dependent) best-focus position, with a different growth rate for positive
/// and negative defocus. Computable in closed form at any field point, it
/// serves as training source and as the oracle for every pipeline stage.
struct SyntheticLensSpec {
    double focal_mm = 6.0;
    double r_max_mm = 3.0;
    double dz_range_um = 50.0;
    double sigma0_um = 7.5;          // best-focus blur radius
    double field_curvature = 2.05;   // tangential focal shift, µm per mm² of R²
    double astigmatism = 1.25;       // tangential/sagittal focus split, µm per mm²
    double defocus_asymmetry = 0.3;  // growth for dz > 0 is scaled by (1 + this)
    double defocus_slope = 0.25;     // blur radius growth per µm of defocus
    std::uint64_t seed = 0;          // reserved for stochastic perturbations

    std::string descriptor() const;
};

void validate_lens_spec(const SyntheticLensSpec& spec);

/// Closed-form second-moment widths of the analytic PSF at a field point,
/// before pixel integration. Exposed so tests can derive expected values
/// independently of the rendering path.
struct LensWidths {
    double sigma_t_um = 0.0; // tangential = radial direction
    double sigma_s_um = 0.0; // sagittal
};
LensWidths lens_widths(const SyntheticLensSpec& spec, const FieldPoint& fp);

/// Midpoint-rule oversampling used to integrate the analytic density over a
/// pixel: at least 4x, raised until the subsample step is <= sigma0/40 so the
/// quadrature error stays well below the 1e-3 comparison tolerances.
int quadrature_oversampling(double pitch_um, double sigma_min_um);

/// Bin-integrated, normalized kernel of the analytic lens. oversample = 0
/// picks quadrature_oversampling(); explicit values must be >= 4.
PsfKernel analytic_psf(const SyntheticLensSpec& spec, const FieldPoint& fp,
                       int size_k, double pitch_um, int oversample = 0);

/// Same density rendered at measurement resolution (default pitch 0.307 µm),
/// centered on the scan. Values are raw bin integrals of the unit-flux
/// density, so the total approaches 1 as the window grows.
HighResScan render_highres(const SyntheticLensSpec& spec, const FieldPoint& fp,
                           int size_px, double pitch_um, int oversample = 0);

/// Cartesian sampling grid over (dz, r, phi). When dedup_on_axis is set, the
/// redundant copies of r = 0 (same physical point at every azimuth) collapse
/// to the first azimuth.
struct SamplingPlan {
    std::string name = "custom";
    std::vector<double> dz_values_um;
    std::vector<double> r_values_mm;
    std::vector<double> phi_values_deg;
    bool dedup_on_axis = true;

    /// Raw Cartesian grid size, before on-axis dedup.
    std::size_t grid_point_count() const;
    /// Deduped field points in fixed (dz-major, then r, then phi) order.
    std::vector<FieldPoint> points() const;
    std::string descriptor() const;

    /// High in-plane resolution, three defocus planes. 12 azimuths x 9
    /// signed radii per plane as in the reference measurement layout.
    static SamplingPlan series1();
    /// Reduced in-plane resolution, fine defocus sweep over the full
    /// +-50 µm range: 81 planes x 12 in-plane points = 972 samples.
    static SamplingPlan series2();
    static SamplingPlan empty();
};

/// Evaluates the analytic PSF on every plan point. Metadata records the lens
/// spec and the exact grid so the dataset is regenerable bit-for-bit.
PsfDataset generate_dataset(const SyntheticLensSpec& spec, const SamplingPlan& plan,
                            int size_k = 13, double pitch_um = 6.14);

} // namespace psfsim
