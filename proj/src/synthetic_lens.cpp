#include "psfsim/synthetic_lens.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "psfsim/angles.hpp"

namespace psfsim {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.8g", v);
    return buf;
}

void check_field_point(const SyntheticLensSpec& spec, const FieldPoint& fp) {
    const double tol = 1e-9;
    if (!(std::abs(fp.dz_um) <= spec.dz_range_um * (1.0 + tol) + tol)) {
        throw OutOfRangeError("defocus " + fmt(fp.dz_um) + " µm outside +-" +
                              fmt(spec.dz_range_um) + " µm");
    }
    if (!(std::abs(fp.r_mm) <= spec.r_max_mm * (1.0 + tol) + tol)) {
        throw OutOfRangeError("image height " + fmt(fp.r_mm) + " mm outside +-" +
                              fmt(spec.r_max_mm) + " mm");
    }
    if (!std::isfinite(fp.phi_deg)) {
        throw OutOfRangeError("azimuth must be finite");
    }
}

// Gaussian axis width from the signed focal excess.
double width_from_excess(const SyntheticLensSpec& spec, double excess_um) {
    const double rate = excess_um > 0.0 ? 1.0 + spec.defocus_asymmetry : 1.0;
    const double growth = spec.defocus_slope * excess_um * rate;
    return std::hypot(spec.sigma0_um, growth);
}

} // namespace

std::string SyntheticLensSpec::descriptor() const {
    std::string s = "synthetic_lens{f_mm=" + fmt(focal_mm);
    s += ";r_max_mm=" + fmt(r_max_mm);
    s += ";dz_range_um=" + fmt(dz_range_um);
    s += ";sigma0_um=" + fmt(sigma0_um);
    s += ";field_curvature=" + fmt(field_curvature);
    s += ";astigmatism=" + fmt(astigmatism);
    s += ";defocus_asymmetry=" + fmt(defocus_asymmetry);
    s += ";defocus_slope=" + fmt(defocus_slope);
    s += ";seed=" + std::to_string(seed) + "}";
    return s;
}

void validate_lens_spec(const SyntheticLensSpec& spec) {
    if (!(spec.sigma0_um > 0.0)) {
        throw OutOfRangeError("sigma0 must be positive");
    }
    if (!(spec.r_max_mm > 0.0) || !(spec.dz_range_um > 0.0)) {
        throw OutOfRangeError("r_max and dz_range must be positive");
    }
    if (spec.defocus_asymmetry == 0.0) {
        throw OutOfRangeError("defocus_asymmetry must be nonzero");
    }
}

LensWidths lens_widths(const SyntheticLensSpec& spec, const FieldPoint& fp) {
    check_field_point(spec, fp);
    const double r2 = fp.r_mm * fp.r_mm;
    const double shift_t = (spec.field_curvature + spec.astigmatism) * r2;
    const double shift_s = (spec.field_curvature - spec.astigmatism) * r2;
    LensWidths w;
    w.sigma_t_um = width_from_excess(spec, fp.dz_um - shift_t);
    w.sigma_s_um = width_from_excess(spec, fp.dz_um - shift_s);
    return w;
}

int quadrature_oversampling(double pitch_um, double sigma_min_um) {
    const double needed = 40.0 * pitch_um / sigma_min_um;
    return std::max(4, static_cast<int>(std::ceil(needed)));
}

namespace {

// Integrates the elliptical Gaussian density over a grid of square pixels by
// the midpoint rule with n x n subsamples per pixel. Coordinates are µm
// relative to the density center; y points up, rows run top to bottom.
void integrate_density(const SyntheticLensSpec& spec, const FieldPoint& fp,
                       int n_rows, int n_cols, double pitch_um, int oversample,
                       double center_row, double center_col, double* out) {
    const LensWidths w = lens_widths(spec, fp);
    const double ct = cos_deg(fp.phi_deg);
    const double st = sin_deg(fp.phi_deg);
    const double inv2t = 0.5 / (w.sigma_t_um * w.sigma_t_um);
    const double inv2s = 0.5 / (w.sigma_s_um * w.sigma_s_um);
    const double norm = 1.0 / (2.0 * std::numbers::pi * w.sigma_t_um * w.sigma_s_um);

    const int n = oversample;
    std::vector<double> offs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        offs[static_cast<std::size_t>(i)] = ((i + 0.5) / n - 0.5) * pitch_um;
    }
    const double cell_weight = norm * (pitch_um / n) * (pitch_um / n);

    for (int r = 0; r < n_rows; ++r) {
        const double yc = (center_row - (r + 0.5)) * pitch_um;
        for (int c = 0; c < n_cols; ++c) {
            const double xc = ((c + 0.5) - center_col) * pitch_um;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const double y = yc - offs[static_cast<std::size_t>(i)];
                for (int j = 0; j < n; ++j) {
                    const double x = xc + offs[static_cast<std::size_t>(j)];
                    const double xt = x * ct + y * st;
                    const double xs = -x * st + y * ct;
                    acc += std::exp(-(xt * xt * inv2t + xs * xs * inv2s));
                }
            }
            out[static_cast<std::size_t>(r) * n_cols + c] = acc * cell_weight;
        }
    }
}

int pick_oversample(const SyntheticLensSpec& spec, double pitch_um, int requested) {
    if (requested == 0) {
        return quadrature_oversampling(pitch_um, spec.sigma0_um);
    }
    if (requested < 4) {
        throw OutOfRangeError("oversampling must be >= 4");
    }
    return requested;
}

} // namespace

PsfKernel analytic_psf(const SyntheticLensSpec& spec, const FieldPoint& fp,
                       int size_k, double pitch_um, int oversample) {
    validate_lens_spec(spec);
    check_field_point(spec, fp);
    if (size_k < 1 || size_k % 2 == 0 || pitch_um <= 0.0) {
        throw OutOfRangeError("kernel size must be odd and pitch positive");
    }
    PsfKernel k(size_k, pitch_um);
    const int n = pick_oversample(spec, pitch_um, oversample);
    const double center = size_k / 2.0;
    integrate_density(spec, fp, size_k, size_k, pitch_um, n, center, center, k.values.data());
    return normalize(k);
}

HighResScan render_highres(const SyntheticLensSpec& spec, const FieldPoint& fp,
                           int size_px, double pitch_um, int oversample) {
    validate_lens_spec(spec);
    check_field_point(spec, fp);
    if (size_px < 1 || pitch_um <= 0.0) {
        throw OutOfRangeError("scan size and pitch must be positive");
    }
    HighResScan scan(size_px, size_px, pitch_um);
    const int n = pick_oversample(spec, pitch_um, oversample);
    const double center = size_px / 2.0;
    integrate_density(spec, fp, size_px, size_px, pitch_um, n, center, center,
                      scan.values.data());
    return scan;
}

std::size_t SamplingPlan::grid_point_count() const {
    return dz_values_um.size() * r_values_mm.size() * phi_values_deg.size();
}

std::vector<FieldPoint> SamplingPlan::points() const {
    std::vector<FieldPoint> pts;
    pts.reserve(grid_point_count());
    for (double dz : dz_values_um) {
        for (double r : r_values_mm) {
            for (std::size_t pi = 0; pi < phi_values_deg.size(); ++pi) {
                if (dedup_on_axis && r == 0.0 && pi > 0) {
                    continue; // same physical point at every azimuth
                }
                pts.push_back({dz, r, phi_values_deg[pi]});
            }
        }
    }
    return pts;
}

std::string SamplingPlan::descriptor() const {
    auto join = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) {
                s += ",";
            }
            s += fmt(v[i]);
        }
        return s;
    };
    return name + "{dz_um=[" + join(dz_values_um) + "];r_mm=[" + join(r_values_mm) +
           "];phi_deg=[" + join(phi_values_deg) + "];dedup_on_axis=" +
           (dedup_on_axis ? "1" : "0") + "}";
}

SamplingPlan SamplingPlan::series1() {
    SamplingPlan p;
    p.name = "series1";
    p.dz_values_um = {-11.25, 0.0, 11.25};
    p.r_values_mm = {-3.0, -2.25, -1.5, -0.75, 0.0, 0.75, 1.5, 2.25, 3.0};
    for (int i = 0; i < 12; ++i) {
        p.phi_values_deg.push_back(15.0 * i);
    }
    return p;
}

SamplingPlan SamplingPlan::series2() {
    SamplingPlan p;
    p.name = "series2";
    for (int i = 0; i <= 80; ++i) {
        p.dz_values_um.push_back(-50.0 + 1.25 * i);
    }
    p.r_values_mm = {-3.0, -1.5, 1.5, 3.0};
    p.phi_values_deg = {0.0, 60.0, 120.0};
    return p;
}

SamplingPlan SamplingPlan::empty() {
    SamplingPlan p;
    p.name = "empty";
    return p;
}

PsfDataset generate_dataset(const SyntheticLensSpec& spec, const SamplingPlan& plan,
                            int size_k, double pitch_um) {
    validate_lens_spec(spec);
    PsfDataset ds;
    ds.meta.pitch_native_um = pitch_um;
    ds.meta.pitch_target_um = pitch_um;
    ds.meta.size_k = size_k;
    ds.meta.r_max_mm = spec.r_max_mm;
    ds.meta.dz_min_um = -spec.dz_range_um;
    ds.meta.dz_max_um = spec.dz_range_um;
    ds.meta.source = spec.descriptor();
    ds.meta.sampling_plan = plan.descriptor();
    ds.meta.grid_points = plan.grid_point_count();
    const std::vector<FieldPoint> pts = plan.points();
    ds.entries.reserve(pts.size());
    for (const FieldPoint& fp : pts) {
        ds.entries.push_back({fp, analytic_psf(spec, fp, size_k, pitch_um)});
    }
    validate_dataset(ds);
    return ds;
}

} // namespace psfsim
