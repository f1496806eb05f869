#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psfsim/dataset.hpp"
#include "psfsim/synthetic_lens.hpp"
#include "test_support.hpp"

using namespace psfsim;

namespace {

const SyntheticLensSpec kLens; // defaults

// discrete second moment along the given axis, in µm²
double moment2(const PsfKernel& k, bool along_x) {
    const double c = (k.size_k - 1) / 2.0;
    double s = 0.0, m1 = 0.0, m2 = 0.0;
    for (int r = 0; r < k.size_k; ++r) {
        for (int col = 0; col < k.size_k; ++col) {
            const double pos = ((along_x ? col : r) - c) * k.pitch_um;
            const double v = k.at(r, col);
            s += v;
            m1 += v * pos;
            m2 += v * pos * pos;
        }
    }
    m1 /= s;
    return m2 / s - m1 * m1;
}

} // namespace

TEST_CASE("quadrature oversampling floor and scaling") {
    CHECK(quadrature_oversampling(0.307, 6.0) == 4);
    CHECK(quadrature_oversampling(6.14, 6.0) == 41);
    CHECK(quadrature_oversampling(1.0, 6.0) == 7);
}

TEST_CASE("on-axis kernel is rotation invariant") {
    const PsfKernel k = analytic_psf(kLens, {0.0, 0.0, 0.0}, 13, 6.14);
    for (int r = 0; r < 13; ++r) {
        for (int c = 0; c < 13; ++c) {
            CHECK(std::abs(k.at(r, c) - k.at(c, r)) < 1e-9);
            CHECK(std::abs(k.at(r, c) - k.at(12 - r, c)) < 1e-9);
            CHECK(std::abs(k.at(r, c) - k.at(r, 12 - c)) < 1e-9);
        }
    }
}

TEST_CASE("azimuth + 180 degrees rotates the kernel grid") {
    const PsfKernel a = analytic_psf(kLens, {0.0, 2.0, 35.0}, 13, 6.14);
    const PsfKernel b = analytic_psf(kLens, {0.0, 2.0, 215.0}, 13, 6.14);
    for (int r = 0; r < 13; ++r) {
        for (int c = 0; c < 13; ++c) {
            CHECK(std::abs(a.at(r, c) - b.at(12 - r, 12 - c)) < 1e-9);
        }
    }
}

TEST_CASE("signed image height folds into the azimuth") {
    const PsfKernel a = analytic_psf(kLens, {5.0, -2.0, 30.0}, 13, 6.14);
    const PsfKernel b = analytic_psf(kLens, {5.0, 2.0, 210.0}, 13, 6.14);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(std::abs(a.values[i] - b.values[i]) < 1e-9);
    }
}

TEST_CASE("defocus asymmetry: measured width ratio matches the closed form") {
    // closed form widths of the density, computed right here
    const double g_pos = kLens.defocus_slope * 50.0 * (1.0 + kLens.defocus_asymmetry);
    const double g_neg = kLens.defocus_slope * 50.0;
    const double var_pos = kLens.sigma0_um * kLens.sigma0_um + g_pos * g_pos;
    const double var_neg = kLens.sigma0_um * kLens.sigma0_um + g_neg * g_neg;

    // pixel integration adds the second moment of the sampling: p^2/12 for
    // the bin, minus p^2/(12 n^2) from the midpoint quadrature inside it
    const double pitch = 1.0;
    const int n = quadrature_oversampling(pitch, kLens.sigma0_um);
    const double pixel_term = pitch * pitch / 12.0 * (1.0 - 1.0 / (n * n));
    const double expected = std::sqrt((var_pos + pixel_term) / (var_neg + pixel_term));

    const int size = 365; // > 7.7 sigma half-width at the widest point
    const PsfKernel plus = analytic_psf(kLens, {50.0, 0.0, 0.0}, size, pitch);
    const PsfKernel minus = analytic_psf(kLens, {-50.0, 0.0, 0.0}, size, pitch);
    const double measured = std::sqrt(moment2(plus, true) / moment2(minus, true));
    CHECK(std::abs(measured / expected - 1.0) < 1e-6);
}

TEST_CASE("analytic_psf is deterministic") {
    const PsfKernel a = analytic_psf(kLens, {7.5, 1.5, 123.0}, 13, 6.14);
    const PsfKernel b = analytic_psf(kLens, {7.5, 1.5, 123.0}, 13, 6.14);
    CHECK(a.values == b.values);
}

TEST_CASE("render_highres: unit flux inside a wide window") {
    const HighResScan scan = render_highres(kLens, {0.0, 0.0, 0.0}, 320, 0.307);
    CHECK(std::abs(scan.sum() - 1.0) < 1e-6);
    const HighResScan again = render_highres(kLens, {0.0, 0.0, 0.0}, 320, 0.307);
    CHECK(scan.values == again.values);
}

TEST_CASE("render -> preprocess matches analytic_psf at the target pitch") {
    for (const FieldPoint fp : {FieldPoint{0.0, 0.0, 0.0}, FieldPoint{5.0, 1.5, 30.0},
                                FieldPoint{-10.0, 2.25, 120.0}}) {
        const HighResScan scan = render_highres(kLens, fp, 384, 0.307);
        const PsfKernel processed = preprocess_scan(scan, 6.14, 13);
        const PsfKernel oracle = analytic_psf(kLens, fp, 13, 6.14);
        CHECK(processed.pitch_um == doctest::Approx(6.14));
        CHECK(testsupport::kernel_rel_diff(processed, oracle) < 1e-3);
    }
}

TEST_CASE("kernel values vary continuously with the field point") {
    const FieldPoint base{10.0, 1.5, 40.0};
    const PsfKernel k0 = analytic_psf(kLens, base, 13, 6.14);
    const FieldPoint dzp{base.dz_um + 0.1, base.r_mm, base.phi_deg};
    const FieldPoint rp{base.dz_um, base.r_mm + 0.006, base.phi_deg};
    const FieldPoint pp{base.dz_um, base.r_mm, base.phi_deg + 0.36};
    for (const FieldPoint& fp : {dzp, rp, pp}) {
        const PsfKernel k1 = analytic_psf(kLens, fp, 13, 6.14);
        for (std::size_t i = 0; i < k0.values.size(); ++i) {
            CHECK(std::abs(k1.values[i] - k0.values[i]) < 1e-2);
        }
    }
}

TEST_CASE("width is minimal at the focal shift and grows monotonically") {
    // on axis the shift is zero
    double prev = -1.0;
    for (double dz : {0.0, 10.0, 20.0, 30.0, 40.0, 50.0}) {
        const PsfKernel k = analytic_psf(kLens, {dz, 0.0, 0.0}, 41, 6.14);
        const double w = moment2(k, true) + moment2(k, false);
        CHECK(w > prev);
        prev = w;
    }
    // off axis the tangential width is minimal at the tangential focal shift
    const double r = 1.5;
    const double shift = (kLens.field_curvature + kLens.astigmatism) * r * r; // µm
    std::vector<double> widths;
    for (double offset : {-20.0, -10.0, 0.0, 10.0, 20.0}) {
        const PsfKernel k = analytic_psf(kLens, {shift + offset, r, 0.0}, 41, 6.14);
        widths.push_back(moment2(k, true));
    }
    CHECK(widths[0] > widths[1]);
    CHECK(widths[1] > widths[2]);
    CHECK(widths[2] < widths[3]);
    CHECK(widths[3] < widths[4]);
}

TEST_CASE("sampling plan presets record their grids") {
    const SamplingPlan s1 = SamplingPlan::series1();
    CHECK(s1.grid_point_count() == 324);
    CHECK(s1.points().size() == 291); // on-axis azimuth copies collapse
    const SamplingPlan s2 = SamplingPlan::series2();
    CHECK(s2.grid_point_count() == 972);
    CHECK(s2.points().size() == 972);
    CHECK(SamplingPlan::empty().points().empty());
}

TEST_CASE("generate_dataset: empty and singleton plans") {
    const PsfDataset empty = generate_dataset(kLens, SamplingPlan::empty());
    CHECK(empty.entries.empty());
    CHECK(empty.meta.grid_points == 0);

    SamplingPlan single;
    single.dz_values_um = {0.0};
    single.r_values_mm = {0.0};
    single.phi_values_deg = {0.0};
    const PsfDataset ds = generate_dataset(kLens, single);
    REQUIRE(ds.entries.size() == 1);
    const PsfKernel direct = analytic_psf(kLens, {0.0, 0.0, 0.0}, 13, 6.14);
    CHECK(ds.entries[0].kernel.values == direct.values);
}

TEST_CASE("generate_dataset: series1 manifest counts") {
    const PsfDataset ds = generate_dataset(kLens, SamplingPlan::series1());
    CHECK(ds.meta.grid_points == 324);
    CHECK(ds.entries.size() == 291);
    CHECK(ds.meta.dz_min_um == -50.0);
    CHECK(ds.meta.dz_max_um == 50.0);
}

TEST_CASE("field points outside the lens ranges are rejected") {
    CHECK_THROWS_AS(analytic_psf(kLens, {60.0, 0.0, 0.0}, 13, 6.14), OutOfRangeError);
    CHECK_THROWS_AS(analytic_psf(kLens, {0.0, 3.5, 0.0}, 13, 6.14), OutOfRangeError);
    CHECK_THROWS_AS(analytic_psf(kLens, {0.0, 0.0, 0.0}, 12, 6.14), OutOfRangeError);
    SyntheticLensSpec bad = kLens;
    bad.defocus_asymmetry = 0.0;
    CHECK_THROWS_AS(analytic_psf(bad, {0.0, 0.0, 0.0}, 13, 6.14), OutOfRangeError);
}
