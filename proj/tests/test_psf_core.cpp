#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psfsim/psf_core.hpp"
#include "psfsim/rng.hpp"
#include "test_support.hpp"

using namespace psfsim;

TEST_CASE("normalize: single point mass") {
    PsfKernel k(13, 6.0);
    k.at(6, 6) = 5.0;
    const PsfKernel n = normalize(k);
    CHECK(n.normalized);
    CHECK(n.at(6, 6) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(n.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalize: uniform grid") {
    PsfKernel k(13, 6.0);
    for (double& v : k.values) {
        v = 1.0;
    }
    const PsfKernel n = normalize(k);
    for (double v : n.values) {
        CHECK(v == doctest::Approx(1.0 / 169.0).epsilon(1e-12));
    }
}

TEST_CASE("normalize: proportionality") {
    PsfKernel k(3, 1.0);
    k.at(0, 0) = 2.0;
    k.at(0, 1) = 6.0;
    const PsfKernel n = normalize(k);
    CHECK(n.at(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(n.at(0, 1) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("normalize: zero kernel is an error") {
    PsfKernel k(13, 6.0);
    CHECK_THROWS_AS(normalize(k), AllZeroKernelError);
}

TEST_CASE("normalize is idempotent") {
    Rng rng(7);
    const PsfKernel n = testsupport::random_normalized_kernel(rng, 13, 6.0);
    const PsfKernel nn = normalize(n);
    for (std::size_t i = 0; i < n.values.size(); ++i) {
        CHECK(nn.values[i] == doctest::Approx(n.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("crop_centered: window indices") {
    HighResScan scan(100, 100, 0.5);
    for (int r = 0; r < 100; ++r) {
        for (int c = 0; c < 100; ++c) {
            scan.at(r, c) = r * 1000.0 + c;
        }
    }
    const HighResScan out = crop_centered(scan, 10, 50.0, 50.0);
    CHECK(out.width == 10);
    CHECK(out.at(0, 0) == 45 * 1000.0 + 45); // rows/cols 45..54 inclusive
    CHECK(out.at(9, 9) == 54 * 1000.0 + 54);
}

TEST_CASE("crop_centered: identity crop") {
    HighResScan scan(20, 20, 0.5);
    for (std::size_t i = 0; i < scan.values.size(); ++i) {
        scan.values[i] = static_cast<double>(i);
    }
    const HighResScan out = crop_centered(scan, 20, 10.0, 10.0);
    CHECK(out.values == scan.values);
}

TEST_CASE("crop_centered: out-of-bounds window") {
    HighResScan scan(100, 100, 0.5);
    CHECK_THROWS_AS(crop_centered(scan, 10, 2.0, 2.0), WindowOutOfBoundsError);
    CHECK_THROWS_AS(crop_centered(scan, 101, 50.0, 50.0), WindowOutOfBoundsError);
}

TEST_CASE("bin_downsample: factor 1 is the identity") {
    Rng rng(3);
    HighResScan scan(13, 13, 0.307);
    for (double& v : scan.values) {
        v = rng.next_unit();
    }
    const PsfKernel out = bin_downsample(scan, 1);
    CHECK(out.size_k == 13);
    CHECK(out.pitch_um == scan.pitch_um);
    CHECK(out.values == scan.values);
}

TEST_CASE("bin_downsample: uniform grid conserves flux") {
    HighResScan scan(26, 26, 3.0);
    for (double& v : scan.values) {
        v = 1.0;
    }
    const PsfKernel out = bin_downsample(scan, 2);
    CHECK(out.size_k == 13);
    CHECK(out.pitch_um == doctest::Approx(6.0));
    for (double v : out.values) {
        CHECK(v == doctest::Approx(4.0).epsilon(1e-15));
    }
    CHECK(out.sum() == doctest::Approx(676.0).epsilon(1e-12));
}

namespace {

// independent oracle: exact integral of an axis-aligned Gaussian over a
// pixel block, via erf
double gauss_block_integral(double lo_r, double hi_r, double lo_c, double hi_c,
                            double center, double sigma) {
    const double inv = 1.0 / (sigma * std::sqrt(2.0));
    const double fr =
        0.5 * (std::erf((hi_r - center) * inv) - std::erf((lo_r - center) * inv));
    const double fc =
        0.5 * (std::erf((hi_c - center) * inv) - std::erf((lo_c - center) * inv));
    return fr * fc;
}

} // namespace

TEST_CASE("bin_downsample: factor 20 against the analytic bin integral") {
    // scan pixels hold the exact per-pixel integral of a sigma = 10 px
    // Gaussian; the 20x binned result must match the direct 20x20 integral
    const int size = 260;
    const double sigma = 10.0;
    const double center = size / 2.0;
    HighResScan scan(size, size, 0.307);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            scan.at(r, c) = gauss_block_integral(r, r + 1, c, c + 1, center, sigma);
        }
    }
    const PsfKernel binned = bin_downsample(scan, 20);
    CHECK(binned.size_k == 13);
    PsfKernel oracle(13, 0.307 * 20);
    for (int r = 0; r < 13; ++r) {
        for (int c = 0; c < 13; ++c) {
            oracle.at(r, c) =
                gauss_block_integral(r * 20.0, (r + 1) * 20.0, c * 20.0, (c + 1) * 20.0,
                                     center, sigma);
        }
    }
    CHECK(testsupport::kernel_rel_diff(binned, oracle) < 1e-3);
    // flux conservation, exact up to summation
    CHECK(binned.sum() == doctest::Approx(scan.sum()).epsilon(1e-12));
}

TEST_CASE("bin_downsample: non-divisible sizes are an error") {
    HighResScan scan(27, 27, 1.0);
    scan.at(0, 0) = 1.0;
    CHECK_THROWS_AS(bin_downsample(scan, 2), NonDivisibleSizeError);
    HighResScan rect(26, 24, 1.0);
    CHECK_THROWS_AS(bin_downsample(rect, 2), NonDivisibleSizeError);
    // 26 / 13 = 2: even output size is rejected as well
    HighResScan even(26, 26, 1.0);
    CHECK_THROWS_AS(bin_downsample(even, 13), NonDivisibleSizeError);
}

TEST_CASE("bin_downsample preserves the centroid") {
    // off-center mass must stay off center: centroid scales by 1/factor
    const int size = 260;
    HighResScan scan(size, size, 0.307);
    const double cr = 118.0, cc = 144.0, sigma = 9.0;
    const double inv = 1.0 / (sigma * std::sqrt(2.0));
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const double fr = 0.5 * (std::erf((r + 1 - cr) * inv) - std::erf((r - cr) * inv));
            const double fc = 0.5 * (std::erf((c + 1 - cc) * inv) - std::erf((c - cc) * inv));
            scan.at(r, c) = fr * fc;
        }
    }
    const auto c0 = scan.centroid();
    const PsfKernel binned = bin_downsample(scan, 20);
    double s = 0.0, sr = 0.0, sc = 0.0;
    for (int r = 0; r < 13; ++r) {
        for (int c = 0; c < 13; ++c) {
            s += binned.at(r, c);
            sr += binned.at(r, c) * (r + 0.5);
            sc += binned.at(r, c) * (c + 0.5);
        }
    }
    CHECK(std::abs(sr / s - c0[0] / 20.0) < 0.5);
    CHECK(std::abs(sc / s - c0[1] / 20.0) < 0.5);
}

TEST_CASE("interpolate_kernels: corners and midpoint") {
    Rng rng(11);
    const PsfKernel k00 = testsupport::random_normalized_kernel(rng, 13, 6.0);
    const PsfKernel k10 = testsupport::random_normalized_kernel(rng, 13, 6.0);
    const PsfKernel k01 = testsupport::random_normalized_kernel(rng, 13, 6.0);
    const PsfKernel k11 = testsupport::random_normalized_kernel(rng, 13, 6.0);

    const PsfKernel corner = interpolate_kernels(k00, k10, k01, k11, 0.0, 0.0);
    CHECK(corner.values == k00.values);

    const PsfKernel mid = interpolate_kernels(k00, k10, k01, k11, 0.5, 0.5);
    for (std::size_t i = 0; i < mid.values.size(); ++i) {
        const double mean =
            (k00.values[i] + k10.values[i] + k01.values[i] + k11.values[i]) / 4.0;
        CHECK(mid.values[i] == doctest::Approx(mean).epsilon(1e-12));
    }

    const PsfKernel blend = interpolate_kernels(k00, k10, k01, k11, 0.3, 0.7);
    CHECK(blend.normalized);
    CHECK(blend.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("interpolate_kernels: separable in each weight") {
    Rng rng(23);
    const PsfKernel k00 = testsupport::random_normalized_kernel(rng, 9, 6.0);
    const PsfKernel k10 = testsupport::random_normalized_kernel(rng, 9, 6.0);
    const PsfKernel k01 = testsupport::random_normalized_kernel(rng, 9, 6.0);
    const PsfKernel k11 = testsupport::random_normalized_kernel(rng, 9, 6.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double wx = rng.next_unit();
        const double wy = rng.next_unit();
        const PsfKernel direct = interpolate_kernels(k00, k10, k01, k11, wx, wy);
        // interpolate edges first, then across
        const PsfKernel top = interpolate_kernels(k00, k10, k00, k10, wx, 0.0);
        const PsfKernel bot = interpolate_kernels(k01, k11, k01, k11, wx, 0.0);
        const PsfKernel two_step = interpolate_kernels(top, top, bot, bot, 0.0, wy);
        for (std::size_t i = 0; i < direct.values.size(); ++i) {
            CHECK(direct.values[i] == doctest::Approx(two_step.values[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("interpolate_kernels: shape mismatch") {
    Rng rng(5);
    const PsfKernel a = testsupport::random_normalized_kernel(rng, 13, 6.0);
    const PsfKernel b = testsupport::random_normalized_kernel(rng, 11, 6.0);
    CHECK_THROWS_AS(interpolate_kernels(a, b, a, a, 0.5, 0.5), ShapeMismatchError);
    CHECK_THROWS_AS(interpolate_kernels(a, a, a, a, 1.5, 0.5), OutOfRangeError);
}
