#include "psfsim/psf_core.hpp"

#include <cmath>
#include <string>

namespace psfsim {

namespace {

double sum_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s;
}

} // namespace

double PsfKernel::sum() const {
    return sum_of(values);
}

std::array<double, 2> PsfKernel::centroid() const {
    double s = 0.0, sr = 0.0, sc = 0.0;
    for (int r = 0; r < size_k; ++r) {
        for (int c = 0; c < size_k; ++c) {
            const double v = at(r, c);
            s += v;
            sr += v * (r + 0.5);
            sc += v * (c + 0.5);
        }
    }
    if (s == 0.0) {
        throw AllZeroKernelError();
    }
    return {sr / s, sc / s};
}

double HighResScan::sum() const {
    return sum_of(values);
}

std::array<double, 2> HighResScan::centroid() const {
    double s = 0.0, sr = 0.0, sc = 0.0;
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double v = at(r, c);
            s += v;
            sr += v * (r + 0.5);
            sc += v * (c + 0.5);
        }
    }
    if (s == 0.0) {
        throw AllZeroKernelError();
    }
    return {sr / s, sc / s};
}

void validate_kernel(const PsfKernel& k) {
    if (k.size_k < 1 || k.size_k % 2 == 0) {
        throw FormatError("kernel size must be odd and >= 1, got " + std::to_string(k.size_k));
    }
    if (k.pitch_um <= 0.0) {
        throw FormatError("kernel pitch must be positive");
    }
    if (k.values.size() != static_cast<std::size_t>(k.size_k) * k.size_k) {
        throw ShapeMismatchError("kernel value count does not match size_k");
    }
    for (double v : k.values) {
        if (!(v >= 0.0)) {
            throw FormatError("kernel values must be nonnegative and finite");
        }
    }
    if (k.normalized && std::abs(k.sum() - 1.0) > 1e-9) {
        throw FormatError("kernel flagged normalized but sum != 1");
    }
}

PsfKernel normalize(const PsfKernel& kernel) {
    const double s = kernel.sum();
    if (s == 0.0) {
        throw AllZeroKernelError();
    }
    PsfKernel out = kernel;
    for (double& v : out.values) {
        v /= s;
    }
    out.normalized = true;
    return out;
}

HighResScan crop_centered(const HighResScan& scan, int out_px,
                          double center_row, double center_col) {
    if (out_px < 1 || out_px > scan.width || out_px > scan.height) {
        throw WindowOutOfBoundsError("crop window larger than scan");
    }
    if (center_row < 0.0 || center_row > scan.height ||
        center_col < 0.0 || center_col > scan.width) {
        throw WindowOutOfBoundsError("crop center outside scan");
    }
    const long r0 = std::llround(center_row - out_px / 2.0);
    const long c0 = std::llround(center_col - out_px / 2.0);
    if (r0 < 0 || c0 < 0 || r0 + out_px > scan.height || c0 + out_px > scan.width) {
        throw WindowOutOfBoundsError("crop window of " + std::to_string(out_px) +
                                     " px leaves the scan");
    }
    HighResScan out(out_px, out_px, scan.pitch_um);
    for (int r = 0; r < out_px; ++r) {
        for (int c = 0; c < out_px; ++c) {
            out.at(r, c) = scan.at(static_cast<int>(r0) + r, static_cast<int>(c0) + c);
        }
    }
    return out;
}

PsfKernel bin_downsample(const HighResScan& scan, int factor) {
    if (factor < 1) {
        throw NonDivisibleSizeError("binning factor must be >= 1");
    }
    if (scan.width != scan.height) {
        throw NonDivisibleSizeError("binning requires a square scan");
    }
    if (scan.width % factor != 0) {
        throw NonDivisibleSizeError("scan size " + std::to_string(scan.width) +
                                    " not divisible by factor " + std::to_string(factor));
    }
    const int k = scan.width / factor;
    if (k % 2 == 0) {
        throw NonDivisibleSizeError("binned size " + std::to_string(k) + " is not odd");
    }
    PsfKernel out(k, scan.pitch_um * factor);
    for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) {
            double s = 0.0;
            for (int dr = 0; dr < factor; ++dr) {
                for (int dc = 0; dc < factor; ++dc) {
                    s += scan.at(r * factor + dr, c * factor + dc);
                }
            }
            out.at(r, c) = s;
        }
    }
    return out;
}

PsfKernel interpolate_kernels(const PsfKernel& k00, const PsfKernel& k10,
                              const PsfKernel& k01, const PsfKernel& k11,
                              double wx, double wy) {
    const PsfKernel* all[] = {&k00, &k10, &k01, &k11};
    for (const PsfKernel* k : all) {
        if (k->size_k != k00.size_k || k->pitch_um != k00.pitch_um) {
            throw ShapeMismatchError("interpolated kernels must share size and pitch");
        }
    }
    if (!(wx >= 0.0 && wx <= 1.0 && wy >= 0.0 && wy <= 1.0)) {
        throw OutOfRangeError("bilinear weights must lie in [0, 1]");
    }
    PsfKernel out(k00.size_k, k00.pitch_um);
    const double w00 = (1.0 - wx) * (1.0 - wy);
    const double w10 = wx * (1.0 - wy);
    const double w01 = (1.0 - wx) * wy;
    const double w11 = wx * wy;
    const std::size_t n = out.values.size();
    for (std::size_t i = 0; i < n; ++i) {
        out.values[i] = w00 * k00.values[i] + w10 * k10.values[i] +
                        w01 * k01.values[i] + w11 * k11.values[i];
    }
    out.normalized = k00.normalized && k10.normalized && k01.normalized && k11.normalized;
    return out;
}

} // namespace psfsim
