#include "psfsim/sv_convolve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numbers>

#include "psfsim/parallel.hpp"

namespace psfsim {

SensorGeometry centered_geometry(int width, int height, double pixel_pitch_um,
                                 double r_max_mm) {
    SensorGeometry g;
    g.width = width;
    g.height = height;
    g.pixel_pitch_um = pixel_pitch_um;
    g.center_row = (height - 1) / 2.0;
    g.center_col = (width - 1) / 2.0;
    g.r_max_mm = r_max_mm;
    return g;
}

FieldPoint field_of_pixel(const SensorGeometry& geom, int row, int col, double dz_um) {
    const double dx = col - geom.center_col;
    const double dy = geom.center_row - row; // y points up
    FieldPoint fp;
    fp.dz_um = dz_um;
    fp.r_mm = std::hypot(dx, dy) * geom.pixel_pitch_um / 1000.0;
    if (dx == 0.0 && dy == 0.0) {
        fp.phi_deg = 0.0;
    } else if (dy == 0.0) {
        fp.phi_deg = dx > 0.0 ? 0.0 : 180.0;
    } else if (dx == 0.0) {
        fp.phi_deg = dy > 0.0 ? 90.0 : 270.0;
    } else {
        double phi = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
        if (phi < 0.0) {
            phi += 360.0;
        }
        fp.phi_deg = phi >= 360.0 ? 0.0 : phi;
    }
    return fp;
}

std::vector<std::uint8_t> valid_mask(const SensorGeometry& geom) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(geom.width) *
                                   static_cast<std::size_t>(geom.height));
    for (int r = 0; r < geom.height; ++r) {
        for (int c = 0; c < geom.width; ++c) {
            const FieldPoint fp = field_of_pixel(geom, r, c, 0.0);
            mask[static_cast<std::size_t>(r) * geom.width + c] =
                fp.r_mm <= geom.r_max_mm ? 1 : 0;
        }
    }
    return mask;
}

Image apply_valid_mask(const Image& img, const SensorGeometry& geom) {
    if (img.width != geom.width || img.height != geom.height) {
        throw ShapeMismatchError("image does not match sensor geometry");
    }
    const std::vector<std::uint8_t> mask = valid_mask(geom);
    Image out = img;
    for (int ch = 0; ch < out.channels; ++ch) {
        double* plane = out.plane(ch);
        for (std::size_t i = 0; i < out.plane_size(); ++i) {
            if (!mask[i]) {
                plane[i] = 0.0;
            }
        }
    }
    return out;
}

int grid_nodes_along(int extent, int spacing) {
    if (extent < 1 || spacing < 1) {
        throw OutOfRangeError("grid extent and spacing must be positive");
    }
    return (extent - 1) / spacing + 2;
}

CellWeights cell_weights(int spacing, int height, int width, int row, int col) {
    const int r = std::clamp(row, 0, height - 1);
    const int c = std::clamp(col, 0, width - 1);
    CellWeights cw;
    cw.i = r / spacing;
    cw.j = c / spacing;
    cw.wy = static_cast<double>(r - cw.i * spacing) / spacing;
    cw.wx = static_cast<double>(c - cw.j * spacing) / spacing;
    return cw;
}

namespace {

// Field point of a node or pixel, clamped into the source validity ranges.
FieldPoint clamped_field(const PsfSource& source, const SensorGeometry& geom,
                         const DefocusQuery& defocus, int row, int col,
                         bool spatially_invariant, bool* was_clamped = nullptr) {
    const int r = std::clamp(row, 0, geom.height - 1);
    const int c = std::clamp(col, 0, geom.width - 1);
    const double dz = defocus.at(r, c);
    FieldPoint fp = spatially_invariant ? FieldPoint{dz, 0.0, 0.0}
                                        : field_of_pixel(geom, r, c, dz);
    bool clamped = false;
    if (fp.dz_um < source.dz_min_um()) {
        fp.dz_um = source.dz_min_um();
        clamped = true;
    } else if (fp.dz_um > source.dz_max_um()) {
        fp.dz_um = source.dz_max_um();
        clamped = true;
    }
    const double r_lim = source.r_max_mm();
    if (fp.r_mm > r_lim) {
        fp.r_mm = r_lim;
        clamped = true;
    } else if (fp.r_mm < -r_lim) {
        fp.r_mm = -r_lim;
        clamped = true;
    }
    if (was_clamped) {
        *was_clamped = clamped;
    }
    return fp;
}

// Source plane extended by `margin` on every side with border-clamped reads.
// The input is expected to be masked already, so pixels outside the valid
// aperture contribute zero and the rectangle border continues its edge value.
std::vector<double> extend_plane(const double* plane, int width, int height, int margin) {
    const int ew = width + 2 * margin;
    const int eh = height + 2 * margin;
    std::vector<double> ext(static_cast<std::size_t>(ew) * static_cast<std::size_t>(eh));
    for (int r = 0; r < eh; ++r) {
        const int sr = std::clamp(r - margin, 0, height - 1);
        for (int c = 0; c < ew; ++c) {
            const int sc = std::clamp(c - margin, 0, width - 1);
            ext[static_cast<std::size_t>(r) * ew + c] =
                plane[static_cast<std::size_t>(sr) * width + sc];
        }
    }
    return ext;
}

void check_grid(const Image& img, const KernelGrid& grid) {
    if (grid.size_k < 1 || grid.size_k % 2 == 0) {
        throw ShapeMismatchError("kernel grid has invalid kernel size");
    }
    if (grid.nodes_y != grid_nodes_along(img.height, grid.spacing) ||
        grid.nodes_x != grid_nodes_along(img.width, grid.spacing)) {
        throw ShapeMismatchError("kernel grid does not cover the image");
    }
}

} // namespace

KernelGrid build_kernel_grid(const PsfSource& source, const SensorGeometry& geom,
                             const DefocusQuery& defocus, int spacing,
                             bool spatially_invariant) {
    if (spacing < 1) {
        throw OutOfRangeError("grid spacing must be >= 1");
    }
    if (defocus.map &&
        (defocus.map->width != geom.width || defocus.map->height != geom.height)) {
        throw ShapeMismatchError("defocus map does not match sensor geometry");
    }
    KernelGrid grid;
    grid.spacing = spacing;
    grid.nodes_y = grid_nodes_along(geom.height, spacing);
    grid.nodes_x = grid_nodes_along(geom.width, spacing);
    grid.size_k = source.size_k();
    grid.pitch_um = source.pitch_um();
    grid.kernels.reserve(static_cast<std::size_t>(grid.nodes_y) * grid.nodes_x);
    grid.clamped.resize(static_cast<std::size_t>(grid.nodes_y) * grid.nodes_x, 0);
    for (int i = 0; i < grid.nodes_y; ++i) {
        for (int j = 0; j < grid.nodes_x; ++j) {
            bool clamped = false;
            const FieldPoint fp = clamped_field(source, geom, defocus, i * spacing,
                                                j * spacing, spatially_invariant, &clamped);
            PsfKernel k = source.kernel_at(fp);
            if (!k.normalized) {
                k = normalize(k);
            }
            grid.clamped[static_cast<std::size_t>(i) * grid.nodes_x + j] = clamped ? 1 : 0;
            grid.kernels.push_back(std::move(k));
        }
    }
    return grid;
}

Image convolve_exact(const Image& img, const KernelGrid& grid) {
    check_grid(img, grid);
    const int k = grid.size_k;
    const int m = (k - 1) / 2;
    const int ew = img.width + 2 * m;
    Image out(img.width, img.height, img.channels);
    for (int ch = 0; ch < img.channels; ++ch) {
        const std::vector<double> ext = extend_plane(img.plane(ch), img.width, img.height, m);
        double* dst = out.plane(ch);
        for (int qr = 0; qr < img.height; ++qr) {
            for (int qc = 0; qc < img.width; ++qc) {
                double acc = 0.0;
                for (int ky = 0; ky < k; ++ky) {
                    const int pr = qr + m - ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int pc = qc + m - kx;
                        const double src = ext[static_cast<std::size_t>(pr + m) * ew +
                                               (pc + m)];
                        const CellWeights cw =
                            cell_weights(grid.spacing, img.height, img.width, pr, pc);
                        const PsfKernel& k00 = grid.node(cw.i, cw.j);
                        const PsfKernel& k10 = grid.node(cw.i, cw.j + 1);
                        const PsfKernel& k01 = grid.node(cw.i + 1, cw.j);
                        const PsfKernel& k11 = grid.node(cw.i + 1, cw.j + 1);
                        const std::size_t e = static_cast<std::size_t>(ky) * k + kx;
                        const double w00 = (1.0 - cw.wx) * (1.0 - cw.wy);
                        const double w10 = cw.wx * (1.0 - cw.wy);
                        const double w01 = (1.0 - cw.wx) * cw.wy;
                        const double w11 = cw.wx * cw.wy;
                        const double kv = w00 * k00.values[e] + w10 * k10.values[e] +
                                          w01 * k01.values[e] + w11 * k11.values[e];
                        acc += src * kv;
                    }
                }
                dst[static_cast<std::size_t>(qr) * img.width + qc] = acc;
            }
        }
    }
    return out;
}

Image convolve_exact(const Image& img, const PsfSource& source, const SensorGeometry& geom,
                     const DefocusQuery& defocus, bool spatially_invariant) {
    if (img.width != geom.width || img.height != geom.height) {
        throw ShapeMismatchError("image does not match sensor geometry");
    }
    if (defocus.map &&
        (defocus.map->width != geom.width || defocus.map->height != geom.height)) {
        throw ShapeMismatchError("defocus map does not match sensor geometry");
    }
    const int k = source.size_k();
    const int m = (k - 1) / 2;
    const int ew = img.width + 2 * m;

    // Rolling cache of per-pixel kernels for the k source rows feeding the
    // current output row; one row is evaluated and one retired per step.
    std::deque<std::vector<PsfKernel>> cache;
    auto eval_row = [&](int pr) {
        std::vector<PsfKernel> row;
        row.reserve(static_cast<std::size_t>(ew));
        for (int pc = -m; pc < img.width + m; ++pc) {
            const FieldPoint fp =
                clamped_field(source, geom, defocus, pr, pc, spatially_invariant);
            PsfKernel kn = source.kernel_at(fp);
            if (!kn.normalized) {
                kn = normalize(kn);
            }
            row.push_back(std::move(kn));
        }
        return row;
    };
    for (int pr = -m; pr <= m; ++pr) {
        cache.push_back(eval_row(pr));
    }

    Image out(img.width, img.height, img.channels);
    std::vector<std::vector<double>> ext(static_cast<std::size_t>(img.channels));
    for (int ch = 0; ch < img.channels; ++ch) {
        ext[static_cast<std::size_t>(ch)] =
            extend_plane(img.plane(ch), img.width, img.height, m);
    }

    for (int qr = 0; qr < img.height; ++qr) {
        if (qr > 0) {
            cache.pop_front();
            cache.push_back(eval_row(qr + m));
        }
        for (int qc = 0; qc < img.width; ++qc) {
            for (int ch = 0; ch < img.channels; ++ch) {
                double acc = 0.0;
                const std::vector<double>& plane = ext[static_cast<std::size_t>(ch)];
                for (int ky = 0; ky < k; ++ky) {
                    const int pr = qr + m - ky; // cache slot k - 1 - ky
                    const std::vector<PsfKernel>& row =
                        cache[static_cast<std::size_t>(k - 1 - ky)];
                    for (int kx = 0; kx < k; ++kx) {
                        const int pc = qc + m - kx;
                        const double src =
                            plane[static_cast<std::size_t>(pr + m) * ew + (pc + m)];
                        const PsfKernel& kp = row[static_cast<std::size_t>(pc + m)];
                        acc += src * kp.values[static_cast<std::size_t>(ky) * k + kx];
                    }
                }
                out.at(qr, qc, ch) = acc;
            }
        }
    }
    return out;
}

Image convolve_blockwise(const Image& img, const KernelGrid& grid, int threads) {
    check_grid(img, grid);
    const int k = grid.size_k;
    const int m = (k - 1) / 2;
    const int s = grid.spacing;
    const int ew = img.width + 2 * m;
    Image out(img.width, img.height, img.channels);

    for (int ch = 0; ch < img.channels; ++ch) {
        const std::vector<double> ext = extend_plane(img.plane(ch), img.width, img.height, m);
        double* dst = out.plane(ch);

        // Nodes are processed in a fixed order and each output element gets
        // exactly one ordered addition per node, so the result is identical
        // for every thread count.
        for (int i = 0; i < grid.nodes_y; ++i) {
            // support rows of node i in extended coordinates (weights of the
            // border-clamped position; the ends map to the first/last pixel)
            int row_lo = i == 0 ? -m : (i - 1) * s + 1;
            int row_hi = (i + 1) * s - 1 >= img.height - 1 ? img.height - 1 + m
                                                           : (i + 1) * s - 1;
            if (row_lo > row_hi) {
                continue;
            }
            for (int j = 0; j < grid.nodes_x; ++j) {
                int col_lo = j == 0 ? -m : (j - 1) * s + 1;
                int col_hi = (j + 1) * s - 1 >= img.width - 1 ? img.width - 1 + m
                                                              : (j + 1) * s - 1;
                if (col_lo > col_hi) {
                    continue;
                }
                const PsfKernel& kn = grid.node(i, j);

                // weighted source box, padded by the kernel reach
                const int bh = row_hi - row_lo + 1 + 2 * m;
                const int bw = col_hi - col_lo + 1 + 2 * m;
                std::vector<double> box(static_cast<std::size_t>(bh) * bw, 0.0);
                for (int pr = row_lo; pr <= row_hi; ++pr) {
                    for (int pc = col_lo; pc <= col_hi; ++pc) {
                        const CellWeights cw =
                            cell_weights(s, img.height, img.width, pr, pc);
                        double wy = 0.0, wx = 0.0;
                        if (cw.i == i) {
                            wy = 1.0 - cw.wy;
                        } else if (cw.i + 1 == i) {
                            wy = cw.wy;
                        }
                        if (cw.j == j) {
                            wx = 1.0 - cw.wx;
                        } else if (cw.j + 1 == j) {
                            wx = cw.wx;
                        }
                        const double w = wx * wy;
                        if (w == 0.0) {
                            continue;
                        }
                        const double src =
                            ext[static_cast<std::size_t>(pr + m) * ew + (pc + m)];
                        box[static_cast<std::size_t>(pr - row_lo + m) * bw +
                            (pc - col_lo + m)] = w * src;
                    }
                }

                // scatter by the node kernel, evaluated in gather form
                const int out_row_lo = std::max(0, row_lo - m);
                const int out_row_hi = std::min(img.height - 1, row_hi + m);
                const int out_col_lo = std::max(0, col_lo - m);
                const int out_col_hi = std::min(img.width - 1, col_hi + m);
                parallel_for_rows(out_row_lo, out_row_hi + 1, threads,
                                  [&](int lo, int hi) {
                    for (int qr = lo; qr < hi; ++qr) {
                        for (int qc = out_col_lo; qc <= out_col_hi; ++qc) {
                            double acc = 0.0;
                            for (int ky = 0; ky < k; ++ky) {
                                const int br = qr + m - ky - row_lo + m;
                                if (br < 0 || br >= bh) {
                                    continue;
                                }
                                const double* brow = box.data() +
                                                     static_cast<std::size_t>(br) * bw;
                                const double* krow =
                                    kn.values.data() + static_cast<std::size_t>(ky) * k;
                                for (int kx = 0; kx < k; ++kx) {
                                    const int bc = qc + m - kx - col_lo + m;
                                    if (bc < 0 || bc >= bw) {
                                        continue;
                                    }
                                    acc += brow[bc] * krow[kx];
                                }
                            }
                            dst[static_cast<std::size_t>(qr) * img.width + qc] += acc;
                        }
                    }
                });
            }
        }
    }
    return out;
}

std::vector<ErrorReportRow> interpolation_error_report(
    const Image& img, const PsfSource& source, const SensorGeometry& geom,
    const DefocusQuery& defocus, const std::vector<int>& spacings, int threads,
    bool spatially_invariant) {
    const Image masked = apply_valid_mask(img, geom);
    const Image reference = convolve_exact(masked, source, geom, defocus, spatially_invariant);
    const std::vector<std::uint8_t> mask = valid_mask(geom);

    std::vector<int> order = spacings;
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());

    std::vector<ErrorReportRow> rows;
    for (int s : order) {
        if (s < 1) {
            throw OutOfRangeError("spacing must be >= 1");
        }
        const auto t0 = std::chrono::steady_clock::now();
        Image approx;
        if (s == 1) {
            // a unit grid is the per-pixel model itself (the corner rule of
            // the bilinear interpolation), so evaluate it through the same
            // per-pixel path instead of materializing one kernel per pixel
            approx = convolve_exact(masked, source, geom, defocus, spatially_invariant);
        } else {
            const KernelGrid grid =
                build_kernel_grid(source, geom, defocus, s, spatially_invariant);
            approx = convolve_blockwise(masked, grid, threads);
        }
        const auto t1 = std::chrono::steady_clock::now();

        ErrorReportRow row;
        row.spacing = s;
        row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        double sum = 0.0;
        std::size_t count = 0;
        for (int ch = 0; ch < img.channels; ++ch) {
            const double* a = approx.plane(ch);
            const double* b = reference.plane(ch);
            for (std::size_t idx = 0; idx < approx.plane_size(); ++idx) {
                if (!mask[idx]) {
                    continue;
                }
                const double err = std::abs(a[idx] - b[idx]);
                row.max_err = std::max(row.max_err, err);
                sum += err;
                ++count;
            }
        }
        row.mean_err = count ? sum / static_cast<double>(count) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

Image degrade(const Image& img, const PsfSource& source, const SensorGeometry& geom,
              const DefocusQuery& defocus, const DegradeOptions& options) {
    const Image masked = apply_valid_mask(img, geom);
    const KernelGrid grid = build_kernel_grid(source, geom, defocus, options.spacing,
                                              options.spatially_invariant);
    Image out = convolve_blockwise(masked, grid, options.threads);
    return apply_valid_mask(out, geom);
}

} // namespace psfsim
