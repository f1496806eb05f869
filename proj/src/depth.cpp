#include "psfsim/depth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "psfsim/image_io.hpp"

namespace psfsim {

double thin_lens_image_distance_mm(double focal_mm, double object_m) {
    if (!(focal_mm > 0.0)) {
        throw OutOfRangeError("focal length must be positive");
    }
    const double object_mm = object_m * 1000.0;
    if (!(object_mm > focal_mm)) {
        throw ObjectInsideFocalError("object at or inside the focal length");
    }
    // 1/f = 1/o + 1/i; o = inf gives i = f
    return 1.0 / (1.0 / focal_mm - 1.0 / object_mm);
}

double defocus_from_distance_um(const CameraFocusSpec& spec, double object_m) {
    const double i_object = thin_lens_image_distance_mm(spec.focal_mm, object_m);
    const double i_focus = thin_lens_image_distance_mm(spec.focal_mm, spec.focus_distance_m);
    return (i_object - i_focus) * 1000.0; // mm -> µm
}

DepthMap linearize_zbuffer(const std::vector<double>& values01, int width, int height,
                           double near_m, double far_m) {
    if (values01.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw ShapeMismatchError("z-buffer size does not match dimensions");
    }
    if (!(near_m > 0.0) || !(far_m > near_m)) {
        throw OutOfRangeError("clip planes must satisfy 0 < near < far");
    }
    DepthMap out(width, height);
    for (std::size_t i = 0; i < values01.size(); ++i) {
        const double v = values01[i];
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValueOutOfRangeError("z-buffer value outside [0, 1]");
        }
        out.meters[i] = near_m * far_m / (far_m - v * (far_m - near_m));
    }
    return out;
}

double encode_zbuffer(double z_m, double near_m, double far_m) {
    if (!(near_m > 0.0) || !(far_m > near_m)) {
        throw OutOfRangeError("clip planes must satisfy 0 < near < far");
    }
    if (!(z_m >= near_m && z_m <= far_m)) {
        throw ValueOutOfRangeError("depth outside clip range");
    }
    return far_m * (z_m - near_m) / (z_m * (far_m - near_m));
}

DefocusMap defocus_map(const CameraFocusSpec& spec, const DepthMap& depth,
                       double dz_min_um, double dz_max_um) {
    if (!(dz_min_um <= dz_max_um)) {
        throw OutOfRangeError("empty clamp range");
    }
    DefocusMap out(depth.width, depth.height);
    const double i_focus = thin_lens_image_distance_mm(spec.focal_mm, spec.focus_distance_m);
    for (std::size_t i = 0; i < depth.meters.size(); ++i) {
        const double o_mm = depth.meters[i] * 1000.0;
        if (!(o_mm > spec.focal_mm)) {
            out.dz_um[i] = 0.0;
            out.flags[i] = DefocusFlag::invalid;
            continue;
        }
        const double dz = (1.0 / (1.0 / spec.focal_mm - 1.0 / o_mm) - i_focus) * 1000.0;
        if (dz < dz_min_um) {
            out.dz_um[i] = dz_min_um;
            out.flags[i] = DefocusFlag::clamped_low;
        } else if (dz > dz_max_um) {
            out.dz_um[i] = dz_max_um;
            out.flags[i] = DefocusFlag::clamped_high;
        } else {
            out.dz_um[i] = dz;
        }
    }
    return out;
}

DefocusMap gradient_defocus(int width, int height, double dz_left_um, double dz_right_um) {
    if (width < 1 || height < 1) {
        throw OutOfRangeError("defocus map dimensions must be positive");
    }
    DefocusMap out(width, height);
    for (int col = 0; col < width; ++col) {
        const double t = width == 1 ? 0.0 : static_cast<double>(col) / (width - 1);
        const double dz = col == 0            ? dz_left_um
                          : col == width - 1  ? dz_right_um
                                              : dz_left_um + (dz_right_um - dz_left_um) * t;
        for (int row = 0; row < height; ++row) {
            out.dz_um[static_cast<std::size_t>(row) * width + col] = dz;
        }
    }
    return out;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

void save_depth_map(const DepthMap& depth, const std::string& path,
                    const DepthFileHeader& header) {
    if (header.encoding != "linear_meters" && header.encoding != "zbuffer") {
        throw FormatError("depth encoding must be linear_meters or zbuffer");
    }
    if (ends_with(path, ".pgm")) {
        if (header.encoding != "zbuffer") {
            throw FormatError("16-bit PGM depth requires the zbuffer encoding");
        }
        std::vector<double> v(depth.meters.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = encode_zbuffer(std::clamp(depth.meters[i], header.near_m, header.far_m),
                                  header.near_m, header.far_m);
        }
        write_pgm16(path, v, depth.width, depth.height);
    } else if (ends_with(path, ".pfm")) {
        Image img(depth.width, depth.height, 1);
        if (header.encoding == "linear_meters") {
            std::copy(depth.meters.begin(), depth.meters.end(), img.data.begin());
        } else {
            for (std::size_t i = 0; i < depth.meters.size(); ++i) {
                img.data[i] = encode_zbuffer(
                    std::clamp(depth.meters[i], header.near_m, header.far_m), header.near_m,
                    header.far_m);
            }
        }
        write_pfm(path, img);
    } else {
        throw FormatError("depth maps must be .pgm or .pfm");
    }

    std::ofstream out(path + ".dhdr", std::ios::trunc);
    if (!out) {
        throw IoError("cannot write depth header for '" + path + "'");
    }
    out << "depthmap 1\n";
    out << "encoding = " << header.encoding << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", header.near_m);
    out << "near_m = " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", header.far_m);
    out << "far_m = " << buf << "\n";
    out << "v_convention = " << header.v_convention << "\n";
}

DepthFileHeader load_depth_header(const std::string& path) {
    std::ifstream in(path + ".dhdr");
    if (!in) {
        throw FormatError("missing depth header '" + path + ".dhdr'");
    }
    std::string line;
    if (!std::getline(in, line) || line != "depthmap 1") {
        throw FormatError("unsupported depth header version");
    }
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) {
            if (line.empty()) {
                continue;
            }
            throw FormatError("malformed depth header line: '" + line + "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    DepthFileHeader h;
    auto need = [&kv](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw FormatError(std::string("depth header missing '") + key + "'");
        }
        return it->second;
    };
    h.encoding = need("encoding");
    h.near_m = std::stod(need("near_m"));
    h.far_m = std::stod(need("far_m"));
    h.v_convention = need("v_convention");
    if (h.encoding != "linear_meters" && h.encoding != "zbuffer") {
        throw FormatError("unknown depth encoding '" + h.encoding + "'");
    }
    if (h.v_convention != "zero_at_near") {
        throw FormatError("unknown z-buffer convention '" + h.v_convention + "'");
    }
    return h;
}

DepthMap load_depth_map(const std::string& path) {
    const DepthFileHeader h = load_depth_header(path);
    std::vector<double> values;
    int width = 0, height = 0;
    if (ends_with(path, ".pgm")) {
        values = read_pgm16(path, width, height);
    } else if (ends_with(path, ".pfm")) {
        const Image img = read_pfm(path);
        if (img.channels != 1) {
            throw FormatError("depth PFM must be single channel");
        }
        width = img.width;
        height = img.height;
        values = img.data;
    } else {
        throw FormatError("depth maps must be .pgm or .pfm");
    }
    if (h.encoding == "zbuffer") {
        return linearize_zbuffer(values, width, height, h.near_m, h.far_m);
    }
    DepthMap out(width, height);
    out.meters = std::move(values);
    for (double v : out.meters) {
        if (!(v > 0.0)) {
            throw FormatError("linear depth values must be positive");
        }
    }
    return out;
}

} // namespace psfsim
