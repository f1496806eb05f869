#include "psfsim/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace psfsim {

static_assert(std::endian::native == std::endian::little,
              "dataset payloads are little-endian");

namespace {

constexpr int kManifestVersion = 1;

std::string fixed8(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.8f", v);
    return buf;
}

std::string full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || end != s.c_str() + s.size()) {
        throw FormatError("bad numeric value for " + what + ": '" + s + "'");
    }
    return v;
}

struct ScopedTemp {
    std::filesystem::path path;
    bool keep = false;
    ~ScopedTemp() {
        if (!keep) {
            std::error_code ec;
            std::filesystem::remove(path, ec);
        }
    }
};

void write_payload(const std::string& path, const PsfDataset& ds) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    for (const DatasetEntry& e : ds.entries) {
        out.write(reinterpret_cast<const char*>(e.kernel.values.data()),
                  static_cast<std::streamsize>(e.kernel.values.size() * sizeof(double)));
    }
    out.flush();
    if (!out) {
        throw IoError("write to '" + path + "' failed");
    }
}

} // namespace

void validate_dataset(const PsfDataset& ds) {
    const double tol = 1e-9;
    std::set<std::array<double, 3>> seen;
    for (const DatasetEntry& e : ds.entries) {
        validate_kernel(e.kernel);
        if (e.kernel.size_k != ds.meta.size_k || e.kernel.pitch_um != ds.meta.pitch_target_um) {
            throw ShapeMismatchError("dataset entry kernel does not match meta geometry");
        }
        if (e.field.dz_um < ds.meta.dz_min_um - tol || e.field.dz_um > ds.meta.dz_max_um + tol) {
            throw OutOfRangeError("dataset entry defocus outside declared range");
        }
        if (std::abs(e.field.r_mm) > ds.meta.r_max_mm + tol) {
            throw OutOfRangeError("dataset entry image height outside declared range");
        }
        if (!(e.field.phi_deg >= 0.0 && e.field.phi_deg < 360.0)) {
            throw OutOfRangeError("dataset entry azimuth must lie in [0, 360)");
        }
        if (!seen.insert({e.field.dz_um, e.field.r_mm, e.field.phi_deg}).second) {
            throw FormatError("duplicate field point in dataset");
        }
    }
}

namespace {

HighResScan subtract_background(const HighResScan& scan, double level) {
    if (level == 0.0) {
        return scan;
    }
    if (level < 0.0) {
        throw OutOfRangeError("background level must be nonnegative");
    }
    HighResScan out = scan;
    for (double& v : out.values) {
        v = std::max(0.0, v - level);
    }
    return out;
}

} // namespace

PsfKernel preprocess_scan(const HighResScan& scan, double target_pitch_um, int size_k,
                          double background_level) {
    const HighResScan cleaned = subtract_background(scan, background_level);
    const auto c = cleaned.centroid();
    return preprocess_scan(cleaned, target_pitch_um, size_k, c[0], c[1]);
}

PsfKernel preprocess_scan(const HighResScan& scan, double target_pitch_um, int size_k,
                          double center_row, double center_col, double background_level) {
    if (scan.pitch_um <= 0.0 || target_pitch_um <= 0.0) {
        throw OutOfRangeError("pitches must be positive");
    }
    const HighResScan cleaned = subtract_background(scan, background_level);
    const int factor = static_cast<int>(std::llround(target_pitch_um / scan.pitch_um));
    if (factor < 1) {
        throw NonDivisibleSizeError("target pitch below scan pitch");
    }
    const HighResScan window = crop_centered(cleaned, size_k * factor, center_row, center_col);
    return normalize(bin_downsample(window, factor));
}

void save_dataset(const PsfDataset& ds, const std::string& path_stem) {
    validate_dataset(ds);
    for (const DatasetEntry& e : ds.entries) {
        // the manifest stores coordinates in fixed decimal; refuse values
        // that this form cannot reproduce bit-exactly
        const double d[3] = {e.field.dz_um, e.field.r_mm, e.field.phi_deg};
        for (double v : d) {
            if (parse_double(fixed8(v), "coordinate") != v) {
                throw FormatError("field coordinate " + full(v) +
                                  " is not representable in fixed decimal");
            }
        }
    }

    std::ostringstream m;
    m << "psfdataset " << kManifestVersion << "\n";
    m << "pitch_native_um = " << full(ds.meta.pitch_native_um) << "\n";
    m << "pitch_target_um = " << full(ds.meta.pitch_target_um) << "\n";
    m << "size_k = " << ds.meta.size_k << "\n";
    m << "r_max_mm = " << full(ds.meta.r_max_mm) << "\n";
    m << "dz_min_um = " << full(ds.meta.dz_min_um) << "\n";
    m << "dz_max_um = " << full(ds.meta.dz_max_um) << "\n";
    m << "source = " << ds.meta.source << "\n";
    m << "sampling_plan = " << ds.meta.sampling_plan << "\n";
    m << "grid_points = " << ds.meta.grid_points << "\n";
    m << "entry_count = " << ds.entries.size() << "\n";
    m << "entries:\n";
    for (const DatasetEntry& e : ds.entries) {
        m << fixed8(e.field.dz_um) << " " << fixed8(e.field.r_mm) << " "
          << fixed8(e.field.phi_deg) << "\n";
    }

    const std::string manifest_path = path_stem + ".manifest";
    const std::string payload_path = path_stem + ".psfbin";
    ScopedTemp tmp_manifest{manifest_path + ".tmp"};
    ScopedTemp tmp_payload{payload_path + ".tmp"};

    {
        std::ofstream out(tmp_manifest.path, std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp_manifest.path.string() + "' for writing");
        }
        out << m.str();
        out.flush();
        if (!out) {
            throw IoError("write to '" + tmp_manifest.path.string() + "' failed");
        }
    }
    write_payload(tmp_payload.path.string(), ds);

    std::filesystem::rename(tmp_payload.path, payload_path);
    tmp_payload.keep = true;
    std::filesystem::rename(tmp_manifest.path, manifest_path);
    tmp_manifest.keep = true;
}

PsfDataset load_dataset(const std::string& path_stem) {
    const std::string manifest_path = path_stem + ".manifest";
    std::ifstream in(manifest_path);
    if (!in) {
        throw IoError("cannot open '" + manifest_path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("empty manifest");
    }
    {
        std::istringstream head(line);
        std::string magic;
        int version = -1;
        head >> magic >> version;
        if (magic != "psfdataset") {
            throw FormatError("not a psfdataset manifest");
        }
        if (version != kManifestVersion) {
            throw FormatError("unsupported manifest version " + std::to_string(version));
        }
    }

    std::map<std::string, std::string> kv;
    bool entries_marker = false;
    while (std::getline(in, line)) {
        if (line == "entries:") {
            entries_marker = true;
            break;
        }
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw FormatError("malformed manifest line: '" + line + "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    if (!entries_marker) {
        throw FormatError("manifest has no entries section");
    }
    auto need = [&kv](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw FormatError(std::string("manifest missing key '") + key + "'");
        }
        return it->second;
    };

    PsfDataset ds;
    ds.meta.pitch_native_um = parse_double(need("pitch_native_um"), "pitch_native_um");
    ds.meta.pitch_target_um = parse_double(need("pitch_target_um"), "pitch_target_um");
    ds.meta.size_k = static_cast<int>(parse_double(need("size_k"), "size_k"));
    ds.meta.r_max_mm = parse_double(need("r_max_mm"), "r_max_mm");
    ds.meta.dz_min_um = parse_double(need("dz_min_um"), "dz_min_um");
    ds.meta.dz_max_um = parse_double(need("dz_max_um"), "dz_max_um");
    ds.meta.source = need("source");
    ds.meta.sampling_plan = need("sampling_plan");
    ds.meta.grid_points = static_cast<std::size_t>(
        parse_double(need("grid_points"), "grid_points"));
    const auto entry_count = static_cast<std::size_t>(
        parse_double(need("entry_count"), "entry_count"));

    const std::set<std::string> known = {
        "pitch_native_um", "pitch_target_um", "size_k", "r_max_mm", "dz_min_um",
        "dz_max_um", "source", "sampling_plan", "grid_points", "entry_count"};
    for (const auto& [key, value] : kv) {
        if (!known.count(key)) {
            throw FormatError("unknown manifest key '" + key + "'");
        }
    }

    std::vector<FieldPoint> fields;
    fields.reserve(entry_count);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream row(line);
        std::string a, b, c, extra;
        if (!(row >> a >> b >> c) || (row >> extra)) {
            throw FormatError("malformed entry line: '" + line + "'");
        }
        fields.push_back({parse_double(a, "dz"), parse_double(b, "r"), parse_double(c, "phi")});
    }
    if (fields.size() != entry_count) {
        throw FormatError("manifest declares " + std::to_string(entry_count) +
                          " entries but lists " + std::to_string(fields.size()));
    }

    const std::string payload_path = path_stem + ".psfbin";
    std::ifstream pin(payload_path, std::ios::binary | std::ios::ate);
    if (!pin) {
        throw IoError("cannot open '" + payload_path + "'");
    }
    const std::size_t kernel_px =
        static_cast<std::size_t>(ds.meta.size_k) * static_cast<std::size_t>(ds.meta.size_k);
    const auto size = static_cast<std::size_t>(pin.tellg());
    if (size != entry_count * kernel_px * sizeof(double)) {
        throw FormatError("payload size does not match manifest entry count");
    }
    pin.seekg(0);

    ds.entries.reserve(entry_count);
    for (const FieldPoint& fp : fields) {
        PsfKernel k(ds.meta.size_k, ds.meta.pitch_target_um);
        pin.read(reinterpret_cast<char*>(k.values.data()),
                 static_cast<std::streamsize>(kernel_px * sizeof(double)));
        if (!pin) {
            throw FormatError("payload truncated");
        }
        k.normalized = true;
        ds.entries.push_back({fp, std::move(k)});
    }
    validate_dataset(ds);
    return ds;
}

PsfDataset merge_datasets(const std::vector<const PsfDataset*>& parts) {
    if (parts.empty()) {
        throw OutOfRangeError("nothing to merge");
    }
    PsfDataset out;
    out.meta = parts.front()->meta;
    std::set<std::array<double, 3>> seen;
    for (const PsfDataset* p : parts) {
        if (p->meta.size_k != out.meta.size_k ||
            p->meta.pitch_target_um != out.meta.pitch_target_um) {
            throw ShapeMismatchError("merged datasets must share kernel geometry");
        }
        out.meta.dz_min_um = std::min(out.meta.dz_min_um, p->meta.dz_min_um);
        out.meta.dz_max_um = std::max(out.meta.dz_max_um, p->meta.dz_max_um);
        out.meta.r_max_mm = std::max(out.meta.r_max_mm, p->meta.r_max_mm);
        if (p != parts.front()) {
            out.meta.sampling_plan += " + " + p->meta.sampling_plan;
            if (p->meta.source != out.meta.source) {
                out.meta.source += " + " + p->meta.source;
            }
            out.meta.grid_points += p->meta.grid_points;
        }
        for (const DatasetEntry& e : p->entries) {
            if (seen.insert({e.field.dz_um, e.field.r_mm, e.field.phi_deg}).second) {
                out.entries.push_back(e);
            }
        }
    }
    validate_dataset(out);
    return out;
}

} // namespace psfsim
