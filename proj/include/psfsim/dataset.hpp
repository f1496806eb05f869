#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "psfsim/psf_core.hpp"

namespace psfsim {

struct DatasetMeta {
    double pitch_native_um = 0.0;
    double pitch_target_um = 0.0;
    int size_k = 0;
    double r_max_mm = 0.0;
    double dz_min_um = 0.0;
    double dz_max_um = 0.0;
    std::string source;        // provenance descriptor, free text without newlines
    std::string sampling_plan; // ditto
    std::size_t grid_points = 0; // raw Cartesian grid size before dedup
};

struct DatasetEntry {
    FieldPoint field;
    PsfKernel kernel;
};

/// Training and evaluation corpus: (FieldPoint, PsfKernel) pairs plus the
/// sensor/optical metadata needed to regenerate or reinterpret them.
struct PsfDataset {
    DatasetMeta meta;
    std::vector<DatasetEntry> entries;
};

/// Checks the dataset invariants: shared kernel shape/pitch, field points
/// within the declared ranges, entries unique by field point.
void validate_dataset(const PsfDataset& ds);

/// Measurement preprocessing pipeline scan -> crop -> bin -> normalize.
/// The crop window is centered on the scan's flux centroid unless an explicit
/// center is supplied; binning factor = round(target_pitch / scan pitch).
/// background_level, when nonzero, is subtracted from every pixel first
/// (clamped at zero) — a dark-frame hook, off by default.
PsfKernel preprocess_scan(const HighResScan& scan, double target_pitch_um, int size_k,
                          double background_level = 0.0);
PsfKernel preprocess_scan(const HighResScan& scan, double target_pitch_um, int size_k,
                          double center_row, double center_col,
                          double background_level = 0.0);

/// Persists the dataset as the file pair <stem>.manifest / <stem>.psfbin:
/// a human-auditable text manifest plus a raw little-endian float64 payload
/// of the kernels in entry order, row-major. Writes are atomic (temp file +
/// rename). Field coordinates are stored in fixed decimal; save refuses
/// coordinates that the fixed-decimal form would not round-trip bit-exactly.
void save_dataset(const PsfDataset& ds, const std::string& path_stem);
PsfDataset load_dataset(const std::string& path_stem);

/// Concatenates datasets with identical kernel geometry, dropping entries
/// whose field point already appeared. Ranges in meta widen as needed.
PsfDataset merge_datasets(const std::vector<const PsfDataset*>& parts);

} // namespace psfsim
