#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "psfsim/dataset.hpp"
#include "psfsim/psf_core.hpp"

namespace psfsim {

/// Fully connected regression network mapping an encoded field point to a
/// PSF kernel. Hidden layers use tanh, the output layer is identity; raw
/// outputs are clamped and renormalized only at inference time, never inside
/// the training objective.
struct RegressorModel {
    std::vector<int> layer_sizes;              // [4, h1, ..., size_k^2]
    std::vector<std::vector<double>> weights;  // per layer, out x in, row-major
    std::vector<std::vector<double>> biases;   // per layer, out
    double dz_scale_um = 50.0;
    double r_scale_mm = 3.0;
    int size_k = 13;
    double pitch_um = 6.14;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    std::size_t parameter_count() const;
};

void validate_model(const RegressorModel& m);

/// Glorot-uniform initialized model with the default [4, 64, 64, size_k^2]
/// shape; fully determined by the seed.
RegressorModel make_default_model(int size_k = 13, double pitch_um = 6.14,
                                  double dz_scale_um = 50.0, double r_scale_mm = 3.0,
                                  std::uint64_t seed = 1);
RegressorModel make_model(const std::vector<int>& hidden, int size_k, double pitch_um,
                          double dz_scale_um, double r_scale_mm, std::uint64_t seed);

/// [dz/dz_scale, r/r_scale, cos phi, sin phi]; the first two lie in [-1, 1]
/// for in-range inputs, the angle encoding removes the 0/360 degree seam.
std::array<double, 4> encode_input(const FieldPoint& fp, double dz_scale_um,
                                   double r_scale_mm);

/// Raw network output (length size_k^2), before postprocessing.
std::vector<double> forward_raw(const RegressorModel& m, const FieldPoint& fp);

/// Postprocessed prediction: negatives clamped to zero, renormalized to unit
/// sum. Throws AllZeroKernelError when no raw output is positive.
PsfKernel forward(const RegressorModel& m, const FieldPoint& fp);

/// Mean over entries and pixels of (postprocessed prediction - target)^2.
double loss_mse(const RegressorModel& m, const PsfDataset& ds);

/// Same mean square error on raw outputs; this is the training objective.
double loss_mse_raw(const RegressorModel& m, const PsfDataset& ds);

struct Gradient {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

/// Gradient of loss_mse_raw with respect to every weight and bias.
Gradient backward(const RegressorModel& m, const PsfDataset& ds);

struct TrainConfig {
    int epochs = 3000;
    double learning_rate = 30.0;
    double momentum = 0.9;
    /// The learning rate ramps linearly over the first warmup_epochs; plain
    /// constant-rate descent with momentum 0.9 turns unstable at rates that
    /// the warmed-up run handles fine. 0 disables the ramp.
    int warmup_epochs = 200;
    std::uint64_t seed = 1;
    double validation_fraction = 0.15;
    int early_stop_patience = 0; // 0 disables early stopping
};

struct TrainHistory {
    std::vector<double> train_mse; // raw-output MSE entering each epoch
    std::vector<double> val_mse;
    int best_epoch = -1;
    double best_val_mse = 0.0;
};

struct TrainResult {
    RegressorModel model; // weights of the best-validation epoch
    TrainHistory history;
};

/// Full-batch gradient descent with momentum. Deterministic for a fixed
/// seed: initialization, the train/validation split and every accumulation
/// order are fixed. Throws DivergenceError when the loss leaves the finite
/// range (no model is returned).
TrainResult train(const RegressorModel& init, const PsfDataset& ds, const TrainConfig& cfg);

/// Versioned model file <name>.psfmodel: text header plus a little-endian
/// float64 payload. Round-trips bit-exactly.
void save_model(const RegressorModel& m, const std::string& path);
RegressorModel load_model(const std::string& path);

} // namespace psfsim
