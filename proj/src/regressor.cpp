#include "psfsim/regressor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "psfsim/angles.hpp"
#include "psfsim/rng.hpp"

namespace psfsim {

static_assert(std::endian::native == std::endian::little,
              "model payloads are little-endian");

namespace {

constexpr int kModelVersion = 1;

std::string full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Batched activations for one dataset: encoded inputs and targets, plus the
// per-layer activation buffers reused across epochs.
struct Batch {
    int n = 0;
    std::vector<double> inputs;  // n x 4
    std::vector<double> targets; // n x out
};

Batch make_batch(const RegressorModel& m, const PsfDataset& ds,
                 const std::vector<std::size_t>& indices) {
    const int out = m.output_dim();
    Batch b;
    b.n = static_cast<int>(indices.size());
    b.inputs.resize(static_cast<std::size_t>(b.n) * 4);
    b.targets.resize(static_cast<std::size_t>(b.n) * out);
    for (int i = 0; i < b.n; ++i) {
        const DatasetEntry& e = ds.entries[indices[static_cast<std::size_t>(i)]];
        if (static_cast<int>(e.kernel.values.size()) != out) {
            throw ShapeMismatchError("dataset kernel size does not match model output");
        }
        const auto x = encode_input(e.field, m.dz_scale_um, m.r_scale_mm);
        for (int j = 0; j < 4; ++j) {
            b.inputs[static_cast<std::size_t>(i) * 4 + j] = x[static_cast<std::size_t>(j)];
        }
        std::memcpy(&b.targets[static_cast<std::size_t>(i) * out], e.kernel.values.data(),
                    static_cast<std::size_t>(out) * sizeof(double));
    }
    return b;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    return idx;
}

// z = x * W^T + b for one layer, then tanh unless it is the output layer.
void layer_forward(const std::vector<double>& w, const std::vector<double>& bias,
                   const double* x, int n, int in, int out, bool last, double* a) {
    for (int s = 0; s < n; ++s) {
        const double* xi = x + static_cast<std::size_t>(s) * in;
        double* ai = a + static_cast<std::size_t>(s) * out;
        for (int o = 0; o < out; ++o) {
            const double* wo = w.data() + static_cast<std::size_t>(o) * in;
            double acc = bias[static_cast<std::size_t>(o)];
            for (int i = 0; i < in; ++i) {
                acc += wo[i] * xi[i];
            }
            ai[o] = last ? acc : std::tanh(acc);
        }
    }
}

// Forward pass over the whole batch; acts[l] holds layer l's activations
// (acts[0] = inputs). Returns the raw-output MSE against the targets.
double batch_forward(const RegressorModel& m, const Batch& b,
                     std::vector<std::vector<double>>& acts) {
    const std::size_t layers = m.weights.size();
    acts.resize(layers + 1);
    acts[0] = b.inputs;
    for (std::size_t l = 0; l < layers; ++l) {
        const int in = m.layer_sizes[l];
        const int out = m.layer_sizes[l + 1];
        acts[l + 1].resize(static_cast<std::size_t>(b.n) * out);
        layer_forward(m.weights[l], m.biases[l], acts[l].data(), b.n, in, out,
                      l + 1 == layers, acts[l + 1].data());
    }
    const std::vector<double>& pred = acts[layers];
    double se = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - b.targets[i];
        se += d * d;
    }
    return se / static_cast<double>(pred.size());
}

Gradient zero_gradient(const RegressorModel& m) {
    Gradient g;
    g.weights.resize(m.weights.size());
    g.biases.resize(m.biases.size());
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        g.weights[l].assign(m.weights[l].size(), 0.0);
        g.biases[l].assign(m.biases[l].size(), 0.0);
    }
    return g;
}

// Backpropagation through the raw-output MSE. acts must come from
// batch_forward on the same batch.
Gradient batch_backward(const RegressorModel& m, const Batch& b,
                        const std::vector<std::vector<double>>& acts) {
    const std::size_t layers = m.weights.size();
    Gradient g = zero_gradient(m);
    const int out_dim = m.output_dim();
    const double scale = 2.0 / (static_cast<double>(b.n) * out_dim);

    std::vector<double> delta(static_cast<std::size_t>(b.n) * out_dim);
    for (std::size_t i = 0; i < delta.size(); ++i) {
        delta[i] = scale * (acts[layers][i] - b.targets[i]);
    }

    for (std::size_t l = layers; l-- > 0;) {
        const int in = m.layer_sizes[l];
        const int out = m.layer_sizes[l + 1];
        std::vector<double>& gw = g.weights[l];
        std::vector<double>& gb = g.biases[l];
        const std::vector<double>& below = acts[l];
        for (int s = 0; s < b.n; ++s) {
            const double* ds_ = delta.data() + static_cast<std::size_t>(s) * out;
            const double* as = below.data() + static_cast<std::size_t>(s) * in;
            for (int o = 0; o < out; ++o) {
                const double d = ds_[o];
                gb[static_cast<std::size_t>(o)] += d;
                double* gwo = gw.data() + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) {
                    gwo[i] += d * as[i];
                }
            }
        }
        if (l == 0) {
            break;
        }
        // propagate: delta_below = (delta * W) .* (1 - a^2)
        std::vector<double> next(static_cast<std::size_t>(b.n) * in, 0.0);
        const std::vector<double>& w = m.weights[l];
        for (int s = 0; s < b.n; ++s) {
            const double* ds_ = delta.data() + static_cast<std::size_t>(s) * out;
            double* ns = next.data() + static_cast<std::size_t>(s) * in;
            for (int o = 0; o < out; ++o) {
                const double d = ds_[o];
                const double* wo = w.data() + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) {
                    ns[i] += d * wo[i];
                }
            }
            const double* as = below.data() + static_cast<std::size_t>(s) * in;
            for (int i = 0; i < in; ++i) {
                ns[i] *= 1.0 - as[i] * as[i];
            }
        }
        delta = std::move(next);
    }
    return g;
}

} // namespace

std::size_t RegressorModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += weights[l].size() + biases[l].size();
    }
    return n;
}

void validate_model(const RegressorModel& m) {
    if (m.layer_sizes.size() < 2) {
        throw ShapeMismatchError("model needs at least input and output layers");
    }
    if (m.layer_sizes.front() != 4) {
        throw ShapeMismatchError("model input dimension must be 4");
    }
    if (m.layer_sizes.back() != m.size_k * m.size_k) {
        throw ShapeMismatchError("model output dimension must be size_k^2");
    }
    if (m.weights.size() != m.layer_sizes.size() - 1 || m.biases.size() != m.weights.size()) {
        throw ShapeMismatchError("layer count mismatch");
    }
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        const auto in = static_cast<std::size_t>(m.layer_sizes[l]);
        const auto out = static_cast<std::size_t>(m.layer_sizes[l + 1]);
        if (m.weights[l].size() != in * out || m.biases[l].size() != out) {
            throw ShapeMismatchError("weight shape mismatch at layer " + std::to_string(l));
        }
    }
    if (!(m.dz_scale_um > 0.0) || !(m.r_scale_mm > 0.0) || !std::isfinite(m.dz_scale_um) ||
        !std::isfinite(m.r_scale_mm)) {
        throw OutOfRangeError("normalization constants must be finite and positive");
    }
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        for (double w : m.weights[l]) {
            if (!std::isfinite(w)) {
                throw OutOfRangeError("model weights must be finite");
            }
        }
        for (double b : m.biases[l]) {
            if (!std::isfinite(b)) {
                throw OutOfRangeError("model biases must be finite");
            }
        }
    }
}

RegressorModel make_model(const std::vector<int>& hidden, int size_k, double pitch_um,
                          double dz_scale_um, double r_scale_mm, std::uint64_t seed) {
    RegressorModel m;
    m.size_k = size_k;
    m.pitch_um = pitch_um;
    m.dz_scale_um = dz_scale_um;
    m.r_scale_mm = r_scale_mm;
    m.layer_sizes.push_back(4);
    for (int h : hidden) {
        m.layer_sizes.push_back(h);
    }
    m.layer_sizes.push_back(size_k * size_k);

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        const int in = m.layer_sizes[l];
        const int out = m.layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / (in + out));
        std::vector<double> w(static_cast<std::size_t>(in) * out);
        for (double& x : w) {
            x = rng.uniform(-limit, limit);
        }
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(static_cast<std::size_t>(out), 0.0);
    }
    validate_model(m);
    return m;
}

RegressorModel make_default_model(int size_k, double pitch_um, double dz_scale_um,
                                  double r_scale_mm, std::uint64_t seed) {
    return make_model({64, 64}, size_k, pitch_um, dz_scale_um, r_scale_mm, seed);
}

std::array<double, 4> encode_input(const FieldPoint& fp, double dz_scale_um,
                                   double r_scale_mm) {
    const double tol = 1e-9;
    if (!(std::abs(fp.dz_um) <= dz_scale_um * (1.0 + tol) + tol)) {
        throw OutOfRangeError("defocus outside the model range");
    }
    if (!(std::abs(fp.r_mm) <= r_scale_mm * (1.0 + tol) + tol)) {
        throw OutOfRangeError("image height outside the model range");
    }
    if (!std::isfinite(fp.phi_deg)) {
        throw OutOfRangeError("azimuth must be finite");
    }
    return {fp.dz_um / dz_scale_um, fp.r_mm / r_scale_mm, cos_deg(fp.phi_deg),
            sin_deg(fp.phi_deg)};
}

std::vector<double> forward_raw(const RegressorModel& m, const FieldPoint& fp) {
    const auto x = encode_input(fp, m.dz_scale_um, m.r_scale_mm);
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        const int in = m.layer_sizes[l];
        const int out = m.layer_sizes[l + 1];
        std::vector<double> next(static_cast<std::size_t>(out));
        layer_forward(m.weights[l], m.biases[l], cur.data(), 1, in, out,
                      l + 1 == m.weights.size(), next.data());
        cur = std::move(next);
    }
    return cur;
}

PsfKernel forward(const RegressorModel& m, const FieldPoint& fp) {
    std::vector<double> raw = forward_raw(m, fp);
    PsfKernel k(m.size_k, m.pitch_um);
    double sum = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = raw[i] > 0.0 ? raw[i] : 0.0;
        k.values[i] = v;
        sum += v;
    }
    if (sum == 0.0) {
        throw AllZeroKernelError();
    }
    for (double& v : k.values) {
        v /= sum;
    }
    k.normalized = true;
    return k;
}

double loss_mse(const RegressorModel& m, const PsfDataset& ds) {
    if (ds.entries.empty()) {
        throw OutOfRangeError("loss over an empty dataset");
    }
    const int out = m.output_dim();
    double se = 0.0;
    for (const DatasetEntry& e : ds.entries) {
        if (static_cast<int>(e.kernel.values.size()) != out) {
            throw ShapeMismatchError("dataset kernel size does not match model output");
        }
        const PsfKernel pred = forward(m, e.field);
        for (int i = 0; i < out; ++i) {
            const double d = pred.values[static_cast<std::size_t>(i)] -
                             e.kernel.values[static_cast<std::size_t>(i)];
            se += d * d;
        }
    }
    return se / (static_cast<double>(ds.entries.size()) * out);
}

double loss_mse_raw(const RegressorModel& m, const PsfDataset& ds) {
    if (ds.entries.empty()) {
        throw OutOfRangeError("loss over an empty dataset");
    }
    const Batch b = make_batch(m, ds, all_indices(ds.entries.size()));
    std::vector<std::vector<double>> acts;
    return batch_forward(m, b, acts);
}

Gradient backward(const RegressorModel& m, const PsfDataset& ds) {
    if (ds.entries.empty()) {
        throw OutOfRangeError("gradient over an empty dataset");
    }
    const Batch b = make_batch(m, ds, all_indices(ds.entries.size()));
    std::vector<std::vector<double>> acts;
    batch_forward(m, b, acts);
    return batch_backward(m, b, acts);
}

TrainResult train(const RegressorModel& init, const PsfDataset& ds, const TrainConfig& cfg) {
    validate_model(init);
    if (ds.entries.empty()) {
        throw OutOfRangeError("cannot train on an empty dataset");
    }
    if (!(cfg.learning_rate > 0.0)) {
        throw OutOfRangeError("learning rate must be positive");
    }
    if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0)) {
        throw OutOfRangeError("validation fraction must lie in [0, 1)");
    }

    // deterministic split: seeded shuffle, validation head
    std::vector<std::size_t> idx = all_indices(ds.entries.size());
    Rng rng(cfg.seed);
    rng.shuffle(idx);
    const auto val_count = static_cast<std::size_t>(
        std::floor(cfg.validation_fraction * static_cast<double>(idx.size())));
    std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<long>(val_count));
    std::vector<std::size_t> train_idx(idx.begin() + static_cast<long>(val_count), idx.end());

    const Batch train_batch = make_batch(init, ds, train_idx);
    const Batch val_batch = val_count > 0 ? make_batch(init, ds, val_idx) : Batch{};

    RegressorModel model = init;
    Gradient velocity = zero_gradient(model);
    TrainResult result;
    result.history.best_val_mse = std::numeric_limits<double>::infinity();

    std::vector<std::vector<double>> acts;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double train_loss = batch_forward(model, train_batch, acts);
        const Gradient grad = batch_backward(model, train_batch, acts);

        double val_loss = train_loss;
        if (val_count > 0) {
            std::vector<std::vector<double>> val_acts;
            val_loss = batch_forward(model, val_batch, val_acts);
        }
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            throw DivergenceError("training loss left the finite range at epoch " +
                                  std::to_string(epoch));
        }
        result.history.train_mse.push_back(train_loss);
        result.history.val_mse.push_back(val_loss);

        if (val_loss < result.history.best_val_mse) {
            result.history.best_val_mse = val_loss;
            result.history.best_epoch = epoch;
            result.model = model;
        } else if (cfg.early_stop_patience > 0 &&
                   epoch - result.history.best_epoch >= cfg.early_stop_patience) {
            break;
        }

        const double ramp = cfg.warmup_epochs > 0
                                ? std::min(1.0, (epoch + 1.0) / cfg.warmup_epochs)
                                : 1.0;
        const double lr = cfg.learning_rate * ramp;
        for (std::size_t l = 0; l < model.weights.size(); ++l) {
            for (std::size_t i = 0; i < model.weights[l].size(); ++i) {
                double& v = velocity.weights[l][i];
                v = cfg.momentum * v - lr * grad.weights[l][i];
                model.weights[l][i] += v;
            }
            for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
                double& v = velocity.biases[l][i];
                v = cfg.momentum * v - lr * grad.biases[l][i];
                model.biases[l][i] += v;
            }
        }
    }
    if (result.history.best_epoch < 0) {
        throw DivergenceError("no finite epoch recorded");
    }
    return result;
}

void save_model(const RegressorModel& m, const std::string& path) {
    validate_model(m);
    std::ostringstream header;
    header << "psfmodel " << kModelVersion << "\n";
    header << "layer_sizes =";
    for (int s : m.layer_sizes) {
        header << " " << s;
    }
    header << "\nactivations = tanh identity\n";
    header << "dz_scale_um = " << full(m.dz_scale_um) << "\n";
    header << "r_scale_mm = " << full(m.r_scale_mm) << "\n";
    header << "size_k = " << m.size_k << "\n";
    header << "pitch_um = " << full(m.pitch_um) << "\n";
    header << "payload\n";

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp + "' for writing");
        }
        const std::string hs = header.str();
        out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
            out.write(reinterpret_cast<const char*>(m.weights[l].data()),
                      static_cast<std::streamsize>(m.weights[l].size() * sizeof(double)));
            out.write(reinterpret_cast<const char*>(m.biases[l].data()),
                      static_cast<std::streamsize>(m.biases[l].size() * sizeof(double)));
        }
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("write to '" + tmp + "' failed");
        }
    }
    std::filesystem::rename(tmp, path);
}

RegressorModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("empty model file");
    }
    {
        std::istringstream head(line);
        std::string magic;
        int version = -1;
        head >> magic >> version;
        if (magic != "psfmodel") {
            throw FormatError("'" + path + "' is not a psfmodel file");
        }
        if (version != kModelVersion) {
            throw FormatError("unsupported model version " + std::to_string(version));
        }
    }
    RegressorModel m;
    bool saw_payload = false;
    while (std::getline(in, line)) {
        if (line == "payload") {
            saw_payload = true;
            break;
        }
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw FormatError("malformed model header line: '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 3);
        if (key == "layer_sizes") {
            std::istringstream vals(value);
            int v;
            while (vals >> v) {
                m.layer_sizes.push_back(v);
            }
        } else if (key == "activations") {
            if (value != "tanh identity") {
                throw FormatError("unsupported activations '" + value + "'");
            }
        } else if (key == "dz_scale_um") {
            m.dz_scale_um = std::stod(value);
        } else if (key == "r_scale_mm") {
            m.r_scale_mm = std::stod(value);
        } else if (key == "size_k") {
            m.size_k = std::stoi(value);
        } else if (key == "pitch_um") {
            m.pitch_um = std::stod(value);
        } else {
            throw FormatError("unknown model header key '" + key + "'");
        }
    }
    if (!saw_payload || m.layer_sizes.size() < 2) {
        throw FormatError("model header incomplete");
    }
    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        const auto in_dim = static_cast<std::size_t>(m.layer_sizes[l]);
        const auto out_dim = static_cast<std::size_t>(m.layer_sizes[l + 1]);
        std::vector<double> w(in_dim * out_dim);
        std::vector<double> b(out_dim);
        in.read(reinterpret_cast<char*>(w.data()),
                static_cast<std::streamsize>(w.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(b.size() * sizeof(double)));
        if (!in) {
            throw FormatError("model payload truncated");
        }
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw FormatError("trailing bytes after model payload");
    }
    validate_model(m);
    return m;
}

} // namespace psfsim
