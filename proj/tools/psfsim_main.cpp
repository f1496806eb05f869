#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "psfsim/dataset.hpp"
#include "psfsim/depth.hpp"
#include "psfsim/image_io.hpp"
#include "psfsim/regressor.hpp"
#include "psfsim/sv_convolve.hpp"
#include "psfsim/synthetic_lens.hpp"

namespace {

using namespace psfsim;

constexpr const char* kToolVersion = "1.0.0";

std::string fmt_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Reproducibility record: every resolved parameter of the run, written next
// to the outputs. Deliberately contains nothing volatile (no timestamps), so
// identical runs produce identical files.
class RunRecord {
public:
    explicit RunRecord(std::string command) : command_(std::move(command)) {
        add("tool_version", kToolVersion);
        add("format_version.dataset", "1");
        add("format_version.model", "1");
    }
    void add(const std::string& key, const std::string& value) {
        entries_[key] = value;
    }
    void add(const std::string& key, double value) { add(key, fmt_full(value)); }
    void add(const std::string& key, int value) { add(key, std::to_string(value)); }
    void add(const std::string& key, std::uint64_t value) { add(key, std::to_string(value)); }
    void write(const std::string& path) const {
        std::ostringstream out;
        out << "psfsim_run 1\ncommand = " << command_ << "\n";
        for (const auto& [k, v] : entries_) {
            out << k << " = " << v << "\n";
        }
        const std::string tmp = path + ".tmp";
        {
            std::ofstream f(tmp, std::ios::trunc);
            if (!f) {
                throw IoError("cannot write run record '" + path + "'");
            }
            f << out.str();
        }
        std::filesystem::rename(tmp, path);
    }

private:
    std::string command_;
    std::map<std::string, std::string> entries_;
};

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_image_atomic(const std::string& path, const Image& img, GammaMode gamma) {
    const std::string tmp = path + ".tmp";
    if (has_suffix(path, ".pfm")) {
        write_pfm(tmp, img);
    } else if (has_suffix(path, ".png")) {
        write_png(tmp, img, gamma);
    } else {
        throw FormatError("unsupported image extension on '" + path + "'");
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) {
            throw IoError("cannot open '" + path + "' for writing");
        }
        f << content;
        f.flush();
        if (!f) {
            throw IoError("write to '" + path + "' failed");
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string strip_suffix(const std::string& s, const std::string& suffix) {
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return s.substr(0, s.size() - suffix.size());
    }
    return s;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        out.push_back(std::stod(item));
    }
    return out;
}

// custom plan syntax: "dz=0,5;r=0,1.5;phi=0,90"
SamplingPlan parse_plan(const std::string& text) {
    SamplingPlan plan;
    plan.name = "custom";
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ';')) {
        const std::size_t eq = part.find('=');
        if (eq == std::string::npos) {
            throw FormatError("bad plan fragment '" + part + "'");
        }
        const std::string key = part.substr(0, eq);
        const std::vector<double> vals = parse_double_list(part.substr(eq + 1));
        if (key == "dz") {
            plan.dz_values_um = vals;
        } else if (key == "r") {
            plan.r_values_mm = vals;
        } else if (key == "phi") {
            plan.phi_values_deg = vals;
        } else {
            throw FormatError("unknown plan axis '" + key + "'");
        }
    }
    return plan;
}

// Lens parameters shared by every command that can use the analytic lens.
struct LensFlags {
    SyntheticLensSpec spec;
    void attach(CLI::App* cmd) {
        cmd->add_option("--lens-sigma0", spec.sigma0_um, "best-focus blur radius, µm")
            ->capture_default_str();
        cmd->add_option("--lens-field-curvature", spec.field_curvature,
                        "focal shift per mm² of R², µm")
            ->capture_default_str();
        cmd->add_option("--lens-astigmatism", spec.astigmatism,
                        "tangential/sagittal split per mm², µm")
            ->capture_default_str();
        cmd->add_option("--lens-asymmetry", spec.defocus_asymmetry,
                        "extra growth rate for positive defocus")
            ->capture_default_str();
        cmd->add_option("--lens-slope", spec.defocus_slope, "blur growth per µm of defocus")
            ->capture_default_str();
        cmd->add_option("--lens-focal", spec.focal_mm, "focal length, mm")
            ->capture_default_str();
        cmd->add_option("--r-max", spec.r_max_mm, "validity radius, mm")
            ->capture_default_str();
        cmd->add_option("--dz-range", spec.dz_range_um, "defocus validity half-range, µm")
            ->capture_default_str();
    }
    void record(RunRecord& rec) const {
        rec.add("lens", spec.descriptor());
    }
};

struct GeometryFlags {
    double pixel_pitch_um = 6.0;
    double r_max_mm = 3.0;
    double center_row = -1.0; // negative: image center
    double center_col = -1.0;
    void attach(CLI::App* cmd) {
        cmd->add_option("--pitch", pixel_pitch_um, "sensor pixel pitch, µm")
            ->capture_default_str();
        cmd->add_option("--sensor-r-max", r_max_mm, "valid aperture radius, mm")
            ->capture_default_str();
        cmd->add_option("--center-row", center_row, "optical center row (default: image center)");
        cmd->add_option("--center-col", center_col, "optical center col (default: image center)");
    }
    SensorGeometry resolve(int width, int height) const {
        SensorGeometry g = centered_geometry(width, height, pixel_pitch_um, r_max_mm);
        if (center_row >= 0.0) {
            g.center_row = center_row;
        }
        if (center_col >= 0.0) {
            g.center_col = center_col;
        }
        return g;
    }
    void record(RunRecord& rec, const SensorGeometry& g) const {
        rec.add("geometry.pitch_um", g.pixel_pitch_um);
        rec.add("geometry.r_max_mm", g.r_max_mm);
        rec.add("geometry.center_row", g.center_row);
        rec.add("geometry.center_col", g.center_col);
    }
};

struct GlobalFlags {
    std::uint64_t seed = 1;
    int threads = 1;
};

int run_cli(int argc, char** argv) {
    CLI::App app{"parameterized PSF model and spatially variant lens degradation"};
    app.require_subcommand(1);
    app.fallthrough();
    app.allow_config_extras(false); // unknown config keys are errors
    app.set_config("--config", "", "configuration file (key = value, [subcommand] sections)");

    GlobalFlags global;
    app.add_option("--seed", global.seed, "seed for every stochastic choice")
        ->capture_default_str();
    app.add_option("--threads", global.threads, "worker threads for the convolution engine")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    // ------------------------------------------------------------ dataset-gen
    auto* gen = app.add_subcommand("dataset-gen", "sample the analytic lens into a dataset");
    LensFlags gen_lens;
    gen_lens.attach(gen);
    std::string gen_preset = "series1";
    std::string gen_plan_text;
    std::string gen_out;
    int gen_size_k = 13;
    double gen_pitch = 6.14;
    gen->add_option("--preset", gen_preset, "series1 | series2 | empty")
        ->capture_default_str();
    gen->add_option("--plan", gen_plan_text, "custom plan, e.g. dz=0,5;r=0,1.5;phi=0,90");
    gen->add_option("--size-k", gen_size_k, "kernel resolution")->capture_default_str();
    gen->add_option("--kernel-pitch", gen_pitch, "kernel pitch, µm")->capture_default_str();
    gen->add_option("--out", gen_out, "output stem (<stem>.manifest / <stem>.psfbin)")
        ->required();
    gen->callback([&] {
        gen_lens.spec.seed = global.seed;
        SamplingPlan plan;
        if (!gen_plan_text.empty()) {
            plan = parse_plan(gen_plan_text);
        } else if (gen_preset == "series1") {
            plan = SamplingPlan::series1();
        } else if (gen_preset == "series2") {
            plan = SamplingPlan::series2();
        } else if (gen_preset == "empty") {
            plan = SamplingPlan::empty();
        } else {
            throw OutOfRangeError("unknown preset '" + gen_preset + "'");
        }
        const PsfDataset ds = generate_dataset(gen_lens.spec, plan, gen_size_k, gen_pitch);
        save_dataset(ds, gen_out);
        RunRecord rec("dataset-gen");
        gen_lens.record(rec);
        rec.add("plan", plan.descriptor());
        rec.add("size_k", gen_size_k);
        rec.add("kernel_pitch_um", gen_pitch);
        rec.add("seed", global.seed);
        rec.add("out", gen_out);
        rec.write(gen_out + ".run");
        std::cout << "grid_points " << ds.meta.grid_points << "\n";
        std::cout << "entries " << ds.entries.size() << "\n";
    });

    // ------------------------------------------------------------ train
    auto* tr = app.add_subcommand("train", "fit the regressor to a dataset");
    std::string tr_dataset;
    std::string tr_out;
    std::string tr_hidden = "64,64";
    TrainConfig tr_cfg;
    tr->add_option("--dataset", tr_dataset, "dataset stem")->required();
    tr->add_option("--out", tr_out, "model output path (.psfmodel)")->required();
    tr->add_option("--hidden", tr_hidden, "hidden layer sizes, comma separated")
        ->capture_default_str();
    tr->add_option("--epochs", tr_cfg.epochs)->capture_default_str();
    tr->add_option("--lr", tr_cfg.learning_rate)->capture_default_str();
    tr->add_option("--momentum", tr_cfg.momentum)->capture_default_str();
    tr->add_option("--warmup", tr_cfg.warmup_epochs, "learning-rate ramp length, epochs")
        ->capture_default_str();
    tr->add_option("--val-fraction", tr_cfg.validation_fraction)->capture_default_str();
    tr->add_option("--patience", tr_cfg.early_stop_patience,
                   "early stop after this many epochs without improvement (0 = off)")
        ->capture_default_str();
    tr->callback([&] {
        tr_cfg.seed = global.seed;
        const PsfDataset ds = load_dataset(tr_dataset);
        if (ds.entries.empty()) {
            throw OutOfRangeError("cannot train on an empty dataset");
        }
        std::vector<int> hidden;
        for (double h : parse_double_list(tr_hidden)) {
            hidden.push_back(static_cast<int>(h));
        }
        double dz_scale = std::max(std::abs(ds.meta.dz_min_um), std::abs(ds.meta.dz_max_um));
        if (dz_scale == 0.0) {
            dz_scale = 1.0; // degenerate single-plane dataset
        }
        const RegressorModel init =
            make_model(hidden, ds.meta.size_k, ds.meta.pitch_target_um, dz_scale,
                       ds.meta.r_max_mm, global.seed);
        const TrainResult result = train(init, ds, tr_cfg);
        save_model(result.model, tr_out);

        std::ostringstream csv;
        csv << "epoch,train_mse,val_mse\n";
        for (std::size_t e = 0; e < result.history.train_mse.size(); ++e) {
            csv << e << "," << fmt_full(result.history.train_mse[e]) << ","
                << fmt_full(result.history.val_mse[e]) << "\n";
        }
        const std::string stem = strip_suffix(tr_out, ".psfmodel");
        write_text_atomic(stem + ".history.csv", csv.str());

        RunRecord rec("train");
        rec.add("dataset", tr_dataset);
        rec.add("out", tr_out);
        rec.add("hidden", tr_hidden);
        rec.add("epochs", tr_cfg.epochs);
        rec.add("learning_rate", tr_cfg.learning_rate);
        rec.add("momentum", tr_cfg.momentum);
        rec.add("warmup_epochs", tr_cfg.warmup_epochs);
        rec.add("validation_fraction", tr_cfg.validation_fraction);
        rec.add("early_stop_patience", tr_cfg.early_stop_patience);
        rec.add("seed", global.seed);
        rec.write(stem + ".run");
        std::cout << "best_epoch " << result.history.best_epoch << "\n";
        std::cout << "best_val_mse " << fmt_full(result.history.best_val_mse) << "\n";
    });

    // ------------------------------------------------------------ psf-eval
    auto* ev = app.add_subcommand("psf-eval", "predict one kernel and compare to a reference");
    std::string ev_model;
    std::string ev_dataset;
    bool ev_synthetic = false;
    LensFlags ev_lens;
    double ev_dz = 0.0, ev_r = 0.0, ev_phi = 0.0;
    std::string ev_out = "psf_eval";
    ev->add_option("--model", ev_model, "trained model path")->required();
    ev->add_option("--dz", ev_dz, "defocus, µm")->capture_default_str();
    ev->add_option("--r", ev_r, "image height, mm")->capture_default_str();
    ev->add_option("--phi", ev_phi, "azimuth, degrees")->capture_default_str();
    ev->add_option("--dataset", ev_dataset, "dataset stem holding the reference kernel");
    ev->add_flag("--synthetic", ev_synthetic, "compare against the analytic lens");
    ev_lens.attach(ev);
    ev->add_option("--out", ev_out, "output stem for kernel dumps")->capture_default_str();
    ev->callback([&] {
        const RegressorModel model = load_model(ev_model);
        const FieldPoint fp{ev_dz, ev_r, ev_phi};
        const PsfKernel pred = forward(model, fp);

        auto kernel_image = [](const PsfKernel& k) {
            Image img(k.size_k, k.size_k, 1);
            std::copy(k.values.begin(), k.values.end(), img.data.begin());
            return img;
        };
        auto kernel_png = [](const PsfKernel& k) {
            Image img(k.size_k, k.size_k, 1);
            double peak = 0.0;
            for (double v : k.values) {
                peak = std::max(peak, v);
            }
            for (std::size_t i = 0; i < k.values.size(); ++i) {
                img.data[i] = peak > 0.0 ? k.values[i] / peak : 0.0;
            }
            return img;
        };
        write_image_atomic(ev_out + "_pred.pfm", kernel_image(pred), GammaMode::linear);
        write_image_atomic(ev_out + "_pred.png", kernel_png(pred), GammaMode::linear);

        bool have_ref = false;
        PsfKernel ref;
        if (!ev_dataset.empty()) {
            const PsfDataset ds = load_dataset(ev_dataset);
            for (const DatasetEntry& e : ds.entries) {
                if (std::abs(e.field.dz_um - fp.dz_um) < 1e-9 &&
                    std::abs(e.field.r_mm - fp.r_mm) < 1e-9 &&
                    std::abs(e.field.phi_deg - fp.phi_deg) < 1e-9) {
                    ref = e.kernel;
                    have_ref = true;
                    break;
                }
            }
            if (!have_ref) {
                throw OutOfRangeError("field point not present in the dataset");
            }
        } else if (ev_synthetic) {
            ev_lens.spec.seed = global.seed;
            ref = analytic_psf(ev_lens.spec, fp, model.size_k, model.pitch_um);
            have_ref = true;
        }
        if (have_ref) {
            if (ref.size_k != pred.size_k) {
                throw ShapeMismatchError("reference kernel size does not match the model");
            }
            write_image_atomic(ev_out + "_ref.pfm", kernel_image(ref), GammaMode::linear);
            write_image_atomic(ev_out + "_ref.png", kernel_png(ref), GammaMode::linear);
            double se = 0.0, ref_sq = 0.0;
            for (std::size_t i = 0; i < ref.values.size(); ++i) {
                const double d = pred.values[i] - ref.values[i];
                se += d * d;
                ref_sq += ref.values[i] * ref.values[i];
            }
            const double mse = se / static_cast<double>(ref.values.size());
            std::cout << "mse " << fmt_full(mse) << "\n";
            std::cout << "normalized_mse " << fmt_full(se / ref_sq) << "\n";
        }

        RunRecord rec("psf-eval");
        rec.add("model", ev_model);
        rec.add("dz_um", ev_dz);
        rec.add("r_mm", ev_r);
        rec.add("phi_deg", ev_phi);
        rec.add("out", ev_out);
        if (!ev_dataset.empty()) {
            rec.add("dataset", ev_dataset);
        }
        if (ev_synthetic) {
            ev_lens.record(rec);
        }
        rec.write(ev_out + ".run");
    });

    // ------------------------------------------------------------ degrade
    auto* dg = app.add_subcommand("degrade", "apply the spatially variant PSF to an image");
    std::string dg_image, dg_out, dg_model, dg_depth, dg_gradient;
    bool dg_synthetic = false;
    bool dg_invariant = false;
    bool dg_const_set = false;
    double dg_const = 0.0;
    int dg_spacing = 16;
    int dg_size_k = 13;
    double dg_kernel_pitch = 6.14;
    int dg_oversample = 0;
    std::string dg_gamma = "srgb";
    LensFlags dg_lens;
    GeometryFlags dg_geom;
    dg->add_option("--image", dg_image, "input image (.png or .pfm)")->required();
    dg->add_option("--out", dg_out, "output image (.png or .pfm)")->required();
    dg->add_option("--model", dg_model, "trained model path");
    dg->add_flag("--synthetic", dg_synthetic, "use the analytic lens as PSF source");
    dg_lens.attach(dg);
    dg->add_option("--size-k", dg_size_k, "kernel resolution for --synthetic")
        ->capture_default_str();
    dg->add_option("--kernel-pitch", dg_kernel_pitch, "kernel pitch for --synthetic, µm")
        ->capture_default_str();
    dg->add_option("--oversample", dg_oversample,
                   "quadrature oversampling for --synthetic (0 = auto)")
        ->capture_default_str();
    dg_geom.attach(dg);
    double dg_focus_m = std::numeric_limits<double>::infinity();
    dg->add_option("--defocus-const", dg_const, "constant defocus, µm")
        ->each([&](const std::string&) { dg_const_set = true; });
    dg->add_option("--defocus-gradient", dg_gradient, "linear column gradient 'dzL,dzR', µm");
    dg->add_option("--depth", dg_depth, "depth map (.pgm/.pfm with .dhdr sidecar)");
    dg->add_option("--focus-distance", dg_focus_m,
                   "focused object distance for --depth, meters (default: infinity)");
    dg->add_option("--spacing", dg_spacing, "kernel grid spacing, px")->capture_default_str();
    dg->add_flag("--spatially-invariant", dg_invariant,
                 "query the PSF at (dz, 0, 0) everywhere");
    dg->add_option("--gamma", dg_gamma, "png transfer curve: srgb | linear")
        ->capture_default_str();
    dg->callback([&] {
        const GammaMode gamma = dg_gamma == "linear" ? GammaMode::linear : GammaMode::srgb;
        const Image input = read_image(dg_image, gamma);
        const SensorGeometry geom = dg_geom.resolve(input.width, input.height);

        std::unique_ptr<PsfSource> source;
        RegressorModel model;
        if (!dg_model.empty()) {
            model = load_model(dg_model);
            source = std::make_unique<ModelPsfSource>(model);
        } else if (dg_synthetic) {
            dg_lens.spec.seed = global.seed;
            source = std::make_unique<SyntheticPsfSource>(dg_lens.spec, dg_size_k,
                                                          dg_kernel_pitch, dg_oversample);
        } else {
            throw OutOfRangeError("either --model or --synthetic is required");
        }

        DefocusMap map;
        DefocusQuery query;
        if (!dg_depth.empty()) {
            const DepthMap depth = load_depth_map(dg_depth);
            const DepthFileHeader header = load_depth_header(dg_depth);
            const CameraFocusSpec focus{dg_lens.spec.focal_mm, dg_focus_m, header.near_m,
                                        header.far_m};
            map = defocus_map(focus, depth, source->dz_min_um(), source->dz_max_um());
            query.map = &map;
        } else if (!dg_gradient.empty()) {
            const std::vector<double> lr = parse_double_list(dg_gradient);
            if (lr.size() != 2) {
                throw FormatError("--defocus-gradient needs 'dzL,dzR'");
            }
            map = gradient_defocus(input.width, input.height, lr[0], lr[1]);
            query.map = &map;
        } else {
            query.constant_um = dg_const_set ? dg_const : 0.0;
        }

        DegradeOptions options;
        options.spacing = dg_spacing;
        options.spatially_invariant = dg_invariant;
        options.threads = global.threads;
        const Image out = degrade(input, *source, geom, query, options);
        write_image_atomic(dg_out, out, gamma);

        RunRecord rec("degrade");
        rec.add("image", dg_image);
        rec.add("out", dg_out);
        if (!dg_model.empty()) {
            rec.add("model", dg_model);
        }
        if (dg_synthetic) {
            dg_lens.record(rec);
            rec.add("size_k", dg_size_k);
            rec.add("kernel_pitch_um", dg_kernel_pitch);
            rec.add("oversample", dg_oversample);
        }
        dg_geom.record(rec, geom);
        if (!dg_depth.empty()) {
            rec.add("depth", dg_depth);
            rec.add("focus_distance_m", dg_focus_m);
        } else if (!dg_gradient.empty()) {
            rec.add("defocus_gradient", dg_gradient);
        } else {
            rec.add("defocus_const_um", query.constant_um);
        }
        rec.add("spacing", dg_spacing);
        rec.add("spatially_invariant", dg_invariant ? 1 : 0);
        rec.add("threads", global.threads);
        rec.add("gamma", dg_gamma);
        rec.add("seed", global.seed);
        rec.write(dg_out + ".run");
        std::cout << "degraded " << dg_out << "\n";
    });

    // ------------------------------------------------------------ error-report
    auto* er = app.add_subcommand("error-report",
                                  "interpolation error versus grid spacing");
    std::string er_image, er_out, er_model, er_spacings = "8,16,32,64";
    bool er_synthetic = false;
    bool er_invariant = false;
    double er_const = 0.0;
    int er_size_k = 13;
    double er_kernel_pitch = 6.14;
    int er_oversample = 4;
    LensFlags er_lens;
    GeometryFlags er_geom;
    er->add_option("--image", er_image, "input image (.png or .pfm)")->required();
    er->add_option("--out", er_out, "report CSV path")->required();
    er->add_option("--model", er_model, "trained model path");
    er->add_flag("--synthetic", er_synthetic, "use the analytic lens as PSF source");
    er_lens.attach(er);
    er->add_option("--size-k", er_size_k)->capture_default_str();
    er->add_option("--kernel-pitch", er_kernel_pitch)->capture_default_str();
    er->add_option("--oversample", er_oversample,
                   "quadrature oversampling for --synthetic (per-pixel reference cost)")
        ->capture_default_str();
    er_geom.attach(er);
    er->add_option("--defocus-const", er_const, "constant defocus, µm")->capture_default_str();
    er->add_option("--spacings", er_spacings, "comma separated grid spacings")
        ->capture_default_str();
    er->add_flag("--spatially-invariant", er_invariant);
    er->callback([&] {
        const Image input = read_image(er_image, GammaMode::srgb);
        const SensorGeometry geom = er_geom.resolve(input.width, input.height);
        std::unique_ptr<PsfSource> source;
        RegressorModel model;
        if (!er_model.empty()) {
            model = load_model(er_model);
            source = std::make_unique<ModelPsfSource>(model);
        } else if (er_synthetic) {
            er_lens.spec.seed = global.seed;
            source = std::make_unique<SyntheticPsfSource>(er_lens.spec, er_size_k,
                                                          er_kernel_pitch, er_oversample);
        } else {
            throw OutOfRangeError("either --model or --synthetic is required");
        }
        std::vector<int> spacings;
        for (double s : parse_double_list(er_spacings)) {
            spacings.push_back(static_cast<int>(s));
        }
        DefocusQuery query;
        query.constant_um = er_const;
        const std::vector<ErrorReportRow> rows = interpolation_error_report(
            input, *source, geom, query, spacings, global.threads, er_invariant);

        // wall times go to stdout only; the persisted report stays
        // bit-reproducible across runs
        std::ostringstream csv;
        csv << "spacing,max_abs_err,mean_abs_err\n";
        for (const ErrorReportRow& row : rows) {
            csv << row.spacing << "," << fmt_full(row.max_err) << ","
                << fmt_full(row.mean_err) << "\n";
            std::cout << "s=" << row.spacing << " max_err=" << fmt_full(row.max_err)
                      << " mean_err=" << fmt_full(row.mean_err) << " wall_ms=" << row.wall_ms
                      << "\n";
        }
        write_text_atomic(er_out, csv.str());

        RunRecord rec("error-report");
        rec.add("image", er_image);
        rec.add("out", er_out);
        if (!er_model.empty()) {
            rec.add("model", er_model);
        }
        if (er_synthetic) {
            er_lens.record(rec);
            rec.add("size_k", er_size_k);
            rec.add("kernel_pitch_um", er_kernel_pitch);
            rec.add("oversample", er_oversample);
        }
        er_geom.record(rec, geom);
        rec.add("defocus_const_um", er_const);
        rec.add("spacings", er_spacings);
        rec.add("spatially_invariant", er_invariant ? 1 : 0);
        rec.add("threads", global.threads);
        rec.add("seed", global.seed);
        rec.write(er_out + ".run");
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const psfsim::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const psfsim::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const psfsim::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
