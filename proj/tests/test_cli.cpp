#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "psfsim/dataset.hpp"
#include "psfsim/depth.hpp"
#include "psfsim/image_io.hpp"
#include "psfsim/regressor.hpp"
#include "test_support.hpp"

using namespace psfsim;
namespace fs = std::filesystem;

namespace {

struct CliFixture {
    fs::path dir;
    CliFixture() {
        dir = fs::temp_directory_path() / "psfsim_cli_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~CliFixture() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }

    int run(const std::string& args) const {
        const std::string cmd = std::string(PSFSIM_CLI_PATH) + " " + args + " > " +
                                path("stdout.txt") + " 2> " + path("stderr.txt");
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    }
    std::string last_stdout() const {
        std::ifstream in(path("stdout.txt"));
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
};

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// small custom plan: cheap to generate, enough to train a tiny model
const char* kMiniPlan = "'dz=-10,0,10;r=0,1.5,3;phi=0,90'";

} // namespace

TEST_CASE("dataset-gen: custom plan, reruns bit-identical") {
    CliFixture t;
    const std::string args = "dataset-gen --plan " + std::string(kMiniPlan) + " --out " +
                             t.path("mini");
    REQUIRE(t.run(args) == 0);
    CHECK(t.last_stdout().find("entries 15") != std::string::npos);
    const PsfDataset ds = load_dataset(t.path("mini"));
    CHECK(ds.entries.size() == 15); // 3*3*2 minus on-axis dedup (3 planes x 1)

    const std::string manifest = file_bytes(t.path("mini.manifest"));
    const std::string payload = file_bytes(t.path("mini.psfbin"));
    const std::string record = file_bytes(t.path("mini.run"));
    REQUIRE(t.run(args) == 0);
    CHECK(file_bytes(t.path("mini.manifest")) == manifest);
    CHECK(file_bytes(t.path("mini.psfbin")) == payload);
    CHECK(file_bytes(t.path("mini.run")) == record);
}

TEST_CASE("dataset-gen: presets and the empty plan") {
    CliFixture t;
    REQUIRE(t.run("dataset-gen --preset empty --out " + t.path("none")) == 0);
    const PsfDataset ds = load_dataset(t.path("none"));
    CHECK(ds.entries.empty());

    REQUIRE(t.run("dataset-gen --preset series1 --out " + t.path("s1")) == 0);
    const PsfDataset s1 = load_dataset(t.path("s1"));
    CHECK(s1.meta.grid_points == 324);
    CHECK(s1.entries.size() == 291);
    CHECK(s1.meta.sampling_plan.rfind("series1{", 0) == 0);
}

TEST_CASE("dataset-gen: out-of-range plan exits 1 without partial files") {
    CliFixture t;
    const int rc = t.run("dataset-gen --plan 'dz=0,99;r=0;phi=0' --out " + t.path("bad"));
    CHECK(rc == 1);
    CHECK(!fs::exists(t.path("bad.manifest")));
    CHECK(!fs::exists(t.path("bad.psfbin")));
}

TEST_CASE("train: deterministic model files, history csv") {
    CliFixture t;
    REQUIRE(t.run("dataset-gen --plan " + std::string(kMiniPlan) + " --out " + t.path("d")) ==
            0);
    const std::string train_args = "train --dataset " + t.path("d") + " --out " +
                                   t.path("m.psfmodel") +
                                   " --epochs 60 --lr 5 --warmup 20 --seed 7";
    REQUIRE(t.run(train_args) == 0);
    const std::string model_bytes = file_bytes(t.path("m.psfmodel"));
    const std::string history = file_bytes(t.path("m.history.csv"));
    CHECK(history.rfind("epoch,train_mse,val_mse\n", 0) == 0);

    REQUIRE(t.run(train_args) == 0);
    CHECK(file_bytes(t.path("m.psfmodel")) == model_bytes);
    CHECK(file_bytes(t.path("m.history.csv")) == history);

    const RegressorModel m = load_model(t.path("m.psfmodel"));
    CHECK(m.size_k == 13);
}

TEST_CASE("train: missing dataset exits 2") {
    CliFixture t;
    CHECK(t.run("train --dataset " + t.path("nope") + " --out " + t.path("x.psfmodel")) == 2);
}

TEST_CASE("psf-eval: dataset reference point prints the singleton loss") {
    CliFixture t;
    REQUIRE(t.run("dataset-gen --plan " + std::string(kMiniPlan) + " --out " + t.path("d")) ==
            0);
    REQUIRE(t.run("train --dataset " + t.path("d") + " --out " + t.path("m.psfmodel") +
                  " --epochs 60 --lr 5 --warmup 20") == 0);
    REQUIRE(t.run("psf-eval --model " + t.path("m.psfmodel") + " --dz 10 --r 1.5 --phi 90" +
                  " --dataset " + t.path("d") + " --out " + t.path("eval")) == 0);
    CHECK(fs::exists(t.path("eval_pred.pfm")));
    CHECK(fs::exists(t.path("eval_pred.png")));
    CHECK(fs::exists(t.path("eval_ref.pfm")));

    // printed mse equals loss_mse on the singleton dataset
    const std::string out = t.last_stdout();
    const std::size_t pos = out.find("mse ");
    REQUIRE(pos != std::string::npos);
    const double printed = std::stod(out.substr(pos + 4));
    PsfDataset ds = load_dataset(t.path("d"));
    PsfDataset single;
    single.meta = ds.meta;
    for (const auto& e : ds.entries) {
        if (e.field.dz_um == 10.0 && e.field.r_mm == 1.5 && e.field.phi_deg == 90.0) {
            single.entries.push_back(e);
        }
    }
    REQUIRE(single.entries.size() == 1);
    const RegressorModel m = load_model(t.path("m.psfmodel"));
    CHECK(printed == doctest::Approx(loss_mse(m, single)).epsilon(1e-9));

    // out-of-range point errors
    CHECK(t.run("psf-eval --model " + t.path("m.psfmodel") + " --dz 400 --r 0 --phi 0 --out " +
                t.path("e2")) == 1);
}

TEST_CASE("degrade: synthetic source round trip and determinism") {
    CliFixture t;
    Image img = testsupport::checkerboard(96, 96, 16);
    write_pfm(t.path("in.pfm"), img);
    const std::string args = "degrade --image " + t.path("in.pfm") + " --out " +
                             t.path("out.pfm") +
                             " --synthetic --defocus-const 0 --spacing 16 --pitch 6" +
                             " --sensor-r-max 3 --oversample 4";
    REQUIRE(t.run(args) == 0);
    const std::string once = file_bytes(t.path("out.pfm"));
    REQUIRE(t.run(args) == 0);
    CHECK(file_bytes(t.path("out.pfm")) == once);
    const Image out = read_pfm(t.path("out.pfm"));
    CHECK(out.width == 96);

    // gradient defocus with spatially invariant kernels
    REQUIRE(t.run("degrade --image " + t.path("in.pfm") + " --out " + t.path("g.pfm") +
                  " --synthetic --defocus-gradient 50,-50 --spatially-invariant" +
                  " --spacing 16 --pitch 6 --oversample 4") == 0);
    CHECK(fs::exists(t.path("g.pfm.run")));
}

TEST_CASE("degrade: depth map input and missing header") {
    CliFixture t;
    Image img(64, 64, 1, 0.5);
    write_pfm(t.path("in.pfm"), img);
    DepthMap depth(64, 64, 2.0);
    save_depth_map(depth, t.path("depth.pfm"), {"linear_meters", 0.1, 1000.0, "zero_at_near"});
    REQUIRE(t.run("degrade --image " + t.path("in.pfm") + " --out " + t.path("o.pfm") +
                  " --synthetic --depth " + t.path("depth.pfm") +
                  " --spacing 32 --oversample 4") == 0);

    fs::remove(t.path("depth.pfm.dhdr"));
    CHECK(t.run("degrade --image " + t.path("in.pfm") + " --out " + t.path("o2.pfm") +
                " --synthetic --depth " + t.path("depth.pfm") + " --spacing 32") == 2);
    CHECK(!fs::exists(t.path("o2.pfm")));
}

TEST_CASE("degrade: requires a PSF source") {
    CliFixture t;
    Image img(32, 32, 1, 0.5);
    write_pfm(t.path("in.pfm"), img);
    CHECK(t.run("degrade --image " + t.path("in.pfm") + " --out " + t.path("o.pfm")) == 1);
}

TEST_CASE("error-report: csv sorted by spacing, s=1 exact, deterministic") {
    CliFixture t;
    Image img = testsupport::synthetic_scene(64, 64);
    write_pfm(t.path("s.pfm"), img);
    const std::string args = "error-report --image " + t.path("s.pfm") + " --out " +
                             t.path("r.csv") +
                             " --synthetic --spacings 16,1,8 --pitch 6 --oversample 4";
    REQUIRE(t.run(args) == 0);
    const std::string csv = file_bytes(t.path("r.csv"));
    std::istringstream lines(csv);
    std::string header, r1, r2, r3;
    std::getline(lines, header);
    std::getline(lines, r1);
    std::getline(lines, r2);
    std::getline(lines, r3);
    CHECK(header == "spacing,max_abs_err,mean_abs_err");
    CHECK(r1.rfind("1,", 0) == 0);
    CHECK(r2.rfind("8,", 0) == 0);
    CHECK(r3.rfind("16,", 0) == 0);
    const double s1_err = std::stod(r1.substr(2));
    CHECK(s1_err <= 1e-9);

    REQUIRE(t.run(args) == 0);
    CHECK(file_bytes(t.path("r.csv")) == csv);
}

TEST_CASE("config file: values apply, flags win, unknown keys fail") {
    CliFixture t;
    {
        std::ofstream cfg(t.path("conf.ini"));
        cfg << "[dataset-gen]\nplan = \"dz=0;r=0;phi=0\"\nout = \"" << t.path("fromcfg")
            << "\"\n";
    }
    REQUIRE(t.run("--config " + t.path("conf.ini") + " dataset-gen") == 0);
    CHECK(load_dataset(t.path("fromcfg")).entries.size() == 1);

    // flag overrides the file
    REQUIRE(t.run("--config " + t.path("conf.ini") + " dataset-gen --out " +
                  t.path("flagwins")) == 0);
    CHECK(fs::exists(t.path("flagwins.manifest")));

    {
        std::ofstream cfg(t.path("bad.ini"));
        cfg << "[dataset-gen]\nnot_a_key = 1\n";
    }
    CHECK(t.run("--config " + t.path("bad.ini") + " dataset-gen --out " + t.path("x")) == 2);
}

TEST_CASE("degrade: thread count does not change the output bytes") {
    CliFixture t;
    write_pfm(t.path("in.pfm"), testsupport::synthetic_scene(80, 80));
    const std::string base = "degrade --image " + t.path("in.pfm") +
                             " --synthetic --defocus-const 5 --spacing 16 --oversample 4";
    REQUIRE(t.run(base + " --threads 1 --out " + t.path("t1.pfm")) == 0);
    REQUIRE(t.run(base + " --threads 4 --out " + t.path("t4.pfm")) == 0);
    CHECK(file_bytes(t.path("t1.pfm")) == file_bytes(t.path("t4.pfm")));
}

TEST_CASE("png pipeline: degrade accepts and emits png") {
    CliFixture t;
    Image img = testsupport::checkerboard(64, 64, 8, 0.2, 0.8);
    write_png(t.path("in.png"), img, GammaMode::srgb, 8);
    REQUIRE(t.run("degrade --image " + t.path("in.png") + " --out " + t.path("out.png") +
                  " --synthetic --defocus-const 10 --spacing 16 --oversample 4") == 0);
    const Image out = read_png(t.path("out.png"));
    CHECK(out.width == 64);
}
