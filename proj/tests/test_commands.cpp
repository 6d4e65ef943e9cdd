#include "docbin/commands.hpp"

#include "docbin/baselines.hpp"
#include "doctest.h"
#include "synthetic.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace docbin;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("docbin_cmd_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// dataset layout <dir>/gt, <dir>/degraded with `pages` synthetic pages
void write_dataset(const std::string& dir, int pages, int size, std::uint64_t seed) {
    fs::create_directories(fs::path(dir) / "gt");
    fs::create_directories(fs::path(dir) / "degraded");
    for (int i = 0; i < pages; ++i) {
        auto clean = testing::synthetic_clean(size, size, seed + std::uint64_t(i));
        auto noisy = testing::synthetic_degraded(clean, seed + 100 + std::uint64_t(i));
        const auto stem = "page" + std::to_string(i);
        save_image(clean, (fs::path(dir) / "gt" / (stem + "_gt.png")).string());
        save_image(noisy, (fs::path(dir) / "degraded" / (stem + ".png")).string());
    }
}

TrainConfig toy_config() {
    TrainConfig c;
    c.patch_size = 32;
    c.batch_size = 2;
    c.base_channels = 4;
    c.extractor_channels = {4, 4, 8, 8, 8};
    c.steps_per_epoch = 2;
    c.epochs_stage1 = 1;
    c.epochs_stage2 = 1;
    c.epochs_joint = 1;
    c.seed = 3;
    return c;
}

int code_of(const std::function<void()>& fn) {
    std::ostringstream err;
    try {
        fn();
    } catch (...) {
        return report_error(err);
    }
    return kExitOk;
}

void set_threads(const char* v) {
    if (v) ::setenv("DOCBIN_THREADS", v, 1);
    else ::unsetenv("DOCBIN_THREADS");
}

}  // namespace

TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("thread cap and parallel_for") {
    set_threads(nullptr);
    CHECK(thread_cap() == 1);
    set_threads("4");
    CHECK(thread_cap() == 4);
    set_threads("zero");
    CHECK(thread_cap() == 1);
    set_threads("0");
    CHECK(thread_cap() == 1);

    set_threads("3");
    std::vector<int> out(100, 0);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = int(i * i); });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == int(i * i));
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                        if (i == 7) throw DataError("boom");
                    }),
                    DataError);
    set_threads(nullptr);
}

TEST_CASE("exit code mapping") {
    CHECK(code_of([] {}) == 0);
    CHECK(code_of([] { throw UsageError("x"); }) == 1);
    CHECK(code_of([] { throw std::invalid_argument("x"); }) == 1);
    CHECK(code_of([] { throw DataError("x"); }) == 2);
    CHECK(code_of([] { throw ImageError("x"); }) == 2);
    CHECK(code_of([] { throw NumericError("x"); }) == 3);
}

TEST_CASE("prepare writes a store and is idempotent") {
    TempDir dir("prepare");
    write_dataset(dir / "ds", 2, 512, 1);
    PrepareOptions o;
    o.dataset_dirs = {dir / "ds"};
    o.out_dir = dir / "store";
    o.rotations = false;
    o.eval_fraction = 0;
    std::ostringstream log;
    auto manifest = cmd_prepare(o, log);
    auto store = read_store(o.out_dir);
    CHECK(store.clean.size() == 8);
    CHECK(store.degraded.size() == 8);
    CHECK(store.pairs(Split::Train).size() == 8);
    const auto first = slurp(dir / "store/manifest.json");
    auto run = nlohmann::json::parse(slurp(dir / "store/run_manifest.json"));
    CHECK(run["command"] == "prepare");
    CHECK(run["dataset_hash"] == fnv1a_hex(first));
    CHECK(run["config_hash"].get<std::string>().size() == 16);

    cmd_prepare(o, log);
    CHECK(slurp(dir / "store/manifest.json") == first);
    CHECK(nlohmann::json::parse(slurp(dir / "store/run_manifest.json"))["config_hash"] == run["config_hash"]);

    fs::create_directories(dir / "empty/gt");
    fs::create_directories(dir / "empty/degraded");
    PrepareOptions e = o;
    e.dataset_dirs = {dir / "empty"};
    e.out_dir = dir / "store2";
    CHECK(code_of([&] { cmd_prepare(e, log); }) == kExitData);
}

TEST_CASE("train runs all stages, writes stage checkpoints and resumes") {
    TempDir dir("train");
    write_dataset(dir / "ds", 2, 64, 5);
    PrepareOptions p;
    p.dataset_dirs = {dir / "ds"};
    p.out_dir = dir / "store";
    p.patch_size = 32;
    p.eval_fraction = 0.25;
    std::ostringstream log;
    cmd_prepare(p, log);

    const auto cfg = toy_config();
    {
        std::ofstream f(dir / "config.json");
        f << to_json(cfg).dump(2);
    }
    TrainOptions o;
    o.config_path = dir / "config.json";
    o.store_dir = dir / "store";
    o.out_dir = dir / "run";
    o.checkpoint_every = 1;
    auto ran = cmd_train(o, log);
    CHECK(ran == std::vector<std::string>{"tanet", "binet", "joint"});
    for (const char* f : {"tanet.ckpt", "binet.ckpt", "joint.ckpt", "state.ckpt", "train_log.jsonl", "run_manifest.json"})
        CHECK(fs::exists(dir / ("run/" + std::string(f))));
    CHECK(slurp(dir / "run/joint.ckpt") == slurp(dir / "run/state.ckpt"));
    auto st = load_checkpoint(dir / "run/joint.ckpt");
    CHECK(st.completed == std::vector<std::string>{"tanet", "binet", "joint"});
    CHECK(st.global_step == 6);

    // a rerun finds everything done
    CHECK(cmd_train(o, log).empty());

    // stage by stage into a second directory gives the same bytes
    TrainOptions split = o;
    split.out_dir = dir / "run2";
    split.stage = "tanet";
    cmd_train(split, log);
    split.stage = "joint";
    CHECK(code_of([&] { cmd_train(split, log); }) == kExitUsage);  // binet not done yet
    split.stage = "all";
    CHECK(cmd_train(split, log) == std::vector<std::string>{"binet", "joint"});
    CHECK(slurp(dir / "run2/joint.ckpt") == slurp(dir / "run/joint.ckpt"));

    TrainOptions bad = o;
    bad.stage = "everything";
    CHECK(code_of([&] { cmd_train(bad, log); }) == kExitUsage);
    bad.stage = "baseline";
    CHECK(code_of([&] { cmd_train(bad, log); }) == kExitUsage);

    // a different config must not silently resume
    auto other = cfg;
    other.lr = 2e-4;
    TrainOptions changed = o;
    changed.config_path.clear();
    changed.config = other;
    CHECK(code_of([&] { cmd_train(changed, log); }) == kExitUsage);

    // baseline mode: one stage, one checkpoint
    auto unet = cfg;
    unet.mode = "unet_baseline";
    TrainOptions b = o;
    b.config_path.clear();
    b.config = unet;
    b.out_dir = dir / "unet";
    CHECK(cmd_train(b, log) == std::vector<std::string>{"baseline"});
    CHECK(fs::exists(dir / "unet/baseline.ckpt"));
    CHECK(!load_checkpoint(dir / "unet/baseline.ckpt").disc_f);
}

TEST_CASE("tile_predict stitching") {
    // pointwise network: output depends only on the pixel, so any tiling
    // must reproduce the direct map exactly
    auto pointwise = [](const Tensor& t) { return tanh(mul_scalar(add_scalar(t, 0.25), 3.0)); };
    auto img = testing::synthetic_degraded(testing::synthetic_clean(70, 45, 2), 9);
    auto direct = tile_predict(img, 80, 0, pointwise);  // one padded tile
    for (int overlap : {0, 8, 16}) {
        auto tiled = tile_predict(img, 32, overlap, pointwise);
        CHECK(tiled.width == 70);
        CHECK(tiled.height == 45);
        for (std::size_t i = 0; i < img.size(); ++i) CHECK(tiled.pixels[i] == doctest::Approx(direct.pixels[i]).epsilon(1e-6));
    }

    // a tile-dependent network: only overlap regions are averaged
    int calls = 0;
    auto constant = [&](const Tensor& t) { return Tensor::full(t.shape(), Scalar(++calls % 2 ? 1 : -1)); };
    GrayImage wide(48, 32, 1.0f);
    auto avg = tile_predict(wide, 32, 16, constant);
    CHECK(calls == 2);
    CHECK(avg.at(0, 0) == 1.0f);
    CHECK(avg.at(20, 5) == 0.0f);
    CHECK(avg.at(47, 5) == -1.0f);

    CHECK_THROWS(tile_predict(wide, 32, 32, constant));
}

TEST_CASE("binarize on one tile equals the library call") {
    TempDir dir("binarize");
    auto cfg = toy_config();
    cfg.mode = "unet_baseline";
    auto st = init_state(cfg);
    save_checkpoint(dir / "m.ckpt", st);

    auto img = testing::synthetic_degraded(testing::synthetic_clean(32, 32, 4), 5);
    save_image(img, dir / "in.pgm");
    BinarizeOptions o;
    o.checkpoint = dir / "m.ckpt";
    o.input = dir / "in.pgm";
    o.output = dir / "out.pbm";
    std::ostringstream log;
    cmd_binarize(o, log);

    const auto written = load_image(dir / "in.pgm");
    NoGradGuard guard;
    auto direct = binet_forward(*st.binet, image_to_tensor(written), Mode::Eval);
    BinaryImage expect(32, 32);
    for (std::size_t i = 0; i < expect.size(); ++i) expect.bits[i] = direct.data()[i] < 0;
    CHECK(load_binary(dir / "out.pbm") == expect);
    CHECK(slurp(dir / "out.pbm").substr(0, 2) == "P4");

    // larger image, directory mode
    fs::create_directories(dir / "pages");
    save_image(testing::synthetic_degraded(testing::synthetic_clean(75, 50, 6), 7), dir / "pages/a.png");
    BinarizeOptions d = o;
    d.input = dir / "pages";
    d.output = dir / "bin";
    cmd_binarize(d, log);
    auto big = load_binary(dir / "bin/a.pbm");
    CHECK(big.width == 75);
    CHECK(big.height == 50);

    BinarizeOptions bad = o;
    bad.tile = 16;
    CHECK(code_of([&] { cmd_binarize(bad, log); }) == kExitUsage);
    bad = o;
    bad.checkpoint = dir / "missing.ckpt";
    CHECK(code_of([&] { cmd_binarize(bad, log); }) == kExitData);
}

TEST_CASE("baseline command dispatches to the library") {
    TempDir dir("baseline");
    auto img = testing::synthetic_degraded(testing::synthetic_clean(40, 30, 1), 2);
    save_image(img, dir / "a.pgm");
    const auto loaded = load_image(dir / "a.pgm");
    std::ostringstream log;
    for (const char* m : {"otsu", "niblack", "sauvola", "bernsen"}) {
        BaselineOptions o;
        o.method = m;
        o.input = dir / "a.pgm";
        o.output = dir / (std::string(m) + ".pbm");
        cmd_baseline(o, log);
        CHECK(load_binary(o.output) == run_baseline(o, loaded));
    }
    BaselineOptions o;
    o.method = "sauvola";
    o.window = 9;
    o.k = 0.2;
    CHECK(run_baseline(o, loaded) == sauvola(loaded, {9, 0.2, 128.0 / 255.0}));
    o.method = "otsu";
    CHECK(run_baseline(o, loaded) == otsu(loaded).image);

    fs::create_directories(dir / "in");
    save_image(img, dir / "in/x.png");
    save_image(testing::synthetic_clean(20, 20, 3), dir / "in/y.pgm");
    set_threads("2");
    BaselineOptions d;
    d.method = "niblack";
    d.input = dir / "in";
    d.output = dir / "out";
    cmd_baseline(d, log);
    set_threads(nullptr);
    CHECK(fs::exists(dir / "out/x.pbm"));
    CHECK(fs::exists(dir / "out/y.pbm"));

    BaselineOptions bad;
    bad.method = "kittler";
    bad.input = dir / "a.pgm";
    bad.output = dir / "k.pbm";
    CHECK(code_of([&] { cmd_baseline(bad, log); }) == kExitUsage);
    bad.method = "niblack";
    bad.window = 4;
    CHECK(code_of([&] { cmd_baseline(bad, log); }) == kExitUsage);
}

TEST_CASE("evaluate") {
    TempDir dir("evaluate");
    fs::create_directories(dir / "gt");
    fs::create_directories(dir / "pred");
    std::vector<BinaryImage> gts;
    for (int i = 0; i < 3; ++i) {
        auto g = threshold_image(testing::synthetic_clean(40, 40, std::uint64_t(i)));
        gts.push_back(g);
        save_binary(g, dir / ("gt/img" + std::to_string(i) + "_gt.png"));
        save_binary(g, dir / ("pred/img" + std::to_string(i) + ".pbm"));
    }
    EvaluateOptions o;
    o.pred_dir = dir / "pred";
    o.gt_dir = dir / "gt";
    o.json_out = dir / "report.json";
    std::ostringstream out;
    auto r = cmd_evaluate(o, out);
    CHECK(r.images.size() == 3);
    CHECK(r.score.mean.f_measure == 100);
    CHECK(r.score.mean.drd == 0);
    CHECK(r.score.psnr_infinite == 3);
    auto header = out.str().substr(0, out.str().find('\n'));
    CHECK(header.find("F ") < header.find("F_ps"));
    CHECK(header.find("F_ps") < header.find("DRD"));
    CHECK(header.find("DRD") < header.find("PSNR"));
    auto j = nlohmann::json::parse(slurp(o.json_out));
    CHECK(j["mean"]["psnr"] == "inf");
    CHECK(j["images"][0]["image"] == "img0");

    // imperfect predictions: means are plain per-image averages
    std::vector<MetricsReport> expect;
    for (int i = 0; i < 3; ++i) {
        auto p = gts[std::size_t(i)];
        for (std::size_t k = 0; k < p.size(); k += std::size_t(7 + i)) p.bits[k] = !p.bits[k];
        save_binary(p, dir / ("pred/img" + std::to_string(i) + ".pbm"));
        expect.push_back(evaluate(p, gts[std::size_t(i)]));
    }
    set_threads("2");
    auto s = cmd_evaluate(o, out);
    set_threads(nullptr);
    CHECK(s.score.mean.f_measure == doctest::Approx((expect[0].f_measure + expect[1].f_measure + expect[2].f_measure) / 3));
    CHECK(s.score.mean.drd == doctest::Approx((expect[0].drd + expect[1].drd + expect[2].drd) / 3));
    CHECK(s.score.mean.psnr == doctest::Approx((expect[0].psnr + expect[1].psnr + expect[2].psnr) / 3));

    fs::remove(dir / "pred/img1.pbm");
    save_binary(gts[0], dir / "pred/extra.pbm");
    try {
        cmd_evaluate(o, out);
        FAIL("expected an error");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("no prediction for img1") != std::string::npos);
        CHECK(msg.find("no ground truth for extra") != std::string::npos);
    }
}

TEST_CASE("augment") {
    TempDir dir("augment");
    auto cfg = toy_config();
    auto st = init_state(cfg);
    // freshly initialised weights give an almost flat output; scale them up so
    // the reference visibly changes the rendering
    for (auto& nt : parameters(*st.tanet))
        if (nt.name.find("weight") != std::string::npos)
            for (auto& v : nt.tensor.mutable_data()) v *= 8;
    save_checkpoint(dir / "m.ckpt", st);
    fs::create_directories(dir / "clean");
    fs::create_directories(dir / "ref");
    save_image(testing::synthetic_clean(32, 32, 1), dir / "clean/c.png");
    for (int i = 0; i < 4; ++i)
        save_image(testing::synthetic_degraded(testing::synthetic_clean(32, 32, 10 + std::uint64_t(i)), 20 + std::uint64_t(i)),
                   dir / ("ref/r" + std::to_string(i) + ".png"));
    AugmentOptions o;
    o.checkpoint = dir / "m.ckpt";
    o.clean_dir = dir / "clean";
    o.reference_dir = dir / "ref";
    o.out_dir = dir / "out";
    o.count = 4;
    o.seed = 11;
    std::ostringstream log;
    auto prov = cmd_augment(o, log);
    REQUIRE(prov.size() == 4);
    std::set<std::string> outputs, refs;
    for (int i = 0; i < 4; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "out/aug_%04d.png", i);
        outputs.insert(slurp(dir / name));
        refs.insert(prov[std::size_t(i)]["reference"]["source"].get<std::string>());
        CHECK(prov[std::size_t(i)]["clean"]["source"] == "c.png");
    }
    CHECK(outputs.size() == refs.size());  // distinct references give distinct images

    AugmentOptions again = o;
    again.out_dir = dir / "out2";
    CHECK(cmd_augment(again, log) == prov);
    CHECK(slurp(dir / "out/aug_0003.png") == slurp(dir / "out2/aug_0003.png"));

    AugmentOptions missing = o;
    missing.checkpoint = dir / "nope.ckpt";
    CHECK(code_of([&] { cmd_augment(missing, log); }) == kExitData);
    auto unet = cfg;
    unet.mode = "unet_baseline";
    auto us = init_state(unet);
    save_checkpoint(dir / "u.ckpt", us);
    missing.checkpoint = dir / "u.ckpt";
    CHECK(code_of([&] { cmd_augment(missing, log); }) == kExitData);
}
