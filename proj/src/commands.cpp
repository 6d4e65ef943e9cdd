#include "docbin/commands.hpp"

#include "docbin/baselines.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace docbin {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

std::vector<std::string> image_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path().string())) out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

TrainConfig load_config(const TrainOptions& o) {
    if (o.config_path.empty()) {
        o.config.validate();
        return o.config;
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(o.config_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError("config " + o.config_path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::vector<Stage> stages_for(const std::string& name, TrainMode mode) {
    if (name == "all") {
        if (mode == TrainMode::Full) return {Stage::TANet, Stage::BiNet, Stage::Joint};
        return {Stage::Baseline};
    }
    Stage s;
    try {
        s = stage_from_name(name);
    } catch (const std::invalid_argument&) {
        throw UsageError("unknown stage '" + name + "' (all|tanet|binet|joint|baseline)");
    }
    if ((mode == TrainMode::Full) == (s == Stage::Baseline)) {
        throw UsageError("stage '" + name + "' does not apply to mode '" + mode_name(mode) + "'");
    }
    return {s};
}

void require_completed(const TrainState& st, Stage needed, Stage for_stage) {
    if (!st.is_completed(needed)) {
        throw UsageError(std::string("stage '") + stage_name(for_stage) + "' needs a completed '" +
                         stage_name(needed) + "' stage in the output directory");
    }
}

struct PatchRef {
    std::string source;
    int x = 0;
    int y = 0;
    GrayImage image;
};

std::vector<PatchRef> patch_pool(const std::string& dir, int size) {
    std::vector<PatchRef> pool;
    for (const auto& f : image_files(dir)) {
        const auto img = load_image(f);
        for (auto& p : patchify(img, size, size)) pool.push_back({fs::path(f).filename().string(), p.x, p.y, p.image});
    }
    if (pool.empty()) throw DataError("no images in " + dir);
    return pool;
}

bool is_nan(double v) { return std::isnan(v); }

}  // namespace

int report_error(std::ostream& err) {
    try {
        throw;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

int thread_cap() {
    const char* v = std::getenv("DOCBIN_THREADS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) return 1;
    return int(std::min<long>(n, 256));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(std::size_t(thread_cap()), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

nlohmann::json to_json(const RunManifest& m) {
    return {{"command", m.command},
            {"config_hash", m.config_hash},
            {"seed", m.seed},
            {"dataset_manifest", m.dataset_manifest},
            {"dataset_hash", m.dataset_hash},
            {"tool_version", m.tool_version},
            {"started", m.started},
            {"finished", m.finished},
            {"inputs", m.inputs}};
}

RunManifest begin_manifest(const std::string& command, const nlohmann::json& inputs, std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.inputs = inputs;
    m.seed = seed;
    m.config_hash = fnv1a_hex(inputs.dump());
    m.started = utc_now();
    return m;
}

void finish_manifest(RunManifest& m, const std::string& path) {
    m.finished = utc_now();
    const fs::path p = fs::is_directory(path) ? fs::path(path) / "run_manifest.json" : fs::path(path);
    write_json(p.string(), to_json(m));
}

// --- prepare ---------------------------------------------------------------

nlohmann::json cmd_prepare(const PrepareOptions& o, std::ostream& log) {
    if (o.dataset_dirs.empty()) throw UsageError("prepare needs at least one dataset directory");
    if (o.out_dir.empty()) throw UsageError("prepare needs an output directory");
    StoreOptions so;
    so.patch_size = o.patch_size;
    so.stride = o.stride;
    so.eval_fraction = o.eval_fraction;
    so.seed = o.seed;
    so.rotations = o.rotations;
    const nlohmann::json inputs{{"dataset_dirs", o.dataset_dirs}, {"patch_size", o.patch_size},
                                {"stride", o.stride},             {"eval_fraction", o.eval_fraction},
                                {"seed", o.seed},                 {"rotations", o.rotations}};
    auto run = begin_manifest("prepare", inputs, o.seed);

    BuildReport report;
    PatchStore store;
    try {
        store = build_store(o.dataset_dirs, so, &report);
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    for (const auto& w : report.warnings) log << "warning: " << w << '\n';
    for (const auto& u : report.unpaired) log << "unpaired: " << u << '\n';

    ensure_dir(o.out_dir);
    auto manifest = write_store(store, o.out_dir, {{"options", inputs}});
    log << "wrote " << store.clean.size() << " clean and " << store.degraded.size() << " degraded patches to "
        << o.out_dir << '\n';

    const auto manifest_path = (fs::path(o.out_dir) / "manifest.json").string();
    run.dataset_manifest = manifest_path;
    run.dataset_hash = fnv1a_hex(read_file(manifest_path));
    finish_manifest(run, (fs::path(o.out_dir) / "run_manifest.json").string());
    return manifest;
}

// --- train -----------------------------------------------------------------

std::vector<std::string> cmd_train(const TrainOptions& o, std::ostream& log) {
    if (o.store_dir.empty() || o.out_dir.empty()) throw UsageError("train needs a patch store and an output directory");
    if (o.checkpoint_every < 1) throw UsageError("checkpoint interval must be >= 1");
    const TrainConfig cfg = load_config(o);
    const auto stages = stages_for(o.stage, cfg.train_mode());

    PatchStore store;
    try {
        store = read_store(o.store_dir);
    } catch (const std::exception& e) {
        throw DataError(std::string("cannot read patch store: ") + e.what());
    }
    if (store.patch_size != cfg.patch_size) {
        throw UsageError("patch store has patch size " + std::to_string(store.patch_size) + " but config says " +
                         std::to_string(cfg.patch_size));
    }
    if (store.indices(Pool::Clean, Split::Train).empty()) throw DataError("patch store has no training patches");

    ensure_dir(o.out_dir);
    const fs::path out(o.out_dir);
    const auto state_path = (out / "state.ckpt").string();
    TrainState st;
    if (fs::exists(state_path)) {
        st = load_checkpoint(state_path);
        if (to_json(st.config) != to_json(cfg)) {
            throw UsageError(state_path + " was written with a different config; use a fresh output directory");
        }
        log << "resuming from " << state_path << " (stage " << st.stage << ", step " << st.stage_step << ")\n";
    } else {
        st = init_state(cfg);
    }

    const auto manifest_path = (fs::path(o.store_dir) / "manifest.json").string();
    const nlohmann::json inputs{{"config", to_json(cfg)}, {"stage", o.stage}, {"store", o.store_dir}};
    auto run = begin_manifest("train", inputs, cfg.seed);
    run.dataset_manifest = manifest_path;
    run.dataset_hash = fnv1a_hex(read_file(manifest_path));

    const auto fx = cfg.train_mode() == TrainMode::Full ? make_extractor(cfg) : FeatureExtractor({1});
    std::ofstream train_log((out / "train_log.jsonl").string(), std::ios::app);
    RunHooks hooks;
    hooks.log = &train_log;
    hooks.max_steps = o.checkpoint_every;
    hooks.snapshot_path = (out / "nan_snapshot.ckpt").string();

    std::vector<std::string> ran;
    for (Stage s : stages) {
        if (s == Stage::BiNet) require_completed(st, Stage::TANet, s);
        if (s == Stage::Joint) {
            require_completed(st, Stage::TANet, s);
            require_completed(st, Stage::BiNet, s);
        }
        const auto stage_path = (out / (std::string(stage_name(s)) + ".ckpt")).string();
        if (st.is_completed(s)) {
            log << "stage " << stage_name(s) << " already complete\n";
            if (!fs::exists(stage_path)) save_checkpoint(stage_path, st);
            continue;
        }
        log << "stage " << stage_name(s) << ": " << stage_steps(cfg, store, s) << " steps\n";
        while (!st.is_completed(s)) {
            run_stage(st, s, store, fx, hooks);
            save_checkpoint(state_path, st);
        }
        save_checkpoint(stage_path, st);
        log << "stage " << stage_name(s) << " done -> " << stage_path << '\n';
        ran.push_back(stage_name(s));
    }
    finish_manifest(run, (out / "run_manifest.json").string());
    return ran;
}

// --- augment ---------------------------------------------------------------

nlohmann::json cmd_augment(const AugmentOptions& o, std::ostream& log) {
    if (o.count < 1) throw UsageError("count must be >= 1");
    if (o.out_dir.empty()) throw UsageError("augment needs an output directory");
    auto st = load_checkpoint(o.checkpoint);
    if (!st.tanet) throw DataError(o.checkpoint + " holds no TANet (trained in a baseline mode?)");
    const int size = st.config.patch_size;
    const auto clean = patch_pool(o.clean_dir, size);
    const auto refs = patch_pool(o.reference_dir, size);

    const nlohmann::json inputs{{"checkpoint", o.checkpoint},       {"checkpoint_hash", fnv1a_hex(read_file(o.checkpoint))},
                                {"clean_dir", o.clean_dir},         {"reference_dir", o.reference_dir},
                                {"count", o.count},                 {"seed", o.seed}};
    auto run = begin_manifest("augment", inputs, o.seed);
    ensure_dir(o.out_dir);

    UnpairedSampler sampler(o.seed);
    nlohmann::json provenance = nlohmann::json::array();
    NoGradGuard guard;
    for (int i = 0; i < o.count; ++i) {
        const auto& c = clean[sampler.next_clean(clean.size())];
        const auto& r = refs[sampler.next_reference(refs.size())];
        auto g = tanet_forward(*st.tanet, image_to_tensor(c.image), image_to_tensor(r.image), Mode::Eval);
        char name[32];
        std::snprintf(name, sizeof name, "aug_%04d.png", i);
        save_image(tensor_to_image(g), (fs::path(o.out_dir) / name).string());
        provenance.push_back({{"output", name},
                              {"clean", {{"source", c.source}, {"x", c.x}, {"y", c.y}}},
                              {"reference", {{"source", r.source}, {"x", r.x}, {"y", r.y}}}});
    }
    write_json((fs::path(o.out_dir) / "provenance.json").string(), provenance);
    log << "wrote " << o.count << " images to " << o.out_dir << '\n';
    finish_manifest(run, (fs::path(o.out_dir) / "run_manifest.json").string());
    return provenance;
}

// --- binarize --------------------------------------------------------------

GrayImage tile_predict(const GrayImage& img, int tile, int overlap, const TileNet& net) {
    if (img.width < 1 || img.height < 1) throw std::invalid_argument("tile_predict: empty image");
    if (tile < 1) throw std::invalid_argument("tile must be >= 1");
    if (overlap < 0 || overlap >= tile) throw std::invalid_argument("overlap must be in [0, tile)");
    int ox = 0, oy = 0;
    const GrayImage padded = pad_to_min(img, tile, &ox, &oy);
    const int stride = tile - overlap;
    std::vector<double> sum(padded.size(), 0.0);
    std::vector<int> hits(padded.size(), 0);
    for (int y0 : patch_offsets(padded.height, tile, stride))
        for (int x0 : patch_offsets(padded.width, tile, stride)) {
            const Tensor out = net(image_to_tensor(crop(padded, x0, y0, tile, tile)));
            if (out.numel() != std::int64_t(tile) * tile) throw ShapeError("tile network changed the tile size");
            const auto v = out.data();
            for (int y = 0; y < tile; ++y)
                for (int x = 0; x < tile; ++x) {
                    const auto i = std::size_t(y0 + y) * std::size_t(padded.width) + std::size_t(x0 + x);
                    sum[i] += double(v[std::size_t(y * tile + x)]);
                    ++hits[i];
                }
        }
    GrayImage result(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const auto i = std::size_t(y + oy) * std::size_t(padded.width) + std::size_t(x + ox);
            result.at(x, y) = float(sum[i] / hits[i]);
        }
    return result;
}

BinaryImage binarize_image(BiNetParams& binet, const GrayImage& img, int tile, int overlap, double threshold) {
    NoGradGuard guard;
    const auto avg = tile_predict(img, tile, overlap, [&](const Tensor& t) { return binet_forward(binet, t, Mode::Eval); });
    BinaryImage out(avg.width, avg.height);
    for (std::size_t i = 0; i < avg.size(); ++i) out.bits[i] = double(avg.pixels[i]) < threshold;
    return out;
}

void cmd_binarize(const BinarizeOptions& o, std::ostream& log) {
    if (o.input.empty() || o.output.empty()) throw UsageError("binarize needs an input and an output");
    auto st = load_checkpoint(o.checkpoint);
    if (!st.binet) throw DataError(o.checkpoint + " holds no BiNet");
    const int size = st.config.patch_size;
    const int tile = o.tile == 0 ? size : o.tile;
    if (tile != size) {
        throw UsageError("tile must equal the network patch size " + std::to_string(size) + " (got " +
                         std::to_string(tile) + ")");
    }
    const int overlap = o.overlap < 0 ? tile / 4 : o.overlap;
    if (overlap >= tile) throw UsageError("overlap must be smaller than the tile");

    const nlohmann::json inputs{{"checkpoint", o.checkpoint}, {"checkpoint_hash", fnv1a_hex(read_file(o.checkpoint))},
                                {"input", o.input},           {"tile", tile},
                                {"overlap", overlap},         {"threshold", o.threshold}};
    auto run = begin_manifest("binarize", inputs, st.config.seed);

    std::vector<std::pair<std::string, std::string>> jobs;
    fs::path manifest_dir;
    if (fs::is_directory(o.input)) {
        ensure_dir(o.output);
        for (const auto& f : image_files(o.input))
            jobs.emplace_back(f, (fs::path(o.output) / (fs::path(f).stem().string() + ".pbm")).string());
        manifest_dir = o.output;
    } else {
        jobs.emplace_back(o.input, o.output);
        manifest_dir = fs::path(o.output).parent_path();
        if (manifest_dir.empty()) manifest_dir = ".";
    }
    for (const auto& [in, out] : jobs) {
        save_binary(binarize_image(*st.binet, load_image(in), tile, overlap, o.threshold), out);
        log << in << " -> " << out << '\n';
    }
    finish_manifest(run, (manifest_dir / "run_manifest.json").string());
}

// --- baseline --------------------------------------------------------------

BinaryImage run_baseline(const BaselineOptions& o, const GrayImage& img) {
    if (o.method == "otsu") return otsu(img).image;
    if (o.method == "niblack") {
        NiblackParams p;
        if (o.window) p.window = o.window;
        if (!is_nan(o.k)) p.k = o.k;
        return niblack(img, p);
    }
    if (o.method == "sauvola") {
        SauvolaParams p;
        if (o.window) p.window = o.window;
        if (!is_nan(o.k)) p.k = o.k;
        if (!is_nan(o.r)) p.dynamic_range = o.r;
        return sauvola(img, p);
    }
    if (o.method == "bernsen") {
        BernsenParams p;
        if (o.window) p.window = o.window;
        if (!is_nan(o.contrast)) p.contrast_min = o.contrast;
        return bernsen(img, p);
    }
    throw UsageError("unknown baseline method '" + o.method + "' (otsu|niblack|sauvola|bernsen)");
}

void cmd_baseline(const BaselineOptions& o, std::ostream& log) {
    if (o.input.empty() || o.output.empty()) throw UsageError("baseline needs an input and an output");
    run_baseline(o, GrayImage(1, 1));  // validates method and parameters before any I/O
    const nlohmann::json inputs{{"method", o.method},
                                {"input", o.input},
                                {"window", o.window},
                                {"k", is_nan(o.k) ? nlohmann::json() : nlohmann::json(o.k)},
                                {"r", is_nan(o.r) ? nlohmann::json() : nlohmann::json(o.r)},
                                {"contrast", is_nan(o.contrast) ? nlohmann::json() : nlohmann::json(o.contrast)}};
    auto run = begin_manifest("baseline", inputs);

    std::vector<std::pair<std::string, std::string>> jobs;
    fs::path manifest_dir;
    if (fs::is_directory(o.input)) {
        ensure_dir(o.output);
        for (const auto& f : image_files(o.input))
            jobs.emplace_back(f, (fs::path(o.output) / (fs::path(f).stem().string() + ".pbm")).string());
        manifest_dir = o.output;
    } else {
        jobs.emplace_back(o.input, o.output);
        manifest_dir = fs::path(o.output).parent_path();
        if (manifest_dir.empty()) manifest_dir = ".";
    }
    parallel_for(jobs.size(), [&](std::size_t i) { save_binary(run_baseline(o, load_image(jobs[i].first)), jobs[i].second); });
    for (const auto& [in, out] : jobs) log << in << " -> " << out << '\n';
    finish_manifest(run, (manifest_dir / "run_manifest.json").string());
}

// --- evaluate --------------------------------------------------------------

nlohmann::json to_json(const EvaluationResult& r) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& [stem, m] : r.images) {
        auto j = to_json(m);
        j["image"] = stem;
        images.push_back(j);
    }
    return {{"images", images},
            {"mean", to_json(r.score.mean)},
            {"count", r.score.images},
            {"psnr_infinite", r.score.psnr_infinite}};
}

std::string format_table(const EvaluationResult& r) {
    std::size_t width = 5;
    for (const auto& e : r.images) width = std::max(width, e.first.size());
    std::ostringstream out;
    auto num = [](double v) {
        std::ostringstream s;
        if (std::isinf(v)) s << "inf";
        else s << std::fixed << std::setprecision(2) << v;
        return s.str();
    };
    auto row = [&](const std::string& name, const MetricsReport& m) {
        out << std::left << std::setw(int(width)) << name << std::right << std::setw(9) << num(m.f_measure)
            << std::setw(9) << num(m.f_ps) << std::setw(9) << num(m.drd) << std::setw(9) << num(m.psnr) << '\n';
    };
    out << std::left << std::setw(int(width)) << "image" << std::right << std::setw(9) << "F" << std::setw(9) << "F_ps"
        << std::setw(9) << "DRD" << std::setw(9) << "PSNR" << '\n';
    for (const auto& [stem, m] : r.images) row(stem, m);
    row("mean", r.score.mean);
    return out.str();
}

EvaluationResult cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
    if (o.pred_dir.empty() || o.gt_dir.empty()) throw UsageError("evaluate needs a prediction and a ground-truth directory");
    std::map<std::string, std::string> preds, gts;
    for (const auto& f : image_files(o.pred_dir)) preds[match_stem(f)] = f;
    for (const auto& f : image_files(o.gt_dir)) gts[match_stem(f)] = f;
    if (gts.empty()) throw DataError("no ground-truth images in " + o.gt_dir);

    std::vector<std::string> missing;
    for (const auto& [stem, _] : gts)
        if (!preds.count(stem)) missing.push_back("no prediction for " + stem);
    for (const auto& [stem, _] : preds)
        if (!gts.count(stem)) missing.push_back("no ground truth for " + stem);
    if (!missing.empty()) {
        std::string msg = "unmatched images:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw DataError(msg);
    }

    std::vector<std::string> stems;
    for (const auto& [stem, _] : gts) stems.push_back(stem);
    std::vector<MetricsReport> reports(stems.size());
    parallel_for(stems.size(), [&](std::size_t i) {
        const auto gt = load_binary(gts[stems[i]]);
        const auto pred = load_binary(preds[stems[i]]);
        if (gt.width != pred.width || gt.height != pred.height) {
            throw DataError("size mismatch for " + stems[i] + ": prediction " + std::to_string(pred.width) + "x" +
                            std::to_string(pred.height) + ", ground truth " + std::to_string(gt.width) + "x" +
                            std::to_string(gt.height));
        }
        reports[i] = evaluate(pred, gt);
    });

    EvaluationResult r;
    for (std::size_t i = 0; i < stems.size(); ++i) r.images.emplace_back(stems[i], reports[i]);
    r.score = aggregate(reports);
    out << format_table(r);
    if (!o.json_out.empty()) write_json(o.json_out, to_json(r));
    return r;
}

}  // namespace docbin
