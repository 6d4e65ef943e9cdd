#include "docbin/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace docbin {

std::vector<int> patch_offsets(int extent, int size, int stride) {
    if (size < 1 || stride < 1) throw std::invalid_argument("patch size and stride must be >= 1");
    if (extent < size) throw std::invalid_argument("extent smaller than patch size; pad first");
    std::vector<int> out{0};
    int o = 0;
    while (o + size < extent) {
        o = std::min(o + stride, extent - size);
        out.push_back(o);
    }
    return out;
}

GrayImage pad_to_min(const GrayImage& img, int size, int* offset_x, int* offset_y) {
    const int w = std::max(img.width, size), h = std::max(img.height, size);
    const int ox = (w - img.width) / 2, oy = (h - img.height) / 2;
    if (offset_x) *offset_x = ox;
    if (offset_y) *offset_y = oy;
    if (w == img.width && h == img.height) return img;
    GrayImage out(w, h, 1.0f);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(x + ox, y + oy) = img.at(x, y);
    return out;
}

GrayImage crop(const GrayImage& img, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height) {
        throw std::out_of_range("crop window outside image");
    }
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y)
        std::copy_n(img.pixels.begin() + std::ptrdiff_t(y0 + y) * img.width + x0, w,
                    out.pixels.begin() + std::ptrdiff_t(y) * w);
    return out;
}

std::vector<ImagePatch> patchify(const GrayImage& img, int size, int stride) {
    const GrayImage padded = pad_to_min(img, size);
    std::vector<ImagePatch> out;
    for (int y : patch_offsets(padded.height, size, stride))
        for (int x : patch_offsets(padded.width, size, stride)) out.push_back({x, y, crop(padded, x, y, size, size)});
    return out;
}

GrayImage rotate_ccw(const GrayImage& img, int quarter_turns) {
    quarter_turns = ((quarter_turns % 4) + 4) % 4;
    GrayImage cur = img;
    for (int t = 0; t < quarter_turns; ++t) {
        GrayImage next(cur.height, cur.width);
        for (int y = 0; y < cur.height; ++y)
            for (int x = 0; x < cur.width; ++x) next.at(y, cur.width - 1 - x) = cur.at(x, y);
        cur = std::move(next);
    }
    return cur;
}

std::array<GrayImage, 4> augment_rotations(const GrayImage& patch) {
    return {patch, rotate_ccw(patch, 1), rotate_ccw(patch, 2), rotate_ccw(patch, 3)};
}

BinaryImage mask_from_clean(const GrayImage& clean) { return threshold_image(clean, 0.5f); }

const char* split_name(Split s) { return s == Split::Train ? "train" : "eval"; }

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "eval") return Split::Eval;
    throw std::invalid_argument("unknown split '" + s + "'");
}

std::vector<std::size_t> PatchStore::indices(Pool p, Split s) const {
    std::vector<std::size_t> out;
    const auto& v = pool(p);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i].split == s) out.push_back(i);
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> PatchStore::pairs(Split s) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < clean.size(); ++i)
        if (clean[i].split == s && clean[i].partner) out.emplace_back(i, *clean[i].partner);
    return out;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index over an empty range");
    const std::uint64_t range = std::uint64_t(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return std::size_t(r % range);
}

namespace {

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::size_t eval_count(std::size_t n, double fraction) { return std::size_t(std::llround(double(n) * fraction)); }

}  // namespace

void split(PatchStore& store, double eval_fraction, std::uint64_t seed) {
    if (eval_fraction < 0 || eval_fraction > 1) throw std::invalid_argument("eval_fraction must be in [0,1]");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(store.clean.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    const std::size_t n_eval = eval_count(order.size(), eval_fraction);
    for (std::size_t k = 0; k < order.size(); ++k) store.clean[order[k]].split = k < n_eval ? Split::Eval : Split::Train;

    std::size_t inherited_eval = 0;
    std::vector<std::size_t> free_degraded;
    for (std::size_t i = 0; i < store.degraded.size(); ++i) {
        auto& d = store.degraded[i];
        if (d.partner) {
            d.split = store.clean[*d.partner].split;
            inherited_eval += d.split == Split::Eval;
        } else {
            free_degraded.push_back(i);
        }
    }
    shuffle(free_degraded, rng);
    const std::size_t target = eval_count(store.degraded.size(), eval_fraction);
    const std::size_t need = target > inherited_eval ? std::min(target - inherited_eval, free_degraded.size()) : 0;
    for (std::size_t k = 0; k < free_degraded.size(); ++k)
        store.degraded[free_degraded[k]].split = k < need ? Split::Eval : Split::Train;
}

UnpairedSampler::UnpairedSampler(std::uint64_t seed) : seed_(seed) {
    // Separate seed sequences keep the two streams statistically independent.
    std::seed_seq clean_seq{std::uint32_t(seed), std::uint32_t(seed >> 32), 0xC1EA7u};
    std::seed_seq ref_seq{std::uint32_t(seed), std::uint32_t(seed >> 32), 0x9EFu};
    clean_rng_.seed(clean_seq);
    reference_rng_.seed(ref_seq);
}

std::size_t UnpairedSampler::next_clean(std::size_t pool_size) { return uniform_index(clean_rng_, pool_size); }

std::size_t UnpairedSampler::next_reference(std::size_t pool_size) { return uniform_index(reference_rng_, pool_size); }

nlohmann::json UnpairedSampler::state() const {
    std::ostringstream c, r;
    c << clean_rng_;
    r << reference_rng_;
    return {{"seed", seed_}, {"clean", c.str()}, {"reference", r.str()}};
}

void UnpairedSampler::restore(const nlohmann::json& state) {
    seed_ = state.at("seed").get<std::uint64_t>();
    std::istringstream c(state.at("clean").get<std::string>()), r(state.at("reference").get<std::string>());
    c >> clean_rng_;
    r >> reference_rng_;
    if (!c || !r) throw std::runtime_error("corrupt sampler state");
}

Tensor mask_tensor(const std::vector<const GrayImage*>& clean) {
    if (clean.empty()) throw ShapeError("mask_tensor: empty batch");
    const auto& first = *clean.front();
    std::vector<Scalar> data;
    data.reserve(clean.size() * first.size());
    for (const auto* img : clean) {
        if (img->width != first.width || img->height != first.height) throw ShapeError("mask_tensor: size mismatch");
        for (auto b : mask_from_clean(*img).bits) data.push_back(Scalar(b));
    }
    return Tensor::from_data({std::int64_t(clean.size()), 1, first.height, first.width}, std::move(data));
}

namespace {

Batch assemble(const PatchStore& store, std::vector<std::size_t> ci, std::vector<std::size_t> ri) {
    std::vector<const GrayImage*> c, r;
    for (auto i : ci) c.push_back(&store.clean[i].image);
    for (auto i : ri) r.push_back(&store.degraded[i].image);
    return Batch{images_to_tensor(c), images_to_tensor(r), mask_tensor(c), std::move(ci), std::move(ri)};
}

}  // namespace

Batch sample_batch(UnpairedSampler& sampler, const PatchStore& store, std::size_t batch_size, Split split) {
    const auto clean = store.indices(Pool::Clean, split);
    const auto degraded = store.indices(Pool::Degraded, split);
    if (clean.empty()) throw std::runtime_error(std::string("empty clean pool in ") + split_name(split) + " split");
    if (degraded.empty()) throw std::runtime_error(std::string("empty degraded pool in ") + split_name(split) + " split");
    std::vector<std::size_t> ci, ri;
    for (std::size_t b = 0; b < batch_size; ++b) {
        ci.push_back(clean[sampler.next_clean(clean.size())]);
        ri.push_back(degraded[sampler.next_reference(degraded.size())]);
    }
    return assemble(store, std::move(ci), std::move(ri));
}

Batch sample_paired_batch(UnpairedSampler& sampler, const PatchStore& store, std::size_t batch_size, Split split) {
    const auto pairs = store.pairs(split);
    if (pairs.empty()) throw std::runtime_error(std::string("no paired patches in ") + split_name(split) + " split");
    std::vector<std::size_t> ci, ri;
    for (std::size_t b = 0; b < batch_size; ++b) {
        const auto& [c, d] = pairs[sampler.next_clean(pairs.size())];
        ci.push_back(c);
        ri.push_back(d);
    }
    return assemble(store, std::move(ci), std::move(ri));
}

bool is_image_file(const std::string& path) {
    auto ext = fs::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return ext == ".pgm" || ext == ".pbm" || ext == ".ppm" || ext == ".pnm" || ext == ".png";
}

std::string match_stem(const std::string& path) {
    std::string stem = fs::path(path).stem().string();
    for (const char* suffix : {"_gt", "_GT", "-gt", "-GT"}) {
        const std::string s(suffix);
        if (stem.size() > s.size() && stem.compare(stem.size() - s.size(), s.size(), s) == 0) {
            return stem.substr(0, stem.size() - s.size());
        }
    }
    return stem;
}

namespace {

std::map<std::string, std::string> images_by_stem(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || !is_image_file(e.path().string())) continue;
        out.emplace(match_stem(e.path().string()), e.path().string());
    }
    return out;
}

}  // namespace

DatasetFiles scan_dataset(const std::string& dir) {
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw std::runtime_error("dataset directory not found: " + dir);
    auto gt = images_by_stem(root / "gt");
    auto degraded = images_by_stem(root / "degraded");
    DatasetFiles files;
    for (const auto& [stem, path] : gt) {
        auto it = degraded.find(stem);
        if (it != degraded.end()) {
            files.paired.emplace_back(path, it->second);
        } else {
            files.gt_only.push_back(path);
        }
    }
    for (const auto& [stem, path] : degraded)
        if (!gt.count(stem)) files.degraded_only.push_back(path);
    return files;
}

namespace {

void add_patches(std::vector<Patch>& pool, const GrayImage& img, const std::string& stem, const StoreOptions& opt,
                 std::vector<std::size_t>* added) {
    const int stride = opt.stride > 0 ? opt.stride : opt.patch_size;
    for (auto& p : patchify(img, opt.patch_size, stride)) {
        const int turns = opt.rotations ? 4 : 1;
        for (int t = 0; t < turns; ++t) {
            if (added) added->push_back(pool.size());
            pool.push_back(Patch{t == 0 ? p.image : rotate_ccw(p.image, t), PatchOrigin{stem, p.x, p.y, 90 * t},
                                 Split::Train, std::nullopt});
        }
    }
}

GrayImage load_clean(const std::string& path, BuildReport* report) {
    std::size_t uncertain = 0;
    auto gt = load_binary(path, &uncertain);
    if (uncertain && report) {
        report->warnings.push_back(path + ": " + std::to_string(uncertain) + " ground-truth pixels are not near-binary");
    }
    return to_gray(gt);
}

}  // namespace

PatchStore build_store(const std::vector<std::string>& dataset_dirs, const StoreOptions& opt, BuildReport* report) {
    if (opt.patch_size < 1) throw std::invalid_argument("patch_size must be >= 1");
    PatchStore store;
    store.patch_size = opt.patch_size;
    for (const auto& dir : dataset_dirs) {
        const auto files = scan_dataset(dir);
        const std::string prefix = fs::path(dir).filename().string() + "/";
        for (const auto& [gt_path, deg_path] : files.paired) {
            const auto clean = load_clean(gt_path, report);
            const auto degraded = load_image(deg_path);
            const std::string stem = prefix + match_stem(gt_path);
            if (clean.width != degraded.width || clean.height != degraded.height) {
                if (report) report->warnings.push_back(stem + ": ground truth and degraded sizes differ; using both unpaired");
                add_patches(store.clean, clean, stem, opt, nullptr);
                add_patches(store.degraded, degraded, stem, opt, nullptr);
                continue;
            }
            std::vector<std::size_t> ci, di;
            add_patches(store.clean, clean, stem, opt, &ci);
            add_patches(store.degraded, degraded, stem, opt, &di);
            for (std::size_t k = 0; k < ci.size(); ++k) {
                store.clean[ci[k]].partner = di[k];
                store.degraded[di[k]].partner = ci[k];
            }
        }
        for (const auto& p : files.gt_only) {
            if (report) report->unpaired.push_back(p);
            add_patches(store.clean, load_clean(p, report), prefix + match_stem(p), opt, nullptr);
        }
        for (const auto& p : files.degraded_only) {
            if (report) report->unpaired.push_back(p);
            add_patches(store.degraded, load_image(p), prefix + match_stem(p), opt, nullptr);
        }
    }
    if (store.clean.empty() && store.degraded.empty()) throw std::runtime_error("no images found in the dataset directories");
    split(store, opt.eval_fraction, opt.seed);
    return store;
}

namespace {

std::string patch_file(const char* pool, const PatchOrigin& o) {
    std::string stem = o.source;
    std::replace(stem.begin(), stem.end(), '/', '_');
    return std::string(pool) + "/" + stem + "_" + std::to_string(o.x) + "_" + std::to_string(o.y) + ".pgm";
}

}  // namespace

nlohmann::json write_store(const PatchStore& store, const std::string& dir, const nlohmann::json& extra) {
    const fs::path root(dir);
    fs::create_directories(root / "clean");
    fs::create_directories(root / "degraded");
    nlohmann::json entries = nlohmann::json::array();
    auto emit = [&](const std::vector<Patch>& pool, const char* name) {
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const auto& p = pool[i];
            const std::string file = patch_file(name, p.origin);
            if (p.origin.rotation == 0) save_image(p.image, (root / file).string(), ImageFormat::Pgm);
            nlohmann::json e{{"pool", name},          {"index", i},           {"file", file},
                             {"source", p.origin.source}, {"x", p.origin.x},      {"y", p.origin.y},
                             {"rotation", p.origin.rotation}, {"split", split_name(p.split)}};
            e["partner"] = p.partner ? nlohmann::json(*p.partner) : nlohmann::json(nullptr);
            entries.push_back(std::move(e));
        }
    };
    emit(store.clean, "clean");
    emit(store.degraded, "degraded");
    nlohmann::json manifest{{"patch_size", store.patch_size}, {"patches", entries}};
    if (!extra.is_null()) manifest["options"] = extra;
    std::ofstream((root / "manifest.json").string()) << manifest.dump(2) << '\n';
    return manifest;
}

PatchStore read_store(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream is((root / "manifest.json").string());
    if (!is) throw std::runtime_error("no manifest.json in " + dir);
    const auto manifest = nlohmann::json::parse(is);
    PatchStore store;
    store.patch_size = manifest.at("patch_size").get<int>();
    std::map<std::string, GrayImage> cache;
    for (const auto& e : manifest.at("patches")) {
        const auto file = e.at("file").get<std::string>();
        auto it = cache.find(file);
        if (it == cache.end()) it = cache.emplace(file, load_image((root / file).string())).first;
        Patch p;
        p.origin = PatchOrigin{e.at("source").get<std::string>(), e.at("x").get<int>(), e.at("y").get<int>(),
                               e.at("rotation").get<int>()};
        p.image = rotate_ccw(it->second, p.origin.rotation / 90);
        if (p.image.width != store.patch_size || p.image.height != store.patch_size) {
            throw std::runtime_error(file + ": patch size does not match manifest");
        }
        p.split = split_from_name(e.at("split").get<std::string>());
        if (!e.at("partner").is_null()) p.partner = e.at("partner").get<std::size_t>();
        auto& pool = e.at("pool").get<std::string>() == "clean" ? store.clean : store.degraded;
        if (e.at("index").get<std::size_t>() != pool.size()) throw std::runtime_error("manifest patch order is corrupt");
        pool.push_back(std::move(p));
    }
    return store;
}

}  // namespace docbin
