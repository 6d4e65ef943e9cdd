#pragma once

// Patch extraction, rotation augmentation, train/eval split and the unpaired
// (clean, reference) sampler.

#include "docbin/image.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace docbin {

/// Grid anchors along one axis: 0, stride, 2*stride, ... with the last one
/// pinned to extent - size so the whole extent is covered.
std::vector<int> patch_offsets(int extent, int size, int stride);

/// Pads with background (1.0) symmetrically up to at least size x size.
/// `offset_x/offset_y` receive where the original image sits in the result.
GrayImage pad_to_min(const GrayImage& img, int size, int* offset_x = nullptr, int* offset_y = nullptr);

GrayImage crop(const GrayImage& img, int x, int y, int w, int h);

struct ImagePatch {
    int x = 0;
    int y = 0;
    GrayImage image;
};

/// Regular grid of size x size crops. Images smaller than `size` are padded
/// first; offsets then refer to the padded image.
std::vector<ImagePatch> patchify(const GrayImage& img, int size, int stride);

/// Quarter turns counter-clockwise: pixel (x, y) of a W x H image lands at
/// (y, W - 1 - x). Top-left goes to bottom-left.
GrayImage rotate_ccw(const GrayImage& img, int quarter_turns = 1);

/// {patch, rot90, rot180, rot270}.
std::array<GrayImage, 4> augment_rotations(const GrayImage& patch);

/// Text mask: 1 where the clean image is ink (< 0.5).
BinaryImage mask_from_clean(const GrayImage& clean);

enum class Split { Train, Eval };
enum class Pool { Clean, Degraded };

const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct PatchOrigin {
    std::string source;  ///< source image stem
    int x = 0;
    int y = 0;
    int rotation = 0;  ///< degrees counter-clockwise: 0, 90, 180, 270
};

struct Patch {
    GrayImage image;
    PatchOrigin origin;
    Split split = Split::Train;
    /// Index of the pixel-aligned counterpart in the other pool, if any.
    std::optional<std::size_t> partner;
};

struct PatchStore {
    int patch_size = 256;
    std::vector<Patch> clean;     ///< binarized ground-truth patches
    std::vector<Patch> degraded;  ///< real degraded document patches

    const std::vector<Patch>& pool(Pool p) const { return p == Pool::Clean ? clean : degraded; }
    std::vector<std::size_t> indices(Pool p, Split s) const;
    /// (clean index, degraded index) of pixel-aligned pairs in split `s`.
    std::vector<std::pair<std::size_t, std::size_t>> pairs(Split s) const;
};

/// Deterministic Fisher-Yates split. Clean patches are split first; a paired
/// degraded patch follows its partner; unpaired degraded patches are split so
/// each pool's eval share is round(eval_fraction * size) up to one patch.
void split(PatchStore& store, double eval_fraction, std::uint64_t seed);

/// Unbiased integer in [0, n).
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

/// Two independent index streams over the clean and degraded pools.
class UnpairedSampler {
public:
    explicit UnpairedSampler(std::uint64_t seed = 0);

    std::size_t next_clean(std::size_t pool_size);
    std::size_t next_reference(std::size_t pool_size);

    std::uint64_t seed() const { return seed_; }
    nlohmann::json state() const;
    void restore(const nlohmann::json& state);

private:
    std::uint64_t seed_;
    std::mt19937_64 clean_rng_;
    std::mt19937_64 reference_rng_;
};

struct Batch {
    Tensor clean;      ///< [B,1,s,s] in [-1,1]
    Tensor reference;  ///< [B,1,s,s] in [-1,1]
    Tensor mask;       ///< [B,1,s,s] in {0,1}, derived from clean
    std::vector<std::size_t> clean_index;
    std::vector<std::size_t> reference_index;
};

/// Unpaired draw: clean from the clean pool, reference from the degraded pool.
Batch sample_batch(UnpairedSampler& sampler, const PatchStore& store, std::size_t batch_size,
                   Split split = Split::Train);

/// Real pairs: `reference` holds the degraded partner of each clean patch.
Batch sample_paired_batch(UnpairedSampler& sampler, const PatchStore& store, std::size_t batch_size,
                          Split split = Split::Train);

Tensor mask_tensor(const std::vector<const GrayImage*>& clean);

// --- dataset directories -------------------------------------------------

struct DatasetFiles {
    std::vector<std::pair<std::string, std::string>> paired;  ///< (gt, degraded)
    std::vector<std::string> gt_only;
    std::vector<std::string> degraded_only;
};

/// Scans <dir>/gt and <dir>/degraded, matching by filename stem. A trailing
/// "_gt" on a ground-truth stem is ignored for matching.
DatasetFiles scan_dataset(const std::string& dir);

/// Stem used for matching prediction/ground-truth/degraded files.
std::string match_stem(const std::string& path);
bool is_image_file(const std::string& path);

struct StoreOptions {
    int patch_size = 256;
    int stride = 0;  ///< 0 -> patch_size
    bool rotations = true;
    double eval_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct BuildReport {
    std::vector<std::string> warnings;
    std::vector<std::string> unpaired;
};

PatchStore build_store(const std::vector<std::string>& dataset_dirs, const StoreOptions& opt,
                       BuildReport* report = nullptr);

/// Writes rotation-0 patches as PGM files plus manifest.json. The manifest
/// lists every patch (including rotations) with provenance and split.
nlohmann::json write_store(const PatchStore& store, const std::string& dir, const nlohmann::json& extra = {});
PatchStore read_store(const std::string& dir);

}  // namespace docbin
