#pragma once

// Command implementations behind the `docbin` executable. Each command takes
// a plain options struct so tests can drive it without a process boundary.

#include "docbin/image.hpp"
#include "docbin/metrics.hpp"
#include "docbin/trainer.hpp"

#include "json.hpp"

#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace docbin {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Maps an in-flight exception to an exit code and writes a one-line message.
int report_error(std::ostream& err);

/// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Worker count from DOCBIN_THREADS (default 1, minimum 1).
int thread_cap();

/// Runs fn(i) for i in [0, n) on up to thread_cap() threads. Each index is
/// independent, so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct RunManifest {
    std::string command;
    std::string config_hash;  ///< FNV-1a of the canonical inputs JSON
    std::uint64_t seed = 0;
    std::string dataset_manifest;  ///< path of the patch-store manifest, if any
    std::string dataset_hash;
    std::string tool_version = kToolVersion;
    std::string started;  ///< UTC, ISO 8601
    std::string finished;
    nlohmann::json inputs;
};

nlohmann::json to_json(const RunManifest& m);
/// Fills command, inputs, config_hash and `started`.
RunManifest begin_manifest(const std::string& command, const nlohmann::json& inputs, std::uint64_t seed = 0);
/// Stamps `finished` and writes run_manifest.json (or `path` if it names a file).
void finish_manifest(RunManifest& m, const std::string& path);

// --- prepare ---------------------------------------------------------------

struct PrepareOptions {
    std::vector<std::string> dataset_dirs;
    std::string out_dir;
    int patch_size = 256;
    int stride = 0;
    double eval_fraction = 0.1;
    std::uint64_t seed = 0;
    bool rotations = true;
};

/// Builds and writes the patch store. Returns the store manifest.
nlohmann::json cmd_prepare(const PrepareOptions& o, std::ostream& log);

// --- train -----------------------------------------------------------------

struct TrainOptions {
    std::string config_path;  ///< JSON config; empty -> `config`
    TrainConfig config;
    std::string store_dir;
    std::string out_dir;
    std::string stage = "all";  ///< all|tanet|binet|joint|baseline
    std::int64_t checkpoint_every = 100;  ///< steps between resume checkpoints
};

/// Stages run in order; state.ckpt in out_dir makes a rerun resume. Each
/// finished stage also leaves <stage>.ckpt. Returns the stages run.
std::vector<std::string> cmd_train(const TrainOptions& o, std::ostream& log);

// --- augment ---------------------------------------------------------------

struct AugmentOptions {
    std::string checkpoint;
    std::string clean_dir;
    std::string reference_dir;
    std::string out_dir;
    int count = 1;
    std::uint64_t seed = 0;
};

/// Writes aug_NNNN.png files plus provenance.json. Returns the provenance.
nlohmann::json cmd_augment(const AugmentOptions& o, std::ostream& log);

// --- binarize --------------------------------------------------------------

/// Network map on a [1,1,t,t] tensor in [-1,1].
using TileNet = std::function<Tensor(const Tensor&)>;

/// Runs `net` over overlapping `tile` x `tile` windows (stride tile - overlap)
/// of the image padded to at least one tile, averages the overlapping
/// outputs per pixel and crops back. Values stay in the network's range.
GrayImage tile_predict(const GrayImage& img, int tile, int overlap, const TileNet& net);

struct BinarizeOptions {
    std::string checkpoint;
    std::string input;
    std::string output;
    int tile = 0;         ///< 0 -> patch size of the checkpoint
    int overlap = -1;     ///< -1 -> tile / 4
    double threshold = 0;  ///< in tanh space; ink where output < threshold
};

BinaryImage binarize_image(BiNetParams& binet, const GrayImage& img, int tile, int overlap, double threshold);
/// Input may be a file or a directory (then output is a directory).
void cmd_binarize(const BinarizeOptions& o, std::ostream& log);

// --- baseline --------------------------------------------------------------

struct BaselineOptions {
    std::string method;  ///< otsu|niblack|sauvola|bernsen
    std::string input;   ///< image file or directory
    std::string output;  ///< file or directory, matching `input`
    int window = 0;      ///< 0 -> method default
    double k = std::numeric_limits<double>::quiet_NaN();  ///< NaN -> method default
    double r = std::numeric_limits<double>::quiet_NaN();
    double contrast = std::numeric_limits<double>::quiet_NaN();
};

BinaryImage run_baseline(const BaselineOptions& o, const GrayImage& img);
void cmd_baseline(const BaselineOptions& o, std::ostream& log);

// --- evaluate --------------------------------------------------------------

struct EvaluateOptions {
    std::string pred_dir;
    std::string gt_dir;
    std::string json_out;  ///< optional
};

struct EvaluationResult {
    std::vector<std::pair<std::string, MetricsReport>> images;  ///< by stem, sorted
    DatasetScore score;
};

nlohmann::json to_json(const EvaluationResult& r);
/// Text table in the order F, F_ps, DRD, PSNR.
std::string format_table(const EvaluationResult& r);
EvaluationResult cmd_evaluate(const EvaluateOptions& o, std::ostream& out);

}  // namespace docbin
