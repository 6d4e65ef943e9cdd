#pragma once

// Stage-wise adversarial training: TANet with its discriminator, BiNet on
// TANet outputs, then joint fine-tuning; plus the U-Net and pix2pix baselines
// trained on real pairs. All state needed to resume lives in TrainState.

#include "docbin/checkpoint.hpp"
#include "docbin/data.hpp"
#include "docbin/losses.hpp"
#include "docbin/networks.hpp"
#include "docbin/optim.hpp"

#include "json.hpp"

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace docbin {

enum class TrainMode { Full, UnetBaseline, Pix2pixBaseline };
enum class Stage { TANet, BiNet, Joint, Baseline };

const char* mode_name(TrainMode m);
TrainMode mode_from_name(const std::string& s);
const char* stage_name(Stage s);
Stage stage_from_name(const std::string& s);

struct TrainConfig {
    int patch_size = 256;
    int batch_size = 8;
    std::uint64_t seed = 0;
    double lr = 1e-4;
    double lambda_s = 0.5;
    double lambda_c = 10.0;
    double lambda_l2 = 100.0;
    int epochs_stage1 = 10;
    int epochs_stage2 = 10;
    int epochs_joint = 30;
    std::string mode = "full";
    // Not fixed by the method description; exposed so small runs stay cheap.
    int base_channels = 64;
    std::vector<int> extractor_channels = FeatureExtractor::default_channels();
    std::string extractor_weights;  ///< optional tensor file; overrides extractor_channels
    int steps_per_epoch = 0;        ///< 0: one pass over the augmented train patches
    double beta1 = 0.5;
    double beta2 = 0.999;

    void validate() const;
    TrainMode train_mode() const { return mode_from_name(mode); }
    NetConfig net() const { return NetConfig{patch_size, base_channels}; }
    LossWeights weights() const { return LossWeights{lambda_s, lambda_c, lambda_l2}; }
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are an error.
TrainConfig config_from_json(const nlohmann::json& j);

FeatureExtractor make_extractor(const TrainConfig& c);

struct TrainState {
    TrainConfig config;
    std::optional<TANetParams> tanet;
    std::optional<DiscParams> disc_g;
    std::optional<BiNetParams> binet;
    std::optional<DiscParams> disc_f;
    AdamState adam_tanet, adam_disc_g, adam_binet, adam_disc_f;
    UnpairedSampler sampler;
    std::vector<std::string> completed;  ///< finished stages, in order
    std::string stage = "init";          ///< stage in progress or last finished
    std::int64_t stage_step = 0;         ///< steps done in `stage`
    std::int64_t global_step = 0;

    bool is_completed(Stage s) const;
};

/// Fresh parameters for the networks `config.mode` needs. The U-Net baseline
/// has no discriminator at all.
TrainState init_state(const TrainConfig& config);

/// Steps per epoch for a stage given the store's train split.
std::int64_t steps_per_epoch(const TrainConfig& c, const PatchStore& store, Stage s);
std::int64_t stage_steps(const TrainConfig& c, const PatchStore& store, Stage s);

struct StepReport {
    Stage stage = Stage::TANet;
    std::int64_t step = 0;  ///< 1-based step within the stage
    std::map<std::string, double> losses;
    double d_min = 1.0;  ///< range of discriminator outputs seen this step
    double d_max = 0.0;
    bool empty_mask = false;
};

nlohmann::json to_json(const StepReport& r);

struct RunHooks {
    std::ostream* log = nullptr;  ///< JSON lines, one per step
    std::int64_t max_steps = -1;  ///< stop early after this many steps (this call)
    std::function<void(const TrainState&, const StepReport&)> on_step;
    std::string snapshot_path;  ///< checkpoint written before a NaN abort
};

/// Single optimization steps. Each samples one batch from the train split.
StepReport stage1_step(TrainState& st, const PatchStore& store, const FeatureExtractor& fx);
StepReport stage2_step(TrainState& st, const PatchStore& store);
StepReport joint_step(TrainState& st, const PatchStore& store, const FeatureExtractor& fx);
StepReport baseline_step(TrainState& st, const PatchStore& store);

/// Runs (or resumes) a stage until its step budget is spent. Marks it
/// completed at the end.
void run_stage(TrainState& st, Stage s, const PatchStore& store, const FeatureExtractor& fx,
               const RunHooks& hooks = {});

void train_stage1_tanet(TrainState& st, const PatchStore& store, const FeatureExtractor& fx, const RunHooks& hooks = {});
void train_stage2_binet(TrainState& st, const PatchStore& store, const RunHooks& hooks = {});
void train_joint(TrainState& st, const PatchStore& store, const FeatureExtractor& fx, const RunHooks& hooks = {});
void train_baseline(TrainState& st, const PatchStore& store, const RunHooks& hooks = {});

TensorFile state_to_file(TrainState& st);
TrainState state_from_file(const TensorFile& f);
void save_checkpoint(const std::string& path, TrainState& st);
TrainState load_checkpoint(const std::string& path);

}  // namespace docbin
