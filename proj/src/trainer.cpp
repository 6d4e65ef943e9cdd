#include "docbin/trainer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace docbin {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t salt) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), salt};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (std::uint64_t(out[0]) << 32) | out[1];
}

AdamState make_adam(const TrainConfig& c) {
    AdamState a;
    a.lr = c.lr;
    a.beta1 = c.beta1;
    a.beta2 = c.beta2;
    return a;
}

void track_range(StepReport& r, const Tensor& d) {
    for (auto v : d.data()) {
        r.d_min = std::min(r.d_min, double(v));
        r.d_max = std::max(r.d_max, double(v));
    }
}

double checked(const Tensor& loss, const char* what) {
    check_finite(loss, what);
    return double(loss.item());
}

template <class Params>
void optimize(Params& p, AdamState& adam, const Tensor& loss) {
    auto params = tensors_of(parameters(p));
    zero_grads(params);
    loss.backward();
    adam_step(params, adam);
    zero_grads(params);
}

// One discriminator update on (real, fake); fake must already be detached.
void update_discriminator(DiscParams& d, AdamState& adam, const Tensor& real, const Tensor& fake, StepReport& r,
                          const char* key) {
    auto d_real = disc_forward(d, real, Mode::Train);
    auto d_fake = disc_forward(d, fake, Mode::Train);
    track_range(r, d_real);
    track_range(r, d_fake);
    auto loss = gan_loss_discriminator(d_real, d_fake);
    r.losses[key] = checked(loss, key);
    optimize(d, adam, loss);
}

// Generator adversarial term through a frozen discriminator.
Tensor adversarial_term(DiscParams& d, const Tensor& generated, StepReport& r) {
    auto out = disc_forward(d, generated, Mode::Train);
    track_range(r, out);
    return gan_loss_generator(out);
}

template <class T>
T& need(std::optional<T>& v, const char* what) {
    if (!v) throw std::logic_error(std::string("training state has no ") + what);
    return *v;
}

// G half of a stage-1 step. Returns the generated batch (graph attached).
Tensor tanet_update(TrainState& st, const Batch& b, const FeatureExtractor& fx, StepReport& r) {
    auto& g = need(st.tanet, "TANet");
    auto& dg = need(st.disc_g, "TANet discriminator");
    auto generated = tanet_forward(g, b.clean, b.reference, Mode::Train);
    update_discriminator(dg, st.adam_disc_g, b.reference, generated.detach(), r, "d_g");

    set_trainable(dg, false);
    auto adv = adversarial_term(dg, generated, r);
    auto style = style_loss(fx, generated, b.reference);
    auto content = content_loss_masked(b.clean, generated, b.mask);
    auto total = tanet_total(adv, style, content.value, st.config.weights());
    r.empty_mask = content.empty_mask;
    r.losses["g_adv"] = checked(adv, "g_adv");
    r.losses["g_style"] = checked(style, "g_style");
    r.losses["g_content"] = checked(content.value, "g_content");
    r.losses["g_total"] = checked(total, "g_total");
    optimize(g, st.adam_tanet, total);
    set_trainable(dg, true);
    return generated;
}

// D_F then F on (input, target) pairs; input carries no graph.
void binet_update(TrainState& st, const Tensor& input, const Tensor& target, StepReport& r, bool adversarial) {
    auto& f = need(st.binet, "BiNet");
    auto pred = binet_forward(f, input, Mode::Train);
    Tensor adv = Tensor::scalar(0);
    if (adversarial) {
        auto& df = need(st.disc_f, "BiNet discriminator");
        update_discriminator(df, st.adam_disc_f, target, pred.detach(), r, "d_f");
        set_trainable(df, false);
        adv = adversarial_term(df, pred, r);
    }
    auto l2 = l2_loss(target, pred);
    auto total = binet_total(adv, l2, st.config.weights());
    if (adversarial) r.losses["f_adv"] = checked(adv, "f_adv");
    r.losses["f_l2"] = checked(l2, "f_l2");
    r.losses["f_total"] = checked(total, "f_total");
    optimize(f, st.adam_binet, total);
    if (adversarial) set_trainable(*st.disc_f, true);
}

std::size_t batch_size(const TrainState& st) { return std::size_t(st.config.batch_size); }

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
    if (dst.shape() != src.shape()) {
        throw CheckpointError("tensor '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                              shape_str(dst.shape()));
    }
    auto out = dst.mutable_data();
    std::copy(src.data().begin(), src.data().end(), out.begin());
}

template <class Params>
void collect(std::vector<NamedTensor>& out, std::optional<Params>& p, const char* prefix) {
    if (!p) return;
    for (auto& nt : parameters(*p, prefix)) out.push_back(nt);
    for (auto& nt : buffers(*p, prefix)) out.push_back(nt);
}

struct AdamSlot {
    const char* name;
    AdamState TrainState::*state;
    std::function<std::vector<NamedTensor>(TrainState&)> params;
};

std::vector<AdamSlot> adam_slots() {
    return {
        {"tanet", &TrainState::adam_tanet,
         [](TrainState& s) { return s.tanet ? parameters(*s.tanet, "tanet") : std::vector<NamedTensor>{}; }},
        {"disc_g", &TrainState::adam_disc_g,
         [](TrainState& s) { return s.disc_g ? parameters(*s.disc_g, "disc_g") : std::vector<NamedTensor>{}; }},
        {"binet", &TrainState::adam_binet,
         [](TrainState& s) { return s.binet ? parameters(*s.binet, "binet") : std::vector<NamedTensor>{}; }},
        {"disc_f", &TrainState::adam_disc_f,
         [](TrainState& s) { return s.disc_f ? parameters(*s.disc_f, "disc_f") : std::vector<NamedTensor>{}; }},
    };
}

}  // namespace

const char* mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::Full: return "full";
        case TrainMode::UnetBaseline: return "unet_baseline";
        case TrainMode::Pix2pixBaseline: return "pix2pix_baseline";
    }
    return "?";
}

TrainMode mode_from_name(const std::string& s) {
    if (s == "full") return TrainMode::Full;
    if (s == "unet_baseline") return TrainMode::UnetBaseline;
    if (s == "pix2pix_baseline") return TrainMode::Pix2pixBaseline;
    throw std::invalid_argument("unknown training mode '" + s + "' (full|unet_baseline|pix2pix_baseline)");
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::TANet: return "tanet";
        case Stage::BiNet: return "binet";
        case Stage::Joint: return "joint";
        case Stage::Baseline: return "baseline";
    }
    return "?";
}

Stage stage_from_name(const std::string& s) {
    if (s == "tanet") return Stage::TANet;
    if (s == "binet") return Stage::BiNet;
    if (s == "joint") return Stage::Joint;
    if (s == "baseline") return Stage::Baseline;
    throw std::invalid_argument("unknown stage '" + s + "'");
}

void TrainConfig::validate() const {
    net().validate();
    weights().validate();
    mode_from_name(mode);
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epochs_stage1 < 0 || epochs_stage2 < 0 || epochs_joint < 0) throw std::invalid_argument("epochs must be >= 0");
    if (!(lr > 0)) throw std::invalid_argument("lr must be positive");
    if (steps_per_epoch < 0) throw std::invalid_argument("steps_per_epoch must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("Adam betas must be in [0,1)");
    if (extractor_weights.empty()) {
        if (extractor_channels.empty()) throw std::invalid_argument("extractor_channels must not be empty");
        for (int c : extractor_channels)
            if (c < 1) throw std::invalid_argument("extractor_channels entries must be >= 1");
    }
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"patch_size", c.patch_size},       {"batch_size", c.batch_size},
            {"seed", c.seed},                   {"lr", c.lr},
            {"lambda_s", c.lambda_s},           {"lambda_c", c.lambda_c},
            {"lambda_l2", c.lambda_l2},         {"epochs_stage1", c.epochs_stage1},
            {"epochs_stage2", c.epochs_stage2}, {"epochs_joint", c.epochs_joint},
            {"mode", c.mode},                   {"base_channels", c.base_channels},
            {"extractor_channels", c.extractor_channels}, {"extractor_weights", c.extractor_weights},
            {"steps_per_epoch", c.steps_per_epoch},       {"beta1", c.beta1},
            {"beta2", c.beta2}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    TrainConfig c;
    const auto known = to_json(c);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key())) throw std::invalid_argument("unknown config key '" + it.key() + "'");
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    try {
        get("patch_size", c.patch_size);
        get("batch_size", c.batch_size);
        get("seed", c.seed);
        get("lr", c.lr);
        get("lambda_s", c.lambda_s);
        get("lambda_c", c.lambda_c);
        get("lambda_l2", c.lambda_l2);
        get("epochs_stage1", c.epochs_stage1);
        get("epochs_stage2", c.epochs_stage2);
        get("epochs_joint", c.epochs_joint);
        get("mode", c.mode);
        get("base_channels", c.base_channels);
        get("extractor_channels", c.extractor_channels);
        get("extractor_weights", c.extractor_weights);
        get("steps_per_epoch", c.steps_per_epoch);
        get("beta1", c.beta1);
        get("beta2", c.beta2);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

FeatureExtractor make_extractor(const TrainConfig& c) {
    if (!c.extractor_weights.empty()) return FeatureExtractor::from_checkpoint(c.extractor_weights);
    return FeatureExtractor(c.extractor_channels);
}

bool TrainState::is_completed(Stage s) const {
    return std::find(completed.begin(), completed.end(), stage_name(s)) != completed.end();
}

TrainState init_state(const TrainConfig& config) {
    config.validate();
    TrainState st;
    st.config = config;
    const auto net = config.net();
    switch (config.train_mode()) {
        case TrainMode::Full:
            st.tanet = init_tanet(net, derive_seed(config.seed, 1));
            st.disc_g = init_disc(net, derive_seed(config.seed, 2));
            st.binet = init_binet(net, derive_seed(config.seed, 3));
            st.disc_f = init_disc(net, derive_seed(config.seed, 4));
            break;
        case TrainMode::Pix2pixBaseline:
            st.binet = init_binet(net, derive_seed(config.seed, 3));
            st.disc_f = init_disc(net, derive_seed(config.seed, 4));
            break;
        case TrainMode::UnetBaseline:
            st.binet = init_binet(net, derive_seed(config.seed, 3));
            break;
    }
    st.adam_tanet = st.adam_disc_g = st.adam_binet = st.adam_disc_f = make_adam(config);
    st.sampler = UnpairedSampler(derive_seed(config.seed, 5));
    return st;
}

std::int64_t steps_per_epoch(const TrainConfig& c, const PatchStore& store, Stage s) {
    if (c.steps_per_epoch > 0) return c.steps_per_epoch;
    const auto n = s == Stage::Baseline ? store.pairs(Split::Train).size() : store.indices(Pool::Clean, Split::Train).size();
    const auto b = std::size_t(c.batch_size);
    return std::int64_t((n + b - 1) / b);
}

std::int64_t stage_steps(const TrainConfig& c, const PatchStore& store, Stage s) {
    int epochs = 0;
    switch (s) {
        case Stage::TANet: epochs = c.epochs_stage1; break;
        case Stage::BiNet: epochs = c.epochs_stage2; break;
        case Stage::Joint: epochs = c.epochs_joint; break;
        // The baselines have a single training phase; it uses the stage-2 budget.
        case Stage::Baseline: epochs = c.epochs_stage2; break;
    }
    return std::int64_t(epochs) * steps_per_epoch(c, store, s);
}

nlohmann::json to_json(const StepReport& r) {
    nlohmann::json j{{"stage", stage_name(r.stage)}, {"step", r.step}};
    for (const auto& [k, v] : r.losses) j[k] = v;
    if (r.d_max >= r.d_min) {
        j["d_min"] = r.d_min;
        j["d_max"] = r.d_max;
    }
    if (r.empty_mask) j["empty_mask"] = true;
    return j;
}

StepReport stage1_step(TrainState& st, const PatchStore& store, const FeatureExtractor& fx) {
    StepReport r;
    r.stage = Stage::TANet;
    const auto b = sample_batch(st.sampler, store, batch_size(st));
    tanet_update(st, b, fx, r);
    return r;
}

StepReport stage2_step(TrainState& st, const PatchStore& store) {
    StepReport r;
    r.stage = Stage::BiNet;
    const auto b = sample_batch(st.sampler, store, batch_size(st));
    Tensor generated;
    {
        // TANet is frozen: eval mode, no graph, running stats untouched.
        NoGradGuard guard;
        generated = tanet_forward(need(st.tanet, "TANet"), b.clean, b.reference, Mode::Eval);
    }
    binet_update(st, generated, b.clean, r, true);
    return r;
}

StepReport joint_step(TrainState& st, const PatchStore& store, const FeatureExtractor& fx) {
    StepReport r;
    r.stage = Stage::Joint;
    const auto b = sample_batch(st.sampler, store, batch_size(st));
    auto generated = tanet_update(st, b, fx, r);
    // BiNet's losses stop at I_g: TANet learns only from its own objective.
    binet_update(st, generated.detach(), b.clean, r, true);
    return r;
}

StepReport baseline_step(TrainState& st, const PatchStore& store) {
    StepReport r;
    r.stage = Stage::Baseline;
    const auto b = sample_paired_batch(st.sampler, store, batch_size(st));
    const bool adversarial = st.config.train_mode() == TrainMode::Pix2pixBaseline;
    binet_update(st, b.reference, b.clean, r, adversarial);
    return r;
}

void run_stage(TrainState& st, Stage s, const PatchStore& store, const FeatureExtractor& fx, const RunHooks& hooks) {
    const bool baseline = st.config.train_mode() != TrainMode::Full;
    if (baseline != (s == Stage::Baseline)) {
        throw std::invalid_argument(std::string("stage '") + stage_name(s) + "' is not available in mode '" +
                                    st.config.mode + "'");
    }
    if (st.is_completed(s)) return;
    if (st.stage != stage_name(s)) {
        st.stage = stage_name(s);
        st.stage_step = 0;
    }
    const auto total = stage_steps(st.config, store, s);
    const auto start = std::chrono::steady_clock::now();
    std::int64_t done = 0;
    while (st.stage_step < total) {
        if (hooks.max_steps >= 0 && done >= hooks.max_steps) return;
        StepReport r;
        try {
            switch (s) {
                case Stage::TANet: r = stage1_step(st, store, fx); break;
                case Stage::BiNet: r = stage2_step(st, store); break;
                case Stage::Joint: r = joint_step(st, store, fx); break;
                case Stage::Baseline: r = baseline_step(st, store); break;
            }
        } catch (const NumericError&) {
            if (!hooks.snapshot_path.empty()) save_checkpoint(hooks.snapshot_path, st);
            throw;
        }
        ++st.stage_step;
        ++st.global_step;
        ++done;
        r.step = st.stage_step;
        if (hooks.log) {
            auto j = to_json(r);
            j["global_step"] = st.global_step;
            j["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            *hooks.log << j.dump() << '\n';
            hooks.log->flush();
        }
        if (hooks.on_step) hooks.on_step(st, r);
    }
    st.completed.push_back(stage_name(s));
}

void train_stage1_tanet(TrainState& st, const PatchStore& store, const FeatureExtractor& fx, const RunHooks& hooks) {
    run_stage(st, Stage::TANet, store, fx, hooks);
}

void train_stage2_binet(TrainState& st, const PatchStore& store, const RunHooks& hooks) {
    // Stage 2 never touches the extractor; a one-stage stub keeps the signature uniform.
    run_stage(st, Stage::BiNet, store, FeatureExtractor({1}), hooks);
}

void train_joint(TrainState& st, const PatchStore& store, const FeatureExtractor& fx, const RunHooks& hooks) {
    run_stage(st, Stage::Joint, store, fx, hooks);
}

void train_baseline(TrainState& st, const PatchStore& store, const RunHooks& hooks) {
    run_stage(st, Stage::Baseline, store, FeatureExtractor({1}), hooks);
}

TensorFile state_to_file(TrainState& st) {
    TensorFile f;
    std::vector<NamedTensor> all;
    collect(all, st.tanet, "tanet");
    collect(all, st.disc_g, "disc_g");
    collect(all, st.binet, "binet");
    collect(all, st.disc_f, "disc_f");
    for (auto& nt : all) f.add(nt.name, nt.tensor);

    nlohmann::json adam = nlohmann::json::object();
    for (const auto& slot : adam_slots()) {
        const AdamState& a = st.*slot.state;
        adam[slot.name] = {{"step", a.step}};
        if (a.m.empty()) continue;
        const auto params = slot.params(st);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto n = std::int64_t(a.m[i].size());
            f.add("adam." + params[i].name + ".m", Tensor::from_data({n}, a.m[i]));
            f.add("adam." + params[i].name + ".v", Tensor::from_data({n}, a.v[i]));
        }
    }
    f.meta = {{"kind", "docbin-train-state"},
              {"config", to_json(st.config)},
              {"stage", st.stage},
              {"stage_step", st.stage_step},
              {"global_step", st.global_step},
              {"completed", st.completed},
              {"sampler", st.sampler.state()},
              {"adam", adam}};
    return f;
}

TrainState state_from_file(const TensorFile& f) {
    if (f.meta.value("kind", "") != "docbin-train-state") throw CheckpointError("not a training checkpoint");
    TrainState st;
    try {
        st = init_state(config_from_json(f.meta.at("config")));
        st.stage = f.meta.at("stage").get<std::string>();
        st.stage_step = f.meta.at("stage_step").get<std::int64_t>();
        st.global_step = f.meta.at("global_step").get<std::int64_t>();
        st.completed = f.meta.at("completed").get<std::vector<std::string>>();
        st.sampler.restore(f.meta.at("sampler"));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
    }

    std::vector<NamedTensor> all;
    collect(all, st.tanet, "tanet");
    collect(all, st.disc_g, "disc_g");
    collect(all, st.binet, "binet");
    collect(all, st.disc_f, "disc_f");
    std::set<std::string> expected;
    for (auto& nt : all) {
        auto src = f.find(nt.name);
        if (!src) throw CheckpointError("checkpoint is missing tensor '" + nt.name + "'");
        copy_into(nt.tensor, *src, nt.name);
        expected.insert(nt.name);
    }

    for (const auto& slot : adam_slots()) {
        AdamState& a = st.*slot.state;
        a.step = f.meta.at("adam").at(slot.name).at("step").get<std::int64_t>();
        const auto params = slot.params(st);
        if (params.empty() || !f.find("adam." + params[0].name + ".m")) continue;
        for (const auto& p : params) {
            auto m = f.find("adam." + p.name + ".m"), v = f.find("adam." + p.name + ".v");
            if (!m || !v) throw CheckpointError("checkpoint is missing optimizer moments for '" + p.name + "'");
            if (m->numel() != p.tensor.numel() || v->numel() != p.tensor.numel()) {
                throw CheckpointError("optimizer moments for '" + p.name + "' have the wrong size");
            }
            a.m.push_back(m->to_vector());
            a.v.push_back(v->to_vector());
            expected.insert("adam." + p.name + ".m");
            expected.insert("adam." + p.name + ".v");
        }
    }
    for (const auto& nt : f.tensors)
        if (!expected.count(nt.name)) throw CheckpointError("unexpected tensor '" + nt.name + "' in checkpoint");
    return st;
}

void save_checkpoint(const std::string& path, TrainState& st) { write_tensor_file(path, state_to_file(st)); }

TrainState load_checkpoint(const std::string& path) { return state_from_file(read_tensor_file(path)); }

}  // namespace docbin
