// docbin: document binarization toolkit.

#include "docbin/commands.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace docbin;

int main(int argc, char** argv) {
    CLI::App app{"Document image binarization: data preparation, texture-augmented training, inference, "
                 "classical baselines and DIBCO-style evaluation.\n"
                 "Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.\n"
                 "DOCBIN_THREADS caps the worker threads used by baseline and evaluate."};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    PrepareOptions prep;
    auto* prepare = app.add_subcommand("prepare", "Cut dataset images into patches and write a patch store");
    prepare->add_option("datasets", prep.dataset_dirs, "Dataset directories, each with gt/ and degraded/")->required();
    prepare->add_option("-o,--out", prep.out_dir, "Output store directory")->required();
    prepare->add_option("--patch-size", prep.patch_size, "Patch size (power of two)")->capture_default_str();
    prepare->add_option("--stride", prep.stride, "Patch stride, 0 = patch size")->capture_default_str();
    prepare->add_option("--eval-fraction", prep.eval_fraction, "Share of patches held out")->capture_default_str();
    prepare->add_option("--seed", prep.seed, "Split seed")->capture_default_str();
    bool no_rot = false;
    prepare->add_flag("--no-rotations", no_rot, "Skip the 90/180/270 degree copies");

    TrainOptions tr;
    auto* train = app.add_subcommand("train", "Train the networks; rerunning in the same directory resumes");
    train->add_option("-c,--config", tr.config_path, "JSON config with TrainConfig keys")->check(CLI::ExistingFile);
    train->add_option("-s,--store", tr.store_dir, "Patch store from `prepare`")->required();
    train->add_option("-o,--out", tr.out_dir, "Checkpoint directory")->required();
    train->add_option("--stage", tr.stage, "all|tanet|binet|joint|baseline")->capture_default_str();
    train->add_option("--checkpoint-every", tr.checkpoint_every, "Steps between resume checkpoints")
        ->capture_default_str();

    AugmentOptions aug;
    auto* augment = app.add_subcommand("augment", "Render clean patches with reference textures through TANet");
    augment->add_option("-m,--checkpoint", aug.checkpoint, "Training checkpoint")->required();
    augment->add_option("--clean", aug.clean_dir, "Directory of clean (binary) images")->required();
    augment->add_option("--reference", aug.reference_dir, "Directory of degraded reference images")->required();
    augment->add_option("-o,--out", aug.out_dir, "Output directory")->required();
    augment->add_option("-n,--count", aug.count, "Images to generate")->capture_default_str();
    augment->add_option("--seed", aug.seed, "Sampler seed")->capture_default_str();

    BinarizeOptions bin;
    auto* binarize = app.add_subcommand("binarize", "Binarize an image (or a directory) with a trained BiNet");
    binarize->add_option("-m,--checkpoint", bin.checkpoint, "Training checkpoint")->required();
    binarize->add_option("input", bin.input, "Image file or directory")->required();
    binarize->add_option("output", bin.output, "Output PBM file or directory")->required();
    binarize->add_option("--tile", bin.tile, "Tile size, 0 = network patch size")->capture_default_str();
    binarize->add_option("--overlap", bin.overlap, "Tile overlap, -1 = tile/4")->capture_default_str();
    binarize->add_option("--threshold", bin.threshold, "Ink where the averaged output is below this (tanh space)")
        ->capture_default_str();

    BaselineOptions base;
    auto* baseline = app.add_subcommand("baseline", "Classical thresholding: otsu, niblack, sauvola, bernsen");
    baseline->add_option("method", base.method, "otsu|niblack|sauvola|bernsen")
        ->required()
        ->check(CLI::IsMember({"otsu", "niblack", "sauvola", "bernsen"}));
    baseline->add_option("input", base.input, "Image file or directory")->required();
    baseline->add_option("output", base.output, "Output file or directory")->required();
    baseline->add_option("--window", base.window, "Window size (odd); default per method");
    baseline->add_option("-k", base.k, "Niblack/Sauvola k; default per method");
    baseline->add_option("-r,--range", base.r, "Sauvola dynamic range R in [0,1] units");
    baseline->add_option("--contrast", base.contrast, "Bernsen minimum contrast in [0,1] units");

    EvaluateOptions ev;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against ground truth (F, F_ps, DRD, PSNR)");
    evaluate_cmd->add_option("pred", ev.pred_dir, "Prediction directory")->required();
    evaluate_cmd->add_option("gt", ev.gt_dir, "Ground-truth directory")->required();
    evaluate_cmd->add_option("--json", ev.json_out, "Also write a JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*prepare) {
            prep.rotations = !no_rot;
            cmd_prepare(prep, std::cerr);
        } else if (*train) {
            cmd_train(tr, std::cerr);
        } else if (*augment) {
            cmd_augment(aug, std::cerr);
        } else if (*binarize) {
            cmd_binarize(bin, std::cerr);
        } else if (*baseline) {
            cmd_baseline(base, std::cerr);
        } else if (*evaluate_cmd) {
            cmd_evaluate(ev, std::cout);
        }
    } catch (...) {
        return report_error(std::cerr);
    }
    return kExitOk;
}
