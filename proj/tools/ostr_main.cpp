// BGM-removal toolkit command line: dataset synthesis, model training, the
// four-stage restoration pipeline and its SDR/SI-SDR evaluation harness.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ostr/dataset.hpp"
#include "ostr/matching.hpp"
#include "ostr/metrics.hpp"
#include "ostr/pipeline.hpp"
#include "ostr/separation.hpp"

namespace fs = std::filesystem;
using namespace ostr;

namespace {

int run(int argc, char** argv) {
    CLI::App app{"ostr - background-music removal and soundtrack restoration toolkit"};
    app.set_config("--config", "", "Read options from a key = value config file");

    std::uint64_t seed = 0;
    int workers = 1;
    app.add_option("--seed", seed, "Seed for every stochastic step")->capture_default_str();
    app.add_option("--workers", workers, "Worker threads for clip-level parallelism")
        ->capture_default_str();

    app.require_subcommand(1);

    // dataset ---------------------------------------------------------------
    auto* dataset = app.add_subcommand("dataset", "Build or check mixture datasets");
    dataset->require_subcommand(1);

    std::string ost_dir, bgm_dir, out_dir, video_dir, frames_root, manifest_path, root;
    std::size_t n_mixtures = 200;

    auto* build_mix = dataset->add_subcommand("build-mix", "Synthesize an OST+BGM mixture dataset");
    build_mix->add_option("--ost-dir", ost_dir, "Directory of OST source WAVs")->required();
    build_mix->add_option("--bgm-dir", bgm_dir, "Directory of BGM source WAVs")->required();
    build_mix->add_option("--count", n_mixtures, "Number of mixtures")->capture_default_str();
    build_mix->add_option("--out", out_dir, "Output dataset directory")->required();
    build_mix->callback([&] {
        const MixManifest m = build_separation_dataset(ost_dir, bgm_dir, n_mixtures, seed, out_dir);
        std::printf("built %zu mixtures under %s\n", m.entries.size(), out_dir.c_str());
    });

    auto* build_overlay =
        dataset->add_subcommand("build-overlay", "Overlay BGM onto video audio tracks");
    build_overlay->add_option("--video-audio-dir", video_dir, "Directory of video audio WAVs")
        ->required();
    build_overlay->add_option("--bgm-dir", bgm_dir, "Directory of BGM WAVs")->required();
    build_overlay->add_option("--frames-root", frames_root, "Per-track frame directories")
        ->required();
    build_overlay->add_option("--out", out_dir, "Output dataset directory")->required();
    build_overlay->callback([&] {
        const MixManifest m = build_overlay_benchmark(video_dir, bgm_dir, frames_root, seed, out_dir);
        std::printf("built %zu overlay clips under %s\n", m.entries.size(), out_dir.c_str());
    });

    auto* validate = dataset->add_subcommand("validate", "Check a dataset against its manifest");
    validate->add_option("--manifest", manifest_path, "Manifest JSONL path")->required();
    validate->add_option("--root", root, "Dataset root directory")->required();
    validate->callback([&] {
        const MixManifest m = MixManifest::load(manifest_path);
        const ValidationReport report = validate_manifest(m, root);
        std::printf("checked %zu clips, %zu violations%s\n", report.checked_clips,
                    report.issues.size(),
                    report.split_leakage_risk ? " (note: source tracks span splits)" : "");
        for (const auto& issue : report.issues)
            std::printf("  [%s] %s\n", issue.kind.c_str(), issue.message.c_str());
        if (!report.ok()) throw std::runtime_error("manifest validation failed");
    });

    // train -----------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train the learned pipeline stages");
    train->require_subcommand(1);

    std::string model_out;
    MaskTrainConfig mask_cfg;
    auto* train_sep = train->add_subcommand("separator", "Train the mixed-music mask estimator");
    train_sep->add_option("--manifest", manifest_path, "Mixture manifest")->required();
    train_sep->add_option("--root", root, "Dataset root")->required();
    train_sep->add_option("--out", model_out, "Model output path")->required();
    train_sep->add_option("--epochs", mask_cfg.epochs)->capture_default_str();
    train_sep->add_option("--lr", mask_cfg.lr)->capture_default_str();
    train_sep->add_option("--lambda-spec", mask_cfg.lambda_spec)->capture_default_str();
    train_sep->callback([&] {
        const MixManifest m = MixManifest::load(manifest_path);
        const MaskTrainResult r = train_mask_estimator(m, root, mask_cfg, seed);
        r.model.save(model_out);
        std::printf("separator trained: loss %.6f -> %.6f (%zu-point curve), saved %s\n",
                    r.epoch_loss.front(), r.epoch_loss.back(), r.epoch_loss.size(),
                    model_out.c_str());
    });

    MatcherConfig matcher_cfg;
    auto* train_match = train->add_subcommand("matcher", "Train the video-music matcher");
    train_match->add_option("--manifest", manifest_path, "Overlay manifest with frames")->required();
    train_match->add_option("--root", root, "Dataset root")->required();
    train_match->add_option("--out", model_out, "Model output path")->required();
    train_match->add_option("--epochs", matcher_cfg.epochs)->capture_default_str();
    train_match->add_option("--lr", matcher_cfg.lr)->capture_default_str();
    train_match->add_option("--margin", matcher_cfg.margin)->capture_default_str();
    train_match->add_option("--dim", matcher_cfg.embed_dim)->capture_default_str();
    train_match->callback([&] {
        const MixManifest m = MixManifest::load(manifest_path);
        const MatcherTrainResult r = train_matcher(m, root, matcher_cfg, seed);
        r.model.save(model_out);
        std::printf("matcher trained: loss %.6f -> %.6f (%zu-point curve), saved %s\n",
                    r.epoch_loss.front(), r.epoch_loss.back(), r.epoch_loss.size(),
                    model_out.c_str());
    });

    // separate --------------------------------------------------------------
    std::string input_path, model_path, audio_a, audio_b, frames_dir;
    auto* separate = app.add_subcommand("separate", "Split a clip into OST and BGM stems");
    separate->add_option("--input", input_path, "Input WAV (4 s at 16 kHz)")->required();
    separate->add_option("--model", model_path, "Mask model path")->required();
    separate->add_option("--out", out_dir, "Output directory")->required();
    separate->callback([&] {
        const MaskModel model = MaskModel::load(model_path);
        const AudioClip clip = load_wav(input_path);
        const SeparationResult r = separate_mixed_music(clip, model);
        fs::create_directories(out_dir);
        save_wav(r.ost, (fs::path(out_dir) / "ost.wav").string(), WavEncoding::float32);
        save_wav(r.bgm, (fs::path(out_dir) / "bgm.wav").string(), WavEncoding::float32);
        std::printf("wrote %s/ost.wav and %s/bgm.wav\n", out_dir.c_str(), out_dir.c_str());
    });

    // match -----------------------------------------------------------------
    auto* match_cmd = app.add_subcommand("match", "Pick which of two clips fits the video");
    match_cmd->add_option("--frames", frames_dir, "Frame directory (4+ PGM files)")->required();
    match_cmd->add_option("--audio-a", audio_a, "Candidate A WAV")->required();
    match_cmd->add_option("--audio-b", audio_b, "Candidate B WAV")->required();
    match_cmd->add_option("--model", model_path, "Matcher model path")->required();
    match_cmd->callback([&] {
        const MatcherModel model = MatcherModel::load(model_path);
        const FrameSequence frames = load_frames(frames_dir);
        const MotionFeatures motion = motion_features(frames);
        const MatchResult r =
            match(frames, motion, load_wav(audio_a), load_wav(audio_b), model);
        std::printf("choice %s  distance_a %.6f  distance_b %.6f%s\n",
                    r.choice == MatchResult::Choice::A ? "A" : "B", r.distance_a, r.distance_b,
                    r.tie ? "  (tie)" : "");
    });

    // eval ------------------------------------------------------------------
    std::string pipeline_out, report_path, split;
    auto* eval = app.add_subcommand("eval", "Evaluation harnesses");
    eval->require_subcommand(1);
    auto* scenarios = eval->add_subcommand("scenarios", "Three-scenario SDR/SI-SDR comparison");
    scenarios->add_option("--manifest", manifest_path, "Overlay manifest")->required();
    scenarios->add_option("--root", root, "Dataset root")->required();
    scenarios->add_option("--pipeline-out", pipeline_out, "Directory of pipeline outputs")
        ->required();
    scenarios->add_option("--split", split, "Restrict to one split (train|val|test)");
    scenarios->add_option("--report", report_path, "Write per-clip report JSONL here");
    scenarios->callback([&] {
        const MixManifest m = MixManifest::load(manifest_path);
        const ScenarioReport report = evaluate_scenarios(m, root, pipeline_out, split);
        std::fputs(format_scenario_table(report).c_str(), stdout);
        if (!report_path.empty()) save_scenario_report(report, report_path);
    });

    // pipeline --------------------------------------------------------------
    PipelineConfig pipe_cfg;
    std::string backend_command;
    auto* pipeline = app.add_subcommand("pipeline", "Run the full restoration pipeline");
    pipeline->require_subcommand(1);
    auto* pipe_run = pipeline->add_subcommand("run", "Process every clip of a manifest");
    pipe_run->add_option("--manifest", manifest_path, "Overlay manifest")->required();
    pipe_run->add_option("--root", root, "Dataset root")->required();
    pipe_run->add_option("--mask-model", pipe_cfg.mask_model_path, "Mask model path")->required();
    pipe_run->add_option("--matcher-model", pipe_cfg.matcher_model_path, "Matcher model path")
        ->required();
    pipe_run->add_option("--out", pipe_cfg.out_dir, "Output directory")->required();
    pipe_run->add_option("--split", split, "Restrict to one split");
    pipe_run->add_option("--backend-command", backend_command,
                         "External stem backend: <command> <input.wav> <output_dir>");
    pipe_run->add_flag("--keep-intermediates", pipe_cfg.keep_intermediates,
                       "Also write vocal/accompaniment/candidate stems");
    pipe_run->callback([&] {
        pipe_cfg.workers = workers;
        pipe_cfg.seed = seed;
        if (!backend_command.empty()) {
            pipe_cfg.stem_backend.kind = StemBackend::Kind::external;
            pipe_cfg.stem_backend.command = backend_command;
        }
        const Pipeline pipe(pipe_cfg);
        const MixManifest m = MixManifest::load(manifest_path);
        const PipelineReport report = pipe.run_manifest(m, root, split);
        std::size_t failures = 0;
        for (const auto& c : report.clips) failures += c.failed ? 1 : 0;
        std::printf("processed %zu clips (%zu failed), report at %s/report.jsonl\n",
                    report.clips.size(), failures, pipe_cfg.out_dir.c_str());
        if (failures == report.clips.size() && !report.clips.empty())
            throw std::runtime_error("every clip failed");
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
