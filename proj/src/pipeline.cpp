#include "ostr/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ostr {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Pipeline::Pipeline(const PipelineConfig& cfg)
    : cfg_(cfg),
      mask_model_(MaskModel::load(cfg.mask_model_path)),
      matcher_model_(MatcherModel::load(cfg.matcher_model_path)) {}

ClipResult Pipeline::run_clip(const AudioClip& input, const FrameSequence& frames,
                              const std::string& clip_id, AudioClip* restored_out) const {
    if (input.sample_rate_hz() != kAnalysisRateHz || input.length() != 4 * kAnalysisRateHz)
        throw std::invalid_argument(clip_id + ": pipeline input must be a 4 s clip at 16 kHz");

    ClipResult result;
    result.clip_id = clip_id;

    auto t0 = std::chrono::steady_clock::now();
    const TwoStemResult stems = separate_two_stem(input, cfg_.stem_backend);
    result.timings.two_stem_s = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const SpeechSegments segments = detect_speech(stems.vocals);
    const AudioClip dialogue = extract_speech(stems.vocals, segments);
    result.timings.speech_s = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const SeparationResult candidates = separate_mixed_music(stems.accompaniment, mask_model_);
    result.timings.mixed_music_s = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const MotionFeatures motion = motion_features(frames);
    const MatchResult m = match(frames, motion, candidates.ost, candidates.bgm, matcher_model_);
    result.timings.matching_s = seconds_since(t0);

    result.distance_ost = m.distance_a;
    result.distance_bgm = m.distance_b;
    result.distance_gap = std::fabs(m.distance_a - m.distance_b);
    result.degenerate_tie = m.tie;
    result.chosen = m.choice == MatchResult::Choice::A ? "ost" : "bgm";
    const AudioClip& chosen_clip =
        m.choice == MatchResult::Choice::A ? candidates.ost : candidates.bgm;

    const AudioClip restored = mix(dialogue, chosen_clip).clip;

    const fs::path dir = fs::path(cfg_.out_dir) / clip_id;
    fs::create_directories(dir);
    save_wav(restored, (dir / "restored.wav").string(), WavEncoding::float32);
    save_wav(dialogue, (dir / "dialogue.wav").string(), WavEncoding::float32);
    if (cfg_.keep_intermediates) {
        save_wav(stems.vocals, (dir / "vocals.wav").string(), WavEncoding::float32);
        save_wav(stems.accompaniment, (dir / "accompaniment.wav").string(), WavEncoding::float32);
        save_wav(candidates.ost, (dir / "candidate_ost.wav").string(), WavEncoding::float32);
        save_wav(candidates.bgm, (dir / "candidate_bgm.wav").string(), WavEncoding::float32);
    }
    if (restored_out) *restored_out = restored;
    return result;
}

PipelineReport Pipeline::run_manifest(const MixManifest& manifest, const std::string& root,
                                      const std::string& split) const {
    const auto entries = manifest.split_entries(split);
    PipelineReport report;
    report.clips.resize(entries.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= entries.size()) break;
            const auto& e = entries[i];
            try {
                const AudioClip input = load_wav((fs::path(root) / e.mixture_path).string());
                if (e.frames_dir.empty())
                    throw std::runtime_error("manifest entry has no frame directory");
                const FrameSequence frames = load_frames((fs::path(root) / e.frames_dir).string());
                report.clips[i] = run_clip(input, frames, e.clip_id);
            } catch (const std::exception& ex) {
                ClipResult failure;
                failure.clip_id = e.clip_id;
                failure.failed = true;
                failure.error = ex.what();
                report.clips[i] = failure;
            }
        }
    };

    const int n_workers = std::max(1, cfg_.workers);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (const auto& c : report.clips) {
        report.total.two_stem_s += c.timings.two_stem_s;
        report.total.speech_s += c.timings.speech_s;
        report.total.mixed_music_s += c.timings.mixed_music_s;
        report.total.matching_s += c.timings.matching_s;
    }
    fs::create_directories(cfg_.out_dir);
    report.save((fs::path(cfg_.out_dir) / "report.jsonl").string());
    return report;
}

namespace {

json timings_to_json(const StageTimings& t) {
    return json{{"two_stem_s", t.two_stem_s},
                {"speech_s", t.speech_s},
                {"mixed_music_s", t.mixed_music_s},
                {"matching_s", t.matching_s}};
}

}  // namespace

void PipelineReport::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << json{{"kind", "pipeline_report"},
              {"clip_count", clips.size()},
              {"timings", timings_to_json(total)}}
             .dump()
      << "\n";
    for (const auto& c : clips) {
        json j{{"clip_id", c.clip_id}, {"failed", c.failed}};
        if (c.failed) {
            j["error"] = c.error;
        } else {
            j["chosen"] = c.chosen;
            j["degenerate_tie"] = c.degenerate_tie;
            j["distance_ost"] = c.distance_ost;
            j["distance_bgm"] = c.distance_bgm;
            j["distance_gap"] = c.distance_gap;
            j["timings"] = timings_to_json(c.timings);
        }
        f << j.dump() << "\n";
    }
}

}  // namespace ostr
