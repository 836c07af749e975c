#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ostr/audio.hpp"
#include "ostr/dataset.hpp"
#include "ostr/matching.hpp"
#include "ostr/separation.hpp"

namespace ostr {

struct PipelineConfig {
    std::string mask_model_path;
    std::string matcher_model_path;
    StemBackend stem_backend;
    std::string out_dir;
    int workers = 1;
    std::uint64_t seed = 0;
    bool keep_intermediates = false;
};

struct StageTimings {
    double two_stem_s = 0.0;
    double speech_s = 0.0;
    double mixed_music_s = 0.0;
    double matching_s = 0.0;
};

struct ClipResult {
    std::string clip_id;
    bool failed = false;
    std::string error;
    std::string chosen;  // which separator head the matcher kept: "ost" | "bgm"
    bool degenerate_tie = false;
    double distance_ost = 0.0;
    double distance_bgm = 0.0;
    double distance_gap = 0.0;  // |d_ost - d_bgm|, for downstream thresholding
    StageTimings timings;       // wall times; excluded from determinism checks
};

struct PipelineReport {
    std::vector<ClipResult> clips;
    StageTimings total;

    void save(const std::string& path) const;  // JSON lines, header first
};

// Stage order per run: two-stem separation -> speech detection/extraction on
// the vocal stem -> mixed-music separation on the accompaniment -> video-music
// matching over the two candidates -> restored = speech + chosen candidate at
// their separation-output gains. Models load at construction; a clip that
// fails any stage gets a failure record and the other clips proceed.
class Pipeline {
public:
    explicit Pipeline(const PipelineConfig& cfg);

    const PipelineConfig& config() const { return cfg_; }

    // Input must be a 4 s clip at the analysis rate with its frame sequence.
    // Writes <out_dir>/<clip_id>/restored.wav and dialogue.wav, plus the
    // intermediate stems when keep_intermediates is set.
    ClipResult run_clip(const AudioClip& input, const FrameSequence& frames,
                        const std::string& clip_id, AudioClip* restored_out = nullptr) const;

    // Runs every entry of the manifest (optionally one split) with a bounded
    // worker pool; per-clip outputs are byte-identical regardless of worker
    // count. Writes <out_dir>/report.jsonl.
    PipelineReport run_manifest(const MixManifest& manifest, const std::string& root,
                                const std::string& split = "") const;

private:
    PipelineConfig cfg_;
    MaskModel mask_model_;
    MatcherModel matcher_model_;
};

}  // namespace ostr
