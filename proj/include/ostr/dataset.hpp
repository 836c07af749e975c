#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ostr {

struct ManifestEntry {
    std::string clip_id;
    std::string ost_track_id;
    int ost_segment_index = 0;
    std::string bgm_track_id;
    int bgm_segment_index = 0;
    std::string split;  // train | val | test
    std::string mixture_path;  // all paths relative to the dataset root
    std::string ost_ref_path;
    std::string bgm_ref_path;
    std::string frames_dir;  // overlay benchmarks only
};

// Deterministic record of a synthesized dataset: same inputs + same seed give
// byte-identical manifests and audio. Serialized as JSON lines (header object
// first, one entry per line after).
struct MixManifest {
    std::uint64_t build_seed = 0;
    double clip_len_s = 4.0;
    double target_lufs = -23.0;
    std::string kind;  // "mix" | "overlay"
    std::vector<ManifestEntry> entries;

    void save(const std::string& path) const;
    static MixManifest load(const std::string& path);

    std::vector<ManifestEntry> split_entries(const std::string& split) const;
};

// Segments every source track into up to 10 four-second clips, normalizes each
// segment to the target loudness, then pairs OST and BGM segments uniformly at
// random (with replacement) to synthesize n_mixtures. Stems are quantized to
// float32 storage precision before summing so every stored mixture equals the
// float32 sum of its stored stems bit-exactly. Splits are assigned by seeded
// shuffle, val and test each get floor(n/10), train keeps the remainder.
MixManifest build_separation_dataset(const std::string& ost_dir, const std::string& bgm_dir,
                                     std::size_t n_mixtures, std::uint64_t seed,
                                     const std::string& out_dir);

// Pairs every video-audio track with one seeded-random BGM track at least as
// long as the video (shorter BGMs are rejected), overlays the two at the
// target loudness and segments the result into 4 s clips. Each clip gets its
// own frame directory holding the 4 frames (1 fps) covering its time window.
MixManifest build_overlay_benchmark(const std::string& video_audio_dir, const std::string& bgm_dir,
                                    const std::string& frames_root, std::uint64_t seed,
                                    const std::string& out_dir);

struct ValidationIssue {
    std::string kind;  // missing_file | clip_length | loudness | split_ratio | duplicate_id | mixture_sum
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool split_leakage_risk = false;  // a source track feeds more than one split
    std::size_t checked_clips = 0;

    bool ok() const { return issues.empty(); }
};

// Checks file existence, clip lengths, stem loudness (target +/- 0.5 LU),
// exact split ratios, id uniqueness and the stored mixture-sum identity.
ValidationReport validate_manifest(const MixManifest& manifest, const std::string& root);

}  // namespace ostr
