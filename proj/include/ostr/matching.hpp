#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ostr/audio.hpp"
#include "ostr/dataset.hpp"
#include "ostr/nn.hpp"
#include "ostr/spectral.hpp"

namespace ostr {

// 4 grayscale 224x224 rasters per 4 s clip (1 frame per second), [0, 1].
struct FrameSequence {
    static constexpr std::size_t kFrames = 4;
    static constexpr std::size_t kSize = 224;
    std::array<std::vector<double>, kFrames> frames;  // row-major kSize x kSize

    double at(std::size_t f, std::size_t y, std::size_t x) const { return frames[f][y * kSize + x]; }
};

// Binary PGM (P5) raster I/O; 8-bit, 224x224 for frame sequences.
void save_pgm(const std::string& path, std::size_t width, std::size_t height,
              const std::vector<unsigned char>& pixels);
std::vector<unsigned char> load_pgm(const std::string& path, std::size_t& width, std::size_t& height);

// Loads the first 4 PGM frames (lexicographic order) from a directory.
// Throws when fewer than 4 frames exist, a raster is malformed, or a frame is
// not 224x224.
FrameSequence load_frames(const std::string& dir);

// Coarse block-matching flow between consecutive frames: 16x16 blocks on a
// 14x14 grid, exhaustive +/-4 px search, sum-of-absolute-differences, ties
// broken by smaller displacement magnitude then raster scan order.
struct MotionFeatures {
    static constexpr std::size_t kPairs = 3;
    static constexpr std::size_t kGrid = 14;
    static constexpr int kSearchRadius = 4;
    static constexpr std::size_t kBlock = 16;

    // Each kPairs x kGrid x kGrid, row-major per pair.
    std::vector<double> dx, dy, residual;

    std::size_t index(std::size_t pair, std::size_t by, std::size_t bx) const {
        return (pair * kGrid + by) * kGrid + bx;
    }
    std::vector<double> flatten() const;  // per block: dx, dy, residual
};

MotionFeatures motion_features(const FrameSequence& frames);

// Onset envelope quantized to K levels after max-normalization; an all-zero
// envelope maps to all-zero tokens.
struct RhythmTokens {
    int levels = 16;
    std::vector<int> tokens;
};

RhythmTokens rhythm_quantize(const std::vector<double>& envelope, int levels = 16);

struct MatcherConfig {
    std::size_t embed_dim = 64;  // d; must be even for the rotary embedding
    double margin = 0.2;
    int rhythm_levels = 16;
    std::size_t chunks = 16;  // temporal pooling granularity on the music side
    int epochs = 40;
    double lr = 0.003;
};

// Twin encoders into a shared unit-norm embedding space. The video side pools
// frame patches and block-matching flow through linear maps; the music side
// attends rhythm-token chunks over pooled mel chunks (rotary positions on
// queries and keys) before the final projection. Both encoders share the
// hidden->output head shape and emit L2-normalized d-vectors.
class MatcherModel {
public:
    MatcherModel() = default;
    MatcherModel(const MatcherConfig& cfg, std::uint64_t init_seed);

    const MatcherConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    std::vector<double> embed_video(const FrameSequence& frames, const MotionFeatures& motion) const;
    std::vector<double> embed_music(const MelSpectrogram& mel, const RhythmTokens& rhythm) const;

    void save(const std::string& path) const;
    static MatcherModel load(const std::string& path);

private:
    MatcherConfig cfg_;
    nn::ParamStore params_;
};

// Pooled encoder inputs; features are model-independent so they are computed
// once per clip and reused across training epochs.
struct VideoFeatures {
    std::vector<double> patches;  // 4 * 14 * 14 patch means
    std::vector<double> motion;   // flattened MotionFeatures
};
struct MusicFeatures {
    nn::Matrix mel_chunks;    // chunks x 80
    nn::Matrix rhythm_hist;   // chunks x levels, rows sum to 1 where tokens exist
};

VideoFeatures video_features(const FrameSequence& frames, const MotionFeatures& motion);
MusicFeatures music_features(const MelSpectrogram& mel, const RhythmTokens& rhythm,
                             const MatcherConfig& cfg);

struct MatchResult {
    enum class Choice { A, B };
    Choice choice = Choice::A;
    double distance_a = 0.0;  // squared embedding distances
    double distance_b = 0.0;
    bool tie = false;  // exact distance equality, resolved to A
};

// Binary OST-vs-BGM decision: argmin of squared embedding distance between the
// video embedding and each candidate's music embedding. Both candidates must
// be 4 s clips at the analysis rate.
MatchResult match(const FrameSequence& frames, const MotionFeatures& motion,
                  const AudioClip& audio_a, const AudioClip& audio_b, const MatcherModel& model);

struct MatchCase {
    FrameSequence frames;
    MotionFeatures motion;
    AudioClip ost;  // the paired track
    AudioClip bgm;  // the distractor
};

// Fraction of cases where the paired track wins. Throws on an empty set.
double matching_accuracy(const MatcherModel& model, const std::vector<MatchCase>& cases);

struct MatcherTrainResult {
    MatcherModel model;
    // Frozen train-split loss entering each epoch, plus one trailing entry
    // after the last update; front() is the untrained loss, back() the final.
    std::vector<double> epoch_loss;
};

// Triplet training (video anchor, paired OST positive, the entry's own BGM as
// negative, no mining) over the manifest's train split; bit-reproducible given
// the seed. Entries must carry frame directories (overlay-style manifests).
MatcherTrainResult train_matcher(const MixManifest& manifest, const std::string& root,
                                 const MatcherConfig& cfg, std::uint64_t seed);

// One triplet's loss; with_grad accumulates parameter gradients. Exposed for
// the gradient-certification tests.
double matcher_triplet_loss(MatcherModel& model, const VideoFeatures& video,
                            const MusicFeatures& positive, const MusicFeatures& negative,
                            bool with_grad);

// <embedding, probe> projections with full backward passes; the hooks the
// gradient-certification tests drive each encoder through.
double video_probe_loss(MatcherModel& model, const VideoFeatures& features,
                        const std::vector<double>& probe, bool with_grad);
double music_probe_loss(MatcherModel& model, const MusicFeatures& features,
                        const std::vector<double>& probe, bool with_grad);

}  // namespace ostr
