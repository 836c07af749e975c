#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ostr/audio.hpp"
#include "ostr/dataset.hpp"
#include "ostr/nn.hpp"
#include "ostr/spectral.hpp"

namespace ostr {

struct TwoStemResult {
    AudioClip vocals;
    AudioClip accompaniment;  // the blended non-vocal residue ("mixed music")
};

// builtin: mask-based heuristic separator. external: spawns
// `<command> <input.wav> <output_dir>` which must write vocals.wav and
// accompaniment.wav (float32, same rate and length) and exit 0.
struct StemBackend {
    enum class Kind { builtin, external };
    Kind kind = Kind::builtin;
    std::string command;
};

// Splits a clip into a vocal stem and its complement. The builtin backend
// builds a soft vocal mask from vocal-band emphasis, mid-channel dominance and
// an HPSS-style harmonicity measure; both stems come from complementary masks
// on the same STFT, so they sum exactly to the iSTFT round trip of the input.
TwoStemResult separate_two_stem(const AudioClip& clip, const StemBackend& backend = {});

struct SpeechSegment {
    double start_s = 0.0;
    double end_s = 0.0;
};
using SpeechSegments = std::vector<SpeechSegment>;

struct VadConfig {
    double onset_db = -35.0;    // activation threshold (dBFS frame power)
    double offset_db = -45.0;   // release threshold; must be below onset_db
    double hangover_s = 0.2;    // padding added to each side of a segment
    double merge_gap_s = 0.3;   // segments closer than this are merged
    double flatness_floor = 1e-4;  // below: tonal
    double flux_floor = 0.02;      // below: stationary; tonal AND stationary frames
                                   // are classified non-speech (sustained notes are
                                   // the dominant energy-VAD false positive)
};

SpeechSegments detect_speech(const AudioClip& clip, const VadConfig& cfg = {});

// Keeps the timeline: output length equals input length, samples outside the
// segments are zeroed.
AudioClip extract_speech(const AudioClip& clip, const SpeechSegments& segments);

// Ideal ratio masks |S_ost|^2 / (|S_ost|^2 + |S_bgm|^2 + 1e-12) and its exact
// complement; the separation upper bound and a training fixture.
std::pair<nn::Matrix, nn::Matrix> oracle_irm(const Spectrogram& spec_ost,
                                             const Spectrogram& spec_bgm);

// Element-wise complex * real product.
Spectrogram apply_mask(const Spectrogram& spec_mix, const nn::Matrix& mask);

// STFT at the analysis config with the input zero-padded so overlap-add covers
// every input sample; istft_cropped inverts it back to the original length.
Spectrogram analysis_stft(const AudioClip& mono);
AudioClip istft_cropped(const Spectrogram& spec, std::size_t length);

// Per-band sigmoid-linear ratio-mask estimator. A band's mask value at frame t
// is sigmoid(w_b . x_t + c_b) where x_t holds the log band energies of every
// band over frames t-context .. t+context.
class MaskModel {
public:
    MaskModel() = default;
    MaskModel(BandSplitScheme bands, int context, std::uint64_t init_seed);

    const BandSplitScheme& bands() const { return bands_; }
    int context() const { return context_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Per-frame band-energy context features, frames x (num_bands*(2c+1) + 1);
    // the trailing column is the bias input (1).
    nn::Matrix features(const Spectrogram& spec) const;
    // frames x num_bands mask values in (0, 1).
    nn::Matrix predict_band_mask(const nn::Matrix& features) const;
    // Expands band values to a frames x bins mask.
    nn::Matrix expand_mask(const nn::Matrix& band_mask, std::size_t bins) const;

    void save(const std::string& path) const;
    static MaskModel load(const std::string& path);

private:
    BandSplitScheme bands_;
    int context_ = 2;
    nn::ParamStore params_;
};

struct SeparationResult {
    AudioClip ost;
    AudioClip bgm;
};

// ost = iSTFT(mask * S), bgm = iSTFT((1 - mask) * S); the two always sum to
// the iSTFT round trip of the input. Stereo input gets the mask estimated
// from the mono downmix applied to each channel.
SeparationResult separate_mixed_music(const AudioClip& clip, const MaskModel& model);

struct MaskTrainConfig {
    int epochs = 6;
    double lr = 0.03;
    double lambda_spec = 1.0;  // weight of the multi-resolution spectrogram term
    int context = 2;
    std::size_t n_bands = 8;
    std::vector<StftConfig> spec_configs = nn::default_multires_configs();
};

struct MaskTrainResult {
    MaskModel model;
    // Frozen train-split loss entering each epoch, plus one trailing entry
    // after the last update; front() is the untrained loss, back() the final.
    std::vector<double> epoch_loss;
};

// Trains on the manifest's train split with loss
//   time_mae(ost) + time_mae(bgm) + lambda * (spec_mae(ost) + spec_mae(bgm)),
// one Adam step per clip in manifest order; bit-reproducible given the seed.
MaskTrainResult train_mask_estimator(const MixManifest& manifest, const std::string& root,
                                     const MaskTrainConfig& cfg, std::uint64_t seed);

// One training clip's loss; with_grad accumulates parameter gradients into the
// model's store. Exposed so the gradient-certification tests can probe the
// full masking chain.
double mask_estimator_loss(MaskModel& model, const AudioClip& mix, const AudioClip& ost_ref,
                           const AudioClip& bgm_ref, const MaskTrainConfig& cfg, bool with_grad);

}  // namespace ostr
