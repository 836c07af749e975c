#pragma once

#include "ostr/audio.hpp"

namespace ostr {

struct LoudnessReading {
    double integrated_lufs = 0.0;  // valid only when is_measurable
    int gated_block_count = 0;
    bool is_measurable = false;
};

// Gated integrated loudness: K-weighting pre-filter pair, 400 ms blocks with
// 75% overlap, -70 LUFS absolute gate, -10 LU relative gate. Filter
// coefficients use the published 48 kHz table verbatim and a bilinear redesign
// at other rates. Requires >= 400 ms of audio, 1 or 2 channels.
LoudnessReading measure_integrated_lufs(const AudioClip& clip);

struct NormalizeResult {
    AudioClip clip;
    double gain = 1.0;  // the single constant applied to every sample
};

// Scales the clip by one constant so the re-measured loudness lands within
// +/-0.1 LU of the target; the gain is refined at most 3 times because gating
// can shift after scaling. Throws if the clip is unmeasurable.
NormalizeResult normalize_to(const AudioClip& clip, double target_lufs = -23.0);

namespace detail {
struct Biquad {
    double b0, b1, b2, a1, a2;
};
// Exposed for the unit test that checks the redesign reproduces the 48 kHz table.
Biquad k_weight_shelf(double fs);
Biquad k_weight_highpass(double fs);
}  // namespace detail

}  // namespace ostr
