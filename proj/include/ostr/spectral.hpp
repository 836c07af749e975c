#pragma once

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include "ostr/audio.hpp"

namespace ostr {

struct StftConfig {
    std::size_t window_size = 400;
    std::size_t hop = 160;
    bool centered = false;  // window is always periodic Hann
};

// Fixed analysis front end: 4 s at 16 kHz -> 398 frames x 201 bins.
constexpr int kAnalysisRateHz = 16000;
constexpr std::size_t kAnalysisWindow = 400;
constexpr std::size_t kAnalysisHop = 160;
constexpr std::size_t kMelBands = 80;

inline StftConfig analysis_config() { return {kAnalysisWindow, kAnalysisHop, false}; }

// Complex STFT frames, row-major frames x bins with bins = window_size/2 + 1.
struct Spectrogram {
    std::size_t frames = 0;
    std::size_t bins = 0;
    StftConfig config;
    int sample_rate_hz = 0;
    std::vector<std::complex<double>> data;

    std::complex<double>& at(std::size_t t, std::size_t k) { return data[t * bins + k]; }
    const std::complex<double>& at(std::size_t t, std::size_t k) const { return data[t * bins + k]; }
};

// Non-negative log-compressed mel energies, row-major frames x kMelBands.
struct MelSpectrogram {
    std::size_t frames = 0;
    std::vector<double> data;

    double& at(std::size_t t, std::size_t m) { return data[t * kMelBands + m]; }
    double at(std::size_t t, std::size_t m) const { return data[t * kMelBands + m]; }
};

// Ordered half-open [start_bin, end_bin) ranges that are disjoint, contiguous
// and cover [0, bins).
struct BandSplitScheme {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;

    std::size_t num_bands() const { return ranges.size(); }
    void validate(std::size_t bins) const;  // throws on gaps, overlap or wrong coverage
};

// Mel-spaced band boundaries; the default 8-band partition of the analysis bins.
BandSplitScheme default_band_scheme(std::size_t bins, std::size_t n_bands = 8,
                                    int sample_rate_hz = kAnalysisRateHz);

struct SubBand {
    std::size_t start_bin = 0;
    std::size_t end_bin = 0;
    std::size_t frames = 0;
    std::vector<std::complex<double>> data;  // row-major frames x (end_bin - start_bin)
};

Spectrogram stft(const AudioClip& mono, const StftConfig& cfg);

// Normalized overlap-add inverse; exact wherever the squared-window coverage
// is nonzero, so istft(stft(x)) reconstructs the interior to float precision.
AudioClip istft(const Spectrogram& spec);

// Strict preprocessing contract: exactly 64,000 samples at 16 kHz in, exactly
// 398 x 80 out. Triangular area-normalized filters spanning 0-8 kHz over the
// power spectrum, compressed as log(1 + energy).
MelSpectrogram mel_spectrogram(const AudioClip& mono);

// Same mel front end without the fixed-length requirement.
MelSpectrogram log_mel_frames(const AudioClip& mono);

std::vector<SubBand> band_split(const Spectrogram& spec, const BandSplitScheme& scheme);

// Reassembles sub-bands; bit-exact inverse of band_split.
Spectrogram band_join(const std::vector<SubBand>& bands, const StftConfig& cfg, int sample_rate_hz);

// Half-wave-rectified spectral flux of the log-mel frames; length frames - 1.
std::vector<double> onset_envelope(const AudioClip& mono);

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

}  // namespace ostr
