#include "ostr/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ostr/fft.hpp"
#include "ostr/audio.hpp"

namespace ostr {

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

namespace {

const std::vector<double>& require_mono(const AudioClip& clip, const char* who) {
    if (clip.num_channels() != 1)
        throw std::invalid_argument(std::string(who) + " expects a mono clip");
    return clip.channel(0);
}

}  // namespace

Spectrogram stft(const AudioClip& mono, const StftConfig& cfg) {
    const auto& samples = require_mono(mono, "stft");
    if (cfg.hop == 0 || cfg.hop > cfg.window_size)
        throw std::invalid_argument("stft: hop must be in [1, window_size]");

    std::vector<double> x;
    const std::size_t pad = cfg.centered ? cfg.window_size / 2 : 0;
    if (pad > 0) {
        x.assign(samples.size() + 2 * pad, 0.0);
        std::copy(samples.begin(), samples.end(), x.begin() + static_cast<std::ptrdiff_t>(pad));
    } else {
        x = samples;
    }
    if (x.size() < cfg.window_size) throw std::invalid_argument("stft: clip shorter than the window");

    const std::size_t frames = (x.size() - cfg.window_size) / cfg.hop + 1;
    const std::size_t bins = cfg.window_size / 2 + 1;
    const auto window = hann_window(cfg.window_size);

    Spectrogram spec;
    spec.frames = frames;
    spec.bins = bins;
    spec.config = cfg;
    spec.sample_rate_hz = mono.sample_rate_hz();
    spec.data.resize(frames * bins);

    RealFft fft(cfg.window_size);
    std::vector<double> buf(cfg.window_size);
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t off = t * cfg.hop;
        for (std::size_t i = 0; i < cfg.window_size; ++i) buf[i] = x[off + i] * window[i];
        fft.forward(buf.data(), buf.size(), &spec.data[t * bins]);
    }
    return spec;
}

AudioClip istft(const Spectrogram& spec) {
    const auto& cfg = spec.config;
    if (spec.bins != cfg.window_size / 2 + 1)
        throw std::invalid_argument("istft: bins do not match the config window size");
    if (spec.frames == 0) throw std::invalid_argument("istft: empty spectrogram");

    const std::size_t padded_len = (spec.frames - 1) * cfg.hop + cfg.window_size;
    const auto window = hann_window(cfg.window_size);

    std::vector<double> acc(padded_len, 0.0);
    std::vector<double> norm(padded_len, 0.0);
    RealFft fft(cfg.window_size);
    std::vector<double> frame(cfg.window_size);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        fft.inverse(&spec.data[t * spec.bins], frame.data());
        const std::size_t off = t * cfg.hop;
        for (std::size_t i = 0; i < cfg.window_size; ++i) {
            acc[off + i] += window[i] * frame[i];
            norm[off + i] += window[i] * window[i];
        }
    }
    for (std::size_t i = 0; i < padded_len; ++i)
        acc[i] = norm[i] > 1e-10 ? acc[i] / norm[i] : 0.0;

    if (cfg.centered) {
        const std::size_t pad = cfg.window_size / 2;
        const std::size_t out_len = padded_len > 2 * pad ? padded_len - 2 * pad : 0;
        std::vector<double> out(acc.begin() + static_cast<std::ptrdiff_t>(pad),
                                acc.begin() + static_cast<std::ptrdiff_t>(pad + out_len));
        return AudioClip({std::move(out)}, spec.sample_rate_hz);
    }
    return AudioClip({std::move(acc)}, spec.sample_rate_hz);
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular area-normalized filterbank over [0, fmax], kMelBands filters.
std::vector<double> mel_filterbank(std::size_t bins, double sample_rate_hz) {
    const double fmax = sample_rate_hz / 2.0;
    const double mel_max = hz_to_mel(fmax);
    std::vector<double> edges(kMelBands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(kMelBands + 1));

    std::vector<double> fb(kMelBands * bins, 0.0);
    const double bin_hz = fmax / static_cast<double>(bins - 1);
    for (std::size_t m = 0; m < kMelBands; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        const double area_norm = 2.0 / (hi - lo);
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            double v = 0.0;
            if (f > lo && f < mid) v = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi) v = (hi - f) / (hi - mid);
            fb[m * bins + k] = v * area_norm;
        }
    }
    return fb;
}

}  // namespace

MelSpectrogram log_mel_frames(const AudioClip& mono) {
    require_mono(mono, "log_mel_frames");
    if (mono.sample_rate_hz() != kAnalysisRateHz)
        throw std::invalid_argument("mel front end runs at 16 kHz");
    const Spectrogram spec = stft(mono, analysis_config());
    const auto fb = mel_filterbank(spec.bins, spec.sample_rate_hz);

    MelSpectrogram mel;
    mel.frames = spec.frames;
    mel.data.assign(spec.frames * kMelBands, 0.0);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        for (std::size_t m = 0; m < kMelBands; ++m) {
            double acc = 0.0;
            const double* w = &fb[m * spec.bins];
            for (std::size_t k = 0; k < spec.bins; ++k) acc += w[k] * std::norm(spec.at(t, k));
            mel.at(t, m) = std::log1p(acc);
        }
    }
    return mel;
}

MelSpectrogram mel_spectrogram(const AudioClip& mono) {
    if (mono.sample_rate_hz() != kAnalysisRateHz || mono.length() != 64000)
        throw std::invalid_argument("mel_spectrogram expects exactly 64,000 samples at 16 kHz");
    MelSpectrogram mel = log_mel_frames(mono);
    if (mel.frames != 398) throw std::logic_error("mel front end must produce 398 frames for 4 s");
    return mel;
}

void BandSplitScheme::validate(std::size_t bins) const {
    if (ranges.empty()) throw std::invalid_argument("band scheme has no ranges");
    std::size_t expect = 0;
    for (const auto& [start, end] : ranges) {
        if (start != expect || end <= start)
            throw std::invalid_argument("band scheme ranges must be contiguous and non-empty");
        expect = end;
    }
    if (expect != bins) throw std::invalid_argument("band scheme does not cover all bins");
}

BandSplitScheme default_band_scheme(std::size_t bins, std::size_t n_bands, int sample_rate_hz) {
    if (n_bands == 0 || n_bands > bins) throw std::invalid_argument("invalid band count");
    const double fmax = sample_rate_hz / 2.0;
    const double mel_max = hz_to_mel(fmax);

    std::vector<std::size_t> cuts(n_bands + 1, 0);
    cuts[n_bands] = bins;
    for (std::size_t b = 1; b < n_bands; ++b) {
        const double f = mel_to_hz(mel_max * static_cast<double>(b) / static_cast<double>(n_bands));
        auto k = static_cast<std::size_t>(std::lround(f / fmax * static_cast<double>(bins - 1)));
        cuts[b] = std::clamp(k, cuts[b - 1] + 1, bins - (n_bands - b));
    }

    BandSplitScheme scheme;
    for (std::size_t b = 0; b < n_bands; ++b) scheme.ranges.emplace_back(cuts[b], cuts[b + 1]);
    scheme.validate(bins);
    return scheme;
}

std::vector<SubBand> band_split(const Spectrogram& spec, const BandSplitScheme& scheme) {
    scheme.validate(spec.bins);
    std::vector<SubBand> bands;
    bands.reserve(scheme.num_bands());
    for (const auto& [start, end] : scheme.ranges) {
        SubBand sb;
        sb.start_bin = start;
        sb.end_bin = end;
        sb.frames = spec.frames;
        sb.data.resize(spec.frames * (end - start));
        for (std::size_t t = 0; t < spec.frames; ++t)
            for (std::size_t k = start; k < end; ++k)
                sb.data[t * (end - start) + (k - start)] = spec.at(t, k);
        bands.push_back(std::move(sb));
    }
    return bands;
}

Spectrogram band_join(const std::vector<SubBand>& bands, const StftConfig& cfg, int sample_rate_hz) {
    if (bands.empty()) throw std::invalid_argument("band_join: no bands");
    BandSplitScheme scheme;
    for (const auto& b : bands) scheme.ranges.emplace_back(b.start_bin, b.end_bin);
    const std::size_t bins = cfg.window_size / 2 + 1;
    scheme.validate(bins);

    Spectrogram spec;
    spec.frames = bands[0].frames;
    spec.bins = bins;
    spec.config = cfg;
    spec.sample_rate_hz = sample_rate_hz;
    spec.data.resize(spec.frames * bins);
    for (const auto& b : bands) {
        if (b.frames != spec.frames) throw std::invalid_argument("band_join: frame count mismatch");
        const std::size_t width = b.end_bin - b.start_bin;
        for (std::size_t t = 0; t < b.frames; ++t)
            for (std::size_t k = 0; k < width; ++k) spec.at(t, b.start_bin + k) = b.data[t * width + k];
    }
    return spec;
}

std::vector<double> onset_envelope(const AudioClip& mono) {
    require_mono(mono, "onset_envelope");
    AudioClip clip = mono.sample_rate_hz() == kAnalysisRateHz ? mono : resample(mono, kAnalysisRateHz);
    const MelSpectrogram mel = log_mel_frames(clip);
    if (mel.frames < 2) return {};

    std::vector<double> flux(mel.frames - 1, 0.0);
    for (std::size_t t = 0; t + 1 < mel.frames; ++t) {
        double acc = 0.0;
        for (std::size_t m = 0; m < kMelBands; ++m)
            acc += std::max(0.0, mel.at(t + 1, m) - mel.at(t, m));
        flux[t] = acc;
    }
    return flux;
}

}  // namespace ostr
