#include "ostr/separation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include <unistd.h>

#include "ostr/fft.hpp"

namespace fs = std::filesystem;

namespace ostr {

namespace {

// Masked spectra no longer factor as window * signal, so positions covered
// only by near-zero window taps would amplify leakage under the normalized
// overlap-add inverse. Padding a full window in front and a window-minus-hop
// margin behind keeps every real sample fully covered; the pads are cropped
// away after inversion.
std::size_t padded_length(std::size_t len, const StftConfig& cfg) {
    const std::size_t payload = cfg.window_size + len + (cfg.window_size - cfg.hop);
    const std::size_t steps = (payload - cfg.window_size + cfg.hop - 1) / cfg.hop;
    return cfg.window_size + steps * cfg.hop;
}

Spectrogram stft_covered(const AudioClip& mono, const StftConfig& cfg) {
    std::vector<double> x(padded_length(mono.length(), cfg), 0.0);
    std::copy(mono.channel(0).begin(), mono.channel(0).end(),
              x.begin() + static_cast<std::ptrdiff_t>(cfg.window_size));
    return stft(AudioClip({std::move(x)}, mono.sample_rate_hz()), cfg);
}

AudioClip istft_covered_crop(const Spectrogram& spec, std::size_t length) {
    AudioClip full = istft(spec);
    const std::size_t front = spec.config.window_size;
    if (full.length() < front + length)
        throw std::invalid_argument("istft crop: spectrogram too short");
    std::vector<double> x(full.channel(0).begin() + static_cast<std::ptrdiff_t>(front),
                          full.channel(0).begin() + static_cast<std::ptrdiff_t>(front + length));
    return AudioClip({std::move(x)}, spec.sample_rate_hz);
}

}  // namespace

Spectrogram analysis_stft(const AudioClip& mono) {
    if (mono.num_channels() != 1) throw std::invalid_argument("analysis_stft expects mono");
    return stft_covered(mono, analysis_config());
}

AudioClip istft_cropped(const Spectrogram& spec, std::size_t length) {
    return istft_covered_crop(spec, length);
}

// ---------------------------------------------------------------------------
// Two-stem separation
// ---------------------------------------------------------------------------

namespace {

double median_of(std::vector<double>& scratch) {
    const std::size_t mid = scratch.size() / 2;
    std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid),
                     scratch.end());
    return scratch[mid];
}

// Raised-cosine weight over the vocal band: 0 below 100 Hz, full from 200 Hz
// to 3.5 kHz, gone above 6 kHz.
double vocal_band_weight(double hz) {
    if (hz < 100.0 || hz > 6000.0) return 0.0;
    if (hz < 200.0) return 0.5 - 0.5 * std::cos(std::numbers::pi * (hz - 100.0) / 100.0);
    if (hz <= 3500.0) return 1.0;
    return 0.5 + 0.5 * std::cos(std::numbers::pi * (hz - 3500.0) / 2500.0);
}

TwoStemResult builtin_two_stem(const AudioClip& clip) {
    const int rate = clip.sample_rate_hz();
    const auto window = static_cast<std::size_t>(std::lround(rate * 0.025));
    const auto hop = static_cast<std::size_t>(std::lround(rate * 0.010));
    const StftConfig cfg{window, hop, false};

    const AudioClip mid = to_mono(clip);
    const Spectrogram smid = stft_covered(mid, cfg);

    Spectrogram sside;
    if (clip.num_channels() == 2) {
        std::vector<double> side(clip.length());
        for (std::size_t i = 0; i < side.size(); ++i)
            side[i] = 0.5 * (clip.channel(0)[i] - clip.channel(1)[i]);
        sside = stft_covered(AudioClip({std::move(side)}, rate), cfg);
    }

    const std::size_t frames = smid.frames, bins = smid.bins;
    std::vector<double> mag(frames * bins);
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(smid.data[i]);

    // HPSS-style harmonicity: sustained energy has a large time-median and a
    // small frequency-median.
    constexpr int kHalf = 8;
    constexpr double kEps = 1e-12;
    nn::Matrix vocal_mask(frames, bins);
    std::vector<double> scratch;
    scratch.reserve(2 * kHalf + 1);
    const double bin_hz = static_cast<double>(rate) / (2.0 * static_cast<double>(bins - 1));
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t k = 0; k < bins; ++k) {
            scratch.clear();
            for (int dt = -kHalf; dt <= kHalf; ++dt) {
                const std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(t) + dt;
                scratch.push_back(
                    tt >= 0 && tt < static_cast<std::ptrdiff_t>(frames)
                        ? mag[static_cast<std::size_t>(tt) * bins + k]
                        : 0.0);
            }
            const double h = median_of(scratch);

            scratch.clear();
            for (int dk = -kHalf; dk <= kHalf; ++dk) {
                const std::ptrdiff_t kk = static_cast<std::ptrdiff_t>(k) + dk;
                scratch.push_back(kk >= 0 && kk < static_cast<std::ptrdiff_t>(bins)
                                      ? mag[t * bins + static_cast<std::size_t>(kk)]
                                      : 0.0);
            }
            const double p = median_of(scratch);
            const double harm = h * h / (h * h + p * p + kEps);

            double mid_ratio = 1.0;
            if (clip.num_channels() == 2) {
                const double m2 = std::norm(smid.at(t, k));
                const double s2 = std::norm(sside.at(t, k));
                mid_ratio = m2 / (m2 + s2 + kEps);
            }
            vocal_mask(t, k) = vocal_band_weight(static_cast<double>(k) * bin_hz) * mid_ratio * harm;
        }
    }

    TwoStemResult result;
    std::vector<std::vector<double>> voc(clip.num_channels()), acc(clip.num_channels());
    for (int c = 0; c < clip.num_channels(); ++c) {
        const Spectrogram sc = stft_covered(AudioClip({clip.channel(c)}, rate), cfg);
        Spectrogram sv = sc, sa = sc;
        for (std::size_t t = 0; t < frames; ++t)
            for (std::size_t k = 0; k < bins; ++k) {
                sv.at(t, k) = sc.at(t, k) * vocal_mask(t, k);
                sa.at(t, k) = sc.at(t, k) * (1.0 - vocal_mask(t, k));
            }
        voc[c] = istft_covered_crop(sv, clip.length()).channel(0);
        acc[c] = istft_covered_crop(sa, clip.length()).channel(0);
    }
    result.vocals = AudioClip(std::move(voc), rate);
    result.accompaniment = AudioClip(std::move(acc), rate);
    return result;
}

std::atomic<std::uint64_t> g_stem_job_counter{0};

TwoStemResult external_two_stem(const AudioClip& clip, const std::string& command) {
    const fs::path dir = fs::temp_directory_path() /
                         ("ostr_stem_" + std::to_string(::getpid()) + "_" +
                          std::to_string(g_stem_job_counter.fetch_add(1)));
    fs::create_directories(dir);
    const fs::path input = dir / "input.wav";
    const fs::path out_dir = dir / "out";
    fs::create_directories(out_dir);

    TwoStemResult result;
    try {
        save_wav(clip, input.string(), WavEncoding::float32);
        const std::string cmd = command + " " + input.string() + " " + out_dir.string();
        const int rc = std::system(cmd.c_str());
        if (rc != 0)
            throw std::runtime_error("stem backend exited with status " + std::to_string(rc));
        const fs::path vocals = out_dir / "vocals.wav";
        const fs::path accomp = out_dir / "accompaniment.wav";
        if (!fs::exists(vocals) || !fs::exists(accomp))
            throw std::runtime_error("stem backend did not write vocals.wav and accompaniment.wav");
        result.vocals = load_wav(vocals.string());
        result.accompaniment = load_wav(accomp.string());
        if (result.vocals.length() != clip.length() ||
            result.accompaniment.length() != clip.length() ||
            result.vocals.sample_rate_hz() != clip.sample_rate_hz() ||
            result.accompaniment.sample_rate_hz() != clip.sample_rate_hz())
            throw std::runtime_error("stem backend output does not match the input rate/length");
    } catch (...) {
        std::error_code ec;
        fs::remove_all(dir, ec);
        throw;
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    return result;
}

}  // namespace

TwoStemResult separate_two_stem(const AudioClip& clip, const StemBackend& backend) {
    if (clip.duration_s() < 1.0)
        throw std::invalid_argument("separate_two_stem needs at least 1 s of audio");
    if (backend.kind == StemBackend::Kind::external) return external_two_stem(clip, backend.command);
    return builtin_two_stem(clip);
}

// ---------------------------------------------------------------------------
// Speech detection / extraction
// ---------------------------------------------------------------------------

SpeechSegments detect_speech(const AudioClip& clip, const VadConfig& cfg) {
    if (cfg.offset_db >= cfg.onset_db)
        throw std::invalid_argument("detect_speech: offset threshold must sit below onset");
    const AudioClip mono = to_mono(clip);
    const int rate = mono.sample_rate_hz();
    const auto window = static_cast<std::size_t>(std::lround(rate * 0.025));
    const auto hop = static_cast<std::size_t>(std::lround(rate * 0.010));
    if (mono.length() < window) return {};

    const Spectrogram spec = stft(mono, StftConfig{window, hop, false});
    const std::size_t frames = spec.frames, bins = spec.bins;
    constexpr double kEps = 1e-12;

    const auto& x = mono.channel(0);
    std::vector<double> power_db(frames), flatness(frames), flux(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        double p = 0.0;
        for (std::size_t i = 0; i < window; ++i) p += x[t * hop + i] * x[t * hop + i];
        power_db[t] = 10.0 * std::log10(p / static_cast<double>(window) + kEps);

        double log_sum = 0.0, lin_sum = 0.0;
        for (std::size_t k = 1; k < bins; ++k) {
            const double pk = std::norm(spec.at(t, k));
            log_sum += std::log(pk + kEps);
            lin_sum += pk;
        }
        const double n = static_cast<double>(bins - 1);
        flatness[t] = std::exp(log_sum / n) / (lin_sum / n + kEps);

        if (t > 0) {
            double rise = 0.0, total = 0.0;
            for (std::size_t k = 0; k < bins; ++k) {
                const double cur = std::abs(spec.at(t, k));
                rise += std::max(0.0, cur - std::abs(spec.at(t - 1, k)));
                total += cur;
            }
            flux[t] = rise / (total + kEps);
        }
    }
    if (frames > 1) flux[0] = flux[1];

    std::vector<bool> speech(frames, false);
    bool state = false;
    for (std::size_t t = 0; t < frames; ++t) {
        if (power_db[t] > cfg.onset_db) state = true;
        else if (power_db[t] < cfg.offset_db) state = false;
        const bool tonal_stationary = flatness[t] < cfg.flatness_floor && flux[t] < cfg.flux_floor;
        speech[t] = state && !tonal_stationary;
    }

    const double duration = mono.duration_s();
    SpeechSegments raw;
    for (std::size_t t = 0; t < frames; ++t) {
        if (!speech[t]) continue;
        std::size_t end = t;
        while (end + 1 < frames && speech[end + 1]) ++end;
        raw.push_back({static_cast<double>(t * hop) / rate,
                       static_cast<double>(end * hop + window) / rate});
        t = end;
    }

    SpeechSegments merged;
    for (auto seg : raw) {
        seg.start_s = std::max(0.0, seg.start_s - cfg.hangover_s);
        seg.end_s = std::min(duration, seg.end_s + cfg.hangover_s);
        if (!merged.empty() && seg.start_s - merged.back().end_s < cfg.merge_gap_s)
            merged.back().end_s = std::max(merged.back().end_s, seg.end_s);
        else
            merged.push_back(seg);
    }
    return merged;
}

AudioClip extract_speech(const AudioClip& clip, const SpeechSegments& segments) {
    const double duration = clip.duration_s();
    for (const auto& seg : segments)
        if (seg.start_s < 0.0 || seg.end_s > duration + 1e-9 || seg.start_s >= seg.end_s)
            throw std::invalid_argument("extract_speech: segment out of range");

    std::vector<char> keep(clip.length(), 0);
    for (const auto& seg : segments) {
        const auto lo = static_cast<std::size_t>(std::llround(seg.start_s * clip.sample_rate_hz()));
        const auto hi = std::min(clip.length(),
                                 static_cast<std::size_t>(std::llround(seg.end_s * clip.sample_rate_hz())));
        for (std::size_t i = lo; i < hi; ++i) keep[i] = 1;
    }

    std::vector<std::vector<double>> chans(clip.num_channels(), std::vector<double>(clip.length(), 0.0));
    for (int c = 0; c < clip.num_channels(); ++c)
        for (std::size_t i = 0; i < clip.length(); ++i)
            if (keep[i]) chans[c][i] = clip.channel(c)[i];
    return AudioClip(std::move(chans), clip.sample_rate_hz());
}

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

std::pair<nn::Matrix, nn::Matrix> oracle_irm(const Spectrogram& spec_ost,
                                             const Spectrogram& spec_bgm) {
    if (spec_ost.frames != spec_bgm.frames || spec_ost.bins != spec_bgm.bins)
        throw std::invalid_argument("oracle_irm: shape mismatch");
    constexpr double kEps = 1e-12;
    nn::Matrix m_ost(spec_ost.frames, spec_ost.bins), m_bgm(spec_ost.frames, spec_ost.bins);
    for (std::size_t t = 0; t < spec_ost.frames; ++t)
        for (std::size_t k = 0; k < spec_ost.bins; ++k) {
            const double po = std::norm(spec_ost.at(t, k));
            const double pb = std::norm(spec_bgm.at(t, k));
            const double m = po / (po + pb + kEps);
            m_ost(t, k) = m;
            m_bgm(t, k) = 1.0 - m;
        }
    return {std::move(m_ost), std::move(m_bgm)};
}

Spectrogram apply_mask(const Spectrogram& spec_mix, const nn::Matrix& mask) {
    if (mask.rows() != spec_mix.frames || mask.cols() != spec_mix.bins)
        throw std::invalid_argument("apply_mask: shape mismatch");
    Spectrogram out = spec_mix;
    for (std::size_t t = 0; t < out.frames; ++t)
        for (std::size_t k = 0; k < out.bins; ++k) out.at(t, k) *= mask(t, k);
    return out;
}

// ---------------------------------------------------------------------------
// Mask estimator
// ---------------------------------------------------------------------------

MaskModel::MaskModel(BandSplitScheme bands, int context, std::uint64_t init_seed)
    : bands_(std::move(bands)), context_(context) {
    const std::size_t b = bands_.num_bands();
    const std::size_t dim = b * (2 * static_cast<std::size_t>(context_) + 1);
    Rng rng(init_seed);
    params_.add("mask/weights", nn::Matrix::randn(b, dim, rng, 0.05));
    params_.add("mask/bias", nn::Matrix(b, 1));
}

nn::Matrix MaskModel::features(const Spectrogram& spec) const {
    const std::size_t b = bands_.num_bands();
    const std::size_t span = 2 * static_cast<std::size_t>(context_) + 1;

    nn::Matrix band_energy(spec.frames, b);
    for (std::size_t t = 0; t < spec.frames; ++t)
        for (std::size_t band = 0; band < b; ++band) {
            const auto [lo, hi] = bands_.ranges[band];
            double acc = 0.0;
            for (std::size_t k = lo; k < hi; ++k) acc += std::norm(spec.at(t, k));
            band_energy(t, band) = std::log1p(acc / static_cast<double>(hi - lo));
        }

    nn::Matrix x(spec.frames, b * span);
    for (std::size_t t = 0; t < spec.frames; ++t)
        for (std::size_t s = 0; s < span; ++s) {
            const std::ptrdiff_t tt =
                static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(s) - context_;
            if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(spec.frames)) continue;
            for (std::size_t band = 0; band < b; ++band)
                x(t, s * b + band) = band_energy(static_cast<std::size_t>(tt), band);
        }
    return x;
}

nn::Matrix MaskModel::predict_band_mask(const nn::Matrix& features) const {
    const auto& w = params_.value("mask/weights");
    const auto& bias = params_.value("mask/bias");
    nn::Matrix z = nn::matmul_transpose_b(features, w);
    nn::Matrix m(z.rows(), z.cols());
    for (std::size_t t = 0; t < z.rows(); ++t)
        for (std::size_t band = 0; band < z.cols(); ++band)
            m(t, band) = 1.0 / (1.0 + std::exp(-(z(t, band) + bias(band, 0))));
    return m;
}

nn::Matrix MaskModel::expand_mask(const nn::Matrix& band_mask, std::size_t bins) const {
    bands_.validate(bins);
    nn::Matrix mask(band_mask.rows(), bins);
    for (std::size_t band = 0; band < bands_.num_bands(); ++band) {
        const auto [lo, hi] = bands_.ranges[band];
        for (std::size_t t = 0; t < band_mask.rows(); ++t)
            for (std::size_t k = lo; k < hi; ++k) mask(t, k) = band_mask(t, band);
    }
    return mask;
}

void MaskModel::save(const std::string& path) const {
    nn::ParamStore store;
    for (const auto& [name, e] : params_.entries()) store.add(name, e.value);
    nn::Matrix bands_m(bands_.num_bands(), 2);
    for (std::size_t i = 0; i < bands_.num_bands(); ++i) {
        bands_m(i, 0) = static_cast<double>(bands_.ranges[i].first);
        bands_m(i, 1) = static_cast<double>(bands_.ranges[i].second);
    }
    store.add("meta/bands", std::move(bands_m));
    nn::Matrix ctx(1, 1);
    ctx(0, 0) = context_;
    store.add("meta/context", std::move(ctx));
    store.save(path);
}

MaskModel MaskModel::load(const std::string& path) {
    nn::ParamStore store = nn::ParamStore::load(path);
    MaskModel model;
    const auto& bands_m = store.value("meta/bands");
    for (std::size_t i = 0; i < bands_m.rows(); ++i)
        model.bands_.ranges.emplace_back(static_cast<std::size_t>(bands_m(i, 0)),
                                         static_cast<std::size_t>(bands_m(i, 1)));
    model.context_ = static_cast<int>(store.value("meta/context")(0, 0));
    for (const auto& [name, e] : store.entries())
        if (!name.starts_with("meta/")) model.params_.add(name, e.value);
    return model;
}

SeparationResult separate_mixed_music(const AudioClip& clip, const MaskModel& model) {
    if (clip.sample_rate_hz() != kAnalysisRateHz)
        throw std::invalid_argument("separate_mixed_music: clip must be at the analysis rate");

    const AudioClip mono = to_mono(clip);
    const Spectrogram smix = analysis_stft(mono);
    const nn::Matrix band_mask = model.predict_band_mask(model.features(smix));
    const nn::Matrix mask = model.expand_mask(band_mask, smix.bins);

    std::vector<std::vector<double>> ost(clip.num_channels()), bgm(clip.num_channels());
    for (int c = 0; c < clip.num_channels(); ++c) {
        const Spectrogram sc =
            clip.num_channels() == 1 ? smix : analysis_stft(AudioClip({clip.channel(c)}, kAnalysisRateHz));
        Spectrogram so = sc, sb = sc;
        for (std::size_t i = 0; i < sc.data.size(); ++i) {
            const double m = mask.data()[i];
            so.data[i] = sc.data[i] * m;
            sb.data[i] = sc.data[i] * (1.0 - m);
        }
        ost[c] = istft_cropped(so, clip.length()).channel(0);
        bgm[c] = istft_cropped(sb, clip.length()).channel(0);
    }
    return {AudioClip(std::move(ost), kAnalysisRateHz), AudioClip(std::move(bgm), kAnalysisRateHz)};
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

// Adjoint of (istft then crop to the real-sample span): scatters the
// time-domain gradient back onto the complex frames. grad_time is indexed in
// real samples; padded position window_size + n maps to real sample n.
void istft_adjoint(const Spectrogram& spec, const std::vector<double>& grad_time,
                   std::size_t length, Spectrogram& grad_spec) {
    const auto& cfg = spec.config;
    const std::size_t padded_len = (spec.frames - 1) * cfg.hop + cfg.window_size;
    const std::size_t front = cfg.window_size;
    const auto window = hann_window(cfg.window_size);

    std::vector<double> norm(padded_len, 0.0);
    for (std::size_t t = 0; t < spec.frames; ++t)
        for (std::size_t i = 0; i < cfg.window_size; ++i)
            norm[t * cfg.hop + i] += window[i] * window[i];

    grad_spec = spec;
    std::fill(grad_spec.data.begin(), grad_spec.data.end(), std::complex<double>(0.0, 0.0));

    RealFft fft(cfg.window_size);
    std::vector<double> v(cfg.window_size);
    std::vector<std::complex<double>> f(spec.bins);
    const double n = static_cast<double>(cfg.window_size);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        const std::size_t off = t * cfg.hop;
        for (std::size_t i = 0; i < cfg.window_size; ++i) {
            const std::size_t idx = off + i;
            const bool in_crop = idx >= front && idx < front + length;
            const double g =
                in_crop && norm[idx] > 1e-10 ? grad_time[idx - front] / norm[idx] : 0.0;
            v[i] = g * window[i];
        }
        fft.forward(v.data(), v.size(), f.data());
        for (std::size_t k = 0; k < spec.bins; ++k) {
            const double ck = (k == 0 || (cfg.window_size % 2 == 0 && k == spec.bins - 1)) ? 1.0 : 2.0;
            grad_spec.at(t, k) = f[k] * (ck / n);
        }
    }
}

}  // namespace

// Loss and (optionally) parameter gradients for one training clip. Exposed
// through the training entry point and the gradient-certification tests.
double mask_estimator_loss(MaskModel& model, const AudioClip& mix, const AudioClip& ost_ref,
                           const AudioClip& bgm_ref, const MaskTrainConfig& cfg, bool with_grad) {
    const AudioClip mono = to_mono(mix);
    const std::size_t length = mono.length();

    const Spectrogram smix = analysis_stft(mono);
    const nn::Matrix x = model.features(smix);
    const nn::Matrix band_mask = model.predict_band_mask(x);
    const nn::Matrix mask = model.expand_mask(band_mask, smix.bins);

    Spectrogram so = smix, sb = smix;
    for (std::size_t i = 0; i < smix.data.size(); ++i) {
        const double m = mask.data()[i];
        so.data[i] = smix.data[i] * m;
        sb.data[i] = smix.data[i] * (1.0 - m);
    }
    const AudioClip ost_est = istft_cropped(so, length);
    const AudioClip bgm_est = istft_cropped(sb, length);

    AudioClip g_time_ost, g_time_bgm, g_spec_ost, g_spec_bgm;
    double loss = 0.0;
    loss += nn::time_mae(ost_est, ost_ref, with_grad ? &g_time_ost : nullptr);
    loss += nn::time_mae(bgm_est, bgm_ref, with_grad ? &g_time_bgm : nullptr);
    loss += cfg.lambda_spec *
            nn::multires_spec_mae(ost_est, ost_ref, cfg.spec_configs, with_grad ? &g_spec_ost : nullptr);
    loss += cfg.lambda_spec *
            nn::multires_spec_mae(bgm_est, bgm_ref, cfg.spec_configs, with_grad ? &g_spec_bgm : nullptr);
    if (!std::isfinite(loss)) throw std::runtime_error("mask estimator loss is not finite");
    if (!with_grad) return loss;

    std::vector<double> g_ost(length), g_bgm(length);
    for (std::size_t i = 0; i < length; ++i) {
        g_ost[i] = g_time_ost.channel(0)[i] + cfg.lambda_spec * g_spec_ost.channel(0)[i];
        g_bgm[i] = g_time_bgm.channel(0)[i] + cfg.lambda_spec * g_spec_bgm.channel(0)[i];
    }

    Spectrogram gso, gsb;
    istft_adjoint(so, g_ost, length, gso);
    istft_adjoint(sb, g_bgm, length, gsb);

    // d/dmask: ost path sees +S, bgm path sees -S.
    const std::size_t b = model.bands().num_bands();
    nn::Matrix d_band(band_mask.rows(), b);
    for (std::size_t band = 0; band < b; ++band) {
        const auto [lo, hi] = model.bands().ranges[band];
        for (std::size_t t = 0; t < smix.frames; ++t) {
            double acc = 0.0;
            for (std::size_t k = lo; k < hi; ++k) {
                const auto s = smix.at(t, k);
                const auto go = gso.at(t, k);
                const auto gb = gsb.at(t, k);
                acc += (go.real() - gb.real()) * s.real() + (go.imag() - gb.imag()) * s.imag();
            }
            d_band(t, band) = acc;
        }
    }

    auto& dw = model.params().grad("mask/weights");
    auto& dbias = model.params().grad("mask/bias");
    for (std::size_t t = 0; t < band_mask.rows(); ++t)
        for (std::size_t band = 0; band < b; ++band) {
            const double m = band_mask(t, band);
            const double delta = d_band(t, band) * m * (1.0 - m);
            if (delta == 0.0) continue;
            for (std::size_t d = 0; d < x.cols(); ++d) dw(band, d) += delta * x(t, d);
            dbias(band, 0) += delta;
        }
    return loss;
}

MaskTrainResult train_mask_estimator(const MixManifest& manifest, const std::string& root,
                                     const MaskTrainConfig& cfg, std::uint64_t seed) {
    const auto train = manifest.split_entries("train");
    if (train.empty()) throw std::runtime_error("train split is empty");

    const std::size_t bins = kAnalysisWindow / 2 + 1;
    MaskModel model(default_band_scheme(bins, cfg.n_bands), cfg.context, seed);

    auto frozen_loss = [&]() {
        double acc = 0.0;
        for (const auto& e : train) {
            const AudioClip mix = load_wav((fs::path(root) / e.mixture_path).string());
            const AudioClip ost = load_wav((fs::path(root) / e.ost_ref_path).string());
            const AudioClip bgm = load_wav((fs::path(root) / e.bgm_ref_path).string());
            acc += mask_estimator_loss(model, mix, ost, bgm, cfg, false);
        }
        return acc / static_cast<double>(train.size());
    };

    MaskTrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        result.epoch_loss.push_back(frozen_loss());
        for (const auto& e : train) {
            const AudioClip mix = load_wav((fs::path(root) / e.mixture_path).string());
            const AudioClip ost = load_wav((fs::path(root) / e.ost_ref_path).string());
            const AudioClip bgm = load_wav((fs::path(root) / e.bgm_ref_path).string());

            model.params().zero_grads();
            mask_estimator_loss(model, mix, ost, bgm, cfg, true);
            nn::adam_step(model.params(), cfg.lr);
        }
    }
    result.epoch_loss.push_back(frozen_loss());
    result.model = std::move(model);
    return result;
}

}  // namespace ostr
