#include "ostr/loudness.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace ostr {

namespace detail {

Biquad k_weight_shelf(double fs) {
    if (fs == 48000.0)
        return {1.53512485958697, -2.69169618940638, 1.19839281085285,
                -1.69065929318241, 0.73248077421585};
    // Shelving-stage parameters recovered from the published 48 kHz table.
    const double f0 = 1681.9744509555319;
    const double gain_db = 3.999843853973347;
    const double q = 0.7071752369554193;

    const double k = std::tan(std::numbers::pi * f0 / fs);
    const double vh = std::pow(10.0, gain_db / 20.0);
    const double vb = std::pow(vh, 0.4996667741545416);
    const double a0 = 1.0 + k / q + k * k;
    return {(vh + vb * k / q + k * k) / a0,
            2.0 * (k * k - vh) / a0,
            (vh - vb * k / q + k * k) / a0,
            2.0 * (k * k - 1.0) / a0,
            (1.0 - k / q + k * k) / a0};
}

Biquad k_weight_highpass(double fs) {
    if (fs == 48000.0)
        return {1.0, -2.0, 1.0, -1.99004745483398, 0.99007225036621};
    const double f0 = 38.13547087613982;
    const double q = 0.5003270373223665;

    const double k = std::tan(std::numbers::pi * f0 / fs);
    const double a0 = 1.0 + k / q + k * k;
    return {1.0, -2.0, 1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
}

}  // namespace detail

namespace {

std::vector<double> apply_biquad(const std::vector<double>& x, const detail::Biquad& c) {
    std::vector<double> y(x.size());
    double z1 = 0.0, z2 = 0.0;  // direct form II transposed
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double out = c.b0 * x[i] + z1;
        z1 = c.b1 * x[i] - c.a1 * out + z2;
        z2 = c.b2 * x[i] - c.a2 * out;
        y[i] = out;
    }
    return y;
}

constexpr double kAbsoluteGateLufs = -70.0;
constexpr double kLoudnessOffset = -0.691;

}  // namespace

LoudnessReading measure_integrated_lufs(const AudioClip& clip) {
    const double fs = clip.sample_rate_hz();
    if (clip.num_channels() < 1 || clip.num_channels() > 2)
        throw std::invalid_argument("loudness meter handles 1 or 2 channels");
    const auto block = static_cast<std::size_t>(std::lround(0.400 * fs));
    const auto step = static_cast<std::size_t>(std::lround(0.100 * fs));
    if (clip.length() < block) throw std::invalid_argument("clip shorter than one 400 ms gating block");

    const auto shelf = detail::k_weight_shelf(fs);
    const auto highpass = detail::k_weight_highpass(fs);

    // Per-block weighted power, summed over channels (weight 1.0 for L/R).
    const std::size_t n_blocks = (clip.length() - block) / step + 1;
    std::vector<double> block_power(n_blocks, 0.0);
    for (int c = 0; c < clip.num_channels(); ++c) {
        const auto weighted = apply_biquad(apply_biquad(clip.channel(c), shelf), highpass);
        for (std::size_t j = 0; j < n_blocks; ++j) {
            double acc = 0.0;
            const std::size_t start = j * step;
            for (std::size_t i = start; i < start + block; ++i) acc += weighted[i] * weighted[i];
            block_power[j] += acc / static_cast<double>(block);
        }
    }

    auto block_loudness = [](double z) { return kLoudnessOffset + 10.0 * std::log10(z); };

    double abs_sum = 0.0;
    std::size_t abs_count = 0;
    for (double z : block_power) {
        if (z > 0.0 && block_loudness(z) > kAbsoluteGateLufs) {
            abs_sum += z;
            ++abs_count;
        }
    }
    if (abs_count == 0) return {0.0, 0, false};

    const double relative_gate = block_loudness(abs_sum / abs_count) - 10.0;
    double sum = 0.0;
    int count = 0;
    for (double z : block_power) {
        if (z > 0.0) {
            const double l = block_loudness(z);
            if (l > kAbsoluteGateLufs && l > relative_gate) {
                sum += z;
                ++count;
            }
        }
    }
    if (count == 0) return {0.0, 0, false};
    return {block_loudness(sum / count), count, true};
}

NormalizeResult normalize_to(const AudioClip& clip, double target_lufs) {
    LoudnessReading reading = measure_integrated_lufs(clip);
    if (!reading.is_measurable) throw std::invalid_argument("cannot normalize an unmeasurable clip");

    AudioClip current = clip;
    double total_gain = 1.0;
    for (int iter = 0; iter < 3; ++iter) {
        const double gain = std::pow(10.0, (target_lufs - reading.integrated_lufs) / 20.0);
        for (int c = 0; c < current.num_channels(); ++c)
            for (double& v : current.channel(c)) v *= gain;
        total_gain *= gain;
        reading = measure_integrated_lufs(current);
        if (!reading.is_measurable)
            throw std::runtime_error("clip became unmeasurable while normalizing");
        if (std::fabs(reading.integrated_lufs - target_lufs) <= 0.1) break;
    }

    // Re-apply as one exact constant so output/input is a single ratio.
    AudioClip out = clip;
    for (int c = 0; c < out.num_channels(); ++c)
        for (double& v : out.channel(c)) v *= total_gain;
    return {std::move(out), total_gain};
}

}  // namespace ostr
