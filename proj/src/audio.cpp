#include "ostr/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

namespace ostr {

AudioClip::AudioClip(std::vector<std::vector<double>> channels, int sample_rate_hz)
    : channels_(std::move(channels)), sample_rate_hz_(sample_rate_hz) {
    if (sample_rate_hz_ <= 0) throw std::invalid_argument("sample rate must be positive");
    if (channels_.empty()) throw std::invalid_argument("clip needs at least one channel");
    const std::size_t len = channels_[0].size();
    for (const auto& ch : channels_)
        if (ch.size() != len) throw std::invalid_argument("channel lengths differ");
}

AudioClip AudioClip::silence(int channels, std::size_t length, int sample_rate_hz) {
    return AudioClip(std::vector<std::vector<double>>(channels, std::vector<double>(length, 0.0)),
                     sample_rate_hz);
}

double AudioClip::peak() const {
    double p = 0.0;
    for (const auto& ch : channels_)
        for (double s : ch) p = std::max(p, std::fabs(s));
    return p;
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

}  // namespace

AudioClip load_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WavError(WavError::Kind::missing_file, "cannot open " + path);

    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw WavError(WavError::Kind::malformed_header, path + ": not a RIFF/WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::uint32_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* hdr = bytes.data() + pos;
        std::uint32_t chunk_size = read_u32(hdr + 4);
        const unsigned char* body = hdr + 8;
        std::size_t avail = bytes.size() - (pos + 8);

        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (chunk_size < 16 || avail < 16)
                throw WavError(WavError::Kind::malformed_header, path + ": fmt chunk too small");
            format = read_u16(body);
            channels = read_u16(body + 2);
            rate = read_u32(body + 4);
            bits = read_u16(body + 14);
            if (format == kFormatExtensible && chunk_size >= 40 && avail >= 40)
                format = read_u16(body + 24);  // first two bytes of the sub-format GUID
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            if (!have_fmt)
                throw WavError(WavError::Kind::malformed_header, path + ": data chunk before fmt");
            if (avail < chunk_size)
                throw WavError(WavError::Kind::truncated_data,
                               path + ": data chunk declares " + std::to_string(chunk_size) +
                                   " bytes but only " + std::to_string(avail) + " present");
            data = body;
            data_size = chunk_size;
            break;
        }
        pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr)
        throw WavError(WavError::Kind::malformed_header, path + ": missing fmt or data chunk");
    if (channels == 0 || rate == 0)
        throw WavError(WavError::Kind::malformed_header, path + ": zero channels or sample rate");

    std::size_t bytes_per_sample;
    if (format == kFormatPcm && bits == 16) bytes_per_sample = 2;
    else if (format == kFormatPcm && bits == 24) bytes_per_sample = 3;
    else if (format == kFormatFloat && bits == 32) bytes_per_sample = 4;
    else
        throw WavError(WavError::Kind::unsupported_encoding,
                       path + ": unsupported encoding (format " + std::to_string(format) + ", " +
                           std::to_string(bits) + " bits)");

    const std::size_t frame_bytes = bytes_per_sample * channels;
    if (data_size % frame_bytes != 0)
        throw WavError(WavError::Kind::truncated_data, path + ": data size is not a whole number of frames");
    const std::size_t frames = data_size / frame_bytes;

    std::vector<std::vector<double>> out(channels, std::vector<double>(frames));
    const unsigned char* p = data;
    for (std::size_t i = 0; i < frames; ++i) {
        for (int c = 0; c < channels; ++c) {
            double v;
            if (bytes_per_sample == 2) {
                auto s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
                v = static_cast<double>(s) / 32768.0;
            } else if (bytes_per_sample == 3) {
                std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
                if (s & 0x800000) s |= ~0xffffff;  // sign-extend
                v = static_cast<double>(s) / 8388608.0;
            } else {
                float fv;
                std::memcpy(&fv, p, 4);
                v = static_cast<double>(fv);
            }
            out[c][i] = v;
            p += bytes_per_sample;
        }
    }
    return AudioClip(std::move(out), static_cast<int>(rate));
}

void save_wav(const AudioClip& clip, const std::string& path, WavEncoding encoding) {
    if (clip.empty()) throw std::invalid_argument("refusing to write an empty clip");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw WavError(WavError::Kind::unwritable, "cannot write " + path);

    const int channels = clip.num_channels();
    const std::size_t frames = clip.length();
    const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
    const std::uint16_t fmt = encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat;
    const std::uint32_t byte_rate = clip.sample_rate_hz() * channels * bits / 8;
    const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
    const std::uint32_t data_size = static_cast<std::uint32_t>(frames * block_align);

    f.write("RIFF", 4);
    write_u32(f, 36 + data_size);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    write_u32(f, 16);
    write_u16(f, fmt);
    write_u16(f, static_cast<std::uint16_t>(channels));
    write_u32(f, static_cast<std::uint32_t>(clip.sample_rate_hz()));
    write_u32(f, byte_rate);
    write_u16(f, block_align);
    write_u16(f, bits);
    f.write("data", 4);
    write_u32(f, data_size);

    for (std::size_t i = 0; i < frames; ++i) {
        for (int c = 0; c < channels; ++c) {
            double v = clip.channel(c)[i];
            if (encoding == WavEncoding::pcm16) {
                long s = std::lround(v * 32768.0);
                s = std::clamp(s, -32768l, 32767l);
                write_u16(f, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
            } else {
                float fv = static_cast<float>(v);
                char b[4];
                std::memcpy(b, &fv, 4);
                f.write(b, 4);
            }
        }
    }
    if (!f) throw WavError(WavError::Kind::unwritable, "short write to " + path);
}

namespace {

// Windowed-sinc lowpass tap, Blackman window over [-half, half] taps.
double sinc_tap(double t, double cutoff, double half) {
    if (std::fabs(t) >= half) return 0.0;
    const double pi = std::numbers::pi;
    double s = (t == 0.0) ? 2.0 * cutoff : std::sin(2.0 * pi * cutoff * t) / (pi * t);
    double w = 0.42 + 0.5 * std::cos(pi * t / half) + 0.08 * std::cos(2.0 * pi * t / half);
    return s * w;
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_rate_hz) {
    if (target_rate_hz <= 0) throw std::invalid_argument("target rate must be positive");
    if (target_rate_hz == clip.sample_rate_hz()) return clip;

    const int src = clip.sample_rate_hz();
    const int g = std::gcd(src, target_rate_hz);
    const std::int64_t up = target_rate_hz / g;
    const std::int64_t down = src / g;

    const std::size_t in_len = clip.length();
    const std::size_t out_len =
        static_cast<std::size_t>(std::llround(static_cast<double>(in_len) * target_rate_hz / src));

    // 32 input-side taps each way; cutoff at 90% of the narrower Nyquist.
    const double ratio = static_cast<double>(up) / static_cast<double>(down);
    const double cutoff = 0.45 * std::min(1.0, ratio);
    const double half = 32.0 / std::min(1.0, ratio);

    std::vector<std::vector<double>> out(clip.num_channels(), std::vector<double>(out_len, 0.0));
    for (int c = 0; c < clip.num_channels(); ++c) {
        const auto& x = clip.channel(c);
        auto& y = out[c];
        for (std::size_t m = 0; m < out_len; ++m) {
            // Output sample m sits at input-time position m*down/up.
            const double center = static_cast<double>(m) * down / up;
            const auto lo = static_cast<std::int64_t>(std::ceil(center - half));
            const auto hi = static_cast<std::int64_t>(std::floor(center + half));
            double acc = 0.0, norm = 0.0;
            for (std::int64_t n = lo; n <= hi; ++n) {
                const double tap = sinc_tap(static_cast<double>(n) - center, cutoff, half);
                norm += tap;
                if (n >= 0 && n < static_cast<std::int64_t>(in_len)) acc += tap * x[n];
            }
            // Per-position normalization keeps DC exact.
            y[m] = norm != 0.0 ? acc / norm : 0.0;
        }
    }
    return AudioClip(std::move(out), target_rate_hz);
}

std::vector<AudioClip> segment(const AudioClip& clip, double clip_len_s, std::size_t max_segments) {
    if (clip_len_s <= 0.0) throw std::invalid_argument("segment length must be positive");
    const auto seg_len = static_cast<std::size_t>(std::llround(clip_len_s * clip.sample_rate_hz()));
    std::vector<AudioClip> result;
    if (seg_len == 0 || clip.length() < seg_len) return result;

    const std::size_t count = std::min(max_segments, clip.length() / seg_len);
    result.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<std::vector<double>> chans(clip.num_channels());
        for (int c = 0; c < clip.num_channels(); ++c) {
            const auto& src = clip.channel(c);
            chans[c].assign(src.begin() + i * seg_len, src.begin() + (i + 1) * seg_len);
        }
        result.emplace_back(std::move(chans), clip.sample_rate_hz());
    }
    return result;
}

MixResult mix(const AudioClip& a, const AudioClip& b) {
    if (a.num_channels() != b.num_channels() || a.length() != b.length() ||
        a.sample_rate_hz() != b.sample_rate_hz())
        throw std::invalid_argument("mix: shape or rate mismatch");

    std::vector<std::vector<double>> chans(a.num_channels(), std::vector<double>(a.length()));
    double peak = 0.0;
    for (int c = 0; c < a.num_channels(); ++c) {
        const auto& xa = a.channel(c);
        const auto& xb = b.channel(c);
        for (std::size_t i = 0; i < xa.size(); ++i) {
            const double v = xa[i] + xb[i];
            chans[c][i] = v;
            peak = std::max(peak, std::fabs(v));
        }
    }
    return {AudioClip(std::move(chans), a.sample_rate_hz()), peak};
}

AudioClip to_mono(const AudioClip& clip) {
    if (clip.num_channels() == 1) return clip;
    std::vector<double> mono(clip.length(), 0.0);
    for (int c = 0; c < clip.num_channels(); ++c) {
        const auto& ch = clip.channel(c);
        for (std::size_t i = 0; i < ch.size(); ++i) mono[i] += ch[i];
    }
    const double scale = 1.0 / clip.num_channels();
    for (double& v : mono) v *= scale;
    return AudioClip({std::move(mono)}, clip.sample_rate_hz());
}

}  // namespace ostr
