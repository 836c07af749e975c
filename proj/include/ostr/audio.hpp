#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ostr {

// Multi-channel waveform, 64-bit float samples in nominal [-1, 1].
// All DSP in the library runs on doubles; 16/24-bit integer encodings exist
// only at the file boundary. Channels always have identical length.
class AudioClip {
public:
    AudioClip() = default;
    AudioClip(std::vector<std::vector<double>> channels, int sample_rate_hz);

    static AudioClip silence(int channels, std::size_t length, int sample_rate_hz);

    int num_channels() const { return static_cast<int>(channels_.size()); }
    int sample_rate_hz() const { return sample_rate_hz_; }
    std::size_t length() const { return channels_.empty() ? 0 : channels_[0].size(); }
    bool empty() const { return length() == 0; }
    double duration_s() const { return static_cast<double>(length()) / sample_rate_hz_; }

    const std::vector<double>& channel(int c) const { return channels_.at(c); }
    std::vector<double>& channel(int c) { return channels_.at(c); }
    const std::vector<std::vector<double>>& channels() const { return channels_; }

    double peak() const;

private:
    std::vector<std::vector<double>> channels_;
    int sample_rate_hz_ = 0;
};

enum class WavEncoding { pcm16, float32 };

// WAV I/O failures, reported distinctly so callers can tell a missing file
// from a corrupt one.
class WavError : public std::runtime_error {
public:
    enum class Kind { missing_file, malformed_header, unsupported_encoding, truncated_data, unwritable };

    WavError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// Reads RIFF/WAVE with 16-bit PCM, 24-bit PCM or 32-bit IEEE float samples,
// little-endian. Amplitudes are scaled into [-1, 1].
AudioClip load_wav(const std::string& path);

// pcm16 rounds to nearest with a saturating clamp at full scale; float32
// round-trips bit-exactly for float-representable samples.
void save_wav(const AudioClip& clip, const std::string& path, WavEncoding encoding);

// Band-limited rational resampling (polyphase windowed sinc, 64 taps per
// output sample). Output duration matches the input within one sample period.
AudioClip resample(const AudioClip& clip, int target_rate_hz);

// Splits into consecutive fixed-length clips starting at sample 0; the
// trailing remainder is discarded and at most max_segments are returned.
std::vector<AudioClip> segment(const AudioClip& clip, double clip_len_s, std::size_t max_segments);

struct MixResult {
    AudioClip clip;
    double peak_amplitude = 0.0;  // max |sample| of the sum, which may exceed 1
};

// Sample-wise sum. Values are left unclamped; clamping happens only at pcm16
// export time.
MixResult mix(const AudioClip& a, const AudioClip& b);

AudioClip to_mono(const AudioClip& clip);

}  // namespace ostr
