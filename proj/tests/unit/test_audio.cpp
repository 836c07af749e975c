#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ostr/audio.hpp"
#include "ostr/rng.hpp"
#include "synth.hpp"

using namespace ostr;
namespace ts = ostr::testsupport;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("audio");

TEST_CASE("pcm16 load reports duration from header fields") {
    const auto dir = ts::make_temp_dir("wav");
    const AudioClip clip = ts::sine(440.0, 4.0, 16000, 0.5);
    REQUIRE(clip.length() == 64000);
    save_wav(clip, dir + "/a.wav", WavEncoding::pcm16);

    const AudioClip loaded = load_wav(dir + "/a.wav");
    CHECK(loaded.sample_rate_hz() == 16000);
    CHECK(loaded.length() == 64000);
    CHECK(loaded.duration_s() == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("float32 save/load round trip is bit exact") {
    const auto dir = ts::make_temp_dir("wav");
    Rng rng(11);
    // Float-representable samples: anything that made it through a float file.
    AudioClip clip = ts::white_noise(0.3, 44100, 0.9, rng, 2);
    for (int c = 0; c < 2; ++c)
        for (double& v : clip.channel(c)) v = static_cast<double>(static_cast<float>(v));

    save_wav(clip, dir + "/f.wav", WavEncoding::float32);
    const AudioClip loaded = load_wav(dir + "/f.wav");
    REQUIRE(loaded.num_channels() == 2);
    REQUIRE(loaded.length() == clip.length());
    for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < clip.length(); ++i)
            CHECK(loaded.channel(c)[i] == clip.channel(c)[i]);
}

TEST_CASE("pcm16 quantization error is bounded by one LSB") {
    const auto dir = ts::make_temp_dir("wav");
    const AudioClip clip = ts::sine(997.0, 0.5, 48000, 1.0);  // full scale
    save_wav(clip, dir + "/q.wav", WavEncoding::pcm16);
    const AudioClip loaded = load_wav(dir + "/q.wav");
    double worst = 0.0;
    for (std::size_t i = 0; i < clip.length(); ++i)
        worst = std::max(worst, std::fabs(loaded.channel(0)[i] - clip.channel(0)[i]));
    CHECK(worst <= 1.0 / 32768.0);
}

TEST_CASE("pcm24 files load and scale correctly") {
    const auto dir = ts::make_temp_dir("wav");
    // Hand-rolled 24-bit file: 4 samples, mono, 8 kHz.
    std::ofstream f(dir + "/p24.wav", std::ios::binary);
    auto u32 = [&f](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&f](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
    f.write("RIFF", 4);
    u32(36 + 12);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(1);
    u32(8000);
    u32(8000 * 3);
    u16(3);
    u16(24);
    f.write("data", 4);
    u32(12);
    const std::int32_t samples[4] = {0, 0x400000, -0x800000, 0x7fffff};
    for (std::int32_t s : samples) {
        f.put(static_cast<char>(s & 0xff));
        f.put(static_cast<char>((s >> 8) & 0xff));
        f.put(static_cast<char>((s >> 16) & 0xff));
    }
    f.close();

    const AudioClip clip = load_wav(dir + "/p24.wav");
    REQUIRE(clip.length() == 4);
    CHECK(clip.channel(0)[0] == doctest::Approx(0.0));
    CHECK(clip.channel(0)[1] == doctest::Approx(0.5));
    CHECK(clip.channel(0)[2] == doctest::Approx(-1.0));
    CHECK(clip.channel(0)[3] == doctest::Approx(8388607.0 / 8388608.0));
}

TEST_CASE("wav errors are reported distinctly") {
    const auto dir = ts::make_temp_dir("wav");

    SUBCASE("missing file") {
        try {
            load_wav(dir + "/nope.wav");
            FAIL("expected a WavError");
        } catch (const WavError& e) {
            CHECK(e.kind() == WavError::Kind::missing_file);
        }
    }
    SUBCASE("malformed header") {
        std::ofstream(dir + "/bad.wav") << "definitely not a wav";
        try {
            load_wav(dir + "/bad.wav");
            FAIL("expected a WavError");
        } catch (const WavError& e) {
            CHECK(e.kind() == WavError::Kind::malformed_header);
        }
    }
    SUBCASE("truncated data chunk") {
        const AudioClip clip = ts::sine(440.0, 0.1, 16000, 0.5);
        save_wav(clip, dir + "/t.wav", WavEncoding::pcm16);
        const auto full = fs::file_size(dir + "/t.wav");
        fs::resize_file(dir + "/t.wav", full - 100);
        try {
            load_wav(dir + "/t.wav");
            FAIL("expected a WavError");
        } catch (const WavError& e) {
            CHECK(e.kind() == WavError::Kind::truncated_data);
        }
    }
    SUBCASE("unsupported encoding") {
        std::ofstream f(dir + "/u.wav", std::ios::binary);
        auto u32 = [&f](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
        auto u16 = [&f](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
        f.write("RIFF", 4);
        u32(36);
        f.write("WAVE", 4);
        f.write("fmt ", 4);
        u32(16);
        u16(1);
        u16(1);
        u32(8000);
        u32(8000);
        u16(1);
        u16(8);  // 8-bit PCM is not supported
        f.write("data", 4);
        u32(0);
        f.close();
        try {
            load_wav(dir + "/u.wav");
            FAIL("expected a WavError");
        } catch (const WavError& e) {
            CHECK(e.kind() == WavError::Kind::unsupported_encoding);
        }
    }
    SUBCASE("empty clip refuses to save") {
        CHECK_THROWS(save_wav(AudioClip::silence(1, 0, 16000), dir + "/e.wav", WavEncoding::pcm16));
    }
}

TEST_CASE("resample preserves DC") {
    const AudioClip dc(std::vector<std::vector<double>>{std::vector<double>(4800, 0.5)}, 48000);
    const AudioClip out = resample(dc, 16000);
    REQUIRE(out.length() == 1600);
    for (std::size_t i = 100; i + 100 < out.length(); ++i)
        CHECK(out.channel(0)[i] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("resample keeps a 440 Hz tone at 440 Hz") {
    const AudioClip tone = ts::sine(440.0, 2.0, 48000, 0.5);
    const AudioClip out = resample(tone, 16000);
    CHECK(out.length() == 32000);
    CHECK(ts::fft_peak_hz(out) == doctest::Approx(440.0).epsilon(0.5 / 440.0));
}

TEST_CASE("resample at the same rate is the identity") {
    const AudioClip tone = ts::sine(440.0, 0.5, 16000, 0.5);
    const AudioClip out = resample(tone, 16000);
    REQUIRE(out.length() == tone.length());
    for (std::size_t i = 0; i < out.length(); ++i)
        CHECK(out.channel(0)[i] == tone.channel(0)[i]);
}

TEST_CASE("up-down round trip keeps band-limited content (SNR >= 40 dB)") {
    // resample(resample(x, 2r), r) for x with energy below 0.4 * r.
    const AudioClip x = ts::tone_stack({300.0, 1234.0, 3500.0, 5600.0}, 1.0, 16000, 0.4);
    const AudioClip up = resample(x, 32000);
    const AudioClip back = resample(up, 16000);
    REQUIRE(back.length() == x.length());
    CHECK(ts::snr_db(x.channel(0), back.channel(0), 256) >= 40.0);

    // And the lossy direction for good measure.
    const AudioClip x2 = ts::tone_stack({300.0, 1234.0, 3500.0, 5600.0}, 1.0, 32000, 0.4);
    const AudioClip down = resample(x2, 16000);
    const AudioClip up2 = resample(down, 32000);
    REQUIRE(up2.length() == x2.length());
    CHECK(ts::snr_db(x2.channel(0), up2.channel(0), 512) >= 40.0);
}

TEST_CASE("segment follows the up-to-10 four-second-clip rule") {
    SUBCASE("45 s track yields 10 segments") {
        const AudioClip track = AudioClip::silence(1, 45 * 16000, 16000);
        CHECK(segment(track, 4.0, 10).size() == 10);
    }
    SUBCASE("3.9 s clip yields nothing") {
        const AudioClip track = AudioClip::silence(1, static_cast<std::size_t>(3.9 * 16000), 16000);
        CHECK(segment(track, 4.0, 10).empty());
    }
    SUBCASE("9 s clip yields exactly 2 full segments") {
        const AudioClip track = AudioClip::silence(1, 9 * 16000, 16000);
        const auto segs = segment(track, 4.0, 10);
        REQUIRE(segs.size() == 2);
        for (const auto& s : segs) CHECK(s.length() == 64000);
    }
}

TEST_CASE("mix is linear, unclamped, and annotated with the peak") {
    Rng rng(3);
    const AudioClip x = ts::white_noise(0.2, 16000, 0.8, rng);
    const AudioClip silence = AudioClip::silence(1, x.length(), 16000);

    SUBCASE("identity") {
        const auto m = mix(x, silence);
        for (std::size_t i = 0; i < x.length(); ++i)
            CHECK(m.clip.channel(0)[i] == x.channel(0)[i]);
    }
    SUBCASE("cancellation") {
        AudioClip neg = x;
        for (double& v : neg.channel(0)) v = -v;
        const auto m = mix(x, neg);
        CHECK(m.peak_amplitude == 0.0);
    }
    SUBCASE("sums above full scale are preserved") {
        const AudioClip loud = ts::sine(200.0, 0.2, 16000, 0.9);
        const auto m = mix(loud, loud);
        CHECK(m.peak_amplitude > 1.0);
        CHECK(m.clip.peak() == m.peak_amplitude);
    }
    SUBCASE("shape mismatch throws") {
        CHECK_THROWS(mix(x, AudioClip::silence(1, x.length() + 1, 16000)));
    }
}

TEST_CASE("to_mono averages channels") {
    const AudioClip x = ts::sine(100.0, 0.1, 16000, 0.5);

    SUBCASE("mono passes through") {
        const AudioClip m = to_mono(x);
        for (std::size_t i = 0; i < x.length(); ++i)
            CHECK(m.channel(0)[i] == x.channel(0)[i]);
    }
    SUBCASE("identical channels collapse to themselves") {
        const AudioClip stereo({x.channel(0), x.channel(0)}, 16000);
        const AudioClip m = to_mono(stereo);
        for (std::size_t i = 0; i < x.length(); ++i)
            CHECK(m.channel(0)[i] == doctest::Approx(x.channel(0)[i]));
    }
    SUBCASE("opposite channels cancel") {
        std::vector<double> neg = x.channel(0);
        for (double& v : neg) v = -v;
        const AudioClip stereo({x.channel(0), neg}, 16000);
        CHECK(to_mono(stereo).peak() == 0.0);
    }
}

TEST_CASE("mix commutes under a fixed summation order") {
    Rng rng(17);
    const AudioClip a = ts::white_noise(0.1, 16000, 0.5, rng);
    const AudioClip b = ts::white_noise(0.1, 16000, 0.5, rng);
    const auto ab = mix(a, b);
    const auto ba = mix(b, a);
    for (std::size_t i = 0; i < a.length(); ++i)
        CHECK(ab.clip.channel(0)[i] == ba.clip.channel(0)[i]);
}

TEST_SUITE_END();
