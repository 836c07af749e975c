#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ostr/dataset.hpp"
#include "ostr/metrics.hpp"
#include "ostr/separation.hpp"
#include "synth.hpp"

using namespace ostr;
namespace ts = ostr::testsupport;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("separation");

namespace {

double clip_energy(const AudioClip& clip) {
    double acc = 0.0;
    for (int c = 0; c < clip.num_channels(); ++c)
        for (double v : clip.channel(c)) acc += v * v;
    return acc;
}

AudioClip roundtrip_reference(const AudioClip& mono) {
    return istft_cropped(analysis_stft(mono), mono.length());
}

}  // namespace

TEST_CASE("analysis stft covers the whole clip and inverts cleanly") {
    Rng rng(1);
    const AudioClip noise = ts::white_noise(4.0, 16000, 0.5, rng);
    const Spectrogram spec = analysis_stft(noise);
    CHECK(spec.frames >= 398);
    const AudioClip back = istft_cropped(spec, noise.length());
    REQUIRE(back.length() == noise.length());
    CHECK(ts::snr_db(noise.channel(0), back.channel(0), 400) >= 60.0);
}

TEST_CASE("builtin two-stem keeps out-of-band instrumentals in the accompaniment") {
    Rng rng(2);
    // Out-of-vocal-band tones plus percussive mid bursts: nothing here is a
    // sustained harmonic inside the vocal band.
    const AudioClip tones = ts::tone_stack({70.0, 6600.0, 7300.0}, 3.0, 16000, 0.4);
    const AudioClip bursts = ts::burst_train(2.0, 3.0, 16000, 0.3, 900.0, 3800.0, rng);
    const AudioClip instrumental = mix(tones, bursts).clip;

    const TwoStemResult r = separate_two_stem(instrumental);
    CHECK(clip_energy(r.vocals) <= 0.05 * clip_energy(instrumental));
}

TEST_CASE("builtin two-stem routes a sustained vocal-band tone stack to vocals") {
    const AudioClip vocal = ts::tone_stack({250.0, 500.0, 1000.0, 2000.0}, 3.0, 16000, 0.4);
    const TwoStemResult r = separate_two_stem(vocal);
    CHECK(clip_energy(r.accompaniment) <= 0.10 * clip_energy(vocal));
}

TEST_CASE("two-stem outputs sum to the iSTFT round trip of the input") {
    Rng rng(3);
    const AudioClip clip =
        mix(ts::tone_stack({300.0, 900.0}, 2.0, 16000, 0.3),
            ts::burst_train(3.0, 2.0, 16000, 0.3, 900.0, 3800.0, rng))
            .clip;
    const TwoStemResult r = separate_two_stem(clip);
    const AudioClip reference = roundtrip_reference(clip);

    std::vector<double> sum(clip.length());
    for (std::size_t i = 0; i < sum.size(); ++i)
        sum[i] = r.vocals.channel(0)[i] + r.accompaniment.channel(0)[i];
    CHECK(ts::snr_db(reference.channel(0), sum, 400) >= 60.0);
}

TEST_CASE("two-stem rejects sub-second clips") {
    CHECK_THROWS(separate_two_stem(AudioClip::silence(1, 8000, 16000)));
}

TEST_CASE("external stem backend protocol") {
    const auto dir = ts::make_temp_dir("backend");
    const AudioClip clip = ts::sine(440.0, 1.5, 16000, 0.4);

    SUBCASE("a conforming backend is accepted") {
        const std::string script = dir + "/ok.sh";
        std::ofstream(script)
            << "#!/bin/sh\ncp \"$1\" \"$2/vocals.wav\"\ncp \"$1\" \"$2/accompaniment.wav\"\n";
        fs::permissions(script, fs::perms::owner_all);
        StemBackend backend{StemBackend::Kind::external, script};
        const TwoStemResult r = separate_two_stem(clip, backend);
        CHECK(r.vocals.length() == clip.length());
        CHECK(r.accompaniment.length() == clip.length());
    }
    SUBCASE("non-zero exit is a protocol error") {
        const std::string script = dir + "/fail.sh";
        std::ofstream(script) << "#!/bin/sh\nexit 3\n";
        fs::permissions(script, fs::perms::owner_all);
        StemBackend backend{StemBackend::Kind::external, script};
        CHECK_THROWS(separate_two_stem(clip, backend));
    }
    SUBCASE("missing output files are a protocol error") {
        const std::string script = dir + "/partial.sh";
        std::ofstream(script) << "#!/bin/sh\ncp \"$1\" \"$2/vocals.wav\"\n";
        fs::permissions(script, fs::perms::owner_all);
        StemBackend backend{StemBackend::Kind::external, script};
        CHECK_THROWS(separate_two_stem(clip, backend));
    }
}

TEST_CASE("speech detection") {
    SUBCASE("digital silence yields nothing") {
        CHECK(detect_speech(AudioClip::silence(1, 6 * 16000, 16000)).empty());
    }
    SUBCASE("a centered noise burst is found within a quarter second") {
        Rng rng(4);
        std::vector<double> x(6 * 16000, 0.0);
        for (std::size_t i = 2 * 16000; i < 4 * 16000; ++i) x[i] = 0.3 * rng.uniform(-1.0, 1.0);
        const auto segments = detect_speech(AudioClip({std::move(x)}, 16000));
        REQUIRE(segments.size() == 1);
        CHECK(std::fabs(segments[0].start_s - 2.0) <= 0.25);
        CHECK(std::fabs(segments[0].end_s - 4.0) <= 0.25);
    }
    SUBCASE("a steady full-scale sine is stationary-tonal, hence non-speech") {
        const auto segments = detect_speech(ts::sine(440.0, 4.0, 16000, 0.97));
        CHECK(segments.empty());
    }
    SUBCASE("lowering the offset threshold never shrinks the detected span") {
        Rng rng(5);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> x(4 * 16000, 0.0);
            const std::size_t start = 8000 + rng.below(16000);
            const std::size_t len = 8000 + rng.below(24000);
            for (std::size_t i = start; i < std::min(x.size(), start + len); ++i)
                x[i] = (0.05 + 0.4 * rng.uniform()) * rng.uniform(-1.0, 1.0);
            const AudioClip clip({std::move(x)}, 16000);

            double previous_total = -1.0;
            for (double offset_db : {-40.0, -45.0, -50.0, -55.0, -60.0}) {
                VadConfig cfg;
                cfg.offset_db = offset_db;
                double total = 0.0;
                for (const auto& seg : detect_speech(clip, cfg)) total += seg.end_s - seg.start_s;
                CHECK(total >= previous_total);
                previous_total = total;
            }
        }
    }
}

TEST_CASE("extract_speech keeps the timeline") {
    const AudioClip clip = ts::sine(300.0, 4.0, 16000, 0.5);

    SUBCASE("no segments gives silence of equal length") {
        const AudioClip out = extract_speech(clip, {});
        CHECK(out.length() == clip.length());
        CHECK(out.peak() == 0.0);
    }
    SUBCASE("a full-range segment is the identity") {
        const AudioClip out = extract_speech(clip, {{0.0, 4.0}});
        for (std::size_t i = 0; i < clip.length(); ++i)
            CHECK(out.channel(0)[i] == clip.channel(0)[i]);
    }
    SUBCASE("energy outside the kept segment is exactly zero") {
        const AudioClip out = extract_speech(clip, {{1.0, 2.0}});
        REQUIRE(out.length() == clip.length());
        for (std::size_t i = 0; i < 16000; ++i) CHECK(out.channel(0)[i] == 0.0);
        for (std::size_t i = 2 * 16000; i < out.length(); ++i) CHECK(out.channel(0)[i] == 0.0);
        CHECK(clip_energy(out) > 0.0);
    }
    SUBCASE("segments outside the clip are rejected") {
        CHECK_THROWS(extract_speech(clip, {{3.5, 4.5}}));
        CHECK_THROWS(extract_speech(clip, {{2.0, 1.0}}));
    }
}

TEST_CASE("oracle ideal ratio masks") {
    const AudioClip ost = ts::tone_stack({220.0, 440.0}, 1.0, 16000, 0.4);
    const AudioClip bgm = ts::tone_stack({3000.0, 5000.0}, 1.0, 16000, 0.4);
    const Spectrogram so = analysis_stft(ost);
    const Spectrogram sb = analysis_stft(bgm);
    const auto [m_ost, m_bgm] = oracle_irm(so, sb);

    SUBCASE("masks sum to one exactly") {
        for (std::size_t i = 0; i < m_ost.size(); ++i)
            CHECK(m_ost.data()[i] + m_bgm.data()[i] == 1.0);
    }
    SUBCASE("a silent interferer gives mask one wherever the target has energy") {
        const Spectrogram silent = analysis_stft(AudioClip::silence(1, 16000, 16000));
        const auto [m1, m2] = oracle_irm(so, silent);
        for (std::size_t t = 0; t < so.frames; ++t)
            for (std::size_t k = 0; k < so.bins; ++k)
                if (std::norm(so.at(t, k)) > 1e-6) CHECK(m1(t, k) > 0.999);
    }
    SUBCASE("equal magnitudes give one half") {
        const auto [m1, m2] = oracle_irm(so, so);
        std::size_t checked = 0;
        for (std::size_t t = 0; t < so.frames; ++t)
            for (std::size_t k = 0; k < so.bins; ++k)
                if (std::norm(so.at(t, k)) > 1e-2) {  // cells with real energy
                    CHECK(std::fabs(m1(t, k) - 0.5) <= 1e-9);
                    ++checked;
                }
        CHECK(checked > 100);
    }
}

TEST_CASE("apply_mask algebra") {
    const AudioClip clip = ts::tone_stack({500.0, 1500.0}, 1.0, 16000, 0.4);
    const Spectrogram spec = analysis_stft(clip);

    nn::Matrix ones(spec.frames, spec.bins), zeros(spec.frames, spec.bins),
        half(spec.frames, spec.bins);
    for (std::size_t i = 0; i < ones.size(); ++i) {
        ones.data()[i] = 1.0;
        half.data()[i] = 0.3;
    }

    SUBCASE("ones is the identity") {
        const Spectrogram out = apply_mask(spec, ones);
        for (std::size_t i = 0; i < spec.data.size(); ++i) CHECK(out.data[i] == spec.data[i]);
    }
    SUBCASE("zeros silences everything") {
        const Spectrogram out = apply_mask(spec, zeros);
        for (const auto& v : out.data) CHECK(std::abs(v) == 0.0);
    }
    SUBCASE("mask and complement add back to the input exactly") {
        nn::Matrix complement(spec.frames, spec.bins);
        for (std::size_t i = 0; i < half.size(); ++i) complement.data()[i] = 1.0 - half.data()[i];
        const Spectrogram a = apply_mask(spec, half);
        const Spectrogram b = apply_mask(spec, complement);
        for (std::size_t i = 0; i < spec.data.size(); ++i)
            CHECK(std::abs(a.data[i] + b.data[i] - spec.data[i]) <= 1e-12);
    }
    SUBCASE("shape mismatch throws") { CHECK_THROWS(apply_mask(spec, nn::Matrix(3, 3))); }
}

TEST_CASE("mask model basics") {
    const std::size_t bins = kAnalysisWindow / 2 + 1;
    const MaskModel model(default_band_scheme(bins), 2, 99);

    Rng rng(6);
    const AudioClip clip = ts::white_noise(1.0, 16000, 0.4, rng);
    const Spectrogram spec = analysis_stft(clip);
    const nn::Matrix x = model.features(spec);
    CHECK(x.rows() == spec.frames);
    CHECK(x.cols() == 8 * 5);

    const nn::Matrix bm = model.predict_band_mask(x);
    CHECK(bm.rows() == spec.frames);
    CHECK(bm.cols() == 8);
    for (double v : bm.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    SUBCASE("save/load round trip preserves everything") {
        const auto dir = ts::make_temp_dir("maskmodel");
        model.save(dir + "/m.ostr");
        const MaskModel loaded = MaskModel::load(dir + "/m.ostr");
        CHECK(loaded.context() == model.context());
        CHECK(loaded.bands().ranges == model.bands().ranges);
        CHECK(loaded.params().value("mask/weights").data() ==
              model.params().value("mask/weights").data());
    }
}

TEST_CASE("separate_mixed_music is complementary and handles silence") {
    const std::size_t bins = kAnalysisWindow / 2 + 1;
    const MaskModel model(default_band_scheme(bins), 2, 7);

    SUBCASE("silence in, silence out") {
        const SeparationResult r = separate_mixed_music(AudioClip::silence(1, 64000, 16000), model);
        CHECK(r.ost.peak() == 0.0);
        CHECK(r.bgm.peak() == 0.0);
        CHECK(r.ost.length() == 64000);
    }
    SUBCASE("ost + bgm equals the iSTFT round trip") {
        Rng rng(8);
        const AudioClip clip = ts::white_noise(4.0, 16000, 0.4, rng);
        const SeparationResult r = separate_mixed_music(clip, model);
        const AudioClip reference = roundtrip_reference(clip);
        std::vector<double> sum(clip.length());
        for (std::size_t i = 0; i < sum.size(); ++i)
            sum[i] = r.ost.channel(0)[i] + r.bgm.channel(0)[i];
        CHECK(ts::snr_db(reference.channel(0), sum, 400) >= 60.0);
    }
    SUBCASE("wrong sample rate is rejected") {
        CHECK_THROWS(separate_mixed_music(AudioClip::silence(1, 64000, 44100), model));
    }
}

TEST_CASE("mask estimator gradients pass a finite-difference check") {
    // Tiny clip, one spectrogram-loss config; certifies the full chain
    // (features -> sigmoid mask -> masked iSTFT -> L1 losses) end to end.
    Rng rng(31);
    std::vector<double> mix_s(1200), ost_s(1200), bgm_s(1200);
    for (std::size_t i = 0; i < 1200; ++i) {
        ost_s[i] = 0.3 * rng.normal();
        bgm_s[i] = 0.3 * rng.normal();
        mix_s[i] = ost_s[i] + bgm_s[i];
    }
    const AudioClip mix_clip({mix_s}, 16000), ost({ost_s}, 16000), bgm({bgm_s}, 16000);

    MaskTrainConfig cfg;
    cfg.spec_configs = {{512, 128, false}};
    MaskModel model(default_band_scheme(kAnalysisWindow / 2 + 1), 2, 5);

    const auto report = nn::grad_check(
        [&](nn::ParamStore&, bool with_grad) {
            if (with_grad) model.params().zero_grads();
            return mask_estimator_loss(model, mix_clip, ost, bgm, cfg, with_grad);
        },
        model.params(), 1e-5);
    CHECK(report.worst() < 1e-4);
}

TEST_CASE("micro training run is deterministic and reduces the loss") {
    const auto dir = ts::make_temp_dir("masktrain");
    ts::DeskSourceConfig src;
    src.n_tracks = 2;
    src.track_duration_s = 12.0;
    ts::write_desk_ost_tracks(dir + "/ost", src);
    ts::write_desk_bgm_tracks(dir + "/bgm", src);

    const MixManifest manifest =
        build_separation_dataset(dir + "/ost", dir + "/bgm", 8, 11, dir + "/data");

    MaskTrainConfig cfg;
    cfg.epochs = 3;
    const MaskTrainResult a = train_mask_estimator(manifest, dir + "/data", cfg, 123);
    const MaskTrainResult b = train_mask_estimator(manifest, dir + "/data", cfg, 123);

    a.model.save(dir + "/a.ostr");
    b.model.save(dir + "/b.ostr");
    std::ifstream fa(dir + "/a.ostr", std::ios::binary), fb(dir + "/b.ostr", std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
    CHECK(bytes_a == bytes_b);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());

    const MaskTrainResult c = train_mask_estimator(manifest, dir + "/data", cfg, 124);
    c.model.save(dir + "/c.ostr");
    std::ifstream fc(dir + "/c.ostr", std::ios::binary);
    const std::string bytes_c((std::istreambuf_iterator<char>(fc)), {});
    CHECK(bytes_a != bytes_c);  // a different seed actually changes the model
}

TEST_SUITE_END();
