#include "ostr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "ostr/audio.hpp"
#include "ostr/loudness.hpp"
#include "ostr/rng.hpp"
#include "ostr/spectral.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ostr {

namespace {

std::vector<fs::path> sorted_files(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
    std::sort(files.begin(), files.end());  // directory order is unspecified
    return files;
}

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

AudioClip quantize_clip(const AudioClip& clip) {
    std::vector<std::vector<double>> chans(clip.num_channels());
    for (int c = 0; c < clip.num_channels(); ++c) {
        chans[c].reserve(clip.length());
        for (double v : clip.channel(c)) chans[c].push_back(quantize_f32(v));
    }
    return AudioClip(std::move(chans), clip.sample_rate_hz());
}

// Sum at float32 storage precision so the stored mixture equals the stored
// stems' sum bit-for-bit.
AudioClip f32_sum(const AudioClip& a, const AudioClip& b) {
    std::vector<std::vector<double>> chans(a.num_channels());
    for (int c = 0; c < a.num_channels(); ++c) {
        chans[c].reserve(a.length());
        for (std::size_t i = 0; i < a.length(); ++i)
            chans[c].push_back(quantize_f32(a.channel(c)[i] + b.channel(c)[i]));
    }
    return AudioClip(std::move(chans), a.sample_rate_hz());
}

struct SourceSegment {
    std::string track_id;
    int segment_index;
    AudioClip clip;  // mono, analysis rate, normalized, float32-quantized
};

std::vector<SourceSegment> load_segments(const std::string& dir, double clip_len_s,
                                         double target_lufs, std::size_t max_per_track) {
    std::vector<SourceSegment> out;
    for (const auto& path : sorted_files(dir, ".wav")) {
        const AudioClip track = resample(to_mono(load_wav(path.string())), kAnalysisRateHz);
        const auto segments = segment(track, clip_len_s, max_per_track);
        for (std::size_t i = 0; i < segments.size(); ++i) {
            try {
                NormalizeResult norm = normalize_to(segments[i], target_lufs);
                out.push_back({path.stem().string(), static_cast<int>(i),
                               quantize_clip(norm.clip)});
            } catch (const std::exception& e) {
                std::fprintf(stderr, "warning: skipping %s segment %zu: %s\n",
                             path.stem().string().c_str(), i, e.what());
            }
        }
    }
    return out;
}

std::vector<std::string> assign_splits(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);

    const std::size_t n_val = n / 10, n_test = n / 10;
    std::vector<std::string> splits(n, "train");
    for (std::size_t i = 0; i < n_val; ++i) splits[order[i]] = "val";
    for (std::size_t i = n_val; i < n_val + n_test; ++i) splits[order[i]] = "test";
    return splits;
}

json entry_to_json(const ManifestEntry& e) {
    json j{{"clip_id", e.clip_id},
           {"ost_track_id", e.ost_track_id},
           {"ost_segment_index", e.ost_segment_index},
           {"bgm_track_id", e.bgm_track_id},
           {"bgm_segment_index", e.bgm_segment_index},
           {"split", e.split},
           {"mixture", e.mixture_path},
           {"ost_ref", e.ost_ref_path},
           {"bgm_ref", e.bgm_ref_path}};
    if (!e.frames_dir.empty()) j["frames_dir"] = e.frames_dir;
    return j;
}

ManifestEntry entry_from_json(const json& j) {
    ManifestEntry e;
    e.clip_id = j.at("clip_id").get<std::string>();
    e.ost_track_id = j.at("ost_track_id").get<std::string>();
    e.ost_segment_index = j.at("ost_segment_index").get<int>();
    e.bgm_track_id = j.at("bgm_track_id").get<std::string>();
    e.bgm_segment_index = j.at("bgm_segment_index").get<int>();
    e.split = j.at("split").get<std::string>();
    e.mixture_path = j.at("mixture").get<std::string>();
    e.ost_ref_path = j.at("ost_ref").get<std::string>();
    e.bgm_ref_path = j.at("bgm_ref").get<std::string>();
    if (j.contains("frames_dir")) e.frames_dir = j.at("frames_dir").get<std::string>();
    return e;
}

}  // namespace

void MixManifest::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    json header{{"build_seed", build_seed},
                {"clip_len_s", clip_len_s},
                {"target_lufs", target_lufs},
                {"kind", kind}};
    f << header.dump() << "\n";
    for (const auto& e : entries) f << entry_to_json(e).dump() << "\n";
    if (!f) throw std::runtime_error("short write to " + path);
}

MixManifest MixManifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty manifest: " + path);
    const json header = json::parse(line);

    MixManifest m;
    m.build_seed = header.at("build_seed").get<std::uint64_t>();
    m.clip_len_s = header.at("clip_len_s").get<double>();
    m.target_lufs = header.at("target_lufs").get<double>();
    m.kind = header.value("kind", "mix");
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        m.entries.push_back(entry_from_json(json::parse(line)));
    }
    return m;
}

std::vector<ManifestEntry> MixManifest::split_entries(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (split.empty() || e.split == split) out.push_back(e);
    return out;
}

MixManifest build_separation_dataset(const std::string& ost_dir, const std::string& bgm_dir,
                                     std::size_t n_mixtures, std::uint64_t seed,
                                     const std::string& out_dir) {
    constexpr double kClipLen = 4.0;
    constexpr double kTarget = -23.0;
    constexpr std::size_t kMaxSegmentsPerTrack = 10;

    const auto ost_segments = load_segments(ost_dir, kClipLen, kTarget, kMaxSegmentsPerTrack);
    const auto bgm_segments = load_segments(bgm_dir, kClipLen, kTarget, kMaxSegmentsPerTrack);
    if (ost_segments.empty()) throw std::runtime_error("no usable OST segments in " + ost_dir);
    if (bgm_segments.empty()) throw std::runtime_error("no usable BGM segments in " + bgm_dir);

    fs::create_directories(fs::path(out_dir) / "audio");

    Rng rng(seed);
    std::vector<std::pair<std::size_t, std::size_t>> pairs(n_mixtures);
    for (auto& [oi, bi] : pairs) {
        oi = rng.below(ost_segments.size());
        bi = rng.below(bgm_segments.size());
    }
    const auto splits = assign_splits(n_mixtures, rng);

    MixManifest manifest;
    manifest.build_seed = seed;
    manifest.clip_len_s = kClipLen;
    manifest.target_lufs = kTarget;
    manifest.kind = "mix";
    manifest.entries.reserve(n_mixtures);

    char id[32];
    for (std::size_t i = 0; i < n_mixtures; ++i) {
        std::snprintf(id, sizeof(id), "mix_%05zu", i);
        const auto& ost = ost_segments[pairs[i].first];
        const auto& bgm = bgm_segments[pairs[i].second];
        const AudioClip mixture = f32_sum(ost.clip, bgm.clip);

        ManifestEntry e;
        e.clip_id = id;
        e.ost_track_id = ost.track_id;
        e.ost_segment_index = ost.segment_index;
        e.bgm_track_id = bgm.track_id;
        e.bgm_segment_index = bgm.segment_index;
        e.split = splits[i];
        e.mixture_path = std::string("audio/") + id + "_mix.wav";
        e.ost_ref_path = std::string("audio/") + id + "_ost.wav";
        e.bgm_ref_path = std::string("audio/") + id + "_bgm.wav";

        save_wav(mixture, (fs::path(out_dir) / e.mixture_path).string(), WavEncoding::float32);
        save_wav(ost.clip, (fs::path(out_dir) / e.ost_ref_path).string(), WavEncoding::float32);
        save_wav(bgm.clip, (fs::path(out_dir) / e.bgm_ref_path).string(), WavEncoding::float32);
        manifest.entries.push_back(std::move(e));
    }

    manifest.save((fs::path(out_dir) / "manifest.jsonl").string());
    return manifest;
}

MixManifest build_overlay_benchmark(const std::string& video_audio_dir, const std::string& bgm_dir,
                                    const std::string& frames_root, std::uint64_t seed,
                                    const std::string& out_dir) {
    constexpr double kClipLen = 4.0;
    constexpr double kTarget = -23.0;

    const auto video_files = sorted_files(video_audio_dir, ".wav");
    const auto bgm_files = sorted_files(bgm_dir, ".wav");
    if (video_files.empty()) throw std::runtime_error("no video audio tracks in " + video_audio_dir);
    if (bgm_files.empty()) throw std::runtime_error("no BGM tracks in " + bgm_dir);

    std::vector<AudioClip> bgm_tracks;
    bgm_tracks.reserve(bgm_files.size());
    for (const auto& p : bgm_files)
        bgm_tracks.push_back(resample(to_mono(load_wav(p.string())), kAnalysisRateHz));

    fs::create_directories(fs::path(out_dir) / "audio");
    fs::create_directories(fs::path(out_dir) / "frames");

    Rng rng(seed);
    MixManifest manifest;
    manifest.build_seed = seed;
    manifest.clip_len_s = kClipLen;
    manifest.target_lufs = kTarget;
    manifest.kind = "overlay";

    std::size_t clip_counter = 0;
    char id[32];
    std::vector<ManifestEntry> entries;

    for (const auto& vpath : video_files) {
        const std::string track_id = vpath.stem().string();
        const fs::path src_frames = fs::path(frames_root) / track_id;
        if (!fs::is_directory(src_frames))
            throw std::runtime_error("missing frame directory: " + src_frames.string());

        const AudioClip video = resample(to_mono(load_wav(vpath.string())), kAnalysisRateHz);

        // Only BGM tracks spanning the whole video are eligible.
        std::vector<std::size_t> eligible;
        for (std::size_t b = 0; b < bgm_tracks.size(); ++b)
            if (bgm_tracks[b].length() >= video.length()) eligible.push_back(b);
        if (eligible.empty())
            throw std::runtime_error("no BGM track long enough for " + track_id);
        const std::size_t chosen = eligible[rng.below(eligible.size())];
        const std::string bgm_id = bgm_files[chosen].stem().string();

        std::vector<double> bgm_cut(bgm_tracks[chosen].channel(0).begin(),
                                    bgm_tracks[chosen].channel(0).begin() +
                                        static_cast<std::ptrdiff_t>(video.length()));
        const AudioClip video_norm = quantize_clip(normalize_to(video, kTarget).clip);
        const AudioClip bgm_norm = quantize_clip(
            normalize_to(AudioClip({std::move(bgm_cut)}, kAnalysisRateHz), kTarget).clip);
        const AudioClip overlay = f32_sum(video_norm, bgm_norm);

        std::vector<fs::path> frame_files;
        for (const auto& fe : fs::directory_iterator(src_frames))
            if (fe.is_regular_file() && fe.path().extension() == ".pgm")
                frame_files.push_back(fe.path());
        std::sort(frame_files.begin(), frame_files.end());

        const auto windows = segment(overlay, kClipLen, overlay.length());
        const auto video_segs = segment(video_norm, kClipLen, windows.size());
        const auto bgm_segs = segment(bgm_norm, kClipLen, windows.size());

        for (std::size_t w = 0; w < windows.size(); ++w) {
            if ((w + 1) * 4 > frame_files.size()) break;  // not enough frames for this window
            std::snprintf(id, sizeof(id), "ov_%05zu", clip_counter++);

            ManifestEntry e;
            e.clip_id = id;
            e.ost_track_id = track_id;
            e.ost_segment_index = static_cast<int>(w);
            e.bgm_track_id = bgm_id;
            e.bgm_segment_index = static_cast<int>(w);
            e.split = "train";  // reassigned below
            e.mixture_path = std::string("audio/") + id + "_mix.wav";
            e.ost_ref_path = std::string("audio/") + id + "_ost.wav";
            e.bgm_ref_path = std::string("audio/") + id + "_bgm.wav";
            e.frames_dir = std::string("frames/") + id;

            save_wav(windows[w], (fs::path(out_dir) / e.mixture_path).string(), WavEncoding::float32);
            save_wav(video_segs[w], (fs::path(out_dir) / e.ost_ref_path).string(), WavEncoding::float32);
            save_wav(bgm_segs[w], (fs::path(out_dir) / e.bgm_ref_path).string(), WavEncoding::float32);

            const fs::path clip_frames = fs::path(out_dir) / e.frames_dir;
            fs::create_directories(clip_frames);
            for (std::size_t k = 0; k < 4; ++k) {
                char name[16];
                std::snprintf(name, sizeof(name), "frame_%zu.pgm", k);
                fs::copy_file(frame_files[w * 4 + k], clip_frames / name,
                              fs::copy_options::overwrite_existing);
            }
            entries.push_back(std::move(e));
        }
    }

    const auto splits = assign_splits(entries.size(), rng);
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].split = splits[i];
    manifest.entries = std::move(entries);
    manifest.save((fs::path(out_dir) / "manifest.jsonl").string());
    return manifest;
}

ValidationReport validate_manifest(const MixManifest& manifest, const std::string& root) {
    ValidationReport report;
    report.checked_clips = manifest.entries.size();

    std::set<std::string> ids;
    std::map<std::string, std::set<std::string>> track_splits;
    std::size_t n_train = 0, n_val = 0, n_test = 0;

    const auto expected_len =
        static_cast<std::size_t>(std::llround(manifest.clip_len_s * kAnalysisRateHz));

    for (const auto& e : manifest.entries) {
        if (!ids.insert(e.clip_id).second)
            report.issues.push_back({"duplicate_id", "duplicate clip id " + e.clip_id});
        track_splits[e.ost_track_id].insert(e.split);
        track_splits["bgm:" + e.bgm_track_id].insert(e.split);
        if (e.split == "train") ++n_train;
        else if (e.split == "val") ++n_val;
        else if (e.split == "test") ++n_test;
        else report.issues.push_back({"split_ratio", e.clip_id + ": unknown split " + e.split});

        AudioClip mixture, ost, bgm;
        bool loaded = true;
        for (const auto* rel : {&e.mixture_path, &e.ost_ref_path, &e.bgm_ref_path}) {
            const fs::path p = fs::path(root) / *rel;
            if (!fs::exists(p)) {
                report.issues.push_back({"missing_file", p.string() + " is missing"});
                loaded = false;
            }
        }
        if (!e.frames_dir.empty() && !fs::is_directory(fs::path(root) / e.frames_dir)) {
            report.issues.push_back(
                {"missing_file", (fs::path(root) / e.frames_dir).string() + " is missing"});
        }
        if (!loaded) continue;

        mixture = load_wav((fs::path(root) / e.mixture_path).string());
        ost = load_wav((fs::path(root) / e.ost_ref_path).string());
        bgm = load_wav((fs::path(root) / e.bgm_ref_path).string());

        for (const auto* clip : {&mixture, &ost, &bgm}) {
            if (clip->length() != expected_len || clip->sample_rate_hz() != kAnalysisRateHz) {
                report.issues.push_back({"clip_length", e.clip_id + ": wrong length or rate"});
                break;
            }
        }

        for (const auto& [name, stem] : {std::pair{"ost_ref", &ost}, std::pair{"bgm_ref", &bgm}}) {
            try {
                const auto reading = measure_integrated_lufs(*stem);
                if (!reading.is_measurable ||
                    std::fabs(reading.integrated_lufs - manifest.target_lufs) > 0.5)
                    report.issues.push_back(
                        {"loudness", e.clip_id + ": " + name + " off target"});
            } catch (const std::exception&) {
                report.issues.push_back({"loudness", e.clip_id + ": " + name + " unmeasurable"});
            }
        }

        if (mixture.length() == ost.length() && ost.length() == bgm.length()) {
            bool exact = true;
            for (std::size_t i = 0; i < mixture.length() && exact; ++i) {
                const double expect = static_cast<double>(
                    static_cast<float>(ost.channel(0)[i] + bgm.channel(0)[i]));
                if (mixture.channel(0)[i] != expect) exact = false;
            }
            if (!exact)
                report.issues.push_back(
                    {"mixture_sum", e.clip_id + ": mixture is not the stored stem sum"});
        }
    }

    const std::size_t n = manifest.entries.size();
    if (n > 0 && (n_val != n / 10 || n_test != n / 10 || n_train != n - 2 * (n / 10)))
        report.issues.push_back({"split_ratio", "split counts are not 8:1:1 (" +
                                                    std::to_string(n_train) + "/" +
                                                    std::to_string(n_val) + "/" +
                                                    std::to_string(n_test) + ")"});

    for (const auto& [track, splits] : track_splits)
        if (splits.size() > 1) report.split_leakage_risk = true;

    return report;
}

}  // namespace ostr
