#include "ostr/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ostr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_shape(const AudioClip& ref, const AudioClip& est, const char* who) {
    if (ref.num_channels() != est.num_channels() || ref.length() != est.length())
        throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

double energy(const AudioClip& clip) {
    double acc = 0.0;
    for (int c = 0; c < clip.num_channels(); ++c)
        for (double v : clip.channel(c)) acc += v * v;
    return acc;
}

double dot(const AudioClip& a, const AudioClip& b) {
    double acc = 0.0;
    for (int c = 0; c < a.num_channels(); ++c)
        for (std::size_t i = 0; i < a.length(); ++i) acc += a.channel(c)[i] * b.channel(c)[i];
    return acc;
}

}  // namespace

double sdr(const AudioClip& ref, const AudioClip& est) {
    require_same_shape(ref, est, "sdr");
    const double ref_energy = energy(ref);
    if (ref_energy == 0.0) throw std::invalid_argument("sdr: silent reference");

    double err_energy = 0.0;
    for (int c = 0; c < ref.num_channels(); ++c)
        for (std::size_t i = 0; i < ref.length(); ++i) {
            const double d = ref.channel(c)[i] - est.channel(c)[i];
            err_energy += d * d;
        }
    if (err_energy == 0.0) return kInf;
    return 10.0 * std::log10(ref_energy / err_energy);
}

double si_sdr(const AudioClip& ref, const AudioClip& est, double* alpha_out) {
    require_same_shape(ref, est, "si_sdr");
    const double ref_energy = energy(ref);
    if (ref_energy == 0.0) throw std::invalid_argument("si_sdr: silent reference");

    const double alpha = dot(ref, est) / ref_energy;
    if (alpha_out) *alpha_out = alpha;

    double target_energy = 0.0, err_energy = 0.0;
    for (int c = 0; c < ref.num_channels(); ++c)
        for (std::size_t i = 0; i < ref.length(); ++i) {
            const double t = alpha * ref.channel(c)[i];
            const double d = est.channel(c)[i] - t;
            target_energy += t * t;
            err_energy += d * d;
        }
    if (err_energy == 0.0) return kInf;
    return 10.0 * std::log10(target_energy / err_energy);
}

MetricResult evaluate_pair(const AudioClip& ref, const AudioClip& est) {
    MetricResult r;
    r.sdr_db = sdr(ref, est);
    r.si_sdr_db = si_sdr(ref, est, &r.alpha);
    return r;
}

namespace {

void accumulate(ScenarioMean& mean, const ScenarioValues& v, double& sdr_sum, double& si_sum) {
    ++mean.clip_count;
    if (std::isfinite(v.sdr_db)) sdr_sum += v.sdr_db;
    else ++mean.sdr_sentinels;
    if (std::isfinite(v.si_sdr_db)) si_sum += v.si_sdr_db;
    else ++mean.si_sdr_sentinels;
}

void finalize(ScenarioMean& mean, double sdr_sum, double si_sum) {
    const int sdr_n = mean.clip_count - mean.sdr_sentinels;
    const int si_n = mean.clip_count - mean.si_sdr_sentinels;
    mean.mean_sdr_db = sdr_n > 0 ? sdr_sum / sdr_n : 0.0;
    mean.mean_si_sdr_db = si_n > 0 ? si_sum / si_n : 0.0;
}

}  // namespace

ScenarioReport evaluate_scenarios(const MixManifest& manifest, const std::string& dataset_root,
                                  const std::string& pipeline_out_dir, const std::string& split) {
    ScenarioReport report;
    double sums[3][2] = {};

    for (const auto& e : manifest.split_entries(split)) {
        const AudioClip ref = load_wav((fs::path(dataset_root) / e.ost_ref_path).string());
        const AudioClip mixed = load_wav((fs::path(dataset_root) / e.mixture_path).string());
        const fs::path clip_dir = fs::path(pipeline_out_dir) / e.clip_id;
        const AudioClip restored = load_wav((clip_dir / "restored.wav").string());
        const AudioClip dialogue = load_wav((clip_dir / "dialogue.wav").string());

        ScenarioClipRow row;
        row.clip_id = e.clip_id;
        row.restored = {sdr(ref, restored), si_sdr(ref, restored)};
        row.mixed_input = {sdr(ref, mixed), si_sdr(ref, mixed)};
        row.dialogue_only = {sdr(ref, dialogue), si_sdr(ref, dialogue)};

        accumulate(report.restored, row.restored, sums[0][0], sums[0][1]);
        accumulate(report.mixed_input, row.mixed_input, sums[1][0], sums[1][1]);
        accumulate(report.dialogue_only, row.dialogue_only, sums[2][0], sums[2][1]);
        report.clips.push_back(std::move(row));
    }
    finalize(report.restored, sums[0][0], sums[0][1]);
    finalize(report.mixed_input, sums[1][0], sums[1][1]);
    finalize(report.dialogue_only, sums[2][0], sums[2][1]);
    return report;
}

namespace {

json values_to_json(const ScenarioValues& v) {
    json j;
    j["sdr_db"] = std::isfinite(v.sdr_db) ? json(v.sdr_db) : json("inf");
    j["si_sdr_db"] = std::isfinite(v.si_sdr_db) ? json(v.si_sdr_db) : json("inf");
    return j;
}

json mean_to_json(const ScenarioMean& m) {
    return json{{"mean_sdr_db", m.mean_sdr_db},
                {"mean_si_sdr_db", m.mean_si_sdr_db},
                {"sdr_sentinels", m.sdr_sentinels},
                {"si_sdr_sentinels", m.si_sdr_sentinels},
                {"clip_count", m.clip_count}};
}

}  // namespace

void save_scenario_report(const ScenarioReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << json{{"kind", "scenario_means"},
              {"restored", mean_to_json(report.restored)},
              {"mixed_input", mean_to_json(report.mixed_input)},
              {"dialogue_only", mean_to_json(report.dialogue_only)}}
             .dump()
      << "\n";
    for (const auto& row : report.clips) {
        f << json{{"clip_id", row.clip_id},
                  {"restored", values_to_json(row.restored)},
                  {"mixed_input", values_to_json(row.mixed_input)},
                  {"dialogue_only", values_to_json(row.dialogue_only)}}
                 .dump()
          << "\n";
    }
}

std::string format_scenario_table(const ScenarioReport& report) {
    std::ostringstream os;
    os << "scenario          mean SDR (dB)  mean SI-SDR (dB)  clips  inf(SDR/SI)\n";
    auto line = [&os](const char* name, const ScenarioMean& m) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-17s %13.2f %17.2f %6d   %d/%d\n", name, m.mean_sdr_db,
                      m.mean_si_sdr_db, m.clip_count, m.sdr_sentinels, m.si_sdr_sentinels);
        os << buf;
    };
    line("restored", report.restored);
    line("mixed_input", report.mixed_input);
    line("dialogue_only", report.dialogue_only);
    return os.str();
}

}  // namespace ostr
