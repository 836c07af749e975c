#pragma once

#include <string>
#include <vector>

#include "ostr/audio.hpp"
#include "ostr/dataset.hpp"

namespace ostr {

// sdr_db / si_sdr_db carry +infinity when the respective error energy is
// exactly zero; means over clips exclude those sentinels and report the count.
struct MetricResult {
    double sdr_db = 0.0;
    double si_sdr_db = 0.0;
    double alpha = 0.0;  // optimal reference scaling <ref,est>/|ref|^2
};

// 10*log10(|ref|^2 / |ref - est|^2). Throws on a silent reference or a shape
// mismatch; returns +infinity when est == ref exactly.
double sdr(const AudioClip& ref, const AudioClip& est);

// Scale-invariant form: target = alpha*ref with alpha = <ref,est>/|ref|^2,
// value = 10*log10(|alpha*ref|^2 / |est - alpha*ref|^2). Invariant to positive
// rescaling of est; +infinity when est is an exact positive multiple of ref.
double si_sdr(const AudioClip& ref, const AudioClip& est, double* alpha_out = nullptr);

MetricResult evaluate_pair(const AudioClip& ref, const AudioClip& est);

struct ScenarioValues {
    double sdr_db = 0.0;
    double si_sdr_db = 0.0;
};

struct ScenarioClipRow {
    std::string clip_id;
    ScenarioValues restored, mixed_input, dialogue_only;
};

struct ScenarioMean {
    double mean_sdr_db = 0.0;     // over finite values only
    double mean_si_sdr_db = 0.0;  // over finite values only
    int sdr_sentinels = 0;
    int si_sdr_sentinels = 0;
    int clip_count = 0;
};

struct ScenarioReport {
    std::vector<ScenarioClipRow> clips;
    ScenarioMean restored, mixed_input, dialogue_only;
};

// Scores the three Table-style scenarios against the clean reference stem per
// clip: the pipeline's restored output, the stored mixture, and the pipeline's
// dialogue-only output. pipeline_out_dir must hold <clip_id>/restored.wav and
// <clip_id>/dialogue.wav for every selected entry.
ScenarioReport evaluate_scenarios(const MixManifest& manifest, const std::string& dataset_root,
                                  const std::string& pipeline_out_dir,
                                  const std::string& split = "");

void save_scenario_report(const ScenarioReport& report, const std::string& path);
std::string format_scenario_table(const ScenarioReport& report);

}  // namespace ostr
