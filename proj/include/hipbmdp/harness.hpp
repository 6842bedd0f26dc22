#pragma once

#include "hipbmdp/bounds.hpp"
#include "hipbmdp/family.hpp"
#include "hipbmdp/io.hpp"
#include "hipbmdp/learner.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hipbmdp {

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr int kConfigVersion = 1;

struct EmissionConfig {
    int obs_per_state = 2;
    double violation_prob = 0.0;

    friend bool operator==(const EmissionConfig&, const EmissionConfig&) = default;
};

struct DataConfig {
    /// "uniform" (independent (s,a) draws) or "trajectory".
    std::string kind = "uniform";
    int size = 2000;
    /// Episode length for trajectory collection.
    int horizon = 50;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct AdaptStageConfig {
    int steps = 100;
    double lr = 0.5;
    int buffer_size = 2000;
    int rollout_k = 5;
    int rollout_episodes = 2000;

    friend bool operator==(const AdaptStageConfig&, const AdaptStageConfig&) = default;
};

struct BoundsStageConfig {
    int instances = 500;
    int datasets = 200;
    int per_pair = 100;
    double delta = 0.1;
    /// n_phi values of the sample-size sweep.
    std::vector<int> n_sweep{10, 100, 1000};
    int n_sweep_datasets = 50;
    std::vector<std::string> theorems;  // empty = all
    int max_latent_states = 6;
    int max_actions = 4;
    std::vector<double> perturbation_scales{0.1, 0.5, 1.0};
    std::vector<double> epsilons{0.01, 0.1, 0.5};
    std::vector<double> theta_noise{0.0, 0.1, 0.5};

    friend bool operator==(const BoundsStageConfig&, const BoundsStageConfig&) = default;
};

struct ExperimentConfig {
    int version = kConfigVersion;
    FamilySpec family;
    /// Optional explicit split by label; default_split otherwise.
    std::optional<Split> split;
    std::vector<std::uint64_t> seeds{0};
    double planner_tol = 1e-10;
    double bisim_tol = 1e-8;
    GroundMetricKind ground_metric = GroundMetricKind::OneHotL1;
    ThetaGap theta_gap = ThetaGap::TaskMetric;
    EmissionConfig emission;
    DataConfig data;
    TrainConfig train;
    /// Members trained on: "train" (the split's training members) or "all".
    std::string train_members = "train";
    AdaptStageConfig adapt;
    BoundsStageConfig bounds;
    std::string out_dir = "out";

    VerifyOptions verify_options() const;
    void validate() const;

    friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

/// Unknown keys anywhere in the document are rejected with ValidationError.
ExperimentConfig config_from_json(const Json& j);
Json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Digest of the canonical serialization, as 16 hex digits.
std::string config_digest(const ExperimentConfig& config);

/// out/seed_<seed>.
std::filesystem::path seed_directory(const std::filesystem::path& out, std::uint64_t seed);

/// family.json.
void cmd_generate(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& out);

/// bisim_<label>.csv (observation metric, long format) and lipschitz_<label>.json.
void cmd_bisim(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& out,
               const std::string& env_label);

/// checkpoint.json, train_log.csv, theta_dist.csv, embed_dist.csv, train_summary.json (Spearman).
void cmd_train(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& out);

/// adapt_<label>.csv for `target`, or for every interpolation and extrapolation member.
void cmd_adapt(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& out,
               const std::optional<std::string>& target = std::nullopt);

struct BoundsOutcome {
    std::vector<SweepSummary> summaries;
    /// Some deterministic theorem failed on at least one instance.
    bool deterministic_violation = false;
};

/// bounds.csv, bounds_summary.csv, bounds_nsweep.csv, bounds_reports.json.
BoundsOutcome cmd_bounds(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& out);

/// report.json, plot_data.csv and summary.csv over every seed_<s> directory of `out`.
/// Throws ValidationError when there is none or a declared stage output is missing.
void cmd_report(const std::filesystem::path& out);

/// Records a stage in out/seed_<s>/manifest.json; `outputs` are relative to the seed directory.
void record_stage(const std::filesystem::path& seed_dir, const ExperimentConfig& config, const std::string& stage,
                  const std::vector<std::string>& outputs, double seconds);

/// generate, bisim (first training member), train, adapt, bounds for one seed, then report.
/// Returns the outcome of the bounds stage.
BoundsOutcome run_pipeline(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& out);

/// 0 success, 2 validation, 3 numerical, 4 deterministic bound violation.
enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitNumerical = 3, kExitBoundViolation = 4 };

}  // namespace hipbmdp
