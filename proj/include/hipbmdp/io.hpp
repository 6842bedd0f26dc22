#pragma once

#include "hipbmdp/bounds.hpp"
#include "hipbmdp/family.hpp"
#include "hipbmdp/learner.hpp"
#include "hipbmdp/mdp.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace hipbmdp {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// {"schema": "tabular_mdp", "version", "n_states", "n_actions", "gamma", "r_max",
///  "rewards": [S][A], "transitions": [S][A][S]}
Json to_json(const TabularMDP& mdp);
TabularMDP mdp_from_json(const Json& j);

/// {"schema": "hip_family", "version", "n_states", "n_actions", "theta_dim", "gamma", "r_max",
///  "rewards": [S][A], "labels", "thetas": [N][d], "split": {train, interpolation, extrapolation},
///  "generator": {"kind": "softmax_logits", "base_logits": [A][S][S], "directions": [d][A][S][S],
///  "lipschitz_tv"}, "transitions": [N][S][A][S]}
/// "transitions" is informational; parsing rebuilds members from the generator.
Json to_json(const HiPFamily& family);
HiPFamily family_from_json(const Json& j);

/// {"schema": "checkpoint", "version", "psi": {env_id: [d]}, "labels": {env_id: label},
///  "model": {"state_features", "n_actions", "theta_dim", "mean": head, "logvar": head}};
/// head = {"w_state", "w_action", "w_theta" (row-major nested arrays), "bias"}.
Json checkpoint_to_json(const TaskEmbeddingTable& psi, const LatentDynamicsModel& model,
                        const std::vector<std::string>& labels);
TaskEmbeddingTable psi_from_checkpoint(const Json& j);
LatentDynamicsModel model_from_checkpoint(const Json& j);

Json to_json(const BoundReport& report);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);

/// %.17g.
std::string format_double(double value);

std::string read_text(const std::filesystem::path& path);
/// Throws ValidationError when the file is missing or does not parse.
Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
/// Two-space indentation with a trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);

/// Comma-separated table; fields are written verbatim and must not contain commas or newlines.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(std::vector<std::string> row);
    const std::vector<std::string>& header() const { return header_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }
    std::string str() const;
    void write(const std::filesystem::path& path) const;

    /// Parses the format produced by str(). Throws ValidationError on ragged rows.
    static CsvTable parse(const std::string& text);
    static CsvTable read(const std::filesystem::path& path);

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace hipbmdp
