#include "hipbmdp/io.hpp"

#include "hipbmdp/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace hipbmdp {

namespace {

void expect_schema(const Json& j, const char* schema) {
    require(j.is_object(), std::string(schema) + ": expected a JSON object");
    require(j.value("schema", std::string()) == schema, std::string("expected schema '") + schema + "'");
    require(j.value("version", -1) == kSchemaVersion, std::string(schema) + ": unsupported schema version");
}

template <class T>
T get(const Json& j, const char* key) {
    require(j.contains(key), std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("field '") + key + "': " + e.what());
    }
}

Json vector_to_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const Json& j) {
    require(j.is_array(), "expected a numeric array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        require(j[i].is_number(), "expected a numeric array");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Json matrices_to_json(const std::vector<Eigen::MatrixXd>& ms) {
    Json out = Json::array();
    for (const auto& m : ms) out.push_back(matrix_to_json(m));
    return out;
}

std::vector<Eigen::MatrixXd> matrices_from_json(const Json& j) {
    require(j.is_array(), "expected an array of matrices");
    std::vector<Eigen::MatrixXd> out;
    for (const auto& m : j) out.push_back(matrix_from_json(m));
    return out;
}

/// [S][A][S] nested arrays from per-action S x S matrices.
Json transitions_to_json(const std::vector<Eigen::MatrixXd>& t) {
    Json out = Json::array();
    const Eigen::Index S = t.front().rows();
    for (Eigen::Index s = 0; s < S; ++s) {
        Json per_action = Json::array();
        for (const auto& m : t) {
            Json row = Json::array();
            for (Eigen::Index k = 0; k < S; ++k) row.push_back(m(s, k));
            per_action.push_back(std::move(row));
        }
        out.push_back(std::move(per_action));
    }
    return out;
}

Json head_to_json(const AffineHead& h) {
    return Json{{"w_state", matrix_to_json(h.w_state)},
                {"w_action", matrix_to_json(h.w_action)},
                {"w_theta", matrix_to_json(h.w_theta)},
                {"bias", vector_to_json(h.bias)}};
}

AffineHead head_from_json(const Json& j) {
    require(j.is_object(), "checkpoint head must be an object");
    return AffineHead{matrix_from_json(get<Json>(j, "w_state")), matrix_from_json(get<Json>(j, "w_action")),
                      matrix_from_json(get<Json>(j, "w_theta")), vector_from_json(get<Json>(j, "bias"))};
}

}  // namespace

Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
    require(j.is_array(), "expected a matrix as nested arrays");
    if (j.empty()) return Eigen::MatrixXd(0, 0);
    require(j[0].is_array(), "expected a matrix as nested arrays");
    const std::size_t cols = j[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        require(j[r].is_array() && j[r].size() == cols, "ragged matrix");
        for (std::size_t c = 0; c < cols; ++c) {
            require(j[r][c].is_number(), "matrix entries must be numbers");
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
        }
    }
    return m;
}

Json to_json(const TabularMDP& mdp) {
    return Json{{"schema", "tabular_mdp"},
                {"version", kSchemaVersion},
                {"n_states", mdp.n_states()},
                {"n_actions", mdp.n_actions()},
                {"gamma", mdp.gamma()},
                {"r_max", mdp.r_max()},
                {"rewards", matrix_to_json(mdp.rewards())},
                {"transitions", transitions_to_json(mdp.transitions())}};
}

TabularMDP mdp_from_json(const Json& j) {
    expect_schema(j, "tabular_mdp");
    const int S = get<int>(j, "n_states");
    const int A = get<int>(j, "n_actions");
    require(S > 0 && A > 0, "tabular_mdp: sizes must be positive");
    const Json& t = get<Json>(j, "transitions");
    require(t.is_array() && t.size() == static_cast<std::size_t>(S), "tabular_mdp: transitions must be [S][A][S]");
    std::vector<Eigen::MatrixXd> transitions(static_cast<std::size_t>(A), Eigen::MatrixXd(S, S));
    for (int s = 0; s < S; ++s) {
        const Json& per_action = t[static_cast<std::size_t>(s)];
        require(per_action.is_array() && per_action.size() == static_cast<std::size_t>(A),
                "tabular_mdp: transitions must be [S][A][S]");
        for (int a = 0; a < A; ++a) {
            const Eigen::VectorXd row = vector_from_json(per_action[static_cast<std::size_t>(a)]);
            require(row.size() == S, "tabular_mdp: transitions must be [S][A][S]");
            transitions[static_cast<std::size_t>(a)].row(s) = row.transpose();
        }
    }
    const Eigen::MatrixXd rewards = matrix_from_json(get<Json>(j, "rewards"));
    require(rewards.rows() == S && rewards.cols() == A, "tabular_mdp: rewards must be [S][A]");
    return TabularMDP(std::move(transitions), rewards, get<double>(j, "gamma"), get<double>(j, "r_max"));
}

Json to_json(const HiPFamily& f) {
    Json thetas = Json::array();
    for (const auto& t : f.thetas()) thetas.push_back(vector_to_json(t));
    Json directions = Json::array();
    for (const auto& per_action : f.generator().directions()) directions.push_back(matrices_to_json(per_action));
    Json members = Json::array();
    for (int m = 0; m < f.n_members(); ++m) members.push_back(transitions_to_json(f.member(m).transitions()));
    return Json{{"schema", "hip_family"},
                {"version", kSchemaVersion},
                {"n_states", f.n_states()},
                {"n_actions", f.n_actions()},
                {"theta_dim", f.theta_dim()},
                {"gamma", f.gamma()},
                {"r_max", f.r_max()},
                {"rewards", matrix_to_json(f.shared_rewards())},
                {"labels", f.labels()},
                {"thetas", thetas},
                {"split",
                 {{"train", f.split().train},
                  {"interpolation", f.split().interpolation},
                  {"extrapolation", f.split().extrapolation}}},
                {"generator",
                 {{"kind", "softmax_logits"},
                  {"base_logits", matrices_to_json(f.generator().base_logits())},
                  {"directions", directions},
                  {"lipschitz_tv", f.generator().lipschitz_tv()}}},
                {"transitions", members}};
}

HiPFamily family_from_json(const Json& j) {
    expect_schema(j, "hip_family");
    const Json& gen = get<Json>(j, "generator");
    require(gen.is_object() && gen.value("kind", std::string()) == "softmax_logits",
            "hip_family: unsupported generator kind");
    std::vector<Eigen::MatrixXd> base = matrices_from_json(get<Json>(gen, "base_logits"));
    std::vector<std::vector<Eigen::MatrixXd>> directions;
    for (const auto& d : get<Json>(gen, "directions")) directions.push_back(matrices_from_json(d));
    LogitGenerator generator(std::move(base), std::move(directions));
    require(generator.n_states() == get<int>(j, "n_states") && generator.n_actions() == get<int>(j, "n_actions") &&
                generator.theta_dim() == get<int>(j, "theta_dim"),
            "hip_family: generator shape differs from the declared sizes");

    std::vector<Eigen::VectorXd> thetas;
    for (const auto& t : get<Json>(j, "thetas")) thetas.push_back(vector_from_json(t));
    const Json& sp = get<Json>(j, "split");
    Split split{get<std::vector<std::string>>(sp, "train"), get<std::vector<std::string>>(sp, "interpolation"),
                get<std::vector<std::string>>(sp, "extrapolation")};
    return HiPFamily(std::move(generator), matrix_from_json(get<Json>(j, "rewards")), get<double>(j, "gamma"),
                     get<double>(j, "r_max"), get<std::vector<std::string>>(j, "labels"), std::move(thetas),
                     std::move(split));
}

Json checkpoint_to_json(const TaskEmbeddingTable& psi, const LatentDynamicsModel& model,
                        const std::vector<std::string>& labels) {
    Json table = Json::object();
    Json names = Json::object();
    for (const auto& [id, theta] : psi.entries()) {
        table[std::to_string(id)] = vector_to_json(theta);
        if (id >= 0 && id < static_cast<int>(labels.size())) names[std::to_string(id)] = labels[static_cast<std::size_t>(id)];
    }
    return Json{{"schema", "checkpoint"},
                {"version", kSchemaVersion},
                {"embedding_dim", psi.dim()},
                {"psi", table},
                {"labels", names},
                {"model",
                 {{"state_features", matrix_to_json(model.state_features)},
                  {"n_actions", model.n_actions},
                  {"theta_dim", model.theta_dim},
                  {"variance_clamp", {kMinVariance, kMaxVariance}},
                  {"mean", head_to_json(model.mean)},
                  {"logvar", head_to_json(model.logvar)}}}};
}

TaskEmbeddingTable psi_from_checkpoint(const Json& j) {
    expect_schema(j, "checkpoint");
    TaskEmbeddingTable psi(get<int>(j, "embedding_dim"));
    const Json& table = get<Json>(j, "psi");
    require(table.is_object(), "checkpoint: psi must be an object");
    for (const auto& [key, value] : table.items()) {
        int id = 0;
        try {
            id = std::stoi(key);
        } catch (const std::exception&) {
            throw ValidationError("checkpoint: psi keys must be integer environment ids");
        }
        psi.set(id, vector_from_json(value));
    }
    return psi;
}

LatentDynamicsModel model_from_checkpoint(const Json& j) {
    expect_schema(j, "checkpoint");
    const Json& m = get<Json>(j, "model");
    LatentDynamicsModel model(matrix_from_json(get<Json>(m, "state_features")), get<int>(m, "n_actions"),
                              get<int>(m, "theta_dim"));
    AffineHead mean = head_from_json(get<Json>(m, "mean"));
    AffineHead logvar = head_from_json(get<Json>(m, "logvar"));
    require(mean.size() == model.mean.size() && mean.w_state.rows() == model.mean.w_state.rows() &&
                mean.w_state.cols() == model.mean.w_state.cols() && mean.w_theta.cols() == model.mean.w_theta.cols(),
            "checkpoint: mean head shape mismatch");
    require(logvar.size() == model.logvar.size() && logvar.w_state.rows() == model.logvar.w_state.rows() &&
                logvar.w_state.cols() == model.logvar.w_state.cols() &&
                logvar.w_theta.cols() == model.logvar.w_theta.cols(),
            "checkpoint: logvar head shape mismatch");
    model.mean = std::move(mean);
    model.logvar = std::move(logvar);
    return model;
}

Json to_json(const BoundReport& r) {
    Json terms = Json::object();
    for (const auto& [k, v] : r.terms) terms[k] = v;
    return Json{{"theorem_id", to_string(r.theorem)},
                {"lhs", r.lhs},
                {"rhs", r.rhs},
                {"slack", r.slack},
                {"tolerance", r.tolerance},
                {"holds", r.holds},
                {"terms", terms},
                {"inputs",
                 {{"family_seed", r.inputs.family_seed},
                  {"envs", r.inputs.envs},
                  {"phi", r.inputs.phi},
                  {"thetas", r.inputs.thetas},
                  {"dataset_size", r.inputs.dataset_size},
                  {"delta", r.inputs.delta},
                  {"ground_metric", r.inputs.ground_metric},
                  {"theta_gap", r.inputs.theta_gap}}}};
}

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << text;
    require(static_cast<bool>(out), "failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
    require(!header_.empty(), "CsvTable: empty header");
}

void CsvTable::add_row(std::vector<std::string> row) {
    require(row.size() == header_.size(), "CsvTable: row width differs from header");
    rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            out += fields[i];
        }
        out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
}

void CsvTable::write(const std::filesystem::path& path) const { write_text(path, str()); }

CsvTable CsvTable::parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(l);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (!l.empty() && l.back() == ',') fields.emplace_back();
        return fields;
    };
    require(static_cast<bool>(std::getline(in, line)) && !line.empty(), "CSV: missing header");
    CsvTable table(split(line));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split(line);
        require(fields.size() == table.header_.size(), "CSV: ragged row");
        table.rows_.push_back(std::move(fields));
    }
    return table;
}

CsvTable CsvTable::read(const std::filesystem::path& path) { return parse(read_text(path)); }

}  // namespace hipbmdp
