#include "hipbmdp/harness.hpp"

#include "hipbmdp/error.hpp"
#include "hipbmdp/seed.hpp"
#include "hipbmdp/stats.hpp"
#include "hipbmdp/theta_metric.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace hipbmdp {

namespace fs = std::filesystem;

namespace {

// Stream tags for seeds derived from the run seed.
enum : std::uint64_t {
    kFamilyStream = 0,
    kLiftStream = 1,
    kTrainStream = 2,
    kBoundsStream = 3,
    kBufferStream = 100,
    kAdaptBufferStream = 200,
    kProbeStream = 300,
};

/// Reads known keys of one JSON object and rejects everything else.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        require(j_.is_object(), path_ + ": expected a JSON object");
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path_ + "." + key + ": " + e.what());
        }
    }

    const Json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string path(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            require(seen_.count(k) != 0, "unknown configuration key '" + path_ + "." + k + "'");
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string pairing_name(ThetaPairing p) { return p == ThetaPairing::Positional ? "positional" : "shared_input"; }

ThetaPairing pairing_from_string(const std::string& s) {
    if (s == "positional") return ThetaPairing::Positional;
    if (s == "shared_input") return ThetaPairing::SharedInput;
    throw ValidationError("unknown theta pairing '" + s + "'");
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

HiPFamily load_family(const fs::path& dir) {
    const fs::path p = dir / "family.json";
    require(fs::exists(p), "missing " + p.string() + " (run generate first)");
    return family_from_json(read_json(p));
}

ObservedFamily observed(const ExperimentConfig& c, HiPFamily f, std::uint64_t seed) {
    BlockEmission e = BlockEmission::uniform(f.n_states(), c.emission.obs_per_state, c.emission.violation_prob);
    return ObservedFamily(std::move(f), std::move(e), mix_seed(seed, kLiftStream), mix_seed(seed, kFamilyStream));
}

std::vector<int> trained_members(const ExperimentConfig& c, const HiPFamily& f) {
    if (c.train_members == "all") {
        std::vector<int> all(static_cast<std::size_t>(f.n_members()));
        for (int m = 0; m < f.n_members(); ++m) all[static_cast<std::size_t>(m)] = m;
        return all;
    }
    return f.indices_of(f.split().train);
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

VerifyOptions ExperimentConfig::verify_options() const {
    VerifyOptions o;
    o.planner_tol = planner_tol;
    o.bisim_tol = bisim_tol;
    o.ground_metric = ground_metric;
    o.theta_gap = theta_gap;
    return o;
}

void ExperimentConfig::validate() const {
    require(version == kConfigVersion, "config: unsupported version " + std::to_string(version));
    require(!seeds.empty(), "config: seeds must be nonempty");
    require(planner_tol > 0.0 && bisim_tol > 0.0, "config: tolerances must be positive");
    require(family.n_states > 0 && family.n_actions > 0 && family.theta_dim > 0 && family.n_members >= 3,
            "config: invalid family sizes");
    require(family.perturbation_scale >= 0.0 && family.logit_scale >= 0.0, "config: scales must be nonnegative");
    require(family.gamma >= 0.0 && family.gamma < 1.0 && family.r_max > 0.0, "config: invalid gamma or r_max");
    require(emission.obs_per_state > 0, "config: emission.obs_per_state must be positive");
    require(emission.violation_prob >= 0.0 && emission.violation_prob < 1.0,
            "config: emission.violation_prob must lie in [0, 1)");
    require(data.kind == "uniform" || data.kind == "trajectory", "config: data.kind must be uniform or trajectory");
    require(data.size > 0 && data.horizon > 0, "config: data sizes must be positive");
    require(train.steps >= 0 && train.batch_size > 0, "config: invalid train sizes");
    require(train.lr_psi >= 0.0 && train.lr_model >= 0.0 && train.alpha_psi >= 0.0, "config: invalid train rates");
    require(train.embedding_dim > 0 && train.init_scale >= 0.0, "config: invalid embedding settings");
    require(train_members == "train" || train_members == "all", "config: train.members must be train or all");
    require(adapt.steps >= 0 && adapt.lr >= 0.0 && adapt.buffer_size > 0 && adapt.rollout_k >= 1 &&
                adapt.rollout_episodes >= 1,
            "config: invalid adaptation settings");
    require(bounds.instances > 0 && bounds.datasets > 0, "config: bound sweeps must be nonempty");
    require(bounds.per_pair > 0 && bounds.n_sweep_datasets > 0, "config: invalid sample sweep sizes");
    require(bounds.delta > 0.0 && bounds.delta < 1.0, "config: delta must lie in (0, 1)");
    for (int n : bounds.n_sweep) require(n > 0, "config: n_sweep values must be positive");
    for (const auto& t : bounds.theorems) (void)theorem_from_string(t);
    require(bounds.max_latent_states >= 2 && bounds.max_actions >= 1, "config: invalid bound instance bounds");
    require(!bounds.perturbation_scales.empty() && !bounds.epsilons.empty() && !bounds.theta_noise.empty(),
            "config: bound sweep choice lists must be nonempty");
    require(!out_dir.empty(), "config: out_dir must be nonempty");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_json(a) == to_json(b); }

ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    ObjectReader top(j, "config");
    top.read("version", c.version);
    top.read("seeds", c.seeds);
    top.read("planner_tol", c.planner_tol);
    top.read("bisim_tol", c.bisim_tol);
    top.read("out_dir", c.out_dir);
    std::string gm = to_string(c.ground_metric);
    top.read("ground_metric", gm);
    c.ground_metric = ground_metric_from_string(gm);
    std::string tg = to_string(c.theta_gap);
    top.read("theta_gap", tg);
    c.theta_gap = theta_gap_from_string(tg);

    if (const Json* f = top.child("family")) {
        ObjectReader r(*f, top.path("family"));
        r.read("n_states", c.family.n_states);
        r.read("n_actions", c.family.n_actions);
        r.read("theta_dim", c.family.theta_dim);
        r.read("n_members", c.family.n_members);
        r.read("perturbation_scale", c.family.perturbation_scale);
        r.read("logit_scale", c.family.logit_scale);
        r.read("gamma", c.family.gamma);
        r.read("r_max", c.family.r_max);
        if (const Json* s = r.child("split"); s && !s->is_null()) {
            ObjectReader sr(*s, r.path("split"));
            Split split;
            sr.read("train", split.train);
            sr.read("interpolation", split.interpolation);
            sr.read("extrapolation", split.extrapolation);
            sr.finish();
            c.split = std::move(split);
        }
        r.finish();
    }
    if (const Json* e = top.child("emission")) {
        ObjectReader r(*e, top.path("emission"));
        r.read("obs_per_state", c.emission.obs_per_state);
        r.read("violation_prob", c.emission.violation_prob);
        r.finish();
    }
    if (const Json* d = top.child("data")) {
        ObjectReader r(*d, top.path("data"));
        r.read("kind", c.data.kind);
        r.read("size", c.data.size);
        r.read("horizon", c.data.horizon);
        r.finish();
    }
    if (const Json* t = top.child("train")) {
        ObjectReader r(*t, top.path("train"));
        r.read("steps", c.train.steps);
        r.read("batch_size", c.train.batch_size);
        r.read("lr_psi", c.train.lr_psi);
        r.read("lr_model", c.train.lr_model);
        r.read("alpha_psi", c.train.alpha_psi);
        r.read("embedding_dim", c.train.embedding_dim);
        r.read("init_scale", c.train.init_scale);
        std::string pairing = pairing_name(c.train.loss.pairing);
        r.read("pairing", pairing);
        c.train.loss.pairing = pairing_from_string(pairing);
        r.read("psi_receives_model_gradient", c.train.loss.psi_receives_model_gradient);
        r.read("members", c.train_members);
        r.finish();
    }
    if (const Json* a = top.child("adapt")) {
        ObjectReader r(*a, top.path("adapt"));
        r.read("steps", c.adapt.steps);
        r.read("lr", c.adapt.lr);
        r.read("buffer_size", c.adapt.buffer_size);
        r.read("rollout_k", c.adapt.rollout_k);
        r.read("rollout_episodes", c.adapt.rollout_episodes);
        r.finish();
    }
    if (const Json* b = top.child("bounds")) {
        ObjectReader r(*b, top.path("bounds"));
        r.read("instances", c.bounds.instances);
        r.read("datasets", c.bounds.datasets);
        r.read("per_pair", c.bounds.per_pair);
        r.read("delta", c.bounds.delta);
        r.read("n_sweep", c.bounds.n_sweep);
        r.read("n_sweep_datasets", c.bounds.n_sweep_datasets);
        r.read("theorems", c.bounds.theorems);
        r.read("max_latent_states", c.bounds.max_latent_states);
        r.read("max_actions", c.bounds.max_actions);
        r.read("perturbation_scales", c.bounds.perturbation_scales);
        r.read("epsilons", c.bounds.epsilons);
        r.read("theta_noise", c.bounds.theta_noise);
        r.finish();
    }
    top.finish();
    c.validate();
    return c;
}

Json to_json(const ExperimentConfig& c) {
    Json split = nullptr;
    if (c.split)
        split = Json{{"train", c.split->train},
                     {"interpolation", c.split->interpolation},
                     {"extrapolation", c.split->extrapolation}};
    return Json{{"version", c.version},
                {"seeds", c.seeds},
                {"planner_tol", c.planner_tol},
                {"bisim_tol", c.bisim_tol},
                {"ground_metric", to_string(c.ground_metric)},
                {"theta_gap", to_string(c.theta_gap)},
                {"out_dir", c.out_dir},
                {"family",
                 {{"n_states", c.family.n_states},
                  {"n_actions", c.family.n_actions},
                  {"theta_dim", c.family.theta_dim},
                  {"n_members", c.family.n_members},
                  {"perturbation_scale", c.family.perturbation_scale},
                  {"logit_scale", c.family.logit_scale},
                  {"gamma", c.family.gamma},
                  {"r_max", c.family.r_max},
                  {"split", split}}},
                {"emission", {{"obs_per_state", c.emission.obs_per_state}, {"violation_prob", c.emission.violation_prob}}},
                {"data", {{"kind", c.data.kind}, {"size", c.data.size}, {"horizon", c.data.horizon}}},
                {"train",
                 {{"steps", c.train.steps},
                  {"batch_size", c.train.batch_size},
                  {"lr_psi", c.train.lr_psi},
                  {"lr_model", c.train.lr_model},
                  {"alpha_psi", c.train.alpha_psi},
                  {"embedding_dim", c.train.embedding_dim},
                  {"init_scale", c.train.init_scale},
                  {"pairing", pairing_name(c.train.loss.pairing)},
                  {"psi_receives_model_gradient", c.train.loss.psi_receives_model_gradient},
                  {"members", c.train_members}}},
                {"adapt",
                 {{"steps", c.adapt.steps},
                  {"lr", c.adapt.lr},
                  {"buffer_size", c.adapt.buffer_size},
                  {"rollout_k", c.adapt.rollout_k},
                  {"rollout_episodes", c.adapt.rollout_episodes}}},
                {"bounds",
                 {{"instances", c.bounds.instances},
                  {"datasets", c.bounds.datasets},
                  {"per_pair", c.bounds.per_pair},
                  {"delta", c.bounds.delta},
                  {"n_sweep", c.bounds.n_sweep},
                  {"n_sweep_datasets", c.bounds.n_sweep_datasets},
                  {"theorems", c.bounds.theorems},
                  {"max_latent_states", c.bounds.max_latent_states},
                  {"max_actions", c.bounds.max_actions},
                  {"perturbation_scales", c.bounds.perturbation_scales},
                  {"epsilons", c.bounds.epsilons},
                  {"theta_noise", c.bounds.theta_noise}}}};
}

ExperimentConfig load_config(const fs::path& path) { return config_from_json(read_json(path)); }

std::string config_digest(const ExperimentConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
    return buf;
}

fs::path seed_directory(const fs::path& out, std::uint64_t seed) { return out / ("seed_" + std::to_string(seed)); }

void record_stage(const fs::path& dir, const ExperimentConfig& c, const std::string& stage,
                  const std::vector<std::string>& outputs, double seconds) {
    const fs::path p = dir / "manifest.json";
    Json m = fs::exists(p) ? read_json(p) : Json::object();
    m["artifact_version"] = kArtifactVersion;
    m["config_digest"] = config_digest(c);
    if (!m.contains("stages")) m["stages"] = Json::object();
    m["stages"][stage] = Json{{"outputs", outputs}, {"seconds", seconds}};
    write_json(p, m);
}

void cmd_generate(const ExperimentConfig& c, std::uint64_t seed, const fs::path& out) {
    Stopwatch clock;
    c.validate();
    HiPFamily f = sample_family(c.family, mix_seed(seed, kFamilyStream));
    if (c.split)
        f = HiPFamily(f.generator(), f.shared_rewards(), f.gamma(), f.r_max(), f.labels(), f.thetas(), *c.split);
    const fs::path dir = seed_directory(out, seed);
    write_json(dir / "family.json", to_json(f));
    write_json(dir / "config.json", to_json(c));
    record_stage(dir, c, "generate", {"family.json", "config.json"}, clock.seconds());
}

void cmd_bisim(const ExperimentConfig& c, std::uint64_t seed, const fs::path& out, const std::string& label) {
    Stopwatch clock;
    const fs::path dir = seed_directory(out, seed);
    const ObservedFamily of = observed(c, load_family(dir), seed);
    const int env = of.family().index_of(label);
    const ObservationMDP obs = of.observe_member(env);
    const BisimMetric bm = bisim_metric(obs.mdp, c.bisim_tol);
    const double slack = check_lipschitz_value(obs.mdp, bm, c.planner_tol);
    const double tolerance = 10.0 * c.bisim_tol / (1.0 - obs.mdp.gamma());

    CsvTable table({"x", "y", "latent_x", "latent_y", "distance"});
    double intra = 0.0;
    for (int x = 0; x < obs.mdp.n_states(); ++x)
        for (int y = 0; y < obs.mdp.n_states(); ++y) {
            const int lx = obs.latent_of[static_cast<std::size_t>(x)];
            const int ly = obs.latent_of[static_cast<std::size_t>(y)];
            if (lx == ly) intra = std::max(intra, bm.d(x, y));
            table.add_row({std::to_string(x), std::to_string(y), std::to_string(lx), std::to_string(ly),
                           format_double(bm.d(x, y))});
        }
    const std::string csv = "bisim_" + label + ".csv";
    const std::string js = "lipschitz_" + label + ".json";
    table.write(dir / csv);
    write_json(dir / js, Json{{"env", label},
                              {"lipschitz_slack", slack},
                              {"tolerance", tolerance},
                              {"holds", slack <= tolerance},
                              {"residual", bm.residual},
                              {"iterations", bm.iterations},
                              {"max_intra_block_distance", intra},
                              {"block_structure_holds", obs.block_structure_holds}});
    record_stage(dir, c, "bisim", {csv, js}, clock.seconds());
}

void cmd_train(const ExperimentConfig& c, std::uint64_t seed, const fs::path& out) {
    Stopwatch clock;
    const fs::path dir = seed_directory(out, seed);
    const HiPFamily f = load_family(dir);
    const std::vector<int> members = trained_members(c, f);
    require(members.size() >= 2, "train: at least two training members required");

    ReplayBuffers buffers;
    for (int m : members) {
        const TabularMDP mdp = f.member(m);
        const std::uint64_t s = mix_seed(seed, kBufferStream + static_cast<std::uint64_t>(m));
        if (c.data.kind == "uniform") {
            buffers[m] = collect_uniform(mdp, c.data.size, s);
        } else {
            const int episodes = (c.data.size + c.data.horizon - 1) / c.data.horizon;
            buffers[m] = collect_trajectories(mdp, Policy::uniform(f.n_states(), f.n_actions()), episodes,
                                              c.data.horizon, s);
        }
    }
    TrainConfig tc = c.train;
    tc.seed = mix_seed(seed, kTrainStream);
    const TrainResult result = train(f, buffers, tc);

    write_json(dir / "checkpoint.json", checkpoint_to_json(result.psi, result.model, f.labels()));

    CsvTable log({"step", "theta_term", "model_term_i", "model_term_j", "total"});
    for (std::size_t k = 0; k < result.log.size(); ++k) {
        const auto& e = result.log[k].loss;
        log.add_row({std::to_string(k), format_double(e.theta_term), format_double(e.model_term_i),
                     format_double(e.model_term_j), format_double(e.total)});
    }
    log.write(dir / "train_log.csv");

    const GroundMetric g = make_ground_metric(c.ground_metric, f.member(0), c.bisim_tol);
    CsvTable theta_dist({"row_label", "col_label", "value"});
    Eigen::MatrixXd exact(f.n_members(), f.n_members());
    for (int i = 0; i < f.n_members(); ++i)
        for (int j = 0; j < f.n_members(); ++j) {
            exact(i, j) = i == j ? 0.0
                                 : theta_distance(f.member(i), f.member(j),
                                                  c.ground_metric == GroundMetricKind::Bisimulation
                                                      ? make_ground_metric(c.ground_metric, f.member(i), c.bisim_tol)
                                                      : g,
                                                  false)
                                       .value;
            theta_dist.add_row({f.labels()[static_cast<std::size_t>(i)], f.labels()[static_cast<std::size_t>(j)],
                                format_double(exact(i, j))});
        }
    theta_dist.write(dir / "theta_dist.csv");

    CsvTable embed({"row_label", "col_label", "l1", "l2"});
    std::vector<double> learned_l1;
    std::vector<double> learned_l2;
    std::vector<double> truth;
    for (int i : members)
        for (int j : members) {
            const Eigen::VectorXd diff = result.psi.at(i) - result.psi.at(j);
            embed.add_row({f.labels()[static_cast<std::size_t>(i)], f.labels()[static_cast<std::size_t>(j)],
                           format_double(diff.lpNorm<1>()), format_double(diff.norm())});
            if (i < j) {
                learned_l1.push_back(diff.lpNorm<1>());
                learned_l2.push_back(diff.norm());
                truth.push_back(exact(i, j));
            }
        }
    embed.write(dir / "embed_dist.csv");

    const double rho = spearman(learned_l1, truth);
    const auto& last = result.log.empty() ? LossBreakdown{} : result.log.back().loss;
    Json psi = Json::object();
    for (int m : members) psi[f.labels()[static_cast<std::size_t>(m)]] = to_std(result.psi.at(m));
    write_json(dir / "train_summary.json",
               Json{{"spearman_l1", std::isfinite(rho) ? Json(rho) : Json(nullptr)},
                    {"spearman_l2", [&] {
                         const double r2 = spearman(learned_l2, truth);
                         return std::isfinite(r2) ? Json(r2) : Json(nullptr);
                     }()},
                    {"n_pairs", truth.size()},
                    {"updates", result.log.size()},
                    {"final_theta_term", last.theta_term},
                    {"final_total", last.total},
                    {"ground_metric", to_string(c.ground_metric)},
                    {"embeddings", psi}});
    record_stage(dir, c, "train", {"checkpoint.json", "train_log.csv", "theta_dist.csv", "embed_dist.csv",
                                   "train_summary.json"},
                 clock.seconds());
}

void cmd_adapt(const ExperimentConfig& c, std::uint64_t seed, const fs::path& out,
               const std::optional<std::string>& target) {
    Stopwatch clock;
    const fs::path dir = seed_directory(out, seed);
    const HiPFamily f = load_family(dir);
    const fs::path ckpt = dir / "checkpoint.json";
    require(fs::exists(ckpt), "missing " + ckpt.string() + " (run train first)");
    const Json ck = read_json(ckpt);
    const TaskEmbeddingTable psi = psi_from_checkpoint(ck);
    const LatentDynamicsModel model = model_from_checkpoint(ck);
    const Eigen::VectorXd init = psi.mean_of(psi.env_ids());

    std::vector<std::string> labels;
    if (target) {
        labels = {*target};
    } else {
        labels = f.split().interpolation;
        labels.insert(labels.end(), f.split().extrapolation.begin(), f.split().extrapolation.end());
    }
    std::vector<std::string> outputs;
    Json summary = Json::object();
    for (const auto& label : labels) {
        const int m = f.index_of(label);
        const TabularMDP mdp = f.member(m);
        TransitionBatch batch{m, collect_uniform(mdp, c.adapt.buffer_size,
                                                 mix_seed(seed, kAdaptBufferStream + static_cast<std::uint64_t>(m)))};
        RolloutProbe probe{mdp, Policy::uniform(f.n_states(), f.n_actions()), c.adapt.rollout_k,
                           c.adapt.rollout_episodes, mix_seed(seed, kProbeStream + static_cast<std::uint64_t>(m))};
        const AdaptResult r = adapt_theta(model, batch, init, c.adapt.steps, c.adapt.lr, probe);
        CsvTable table({"step", "model_error", "rollout_error"});
        for (std::size_t k = 0; k < r.model_error.size(); ++k)
            table.add_row({std::to_string(k), format_double(r.model_error[k]), format_double(r.rollout_error[k])});
        const std::string name = "adapt_" + label + ".csv";
        table.write(dir / name);
        outputs.push_back(name);
        const bool interpolation = std::find(f.split().interpolation.begin(), f.split().interpolation.end(), label) !=
                                   f.split().interpolation.end();
        summary[label] = Json{{"role", interpolation ? "interpolation" : (psi.contains(m) ? "train" : "extrapolation")},
                              {"initial_rollout_error", r.rollout_error.front()},
                              {"final_rollout_error", r.rollout_error.back()},
                              {"initial_model_error", r.model_error.front()},
                              {"final_model_error", r.model_error.back()},
                              {"theta_init", to_std(init)},
                              {"theta_hat", to_std(r.theta_hat)}};
    }
    write_json(dir / "adapt_summary.json", summary);
    outputs.push_back("adapt_summary.json");
    record_stage(dir, c, "adapt", outputs, clock.seconds());
}

BoundsOutcome cmd_bounds(const ExperimentConfig& c, std::uint64_t seed, const fs::path& out) {
    Stopwatch clock;
    c.validate();
    const fs::path dir = seed_directory(out, seed);
    std::vector<Theorem> theorems;
    if (c.bounds.theorems.empty())
        theorems = all_theorems();
    else
        for (const auto& t : c.bounds.theorems) theorems.push_back(theorem_from_string(t));

    SweepConfig sweep;
    sweep.instances = c.bounds.instances;
    sweep.seed = mix_seed(seed, kBoundsStream);
    sweep.gamma = c.family.gamma;
    sweep.r_max = c.family.r_max;
    sweep.max_latent_states = c.bounds.max_latent_states;
    sweep.obs_per_state = c.emission.obs_per_state;
    sweep.max_actions = c.bounds.max_actions;
    sweep.n_members = c.family.n_members;
    sweep.perturbation_scales = c.bounds.perturbation_scales;
    sweep.epsilons = c.bounds.epsilons;
    sweep.theta_noise = c.bounds.theta_noise;
    sweep.options = c.verify_options();

    SampleSweepConfig sample;
    sample.datasets = c.bounds.datasets;
    sample.per_pair = c.bounds.per_pair;
    sample.delta = c.bounds.delta;
    sample.seed = mix_seed(seed, kBoundsStream + 1);
    sample.family = c.family;
    sample.obs_per_state = c.emission.obs_per_state;
    sample.options = c.verify_options();

    BoundsOutcome outcome;
    CsvTable csv({"theorem_id", "seed", "lhs", "rhs", "slack", "holds"});
    CsvTable summary({"theorem_id", "count", "holds", "holds_frequency", "min_slack", "ci_half_width"});
    Json reports = Json::array();
    for (Theorem t : theorems) {
        const std::vector<BoundReport> rs = is_deterministic(t) ? sweep_deterministic(t, sweep)
                                                                : sweep_sample_complexity(sample);
        for (const auto& r : rs) {
            csv.add_row({to_string(t), std::to_string(seed), format_double(r.lhs), format_double(r.rhs),
                         format_double(r.slack), bool_str(r.holds)});
            reports.push_back(to_json(r));
        }
        const SweepSummary s = summarize(t, rs);
        outcome.summaries.push_back(s);
        if (is_deterministic(t) && s.holds < s.count) outcome.deterministic_violation = true;
        summary.add_row({to_string(t), std::to_string(s.count), std::to_string(s.holds),
                         format_double(s.holds_frequency), format_double(s.min_slack),
                         format_double(binomial_ci_half_width(s.holds_frequency, s.count))});
    }
    csv.write(dir / "bounds.csv");
    summary.write(dir / "bounds_summary.csv");
    write_json(dir / "bounds_reports.json", reports);
    std::vector<std::string> outputs{"bounds.csv", "bounds_summary.csv", "bounds_reports.json"};

    if (std::find(theorems.begin(), theorems.end(), Theorem::SampleComplexity) != theorems.end()) {
        CsvTable nsweep({"n_phi", "median_lhs", "median_rhs", "holds_frequency"});
        for (int n : c.bounds.n_sweep) {
            SampleSweepConfig sc = sample;
            sc.per_pair = n;
            sc.datasets = c.bounds.n_sweep_datasets;
            const auto rs = sweep_sample_complexity(sc);
            std::vector<double> lhs;
            std::vector<double> rhs;
            for (const auto& r : rs) {
                lhs.push_back(r.lhs);
                rhs.push_back(r.rhs);
            }
            nsweep.add_row({std::to_string(n), format_double(median(lhs)), format_double(median(rhs)),
                            format_double(summarize(Theorem::SampleComplexity, rs).holds_frequency)});
        }
        nsweep.write(dir / "bounds_nsweep.csv");
        outputs.push_back("bounds_nsweep.csv");
    }
    record_stage(dir, c, "bounds", outputs, clock.seconds());
    return outcome;
}

namespace {

std::vector<std::pair<std::uint64_t, fs::path>> seed_dirs(const fs::path& out) {
    require(fs::is_directory(out), "report: " + out.string() + " is not a directory");
    std::vector<std::pair<std::uint64_t, fs::path>> dirs;
    for (const auto& entry : fs::directory_iterator(out)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("seed_", 0) != 0) continue;
        try {
            dirs.emplace_back(std::stoull(name.substr(5)), entry.path());
        } catch (const std::exception&) {
            throw ValidationError("report: malformed seed directory " + name);
        }
    }
    require(!dirs.empty(), "report: no seed_<s> directories in " + out.string());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

double parse_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        require(used == s.size(), "report: malformed number '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        throw ValidationError("report: malformed number '" + s + "'");
    } catch (const std::out_of_range&) {
        return s.front() == '-' ? -HUGE_VAL : HUGE_VAL;
    }
}

std::size_t column(const CsvTable& t, const std::string& name) {
    const auto& h = t.header();
    const auto it = std::find(h.begin(), h.end(), name);
    require(it != h.end(), "report: missing CSV column " + name);
    return static_cast<std::size_t>(it - h.begin());
}

}  // namespace

void cmd_report(const fs::path& out) {
    const auto dirs = seed_dirs(out);
    CsvTable plot({"metric", "x", "y", "group", "seed"});
    // (metric, group) -> per-seed scalar values.
    std::map<std::pair<std::string, std::string>, std::vector<double>> scalars;
    Json per_seed = Json::object();

    for (const auto& [seed, dir] : dirs) {
        const std::string s = std::to_string(seed);
        const fs::path mp = dir / "manifest.json";
        require(fs::exists(mp), "report: missing " + mp.string());
        const Json manifest = read_json(mp);
        require(manifest.contains("stages") && manifest["stages"].is_object(), "report: manifest without stages");
        Json seed_json = Json::object();
        for (const auto& [stage, info] : manifest["stages"].items()) {
            require(info.contains("outputs"), "report: stage " + stage + " declares no outputs");
            for (const auto& o : info["outputs"]) {
                const fs::path p = dir / o.get<std::string>();
                require(fs::exists(p), "report: declared output missing: " + p.string());
                if (p.extension() == ".json")
                    (void)read_json(p);
                else if (p.extension() == ".csv")
                    (void)CsvTable::read(p);
            }
        }

        auto add_scalar = [&](const std::string& metric, const std::string& group, double v) {
            scalars[{metric, group}].push_back(v);
            seed_json[metric + (group.empty() ? "" : "/" + group)] = v;
        };

        if (fs::exists(dir / "train_log.csv")) {
            const CsvTable t = CsvTable::read(dir / "train_log.csv");
            const std::size_t cs = column(t, "step");
            const std::size_t ct = column(t, "total");
            const std::size_t cth = column(t, "theta_term");
            for (const auto& r : t.rows()) {
                plot.add_row({"train_total", r[cs], r[ct], "all", s});
                plot.add_row({"train_theta_term", r[cs], r[cth], "all", s});
            }
        }
        if (fs::exists(dir / "train_summary.json")) {
            const Json ts = read_json(dir / "train_summary.json");
            if (ts.contains("spearman_l1") && ts["spearman_l1"].is_number())
                add_scalar("spearman_l1", "", ts["spearman_l1"].get<double>());
        }
        if (fs::exists(dir / "embed_dist.csv") && fs::exists(dir / "theta_dist.csv")) {
            const CsvTable th = CsvTable::read(dir / "theta_dist.csv");
            std::map<std::pair<std::string, std::string>, std::string> exact;
            for (const auto& r : th.rows()) exact[{r[0], r[1]}] = r[2];
            const CsvTable em = CsvTable::read(dir / "embed_dist.csv");
            for (const auto& r : em.rows()) {
                if (r[0] >= r[1]) continue;
                const auto it = exact.find({r[0], r[1]});
                require(it != exact.end(), "report: embedding pair without exact distance");
                plot.add_row({"embedding_vs_theta_distance", it->second, r[2], r[0] + "-" + r[1], s});
            }
        }
        if (fs::exists(dir / "adapt_summary.json")) {
            const Json as = read_json(dir / "adapt_summary.json");
            for (const auto& [label, info] : as.items()) {
                add_scalar("adapt_initial_rollout_error", label, info["initial_rollout_error"].get<double>());
                add_scalar("adapt_final_rollout_error", label, info["final_rollout_error"].get<double>());
                const CsvTable t = CsvTable::read(dir / ("adapt_" + label + ".csv"));
                for (const auto& r : t.rows()) {
                    plot.add_row({"adapt_rollout_error", r[0], r[2], label, s});
                    plot.add_row({"adapt_model_error", r[0], r[1], label, s});
                }
            }
        }
        if (fs::exists(dir / "bounds_summary.csv")) {
            const CsvTable t = CsvTable::read(dir / "bounds_summary.csv");
            for (const auto& r : t.rows()) {
                add_scalar("bound_holds_frequency", r[0], parse_double(r[3]));
                add_scalar("bound_min_slack", r[0], parse_double(r[4]));
            }
        }
        if (fs::exists(dir / "bounds.csv")) {
            const CsvTable t = CsvTable::read(dir / "bounds.csv");
            std::map<std::string, int> index;
            for (const auto& r : t.rows()) plot.add_row({"bound_slack", std::to_string(index[r[0]]++), r[4], r[0], s});
        }
        if (fs::exists(dir / "bounds_nsweep.csv")) {
            const CsvTable t = CsvTable::read(dir / "bounds_nsweep.csv");
            for (const auto& r : t.rows()) {
                plot.add_row({"sample_complexity_median_lhs", r[0], r[1], "sample_complexity", s});
                plot.add_row({"sample_complexity_median_rhs", r[0], r[2], "sample_complexity", s});
            }
        }
        per_seed[s] = seed_json;
    }

    CsvTable summary({"metric", "group", "n", "mean", "stderr"});
    Json metrics = Json::object();
    for (const auto& [key, values] : scalars) {
        const double m = mean(values);
        const double se = standard_error(values);
        summary.add_row({key.first, key.second, std::to_string(values.size()), format_double(m), format_double(se)});
        metrics[key.first + (key.second.empty() ? "" : "/" + key.second)] =
            Json{{"n", values.size()}, {"mean", m}, {"stderr", se}};
    }
    Json seeds = Json::array();
    for (const auto& [seed, _] : dirs) seeds.push_back(seed);
    plot.write(out / "plot_data.csv");
    summary.write(out / "summary.csv");
    write_json(out / "report.json", Json{{"artifact_version", kArtifactVersion},
                                         {"seeds", seeds},
                                         {"metrics", metrics},
                                         {"per_seed", per_seed}});
}

BoundsOutcome run_pipeline(const ExperimentConfig& c, std::uint64_t seed, const fs::path& out) {
    cmd_generate(c, seed, out);
    const HiPFamily f = load_family(seed_directory(out, seed));
    cmd_bisim(c, seed, out, f.split().train.front());
    cmd_train(c, seed, out);
    cmd_adapt(c, seed, out);
    BoundsOutcome outcome = cmd_bounds(c, seed, out);
    cmd_report(out);
    return outcome;
}

}  // namespace hipbmdp
