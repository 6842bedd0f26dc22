#include "hipbmdp/bisim.hpp"
#include "hipbmdp/bounds.hpp"
#include "hipbmdp/error.hpp"
#include "hipbmdp/family.hpp"
#include "hipbmdp/harness.hpp"
#include "hipbmdp/io.hpp"
#include "hipbmdp/learner.hpp"
#include "hipbmdp/seed.hpp"
#include "hipbmdp/stats.hpp"
#include "hipbmdp/transport.hpp"

#include "../oracles/lp_oracle.hpp"
#include "../unit/learner_oracle.hpp"
#include "../unit/test_util.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hipbmdp;

namespace {

// Pinned tolerances and sizes.
constexpr double kTransportTol = 1e-9;
constexpr double kTransportSeconds = 10.0;
constexpr double kBisimTol = 1e-8;
constexpr double kContractionSlack = 1e-9;
constexpr double kClosedFormTol = 1e-6;
constexpr double kBisimSeconds = 30.0;
constexpr double kBoundsSeconds = 300.0;
constexpr int kBoundInstances = 500;
constexpr int kDatasets = 200;
constexpr double kDelta = 0.1;
constexpr double kGradientRel = 1e-4;
constexpr double kGradientStep = 1e-5;
constexpr int kGradientConfigs = 50;
constexpr double kSpearmanMin = 0.9;
constexpr int kFamilySeeds = 10;
constexpr int kSpearmanSeedsMin = 8;
constexpr double kRecoverySeconds = 600.0;
constexpr int kAdaptSeedsMin = 9;
constexpr double kRecoveryTol = 1e-2;

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hipbmdp_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Verdict transport_exactness() {
    Stopwatch clock;
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> size(1, 6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 500; ++k) {
        const int n = size(rng);
        const double sparsity = u(rng) < 0.5 ? 0.4 : 0.0;
        const auto p = testutil::random_simplex(n, rng, sparsity);
        const auto q = k % 10 == 0 ? p : testutil::random_simplex(n, rng, sparsity);
        const Eigen::MatrixXd d = testutil::random_metric(n, rng, k % 3 == 0);
        const double w = wasserstein1(DiscreteDistribution(p), DiscreteDistribution(q), GroundMetric(d));
        worst = std::max(worst, std::abs(w - oracle::coupling_lp(p, q, d)));
    }
    const double t = clock.seconds();
    return {worst <= kTransportTol && t < kTransportSeconds,
            "W1 vs coupling LP on 500 instances: max |diff| " + fmt(worst) + ", " + fmt(t) + " s"};
}

Verdict bisim_fixed_point() {
    Stopwatch clock;
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> states(2, 10), actions(1, 3);
    std::uniform_real_distribution<double> gammas(0.5, 0.95);

    double worst_residual = 0.0;
    for (int k = 0; k < 20; ++k) {
        const TabularMDP mdp = testutil::random_mdp(states(rng), actions(rng), gammas(rng), rng);
        const BisimMetric d = bisim_metric(mdp, kBisimTol);
        const double recomputed = (bisim_operator(mdp, d.d) - d.d).cwiseAbs().maxCoeff();
        worst_residual = std::max({worst_residual, d.residual, recomputed});
    }

    double worst_factor = 0.0;
    double worst_gamma = 0.0;
    bool contracts = true;
    for (int k = 0; k < 100; ++k) {
        const int S = states(rng);
        const TabularMDP mdp = testutil::random_mdp(S, actions(rng), gammas(rng), rng);
        const Eigen::MatrixXd d1 = testutil::random_metric(S, rng);
        const Eigen::MatrixXd d2 = testutil::random_metric(S, rng);
        const double gap = (d1 - d2).cwiseAbs().maxCoeff();
        if (gap == 0.0) continue;
        const double factor = (bisim_operator(mdp, d1) - bisim_operator(mdp, d2)).cwiseAbs().maxCoeff() / gap;
        if (factor > mdp.gamma() + kContractionSlack) contracts = false;
        if (factor - mdp.gamma() > worst_factor - worst_gamma) {
            worst_factor = factor;
            worst_gamma = mdp.gamma();
        }
    }

    double worst_closed = 0.0;
    for (double gamma : {0.5, 0.9, 0.95})
        for (auto [r1, r2] : {std::pair{0.0, 1.0}, {0.3, 0.7}, {0.9, 0.2}}) {
            const BisimMetric d = bisim_metric(testutil::absorbing_pair(r1, r2, gamma), 1e-12);
            worst_closed = std::max(worst_closed, std::abs(d.d(0, 1) - std::abs(r1 - r2) / (1.0 - gamma)));
        }
    const double t = clock.seconds();
    return {worst_residual <= kBisimTol && contracts && worst_closed <= kClosedFormTol && t < kBisimSeconds,
            "residual " + fmt(worst_residual) + ", worst contraction " + fmt(worst_factor) + " at gamma " +
                fmt(worst_gamma) + ", closed-form gap " + fmt(worst_closed) + ", " + fmt(t) + " s"};
}

Verdict lipschitz_value() {
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> states(2, 10), actions(1, 3);
    std::uniform_real_distribution<double> gammas(0.5, 0.95);
    double worst_excess = -1e300;
    bool holds = true;
    for (int k = 0; k < 100; ++k) {
        const TabularMDP mdp = testutil::random_mdp(states(rng), actions(rng), gammas(rng), rng);
        const BisimMetric d = bisim_metric(mdp, kBisimTol);
        const double slack = check_lipschitz_value(mdp, d);
        const double allowed = 10.0 * kBisimTol / (1.0 - mdp.gamma());
        if (slack > allowed) holds = false;
        worst_excess = std::max(worst_excess, slack - allowed);
    }
    return {holds, "100 MDPs, worst (gap - d/(1-gamma)) minus allowance " + fmt(worst_excess)};
}

Verdict deterministic_bounds() {
    Stopwatch clock;
    SweepConfig config;
    config.instances = kBoundInstances;
    config.seed = 404;
    bool all = true;
    std::string detail;
    for (Theorem t : all_theorems()) {
        if (!is_deterministic(t)) continue;
        const SweepSummary s = summarize(t, sweep_deterministic(t, config));
        all = all && s.holds == s.count && s.count >= kBoundInstances;
        detail += to_string(t) + " " + std::to_string(s.holds) + "/" + std::to_string(s.count) + " (min slack " +
                  fmt(s.min_slack) + "); ";
    }
    const double t = clock.seconds();
    return {all && t < kBoundsSeconds, detail + fmt(t) + " s"};
}

Verdict sample_complexity() {
    SampleSweepConfig config;
    config.datasets = kDatasets;
    config.delta = kDelta;
    config.seed = 505;
    const SweepSummary s = summarize(Theorem::SampleComplexity, sweep_sample_complexity(config));
    const double half = binomial_ci_half_width(s.holds_frequency, s.count);
    const bool frequency_ok = s.holds_frequency >= 1.0 - kDelta - half;

    std::vector<double> medians;
    for (int n : {10, 100, 1000}) {
        SampleSweepConfig c = config;
        c.per_pair = n;
        c.datasets = 50;
        std::vector<double> lhs;
        for (const auto& r : sweep_sample_complexity(c)) lhs.push_back(r.lhs);
        medians.push_back(median(lhs));
    }
    const bool monotone = medians[0] > medians[1] && medians[1] > medians[2];
    return {frequency_ok && monotone, "holds " + fmt(s.holds_frequency) + " over " + std::to_string(s.count) +
                                          " datasets (threshold " + fmt(1.0 - kDelta - half) +
                                          "), median lhs at n_phi 10/100/1000: " + fmt(medians[0]) + " " +
                                          fmt(medians[1]) + " " + fmt(medians[2])};
}

Verdict gradient_correctness() {
    std::mt19937_64 rng(606);
    std::uniform_int_distribution<int> states(2, 6), actions(1, 3), dims(1, 3), batches(1, 8);
    std::uniform_real_distribution<double> alphas(0.1, 2.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    const double h = kGradientStep;
    int checked = 0;
    int failed = 0;
    bool contract = true;
    for (int trial = 0; trial < kGradientConfigs; ++trial) {
        const int S = states(rng), A = actions(rng), dim = dims(rng), batch = batches(rng);
        LatentDynamicsModel model = LatentDynamicsModel::one_hot(S, A, dim);
        testutil::randomize(model.mean, rng, 0.5);
        testutil::randomize(model.logvar, rng, 0.5);
        TaskEmbeddingTable psi(dim);
        for (int env : {1, 2}) {
            Eigen::VectorXd t(dim);
            for (int k = 0; k < dim; ++k) t(k) = n01(rng);
            psi.set(env, t);
        }
        const TransitionBatch bi = testutil::random_batch(1, batch, S, A, rng);
        const TransitionBatch bj = testutil::random_batch(2, batch, S, A, rng);
        LossOptions opt;
        opt.pairing = trial % 2 ? ThetaPairing::Positional : ThetaPairing::SharedInput;
        opt.psi_receives_model_gradient = trial % 4 < 2;
        const double alpha = alphas(rng);
        const ParameterGradients g = gradients(bi, bj, psi, model, alpha, opt);
        const auto w = testutil::targets_straight(bi, bj, psi.at(1), psi.at(2), model,
                                                  opt.pairing == ThetaPairing::Positional);
        const Eigen::VectorXd ti = psi.at(1), tj = psi.at(2);
        auto check = [&](double analytic, double numeric) {
            ++checked;
            if (!testutil::close_relative(analytic, numeric, kGradientRel)) ++failed;
        };

        auto psi_loss = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
            const double full = testutil::loss_straight(bi, bj, a, b, model, alpha, w);
            if (opt.psi_receives_model_gradient) return full;
            return full - testutil::model_term_straight(model, bi, a) - testutil::model_term_straight(model, bj, b);
        };
        for (int k = 0; k < dim; ++k) {
            Eigen::VectorXd up = ti, down = ti;
            up(k) += h;
            down(k) -= h;
            check(g.psi.at(1)(k), (psi_loss(up, tj) - psi_loss(down, tj)) / (2 * h));
            up = tj;
            down = tj;
            up(k) += h;
            down(k) -= h;
            check(g.psi.at(2)(k), (psi_loss(ti, up) - psi_loss(ti, down)) / (2 * h));
        }
        for (bool mean_head : {true, false}) {
            const Eigen::VectorXd flat = (mean_head ? model.mean : model.logvar).flatten();
            const Eigen::VectorXd grad = (mean_head ? g.mean : g.logvar).flatten();
            for (Eigen::Index k = 0; k < flat.size(); ++k) {
                LatentDynamicsModel up = model, down = model;
                Eigen::VectorXd fu = flat, fd = flat;
                fu(k) += h;
                fd(k) -= h;
                (mean_head ? up.mean : up.logvar).assign(fu);
                (mean_head ? down.mean : down.logvar).assign(fd);
                check(grad(k), (testutil::loss_straight(bi, bj, ti, tj, up, alpha, w) -
                                testutil::loss_straight(bi, bj, ti, tj, down, alpha, w)) /
                                   (2 * h));
            }
        }

        // Theta term reaches psi only; with the switch off, model terms reach the model only.
        LossOptions off = opt;
        off.psi_receives_model_gradient = false;
        const ParameterGradients none = gradients(bi, bj, psi, model, 0.0, off);
        const ParameterGradients heavy = gradients(bi, bj, psi, model, 10.0 * alpha, off);
        contract = contract && none.psi.at(1).isZero(0.0) && none.psi.at(2).isZero(0.0) &&
                   heavy.mean == none.mean && heavy.logvar.flatten().isZero(0.0) && none.logvar.flatten().isZero(0.0);
        const ParameterGradients flowing = gradients(bi, bj, psi, model, 0.0, opt);
        if (opt.psi_receives_model_gradient)
            contract = contract && flowing.psi.at(1) == model_term_theta_gradient(model, bi, ti) &&
                       flowing.psi.at(2) == model_term_theta_gradient(model, bj, tj);
    }
    return {failed == 0 && contract, std::to_string(checked - failed) + "/" + std::to_string(checked) +
                                         " coordinates within rel " + fmt(kGradientRel) + " over " +
                                         std::to_string(kGradientConfigs) + " configs, stop-gradient contract " +
                                         (contract ? "exact" : "violated")};
}

Verdict embedding_recovery() {
    Stopwatch clock;
    const fs::path out = scratch("embedding");
    ExperimentConfig c;
    c.train_members = "all";
    c.out_dir = out.string();
    int good = 0;
    std::string rhos;
    for (std::uint64_t seed = 0; seed < kFamilySeeds; ++seed) {
        cmd_generate(c, seed, out);
        cmd_train(c, seed, out);
        const Json summary = read_json(seed_directory(out, seed) / "train_summary.json");
        const double rho = summary["spearman_l1"].is_null() ? -1.0 : summary["spearman_l1"].get<double>();
        if (rho >= kSpearmanMin) ++good;
        rhos += fmt(rho) + " ";
    }
    fs::remove_all(out);
    const double t = clock.seconds();
    return {good >= kSpearmanSeedsMin && t < kRecoverySeconds,
            std::to_string(good) + "/" + std::to_string(kFamilySeeds) + " seeds with Spearman >= " +
                fmt(kSpearmanMin) + " [" + rhos + "], " + fmt(t) + " s"};
}

Verdict theta_adaptation() {
    const ExperimentConfig c;
    int improved = 0;
    int members_improved = 0;
    int members_total = 0;
    int recovered = 0;
    double worst_gap = 0.0;
    for (std::uint64_t seed = 0; seed < kFamilySeeds; ++seed) {
        const HiPFamily f = sample_family(c.family, mix_seed(seed, 10));
        const std::vector<int> members = f.indices_of(f.split().train);
        ReplayBuffers buffers;
        for (int m : members)
            buffers[m] = collect_uniform(f.member(m), c.data.size, mix_seed(seed, 20 + static_cast<std::uint64_t>(m)));
        TrainConfig tc = c.train;
        tc.seed = mix_seed(seed, 11);
        const TrainResult r = train(f, buffers, tc);
        const Eigen::VectorXd init = r.psi.mean_of(members);

        // A seed counts when the mean over its interpolation members does not rise.
        double initial = 0.0;
        double final = 0.0;
        for (const auto& label : f.split().interpolation) {
            const int m = f.index_of(label);
            const TransitionBatch batch{
                m, collect_uniform(f.member(m), c.adapt.buffer_size, mix_seed(seed, 40 + static_cast<std::uint64_t>(m)))};
            const RolloutProbe probe{f.member(m), Policy::uniform(f.n_states(), f.n_actions()), c.adapt.rollout_k,
                                     c.adapt.rollout_episodes, mix_seed(seed, 60 + static_cast<std::uint64_t>(m))};
            const AdaptResult a = adapt_theta(r.model, batch, init, c.adapt.steps, c.adapt.lr, probe);
            initial += a.rollout_error.front();
            final += a.rollout_error.back();
            ++members_total;
            if (a.rollout_error.back() <= a.rollout_error.front()) ++members_improved;
        }
        if (final <= initial) ++improved;

        // Self-consistency: the member's own replay data from the zero-shot start.
        const int m = members[1];
        const AdaptResult self = adapt_theta(r.model, TransitionBatch{m, buffers.at(m)}, init, 500, c.adapt.lr);
        const double gap = (self.theta_hat - r.psi.at(m)).lpNorm<Eigen::Infinity>();
        worst_gap = std::max(worst_gap, gap);
        if (gap <= kRecoveryTol) ++recovered;
    }
    return {improved >= kAdaptSeedsMin && recovered == kFamilySeeds,
            std::to_string(improved) + "/" + std::to_string(kFamilySeeds) +
                " seeds where adaptation does not raise interpolation rollout error (" +
                std::to_string(members_improved) + "/" + std::to_string(members_total) +
                " members); training member recovered on " +
                std::to_string(recovered) + "/" + std::to_string(kFamilySeeds) + " seeds (worst L-inf gap " +
                fmt(worst_gap) + ")"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<fs::path> csv_files(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(fs::relative(e.path(), root));
    std::sort(files.begin(), files.end());
    return files;
}

Verdict pipeline_determinism() {
    const fs::path a = scratch("pipeline_a");
    const fs::path b = scratch("pipeline_b");
    ExperimentConfig c;
    c.seeds = {7};
    for (const fs::path& out : {a, b}) {
        c.out_dir = out.string();
        run_pipeline(c, 7, out);
    }
    const auto fa = csv_files(a);
    const auto fb = csv_files(b);
    bool same = !fa.empty() && fa == fb;
    int identical = 0;
    std::string differing;
    if (same)
        for (const auto& rel : fa) {
            if (slurp(a / rel) == slurp(b / rel)) {
                ++identical;
            } else {
                same = false;
                differing += rel.string() + " ";
            }
        }
    fs::remove_all(a);
    fs::remove_all(b);
    return {same, std::to_string(identical) + "/" + std::to_string(fa.size()) + " CSV files byte-identical" +
                      (differing.empty() ? "" : " (differ: " + differing + ")")};
}

const std::vector<std::pair<std::string, std::function<Verdict()>>>& criteria() {
    static const std::vector<std::pair<std::string, std::function<Verdict()>>> list{
        {"optimal-transport exactness", transport_exactness},
        {"bisimulation fixed point", bisim_fixed_point},
        {"value function is Lipschitz in the bisimulation metric", lipschitz_value},
        {"deterministic bounds hold on every instance", deterministic_bounds},
        {"sample-complexity bound frequency and n_phi trend", sample_complexity},
        {"loss gradients and stop-gradient contract", gradient_correctness},
        {"embedding gaps rank like the task metric", embedding_recovery},
        {"theta-only adaptation", theta_adaptation},
        {"end-to-end determinism", pipeline_determinism},
    };
    return list;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks; one PASS/FAIL line per criterion."};
    int only = 0;
    app.add_option("--criterion", only, "Run a single criterion (1-9); all when omitted")
        ->check(CLI::Range(1, static_cast<int>(criteria().size())));
    CLI11_PARSE(app, argc, argv);

    bool all = true;
    for (std::size_t k = 0; k < criteria().size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (only != 0 && only != id) continue;
        const auto& [name, run] = criteria()[k];
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (v.pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << name << ": " << v.detail
                  << std::endl;
        all = all && v.pass;
    }
    return all ? 0 : 1;
}
