#include "hipbmdp/bounds.hpp"
#include "hipbmdp/error.hpp"
#include "hipbmdp/family.hpp"
#include "hipbmdp/seed.hpp"
#include "hipbmdp/stats.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace hipbmdp;

namespace {

ObservedFamily observed_family(std::uint64_t seed, double scale = 1.0, int S = 4, int obs = 2) {
    FamilySpec spec;
    spec.n_states = S;
    spec.perturbation_scale = scale;
    return ObservedFamily(sample_family(spec, seed), BlockEmission::uniform(S, obs), seed + 100, seed);
}

/// Two members whose dynamics differ only in row (s=0, a=0).
HiPFamily single_row_family(double shift) {
    const int S = 3;
    std::vector<Eigen::MatrixXd> base(2, Eigen::MatrixXd::Zero(S, S));
    base[0] << 2, 0, 0, 0, 1, 0, 0, 0, 1;
    base[1] << 0, 1, 0, 1, 0, 0, 0, 0, 3;
    std::vector<std::vector<Eigen::MatrixXd>> dirs(1, std::vector<Eigen::MatrixXd>(2, Eigen::MatrixXd::Zero(S, S)));
    dirs[0][0](0, 0) = -1;
    dirs[0][0](0, 2) = 1;
    Eigen::MatrixXd R(S, 2);
    R << 0.1, 0.5, 0.9, 0.0, 0.3, 0.7;
    return HiPFamily(LogitGenerator(base, dirs), R, 0.9, 1.0, {"A", "B", "C"},
                     {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, shift), Eigen::VectorXd::Constant(1, shift)},
                     Split{{"A", "B"}, {"C"}, {}});
}

void check_report_identity(const BoundReport& r) {
    CHECK(r.slack == r.rhs - r.lhs);
    CHECK(r.tolerance > 0.0);
    CHECK(r.holds == (r.slack >= -r.tolerance));
}

}  // namespace

TEST_CASE("theorem names") {
    for (Theorem t : all_theorems()) CHECK(theorem_from_string(to_string(t)) == t);
    CHECK(all_theorems().size() == 7);
    CHECK_FALSE(is_deterministic(Theorem::SampleComplexity));
    CHECK_THROWS_AS(theorem_from_string("nope"), ValidationError);
    CHECK(theta_gap_from_string("parameter_l1") == ThetaGap::Parameter);
}

TEST_CASE("report tolerance") {
    const BoundReport r = make_report(Theorem::QError, 2.0, 2.0 - 5e-7, 0.0, {}, {});
    CHECK(r.holds);
    CHECK(r.tolerance == doctest::Approx(1e-6 * (2.0 - 5e-7)).epsilon(1e-12));
    const BoundReport big = make_report(Theorem::QError, 1.0, 0.5, 1e-9, {}, {});
    CHECK_FALSE(big.holds);
    CHECK(big.tolerance == doctest::Approx(1e-6 + 1e-9));
}

TEST_CASE("abstract-model Q error") {
    const ObservedFamily of = observed_family(1);
    const StateAbstraction truth = of.ground_truth_abstraction();
    SUBCASE("exact abstraction with the true parameter") {
        const BoundReport r = verify_q_error(of, 2, truth, of.family().theta(2));
        CHECK(r.lhs <= r.tolerance);
        CHECK(r.rhs >= 0.0);
        CHECK(r.rhs <= 1e-12);
        CHECK(r.holds);
        check_report_identity(r);
    }
    SUBCASE("identity abstraction: the RHS reduces to the theta term") {
        const int X = of.observe_member(0).mdp.n_states();
        std::mt19937_64 rng(3);
        std::normal_distribution<double> n(0.0, 0.3);
        for (int trial = 0; trial < 20; ++trial) {
            const int env = trial % of.family().n_members();
            const Eigen::VectorXd hat = of.family().theta(env) + Eigen::VectorXd::Constant(1, n(rng));
            const VerifyOptions opt;
            const BoundReport r = verify_q_error(of, env, StateAbstraction::identity(X), hat);
            const double g = of.family().gamma();
            CHECK(r.terms.at("eps_R") == 0.0);
            CHECK(r.terms.at("eps_T") == 0.0);
            CHECK(r.rhs == doctest::Approx(g * theta_gap(of.family(), hat, of.family().theta(env), opt) *
                                           of.family().r_max() / (2 * (1 - g))));
            CHECK(r.terms.at("reference_rhs") >= r.lhs - r.tolerance);
            check_report_identity(r);
        }
    }
    SUBCASE("with the true parameter it equals the single-task check") {
        const BoundReport observed = verify_q_error(of, 3, truth, of.family().theta(3));
        const BoundReport single = verify_single_task_bisim(of.observe_member(3).mdp, truth);
        CHECK(observed.lhs == single.lhs);
        CHECK(observed.rhs == single.rhs);
        const StateAbstraction coarse(std::vector<int>(truth.n_observations(), 0));
        CHECK(verify_q_error(of, 3, coarse, of.family().theta(3)).rhs ==
              doctest::Approx(verify_single_task_bisim(of.observe_member(3).mdp, coarse).rhs));
    }
    CHECK_THROWS_AS(verify_q_error(of, 99, truth, of.family().theta(0)), ValidationError);
}

TEST_CASE("transfer") {
    const ObservedFamily of = observed_family(2);
    const StateAbstraction truth = of.ground_truth_abstraction();
    Eigen::VectorXd hat = of.family().theta(1) + Eigen::VectorXd::Constant(1, 0.05);
    SUBCASE("i = j reduces to the Q-error check") {
        const BoundReport t = verify_transfer(of, 1, 1, truth, hat);
        const BoundReport q = verify_q_error(of, 1, truth, hat);
        CHECK(t.lhs == q.lhs);
        CHECK(t.rhs == q.rhs);
        CHECK(t.terms.at("task_gap") == 0.0);
    }
    SUBCASE("identical members") {
        const ObservedFamily flat = observed_family(3, 0.0);
        const BoundReport t = verify_transfer(flat, 0, 5, truth, flat.family().theta(0));
        const BoundReport q = verify_q_error(flat, 0, truth, flat.family().theta(0));
        CHECK(t.terms.at("task_gap") == 0.0);
        CHECK(t.lhs == q.lhs);
        CHECK(t.rhs == q.rhs);
    }
    SUBCASE("exact abstraction across members stays within the reference bound") {
        for (int j = 0; j < of.family().n_members(); ++j) {
            const BoundReport r = verify_transfer(of, 1, j, truth, of.family().theta(1));
            CHECK(r.terms.at("reference_rhs") >= r.lhs - r.tolerance);
            check_report_identity(r);
        }
    }
}

TEST_CASE("value difference bounds") {
    const VerifyOptions opt;
    SUBCASE("identical members") {
        const HiPFamily f = single_row_family(0.8);
        const BoundReport v = verify_value_difference(f, 1, 2, Policy::uniform(3, 2));
        CHECK(v.lhs == 0.0);
        CHECK(v.rhs == 0.0);
        CHECK(v.holds);
        const BoundReport o = verify_opt_value_difference(f, 0, 0);
        CHECK(o.lhs == 0.0);
        CHECK(o.holds);
    }
    SUBCASE("single shifted row: hand-computed RHS") {
        const double shift = 0.8;
        const HiPFamily f = single_row_family(shift);
        // Row (0, 0): softmax(2, 0, 0) against softmax(2 - 0.8, 0, 0.8).
        const double z0 = std::exp(2.0) + 2.0;
        const double z1 = std::exp(1.2) + 1.0 + std::exp(0.8);
        const double l1 = std::abs(std::exp(2.0) / z0 - std::exp(1.2) / z1) + std::abs(1.0 / z0 - 1.0 / z1) +
                          std::abs(1.0 / z0 - std::exp(0.8) / z1);
        const double g = 0.9;
        for (int trial = 0; trial < 2; ++trial) {
            const Policy pi = trial == 0 ? Policy::uniform(3, 2) : Policy::deterministic({0, 1, 0}, 2);
            const BoundReport v = verify_value_difference(f, 0, 1, pi, opt);
            CHECK(v.terms.at("task_gap") == doctest::Approx(l1).epsilon(1e-12));
            CHECK(v.rhs == doctest::Approx(g / (1 - g) * l1).epsilon(1e-12));
            CHECK(v.lhs > 0.0);
            CHECK(v.holds);
            check_report_identity(v);
        }
        const BoundReport o = verify_opt_value_difference(f, 0, 1, opt);
        CHECK(o.rhs == doctest::Approx(g / ((1 - g) * (1 - g)) * l1).epsilon(1e-12));
        CHECK(o.holds);
        CHECK(o.slack > 0.0);
    }
}

TEST_CASE("average approximation error") {
    FamilySpec spec;
    spec.n_states = 5;
    const HiPFamily f = sample_family(spec, 4);
    SUBCASE("exact estimates") {
        const BoundReport r = verify_avg_approx_error(f, f.thetas());
        CHECK(r.lhs <= r.tolerance);
        CHECK(r.rhs == 0.0);
        CHECK(r.holds);
    }
    SUBCASE("perturbed estimates at three scales") {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> n(0.0, 1.0);
        for (double scale : {0.01, 0.1, 1.0}) {
            std::vector<Eigen::VectorXd> hats = f.thetas();
            for (auto& h : hats) h(0) += scale * n(rng);
            CHECK(verify_avg_approx_error(f, hats).holds);
        }
    }
    SUBCASE("single member reduces to the optimal-value check") {
        const HiPFamily one(f.generator(), f.shared_rewards(), f.gamma(), f.r_max(), {"A", "B"},
                            {f.theta(0), f.theta(6)}, Split{{"A", "B"}, {}, {}});
        const HiPFamily only(f.generator(), f.shared_rewards(), f.gamma(), f.r_max(), {"A"}, {f.theta(0)},
                             Split{{"A"}, {}, {}});
        const BoundReport avg = verify_avg_approx_error(only, {f.theta(6)});
        const BoundReport opt = verify_opt_value_difference(one, 1, 0);
        CHECK(avg.lhs == doctest::Approx(opt.lhs).epsilon(1e-12));
        CHECK(avg.rhs == doctest::Approx(opt.rhs).epsilon(1e-12));
    }
    CHECK_THROWS_AS(verify_avg_approx_error(f, {f.theta(0)}), ValidationError);
}

TEST_CASE("replay datasets") {
    SUBCASE("hand-counted n_phi") {
        ReplayDataset d;
        d.samples = {{0, 0, 1, 0.0, 0}, {1, 0, 2, 0.0, 0}, {2, 1, 0, 0.0, 0},
                     {3, 1, 3, 0.0, 0}, {0, 1, 1, 0.0, 0}, {3, 0, 0, 0.0, 0}};
        const StateAbstraction phi({0, 0, 1, 1});
        const Eigen::MatrixXi c = d.counts(phi, 2);
        CHECK(c(0, 0) == 2);
        CHECK(c(0, 1) == 1);
        CHECK(c(1, 0) == 1);
        CHECK(c(1, 1) == 2);
        CHECK(d.n_phi(phi, 2) == 1);
        d.samples.pop_back();
        CHECK(d.n_phi(phi, 2) == 0);
        CHECK_THROWS_AS(empirical_abstract_mdp(d, phi, 2, 0.9, 1.0), ValidationError);
    }
    SUBCASE("stratified draws cover every pair evenly") {
        const ObservedFamily of = observed_family(6);
        const StateAbstraction phi = of.ground_truth_abstraction();
        const ReplayDataset d = draw_stratified(of.observe_member(0), 0, phi, 7, 1);
        CHECK((d.counts(phi, of.family().n_actions()).array() == 7).all());
        CHECK(draw_stratified(of.observe_member(0), 0, phi, 7, 1).samples == d.samples);
    }
}

TEST_CASE("sample complexity") {
    const ObservedFamily of = observed_family(7);
    const StateAbstraction phi = of.ground_truth_abstraction();
    const ObservationMDP obs = of.observe_member(2);
    SUBCASE("large-sample limit approaches the exact abstract model") {
        const int n = 100000;
        const ReplayDataset d = draw_stratified(obs, 2, phi, n, 3);
        const BoundReport r = verify_sample_complexity(of, 2, phi, d, 0.1);
        const BoundReport exact = verify_q_error(of, 2, phi, of.family().theta(2));
        CHECK(std::abs(r.lhs - exact.lhs) <= 0.05);
        const double g = of.family().gamma();
        const double expected = of.family().r_max() / ((1 - g) * (1 - g)) *
                                std::sqrt(std::log(2.0 * phi.n_abstract() * of.family().n_actions() / 0.1) / (2.0 * n));
        CHECK(r.terms.at("sampling_term") == doctest::Approx(expected).epsilon(1e-12));
        CHECK(r.terms.at("n_phi") == n);
        CHECK(r.terms.at("eps_theta") == 0.0);
        CHECK(r.holds);
    }
    SUBCASE("pooled data from another member adds its parameter gap") {
        ReplayDataset d = draw_stratified(obs, 2, phi, 50, 4);
        d.append(draw_stratified(of.observe_member(5), 5, phi, 50, 5));
        const BoundReport r = verify_sample_complexity(of, 2, phi, d, 0.1);
        CHECK(r.terms.at("eps_theta") == doctest::Approx(theta_gap(of.family(), of.family().theta(5),
                                                                   of.family().theta(2), VerifyOptions{})));
        CHECK(r.terms.at("n_envs") == 2);
    }
    SUBCASE("resampled datasets hold at the configured confidence") {
        SampleSweepConfig cfg;
        cfg.datasets = 40;
        cfg.per_pair = 30;
        cfg.family.n_states = 4;
        const auto reports = sweep_sample_complexity(cfg);
        const SweepSummary s = summarize(Theorem::SampleComplexity, reports);
        CHECK(s.count == 40);
        CHECK(s.holds_frequency >= 0.9 - binomial_ci_half_width(0.9, 40));
    }
    CHECK_THROWS_AS(verify_sample_complexity(of, 2, phi, ReplayDataset{}, 0.1), ValidationError);
    CHECK_THROWS_AS(verify_sample_complexity(of, 2, phi, draw_stratified(obs, 2, phi, 5, 1), 1.5), ValidationError);
}

TEST_CASE("sweeps") {
    SweepConfig cfg;
    cfg.instances = 20;
    cfg.seed = 11;
    for (Theorem t : all_theorems()) {
        if (!is_deterministic(t)) continue;
        const auto a = sweep_deterministic(t, cfg);
        const auto b = sweep_deterministic(t, cfg);
        REQUIRE(a.size() == 20);
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(a[k].lhs == b[k].lhs);
            CHECK(a[k].rhs == b[k].rhs);
            check_report_identity(a[k]);
            if (a[k].terms.count("reference_rhs") && t != Theorem::ValueDifference)
                CHECK(a[k].terms.at("reference_rhs") >= a[k].lhs - a[k].tolerance);
        }
        const SweepSummary s = summarize(t, a);
        CHECK(s.count == 20);
        CHECK(s.holds_frequency == doctest::Approx(static_cast<double>(s.holds) / 20));
    }
    SweepConfig empty = cfg;
    empty.instances = 0;
    CHECK_THROWS_AS(sweep_deterministic(Theorem::QError, empty), ValidationError);
    CHECK_THROWS_AS(sweep_deterministic(Theorem::SampleComplexity, cfg), ValidationError);
}
