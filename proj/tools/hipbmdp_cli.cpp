#include "hipbmdp/error.hpp"
#include "hipbmdp/harness.hpp"

#include <CLI11.hpp>

#include <functional>
#include <future>
#include <iostream>

namespace {

using namespace hipbmdp;

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

ExperimentConfig resolve(const GlobalOptions& g) {
    ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
    if (g.seed) c.seeds = {*g.seed};
    if (!g.out.empty()) c.out_dir = g.out;
    c.validate();
    return c;
}

/// Runs `stage` for every seed concurrently; true if any seed reported a bound violation.
bool for_each_seed(const ExperimentConfig& c, const std::function<bool(std::uint64_t)>& stage) {
    std::vector<std::future<bool>> jobs;
    for (std::uint64_t s : c.seeds) jobs.push_back(std::async(std::launch::async, stage, s));
    bool violation = false;
    // Collect every job before rethrowing so no thread outlives the process.
    std::exception_ptr first_error;
    for (auto& j : jobs) {
        try {
            violation = j.get() || violation;
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return violation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hidden-parameter block MDP toolkit: metrics, training, adaptation and bound checks"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "Experiment configuration (JSON)");
    app.add_option("--seed", g.seed, "Run a single seed instead of the configured list");
    app.add_option("--out", g.out, "Output directory (overrides the configured out_dir)");

    auto* generate = app.add_subcommand("generate", "Sample the member family");
    auto* bisim = app.add_subcommand("bisim", "Bisimulation metric of one member's observation MDP");
    std::string env;
    bisim->add_option("--env", env, "Member label")->required();
    auto* train_cmd = app.add_subcommand("train", "Train task embeddings and the dynamics model");
    auto* adapt = app.add_subcommand("adapt", "Theta-only adaptation to held-out members");
    std::optional<std::string> target;
    adapt->add_option("--target", target, "Single member label (default: every held-out member)");
    auto* bounds = app.add_subcommand("bounds", "Randomized bound sweeps");
    auto* report = app.add_subcommand("report", "Aggregate every seed directory of the output directory");
    auto* pipeline = app.add_subcommand("pipeline", "generate, bisim, train, adapt and bounds, then report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        const ExperimentConfig c = resolve(g);
        const std::filesystem::path out = c.out_dir;
        bool violation = false;
        if (generate->parsed()) {
            for_each_seed(c, [&](std::uint64_t s) { return cmd_generate(c, s, out), false; });
        } else if (bisim->parsed()) {
            for_each_seed(c, [&](std::uint64_t s) { return cmd_bisim(c, s, out, env), false; });
        } else if (train_cmd->parsed()) {
            for_each_seed(c, [&](std::uint64_t s) { return cmd_train(c, s, out), false; });
        } else if (adapt->parsed()) {
            for_each_seed(c, [&](std::uint64_t s) { return cmd_adapt(c, s, out, target), false; });
        } else if (bounds->parsed()) {
            violation = for_each_seed(c, [&](std::uint64_t s) {
                const BoundsOutcome o = cmd_bounds(c, s, out);
                for (const auto& sum : o.summaries)
                    std::cout << "seed " << s << " " << to_string(sum.theorem) << ": " << sum.holds << "/"
                              << sum.count << " hold, min slack " << sum.min_slack << "\n";
                return o.deterministic_violation;
            });
        } else if (report->parsed()) {
            cmd_report(out);
        } else if (pipeline->parsed()) {
            violation = for_each_seed(c, [&](std::uint64_t s) {
                cmd_generate(c, s, out);
                const HiPFamily f = family_from_json(read_json(seed_directory(out, s) / "family.json"));
                cmd_bisim(c, s, out, f.split().train.front());
                cmd_train(c, s, out);
                cmd_adapt(c, s, out);
                return cmd_bounds(c, s, out).deterministic_violation;
            });
            cmd_report(out);
        }
        if (violation) {
            std::cerr << "error: a deterministic bound was violated\n";
            return kExitBoundViolation;
        }
        return kExitOk;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
