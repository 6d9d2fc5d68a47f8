// mcfd: runs one experiment configuration.
//
//   mcfd <config> <outdir> [--set key=value ...]
//   mcfd --describe <preset>
//
// Exit codes: 0 success, 2 configuration error, 1 run failure. Errors are
// written to stderr as one JSON object.

#include "mcfd/config.hpp"
#include "mcfd/experiments.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

int fail(const std::string& kind, const std::string& message, int code) {
    nlohmann::json record = {{"status", "error"}, {"kind", kind}, {"message", message}};
    std::cerr << record.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo finite-difference solver for fully nonlinear parabolic PDEs"};
    std::string config_path, outdir, describe;
    std::vector<std::string> overrides;
    bool quiet = false;
    app.add_option("config", config_path, "configuration file");
    app.add_option("outdir", outdir, "output directory (created)");
    app.add_option("--set", overrides, "override one key, key=value (repeatable)")
        ->allow_extra_args(false)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app.add_option("--describe", describe, "print the keys and defaults of a preset");
    app.add_flag("-q,--quiet", quiet, "no summary on stdout");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (!describe.empty()) {
            std::cout << mcfd::describe_preset(describe);
            return 0;
        }
        if (config_path.empty() || outdir.empty())
            throw mcfd::ConfigError("usage: mcfd <config> <outdir> [--set key=value ...]");
        mcfd::Config user = mcfd::Config::load(config_path);
        for (const auto& o : overrides) {
            const auto [key, value] = mcfd::split_assignment(o);
            user.set(key, value);
        }
        const mcfd::Config resolved = mcfd::resolve_config(user);
        const mcfd::RunOutcome out = mcfd::run_experiment(resolved, outdir);
        if (!quiet) {
            nlohmann::json record = {{"status", "ok"},
                                     {"preset", resolved.text("preset")},
                                     {"seconds", out.seconds},
                                     {"files", out.files},
                                     {"warnings", out.warnings}};
            std::cout << record.dump(2) << '\n';
        }
        return 0;
    } catch (const mcfd::ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const std::exception& e) {
        return fail("run", e.what(), 1);
    }
}
