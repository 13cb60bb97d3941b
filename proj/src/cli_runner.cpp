#include "mflqg/cli_runner.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "mflqg/io.hpp"
#include "mflqg/scenario.hpp"
#include "mflqg/verify.hpp"

namespace mflqg {

namespace {

MFLQProblem load_problem(const RunConfig& cfg) {
    MFLQProblem p = (cfg.command == Command::AlExample && cfg.scenario_path.empty())
                        ? al_example_problem(1000)
                        : load_scenario_file(cfg.scenario_path);
    if (cfg.dt_override) {
        double dt = *cfg.dt_override;
        double ratio = p.grid.horizon / dt;
        long long s = std::llround(ratio);
        if (dt <= 0.0 || s < 2 ||
            std::fabs(ratio - static_cast<double>(s)) > 1e-12 * std::max(1.0, ratio))
            throw UsageError("--dt does not divide the horizon");
        p = p.with_grid(TimeGrid::make(p.grid.horizon, static_cast<int>(s)));
    }
    return p;
}

std::string al_comparison_csv(const SynthesisResult& synth) {
    const TimeGrid& g = synth.bundle.grid;
    std::string out =
        "t,Gamma_num,Gamma_ref,Sigma_num,Sigma_ref,Ex_num,Ex_ref,Ep_num,Ep_ref,offset_num,"
        "offset_ref\n";
    for (int i = 0; i < g.knots(); ++i) {
        size_t si = static_cast<size_t>(i);
        AlReference ref = al_reference(g.t(i));
        out += format_g17(g.t(i));
        out += "," + format_g17(synth.bundle.Gamma[si](0, 0)) + "," + format_g17(ref.Gamma);
        out += "," + format_g17(synth.bundle.Sigma[si](0, 0)) + "," + format_g17(ref.Sigma);
        out += "," + format_g17(synth.bundle.Ex[si](0)) + "," + format_g17(ref.Ex);
        out += "," + format_g17(synth.bundle.Ep[si](0)) + "," + format_g17(ref.Ep);
        out += "," + format_g17(synth.law.offset[si](0)) + "," + format_g17(ref.offset);
        out += "\n";
    }
    return out;
}

} // namespace

RunConfig parse_args(const std::vector<std::string>& argv) {
    CLI::App app{"mean-field LQG synthesis, simulation and verification", "mflqg"};
    RunConfig cfg;
    double dt = 0.0;
    app.require_subcommand(1);
    auto add_common = [&](CLI::App* sub, bool needs_scenario) {
        auto* opt = sub->add_option("--scenario", cfg.scenario_path, "scenario file");
        if (needs_scenario) opt->required();
        sub->add_option("--dt", dt, "time step override (must divide the horizon)");
        sub->add_option("--paths", cfg.paths, "Monte Carlo path count");
        sub->add_option("--seed", cfg.seed, "noise seed");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--format", cfg.format, "csv or json")
            ->check(CLI::IsMember({"csv", "json"}));
        sub->add_flag("--gzip", cfg.gzip, "gzip the trajectory file");
    };
    add_common(app.add_subcommand("solve", "synthesize the optimal law"), true);
    add_common(app.add_subcommand("simulate", "solve, then simulate the closed loop"), true);
    add_common(app.add_subcommand("verify", "run the acceptance suite"), false);
    add_common(app.add_subcommand("al-example", "bundled asset-liability reproduction"), false);

    std::vector<std::string> args(argv.rbegin(), argv.rend());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        throw HelpRequested(app.help());
    } catch (const CLI::CallForAllHelp&) {
        throw HelpRequested(app.help("", CLI::AppFormatMode::All));
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }
    if (app.got_subcommand("solve")) cfg.command = Command::Solve;
    else if (app.got_subcommand("simulate")) cfg.command = Command::Simulate;
    else if (app.got_subcommand("verify")) cfg.command = Command::Verify;
    else cfg.command = Command::AlExample;
    if (dt > 0.0) cfg.dt_override = dt;
    if (cfg.paths < 1) throw UsageError("--paths must be >= 1");
    return cfg;
}

int execute(const RunConfig& cfg) {
    try {
        std::filesystem::path out(cfg.out_dir);
        std::error_code ec;
        std::filesystem::create_directories(out, ec);
        std::vector<ManifestEntry> manifest;
        const bool json = cfg.format == "json";

        auto solve_stage = [&](const MFLQProblem& p) {
            SynthesisResult synth = synthesize(p);
            AnalyticCost cost = analytic_cost(p, synth.reduced, synth.bundle);
            write_artifact(cfg.out_dir, json ? "riccati.json" : "riccati.csv",
                           json ? riccati_json(synth.bundle) : riccati_csv(synth.bundle),
                           manifest);
            write_artifact(cfg.out_dir, json ? "cost.json" : "cost.csv",
                           json ? cost_json(cost) : cost_csv(cost), manifest);
            write_artifact(cfg.out_dir, "errata.md", errata_markdown(), manifest);
            return synth;
        };

        auto simulate_stage = [&](const MFLQProblem& p, const SynthesisResult& synth) {
            SimOptions opts;
            opts.paths = cfg.paths;
            opts.seed = cfg.seed;
            const int quarter = p.grid.step_count / 4;
            opts.mark_knots = {quarter, 2 * quarter, p.grid.step_count};
            PathEnsemble stats =
                simulate_closed_loop(p, synth.law, synth.bundle, &synth.reduced, opts);
            CostReport mc = mc_cost(p, synth.reduced, stats);

            if (json) {
                SimOptions bo = opts;
                bo.store_full = true;
                PathEnsemble full =
                    simulate_closed_loop(p, synth.law, synth.bundle, nullptr, bo);
                write_artifact(cfg.out_dir, "paths.json", paths_json(full), manifest,
                               cfg.gzip);
            } else {
                // stream trajectories in path batches to bound memory
                std::string csv;
                const long long batch = 2000;
                for (long long start = 0; start < cfg.paths; start += batch) {
                    SimOptions bo = opts;
                    bo.path_offset = start;
                    bo.paths = std::min(batch, cfg.paths - start);
                    bo.store_full = true;
                    PathEnsemble slice =
                        simulate_closed_loop(p, synth.law, synth.bundle, nullptr, bo);
                    std::string text = paths_csv(slice);
                    if (start == 0) csv = text;
                    else csv += text.substr(text.find('\n') + 1);
                }
                write_artifact(cfg.out_dir, "paths.csv", csv, manifest, cfg.gzip);
            }

            std::string summary = "quantity,value\n";
            summary += "paths," + std::to_string(cfg.paths) + "\n";
            summary += "seed," + std::to_string(cfg.seed) + "\n";
            summary += "J_mc," + format_g17(mc.J_mc) + "\n";
            summary += "J_mc_stderr," + format_g17(mc.stderr_) + "\n";
            InnovationStats ist = innovation_diagnostics(stats);
            summary += "innovation_mean," + format_g17(ist.mean(0)) + "\n";
            summary += "innovation_variance," + format_g17(ist.variance(0)) + "\n";
            summary += "innovation_qv," + format_g17(ist.qv_mean) + "\n";
            write_artifact(cfg.out_dir, "summary.csv", summary, manifest);
        };

        int rc = 0;
        switch (cfg.command) {
            case Command::Solve: {
                MFLQProblem p = load_problem(cfg);
                solve_stage(p);
                break;
            }
            case Command::Simulate: {
                MFLQProblem p = load_problem(cfg);
                SynthesisResult synth = solve_stage(p);
                simulate_stage(p, synth);
                break;
            }
            case Command::Verify: {
                AcceptanceConfig acfg;
                acfg.paths = cfg.paths;
                acfg.seed = cfg.seed;
                VerifyReport vrep = run_acceptance(acfg);
                write_artifact(cfg.out_dir, "verify_report.json", verify_report_json(vrep),
                               manifest);
                for (const auto& c : vrep.checks)
                    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name
                              << "  statistic=" << format_g17(c.statistic)
                              << "  threshold=" << format_g17(c.threshold) << "\n";
                if (!vrep.all_pass()) rc = 3;
                break;
            }
            case Command::AlExample: {
                MFLQProblem p = load_problem(cfg);
                SynthesisResult synth = solve_stage(p);
                simulate_stage(p, synth);
                write_artifact(cfg.out_dir, "al_comparison.csv", al_comparison_csv(synth),
                               manifest);
                double gmax = 0, smax = 0, exmax = 0, epmax = 0, offmax = 0;
                for (int i = 0; i < p.grid.knots(); ++i) {
                    size_t si = static_cast<size_t>(i);
                    AlReference ref = al_reference(p.grid.t(i));
                    gmax = std::max(gmax, std::fabs(synth.bundle.Gamma[si](0, 0) - ref.Gamma));
                    smax = std::max(smax, std::fabs(synth.bundle.Sigma[si](0, 0) - ref.Sigma));
                    exmax = std::max(exmax, std::fabs(synth.bundle.Ex[si](0) - ref.Ex));
                    epmax = std::max(epmax, std::fabs(synth.bundle.Ep[si](0) - ref.Ep));
                    offmax = std::max(offmax, std::fabs(synth.law.offset[si](0) - ref.offset));
                }
                std::cout << "asset-liability reproduction (max error vs closed forms):\n"
                          << "  Gamma  " << format_g17(gmax) << "\n"
                          << "  Sigma  " << format_g17(smax) << "\n"
                          << "  Ex     " << format_g17(exmax) << "\n"
                          << "  Ep     " << format_g17(epmax) << "\n"
                          << "  offset " << format_g17(offmax) << "\n";
                if (!(gmax <= 1e-8 && smax <= 1e-8 && exmax <= 1e-6 && epmax <= 1e-6 &&
                      offmax <= 1e-6))
                    rc = 3;
                break;
            }
        }
        write_artifact(cfg.out_dir, "manifest.txt", manifest_text(manifest), manifest);
        std::cout << manifest_text(manifest);
        return rc;
    } catch (const GateRejection& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const BlowUpError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const SimulationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 64;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    RunConfig cfg;
    try {
        cfg = parse_args(args);
    } catch (const HelpRequested& e) {
        std::cout << e.what();
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 64;
    }
    return execute(cfg);
}

} // namespace mflqg
