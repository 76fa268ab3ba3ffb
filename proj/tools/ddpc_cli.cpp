#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "campaign.hpp"
#include "ddpc/error.hpp"
#include "ddpc/io.hpp"
#include "ddpc/loop.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace ddpc;
using namespace ddpc::cli;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kDiverged = 4 };

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 0;
    bool timing = false;
    bool svg = false;
};

CampaignConfig resolve(const GlobalOptions& g) {
    CampaignConfig cfg = g.config.empty() ? CampaignConfig{} : load_campaign(g.config);
    if (g.seed) {
        cfg.excitation.seed = *g.seed;
        cfg.noise_seeds = {*g.seed};
    }
    if (!g.out.empty()) cfg.out_dir = g.out;
    if (g.jobs > 0) cfg.jobs = g.jobs;
    if (g.timing) cfg.record_timing = true;
    return cfg;
}

std::string out_path(const CampaignConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

std::string require_artifact(const CampaignConfig& cfg, const std::string& name, const char* producer) {
    const std::string path = out_path(cfg, name);
    if (!fs::exists(path)) {
        throw IoError(fmt::format("{} not found; run `ddpc {}` with the same --config/--out first", path, producer));
    }
    return path;
}

std::string num(double v) { return fmt::format("{}", v); } // shortest round-trip

PlantSpec stable_counterpart(PlantSpec spec) {
    if (!spec.modes.empty()) spec.modes.front().damping_ratio = std::abs(spec.modes.front().damping_ratio);
    return spec;
}

Trajectory fitting_outputs(const CampaignConfig& cfg, const Trajectory& y_raw) {
    if (!cfg.excitation.filter_outputs) return y_raw;
    BandPassFilter filter(y_raw.channels(), y_raw.sample_period(), cfg.excitation.filter);
    return filter.apply(y_raw);
}

struct Stats {
    double min = 0, median = 0, p95 = 0, max = 0;
};

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Stats stats_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return {};
    return {v.front(), quantile(v, 0.5), quantile(v, 0.95), v.back()};
}

// ---- plant ----------------------------------------------------------------

int cmd_plant(const GlobalOptions& g, double damping, std::uint64_t plant_seed, const std::string& saturation,
              const std::string& output) {
    (void)g;
    PlantSpec spec = benchmark_plant_spec(damping, plant_seed);
    if (saturation == "none") {
        spec.saturation_limit.reset();
    } else if (!saturation.empty()) {
        try {
            spec.saturation_limit = std::stod(saturation);
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("--saturation expects a number or 'none', got '{}'", saturation));
        }
    }
    save_plant_spec(output, spec);
    fmt::print("wrote {}\n", output);
    return kOk;
}

// ---- excite ---------------------------------------------------------------

int cmd_excite(const GlobalOptions& g) {
    const CampaignConfig cfg = resolve(g);
    const Index n = cfg.excitation.n_samples;
    for (const auto& [name, h] : {std::pair{"tpc", cfg.training.tpc}, std::pair{"deepc", cfg.training.deepc}}) {
        if (n < h.n_samples) {
            throw ConfigError(fmt::format("[excitation] n_samples = {} is shorter than the [{}] training length {}", n,
                                          name, h.n_samples));
        }
        if (n < h.window()) {
            throw ConfigError(fmt::format("[excitation] n_samples = {} is shorter than [{}] tau_p + tau_f = {}", n, name,
                                          h.window()));
        }
    }
    const PlantModel plant = build_plant(campaign_plant_spec(cfg));
    const ExcitationData data = collect_excitation(plant, cfg.excitation);
    const std::string path = out_path(cfg, "excitation.csv");
    write_trajectory_csv(path, data.u, data.y_raw);
    fmt::print("wrote {} ({} samples)\n", path, data.u.length());
    return kOk;
}

// ---- fit ------------------------------------------------------------------

int cmd_fit(const GlobalOptions& g) {
    const CampaignConfig cfg = resolve(g);
    const auto [u, y_raw] = read_trajectory_csv(require_artifact(cfg, "excitation.csv", "excite"));
    const TrainedModels models = fit_models(u, fitting_outputs(cfg, y_raw), cfg.training);
    const std::string path = out_path(cfg, "models.json");
    save_models(path, models);
    fmt::print("wrote {} (tpc rank {}, deepc n_col {})\n", path, models.tpc.rank, models.deepc.n_col());
    return kOk;
}

// ---- run ------------------------------------------------------------------

struct EpisodeTask {
    std::size_t scenario = 0;
    ControllerKind kind = ControllerKind::Zero;
    std::uint64_t seed = 0;
};

struct EpisodeResult {
    EpisodeReport report;
    std::string error;
};

template <class F>
void parallel_for(std::size_t n, int jobs, F&& body) {
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) body(i);
    };
    if (workers == 1) {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

std::vector<Scenario> build_scenarios(const CampaignConfig& cfg, const PlantSpec& spec) {
    const PlantSpec stable = stable_counterpart(spec);
    const Eigen::VectorXd dir = dominant_disturbance_direction(stable);
    std::vector<Scenario> out;
    for (const auto& sc : cfg.scenarios) {
        double magnitude = 0.0;
        if (sc.magnitude) {
            magnitude = *sc.magnitude;
        } else if (sc.kind == DisturbanceKind::Impulse) {
            magnitude = calibrate_impulse(build_plant(stable), dir, sc.first_swing, 1);
        } else {
            throw ConfigError(fmt::format("scenario '{}': step and ramp scenarios need an explicit magnitude", sc.name));
        }
        out.push_back(Scenario{sc.name, sc.kind, magnitude, sc.at, dir, sc.noise_std});
    }
    return out;
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

double aggregate_rms(const Eigen::VectorXd& rms) { return rms.size() ? std::sqrt(rms.squaredNorm() / rms.size()) : 0.0; }

int cmd_run(const GlobalOptions& g) {
    const CampaignConfig cfg = resolve(g);
    const TrainedModels models = load_models(require_artifact(cfg, "models.json", "fit"));
    const PlantSpec spec = campaign_plant_spec(cfg);
    const PlantModel plant = build_plant(spec);
    const std::vector<Scenario> scenarios = build_scenarios(cfg, spec);

    std::vector<EpisodeTask> tasks;
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        for (auto kind : cfg.run_controllers) {
            for (auto seed : cfg.noise_seeds) tasks.push_back({s, kind, seed});
        }
    }

    EpisodeOptions opts;
    opts.duration = cfg.duration;
    opts.divergence_threshold = cfg.divergence_threshold;
    opts.filter = cfg.excitation.filter;
    opts.record_timing = cfg.record_timing;

    std::vector<EpisodeResult> results(tasks.size());
    parallel_for(tasks.size(), cfg.jobs, [&](std::size_t i) {
        try {
            Controller ctrl = make_controller(tasks[i].kind, models, cfg.controllers);
            results[i].report = run_episode(plant, ctrl, scenarios[tasks[i].scenario], tasks[i].seed, opts);
        } catch (const std::exception& e) {
            results[i].error = e.what();
        }
    });

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!results[i].error.empty()) {
            throw Error(fmt::format("episode {} / {} / seed {}: {}", scenarios[tasks[i].scenario].name,
                                    to_string(tasks[i].kind), tasks[i].seed, results[i].error));
        }
    }

    nlohmann::ordered_json summary;
    summary["plant"] = {{"dominant_damping", spec.modes.empty() ? 0.0 : spec.modes.front().damping_ratio},
                        {"saturation_limit", spec.saturation_limit ? nlohmann::json(*spec.saturation_limit)
                                                                    : nlohmann::json(nullptr)}};
    summary["duration_s"] = cfg.duration;
    summary["episodes"] = nlohmann::json::array();
    std::string metrics = "scenario,controller,seed,metric,value\n";
    int unexpected = 0;

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& task = tasks[i];
        const auto& rep = results[i].report;
        const Scenario& sc = scenarios[task.scenario];
        const std::string ctrl = to_string(task.kind);
        const std::string file = fmt::format("episodes/{}_{}_s{}.csv", sc.name, ctrl, task.seed);
        write_episode_csv(out_path(cfg, file), rep.log);

        const bool diverged = rep.status == EpisodeStatus::Diverged;
        const bool expected = std::find(cfg.expect_divergence.begin(), cfg.expect_divergence.end(), task.kind) !=
                              cfg.expect_divergence.end();
        if (diverged && !expected) ++unexpected;

        nlohmann::ordered_json e;
        e["scenario"] = sc.name;
        e["controller"] = ctrl;
        e["seed"] = task.seed;
        e["magnitude"] = sc.magnitude;
        e["status"] = to_string(rep.status);
        e["diverged_at_s"] = rep.diverged_at;
        e["divergence_expected"] = expected;
        e["rms"] = vec_json(rep.rms);
        e["rms_aggregate"] = aggregate_rms(rep.rms);
        e["rms_filtered"] = vec_json(rep.rms_filtered);
        e["input_effort"] = rep.input_effort;
        e["max_abs_u"] = rep.max_abs_u;
        e["max_abs_y"] = rep.max_abs_y;
        e["solver_failures"] = rep.solver_failures;
        if (cfg.record_timing) {
            e["median_solve_ms"] = rep.median_solve_ms;
            e["max_solve_ms"] = rep.max_solve_ms;
        }
        e["log"] = file;
        summary["episodes"].push_back(e);

        auto metric = [&](const std::string& name, double v) {
            metrics += fmt::format("{},{},{},{},{}\n", sc.name, ctrl, task.seed, name, num(v));
        };
        for (Index k = 0; k < rep.rms.size(); ++k) metric(fmt::format("rms_y{}", k + 1), rep.rms(k));
        for (Index k = 0; k < rep.rms_filtered.size(); ++k) {
            metric(fmt::format("rms_filtered_y{}", k + 1), rep.rms_filtered(k));
        }
        metric("rms_aggregate", aggregate_rms(rep.rms));
        for (Index k = 0; k < rep.cumulative_abs.rows(); ++k) {
            const double final_sum = rep.cumulative_abs.cols() ? rep.cumulative_abs(k, rep.cumulative_abs.cols() - 1) : 0.0;
            metric(fmt::format("cumulative_abs_y{}", k + 1), final_sum);
        }
        metric("input_effort", rep.input_effort);
        metric("max_abs_u", rep.max_abs_u);
        metric("max_abs_y", rep.max_abs_y);
        metric("solver_failures", rep.solver_failures);
        metric("diverged", diverged ? 1.0 : 0.0);
        if (cfg.record_timing) {
            metric("median_solve_ms", rep.median_solve_ms);
            metric("max_solve_ms", rep.max_solve_ms);
        }
        fmt::print("{:<10} {:<18} seed {:<4} {:<9} rms {:.4g}{}\n", sc.name, ctrl, task.seed, to_string(rep.status),
                   aggregate_rms(rep.rms), diverged && expected ? " (expected)" : "");
    }
    summary["unexpected_divergences"] = unexpected;
    write_text_file(out_path(cfg, "summary.json"), summary.dump(2) + "\n");
    write_text_file(out_path(cfg, "metrics.csv"), metrics);

    if (g.svg) {
        for (std::size_t s = 0; s < scenarios.size(); ++s) {
            std::vector<Panel> panels;
            const Index p = plant.n_outputs();
            for (Index k = 0; k < p; ++k) {
                Panel panel{fmt::format("{}: y{}", scenarios[s].name, k + 1), "t [s]", "pu", {}};
                for (std::size_t i = 0; i < tasks.size(); ++i) {
                    if (tasks[i].scenario != s || tasks[i].seed != cfg.noise_seeds.front()) continue;
                    const auto& log = results[i].report.log;
                    Series series{to_string(tasks[i].kind), {}, {}};
                    for (Index t = 0; t < log.t.size(); ++t) {
                        series.x.push_back(log.t(t));
                        series.y.push_back(log.y(k, t));
                    }
                    panel.series.push_back(std::move(series));
                }
                panels.push_back(std::move(panel));
            }
            write_text_file(out_path(cfg, fmt::format("ringdown_{}.svg", scenarios[s].name)), render_svg(panels));
        }
    }
    fmt::print("wrote {} episodes to {}\n", tasks.size(), cfg.out_dir);
    if (unexpected > 0) {
        fmt::print(stderr, "error: {} episode(s) diverged unexpectedly\n", unexpected);
        return kDiverged;
    }
    return kOk;
}

// ---- linearity ------------------------------------------------------------

int cmd_linearity(const GlobalOptions& g, const std::string& saturation) {
    CampaignConfig cfg = resolve(g);
    if (saturation == "on") cfg.linearity_saturation = true;
    if (saturation == "off") cfg.linearity_saturation = false;
    PlantSpec spec = campaign_plant_spec(cfg);
    if (!cfg.linearity_saturation) spec.saturation_limit.reset();
    if (cfg.linearity_saturation && !spec.saturation_limit) spec.saturation_limit = 0.1;
    const LinearityReport report = linearity_test(build_plant(spec), cfg.linearity);
    const std::string path = out_path(cfg, "linearity.csv");
    write_text_file(path, linearity_csv(report));
    if (g.svg) {
        std::vector<Panel> panels;
        const Index p = report.rmse.empty() || report.rmse.front().empty() ? 0 : report.rmse.front().front().size();
        for (Index k = 0; k < p; ++k) {
            Panel panel{fmt::format("RMSE y{}", k + 1), "scale", "RMSE [pu]", {}, true, true};
            for (std::size_t c = 0; c < report.combos.size(); ++c) {
                Series s{combo_label(report.combos[c]), report.scales, {}};
                for (const auto& r : report.rmse[c]) s.y.push_back(r(k));
                panel.series.push_back(std::move(s));
            }
            panels.push_back(std::move(panel));
        }
        write_text_file(out_path(cfg, "linearity.svg"), render_svg(panels));
    }
    fmt::print("wrote {} (saturation {})\n", path, cfg.linearity_saturation ? "on" : "off");
    return kOk;
}

// ---- bench ----------------------------------------------------------------

struct BenchRow {
    std::string controller;
    Index tau_f = 0;
    std::string phase;
    Stats ms;
    double iters_median = 0.0;
};

bool uses_deepc(ControllerKind k) { return k == ControllerKind::DeePC || k == ControllerKind::ClosedFormDeePC; }

int cmd_bench(const GlobalOptions& g) {
    const CampaignConfig cfg = resolve(g);
    const auto [u, y_raw] = read_trajectory_csv(require_artifact(cfg, "excitation.csv", "excite"));
    const Trajectory y = fitting_outputs(cfg, y_raw);
    const PlantSpec spec = campaign_plant_spec(cfg);
    const PlantModel plant = build_plant(spec);
    const double Ts = plant.sample_period;
    const Eigen::VectorXd dir = dominant_disturbance_direction(stable_counterpart(spec));

    std::vector<BenchRow> rows;
    for (auto kind : cfg.bench.controllers) {
        for (Index tf : cfg.bench.tau_f) {
            TrainingConfig tc = cfg.training;
            tc.tpc.tau_f = tf;
            tc.deepc.tau_f = tf;
            TrainedModels models;
            if (uses_deepc(kind)) {
                tc.deepc.validate();
                models.deepc = build_deepc_data(u, y, tc.deepc);
            } else if (kind != ControllerKind::Zero) {
                tc.tpc.validate();
                models.tpc = fit_transient_predictor(u, y, tc.tpc);
                models.arx = fit_single_arx(u, y, tc.tpc);
            }

            std::vector<double> setup_ms;
            for (int r = 0; r < cfg.bench.setup_repetitions; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                Controller c = make_controller(kind, models, cfg.controllers);
                const auto t1 = std::chrono::steady_clock::now();
                setup_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }

            Controller ctrl = make_controller(kind, models, cfg.controllers);
            const Index warmup = std::max<Index>(ctrl.tau_p(), 1);
            EpisodeOptions opts;
            opts.duration = static_cast<double>(warmup + cfg.bench.repetitions) * Ts;
            opts.divergence_threshold = cfg.divergence_threshold;
            opts.filter = cfg.excitation.filter;
            opts.record_timing = true;
            const Scenario load{"bench", DisturbanceKind::Impulse, 0.0, 0.0, dir, cfg.excitation.noise_std};
            const EpisodeReport rep = run_episode(plant, ctrl, load, cfg.noise_seeds.front(), opts);

            std::vector<double> solve_ms, iters;
            for (Index t = 0; t < rep.log.solve_ms.size(); ++t) {
                if (rep.log.status[t] == "bootstrap") continue;
                solve_ms.push_back(rep.log.solve_ms(t));
                iters.push_back(rep.log.iterations(t));
            }
            const std::string name = to_string(kind);
            rows.push_back({name, tf, "setup", stats_of(setup_ms), 0.0});
            rows.push_back({name, tf, "solve", stats_of(solve_ms), stats_of(iters).median});
            fmt::print("{:<18} tau_f {:<3} setup {:8.3f} ms  solve median {:8.3f} ms  p95 {:8.3f} ms  iters {:g}\n",
                       name, tf, rows[rows.size() - 2].ms.median, rows.back().ms.median, rows.back().ms.p95,
                       rows.back().iters_median);
        }
    }

    std::string csv = "controller,tau_f,phase,min_ms,median_ms,p95_ms,max_ms,iters_median\n";
    for (const auto& r : rows) {
        csv += fmt::format("{},{},{},{},{},{},{},{}\n", r.controller, r.tau_f, r.phase, num(r.ms.min), num(r.ms.median),
                           num(r.ms.p95), num(r.ms.max), num(r.iters_median));
    }
    const std::string path = out_path(cfg, "bench.csv");
    write_text_file(path, csv);

    if (g.svg) {
        std::vector<Panel> panels;
        for (const char* phase : {"setup", "solve"}) {
            Panel panel{fmt::format("{} time (median)", phase), "tau_f", "ms", {}, true, true};
            for (auto kind : cfg.bench.controllers) {
                Series s{to_string(kind), {}, {}};
                for (const auto& r : rows) {
                    if (r.controller == to_string(kind) && r.phase == phase) {
                        s.x.push_back(static_cast<double>(r.tau_f));
                        s.y.push_back(r.ms.median);
                    }
                }
                panel.series.push_back(std::move(s));
            }
            panels.push_back(std::move(panel));
        }
        write_text_file(out_path(cfg, "bench.svg"), render_svg(panels));
    }
    fmt::print("wrote {}\n", path);
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven damping control: excitation, fitting, closed-loop campaigns and solver timing"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "ddpc 0.1.0");

    GlobalOptions g;
    app.add_option("-c,--config", g.config, "Campaign INI file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Overrides the excitation seed and the run noise seeds");
    app.add_option("-o,--out", g.out, "Output directory (default: [output] dir, else ./out)")->envname("DDPC_OUT_DIR");
    app.add_option("-j,--jobs", g.jobs, "Parallel episodes for `run`")->check(CLI::PositiveNumber);
    app.add_flag("--timing", g.timing, "Record solve times in episode logs and the run summary");
    app.add_flag("--svg", g.svg, "Also write SVG charts");

    auto* plant_cmd = app.add_subcommand("plant", "Write a benchmark plant specification file");
    double damping = 0.002;
    std::uint64_t plant_seed = 7;
    std::string plant_sat, plant_out;
    plant_cmd->add_option("--damping", damping, "Damping ratio of the dominant mode")->capture_default_str();
    plant_cmd->add_option("--plant-seed", plant_seed, "Residue seed")->capture_default_str();
    plant_cmd->add_option("--saturation", plant_sat, "Input saturation limit in pu, or 'none'");
    plant_cmd->add_option("file", plant_out, "Output INI path")->required();

    auto* excite_cmd = app.add_subcommand("excite", "Collect the excitation record (excitation.csv)");
    auto* fit_cmd = app.add_subcommand("fit", "Fit TPC, Single-ARX and DeePC data (models.json)");
    auto* run_cmd = app.add_subcommand("run", "Closed-loop episodes (episodes/, summary.json, metrics.csv)");
    auto* lin_cmd = app.add_subcommand("linearity", "Superposition test of the plant (linearity.csv)");
    std::string lin_sat;
    lin_cmd->add_option("--saturation", lin_sat, "Override [linearity] saturation")->check(CLI::IsMember({"on", "off"}));
    auto* bench_cmd = app.add_subcommand("bench", "Setup and solve times over the tau_f grid (bench.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*plant_cmd) return cmd_plant(g, damping, plant_seed, plant_sat, plant_out);
        if (*excite_cmd) return cmd_excite(g);
        if (*fit_cmd) return cmd_fit(g);
        if (*run_cmd) return cmd_run(g);
        if (*lin_cmd) return cmd_linearity(g, lin_sat);
        if (*bench_cmd) return cmd_bench(g);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kConfig;
    } catch (const IoError& e) {
        fmt::print(stderr, "io error: {}\n", e.what());
        return kIo;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kFailure;
    }
    return kFailure;
}
