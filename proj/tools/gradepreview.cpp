// Command-line front end: simulate, replay, fit-bias, report, --suite acceptance.
// Log verbosity comes from GRADEPREVIEW_LOG (trace, debug, info, warn, error, off).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gradepreview/acceptance.hpp"
#include "gradepreview/config.hpp"
#include "gradepreview/errors.hpp"
#include "gradepreview/pipeline.hpp"
#include "gradepreview/replay.hpp"
#include "gradepreview/report.hpp"

namespace fs = std::filesystem;
using namespace gradepreview;

namespace {

void set_log_level() {
    const char* env = std::getenv("GRADEPREVIEW_LOG");
    const std::string name = env ? env : "info";
    const auto level = spdlog::level::from_str(name);
    if (level == spdlog::level::off && name != "off") {
        spdlog::warn("GRADEPREVIEW_LOG='{}' is not a log level, using info", name);
        spdlog::set_level(spdlog::level::info);
        return;
    }
    spdlog::set_level(level);
}

void ensure_writable(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(dir.string(), 0, fmt::format("cannot create output directory: {}", ec.message()));
    const fs::path probe = dir / ".gradepreview_probe";
    {
        std::ofstream out(probe);
        if (!out) throw IoError(dir.string(), 0, "output directory is not writable");
    }
    fs::remove(probe, ec);
}

// Collects estimator and run keys given as flags so they override the config file.
struct OverrideFlags {
    std::map<std::string, std::string> values;

    void attach(CLI::App& app, std::initializer_list<const char*> skip) {
        for (const std::string& key : config_keys()) {
            if (std::find_if(skip.begin(), skip.end(), [&](const char* s) { return key == s; }) != skip.end()) continue;
            std::string flag = key;
            std::replace(flag.begin(), flag.end(), '_', '-');
            const std::string names = key == "output_dir" ? "-o,--" + flag : "--" + flag;
            app.add_option(names, values[key], fmt::format("override '{}' from the config file", key));
        }
    }

    ConfigOverrides collect(const CLI::App& app) const {
        ConfigOverrides out;
        for (const auto& [key, value] : values) {
            std::string flag = key;
            std::replace(flag.begin(), flag.end(), '_', '-');
            if (app.count("--" + flag) > 0) out.emplace_back(key, value);
        }
        return out;
    }
};

struct CommonFlags {
    std::optional<std::string> config_file;
    OverrideFlags overrides;

    void attach(CLI::App& app, std::initializer_list<const char*> skip) {
        app.add_option("-c,--config", config_file, "YAML config file");
        overrides.attach(app, skip);
    }

    RunConfig load(const CLI::App& app, ConfigOverrides extra) const {
        ConfigOverrides all = overrides.collect(app);
        all.insert(all.end(), extra.begin(), extra.end());
        std::optional<fs::path> file;
        if (config_file) file = *config_file;
        return parse_config(file, all);
    }
};

void print_report(const ErrorReport& report, const fs::path& dir) {
    std::cout << format_summary(report);
    std::cout << "artifacts written to " << dir.string() << "\n";
}

int run_simulation(const RunConfig& cfg, const std::optional<std::string>& export_dir, bool binary_frames) {
    const sim::ScenarioSpec spec = resolve_scenario(*cfg.scenario, cfg.seed);
    ensure_writable(cfg.output_dir);
    const sim::Scenario scenario = sim::build_scenario(spec, cfg.estimator.wheelbase);

    std::optional<ReplayWriter> writer;
    EndToEndOptions options;
    options.filter_mode = cfg.filter_mode;
    if (export_dir) {
        ensure_writable(*export_dir);
        writer.emplace(*export_dir, scenario.path, scenario.truth_grade_deg,
                       binary_frames ? FrameEncoding::Binary : FrameEncoding::Text);
        options.observer = [&](const PointCloudFrame& f, const RigidTransform& t, std::size_t closest) {
            writer->write(f, t, closest);
        };
    }
    const EndToEndResult result = run_end_to_end(scenario, cfg.estimator, options);
    if (writer) writer->close();
    const ErrorReport report = write_run_artifacts(cfg.output_dir, spec.name, result.truth_grade_deg, result.track,
                                                   result.timings, cfg.range_bin_width);
    print_report(report, cfg.output_dir);
    return EXIT_SUCCESS;
}

int run_replay_dir(const RunConfig& cfg) {
    ensure_writable(cfg.output_dir);
    ReplayReader reader = ReplayReader::open(*cfg.data_dir, cfg.estimator.waypoint_spacing);
    const EndToEndResult result = run_replay(reader, cfg.estimator, cfg.filter_mode);
    const ErrorReport report = write_run_artifacts(cfg.output_dir, cfg.data_dir->filename().string(),
                                                   result.truth_grade_deg, result.track, result.timings,
                                                   cfg.range_bin_width);
    print_report(report, cfg.output_dir);
    return EXIT_SUCCESS;
}

int fit_bias(RunConfig cfg, const std::optional<std::string>& fragment) {
    cfg.estimator.clear_bias();
    EndToEndResult result;
    if (cfg.mode == RunMode::Replay) {
        ReplayReader reader = ReplayReader::open(*cfg.data_dir, cfg.estimator.waypoint_spacing);
        if (!reader.truth()) throw IoError((*cfg.data_dir / "truth.csv").string(), 0, "fit-bias needs truth grades");
        result = run_replay(reader, cfg.estimator, cfg.filter_mode);
    } else {
        const sim::ScenarioSpec spec = resolve_scenario(*cfg.scenario, cfg.seed);
        result = run_end_to_end(sim::build_scenario(spec, cfg.estimator.wheelbase), cfg.estimator);
    }
    const BiasCalibration cal = calibrate_bias(result.track.raw, result.truth_grade_deg);
    const BiasModel& m = cal.model;
    fmt::print("samples: {} front (lag > 0), {} rear (lag < 0)\n", m.front_samples, m.rear_samples);
    fmt::print("bias_front_slope: {}\nbias_front_offset: {}\nbias_rear_slope: {}\nbias_rear_offset: {}\n",
               m.front_slope, m.front_offset, m.rear_slope, m.rear_offset);
    fmt::print("residual raw error variance: {} deg^2 (starting point for measurement_variance)\n",
               cal.residual_variance);
    if (fragment) {
        std::ofstream out(*fragment);
        out << fmt::format("bias_front_slope: {}\nbias_front_offset: {}\nbias_rear_slope: {}\nbias_rear_offset: {}\n",
                           m.front_slope, m.front_offset, m.rear_slope, m.rear_offset);
        out.close();
        if (!out) throw IoError(*fragment, 0, "could not write config fragment");
        fmt::print("config fragment written to {}\n", *fragment);
    }
    return EXIT_SUCCESS;
}

int regenerate_report(const fs::path& input, const std::optional<std::string>& output, double bin_width) {
    const fs::path csv = fs::is_directory(input) ? input / "waypoints.csv" : input;
    const std::vector<WaypointRow> rows = read_waypoint_csv(csv);
    const ErrorReport report = report_from_rows(csv.parent_path().filename().string(), rows, bin_width);
    if (output) {
        ensure_writable(*output);
        write_range_csv(fs::path(*output) / "ranges.csv", report.ranges);
        write_summary(fs::path(*output) / "summary.txt", report);
        write_plot_script(fs::path(*output) / "plot.py");
        print_report(report, *output);
    } else {
        std::cout << format_summary(report);
    }
    return EXIT_SUCCESS;
}

int run_suite(const std::string& suite) {
    if (suite != "acceptance") throw ConfigError("suite", fmt::format("unknown suite '{}', expected acceptance", suite));
    AcceptanceOptions options;
    options.on_result = [](const CriterionResult& r) { std::cout << format_result(r) << std::endl; };
    const auto results = run_acceptance(options);
    std::size_t passed = 0;
    for (const auto& r : results) passed += r.passed ? 1 : 0;
    std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
    return passed == results.size() ? EXIT_SUCCESS : EXIT_FAILURE;
}

} // namespace

int main(int argc, char** argv) {
    set_log_level();
    CLI::App app{"Road grade preview from lidar point clouds"};
    app.require_subcommand(0, 1);

    std::optional<std::string> suite;
    app.add_option("--suite", suite, "run a named test suite (acceptance)");

    // simulate
    CLI::App* sim_cmd = app.add_subcommand("simulate", "run a simulated scenario end to end");
    CommonFlags sim_flags;
    sim_flags.attach(*sim_cmd, {"mode", "data_dir"});
    std::optional<std::string> export_dir;
    bool binary_frames = false;
    sim_cmd->add_option("--export-replay", export_dir, "also write the run as a replay directory");
    sim_cmd->add_flag("--binary-frames", binary_frames, "write replay frames in the packed binary format");

    // replay
    CLI::App* replay_cmd = app.add_subcommand("replay", "run over a recorded or exported replay directory");
    CommonFlags replay_flags;
    replay_flags.attach(*replay_cmd, {"mode", "scenario", "seed", "data_dir"});
    std::optional<std::string> replay_dir;
    replay_cmd->add_option("-d,--data,--data-dir", replay_dir, "replay directory");

    // fit-bias
    CLI::App* fit_cmd = app.add_subcommand("fit-bias", "fit the frame-lag bias model on an uncorrected run");
    CommonFlags fit_flags;
    fit_flags.attach(*fit_cmd, {"mode", "data_dir", "output_dir"});
    std::optional<std::string> fit_dir, fragment;
    fit_cmd->add_option("-d,--data,--data-dir", fit_dir, "replay directory with truth.csv instead of a scenario");
    fit_cmd->add_option("--write-config", fragment, "write the fitted coefficients as a YAML fragment");

    // report
    CLI::App* report_cmd = app.add_subcommand("report", "rebuild the summary from a waypoints CSV");
    std::string report_input;
    std::optional<std::string> report_output;
    double bin_width = 5.0;
    report_cmd->add_option("-i,--input", report_input, "waypoints.csv or a run directory")->required();
    report_cmd->add_option("-o,--output", report_output, "directory for ranges.csv, summary.txt and plot.py");
    report_cmd->add_option("--range-bin-width", bin_width, "emission-range bin width, m");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (suite) return run_suite(*suite);
        if (*sim_cmd) {
            RunConfig cfg = sim_flags.load(*sim_cmd, {{"mode", "simulate"}});
            return run_simulation(cfg, export_dir, binary_frames);
        }
        if (*replay_cmd) {
            ConfigOverrides extra = {{"mode", "replay"}};
            if (replay_dir) extra.emplace_back("data_dir", *replay_dir);
            return run_replay_dir(replay_flags.load(*replay_cmd, extra));
        }
        if (*fit_cmd) {
            ConfigOverrides extra;
            if (fit_dir) {
                extra = {{"mode", "replay"}, {"data_dir", *fit_dir}};
            } else {
                extra = {{"mode", "simulate"}};
            }
            return fit_bias(fit_flags.load(*fit_cmd, extra), fragment);
        }
        if (*report_cmd) return regenerate_report(report_input, report_output, bin_width);
        std::cout << app.help();
        return EXIT_FAILURE;
    } catch (const std::exception& e) {
        std::cerr << "gradepreview: error: " << e.what() << "\n";
        return EXIT_FAILURE;
    }
}
