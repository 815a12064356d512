// mcad: joint ML/MAP activity and interference-power detection simulator.
// Subcommands: run (execute an experiment), validate (schema check only),
// plot (emit a gnuplot script for a results CSV).

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mcad/config.hpp"
#include "mcad/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAborts = 3;

std::string default_out_dir() {
    if (const char* env = std::getenv("MCAD_OUT_DIR")) return env;
    return "mcad_out";
}

int cmd_validate(const std::string& config_path, const std::string& profile,
                 const std::vector<std::string>& overrides) {
    try {
        const mcad::json file_cfg =
            config_path.empty() ? mcad::json::object() : mcad::load_config_file(config_path);
        const mcad::json cfg = mcad::assemble_config(file_cfg, profile, overrides);
        (void)mcad::resolve_config(cfg);
        std::cout << "config OK; resolved values:\n" << cfg.dump(2) << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

int cmd_run(const std::string& config_path, const std::string& profile,
            const std::vector<std::string>& overrides, std::string out_dir, long seed_flag,
            int workers_flag) {
    mcad::json cfg;
    mcad::ExperimentSpec spec;
    try {
        const mcad::json file_cfg =
            config_path.empty() ? mcad::json::object() : mcad::load_config_file(config_path);
        cfg = mcad::assemble_config(file_cfg, profile, overrides);
        if (seed_flag >= 0) cfg["seed"] = seed_flag;
        if (workers_flag >= 0) cfg["workers"] = workers_flag;
        spec = mcad::resolve_config(cfg);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        fs::create_directories(out_dir);
        const std::vector<mcad::ErrorRow> rows = mcad::run_experiment(spec);
        const fs::path csv_path = fs::path(out_dir) / "results.csv";
        mcad::write_csv(rows, csv_path.string());
        const mcad::json manifest = mcad::make_manifest(cfg, overrides, profile);
        std::ofstream mos(fs::path(out_dir) / "manifest.json");
        mos << manifest.dump(2) << "\n";
        std::cout << "wrote " << csv_path.string() << " (" << rows.size() << " rows)\n";
        return kExitOk;
    } catch (const mcad::numerical_error& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return kExitAborts;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return kExitAborts;
    }
}

int cmd_plot(const std::string& csv_path, std::string script_path) {
    std::ifstream is(csv_path);
    if (!is) {
        std::cerr << "plot: cannot read " << csv_path << "\n";
        return kExitConfig;
    }
    std::string header;
    std::getline(is, header);
    if (header.rfind("detector,sweep_var,sweep_value", 0) != 0) {
        std::cerr << "plot: " << csv_path << " is not an mcad results CSV\n";
        return kExitConfig;
    }
    std::vector<std::string> detectors;
    std::string sweep_var;
    std::string line;
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string det, var;
        if (!std::getline(ss, det, ',') || !std::getline(ss, var, ',')) {
            std::cerr << "plot: malformed row: " << line << "\n";
            return kExitConfig;
        }
        if (sweep_var.empty()) sweep_var = var;
        if (std::find(detectors.begin(), detectors.end(), det) == detectors.end())
            detectors.push_back(det);
    }
    if (detectors.empty()) {
        std::cerr << "plot: no data rows in " << csv_path << "\n";
        return kExitConfig;
    }
    if (script_path.empty()) script_path = csv_path + ".gp";

    std::ofstream os(script_path);
    os << "# gnuplot script generated by mcad plot\n";
    os << "set datafile separator ','\n";
    os << "set key outside\n";
    os << "set logscale y\n";
    os << "set xlabel '" << sweep_var << "'\n";
    os << "set ylabel 'error probability'\n";
    os << "set grid\n";
    os << "set term pngcairo size 960,640\n";
    os << "set output '" << fs::path(csv_path).stem().string() << ".png'\n";
    os << "plot \\\n";
    for (std::size_t d = 0; d < detectors.size(); ++d) {
        std::string title = detectors[d];
        for (std::size_t p = title.find('_'); p != std::string::npos; p = title.find('_', p + 2))
            title.replace(p, 1, "\\_");
        os << "  '" << csv_path << "' every ::1 using (strcol(1) eq '" << detectors[d]
           << "' ? $3 : NaN):5 with linespoints title '" << title << "'";
        os << (d + 1 < detectors.size() ? ", \\\n" : "\n");
    }
    std::cout << "wrote " << script_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint ML/MAP device-activity and interference-power estimation simulator"};
    app.require_subcommand(1);

    std::string config_path, profile, out_dir = default_out_dir();
    std::vector<std::string> overrides;
    long seed_flag = -1;
    int workers_flag = -1;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* opt = sub->add_option("--config", config_path, "experiment config (JSON)");
        if (need_config) (void)opt;
        sub->add_option("--set", overrides, "override config keys, e.g. --set sweep.variable=M")
            ->take_all();
        sub->add_option("--profile", profile, "parameter profile: desk or paper")
            ->check(CLI::IsMember({"desk", "paper"}));
    };

    CLI::App* run = app.add_subcommand("run", "run an experiment and write results.csv");
    add_common(run, false);
    run->add_option("--out", out_dir, "output directory (default $MCAD_OUT_DIR or ./mcad_out)");
    run->add_option("--seed", seed_flag, "master seed override");
    run->add_option("--workers", workers_flag, "worker thread count (0 = all cores)");

    CLI::App* validate = app.add_subcommand("validate", "validate a config and print resolved values");
    add_common(validate, true);

    CLI::App* plot = app.add_subcommand("plot", "emit a gnuplot script for a results CSV");
    std::string csv_path, script_path;
    plot->add_option("csv", csv_path, "results.csv from a run")->required();
    plot->add_option("-o,--output", script_path, "script path (default <csv>.gp)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    if (run->parsed()) return cmd_run(config_path, profile, overrides, out_dir, seed_flag, workers_flag);
    if (validate->parsed()) return cmd_validate(config_path, profile, overrides);
    if (plot->parsed()) return cmd_plot(csv_path, script_path);
    return kExitConfig;
}
