#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridshield/gridshield.hpp"

namespace gs = gridshield;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitDiverged = 2;

std::vector<double> parse_levels(const std::string& text) {
    std::vector<double> levels;
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        // a..b in steps of 0.1
        const double a = std::stod(text.substr(0, dots));
        const double b = std::stod(text.substr(dots + 2));
        if (!(a <= b)) throw gs::ValidationError("level range must be ascending");
        for (int i = 0; a + 0.1 * i <= b + 1e-9; ++i) levels.push_back(std::round((a + 0.1 * i) * 1e9) / 1e9);
        return levels;
    }
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) levels.push_back(std::stod(item));
    if (levels.empty()) throw gs::ValidationError("no attack levels given");
    return levels;
}

gs::AttackSpec parse_attack(const std::string& text) {
    std::stringstream ss(text);
    std::vector<std::string> parts;
    for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
    if (parts.size() != 4) throw gs::ValidationError("--attack-override expects kind,magnitude,start,duration");
    gs::AttackSpec a;
    a.kind = gs::attack_kind_from_string(parts[0]);
    a.magnitude_fraction = std::stod(parts[1]);
    a.start = std::stod(parts[2]);
    a.duration = std::stod(parts[3]);
    a.validate();
    return a;
}

std::string output_dir(const gs::ScenarioConfig& s, const std::string& override_dir) {
    const std::string dir = override_dir.empty() ? s.output_dir : override_dir;
    fs::create_directories(dir);
    return dir;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridshield: microgrid primary control and predictive energy management"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir;
    bool no_battery = false;
    std::string attack_override;
    std::string levels_text = "0.1..0.5";

    auto* simulate = app.add_subcommand("simulate", "run one scenario");
    simulate->add_option("scenario", scenario_path, "scenario file")->required();
    simulate->add_flag("--no-battery", no_battery, "disconnect the battery and drop it from dispatch");
    simulate->add_option("--attack-override", attack_override, "kind,magnitude,start,duration");
    simulate->add_option("--output-dir", out_dir, "directory for the CSV and metrics files");

    auto* sweep = app.add_subcommand("sweep", "RMSE over attack levels, battery on and off");
    sweep->add_option("scenario", scenario_path, "scenario file")->required();
    sweep->add_option("--levels", levels_text, "comma list or a..b (step 0.1)");
    sweep->add_option("--output-dir", out_dir, "directory for sweep_rmse.csv");

    auto* validate = app.add_subcommand("validate", "parse and validate a scenario");
    validate->add_option("scenario", scenario_path, "scenario file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        gs::ScenarioConfig s = gs::parse_scenario(scenario_path);
        if (*validate) {
            std::cout << "ok " << s.label << " " << gs::scenario_fingerprint(s)["total"].get<std::string>() << "\n";
            return kExitOk;
        }
        if (*simulate) {
            if (no_battery) s.use_battery = false;
            if (!attack_override.empty()) s.attack = parse_attack(attack_override);
            s.validate();
            const gs::ScenarioResult r = gs::run_scenario(s);
            const std::string dir = output_dir(s, out_dir);
            gs::write_timeseries_csv(r.log, (fs::path(dir) / (s.label + "_timeseries.csv")).string());
            gs::write_metrics_json(s, r, (fs::path(dir) / (s.label + "_metrics.json")).string());
            std::cout << gs::metrics_json(s, r).dump(2) << "\n";
            return kExitOk;
        }
        if (*sweep) {
            const std::vector<double> levels = parse_levels(levels_text);
            const auto cells = gs::sweep_attack_levels(s, levels, true);
            const std::string dir = output_dir(s, out_dir);
            gs::write_sweep_csv(cells, (fs::path(dir) / "sweep_rmse.csv").string());
            gs::write_sweep_csv(cells, std::cout);
            for (const auto& c : cells) {
                if (c.failed) std::cerr << "level " << c.level << (c.battery ? " on" : " off") << ": " << c.error << "\n";
            }
            return kExitOk;
        }
    } catch (const gs::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const gs::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const gs::NumericalDivergence& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    }
    return kExitOk;
}
