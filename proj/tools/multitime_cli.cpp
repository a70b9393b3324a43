// Command-line runner: executes one scenario described by a JSON config and
// writes its result files plus a manifest into the output directory.
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.

#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "multitime/errors.hpp"
#include "multitime/scenario.hpp"

int main(int argc, char** argv) {
    CLI::App app{"multitime scenario runner"};
    std::string config_path;
    std::string output_override;
    bool verbose = false;
    app.add_option("--config", config_path, "path to a scenario config (JSON)")
        ->required();
    app.add_option("--output", output_override,
                   "output directory (overrides output_dir from the config)");
    app.add_flag("--verbose", verbose, "log each written file to stderr");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    nlohmann::json config;
    {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "error: cannot open config file '" << config_path << "'\n";
            return 2;
        }
        try {
            in >> config;
        } catch (const nlohmann::json::parse_error& e) {
            std::cerr << "error: config file '" << config_path
                      << "' is not valid JSON: " << e.what() << "\n";
            return 2;
        }
    }

    try {
        std::string output_dir = output_override;
        if (output_dir.empty() && config.contains("output_dir")) {
            if (!config["output_dir"].is_string())
                throw multitime::invalid_input_error("key \"output_dir\" must be a string");
            output_dir = config["output_dir"].get<std::string>();
        }
        const multitime::ScenarioRun run =
            multitime::run_scenario(config, output_dir, verbose);
        std::cout << run.scenario << ": wrote " << run.files.size()
                  << " result file(s) + manifest.json to " << output_dir << "\n";
        return 0;
    } catch (const multitime::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const multitime::inconsistent_input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const multitime::integrator_failure_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const multitime::invalid_input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
