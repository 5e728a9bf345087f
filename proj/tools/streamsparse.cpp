// Command-line front end for the streaming sparse-regression toolkit.
//
//   streamsparse simulate <config.json>
//   streamsparse resume <checkpoint> <config.json>
//   streamsparse ingest <data.csv> --response <col> --batch-size <n> <config.json>
//   streamsparse compare <config.json>
//
// Diagnostics go to stderr; data goes to the files named by the config.
// Exit codes: 0 ok, 2 config error, 3 divergence, 4 bad checkpoint,
// 5 unparseable data cell.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "streamsparse/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitIngestCell = 5;

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const streamsparse::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const streamsparse::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const streamsparse::IngestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIngestCell;
    } catch (const streamsparse::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming high-dimensional sparse regression"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, data_path, response_column;
    long batch_size = 0;

    CLI::App* simulate = app.add_subcommand("simulate", "run the configured simulated streams");
    simulate->add_option("config", config_path, "experiment config (JSON)")->required();

    CLI::App* resume = app.add_subcommand("resume", "continue a stream from a checkpoint");
    resume->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    resume->add_option("config", config_path, "experiment config (JSON)")->required();

    CLI::App* ingest = app.add_subcommand("ingest", "stream a CSV file through the solver");
    ingest->add_option("data", data_path, "CSV file with a header row")->required();
    ingest->add_option("--response", response_column, "name of the response column")->required();
    ingest->add_option("--batch-size", batch_size, "rows per batch")->required();
    ingest->add_option("config", config_path, "experiment config (JSON)")->required();

    CLI::App* compare = app.add_subcommand("compare", "run both methods plus the oracle, joined CSV");
    compare->add_option("config", config_path, "experiment config (JSON)")->required();

    CLI11_PARSE(app, argc, argv);

    if (simulate->parsed())
        return guarded([&] {
            return streamsparse::run_simulate(streamsparse::load_experiment_config(config_path), std::cerr);
        });
    if (resume->parsed())
        return guarded([&] {
            return streamsparse::run_resume(checkpoint_path,
                                            streamsparse::load_experiment_config(config_path), std::cerr);
        });
    if (ingest->parsed())
        return guarded([&] {
            return streamsparse::run_ingest(data_path, response_column, batch_size,
                                            streamsparse::load_experiment_config(config_path), std::cerr);
        });
    if (compare->parsed())
        return guarded([&] {
            return streamsparse::run_compare(streamsparse::load_experiment_config(config_path), std::cerr);
        });
    return kExitOk;
}
