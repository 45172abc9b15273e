// fjsync: analytic densities, simulation, stationary solver and chi-square
// validation for the fork-join synchronizer model.

#include <exception>
#include <iostream>

#include "fjsync/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synchronizer sojourn times in fork-join queueing networks", "fjsync"};
    fjsync::cli::ExperimentConfig cfg;
    fjsync::cli::configure(app, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        return fjsync::cli::dispatch(app, cfg, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "fjsync: error: " << e.what() << '\n';
        return 1;
    }
}
