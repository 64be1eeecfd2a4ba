#include <CLI11.hpp>

#include "jumplab/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"jumplab: monotone SPDEs with Poisson jump noise"};
    app.require_subcommand(1);

    std::string config;
    std::string output_dir;
    std::uint64_t seed = 0;
    for (const auto& name : jumplab::command_names()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("config", config, "run config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--output-dir", output_dir, "override output_dir");
        sub->add_option("--seed", seed, "override seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : jumplab::kExitConfig;
    }

    const auto* sub = app.get_subcommands().front();
    jumplab::Overrides ov;
    if (sub->count("--output-dir")) ov.output_dir = output_dir;
    if (sub->count("--seed")) ov.seed = seed;
    return jumplab::run_command(sub->get_name(), config, ov);
}
