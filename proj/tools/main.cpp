#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "robseg/harness.hpp"

// Command line front end. Every subcommand takes the same option set; values
// given on the command line override the config file, which overrides the
// built-in defaults.
int main(int argc, char** argv) {
    CLI::App app{"segmentation robustness workbench: synthesis, training, attack sweeps, ablation"};
    app.require_subcommand(1);

    std::string opt_config, opt_out, opt_intensities, opt_variant, opt_checkpoint, opt_data;
    uint64_t opt_seed = 0;
    int opt_threads = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt_config, "experiment config file");
        sub->add_option("--seed", opt_seed, "run seed");
        sub->add_option("--out", opt_out, "output directory");
        sub->add_option("--intensities", opt_intensities, "comma-separated attack intensities");
        sub->add_option("--variant", opt_variant, "model variant: full, no-nlce, no-nl, no-ce");
        sub->add_option("--checkpoint", opt_checkpoint, "weights file to load");
        sub->add_option("--data", opt_data, "dataset directory, skips synthesis");
        sub->add_option("--threads", opt_threads, "worker threads, 0 means hardware count");
        return sub;
    };

    add_common(app.add_subcommand("synth", "write a synthetic dataset"));
    add_common(app.add_subcommand("train", "train a model and save its checkpoint"));
    add_common(app.add_subcommand("eval", "score a checkpoint on the test split"));
    add_common(app.add_subcommand("sweep", "attack a checkpoint across intensities"));
    add_common(app.add_subcommand("ablate", "train and compare all model variants"));

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        robseg::ExperimentConfig cfg;
        if (sub->count("--config")) cfg = robseg::parse_config_file(opt_config);
        if (sub->count("--seed")) cfg.seed = opt_seed;
        if (sub->count("--out")) cfg.out = opt_out;
        if (sub->count("--intensities")) cfg.attack.intensities = robseg::parse_intensity_list(opt_intensities);
        if (sub->count("--variant")) cfg.variant = robseg::parse_variant(opt_variant);
        if (sub->count("--checkpoint")) cfg.checkpoint = opt_checkpoint;
        if (sub->count("--data")) cfg.data.path = opt_data;
        if (sub->count("--threads")) cfg.threads = opt_threads;

        const std::string& name = sub->get_name();
        if (name == "synth")
            robseg::cmd_synth(cfg);
        else if (name == "train")
            robseg::cmd_train(cfg);
        else if (name == "eval")
            robseg::cmd_eval(cfg);
        else if (name == "sweep")
            robseg::cmd_sweep(cfg);
        else
            robseg::cmd_ablate(cfg);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
