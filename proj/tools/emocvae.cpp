#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "emocvae/cli.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out;
    std::string seed;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "flat key=value config file");
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--seed", args.seed, "random seed");
    sub->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
}

emocvae::Config resolve(const CommonArgs& args) {
    emocvae::Config cfg;
    if (!args.config_path.empty()) cfg = emocvae::Config::parse_file(args.config_path);
    if (!args.out.empty()) cfg.set("out", args.out);
    if (!args.seed.empty()) cfg.set("seed", args.seed);
    for (const auto& kv : args.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::runtime_error("--set expects key=value: " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Emo-CVAE emotional response generation toolkit"};
    app.require_subcommand(1);

    struct Cmd {
        const char* name;
        const char* help;
        int (*run)(const emocvae::Config&);
    };
    const std::vector<Cmd> cmds = {
        {"synth-data", "generate a synthetic emotion-templated corpus", emocvae::cli::cmd_synth_data},
        {"train", "train a response generation model", emocvae::cli::cmd_train},
        {"train-scorers", "train the emotion classifier, TCD and evaluation LM",
         emocvae::cli::cmd_train_scorers},
        {"generate", "decode multi-candidate responses from a checkpoint", emocvae::cli::cmd_generate},
        {"evaluate", "rerank candidates and compute objective metrics", emocvae::cli::cmd_evaluate},
        {"ablate", "train and compare all model variants", emocvae::cli::cmd_ablate},
        {"dump-latents", "dump latent samples (optionally with a 2D projection)",
         emocvae::cli::cmd_dump_latents},
    };

    std::vector<std::pair<CLI::App*, CommonArgs>> subs;
    subs.reserve(cmds.size());
    for (const auto& c : cmds) {
        subs.emplace_back(app.add_subcommand(c.name, c.help), CommonArgs{});
        add_common(subs.back().first, subs.back().second);
    }

    CLI11_PARSE(app, argc, argv);

    for (size_t i = 0; i < cmds.size(); ++i) {
        if (subs[i].first->parsed()) {
            try {
                return cmds[i].run(resolve(subs[i].second));
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 1;
            }
        }
    }
    return 1;
}
