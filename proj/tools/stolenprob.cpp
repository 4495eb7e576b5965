#include <cstring>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stolen/report.hpp"

using namespace stolen;

namespace {

// The manifest seeds the config before flag parsing so explicit flags win.
std::string find_manifest(int argc, char **argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--manifest") == 0 && i + 1 < argc)
      return argv[i + 1];
    if (std::strncmp(argv[i], "--manifest=", 11) == 0)
      return argv[i] + 11;
  }
  return {};
}

void add_common(CLI::App *app, RunConfig &cfg, std::string &manifest) {
  app->add_option("--out", cfg.out_dir, "Output directory");
  app->add_option("--seed", cfg.seed, "Seed for every stochastic component");
  app->add_option("--manifest", manifest, "Rerun from a manifest.json");
}

void add_detection(CLI::App *app, RunConfig &cfg) {
  app->add_option_function<double>(
      "--omega", [&cfg](double v) { cfg.omega = v; }, "Fixed arc half-width (radians)");
  app->add_option_function<std::size_t>(
      "--target-interior", [&cfg](std::size_t v) { cfg.target_interior = v; },
      "Interior count the omega sweep aims for");
  app->add_option("--bins", cfg.bins, "Angular bins per plane");
  app->add_option("--exact-max-dim", cfg.exact_max_dim,
                  "Largest dimension for the exact hull test");
}

void add_probe(CLI::App *app, RunConfig &cfg) {
  app->add_option("--restarts", cfg.probe.restarts);
  app->add_option("--steps", cfg.probe.steps);
  app->add_option("--radius", cfg.probe.radius, "Search radius for h");
  app->add_option_function<std::string>(
      "--probe-method",
      [&cfg](const std::string &m) {
        cfg.probe_method = m == "grid" ? ProbeMethod::grid : ProbeMethod::gradient_ascent;
      })
      ->check(CLI::IsMember({"grid", "gradient-ascent"}));
}

void add_toy(CLI::App *app, RunConfig &cfg) {
  app->add_option("--dim", cfg.toy.dim, "Embedding dimension");
  app->add_option("--context", cfg.toy.context_window, "Context window");
  app->add_option("--epochs", cfg.toy.epochs);
  app->add_option("--lr", cfg.toy.learning_rate, "SGD learning rate");
  app->add_option("--init-scale", cfg.toy.weight_init_scale);
}

void add_ensemble(CLI::App *app, RunConfig &cfg) {
  app->add_option("--lambda", cfg.lambda, "NNLM weight in the ensemble")
      ->check(CLI::Range(0.0, 1.0));
  app->add_option_function<std::string>(
         "--mode", [&cfg](const std::string &m) { cfg.mode = parse_ensemble_mode(m); })
      ->check(CLI::IsMember({"targeted", "always", "never"}));
}

}  // namespace

int main(int argc, char **argv) {
  RunConfig cfg;
  std::string manifest = find_manifest(argc, argv);
  if (!manifest.empty()) {
    try {
      std::ifstream in(manifest);
      if (!in)
        throw Error("cannot open manifest '" + manifest + "'");
      cfg = RunConfig::from_json(nlohmann::json::parse(in));
    } catch (const std::exception &e) {
      std::cerr << "stolenprob: [manifest] " << e.what() << '\n';
      return 2;
    }
  }

  CLI::App app{"Stolen probability analysis of softmax embeddings"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  auto *detect = app.add_subcommand("detect", "Classify words as hull vertex or interior");
  detect->add_option("--embeddings", cfg.embeddings)->required(manifest.empty());
  add_detection(detect, cfg);

  auto *probe = app.add_subcommand("probe", "Search each word's maximum probability");
  probe->add_option("--embeddings", cfg.embeddings)->required(manifest.empty());
  add_probe(probe, cfg);

  auto *illustrate = app.add_subcommand("illustrate", "Probability grids over h");
  illustrate->add_option("--embeddings", cfg.embeddings);
  illustrate->add_option("--preset", cfg.preset)
      ->check(CLI::IsMember(
          {"pyramid-inside", "pyramid-outside", "square-corner", "square-centroid"}));
  illustrate->add_option("--target", cfg.target_token, "Token whose probability is mapped");
  illustrate->add_option("--z", cfg.z_slices, "z slices for 3-d spaces");

  auto *train = app.add_subcommand("train", "Train the toy neural LM");
  train->add_option("--corpus", cfg.corpus)->required(manifest.empty());
  add_toy(train, cfg);

  auto *ngram = app.add_subcommand("ngram", "Fit the Kneser-Ney trigram model");
  ngram->add_option("--corpus", cfg.corpus)->required(manifest.empty());

  auto *rank = app.add_subcommand("rank", "Rank words by maximum probability");
  rank->add_option("--model", cfg.model)->required(manifest.empty());
  rank->add_option("--corpus", cfg.corpus)->required(manifest.empty());
  rank->add_option("--top-k", cfg.top_k);
  add_detection(rank, cfg);

  auto *bias = app.add_subcommand("bias-check", "Compare maxima with and without biases");
  bias->add_option("--model", cfg.model);
  bias->add_option("--corpus", cfg.corpus);
  bias->add_option("--embeddings", cfg.embeddings);
  add_detection(bias, cfg);
  add_probe(bias, cfg);

  auto *ensemble = app.add_subcommand("ensemble", "Evaluate the NNLM + trigram ensemble");
  ensemble->add_option("--model", cfg.model)->required(manifest.empty());
  ensemble->add_option("--corpus", cfg.corpus)->required(manifest.empty());
  add_detection(ensemble, cfg);
  add_ensemble(ensemble, cfg);

  auto *pipeline = app.add_subcommand("pipeline", "Run every stage into one bundle");
  pipeline->add_option("--corpus", cfg.corpus);
  pipeline->add_option("--top-k", cfg.top_k);
  add_detection(pipeline, cfg);
  add_probe(pipeline, cfg);
  add_toy(pipeline, cfg);
  add_ensemble(pipeline, cfg);

  for (auto *sub : app.get_subcommands({}))
    add_common(sub, cfg, manifest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }
  cfg.subcommand = app.get_subcommands().front()->get_name();

  try {
    run_subcommand(cfg);
  } catch (const StageError &e) {
    std::cerr << "stolenprob: " << e.what() << '\n';
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "stolenprob: [" << cfg.subcommand << "] " << e.what() << '\n';
    return 1;
  }
  return 0;
}
