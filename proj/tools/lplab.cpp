#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lplab/lab/pipeline.hpp"

namespace {

using lplab::lab::Context;

std::vector<std::string> selected_models(const Context& ctx, const std::optional<std::string>& model) {
  if (model) {
    (void)ctx.cfg.model(*model);
    return {*model};
  }
  std::vector<std::string> ids;
  for (const auto& m : ctx.cfg.models) ids.push_back(m.id);
  return ids;
}

void report(const std::string& stage, bool ran) { std::cout << (stage + (ran ? ": done\n" : ": up to date\n")) << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-action generative model laboratory"};
  app.require_subcommand(1);
  std::string config;
  std::optional<std::string> model;
  std::optional<int> seed;
  int jobs = 1;
  bool force = false;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "Generate the demonstration dataset"},
      {"train-gen", "Train generative models"},
      {"eval-gen", "Evaluate DPR, L3 and precision/recall"},
      {"train-policy", "Train EM policies on trained models"},
      {"analyze", "Correlate model metrics with policy performance"},
      {"zoo", "Run the full model sweep end to end"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Experiment INI file")->required()->check(CLI::ExistingFile);
    sub->add_option("--model", model, "Restrict to one model id");
    sub->add_option("--seed", seed, "Restrict to one policy seed index");
    sub->add_option("--jobs", jobs, "Parallel stage count")->check(CLI::PositiveNumber);
    sub->add_flag("--force", force, "Rerun completed stages and overwrite a workdir from another config");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    Context ctx(lplab::lab::load_config(config), force);
    namespace lab = lplab::lab;
    if (cmd == "gen-data") {
      report(lab::stages::gen_data(), lab::cmd_gen_data(ctx));
    } else if (cmd == "train-gen") {
      const auto ids = selected_models(ctx, model);
      lab::parallel_for(ids.size(), jobs, [&](std::size_t i) { report(lab::stages::train_gen(ids[i]), lab::cmd_train_gen(ctx, ids[i])); });
    } else if (cmd == "eval-gen") {
      const auto ids = selected_models(ctx, model);
      lab::parallel_for(ids.size(), jobs, [&](std::size_t i) { report(lab::stages::eval_gen(ids[i]), lab::cmd_eval_gen(ctx, ids[i])); });
    } else if (cmd == "train-policy") {
      const auto ids = selected_models(ctx, model);
      std::vector<int> seeds;
      if (seed) seeds.push_back(*seed);
      else
        for (int s = 0; s < ctx.cfg.em.seeds; ++s) seeds.push_back(s);
      lab::parallel_for(ids.size() * seeds.size(), jobs, [&](std::size_t k) {
        const auto& id = ids[k / seeds.size()];
        const int s = seeds[k % seeds.size()];
        report(lab::stages::train_policy(id, s), lab::cmd_train_policy(ctx, id, s));
      });
    } else if (cmd == "analyze") {
      report(lab::stages::analyze(), lab::cmd_analyze(ctx));
    } else {
      lab::cmd_zoo(ctx, {jobs});
      std::cout << "zoo: done\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "lplab " << cmd << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
