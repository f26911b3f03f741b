// Command-line driver: train / evaluate / compare / synth.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>

#include "ucds/errors.hpp"
#include "ucds/experiment.hpp"
#include "ucds/synthetic.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

std::string key_reference() {
  std::string out = "Config file keys (key=value, '#' comments):\n";
  for (const auto& key : ucds::config_keys()) {
    std::string name = key.name;
    name.resize(22, ' ');
    out += "  " + name + key.description + "\n";
  }
  out += "\nDefaults: " ;
  std::string defaults;
  for (const auto& [k, v] : ucds::spec_entries(ucds::ExperimentSpec{})) {
    if (k == "dataset") continue;
    defaults += k + "=" + v + " ";
  }
  return out + defaults + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware recommender training with user constrained dominant sets"};
  app.footer(key_reference());
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log per-epoch progress");

  auto* train = app.add_subcommand("train", "train one method and evaluate the best model");
  std::string train_config;
  std::optional<std::uint64_t> train_seed;
  std::string train_out;
  train->add_option("--config", train_config, "experiment config file")->required();
  train->add_option("--seed", train_seed, "override the config seed");
  train->add_option("--out", train_out, "override the output directory");

  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on its dataset's test split");
  std::string eval_model, eval_dataset, eval_ckpt, eval_result;
  eval->add_option("--model", eval_model, "pmf or neumf")->required();
  eval->add_option("--dataset", eval_dataset, "dataset directory")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--result", eval_result, "also write result rows to this file");

  auto* compare = app.add_subcommand("compare", "train several methods and tabulate them");
  std::string cmp_config, cmp_methods = "original,in-ucds,in-naive", cmp_out;
  std::optional<std::uint64_t> cmp_seed;
  compare->add_option("--config", cmp_config, "experiment config file")->required();
  compare->add_option("--methods", cmp_methods, "comma-separated methods")->capture_default_str();
  compare->add_option("--seed", cmp_seed, "override the config seed");
  compare->add_option("--out", cmp_out, "override the output directory");

  auto* synth = app.add_subcommand("synth", "write a synthetic clustered dataset");
  std::string synth_dir;
  ucds::SyntheticConfig synth_cfg;
  synth->add_option("--out", synth_dir, "dataset directory to create")->required();
  synth->add_option("--users", synth_cfg.users, "number of users")->capture_default_str();
  synth->add_option("--items", synth_cfg.items, "number of items")->capture_default_str();
  synth->add_option("--clusters", synth_cfg.clusters, "planted preference clusters")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "generator seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("ucds"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*train) {
      auto spec = ucds::load_config(train_config);
      if (train_seed) spec.train.seed = *train_seed;
      if (!train_out.empty()) spec.out_dir = train_out;
      const auto m = ucds::cmd_train(spec);
      std::cout << ucds::format_report(m.test_report);
      std::cout << "manifest: " << m.manifest_path.string() << '\n';
    } else if (*eval) {
      const auto result = ucds::cmd_evaluate(ucds::parse_model_kind(eval_model),
                                             eval_dataset, eval_ckpt);
      if (!eval_result.empty()) ucds::write_results(result.rows, eval_result);
      std::cout << ucds::format_report(result.report);
    } else if (*compare) {
      auto spec = ucds::load_config(cmp_config);
      if (cmp_seed) spec.train.seed = *cmp_seed;
      if (!cmp_out.empty()) spec.out_dir = cmp_out;
      const auto result = ucds::cmd_compare(spec, ucds::parse_method_list(cmp_methods));
      std::cout << result.table;
      std::cout << "table: " << result.table_path.string() << '\n'
                << "curve: " << result.curve_path.string() << '\n';
    } else if (*synth) {
      const std::filesystem::path dir(synth_dir);
      const auto name = ucds::dataset_name(dir);
      ucds::write_records(ucds::generate_synthetic(synth_cfg), dir / (name + "_data.txt"));
      std::cout << "wrote " << (dir / (name + "_data.txt")).string() << '\n';
    }
  } catch (const ucds::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kConfig;
  } catch (const ucds::DataError& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const ucds::NumericError& e) {
    spdlog::error("{}", e.what());
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kConfig;
  }
  return kOk;
}
