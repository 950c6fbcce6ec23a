// tgpo command-line driver: corpus generation, training, evaluation, and
// variant comparison. Flags mirror the config keys one-to-one; a config file
// supplies defaults and explicit flags override it.

#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tgpo/cli.hpp"
#include "tgpo/config.hpp"

namespace {

struct SubcommandArgs {
  std::string config_file;
  std::map<std::string, std::string> values;  // flag overrides, by config key
};

void add_config_flags(CLI::App* sub, SubcommandArgs& args) {
  sub->add_option("--config", args.config_file, "config file with key = value lines");
  for (const tgpo::ConfigKey& key : tgpo::config_keys()) {
    sub->add_option_function<std::string>(
        "--" + key.name,
        [&args, name = key.name](const std::string& v) { args.values[name] = v; }, key.help);
  }
}

tgpo::RunConfig build_config(const SubcommandArgs& args) {
  tgpo::RunConfig config;
  if (!args.config_file.empty()) config = tgpo::load_config_file(args.config_file, config);
  for (const auto& [key, value] : args.values) tgpo::set_config_value(config, key, value);
  tgpo::validate_config(config);
  return config;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale RLVR lab: temporally calibrated policy optimization"};
  app.require_subcommand(1);

  SubcommandArgs gen_args, train_args, eval_args, compare_args;
  std::string checkpoint_path;
  std::string variants_csv = "grpo,tgpo_grpo";
  std::string seeds_csv = "1,2,3,4,5";

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate train and eval corpora");
  add_config_flags(gen, gen_args);
  CLI::App* train = app.add_subcommand("train", "run one training configuration");
  add_config_flags(train, train_args);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the eval corpus");
  add_config_flags(eval, eval_args);
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file to evaluate")->required();
  CLI::App* compare = app.add_subcommand("compare", "run several (variant, seed) cells");
  add_config_flags(compare, compare_args);
  compare->add_option("--variants", variants_csv, "comma-separated variants (>= 2)");
  compare->add_option("--seeds", seeds_csv, "comma-separated seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      tgpo::cmd_gen_corpus(build_config(gen_args), std::cout);
    } else if (train->parsed()) {
      tgpo::cmd_train(build_config(train_args), std::cout);
    } else if (eval->parsed()) {
      tgpo::cmd_eval(build_config(eval_args), checkpoint_path, std::cout);
    } else if (compare->parsed()) {
      const std::vector<std::string> variants = split_csv(variants_csv);
      std::vector<std::uint64_t> seeds;
      for (const std::string& s : split_csv(seeds_csv)) {
        seeds.push_back(static_cast<std::uint64_t>(std::stoull(s)));
      }
      tgpo::cmd_compare(build_config(compare_args), variants, seeds, std::cout);
    }
  } catch (const tgpo::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
