// Command line front end. Talks to the library only through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "agent_unlearn/agent_unlearn.h"

namespace {

enum Exit { kOk = 0, kChecksFailed = 1, kConfigError = 2, kTransportError = 3 };

int exit_for(au_status s) {
  switch (s) {
    case AU_OK: return kOk;
    case AU_ERR_PARSE:
    case AU_ERR_CONFIGURATION: return kConfigError;
    case AU_ERR_TRANSPORT: return kTransportError;
    default: return kChecksFailed;
  }
}

int report(au_status s, const char* during) {
  std::fprintf(stderr, "au_cli: %s failed: %s\n", during, au_last_error());
  return exit_for(s);
}

struct Handle {
  au_experiment* e = nullptr;
  ~Handle() { au_experiment_free(e); }
};

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> output_dir;
  bool allow_network = false;
};

void print_summary(const std::string& summary_json) {
  const auto doc = nlohmann::json::parse(summary_json);
  for (const auto& s : doc.at("strategies")) {
    std::printf("%-8s efficacy %.3f  unlearn@1 %.3f  success %.3f -> %.3f  pairs %zu\n",
                s.at("strategy").get<std::string>().c_str(), s.at("unlearn_efficacy").get<double>(),
                s.at("unlearn_at_1").get<double>(), s.at("success_before").get<double>(),
                s.at("success_after").get<double>(), s.at("preference_pairs").get<std::size_t>());
  }
  for (const auto& c : doc.at("checks")) {
    std::printf("check %-28s %s  %s\n", c.at("name").get<std::string>().c_str(),
                c.at("passed").get<bool>() ? "PASS" : "FAIL", c.at("detail").get<std::string>().c_str());
  }
}

int run_pipeline(const RunOptions& o, au_mode mode) {
  Handle h;
  if (auto s = au_experiment_load(o.config.c_str(), &h.e)) return report(s, "loading the config");
  if (o.seed) au_experiment_set_seed(h.e, *o.seed);
  if (o.jobs) au_experiment_set_jobs(h.e, *o.jobs);
  if (o.output_dir) au_experiment_set_output_dir(h.e, o.output_dir->c_str());
  au_experiment_set_allow_network(h.e, o.allow_network ? 1 : 0);

  int passed = 0;
  if (auto s = au_experiment_run(h.e, mode, &passed)) return report(s, "the run");
  char* summary = nullptr;
  if (auto s = au_experiment_summary_json(h.e, &summary)) return report(s, "the summary");
  print_summary(summary);
  au_string_free(summary);
  char* cfg = nullptr;
  if (au_experiment_config_json(h.e, &cfg) == AU_OK) {
    const auto doc = nlohmann::json::parse(cfg);
    std::printf("artifacts in %s\n", doc.at("output_dir").get<std::string>().c_str());
    au_string_free(cfg);
  }
  return passed ? kOk : kChecksFailed;
}

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--jobs", o.jobs, "worker threads, 0 for one per core");
  cmd->add_option("--output-dir", o.output_dir, "where artifacts go");
  cmd->add_flag("--allow-network", o.allow_network, "permit the remote backend");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agent unlearning experiments on grid worlds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(au_version()));

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "train, unlearn, score and attack");
  add_run_options(run, run_opts);
  RunOptions cert_opts;
  auto* certify = app.add_subcommand("certify", "train the prompt converters and check their certificates");
  add_run_options(certify, cert_opts);
  RunOptions attack_opts;
  auto* attack = app.add_subcommand("attack", "unlearn, then run the adversary only");
  add_run_options(attack, attack_opts);

  auto* gen = app.add_subcommand("gen-env", "generate a grid");
  std::uint64_t gen_seed = 0;
  int width = 10, height = 10, obstacles = 15, treasures = 3;
  std::string format = "text", env_id, out_path;
  gen->add_option("--seed", gen_seed, "layout seed");
  gen->add_option("--width", width)->check(CLI::PositiveNumber);
  gen->add_option("--height", height)->check(CLI::PositiveNumber);
  gen->add_option("--obstacles", obstacles)->check(CLI::NonNegativeNumber);
  gen->add_option("--treasures", treasures)->check(CLI::PositiveNumber);
  gen->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
  gen->add_option("--env-id", env_id);
  gen->add_option("--out", out_path, "file to write; stdout when absent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*run) return run_pipeline(run_opts, AU_MODE_RUN);
  if (*certify) return run_pipeline(cert_opts, AU_MODE_CERTIFY);
  if (*attack) return run_pipeline(attack_opts, AU_MODE_ATTACK);

  au_grid* grid = nullptr;
  if (auto s = au_grid_generate(gen_seed, width, height, obstacles, treasures, env_id.c_str(), &grid)) {
    return report(s, "generating the grid");
  }
  std::unique_ptr<au_grid, void (*)(au_grid*)> owned(grid, au_grid_free);
  char* text = nullptr;
  if (auto s = au_grid_render(grid, format == "json" ? AU_GRID_JSON : AU_GRID_TEXT, &text)) {
    return report(s, "rendering the grid");
  }
  std::string body(text);
  au_string_free(text);
  if (format == "json") body += "\n";
  if (out_path.empty()) {
    std::fputs(body.c_str(), stdout);
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!(f << body)) {
      std::fprintf(stderr, "au_cli: cannot write %s\n", out_path.c_str());
      return kChecksFailed;
    }
  }
  return kOk;
}
