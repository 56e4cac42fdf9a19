/**
 * dacforge — divide-and-conquer rollout, reward and evaluation engine.
 *
 * Subcommands:
 *   divide          sample subproblem groups and dump them with validity flags
 *   iterate         run training iterations and export experience batches
 *   eval            Pass@1 / Pass@k evaluation, optionally an allocation sweep
 *   simulate-lemma  covariance report for the synthetic causal model
 *
 * Config file keys mirror the iteration config; command-line flags win.
 * Secrets (API keys) are environment-only: DACFORGE_API_BASE, DACFORGE_API_KEY,
 * DACFORGE_MODEL.
 */

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <dacforge/common.hpp>
#include <dacforge/config.hpp>
#include <dacforge/corpus.hpp>
#include <dacforge/engine.hpp>
#include <dacforge/eval.hpp>
#include <dacforge/manifest.hpp>
#include <dacforge/oracle.hpp>
#include <dacforge/parse.hpp>
#include <dacforge/policy.hpp>
#include <dacforge/prompts.hpp>
#include <dacforge/remote.hpp>

namespace fs = std::filesystem;
using namespace dacforge;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string corpus_path;
  std::string backend = "synthetic";
  std::string out_dir = "out";
  std::string assets;
  std::string corpus_format;  // "jsonl" | "csv" | "" (by extension)
  uint64_t seed = 0;
  int parallel = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  std::string mock_script;
  std::string mock_constant;

  double syn_p_sub = 0.6;
  std::string syn_g = "0.05,0.15,0.55,0.9";
  double syn_invalid_rate = 0.0;
  double syn_undersized_rate = 0.0;
  double syn_truncation_rate = 0.0;
  double syn_cot_rate = 0.3;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key = value config file");
  cmd->add_option("--corpus", args.corpus_path, "problem dataset (JSONL or CSV)");
  cmd->add_option("--backend", args.backend, "mock | synthetic | remote")
      ->check(CLI::IsMember({"mock", "synthetic", "remote"}));
  cmd->add_option("--seed", args.seed, "global seed");
  cmd->add_option("--parallel", args.parallel, "max concurrent problems")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--assets", args.assets, "prompt template directory");
  cmd->add_option("--corpus-format", args.corpus_format, "jsonl | csv (default: by extension)")
      ->check(CLI::IsMember({"jsonl", "csv", ""}));
  cmd->add_option("--mock-script", args.mock_script,
                  "JSONL script for the mock backend ({\"text\":...,\"truncated\":...})");
  cmd->add_option("--mock-constant", args.mock_constant, "constant mock response text");
  cmd->add_option("--syn-p-sub", args.syn_p_sub, "synthetic per-subproblem success prob");
  cmd->add_option("--syn-g", args.syn_g, "synthetic success table, comma separated");
  cmd->add_option("--syn-invalid-rate", args.syn_invalid_rate, "synthetic bad-format rate");
  cmd->add_option("--syn-undersized-rate", args.syn_undersized_rate,
                  "synthetic undersized-group rate");
  cmd->add_option("--syn-truncation-rate", args.syn_truncation_rate,
                  "synthetic truncation rate");
  cmd->add_option("--syn-cot-rate", args.syn_cot_rate, "synthetic CoT success rate");
}

struct IterationFlags {
  CLI::Option* gd = nullptr;
  CLI::Option* gc = nullptr;
  CLI::Option* ns = nullptr;
  CLI::Option* batch_size = nullptr;
  CLI::Option* max_tokens = nullptr;
  CLI::Option* eps_low = nullptr;
  CLI::Option* eps_high = nullptr;
  CLI::Option* t_acc = nullptr;
  CLI::Option* cot_group_size = nullptr;
  CLI::Option* format_constraint = nullptr;
  CLI::Option* reward_mode = nullptr;
  CLI::Option* max_subproblems = nullptr;
  CLI::Option* temperature = nullptr;
  CLI::Option* top_p = nullptr;

  int gd_v = 4, gc_v = 8, ns_v = 3, batch_v = 256, max_tokens_v = 8192;
  int cot_group_v = 8, max_subs_v = parse::kDefaultMaxSubproblems;
  double eps_low_v = 0.2, eps_high_v = 0.28, t_acc_v = 0.25;
  double temperature_v = 1.0, top_p_v = 1.0;
  bool format_constraint_v = false;
  std::string reward_mode_v = "eq2";
};

void add_iteration_flags(CLI::App* cmd, IterationFlags& f) {
  f.gd = cmd->add_option("--gd", f.gd_v, "division samples per problem");
  f.gc = cmd->add_option("--gc", f.gc_v, "conquering samples per group");
  f.ns = cmd->add_option("--ns", f.ns_v, "minimum subproblem count");
  f.batch_size = cmd->add_option("--batch-size", f.batch_v, "problems per step");
  f.max_tokens = cmd->add_option("--max-tokens", f.max_tokens_v, "rollout token budget");
  f.eps_low = cmd->add_option("--eps-low", f.eps_low_v, "clip lower range");
  f.eps_high = cmd->add_option("--eps-high", f.eps_high_v, "clip upper range");
  f.t_acc = cmd->add_option("--t-acc", f.t_acc_v, "route problems below this CoT accuracy");
  f.cot_group_size = cmd->add_option("--cot-group-size", f.cot_group_v, "CoT rollouts per problem");
  f.format_constraint =
      cmd->add_flag("--format-constraint", f.format_constraint_v,
                    "require per-index subproblem mentions for positive conquer rewards");
  f.reward_mode = cmd->add_option("--division-reward-mode", f.reward_mode_v,
                                  "eq2 | accuracy_variant")
                      ->check(CLI::IsMember({"eq2", "accuracy_variant"}));
  f.max_subproblems = cmd->add_option("--max-subproblems", f.max_subs_v, "group size cap");
  f.temperature = cmd->add_option("--temperature", f.temperature_v, "sampling temperature");
  f.top_p = cmd->add_option("--top-p", f.top_p_v, "nucleus sampling p");
}

/// Config file first, then any flag the user actually passed.
engine::IterationConfig build_config(const CommonArgs& common, const IterationFlags& f,
                                     bool want_t_acc_default) {
  engine::IterationConfig cfg;
  std::optional<config::KeyValueConfig> file;
  if (!common.config_path.empty()) {
    file = config::KeyValueConfig::load(common.config_path);
    file->apply(cfg);
  }
  if (f.gd->count()) cfg.g_d = f.gd_v;
  if (f.gc->count()) cfg.g_c = f.gc_v;
  if (f.ns->count()) cfg.n_s = f.ns_v;
  if (f.batch_size->count()) cfg.batch_size = f.batch_v;
  if (f.max_tokens->count()) cfg.max_tokens = f.max_tokens_v;
  if (f.eps_low->count()) cfg.eps_low = f.eps_low_v;
  if (f.eps_high->count()) cfg.eps_high = f.eps_high_v;
  if (f.t_acc->count() || (want_t_acc_default && !cfg.t_acc)) {
    if (f.t_acc->count()) cfg.t_acc = f.t_acc_v;
  }
  if (f.cot_group_size->count()) cfg.cot_group_size = f.cot_group_v;
  if (f.format_constraint->count()) cfg.format_constraint = f.format_constraint_v;
  if (f.reward_mode->count())
    cfg.division_reward_mode = f.reward_mode_v == "eq2"
                                   ? reward::DivisionRewardMode::eq2
                                   : reward::DivisionRewardMode::accuracy_variant;
  if (f.max_subproblems->count()) cfg.max_subproblems = f.max_subs_v;
  if (f.temperature->count()) {
    cfg.division_sampling.temperature = f.temperature_v;
    cfg.conquering_sampling.temperature = f.temperature_v;
    cfg.cot_sampling.temperature = f.temperature_v;
  }
  if (f.top_p->count()) {
    cfg.division_sampling.top_p = f.top_p_v;
    cfg.conquering_sampling.top_p = f.top_p_v;
    cfg.cot_sampling.top_p = f.top_p_v;
  }
  if (file) file->reject_unknown_keys();
  cfg.validate();
  return cfg;
}

corpus::Corpus load_corpus_or_die(const CommonArgs& args) {
  if (args.corpus_path.empty()) throw std::runtime_error("--corpus is required");
  corpus::CorpusFormat format = corpus::CorpusFormat::jsonl;
  if (args.corpus_format == "csv" ||
      (args.corpus_format.empty() && fs::path(args.corpus_path).extension() == ".csv"))
    format = corpus::CorpusFormat::csv;
  auto result = corpus::load_corpus(args.corpus_path, format);
  ordered_json report;
  report["event"] = "corpus_load";
  report["path"] = args.corpus_path;
  report["total"] = result.report.total;
  report["loaded"] = result.report.loaded;
  report["skipped"] = result.report.skipped;
  report["messages"] = result.report.messages;
  std::cerr << report.dump() << "\n";
  return std::move(result.corpus);
}

std::vector<double> parse_double_list(const std::string& csv, const char* what) {
  std::vector<double> out;
  for (const auto& part : split(csv, ',')) {
    try {
      out.push_back(std::stod(trim(part)));
    } catch (const std::exception&) {
      throw std::runtime_error(std::string("cannot parse ") + what + ": " + part);
    }
  }
  return out;
}

std::unique_ptr<policy::Backend> build_backend(const CommonArgs& args,
                                               const corpus::Corpus& corpus) {
  if (args.backend == "mock") {
    if (!args.mock_constant.empty())
      return std::make_unique<policy::MockBackend>(args.mock_constant);
    if (args.mock_script.empty())
      throw std::runtime_error("mock backend requires --mock-script or --mock-constant");
    std::vector<policy::MockBackend::Scripted> script;
    for (const auto& line : split(slurp_file(args.mock_script), '\n')) {
      if (trim_view(line).empty()) continue;
      auto j = nlohmann::json::parse(line);
      policy::MockBackend::Scripted item;
      item.text = j.at("text").get<std::string>();
      item.truncated = j.value("truncated", false);
      script.push_back(std::move(item));
    }
    return std::make_unique<policy::MockBackend>(std::move(script));
  }
  if (args.backend == "synthetic") {
    policy::SyntheticBackendOptions opts;
    auto g = parse_double_list(args.syn_g, "--syn-g");
    opts.model = policy::SyntheticPolicyParams{static_cast<int>(g.size()) - 1, args.syn_p_sub,
                                               std::move(g), {}};
    opts.invalid_format_rate = args.syn_invalid_rate;
    opts.undersized_rate = args.syn_undersized_rate;
    opts.truncation_rate = args.syn_truncation_rate;
    opts.cot_success_rate = args.syn_cot_rate;
    return std::make_unique<policy::SyntheticBackend>(corpus, std::move(opts));
  }
  return std::make_unique<policy::RemoteBackend>(policy::RemoteConfig::from_env());
}

prompts::PromptLibrary load_prompts(const CommonArgs& args) {
  fs::path dir = args.assets.empty() ? prompts::default_asset_dir() : fs::path(args.assets);
  return prompts::PromptLibrary::load(dir);
}

manifest::RunManifest start_manifest(const std::string& command, const CommonArgs& args) {
  manifest::RunManifest m;
  m.command = command;
  m.seed = args.seed;
  m.corpus_path = args.corpus_path;
  m.started_at = iso8601_utc_now();
  return m;
}

// ============================================================================
// divide
// ============================================================================

int run_divide(const CommonArgs& args, const IterationFlags& flags) {
  auto cfg = build_config(args, flags, false);
  auto corpus = load_corpus_or_die(args);
  auto lib = load_prompts(args);
  auto backend = build_backend(args, corpus);
  fs::create_directories(args.out_dir);

  auto manifest = start_manifest("divide", args);
  manifest.backend = backend->descriptor();
  manifest.config = engine::to_json(cfg);

  std::vector<std::string> slots(corpus.problems.size());
  size_t valid_groups = 0;
  parallel_for(corpus.problems.size(), args.parallel, [&](size_t i) {
    const auto& problem = corpus.problems[i];
    std::string prompt = prompts::render_division_prompt(lib.division, problem);
    policy::GenerationRequest req;
    req.prompt = prompt;
    req.n = cfg.g_d;
    req.temperature = cfg.division_sampling.temperature;
    req.top_p = cfg.division_sampling.top_p;
    req.max_tokens = cfg.max_tokens;
    req.seed = seed_for(args.seed, problem.id, "division:t=0");
    auto completions = backend->generate(req);
    std::string lines;
    for (size_t g = 0; g < completions.size(); ++g) {
      auto group = parse::parse_subproblems(completions[g].text, cfg.max_subproblems);
      ordered_json j;
      j["problem_id"] = problem.id;
      j["group_index"] = g;
      j["format_valid"] = group.format_valid;
      j["n_subproblems"] = group.subproblems.size();
      j["subproblems"] = group.subproblems;
      j["truncated"] = completions[g].truncated;
      lines += j.dump();
      lines += '\n';
    }
    slots[i] = std::move(lines);
  });

  std::string out;
  for (const auto& s : slots) out += s;
  for (const auto& line : split(out, '\n')) {
    if (line.find("\"format_valid\":true") != std::string::npos) ++valid_groups;
  }
  fs::path dump_path = fs::path(args.out_dir) / "divisions.jsonl";
  write_file_atomic(dump_path, out);

  manifest.outputs = {dump_path.string()};
  manifest.summary["problems"] = corpus.problems.size();
  manifest.summary["groups"] = corpus.problems.size() * static_cast<size_t>(cfg.g_d);
  manifest.summary["valid_groups"] = valid_groups;
  manifest.finished_at = iso8601_utc_now();
  manifest.write_atomic(fs::path(args.out_dir) / "manifest.json");
  return 0;
}

// ============================================================================
// iterate
// ============================================================================

int run_iterate(const CommonArgs& args, const IterationFlags& flags, int steps) {
  auto cfg = build_config(args, flags, false);
  auto corpus = load_corpus_or_die(args);
  auto lib = load_prompts(args);
  auto backend = build_backend(args, corpus);
  fs::create_directories(args.out_dir);

  auto manifest = start_manifest("iterate", args);
  manifest.backend = backend->descriptor();
  manifest.config = engine::to_json(cfg);

  std::string metrics_log;
  int completed_steps = 0;
  std::optional<std::string> abort_error;
  for (int t = 0; t < steps; ++t) {
    engine::RunOptions run{args.seed, args.parallel, t};
    auto batch = engine::sample_batch(corpus, cfg.batch_size, args.seed, t);
    engine::ExperienceBatch result;
    try {
      result = cfg.t_acc ? engine::run_mix_iteration(batch, cfg, *backend, lib, run)
                         : engine::run_dac_iteration(batch, cfg, *backend, lib, run);
    } catch (const engine::IterationAborted& e) {
      abort_error = e.what();
      break;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "step_%04d.jsonl", t + 1);
    fs::path export_path = fs::path(args.out_dir) / name;
    engine::export_batch(result, export_path);
    manifest.outputs.push_back(export_path.string());

    ordered_json line;
    line["step"] = t + 1;
    line["records"] = result.records.size();
    line["mean_response_tokens"] = result.metrics.mean_response_tokens;
    line["clip_ratio"] = result.metrics.clip_ratio;
    line["export"] = export_path.string();
    metrics_log += line.dump();
    metrics_log += '\n';
    std::cout << line.dump() << "\n";
    ++completed_steps;
  }

  fs::path metrics_path = fs::path(args.out_dir) / "metrics.jsonl";
  if (!metrics_log.empty()) {
    write_file_atomic(metrics_path, metrics_log);
    manifest.outputs.push_back(metrics_path.string());
  }
  manifest.summary["steps_requested"] = steps;
  manifest.summary["steps_completed"] = completed_steps;
  if (abort_error) manifest.summary["error"] = *abort_error;
  manifest.finished_at = iso8601_utc_now();
  manifest.write_atomic(fs::path(args.out_dir) / "manifest.json");
  if (abort_error) {
    std::cerr << "iteration aborted: " << *abort_error << "\n";
    return 1;
  }
  return 0;
}

// ============================================================================
// eval
// ============================================================================

int run_eval(const CommonArgs& args, const IterationFlags& flags, const std::string& mode,
             int n_samples, const std::string& k_csv, const std::string& plans_csv) {
  auto cfg = build_config(args, flags, false);
  // Inference defaults: long budget, nucleus 0.7, unless explicitly overridden.
  if (!flags.max_tokens->count()) cfg.max_tokens = 16384;
  eval::SweepOptions sweep_opts;
  sweep_opts.seed = args.seed;
  sweep_opts.parallelism = args.parallel;
  sweep_opts.max_tokens = cfg.max_tokens;
  sweep_opts.sampling = {flags.temperature->count() ? flags.temperature_v : 1.0,
                         flags.top_p->count() ? flags.top_p_v : 0.7};
  sweep_opts.max_subproblems = cfg.max_subproblems;

  auto corpus = load_corpus_or_die(args);
  auto lib = load_prompts(args);
  auto backend = build_backend(args, corpus);
  fs::create_directories(args.out_dir);

  auto manifest = start_manifest("eval", args);
  manifest.backend = backend->descriptor();
  manifest.config = engine::to_json(cfg);

  std::vector<eval::SweepRow> rows;
  if (!plans_csv.empty()) {
    std::vector<eval::AllocationPlan> plans;
    for (const auto& part : split(plans_csv, ',')) {
      std::string p = trim(part);
      if (p == "cot") {
        // Budget filled in below once the shared k is known.
        plans.push_back(eval::AllocationPlan{0, 0});
        continue;
      }
      size_t x = p.find('x');
      if (x == std::string::npos)
        throw std::runtime_error("bad plan (want NxM or cot): " + p);
      plans.push_back(eval::AllocationPlan{std::stoi(p.substr(0, x)),
                                           std::stoi(p.substr(x + 1))});
    }
    int k = 0;
    for (const auto& p : plans) {
      if (p.n_groups > 0) k = p.budget();
    }
    if (k == 0) throw std::runtime_error("plan list needs at least one NxM entry");
    for (auto& p : plans) {
      if (p.n_groups == 0) p.m_per_group = k;
    }
    rows = eval::run_allocation_sweep(corpus, *backend, lib, plans, sweep_opts);
  } else {
    if (n_samples < 1) throw std::runtime_error("--n must be >= 1");
    std::vector<int> k_list;
    for (const auto& part : split(k_csv, ',')) k_list.push_back(std::stoi(trim(part)));
    for (int k : k_list) {
      if (k < 1 || k > n_samples)
        throw std::runtime_error("each k must satisfy 1 <= k <= n_samples");
    }

    std::vector<int> correct_counts(corpus.problems.size(), 0);
    parallel_for(corpus.problems.size(), args.parallel, [&](size_t i) {
      const auto& problem = corpus.problems[i];
      auto generate = [&](const std::string& prompt, int n, const std::string& purpose) {
        policy::GenerationRequest req;
        req.prompt = prompt;
        req.n = n;
        req.temperature = sweep_opts.sampling.temperature;
        req.top_p = sweep_opts.sampling.top_p;
        req.max_tokens = sweep_opts.max_tokens;
        req.seed = seed_for(args.seed, problem.id, purpose);
        return backend->generate(req);
      };
      int correct = 0;
      if (mode == "cot") {
        for (const auto& c :
             generate(prompts::render_cot_prompt(lib.cot, problem), n_samples, "eval:cot"))
          correct += eval::completion_correct(c, problem) ? 1 : 0;
      } else {
        int groups_needed = (n_samples + cfg.g_c - 1) / cfg.g_c;
        auto divisions = generate(prompts::render_division_prompt(lib.division, problem),
                                  groups_needed, "eval:dac:division");
        int remaining = n_samples;
        for (size_t g = 0; g < divisions.size() && remaining > 0; ++g) {
          int take = std::min(remaining, cfg.g_c);
          remaining -= take;
          auto group = parse::parse_subproblems(divisions[g].text, cfg.max_subproblems);
          if (!group.format_valid) continue;  // budget spent, all misses
          for (const auto& c :
               generate(prompts::render_conquering_prompt(lib.conquering, problem, group), take,
                        "eval:dac:conquer:g=" + std::to_string(g)))
            correct += eval::completion_correct(c, problem) ? 1 : 0;
        }
      }
      correct_counts[i] = correct;
    });

    double pass1 = 0.0;
    for (int c : correct_counts) pass1 += static_cast<double>(c) / n_samples;
    pass1 /= static_cast<double>(correct_counts.size());
    for (int k : k_list) {
      double passk = 0.0;
      for (int c : correct_counts) passk += eval::pass_at_k(n_samples, c, k);
      passk /= static_cast<double>(correct_counts.size());
      eval::SweepRow row;
      row.benchmark = corpus.name;
      row.plan = mode;
      row.pass_at_1 = pass1;
      row.pass_at_k = passk;
      row.n = n_samples;
      row.k = k;
      rows.push_back(row);
    }
  }

  std::cout << eval::format_table(rows);
  fs::path csv_path = fs::path(args.out_dir) / "eval.csv";
  write_file_atomic(csv_path, eval::to_csv(rows));
  manifest.outputs = {csv_path.string()};
  manifest.summary["rows"] = rows.size();
  manifest.finished_at = iso8601_utc_now();
  manifest.write_atomic(fs::path(args.out_dir) / "manifest.json");
  return 0;
}

// ============================================================================
// simulate-lemma
// ============================================================================

int run_simulate_lemma(const CommonArgs& args, int m, double p_sub, const std::string& g_csv,
                       uint64_t samples, int shards) {
  policy::SyntheticPolicyParams params;
  params.m = m;
  params.p_sub = p_sub;
  params.g_by_count = parse_double_list(g_csv, "--g");
  policy::validate_params(params);

  fs::create_directories(args.out_dir);
  auto manifest = start_manifest("simulate-lemma", args);
  manifest.backend = "synthetic-model";
  manifest.config["m"] = m;
  manifest.config["p_sub"] = p_sub;
  manifest.config["g"] = params.g_by_count;
  manifest.config["samples"] = samples;

  auto report = oracle::estimate_covariance(params, samples, args.seed, shards, args.parallel);
  std::string text = oracle::report_text(report);
  if (params.m <= 20) {
    auto exact = oracle::closed_form_covariance(params);
    text += "exact:";
    for (double v : exact) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), " %.6f", v);
      text += buf;
    }
    text += "\n";
  }
  std::cout << text;

  fs::path txt_path = fs::path(args.out_dir) / "lemma_report.txt";
  fs::path csv_path = fs::path(args.out_dir) / "lemma_report.csv";
  write_file_atomic(txt_path, text);
  write_file_atomic(csv_path, oracle::report_csv(report));
  manifest.outputs = {txt_path.string(), csv_path.string()};
  manifest.summary["samples"] = report.samples;
  manifest.finished_at = iso8601_utc_now();
  manifest.write_atomic(fs::path(args.out_dir) / "manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dacforge: divide-and-conquer rollout, reward and evaluation engine"};
  app.require_subcommand(1);

  CommonArgs args;

  auto* divide = app.add_subcommand("divide", "sample and dump subproblem groups");
  IterationFlags divide_flags;
  add_common_flags(divide, args);
  add_iteration_flags(divide, divide_flags);

  auto* iterate = app.add_subcommand("iterate", "run training iterations, export experience");
  IterationFlags iterate_flags;
  int steps = 1;
  add_common_flags(iterate, args);
  add_iteration_flags(iterate, iterate_flags);
  iterate->add_option("--steps", steps, "number of iterations")->check(CLI::PositiveNumber);

  auto* eval_cmd = app.add_subcommand("eval", "Pass@1 / Pass@k evaluation");
  IterationFlags eval_flags;
  std::string mode = "cot", k_csv = "1", plans_csv;
  int n_samples = 32;
  add_common_flags(eval_cmd, args);
  add_iteration_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--mode", mode, "cot | dac")->check(CLI::IsMember({"cot", "dac"}));
  eval_cmd->add_option("--n", n_samples, "samples per problem");
  eval_cmd->add_option("--k", k_csv, "comma-separated k values");
  eval_cmd->add_option("--plans", plans_csv,
                       "allocation sweep plans, e.g. 1x16,4x4,16x1,cot (overrides --mode)");

  auto* lemma = app.add_subcommand("simulate-lemma", "synthetic-model covariance report");
  int m = 1, shards = 1;
  double p_sub = 0.5;
  std::string g_csv = "0.1,0.9";
  uint64_t samples = 100000;
  add_common_flags(lemma, args);
  lemma->add_option("--m", m, "number of subproblems");
  lemma->add_option("--p-sub", p_sub, "per-subproblem success probability");
  lemma->add_option("--g", g_csv, "success table over #correct, comma separated");
  lemma->add_option("--samples", samples, "Monte Carlo sample count");
  lemma->add_option("--shards", shards, "sampling shards")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (divide->parsed()) return run_divide(args, divide_flags);
    if (iterate->parsed()) return run_iterate(args, iterate_flags, steps);
    if (eval_cmd->parsed())
      return run_eval(args, eval_flags, mode, n_samples, k_csv, plans_csv);
    if (lemma->parsed()) return run_simulate_lemma(args, m, p_sub, g_csv, samples, shards);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
