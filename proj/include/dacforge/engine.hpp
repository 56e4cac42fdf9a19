#pragma once

/**
 * The divide-and-conquer rollout engine.
 *
 * One iteration: every problem in the batch is divided into G_d subproblem
 * groups; each format-valid group is conquered G_c times; conquering rewards
 * are the final-answer indicators; division rewards combine format, quantity
 * and helpfulness against sibling groups; everything lands in the experience
 * buffer and leaves as a trainer-ready batch with group-normalized advantages.
 * Parameter updates are out of scope — the exported JSONL file is the trainer
 * boundary.
 *
 * Determinism: request seeds derive from (run seed, problem id, purpose), so a
 * batch serializes byte-identically across reruns and thread counts.
 */

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dacforge/common.hpp"
#include "dacforge/corpus.hpp"
#include "dacforge/parse.hpp"
#include "dacforge/policy.hpp"
#include "dacforge/prompts.hpp"
#include "dacforge/reward.hpp"

namespace dacforge::engine {

// ============================================================================
// Records and configuration
// ============================================================================

enum class RolloutKind { division, conquering, cot };

inline std::string_view to_string(RolloutKind k) {
  switch (k) {
    case RolloutKind::division: return "division";
    case RolloutKind::conquering: return "conquering";
    case RolloutKind::cot: return "cot";
  }
  return "?";
}

/// Identifies one GRPO normalization group: the G_d division samples of a
/// problem, the G_c conquers of one group, or the CoT samples of a problem.
struct GroupKey {
  std::string problem_id;
  RolloutKind kind = RolloutKind::division;
  std::optional<int> group_index;

  auto operator<=>(const GroupKey&) const = default;
};

struct RolloutRecord {
  std::string problem_id;
  RolloutKind kind = RolloutKind::division;
  std::optional<int> group_index;  // conquering records only
  int sample_index = 0;
  std::string prompt;
  std::string response;
  double reward = 0.0;
  bool truncated = false;
  std::optional<std::vector<double>> token_logprobs;
  int token_count = 0;

  GroupKey group_key() const { return GroupKey{problem_id, kind, group_index}; }
};

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;
};

struct IterationConfig {
  int g_d = 4;   // division samples per problem
  int g_c = 8;   // conquering samples per group
  int n_s = 3;   // minimum subproblem count
  int batch_size = 256;
  int max_tokens = 8192;
  double eps_low = 0.2;
  double eps_high = 0.28;
  std::optional<double> t_acc;  // Mix routing threshold; unset = plain DAC
  int cot_group_size = 8;
  bool format_constraint = false;
  reward::DivisionRewardMode division_reward_mode = reward::DivisionRewardMode::eq2;
  int max_subproblems = parse::kDefaultMaxSubproblems;
  SamplingParams division_sampling;
  SamplingParams conquering_sampling;
  SamplingParams cot_sampling;
  std::optional<std::string> system_prompt;

  void validate() const {
    if (g_d < 1) throw std::invalid_argument("config: g_d must be >= 1");
    if (g_c < 1) throw std::invalid_argument("config: g_c must be >= 1");
    if (n_s < 1) throw std::invalid_argument("config: n_s must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (max_tokens < 1) throw std::invalid_argument("config: max_tokens must be >= 1");
    if (!(eps_low > 0.0) || eps_high < eps_low)
      throw std::invalid_argument("config: need eps_high >= eps_low > 0");
    if (t_acc && !(*t_acc >= 0.0 && *t_acc <= 1.0))
      throw std::invalid_argument("config: t_acc must be in [0, 1]");
    if (cot_group_size < 1) throw std::invalid_argument("config: cot_group_size must be >= 1");
    if (max_subproblems < 1) throw std::invalid_argument("config: max_subproblems must be >= 1");
  }
};

inline nlohmann::ordered_json to_json(const SamplingParams& s) {
  return {{"temperature", s.temperature}, {"top_p", s.top_p}};
}

inline nlohmann::ordered_json to_json(const IterationConfig& c) {
  nlohmann::ordered_json j;
  j["g_d"] = c.g_d;
  j["g_c"] = c.g_c;
  j["n_s"] = c.n_s;
  j["batch_size"] = c.batch_size;
  j["max_tokens"] = c.max_tokens;
  j["eps_low"] = c.eps_low;
  j["eps_high"] = c.eps_high;
  j["t_acc"] = c.t_acc ? nlohmann::ordered_json(*c.t_acc) : nlohmann::ordered_json(nullptr);
  j["cot_group_size"] = c.cot_group_size;
  j["format_constraint"] = c.format_constraint;
  j["division_reward_mode"] =
      c.division_reward_mode == reward::DivisionRewardMode::eq2 ? "eq2" : "accuracy_variant";
  j["max_subproblems"] = c.max_subproblems;
  j["division_sampling"] = to_json(c.division_sampling);
  j["conquering_sampling"] = to_json(c.conquering_sampling);
  j["cot_sampling"] = to_json(c.cot_sampling);
  j["system_prompt"] =
      c.system_prompt ? nlohmann::ordered_json(*c.system_prompt) : nlohmann::ordered_json(nullptr);
  return j;
}

struct BatchMetrics {
  double mean_response_tokens = 0.0;
  double clip_ratio = 0.0;  // exactly #truncated / #records
  std::optional<double> mean_entropy;
};

struct ExperienceRecord {
  RolloutRecord rollout;
  double advantage = 0.0;
};

struct ExperienceBatch {
  std::vector<ExperienceRecord> records;
  int iteration = 0;
  uint64_t seed = 0;
  IterationConfig config;
  BatchMetrics metrics;
};

struct RunOptions {
  uint64_t seed = 0;
  int parallelism = 1;
  int iteration = 0;
};

/// Thrown when the backend fails for good mid-iteration; nothing is exported.
class IterationAborted : public std::runtime_error {
 public:
  IterationAborted(const std::string& what, size_t completed, size_t total)
      : std::runtime_error(what + " (completed " + std::to_string(completed) + "/" +
                           std::to_string(total) + " problems; no batch exported)"),
        problems_completed(completed),
        problems_total(total) {}

  size_t problems_completed = 0;
  size_t problems_total = 0;
};

// ============================================================================
// GRPO advantages and the clipped surrogate
// ============================================================================

/// Group-normalized advantages: (r_i - mean) / population std. Zero-variance
/// groups (std < 1e-8) yield all-zero advantages rather than dividing by an
/// epsilon.
inline std::vector<double> grpo_advantages(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("grpo_advantages: empty reward group");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  double std_dev = std::sqrt(var);
  std::vector<double> advantages(rewards.size(), 0.0);
  if (std_dev < 1e-8) return advantages;
  for (size_t i = 0; i < rewards.size(); ++i)
    advantages[i] = (rewards[i] - mean) / std_dev;
  return advantages;
}

/// Token-level clipped surrogate, averaged over ALL tokens passed in (not a
/// per-sequence mean of means). k = exp(new - old); each token contributes
/// min(k*A, clip(k, 1-eps_low, 1+eps_high)*A). With beta > 0 the KL penalty
/// beta * (exp(ref-new) - (ref-new) - 1) is subtracted per token.
inline double surrogate_objective(std::span<const double> old_logprobs,
                                  std::span<const double> new_logprobs,
                                  std::span<const double> advantages, double eps_low,
                                  double eps_high, double beta = 0.0,
                                  std::span<const double> ref_logprobs = {}) {
  size_t n = old_logprobs.size();
  if (new_logprobs.size() != n || advantages.size() != n)
    throw std::invalid_argument("surrogate_objective: length mismatch");
  if (n == 0) throw std::invalid_argument("surrogate_objective: no tokens");
  if (!(eps_low > 0.0) || eps_high < eps_low)
    throw std::invalid_argument("surrogate_objective: need eps_high >= eps_low > 0");
  if (beta != 0.0 && ref_logprobs.size() != n)
    throw std::invalid_argument("surrogate_objective: beta > 0 requires reference logprobs");
  for (size_t i = 0; i < n; ++i) {
    if (old_logprobs[i] > 0.0 || new_logprobs[i] > 0.0)
      throw std::invalid_argument("surrogate_objective: logprobs must be <= 0");
  }
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double ratio = std::exp(new_logprobs[i] - old_logprobs[i]);
    double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high);
    double term = std::min(ratio * advantages[i], clipped * advantages[i]);
    if (beta != 0.0) {
      double log_ratio = ref_logprobs[i] - new_logprobs[i];
      term -= beta * (std::exp(log_ratio) - log_ratio - 1.0);
    }
    sum += term;
  }
  return sum / static_cast<double>(n);
}

/// Surrogate over a whole batch: each record's advantage is broadcast to its
/// tokens, old logprobs come from the recorded rollout, new logprobs from a
/// re-scoring pass. Intended for monitoring the objective between exports.
inline double batch_surrogate_objective(const ExperienceBatch& batch,
                                        const std::vector<std::vector<double>>& new_logprobs,
                                        double eps_low, double eps_high) {
  if (new_logprobs.size() != batch.records.size())
    throw std::invalid_argument("batch_surrogate_objective: record count mismatch");
  std::vector<double> old_flat, new_flat, adv_flat;
  for (size_t i = 0; i < batch.records.size(); ++i) {
    const auto& rec = batch.records[i];
    if (!rec.rollout.token_logprobs)
      throw std::invalid_argument("batch_surrogate_objective: record has no token logprobs");
    const auto& old_lp = *rec.rollout.token_logprobs;
    if (new_logprobs[i].size() != old_lp.size())
      throw std::invalid_argument("batch_surrogate_objective: token count mismatch");
    old_flat.insert(old_flat.end(), old_lp.begin(), old_lp.end());
    new_flat.insert(new_flat.end(), new_logprobs[i].begin(), new_logprobs[i].end());
    adv_flat.insert(adv_flat.end(), old_lp.size(), batch.records[i].advantage);
  }
  return surrogate_objective(old_flat, new_flat, adv_flat, eps_low, eps_high);
}

// ============================================================================
// Rollout
// ============================================================================

namespace detail {

inline std::string with_system_prompt(const IterationConfig& cfg, std::string prompt) {
  if (!cfg.system_prompt) return prompt;
  return *cfg.system_prompt + "\n\n" + prompt;
}

inline reward::ConquerOutcome score_completion(const policy::Completion& c,
                                               const corpus::Problem& problem,
                                               std::optional<int> coverage_n_g) {
  auto extracted = parse::extract_boxed_answer(c.text);
  reward::ConquerOutcome outcome;
  outcome.truncated = c.truncated;
  outcome.correct = !c.truncated && extracted.value && *extracted.value == problem.answer;
  if (coverage_n_g)
    outcome.coverage_ok = parse::check_subproblem_coverage(c.text, *coverage_n_g);
  return outcome;
}

inline RolloutRecord make_record(const corpus::Problem& problem, RolloutKind kind,
                                 std::optional<int> group_index, int sample_index,
                                 const std::string& prompt, const policy::Completion& c,
                                 double reward_value) {
  RolloutRecord rec;
  rec.problem_id = problem.id;
  rec.kind = kind;
  rec.group_index = group_index;
  rec.sample_index = sample_index;
  rec.prompt = prompt;
  rec.response = c.text;
  rec.reward = reward_value;
  rec.truncated = c.truncated;
  rec.token_logprobs = c.token_logprobs;
  rec.token_count = c.token_count;
  return rec;
}

/// Full DAC rollout of one problem: G_d divisions, conquering of every
/// format-valid group, reward assignment. Records come out in canonical order
/// (divisions by sample, then conquers by group then sample).
inline std::vector<RolloutRecord> roll_problem_dac(const corpus::Problem& problem,
                                                   const IterationConfig& cfg,
                                                   policy::Backend& backend,
                                                   const prompts::PromptLibrary& lib,
                                                   const RunOptions& run) {
  const std::string iter_tag = ":t=" + std::to_string(run.iteration);

  std::string division_prompt =
      with_system_prompt(cfg, prompts::render_division_prompt(lib.division, problem));
  policy::GenerationRequest div_req;
  div_req.prompt = division_prompt;
  div_req.n = cfg.g_d;
  div_req.temperature = cfg.division_sampling.temperature;
  div_req.top_p = cfg.division_sampling.top_p;
  div_req.max_tokens = cfg.max_tokens;
  div_req.seed = seed_for(run.seed, problem.id, "division" + iter_tag);
  auto divisions = backend.generate(div_req);
  if (static_cast<int>(divisions.size()) != cfg.g_d)
    throw std::runtime_error("backend returned wrong completion count for division");

  std::vector<parse::SubproblemGroup> groups;
  groups.reserve(divisions.size());
  for (const auto& d : divisions)
    groups.push_back(parse::parse_subproblems(d.text, cfg.max_subproblems));

  // Conquer each format-valid group; invalid groups get no conquering prompts.
  std::vector<std::vector<policy::Completion>> conquers(groups.size());
  std::vector<std::vector<reward::ConquerOutcome>> outcomes(groups.size());
  std::vector<std::string> conquer_prompts(groups.size());
  for (size_t g = 0; g < groups.size(); ++g) {
    if (!groups[g].format_valid) continue;
    conquer_prompts[g] =
        with_system_prompt(cfg, prompts::render_conquering_prompt(lib.conquering, problem, groups[g]));
    policy::GenerationRequest req;
    req.prompt = conquer_prompts[g];
    req.n = cfg.g_c;
    req.temperature = cfg.conquering_sampling.temperature;
    req.top_p = cfg.conquering_sampling.top_p;
    req.max_tokens = cfg.max_tokens;
    req.seed = seed_for(run.seed, problem.id, "conquer" + iter_tag + ":g=" + std::to_string(g));
    conquers[g] = backend.generate(req);
    if (static_cast<int>(conquers[g].size()) != cfg.g_c)
      throw std::runtime_error("backend returned wrong completion count for conquering");
    std::optional<int> coverage_n =
        cfg.format_constraint ? std::optional<int>(static_cast<int>(groups[g].subproblems.size()))
                              : std::nullopt;
    for (const auto& c : conquers[g])
      outcomes[g].push_back(score_completion(c, problem, coverage_n));
  }

  bool sibling_any_correct = false;
  for (const auto& group_outcomes : outcomes) {
    for (const auto& o : group_outcomes) {
      if (o.correct && !o.truncated) sibling_any_correct = true;
    }
  }

  std::vector<RolloutRecord> records;
  records.reserve(static_cast<size_t>(cfg.g_d) * (1 + static_cast<size_t>(cfg.g_c)));
  for (size_t g = 0; g < groups.size(); ++g) {
    reward::DivisionRewardInput input{groups[g], cfg.n_s, outcomes[g], sibling_any_correct};
    double r = cfg.division_reward_mode == reward::DivisionRewardMode::eq2
                   ? reward::division_reward(input)
                   : reward::division_reward_accuracy_variant(input);
    records.push_back(make_record(problem, RolloutKind::division, std::nullopt,
                                  static_cast<int>(g), division_prompt, divisions[g], r));
  }
  for (size_t g = 0; g < groups.size(); ++g) {
    if (!groups[g].format_valid) continue;
    for (size_t v = 0; v < conquers[g].size(); ++v) {
      double r = reward::conquer_reward(outcomes[g][v], cfg.format_constraint);
      records.push_back(make_record(problem, RolloutKind::conquering, static_cast<int>(g),
                                    static_cast<int>(v), conquer_prompts[g], conquers[g][v], r));
    }
  }
  return records;
}

/// CoT rollout of one problem (direct prompt, final-answer reward).
inline std::vector<RolloutRecord> roll_problem_cot(const corpus::Problem& problem,
                                                   const IterationConfig& cfg,
                                                   policy::Backend& backend,
                                                   const prompts::PromptLibrary& lib,
                                                   const RunOptions& run) {
  std::string prompt = with_system_prompt(cfg, prompts::render_cot_prompt(lib.cot, problem));
  policy::GenerationRequest req;
  req.prompt = prompt;
  req.n = cfg.cot_group_size;
  req.temperature = cfg.cot_sampling.temperature;
  req.top_p = cfg.cot_sampling.top_p;
  req.max_tokens = cfg.max_tokens;
  req.seed = seed_for(run.seed, problem.id, "cot:t=" + std::to_string(run.iteration));
  auto completions = backend.generate(req);
  if (static_cast<int>(completions.size()) != cfg.cot_group_size)
    throw std::runtime_error("backend returned wrong completion count for cot");

  std::vector<RolloutRecord> records;
  records.reserve(completions.size());
  for (size_t v = 0; v < completions.size(); ++v) {
    auto outcome = score_completion(completions[v], problem, std::nullopt);
    double r = reward::conquer_reward(outcome, false);
    records.push_back(make_record(problem, RolloutKind::cot, std::nullopt, static_cast<int>(v),
                                  prompt, completions[v], r));
  }
  return records;
}

inline void assign_advantages(std::vector<ExperienceRecord>& records) {
  std::map<GroupKey, std::vector<size_t>> groups;
  for (size_t i = 0; i < records.size(); ++i)
    groups[records[i].rollout.group_key()].push_back(i);
  for (const auto& [key, indices] : groups) {
    std::vector<double> rewards;
    rewards.reserve(indices.size());
    for (size_t i : indices) rewards.push_back(records[i].rollout.reward);
    auto advantages = grpo_advantages(rewards);
    for (size_t j = 0; j < indices.size(); ++j) records[indices[j]].advantage = advantages[j];
  }
}

inline BatchMetrics compute_metrics(const std::vector<ExperienceRecord>& records) {
  BatchMetrics m;
  if (records.empty()) return m;
  size_t truncated = 0;
  double tokens = 0.0;
  for (const auto& r : records) {
    if (r.rollout.truncated) ++truncated;
    tokens += static_cast<double>(r.rollout.token_count);
  }
  m.mean_response_tokens = tokens / static_cast<double>(records.size());
  m.clip_ratio = static_cast<double>(truncated) / static_cast<double>(records.size());
  return m;
}

/// Runs one per-problem rollout function across the batch with bounded
/// parallelism, keeping the final record order canonical (problem order, then
/// kind, group, sample — the order each rollout function already emits).
template <typename RollFn>
inline ExperienceBatch run_iteration(const std::vector<corpus::Problem>& problems,
                                     const IterationConfig& cfg, const RunOptions& run,
                                     RollFn&& roll) {
  cfg.validate();
  if (problems.empty()) throw std::invalid_argument("iteration: empty problem batch");

  std::vector<std::vector<RolloutRecord>> slots(problems.size());
  std::atomic<size_t> completed{0};
  try {
    parallel_for(problems.size(), run.parallelism, [&](size_t i) {
      slots[i] = roll(problems[i]);
      completed.fetch_add(1, std::memory_order_relaxed);
    });
  } catch (const std::exception& e) {
    throw IterationAborted(e.what(), completed.load(), problems.size());
  }

  ExperienceBatch batch;
  batch.iteration = run.iteration;
  batch.seed = run.seed;
  batch.config = cfg;
  for (auto& slot : slots) {
    for (auto& rec : slot) batch.records.push_back(ExperienceRecord{std::move(rec), 0.0});
  }
  assign_advantages(batch.records);
  batch.metrics = compute_metrics(batch.records);
  return batch;
}

}  // namespace detail

/// One full DAC iteration over a problem batch.
inline ExperienceBatch run_dac_iteration(const std::vector<corpus::Problem>& problems,
                                         const IterationConfig& cfg, policy::Backend& backend,
                                         const prompts::PromptLibrary& lib,
                                         const RunOptions& run) {
  return detail::run_iteration(problems, cfg, run, [&](const corpus::Problem& p) {
    return detail::roll_problem_dac(p, cfg, backend, lib, run);
  });
}

/// Mix iteration: every problem is first answered with cot_group_size CoT
/// rollouts; problems whose CoT accuracy is strictly below t_acc are rerolled
/// through the DAC pipeline and their CoT records replaced.
inline ExperienceBatch run_mix_iteration(const std::vector<corpus::Problem>& problems,
                                         const IterationConfig& cfg, policy::Backend& backend,
                                         const prompts::PromptLibrary& lib,
                                         const RunOptions& run) {
  if (!cfg.t_acc) throw std::invalid_argument("mix iteration requires t_acc");
  double threshold = *cfg.t_acc;
  return detail::run_iteration(problems, cfg, run, [&](const corpus::Problem& p) {
    auto cot_records = detail::roll_problem_cot(p, cfg, backend, lib, run);
    double correct = 0.0;
    for (const auto& r : cot_records) correct += r.reward;
    double accuracy = correct / static_cast<double>(cot_records.size());
    if (accuracy < threshold) return detail::roll_problem_dac(p, cfg, backend, lib, run);
    return cot_records;
  });
}

// ============================================================================
// Export
// ============================================================================

inline nlohmann::ordered_json to_json(const BatchMetrics& m) {
  nlohmann::ordered_json j;
  j["mean_response_tokens"] = m.mean_response_tokens;
  j["clip_ratio"] = m.clip_ratio;
  if (m.mean_entropy) j["mean_entropy"] = *m.mean_entropy;
  return j;
}

/// JSON Lines: one header line (config snapshot + seed), then one line per
/// record. Output is byte-stable for a seeded run.
inline std::string export_batch_string(const ExperienceBatch& batch) {
  if (batch.records.empty())
    throw std::invalid_argument("export: empty batch");
  std::string out;
  nlohmann::ordered_json header;
  header["format"] = "dacforge.experience.v1";
  header["iteration"] = batch.iteration;
  header["seed"] = batch.seed;
  header["config"] = to_json(batch.config);
  header["metrics"] = to_json(batch.metrics);
  header["records"] = batch.records.size();
  out += header.dump();
  out += '\n';
  for (const auto& er : batch.records) {
    const RolloutRecord& r = er.rollout;
    nlohmann::ordered_json j;
    j["iteration"] = batch.iteration;
    j["problem_id"] = r.problem_id;
    j["kind"] = std::string(to_string(r.kind));
    j["group_index"] =
        r.group_index ? nlohmann::ordered_json(*r.group_index) : nlohmann::ordered_json(nullptr);
    j["sample_index"] = r.sample_index;
    j["prompt"] = r.prompt;
    j["response"] = r.response;
    j["reward"] = r.reward;
    j["advantage"] = er.advantage;
    j["truncated"] = r.truncated;
    if (r.token_logprobs) j["token_logprobs"] = *r.token_logprobs;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void export_batch(const ExperienceBatch& batch, const std::filesystem::path& path) {
  std::string payload = export_batch_string(batch);  // nothing written on error
  write_file_atomic(path, payload);
}

// ============================================================================
// Batch sampling (stepping through a corpus)
// ============================================================================

/// Seeded mini-batch: a deterministic choice of batch_size problems for the
/// given step, in corpus order. Returns the whole corpus when it fits.
inline std::vector<corpus::Problem> sample_batch(const corpus::Corpus& corpus, int batch_size,
                                                 uint64_t seed, int step) {
  if (batch_size < 1) throw std::invalid_argument("sample_batch: batch_size must be >= 1");
  size_t n = corpus.problems.size();
  if (static_cast<size_t>(batch_size) >= n) return corpus.problems;
  Rng rng(seed_for(seed, corpus.name, "batch:t=" + std::to_string(step)));
  std::vector<size_t> indices(n);
  for (size_t i = 0; i < n; ++i) indices[i] = i;
  for (int k = 0; k < batch_size; ++k) {
    int j = rng.uniform_int(k, static_cast<int>(n) - 1);
    std::swap(indices[static_cast<size_t>(k)], indices[static_cast<size_t>(j)]);
  }
  indices.resize(static_cast<size_t>(batch_size));
  std::sort(indices.begin(), indices.end());
  std::vector<corpus::Problem> batch;
  batch.reserve(indices.size());
  for (size_t i : indices) batch.push_back(corpus.problems[i]);
  return batch;
}

}  // namespace dacforge::engine
