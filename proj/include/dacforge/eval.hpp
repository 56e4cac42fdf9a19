#pragma once

/**
 * Evaluation: averaged Pass@1, the unbiased Pass@k estimator, and the fixed
 * budget n x m allocation sweep (n subproblem groups, m conquers per group,
 * n*m = k, with a CoT baseline of k direct generations).
 */

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dacforge/common.hpp"
#include "dacforge/corpus.hpp"
#include "dacforge/engine.hpp"
#include "dacforge/parse.hpp"
#include "dacforge/policy.hpp"
#include "dacforge/prompts.hpp"

namespace dacforge::eval {

// ============================================================================
// Estimators
// ============================================================================

/// Unbiased Pass@k: 1 - C(n-c, k) / C(n, k), computed with the stable product
/// form prod_{i=n-c+1}^{n} (1 - k/i) so n in the thousands cannot overflow.
inline double pass_at_k(int n, int c, int k) {
  if (n < 1) throw std::invalid_argument("pass_at_k: n must be >= 1");
  if (c < 0 || c > n) throw std::invalid_argument("pass_at_k: need 0 <= c <= n");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: need 1 <= k <= n");
  if (n - c < k) return 1.0;  // cannot draw k samples that are all incorrect
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i)
    miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return std::clamp(1.0 - miss, 0.0, 1.0);
}

struct PassKEstimate {
  int n = 0;
  int c = 0;
  int k = 0;
  double value = 0.0;
};

inline PassKEstimate estimate_pass_at_k(int n, int c, int k) {
  return PassKEstimate{n, c, k, pass_at_k(n, c, k)};
}

/// Mean over problems of the per-problem mean correctness (Pass@1 averaged
/// over repeated runs).
inline double pass_at_1_avg(const std::vector<std::vector<bool>>& outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("pass_at_1_avg: no problems");
  double total = 0.0;
  for (const auto& per_problem : outcomes) {
    if (per_problem.empty())
      throw std::invalid_argument("pass_at_1_avg: problem with no outcomes");
    double correct = 0.0;
    for (bool b : per_problem) correct += b ? 1.0 : 0.0;
    total += correct / static_cast<double>(per_problem.size());
  }
  return total / static_cast<double>(outcomes.size());
}

// ============================================================================
// Allocation sweep
// ============================================================================

/// n_groups = 0 is the CoT baseline sentinel: m_per_group direct generations.
struct AllocationPlan {
  int n_groups = 1;
  int m_per_group = 1;

  int budget() const { return n_groups == 0 ? m_per_group : n_groups * m_per_group; }

  std::string label() const {
    if (n_groups == 0) return "cot";
    return std::to_string(n_groups) + "x" + std::to_string(m_per_group);
  }
};

inline void validate_plans(const std::vector<AllocationPlan>& plans) {
  if (plans.empty()) throw std::invalid_argument("allocation sweep: no plans");
  for (const auto& p : plans) {
    if (p.n_groups < 0 || p.m_per_group < 1)
      throw std::invalid_argument("allocation plan: need n_groups >= 0, m_per_group >= 1");
  }
  int k = plans.front().budget();
  for (const auto& p : plans) {
    if (p.budget() != k)
      throw std::invalid_argument("allocation sweep: all plans must share the same budget k");
  }
}

struct SweepRow {
  std::string benchmark;
  std::string plan;
  double pass_at_1 = 0.0;  // per-sample accuracy averaged over problems
  double pass_at_k = 0.0;  // fraction of problems with any correct sample
  int n = 0;               // samples drawn per problem
  int k = 0;               // budget
};

struct SweepOptions {
  uint64_t seed = 0;
  int parallelism = 1;
  int max_tokens = 16384;
  engine::SamplingParams sampling{1.0, 0.7};
  int max_subproblems = parse::kDefaultMaxSubproblems;
};

/// Final-answer check used by evaluation paths (truncated responses never
/// count as correct).
inline bool completion_correct(const policy::Completion& c, const corpus::Problem& problem) {
  if (c.truncated) return false;
  auto extracted = parse::extract_boxed_answer(c.text);
  return extracted.value && *extracted.value == problem.answer;
}

namespace detail {

/// Correct-count for one problem under one plan; a format-invalid division
/// still spends its m conquering samples (they count as misses).
inline int plan_correct_count(const corpus::Problem& problem, const AllocationPlan& plan,
                              policy::Backend& backend, const prompts::PromptLibrary& lib,
                              const SweepOptions& opts) {
  auto request = [&](const std::string& prompt, int n, const std::string& purpose) {
    policy::GenerationRequest req;
    req.prompt = prompt;
    req.n = n;
    req.temperature = opts.sampling.temperature;
    req.top_p = opts.sampling.top_p;
    req.max_tokens = opts.max_tokens;
    req.seed = seed_for(opts.seed, problem.id, purpose);
    return backend.generate(req);
  };

  const std::string tag = "sweep:" + plan.label();
  int correct = 0;
  if (plan.n_groups == 0) {
    auto completions =
        request(prompts::render_cot_prompt(lib.cot, problem), plan.m_per_group, tag + ":cot");
    for (const auto& c : completions) correct += completion_correct(c, problem) ? 1 : 0;
    return correct;
  }

  auto divisions = request(prompts::render_division_prompt(lib.division, problem),
                           plan.n_groups, tag + ":division");
  for (size_t g = 0; g < divisions.size(); ++g) {
    auto group = parse::parse_subproblems(divisions[g].text, opts.max_subproblems);
    if (!group.format_valid) continue;  // budget spent, no hits
    auto completions =
        request(prompts::render_conquering_prompt(lib.conquering, problem, group),
                plan.m_per_group, tag + ":conquer:g=" + std::to_string(g));
    for (const auto& c : completions) correct += completion_correct(c, problem) ? 1 : 0;
  }
  return correct;
}

}  // namespace detail

/// Solve rates per plan at a shared budget. Plans run over the same problems
/// with plan-scoped seeds.
inline std::vector<SweepRow> run_allocation_sweep(const corpus::Corpus& benchmark,
                                                  policy::Backend& backend,
                                                  const prompts::PromptLibrary& lib,
                                                  const std::vector<AllocationPlan>& plans,
                                                  const SweepOptions& opts) {
  validate_plans(plans);
  if (benchmark.problems.empty()) throw std::invalid_argument("allocation sweep: empty corpus");
  int k = plans.front().budget();

  std::vector<SweepRow> rows;
  for (const auto& plan : plans) {
    std::vector<int> correct_counts(benchmark.problems.size(), 0);
    parallel_for(benchmark.problems.size(), opts.parallelism, [&](size_t i) {
      correct_counts[i] =
          detail::plan_correct_count(benchmark.problems[i], plan, backend, lib, opts);
    });
    double sum_rate = 0.0, solved = 0.0;
    for (int c : correct_counts) {
      sum_rate += static_cast<double>(c) / static_cast<double>(k);
      solved += c > 0 ? 1.0 : 0.0;
    }
    SweepRow row;
    row.benchmark = benchmark.name;
    row.plan = plan.label();
    row.pass_at_1 = sum_rate / static_cast<double>(correct_counts.size());
    row.pass_at_k = solved / static_cast<double>(correct_counts.size());
    row.n = k;
    row.k = k;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ============================================================================
// Output formats
// ============================================================================

inline std::string format_table(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "benchmark" << std::setw(10) << "plan" << std::right
      << std::setw(10) << "pass@1" << std::setw(10) << "pass@k" << std::setw(8) << "n"
      << std::setw(8) << "k" << "\n";
  out << std::string(62, '-') << "\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(16) << r.benchmark << std::setw(10) << r.plan << std::right
        << std::setw(10) << std::fixed << std::setprecision(4) << r.pass_at_1 << std::setw(10)
        << r.pass_at_k << std::setw(8) << r.n << std::setw(8) << r.k << "\n";
  }
  return out.str();
}

inline std::string to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "benchmark,plan,pass_at_1,pass_at_k,n,k\n";
  for (const auto& r : rows) {
    out << r.benchmark << "," << r.plan << "," << std::setprecision(17) << r.pass_at_1 << ","
        << r.pass_at_k << "," << r.n << "," << r.k << "\n";
  }
  return out.str();
}

}  // namespace dacforge::eval
