#pragma once

/**
 * Generation backends behind one interface:
 *
 *  - MockBackend: canned completions, consumed exactly once (scripted) or
 *    repeated forever (constant). For hand-built test scenarios.
 *  - SyntheticBackend: a seeded causal-model policy. Division responses carry
 *    well-formed subproblem tags; conquering responses sample per-subproblem
 *    correctness s_i ~ Bernoulli(p) and final correctness C ~ Bernoulli(g(Σs)),
 *    emitting the reference answer iff C. The whole pipeline (parsing, rewards,
 *    buffering, export) runs on it unmodified.
 *  - RemoteBackend (remote.hpp): OpenAI-compatible completions service.
 *
 * Completion content depends only on the request (notably its seed), never on
 * scheduling, so concurrent rollouts are reproducible.
 */

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dacforge/common.hpp"
#include "dacforge/corpus.hpp"
#include "dacforge/parse.hpp"

namespace dacforge::policy {

// ============================================================================
// Requests / completions
// ============================================================================

struct GenerationRequest {
  std::string prompt;
  int n = 1;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 1024;
  std::optional<uint64_t> seed;
};

struct Completion {
  std::string text;
  std::optional<std::vector<double>> token_logprobs;
  bool truncated = false;
  int token_count = 0;
};

inline void validate_request(const GenerationRequest& req) {
  if (req.n < 1) throw std::invalid_argument("generation request: n must be >= 1");
  if (!(req.top_p > 0.0 && req.top_p <= 1.0))
    throw std::invalid_argument("generation request: top_p must be in (0, 1]");
  if (req.max_tokens < 1)
    throw std::invalid_argument("generation request: max_tokens must be >= 1");
  if (req.temperature < 0.0)
    throw std::invalid_argument("generation request: temperature must be >= 0");
}

inline void validate_completion(const Completion& c) {
  if (c.token_logprobs) {
    if (static_cast<int>(c.token_logprobs->size()) != c.token_count)
      throw std::runtime_error("completion: token_logprobs length != token_count");
    for (double lp : *c.token_logprobs) {
      if (lp > 0.0) throw std::runtime_error("completion: token logprob > 0");
    }
  }
}

class Backend {
 public:
  virtual ~Backend() = default;

  /// Returns exactly request.n completions. Must tolerate concurrent calls.
  virtual std::vector<Completion> generate(const GenerationRequest& request) = 0;

  virtual std::string descriptor() const = 0;
};

// ============================================================================
// Mock backend
// ============================================================================

class MockBackend final : public Backend {
 public:
  struct Scripted {
    std::string text;
    bool truncated = false;
    std::optional<std::vector<double>> token_logprobs;

    Scripted(std::string t = "", bool trunc = false,
             std::optional<std::vector<double>> logprobs = std::nullopt)
        : text(std::move(t)), truncated(trunc), token_logprobs(std::move(logprobs)) {}
  };

  /// Script items are consumed exactly once, in order. Exhaustion is an error,
  /// never silent recycling.
  explicit MockBackend(std::vector<Scripted> script) : script_(std::move(script)) {}

  /// Always returns the same text, any number of times.
  explicit MockBackend(std::string constant_text) : constant_text_(std::move(constant_text)) {}

  std::vector<Completion> generate(const GenerationRequest& request) override {
    validate_request(request);
    std::vector<Completion> out;
    out.reserve(static_cast<size_t>(request.n));
    if (constant_text_) {
      for (int i = 0; i < request.n; ++i) out.push_back(make(*constant_text_, false, {}));
      return out;
    }
    std::lock_guard<std::mutex> lock(mu_);
    for (int i = 0; i < request.n; ++i) {
      if (cursor_ >= script_.size())
        throw std::runtime_error("mock backend: script exhausted after " +
                                 std::to_string(cursor_) + " completions");
      const Scripted& s = script_[cursor_++];
      out.push_back(make(s.text, s.truncated, s.token_logprobs));
    }
    return out;
  }

  std::string descriptor() const override {
    return constant_text_ ? "mock:constant"
                          : "mock:scripted(" + std::to_string(script_.size()) + ")";
  }

  size_t remaining() const { return script_.size() - cursor_; }

 private:
  static Completion make(std::string text, bool truncated,
                         std::optional<std::vector<double>> logprobs) {
    Completion c;
    c.truncated = truncated;
    c.token_count = logprobs ? static_cast<int>(logprobs->size()) : approx_token_count(text);
    c.text = std::move(text);
    c.token_logprobs = std::move(logprobs);
    validate_completion(c);
    return c;
  }

  std::vector<Scripted> script_;
  size_t cursor_ = 0;
  std::optional<std::string> constant_text_;
  std::mutex mu_;
};

// ============================================================================
// Synthetic causal-model policy
// ============================================================================

/// Parameters of the causal model s -> C: m independent subproblem outcomes
/// with success probability p_sub, and a success function g mapping the number
/// of correct subproblems to P(C=1). g must be nondecreasing. g_by_config,
/// when set, gives P(C=1 | s) per configuration bitmask for
/// coordinate-asymmetric studies and overrides g_by_count.
struct SyntheticPolicyParams {
  int m = 1;
  double p_sub = 0.5;
  std::vector<double> g_by_count;   // size m+1
  std::vector<double> g_by_config;  // optional, size 2^m
};

inline void validate_params(const SyntheticPolicyParams& p) {
  if (p.m < 1) throw std::invalid_argument("synthetic params: m must be >= 1");
  if (!(p.p_sub >= 0.0 && p.p_sub <= 1.0))
    throw std::invalid_argument("synthetic params: p_sub must be in [0, 1]");
  if (!p.g_by_config.empty()) {
    if (p.m > 20) throw std::invalid_argument("synthetic params: per-config g requires m <= 20");
    size_t want = size_t{1} << p.m;
    if (p.g_by_config.size() != want)
      throw std::invalid_argument("synthetic params: g_by_config must have 2^m entries");
    for (double v : p.g_by_config) {
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("synthetic params: g values must be in [0, 1]");
    }
    // Nondecreasing in each coordinate.
    for (size_t mask = 0; mask < want; ++mask) {
      for (int i = 0; i < p.m; ++i) {
        size_t bit = size_t{1} << i;
        if (!(mask & bit) && p.g_by_config[mask | bit] < p.g_by_config[mask])
          throw std::invalid_argument("synthetic params: g must be nondecreasing in s_" +
                                      std::to_string(i + 1));
      }
    }
  } else {
    if (p.g_by_count.size() != static_cast<size_t>(p.m) + 1)
      throw std::invalid_argument("synthetic params: g_by_count must have m+1 entries");
    for (size_t j = 0; j < p.g_by_count.size(); ++j) {
      double v = p.g_by_count[j];
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("synthetic params: g values must be in [0, 1]");
      if (j > 0 && v < p.g_by_count[j - 1])
        throw std::invalid_argument("synthetic params: g must be nondecreasing");
    }
  }
}

struct SyntheticRollout {
  std::vector<uint8_t> s;  // subproblem correctness indicators
  bool c = false;          // original-problem correctness
};

/// One draw from the causal model.
inline SyntheticRollout synthetic_rollout(const SyntheticPolicyParams& params, uint64_t seed) {
  validate_params(params);
  Rng rng(seed);
  SyntheticRollout roll;
  roll.s.resize(static_cast<size_t>(params.m));
  int correct = 0;
  size_t mask = 0;
  for (int i = 0; i < params.m; ++i) {
    bool hit = rng.bernoulli(params.p_sub);
    roll.s[static_cast<size_t>(i)] = hit ? 1 : 0;
    if (hit) {
      ++correct;
      mask |= size_t{1} << i;
    }
  }
  double g = params.g_by_config.empty() ? params.g_by_count[static_cast<size_t>(correct)]
                                        : params.g_by_config[mask];
  roll.c = rng.bernoulli(g);
  return roll;
}

/// Group-quality split used by allocation-sweep studies: a division sample is
/// "productive" with probability viable_rate, and its conquers then use the
/// corresponding per-subproblem success probability.
struct GroupViability {
  double viable_rate = 0.5;
  double p_sub_viable = 0.7;
  double p_sub_nonviable = 0.05;
};

struct SyntheticBackendOptions {
  SyntheticPolicyParams model{3, 0.6, {0.05, 0.15, 0.55, 0.9}, {}};
  int min_subproblems = 3;
  int max_subproblems = 5;
  double invalid_format_rate = 0.0;  // emit unparsable division responses
  double undersized_rate = 0.0;      // emit fewer than min_subproblems
  double truncation_rate = 0.0;      // clip responses before the boxed answer
  double cot_success_rate = 0.3;
  std::optional<GroupViability> viability;
};

class SyntheticBackend final : public Backend {
 public:
  SyntheticBackend(corpus::Corpus reference, SyntheticBackendOptions options)
      : corpus_(std::move(reference)), opts_(std::move(options)) {
    validate_params(opts_.model);
    if (opts_.min_subproblems < 1 || opts_.max_subproblems < opts_.min_subproblems)
      throw std::invalid_argument("synthetic backend: bad subproblem count range");
  }

  std::vector<Completion> generate(const GenerationRequest& request) override {
    validate_request(request);
    uint64_t base_seed = request.seed.value_or(fnv1a64(request.prompt));
    const corpus::Problem& problem = match_problem(request.prompt);
    Kind kind = classify(request.prompt);

    std::vector<Completion> out;
    out.reserve(static_cast<size_t>(request.n));
    for (int i = 0; i < request.n; ++i) {
      Rng rng(derive_seed(base_seed, static_cast<uint64_t>(i)));
      Draft draft;
      switch (kind) {
        case Kind::division:
          draft = division_text(rng);
          break;
        case Kind::conquering:
          draft = conquering_text(request.prompt, problem, rng);
          break;
        case Kind::cot:
          draft = cot_text(problem, rng);
          break;
      }
      out.push_back(finish(std::move(draft), rng));
    }
    return out;
  }

  std::string descriptor() const override { return "synthetic"; }

 private:
  enum class Kind { division, conquering, cot };

  struct Draft {
    std::string text;
    bool truncated = false;
  };

  static Kind classify(std::string_view prompt) {
    if (prompt.find("Your task is NOT to solve") != std::string_view::npos)
      return Kind::division;
    if (prompt.find("decomposition into subproblems") != std::string_view::npos)
      return Kind::conquering;
    return Kind::cot;
  }

  const corpus::Problem& match_problem(std::string_view prompt) const {
    const corpus::Problem* best = nullptr;
    for (const auto& p : corpus_.problems) {
      if (prompt.find(p.statement) == std::string_view::npos) continue;
      if (!best || p.statement.size() > best->statement.size()) best = &p;
    }
    if (!best)
      throw std::runtime_error("synthetic backend: prompt does not embed a known problem");
    return *best;
  }

  // Deterministic phrasing pool; slot 0 doubles as the viability marker that
  // the conquering side reads back out of the prompt.
  static std::string sub_text(size_t slot, bool viable) {
    static const char* kViableLead =
        "Translate the problem statement into a precise system of relations.";
    static const char* kPlainLead = "List the quantities that appear in the problem statement.";
    static const char* kBody[] = {
        "Introduce auxiliary variables that simplify the system.",
        "Reduce the system to equations in the auxiliary variables.",
        "Solve the reduced system for the auxiliary variables.",
        "Recover the original unknowns from the auxiliary values.",
        "Combine the recovered values to answer the original question.",
    };
    if (slot == 0) return viable ? kViableLead : kPlainLead;
    return kBody[(slot - 1) % (sizeof(kBody) / sizeof(kBody[0]))];
  }

  Draft division_text(Rng& rng) const {
    bool viable = opts_.viability ? rng.bernoulli(opts_.viability->viable_rate) : true;
    if (rng.bernoulli(opts_.invalid_format_rate)) {
      return {"<SUBPROBLEM 1>\n" + sub_text(0, viable) + "\nThe remaining steps are clear.",
              false};
    }
    int n_sub = rng.bernoulli(opts_.undersized_rate) && opts_.min_subproblems > 1
                    ? rng.uniform_int(1, opts_.min_subproblems - 1)
                    : rng.uniform_int(opts_.min_subproblems, opts_.max_subproblems);
    std::string out;
    for (int i = 0; i < n_sub; ++i) {
      if (i > 0) out += "\n\n";
      out += "<SUBPROBLEM " + std::to_string(i + 1) + ">\n" +
             sub_text(static_cast<size_t>(i), viable) + "\n</SUBPROBLEM " +
             std::to_string(i + 1) + ">";
    }
    return {std::move(out), false};
  }

  Draft conquering_text(std::string_view prompt, const corpus::Problem& problem,
                        Rng& rng) const {
    auto group = parse::parse_subproblems(prompt);
    int n_g = std::max<int>(1, static_cast<int>(group.subproblems.size()));
    double p = opts_.model.p_sub;
    if (opts_.viability) {
      bool viable = !group.subproblems.empty() &&
                    group.subproblems.front().find("Translate the problem statement") !=
                        std::string::npos;
      p = viable ? opts_.viability->p_sub_viable : opts_.viability->p_sub_nonviable;
    }
    int n_correct = 0;
    std::string body;
    for (int i = 1; i <= n_g; ++i) {
      bool hit = rng.bernoulli(p);
      if (hit) ++n_correct;
      body += "Subproblem " + std::to_string(i) + ": working through this step yields " +
              (hit ? "a consistent intermediate result.\n" : "a partial result.\n");
    }
    size_t g_idx = std::min(opts_.model.g_by_count.size() - 1, static_cast<size_t>(n_correct));
    bool final_correct = rng.bernoulli(opts_.model.g_by_count[g_idx]);
    if (rng.bernoulli(opts_.truncation_rate)) {
      return {body + "Combining the subproblem results, the original", true};
    }
    body += "Combining the subproblem results, the original problem evaluates to $\\boxed{" +
            (final_correct ? problem.answer : wrong_answer(problem.answer)) + "}$.";
    return {std::move(body), false};
  }

  Draft cot_text(const corpus::Problem& problem, Rng& rng) const {
    bool correct = rng.bernoulli(opts_.cot_success_rate);
    if (rng.bernoulli(opts_.truncation_rate)) {
      return {"Working step by step: simplify, substitute, and evaluate the", true};
    }
    return {"Working step by step: simplify, substitute, and evaluate. The final answer is "
            "$\\boxed{" +
                std::string(correct ? problem.answer : wrong_answer(problem.answer)) + "}$.",
            false};
  }

  static std::string wrong_answer(const std::string& answer) {
    return answer + "1";  // always a different integer
  }

  Completion finish(Draft draft, Rng& rng) const {
    Completion c;
    c.truncated = draft.truncated;
    c.token_count = approx_token_count(draft.text);
    std::vector<double> logprobs(static_cast<size_t>(c.token_count));
    for (double& lp : logprobs) lp = -0.05 - 2.45 * rng.next_double();
    c.token_logprobs = std::move(logprobs);
    c.text = std::move(draft.text);
    validate_completion(c);
    return c;
  }

  corpus::Corpus corpus_;
  SyntheticBackendOptions opts_;
};

}  // namespace dacforge::policy
