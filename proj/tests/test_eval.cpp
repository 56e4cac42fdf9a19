#include <doctest.h>

#include <cmath>

#include <dacforge/eval.hpp>
#include <dacforge/policy.hpp>
#include <dacforge/prompts.hpp>

using namespace dacforge;

namespace {

/// Independent oracle: enumerate every k-subset of n samples (the first c are
/// the correct ones) and count subsets containing at least one correct sample.
double pass_at_k_enumerated(int n, int c, int k) {
  uint32_t correct_mask = (c == 0) ? 0u : ((1u << c) - 1u);
  uint64_t total = 0, hit = 0;
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != k) continue;
    ++total;
    if (mask & correct_mask) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

const prompts::PromptLibrary& library() {
  static prompts::PromptLibrary lib = prompts::PromptLibrary::load(prompts::default_asset_dir());
  return lib;
}

corpus::Corpus sweep_corpus(int n) {
  corpus::Corpus c;
  c.name = "sweepbench";
  for (int i = 0; i < n; ++i) {
    c.problems.push_back({"s" + std::to_string(i),
                          "Determine the quantity described in puzzle number " +
                              std::to_string(i) + " of the collection.",
                          std::to_string(1000 + i), "unit", {}});
  }
  return c;
}

}  // namespace

TEST_CASE("pass_at_k matches exhaustive enumeration") {
  CHECK(eval::pass_at_k(4, 1, 2) == doctest::Approx(0.5).epsilon(1e-12));
  for (int n = 1; n <= 10; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        CAPTURE(n);
        CAPTURE(c);
        CAPTURE(k);
        CHECK(std::abs(eval::pass_at_k(n, c, k) - pass_at_k_enumerated(n, c, k)) < 1e-12);
      }
    }
  }
}

TEST_CASE("pass_at_k extremes and errors") {
  CHECK(eval::pass_at_k(32, 32, 32) == 1.0);
  CHECK(eval::pass_at_k(32, 0, 32) == 0.0);
  for (int c = 0; c <= 32; ++c) CHECK(eval::pass_at_k(32, c, 32) == (c > 0 ? 1.0 : 0.0));
  CHECK(eval::pass_at_k(1024, 1, 1024) == 1.0);  // stable at sweep-scale budgets
  CHECK(eval::pass_at_k(1024, 0, 1024) == 0.0);

  CHECK_THROWS(eval::pass_at_k(4, 5, 2));   // c > n
  CHECK_THROWS(eval::pass_at_k(4, 1, 5));   // k > n
  CHECK_THROWS(eval::pass_at_k(4, -1, 2));
  CHECK_THROWS(eval::pass_at_k(4, 1, 0));
  CHECK_THROWS(eval::pass_at_k(0, 0, 1));
}

TEST_CASE("pass_at_k monotonicity") {
  for (int n = 2; n <= 12; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 2; k <= n; ++k) {
        CHECK(eval::pass_at_k(n, c, k) >= eval::pass_at_k(n, c, k - 1));  // more budget helps
      }
      if (c > 0)
        for (int k = 1; k <= n; ++k)
          CHECK(eval::pass_at_k(n, c, k) >= eval::pass_at_k(n, c - 1, k));
    }
  }
  // Fixed c, growing n dilutes the correct samples.
  for (int n = 3; n <= 12; ++n)
    for (int c = 0; c <= 2; ++c) CHECK(eval::pass_at_k(n, c, 2) <= eval::pass_at_k(n - 1, c, 2));
}

TEST_CASE("pass_at_1_avg") {
  CHECK(eval::pass_at_1_avg({{true, false}, {true, true}}) == doctest::Approx(0.75));
  CHECK(eval::pass_at_1_avg({{false, false}, {false}}) == 0.0);
  std::vector<bool> half(32, false);
  for (int i = 0; i < 16; ++i) half[i] = true;
  CHECK(eval::pass_at_1_avg({half}) == doctest::Approx(0.5));
  CHECK_THROWS(eval::pass_at_1_avg({}));
  CHECK_THROWS(eval::pass_at_1_avg({{}}));

  SUBCASE("agrees with the estimator at k=1") {
    for (int n = 1; n <= 8; ++n) {
      for (int c = 0; c <= n; ++c) {
        CHECK(eval::pass_at_k(n, c, 1) ==
              doctest::Approx(static_cast<double>(c) / n).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("allocation plans") {
  CHECK(eval::AllocationPlan{4, 256}.budget() == 1024);
  CHECK(eval::AllocationPlan{4, 256}.label() == "4x256");
  CHECK(eval::AllocationPlan{0, 1024}.label() == "cot");
  CHECK(eval::AllocationPlan{0, 1024}.budget() == 1024);
  CHECK_THROWS(eval::validate_plans({}));
  CHECK_THROWS(eval::validate_plans({{1, 4}, {2, 3}}));  // unequal budgets
  CHECK_NOTHROW(eval::validate_plans({{1, 4}, {2, 2}, {4, 1}, {0, 4}}));
}

TEST_CASE("sweep bookkeeping at a shared budget") {
  auto corpus = sweep_corpus(3);
  eval::SweepOptions opts;
  opts.seed = 5;
  std::vector<eval::AllocationPlan> plans{{1, 4}, {2, 2}, {4, 1}, {0, 4}};

  SUBCASE("always-correct policy solves everything") {
    policy::SyntheticBackendOptions bopts;
    bopts.model = {3, 1.0, {1.0, 1.0, 1.0, 1.0}, {}};
    bopts.cot_success_rate = 1.0;
    policy::SyntheticBackend backend(corpus, bopts);
    auto rows = eval::run_allocation_sweep(corpus, backend, library(), plans, opts);
    REQUIRE(rows.size() == 4);
    for (const auto& row : rows) {
      CHECK(row.k == 4);
      CHECK(row.n == 4);
      CHECK(row.pass_at_1 == 1.0);
      CHECK(row.pass_at_k == 1.0);
    }
    CHECK(rows[0].plan == "1x4");
    CHECK(rows[3].plan == "cot");
  }

  SUBCASE("always-wrong policy solves nothing") {
    policy::SyntheticBackendOptions bopts;
    bopts.model = {3, 0.0, {0.0, 0.0, 0.0, 0.0}, {}};
    bopts.cot_success_rate = 0.0;
    policy::SyntheticBackend backend(corpus, bopts);
    auto rows = eval::run_allocation_sweep(corpus, backend, library(), plans, opts);
    for (const auto& row : rows) {
      CHECK(row.pass_at_1 == 0.0);
      CHECK(row.pass_at_k == 0.0);
    }
  }
}

TEST_CASE("sweep trend: group diversity raises the solve rate") {
  // Oracle: with a viable/non-viable group split, a plan with n groups of m
  // conquers solves a problem with probability
  //   1 - [rho (1-q_v)^m + (1-rho) (1-q_nv)^m]^n
  // where q_v / q_nv are the per-conquer success probabilities given group
  // quality (binomial mixture over subproblem outcomes through g).
  policy::SyntheticBackendOptions bopts;
  bopts.min_subproblems = 3;
  bopts.max_subproblems = 3;  // fixed group size keeps the closed form exact
  bopts.model = {3, 0.6, {0.05, 0.15, 0.55, 0.9}, {}};
  bopts.viability = policy::GroupViability{0.5, 0.7, 0.05};

  auto per_conquer_success = [&](double p) {
    const auto& g = bopts.model.g_by_count;
    double q = 0.0;
    for (int j = 0; j <= 3; ++j) {
      double binom = (j == 0 || j == 3) ? 1.0 : 3.0;
      q += binom * std::pow(p, j) * std::pow(1.0 - p, 3 - j) * g[static_cast<size_t>(j)];
    }
    return q;
  };
  double q_v = per_conquer_success(bopts.viability->p_sub_viable);
  double q_nv = per_conquer_success(bopts.viability->p_sub_nonviable);
  auto solve_prob = [&](int n, int m) {
    double rho = bopts.viability->viable_rate;
    double group_miss = rho * std::pow(1.0 - q_v, m) + (1.0 - rho) * std::pow(1.0 - q_nv, m);
    return 1.0 - std::pow(group_miss, n);
  };

  auto corpus = sweep_corpus(400);
  policy::SyntheticBackend backend(corpus, bopts);
  eval::SweepOptions opts;
  opts.seed = 2024;
  opts.parallelism = 4;
  std::vector<eval::AllocationPlan> plans{{1, 4}, {2, 2}, {4, 1}};
  auto rows = eval::run_allocation_sweep(corpus, backend, library(), plans, opts);

  REQUIRE(rows.size() == 3);
  for (size_t i = 0; i < rows.size(); ++i) {
    double expected = solve_prob(plans[i].n_groups, plans[i].m_per_group);
    double se = std::sqrt(expected * (1.0 - expected) / 400.0);
    CAPTURE(rows[i].plan);
    CHECK(std::abs(rows[i].pass_at_k - expected) < 4.0 * se);
  }
  CHECK(rows[0].pass_at_k < rows[1].pass_at_k);
  CHECK(rows[1].pass_at_k < rows[2].pass_at_k);
}

TEST_CASE("output formats") {
  std::vector<eval::SweepRow> rows{{"bench", "2x2", 0.25, 0.5, 4, 4}};
  auto csv = eval::to_csv(rows);
  CHECK(csv.find("benchmark,plan,pass_at_1,pass_at_k,n,k\n") == 0);
  CHECK(csv.find("bench,2x2,0.25,0.5,4,4\n") != std::string::npos);
  auto table = eval::format_table(rows);
  CHECK(table.find("bench") != std::string::npos);
  CHECK(table.find("2x2") != std::string::npos);
}
