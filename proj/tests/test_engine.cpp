#include <doctest.h>

#include <cmath>
#include <numeric>

#include <json.hpp>

#include <dacforge/engine.hpp>
#include <dacforge/policy.hpp>
#include <dacforge/prompts.hpp>

using namespace dacforge;
using Scripted = policy::MockBackend::Scripted;

namespace {

const prompts::PromptLibrary& library() {
  static prompts::PromptLibrary lib = prompts::PromptLibrary::load(prompts::default_asset_dir());
  return lib;
}

corpus::Problem answer55() {
  return corpus::Problem{"p55", "Compute the sum of the first ten positive integers.", "55",
                         "unit", {}};
}

std::string valid_division(int n_subs) {
  std::string out;
  for (int i = 1; i <= n_subs; ++i) {
    if (i > 1) out += "\n\n";
    out += "<SUBPROBLEM " + std::to_string(i) + ">\nStep " + std::to_string(i) +
           " of the plan.\n</SUBPROBLEM " + std::to_string(i) + ">";
  }
  return out;
}

corpus::Corpus numbered_corpus(int n) {
  corpus::Corpus c;
  c.name = "numbered";
  for (int i = 0; i < n; ++i) {
    c.problems.push_back({"q" + std::to_string(i),
                          "Find the value described in puzzle number " + std::to_string(i) + ".",
                          std::to_string(100 + i), "unit", {}});
  }
  return c;
}

}  // namespace

TEST_CASE("grpo_advantages") {
  SUBCASE("binary rewards normalize to unit scale") {
    std::vector<double> rewards{1, 0, 0, 1};  // mean 0.5, population std 0.5
    auto adv = engine::grpo_advantages(rewards);
    REQUIRE(adv.size() == 4);
    CHECK(adv[0] == doctest::Approx(1.0));
    CHECK(adv[1] == doctest::Approx(-1.0));
    CHECK(adv[2] == doctest::Approx(-1.0));
    CHECK(adv[3] == doctest::Approx(1.0));
  }

  SUBCASE("zero-variance groups contribute nothing") {
    std::vector<double> rewards{1, 1, 1};
    auto adv = engine::grpo_advantages(rewards);
    CHECK(adv == std::vector<double>{0, 0, 0});
  }

  SUBCASE("singleton group") {
    std::vector<double> rewards{1};
    CHECK(engine::grpo_advantages(rewards) == std::vector<double>{0});
  }

  SUBCASE("empty group is an error") {
    CHECK_THROWS(engine::grpo_advantages(std::vector<double>{}));
  }
}

TEST_CASE("surrogate_objective") {
  SUBCASE("identical policies give the mean advantage") {
    std::vector<double> lp{-0.5, -1.0, -2.0};
    std::vector<double> adv{1.0, -2.0, 0.5};
    double expected = (1.0 - 2.0 + 0.5) / 3.0;
    CHECK(engine::surrogate_objective(lp, lp, adv, 0.2, 0.28) == doctest::Approx(expected));
  }

  SUBCASE("positive advantage clipped from above") {
    // ratio 2.0 with A=+1: min(2.0, clip(2.0, 0.72, 1.28)) = 1.28
    std::vector<double> old_lp{-1.0};
    std::vector<double> new_lp{-1.0 + std::log(2.0)};
    std::vector<double> adv{1.0};
    CHECK(engine::surrogate_objective(old_lp, new_lp, adv, 0.2, 0.28) ==
          doctest::Approx(1.28).epsilon(1e-12));
  }

  SUBCASE("negative advantage takes the pessimistic branch") {
    // ratio 0.5 with A=-1: min(-0.5, clip(0.5, 0.8, 1.28) * -1) = -0.8
    std::vector<double> old_lp{-1.0};
    std::vector<double> new_lp{-1.0 + std::log(0.5)};
    std::vector<double> adv{-1.0};
    CHECK(engine::surrogate_objective(old_lp, new_lp, adv, 0.2, 0.28) ==
          doctest::Approx(-0.8).epsilon(1e-12));
  }

  SUBCASE("in-range ratios leave the objective unclipped") {
    Rng rng(31);
    std::vector<double> old_lp, new_lp, adv;
    double expected = 0.0;
    for (int i = 0; i < 40; ++i) {
      double base = -0.5 - 2.0 * rng.next_double();
      double ratio = 0.85 + 0.4 * rng.next_double();  // within [0.8, 1.28]
      double a = rng.next_double() * 4.0 - 2.0;
      old_lp.push_back(base);
      new_lp.push_back(base + std::log(ratio));
      adv.push_back(a);
      expected += std::exp(new_lp.back() - old_lp.back()) * a;
    }
    expected /= 40.0;
    CHECK(engine::surrogate_objective(old_lp, new_lp, adv, 0.2, 0.28) ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("errors") {
    std::vector<double> two{-1.0, -1.0}, one{-1.0};
    CHECK_THROWS(engine::surrogate_objective(two, one, two, 0.2, 0.28));
    CHECK_THROWS(engine::surrogate_objective({}, {}, {}, 0.2, 0.28));
    std::vector<double> pos{0.5};
    CHECK_THROWS(engine::surrogate_objective(pos, one, one, 0.2, 0.28));
    CHECK_THROWS(engine::surrogate_objective(one, one, one, 0.2, 0.1));  // eps_high < eps_low
    CHECK_THROWS(engine::surrogate_objective(one, one, one, 0.2, 0.28, 0.1));  // beta w/o ref
  }

  SUBCASE("kl penalty at beta > 0") {
    std::vector<double> lp{-1.0};
    std::vector<double> ref{-1.5};
    std::vector<double> adv{1.0};
    double log_ratio = ref[0] - lp[0];
    double expected = 1.0 - 0.5 * (std::exp(log_ratio) - log_ratio - 1.0);
    CHECK(engine::surrogate_objective(lp, lp, adv, 0.2, 0.28, 0.5, ref) ==
          doctest::Approx(expected));
  }
}

TEST_CASE("one problem, hand-checked rewards and advantages") {
  // G_d=2 divisions (one valid, one unparsable), the valid group conquered
  // twice with one correct answer.
  policy::MockBackend mock(std::vector<Scripted>{
      {valid_division(3)},
      {"I would rather just solve it: the answer is 55."},
      {"Subproblem work... combining gives $\\boxed{55}$."},
      {"Subproblem work... combining gives $\\boxed{54}$."},
  });
  engine::IterationConfig cfg;
  cfg.g_d = 2;
  cfg.g_c = 2;
  cfg.n_s = 3;
  engine::RunOptions run{0, 1, 0};

  auto batch = engine::run_dac_iteration({answer55()}, cfg, mock, library(), run);

  REQUIRE(batch.records.size() == 4);
  const auto& r = batch.records;
  // Canonical order: divisions by sample index, then conquers by group/sample.
  CHECK(r[0].rollout.kind == engine::RolloutKind::division);
  CHECK(r[0].rollout.sample_index == 0);
  CHECK_FALSE(r[0].rollout.group_index.has_value());
  CHECK(r[1].rollout.kind == engine::RolloutKind::division);
  CHECK(r[1].rollout.sample_index == 1);
  CHECK(r[2].rollout.kind == engine::RolloutKind::conquering);
  CHECK(r[2].rollout.group_index == 0);
  CHECK(r[3].rollout.kind == engine::RolloutKind::conquering);
  CHECK(r[3].rollout.sample_index == 1);

  CHECK(r[0].rollout.reward == 1.0);  // valid, own accuracy 1/2
  CHECK(r[1].rollout.reward == 0.0);  // unparsable
  CHECK(r[2].rollout.reward == 1.0);
  CHECK(r[3].rollout.reward == 0.0);

  CHECK(r[0].advantage == doctest::Approx(1.0));
  CHECK(r[1].advantage == doctest::Approx(-1.0));
  CHECK(r[2].advantage == doctest::Approx(1.0));
  CHECK(r[3].advantage == doctest::Approx(-1.0));

  CHECK(batch.metrics.clip_ratio == 0.0);
  CHECK(batch.metrics.mean_response_tokens > 0.0);

  SUBCASE("export layout") {
    auto text = engine::export_batch_string(batch);
    auto lines = split(text, '\n');
    REQUIRE(lines.back().empty());  // trailing newline
    CHECK(lines.size() == 4 + 2);   // header + records + terminal empty piece

    auto header = nlohmann::json::parse(lines[0]);
    CHECK(header["records"] == 4);
    CHECK(header["config"]["g_d"] == 2);
    CHECK(header["seed"] == 0);

    auto rec = nlohmann::json::parse(lines[1]);
    CHECK(rec["kind"] == "division");
    CHECK(rec["group_index"].is_null());
    CHECK(rec["reward"] == 1.0);
    CHECK(rec["advantage"] == 1.0);
    auto conq = nlohmann::json::parse(lines[3]);
    CHECK(conq["kind"] == "conquering");
    CHECK(conq["group_index"] == 0);
  }
}

TEST_CASE("export of an empty batch is an error") {
  engine::ExperienceBatch batch;
  CHECK_THROWS(engine::export_batch_string(batch));
  CHECK_THROWS(engine::export_batch(batch, "/tmp/dacforge_should_not_exist.jsonl"));
  CHECK_FALSE(std::filesystem::exists("/tmp/dacforge_should_not_exist.jsonl"));
}

TEST_CASE("synthetic iteration obeys the counting law and determinism") {
  auto corpus = numbered_corpus(3);
  policy::SyntheticBackendOptions opts;
  opts.invalid_format_rate = 0.3;
  opts.undersized_rate = 0.2;
  opts.truncation_rate = 0.15;
  engine::IterationConfig cfg;
  cfg.g_d = 4;
  cfg.g_c = 8;
  cfg.n_s = 3;

  policy::SyntheticBackend backend(corpus, opts);
  engine::RunOptions serial{7, 1, 0};
  auto batch = engine::run_dac_iteration(corpus.problems, cfg, backend, library(), serial);

  SUBCASE("record counts per problem") {
    for (const auto& problem : corpus.problems) {
      int divisions = 0, conquers = 0, valid_groups = 0;
      for (const auto& er : batch.records) {
        if (er.rollout.problem_id != problem.id) continue;
        if (er.rollout.kind == engine::RolloutKind::division) {
          ++divisions;
          if (parse::parse_subproblems(er.rollout.response, cfg.max_subproblems).format_valid)
            ++valid_groups;
        } else {
          ++conquers;
        }
      }
      CHECK(divisions == cfg.g_d);
      CHECK(conquers == cfg.g_c * valid_groups);
    }
  }

  SUBCASE("advantage groups are mean-zero and unit-std") {
    std::map<engine::GroupKey, std::vector<const engine::ExperienceRecord*>> groups;
    for (const auto& er : batch.records) groups[er.rollout.group_key()].push_back(&er);
    for (const auto& [key, members] : groups) {
      double sum = 0.0, sum_sq = 0.0;
      bool all_same = true;
      for (const auto* er : members) {
        sum += er->advantage;
        sum_sq += er->advantage * er->advantage;
        if (er->rollout.reward != members.front()->rollout.reward) all_same = false;
      }
      CHECK(std::abs(sum) < 1e-9 * static_cast<double>(members.size()));
      if (all_same) {
        CHECK(sum_sq == 0.0);
      } else {
        double std_dev = std::sqrt(sum_sq / static_cast<double>(members.size()));
        CHECK(std::abs(std_dev - 1.0) < 1e-6);
      }
    }
  }

  SUBCASE("clip ratio is exact") {
    size_t truncated = 0;
    for (const auto& er : batch.records) truncated += er.rollout.truncated ? 1 : 0;
    CHECK(batch.metrics.clip_ratio ==
          static_cast<double>(truncated) / static_cast<double>(batch.records.size()));
  }

  SUBCASE("byte-identical across reruns and parallelism") {
    auto baseline = engine::export_batch_string(batch);
    for (int parallelism : {1, 4}) {
      engine::RunOptions run{7, parallelism, 0};
      auto again = engine::run_dac_iteration(corpus.problems, cfg, backend, library(), run);
      CHECK(engine::export_batch_string(again) == baseline);
    }
  }

  SUBCASE("different seed changes the batch") {
    engine::RunOptions other{8, 1, 0};
    auto again = engine::run_dac_iteration(corpus.problems, cfg, backend, library(), other);
    CHECK(engine::export_batch_string(again) != engine::export_batch_string(batch));
  }
}

TEST_CASE("mix routing boundary: exactly t_acc is kept as CoT") {
  // 8 CoT answers with exactly 2 correct: accuracy 0.25 == t_acc, strict "<"
  // keeps the problem on the CoT path. The script contains nothing beyond the
  // 8 CoT items, so any attempt to reroll through DAC would exhaust the mock.
  std::vector<Scripted> script;
  for (int i = 0; i < 8; ++i) {
    bool correct = i < 2;
    script.push_back({"Answer: $\\boxed{" + std::string(correct ? "55" : "54") + "}$."});
  }
  policy::MockBackend mock(script);
  engine::IterationConfig cfg;
  cfg.t_acc = 0.25;
  cfg.cot_group_size = 8;
  cfg.g_d = 2;
  cfg.g_c = 2;
  engine::RunOptions run{0, 1, 0};

  auto batch = engine::run_mix_iteration({answer55()}, cfg, mock, library(), run);
  REQUIRE(batch.records.size() == 8);
  for (const auto& er : batch.records) CHECK(er.rollout.kind == engine::RolloutKind::cot);
  double sum = 0.0;
  for (const auto& er : batch.records) sum += er.advantage;
  CHECK(std::abs(sum) < 1e-9);
}

TEST_CASE("mix routing below the threshold reruns through the DAC path") {
  std::vector<Scripted> script;
  for (int i = 0; i < 8; ++i) {
    bool correct = i < 1;  // 1/8 < 0.25
    script.push_back({"Answer: $\\boxed{" + std::string(correct ? "55" : "54") + "}$."});
  }
  script.push_back({valid_division(3)});
  script.push_back({valid_division(4)});
  for (int i = 0; i < 4; ++i) script.push_back({"combined: $\\boxed{54}$"});
  policy::MockBackend mock(script);
  engine::IterationConfig cfg;
  cfg.t_acc = 0.25;
  cfg.cot_group_size = 8;
  cfg.g_d = 2;
  cfg.g_c = 2;
  engine::RunOptions run{0, 1, 0};

  auto batch = engine::run_mix_iteration({answer55()}, cfg, mock, library(), run);
  REQUIRE(batch.records.size() == 6);  // CoT records replaced by 2 divisions + 4 conquers
  for (const auto& er : batch.records) CHECK(er.rollout.kind != engine::RolloutKind::cot);
}

TEST_CASE("backend failure aborts the iteration with a progress report") {
  policy::MockBackend mock(std::vector<Scripted>{{valid_division(3)}});  // not enough
  engine::IterationConfig cfg;
  cfg.g_d = 4;
  cfg.g_c = 2;
  engine::RunOptions run{0, 1, 0};
  try {
    engine::run_dac_iteration({answer55()}, cfg, mock, library(), run);
    FAIL("expected IterationAborted");
  } catch (const engine::IterationAborted& e) {
    CHECK(e.problems_completed == 0);
    CHECK(e.problems_total == 1);
    CHECK(std::string(e.what()).find("exhausted") != std::string::npos);
  }
}

TEST_CASE("batch surrogate broadcasts advantages over tokens") {
  policy::MockBackend mock(std::vector<Scripted>{
      {valid_division(3), false, std::vector<double>{-0.1, -0.2}},
      {"junk", false, std::vector<double>{-0.3}},
      {"a $\\boxed{55}$", false, std::vector<double>{-0.4, -0.5, -0.6}},
      {"b $\\boxed{54}$", false, std::vector<double>{-0.7}},
  });
  engine::IterationConfig cfg;
  cfg.g_d = 2;
  cfg.g_c = 2;
  cfg.n_s = 3;
  engine::RunOptions run{0, 1, 0};
  auto batch = engine::run_dac_iteration({answer55()}, cfg, mock, library(), run);
  REQUIRE(batch.records.size() == 4);

  std::vector<std::vector<double>> unchanged;
  double weighted = 0.0;
  size_t tokens = 0;
  for (const auto& er : batch.records) {
    unchanged.push_back(*er.rollout.token_logprobs);
    weighted += er.advantage * static_cast<double>(er.rollout.token_logprobs->size());
    tokens += er.rollout.token_logprobs->size();
  }
  double objective = engine::batch_surrogate_objective(batch, unchanged, 0.2, 0.28);
  CHECK(objective == doctest::Approx(weighted / static_cast<double>(tokens)));

  unchanged.back().pop_back();
  CHECK_THROWS(engine::batch_surrogate_objective(batch, unchanged, 0.2, 0.28));
}

TEST_CASE("system prompt override prefixes requests but not renders") {
  policy::MockBackend mock(std::vector<Scripted>{
      {valid_division(3)},
      {"combined: $\\boxed{54}$"},
  });
  engine::IterationConfig cfg;
  cfg.g_d = 1;
  cfg.g_c = 1;
  cfg.system_prompt = "You are a careful competition mathematician.";
  engine::RunOptions run{0, 1, 0};
  auto batch = engine::run_dac_iteration({answer55()}, cfg, mock, library(), run);
  REQUIRE(batch.records.size() == 2);
  for (const auto& er : batch.records) {
    CHECK(er.rollout.prompt.rfind("You are a careful competition mathematician.\n\n", 0) == 0);
  }
}

TEST_CASE("config validation") {
  engine::IterationConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto broken = [&](auto mutate) {
    engine::IterationConfig c;
    mutate(c);
    CHECK_THROWS(c.validate());
  };
  broken([](auto& c) { c.g_d = 0; });
  broken([](auto& c) { c.g_c = 0; });
  broken([](auto& c) { c.n_s = 0; });
  broken([](auto& c) { c.eps_low = 0.0; });
  broken([](auto& c) { c.eps_high = 0.1; });  // below eps_low
  broken([](auto& c) { c.t_acc = 1.5; });
  broken([](auto& c) { c.max_tokens = 0; });
}

TEST_CASE("sample_batch") {
  auto corpus = numbered_corpus(10);

  SUBCASE("whole corpus when it fits") {
    auto batch = engine::sample_batch(corpus, 16, 1, 0);
    CHECK(batch.size() == 10);
    CHECK(batch.front().id == "q0");
  }

  SUBCASE("subset is deterministic, ordered, distinct") {
    auto a = engine::sample_batch(corpus, 4, 1, 3);
    auto b = engine::sample_batch(corpus, 4, 1, 3);
    REQUIRE(a.size() == 4);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
    for (size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].id != a[i].id);
    auto later = engine::sample_batch(corpus, 4, 1, 4);
    bool differs = false;
    for (size_t i = 0; i < a.size(); ++i) differs |= a[i].id != later[i].id;
    CHECK(differs);
  }
}
