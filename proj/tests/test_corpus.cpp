#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <dacforge/corpus.hpp>

using namespace dacforge;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path path = fs::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("answer canonicalization") {
  auto canon = [](const char* s) { return corpus::canonicalize_answer(s); };

  SUBCASE("whitespace and leading zeros") {
    CHECK(canon(" 070 ").value() == "70");
    CHECK(canon("0").value() == "0");
    CHECK(canon("000").value() == "0");
    CHECK(canon("+55").value() == "55");
    CHECK(canon("-070").value() == "-70");
    CHECK(canon("-0").value() == "0");
  }

  SUBCASE("wrappers") {
    CHECK(canon("$55$").value() == "55");
    CHECK(canon("\\boxed{55}").value() == "55");
    CHECK(canon("\\text{55}").value() == "55");
    CHECK(canon("$\\boxed{\\text{ 55 }}$").value() == "55");
    CHECK(canon("1,234,567").value() == "1234567");
  }

  SUBCASE("non-integers rejected") {
    CHECK_FALSE(canon("49/6").has_value());
    CHECK_FALSE(canon("\\frac{49}{6}").has_value());
    CHECK_FALSE(canon("3.5").has_value());
    CHECK_FALSE(canon("").has_value());
    CHECK_FALSE(canon("  ").has_value());
    CHECK_FALSE(canon("x").has_value());
    CHECK_FALSE(canon("+").has_value());
    CHECK_FALSE(canon("\\boxed{55").has_value());  // unbalanced wrapper
  }

  SUBCASE("idempotence over assorted inputs") {
    const char* samples[] = {" 070 ", "$-12$", "\\boxed{999}", "0",     "-0",
                             "1,000", "+3",    "\\text{7}",    "42abc", "49/6"};
    for (const char* s : samples) {
      auto once = corpus::canonicalize_answer(s);
      if (!once) continue;
      auto twice = corpus::canonicalize_answer(*once);
      REQUIRE(twice.has_value());
      CHECK(*twice == *once);
    }
  }
}

TEST_CASE("jsonl loading") {
  SUBCASE("mixed valid and invalid records") {
    auto path = write_temp(
        "dacforge_corpus_mixed.jsonl",
        R"({"id":"a","problem":"What is 1+1?","answer":" 070 ","source":"t"})"
        "\n"
        R"({"id":"b","problem":"Fraction.","answer":"49/6","source":"t"})"
        "\n"
        R"({"id":"c","problem":"What is 2+2?","answer":"4","source":"t"})"
        "\n");
    auto result = corpus::load_corpus(path, corpus::CorpusFormat::jsonl);
    CHECK(result.corpus.problems.size() == 2);
    CHECK(result.report.total == 3);
    CHECK(result.report.skipped == 1);
    CHECK(result.corpus.problems[0].id == "a");
    CHECK(result.corpus.problems[0].answer == "70");
    CHECK(result.corpus.problems[1].id == "c");
  }

  SUBCASE("duplicate ids are skipped") {
    auto path = write_temp("dacforge_corpus_dup.jsonl",
                           R"({"id":"a","problem":"P one","answer":"1"})"
                           "\n"
                           R"({"id":"a","problem":"P two","answer":"2"})"
                           "\n");
    auto result = corpus::load_corpus(path, corpus::CorpusFormat::jsonl);
    CHECK(result.corpus.problems.size() == 1);
    CHECK(result.report.skipped == 1);
  }

  SUBCASE("missing id is assigned from line number") {
    auto path = write_temp("dacforge_corpus_noid.jsonl",
                           R"({"problem":"P","answer":"1"})"
                           "\n");
    auto result = corpus::load_corpus(path, corpus::CorpusFormat::jsonl);
    CHECK(result.corpus.problems[0].id == "p1");
  }

  SUBCASE("difficulty metadata is carried through when present") {
    auto path = write_temp("dacforge_corpus_diff.jsonl",
                           R"({"id":"a","problem":"P","answer":"1","difficulty":0.4375})"
                           "\n"
                           R"({"id":"b","problem":"Q","answer":"2"})"
                           "\n");
    auto result = corpus::load_corpus(path, corpus::CorpusFormat::jsonl);
    REQUIRE(result.corpus.problems[0].difficulty.has_value());
    CHECK(*result.corpus.problems[0].difficulty == 0.4375);
    CHECK_FALSE(result.corpus.problems[1].difficulty.has_value());
  }

  SUBCASE("zero valid records is an error") {
    auto path = write_temp("dacforge_corpus_bad.jsonl",
                           R"({"id":"a","problem":"P","answer":"x/y"})"
                           "\n");
    CHECK_THROWS(corpus::load_corpus(path, corpus::CorpusFormat::jsonl));
  }

  SUBCASE("unreadable file is an error") {
    CHECK_THROWS(corpus::load_corpus("/nonexistent/corpus.jsonl", corpus::CorpusFormat::jsonl));
  }
}

TEST_CASE("csv loading") {
  auto path = write_temp("dacforge_corpus.csv",
                         "id,problem,answer,source\n"
                         "a,\"What is 1, plus 1?\",2,unit\n"
                         "b,Too hard,\"49/6\",unit\n"
                         "c,\"Quote \"\"inner\"\" text\",  3 ,unit\n");
  auto result = corpus::load_corpus(path, corpus::CorpusFormat::csv);
  REQUIRE(result.corpus.problems.size() == 2);
  CHECK(result.corpus.problems[0].statement == "What is 1, plus 1?");
  CHECK(result.corpus.problems[0].answer == "2");
  CHECK(result.corpus.problems[1].statement == "Quote \"inner\" text");
  CHECK(result.corpus.problems[1].answer == "3");
  CHECK(result.report.skipped == 1);
}

TEST_CASE("difficulty filtering") {
  corpus::Corpus c;
  c.name = "t";
  c.problems = {{"a", "PA", "1", "", {}}, {"b", "PB", "2", "", {}}};

  SUBCASE("strict threshold") {
    auto result = corpus::filter_by_difficulty(c, {{"a", 0.4}, {"b", 0.6}}, 0.5);
    REQUIRE(result.corpus.problems.size() == 1);
    CHECK(result.corpus.problems[0].id == "a");
    CHECK_FALSE(result.empty_warning);
  }

  SUBCASE("rate exactly at the threshold is dropped") {
    auto result = corpus::filter_by_difficulty(c, {{"a", 0.5}, {"b", 0.5}}, 0.5);
    CHECK(result.corpus.problems.empty());
    CHECK(result.empty_warning);
  }

  SUBCASE("16-sample rate below one half is retained") {
    auto result = corpus::filter_by_difficulty(c, {{"a", 7.0 / 16.0}, {"b", 1.0}}, 0.5);
    REQUIRE(result.corpus.problems.size() == 1);
    CHECK(result.corpus.problems[0].id == "a");
  }

  SUBCASE("missing rate entry is an error") {
    CHECK_THROWS(corpus::filter_by_difficulty(c, {{"a", 0.4}}, 0.5));
  }

  SUBCASE("result is a subsequence of the input") {
    corpus::Corpus big;
    big.name = "big";
    std::map<std::string, double> rates;
    for (int i = 0; i < 50; ++i) {
      std::string id = "p" + std::to_string(i);
      big.problems.push_back({id, "S" + id, "1", "", {}});
      rates[id] = (i * 7 % 10) / 10.0;
    }
    auto result = corpus::filter_by_difficulty(big, rates, 0.5);
    size_t cursor = 0;
    for (const auto& kept : result.corpus.problems) {
      while (cursor < big.problems.size() && big.problems[cursor].id != kept.id) ++cursor;
      REQUIRE(cursor < big.problems.size());
      ++cursor;
    }
    for (const auto& kept : result.corpus.problems) CHECK(rates[kept.id] < 0.5);
  }
}
