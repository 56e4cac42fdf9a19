#pragma once

/**
 * Problem datasets: loading, integer-answer canonicalization, difficulty
 * filtering. Only problems whose reference answer canonicalizes to a base-10
 * integer are admitted; everything else is skipped and reported.
 */

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dacforge/common.hpp"

namespace dacforge::corpus {

struct Problem {
  std::string id;
  std::string statement;
  std::string answer;  // canonical integer string
  std::string source;
  std::optional<double> difficulty;  // measured solve rate in [0,1]
};

struct Corpus {
  std::string name;
  std::vector<Problem> problems;
};

enum class CorpusFormat { jsonl, csv };

struct LoadReport {
  size_t total = 0;
  size_t loaded = 0;
  size_t skipped = 0;
  std::vector<std::string> messages;
};

struct LoadResult {
  Corpus corpus;
  LoadReport report;
};

// ============================================================================
// Answer canonicalization
// ============================================================================

namespace detail {

/// If `s` is exactly `prefix{...}` with the opening brace's match at the very
/// end, return the inner content.
inline std::optional<std::string_view> strip_braced_wrapper(std::string_view s,
                                                            std::string_view prefix) {
  if (s.size() < prefix.size() + 1 || s.substr(0, prefix.size()) != prefix || s.back() != '}')
    return std::nullopt;
  int depth = 1;
  for (size_t i = prefix.size(); i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    else if (s[i] == '}') {
      --depth;
      if (depth == 0) {
        if (i != s.size() - 1) return std::nullopt;  // wrapper closes early
        return s.substr(prefix.size(), i - prefix.size());
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Canonical form: optional '-' sign followed by digits with no leading zeros
/// ("0" allowed, "-0" normalizes to "0"). Tolerates whitespace, surrounding
/// '$', \boxed{...} / \text{...} wrappers, and thousands-separator commas.
/// Returns nullopt for anything that is not an integer.
inline std::optional<std::string> canonicalize_answer(std::string_view raw) {
  std::string_view s = trim_view(raw);
  for (;;) {
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
      s = trim_view(s.substr(1, s.size() - 2));
      continue;
    }
    if (auto inner = detail::strip_braced_wrapper(s, "\\boxed{")) {
      s = trim_view(*inner);
      continue;
    }
    if (auto inner = detail::strip_braced_wrapper(s, "\\text{")) {
      s = trim_view(*inner);
      continue;
    }
    break;
  }
  std::string digits;
  digits.reserve(s.size());
  for (char c : s) {
    if (c == ',') continue;  // thousands separator
    digits.push_back(c);
  }
  std::string_view v = trim_view(digits);
  if (v.empty()) return std::nullopt;
  bool negative = false;
  if (v.front() == '+' || v.front() == '-') {
    negative = v.front() == '-';
    v.remove_prefix(1);
  }
  if (v.empty()) return std::nullopt;
  for (char c : v) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  size_t first = v.find_first_not_of('0');
  if (first == std::string_view::npos) return "0";
  std::string out;
  if (negative) out.push_back('-');
  out.append(v.substr(first));
  return out;
}

// ============================================================================
// Loading
// ============================================================================

namespace detail {

struct RawRecord {
  std::optional<std::string> id;
  std::optional<std::string> statement;
  std::optional<std::string> answer;
  std::string source;
  std::optional<double> difficulty;
};

/// Minimal RFC 4180 row parser (quoted fields, embedded commas/quotes).
inline std::vector<std::string> parse_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline void ingest(RawRecord raw, size_t line_no, Corpus& corpus, LoadReport& report,
                   std::unordered_set<std::string>& seen_ids) {
  ++report.total;
  auto skip = [&](const std::string& why) {
    ++report.skipped;
    report.messages.push_back("line " + std::to_string(line_no) + ": " + why);
  };
  if (!raw.statement || trim_view(*raw.statement).empty()) {
    skip("missing or empty problem statement");
    return;
  }
  if (!raw.answer) {
    skip("missing answer");
    return;
  }
  auto canon = canonicalize_answer(*raw.answer);
  if (!canon) {
    skip("non-integer answer \"" + *raw.answer + "\"");
    return;
  }
  std::string id = raw.id && !raw.id->empty() ? *raw.id : "p" + std::to_string(line_no);
  if (!seen_ids.insert(id).second) {
    skip("duplicate id \"" + id + "\"");
    return;
  }
  corpus.problems.push_back(Problem{std::move(id), *raw.statement, std::move(*canon),
                                    std::move(raw.source), raw.difficulty});
  ++report.loaded;
}

}  // namespace detail

/// Load a corpus from JSON Lines ({"id","problem","answer","source"}) or CSV
/// with the same columns. Records that fail canonicalization are skipped and
/// counted in the report; an unreadable file or zero valid records is an
/// error.
inline LoadResult load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path.string());

  LoadResult result;
  result.corpus.name = path.stem().string();
  std::unordered_set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;

  if (format == CorpusFormat::jsonl) {
    while (std::getline(in, line)) {
      ++line_no;
      if (trim_view(line).empty()) continue;
      detail::RawRecord raw;
      try {
        auto j = nlohmann::json::parse(line);
        if (j.contains("id")) raw.id = j["id"].is_string() ? j["id"].get<std::string>()
                                                           : j["id"].dump();
        if (j.contains("problem") && j["problem"].is_string())
          raw.statement = j["problem"].get<std::string>();
        if (j.contains("answer"))
          raw.answer = j["answer"].is_string() ? j["answer"].get<std::string>()
                                               : j["answer"].dump();
        if (j.contains("source") && j["source"].is_string())
          raw.source = j["source"].get<std::string>();
        if (j.contains("difficulty") && j["difficulty"].is_number())
          raw.difficulty = j["difficulty"].get<double>();
      } catch (const nlohmann::json::exception& e) {
        ++result.report.total;
        ++result.report.skipped;
        result.report.messages.push_back("line " + std::to_string(line_no) +
                                         ": bad JSON: " + e.what());
        continue;
      }
      detail::ingest(std::move(raw), line_no, result.corpus, result.report, seen_ids);
    }
  } else {
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV file: " + path.string());
    ++line_no;
    auto header = detail::parse_csv_row(line);
    std::map<std::string, size_t> col;
    for (size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
    if (!col.count("problem") || !col.count("answer"))
      throw std::runtime_error("CSV header must contain 'problem' and 'answer' columns");
    auto field = [&](const std::vector<std::string>& row,
                     const std::string& name) -> std::optional<std::string> {
      auto it = col.find(name);
      if (it == col.end() || it->second >= row.size()) return std::nullopt;
      return row[it->second];
    };
    while (std::getline(in, line)) {
      ++line_no;
      if (trim_view(line).empty()) continue;
      auto row = detail::parse_csv_row(line);
      detail::RawRecord raw;
      raw.id = field(row, "id");
      raw.statement = field(row, "problem");
      raw.answer = field(row, "answer");
      raw.source = field(row, "source").value_or("");
      if (auto d = field(row, "difficulty"); d && !trim_view(*d).empty()) {
        try {
          raw.difficulty = std::stod(*d);
        } catch (...) {
          // leave unset
        }
      }
      detail::ingest(std::move(raw), line_no, result.corpus, result.report, seen_ids);
    }
  }

  if (result.corpus.problems.empty())
    throw std::runtime_error("no valid records in corpus file: " + path.string());
  return result;
}

// ============================================================================
// Difficulty filtering
// ============================================================================

struct FilterResult {
  Corpus corpus;
  bool empty_warning = false;  // everything was filtered out
};

/// Keep exactly the problems whose measured solve rate is strictly below
/// max_rate, preserving order. Every problem must have a rate entry.
inline FilterResult filter_by_difficulty(const Corpus& input,
                                         const std::map<std::string, double>& solve_rates,
                                         double max_rate) {
  FilterResult result;
  result.corpus.name = input.name;
  for (const Problem& p : input.problems) {
    auto it = solve_rates.find(p.id);
    if (it == solve_rates.end())
      throw std::runtime_error("no solve-rate entry for problem id \"" + p.id + "\"");
    if (it->second < max_rate) result.corpus.problems.push_back(p);
  }
  result.empty_warning = result.corpus.problems.empty();
  return result;
}

}  // namespace dacforge::corpus
