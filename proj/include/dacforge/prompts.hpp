#pragma once

/**
 * Prompt rendering. Templates are checked-in text assets (UTF-8, LF) with
 * {REPLACE} for the problem statement and, in the conquering template,
 * {SUBPROBLEMS} for the generated tag block. Rendering is a single pass over
 * the template, so slot-like text inside a problem statement is never
 * re-substituted.
 */

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dacforge/common.hpp"
#include "dacforge/corpus.hpp"
#include "dacforge/parse.hpp"

namespace dacforge::prompts {

inline constexpr std::string_view kProblemSlot = "{REPLACE}";
inline constexpr std::string_view kSubproblemSlot = "{SUBPROBLEMS}";

struct PromptTemplate {
  enum class Kind { division, conquering, cot };
  Kind kind = Kind::division;
  std::string body;
};

namespace detail {

inline size_t count_occurrences(std::string_view body, std::string_view needle) {
  size_t count = 0, pos = 0;
  while ((pos = body.find(needle, pos)) != std::string_view::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

}  // namespace detail

inline void validate_template(const PromptTemplate& tpl) {
  size_t problems = detail::count_occurrences(tpl.body, kProblemSlot);
  size_t blocks = detail::count_occurrences(tpl.body, kSubproblemSlot);
  if (problems != 1)
    throw std::runtime_error("prompt template must contain exactly one {REPLACE} slot");
  size_t expected_blocks = tpl.kind == PromptTemplate::Kind::conquering ? 1 : 0;
  if (blocks != expected_blocks)
    throw std::runtime_error(tpl.kind == PromptTemplate::Kind::conquering
                                 ? "conquering template must contain exactly one "
                                   "{SUBPROBLEMS} slot"
                                 : "only the conquering template may contain {SUBPROBLEMS}");
}

inline PromptTemplate load_template(PromptTemplate::Kind kind,
                                    const std::filesystem::path& file) {
  PromptTemplate tpl{kind, slurp_file(file)};
  validate_template(tpl);
  return tpl;
}

struct PromptLibrary {
  PromptTemplate division;
  PromptTemplate conquering;
  PromptTemplate cot;

  static PromptLibrary load(const std::filesystem::path& dir) {
    return PromptLibrary{
        load_template(PromptTemplate::Kind::division, dir / "division.txt"),
        load_template(PromptTemplate::Kind::conquering, dir / "conquering.txt"),
        load_template(PromptTemplate::Kind::cot, dir / "cot.txt"),
    };
  }
};

/// Asset directory resolution: $DACFORGE_ASSETS, then the build-time default.
inline std::filesystem::path default_asset_dir() {
  if (const char* env = std::getenv("DACFORGE_ASSETS"); env && *env) return env;
#ifdef DACFORGE_DEFAULT_ASSET_DIR
  return DACFORGE_DEFAULT_ASSET_DIR;
#else
  return "assets/prompts";
#endif
}

namespace detail {

/// One pass over the template; every slot is substituted at most once.
inline std::string render(std::string_view body, std::string_view statement,
                          const std::string* subproblem_block) {
  std::string out;
  out.reserve(body.size() + statement.size() +
              (subproblem_block ? subproblem_block->size() : 0));
  size_t pos = 0;
  while (pos < body.size()) {
    size_t next_problem = body.find(kProblemSlot, pos);
    size_t next_block =
        subproblem_block ? body.find(kSubproblemSlot, pos) : std::string_view::npos;
    size_t next = std::min(next_problem, next_block);
    if (next == std::string_view::npos) {
      out.append(body.substr(pos));
      break;
    }
    out.append(body.substr(pos, next - pos));
    if (next == next_problem) {
      out.append(statement);
      pos = next + kProblemSlot.size();
    } else {
      out.append(*subproblem_block);
      pos = next + kSubproblemSlot.size();
    }
  }
  return out;
}

}  // namespace detail

/// "<SUBPROBLEM i>\n{text}\n</SUBPROBLEM i>" blocks, 1-based, blank line
/// between entries, no slots for absent subproblems.
inline std::string subproblem_block(const std::vector<std::string>& subproblems) {
  std::string out;
  for (size_t i = 0; i < subproblems.size(); ++i) {
    if (i > 0) out.append("\n\n");
    std::string tag = "SUBPROBLEM " + std::to_string(i + 1);
    out.append("<").append(tag).append(">\n");
    out.append(subproblems[i]);
    out.append("\n</").append(tag).append(">");
  }
  return out;
}

inline std::string render_division_prompt(const PromptTemplate& tpl,
                                          const corpus::Problem& problem) {
  if (tpl.kind != PromptTemplate::Kind::division)
    throw std::invalid_argument("render_division_prompt: wrong template kind");
  if (trim_view(problem.statement).empty())
    throw std::invalid_argument("render_division_prompt: empty problem statement");
  return detail::render(tpl.body, problem.statement, nullptr);
}

inline std::string render_conquering_prompt(const PromptTemplate& tpl,
                                            const corpus::Problem& problem,
                                            const parse::SubproblemGroup& group) {
  if (tpl.kind != PromptTemplate::Kind::conquering)
    throw std::invalid_argument("render_conquering_prompt: wrong template kind");
  if (trim_view(problem.statement).empty())
    throw std::invalid_argument("render_conquering_prompt: empty problem statement");
  if (group.subproblems.empty())
    throw std::invalid_argument("render_conquering_prompt: empty subproblem group");
  std::string block = subproblem_block(group.subproblems);
  return detail::render(tpl.body, problem.statement, &block);
}

inline std::string render_cot_prompt(const PromptTemplate& tpl, const corpus::Problem& problem) {
  if (tpl.kind != PromptTemplate::Kind::cot)
    throw std::invalid_argument("render_cot_prompt: wrong template kind");
  if (trim_view(problem.statement).empty())
    throw std::invalid_argument("render_cot_prompt: empty problem statement");
  return detail::render(tpl.body, problem.statement, nullptr);
}

}  // namespace dacforge::prompts
