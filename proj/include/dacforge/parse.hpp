#pragma once

/**
 * Response parsing: subproblem tag extraction from division responses, boxed
 * final-answer extraction from conquering responses, and the per-index
 * "subproblem i" coverage check.
 *
 * Parsers here are total functions over arbitrary bytes — malformed input is
 * data (format_valid = false), never an exception.
 */

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dacforge/common.hpp"
#include "dacforge/corpus.hpp"

namespace dacforge::parse {

/// Groups larger than this are rejected as format-invalid to bound conquering
/// prompt growth.
inline constexpr int kDefaultMaxSubproblems = 16;

struct SubproblemGroup {
  std::vector<std::string> subproblems;  // trimmed, non-empty
  bool format_valid = false;
  std::string raw;
};

struct ExtractedAnswer {
  std::optional<std::string> value;  // canonical integer string
  bool found_boxed = false;
};

// ============================================================================
// Subproblem tags
// ============================================================================

namespace detail {

struct Tag {
  bool open = false;
  int index = 0;
  size_t begin = 0;  // position of '<'
  size_t end = 0;    // one past '>'
};

/// Scan for <SUBPROBLEM n> / </SUBPROBLEM n> tags, in text order.
inline std::vector<Tag> scan_tags(std::string_view text) {
  std::vector<Tag> tags;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t lt = text.find('<', pos);
    if (lt == std::string_view::npos) break;
    std::string_view rest = text.substr(lt);
    bool open = true;
    size_t cursor = 1;
    if (cursor < rest.size() && rest[cursor] == '/') {
      open = false;
      ++cursor;
    }
    constexpr std::string_view kWord = "SUBPROBLEM ";
    if (rest.substr(cursor, kWord.size()) != kWord) {
      pos = lt + 1;
      continue;
    }
    cursor += kWord.size();
    size_t digits_begin = cursor;
    while (cursor < rest.size() && rest[cursor] >= '0' && rest[cursor] <= '9') ++cursor;
    size_t n_digits = cursor - digits_begin;
    if (n_digits == 0 || n_digits > 4 || cursor >= rest.size() || rest[cursor] != '>') {
      pos = lt + 1;
      continue;
    }
    int index = 0;
    std::from_chars(rest.data() + digits_begin, rest.data() + cursor, index);
    tags.push_back(Tag{open, index, lt, lt + cursor + 1});
    pos = lt + cursor + 1;
  }
  return tags;
}

struct TagPair {
  int index = 0;
  size_t open_begin = 0;
  size_t content_begin = 0;
  size_t content_end = 0;
  size_t close_end = 0;
};

}  // namespace detail

/// Extract "<SUBPROBLEM i>...</SUBPROBLEM i>" pairs. format_valid requires: at
/// least one pair, indices exactly 1..n with no gaps or duplicates, every open
/// tag closed with the same index, pairwise non-overlapping pairs, non-empty
/// trimmed content, and n within max_subproblems. On failure, whatever content
/// was salvageable is still returned (in document order) for diagnosis.
inline SubproblemGroup parse_subproblems(std::string_view y_d,
                                         int max_subproblems = kDefaultMaxSubproblems) {
  SubproblemGroup group;
  group.raw = std::string(y_d);

  auto tags = detail::scan_tags(y_d);
  std::vector<detail::TagPair> pairs;
  std::vector<bool> consumed(tags.size(), false);
  bool all_opens_matched = true;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (!tags[i].open) continue;
    bool matched = false;
    for (size_t j = i + 1; j < tags.size(); ++j) {
      if (tags[j].open || consumed[j] || tags[j].index != tags[i].index) continue;
      consumed[j] = true;
      pairs.push_back(detail::TagPair{tags[i].index, tags[i].begin, tags[i].end,
                                      tags[j].begin, tags[j].end});
      matched = true;
      break;
    }
    if (!matched) all_opens_matched = false;
  }

  bool valid = !pairs.empty() && all_opens_matched;

  // Pairs must not overlap (nesting or crossing both corrupt the contents).
  for (size_t a = 0; a < pairs.size() && valid; ++a) {
    for (size_t b = a + 1; b < pairs.size() && valid; ++b) {
      bool disjoint = pairs[a].close_end <= pairs[b].open_begin ||
                      pairs[b].close_end <= pairs[a].open_begin;
      if (!disjoint) valid = false;
    }
  }

  // Indices must be exactly 1..n.
  {
    std::vector<int> indices;
    indices.reserve(pairs.size());
    for (const auto& p : pairs) indices.push_back(p.index);
    std::sort(indices.begin(), indices.end());
    for (size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] != static_cast<int>(i) + 1) valid = false;
    }
  }

  if (static_cast<int>(pairs.size()) > max_subproblems) valid = false;

  // Salvage contents in document order; empty contents invalidate the group
  // (a subproblem must carry text) but are simply dropped from the salvage.
  std::sort(pairs.begin(), pairs.end(),
            [](const detail::TagPair& a, const detail::TagPair& b) {
              return a.open_begin < b.open_begin;
            });
  for (const auto& p : pairs) {
    std::string text = trim(y_d.substr(p.content_begin, p.content_end - p.content_begin));
    if (text.empty()) {
      valid = false;
      continue;
    }
    group.subproblems.push_back(std::move(text));
  }

  if (valid) {
    // Order by index for the valid case (equals document order when tags are
    // emitted sequentially, but the contract is index order).
    std::vector<std::pair<int, size_t>> order;
    for (size_t i = 0; i < pairs.size(); ++i) order.emplace_back(pairs[i].index, i);
    std::sort(order.begin(), order.end());
    std::vector<std::string> by_index;
    by_index.reserve(pairs.size());
    for (auto& [idx, i] : order) {
      (void)idx;
      by_index.push_back(trim(y_d.substr(pairs[i].content_begin,
                                         pairs[i].content_end - pairs[i].content_begin)));
    }
    group.subproblems = std::move(by_index);
  }

  group.format_valid = valid;
  return group;
}

// ============================================================================
// Boxed answers
// ============================================================================

/// Content of the last balanced "\boxed{...}" occurrence, canonicalized to an
/// integer. A dangling (unbalanced) box — typical of truncated responses —
/// falls back to the previous balanced occurrence.
inline ExtractedAnswer extract_boxed_answer(std::string_view y_c) {
  constexpr std::string_view kBox = "\\boxed{";
  ExtractedAnswer out;
  size_t search_end = y_c.size();
  while (true) {
    size_t at = y_c.rfind(kBox, search_end == 0 ? 0 : search_end - 1);
    if (at == std::string_view::npos) return out;
    size_t content_begin = at + kBox.size();
    int depth = 1;
    for (size_t i = content_begin; i < y_c.size(); ++i) {
      if (y_c[i] == '{') {
        ++depth;
      } else if (y_c[i] == '}') {
        --depth;
        if (depth == 0) {
          out.found_boxed = true;
          out.value = corpus::canonicalize_answer(y_c.substr(content_begin, i - content_begin));
          return out;
        }
      }
    }
    if (at == 0) return out;
    search_end = at;  // unbalanced; try an earlier occurrence
  }
}

// ============================================================================
// Format-constraint coverage
// ============================================================================

/// True iff the case-insensitive phrase "subproblem i" occurs for every
/// i in 1..n_g-1 (vacuously true for n_g = 1). The index must end at a digit
/// boundary, so "subproblem 12" does not count as a mention of subproblem 1.
inline bool check_subproblem_coverage(std::string_view y_c, int n_g) {
  if (n_g < 1) throw std::invalid_argument("check_subproblem_coverage: n_g must be >= 1");
  if (n_g == 1) return true;

  std::string lower = to_lower(y_c);
  std::vector<bool> mentioned(static_cast<size_t>(n_g), false);
  constexpr std::string_view kWord = "subproblem";
  size_t pos = 0;
  while ((pos = lower.find(kWord, pos)) != std::string::npos) {
    size_t cursor = pos + kWord.size();
    size_t ws = cursor;
    while (ws < lower.size() && is_space(lower[ws])) ++ws;
    if (ws > cursor) {
      size_t digits_begin = ws;
      while (ws < lower.size() && lower[ws] >= '0' && lower[ws] <= '9') ++ws;
      size_t n_digits = ws - digits_begin;
      if (n_digits > 0 && n_digits <= 4) {
        int idx = 0;
        std::from_chars(lower.data() + digits_begin, lower.data() + ws, idx);
        if (idx >= 1 && idx < n_g) mentioned[static_cast<size_t>(idx)] = true;
      }
    }
    pos += kWord.size();
  }
  for (int i = 1; i < n_g; ++i) {
    if (!mentioned[static_cast<size_t>(i)]) return false;
  }
  return true;
}

}  // namespace dacforge::parse
