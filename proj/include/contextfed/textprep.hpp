#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace contextfed::textprep {

using Tokens = std::vector<std::string>;

/// Keyboard text cleaning configuration.
///
/// Abbreviation keys are lowercase single tokens and no expansion word may
/// itself be a key; emoji names are lowercase alphabetic words. The loaders
/// enforce both, which is what makes clean_text idempotent.
struct PrepConfig {
  std::map<std::string, Tokens> abbreviation_table;
  /// Keyed by the UTF-8 encoding of the emoji codepoint sequence.
  std::map<std::string, Tokens> emoji_table;
  bool autocorrect_enabled = false;
  std::set<std::string> dictionary;
  int max_letter_run = 2;

  /// Loads the bundled abbreviation and emoji tables from `data_dir`.
  static PrepConfig load_defaults(const std::string& data_dir = CONTEXTFED_DATA_DIR);
};

/// Parses `key<TAB>replacement words` lines. Blank lines and lines starting
/// with '#' are skipped.
std::map<std::string, Tokens> parse_table(std::string_view text, const std::string& origin);
std::map<std::string, Tokens> load_table(const std::string& path);

/// Throws Error when the tables break the invariants documented on PrepConfig.
void validate(const PrepConfig& cfg);

/// Full cleaning pipeline: drops emails, hashtags, links, mentions and
/// tokens with digits; replaces emoji with their short-name words; strips
/// punctuation; squeezes long letter runs; lowercases; expands
/// abbreviations; optionally autocorrects.
Tokens clean_text(std::string_view raw, const PrepConfig& cfg);

/// Single left-to-right pass. Output of an expansion is never re-expanded.
Tokens expand_abbreviations(const Tokens& tokens, const std::map<std::string, Tokens>& table);

/// Replaces each out-of-dictionary token with the lexicographically smallest
/// dictionary word at Damerau-Levenshtein distance 1, when one exists.
Tokens autocorrect(const Tokens& tokens, const std::set<std::string>& dictionary);

/// Runs longer than `max_run` of the same letter are cut to `max_run`.
std::string squeeze_runs(std::string_view word, int max_run);

/// Optimal-string-alignment distance (adjacent transpositions count 1).
int damerau_levenshtein(std::string_view a, std::string_view b);

std::string join(const Tokens& tokens, char sep = ' ');

}  // namespace contextfed::textprep
