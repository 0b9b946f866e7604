#include "contextfed/textprep.hpp"

#include <algorithm>
#include <cstdint>
#include <sstream>

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"

namespace contextfed::textprep {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool is_word(std::string_view w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

Tokens split_ws(std::string_view s) {
  Tokens out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Length in bytes of the UTF-8 sequence starting at s[i], or 0 if malformed.
std::size_t utf8_length(std::string_view s, std::size_t i) {
  const auto b = static_cast<unsigned char>(s[i]);
  std::size_t n = 0;
  if (b < 0x80) return 1;
  if ((b & 0xE0) == 0xC0) n = 2;
  else if ((b & 0xF0) == 0xE0) n = 3;
  else if ((b & 0xF8) == 0xF0) n = 4;
  else return 0;
  if (i + n > s.size()) return 0;
  for (std::size_t k = 1; k < n; ++k) {
    if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return 0;
  }
  return n;
}

constexpr std::string_view kRightSingleQuote = "\xE2\x80\x99";

// ASCII spelling of the Latin-1 letters U+00C0..U+00FF; empty for the two
// symbols in that range.
std::string_view fold_latin1(unsigned cp) {
  static constexpr std::string_view kFold[64] = {
      "A", "A", "A", "A", "A", "A", "AE", "C", "E", "E", "E", "E", "I", "I", "I", "I",
      "D", "N", "O", "O", "O", "O", "O", "",  "O", "U", "U", "U", "U", "Y", "TH", "ss",
      "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
      "d", "n", "o", "o", "o", "o", "o", "",  "o", "u", "u", "u", "u", "y", "th", "y"};
  return (cp >= 0xC0 && cp <= 0xFF) ? kFold[cp - 0xC0] : std::string_view{};
}

// Stage 1: emoji sequences become their short-name words (space padded);
// accented Latin-1 letters lose their accents; other non-ASCII codepoints
// become separators. The typographic apostrophe is folded to ASCII so
// contractions behave the same either way.
std::string replace_emoji(std::string_view raw, const std::map<std::string, Tokens>& emoji) {
  std::size_t max_key = 0;
  for (const auto& [k, v] : emoji) max_key = std::max(max_key, k.size());

  std::string out;
  out.reserve(raw.size() + 16);
  std::size_t i = 0;
  while (i < raw.size()) {
    const std::size_t n = utf8_length(raw, i);
    if (n == 1) {
      out += raw[i++];
      continue;
    }
    if (n == 0) {
      out += ' ';
      ++i;
      continue;
    }
    if (raw.substr(i, n) == kRightSingleQuote) {
      out += '\'';
      i += n;
      continue;
    }
    if (n == 2) {
      const unsigned cp = ((static_cast<unsigned char>(raw[i]) & 0x1Fu) << 6) |
                          (static_cast<unsigned char>(raw[i + 1]) & 0x3Fu);
      if (const auto folded = fold_latin1(cp); !folded.empty()) {
        out += folded;
        i += n;
        continue;
      }
    }
    // Greedy longest match on whole codepoint boundaries.
    std::size_t matched = 0;
    const Tokens* words = nullptr;
    std::size_t end = i;
    while (end < raw.size() && end - i < max_key) {
      const std::size_t m = utf8_length(raw, end);
      if (m == 0) break;
      end += m;
      if (end - i > max_key) break;
      auto it = emoji.find(std::string(raw.substr(i, end - i)));
      if (it != emoji.end()) {
        matched = end - i;
        words = &it->second;
      }
    }
    if (words) {
      out += ' ';
      out += join(*words);
      out += ' ';
      i += matched;
    } else {
      out += ' ';
      i += n;
    }
  }
  return out;
}

bool is_link(std::string_view t) {
  if (t.find("://") != std::string_view::npos) return true;
  std::string low;
  for (char c : t) low += lower(c);
  return low.find("www.") != std::string::npos;
}

bool is_hashtag(std::string_view t) {
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    if (t[i] == '#' && (is_alpha(t[i + 1]) || is_digit(t[i + 1]) || t[i + 1] == '_')) return true;
  }
  return false;
}

bool drop_token(std::string_view t) {
  if (t.find('@') != std::string_view::npos) return true;  // emails and mentions
  if (is_link(t) || is_hashtag(t)) return true;
  return std::any_of(t.begin(), t.end(), is_digit);
}

}  // namespace

std::string join(const Tokens& tokens, char sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

std::map<std::string, Tokens> parse_table(std::string_view text, const std::string& origin) {
  std::map<std::string, Tokens> table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw Error(origin + ":" + std::to_string(line_no) + ": expected key<TAB>replacement");
    }
    Tokens words = split_ws(line.substr(tab + 1));
    if (words.empty()) throw Error(origin + ":" + std::to_string(line_no) + ": empty replacement");
    table[std::string(line.substr(0, tab))] = std::move(words);
    if (nl == text.size()) break;
  }
  return table;
}

std::map<std::string, Tokens> load_table(const std::string& path) { return parse_table(read_file(path), path); }

void validate(const PrepConfig& cfg) {
  if (cfg.max_letter_run < 1) throw Error("max_letter_run must be at least 1");
  for (const auto& [key, words] : cfg.abbreviation_table) {
    if (!is_word(key)) throw Error("abbreviation key is not a lowercase word: " + key);
    for (const auto& w : words) {
      if (!is_word(w)) throw Error("abbreviation '" + key + "' expands to a non-word: " + w);
      if (cfg.abbreviation_table.count(w)) throw Error("abbreviation '" + key + "' expands to another key: " + w);
      if (squeeze_runs(w, cfg.max_letter_run) != w) throw Error("abbreviation '" + key + "' has an over-long letter run");
    }
  }
  for (const auto& [key, words] : cfg.emoji_table) {
    for (const auto& w : words) {
      if (!is_word(w)) throw Error("emoji name contains a non-word: " + w);
    }
  }
  if (cfg.autocorrect_enabled && cfg.dictionary.empty()) throw Error("autocorrect enabled with an empty dictionary");
}

PrepConfig PrepConfig::load_defaults(const std::string& data_dir) {
  PrepConfig cfg;
  cfg.abbreviation_table = load_table(data_dir + "/abbreviations.tsv");
  cfg.emoji_table = load_table(data_dir + "/emoji.tsv");
  validate(cfg);
  return cfg;
}

std::string squeeze_runs(std::string_view word, int max_run) {
  std::string out;
  out.reserve(word.size());
  int run = 0;
  for (std::size_t i = 0; i < word.size(); ++i) {
    run = (i > 0 && word[i] == word[i - 1]) ? run + 1 : 1;
    if (run <= max_run || !is_alpha(word[i])) out += word[i];
  }
  return out;
}

Tokens expand_abbreviations(const Tokens& tokens, const std::map<std::string, Tokens>& table) {
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = table.find(t);
    if (it == table.end()) {
      out.push_back(t);
    } else {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  return out;
}

int damerau_levenshtein(std::string_view a, std::string_view b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int cost = a[i - 1] == b[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) {
        d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
      }
    }
  }
  return d[n][m];
}

Tokens autocorrect(const Tokens& tokens, const std::set<std::string>& dictionary) {
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (dictionary.count(t)) {
      out.push_back(t);
      continue;
    }
    // Every single edit of a non-dictionary token that lands in the
    // dictionary is at distance exactly 1.
    const std::string* best = nullptr;
    auto consider = [&](const std::string& cand) {
      auto it = dictionary.find(cand);
      if (it != dictionary.end() && (!best || *it < *best)) best = &*it;
    };
    std::string cand;
    for (std::size_t i = 0; i < t.size(); ++i) {
      cand = t;
      cand.erase(i, 1);
      consider(cand);
    }
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      cand = t;
      std::swap(cand[i], cand[i + 1]);
      consider(cand);
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      for (char c = 'a'; c <= 'z'; ++c) {
        if (c == t[i]) continue;
        cand = t;
        cand[i] = c;
        consider(cand);
      }
    }
    for (std::size_t i = 0; i <= t.size(); ++i) {
      for (char c = 'a'; c <= 'z'; ++c) {
        cand = t;
        cand.insert(cand.begin() + static_cast<std::ptrdiff_t>(i), c);
        consider(cand);
      }
    }
    out.push_back(best ? *best : t);
  }
  return out;
}

Tokens clean_text(std::string_view raw, const PrepConfig& cfg) {
  const std::string replaced = replace_emoji(raw, cfg.emoji_table);

  Tokens words;
  for (const auto& tok : split_ws(replaced)) {
    if (drop_token(tok)) continue;
    // Apostrophes vanish inside words; every other non-letter separates.
    std::string piece;
    for (char c : tok) {
      if (c == '\'') continue;
      if (is_alpha(c)) {
        piece += lower(c);
      } else if (!piece.empty()) {
        words.push_back(squeeze_runs(piece, cfg.max_letter_run));
        piece.clear();
      }
    }
    if (!piece.empty()) words.push_back(squeeze_runs(piece, cfg.max_letter_run));
  }

  Tokens out = expand_abbreviations(words, cfg.abbreviation_table);
  if (cfg.autocorrect_enabled) out = autocorrect(out, cfg.dictionary);
  return out;
}

}  // namespace contextfed::textprep
