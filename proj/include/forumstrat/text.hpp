#pragma once

// Text preprocessing: lowercasing, word tokenization, stop-word removal and
// Porter suffix stemming.

#include <fstream>
#include <initializer_list>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "forumstrat/error.hpp"

namespace forumstrat {

/// The English stop-word list shipped with NLTK's corpus (179 words).
inline const std::vector<std::string_view>& default_stop_words() {
  static const std::vector<std::string_view> words = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're",
      "you've", "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him",
      "his", "himself", "she", "she's", "her", "hers", "herself", "it", "it's", "its",
      "itself", "they", "them", "their", "theirs", "themselves", "what", "which", "who",
      "whom", "this", "that", "that'll", "these", "those", "am", "is", "are", "was",
      "were", "be", "been", "being", "have", "has", "had", "having", "do", "does", "did",
      "doing", "a", "an", "the", "and", "but", "if", "or", "because", "as", "until",
      "while", "of", "at", "by", "for", "with", "about", "against", "between", "into",
      "through", "during", "before", "after", "above", "below", "to", "from", "up",
      "down", "in", "out", "on", "off", "over", "under", "again", "further", "then",
      "once", "here", "there", "when", "where", "why", "how", "all", "any", "both",
      "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not", "only",
      "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don",
      "don't", "should", "should've", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain",
      "aren", "aren't", "couldn", "couldn't", "didn", "didn't", "doesn", "doesn't",
      "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn", "isn't", "ma",
      "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
      "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't",
      "wouldn", "wouldn't"};
  return words;
}

class StopWords {
 public:
  StopWords() {
    for (auto w : default_stop_words()) words_.emplace(w);
  }

  explicit StopWords(std::initializer_list<std::string_view> words) {
    for (auto w : words) words_.emplace(w);
  }

  /// One token per line; blank lines and '#' comments ignored.
  static StopWords from_stream(std::istream& in) {
    StopWords s(std::initializer_list<std::string_view>{});
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
        line.pop_back();
      }
      const auto start = line.find_first_not_of(" \t");
      if (start == std::string::npos || line[start] == '#') continue;
      std::string w = line.substr(start);
      for (auto& c : w) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
      s.words_.insert(std::move(w));
    }
    return s;
  }

  static StopWords from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open stop-word file '" + path + "'");
    return from_stream(in);
  }

  bool contains(std::string_view w) const { return words_.contains(std::string(w)); }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

/// Porter (1980) suffix stripper, following the reference C implementation.
class PorterStemmer {
 public:
  std::string stem(std::string_view word) const {
    PorterStemmer local;
    return local.run(word);
  }

 private:
  mutable std::string b_;
  mutable int k_ = 0;
  mutable int j_ = 0;

  std::string run(std::string_view word) const {
    b_.assign(word);
    if (b_.size() <= 2) return b_;
    k_ = static_cast<int>(b_.size()) - 1;
    step1ab();
    if (k_ > 0) {
      step1c();
      step2();
      step3();
      step4();
      step5();
    }
    return b_.substr(0, static_cast<std::size_t>(k_ + 1));
  }

  bool cons(int i) const {
    switch (b_[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u': return false;
      case 'y': return i == 0 ? true : !cons(i - 1);
      default: return true;
    }
  }

  // Number of VC sequences in b[0..j].
  int m() const {
    int n = 0, i = 0;
    for (;;) {
      if (i > j_) return n;
      if (!cons(i)) break;
      ++i;
    }
    ++i;
    for (;;) {
      for (;;) {
        if (i > j_) return n;
        if (cons(i)) break;
        ++i;
      }
      ++i;
      ++n;
      for (;;) {
        if (i > j_) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i) {
      if (!cons(i)) return true;
    }
    return false;
  }

  bool double_cons(int j) const { return j >= 1 && b_[j] == b_[j - 1] && cons(j); }

  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    const char ch = b_[i];
    return ch != 'w' && ch != 'x' && ch != 'y';
  }

  bool ends(std::string_view s) const {
    const int len = static_cast<int>(s.size());
    if (len > k_ + 1) return false;
    if (std::string_view(b_).substr(static_cast<std::size_t>(k_ + 1 - len), s.size()) != s) {
      return false;
    }
    j_ = k_ - len;
    return true;
  }

  void set_to(std::string_view s) const {
    b_.replace(static_cast<std::size_t>(j_ + 1), static_cast<std::size_t>(k_ - j_), s);
    k_ = j_ + static_cast<int>(s.size());
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void r(std::string_view s) const {
    if (m() > 0) set_to(s);
  }

  void step1ab() const {
    if (b_[k_] == 's') {
      if (ends("sses")) k_ -= 2;
      else if (ends("ies")) set_to("i");
      else if (b_[k_ - 1] != 's') --k_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
    }
    if (ends("eed")) {
      if (m() > 0) --k_;
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
      if (ends("at")) set_to("ate");
      else if (ends("bl")) set_to("ble");
      else if (ends("iz")) set_to("ize");
      else if (double_cons(k_)) {
        --k_;
        const char ch = b_[k_];
        if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
      } else {
        j_ = k_;
        if (m() == 1 && cvc(k_)) set_to("e");
      }
    }
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void step1c() const {
    if (ends("y") && vowel_in_stem()) b_[k_] = 'i';
  }

  void step2() const {
    if (k_ < 1) return;
    switch (b_[k_ - 1]) {
      case 'a':
        if (ends("ational")) { r("ate"); break; }
        if (ends("tional")) { r("tion"); break; }
        break;
      case 'c':
        if (ends("enci")) { r("ence"); break; }
        if (ends("anci")) { r("ance"); break; }
        break;
      case 'e':
        if (ends("izer")) { r("ize"); break; }
        break;
      case 'l':
        if (ends("bli")) { r("ble"); break; }
        if (ends("alli")) { r("al"); break; }
        if (ends("entli")) { r("ent"); break; }
        if (ends("eli")) { r("e"); break; }
        if (ends("ousli")) { r("ous"); break; }
        break;
      case 'o':
        if (ends("ization")) { r("ize"); break; }
        if (ends("ation")) { r("ate"); break; }
        if (ends("ator")) { r("ate"); break; }
        break;
      case 's':
        if (ends("alism")) { r("al"); break; }
        if (ends("iveness")) { r("ive"); break; }
        if (ends("fulness")) { r("ful"); break; }
        if (ends("ousness")) { r("ous"); break; }
        break;
      case 't':
        if (ends("aliti")) { r("al"); break; }
        if (ends("iviti")) { r("ive"); break; }
        if (ends("biliti")) { r("ble"); break; }
        break;
      case 'g':
        if (ends("logi")) { r("log"); break; }
        break;
      default: break;
    }
  }

  void step3() const {
    switch (b_[k_]) {
      case 'e':
        if (ends("icate")) { r("ic"); break; }
        if (ends("ative")) { r(""); break; }
        if (ends("alize")) { r("al"); break; }
        break;
      case 'i':
        if (ends("iciti")) { r("ic"); break; }
        break;
      case 'l':
        if (ends("ical")) { r("ic"); break; }
        if (ends("ful")) { r(""); break; }
        break;
      case 's':
        if (ends("ness")) { r(""); break; }
        break;
      default: break;
    }
  }

  void step4() const {
    if (k_ < 1) return;
    switch (b_[k_ - 1]) {
      case 'a': if (ends("al")) break; return;
      case 'c': if (ends("ance") || ends("ence")) break; return;
      case 'e': if (ends("er")) break; return;
      case 'i': if (ends("ic")) break; return;
      case 'l': if (ends("able") || ends("ible")) break; return;
      case 'n':
        if (ends("ant") || ends("ement") || ends("ment") || ends("ent")) break;
        return;
      case 'o':
        if (ends("ion") && j_ >= 0 && (b_[j_] == 's' || b_[j_] == 't')) break;
        if (ends("ou")) break;
        return;
      case 's': if (ends("ism")) break; return;
      case 't': if (ends("ate") || ends("iti")) break; return;
      case 'u': if (ends("ous")) break; return;
      case 'v': if (ends("ive")) break; return;
      case 'z': if (ends("ize")) break; return;
      default: return;
    }
    if (m() > 1) {
      k_ = j_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
    }
  }

  void step5() const {
    j_ = k_;
    if (b_[k_] == 'e') {
      const int a = m();
      if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
    }
    if (b_[k_] == 'l' && double_cons(k_) && m() > 1) --k_;
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }
};

/// Lowercased word tokens. A word is a maximal run of ASCII letters, digits
/// or non-ASCII bytes (so UTF-8 letters stay inside their word).
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c >= 0x80;
    if (word) {
      cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Stems to a fixed point so that a stemmed token is its own stem; keeps
/// preprocess idempotent on its joined output.
inline std::string stem_token(const PorterStemmer& stemmer, std::string_view token) {
  std::string cur(token);
  for (int i = 0; i < 8; ++i) {
    std::string next = stemmer.stem(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

/// lowercase -> tokenize -> drop stop-words -> stem. Stems that land on a
/// stop-word are dropped as well.
inline std::vector<std::string> preprocess(std::string_view raw, const StopWords& stop) {
  static const PorterStemmer stemmer;
  std::vector<std::string> out;
  for (auto& tok : tokenize(raw)) {
    if (stop.contains(tok)) continue;
    auto s = stem_token(stemmer, tok);
    if (s.empty() || stop.contains(s)) continue;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<std::string> preprocess(std::string_view raw) {
  static const StopWords stop;
  return preprocess(raw, stop);
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

}  // namespace forumstrat
