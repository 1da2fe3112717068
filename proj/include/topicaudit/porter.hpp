#pragma once

#include <string>

namespace topicaudit {
namespace detail {

// Porter stemmer, original 1980 algorithm. Input must be lowercase ASCII
// letters only (the tokenizer guarantees this).
class PorterStemmer {
 public:
  static std::string stem(const std::string& word) {
    if (word.size() <= 2) return word;
    PorterStemmer p(word);
    p.step1a();
    p.step1b();
    p.step1c();
    p.step2();
    p.step3();
    p.step4();
    p.step5a();
    p.step5b();
    return p.w_;
  }

 private:
  explicit PorterStemmer(std::string w) : w_(std::move(w)) {}

  std::string w_;

  static bool is_vowel_char(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
  }

  // True if w_[i] acts as a consonant ('y' is a consonant after a vowel-less
  // position start, a vowel after a consonant).
  bool cons(std::size_t i) const {
    const char c = w_[i];
    if (is_vowel_char(c)) return false;
    if (c == 'y') return i == 0 ? true : !cons(i - 1);
    return true;
  }

  // Measure m of the stem w_[0..end): number of VC sequences.
  int measure(std::size_t end) const {
    int m = 0;
    std::size_t i = 0;
    while (i < end && cons(i)) ++i;  // skip initial consonants
    while (i < end) {
      while (i < end && !cons(i)) ++i;  // vowels
      if (i >= end) break;
      ++m;
      while (i < end && cons(i)) ++i;  // consonants
    }
    return m;
  }

  bool has_vowel(std::size_t end) const {
    for (std::size_t i = 0; i < end; ++i)
      if (!cons(i)) return true;
    return false;
  }

  bool ends_with(const char* s) const {
    const std::size_t n = std::char_traits<char>::length(s);
    if (w_.size() < n) return false;
    return w_.compare(w_.size() - n, n, s) == 0;
  }

  std::size_t stem_len(const char* suffix) const {
    return w_.size() - std::char_traits<char>::length(suffix);
  }

  bool double_cons() const {
    const std::size_t n = w_.size();
    if (n < 2) return false;
    if (w_[n - 1] != w_[n - 2]) return false;
    return cons(n - 1);
  }

  // *o: stem ends cvc where the final c is not w, x or y.
  bool cvc(std::size_t end) const {
    if (end < 3) return false;
    if (!cons(end - 1) || cons(end - 2) || !cons(end - 3)) return false;
    const char c = w_[end - 1];
    return c != 'w' && c != 'x' && c != 'y';
  }

  // Replaces `suffix` by `rep` if the stem before it has measure > m_min.
  bool replace_m(const char* suffix, const char* rep, int m_min) {
    if (!ends_with(suffix)) return false;
    const std::size_t st = stem_len(suffix);
    if (measure(st) > m_min) w_ = w_.substr(0, st) + rep;
    return true;  // suffix matched (rule consumed) even if condition failed
  }

  void step1a() {
    if (ends_with("sses")) {
      w_.resize(w_.size() - 2);
    } else if (ends_with("ies")) {
      w_.resize(w_.size() - 2);
    } else if (ends_with("ss")) {
      // keep
    } else if (ends_with("s")) {
      w_.resize(w_.size() - 1);
    }
  }

  void step1b() {
    bool cleanup = false;
    if (ends_with("eed")) {
      if (measure(stem_len("eed")) > 0) w_.resize(w_.size() - 1);
    } else if (ends_with("ed") && has_vowel(stem_len("ed"))) {
      w_.resize(w_.size() - 2);
      cleanup = true;
    } else if (ends_with("ing") && has_vowel(stem_len("ing"))) {
      w_.resize(w_.size() - 3);
      cleanup = true;
    }
    if (!cleanup) return;
    if (ends_with("at") || ends_with("bl") || ends_with("iz")) {
      w_ += 'e';
    } else if (double_cons() && !ends_with("l") && !ends_with("s") && !ends_with("z")) {
      w_.resize(w_.size() - 1);
    } else if (measure(w_.size()) == 1 && cvc(w_.size())) {
      w_ += 'e';
    }
  }

  void step1c() {
    if (ends_with("y") && has_vowel(w_.size() - 1)) w_.back() = 'i';
  }

  void step2() {
    static const char* const rules[][2] = {
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
        {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"}};
    for (const auto& r : rules) {
      if (ends_with(r[0])) {
        replace_m(r[0], r[1], 0);
        return;
      }
    }
  }

  void step3() {
    static const char* const rules[][2] = {{"icate", "ic"}, {"ative", ""}, {"alize", "al"},
                                           {"iciti", "ic"}, {"ical", "ic"}, {"ful", ""},
                                           {"ness", ""}};
    for (const auto& r : rules) {
      if (ends_with(r[0])) {
        replace_m(r[0], r[1], 0);
        return;
      }
    }
  }

  void step4() {
    static const char* const suffixes[] = {"al",    "ance", "ence", "er",  "ic",  "able",
                                           "ible",  "ant",  "ement", "ment", "ent", "ion",
                                           "ou",    "ism",  "ate",  "iti", "ous", "ive",
                                           "ize"};
    for (const char* s : suffixes) {
      if (!ends_with(s)) continue;
      const std::size_t st = stem_len(s);
      if (std::string(s) == "ion") {
        if (st > 0 && (w_[st - 1] == 's' || w_[st - 1] == 't') && measure(st) > 1) w_.resize(st);
      } else if (measure(st) > 1) {
        w_.resize(st);
      }
      return;
    }
  }

  void step5a() {
    if (!ends_with("e")) return;
    const std::size_t st = w_.size() - 1;
    const int m = measure(st);
    if (m > 1 || (m == 1 && !cvc(st))) w_.resize(st);
  }

  void step5b() {
    if (ends_with("ll") && measure(w_.size()) > 1) w_.resize(w_.size() - 1);
  }
};

}  // namespace detail

inline std::string porter_stem(const std::string& word) {
  return detail::PorterStemmer::stem(word);
}

}  // namespace topicaudit
