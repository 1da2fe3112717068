#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "topicaudit/common.hpp"
#include "topicaudit/porter.hpp"
#include "topicaudit/stopwords.hpp"

namespace topicaudit {

struct Vocabulary {
  std::vector<std::string> terms;                         // id -> token
  std::unordered_map<std::string, std::int32_t> index;    // token -> id

  std::size_t size() const { return terms.size(); }

  bool contains(const std::string& token) const { return index.count(token) != 0; }

  // Returns the id of `token`, inserting it with the next dense id if new.
  std::int32_t add(const std::string& token) {
    auto it = index.find(token);
    if (it != index.end()) return it->second;
    const auto id = static_cast<std::int32_t>(terms.size());
    terms.push_back(token);
    index.emplace(token, id);
    return id;
  }

  // Returns the id of `token`, or -1 if absent.
  std::int32_t id_of(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? -1 : it->second;
  }
};

struct Document {
  std::int64_t doc_id = 0;
  std::int64_t author = -1;  // -1 = unset; callers treat the doc as its own author
  // (word id, count) pairs, sorted by word id, counts >= 1.
  std::vector<std::pair<std::int32_t, std::int32_t>> counts;

  std::int64_t length() const {
    std::int64_t n = 0;
    for (const auto& [w, c] : counts) n += c;
    return n;
  }
  bool empty() const { return counts.empty(); }
};

struct Corpus {
  std::vector<Document> documents;
  Vocabulary vocabulary;

  std::size_t size() const { return documents.size(); }

  // Effective author id under the one-author-per-document default.
  static std::int64_t author_of(const Document& d) {
    return d.author >= 0 ? d.author : d.doc_id;
  }

  std::int64_t total_tokens() const {
    std::int64_t n = 0;
    for (const auto& d : documents) n += d.length();
    return n;
  }
};

enum class Stemmer { none, porter };

struct PreprocessConfig {
  int min_token_len = 3;
  int max_token_len = 15;
  std::unordered_set<std::string> stopwords = default_stopword_set();
  Stemmer stemmer = Stemmer::none;

  static std::unordered_set<std::string> default_stopword_set() {
    std::unordered_set<std::string> s;
    s.reserve(kDefaultStopwords.size() * 2);
    for (std::string_view w : kDefaultStopwords) s.emplace(w);
    return s;
  }
};

// Lowercases [A-Za-z] runs and treats every other byte as a separator.
inline std::vector<std::string> tokenize_alpha(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (ch >= 'A' && ch <= 'Z') {
      cur.push_back(static_cast<char>(ch - 'A' + 'a'));
    } else if (ch >= 'a' && ch <= 'z') {
      cur.push_back(static_cast<char>(ch));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Tokenization, length/stopword filtering, then optional stemming (last).
// Documents that end up empty are kept so ids stay aligned with the input.
inline std::vector<std::vector<std::string>> preprocess(const std::vector<std::string>& raw_docs,
                                                        const PreprocessConfig& cfg) {
  require(cfg.min_token_len >= 1 && cfg.min_token_len <= cfg.max_token_len,
          "preprocess: need 1 <= min_token_len <= max_token_len");
  std::vector<std::vector<std::string>> out;
  out.reserve(raw_docs.size());
  for (const std::string& raw : raw_docs) {
    std::vector<std::string> kept;
    for (std::string& tok : tokenize_alpha(raw)) {
      const auto len = static_cast<int>(tok.size());
      if (len < cfg.min_token_len || len > cfg.max_token_len) continue;
      if (cfg.stopwords.count(tok)) continue;
      kept.push_back(std::move(tok));
    }
    if (cfg.stemmer == Stemmer::porter)
      for (std::string& tok : kept) tok = porter_stem(tok);
    out.push_back(std::move(kept));
  }
  return out;
}

inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_docs) {
  Vocabulary v;
  for (const auto& doc : token_docs)
    for (const auto& tok : doc) v.add(tok);
  return v;
}

inline Corpus to_bow(const std::vector<std::vector<std::string>>& token_docs,
                     const Vocabulary& vocab, bool drop_unknown = false) {
  Corpus corpus;
  corpus.vocabulary = vocab;
  corpus.documents.reserve(token_docs.size());
  for (std::size_t i = 0; i < token_docs.size(); ++i) {
    std::map<std::int32_t, std::int32_t> acc;
    for (const auto& tok : token_docs[i]) {
      const std::int32_t id = vocab.id_of(tok);
      if (id < 0) {
        require(drop_unknown, "to_bow: unknown token \"" + tok + "\" in document " +
                                  std::to_string(i));
        continue;
      }
      ++acc[id];
    }
    Document d;
    d.doc_id = static_cast<std::int64_t>(i);
    d.counts.assign(acc.begin(), acc.end());
    corpus.documents.push_back(std::move(d));
  }
  return corpus;
}

// Restricts the corpus to the tokens of `keep`; output ids are keep's ids.
// Documents that lose every word are retained as empty.
inline Corpus sanitize(const Corpus& corpus, const Vocabulary& keep) {
  std::vector<std::int32_t> remap(corpus.vocabulary.size(), -1);
  for (std::size_t w = 0; w < corpus.vocabulary.size(); ++w)
    remap[w] = keep.id_of(corpus.vocabulary.terms[w]);
  Corpus out;
  out.vocabulary = keep;
  out.documents.reserve(corpus.documents.size());
  for (const Document& d : corpus.documents) {
    Document nd;
    nd.doc_id = d.doc_id;
    nd.author = d.author;
    for (const auto& [w, c] : d.counts)
      if (remap[static_cast<std::size_t>(w)] >= 0)
        nd.counts.emplace_back(remap[static_cast<std::size_t>(w)], c);
    std::sort(nd.counts.begin(), nd.counts.end());
    out.documents.push_back(std::move(nd));
  }
  return out;
}

// Re-expresses one document in another vocabulary by token identity,
// dropping words `to` does not contain.
inline Document map_document(const Document& d, const Vocabulary& from, const Vocabulary& to) {
  Document nd;
  nd.doc_id = d.doc_id;
  nd.author = d.author;
  for (const auto& [w, c] : d.counts) {
    const std::int32_t nid = to.id_of(from.terms[static_cast<std::size_t>(w)]);
    if (nid >= 0) nd.counts.emplace_back(nid, c);
  }
  std::sort(nd.counts.begin(), nd.counts.end());
  return nd;
}

// Selects the documents with the given doc_ids, preserving corpus order.
inline Corpus corpus_subset(const Corpus& corpus, const std::vector<std::int64_t>& doc_ids) {
  std::unordered_set<std::int64_t> want(doc_ids.begin(), doc_ids.end());
  Corpus out;
  out.vocabulary = corpus.vocabulary;
  out.documents.reserve(want.size());
  for (const Document& d : corpus.documents)
    if (want.count(d.doc_id)) out.documents.push_back(d);
  require(out.documents.size() == want.size(),
          "corpus_subset: some requested doc_ids are absent from the corpus");
  return out;
}

// Random disjoint partition; the first half has exactly floor(M/2) documents.
// Both halves keep the full vocabulary and the original document order.
inline std::pair<Corpus, Corpus> split_half(const Corpus& corpus, std::uint64_t seed) {
  const std::size_t m = corpus.documents.size();
  require(m >= 2, "split_half: need at least 2 documents");
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  Rng rng(derive_seed(seed, /*stream=*/0x73706c6974ULL, 0));  // "split"
  for (std::size_t i = m - 1; i > 0; --i) {
    const std::size_t j = rng.uniform_int(i + 1);
    std::swap(order[i], order[j]);
  }
  std::vector<bool> in_first(m, false);
  for (std::size_t i = 0; i < m / 2; ++i) in_first[order[i]] = true;
  Corpus a, b;
  a.vocabulary = corpus.vocabulary;
  b.vocabulary = corpus.vocabulary;
  for (std::size_t i = 0; i < m; ++i)
    (in_first[i] ? a : b).documents.push_back(corpus.documents[i]);
  return {std::move(a), std::move(b)};
}

struct DataProfile {
  std::size_t doc_count = 0;
  double mean_doc_length = 0.0;
  std::size_t vocab_size = 0;
};

inline DataProfile data_profile(const Corpus& corpus) {
  DataProfile p;
  p.doc_count = corpus.documents.size();
  p.vocab_size = corpus.vocabulary.size();
  if (p.doc_count > 0)
    p.mean_doc_length =
        static_cast<double>(corpus.total_tokens()) / static_cast<double>(p.doc_count);
  return p;
}

// ---------------------------------------------------------------------------
// File formats. Lines beginning with '#' are comments and are skipped by every
// reader here, which lets writers append provenance (seed, config hash).

namespace detail {

inline bool comment_or_blank(const std::string& line) {
  return line.empty() || line[0] == '#';
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path), in_(read_text_file(path)) {}

  // Next non-comment, non-blank line; false at EOF.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++lineno_;
      line = strip_cr(std::move(line));
      if (!comment_or_blank(line)) return true;
    }
    return false;
  }

  // Raw line including blanks/comments; false at EOF.
  bool next_raw(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++lineno_;
    line = strip_cr(std::move(line));
    return true;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(path_ + ":" + std::to_string(lineno_) + ": " + msg);
  }

 private:
  std::string path_;
  std::istringstream in_;
  int lineno_ = 0;
};

inline std::int64_t parse_int(LineReader& r, const std::string& field, const std::string& text) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(text, &pos);
    if (pos != text.size()) r.fail("trailing junk after " + field + ": \"" + text + "\"");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    r.fail("expected integer " + field + ", got \"" + text + "\"");
  }
}

// Seeds use the full 64-bit range, which stoll rejects past 2^63-1.
inline std::uint64_t parse_u64(LineReader& r, const std::string& field, const std::string& text) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(text, &pos);
    if (pos != text.size() || text.empty() || text[0] == '-')
      r.fail("expected unsigned integer " + field + ", got \"" + text + "\"");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    r.fail("expected unsigned integer " + field + ", got \"" + text + "\"");
  }
}

}  // namespace detail

// One document per line, verbatim (no comment handling: lines are user data).
inline std::vector<std::string> load_raw_text(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> docs;
  std::string line;
  while (std::getline(in, line)) docs.push_back(detail::strip_cr(std::move(line)));
  return docs;
}

// One integer author id per line, aligned with the raw-text line numbers.
inline std::vector<std::int64_t> load_author_file(const std::string& path) {
  detail::LineReader r(path);
  std::vector<std::int64_t> authors;
  std::string line;
  while (r.next_raw(line)) {
    if (line.empty()) continue;
    authors.push_back(detail::parse_int(r, "author id", line));
  }
  return authors;
}

// One token per line; '#' comments and blank lines ignored.
inline std::unordered_set<std::string> load_stopwords(const std::string& path) {
  detail::LineReader r(path);
  std::unordered_set<std::string> words;
  std::string line;
  while (r.next(line)) words.insert(line);
  return words;
}

inline Vocabulary load_vocabulary(const std::string& path) {
  detail::LineReader r(path);
  Vocabulary v;
  std::string line;
  while (r.next(line)) {
    if (v.contains(line)) r.fail("duplicate vocabulary token \"" + line + "\"");
    v.add(line);
  }
  return v;
}

inline void save_vocabulary(const Vocabulary& v, const std::string& path,
                            const std::vector<std::string>& comments = {}) {
  std::string out;
  for (const auto& t : v.terms) {
    out += t;
    out += '\n';
  }
  for (const auto& c : comments) out += "# " + c + "\n";
  write_text_file_atomic(path, out);
}

// UCI bag-of-words: three header lines M, V, NNZ, then NNZ lines
// "docID wordID count" with 1-based ids.
inline Corpus load_uci_bow(const std::string& docword_path, const std::string& vocab_path) {
  Vocabulary vocab = load_vocabulary(vocab_path);
  detail::LineReader r(docword_path);
  std::string line;
  std::int64_t header[3];
  for (int h = 0; h < 3; ++h) {
    if (!r.next(line)) r.fail("missing header line");
    header[h] = detail::parse_int(r, h == 0 ? "M" : h == 1 ? "V" : "NNZ", line);
  }
  const std::int64_t m = header[0], v = header[1], nnz = header[2];
  if (m < 0 || v < 0 || nnz < 0) r.fail("negative header value");
  if (static_cast<std::size_t>(v) != vocab.size())
    r.fail("header V=" + std::to_string(v) + " but vocabulary file has " +
           std::to_string(vocab.size()) + " tokens");

  std::vector<std::map<std::int32_t, std::int64_t>> acc(static_cast<std::size_t>(m));
  std::int64_t seen = 0;
  while (r.next(line)) {
    std::istringstream fields(line);
    std::string a, b, c;
    if (!(fields >> a >> b >> c)) r.fail("expected \"docID wordID count\"");
    std::string extra;
    if (fields >> extra) r.fail("trailing junk \"" + extra + "\"");
    const std::int64_t doc = detail::parse_int(r, "docID", a);
    const std::int64_t word = detail::parse_int(r, "wordID", b);
    const std::int64_t count = detail::parse_int(r, "count", c);
    if (doc < 1 || doc > m) r.fail("docID " + std::to_string(doc) + " out of range [1," +
                                   std::to_string(m) + "]");
    if (word < 1 || word > v) r.fail("wordID " + std::to_string(word) + " out of range [1," +
                                     std::to_string(v) + "]");
    if (count < 1) r.fail("non-positive count " + std::to_string(count));
    acc[static_cast<std::size_t>(doc - 1)][static_cast<std::int32_t>(word - 1)] += count;
    ++seen;
  }
  if (seen != nnz)
    r.fail("header NNZ=" + std::to_string(nnz) + " but found " + std::to_string(seen) +
           " entries");

  Corpus corpus;
  corpus.vocabulary = std::move(vocab);
  corpus.documents.reserve(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) {
    Document d;
    d.doc_id = i;
    for (const auto& [w, c] : acc[static_cast<std::size_t>(i)])
      d.counts.emplace_back(w, static_cast<std::int32_t>(c));
    corpus.documents.push_back(std::move(d));
  }
  return corpus;
}

inline void save_uci_bow(const Corpus& corpus, const std::string& docword_path,
                         const std::string& vocab_path,
                         const std::vector<std::string>& comments = {}) {
  std::int64_t nnz = 0;
  for (const auto& d : corpus.documents) nnz += static_cast<std::int64_t>(d.counts.size());
  std::string out;
  out += std::to_string(corpus.documents.size()) + "\n";
  out += std::to_string(corpus.vocabulary.size()) + "\n";
  out += std::to_string(nnz) + "\n";
  for (std::size_t i = 0; i < corpus.documents.size(); ++i)
    for (const auto& [w, c] : corpus.documents[i].counts)
      out += std::to_string(i + 1) + " " + std::to_string(w + 1) + " " + std::to_string(c) + "\n";
  for (const auto& c : comments) out += "# " + c + "\n";
  write_text_file_atomic(docword_path, out);
  save_vocabulary(corpus.vocabulary, vocab_path, comments);
}

// Native corpus format: header "M V", then "doc_id author_id w:c w:c ..."
// per document. The vocabulary travels in a companion token-per-line file.
inline void save_corpus(const Corpus& corpus, const std::string& corpus_path,
                        const std::string& vocab_path,
                        const std::vector<std::string>& comments = {}) {
  std::string out;
  out += std::to_string(corpus.documents.size()) + " " +
         std::to_string(corpus.vocabulary.size()) + "\n";
  for (const Document& d : corpus.documents) {
    out += std::to_string(d.doc_id) + " " + std::to_string(d.author);
    for (const auto& [w, c] : d.counts)
      out += " " + std::to_string(w) + ":" + std::to_string(c);
    out += "\n";
  }
  for (const auto& c : comments) out += "# " + c + "\n";
  write_text_file_atomic(corpus_path, out);
  save_vocabulary(corpus.vocabulary, vocab_path, comments);
}

inline Corpus load_corpus(const std::string& corpus_path, const std::string& vocab_path) {
  Corpus corpus;
  corpus.vocabulary = load_vocabulary(vocab_path);
  const auto v = static_cast<std::int64_t>(corpus.vocabulary.size());
  detail::LineReader r(corpus_path);
  std::string line;
  if (!r.next(line)) r.fail("missing header line");
  std::istringstream header(line);
  std::string ms, vs;
  if (!(header >> ms >> vs)) r.fail("expected header \"M V\"");
  const std::int64_t m = detail::parse_int(r, "M", ms);
  const std::int64_t hv = detail::parse_int(r, "V", vs);
  if (hv != v)
    r.fail("header V=" + std::to_string(hv) + " but vocabulary file has " + std::to_string(v) +
           " tokens");
  std::unordered_set<std::int64_t> seen_ids;
  for (std::int64_t i = 0; i < m; ++i) {
    if (!r.next(line)) r.fail("expected " + std::to_string(m) + " document lines, got " +
                              std::to_string(i));
    std::istringstream fields(line);
    std::string tok;
    if (!(fields >> tok)) r.fail("missing doc_id");
    Document d;
    d.doc_id = detail::parse_int(r, "doc_id", tok);
    if (!(fields >> tok)) r.fail("missing author_id");
    d.author = detail::parse_int(r, "author_id", tok);
    if (!seen_ids.insert(d.doc_id).second)
      r.fail("duplicate doc_id " + std::to_string(d.doc_id));
    while (fields >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) r.fail("expected w:c entry, got \"" + tok + "\"");
      const std::int64_t w = detail::parse_int(r, "word id", tok.substr(0, colon));
      const std::int64_t c = detail::parse_int(r, "count", tok.substr(colon + 1));
      if (w < 0 || w >= v) r.fail("word id " + std::to_string(w) + " out of range [0," +
                                  std::to_string(v) + ")");
      if (c < 1) r.fail("non-positive count " + std::to_string(c));
      d.counts.emplace_back(static_cast<std::int32_t>(w), static_cast<std::int32_t>(c));
    }
    std::sort(d.counts.begin(), d.counts.end());
    corpus.documents.push_back(std::move(d));
  }
  if (r.next(line)) r.fail("unexpected extra line after " + std::to_string(m) + " documents");
  return corpus;
}

}  // namespace topicaudit
