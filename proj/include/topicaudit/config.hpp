#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "topicaudit/common.hpp"
#include "topicaudit/corpus.hpp"
#include "topicaudit/dp.hpp"
#include "topicaudit/lda.hpp"
#include "topicaudit/lira.hpp"

namespace topicaudit {

// Flat "[section]" + "key = value" text config. '#' or ';' start comments.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text, const std::string& origin = "<config>") {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = detail::strip_cr(std::move(line));
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw Error(origin + ":" + std::to_string(lineno) + ": unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty())
          throw Error(origin + ":" + std::to_string(lineno) + ": empty section name");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw Error(origin + ":" + std::to_string(lineno) + ": expected \"key = value\"");
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty()) throw Error(origin + ":" + std::to_string(lineno) + ": empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (cfg.values_.count(full))
        throw Error(origin + ":" + std::to_string(lineno) + ": duplicate key \"" + full + "\"");
      cfg.values_[full] = value;
    }
    cfg.origin_ = origin;
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      require(pos == it->second.size(), "");
      return v;
    } catch (const std::exception&) {
      throw Error(origin_ + ": key \"" + key + "\" is not a number: \"" + it->second + "\"");
    }
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(it->second, &pos);
      require(pos == it->second.size(), "");
      return v;
    } catch (const std::exception&) {
      throw Error(origin_ + ": key \"" + key + "\" is not an integer: \"" + it->second + "\"");
    }
  }

  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(it->second, &pos);
      require(pos == it->second.size(), "");
      return v;
    } catch (const std::exception&) {
      throw Error(origin_ + ": key \"" + key + "\" is not an unsigned integer: \"" +
                  it->second + "\"");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw Error(origin_ + ": key \"" + key + "\" is not a boolean: \"" + it->second + "\"");
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : split_list(key))
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw Error(origin_ + ": key \"" + key + "\" has a non-numeric item \"" + item + "\"");
      }
    return out;
  }

  std::vector<std::int64_t> get_int_list(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const std::string& item : split_list(key))
      try {
        out.push_back(std::stoll(item));
      } catch (const std::exception&) {
        throw Error(origin_ + ": key \"" + key + "\" has a non-integer item \"" + item + "\"");
      }
    return out;
  }

  std::vector<std::string> get_string_list(const std::string& key) const {
    return split_list(key);
  }

  // Unknown keys are almost always typos; call after reading every field.
  void reject_unconsumed() const {
    for (const auto& [key, value] : values_)
      if (!consumed_.count(key)) throw Error(origin_ + ": unknown config key \"" + key + "\"");
  }

  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
    return s.substr(b, e - b);
  }

 private:
  std::vector<std::string> split_list(const std::string& key) const {
    consumed_.insert(key);
    std::vector<std::string> out;
    auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
  std::string origin_;
};

struct ExperimentConfig {
  // [data] — exactly one source: raw text, a saved corpus, UCI files, or synthetic.
  std::string raw_text;
  std::string authors_file;
  std::string corpus_file;
  std::string vocab_file;
  std::string docword_file;
  bool synthetic = false;
  int synthetic_k = 5;
  std::int64_t synthetic_v = 200;
  std::int64_t synthetic_docs = 400;
  int synthetic_doc_len = 60;
  double synthetic_alpha = 0.3;          // document-topic Dirichlet of the generator
  double synthetic_concentration = 0.1;  // topic-word Dirichlet of the planted phi
  std::uint64_t synthetic_seed = 7;

  // [preprocess]
  int min_token_len = 3;
  int max_token_len = 15;
  std::string stopword_file;  // empty = embedded default list
  std::string stemmer = "none";

  // [lda]
  int k = 10;
  double alpha = -1.0;
  double beta = 0.01;
  int iterations = 200;
  int burn_in = -1;
  std::vector<std::int64_t> k_grid;

  // [attack]
  std::string attack_mode = "online_ensemble";
  std::string attack_statistic = "log_likelihood";
  int n_shadow = 64;
  std::vector<std::string> baselines = {"neg_entropy", "logit_max_posterior", "std_dev"};

  // [dp]
  double epsilon1 = 1.0;
  double delta1 = 1e-5;
  double alpha_cutoff = 3.0;
  std::vector<double> epsilon1_grid;
  double epsilon2 = 1.0;
  double delta2 = 0.0;
  int max_doc_len = 0;
  std::vector<double> epsilon2_grid;

  // [eval]
  std::int64_t coherence_top_m = 10;
  std::vector<double> fpr_targets = {0.001, 0.01, 0.1};

  // [experiment]
  int replications = 10;
  std::uint64_t master_seed = 1;

  std::string source_text;  // verbatim config bytes, for hashing into outputs

  std::uint64_t config_hash() const { return fnv1a64(source_text); }

  PreprocessConfig preprocess_config() const {
    PreprocessConfig cfg;
    cfg.min_token_len = min_token_len;
    cfg.max_token_len = max_token_len;
    if (!stopword_file.empty()) cfg.stopwords = load_stopwords(stopword_file);
    if (stemmer == "porter")
      cfg.stemmer = Stemmer::porter;
    else
      require(stemmer == "none", "config: stemmer must be \"none\" or \"porter\"");
    return cfg;
  }

  LdaConfig lda_config(std::uint64_t seed) const {
    LdaConfig cfg;
    cfg.k = k;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.iterations = iterations;
    cfg.burn_in = burn_in;
    cfg.seed = seed;
    return cfg;
  }

  AttackConfig attack_config(std::uint64_t seed) const {
    AttackConfig cfg;
    cfg.mode = attack_mode_from_string(attack_mode);
    cfg.statistic = statistic_from_string(attack_statistic);
    cfg.n_shadow = n_shadow;
    cfg.seed = seed;
    return cfg;
  }

  DpsuParams dpsu_params(double e1, std::uint64_t seed) const {
    DpsuParams p;
    p.epsilon1 = e1;
    p.delta1 = delta1;
    p.alpha_cutoff = alpha_cutoff;
    p.seed = seed;
    return p;
  }

  DpLdaParams dplda_params(double e2, std::uint64_t lda_seed, std::uint64_t noise_seed) const {
    DpLdaParams p;
    p.epsilon2 = e2;
    p.delta2 = delta2;
    p.max_doc_len = max_doc_len;
    p.base = lda_config(lda_seed);
    p.seed = noise_seed;
    return p;
  }

  static ExperimentConfig parse(const std::string& text, const std::string& origin = "<config>") {
    const KvConfig kv = KvConfig::parse(text, origin);
    ExperimentConfig c;
    c.source_text = text;

    c.raw_text = kv.get_string("data.raw_text", "");
    c.authors_file = kv.get_string("data.authors", "");
    c.corpus_file = kv.get_string("data.corpus", "");
    c.vocab_file = kv.get_string("data.vocab", "");
    c.docword_file = kv.get_string("data.docword", "");
    c.synthetic = kv.get_bool("data.synthetic", false);
    c.synthetic_k = static_cast<int>(kv.get_int("data.synthetic_k", c.synthetic_k));
    c.synthetic_v = kv.get_int("data.synthetic_v", c.synthetic_v);
    c.synthetic_docs = kv.get_int("data.synthetic_docs", c.synthetic_docs);
    c.synthetic_doc_len = static_cast<int>(kv.get_int("data.synthetic_doc_len", c.synthetic_doc_len));
    c.synthetic_alpha = kv.get_double("data.synthetic_alpha", c.synthetic_alpha);
    c.synthetic_concentration =
        kv.get_double("data.synthetic_concentration", c.synthetic_concentration);
    c.synthetic_seed = kv.get_uint64("data.synthetic_seed", c.synthetic_seed);

    c.min_token_len = static_cast<int>(kv.get_int("preprocess.min_token_len", c.min_token_len));
    c.max_token_len = static_cast<int>(kv.get_int("preprocess.max_token_len", c.max_token_len));
    c.stopword_file = kv.get_string("preprocess.stopwords", "");
    c.stemmer = kv.get_string("preprocess.stemmer", c.stemmer);

    c.k = static_cast<int>(kv.get_int("lda.k", c.k));
    c.alpha = kv.get_double("lda.alpha", c.alpha);
    c.beta = kv.get_double("lda.beta", c.beta);
    c.iterations = static_cast<int>(kv.get_int("lda.iterations", c.iterations));
    c.burn_in = static_cast<int>(kv.get_int("lda.burn_in", c.burn_in));
    c.k_grid = kv.get_int_list("lda.k_grid");

    c.attack_mode = kv.get_string("attack.mode", c.attack_mode);
    c.attack_statistic = kv.get_string("attack.statistic", c.attack_statistic);
    c.n_shadow = static_cast<int>(kv.get_int("attack.n_shadow", c.n_shadow));
    const auto baseline_list = kv.get_string_list("attack.baselines");
    if (!baseline_list.empty()) c.baselines = baseline_list;

    c.epsilon1 = kv.get_double("dp.epsilon1", c.epsilon1);
    c.delta1 = kv.get_double("dp.delta1", c.delta1);
    c.alpha_cutoff = kv.get_double("dp.alpha_cutoff", c.alpha_cutoff);
    c.epsilon1_grid = kv.get_double_list("dp.epsilon1_grid");
    c.epsilon2 = kv.get_double("dp.epsilon2", c.epsilon2);
    c.delta2 = kv.get_double("dp.delta2", c.delta2);
    c.max_doc_len = static_cast<int>(kv.get_int("dp.max_doc_len", c.max_doc_len));
    c.epsilon2_grid = kv.get_double_list("dp.epsilon2_grid");

    c.coherence_top_m = kv.get_int("eval.coherence_top_m", c.coherence_top_m);
    const auto fpr_list = kv.get_double_list("eval.fpr_targets");
    if (!fpr_list.empty()) c.fpr_targets = fpr_list;

    c.replications = static_cast<int>(kv.get_int("experiment.replications", c.replications));
    c.master_seed = kv.get_uint64("experiment.master_seed", c.master_seed);

    kv.reject_unconsumed();
    c.validate(origin);
    return c;
  }

  static ExperimentConfig load(const std::string& path) {
    return parse(read_text_file(path), path);
  }

  void validate(const std::string& origin) const {
    auto must_exist = [&](const std::string& path, const char* what) {
      if (!path.empty() && !std::filesystem::exists(path))
        throw Error(origin + ": " + what + " file does not exist: " + path);
    };
    must_exist(raw_text, "data.raw_text");
    must_exist(authors_file, "data.authors");
    must_exist(corpus_file, "data.corpus");
    must_exist(vocab_file, "data.vocab");
    must_exist(docword_file, "data.docword");
    must_exist(stopword_file, "preprocess.stopwords");
    require(replications >= 1, origin + ": experiment.replications must be >= 1");
    require(min_token_len >= 1 && min_token_len <= max_token_len,
            origin + ": need 1 <= min_token_len <= max_token_len");
    const int sources = (!raw_text.empty() ? 1 : 0) + (!corpus_file.empty() ? 1 : 0) +
                        (!docword_file.empty() ? 1 : 0) + (synthetic ? 1 : 0);
    require(sources <= 1, origin + ": configure at most one of data.raw_text, data.corpus, "
                              "data.docword, data.synthetic");
  }
};

}  // namespace topicaudit
