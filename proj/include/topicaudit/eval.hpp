#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "topicaudit/common.hpp"
#include "topicaudit/corpus.hpp"
#include "topicaudit/lda.hpp"
#include "topicaudit/lira.hpp"

namespace topicaudit {

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), non-decreasing, ends (1,1)
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  // Smallest empirically meaningful FPR for log-scaled plotting.
  double min_plot_fpr() const { return n_neg > 0 ? 1.0 / static_cast<double>(n_neg) : 0.0; }
};

// Threshold sweep over unique scores, descending; equal scores cross the
// threshold together. AUC by the trapezoid rule (ties earn half credit,
// matching the Mann-Whitney statistic).
inline RocCurve roc_curve(const std::vector<AttackScore>& scores) {
  std::size_t n_pos = 0, n_neg = 0;
  for (const AttackScore& s : scores) (s.label ? n_pos : n_neg) += 1;
  require(n_pos >= 1 && n_neg >= 1, "roc_curve: need at least one positive and one negative");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a].lambda > scores[b].lambda;
  });

  RocCurve curve;
  curve.n_pos = n_pos;
  curve.n_neg = n_neg;
  curve.points.emplace_back(0.0, 0.0);
  double auc = 0.0;
  std::size_t tp = 0, fp = 0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]].lambda == scores[order[i]].lambda) ++j;
    for (std::size_t t = i; t < j; ++t) (scores[order[t]].label ? tp : fp) += 1;
    const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
    const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
    curve.points.emplace_back(fpr, tpr);
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
    prev_fpr = fpr;
    prev_tpr = tpr;
    i = j;
  }
  curve.auc = auc;
  return curve;
}

// TPR of the largest achieved FPR <= fpr_target; no interpolation, so
// unreachable low-FPR operating points earn zero.
inline double tpr_at_fpr(const RocCurve& curve, double fpr_target) {
  require(fpr_target > 0.0 && fpr_target < 1.0, "tpr_at_fpr: target must be in (0,1)");
  double best = 0.0;
  for (const auto& [fpr, tpr] : curve.points)
    if (fpr <= fpr_target) best = std::max(best, tpr);
  return best;
}

// The m most probable words of topic t; ties broken by word id ascending.
inline std::vector<std::int32_t> top_word_ids(const TopicModel& model, int t, std::size_t m) {
  require(t >= 0 && t < model.k, "top_words: topic index out of range");
  const std::size_t v = model.v();
  std::vector<std::int32_t> ids(v);
  std::iota(ids.begin(), ids.end(), 0);
  const double* row = model.row(t);
  const std::size_t take = std::min(m, v);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(),
                    [&](std::int32_t a, std::int32_t b) {
                      if (row[a] != row[b]) return row[a] > row[b];
                      return a < b;
                    });
  ids.resize(take);
  return ids;
}

inline std::vector<std::string> top_words(const TopicModel& model, int t, std::size_t m) {
  std::vector<std::string> out;
  for (std::int32_t id : top_word_ids(model, t, m))
    out.push_back(model.vocabulary.terms[static_cast<std::size_t>(id)]);
  return out;
}

struct CoherenceReport {
  std::vector<double> per_topic;
  double mean = 0.0;
  std::vector<std::vector<std::string>> top_words;
  std::size_t zero_df_warnings = 0;  // top words absent from the reference corpus
};

// Co-document-frequency coherence over each topic's top words:
// sum over ordered pairs of log((D(v_m, v_l) + 1) / D(v_l)), where v_l ranks
// above v_m and D counts reference documents. D(v_l)=0 (possible when a DP
// vocabulary kept a word the reference lost) falls back to 1 with a warning.
inline CoherenceReport topic_coherence(const TopicModel& model, const Corpus& reference,
                                       std::size_t coherence_top_m = 10) {
  require(coherence_top_m >= 2, "topic_coherence: coherence_top_m must be >= 2");
  require(reference.vocabulary.terms == model.vocabulary.terms,
          "topic_coherence: reference corpus vocabulary differs from the model's");

  // Document sets per needed word, as sorted doc indices.
  std::vector<std::vector<std::int32_t>> needed(model.k);
  std::vector<std::vector<std::size_t>> doc_sets(model.vocabulary.size());
  std::vector<bool> want(model.vocabulary.size(), false);
  for (int t = 0; t < model.k; ++t) {
    needed[static_cast<std::size_t>(t)] = top_word_ids(model, t, coherence_top_m);
    for (std::int32_t w : needed[static_cast<std::size_t>(t)])
      want[static_cast<std::size_t>(w)] = true;
  }
  for (std::size_t i = 0; i < reference.documents.size(); ++i)
    for (const auto& [w, c] : reference.documents[i].counts)
      if (want[static_cast<std::size_t>(w)]) doc_sets[static_cast<std::size_t>(w)].push_back(i);

  auto co_count = [&](std::int32_t a, std::int32_t b) {
    const auto& da = doc_sets[static_cast<std::size_t>(a)];
    const auto& db = doc_sets[static_cast<std::size_t>(b)];
    std::size_t i = 0, j = 0, n = 0;
    while (i < da.size() && j < db.size()) {
      if (da[i] == db[j]) {
        ++n;
        ++i;
        ++j;
      } else if (da[i] < db[j]) {
        ++i;
      } else {
        ++j;
      }
    }
    return n;
  };

  CoherenceReport report;
  report.per_topic.resize(static_cast<std::size_t>(model.k));
  report.top_words.resize(static_cast<std::size_t>(model.k));
  for (int t = 0; t < model.k; ++t) {
    const auto& tops = needed[static_cast<std::size_t>(t)];
    double c = 0.0;
    for (std::size_t m = 1; m < tops.size(); ++m) {
      for (std::size_t l = 0; l < m; ++l) {
        double df = static_cast<double>(doc_sets[static_cast<std::size_t>(tops[l])].size());
        if (df == 0.0) {
          df = 1.0;
          ++report.zero_df_warnings;
        }
        const double co = static_cast<double>(co_count(tops[m], tops[l]));
        c += std::log((co + 1.0) / df);
      }
    }
    report.per_topic[static_cast<std::size_t>(t)] = c;
    for (std::int32_t w : tops)
      report.top_words[static_cast<std::size_t>(t)].push_back(
          model.vocabulary.terms[static_cast<std::size_t>(w)]);
  }
  report.mean = std::accumulate(report.per_topic.begin(), report.per_topic.end(), 0.0) /
                static_cast<double>(model.k);
  return report;
}

// ---------------------------------------------------------------------------
// Result files.

inline void save_roc(const std::string& path, const RocCurve& curve, AttackMode mode,
                     std::uint64_t seed, const std::vector<std::string>& comments = {}) {
  std::string out = "fpr,tpr\n";
  for (const auto& [fpr, tpr] : curve.points) out += fmt_g17(fpr) + "," + fmt_g17(tpr) + "\n";
  out += "# auc " + fmt_g17(curve.auc) + "\n";
  out += "# n_pos " + std::to_string(curve.n_pos) + "\n";
  out += "# n_neg " + std::to_string(curve.n_neg) + "\n";
  out += "# min_plot_fpr " + fmt_g17(curve.min_plot_fpr()) + "\n";
  out += "# mode " + std::string(to_string(mode)) + "\n";
  out += "# seed " + std::to_string(seed) + "\n";
  for (const auto& c : comments) out += "# " + c + "\n";
  write_text_file_atomic(path, out);
}

inline RocCurve load_roc(const std::string& path) {
  RocCurve curve;
  std::istringstream in(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(std::move(line));
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string key, value;
      if (meta >> key >> value) {
        try {
          if (key == "auc") curve.auc = std::stod(value);
          if (key == "n_pos") curve.n_pos = static_cast<std::size_t>(std::stoull(value));
          if (key == "n_neg") curve.n_neg = static_cast<std::size_t>(std::stoull(value));
        } catch (const std::exception&) {
          throw Error(path + ":" + std::to_string(lineno) + ": bad metadata value");
        }
      }
      continue;
    }
    if (line.rfind("fpr,", 0) == 0) continue;  // header
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(path + ":" + std::to_string(lineno) + ": expected \"fpr,tpr\"");
    try {
      curve.points.emplace_back(std::stod(line.substr(0, comma)),
                                std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw Error(path + ":" + std::to_string(lineno) + ": bad point");
    }
  }
  return curve;
}

inline void save_coherence(const std::string& path, const CoherenceReport& report,
                           const std::vector<std::string>& comments = {}) {
  std::string out = "topic,coherence,top_words\n";
  for (std::size_t t = 0; t < report.per_topic.size(); ++t) {
    out += std::to_string(t) + "," + fmt_g17(report.per_topic[t]) + ",";
    for (std::size_t i = 0; i < report.top_words[t].size(); ++i) {
      if (i) out += '|';
      out += report.top_words[t][i];
    }
    out += "\n";
  }
  out += "mean," + fmt_g17(report.mean) + ",\n";
  out += "# zero_df_warnings " + std::to_string(report.zero_df_warnings) + "\n";
  for (const auto& c : comments) out += "# " + c + "\n";
  write_text_file_atomic(path, out);
}

}  // namespace topicaudit
