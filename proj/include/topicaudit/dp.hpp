#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "topicaudit/common.hpp"
#include "topicaudit/corpus.hpp"
#include "topicaudit/lda.hpp"

namespace topicaudit {

struct DpsuParams {
  double epsilon1 = 1.0;
  double delta1 = 1e-5;
  double alpha_cutoff = 3.0;  // controls the cap/threshold margin
  std::uint64_t seed = 0;
};

struct DpLdaParams {
  double epsilon2 = 1.0;
  double delta2 = 0.0;   // the count-perturbation mechanism is pure-epsilon
  int max_doc_len = 0;   // sensitivity clamp L; <= 0 resolves to the 95th length percentile
  LdaConfig base;
  std::uint64_t seed = 0;
};

struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;
};

inline PrivacyBudget compose_privacy(double e1, double d1, double e2, double d2) {
  require(e1 >= 0.0 && e2 >= 0.0, "compose_privacy: epsilons must be non-negative");
  require(d1 >= 0.0 && d1 < 1.0 && d2 >= 0.0 && d2 < 1.0,
          "compose_privacy: deltas must be in [0,1)");
  return PrivacyBudget{e1 + e2, d1 + d2};
}

// Exact (eps, delta) curve of the Gaussian mechanism with L2 sensitivity
// `sens`: delta(sigma) = Phi(s/2sigma - eps*sigma/s) - e^eps * Phi(-s/2sigma - eps*sigma/s).
inline double gaussian_mechanism_delta(double sigma, double epsilon, double sens) {
  const double a = sens / (2.0 * sigma);
  const double b = epsilon * sigma / sens;
  return normal_cdf(a - b) - std::exp(epsilon) * normal_cdf(-a - b);
}

// Smallest noise scale making the Gaussian mechanism (eps, delta)-DP,
// found by bisection on the closed-form delta curve.
inline double analytic_gaussian_sigma(double epsilon, double delta, double sens = 1.0) {
  require(epsilon > 0.0, "analytic_gaussian_sigma: epsilon must be > 0");
  require(delta > 0.0 && delta < 1.0, "analytic_gaussian_sigma: delta must be in (0,1)");
  require(sens > 0.0, "analytic_gaussian_sigma: sensitivity must be > 0");
  double lo = 1e-10 * sens, hi = sens;
  while (gaussian_mechanism_delta(hi, epsilon, sens) > delta) {
    hi *= 2.0;
    require(hi < 1e15 * sens, "analytic_gaussian_sigma: failed to bracket sigma");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gaussian_mechanism_delta(mid, epsilon, sens) > delta)
      lo = mid;
    else
      hi = mid;
  }
  return hi;  // the feasible endpoint
}

// Pre-noise DPSU histogram: per author, a unit-L2 weight budget spread over
// that author's words proportionally to the author's term frequencies, then
// accumulated and capped. Indexed by the corpus vocabulary ids.
inline std::vector<double> dpsu_histogram(const Corpus& corpus, double weight_cap) {
  std::vector<double> hist(corpus.vocabulary.size(), 0.0);
  std::map<std::int64_t, std::unordered_map<std::int32_t, double>> by_author;
  for (const Document& d : corpus.documents) {
    auto& words = by_author[Corpus::author_of(d)];
    for (const auto& [w, c] : d.counts) words[w] += static_cast<double>(c);
  }
  for (const auto& [author, words] : by_author) {
    double sq = 0.0;
    for (const auto& [w, c] : words) sq += c * c;
    if (sq <= 0.0) continue;
    const double norm = std::sqrt(sq);
    for (const auto& [w, c] : words)
      hist[static_cast<std::size_t>(w)] += c / norm;  // author's L2 contribution is exactly 1
  }
  for (double& h : hist) h = std::min(h, weight_cap);
  return hist;
}

// DP set-union vocabulary selection: Gaussian noise on the capped histogram,
// release above the threshold. The released set is always a subset of the
// words the authors actually contributed, whatever the noise does.
inline Vocabulary dpsu_select(const Corpus& corpus, const DpsuParams& p) {
  require(p.epsilon1 > 0.0, "dpsu_select: epsilon1 must be > 0");
  require(p.delta1 > 0.0 && p.delta1 < 1.0, "dpsu_select: delta1 must be in (0,1)");
  require(p.alpha_cutoff > 0.0, "dpsu_select: alpha_cutoff must be > 0");
  const double sigma = analytic_gaussian_sigma(p.epsilon1, p.delta1, 1.0);
  const double threshold = 1.0 + p.alpha_cutoff * sigma;
  const double cap = threshold + p.alpha_cutoff * sigma;
  const std::vector<double> hist = dpsu_histogram(corpus, cap);
  Vocabulary released;
  for (std::size_t w = 0; w < hist.size(); ++w) {
    if (hist[w] <= 0.0) continue;  // never released: no author contributed it
    Rng rng(derive_seed(p.seed, /*stream=*/0x64707375ULL, w));  // "dpsu"
    if (hist[w] + sigma * rng.normal() > threshold) released.add(corpus.vocabulary.terms[w]);
  }
  return released;
}

namespace detail {

// Nearest-rank 95th percentile of document lengths, floored at 1.
inline int default_doc_clamp(const Corpus& corpus) {
  std::vector<std::int64_t> lengths;
  lengths.reserve(corpus.size());
  for (const auto& d : corpus.documents) lengths.push_back(d.length());
  if (lengths.empty()) return 1;
  std::sort(lengths.begin(), lengths.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(lengths.size())));
  const std::int64_t l = lengths[std::min(rank == 0 ? 0 : rank - 1, lengths.size() - 1)];
  return static_cast<int>(std::max<std::int64_t>(l, 1));
}

// Keeps at most `limit` tokens of d, scanning entries in word-id order.
inline Document truncate_document(const Document& d, std::int64_t limit) {
  if (d.length() <= limit) return d;
  Document out;
  out.doc_id = d.doc_id;
  out.author = d.author;
  std::int64_t left = limit;
  for (const auto& [w, c] : d.counts) {
    if (left <= 0) break;
    const std::int32_t take = static_cast<std::int32_t>(std::min<std::int64_t>(c, left));
    out.counts.emplace_back(w, take);
    left -= take;
  }
  return out;
}

}  // namespace detail

// Document-level DP LDA: clamp document lengths to L, run the non-private
// collapsed Gibbs sampler, perturb the final topic-word counts with
// Laplace(2L/eps2) noise, clamp negatives, and renormalize with beta
// smoothing. Only the perturbed counts reach the released Phi.
inline TopicModel dp_lda_train(const Corpus& corpus, const DpLdaParams& p,
                               int* resolved_clamp = nullptr) {
  require(p.epsilon2 > 0.0, "dp_lda_train: epsilon2 must be > 0");
  require(!corpus.documents.empty(), "dp_lda_train: empty corpus");
  const int clamp = p.max_doc_len > 0 ? p.max_doc_len : detail::default_doc_clamp(corpus);
  if (resolved_clamp) *resolved_clamp = clamp;

  Corpus clipped;
  clipped.vocabulary = corpus.vocabulary;
  clipped.documents.reserve(corpus.size());
  for (const Document& d : corpus.documents)
    clipped.documents.push_back(detail::truncate_document(d, clamp));

  const int k = p.base.k;
  const std::size_t v = corpus.vocabulary.size();
  std::vector<std::int64_t> counts;
  const int snapshot_sweep = p.base.resolved_burn_in();
  const SweepHook capture = [&](int sweep, const std::vector<std::int64_t>& n_zw,
                                const std::vector<std::int64_t>&) {
    if (sweep == snapshot_sweep) counts = n_zw;
  };
  TopicModel nonprivate = train_lda(clipped, p.base, capture);
  require(counts.size() == static_cast<std::size_t>(k) * v,
          "dp_lda_train: count snapshot missing");

  const double scale = 2.0 * static_cast<double>(clamp) / p.epsilon2;
  Rng rng(derive_seed(p.seed, /*stream=*/0x64706c6461ULL, 0));  // "dplda"
  std::vector<double> noisy(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    noisy[i] = std::max(0.0, static_cast<double>(counts[i]) + rng.laplace(scale));

  TopicModel model;
  model.k = k;
  model.vocabulary = corpus.vocabulary;
  model.phi.resize(noisy.size());
  const double vbeta = static_cast<double>(v) * p.base.beta;
  for (int z = 0; z < k; ++z) {
    const auto zi = static_cast<std::size_t>(z);
    double row = 0.0;
    for (std::size_t w = 0; w < v; ++w) row += noisy[zi * v + w];
    const double denom = row + vbeta;
    for (std::size_t w = 0; w < v; ++w)
      model.phi[zi * v + w] = (noisy[zi * v + w] + p.base.beta) / denom;
  }
  return model;
}

struct FdptmResult {
  TopicModel model;
  Vocabulary vocabulary;  // the DPSU release; also the model's vocabulary
  PrivacyBudget budget;
  int resolved_clamp = 0;
};

// Private-vocabulary + private-model pipeline over an already-tokenized
// corpus: dpsu_select -> sanitize -> dp_lda_train, with summed budgets.
inline FdptmResult fdptm_bow(const Corpus& corpus, const DpsuParams& dpsu,
                             const DpLdaParams& dplda) {
  FdptmResult r;
  r.vocabulary = dpsu_select(corpus, dpsu);
  require(r.vocabulary.size() > 0, "fdptm: empty private vocabulary");
  const Corpus sanitized = sanitize(corpus, r.vocabulary);
  r.model = dp_lda_train(sanitized, dplda, &r.resolved_clamp);
  r.budget = compose_privacy(dpsu.epsilon1, dpsu.delta1, dplda.epsilon2, dplda.delta2);
  return r;
}

// Full pipeline from raw text (one string per document).
inline FdptmResult fdptm(const std::vector<std::string>& raw_docs,
                         const std::vector<std::int64_t>& authors,
                         const PreprocessConfig& pre_cfg, const DpsuParams& dpsu,
                         const DpLdaParams& dplda) {
  require(authors.empty() || authors.size() == raw_docs.size(),
          "fdptm: author list must align with documents");
  const auto tokens = preprocess(raw_docs, pre_cfg);
  Corpus corpus = to_bow(tokens, build_vocabulary(tokens));
  for (std::size_t i = 0; i < corpus.documents.size(); ++i)
    if (!authors.empty()) corpus.documents[i].author = authors[i];
  return fdptm_bow(corpus, dpsu, dplda);
}

// Replay-sufficient description of a private release.
inline void write_privacy_report(const std::string& path, const DpsuParams& dpsu,
                                 const DpLdaParams& dplda, const PrivacyBudget& total,
                                 int resolved_clamp, std::size_t released_vocab_size,
                                 const std::vector<std::string>& comments = {}) {
  std::string out;
  out += "adjacency: document-level, one author per document\n";
  out += "stage: vocabulary_selection\n";
  out += "  mechanism: dpsu_gaussian_histogram\n";
  out += "  epsilon: " + fmt_g17(dpsu.epsilon1) + "\n";
  out += "  delta: " + fmt_g17(dpsu.delta1) + "\n";
  out += "  alpha_cutoff: " + fmt_g17(dpsu.alpha_cutoff) + "\n";
  out += "  sigma: " + fmt_g17(analytic_gaussian_sigma(dpsu.epsilon1, dpsu.delta1, 1.0)) + "\n";
  out += "  seed: " + std::to_string(dpsu.seed) + "\n";
  out += "  released_vocab_size: " + std::to_string(released_vocab_size) + "\n";
  out += "stage: topic_model\n";
  out += "  mechanism: laplace_count_perturbation\n";
  out += "  epsilon: " + fmt_g17(dplda.epsilon2) + "\n";
  out += "  delta: " + fmt_g17(dplda.delta2) + "\n";
  out += "  doc_length_clamp: " + std::to_string(resolved_clamp) + "\n";
  out += "  laplace_scale: " +
         fmt_g17(2.0 * static_cast<double>(resolved_clamp) / dplda.epsilon2) + "\n";
  out += "  seed: " + std::to_string(dplda.seed) + "\n";
  out += "total (adaptive composition):\n";
  out += "  epsilon: " + fmt_g17(total.epsilon) + "\n";
  out += "  delta: " + fmt_g17(total.delta) + "\n";
  for (const auto& c : comments) out += "# " + c + "\n";
  write_text_file_atomic(path, out);
}

}  // namespace topicaudit
