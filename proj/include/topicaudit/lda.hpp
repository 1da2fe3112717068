#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "topicaudit/common.hpp"
#include "topicaudit/corpus.hpp"

namespace topicaudit {

struct LdaConfig {
  int k = 10;
  double alpha = -1.0;  // <= 0 resolves to 1/k
  double beta = 0.01;
  int iterations = 500;
  int burn_in = -1;  // sweep at which counts are snapshotted; <= 0 resolves to iterations
  std::uint64_t seed = 0;

  double resolved_alpha() const { return alpha > 0.0 ? alpha : 1.0 / static_cast<double>(k); }
  int resolved_burn_in() const {
    const int b = burn_in > 0 ? burn_in : iterations;
    return b < iterations ? b : iterations;
  }
};

struct TopicModel {
  int k = 0;
  Vocabulary vocabulary;
  std::vector<double> phi;  // row-major k x V, rows sum to 1

  std::size_t v() const { return vocabulary.size(); }
  double at(int z, std::int32_t w) const {
    return phi[static_cast<std::size_t>(z) * vocabulary.size() + static_cast<std::size_t>(w)];
  }
  const double* row(int z) const { return phi.data() + static_cast<std::size_t>(z) * vocabulary.size(); }
};

struct TopicMixture {
  std::vector<double> weights;  // length k, on the simplex
};

// Called after each full Gibbs sweep (1-based) with the current counts.
using SweepHook =
    std::function<void(int sweep, const std::vector<std::int64_t>& topic_word_counts,
                       const std::vector<std::int64_t>& topic_totals)>;

// Collapsed Gibbs sampler. Phi comes from a single count snapshot taken at
// sweep `burn_in` (default: the last sweep); no cross-sweep averaging.
inline TopicModel train_lda(const Corpus& corpus, const LdaConfig& cfg,
                            const SweepHook& hook = {}) {
  require(cfg.k >= 1, "train_lda: k must be >= 1");
  require(cfg.beta > 0.0, "train_lda: beta must be > 0");
  require(cfg.iterations >= 1, "train_lda: iterations must be >= 1");
  const std::size_t v = corpus.vocabulary.size();
  require(v >= 1, "train_lda: empty vocabulary");
  const std::int64_t total_tokens = corpus.total_tokens();
  require(total_tokens >= 1, "train_lda: all documents are empty");

  const int k = cfg.k;
  const double alpha = cfg.resolved_alpha();
  const double beta = cfg.beta;
  const double vbeta = static_cast<double>(v) * beta;
  const int snapshot_sweep = cfg.resolved_burn_in();

  // Flatten documents into token streams.
  const std::size_t m = corpus.documents.size();
  std::vector<std::int32_t> words(static_cast<std::size_t>(total_tokens));
  std::vector<std::int32_t> assignment(static_cast<std::size_t>(total_tokens));
  std::vector<std::size_t> doc_begin(m + 1, 0);
  {
    std::size_t pos = 0;
    for (std::size_t d = 0; d < m; ++d) {
      doc_begin[d] = pos;
      for (const auto& [w, c] : corpus.documents[d].counts)
        for (std::int32_t r = 0; r < c; ++r) words[pos++] = w;
    }
    doc_begin[m] = pos;
  }

  std::vector<std::int64_t> n_zw(static_cast<std::size_t>(k) * v, 0);
  std::vector<std::int64_t> n_dz(m * static_cast<std::size_t>(k), 0);
  std::vector<std::int64_t> n_z(static_cast<std::size_t>(k), 0);

  Rng rng(derive_seed(cfg.seed, /*stream=*/0x676962627331ULL, 0));  // "gibbs1"
  for (std::size_t d = 0; d < m; ++d) {
    for (std::size_t i = doc_begin[d]; i < doc_begin[d + 1]; ++i) {
      const auto z = static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(k)));
      assignment[i] = z;
      ++n_zw[static_cast<std::size_t>(z) * v + static_cast<std::size_t>(words[i])];
      ++n_dz[d * static_cast<std::size_t>(k) + static_cast<std::size_t>(z)];
      ++n_z[static_cast<std::size_t>(z)];
    }
  }

  std::vector<double> cond(static_cast<std::size_t>(k));
  std::vector<std::int64_t> snapshot_zw, snapshot_z;
  for (int sweep = 1; sweep <= cfg.iterations; ++sweep) {
    for (std::size_t d = 0; d < m; ++d) {
      std::int64_t* dz = n_dz.data() + d * static_cast<std::size_t>(k);
      for (std::size_t i = doc_begin[d]; i < doc_begin[d + 1]; ++i) {
        const std::size_t w = static_cast<std::size_t>(words[i]);
        const std::int32_t old_z = assignment[i];
        --n_zw[static_cast<std::size_t>(old_z) * v + w];
        --dz[static_cast<std::size_t>(old_z)];
        --n_z[static_cast<std::size_t>(old_z)];

        double total = 0.0;
        for (int z = 0; z < k; ++z) {
          const auto zi = static_cast<std::size_t>(z);
          const double p = (static_cast<double>(n_zw[zi * v + w]) + beta) *
                           (static_cast<double>(dz[zi]) + alpha) /
                           (static_cast<double>(n_z[zi]) + vbeta);
          total += p;
          cond[zi] = total;
        }
        const double u = rng.uniform01() * total;
        std::int32_t new_z = k - 1;
        for (int z = 0; z < k; ++z) {
          if (u < cond[static_cast<std::size_t>(z)]) {
            new_z = static_cast<std::int32_t>(z);
            break;
          }
        }
        assignment[i] = new_z;
        ++n_zw[static_cast<std::size_t>(new_z) * v + w];
        ++dz[static_cast<std::size_t>(new_z)];
        ++n_z[static_cast<std::size_t>(new_z)];
      }
    }
    if (sweep == snapshot_sweep) {
      snapshot_zw = n_zw;
      snapshot_z = n_z;
    }
    if (hook) hook(sweep, n_zw, n_z);
  }

  TopicModel model;
  model.k = k;
  model.vocabulary = corpus.vocabulary;
  model.phi.resize(static_cast<std::size_t>(k) * v);
  for (int z = 0; z < k; ++z) {
    const auto zi = static_cast<std::size_t>(z);
    const double denom = static_cast<double>(snapshot_z[zi]) + vbeta;
    for (std::size_t w = 0; w < v; ++w)
      model.phi[zi * v + w] = (static_cast<double>(snapshot_zw[zi * v + w]) + beta) / denom;
  }
  return model;
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Eq.-style document log-likelihood: sum_w c_w * log(sum_z theta_z * phi_{z,w}).
// Returns -inf when some observed word has zero mixture probability.
inline double log_likelihood(const TopicModel& model, const Document& d,
                             const TopicMixture& theta) {
  require(static_cast<int>(theta.weights.size()) == model.k,
          "log_likelihood: theta length != k");
  const std::size_t v = model.v();
  double ll = 0.0;
  for (const auto& [w, c] : d.counts) {
    require(w >= 0 && static_cast<std::size_t>(w) < v,
            "log_likelihood: word id out of range for model vocabulary");
    double mix = 0.0;
    for (int z = 0; z < model.k; ++z) mix += theta.weights[static_cast<std::size_t>(z)] * model.at(z, w);
    if (mix <= 0.0) return kNegInf;
    ll += static_cast<double>(c) * std::log(mix);
  }
  return ll;
}

// Called once per EM iteration with the log-likelihood of the current theta.
using ThetaIterHook = std::function<void(int iter, double log_likelihood)>;

// Maximizes log_likelihood over theta with multiplicative EM fixed-point
// updates from a uniform start. Returns (theta_hat, attained value zeta).
inline std::pair<TopicMixture, double> estimate_theta(const TopicModel& model, const Document& d,
                                                      double tol = 1e-8, int max_iter = 1000,
                                                      const ThetaIterHook& hook = {}) {
  require(!d.counts.empty(), "estimate_theta: empty document");
  require(tol >= 0.0, "estimate_theta: tol must be >= 0");
  require(max_iter >= 1, "estimate_theta: max_iter must be >= 1");
  const int k = model.k;
  const std::size_t v = model.v();
  const std::size_t nw = d.counts.size();
  double n_d = 0.0;
  for (const auto& [w, c] : d.counts) {
    require(w >= 0 && static_cast<std::size_t>(w) < v,
            "estimate_theta: word id out of range for model vocabulary");
    n_d += static_cast<double>(c);
  }

  std::vector<double> theta(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k));
  std::vector<double> next(static_cast<std::size_t>(k));
  std::vector<double> mix(nw);

  auto evaluate = [&]() {
    double ll = 0.0;
    for (std::size_t j = 0; j < nw; ++j) {
      const std::int32_t w = d.counts[j].first;
      double s = 0.0;
      for (int z = 0; z < k; ++z) s += theta[static_cast<std::size_t>(z)] * model.at(z, w);
      mix[j] = s;
      ll = s > 0.0 ? ll + static_cast<double>(d.counts[j].second) * std::log(s) : kNegInf;
    }
    return ll;
  };

  double prev = kNegInf;
  for (int iter = 0; iter < max_iter; ++iter) {
    const double ll = evaluate();
    if (hook) hook(iter, ll);
    if (iter > 0 && ll - prev < tol) return {TopicMixture{std::move(theta)}, ll};
    prev = ll;

    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t j = 0; j < nw; ++j) {
      if (mix[j] <= 0.0) continue;
      const std::int32_t w = d.counts[j].first;
      const double scale = static_cast<double>(d.counts[j].second) / mix[j];
      for (int z = 0; z < k; ++z)
        next[static_cast<std::size_t>(z)] += scale * theta[static_cast<std::size_t>(z)] * model.at(z, w);
    }
    double total = 0.0;
    for (double& t : next) {
      t /= n_d;
      total += t;
    }
    if (total <= 0.0) break;  // all observed words have zero mass; theta is arbitrary
    for (std::size_t z = 0; z < static_cast<std::size_t>(k); ++z) theta[z] = next[z] / total;
  }
  const double ll = evaluate();
  if (hook) hook(max_iter, ll);
  return {TopicMixture{std::move(theta)}, ll};
}

// Draws a corpus from the LDA generative process under `phi_true`.
inline Corpus generate_synthetic_corpus(const TopicModel& phi_true, double alpha, std::size_t m,
                                        int doc_len, std::uint64_t seed) {
  require(doc_len >= 1, "generate_synthetic_corpus: doc_len must be >= 1");
  require(m >= 1, "generate_synthetic_corpus: M must be >= 1");
  require(alpha > 0.0, "generate_synthetic_corpus: alpha must be > 0");
  const int k = phi_true.k;
  const std::size_t v = phi_true.v();
  require(v >= 1, "generate_synthetic_corpus: empty vocabulary");

  Corpus corpus;
  corpus.vocabulary = phi_true.vocabulary;
  corpus.documents.reserve(m);
  for (std::size_t d = 0; d < m; ++d) {
    Rng rng(derive_seed(seed, /*stream=*/0x67656e646f63ULL, d));  // "gendoc"
    const std::vector<double> theta = rng.dirichlet(alpha, k);
    std::map<std::int32_t, std::int32_t> acc;
    for (int t = 0; t < doc_len; ++t) {
      const int z = rng.categorical(theta.data(), static_cast<std::size_t>(k));
      const int w = rng.categorical(phi_true.row(z), v);
      ++acc[static_cast<std::int32_t>(w)];
    }
    Document doc;
    doc.doc_id = static_cast<std::int64_t>(d);
    doc.counts.assign(acc.begin(), acc.end());
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

// Convenience vocabulary of v distinct synthetic tokens.
inline Vocabulary synthetic_vocabulary(std::size_t v) {
  Vocabulary vocab;
  for (std::size_t i = 0; i < v; ++i) vocab.add("w" + std::to_string(i));
  return vocab;
}

// Random model with rows drawn from a symmetric Dirichlet; small
// concentration values give sharp, well-separated planted topics.
inline TopicModel sample_topic_model(int k, const Vocabulary& vocab, double concentration,
                                     std::uint64_t seed) {
  require(k >= 1, "sample_topic_model: k must be >= 1");
  require(vocab.size() >= 1, "sample_topic_model: empty vocabulary");
  require(concentration > 0.0, "sample_topic_model: concentration must be > 0");
  TopicModel model;
  model.k = k;
  model.vocabulary = vocab;
  model.phi.reserve(static_cast<std::size_t>(k) * vocab.size());
  for (int z = 0; z < k; ++z) {
    Rng rng(derive_seed(seed, /*stream=*/0x706869726f77ULL, static_cast<std::uint64_t>(z)));
    const std::vector<double> row = rng.dirichlet(concentration, static_cast<int>(vocab.size()));
    model.phi.insert(model.phi.end(), row.begin(), row.end());
  }
  return model;
}

// Model file: header "k V", then k lines of V probabilities (%.17g).
inline void save_model(const TopicModel& model, const std::string& model_path,
                       const std::string& vocab_path,
                       const std::vector<std::string>& comments = {}) {
  const std::size_t v = model.v();
  std::string out;
  out += std::to_string(model.k) + " " + std::to_string(v) + "\n";
  for (int z = 0; z < model.k; ++z) {
    for (std::size_t w = 0; w < v; ++w) {
      if (w) out += ' ';
      out += fmt_g17(model.phi[static_cast<std::size_t>(z) * v + w]);
    }
    out += '\n';
  }
  for (const auto& c : comments) out += "# " + c + "\n";
  write_text_file_atomic(model_path, out);
  save_vocabulary(model.vocabulary, vocab_path, comments);
}

inline TopicModel load_model(const std::string& model_path, const std::string& vocab_path) {
  TopicModel model;
  model.vocabulary = load_vocabulary(vocab_path);
  detail::LineReader r(model_path);
  std::string line;
  if (!r.next(line)) r.fail("missing header line");
  std::istringstream header(line);
  std::string ks, vs;
  if (!(header >> ks >> vs)) r.fail("expected header \"k V\"");
  const std::int64_t k = detail::parse_int(r, "k", ks);
  const std::int64_t v = detail::parse_int(r, "V", vs);
  if (k < 1) r.fail("k must be >= 1");
  if (v != static_cast<std::int64_t>(model.vocabulary.size()))
    r.fail("header V=" + std::to_string(v) + " but vocabulary file has " +
           std::to_string(model.vocabulary.size()) + " tokens");
  model.k = static_cast<int>(k);
  model.phi.reserve(static_cast<std::size_t>(k * v));
  for (std::int64_t z = 0; z < k; ++z) {
    if (!r.next(line)) r.fail("expected " + std::to_string(k) + " probability rows");
    std::istringstream row(line);
    double p = 0.0;
    double sum = 0.0;
    std::int64_t got = 0;
    while (row >> p) {
      if (p < 0.0 || p > 1.0) r.fail("probability out of [0,1]: " + fmt_g17(p));
      model.phi.push_back(p);
      sum += p;
      ++got;
    }
    if (got != v)
      r.fail("row " + std::to_string(z) + " has " + std::to_string(got) + " entries, expected " +
             std::to_string(v));
    if (std::abs(sum - 1.0) > 1e-9)
      r.fail("row " + std::to_string(z) + " sums to " + fmt_g17(sum) + ", expected 1");
  }
  if (r.next(line)) r.fail("unexpected extra line after " + std::to_string(k) + " rows");
  return model;
}

}  // namespace topicaudit
