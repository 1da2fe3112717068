#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "topicaudit/common.hpp"
#include "topicaudit/corpus.hpp"
#include "topicaudit/lda.hpp"
#include "topicaudit/stats.hpp"

namespace topicaudit {

enum class AttackMode {
  online_literal,
  offline_literal,
  online_ensemble,
  offline_ensemble,
  baseline_global,
};

inline const char* to_string(AttackMode mode) {
  switch (mode) {
    case AttackMode::online_literal: return "online_literal";
    case AttackMode::offline_literal: return "offline_literal";
    case AttackMode::online_ensemble: return "online_ensemble";
    case AttackMode::offline_ensemble: return "offline_ensemble";
    case AttackMode::baseline_global: return "baseline_global";
  }
  return "unknown";
}

inline AttackMode attack_mode_from_string(const std::string& name) {
  if (name == "online_literal") return AttackMode::online_literal;
  if (name == "offline_literal") return AttackMode::offline_literal;
  if (name == "online_ensemble") return AttackMode::online_ensemble;
  if (name == "offline_ensemble") return AttackMode::offline_ensemble;
  if (name == "baseline_global") return AttackMode::baseline_global;
  throw Error("unknown attack mode \"" + name + "\"");
}

inline bool is_literal(AttackMode mode) {
  return mode == AttackMode::online_literal || mode == AttackMode::offline_literal;
}
inline bool is_ensemble(AttackMode mode) {
  return mode == AttackMode::online_ensemble || mode == AttackMode::offline_ensemble;
}

struct AttackConfig {
  AttackMode mode = AttackMode::online_ensemble;
  QueryStatisticKind statistic = QueryStatisticKind::log_likelihood;
  int n_shadow = 64;
  std::uint64_t seed = 0;
};

struct AttackScore {
  std::int64_t doc_id = 0;
  double lambda = 0.0;
  bool label = false;    // true membership in the target's training set
  bool clamped = false;  // lambda hit an overflow sentinel
};

// Trains each shadow model; swapped out for the DP pipeline under defense.
using ShadowTrainer = std::function<TopicModel(const Corpus& half, const LdaConfig& cfg)>;

struct ShadowEnsemble {
  std::vector<TopicModel> models;
  std::vector<std::vector<std::int64_t>> memberships;  // per-model sorted doc_ids
  std::vector<std::uint64_t> seeds;                    // per-model training seed
  LdaConfig config;
  AttackMode mode = AttackMode::online_ensemble;
  std::int64_t target_doc_id = -1;  // literal modes only

  std::size_t size() const { return models.size(); }

  bool contains(std::size_t model_idx, std::int64_t doc_id) const {
    const auto& m = memberships[model_idx];
    return std::binary_search(m.begin(), m.end(), doc_id);
  }
};

namespace detail {

// Half-sample of the pool's positions; sorted for stable corpus order.
inline std::vector<std::int64_t> sample_half_ids(const Corpus& pool, Rng& rng) {
  const std::size_t m = pool.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  for (std::size_t i = m - 1; i > 0; --i) {
    const std::size_t j = rng.uniform_int(i + 1);
    std::swap(order[i], order[j]);
  }
  std::vector<std::int64_t> ids;
  ids.reserve(m / 2);
  for (std::size_t i = 0; i < m / 2; ++i) ids.push_back(pool.documents[order[i]].doc_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace detail

// Builds the shadow collection. Ensemble modes: n_shadow independent
// half-samples shared by all documents. Literal modes: n_shadow/2 pairs where
// pair j trains one model on D_j with `target_doc_id` forced in and one with
// it forced out, mirroring the per-document attack definition.
inline ShadowEnsemble train_shadow_ensemble(const Corpus& pool, const AttackConfig& cfg,
                                            const LdaConfig& lda_cfg,
                                            std::int64_t target_doc_id = -1, int threads = 1,
                                            const ShadowTrainer& trainer = {}) {
  require(pool.size() >= 4, "train_shadow_ensemble: pool must have at least 4 documents");
  require(cfg.mode != AttackMode::baseline_global,
          "train_shadow_ensemble: baseline_global uses no shadow models");
  if (is_literal(cfg.mode)) {
    require(cfg.n_shadow >= 4 && cfg.n_shadow % 2 == 0,
            "train_shadow_ensemble: literal modes need an even n_shadow >= 4");
    require(target_doc_id >= 0, "train_shadow_ensemble: literal modes need a target doc_id");
    bool found = false;
    for (const auto& d : pool.documents) found = found || d.doc_id == target_doc_id;
    require(found, "train_shadow_ensemble: target doc_id not in pool");
  } else {
    require(cfg.n_shadow >= 8, "train_shadow_ensemble: ensemble modes need n_shadow >= 8");
  }

  const auto n = static_cast<std::size_t>(cfg.n_shadow);
  ShadowEnsemble ens;
  ens.config = lda_cfg;
  ens.mode = cfg.mode;
  ens.target_doc_id = is_literal(cfg.mode) ? target_doc_id : -1;
  ens.models.resize(n);
  ens.memberships.resize(n);
  ens.seeds.resize(n);

  if (is_literal(cfg.mode)) {
    for (std::size_t pair = 0; pair < n / 2; ++pair) {
      Rng rng(derive_seed(cfg.seed, /*stream=*/0x736861647331ULL, pair));  // "shads1"
      std::vector<std::int64_t> base = detail::sample_half_ids(pool, rng);
      std::vector<std::int64_t> with = base, without = base;
      auto it = std::lower_bound(with.begin(), with.end(), target_doc_id);
      if (it == with.end() || *it != target_doc_id) with.insert(it, target_doc_id);
      auto out_it = std::lower_bound(without.begin(), without.end(), target_doc_id);
      if (out_it != without.end() && *out_it == target_doc_id) without.erase(out_it);
      ens.memberships[2 * pair] = std::move(with);
      ens.memberships[2 * pair + 1] = std::move(without);
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      Rng rng(derive_seed(cfg.seed, /*stream=*/0x736861647331ULL, j));
      ens.memberships[j] = detail::sample_half_ids(pool, rng);
    }
  }
  for (std::size_t j = 0; j < n; ++j)
    ens.seeds[j] = derive_seed(cfg.seed, /*stream=*/0x736861647432ULL, j);  // "shadt2"

  parallel_for(n, threads, [&](std::size_t j) {
    Corpus half = corpus_subset(pool, ens.memberships[j]);
    LdaConfig mc = lda_cfg;
    mc.seed = ens.seeds[j];
    ens.models[j] = trainer ? trainer(half, mc) : train_lda(half, mc);
  });
  return ens;
}

namespace detail {

// Per-model statistic samples for d, split by membership. When `doc_vocab` is
// given, d is re-expressed in each model's vocabulary (DP shadows have private
// vocabularies); models where d loses every word contribute no sample.
inline void shadow_samples(const Document& d, const ShadowEnsemble& ens,
                           QueryStatisticKind statistic, const Vocabulary* doc_vocab,
                           std::vector<double>& in_samples, std::vector<double>& out_samples) {
  in_samples.clear();
  out_samples.clear();
  for (std::size_t j = 0; j < ens.size(); ++j) {
    double z;
    if (doc_vocab) {
      const Document mapped = map_document(d, *doc_vocab, ens.models[j].vocabulary);
      if (mapped.counts.empty()) continue;
      z = query_statistic(statistic, ens.models[j], mapped);
    } else {
      z = query_statistic(statistic, ens.models[j], d);
    }
    (ens.contains(j, d.doc_id) ? in_samples : out_samples).push_back(z);
  }
}

inline double observed_statistic(const TopicModel& phi_obs, const Document& d,
                                 QueryStatisticKind statistic, const Vocabulary* doc_vocab) {
  if (!doc_vocab) return query_statistic(statistic, phi_obs, d);
  const Document mapped = map_document(d, *doc_vocab, phi_obs.vocabulary);
  require(!mapped.counts.empty(),
          "observed_statistic: document shares no vocabulary with the released model");
  return query_statistic(statistic, phi_obs, mapped);
}

}  // namespace detail

// Overflow sentinels for the density ratio (lambda is always positive).
inline constexpr double kLambdaMax = 1e308;
inline constexpr double kLambdaMin = 1e-308;

// Likelihood ratio of the observed statistic under the in/out normal fits.
inline double online_lira(const TopicModel& phi_obs, const Document& d,
                          const ShadowEnsemble& ens, QueryStatisticKind statistic,
                          const Vocabulary* doc_vocab = nullptr, bool* clamped = nullptr) {
  require(!d.counts.empty(), "online_lira: empty document");
  std::vector<double> in_s, out_s;
  detail::shadow_samples(d, ens, statistic, doc_vocab, in_s, out_s);
  require(in_s.size() >= 2, "online_lira: fewer than 2 in-models for doc " +
                                std::to_string(d.doc_id));
  require(out_s.size() >= 2, "online_lira: fewer than 2 out-models for doc " +
                                 std::to_string(d.doc_id));
  const NormalFit fit_in = fit_normal(in_s);
  const NormalFit fit_out = fit_normal(out_s);
  const double zeta = detail::observed_statistic(phi_obs, d, statistic, doc_vocab);
  const double log_ratio = normal_logpdf(zeta, fit_in.mean, fit_in.variance) -
                           normal_logpdf(zeta, fit_out.mean, fit_out.variance);
  if (log_ratio >= 709.0) {
    if (clamped) *clamped = true;
    return kLambdaMax;
  }
  if (log_ratio <= -709.0) {
    if (clamped) *clamped = true;
    return kLambdaMin;
  }
  return std::exp(log_ratio);
}

// One-sided variant: P[N(mu_out, sigma_out^2) <= zeta_obs]; in-models ignored.
inline double offline_lira(const TopicModel& phi_obs, const Document& d,
                           const ShadowEnsemble& ens, QueryStatisticKind statistic,
                           const Vocabulary* doc_vocab = nullptr) {
  require(!d.counts.empty(), "offline_lira: empty document");
  std::vector<double> in_s, out_s;
  detail::shadow_samples(d, ens, statistic, doc_vocab, in_s, out_s);
  require(out_s.size() >= 2, "offline_lira: fewer than 2 out-models for doc " +
                                 std::to_string(d.doc_id));
  const NormalFit fit_out = fit_normal(out_s);
  const double zeta = detail::observed_statistic(phi_obs, d, statistic, doc_vocab);
  return normal_cdf((zeta - fit_out.mean) / fit_out.stddev());
}

// Shadow-free scorers: the raw statistic is the membership score.
inline std::vector<AttackScore> baseline_global(const TopicModel& phi_obs,
                                                const std::vector<Document>& docs,
                                                QueryStatisticKind statistic) {
  require(statistic != QueryStatisticKind::log_likelihood,
          "baseline_global: log_likelihood is the LiRA statistic, not a baseline");
  std::vector<AttackScore> scores;
  scores.reserve(docs.size());
  for (const Document& d : docs) {
    if (d.counts.empty()) continue;
    AttackScore s;
    s.doc_id = d.doc_id;
    s.lambda = query_statistic(statistic, phi_obs, d);
    scores.push_back(s);
  }
  return scores;
}

// Batch driver: scores every non-empty document under the configured attack.
// Empty documents are skipped and counted into *skipped when provided.
inline std::vector<AttackScore> attack_corpus(const TopicModel& phi_obs,
                                              const std::vector<Document>& eval_docs,
                                              const std::vector<bool>& labels,
                                              const AttackConfig& cfg,
                                              const ShadowEnsemble* ensemble = nullptr,
                                              const Vocabulary* doc_vocab = nullptr,
                                              int threads = 1, std::size_t* skipped = nullptr) {
  require(labels.size() == eval_docs.size(), "attack_corpus: labels must align with eval_docs");
  if (cfg.mode == AttackMode::baseline_global) {
    require(cfg.statistic != QueryStatisticKind::log_likelihood,
            "attack_corpus: log_likelihood is the LiRA statistic, not a baseline");
  } else {
    require(ensemble != nullptr, "attack_corpus: this mode needs a shadow ensemble");
    require(ensemble->mode == cfg.mode ||
                (is_ensemble(cfg.mode) && is_ensemble(ensemble->mode)) ||
                (is_literal(cfg.mode) && is_literal(ensemble->mode)),
            "attack_corpus: ensemble was built for a different mode family");
  }

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < eval_docs.size(); ++i) {
    if (eval_docs[i].counts.empty()) continue;
    if (cfg.mode != AttackMode::baseline_global && is_literal(cfg.mode))
      require(eval_docs[i].doc_id == ensemble->target_doc_id,
              "attack_corpus: literal ensembles score only their target document (doc " +
                  std::to_string(eval_docs[i].doc_id) + " is not doc " +
                  std::to_string(ensemble->target_doc_id) + ")");
    keep.push_back(i);
  }
  if (skipped) *skipped = eval_docs.size() - keep.size();

  std::vector<AttackScore> scores(keep.size());
  parallel_for(keep.size(), threads, [&](std::size_t idx) {
    const std::size_t i = keep[idx];
    const Document& d = eval_docs[i];
    AttackScore s;
    s.doc_id = d.doc_id;
    s.label = labels[i];
    switch (cfg.mode) {
      case AttackMode::online_literal:
      case AttackMode::online_ensemble:
        s.lambda = online_lira(phi_obs, d, *ensemble, cfg.statistic, doc_vocab, &s.clamped);
        break;
      case AttackMode::offline_literal:
      case AttackMode::offline_ensemble:
        s.lambda = offline_lira(phi_obs, d, *ensemble, cfg.statistic, doc_vocab);
        break;
      case AttackMode::baseline_global: {
        const Document* target = &d;
        Document mapped;
        if (doc_vocab) {
          mapped = map_document(d, *doc_vocab, phi_obs.vocabulary);
          require(!mapped.counts.empty(),
                  "attack_corpus: document shares no vocabulary with the released model");
          target = &mapped;
        }
        s.lambda = query_statistic(cfg.statistic, phi_obs, *target);
        break;
      }
    }
    scores[idx] = s;
  });
  return scores;
}

// ---------------------------------------------------------------------------
// Score and manifest files.

inline void save_scores(const std::string& path, const std::vector<AttackScore>& scores,
                        QueryStatisticKind statistic, AttackMode mode, std::uint64_t seed,
                        const std::vector<std::string>& comments = {}) {
  std::string out = "doc_id,label,lambda,statistic,mode,seed\n";
  for (const AttackScore& s : scores) {
    out += std::to_string(s.doc_id) + "," + (s.label ? "1" : "0") + "," + fmt_g17(s.lambda) +
           "," + to_string(statistic) + "," + to_string(mode) + "," + std::to_string(seed) + "\n";
  }
  for (const auto& c : comments) out += "# " + c + "\n";
  write_text_file_atomic(path, out);
}

inline std::vector<AttackScore> load_scores(const std::string& path) {
  detail::LineReader r(path);
  std::vector<AttackScore> scores;
  std::string line;
  bool header_seen = false;
  while (r.next(line)) {
    if (!header_seen) {
      header_seen = true;
      if (line.rfind("doc_id,", 0) == 0) continue;  // header row
    }
    std::istringstream fields(line);
    std::string cell;
    AttackScore s;
    if (!std::getline(fields, cell, ',')) r.fail("missing doc_id");
    s.doc_id = detail::parse_int(r, "doc_id", cell);
    if (!std::getline(fields, cell, ',')) r.fail("missing label");
    const std::int64_t lab = detail::parse_int(r, "label", cell);
    if (lab != 0 && lab != 1) r.fail("label must be 0 or 1");
    s.label = lab == 1;
    if (!std::getline(fields, cell, ',')) r.fail("missing lambda");
    try {
      s.lambda = std::stod(cell);
    } catch (const std::exception&) {
      r.fail("bad lambda \"" + cell + "\"");
    }
    scores.push_back(s);  // trailing columns are provenance; not re-parsed
  }
  return scores;
}

// One record per model: "index seed count doc_ids...", enough to replay
// training exactly.
inline void save_ensemble_manifest(const std::string& path, const ShadowEnsemble& ens,
                                   const std::vector<std::string>& comments = {}) {
  std::string out = std::to_string(ens.size()) + " " + to_string(ens.mode) + " " +
                    std::to_string(ens.target_doc_id) + "\n";
  for (std::size_t j = 0; j < ens.size(); ++j) {
    out += std::to_string(j) + " " + std::to_string(ens.seeds[j]) + " " +
           std::to_string(ens.memberships[j].size());
    for (std::int64_t id : ens.memberships[j]) out += " " + std::to_string(id);
    out += "\n";
  }
  for (const auto& c : comments) out += "# " + c + "\n";
  write_text_file_atomic(path, out);
}

struct EnsembleManifest {
  AttackMode mode = AttackMode::online_ensemble;
  std::int64_t target_doc_id = -1;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<std::int64_t>> memberships;
};

inline EnsembleManifest load_ensemble_manifest(const std::string& path) {
  detail::LineReader r(path);
  std::string line;
  if (!r.next(line)) r.fail("missing header line");
  std::istringstream header(line);
  std::string ns, modes, targets;
  if (!(header >> ns >> modes >> targets)) r.fail("expected header \"N mode target\"");
  const std::int64_t n = detail::parse_int(r, "N", ns);
  if (n < 0) r.fail("negative model count");
  EnsembleManifest man;
  man.mode = attack_mode_from_string(modes);
  man.target_doc_id = detail::parse_int(r, "target", targets);
  for (std::int64_t j = 0; j < n; ++j) {
    if (!r.next(line)) r.fail("expected " + std::to_string(n) + " model records");
    std::istringstream fields(line);
    std::string idx, seed, count;
    if (!(fields >> idx >> seed >> count)) r.fail("expected \"index seed count ids...\"");
    if (detail::parse_int(r, "index", idx) != j) r.fail("model records out of order");
    man.seeds.push_back(detail::parse_u64(r, "seed", seed));
    const std::int64_t c = detail::parse_int(r, "count", count);
    std::vector<std::int64_t> ids;
    std::string tok;
    while (fields >> tok) ids.push_back(detail::parse_int(r, "doc_id", tok));
    if (static_cast<std::int64_t>(ids.size()) != c)
      r.fail("membership count mismatch: header says " + std::to_string(c) + ", got " +
             std::to_string(ids.size()));
    man.memberships.push_back(std::move(ids));
  }
  return man;
}

// Retrains the models a manifest describes (exact replay of an ensemble).
inline ShadowEnsemble rebuild_ensemble(const Corpus& pool, const EnsembleManifest& man,
                                       const LdaConfig& lda_cfg, int threads = 1,
                                       const ShadowTrainer& trainer = {}) {
  ShadowEnsemble ens;
  ens.config = lda_cfg;
  ens.mode = man.mode;
  ens.target_doc_id = man.target_doc_id;
  ens.seeds = man.seeds;
  ens.memberships = man.memberships;
  ens.models.resize(man.seeds.size());
  parallel_for(man.seeds.size(), threads, [&](std::size_t j) {
    Corpus half = corpus_subset(pool, ens.memberships[j]);
    LdaConfig mc = lda_cfg;
    mc.seed = ens.seeds[j];
    ens.models[j] = trainer ? trainer(half, mc) : train_lda(half, mc);
  });
  return ens;
}

}  // namespace topicaudit
