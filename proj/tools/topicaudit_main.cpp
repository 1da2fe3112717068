// Command-line front end: wires the library modules into file-based
// experiment pipelines. Every output embeds the master seed and config hash,
// and reruns with the same config are bit-identical.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "topicaudit/topicaudit.hpp"

namespace ta = topicaudit;
namespace fs = std::filesystem;

namespace {

// Seed streams used by the driver (distinct from the library's internal ones).
constexpr std::uint64_t kStreamTargetLda = 0x746c6461;  // "tlda"
constexpr std::uint64_t kStreamShadowCfg = 0x73636667;  // "scfg"
constexpr std::uint64_t kStreamDpsuSeed = 0x73647031;   // "sdp1"
constexpr std::uint64_t kStreamDpNoise = 0x73647032;    // "sdp2"

std::string hex16(std::uint64_t x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::string fmt_g(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

struct CliContext {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
  bool force = false;
  int threads = 1;

  ta::ExperimentConfig cfg;
  std::uint64_t master = 0;

  void load() {
    if (!config_path.empty())
      cfg = ta::ExperimentConfig::load(config_path);
    master = has_seed_override ? seed_override : cfg.master_seed;
  }

  std::vector<std::string> provenance() const {
    return {"seed " + std::to_string(master), "config_hash " + hex16(cfg.config_hash())};
  }

  std::vector<std::string> provenance(int rep, std::uint64_t rep_seed) const {
    auto out = provenance();
    out.push_back("replication " + std::to_string(rep));
    out.push_back("replication_seed " + std::to_string(rep_seed));
    return out;
  }

  std::string path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }

  void require_fresh(const std::string& p) const {
    if (!force && fs::exists(p))
      throw ta::Error("output exists, pass --force to overwrite: " + p);
  }
};

// ---------------------------------------------------------------------------
// Input loading

ta::Corpus load_input_corpus(const ta::ExperimentConfig& cfg) {
  if (cfg.synthetic) {
    const ta::Vocabulary vocab = ta::synthetic_vocabulary(static_cast<std::size_t>(cfg.synthetic_v));
    const ta::TopicModel planted =
        ta::sample_topic_model(cfg.synthetic_k, vocab, cfg.synthetic_concentration, cfg.synthetic_seed);
    return ta::generate_synthetic_corpus(planted, cfg.synthetic_alpha,
                                         static_cast<std::size_t>(cfg.synthetic_docs),
                                         cfg.synthetic_doc_len, cfg.synthetic_seed);
  }
  if (!cfg.corpus_file.empty()) {
    ta::require(!cfg.vocab_file.empty(), "config: data.corpus needs data.vocab");
    return ta::load_corpus(cfg.corpus_file, cfg.vocab_file);
  }
  if (!cfg.docword_file.empty()) {
    ta::require(!cfg.vocab_file.empty(), "config: data.docword needs data.vocab");
    return ta::load_uci_bow(cfg.docword_file, cfg.vocab_file);
  }
  if (!cfg.raw_text.empty()) {
    const auto raw = ta::load_raw_text(cfg.raw_text);
    const auto tokens = ta::preprocess(raw, cfg.preprocess_config());
    const ta::Vocabulary vocab = ta::build_vocabulary(tokens);
    ta::Corpus corpus = ta::to_bow(tokens, vocab);
    if (!cfg.authors_file.empty()) {
      const auto authors = ta::load_author_file(cfg.authors_file);
      ta::require(authors.size() == corpus.size(),
                  "config: data.authors has " + std::to_string(authors.size()) +
                      " entries for " + std::to_string(corpus.size()) + " documents");
      for (std::size_t i = 0; i < authors.size(); ++i) corpus.documents[i].author = authors[i];
    }
    return corpus;
  }
  throw ta::Error(
      "config: no data source configured (set one of data.synthetic, data.corpus, "
      "data.docword, data.raw_text)");
}

std::string profile_text(const ta::Corpus& corpus, const std::vector<std::string>& comments) {
  const ta::DataProfile p = ta::data_profile(corpus);
  std::string out;
  out += "doc_count " + std::to_string(p.doc_count) + "\n";
  out += "mean_doc_length " + ta::fmt_g17(p.mean_doc_length) + "\n";
  out += "vocab_size " + std::to_string(p.vocab_size) + "\n";
  for (const auto& c : comments) out += "# " + c + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Commands: preprocess / profile / train

int cmd_preprocess(CliContext& ctx) {
  ta::require(!ctx.cfg.raw_text.empty(), "preprocess: config must set data.raw_text");
  const std::string corpus_path = ctx.path("corpus.txt");
  const std::string vocab_path = ctx.path("vocab.txt");
  const std::string profile_path = ctx.path("profile.txt");
  ctx.require_fresh(corpus_path);
  ctx.require_fresh(vocab_path);
  ctx.require_fresh(profile_path);

  const ta::Corpus corpus = load_input_corpus(ctx.cfg);
  ta::save_corpus(corpus, corpus_path, vocab_path, ctx.provenance());
  ta::write_text_file_atomic(profile_path, profile_text(corpus, ctx.provenance()));
  std::cout << "preprocess: " << corpus.size() << " documents, vocabulary "
            << corpus.vocabulary.size() << " -> " << ctx.out_dir << "\n";
  return 0;
}

int cmd_profile(CliContext& ctx) {
  const std::string profile_path = ctx.path("profile.txt");
  ctx.require_fresh(profile_path);
  const ta::Corpus corpus = load_input_corpus(ctx.cfg);
  const std::string text = profile_text(corpus, ctx.provenance());
  ta::write_text_file_atomic(profile_path, text);
  std::cout << text;
  return 0;
}

int cmd_train(CliContext& ctx) {
  const std::string model_path = ctx.path("model.txt");
  const std::string vocab_path = ctx.path("model_vocab.txt");
  ctx.require_fresh(model_path);
  ctx.require_fresh(vocab_path);
  const ta::Corpus corpus = load_input_corpus(ctx.cfg);
  const ta::LdaConfig lda = ctx.cfg.lda_config(ta::derive_seed(ctx.master, kStreamTargetLda, 0));
  const ta::TopicModel model = ta::train_lda(corpus, lda);
  ta::save_model(model, model_path, vocab_path, ctx.provenance());
  std::cout << "train: k=" << model.k << " V=" << model.v() << " -> " << model_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Replication manifest (lets interrupted multi-replication runs resume).

std::set<int> read_completed(const std::string& path) {
  std::set<int> done;
  if (!fs::exists(path)) return done;
  ta::detail::LineReader r(path);
  std::string line;
  while (r.next(line)) {
    std::istringstream in(line);
    std::string word;
    in >> word;
    if (word == "completed") {
      long long rep = -1;
      if (in >> rep && rep >= 0) done.insert(static_cast<int>(rep));
    }
  }
  return done;
}

void write_manifest(const CliContext& ctx, const std::string& path, int reps,
                    const std::set<int>& done) {
  std::string out = "replications " + std::to_string(reps) + "\n";
  for (int r : done) out += "completed " + std::to_string(r) + "\n";
  for (const auto& c : ctx.provenance()) out += "# " + c + "\n";
  ta::write_text_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Attack protocol

struct ScorerSpec {
  std::string name;
  ta::AttackMode mode;
  ta::QueryStatisticKind statistic;
};

std::vector<ScorerSpec> attack_scorers(const ta::ExperimentConfig& cfg) {
  const ta::AttackMode mode = ta::attack_mode_from_string(cfg.attack_mode);
  ta::require(ta::is_ensemble(mode),
              "attack: the experiment pipeline uses ensemble modes; literal modes are the "
              "per-document verification tools");
  const ta::QueryStatisticKind stat = ta::statistic_from_string(cfg.attack_statistic);
  const ta::AttackMode other = mode == ta::AttackMode::online_ensemble
                                   ? ta::AttackMode::offline_ensemble
                                   : ta::AttackMode::online_ensemble;
  std::vector<ScorerSpec> specs;
  specs.push_back({ta::to_string(mode), mode, stat});
  specs.push_back({ta::to_string(other), other, stat});
  for (const std::string& b : cfg.baselines)
    specs.push_back({"baseline_" + b, ta::AttackMode::baseline_global,
                     ta::statistic_from_string(b)});
  return specs;
}

std::vector<bool> membership_labels(const ta::Corpus& corpus, const ta::Corpus& in_half) {
  std::unordered_set<std::int64_t> in_ids;
  for (const auto& d : in_half.documents) in_ids.insert(d.doc_id);
  std::vector<bool> labels(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    labels[i] = in_ids.count(corpus.documents[i].doc_id) > 0;
  return labels;
}

// Runs one replication of the half-split attack protocol and writes the
// per-replication score/ROC files into `dir`.
void run_attack_rep(const CliContext& ctx, const ta::ExperimentConfig& cfg,
                    const ta::Corpus& corpus, const std::string& dir, int rep) {
  const std::uint64_t rep_seed = ctx.master + static_cast<std::uint64_t>(rep);
  const auto halves = ta::split_half(corpus, rep_seed);
  const std::vector<bool> labels = membership_labels(corpus, halves.first);

  const ta::LdaConfig target_cfg = cfg.lda_config(ta::derive_seed(rep_seed, kStreamTargetLda, 0));
  const ta::TopicModel phi_obs = ta::train_lda(halves.first, target_cfg);

  ta::AttackConfig atk = cfg.attack_config(ta::derive_seed(rep_seed, kStreamShadowCfg, 0));
  atk.mode = ta::attack_mode_from_string(cfg.attack_mode);
  const ta::ShadowEnsemble ens =
      ta::train_shadow_ensemble(corpus, atk, cfg.lda_config(0), -1, ctx.threads);

  for (const ScorerSpec& spec : attack_scorers(cfg)) {
    ta::AttackConfig run_cfg = atk;
    run_cfg.mode = spec.mode;
    run_cfg.statistic = spec.statistic;
    const ta::ShadowEnsemble* e = spec.mode == ta::AttackMode::baseline_global ? nullptr : &ens;
    std::size_t skipped = 0;
    const auto scores = ta::attack_corpus(phi_obs, corpus.documents, labels, run_cfg, e,
                                          nullptr, ctx.threads, &skipped);
    const std::string tag = "rep" + std::to_string(rep) + "_" + spec.name;
    auto comments = ctx.provenance(rep, rep_seed);
    if (skipped > 0) comments.push_back("skipped_empty_documents " + std::to_string(skipped));
    ta::save_scores((fs::path(dir) / ("scores_" + tag + ".csv")).string(), scores,
                    spec.statistic, spec.mode, rep_seed, comments);
    const ta::RocCurve roc = ta::roc_curve(scores);
    ta::save_roc((fs::path(dir) / ("roc_" + tag + ".csv")).string(), roc, spec.mode, rep_seed,
                 comments);
  }
}

struct RepMetrics {
  int rep = 0;  // -1 marks the pooled aggregate
  double auc = 0.0;
  std::vector<double> tpr;  // aligned with cfg.fpr_targets
};

RepMetrics metrics_from_scores(const std::vector<ta::AttackScore>& scores,
                               const std::vector<double>& targets, int rep) {
  const ta::RocCurve roc = ta::roc_curve(scores);
  RepMetrics m;
  m.rep = rep;
  m.auc = roc.auc;
  for (double t : targets) m.tpr.push_back(ta::tpr_at_fpr(roc, t));
  return m;
}

double median(std::vector<double> xs) {
  ta::require(!xs.empty(), "median of empty set");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Runs all replications (resuming from the manifest when present), then pools
// scores per scorer and writes aggregate ROC plus a summary table. Returns
// per-scorer metrics, aggregate last. With `allow_complete` an already-finished
// run just rebuilds its aggregates (used by sweeps that resume across sub-runs).
std::vector<std::pair<std::string, std::vector<RepMetrics>>> run_attack_protocol(
    const CliContext& ctx, const ta::ExperimentConfig& cfg, const ta::Corpus& corpus,
    const std::string& dir, bool allow_complete) {
  fs::create_directories(dir);
  const std::string manifest_path = (fs::path(dir) / "run_manifest.txt").string();
  const std::string summary_path = (fs::path(dir) / "summary.csv").string();
  const int reps = cfg.replications;

  std::set<int> done;
  if (ctx.force) {
    // fresh start
  } else if (fs::exists(manifest_path)) {
    done = read_completed(manifest_path);
    if (!allow_complete && static_cast<int>(done.size()) >= reps && fs::exists(summary_path))
      throw ta::Error("attack: run already complete in " + dir + " (pass --force to redo)");
  } else if (fs::exists(summary_path)) {
    throw ta::Error("output exists, pass --force to overwrite: " + summary_path);
  }

  for (int r = 0; r < reps; ++r) {
    if (done.count(r)) continue;
    run_attack_rep(ctx, cfg, corpus, dir, r);
    done.insert(r);
    write_manifest(ctx, manifest_path, reps, done);
    std::cout << "attack: replication " << r + 1 << "/" << reps << " done\n";
  }

  // Pool from the per-replication files so resumed runs aggregate identically.
  std::vector<std::pair<std::string, std::vector<RepMetrics>>> table;
  for (const ScorerSpec& spec : attack_scorers(cfg)) {
    std::vector<RepMetrics> rows;
    std::vector<ta::AttackScore> pooled;
    for (int r = 0; r < reps; ++r) {
      const std::string tag = "rep" + std::to_string(r) + "_" + spec.name;
      const auto scores = ta::load_scores((fs::path(dir) / ("scores_" + tag + ".csv")).string());
      rows.push_back(metrics_from_scores(scores, cfg.fpr_targets, r));
      pooled.insert(pooled.end(), scores.begin(), scores.end());
    }
    const ta::RocCurve agg = ta::roc_curve(pooled);
    ta::save_roc((fs::path(dir) / ("roc_agg_" + spec.name + ".csv")).string(), agg, spec.mode,
                 ctx.master, ctx.provenance());
    rows.push_back(metrics_from_scores(pooled, cfg.fpr_targets, -1));
    table.emplace_back(spec.name, std::move(rows));
  }

  std::string out = "scorer,rep,auc";
  for (double t : cfg.fpr_targets) out += ",tpr_at_" + fmt_g(t);
  out += "\n";
  for (const auto& [name, rows] : table) {
    for (const RepMetrics& m : rows) {
      out += name + "," + (m.rep < 0 ? std::string("all") : std::to_string(m.rep)) + "," +
             ta::fmt_g17(m.auc);
      for (double t : m.tpr) out += "," + ta::fmt_g17(t);
      out += "\n";
    }
  }
  for (const auto& c : ctx.provenance()) out += "# " + c + "\n";
  ta::write_text_file_atomic(summary_path, out);
  return table;
}

int cmd_attack(CliContext& ctx) {
  fs::create_directories(ctx.out_dir);
  const ta::Corpus corpus = load_input_corpus(ctx.cfg);

  if (ctx.cfg.k_grid.empty()) {
    run_attack_protocol(ctx, ctx.cfg, corpus, ctx.out_dir, /*allow_complete=*/false);
    std::cout << "attack: wrote " << ctx.path("summary.csv") << "\n";
    return 0;
  }

  // k sweep: one sub-run per k, then a trend summary over per-replication
  // medians of the configured attack's TPR at each FPR target.
  const std::string sweep_path = ctx.path("k_sweep_summary.csv");
  if (!ctx.force) {
    if (fs::exists(sweep_path)) {
      bool all_done = true;
      for (std::int64_t kv : ctx.cfg.k_grid) {
        const auto mp = fs::path(ctx.out_dir) / ("k" + std::to_string(kv)) / "run_manifest.txt";
        if (static_cast<int>(read_completed(mp.string()).size()) < ctx.cfg.replications)
          all_done = false;
      }
      if (all_done)
        throw ta::Error("attack: k sweep already complete in " + ctx.out_dir +
                        " (pass --force to redo)");
    }
  }
  std::vector<std::vector<double>> medians;  // per k, per fpr target
  std::vector<std::vector<double>> auc_medians;
  for (std::int64_t kv : ctx.cfg.k_grid) {
    ta::ExperimentConfig sub = ctx.cfg;
    sub.k = static_cast<int>(kv);
    sub.k_grid.clear();
    const std::string dir = ctx.path("k" + std::to_string(kv));
    const auto table = run_attack_protocol(ctx, sub, corpus, dir, /*allow_complete=*/true);
    // table front() is the configured attack scorer.
    const auto& rows = table.front().second;
    std::vector<double> med, auc;
    for (std::size_t t = 0; t < ctx.cfg.fpr_targets.size(); ++t) {
      std::vector<double> vals;
      for (const RepMetrics& m : rows)
        if (m.rep >= 0) vals.push_back(m.tpr[t]);
      med.push_back(median(vals));
    }
    std::vector<double> aucs;
    for (const RepMetrics& m : rows)
      if (m.rep >= 0) aucs.push_back(m.auc);
    medians.push_back(med);
    auc_medians.push_back({median(aucs)});
  }

  std::string out = "k,fpr_target,median_tpr,median_auc\n";
  for (std::size_t i = 0; i < ctx.cfg.k_grid.size(); ++i)
    for (std::size_t t = 0; t < ctx.cfg.fpr_targets.size(); ++t)
      out += std::to_string(ctx.cfg.k_grid[i]) + "," + fmt_g(ctx.cfg.fpr_targets[t]) + "," +
             ta::fmt_g17(medians[i][t]) + "," + ta::fmt_g17(auc_medians[i][0]) + "\n";
  for (std::size_t t = 0; t < ctx.cfg.fpr_targets.size(); ++t) {
    int inversions = 0;
    for (std::size_t i = 1; i < medians.size(); ++i)
      if (medians[i][t] < medians[i - 1][t]) ++inversions;
    out += "# trend tpr_at_" + fmt_g(ctx.cfg.fpr_targets[t]) +
           " non_decreasing=" + (inversions == 0 ? "yes" : "no") +
           " inversions=" + std::to_string(inversions) + "\n";
  }
  for (const auto& c : ctx.provenance()) out += "# " + c + "\n";
  ta::write_text_file_atomic(sweep_path, out);
  std::cout << "attack: wrote " << sweep_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Defense protocol

struct CellMetrics {
  double e1 = 0.0, e2 = 0.0;
  std::vector<RepMetrics> rows;          // per rep + aggregate (rep = -1)
  std::vector<double> coherence;         // per rep
  std::vector<std::size_t> vocab_sizes;  // per rep
  std::vector<int> clamps;               // per rep
};

CellMetrics run_defend_cell(const CliContext& ctx, const ta::Corpus& corpus, double e1,
                            double e2, const std::string& dir) {
  fs::create_directories(dir);
  const std::string manifest_path = (fs::path(dir) / "run_manifest.txt").string();
  const int reps = ctx.cfg.replications;
  std::set<int> done;
  if (!ctx.force && fs::exists(manifest_path)) done = read_completed(manifest_path);

  const ta::ExperimentConfig& cfg = ctx.cfg;
  for (int r = 0; r < reps; ++r) {
    if (done.count(r)) continue;
    const std::uint64_t rep_seed = ctx.master + static_cast<std::uint64_t>(r);
    const auto halves = ta::split_half(corpus, rep_seed);
    const std::vector<bool> labels = membership_labels(corpus, halves.first);

    const ta::DpsuParams dpsu = cfg.dpsu_params(e1, ta::derive_seed(rep_seed, kStreamDpsuSeed, 0));
    const ta::DpLdaParams dplda =
        cfg.dplda_params(e2, ta::derive_seed(rep_seed, kStreamTargetLda, 0),
                         ta::derive_seed(rep_seed, kStreamDpNoise, 0));
    const ta::FdptmResult target = ta::fdptm_bow(halves.first, dpsu, dplda);

    // Shadow models are trained through the same private pipeline as the target.
    const ta::ShadowTrainer trainer = [&cfg, e1, e2](const ta::Corpus& half,
                                                     const ta::LdaConfig& lc) {
      const ta::DpsuParams sd = cfg.dpsu_params(e1, ta::derive_seed(lc.seed, kStreamDpsuSeed, 0));
      ta::DpLdaParams sl =
          cfg.dplda_params(e2, lc.seed, ta::derive_seed(lc.seed, kStreamDpNoise, 0));
      return ta::fdptm_bow(half, sd, sl).model;
    };
    ta::AttackConfig atk = cfg.attack_config(ta::derive_seed(rep_seed, kStreamShadowCfg, 0));
    ta::require(ta::is_ensemble(atk.mode),
                "defend: the experiment pipeline uses ensemble attack modes");
    const ta::ShadowEnsemble ens =
        ta::train_shadow_ensemble(corpus, atk, cfg.lda_config(0), -1, ctx.threads, trainer);

    std::size_t skipped = 0;
    const auto scores = ta::attack_corpus(target.model, corpus.documents, labels, atk, &ens,
                                          &corpus.vocabulary, ctx.threads, &skipped);
    const std::string tag = "rep" + std::to_string(r);
    auto comments = ctx.provenance(r, rep_seed);
    if (skipped > 0) comments.push_back("skipped_empty_documents " + std::to_string(skipped));
    ta::save_scores((fs::path(dir) / ("scores_" + tag + ".csv")).string(), scores, atk.statistic,
                    atk.mode, rep_seed, comments);
    ta::save_roc((fs::path(dir) / ("roc_" + tag + ".csv")).string(), ta::roc_curve(scores),
                 atk.mode, rep_seed, comments);

    const ta::Corpus reference = ta::sanitize(corpus, target.vocabulary);
    const ta::CoherenceReport coh = ta::topic_coherence(
        target.model, reference, static_cast<std::size_t>(cfg.coherence_top_m));
    ta::save_coherence((fs::path(dir) / ("coherence_" + tag + ".csv")).string(), coh, comments);

    std::string extra = "released_vocab_size: " + std::to_string(target.vocabulary.size());
    auto report_comments = comments;
    report_comments.push_back(extra);
    ta::write_privacy_report((fs::path(dir) / ("privacy_report_" + tag + ".txt")).string(), dpsu,
                             dplda, target.budget, target.resolved_clamp,
                             target.vocabulary.size(), report_comments);

    done.insert(r);
    write_manifest(ctx, manifest_path, reps, done);
    std::cout << "defend: cell e1=" << fmt_g(e1) << " e2=" << fmt_g(e2) << " replication "
              << r + 1 << "/" << reps << " done\n";
  }

  CellMetrics cell;
  cell.e1 = e1;
  cell.e2 = e2;
  std::vector<ta::AttackScore> pooled;
  for (int r = 0; r < reps; ++r) {
    const std::string tag = "rep" + std::to_string(r);
    const auto scores = ta::load_scores((fs::path(dir) / ("scores_" + tag + ".csv")).string());
    cell.rows.push_back(metrics_from_scores(scores, cfg.fpr_targets, r));
    pooled.insert(pooled.end(), scores.begin(), scores.end());
    // coherence mean is recovered from the saved file's mean row
    const auto coh_path = (fs::path(dir) / ("coherence_" + tag + ".csv")).string();
    ta::detail::LineReader lr(coh_path);
    std::string line;
    double mean_coh = 0.0;
    while (lr.next(line)) {
      if (line.rfind("mean,", 0) == 0) {
        const auto second = line.find(',');
        const auto third = line.find(',', second + 1);
        mean_coh = std::stod(line.substr(second + 1, third - second - 1));
      }
    }
    cell.coherence.push_back(mean_coh);
  }
  const ta::RocCurve agg = ta::roc_curve(pooled);
  ta::save_roc((fs::path(dir) / "roc_agg.csv").string(), agg,
               ta::attack_mode_from_string(cfg.attack_mode), ctx.master, ctx.provenance());
  cell.rows.push_back(metrics_from_scores(pooled, cfg.fpr_targets, -1));
  return cell;
}

int cmd_defend(CliContext& ctx) {
  fs::create_directories(ctx.out_dir);
  const std::string summary_path = ctx.path("defend_summary.csv");
  const ta::Corpus corpus = load_input_corpus(ctx.cfg);
  const std::vector<double> grid1 =
      ctx.cfg.epsilon1_grid.empty() ? std::vector<double>{ctx.cfg.epsilon1} : ctx.cfg.epsilon1_grid;
  const std::vector<double> grid2 =
      ctx.cfg.epsilon2_grid.empty() ? std::vector<double>{ctx.cfg.epsilon2} : ctx.cfg.epsilon2_grid;

  if (!ctx.force && fs::exists(summary_path)) {
    bool all_done = true;
    for (double e1 : grid1)
      for (double e2 : grid2) {
        const auto mp = fs::path(ctx.out_dir) / ("e1_" + fmt_g(e1) + "_e2_" + fmt_g(e2)) /
                        "run_manifest.txt";
        if (static_cast<int>(read_completed(mp.string()).size()) < ctx.cfg.replications)
          all_done = false;
      }
    if (all_done)
      throw ta::Error("defend: run already complete in " + ctx.out_dir +
                      " (pass --force to redo)");
  }

  std::vector<CellMetrics> cells;
  for (double e1 : grid1)
    for (double e2 : grid2) {
      const std::string dir = ctx.path("e1_" + fmt_g(e1) + "_e2_" + fmt_g(e2));
      cells.push_back(run_defend_cell(ctx, corpus, e1, e2, dir));
    }

  std::string out = "epsilon1,epsilon2,rep,auc";
  for (double t : ctx.cfg.fpr_targets) out += ",tpr_at_" + fmt_g(t);
  out += ",coherence_mean\n";
  for (const CellMetrics& cell : cells) {
    double coh_sum = 0.0;
    for (double c : cell.coherence) coh_sum += c;
    for (const RepMetrics& m : cell.rows) {
      out += fmt_g(cell.e1) + "," + fmt_g(cell.e2) + "," +
             (m.rep < 0 ? std::string("all") : std::to_string(m.rep)) + "," + ta::fmt_g17(m.auc);
      for (double t : m.tpr) out += "," + ta::fmt_g17(t);
      const double coh = m.rep < 0 ? coh_sum / static_cast<double>(cell.coherence.size())
                                   : cell.coherence[static_cast<std::size_t>(m.rep)];
      out += "," + ta::fmt_g17(coh) + "\n";
    }
  }
  for (const auto& c : ctx.provenance()) out += "# " + c + "\n";
  ta::write_text_file_atomic(summary_path, out);
  std::cout << "defend: wrote " << summary_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Evaluation commands

int cmd_eval_roc(CliContext& ctx, const std::string& scores_path,
                 const std::string& out_name) {
  fs::create_directories(ctx.out_dir);
  const std::string out_path = ctx.path(out_name);
  ctx.require_fresh(out_path);
  const auto scores = ta::load_scores(scores_path);
  const ta::RocCurve roc = ta::roc_curve(scores);

  // Recover the mode column for the metadata block (falls back to config).
  ta::AttackMode mode = ta::attack_mode_from_string(ctx.cfg.attack_mode);
  {
    ta::detail::LineReader r(scores_path);
    std::string line;
    bool first = true;
    while (r.next(line)) {
      if (first) {  // header
        first = false;
        continue;
      }
      std::vector<std::string> cols;
      std::size_t start = 0;
      while (true) {
        const auto pos = line.find(',', start);
        cols.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
      }
      if (cols.size() >= 5) mode = ta::attack_mode_from_string(cols[4]);
      break;
    }
  }

  ta::save_roc(out_path, roc, mode, ctx.master, ctx.provenance());
  std::cout << "auc " << ta::fmt_g17(roc.auc) << "\n";
  std::cout << "n_pos " << roc.n_pos << "\nn_neg " << roc.n_neg << "\n";
  for (double t : ctx.cfg.fpr_targets)
    std::cout << "tpr_at_" << fmt_g(t) << " " << ta::fmt_g17(ta::tpr_at_fpr(roc, t)) << "\n";
  return 0;
}

int cmd_eval_coherence(CliContext& ctx, const std::string& model_path,
                       const std::string& model_vocab_path) {
  fs::create_directories(ctx.out_dir);
  const std::string out_path = ctx.path("coherence.csv");
  ctx.require_fresh(out_path);
  const ta::TopicModel model = ta::load_model(model_path, model_vocab_path);
  const ta::Corpus raw_reference = load_input_corpus(ctx.cfg);
  // Align the reference with the model's vocabulary; co-document frequencies
  // are counted over exactly the word set the model can talk about.
  const ta::Corpus reference = ta::sanitize(raw_reference, model.vocabulary);
  const ta::CoherenceReport report = ta::topic_coherence(
      model, reference, static_cast<std::size_t>(ctx.cfg.coherence_top_m));
  ta::save_coherence(out_path, report, ctx.provenance());
  std::cout << "coherence_mean " << ta::fmt_g17(report.mean) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Statistic diagnostics (per-document KL + Shapiro-Wilk + BH)

int cmd_diagnose(CliContext& ctx) {
  fs::create_directories(ctx.out_dir);
  const std::string csv_path = ctx.path("diagnostics.csv");
  const std::string summary_path = ctx.path("diagnostics_summary.csv");
  ctx.require_fresh(csv_path);
  ctx.require_fresh(summary_path);

  const ta::Corpus corpus = load_input_corpus(ctx.cfg);
  ta::AttackConfig atk = ctx.cfg.attack_config(ta::derive_seed(ctx.master, kStreamShadowCfg, 0));
  ta::require(ta::is_ensemble(atk.mode), "diagnose-statistics: needs an ensemble attack mode");
  const ta::ShadowEnsemble ens =
      ta::train_shadow_ensemble(corpus, atk, ctx.cfg.lda_config(0), -1, ctx.threads);

  const std::size_t n_docs = corpus.size();
  const std::size_t n_models = ens.size();
  // stat_samples[doc][model] = the four statistics of that (doc, model) pair.
  std::vector<std::array<double, 4>> samples(n_docs * n_models);
  std::vector<char> valid(n_docs);
  for (std::size_t i = 0; i < n_docs; ++i) valid[i] = corpus.documents[i].empty() ? 0 : 1;
  ta::parallel_for(n_docs * n_models, ctx.threads, [&](std::size_t idx) {
    const std::size_t i = idx / n_models;
    if (!valid[i]) return;
    samples[idx] = ta::all_query_statistics(ens.models[idx % n_models], corpus.documents[i]);
  });

  struct Row {
    std::int64_t doc_id;
    int stat;
    double kl, p_in, p_out;
    bool rej_in = false, rej_out = false;
  };
  std::vector<Row> rows;
  std::size_t skipped_docs = 0;
  // Shapiro-Wilk is undefined for a constant sample; a point mass is treated
  // as maximal evidence against normality (p = 0).
  const auto sw_p = [](const std::vector<double>& xs) {
    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    if (*mn == *mx) return 0.0;
    return ta::shapiro_wilk(xs);
  };
  for (std::size_t i = 0; i < n_docs; ++i) {
    if (!valid[i]) {
      ++skipped_docs;
      continue;
    }
    const ta::Document& d = corpus.documents[i];
    std::vector<double> in_s[4], out_s[4];
    for (std::size_t j = 0; j < n_models; ++j) {
      const bool in = ens.contains(j, d.doc_id);
      for (int s = 0; s < 4; ++s)
        (in ? in_s[s] : out_s[s]).push_back(samples[i * n_models + j][static_cast<std::size_t>(s)]);
    }
    if (in_s[0].size() < 3 || out_s[0].size() < 3) {
      ++skipped_docs;
      continue;
    }
    for (int s = 0; s < 4; ++s) {
      Row row{};
      row.doc_id = d.doc_id;
      row.stat = s;
      const ta::NormalFit fin = ta::fit_normal(in_s[s]);
      const ta::NormalFit fout = ta::fit_normal(out_s[s]);
      row.kl = ta::kl_normal(fin, fout);
      row.p_in = sw_p(in_s[s]);
      row.p_out = sw_p(out_s[s]);
      rows.push_back(row);
    }
  }

  // BH across all tests of one statistic (both sides pooled), q = 0.05.
  constexpr double kFdrQ = 0.05;
  for (int s = 0; s < 4; ++s) {
    std::vector<double> ps;
    std::vector<Row*> owners;
    for (Row& row : rows)
      if (row.stat == s) {
        ps.push_back(row.p_in);
        ps.push_back(row.p_out);
        owners.push_back(&row);
      }
    if (ps.empty()) continue;
    const std::vector<bool> rej = ta::bh_fdr(ps, kFdrQ);
    for (std::size_t i = 0; i < owners.size(); ++i) {
      owners[i]->rej_in = rej[2 * i];
      owners[i]->rej_out = rej[2 * i + 1];
    }
  }

  std::string out = "doc_id,statistic,kl_divergence,p_in,p_out,rejected_in,rejected_out\n";
  for (const Row& row : rows)
    out += std::to_string(row.doc_id) + "," +
           ta::to_string(ta::kAllStatistics[static_cast<std::size_t>(row.stat)]) + "," +
           ta::fmt_g17(row.kl) + "," + ta::fmt_g17(row.p_in) + "," + ta::fmt_g17(row.p_out) +
           "," + (row.rej_in ? "1" : "0") + "," + (row.rej_out ? "1" : "0") + "\n";
  auto comments = ctx.provenance();
  comments.push_back("skipped_documents " + std::to_string(skipped_docs));
  for (const auto& c : comments) out += "# " + c + "\n";
  ta::write_text_file_atomic(csv_path, out);

  std::string summary = "statistic,n_docs,n_tests,n_rejected,rejection_rate,mean_kl\n";
  for (int s = 0; s < 4; ++s) {
    std::size_t n_doc_rows = 0, n_rej = 0;
    double kl_sum = 0.0;
    for (const Row& row : rows)
      if (row.stat == s) {
        ++n_doc_rows;
        n_rej += (row.rej_in ? 1 : 0) + (row.rej_out ? 1 : 0);
        kl_sum += row.kl;
      }
    const std::size_t n_tests = 2 * n_doc_rows;
    summary += std::string(ta::to_string(ta::kAllStatistics[static_cast<std::size_t>(s)])) + "," +
               std::to_string(n_doc_rows) + "," + std::to_string(n_tests) + "," +
               std::to_string(n_rej) + "," +
               ta::fmt_g17(n_tests ? static_cast<double>(n_rej) / static_cast<double>(n_tests)
                                   : 0.0) +
               "," + ta::fmt_g17(n_doc_rows ? kl_sum / static_cast<double>(n_doc_rows) : 0.0) +
               "\n";
  }
  for (const auto& c : comments) summary += "# " + c + "\n";
  ta::write_text_file_atomic(summary_path, summary);
  std::cout << "diagnose-statistics: wrote " << csv_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CliContext ctx;
  CLI::App app{"topic-model training, membership-inference auditing, and DP defense"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", ctx.config_path, "experiment config file");
  auto* seed_opt = app.add_option("--seed", ctx.seed_override, "override the master seed");
  app.add_option("--out-dir", ctx.out_dir, "output directory (default: out)");
  app.add_flag("--force", ctx.force, "overwrite existing outputs");
  app.add_option("--threads", ctx.threads, "worker threads (default: 1)")
      ->check(CLI::PositiveNumber);

  auto* sc_preprocess = app.add_subcommand("preprocess", "tokenize raw text into corpus files");
  auto* sc_profile = app.add_subcommand("profile", "summarize the configured corpus");
  auto* sc_train = app.add_subcommand("train", "train a topic model and save it");
  auto* sc_attack = app.add_subcommand("attack", "run the half-split membership attack protocol");
  auto* sc_defend = app.add_subcommand("defend", "train private models and attack them");
  auto* sc_eval_roc = app.add_subcommand("eval-roc", "compute an ROC curve from a score file");
  auto* sc_eval_coh = app.add_subcommand("eval-coherence", "score topic coherence of a model");
  auto* sc_diag =
      app.add_subcommand("diagnose-statistics", "per-document normality and KL diagnostics");

  std::string scores_path;
  sc_eval_roc->add_option("--scores", scores_path, "attack score CSV")->required();
  std::string model_path, model_vocab_path;
  sc_eval_coh->add_option("--model", model_path, "model file")->required();
  sc_eval_coh->add_option("--model-vocab", model_vocab_path, "model vocabulary file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  ctx.has_seed_override = seed_opt->count() > 0;

  try {
    ctx.load();
    fs::create_directories(ctx.out_dir);
    if (app.got_subcommand(sc_preprocess)) return cmd_preprocess(ctx);
    if (app.got_subcommand(sc_profile)) return cmd_profile(ctx);
    if (app.got_subcommand(sc_train)) return cmd_train(ctx);
    if (app.got_subcommand(sc_attack)) return cmd_attack(ctx);
    if (app.got_subcommand(sc_defend)) return cmd_defend(ctx);
    if (app.got_subcommand(sc_eval_roc)) return cmd_eval_roc(ctx, scores_path, "roc.csv");
    if (app.got_subcommand(sc_eval_coh)) return cmd_eval_coherence(ctx, model_path, model_vocab_path);
    if (app.got_subcommand(sc_diag)) return cmd_diagnose(ctx);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const ta::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
