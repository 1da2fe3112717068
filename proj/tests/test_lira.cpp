#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "topicaudit/lira.hpp"

namespace ta = topicaudit;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string tmp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ta_lira_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

// One-topic model over {alpha, beta}: zeta(d={0:c}) = c * log(p0), so shadow
// statistics can be pinned exactly.
ta::TopicModel k1_model(double p0) {
  ta::TopicModel m;
  m.k = 1;
  m.vocabulary.add("alpha");
  m.vocabulary.add("beta");
  m.phi = {p0, 1.0 - p0};
  return m;
}

// Hand-built ensemble: doc 5 sits inside the first `n_in` models.
ta::ShadowEnsemble hand_ensemble(const std::vector<double>& in_p0,
                                 const std::vector<double>& out_p0) {
  ta::ShadowEnsemble ens;
  ens.mode = ta::AttackMode::online_ensemble;
  for (double p : in_p0) {
    ens.models.push_back(k1_model(p));
    ens.memberships.push_back({5});
    ens.seeds.push_back(0);
  }
  for (double p : out_p0) {
    ens.models.push_back(k1_model(p));
    ens.memberships.push_back({});
    ens.seeds.push_back(0);
  }
  return ens;
}

ta::Corpus tiny_synthetic(std::size_t v, std::size_t m, int doc_len, std::uint64_t seed) {
  const ta::Vocabulary vocab = ta::synthetic_vocabulary(v);
  const ta::TopicModel planted = ta::sample_topic_model(2, vocab, 0.1, seed);
  return ta::generate_synthetic_corpus(planted, 0.4, m, doc_len, seed);
}

ta::LdaConfig tiny_lda(int iterations = 20) {
  ta::LdaConfig cfg;
  cfg.k = 2;
  cfg.alpha = 0.5;
  cfg.beta = 0.1;
  cfg.iterations = iterations;
  return cfg;
}

}  // namespace

TEST_CASE("attack mode names round trip") {
  for (const auto mode :
       {ta::AttackMode::online_literal, ta::AttackMode::offline_literal,
        ta::AttackMode::online_ensemble, ta::AttackMode::offline_ensemble,
        ta::AttackMode::baseline_global})
    REQUIRE(ta::attack_mode_from_string(ta::to_string(mode)) == mode);
  REQUIRE_THROWS_AS(ta::attack_mode_from_string("sideways"), ta::Error);
  REQUIRE(ta::is_literal(ta::AttackMode::online_literal));
  REQUIRE(ta::is_ensemble(ta::AttackMode::offline_ensemble));
  REQUIRE_FALSE(ta::is_ensemble(ta::AttackMode::baseline_global));
}

TEST_CASE("train_shadow_ensemble validates its inputs") {
  const ta::Corpus pool = tiny_synthetic(10, 8, 12, 3);
  ta::AttackConfig cfg;
  cfg.n_shadow = 6;  // below the ensemble minimum
  REQUIRE_THROWS_WITH(ta::train_shadow_ensemble(pool, cfg, tiny_lda()),
                      ContainsSubstring("n_shadow >= 8"));
  cfg.mode = ta::AttackMode::online_literal;
  cfg.n_shadow = 5;  // odd
  REQUIRE_THROWS_WITH(ta::train_shadow_ensemble(pool, cfg, tiny_lda(), 0),
                      ContainsSubstring("even n_shadow"));
  cfg.n_shadow = 4;
  REQUIRE_THROWS_WITH(ta::train_shadow_ensemble(pool, cfg, tiny_lda(), -1),
                      ContainsSubstring("target doc_id"));
  REQUIRE_THROWS_WITH(ta::train_shadow_ensemble(pool, cfg, tiny_lda(), 999),
                      ContainsSubstring("not in pool"));
  cfg.mode = ta::AttackMode::baseline_global;
  REQUIRE_THROWS_WITH(ta::train_shadow_ensemble(pool, cfg, tiny_lda()),
                      ContainsSubstring("no shadow models"));
  ta::Corpus small = pool;
  small.documents.resize(3);
  cfg.mode = ta::AttackMode::online_ensemble;
  cfg.n_shadow = 8;
  REQUIRE_THROWS_WITH(ta::train_shadow_ensemble(small, cfg, tiny_lda()),
                      ContainsSubstring("at least 4 documents"));
}

TEST_CASE("ensemble mode trains half-samples shared across documents") {
  const ta::Corpus pool = tiny_synthetic(12, 10, 15, 7);
  ta::AttackConfig cfg;
  cfg.mode = ta::AttackMode::online_ensemble;
  cfg.n_shadow = 8;
  cfg.seed = 21;
  const ta::ShadowEnsemble ens = ta::train_shadow_ensemble(pool, cfg, tiny_lda(), -1, 2);
  REQUIRE(ens.size() == 8);
  REQUIRE(ens.target_doc_id == -1);
  for (std::size_t j = 0; j < ens.size(); ++j) {
    REQUIRE(ens.memberships[j].size() == 5);  // floor(10 / 2)
    REQUIRE(std::is_sorted(ens.memberships[j].begin(), ens.memberships[j].end()));
    REQUIRE(ens.models[j].k == 2);
  }
  SECTION("deterministic in the config seed") {
    const ta::ShadowEnsemble again = ta::train_shadow_ensemble(pool, cfg, tiny_lda(), -1, 1);
    for (std::size_t j = 0; j < ens.size(); ++j) {
      REQUIRE(again.memberships[j] == ens.memberships[j]);
      REQUIRE(again.seeds[j] == ens.seeds[j]);
      REQUIRE(again.models[j].phi == ens.models[j].phi);
    }
    ta::AttackConfig other = cfg;
    other.seed = 22;
    const ta::ShadowEnsemble moved = ta::train_shadow_ensemble(pool, other, tiny_lda());
    bool any_diff = false;
    for (std::size_t j = 0; j < ens.size(); ++j)
      any_diff = any_diff || moved.memberships[j] != ens.memberships[j];
    REQUIRE(any_diff);
  }
}

TEST_CASE("every document sees both sides of a large ensemble") {
  const ta::Corpus pool = tiny_synthetic(12, 12, 15, 11);
  ta::AttackConfig cfg;
  cfg.mode = ta::AttackMode::offline_ensemble;
  cfg.n_shadow = 32;
  cfg.seed = 5;
  const ta::ShadowEnsemble ens = ta::train_shadow_ensemble(pool, cfg, tiny_lda(5), -1, 4);
  for (const ta::Document& d : pool.documents) {
    int n_in = 0;
    for (std::size_t j = 0; j < ens.size(); ++j)
      if (ens.contains(j, d.doc_id)) ++n_in;
    REQUIRE(n_in >= 2);
    REQUIRE(static_cast<std::size_t>(n_in) <= ens.size() - 2);
  }
}

TEST_CASE("literal mode pairs models with the target forced in and out") {
  const ta::Corpus pool = tiny_synthetic(10, 10, 12, 13);
  const std::int64_t target = pool.documents[7].doc_id;
  ta::AttackConfig cfg;
  cfg.mode = ta::AttackMode::online_literal;
  cfg.n_shadow = 8;
  cfg.seed = 9;
  const ta::ShadowEnsemble ens = ta::train_shadow_ensemble(pool, cfg, tiny_lda(5), target, 2);
  REQUIRE(ens.size() == 8);
  REQUIRE(ens.target_doc_id == target);
  for (std::size_t pair = 0; pair < 4; ++pair) {
    const auto& with = ens.memberships[2 * pair];
    const auto& without = ens.memberships[2 * pair + 1];
    REQUIRE(ens.contains(2 * pair, target));
    REQUIRE_FALSE(ens.contains(2 * pair + 1, target));
    std::vector<std::int64_t> stripped = with;
    stripped.erase(std::find(stripped.begin(), stripped.end(), target));
    REQUIRE(stripped == without);  // pair differs only in the target
  }
}

TEST_CASE("online lira matches a hand-computed likelihood ratio") {
  // in samples {-1, -3}: N(-2, 2); out samples {-5, -9}: N(-7, 8);
  // zeta_obs = -2 so log Lambda = 0.5*log(8/2) + 25/16.
  const ta::ShadowEnsemble ens =
      hand_ensemble({std::exp(-1.0), std::exp(-3.0)}, {std::exp(-5.0), std::exp(-9.0)});
  ta::Document d;
  d.doc_id = 5;
  d.counts = {{0, 1}};
  const ta::TopicModel phi_obs = k1_model(std::exp(-2.0));
  bool clamped = false;
  const double lambda = ta::online_lira(phi_obs, d, ens, ta::QueryStatisticKind::log_likelihood,
                                        nullptr, &clamped);
  REQUIRE(lambda == Catch::Approx(2.0 * std::exp(25.0 / 16.0)).epsilon(1e-12));
  REQUIRE_FALSE(clamped);

  SECTION("offline is the out-distribution CDF at zeta") {
    const double p = ta::offline_lira(phi_obs, d, ens, ta::QueryStatisticKind::log_likelihood);
    REQUIRE(p == Catch::Approx(ta::normal_cdf(5.0 / std::sqrt(8.0))).epsilon(1e-12));
  }
  SECTION("offline at the out mean is one half, at +3 sigma is Phi(3)") {
    const ta::TopicModel at_mean = k1_model(std::exp(-7.0));
    REQUIRE(ta::offline_lira(at_mean, d, ens, ta::QueryStatisticKind::log_likelihood) ==
            Catch::Approx(0.5).margin(1e-12));
    const ta::TopicModel at_3s = k1_model(std::exp(-7.0 + 3.0 * std::sqrt(8.0)));
    REQUIRE(ta::offline_lira(at_3s, d, ens, ta::QueryStatisticKind::log_likelihood) ==
            Catch::Approx(0.9986501019683699).margin(1e-12));
  }
}

TEST_CASE("identical shadow models yield lambda of exactly one") {
  const ta::ShadowEnsemble ens =
      hand_ensemble({0.25, 0.25}, {0.25, 0.25});
  ta::Document d;
  d.doc_id = 5;
  d.counts = {{0, 2}};
  bool clamped = false;
  const double lambda = ta::online_lira(k1_model(0.7), d, ens,
                                        ta::QueryStatisticKind::log_likelihood, nullptr, &clamped);
  REQUIRE(lambda == 1.0);
  REQUIRE_FALSE(clamped);
  REQUIRE(ta::offline_lira(k1_model(0.25), d, ens, ta::QueryStatisticKind::log_likelihood) ==
          Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("degenerate separation hits the overflow sentinels") {
  const ta::ShadowEnsemble ens =
      hand_ensemble({std::exp(-1.0), std::exp(-1.0)}, {std::exp(-9.0), std::exp(-9.0)});
  ta::Document d;
  d.doc_id = 5;
  d.counts = {{0, 1}};
  bool clamped = false;
  REQUIRE(ta::online_lira(k1_model(std::exp(-1.0)), d, ens,
                          ta::QueryStatisticKind::log_likelihood, nullptr, &clamped) ==
          ta::kLambdaMax);
  REQUIRE(clamped);
  clamped = false;
  REQUIRE(ta::online_lira(k1_model(std::exp(-9.0)), d, ens,
                          ta::QueryStatisticKind::log_likelihood, nullptr, &clamped) ==
          ta::kLambdaMin);
  REQUIRE(clamped);
}

TEST_CASE("lira reports which side is undersampled") {
  ta::Document d;
  d.doc_id = 5;
  d.counts = {{0, 1}};
  SECTION("one in-model") {
    ta::ShadowEnsemble ens = hand_ensemble({0.3}, {0.4, 0.5});
    REQUIRE_THROWS_WITH(
        ta::online_lira(k1_model(0.5), d, ens, ta::QueryStatisticKind::log_likelihood),
        ContainsSubstring("fewer than 2 in-models for doc 5"));
    // offline ignores the in side entirely
    REQUIRE_NOTHROW(ta::offline_lira(k1_model(0.5), d, ens,
                                     ta::QueryStatisticKind::log_likelihood));
  }
  SECTION("one out-model") {
    ta::ShadowEnsemble ens = hand_ensemble({0.3, 0.4}, {0.5});
    REQUIRE_THROWS_WITH(
        ta::online_lira(k1_model(0.5), d, ens, ta::QueryStatisticKind::log_likelihood),
        ContainsSubstring("fewer than 2 out-models for doc 5"));
    REQUIRE_THROWS_WITH(
        ta::offline_lira(k1_model(0.5), d, ens, ta::QueryStatisticKind::log_likelihood),
        ContainsSubstring("out-models"));
  }
  SECTION("empty document") {
    ta::ShadowEnsemble ens = hand_ensemble({0.3, 0.4}, {0.5, 0.6});
    ta::Document empty;
    empty.doc_id = 5;
    REQUIRE_THROWS_WITH(
        ta::online_lira(k1_model(0.5), empty, ens, ta::QueryStatisticKind::log_likelihood),
        ContainsSubstring("empty document"));
  }
}

TEST_CASE("baseline_global scores raw statistics") {
  const ta::TopicModel phi_obs = k1_model(0.25);
  ta::Document d0, d1, empty;
  d0.doc_id = 0;
  d0.counts = {{0, 3}};
  d1.doc_id = 1;
  d1.counts = {{1, 2}};
  empty.doc_id = 2;
  const auto scores =
      ta::baseline_global(phi_obs, {d0, d1, empty}, ta::QueryStatisticKind::neg_entropy);
  REQUIRE(scores.size() == 2);  // empty doc skipped
  REQUIRE(scores[0].doc_id == 0);
  // k = 1 => theta = (1), neg_entropy = 0 regardless of the document
  REQUIRE(scores[0].lambda == Catch::Approx(0.0).margin(1e-15));
  REQUIRE_THROWS_WITH(
      ta::baseline_global(phi_obs, {d0}, ta::QueryStatisticKind::log_likelihood),
      ContainsSubstring("not a baseline"));
}

TEST_CASE("attack_corpus validates mode pairings") {
  const ta::TopicModel phi_obs = k1_model(0.3);
  ta::Document d;
  d.doc_id = 5;
  d.counts = {{0, 1}};
  const std::vector<ta::Document> docs{d};
  const std::vector<bool> labels{true};
  ta::AttackConfig cfg;

  SECTION("shadow modes need an ensemble") {
    cfg.mode = ta::AttackMode::online_ensemble;
    REQUIRE_THROWS_WITH(ta::attack_corpus(phi_obs, docs, labels, cfg),
                        ContainsSubstring("needs a shadow ensemble"));
  }
  SECTION("label vector must align") {
    cfg.mode = ta::AttackMode::baseline_global;
    cfg.statistic = ta::QueryStatisticKind::std_dev;
    REQUIRE_THROWS_WITH(ta::attack_corpus(phi_obs, docs, {}, cfg),
                        ContainsSubstring("labels must align"));
  }
  SECTION("mode families must match") {
    ta::ShadowEnsemble ens = hand_ensemble({0.3, 0.4}, {0.5, 0.6});
    ens.mode = ta::AttackMode::online_ensemble;
    cfg.mode = ta::AttackMode::offline_ensemble;  // same family: fine
    REQUIRE_NOTHROW(ta::attack_corpus(phi_obs, docs, labels, cfg, &ens));
    cfg.mode = ta::AttackMode::online_literal;  // cross family: rejected
    REQUIRE_THROWS_WITH(ta::attack_corpus(phi_obs, docs, labels, cfg, &ens),
                        ContainsSubstring("different mode family"));
  }
  SECTION("literal ensembles only score their target") {
    ta::ShadowEnsemble ens = hand_ensemble({0.3, 0.4}, {0.5, 0.6});
    ens.mode = ta::AttackMode::online_literal;
    ens.target_doc_id = 5;
    cfg.mode = ta::AttackMode::online_literal;
    REQUIRE(ta::attack_corpus(phi_obs, docs, labels, cfg, &ens).size() == 1);
    ta::Document other = d;
    other.doc_id = 6;
    REQUIRE_THROWS_WITH(ta::attack_corpus(phi_obs, {other}, {false}, cfg, &ens),
                        ContainsSubstring("score only their target"));
  }
  SECTION("empty documents are counted, not scored") {
    cfg.mode = ta::AttackMode::baseline_global;
    cfg.statistic = ta::QueryStatisticKind::std_dev;
    ta::Document empty;
    empty.doc_id = 9;
    std::size_t skipped = 0;
    const auto scores =
        ta::attack_corpus(phi_obs, {d, empty}, {true, false}, cfg, nullptr, nullptr, 1, &skipped);
    REQUIRE(scores.size() == 1);
    REQUIRE(skipped == 1);
    REQUIRE(scores[0].label);
  }
}

TEST_CASE("attack scores are independent of topic order") {
  const ta::Corpus pool = tiny_synthetic(20, 12, 20, 31);
  ta::AttackConfig cfg;
  cfg.mode = ta::AttackMode::online_ensemble;
  cfg.statistic = ta::QueryStatisticKind::neg_entropy;
  cfg.n_shadow = 8;
  cfg.seed = 17;
  const ta::LdaConfig lc = tiny_lda(15);
  ta::ShadowEnsemble ens = ta::train_shadow_ensemble(pool, cfg, lc, -1, 2);
  ta::LdaConfig tc = lc;
  tc.seed = 99;
  ta::TopicModel target = ta::train_lda(pool, tc);
  std::vector<bool> labels(pool.size(), true);

  const auto before = ta::attack_corpus(target, pool.documents, labels, cfg, &ens);

  auto swap_rows = [](ta::TopicModel& m) {
    const std::size_t v = m.v();
    for (std::size_t w = 0; w < v; ++w) std::swap(m.phi[w], m.phi[v + w]);
  };
  swap_rows(target);
  for (auto& m : ens.models) swap_rows(m);
  const auto after = ta::attack_corpus(target, pool.documents, labels, cfg, &ens);

  REQUIRE(after.size() == before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    REQUIRE(after[i].doc_id == before[i].doc_id);
    REQUIRE(after[i].lambda == Catch::Approx(before[i].lambda).epsilon(1e-9));
  }
}

TEST_CASE("score files round trip") {
  std::vector<ta::AttackScore> scores(3);
  scores[0] = {11, 2.5, true, false};
  scores[1] = {12, ta::kLambdaMax, false, true};
  scores[2] = {13, 1e-17, true, false};
  const std::string path = tmp_path("scores_roundtrip.csv");
  ta::save_scores(path, scores, ta::QueryStatisticKind::log_likelihood,
                  ta::AttackMode::online_ensemble, 42, {"note one"});
  const auto loaded = ta::load_scores(path);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(loaded[i].doc_id == scores[i].doc_id);
    REQUIRE(loaded[i].label == scores[i].label);
    REQUIRE(loaded[i].lambda == scores[i].lambda);
  }
  SECTION("headerless data still loads") {
    ta::write_text_file_atomic(tmp_path("bare.csv"), "7,1,0.25,x,y,z\n");
    const auto bare = ta::load_scores(tmp_path("bare.csv"));
    REQUIRE(bare.size() == 1);
    REQUIRE(bare[0].doc_id == 7);
    REQUIRE(bare[0].lambda == 0.25);
  }
  SECTION("bad label is a data error") {
    ta::write_text_file_atomic(tmp_path("badlabel.csv"), "7,2,0.25\n");
    REQUIRE_THROWS_WITH(ta::load_scores(tmp_path("badlabel.csv")),
                        ContainsSubstring("label"));
  }
}

TEST_CASE("ensemble manifests replay training exactly") {
  const ta::Corpus pool = tiny_synthetic(12, 8, 12, 19);
  ta::AttackConfig cfg;
  cfg.mode = ta::AttackMode::online_ensemble;
  cfg.n_shadow = 8;
  cfg.seed = 4;
  const ta::LdaConfig lc = tiny_lda(10);
  const ta::ShadowEnsemble ens = ta::train_shadow_ensemble(pool, cfg, lc, -1, 2);

  const std::string path = tmp_path("ensemble_manifest.txt");
  ta::save_ensemble_manifest(path, ens, {"provenance line"});
  const ta::EnsembleManifest man = ta::load_ensemble_manifest(path);
  REQUIRE(man.mode == ens.mode);
  REQUIRE(man.target_doc_id == ens.target_doc_id);
  REQUIRE(man.seeds == ens.seeds);
  REQUIRE(man.memberships == ens.memberships);

  const ta::ShadowEnsemble rebuilt = ta::rebuild_ensemble(pool, man, lc, 2);
  REQUIRE(rebuilt.size() == ens.size());
  for (std::size_t j = 0; j < ens.size(); ++j)
    REQUIRE(rebuilt.models[j].phi == ens.models[j].phi);  // bit-identical replay

  SECTION("corrupt manifests fail with location info") {
    ta::write_text_file_atomic(tmp_path("bad_manifest.txt"), "2 online_ensemble -1\n0 1 1 3\n");
    REQUIRE_THROWS_WITH(ta::load_ensemble_manifest(tmp_path("bad_manifest.txt")),
                        ContainsSubstring("model records"));
    ta::write_text_file_atomic(tmp_path("bad_count.txt"),
                               "1 online_ensemble -1\n0 1 3 10 11\n");
    REQUIRE_THROWS_WITH(ta::load_ensemble_manifest(tmp_path("bad_count.txt")),
                        ContainsSubstring("membership count mismatch"));
  }
}

TEST_CASE("pinned attack scores stay stable") {
  const ta::Corpus pool = tiny_synthetic(12, 12, 25, 101);
  std::vector<std::int64_t> member_ids;
  std::vector<bool> labels;
  for (const ta::Document& d : pool.documents) labels.push_back(d.doc_id % 2 == 0);
  for (const ta::Document& d : pool.documents)
    if (d.doc_id % 2 == 0) member_ids.push_back(d.doc_id);
  const ta::Corpus train_half = ta::corpus_subset(pool, member_ids);

  ta::LdaConfig lc = tiny_lda(20);
  lc.seed = 2024;
  const ta::TopicModel target = ta::train_lda(train_half, lc);
  ta::AttackConfig cfg;
  cfg.mode = ta::AttackMode::online_ensemble;
  cfg.statistic = ta::QueryStatisticKind::log_likelihood;
  cfg.n_shadow = 16;  // wide enough that every doc draws >= 2 models per side
  cfg.seed = 2024;
  const ta::ShadowEnsemble ens = ta::train_shadow_ensemble(pool, cfg, lc, -1, 2);
  const auto scores = ta::attack_corpus(target, pool.documents, labels, cfg, &ens, nullptr, 2);

  const std::string candidate = tmp_path("golden_candidate.csv");
  ta::save_scores(candidate, scores, cfg.statistic, cfg.mode, cfg.seed);
  const std::string golden_path = std::string(TA_FIXTURE_DIR) + "/lira_golden_scores.csv";
  if (!std::filesystem::exists(golden_path)) {
    // First run on a fresh tree: seed the fixture, then hold future runs to it.
    std::filesystem::copy_file(candidate, golden_path);
    WARN("golden score fixture was regenerated; commit " + golden_path);
  }
  REQUIRE(ta::read_text_file(candidate) == ta::read_text_file(golden_path));
}
