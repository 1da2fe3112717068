#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "topicaudit/stats.hpp"

namespace ta = topicaudit;

namespace {

// Fixture lines wrap numbers as np.float64(...); strip that.
double parse_wrapped(std::string tok) {
  const auto open = tok.find('(');
  if (open != std::string::npos) {
    const auto close = tok.rfind(')');
    tok = tok.substr(open + 1, close - open - 1);
  }
  return std::stod(tok);
}

struct SwBlock {
  std::string name;
  std::size_t n = 0;
  double w_ref = 0.0;
  double p_ref = 0.0;
  std::vector<double> samples;
};

std::vector<SwBlock> load_sw_fixture() {
  std::ifstream in(std::string(TA_FIXTURE_DIR) + "/shapiro_fixture.txt");
  REQUIRE(in.good());
  std::vector<SwBlock> blocks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream header(line);
    SwBlock b;
    std::string w_tok, p_tok;
    header >> b.name >> b.n >> w_tok >> p_tok;
    b.w_ref = parse_wrapped(w_tok);
    b.p_ref = parse_wrapped(p_tok);
    REQUIRE(std::getline(in, line));
    std::istringstream data(line);
    double x = 0.0;
    while (data >> x) b.samples.push_back(x);
    REQUIRE(b.samples.size() == b.n);
    blocks.push_back(std::move(b));
  }
  REQUIRE(blocks.size() >= 8);
  return blocks;
}

}  // namespace

TEST_CASE("statistic_from_theta analytic values") {
  SECTION("uniform mixture") {
    const ta::TopicMixture theta{std::vector<double>(5, 0.2)};
    REQUIRE(ta::statistic_from_theta(ta::QueryStatisticKind::neg_entropy, theta, -1.0) ==
            Catch::Approx(-std::log(5.0)).margin(1e-14));
    REQUIRE(ta::statistic_from_theta(ta::QueryStatisticKind::std_dev, theta, -1.0) ==
            Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("fifty-fifty logit is zero") {
    const ta::TopicMixture theta{{0.5, 0.5}};
    REQUIRE(ta::statistic_from_theta(ta::QueryStatisticKind::logit_max_posterior, theta, -1.0) ==
            Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("point mass") {
    ta::TopicMixture theta{{1.0, 0.0, 0.0, 0.0}};
    const int k = 4;
    // population std dev of (1,0,0,0) is sqrt(k-1)/k
    REQUIRE(ta::statistic_from_theta(ta::QueryStatisticKind::std_dev, theta, -1.0) ==
            Catch::Approx(std::sqrt(3.0) / 4.0).margin(1e-14));
    // 0 log 0 treated as 0
    REQUIRE(ta::statistic_from_theta(ta::QueryStatisticKind::neg_entropy, theta, -1.0) ==
            Catch::Approx(0.0).margin(1e-14));
    bool clamped = false;
    const double logit = ta::statistic_from_theta(ta::QueryStatisticKind::logit_max_posterior,
                                                  theta, -1.0, &clamped);
    REQUIRE(clamped);
    REQUIRE(logit == Catch::Approx(std::log((1.0 - 1e-12) / 1e-12)).margin(1e-6));
    (void)k;
  }
  SECTION("log_likelihood passes zeta through") {
    const ta::TopicMixture theta{{0.3, 0.7}};
    REQUIRE(ta::statistic_from_theta(ta::QueryStatisticKind::log_likelihood, theta, -42.5) ==
            -42.5);
  }
}

TEST_CASE("statistic names round trip") {
  for (const auto kind : ta::kAllStatistics)
    REQUIRE(ta::statistic_from_string(ta::to_string(kind)) == kind);
  REQUIRE_THROWS_AS(ta::statistic_from_string("bogus"), ta::Error);
}

TEST_CASE("fit_normal uses the unbiased estimator with a variance floor") {
  SECTION("hand case") {
    const ta::NormalFit f = ta::fit_normal({1.0, 2.0, 3.0});
    REQUIRE(f.mean == Catch::Approx(2.0).margin(1e-15));
    REQUIRE(f.variance == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(f.n == 3);
  }
  SECTION("two points") {
    const ta::NormalFit f = ta::fit_normal({0.0, 1.0});
    REQUIRE(f.mean == Catch::Approx(0.5));
    REQUIRE(f.variance == Catch::Approx(0.5));  // unbiased: ((.5)^2+(.5)^2)/(2-1)
  }
  SECTION("constant sample hits the floor") {
    const ta::NormalFit f = ta::fit_normal({4.0, 4.0, 4.0, 4.0});
    REQUIRE(f.mean == 4.0);
    REQUIRE(f.variance == ta::NormalFit::kVarianceFloor);
  }
  SECTION("too few samples") {
    REQUIRE_THROWS_AS(ta::fit_normal({}), ta::Error);
    REQUIRE_THROWS_AS(ta::fit_normal({1.0}), ta::Error);
  }
}

TEST_CASE("kl_normal closed form") {
  const ta::NormalFit std_normal{0.0, 1.0, 10};
  SECTION("identical distributions have zero divergence") {
    REQUIRE(ta::kl_normal(std_normal, std_normal) == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("unit mean shift costs one half") {
    const ta::NormalFit shifted{1.0, 1.0, 10};
    REQUIRE(ta::kl_normal(std_normal, shifted) == Catch::Approx(0.5).margin(1e-14));
  }
  SECTION("matches numeric quadrature") {
    const ta::NormalFit a{0.3, 2.25, 10};
    const ta::NormalFit b{-0.7, 0.49, 10};
    // Simpson integration of p(x) log(p(x)/q(x))
    const double lo = 0.3 - 12.0 * 1.5, hi = 0.3 + 12.0 * 1.5;
    const int steps = 20000;
    const double h = (hi - lo) / steps;
    double acc = 0.0;
    for (int i = 0; i <= steps; ++i) {
      const double x = lo + h * i;
      const double lp = ta::normal_logpdf(x, a.mean, a.variance);
      const double lq = ta::normal_logpdf(x, b.mean, b.variance);
      const double f = std::exp(lp) * (lp - lq);
      const double wgt = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      acc += wgt * f;
    }
    acc *= h / 3.0;
    REQUIRE(ta::kl_normal(a, b) == Catch::Approx(acc).margin(1e-6));
  }
  SECTION("never negative on random fits") {
    ta::Rng rng(4);
    for (int i = 0; i < 200; ++i) {
      const ta::NormalFit a{rng.normal() * 3.0, 0.01 + rng.uniform01() * 4.0, 5};
      const ta::NormalFit b{rng.normal() * 3.0, 0.01 + rng.uniform01() * 4.0, 5};
      REQUIRE(ta::kl_normal(a, b) >= 0.0);
    }
  }
}

TEST_CASE("shapiro_wilk matches the reference fixture") {
  for (const SwBlock& b : load_sw_fixture()) {
    INFO(b.name << " n=" << b.n);
    double w = 0.0;
    const double p = ta::shapiro_wilk(b.samples, &w);
    REQUIRE(std::abs(w - b.w_ref) < 5e-6);
    REQUIRE(std::abs(p - b.p_ref) < 1e-4);
    if (b.p_ref < 1e-6) REQUIRE(p < 1e-6);
    REQUIRE(p >= 0.0);
    REQUIRE(p <= 1.0);
  }
}

TEST_CASE("shapiro_wilk input validation") {
  REQUIRE_THROWS_AS(ta::shapiro_wilk({1.0, 2.0}), ta::Error);          // n < 3
  REQUIRE_THROWS_AS(ta::shapiro_wilk({2.0, 2.0, 2.0, 2.0}), ta::Error);  // constant
  std::vector<double> huge(5001, 0.0);
  for (std::size_t i = 0; i < huge.size(); ++i) huge[i] = static_cast<double>(i);
  REQUIRE_THROWS_AS(ta::shapiro_wilk(huge), ta::Error);  // n > 5000
}

TEST_CASE("shapiro_wilk is stable under sample order") {
  const SwBlock b = load_sw_fixture().front();
  std::vector<double> reversed(b.samples.rbegin(), b.samples.rend());
  REQUIRE(ta::shapiro_wilk(reversed) == ta::shapiro_wilk(b.samples));
}

TEST_CASE("bh_fdr hand cases") {
  SECTION("all rejected when every p clears its rung") {
    const auto rej = ta::bh_fdr({0.01, 0.04, 0.03, 0.005}, 0.05);
    REQUIRE(rej == std::vector<bool>{true, true, true, true});
  }
  SECTION("none rejected") {
    const auto rej = ta::bh_fdr({0.5, 0.04}, 0.05);
    REQUIRE(rej == std::vector<bool>{false, false});
  }
  SECTION("step-up rescues smaller p-values") {
    // p_(3)=0.03 <= 3*0.05/4 rescues 0.02 even though 0.02 > 2*0.05/4
    const auto rej = ta::bh_fdr({0.03, 0.5, 0.02, 0.001}, 0.05);
    REQUIRE(rej == std::vector<bool>{true, false, true, true});
  }
  SECTION("results map back through the original order") {
    const auto rej = ta::bh_fdr({0.9, 0.0001, 0.8}, 0.05);
    REQUIRE(rej == std::vector<bool>{false, true, false});
  }
}

TEST_CASE("bh_fdr dominates Bonferroni") {
  ta::Rng rng(8);
  const double q = 0.1;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> ps;
    for (int i = 0; i < 40; ++i) ps.push_back(std::pow(rng.uniform01(), 3.0));
    const auto bh = ta::bh_fdr(ps, q);
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (ps[i] <= q / static_cast<double>(ps.size()))  // Bonferroni rejection
        REQUIRE(bh[i]);
  }
}

TEST_CASE("bh_fdr validates inputs") {
  REQUIRE_THROWS_AS(ta::bh_fdr({0.5}, 0.0), ta::Error);
  REQUIRE_THROWS_AS(ta::bh_fdr({0.5}, 1.0), ta::Error);
  REQUIRE_THROWS_AS(ta::bh_fdr({1.5}, 0.05), ta::Error);
  REQUIRE_THROWS_AS(ta::bh_fdr({-0.1}, 0.05), ta::Error);
  REQUIRE(ta::bh_fdr({}, 0.05).empty());
}
