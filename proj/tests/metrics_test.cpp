#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fake_model.hpp"
#include "test_util.hpp"
#include "ucds/dataset.hpp"
#include "ucds/metrics.hpp"

using namespace ucds;

namespace {

std::vector<ItemIndex> ranking_with_positive_at(std::size_t rank) {
  std::vector<ItemIndex> ranked;
  for (ItemIndex i = 1; i <= 100; ++i) ranked.push_back(i);
  std::swap(ranked[0], ranked[rank - 1]);  // item 1 is the positive
  return ranked;
}

// n users with `per_user` interactions on a catalog of n_items.
struct Fixture {
  InteractionLog log;
  SplitDataset split;
  EvalCandidateSet candidates;
  UserGrouping grouping;
};

Fixture make_fixture(std::size_t n_users, std::size_t n_items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<RawRecord> raw;
  for (std::size_t u = 0; u < n_users; ++u) {
    const std::size_t n = 3 + u % 7;
    std::set<ExternalId> items;
    while (items.size() < n) items.insert(static_cast<ExternalId>(rng() % n_items));
    for (auto i : items) raw.push_back({static_cast<ExternalId>(u), i, 1.0});
  }
  for (std::size_t i = 0; i < n_items; ++i)
    raw.push_back({static_cast<ExternalId>(i % n_users), static_cast<ExternalId>(i), 1.0});
  auto log = InteractionLog::from_raw(raw);
  Rng split_rng = make_rng(seed, rng_stream::split);
  auto split = leave_one_out_split(log, split_rng);
  Rng cand_rng = make_rng(seed, rng_stream::test_candidates);
  auto candidates = build_eval_candidates(split.test, log, 99, cand_rng);
  auto grouping = group_users_by_activity(log);
  return {std::move(log), std::move(split), std::move(candidates), std::move(grouping)};
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("ndcg and f1 closed forms") {
  CHECK(ndcg_at_k(ranking_with_positive_at(1), 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ndcg_at_k(ranking_with_positive_at(2), 1) == doctest::Approx(0.63093).epsilon(1e-5));
  CHECK(ndcg_at_k(ranking_with_positive_at(11), 1) == 0.0);
  CHECK(f1_at_k(ranking_with_positive_at(10), 1) == doctest::Approx(2.0 / 11.0).epsilon(1e-12));
  CHECK(f1_at_k(ranking_with_positive_at(11), 1) == 0.0);
  std::vector<ItemIndex> missing{2, 3, 4};
  CHECK_THROWS_AS(ndcg_at_k(missing, 1), std::invalid_argument);
  CHECK_THROWS_AS(f1_at_k(missing, 1), std::invalid_argument);
}

TEST_CASE("ties rank by ascending item id") {
  std::vector<ItemIndex> items{5, 3, 9, 1};
  std::vector<double> scores{0.5, 0.5, 0.9, 0.5};
  CHECK(rank_by_score(items, scores) == std::vector<ItemIndex>{9, 1, 3, 5});
}

TEST_CASE("rank metrics ignore candidate order and monotone transforms") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ItemIndex> items(100);
    std::vector<double> scores(100);
    for (ItemIndex i = 0; i < 100; ++i) {
      items[i] = i;
      scores[i] = unit(rng);
    }
    const ItemIndex positive = static_cast<ItemIndex>(rng() % 100);
    const double base = ndcg_at_k(rank_by_score(items, scores), positive);

    std::vector<std::size_t> perm(100);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ItemIndex> pi(100);
    std::vector<double> ps(100), ts(100);
    for (std::size_t k = 0; k < 100; ++k) {
      pi[k] = items[perm[k]];
      ps[k] = scores[perm[k]];
      ts[k] = std::exp(2.0 * ps[k]) + 1.0;
    }
    CHECK(ndcg_at_k(rank_by_score(pi, ps), positive) == base);
    CHECK(ndcg_at_k(rank_by_score(pi, ts), positive) == base);
  }
}

TEST_CASE("aggregate group means and gap") {
  SUBCASE("weighted overall from group means") {
    std::vector<UserMetrics> m;
    std::vector<UserIndex> adv, dis;
    for (UserIndex u = 0; u < 100; ++u) {
      const bool a = u < 5;
      (a ? adv : dis).push_back(u);
      m.push_back({u, a ? 0.4591 : 0.3766, 0.0});
    }
    const auto r = aggregate(m, UserGrouping(100, adv, dis));
    CHECK(r.ndcg.overall == doctest::Approx(0.3807).epsilon(1e-4));
    CHECK(*r.ndcg.uof == doctest::Approx(0.0825).epsilon(1e-9));
    CHECK(r.n_advantaged == 5);
  }
  SUBCASE("gap is an absolute difference") {
    std::vector<UserMetrics> m{{0, 0.5, 0.0}, {1, 0.3, 0.0}};
    CHECK(*aggregate(m, UserGrouping(2, {0}, {1})).ndcg.uof == doctest::Approx(0.2));
    CHECK(*aggregate(m, UserGrouping(2, {1}, {0})).ndcg.uof == doctest::Approx(0.2));
    std::vector<UserMetrics> same{{0, 0.4, 0.1}, {1, 0.4, 0.1}};
    CHECK(*aggregate(same, UserGrouping(2, {0}, {1})).ndcg.uof == 0.0);
  }
  SUBCASE("empty group yields no gap") {
    std::vector<UserMetrics> m{{1, 0.3, 0.0}};
    const auto r = aggregate(m, UserGrouping(2, {0}, {1}));
    CHECK_FALSE(r.ndcg.advantaged.has_value());
    CHECK_FALSE(r.ndcg.uof.has_value());
    CHECK(r.ndcg.overall == doctest::Approx(0.3));
  }
}

TEST_CASE("result file round trip reproduces the report") {
  const auto fx = make_fixture(60, 150, 3);
  std::mt19937_64 rng(4);
  std::vector<double> noise(60 * 150);
  for (auto& v : noise) v = std::normal_distribution<double>(0.0, 1.0)(rng);
  FakeModel model(60, 150, [&](UserIndex u, ItemIndex i) { return noise[u * 150 + i]; });
  const auto eval = evaluate(model, fx.candidates, fx.log, fx.grouping, EvalConfig{});
  CHECK(eval.rows.size() == 100 * fx.candidates.users.size());

  testutil::TempDir dir;
  write_results(eval.rows, dir / "r.csv");
  const auto rows = read_results(dir / "r.csv");
  REQUIRE(rows.size() == eval.rows.size());
  std::map<ExternalId, int> positives;
  for (const auto& r : rows) positives[r.user] += r.label;
  for (const auto& [u, n] : positives) CHECK(n == 1);
  CHECK(report_from_rows(rows, fx.log, fx.grouping, 10) == eval.report);
  CHECK(testutil::read_file(dir / "r.csv").rfind("user_id,item_id,score,label\n", 0) == 0);
}

TEST_CASE("oracle, adversarial and random models") {
  const auto fx = make_fixture(400, 300, 5);
  std::map<UserIndex, ItemIndex> positive;
  for (const auto& uc : fx.candidates.users) positive[uc.user] = uc.positive;

  FakeModel oracle(400, 300, [&](UserIndex u, ItemIndex i) {
    return positive.at(u) == i ? 1.0 : 0.0;
  });
  const auto best = evaluate(oracle, fx.candidates, fx.log, fx.grouping, EvalConfig{}).report;
  CHECK(best.ndcg.overall == 1.0);
  CHECK(best.f1.overall == doctest::Approx(2.0 / 11.0).epsilon(1e-12));
  CHECK(*best.ndcg.uof == 0.0);

  FakeModel adversarial(400, 300, [&](UserIndex u, ItemIndex i) {
    return positive.at(u) == i ? -1.0 : 0.0;
  });
  const auto worst = evaluate(adversarial, fx.candidates, fx.log, fx.grouping, EvalConfig{}).report;
  CHECK(worst.ndcg.overall == 0.0);
  CHECK(worst.f1.overall == 0.0);

  // Uniformly random ranks: E[NDCG] = (1/100) sum_{r<=10} 1/log2(r+1).
  std::mt19937_64 rng(6);
  std::vector<double> noise(400 * 300);
  for (auto& v : noise) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  FakeModel random(400, 300, [&](UserIndex u, ItemIndex i) { return noise[u * 300 + i]; });
  const auto rep = evaluate(random, fx.candidates, fx.log, fx.grouping, EvalConfig{}).report;
  double mean = 0.0, second = 0.0;
  for (int r = 1; r <= 10; ++r) {
    const double g = 1.0 / std::log2(r + 1.0);
    mean += g / 100.0;
    second += g * g / 100.0;
  }
  const double n = static_cast<double>(rep.n_users);
  const double sd = std::sqrt((second - mean * mean) / n);
  CHECK(std::abs(rep.ndcg.overall - mean) < 3 * sd);
}

TEST_CASE("eval config bounds") {
  EvalConfig c;
  c.k = 0;
  CHECK_THROWS(c.validate());
  c.k = 101;
  CHECK_THROWS(c.validate());
}

}  // TEST_SUITE
