#include "ucds/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "ucds/errors.hpp"
#include "ucds/kv.hpp"
#include "ucds/models.hpp"

namespace ucds {

void EvalConfig::validate() const {
  if (k < 1 || k > 100) throw ConfigError("top_k", "must lie in [1, 100]");
}

std::vector<ItemIndex> rank_by_score(std::span<const ItemIndex> items,
                                     std::span<const double> scores) {
  if (items.size() != scores.size())
    throw std::invalid_argument("rank_by_score: size mismatch");
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return items[a] < items[b];
  });
  std::vector<ItemIndex> ranked;
  ranked.reserve(items.size());
  for (auto k : order) ranked.push_back(items[k]);
  return ranked;
}

std::vector<ItemIndex> rank_candidates(const Backbone& model, UserIndex user,
                                       std::span<const ItemIndex> candidates) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (ItemIndex i : candidates) scores.push_back(model.score(user, i));
  return rank_by_score(candidates, scores);
}

namespace {

std::size_t rank_of(std::span<const ItemIndex> ranked, ItemIndex positive) {
  auto it = std::find(ranked.begin(), ranked.end(), positive);
  if (it == ranked.end())
    throw std::invalid_argument("positive item missing from the ranking");
  return static_cast<std::size_t>(it - ranked.begin()) + 1;
}

}  // namespace

double ndcg_at_k(std::span<const ItemIndex> ranked, ItemIndex positive, int k) {
  const auto rank = rank_of(ranked, positive);
  if (rank > static_cast<std::size_t>(k)) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

double f1_at_k(std::span<const ItemIndex> ranked, ItemIndex positive, int k) {
  const auto rank = rank_of(ranked, positive);
  if (rank > static_cast<std::size_t>(k)) return 0.0;
  // precision 1/k, recall 1
  return 2.0 / (static_cast<double>(k) + 1.0);
}

MetricReport aggregate(std::span<const UserMetrics> per_user,
                       const UserGrouping& grouping) {
  MetricReport report;
  double sum_ndcg = 0.0, sum_f1 = 0.0;
  double adv_ndcg = 0.0, adv_f1 = 0.0, dis_ndcg = 0.0, dis_f1 = 0.0;
  for (const auto& m : per_user) {
    sum_ndcg += m.ndcg;
    sum_f1 += m.f1;
    if (grouping.is_advantaged(m.user)) {
      ++report.n_advantaged;
      adv_ndcg += m.ndcg;
      adv_f1 += m.f1;
    } else {
      ++report.n_disadvantaged;
      dis_ndcg += m.ndcg;
      dis_f1 += m.f1;
    }
  }
  report.n_users = per_user.size();
  if (report.n_users == 0) return report;
  const double n = static_cast<double>(report.n_users);
  report.ndcg.overall = sum_ndcg / n;
  report.f1.overall = sum_f1 / n;
  if (report.n_advantaged > 0) {
    report.ndcg.advantaged = adv_ndcg / static_cast<double>(report.n_advantaged);
    report.f1.advantaged = adv_f1 / static_cast<double>(report.n_advantaged);
  }
  if (report.n_disadvantaged > 0) {
    report.ndcg.disadvantaged = dis_ndcg / static_cast<double>(report.n_disadvantaged);
    report.f1.disadvantaged = dis_f1 / static_cast<double>(report.n_disadvantaged);
  }
  for (auto* s : {&report.ndcg, &report.f1})
    if (s->advantaged && s->disadvantaged)
      s->uof = std::abs(*s->advantaged - *s->disadvantaged);
  return report;
}

double quantize_score(double score) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", score);
  return std::strtod(buf, nullptr);
}

void write_results(std::span<const ResultRow> rows,
                   const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
  out << "user_id,item_id,score,label\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.score);
    out << r.user << ',' << r.item << ',' << buf << ',' << r.label << '\n';
  }
  if (!out) throw DataError(DataErrc::io, "write failed for " + path.string());
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrc::io, "cannot open " + path.string());
  std::vector<ResultRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::stringstream fields(line);
    std::string user, item, score, label;
    if (!std::getline(fields, user, ',') || !std::getline(fields, item, ',') ||
        !std::getline(fields, score, ',') || !std::getline(fields, label))
      throw ParseError(path.string(), line_no, "expected four columns");
    try {
      rows.push_back({kv::to_int("user_id", user), kv::to_int("item_id", item),
                      kv::to_real("score", score),
                      static_cast<int>(kv::to_int("label", label))});
    } catch (const ConfigError& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return rows;
}

MetricReport report_from_rows(std::span<const ResultRow> rows,
                              const InteractionLog& ids,
                              const UserGrouping& grouping, int k) {
  struct PerUser {
    std::vector<ItemIndex> items;
    std::vector<double> scores;
    std::optional<ItemIndex> positive;
  };
  std::map<UserIndex, PerUser> users;
  for (const auto& r : rows) {
    auto u = ids.user_index(r.user);
    auto i = ids.item_index(r.item);
    if (!u || !i)
      throw DataError(DataErrc::unknown_user, "result row with unknown id");
    auto& pu = users[*u];
    pu.items.push_back(*i);
    pu.scores.push_back(r.score);
    if (r.label == 1) {
      if (pu.positive)
        throw DataError(DataErrc::split_inconsistent,
                        "two positive rows for user " + std::to_string(r.user));
      pu.positive = *i;
    }
  }
  std::vector<UserMetrics> metrics;
  metrics.reserve(users.size());
  for (const auto& [u, pu] : users) {
    if (!pu.positive)
      throw DataError(DataErrc::split_inconsistent,
                      "no positive row for user " + std::to_string(ids.external_user(u)));
    const auto ranked = rank_by_score(pu.items, pu.scores);
    metrics.push_back({u, ndcg_at_k(ranked, *pu.positive, k),
                       f1_at_k(ranked, *pu.positive, k)});
  }
  return aggregate(metrics, grouping);
}

Evaluation evaluate(const Backbone& model, const EvalCandidateSet& candidates,
                    const InteractionLog& ids, const UserGrouping& grouping,
                    const EvalConfig& config) {
  config.validate();
  Evaluation out;
  out.per_user.reserve(candidates.users.size());
  std::vector<ItemIndex> items;
  std::vector<double> scores;
  for (const auto& uc : candidates.users) {
    items.assign(1, uc.positive);
    items.insert(items.end(), uc.negatives.begin(), uc.negatives.end());
    scores.clear();
    for (ItemIndex i : items) scores.push_back(quantize_score(model.score(uc.user, i)));
    const auto ranked = rank_by_score(items, scores);
    out.per_user.push_back({uc.user, ndcg_at_k(ranked, uc.positive, config.k),
                            f1_at_k(ranked, uc.positive, config.k)});
    for (std::size_t n = 0; n < items.size(); ++n)
      out.rows.push_back({ids.external_user(uc.user), ids.external_item(items[n]),
                          scores[n], n == 0 ? 1 : 0});
  }
  out.report = aggregate(out.per_user, grouping);
  return out;
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "     n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%8.4f", *v);
  return buf;
}

}  // namespace

std::string format_report(const MetricReport& report) {
  std::ostringstream out;
  out << "metric   Overall     Adv.  Disadv.    M_UOF\n";
  auto line = [&](const char* name, const MetricSummary& s) {
    char head[16];
    std::snprintf(head, sizeof head, "%-6s", name);
    out << head << cell(s.overall) << ' ' << cell(s.advantaged) << ' '
        << cell(s.disadvantaged) << ' ' << cell(s.uof) << '\n';
  };
  line("NDCG", report.ndcg);
  line("F1", report.f1);
  out << "users: " << report.n_users << " (adv " << report.n_advantaged
      << ", disadv " << report.n_disadvantaged << ")\n";
  return out.str();
}

void write_metric_report(const MetricReport& report,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
  out << "metric,group,value\n";
  auto emit = [&](const char* metric, const char* group,
                  const std::optional<double>& v) {
    out << metric << ',' << group << ',';
    if (v) out << kv::format_real(*v);
    else out << "nan";
    out << '\n';
  };
  for (auto [name, s] : {std::pair{"ndcg", &report.ndcg}, std::pair{"f1", &report.f1}}) {
    emit(name, "overall", s->overall);
    emit(name, "advantaged", s->advantaged);
    emit(name, "disadvantaged", s->disadvantaged);
    emit(name, "uof", s->uof);
  }
}

}  // namespace ucds
