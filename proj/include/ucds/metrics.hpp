#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ucds/dataset.hpp"

namespace ucds {

class Backbone;

struct EvalConfig {
  int k = 10;
  void validate() const;  // 1 <= k <= 100
  bool operator==(const EvalConfig&) const = default;
};

// Descending score; equal scores fall back to ascending item id.
std::vector<ItemIndex> rank_by_score(std::span<const ItemIndex> items,
                                     std::span<const double> scores);
std::vector<ItemIndex> rank_candidates(const Backbone& model, UserIndex user,
                                       std::span<const ItemIndex> candidates);

// Single relevant item. Throw std::invalid_argument if it is not ranked.
double ndcg_at_k(std::span<const ItemIndex> ranked, ItemIndex positive, int k = 10);
double f1_at_k(std::span<const ItemIndex> ranked, ItemIndex positive, int k = 10);

struct UserMetrics {
  UserIndex user = 0;
  double ndcg = 0.0;
  double f1 = 0.0;
};

// Group means are empty when the group has no evaluated user; the gap is
// then empty too.
struct MetricSummary {
  double overall = 0.0;
  std::optional<double> advantaged;
  std::optional<double> disadvantaged;
  std::optional<double> uof;  // |advantaged - disadvantaged|
  bool operator==(const MetricSummary&) const = default;
};

struct MetricReport {
  MetricSummary ndcg;
  MetricSummary f1;
  std::size_t n_users = 0;
  std::size_t n_advantaged = 0;
  std::size_t n_disadvantaged = 0;
  bool operator==(const MetricReport&) const = default;
};

MetricReport aggregate(std::span<const UserMetrics> per_user,
                       const UserGrouping& grouping);

struct ResultRow {
  ExternalId user = 0;
  ExternalId item = 0;
  double score = 0.0;
  int label = 0;
};

// Scores as they appear in result files (six decimals).
double quantize_score(double score);

void write_results(std::span<const ResultRow> rows,
                   const std::filesystem::path& path);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

// Recomputes the report from result rows alone.
MetricReport report_from_rows(std::span<const ResultRow> rows,
                              const InteractionLog& ids,
                              const UserGrouping& grouping, int k);

struct Evaluation {
  MetricReport report;
  std::vector<UserMetrics> per_user;
  std::vector<ResultRow> rows;
};

// Ranks on quantized scores, so the report is reproducible from the rows.
Evaluation evaluate(const Backbone& model, const EvalCandidateSet& candidates,
                    const InteractionLog& ids, const UserGrouping& grouping,
                    const EvalConfig& config);

// Overall / Adv. / Disadv. / M_UOF per metric, four decimals.
std::string format_report(const MetricReport& report);
// "metric,group,value" lines.
void write_metric_report(const MetricReport& report,
                         const std::filesystem::path& path);

}  // namespace ucds
