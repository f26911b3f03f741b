#include "ucds/cds.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ucds/models.hpp"

namespace ucds {

namespace {

double norm2(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double clamped_cosine(std::span<const double> a, double norm_a,
                      std::span<const double> b, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  return std::clamp(dot / (norm_a * norm_b), 0.0, 1.0);
}

}  // namespace

AffinityMatrix build_affinity(std::span<const std::vector<double>> embeddings,
                              std::vector<UserIndex> vertex_ids) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw std::invalid_argument("build_affinity needs two vectors");
  if (!vertex_ids.empty() && vertex_ids.size() != n)
    throw std::invalid_argument("build_affinity: id count mismatch");
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (embeddings[i].size() != embeddings[0].size())
      throw std::invalid_argument("build_affinity: ragged embeddings");
    norms[i] = norm2(embeddings[i]);
    if (norms[i] == 0.0)
      spdlog::warn("zero embedding at vertex {}; its affinity row is zero", i);
  }
  if (vertex_ids.empty()) {
    vertex_ids.resize(n);
    std::iota(vertex_ids.begin(), vertex_ids.end(), UserIndex{0});
  }
  AffinityMatrix out{SquareMatrix(n), std::move(vertex_ids)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a =
          clamped_cosine(embeddings[i], norms[i], embeddings[j], norms[j]);
      out.weights(i, j) = a;
      out.weights(j, i) = a;
    }
  }
  return out;
}

SpectralEstimate spectral_radius_without(const SquareMatrix& a,
                                         std::size_t excluded, double rel_tol,
                                         std::size_t max_iter) {
  const std::size_t n = a.size();
  std::vector<std::size_t> keep;
  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (i != excluded) keep.push_back(i);
  const std::size_t m = keep.size();
  SpectralEstimate est;
  if (m == 0) {
    est.converged = true;
    return est;
  }

  // Shifting by I makes the Perron root strictly dominant in magnitude, so
  // bipartite structure cannot make the iteration oscillate.
  std::vector<double> x(m, 1.0 / std::sqrt(static_cast<double>(m))), y(m);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    for (std::size_t r = 0; r < m; ++r) {
      double s = x[r];
      for (std::size_t c = 0; c < m; ++c) s += a(keep[r], keep[c]) * x[c];
      y[r] = s;
    }
    double upper = 0.0, xy = 0.0, xx = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      upper = std::max(upper, y[r] / x[r]);
      xy += x[r] * y[r];
      xx += x[r] * x[r];
    }
    const double lower = xy / xx;
    est.iterations = it;
    if (upper - lower <= rel_tol * std::max(upper - 1.0, 1e-12)) {
      est.lambda_max = std::max(upper - 1.0, 0.0);
      est.converged = true;
      return est;
    }
    const double ny = norm2(y);
    for (std::size_t r = 0; r < m; ++r) x[r] = y[r] / ny;
  }

  double gershgorin = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += std::abs(a(keep[r], keep[c]));
    gershgorin = std::max(gershgorin, s);
  }
  est.lambda_max = gershgorin;
  est.converged = false;
  return est;
}

double regularization_shift(const SquareMatrix& a, std::size_t constraint) {
  if (a.size() < 2) throw std::invalid_argument("regularization_shift needs n >= 2");
  if (constraint >= a.size()) throw std::out_of_range("constraint out of range");
  const auto est = spectral_radius_without(a, constraint);
  if (!est.converged)
    spdlog::warn("power iteration did not converge; using Gershgorin bound {}",
                 est.lambda_max);
  return est.lambda_max + kShiftMargin;
}

SquareMatrix constrained_payoff(const UcdsProblem& problem) {
  if (problem.affinity == nullptr) throw std::invalid_argument("no affinity");
  const auto& a = *problem.affinity;
  const std::size_t n = a.size();
  if (problem.constraint >= n) throw std::out_of_range("constraint out of range");
  if (!(problem.alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  SquareMatrix b(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double v = a(i, j) + problem.alpha;
      if (i == j && i != problem.constraint) v -= problem.alpha;
      b(i, j) = v;
    }
  }
  return b;
}

std::vector<double> barycenter(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

ReplicatorResult replicator_dynamics(const SquareMatrix& payoff,
                                     std::vector<double> x0,
                                     const ReplicatorOptions& options,
                                     const ReplicatorObserver& observer) {
  const std::size_t n = payoff.size();
  if (x0.size() != n) throw std::invalid_argument("x0 has the wrong length");
  for (double v : payoff.values())
    if (!(v >= 0.0)) throw std::invalid_argument("payoff must be nonnegative");
  double total = 0.0;
  for (double v : x0) {
    if (!(v >= 0.0)) throw std::invalid_argument("x0 must be nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("x0 not on the simplex");

  std::vector<double> x = std::move(x0), y(n), next(n);
  auto objective = [&] {
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto r = payoff.row(i);
      y[i] = std::inner_product(r.begin(), r.end(), x.begin(), 0.0);
      obj += x[i] * y[i];
    }
    return obj;
  };

  ReplicatorResult result;
  double obj = objective();
  if (observer) observer(x, obj);
  if (obj <= 0.0) {
    result.x = std::move(x);
    result.degenerate = true;
    return result;
  }

  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = x[i] * y[i] / obj;
      sum += next[i];
    }
    double step = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= sum;
      step += std::abs(next[i] - x[i]);
    }
    x.swap(next);
    obj = objective();
    if (observer) observer(x, obj);
    result.iterations = it;
    if (step < options.tol) {
      result.converged = true;
      break;
    }
  }
  result.x = std::move(x);
  return result;
}

ReplicatorResult solve_ucds(const UcdsProblem& problem, std::vector<double> x0,
                            const ReplicatorOptions& options) {
  const auto payoff = constrained_payoff(problem);
  if (x0.empty()) x0 = barycenter(payoff.size());
  return replicator_dynamics(payoff, std::move(x0), options);
}

ExtractedCluster extract_cds(std::span<const double> x, std::size_t constraint,
                             double support_threshold) {
  if (constraint >= x.size()) throw std::out_of_range("constraint out of range");
  if (!(x[constraint] > support_threshold))
    throw ConstraintDropped(constraint, x[constraint]);
  ExtractedCluster out;
  double mass = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > support_threshold) {
      out.members.push_back(i);
      out.weights.push_back(x[i]);
      mass += x[i];
    }
  }
  for (double& w : out.weights) w /= mass;
  return out;
}

const std::vector<Partner>* ClusterAssignment::find(UserIndex user) const {
  auto it = partners.find(user);
  return it == partners.end() ? nullptr : &it->second;
}

std::size_t ClusterAssignment::assigned_users() const {
  return static_cast<std::size_t>(
      std::count_if(partners.begin(), partners.end(),
                    [](const auto& kv) { return !kv.second.empty(); }));
}

namespace {

struct UserSolve {
  std::vector<Partner> partners;
  bool converged = true;
  bool fallback = false;
};

UserSolve solve_for_user(UserIndex user,
                         std::span<const std::vector<double>> embeddings,
                         std::span<const double> norms,
                         const std::vector<UserIndex>& advantaged,
                         const UcdsParams& params) {
  UserSolve out;
  // Candidate pool: the advantaged users closest to `user`.
  std::vector<std::pair<double, UserIndex>> ranked;
  ranked.reserve(advantaged.size());
  for (UserIndex a : advantaged)
    ranked.emplace_back(clamped_cosine(embeddings[user], norms[user],
                                       embeddings[a], norms[a]),
                        a);
  const std::size_t pool = std::min(params.candidate_pool, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + pool, ranked.end(),
                    [](const auto& l, const auto& r) {
                      return l.first != r.first ? l.first > r.first
                                                : l.second < r.second;
                    });

  // Users with no positive affinity cannot join the cluster, so they are
  // kept out of the problem instead of lingering as slow-decaying mass.
  std::size_t usable = 0;
  while (usable < pool && ranked[usable].first > 0.0) ++usable;
  if (usable == 0) {
    out.converged = true;
    out.fallback = true;
    return out;
  }

  std::vector<UserIndex> ids{user};
  std::vector<std::vector<double>> vectors{embeddings[user]};
  for (std::size_t k = 0; k < usable; ++k) {
    ids.push_back(ranked[k].second);
    vectors.push_back(embeddings[ranked[k].second]);
  }
  const std::size_t n = ids.size();
  SquareMatrix a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      a(i, j) = a(j, i) = clamped_cosine(vectors[i], norms[ids[i]], vectors[j],
                                         norms[ids[j]]);

  UcdsProblem problem{&a, 0, regularization_shift(a, 0)};
  const ReplicatorOptions options{params.tol, params.max_iter};
  for (int attempt = 0; attempt <= params.max_retries; ++attempt) {
    const auto solved = solve_ucds(problem, {}, options);
    if (solved.degenerate) break;
    out.converged = solved.converged;
    try {
      const auto cluster = extract_cds(solved.x, 0, params.support_threshold);
      double mass = 0.0;
      for (std::size_t k = 0; k < cluster.members.size(); ++k) {
        if (cluster.members[k] == 0) continue;
        out.partners.push_back({ids[cluster.members[k]], cluster.weights[k]});
        mass += cluster.weights[k];
      }
      for (auto& p : out.partners) p.weight /= mass;
      std::sort(out.partners.begin(), out.partners.end(),
                [](const Partner& l, const Partner& r) { return l.user < r.user; });
      return out;
    } catch (const ConstraintDropped&) {
      problem.alpha *= 2.0;
    }
  }
  out.fallback = true;
  return out;
}

}  // namespace

ClusterAssignment ucds_assign_all(std::span<const std::vector<double>> embeddings,
                                  const UserGrouping& grouping,
                                  const UcdsParams& params) {
  if (grouping.advantaged().empty() || grouping.disadvantaged().empty())
    throw std::invalid_argument("both user groups must be nonempty");
  if (embeddings.size() != grouping.n_users())
    throw std::invalid_argument("one embedding per user expected");
  std::vector<double> norms(embeddings.size());
  for (std::size_t u = 0; u < embeddings.size(); ++u) norms[u] = norm2(embeddings[u]);

  ClusterAssignment out;
  std::size_t dropped = 0;
  for (UserIndex d : grouping.disadvantaged()) {
    auto solved = solve_for_user(d, embeddings, norms, grouping.advantaged(), params);
    if (!solved.converged) ++out.non_converged;
    if (solved.fallback) ++dropped;
    out.partners.emplace(d, std::move(solved.partners));
  }
  out.fallbacks = dropped;
  if (dropped > 0)
    spdlog::warn("{} disadvantaged users left without partners", dropped);
  return out;
}

ClusterAssignment ucds_assign_all(const Backbone& model,
                                  const UserGrouping& grouping,
                                  const UcdsParams& params) {
  std::vector<std::vector<double>> snapshot;
  snapshot.reserve(model.n_users());
  for (UserIndex u = 0; u < model.n_users(); ++u)
    snapshot.push_back(model.user_embedding(u));
  return ucds_assign_all(snapshot, grouping, params);
}

ClusterAssignment naive_assign(const InteractionLog& train,
                               const UserGrouping& grouping, std::size_t k) {
  if (k == 0) throw std::invalid_argument("naive_assign: k must be >= 1");
  ClusterAssignment out;
  std::vector<std::size_t> overlap(train.n_users(), 0);
  std::vector<UserIndex> hit;
  for (UserIndex d : grouping.disadvantaged()) {
    hit.clear();
    for (ItemIndex i : train.items_of(d)) {
      for (UserIndex a : train.users_of(i)) {
        if (!grouping.is_advantaged(a)) continue;
        if (overlap[a]++ == 0) hit.push_back(a);
      }
    }
    std::sort(hit.begin(), hit.end(), [&](UserIndex l, UserIndex r) {
      return overlap[l] != overlap[r] ? overlap[l] > overlap[r] : l < r;
    });
    const std::size_t take = std::min(k, hit.size());
    std::vector<Partner> partners;
    for (std::size_t n = 0; n < take; ++n)
      partners.push_back({hit[n], 1.0 / static_cast<double>(take)});
    std::sort(partners.begin(), partners.end(),
              [](const Partner& l, const Partner& r) { return l.user < r.user; });
    for (UserIndex a : hit) overlap[a] = 0;
    out.partners.emplace(d, std::move(partners));
  }
  return out;
}

void write_assignment(const ClusterAssignment& assignment,
                      const InteractionLog& ids,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
  out << "disadvantaged_id,advantaged_id,weight\n";
  out.precision(6);
  out << std::fixed;
  for (const auto& [d, partners] : assignment.partners)
    for (const auto& p : partners)
      out << ids.external_user(d) << ',' << ids.external_user(p.user) << ','
          << p.weight << '\n';
}

}  // namespace ucds
