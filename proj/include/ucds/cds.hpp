#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "ucds/dataset.hpp"
#include "ucds/errors.hpp"

namespace ucds {

class Backbone;

// Dense square matrix, row-major.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0)
      : n_(n), values_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * n_, n_);
  }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

// Symmetric, entries in [0, 1], zero diagonal.
struct AffinityMatrix {
  SquareMatrix weights;
  std::vector<UserIndex> vertex_ids;
};

// A_ij = max(cos(e_i, e_j), 0) off the diagonal. A zero vector gets an
// all-zero row (with a warning).
AffinityMatrix build_affinity(std::span<const std::vector<double>> embeddings,
                              std::vector<UserIndex> vertex_ids = {});

struct SpectralEstimate {
  double lambda_max = 0.0;  // upper bound on the Perron root
  std::size_t iterations = 0;
  bool converged = false;  // false: Gershgorin bound was used
};

// Largest eigenvalue of the nonnegative symmetric principal submatrix that
// drops `excluded`, by power iteration on (M + I) with a Collatz-Wielandt
// upper bound, so the estimate never falls below the true value.
SpectralEstimate spectral_radius_without(const SquareMatrix& a,
                                         std::size_t excluded,
                                         double rel_tol = 1e-6,
                                         std::size_t max_iter = 10000);

inline constexpr double kShiftMargin = 1e-3;

// lambda_max of A without the constraint vertex, plus kShiftMargin.
double regularization_shift(const SquareMatrix& a, std::size_t constraint);

struct UcdsProblem {
  const SquareMatrix* affinity = nullptr;
  std::size_t constraint = 0;
  double alpha = 0.0;
};

// B' = A - alpha * diag(1 - e_constraint) + alpha * J. Nonnegative, and has
// the same simplex local maximizers as A - alpha * D.
SquareMatrix constrained_payoff(const UcdsProblem& problem);

struct ReplicatorOptions {
  double tol = 1e-6;  // L1 norm of one step
  std::size_t max_iter = 2000;
};

struct ReplicatorResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  bool converged = false;
  bool degenerate = false;  // x'Bx == 0 at the start; x is x0
};

// Called with every iterate (starting with x0) and its objective x'Bx.
using ReplicatorObserver =
    std::function<void(std::span<const double> x, double objective)>;

// x_i <- x_i (Bx)_i / x'Bx on a nonnegative payoff. Throws
// std::invalid_argument on negative payoff entries or an x0 off the simplex.
ReplicatorResult replicator_dynamics(const SquareMatrix& payoff,
                                     std::vector<double> x0,
                                     const ReplicatorOptions& options = {},
                                     const ReplicatorObserver& observer = {});

// Solves the constrained problem from x0 (barycenter when empty).
ReplicatorResult solve_ucds(const UcdsProblem& problem,
                            std::vector<double> x0 = {},
                            const ReplicatorOptions& options = {});

std::vector<double> barycenter(std::size_t n);

class ConstraintDropped : public Error {
 public:
  ConstraintDropped(std::size_t constraint, double mass)
      : Error("constraint vertex " + std::to_string(constraint) +
              " fell below the support threshold (x = " +
              std::to_string(mass) + ")"),
        constraint_(constraint) {}
  std::size_t constraint() const { return constraint_; }

 private:
  std::size_t constraint_;
};

struct ExtractedCluster {
  std::vector<std::size_t> members;  // ascending
  std::vector<double> weights;       // sums to 1
};

ExtractedCluster extract_cds(std::span<const double> x, std::size_t constraint,
                             double support_threshold = 1e-4);

struct Partner {
  UserIndex user = 0;
  double weight = 0.0;
  bool operator==(const Partner&) const = default;
};

struct ClusterAssignment {
  // Every disadvantaged user has an entry; the list may be empty.
  std::map<UserIndex, std::vector<Partner>> partners;
  std::size_t non_converged = 0;
  std::size_t fallbacks = 0;  // users left empty by degeneracy or retries

  const std::vector<Partner>* find(UserIndex user) const;
  std::size_t assigned_users() const;
  bool operator==(const ClusterAssignment&) const = default;
};

struct UcdsParams {
  std::size_t candidate_pool = 50;
  double tol = 1e-6;
  std::size_t max_iter = 2000;
  double support_threshold = 1e-4;
  int max_retries = 3;
  bool operator==(const UcdsParams&) const = default;
};

// Clusters each disadvantaged user with advantaged users from a snapshot of
// user embeddings (row u = embedding of user u). Partner weights are the
// extracted weights renormalized over the advantaged members.
ClusterAssignment ucds_assign_all(std::span<const std::vector<double>> embeddings,
                                  const UserGrouping& grouping,
                                  const UcdsParams& params = {});
ClusterAssignment ucds_assign_all(const Backbone& model,
                                  const UserGrouping& grouping,
                                  const UcdsParams& params = {});

// Top-k advantaged users by co-interacted item count, uniform weights.
ClusterAssignment naive_assign(const InteractionLog& train,
                               const UserGrouping& grouping, std::size_t k);

// "disadvantaged_id,advantaged_id,weight" per line, external ids.
void write_assignment(const ClusterAssignment& assignment,
                      const InteractionLog& ids,
                      const std::filesystem::path& path);

}  // namespace ucds
