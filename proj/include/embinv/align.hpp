#pragma once

#include "embinv/types.hpp"

#include <optional>
#include <vector>

namespace embinv {

/// Online ridge-regression state mapping the local embedding space into the
/// victim space. Only the sufficient statistics (gram and cross moments) are
/// kept, so memory is O(d^2) regardless of how many pairs were ingested.
/// State is per-target: it accumulates across iterations of one attack
/// instance and is discarded afterwards.
struct AlignState {
  Eigen::MatrixXd gram;   // running E^T E, d_local x d_local
  Eigen::MatrixXd cross;  // running E^T E~, d_local x d_victim
  int n_pairs = 0;
  double lambda = 0.1;
  std::optional<Eigen::MatrixXd> w;  // current solution, d_local x d_victim
  std::vector<double> conf_history;

  AlignState() = default;
  AlignState(int d_local, int d_victim, double lambda);

  int d_local() const { return static_cast<int>(gram.rows()); }
  int d_victim() const { return static_cast<int>(cross.cols()); }
};

/// Accumulates a batch of (local, victim) embedding pairs into the moments.
void ingest(AlignState& state, const std::vector<Embedding>& locals,
            const std::vector<Embedding>& victims);

/// Solves W = (gram + lambda*I)^-1 * cross through an SPD factorization and
/// stores the result in the state.
const Eigen::MatrixXd& solve(AlignState& state);

/// Projects a local embedding into the victim space with the current W.
Embedding project(const AlignState& state, const Embedding& e);

/// Mean cosine between projected and freshly queried victim embeddings.
/// For iteration 1 the just-solved W stands in for the undefined previous
/// matrix and the mean is damped by 0.7.
double confidence(AlignState& state, const std::vector<Embedding>& locals_queried,
                  const std::vector<Embedding>& victims_queried,
                  const std::optional<Eigen::MatrixXd>& w_prev, int iteration);

}  // namespace embinv
