#include "embinv/align.hpp"

#include "embinv/embed.hpp"

#include <Eigen/Cholesky>

namespace embinv {

AlignState::AlignState(int d_local, int d_victim, double lambda_) {
  if (d_local < 1 || d_victim < 1) throw std::invalid_argument("dimensions must be positive");
  if (!(lambda_ > 0.0)) throw std::invalid_argument("lambda must be positive");
  gram = Eigen::MatrixXd::Zero(d_local, d_local);
  cross = Eigen::MatrixXd::Zero(d_local, d_victim);
  lambda = lambda_;
}

void ingest(AlignState& state, const std::vector<Embedding>& locals,
            const std::vector<Embedding>& victims) {
  if (locals.empty() || locals.size() != victims.size()) {
    throw std::invalid_argument("ingest needs equally sized non-empty batches");
  }
  for (std::size_t i = 0; i < locals.size(); ++i) {
    if (locals[i].size() != state.gram.rows() || victims[i].size() != state.cross.cols()) {
      throw std::invalid_argument("embedding dimension mismatch in ingest");
    }
    state.gram.noalias() += locals[i] * locals[i].transpose();
    state.cross.noalias() += locals[i] * victims[i].transpose();
  }
  state.n_pairs += static_cast<int>(locals.size());
}

const Eigen::MatrixXd& solve(AlignState& state) {
  if (state.n_pairs < 1) throw std::logic_error("solve requires at least one ingested pair");
  Eigen::MatrixXd system = state.gram;
  system.diagonal().array() += state.lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("ridge system is not positive definite; check lambda > 0");
  }
  state.w = llt.solve(state.cross);
  return *state.w;
}

Embedding project(const AlignState& state, const Embedding& e) {
  if (!state.w) throw std::logic_error("project requires a solved alignment matrix");
  if (e.size() != state.w->rows()) throw std::invalid_argument("dimension mismatch in project");
  return state.w->transpose() * e;
}

double confidence(AlignState& state, const std::vector<Embedding>& locals_queried,
                  const std::vector<Embedding>& victims_queried,
                  const std::optional<Eigen::MatrixXd>& w_prev, int iteration) {
  if (locals_queried.empty() || locals_queried.size() != victims_queried.size()) {
    throw std::invalid_argument("confidence needs equally sized non-empty batches");
  }
  const Eigen::MatrixXd* w = nullptr;
  double factor = 1.0;
  if (iteration <= 1) {
    if (!state.w) solve(state);
    w = &*state.w;
    factor = 0.7;
  } else {
    if (!w_prev) throw std::invalid_argument("confidence at t >= 2 needs the previous matrix");
    w = &*w_prev;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < locals_queried.size(); ++i) {
    Embedding projected = w->transpose() * locals_queried[i];
    sum += cosine(projected, victims_queried[i]);
  }
  return factor * sum / static_cast<double>(locals_queried.size());
}

}  // namespace embinv
