#pragma once

#include "embinv/align.hpp"
#include "embinv/embed.hpp"
#include "embinv/lm.hpp"
#include "embinv/types.hpp"

#include <unordered_map>

namespace embinv {

/// State carried across iterations of one attack instance.
struct BeamState {
  int iteration = 0;  // completed iterations
  std::vector<Candidate> live;
  std::vector<Candidate> finished;
  AlignState align;
  /// Victim embeddings already paid for, keyed by queried text. Only used for
  /// deterministic victims; fresh-noise defenses bypass it.
  std::unordered_map<std::string, Embedding> memo;
  double last_conf = 0.0;
  bool has_conf = false;
};

/// Z-score normalization with population standard deviation. Zero-variance
/// and single-element inputs map to all zeros.
Eigen::VectorXd z_score(const Eigen::VectorXd& values);

/// Hybrid score: z(logits) + conf * z(cosines), elementwise.
Eigen::VectorXd score_candidates(const Eigen::VectorXd& logits, const Eigen::VectorXd& cosines,
                                 double conf);

/// Victim queries budgeted for iteration t: 3*K_A at t=1, then K_A*gamma^(t-1)
/// rounded per config and floored at 1. Callers cap it at the number of
/// query-eligible candidates.
int query_count(int t, const AttackConfig& cfg);

/// One full iteration: expand, project, select and send victim queries,
/// update the alignment online, re-project, re-score everything and prune the
/// beam. A victim failure propagates without touching the state.
void beam_step(BeamState& state, const Embedding& target, const NGramLM& lm,
               EmbedderPort& local_embedder, VictimHandle& victim, const AttackConfig& cfg);

/// Runs the full attack loop against one target embedding and returns the
/// reconstruction report (metrics are filled in by the caller).
RunReport run_attack(const Embedding& target, const NGramLM& lm, EmbedderPort& local_embedder,
                     VictimHandle& victim, const AttackConfig& cfg);

}  // namespace embinv
