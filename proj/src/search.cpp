#include "embinv/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace embinv {

namespace {

// Indices sorted by value descending, index ascending on ties.
std::vector<int> order_desc(const std::vector<double>& values, const std::vector<int>& indices) {
  std::vector<int> order = indices;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  return order;
}

double candidate_cosine(const Candidate& c, const AlignState& align, const Embedding& target) {
  if (c.victim_emb) return cosine(*c.victim_emb, target);
  if (c.projected_emb) return cosine(*c.projected_emb, target);
  if (align.w) return cosine(project(align, c.local_emb), target);
  return 0.0;
}

// Key used to pick the query group: the current hybrid score under the stale
// matrix, falling back to raw logits before any matrix exists. Kept as one
// function so alternative grouping policies stay a local change.
std::vector<double> selection_key(const std::vector<Candidate>& pool, const BeamState& state,
                                  const Embedding& target, const AttackConfig& cfg) {
  std::vector<double> key(pool.size());
  if (!state.align.w) {
    for (std::size_t i = 0; i < pool.size(); ++i) key[i] = pool[i].last_logit;
    return key;
  }
  Eigen::VectorXd logits_vec(pool.size());
  Eigen::VectorXd cos_vec(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    logits_vec[static_cast<int>(i)] = pool[i].last_logit;
    cos_vec[static_cast<int>(i)] = candidate_cosine(pool[i], state.align, target);
  }
  double conf_sel = cfg.force_conf_zero ? 0.0 : state.last_conf;
  Eigen::VectorXd stale = score_candidates(logits_vec, cos_vec, conf_sel);
  for (std::size_t i = 0; i < pool.size(); ++i) key[i] = stale[static_cast<int>(i)];
  return key;
}

}  // namespace

Eigen::VectorXd z_score(const Eigen::VectorXd& values) {
  if (values.size() == 0) throw std::invalid_argument("z_score needs a non-empty vector");
  if (values.size() == 1) return Eigen::VectorXd::Zero(1);
  double mean = values.mean();
  double var = (values.array() - mean).square().mean();
  double std_dev = std::sqrt(var);
  if (std_dev < 1e-12) return Eigen::VectorXd::Zero(values.size());
  return (values.array() - mean) / std_dev;
}

Eigen::VectorXd score_candidates(const Eigen::VectorXd& logits, const Eigen::VectorXd& cosines,
                                 double conf) {
  if (logits.size() != cosines.size()) {
    throw std::invalid_argument("logits and cosines must have equal length");
  }
  return z_score(logits) + conf * z_score(cosines);
}

int query_count(int t, const AttackConfig& cfg) {
  if (t < 1) throw std::invalid_argument("iteration must be at least 1");
  if (t == 1) return 3 * cfg.k_a;
  double raw = static_cast<double>(cfg.k_a) * std::pow(cfg.gamma, t - 1);
  long rounded = 0;
  switch (cfg.rounding) {
    case Rounding::Nearest: rounded = std::llround(raw); break;
    case Rounding::Floor: rounded = static_cast<long>(std::floor(raw)); break;
    case Rounding::Ceil: rounded = static_cast<long>(std::ceil(raw)); break;
  }
  return static_cast<int>(std::max<long>(rounded, 1));
}

void beam_step(BeamState& state, const Embedding& target, const NGramLM& lm,
               EmbedderPort& local_embedder, VictimHandle& victim, const AttackConfig& cfg) {
  if (state.live.empty()) throw std::logic_error("beam_step requires a live candidate");
  const Vocabulary& vocab = lm.vocab();
  const int t = state.iteration + 1;

  // (1) Expand every live candidate through the generator + diversity filter.
  std::vector<Candidate> pool;
  for (const Candidate& parent : state.live) {
    Eigen::VectorXd logits = next_token_logits(lm, parent.tokens, t, cfg);
    std::vector<int> ids;
    ids.reserve(vocab.size());
    for (int id = 0; id < vocab.size(); ++id) {
      if (std::isfinite(logits[id])) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      if (logits[a] != logits[b]) return logits[a] > logits[b];
      return a < b;
    });
    std::vector<int> kept = diversity_filter(ids, vocab, cfg.th_w, cfg.k_s);
    for (int id : kept) {
      Candidate child;
      child.tokens = parent.tokens;
      child.tokens.push_back(id);
      child.text = vocab.render(child.tokens);
      child.last_logit = logits[id];
      child.finished = (id == vocab.eos_id) || (t >= cfg.t_max);
      pool.push_back(std::move(child));
    }
  }

  std::vector<std::string> texts;
  texts.reserve(pool.size());
  for (const auto& c : pool) texts.push_back(c.text);
  std::vector<Embedding> locals = local_embedder.embed_batch(texts);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].local_emb = std::move(locals[i]);

  // (2) Project with the matrix from the previous iteration, when it exists.
  if (state.align.w) {
    for (auto& c : pool) c.projected_emb = project(state.align, c.local_emb);
  }

  // Resolve already-paid-for victim embeddings.
  const bool use_memo = victim.deterministic();
  if (use_memo) {
    for (auto& c : pool) {
      auto it = state.memo.find(c.text);
      if (it != state.memo.end()) c.victim_emb = it->second;
    }
  }

  // (3)-(4) Rank by the current (stale) score and pick the query group among
  // candidates whose victim embedding is still unknown.
  std::vector<double> key = selection_key(pool, state, target, cfg);

  std::vector<int> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!pool[i].victim_emb) eligible.push_back(static_cast<int>(i));
  }
  std::vector<int> ranked = order_desc(key, eligible);
  int budget = std::min<int>(query_count(t, cfg), static_cast<int>(ranked.size()));
  std::vector<int> query_group(ranked.begin(), ranked.begin() + budget);

  // (5) Query the victim. On failure nothing below runs, leaving the beam,
  // alignment state and ledger untouched.
  std::vector<Embedding> victim_embs;
  if (!query_group.empty()) {
    std::vector<std::string> query_texts;
    query_texts.reserve(query_group.size());
    for (int idx : query_group) query_texts.push_back(pool[idx].text);
    victim_embs = victim.query(query_texts);
  }

  // (6) Ingest the new pairs, refresh W and compute this iteration's
  // confidence against the matrix that produced the pre-query ranking.
  double conf_t = state.has_conf ? state.last_conf : 0.0;
  if (!query_group.empty()) {
    std::vector<Embedding> queried_locals;
    queried_locals.reserve(query_group.size());
    for (int idx : query_group) queried_locals.push_back(pool[idx].local_emb);
    std::optional<Eigen::MatrixXd> w_prev = state.align.w;
    ingest(state.align, queried_locals, victim_embs);
    solve(state.align);
    conf_t = confidence(state.align, queried_locals, victim_embs, w_prev, t);
    for (std::size_t i = 0; i < query_group.size(); ++i) {
      pool[query_group[i]].victim_emb = victim_embs[i];
      if (use_memo) state.memo.emplace(pool[query_group[i]].text, victim_embs[i]);
    }
  }

  // (7) Re-project everything that was not answered by the victim.
  if (state.align.w) {
    for (auto& c : pool) {
      if (!c.victim_emb) c.projected_emb = project(state.align, c.local_emb);
    }
  }

  // (8) Re-score the whole pool with the fresh confidence. Queried candidates
  // contribute their true victim cosine.
  Eigen::VectorXd logits_vec(pool.size());
  Eigen::VectorXd cos_vec(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    logits_vec[static_cast<int>(i)] = pool[i].last_logit;
    cos_vec[static_cast<int>(i)] = candidate_cosine(pool[i], state.align, target);
  }
  double conf_used = cfg.force_conf_zero ? 0.0 : conf_t;
  Eigen::VectorXd scores = score_candidates(logits_vec, cos_vec, conf_used);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].score = scores[static_cast<int>(i)];

  // (9) Finished candidates leave the beam; the best K_B others survive.
  std::vector<int> open;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].finished) {
      state.finished.push_back(pool[i]);
    } else {
      open.push_back(static_cast<int>(i));
    }
  }
  std::vector<double> score_key(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) score_key[i] = pool[i].score;
  std::vector<int> surviving = order_desc(score_key, open);
  if (static_cast<int>(surviving.size()) > cfg.k_b) surviving.resize(cfg.k_b);
  std::vector<Candidate> next_live;
  next_live.reserve(surviving.size());
  for (int idx : surviving) next_live.push_back(std::move(pool[idx]));
  state.live = std::move(next_live);

  state.align.conf_history.push_back(conf_t);
  state.last_conf = conf_t;
  state.has_conf = true;
  state.iteration = t;
}

RunReport run_attack(const Embedding& target, const NGramLM& lm, EmbedderPort& local_embedder,
                     VictimHandle& victim, const AttackConfig& cfg) {
  validate_config(cfg);
  if (target.size() != victim.dim()) {
    throw std::invalid_argument("target dimension does not match the victim embedder");
  }

  BeamState state;
  state.align = AlignState(local_embedder.dim(), victim.dim(), cfg.lambda);
  Candidate root;
  root.tokens = {lm.vocab().bos_id};
  root.text = "";
  state.live = {root};

  while (!state.live.empty() && state.iteration < cfg.t_max) {
    beam_step(state, target, lm, local_embedder, victim, cfg);
  }

  // Final selection: rank the finished pool by (projected or known) cosine,
  // then verify the shortlist against the victim and keep the closest.
  std::vector<Candidate>* pool = &state.finished;
  if (pool->empty()) pool = &state.live;
  std::vector<double> final_cos(pool->size());
  std::vector<int> all_idx(pool->size());
  std::iota(all_idx.begin(), all_idx.end(), 0);
  for (std::size_t i = 0; i < pool->size(); ++i) {
    final_cos[i] = candidate_cosine((*pool)[i], state.align, target);
  }
  std::vector<int> ranked = order_desc(final_cos, all_idx);

  std::string reconstruction;
  if (cfg.final_rerank > 0 && !ranked.empty()) {
    int shortlist = std::min<int>(cfg.final_rerank, static_cast<int>(ranked.size()));
    std::vector<std::string> texts;
    texts.reserve(shortlist);
    for (int i = 0; i < shortlist; ++i) texts.push_back((*pool)[ranked[i]].text);
    std::vector<Embedding> verified = victim.query(texts);
    int best = 0;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < shortlist; ++i) {
      double c = cosine(verified[i], target);
      if (c > best_cos) {
        best_cos = c;
        best = i;
      }
    }
    reconstruction = texts[static_cast<std::size_t>(best)];
  } else if (!ranked.empty()) {
    reconstruction = (*pool)[ranked.front()].text;
  }

  RunReport report;
  report.reconstruction = reconstruction;
  report.ledger = victim.ledger();
  report.conf_trace = state.align.conf_history;
  report.iterations_used = state.iteration;
  report.final_w = state.align.w;
  return report;
}

}  // namespace embinv
