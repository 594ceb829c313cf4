#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace embinv {

/// Dense real vector produced by an embedder. Dimension is values.size().
using Embedding = Eigen::VectorXd;

/// Rounding rule applied to the non-integer per-iteration query budget.
enum class Rounding { Nearest, Floor, Ceil };

Rounding rounding_from_string(const std::string& s);
std::string to_string(Rounding r);

/// All attack hyperparameters plus engineering knobs. Defaults are the
/// reference operating point.
struct AttackConfig {
  int k_s = 1000;                   // candidate tokens kept per expansion
  int k_a = 50;                     // base victim-query count per iteration
  int k_b = 10;                     // beam width
  double gamma = 0.8;               // query decay factor, in (0,1)
  double th_w = 0.9;                // diversity cosine threshold, in (0,1]
  int t_max = 32;                   // maximum generated tokens
  double lambda = 0.1;              // ridge regularizer
  double first_step_penalty = -5.0; // logit penalty for non-alphabetic tokens at t=1
  int final_rerank = 5;             // finished candidates re-verified with victim queries
  std::uint64_t seed = 0;
  Rounding rounding = Rounding::Nearest;
  bool force_conf_zero = false;     // ablation: scoring ignores the cosine term
};

/// Returns the message for the first violated invariant, or nullopt if the
/// config is valid.
std::optional<std::string> config_error(const AttackConfig& cfg);

/// Returns cfg unchanged when all invariants hold; throws std::invalid_argument
/// naming the offending field otherwise.
AttackConfig validate_config(const AttackConfig& cfg);

enum class QueryPhase { Offline, Online };

/// Sentences/tokens sent to the victim, split by phase. Counters only grow.
struct QueryLedger {
  std::uint64_t offline_sentences = 0;
  std::uint64_t online_sentences = 0;
  std::uint64_t offline_tokens = 0;
  std::uint64_t online_tokens = 0;

  void record(QueryPhase phase, std::uint64_t sentences, std::uint64_t tokens);
};

/// Whitespace-delimited token count used for ledger accounting.
std::uint64_t count_ws_tokens(const std::string& text);

/// A partial (or finished) reconstruction tracked by the beam.
struct Candidate {
  std::vector<int> tokens;              // token ids, starting with BOS
  std::string text;                     // detokenization of tokens
  double last_logit = 0.0;              // generator logit of the latest token
  Embedding local_emb;                  // local embedding of the full prefix text
  std::optional<Embedding> projected_emb; // absent until an alignment matrix exists
  std::optional<Embedding> victim_emb;  // true victim embedding when queried
  double score = 0.0;                   // hybrid score
  bool finished = false;                // EOS emitted or length limit reached
};

/// Per-target outcome: reconstruction, metric values, query costs and the
/// confidence trajectory.
struct RunReport {
  std::string target_id;
  std::string reconstruction;
  std::map<std::string, double> metrics;
  QueryLedger ledger;       // attack-phase queries
  QueryLedger eval_ledger;  // evaluation-phase queries (metric COS)
  std::vector<double> conf_trace;
  int iterations_used = 0;
  std::optional<Eigen::MatrixXd> final_w;  // last alignment matrix, for diagnostics
};

}  // namespace embinv
