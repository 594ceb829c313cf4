#pragma once

#include "embinv/types.hpp"

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace embinv {

/// Dimension of the per-token embeddings used by the diversity filter.
inline constexpr int kTokenEmbDim = 64;

inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";

/// Word-level vocabulary with special tokens and per-token metadata.
struct Vocabulary {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> ids;
  int bos_id = -1;
  int eos_id = -1;
  std::vector<bool> is_ascii;
  std::vector<bool> is_alphabetic;
  Eigen::MatrixXd token_emb;  // one unit-norm row per token, kTokenEmbDim columns

  /// Builds a vocabulary from unique word strings (specials added first).
  static Vocabulary build(const std::vector<std::string>& words);

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& token) const;

  /// Renders a token-id sequence as text, skipping BOS/EOS.
  std::string render(const std::vector<int>& token_ids) const;
};

/// Add-k smoothed n-gram model with backoff to shorter contexts.
class NGramLM {
 public:
  NGramLM() = default;
  NGramLM(int order, double add_k, Vocabulary vocab);

  int order() const { return order_; }
  double add_k() const { return add_k_; }
  const Vocabulary& vocab() const { return vocab_; }
  Vocabulary& vocab() { return vocab_; }

  void observe(const std::vector<int>& context, int token);

  /// Smoothed P(token | context); backs off to the longest seen suffix.
  Eigen::VectorXd next_probs(const std::vector<int>& context) const;

  void save(const std::string& path) const;
  static NGramLM load(const std::string& path);

  bool operator==(const NGramLM& other) const;

 private:
  struct ContextCounts {
    std::map<int, std::uint64_t> counts;
    std::uint64_t total = 0;
    bool operator==(const ContextCounts&) const = default;
  };

  int order_ = 0;
  double add_k_ = 0.0;
  Vocabulary vocab_;
  std::map<std::vector<int>, ContextCounts> table_;
};

/// Lowercased whitespace tokenization (punctuation kept attached).
std::vector<std::string> word_tokenize(const std::string& line);

/// Trains an add-k smoothed n-gram model over the corpus-derived vocabulary.
NGramLM train_ngram(const std::vector<std::string>& corpus, int n, double k);

/// Generator logits for the next token: log smoothed probabilities with
/// non-ASCII tokens and BOS masked out; at iteration 1, non-alphabetic tokens
/// additionally receive cfg.first_step_penalty.
Eigen::VectorXd next_token_logits(const NGramLM& lm, const std::vector<int>& context,
                                  int iteration, const AttackConfig& cfg);

/// Greedy diversity-aware selection: walks ids in the given (descending logit)
/// order, keeping a token iff its embedding stays below th_w cosine similarity
/// to everything already kept; stops after k_s tokens.
std::vector<int> diversity_filter(const std::vector<int>& candidate_ids,
                                  const Vocabulary& vocab, double th_w, int k_s);

}  // namespace embinv
