#pragma once

#include "embinv/defense.hpp"
#include "embinv/types.hpp"

#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace embinv {

/// Anything that turns a batch of texts into fixed-dimension embeddings.
class EmbedderPort {
 public:
  virtual ~EmbedderPort() = default;
  virtual std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) = 0;
  virtual int dim() const = 0;

  Embedding embed(const std::string& text) {
    return embed_batch({text}).front();
  }
};

/// Deterministic character n-gram feature hasher with signed buckets.
/// Output is L2-normalized; empty text maps to the first basis vector.
class HashEmbedder : public EmbedderPort {
 public:
  HashEmbedder(int dim, int ngram = 3, std::uint64_t seed = 0);

  std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) override;
  int dim() const override { return dim_; }

  Embedding embed_one(const std::string& text) const;

 private:
  int dim_;
  int ngram_;
  std::uint64_t seed_;
};

/// Victim whose space is an exact (seeded, full column rank) linear image of a
/// base embedder. No renormalization by default, so the local-to-victim
/// relationship stays exactly linear.
class LinearVictim : public EmbedderPort {
 public:
  LinearVictim(std::shared_ptr<EmbedderPort> base, int victim_dim, std::uint64_t seed,
               bool normalize = false);

  std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) override;
  int dim() const override { return victim_dim_; }

  const Eigen::MatrixXd& map_matrix() const { return map_; }

 private:
  std::shared_ptr<EmbedderPort> base_;
  int victim_dim_;
  bool normalize_;
  Eigen::MatrixXd map_;  // base->victim, base_dim x victim_dim
};

/// HTTP client for a remote embedding endpoint.
///
/// POST {base_url}/embed with {"texts": [...]}; expects
/// {"embeddings": [[...], ...], "dim": N}. A bearer token is taken from the
/// EMBINV_API_KEY environment variable when set. Non-2xx responses and
/// transport failures are retried, then reported with attempt counts.
class RemoteEmbedder : public EmbedderPort {
 public:
  explicit RemoteEmbedder(std::string base_url, int timeout_ms = 5000, int retries = 2);

  std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) override;
  int dim() const override;

 private:
  std::string base_url_;
  int timeout_ms_;
  int retries_;
  mutable int dim_ = -1;  // cached after the first /health or /embed response
};

/// Wraps a victim embedder with query accounting and an optional defense.
/// Every successful call increments the ledger by the batch size in sentences
/// and the summed whitespace token counts; failed calls leave it untouched.
class VictimHandle {
 public:
  VictimHandle(std::shared_ptr<EmbedderPort> inner, QueryLedger& ledger,
               QueryPhase phase = QueryPhase::Online,
               std::optional<DefenseSpec> defense = std::nullopt);

  std::vector<Embedding> query(const std::vector<std::string>& texts);

  int dim() const { return inner_->dim(); }
  /// True when repeated queries for the same text return identical embeddings.
  bool deterministic() const;
  const QueryLedger& ledger() const { return ledger_; }
  EmbedderPort& inner() { return *inner_; }

 private:
  std::shared_ptr<EmbedderPort> inner_;
  QueryLedger& ledger_;
  QueryPhase phase_;
  std::optional<DefenseSpec> defense_;
  std::mt19937_64 rng_;
  std::mutex mutex_;  // serializes ledger updates and defense noise draws
};

/// hash_embed convenience mirroring HashEmbedder::embed_one.
Embedding hash_embed(const HashEmbedder& e, const std::string& text);

/// Cosine similarity; zero vectors yield 0.
double cosine(const Embedding& a, const Embedding& b);

}  // namespace embinv
