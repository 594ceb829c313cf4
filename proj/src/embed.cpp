#include "embinv/embed.hpp"

#include <algorithm>
#include <cctype>

namespace embinv {

namespace {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t hash_gram(const char* data, std::size_t len, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull ^ splitmix64(seed);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return splitmix64(h);
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

double cosine(const Embedding& a, const Embedding& b) {
  double na = a.norm();
  double nb = b.norm();
  if (na <= 1e-12 || nb <= 1e-12) return 0.0;
  return a.dot(b) / (na * nb);
}

HashEmbedder::HashEmbedder(int dim, int ngram, std::uint64_t seed)
    : dim_(dim), ngram_(ngram), seed_(seed) {
  if (dim < 1) throw std::invalid_argument("embedder dim must be at least 1");
  if (ngram < 1) throw std::invalid_argument("ngram must be at least 1");
}

Embedding HashEmbedder::embed_one(const std::string& text) const {
  Embedding out = Embedding::Zero(dim_);
  std::string s = lowercase(text);
  if (s.empty()) {
    out[0] = 1.0;
    return out;
  }
  auto add = [&](const char* data, std::size_t len) {
    std::uint64_t h = hash_gram(data, len, seed_);
    int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim_));
    double sign = ((h >> 63) & 1u) ? -1.0 : 1.0;
    out[bucket] += sign;
  };
  std::size_t n = static_cast<std::size_t>(ngram_);
  if (s.size() < n) {
    add(s.data(), s.size());
  } else {
    for (std::size_t i = 0; i + n <= s.size(); ++i) add(s.data() + i, n);
  }
  double norm = out.norm();
  if (norm <= 1e-12) {
    out.setZero();
    out[0] = 1.0;
    return out;
  }
  return out / norm;
}

std::vector<Embedding> HashEmbedder::embed_batch(const std::vector<std::string>& texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

Embedding hash_embed(const HashEmbedder& e, const std::string& text) {
  return e.embed_one(text);
}

LinearVictim::LinearVictim(std::shared_ptr<EmbedderPort> base, int victim_dim,
                           std::uint64_t seed, bool normalize)
    : base_(std::move(base)), victim_dim_(victim_dim), normalize_(normalize) {
  if (!base_) throw std::invalid_argument("linear victim requires a base embedder");
  int base_dim = base_->dim();
  if (victim_dim_ < 1 || victim_dim_ > base_dim) {
    throw std::invalid_argument("victim_dim must lie in [1, base dim]");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  map_ = Eigen::MatrixXd(base_dim, victim_dim_);
  double scale = 1.0 / std::sqrt(static_cast<double>(base_dim));
  for (int i = 0; i < base_dim; ++i) {
    for (int j = 0; j < victim_dim_; ++j) map_(i, j) = gauss(rng) * scale;
  }
}

std::vector<Embedding> LinearVictim::embed_batch(const std::vector<std::string>& texts) {
  std::vector<Embedding> base_embs = base_->embed_batch(texts);
  std::vector<Embedding> out;
  out.reserve(base_embs.size());
  for (const auto& e : base_embs) {
    Embedding v = map_.transpose() * e;
    if (normalize_) {
      double n = v.norm();
      if (n > 1e-12) v /= n;
    }
    out.push_back(std::move(v));
  }
  return out;
}

VictimHandle::VictimHandle(std::shared_ptr<EmbedderPort> inner, QueryLedger& ledger,
                           QueryPhase phase, std::optional<DefenseSpec> defense)
    : inner_(std::move(inner)), ledger_(ledger), phase_(phase), defense_(std::move(defense)) {
  if (!inner_) throw std::invalid_argument("victim handle requires an embedder");
  if (defense_) {
    if (auto err = defense_error(*defense_)) throw std::invalid_argument(*err);
    rng_.seed(defense_->seed);
  }
}

bool VictimHandle::deterministic() const {
  return !defense_ || defense_->kind == DefenseKind::None;
}

std::vector<Embedding> VictimHandle::query(const std::vector<std::string>& texts) {
  if (texts.empty()) throw std::invalid_argument("victim query requires at least one text");
  std::vector<Embedding> embs = inner_->embed_batch(texts);

  std::lock_guard<std::mutex> lock(mutex_);
  if (defense_ && defense_->kind != DefenseKind::None) {
    for (auto& e : embs) e = apply_defense(*defense_, e, rng_);
  }
  std::uint64_t tokens = 0;
  for (const auto& t : texts) tokens += count_ws_tokens(t);
  ledger_.record(phase_, texts.size(), tokens);
  return embs;
}

}  // namespace embinv
