#include "embinv/lm.hpp"

#include "embinv/embed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace embinv {

namespace {

constexpr char kMagic[8] = {'E', 'I', 'N', 'V', '-', 'L', 'M', '\0'};
constexpr std::uint8_t kFormatVersion = 1;
constexpr std::uint64_t kTokenEmbSeed = 0x7e11;

bool ascii_only(const std::string& s) {
  for (unsigned char c : s) {
    if (c >= 128) return false;
  }
  return true;
}

bool alphabetic_only(const std::string& s) {
  if (s.empty()) return false;
  for (unsigned char c : s) {
    if (!std::isalpha(c)) return false;
  }
  return true;
}

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("truncated model file");
  return value;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  auto len = read_pod<std::uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw std::runtime_error("truncated model file");
  return s;
}

}  // namespace

std::vector<std::string> word_tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : line) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& words) {
  Vocabulary v;
  v.tokens.push_back(kBosToken);
  v.tokens.push_back(kEosToken);
  for (const auto& w : words) {
    if (w == kBosToken || w == kEosToken) {
      throw std::invalid_argument("corpus contains reserved token: " + w);
    }
    v.tokens.push_back(w);
  }
  v.bos_id = 0;
  v.eos_id = 1;
  for (int i = 0; i < static_cast<int>(v.tokens.size()); ++i) {
    auto [it, inserted] = v.ids.emplace(v.tokens[i], i);
    if (!inserted) throw std::invalid_argument("duplicate token in vocabulary: " + v.tokens[i]);
  }
  v.is_ascii.resize(v.tokens.size());
  v.is_alphabetic.resize(v.tokens.size());
  for (std::size_t i = 0; i < v.tokens.size(); ++i) {
    v.is_ascii[i] = ascii_only(v.tokens[i]);
    v.is_alphabetic[i] = alphabetic_only(v.tokens[i]);
  }
  HashEmbedder hasher(kTokenEmbDim, 3, kTokenEmbSeed);
  v.token_emb = Eigen::MatrixXd(v.tokens.size(), kTokenEmbDim);
  for (std::size_t i = 0; i < v.tokens.size(); ++i) {
    v.token_emb.row(static_cast<int>(i)) = hasher.embed_one(v.tokens[i]).transpose();
  }
  return v;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = ids.find(token);
  if (it == ids.end()) throw std::out_of_range("token not in vocabulary: " + token);
  return it->second;
}

std::string Vocabulary::render(const std::vector<int>& token_ids) const {
  std::string out;
  for (int id : token_ids) {
    if (id == bos_id || id == eos_id) continue;
    if (!out.empty()) out.push_back(' ');
    out += tokens.at(static_cast<std::size_t>(id));
  }
  return out;
}

NGramLM::NGramLM(int order, double add_k, Vocabulary vocab)
    : order_(order), add_k_(add_k), vocab_(std::move(vocab)) {
  if (order_ < 1) throw std::invalid_argument("n must be at least 1");
  if (!(add_k_ > 0.0)) throw std::invalid_argument("smoothing k must be positive");
}

void NGramLM::observe(const std::vector<int>& context, int token) {
  // Count every suffix order so unseen long contexts can back off.
  int max_len = std::min<int>(order_ - 1, static_cast<int>(context.size()));
  for (int len = 0; len <= max_len; ++len) {
    std::vector<int> key(context.end() - len, context.end());
    auto& slot = table_[key];
    ++slot.counts[token];
    ++slot.total;
  }
}

Eigen::VectorXd NGramLM::next_probs(const std::vector<int>& context) const {
  int vocab_size = vocab_.size();
  double denom_base = add_k_ * static_cast<double>(vocab_size);
  int max_len = std::min<int>(order_ - 1, static_cast<int>(context.size()));
  const ContextCounts* slot = nullptr;
  for (int len = max_len; len >= 0; --len) {
    std::vector<int> key(context.end() - len, context.end());
    auto it = table_.find(key);
    if (it != table_.end() && it->second.total > 0) {
      slot = &it->second;
      break;
    }
  }
  Eigen::VectorXd probs(vocab_size);
  if (!slot) {
    probs.setConstant(1.0 / static_cast<double>(vocab_size));
    return probs;
  }
  double denom = static_cast<double>(slot->total) + denom_base;
  for (int id = 0; id < vocab_size; ++id) {
    auto it = slot->counts.find(id);
    double count = (it == slot->counts.end()) ? 0.0 : static_cast<double>(it->second);
    probs[id] = (count + add_k_) / denom;
  }
  return probs;
}

bool NGramLM::operator==(const NGramLM& other) const {
  return order_ == other.order_ && add_k_ == other.add_k_ &&
         vocab_.tokens == other.vocab_.tokens && table_ == other.table_;
}

NGramLM train_ngram(const std::vector<std::string>& corpus, int n, double k) {
  if (corpus.empty()) throw std::invalid_argument("corpus must be non-empty");
  std::set<std::string> unique_words;
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(corpus.size());
  for (const auto& line : corpus) {
    auto words = word_tokenize(line);
    unique_words.insert(words.begin(), words.end());
    tokenized.push_back(std::move(words));
  }
  Vocabulary vocab =
      Vocabulary::build(std::vector<std::string>(unique_words.begin(), unique_words.end()));
  NGramLM lm(n, k, std::move(vocab));
  const Vocabulary& v = lm.vocab();
  for (const auto& words : tokenized) {
    std::vector<int> seq;
    for (int i = 0; i < n - 1; ++i) seq.push_back(v.bos_id);
    for (const auto& w : words) seq.push_back(v.id_of(w));
    seq.push_back(v.eos_id);
    int start = std::max(n - 1, 0);
    for (int pos = start; pos < static_cast<int>(seq.size()); ++pos) {
      std::vector<int> context(seq.begin(), seq.begin() + pos);
      lm.observe(context, seq[pos]);
    }
  }
  return lm;
}

Eigen::VectorXd next_token_logits(const NGramLM& lm, const std::vector<int>& context,
                                  int iteration, const AttackConfig& cfg) {
  const Vocabulary& v = lm.vocab();
  if (context.empty() || context.front() != v.bos_id) {
    throw std::invalid_argument("context must begin with BOS");
  }
  Eigen::VectorXd probs = lm.next_probs(context);
  Eigen::VectorXd logits(v.size());
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (int id = 0; id < v.size(); ++id) {
    if (id == v.bos_id || !v.is_ascii[static_cast<std::size_t>(id)]) {
      logits[id] = neg_inf;
      continue;
    }
    double logit = std::log(probs[id]);
    if (iteration == 1 && !v.is_alphabetic[static_cast<std::size_t>(id)]) {
      logit += cfg.first_step_penalty;
    }
    logits[id] = logit;
  }
  return logits;
}

std::vector<int> diversity_filter(const std::vector<int>& candidate_ids,
                                  const Vocabulary& vocab, double th_w, int k_s) {
  if (candidate_ids.empty()) throw std::invalid_argument("diversity filter needs candidates");
  const int cap = std::max(k_s, 1);
  const int max_keep = std::min<int>(cap, static_cast<int>(candidate_ids.size()));
  Eigen::MatrixXd kept_rows(max_keep, vocab.token_emb.cols());
  Eigen::VectorXd kept_norms(max_keep);
  std::vector<int> kept;
  kept.reserve(static_cast<std::size_t>(max_keep));
  for (int id : candidate_ids) {
    int n_kept = static_cast<int>(kept.size());
    if (n_kept >= cap) break;
    auto row = vocab.token_emb.row(id);
    double norm = row.norm();
    bool diverse = true;
    if (n_kept > 0 && norm > 1e-12) {
      Eigen::VectorXd dots = kept_rows.topRows(n_kept) * row.transpose();
      for (int j = 0; j < n_kept; ++j) {
        double denom = norm * kept_norms[j];
        if (denom > 1e-12 && dots[j] / denom >= th_w) {
          diverse = false;
          break;
        }
      }
    }
    if (diverse) {
      kept_rows.row(n_kept) = row;
      kept_norms[n_kept] = norm;
      kept.push_back(id);
    }
  }
  return kept;
}

void NGramLM::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open model file for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint8_t>(os, kFormatVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(order_));
  write_pod<double>(os, add_k_);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(vocab_.size()));
  for (const auto& tok : vocab_.tokens) write_string(os, tok);
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(table_.size()));
  for (const auto& [context, slot] : table_) {
    write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(context.size()));
    for (int id : context) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(id));
    write_pod<std::uint64_t>(os, slot.total);
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(slot.counts.size()));
    for (const auto& [id, count] : slot.counts) {
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(id));
      write_pod<std::uint64_t>(os, count);
    }
  }
  if (!os) throw std::runtime_error("failed writing model file: " + path);
}

NGramLM NGramLM::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open model file: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a model file (bad magic): " + path);
  }
  auto version = read_pod<std::uint8_t>(is);
  if (version != kFormatVersion) {
    throw std::runtime_error("unsupported model format version " + std::to_string(version));
  }
  int order = static_cast<int>(read_pod<std::uint32_t>(is));
  double add_k = read_pod<double>(is);
  auto vocab_size = read_pod<std::uint32_t>(is);
  if (vocab_size < 2) throw std::runtime_error("model vocabulary too small");
  std::vector<std::string> words;
  std::string bos = read_string(is);
  std::string eos = read_string(is);
  if (bos != kBosToken || eos != kEosToken) {
    throw std::runtime_error("model vocabulary is missing special tokens");
  }
  for (std::uint32_t i = 2; i < vocab_size; ++i) words.push_back(read_string(is));
  NGramLM lm(order, add_k, Vocabulary::build(words));
  auto n_contexts = read_pod<std::uint64_t>(is);
  for (std::uint64_t c = 0; c < n_contexts; ++c) {
    auto ctx_len = read_pod<std::uint16_t>(is);
    std::vector<int> context(ctx_len);
    for (auto& id : context) id = static_cast<int>(read_pod<std::uint32_t>(is));
    ContextCounts slot;
    slot.total = read_pod<std::uint64_t>(is);
    auto n_entries = read_pod<std::uint64_t>(is);
    for (std::uint64_t e = 0; e < n_entries; ++e) {
      auto id = read_pod<std::uint32_t>(is);
      slot.counts[static_cast<int>(id)] = read_pod<std::uint64_t>(is);
    }
    lm.table_[std::move(context)] = std::move(slot);
  }
  return lm;
}

}  // namespace embinv
