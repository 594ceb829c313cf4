#include "embinv/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace embinv {

namespace {

std::vector<std::string> ngrams_of(const std::vector<std::string>& tokens, int n) {
  std::vector<std::string> grams;
  if (static_cast<int>(tokens.size()) < n) return grams;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string g = tokens[i];
    for (int j = 1; j < n; ++j) {
      g.push_back(' ');
      g += tokens[i + j];
    }
    grams.push_back(std::move(g));
  }
  return grams;
}

std::map<std::string, int> counts_of(const std::vector<std::string>& items) {
  std::map<std::string, int> counts;
  for (const auto& it : items) ++counts[it];
  return counts;
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t rows = a.size();
  std::size_t cols = b.size();
  std::vector<int> prev(cols + 1, 0), cur(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    for (std::size_t j = 1; j <= cols; ++j) {
      if (a[i - 1] == b[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  return prev[cols];
}

double f1(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

std::vector<std::string> metric_tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

double bleu_n(const std::string& candidate, const std::string& reference, int n) {
  if (n < 1) throw std::invalid_argument("bleu order must be at least 1");
  auto cand = metric_tokenize(candidate);
  auto ref = metric_tokenize(reference);
  auto cand_grams = ngrams_of(cand, n);
  if (cand_grams.empty()) return 0.0;
  auto ref_counts = counts_of(ngrams_of(ref, n));
  auto cand_counts = counts_of(cand_grams);
  int matched = 0;
  for (const auto& [gram, count] : cand_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) matched += std::min(count, it->second);
  }
  double precision = static_cast<double>(matched) / static_cast<double>(cand_grams.size());
  double bp = 1.0;
  if (cand.size() < ref.size()) {
    bp = std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()));
  }
  return 100.0 * precision * bp;
}

double rouge_1(const std::string& candidate, const std::string& reference) {
  auto cand = metric_tokenize(candidate);
  auto ref = metric_tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  auto ref_counts = counts_of(ref);
  int matched = 0;
  for (const auto& [tok, count] : counts_of(cand)) {
    auto it = ref_counts.find(tok);
    if (it != ref_counts.end()) matched += std::min(count, it->second);
  }
  double precision = static_cast<double>(matched) / static_cast<double>(cand.size());
  double recall = static_cast<double>(matched) / static_cast<double>(ref.size());
  return 100.0 * f1(precision, recall);
}

double rouge_l(const std::string& candidate, const std::string& reference) {
  auto cand = metric_tokenize(candidate);
  auto ref = metric_tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  int lcs = lcs_length(cand, ref);
  double precision = static_cast<double>(lcs) / static_cast<double>(cand.size());
  double recall = static_cast<double>(lcs) / static_cast<double>(ref.size());
  return 100.0 * f1(precision, recall);
}

double cos_metric(const std::string& reconstruction, const Embedding& target,
                  VictimHandle& victim) {
  Embedding recon_emb = victim.query({reconstruction}).front();
  return cosine(recon_emb, target);
}

}  // namespace embinv
