#pragma once

#include "embinv/embed.hpp"
#include "embinv/types.hpp"

#include <string>
#include <vector>

namespace embinv {

/// Metric tokenization: lowercase, token = maximal run of alphanumerics.
std::vector<std::string> metric_tokenize(const std::string& text);

/// Clipped n-gram precision (single reference) with brevity penalty
/// exp(1 - r/c) when the candidate is shorter, scaled to [0, 100].
/// No smoothing: zero overlap scores 0.
double bleu_n(const std::string& candidate, const std::string& reference, int n);

/// Unigram-overlap F1 scaled to [0, 100].
double rouge_1(const std::string& candidate, const std::string& reference);

/// LCS-based F1 (P = LCS/|cand|, R = LCS/|ref|) scaled to [0, 100].
double rouge_l(const std::string& candidate, const std::string& reference);

/// Cosine between the victim embedding of the reconstruction and the target.
/// The query is counted on the handle's ledger.
double cos_metric(const std::string& reconstruction, const Embedding& target,
                  VictimHandle& victim);

}  // namespace embinv
