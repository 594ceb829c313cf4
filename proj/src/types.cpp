#include "embinv/types.hpp"

#include <cctype>

namespace embinv {

Rounding rounding_from_string(const std::string& s) {
  if (s == "nearest") return Rounding::Nearest;
  if (s == "floor") return Rounding::Floor;
  if (s == "ceil") return Rounding::Ceil;
  throw std::invalid_argument("unknown rounding rule: " + s);
}

std::string to_string(Rounding r) {
  switch (r) {
    case Rounding::Nearest: return "nearest";
    case Rounding::Floor: return "floor";
    case Rounding::Ceil: return "ceil";
  }
  return "nearest";
}

std::optional<std::string> config_error(const AttackConfig& cfg) {
  if (cfg.k_a < 1) return "k_a must be at least 1";
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) return "gamma must lie in (0,1)";
  if (!(cfg.th_w > 0.0 && cfg.th_w <= 1.0)) return "th_w must lie in (0,1]";
  if (cfg.k_b < 1) return "k_b must be at least 1";
  if (cfg.k_b > cfg.k_s) return "k_b exceeds k_s";
  if (cfg.t_max < 1) return "t_max must be at least 1";
  if (!(cfg.lambda > 0.0)) return "lambda must be positive";
  if (cfg.final_rerank < 0) return "final_rerank must be non-negative";
  return std::nullopt;
}

AttackConfig validate_config(const AttackConfig& cfg) {
  if (auto err = config_error(cfg)) {
    throw std::invalid_argument(*err);
  }
  return cfg;
}

void QueryLedger::record(QueryPhase phase, std::uint64_t sentences, std::uint64_t tokens) {
  if (phase == QueryPhase::Offline) {
    offline_sentences += sentences;
    offline_tokens += tokens;
  } else {
    online_sentences += sentences;
    online_tokens += tokens;
  }
}

std::uint64_t count_ws_tokens(const std::string& text) {
  std::uint64_t count = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

}  // namespace embinv
