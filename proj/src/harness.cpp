#include "embinv/harness.hpp"

#include "embinv/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace embinv {

namespace {

using nlohmann::json;

constexpr const char* kSummaryHeader =
    "victim,defense,eps_per_dim,BLEU-1,BLEU-2,ROUGE-L,ROUGE-1,COS,"
    "online_sentences,online_tokens\n";

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::optional<DefenseSpec> derived_defense(const DefenseSpec& base, std::uint64_t target_idx,
                                           std::uint64_t stream) {
  if (base.kind == DefenseKind::None) return std::nullopt;
  DefenseSpec spec = base;
  spec.seed = mix64(base.seed ^ mix64(target_idx * 2 + stream));
  return spec;
}

std::string summary_row(const std::string& victim_cell, const std::string& defense_cell,
                        const std::string& eps_cell, const ExperimentSummary& s, bool has_cos) {
  auto metric = [&](const char* name) -> std::string {
    auto it = s.metric_means.find(name);
    return it == s.metric_means.end() ? std::string("-") : fmt4(it->second);
  };
  std::ostringstream row;
  row << victim_cell << ',' << defense_cell << ',' << eps_cell << ',' << metric("BLEU-1") << ','
      << metric("BLEU-2") << ',' << metric("ROUGE-L") << ',' << metric("ROUGE-1") << ','
      << (has_cos ? metric("COS") : std::string("-")) << ',' << fmt4(s.mean_online_sentences)
      << ',' << fmt4(s.mean_online_tokens) << '\n';
  return row.str();
}

void write_file(const std::string& path, const std::string& content) {
  if (path.empty()) return;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open output file: " + path);
  os << content;
}

}  // namespace

std::shared_ptr<EmbedderPort> make_embedder(const VictimSpec& spec) {
  if (spec.kind == "hash") {
    return std::make_shared<HashEmbedder>(spec.dim, spec.ngram, spec.seed);
  }
  if (spec.kind == "linear") {
    auto base = std::make_shared<HashEmbedder>(spec.dim, spec.ngram, spec.seed);
    return std::make_shared<LinearVictim>(base, spec.victim_dim, mix64(spec.seed) ^ 0x11ceull,
                                          spec.normalize);
  }
  if (spec.kind == "remote") {
    return std::make_shared<RemoteEmbedder>(spec.url, spec.timeout_ms, spec.retries);
  }
  throw std::invalid_argument("unknown victim kind: " + spec.kind);
}

std::vector<std::string> load_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = total; i > 1; --i) {
    std::size_t j = rng() % i;
    std::swap(idx[i - 1], idx[j]);
  }
  idx.resize(std::min(n, total));
  return idx;
}

nlohmann::json report_to_json(const RunReport& report, const std::string& reference,
                              bool dump_alignment) {
  json ledger = {{"offline_sentences", report.ledger.offline_sentences},
                 {"online_sentences", report.ledger.online_sentences},
                 {"offline_tokens", report.ledger.offline_tokens},
                 {"online_tokens", report.ledger.online_tokens}};
  json eval_ledger = {{"offline_sentences", report.eval_ledger.offline_sentences},
                      {"online_sentences", report.eval_ledger.online_sentences},
                      {"offline_tokens", report.eval_ledger.offline_tokens},
                      {"online_tokens", report.eval_ledger.online_tokens}};
  json row = {{"target_id", report.target_id},
              {"reference", reference},
              {"reconstruction", report.reconstruction},
              {"metrics", report.metrics},
              {"ledger", ledger},
              {"eval_ledger", eval_ledger},
              {"conf_trace", report.conf_trace},
              {"iterations_used", report.iterations_used}};
  if (dump_alignment && report.final_w) {
    json rows = json::array();
    for (int i = 0; i < report.final_w->rows(); ++i) {
      json r = json::array();
      for (int j = 0; j < report.final_w->cols(); ++j) r.push_back((*report.final_w)(i, j));
      rows.push_back(std::move(r));
    }
    row["alignment_w"] = std::move(rows);
  }
  return row;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  validate_config(spec.attack);
  if (auto err = defense_error(spec.defense)) throw std::invalid_argument(*err);

  std::vector<std::string> dataset =
      spec.target_texts.empty() ? load_lines(spec.dataset_path) : spec.target_texts;
  if (static_cast<std::size_t>(spec.sample_count) > dataset.size()) {
    throw std::invalid_argument("sample_count exceeds dataset size");
  }

  NGramLM lm;
  if (!spec.lm_model_path.empty()) {
    lm = NGramLM::load(spec.lm_model_path);
  } else {
    const std::string& corpus_path =
        spec.corpus_path.empty() ? spec.dataset_path : spec.corpus_path;
    if (corpus_path.empty()) {
      throw std::invalid_argument("inline targets need a corpus or a pre-trained model");
    }
    lm = train_ngram(load_lines(corpus_path), spec.lm_order, spec.lm_add_k);
  }

  auto local = std::make_shared<HashEmbedder>(spec.local.dim, spec.local.ngram, spec.local.seed);
  auto victim_inner = make_embedder(spec.victim);
  auto indices = sample_indices(dataset.size(), static_cast<std::size_t>(spec.sample_count),
                                spec.seed);

  ExperimentResult result;
  std::ostringstream report_lines;
  std::map<std::string, double> metric_sums;
  double sent_sum = 0.0;
  double tok_sum = 0.0;

  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::string& reference = dataset[indices[k]];
    const std::string target_id = std::to_string(indices[k]);
    try {
      QueryLedger setup_ledger, attack_ledger, eval_ledger;
      VictimHandle setup(victim_inner, setup_ledger, QueryPhase::Online,
                         derived_defense(spec.defense, k, 0));
      VictimHandle attack(victim_inner, attack_ledger, QueryPhase::Online,
                          derived_defense(spec.defense, k, 1));
      VictimHandle eval(victim_inner, eval_ledger, QueryPhase::Online, std::nullopt);

      // Target provisioning goes through the defended victim but its own
      // ledger, so it never counts against the attack budget.
      Embedding target = setup.query({reference}).front();
      RunReport report = run_attack(target, lm, *local, attack, spec.attack);
      report.target_id = target_id;

      // Metrics compare against the clean victim space: the attack only ever
      // saw defended embeddings, the evaluation measures true recovery.
      Embedding target_clean = eval.query({reference}).front();
      report.metrics["BLEU-1"] = bleu_n(report.reconstruction, reference, 1);
      report.metrics["BLEU-2"] = bleu_n(report.reconstruction, reference, 2);
      report.metrics["ROUGE-1"] = rouge_1(report.reconstruction, reference);
      report.metrics["ROUGE-L"] = rouge_l(report.reconstruction, reference);
      report.metrics["COS"] = cos_metric(report.reconstruction, target_clean, eval);
      report.eval_ledger = eval_ledger;

      report_lines << report_to_json(report, reference, spec.dump_alignment).dump() << '\n';
      for (const auto& [name, value] : report.metrics) metric_sums[name] += value;
      sent_sum += static_cast<double>(report.ledger.online_sentences);
      tok_sum += static_cast<double>(report.ledger.online_tokens);
      result.reports.push_back(std::move(report));
      result.references.push_back(reference);
      ++result.summary.targets;
    } catch (const std::exception& e) {
      ++result.summary.failures;
      report_lines << json{{"target_id", target_id}, {"reference", reference},
                           {"error", e.what()}}
                          .dump()
                   << '\n';
    }
  }

  if (result.summary.targets > 0) {
    double n = static_cast<double>(result.summary.targets);
    for (const auto& [name, sum] : metric_sums) result.summary.metric_means[name] = sum / n;
    result.summary.mean_online_sentences = sent_sum / n;
    result.summary.mean_online_tokens = tok_sum / n;
  }

  write_file(spec.report_path, report_lines.str());
  bool has_eps =
      spec.defense.kind == DefenseKind::LapMech || spec.defense.kind == DefenseKind::PurMech;
  std::string csv = kSummaryHeader;
  if (result.summary.targets > 0) {
    csv += summary_row(spec.victim.kind, to_string(spec.defense.kind),
                       has_eps ? fmt4(spec.defense.eps_per_dim) : "-", result.summary, true);
  }
  write_file(spec.summary_path, csv);
  return result;
}

ExperimentSummary evaluate_file(const std::string& input_jsonl,
                                const std::optional<VictimSpec>& victim,
                                const std::string& summary_path) {
  std::ifstream is(input_jsonl);
  if (!is) throw std::runtime_error("cannot open reconstructions file: " + input_jsonl);

  std::shared_ptr<EmbedderPort> embedder;
  if (victim) embedder = make_embedder(*victim);

  ExperimentSummary summary;
  std::map<std::string, double> sums;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception&) {
      ++summary.failures;
      continue;
    }
    if (!row.contains("reference") || !row.contains("reconstruction")) {
      ++summary.failures;
      continue;
    }
    std::string reference = row["reference"].get<std::string>();
    std::string reconstruction = row["reconstruction"].get<std::string>();
    sums["BLEU-1"] += bleu_n(reconstruction, reference, 1);
    sums["BLEU-2"] += bleu_n(reconstruction, reference, 2);
    sums["ROUGE-1"] += rouge_1(reconstruction, reference);
    sums["ROUGE-L"] += rouge_l(reconstruction, reference);
    if (embedder) {
      QueryLedger ledger;
      VictimHandle handle(embedder, ledger, QueryPhase::Online, std::nullopt);
      Embedding target = handle.query({reference}).front();
      sums["COS"] += cos_metric(reconstruction, target, handle);
    }
    ++summary.targets;
  }
  if (summary.targets > 0) {
    double n = static_cast<double>(summary.targets);
    for (const auto& [name, sum] : sums) summary.metric_means[name] = sum / n;
  }

  std::string csv = kSummaryHeader;
  if (summary.targets > 0) {
    csv += summary_row(victim ? victim->kind : "-", "-", "-", summary,
                       victim.has_value());
  }
  write_file(summary_path, csv);
  return summary;
}

std::string summary_csv(const std::string& victim_kind, const DefenseSpec& defense,
                        const ExperimentSummary& summary, bool has_cos) {
  bool has_eps = defense.kind == DefenseKind::LapMech || defense.kind == DefenseKind::PurMech;
  std::string csv = kSummaryHeader;
  if (summary.targets > 0) {
    csv += summary_row(victim_kind, to_string(defense.kind),
                       has_eps ? fmt4(defense.eps_per_dim) : "-", summary, has_cos);
  }
  return csv;
}

static LocalEmbedderSpec local_spec_from_json(const json& j) {
  LocalEmbedderSpec spec;
  spec.dim = j.value("dim", spec.dim);
  spec.ngram = j.value("ngram", spec.ngram);
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

VictimSpec victim_spec_from_json(const json& j) {
  VictimSpec spec;
  spec.kind = j.value("kind", spec.kind);
  spec.dim = j.value("dim", spec.dim);
  spec.ngram = j.value("ngram", spec.ngram);
  spec.seed = j.value("seed", spec.seed);
  spec.victim_dim = j.value("victim_dim", spec.victim_dim);
  spec.normalize = j.value("normalize", spec.normalize);
  spec.url = j.value("url", spec.url);
  spec.timeout_ms = j.value("timeout_ms", spec.timeout_ms);
  spec.retries = j.value("retries", spec.retries);
  return spec;
}

DefenseSpec defense_spec_from_json(const json& j) {
  DefenseSpec spec;
  spec.kind = defense_kind_from_string(j.value("kind", std::string("none")));
  spec.eps_per_dim = j.value("eps_per_dim", spec.eps_per_dim);
  spec.noise_scale = j.value("noise_scale", spec.noise_scale);
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

AttackConfig attack_config_from_json(const json& j) {
  AttackConfig cfg;
  cfg.k_s = j.value("k_s", cfg.k_s);
  cfg.k_a = j.value("k_a", cfg.k_a);
  cfg.k_b = j.value("k_b", cfg.k_b);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.th_w = j.value("th_w", cfg.th_w);
  cfg.t_max = j.value("t_max", cfg.t_max);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.first_step_penalty = j.value("first_step_penalty", cfg.first_step_penalty);
  cfg.final_rerank = j.value("final_rerank", cfg.final_rerank);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.rounding = rounding_from_string(j.value("rounding", std::string("nearest")));
  cfg.force_conf_zero = j.value("force_conf_zero", cfg.force_conf_zero);
  return cfg;
}

static bool has_object(const json& j, const char* key) {
  return j.contains(key) && j[key].is_object();
}

ExperimentSpec experiment_spec_from_json(const json& j) {
  ExperimentSpec spec;
  spec.dataset_path = j.value("dataset", spec.dataset_path);
  if (j.contains("targets") && j["targets"].is_array()) {
    for (const auto& t : j["targets"]) spec.target_texts.push_back(t.get<std::string>());
    if (!j.contains("sample_count")) {
      spec.sample_count = static_cast<int>(spec.target_texts.size());
    }
  }
  spec.corpus_path = j.value("corpus", spec.corpus_path);
  spec.sample_count = j.value("sample_count", spec.sample_count);
  spec.seed = j.value("seed", spec.seed);
  spec.report_path = j.value("report_path", spec.report_path);
  spec.summary_path = j.value("summary_path", spec.summary_path);
  spec.dump_alignment = j.value("dump_alignment", spec.dump_alignment);
  if (has_object(j, "lm")) {
    const auto& lm = j["lm"];
    spec.lm_order = lm.value("order", spec.lm_order);
    spec.lm_add_k = lm.value("add_k", spec.lm_add_k);
    spec.lm_model_path = lm.value("model_path", spec.lm_model_path);
  }
  if (has_object(j, "local_embedder")) spec.local = local_spec_from_json(j["local_embedder"]);
  if (has_object(j, "victim")) spec.victim = victim_spec_from_json(j["victim"]);
  if (has_object(j, "defense")) spec.defense = defense_spec_from_json(j["defense"]);
  if (has_object(j, "attack")) spec.attack = attack_config_from_json(j["attack"]);
  return spec;
}

ServeSpec serve_spec_from_json(const json& j) {
  ServeSpec spec;
  spec.host = j.value("host", spec.host);
  spec.port = j.value("port", spec.port);
  if (has_object(j, "embedder")) spec.embedder = victim_spec_from_json(j["embedder"]);
  if (has_object(j, "defense")) spec.defense = defense_spec_from_json(j["defense"]);
  spec.normalize = j.value("normalize", spec.normalize);
  spec.max_batch = j.value("max_batch", spec.max_batch);
  return spec;
}

}  // namespace embinv
