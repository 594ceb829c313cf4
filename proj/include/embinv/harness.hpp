#pragma once

#include "embinv/defense.hpp"
#include "embinv/embed.hpp"
#include "embinv/lm.hpp"
#include "embinv/search.hpp"
#include "embinv/types.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace embinv {

/// Parameters of the attacker-side embedder.
struct LocalEmbedderSpec {
  int dim = 256;
  int ngram = 3;
  std::uint64_t seed = 11;
};

/// Which victim to attack. "hash" and "linear" are the builtin deterministic
/// backends; "remote" talks to any service speaking the /embed protocol.
struct VictimSpec {
  std::string kind = "hash";
  int dim = 256;             // base embedder dimension
  int ngram = 3;
  std::uint64_t seed = 23;
  int victim_dim = 192;      // output dimension for kind=linear
  bool normalize = false;
  std::string url;           // kind=remote
  int timeout_ms = 5000;
  int retries = 2;
};

struct ExperimentSpec {
  std::string dataset_path;
  std::vector<std::string> target_texts;  // inline targets, take priority over the dataset
  std::string corpus_path;       // generator training text; defaults to the dataset
  int sample_count = 20;
  std::uint64_t seed = 0;
  std::string report_path = "report.jsonl";
  std::string summary_path = "summary.csv";
  int lm_order = 2;
  double lm_add_k = 0.1;
  std::string lm_model_path;     // load a pre-trained model instead of training
  bool dump_alignment = false;   // include the final W matrix in report rows
  LocalEmbedderSpec local;
  VictimSpec victim;
  DefenseSpec defense;
  AttackConfig attack;
};

struct ExperimentSummary {
  int targets = 0;
  int failures = 0;
  std::map<std::string, double> metric_means;
  double mean_online_sentences = 0.0;
  double mean_online_tokens = 0.0;
};

struct ExperimentResult {
  std::vector<RunReport> reports;
  std::vector<std::string> references;  // aligned with reports
  ExperimentSummary summary;
};

std::shared_ptr<EmbedderPort> make_embedder(const VictimSpec& spec);

/// Reads a UTF-8 text file, one sentence per line; blank lines are dropped.
std::vector<std::string> load_lines(const std::string& path);

/// First n lines after a seeded Fisher-Yates shuffle.
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed);

/// Runs the full protocol: sample targets, attack each, score with all five
/// metrics, and write report.jsonl plus summary.csv.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Scores an existing reconstructions file (JSONL with "reference" and
/// "reconstruction" fields). COS is included when a victim is supplied.
ExperimentSummary evaluate_file(const std::string& input_jsonl,
                                const std::optional<VictimSpec>& victim,
                                const std::string& summary_path);

/// Formats the summary row with the fixed byte-exact header.
std::string summary_csv(const std::string& victim_kind, const DefenseSpec& defense,
                        const ExperimentSummary& summary, bool has_cos = true);

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);
VictimSpec victim_spec_from_json(const nlohmann::json& j);
DefenseSpec defense_spec_from_json(const nlohmann::json& j);
AttackConfig attack_config_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const RunReport& report, const std::string& reference,
                              bool dump_alignment = false);

/// Standalone embedding service exposing POST /embed and GET /health.
struct ServeSpec {
  std::string host = "127.0.0.1";
  int port = 8080;                // 0 binds any free port
  VictimSpec embedder;
  DefenseSpec defense;
  bool normalize = true;
  int max_batch = 512;
};

ServeSpec serve_spec_from_json(const nlohmann::json& j);

class EmbedService {
 public:
  explicit EmbedService(ServeSpec spec);
  ~EmbedService();

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();

  /// Binds and serves on the calling thread until stopped.
  void run_blocking();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace embinv
