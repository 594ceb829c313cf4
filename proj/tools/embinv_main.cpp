// Command-line front end. Everything goes through the C API in embinv.h; the
// flags are folded into the same JSON specs the library accepts, with a
// --config file supplying defaults that explicit flags override.

#include <embinv/embinv.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

using nlohmann::json;

namespace {

int fail(const std::string& context) {
  std::cerr << context << ": " << embinv_last_error() << "\n";
  return 1;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw CLI::ValidationError("--config", "cannot open " + path);
  return json::parse(is);
}

void set_if(json& j, CLI::Option* opt, const char* key, const json& value) {
  if (opt->count() > 0) j[key] = value;
}

struct VictimFlags {
  std::string kind = "hash";
  int dim = 256;
  int ngram = 3;
  std::uint64_t seed = 23;
  int victim_dim = 192;
  bool normalize = false;
  std::string url;
  int timeout_ms = 5000;
  int retries = 2;

  CLI::Option* kind_opt = nullptr;
  CLI::Option* dim_opt = nullptr;
  CLI::Option* ngram_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* victim_dim_opt = nullptr;
  CLI::Option* normalize_opt = nullptr;
  CLI::Option* url_opt = nullptr;
  CLI::Option* timeout_opt = nullptr;
  CLI::Option* retries_opt = nullptr;

  void attach(CLI::App* app, const std::string& prefix) {
    kind_opt = app->add_option("--" + prefix, kind, "Embedder kind: hash, linear or remote")
                   ->check(CLI::IsMember({"hash", "linear", "remote"}));
    dim_opt = app->add_option("--" + prefix + "-dim", dim, "Base embedder dimension");
    ngram_opt = app->add_option("--" + prefix + "-ngram", ngram, "Character n-gram size");
    seed_opt = app->add_option("--" + prefix + "-seed", seed, "Embedder seed");
    victim_dim_opt = app->add_option("--" + prefix + "-out-dim", victim_dim,
                                     "Output dimension for kind=linear");
    normalize_opt = app->add_flag("--" + prefix + "-normalize", normalize,
                                  "L2-normalize embedder outputs");
    url_opt = app->add_option("--" + prefix + "-url", url, "Base URL for kind=remote");
    timeout_opt = app->add_option("--timeout-ms", timeout_ms, "Remote request timeout");
    retries_opt = app->add_option("--retries", retries, "Remote request retries");
  }

  void merge(json& j) const {
    set_if(j, kind_opt, "kind", kind);
    set_if(j, dim_opt, "dim", dim);
    set_if(j, ngram_opt, "ngram", ngram);
    set_if(j, seed_opt, "seed", seed);
    set_if(j, victim_dim_opt, "victim_dim", victim_dim);
    set_if(j, normalize_opt, "normalize", normalize);
    set_if(j, url_opt, "url", url);
    set_if(j, timeout_opt, "timeout_ms", timeout_ms);
    set_if(j, retries_opt, "retries", retries);
  }
};

struct DefenseFlags {
  std::string kind = "none";
  double eps_per_dim = 1.0;
  double noise_scale = 0.1;
  std::uint64_t seed = 0;

  CLI::Option* kind_opt = nullptr;
  CLI::Option* eps_opt = nullptr;
  CLI::Option* scale_opt = nullptr;
  CLI::Option* seed_opt = nullptr;

  void attach(CLI::App* app) {
    kind_opt = app->add_option("--defense", kind, "Defense: none, random, lapmech or purmech")
                   ->check(CLI::IsMember({"none", "random", "lapmech", "purmech"}));
    eps_opt = app->add_option("--eps-per-dim", eps_per_dim, "Privacy budget per dimension");
    scale_opt = app->add_option("--noise-scale", noise_scale, "Stddev for --defense random");
    seed_opt = app->add_option("--defense-seed", seed, "Defense noise seed");
  }

  void merge(json& j) const {
    set_if(j, kind_opt, "kind", kind);
    set_if(j, eps_opt, "eps_per_dim", eps_per_dim);
    set_if(j, scale_opt, "noise_scale", noise_scale);
    set_if(j, seed_opt, "seed", seed);
  }
};

void print_summary(const json& summary) {
  std::cout << "targets: " << summary.value("targets", 0)
            << "  failures: " << summary.value("failures", 0) << "\n";
  if (summary.contains("metric_means")) {
    for (const auto& [name, value] : summary["metric_means"].items()) {
      std::printf("  %-8s %.4f\n", name.c_str(), value.get<double>());
    }
  }
  if (summary.contains("mean_online_sentences")) {
    std::printf("  online sentences (mean): %.4f\n",
                summary["mean_online_sentences"].get<double>());
    std::printf("  online tokens (mean):    %.4f\n", summary["mean_online_tokens"].get<double>());
  }
  if (summary.contains("report_path")) {
    std::cout << "report:  " << summary["report_path"].get<std::string>() << "\n"
              << "summary: " << summary["summary_path"].get<std::string>() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box embedding inversion toolkit"};
  app.require_subcommand(1);

  // ---- attack ----
  auto* attack = app.add_subcommand("attack", "Run the inversion attack over a dataset");
  std::string config_path, dataset, corpus, report_path, summary_path, lm_model, rounding;
  int samples = 20, lm_order = 2, k_s = 1000, k_a = 50, k_b = 10, t_max = 32, final_rerank = 5;
  std::uint64_t seed = 0, attack_seed = 0;
  double lm_add_k = 0.1, gamma = 0.8, th_w = 0.9, lambda = 0.1, penalty = -5.0;
  bool force_conf_zero = false;
  int local_dim = 256, local_ngram = 3;
  std::uint64_t local_seed = 11;
  VictimFlags victim;
  DefenseFlags defense;

  std::vector<std::string> target_texts;
  bool dump_alignment = false;
  attack->add_option("--config", config_path, "JSON experiment spec; flags override");
  auto* dataset_opt = attack->add_option("--dataset", dataset, "Targets, one sentence per line");
  auto* targets_opt = attack->add_option("--target", target_texts,
                                         "Attack a single sentence (repeatable)");
  auto* corpus_opt = attack->add_option("--corpus", corpus, "Generator training text");
  auto* samples_opt = attack->add_option("--samples", samples, "Number of sampled targets");
  auto* seed_opt = attack->add_option("--seed", seed, "Sampling seed");
  auto* report_opt = attack->add_option("--report", report_path, "Per-target JSONL output");
  auto* summary_opt = attack->add_option("--summary", summary_path, "Summary CSV output");
  auto* lm_order_opt = attack->add_option("--lm-order", lm_order, "n-gram order");
  auto* lm_add_k_opt = attack->add_option("--lm-add-k", lm_add_k, "Smoothing constant");
  auto* lm_model_opt = attack->add_option("--lm-model", lm_model, "Pre-trained model file");
  auto* local_dim_opt = attack->add_option("--local-dim", local_dim, "Local embedder dimension");
  auto* local_ngram_opt = attack->add_option("--local-ngram", local_ngram, "Local char n-gram");
  auto* local_seed_opt = attack->add_option("--local-seed", local_seed, "Local embedder seed");
  victim.attach(attack, "victim");
  defense.attach(attack);
  auto* k_s_opt = attack->add_option("--k-s", k_s, "Candidate tokens per expansion");
  auto* k_a_opt = attack->add_option("--k-a", k_a, "Base victim queries per iteration");
  auto* k_b_opt = attack->add_option("--k-b", k_b, "Beam width");
  auto* gamma_opt = attack->add_option("--gamma", gamma, "Query decay factor");
  auto* th_w_opt = attack->add_option("--th-w", th_w, "Diversity cosine threshold");
  auto* t_max_opt = attack->add_option("--t-max", t_max, "Maximum generated tokens");
  auto* lambda_opt = attack->add_option("--lambda", lambda, "Ridge regularizer");
  auto* penalty_opt = attack->add_option("--penalty", penalty,
                                         "First-step non-alphabetic logit penalty");
  auto* rerank_opt = attack->add_option("--final-rerank", final_rerank,
                                        "Finished candidates re-verified at the end");
  auto* attack_seed_opt = attack->add_option("--attack-seed", attack_seed, "Attack RNG seed");
  auto* rounding_opt = attack->add_option("--rounding", rounding, "Query rounding rule")
                           ->check(CLI::IsMember({"nearest", "floor", "ceil"}));
  auto* ablation_opt = attack->add_flag("--force-conf-zero", force_conf_zero,
                                        "Ablation: ignore the cosine term in scoring");
  auto* dump_w_opt = attack->add_flag("--dump-alignment", dump_alignment,
                                      "Include the final alignment matrix in report rows");

  // ---- serve ----
  auto* serve = app.add_subcommand("serve", "Run the embedding service");
  std::string serve_config, serve_host = "127.0.0.1";
  int serve_port = 8080, max_batch = 512;
  bool serve_normalize = true;
  VictimFlags serve_embedder;
  DefenseFlags serve_defense;
  serve->add_option("--config", serve_config, "JSON service spec; flags override");
  auto* host_opt = serve->add_option("--host", serve_host, "Bind address");
  auto* port_opt = serve->add_option("--port", serve_port, "Port (0 = any free port)");
  serve_embedder.attach(serve, "embedder");
  serve_defense.attach(serve);
  auto* norm_opt = serve->add_flag("--normalize,!--no-normalize", serve_normalize,
                                   "L2-normalize served embeddings");
  auto* batch_opt = serve->add_option("--max-batch", max_batch, "Largest accepted batch");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Score a reconstructions JSONL file");
  std::string eval_input, eval_summary;
  VictimFlags eval_victim;
  eval->add_option("--input", eval_input, "JSONL with reference/reconstruction fields")
      ->required();
  eval->add_option("--summary", eval_summary, "Summary CSV output");
  eval_victim.attach(eval, "victim");

  // ---- train-lm ----
  auto* train = app.add_subcommand("train-lm", "Train and save the n-gram generator");
  std::string train_corpus, train_output;
  int train_order = 2;
  double train_add_k = 0.1;
  train->add_option("--corpus", train_corpus, "Training text, one sentence per line")
      ->required();
  train->add_option("--output", train_output, "Model file to write")->required();
  train->add_option("--order", train_order, "n-gram order");
  train->add_option("--add-k", train_add_k, "Smoothing constant");

  CLI11_PARSE(app, argc, argv);

  try {
    if (attack->parsed()) {
      json spec = load_config(config_path);
      set_if(spec, dataset_opt, "dataset", dataset);
      set_if(spec, targets_opt, "targets", target_texts);
      set_if(spec, corpus_opt, "corpus", corpus);
      set_if(spec, samples_opt, "sample_count", samples);
      set_if(spec, dump_w_opt, "dump_alignment", dump_alignment);
      set_if(spec, seed_opt, "seed", seed);
      set_if(spec, report_opt, "report_path", report_path);
      set_if(spec, summary_opt, "summary_path", summary_path);
      set_if(spec["lm"], lm_order_opt, "order", lm_order);
      set_if(spec["lm"], lm_add_k_opt, "add_k", lm_add_k);
      set_if(spec["lm"], lm_model_opt, "model_path", lm_model);
      set_if(spec["local_embedder"], local_dim_opt, "dim", local_dim);
      set_if(spec["local_embedder"], local_ngram_opt, "ngram", local_ngram);
      set_if(spec["local_embedder"], local_seed_opt, "seed", local_seed);
      if (!spec.contains("victim")) spec["victim"] = json::object();
      victim.merge(spec["victim"]);
      if (!spec.contains("defense")) spec["defense"] = json::object();
      defense.merge(spec["defense"]);
      json& atk = spec["attack"];
      set_if(atk, k_s_opt, "k_s", k_s);
      set_if(atk, k_a_opt, "k_a", k_a);
      set_if(atk, k_b_opt, "k_b", k_b);
      set_if(atk, gamma_opt, "gamma", gamma);
      set_if(atk, th_w_opt, "th_w", th_w);
      set_if(atk, t_max_opt, "t_max", t_max);
      set_if(atk, lambda_opt, "lambda", lambda);
      set_if(atk, penalty_opt, "first_step_penalty", penalty);
      set_if(atk, rerank_opt, "final_rerank", final_rerank);
      set_if(atk, attack_seed_opt, "seed", attack_seed);
      set_if(atk, rounding_opt, "rounding", rounding);
      set_if(atk, ablation_opt, "force_conf_zero", force_conf_zero);

      char* summary_json = nullptr;
      if (embinv_run_experiment_json(spec.dump().c_str(), &summary_json) != EMBINV_OK) {
        return fail("attack failed");
      }
      print_summary(json::parse(summary_json));
      embinv_string_free(summary_json);
      return 0;
    }

    if (serve->parsed()) {
      json spec = load_config(serve_config);
      set_if(spec, host_opt, "host", serve_host);
      set_if(spec, port_opt, "port", serve_port);
      if (!spec.contains("embedder")) spec["embedder"] = json::object();
      serve_embedder.merge(spec["embedder"]);
      if (!spec.contains("defense")) spec["defense"] = json::object();
      serve_defense.merge(spec["defense"]);
      set_if(spec, norm_opt, "normalize", serve_normalize);
      set_if(spec, batch_opt, "max_batch", max_batch);
      std::cout << "serving /embed on " << spec.value("host", serve_host) << ":"
                << spec.value("port", serve_port) << "\n";
      if (embinv_serve_json(spec.dump().c_str()) != EMBINV_OK) return fail("serve failed");
      return 0;
    }

    if (eval->parsed()) {
      json victim_spec = json::object();
      eval_victim.merge(victim_spec);
      bool has_victim = !victim_spec.empty();
      std::string victim_dump = victim_spec.dump();
      char* summary_json = nullptr;
      if (embinv_eval_file(eval_input.c_str(), has_victim ? victim_dump.c_str() : nullptr,
                           eval_summary.empty() ? nullptr : eval_summary.c_str(),
                           &summary_json) != EMBINV_OK) {
        return fail("eval failed");
      }
      print_summary(json::parse(summary_json));
      embinv_string_free(summary_json);
      return 0;
    }

    if (train->parsed()) {
      embinv_lm* lm = nullptr;
      if (embinv_lm_train_file(train_corpus.c_str(), train_order, train_add_k, &lm) !=
          EMBINV_OK) {
        return fail("train-lm failed");
      }
      if (embinv_lm_save(lm, train_output.c_str()) != EMBINV_OK) {
        embinv_lm_free(lm);
        return fail("train-lm save failed");
      }
      std::cout << "model written to " << train_output << " (order " << embinv_lm_order(lm)
                << ", vocab " << embinv_lm_vocab_size(lm) << ")\n";
      embinv_lm_free(lm);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
