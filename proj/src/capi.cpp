#include "embinv/embinv.h"

#include "embinv/harness.hpp"
#include "embinv/metrics.hpp"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

using nlohmann::json;

struct embinv_lm {
  embinv::NGramLM model;
};

struct embinv_embedder {
  std::shared_ptr<embinv::EmbedderPort> port;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& message) { g_last_error = message; }

embinv_status classify(const std::exception& e) {
  if (dynamic_cast<const std::invalid_argument*>(&e)) return EMBINV_ERR_INVALID_ARGUMENT;
  return EMBINV_ERR_INTERNAL;
}

template <typename Fn>
embinv_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    set_error(e.what());
    return classify(e);
  } catch (...) {
    set_error("unknown error");
    return EMBINV_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

embinv_status require(bool condition, const char* message) {
  if (condition) return EMBINV_OK;
  set_error(message);
  return EMBINV_ERR_INVALID_ARGUMENT;
}

json summary_to_json(const embinv::ExperimentSummary& summary) {
  return json{{"targets", summary.targets},
              {"failures", summary.failures},
              {"metric_means", summary.metric_means},
              {"mean_online_sentences", summary.mean_online_sentences},
              {"mean_online_tokens", summary.mean_online_tokens}};
}

}  // namespace

extern "C" {

const char* embinv_version(void) { return "0.1.0"; }

const char* embinv_last_error(void) { return g_last_error.c_str(); }

void embinv_string_free(char* s) { std::free(s); }

embinv_status embinv_lm_train_file(const char* corpus_path, int order, double add_k,
                                   embinv_lm** out) {
  if (auto rc = require(corpus_path && out, "corpus_path and out must be non-NULL")) return rc;
  return guarded([&] {
    auto corpus = embinv::load_lines(corpus_path);
    auto handle = std::make_unique<embinv_lm>();
    handle->model = embinv::train_ngram(corpus, order, add_k);
    *out = handle.release();
    return EMBINV_OK;
  });
}

embinv_status embinv_lm_save(const embinv_lm* lm, const char* path) {
  if (auto rc = require(lm && path, "lm and path must be non-NULL")) return rc;
  return guarded([&] {
    lm->model.save(path);
    return EMBINV_OK;
  });
}

embinv_status embinv_lm_load(const char* path, embinv_lm** out) {
  if (auto rc = require(path && out, "path and out must be non-NULL")) return rc;
  return guarded([&] {
    auto handle = std::make_unique<embinv_lm>();
    handle->model = embinv::NGramLM::load(path);
    *out = handle.release();
    return EMBINV_OK;
  });
}

int embinv_lm_order(const embinv_lm* lm) { return lm ? lm->model.order() : -1; }

int embinv_lm_vocab_size(const embinv_lm* lm) { return lm ? lm->model.vocab().size() : -1; }

void embinv_lm_free(embinv_lm* lm) { delete lm; }

embinv_status embinv_embedder_hash(int dim, int ngram, uint64_t seed, embinv_embedder** out) {
  if (auto rc = require(out != nullptr, "out must be non-NULL")) return rc;
  return guarded([&] {
    auto handle = std::make_unique<embinv_embedder>();
    handle->port = std::make_shared<embinv::HashEmbedder>(dim, ngram, seed);
    *out = handle.release();
    return EMBINV_OK;
  });
}

embinv_status embinv_embedder_linear(const embinv_embedder* base, int victim_dim, uint64_t seed,
                                     int normalize, embinv_embedder** out) {
  if (auto rc = require(base && out, "base and out must be non-NULL")) return rc;
  return guarded([&] {
    auto handle = std::make_unique<embinv_embedder>();
    handle->port = std::make_shared<embinv::LinearVictim>(base->port, victim_dim, seed,
                                                          normalize != 0);
    *out = handle.release();
    return EMBINV_OK;
  });
}

embinv_status embinv_embedder_remote(const char* base_url, int timeout_ms, int retries,
                                     embinv_embedder** out) {
  if (auto rc = require(base_url && out, "base_url and out must be non-NULL")) return rc;
  return guarded([&] {
    auto handle = std::make_unique<embinv_embedder>();
    handle->port = std::make_shared<embinv::RemoteEmbedder>(base_url, timeout_ms, retries);
    *out = handle.release();
    return EMBINV_OK;
  });
}

int embinv_embedder_dim(const embinv_embedder* embedder) {
  if (!embedder) return -1;
  try {
    return embedder->port->dim();
  } catch (const std::exception& e) {
    set_error(e.what());
    return -1;
  }
}

embinv_status embinv_embedder_embed(embinv_embedder* embedder, const char* const* texts,
                                    size_t n_texts, double* out) {
  if (auto rc = require(embedder && texts && out, "embedder, texts and out must be non-NULL")) {
    return rc;
  }
  if (auto rc = require(n_texts > 0, "n_texts must be positive")) return rc;
  return guarded([&]() -> embinv_status {
    std::vector<std::string> batch;
    batch.reserve(n_texts);
    for (size_t i = 0; i < n_texts; ++i) {
      if (!texts[i]) {
        set_error("texts must not contain NULL entries");
        return EMBINV_ERR_INVALID_ARGUMENT;
      }
      batch.emplace_back(texts[i]);
    }
    std::vector<embinv::Embedding> embs;
    try {
      embs = embedder->port->embed_batch(batch);
    } catch (const std::runtime_error& e) {
      set_error(e.what());
      return EMBINV_ERR_REMOTE;
    }
    size_t dim = embs.empty() ? 0 : static_cast<size_t>(embs.front().size());
    for (size_t i = 0; i < embs.size(); ++i) {
      for (size_t d = 0; d < dim; ++d) out[i * dim + d] = embs[i][static_cast<int>(d)];
    }
    return EMBINV_OK;
  });
}

void embinv_embedder_free(embinv_embedder* embedder) { delete embedder; }

double embinv_bleu(const char* candidate, const char* reference, int n) {
  if (!candidate || !reference || n < 1) {
    set_error("bleu needs non-NULL texts and n >= 1");
    return -1.0;
  }
  return embinv::bleu_n(candidate, reference, n);
}

double embinv_rouge1(const char* candidate, const char* reference) {
  if (!candidate || !reference) {
    set_error("rouge needs non-NULL texts");
    return -1.0;
  }
  return embinv::rouge_1(candidate, reference);
}

double embinv_rougeL(const char* candidate, const char* reference) {
  if (!candidate || !reference) {
    set_error("rouge needs non-NULL texts");
    return -1.0;
  }
  return embinv::rouge_l(candidate, reference);
}

embinv_status embinv_run_experiment_json(const char* spec_json, char** summary_json_out) {
  if (auto rc = require(spec_json && summary_json_out, "spec and out must be non-NULL")) {
    return rc;
  }
  return guarded([&] {
    auto spec = embinv::experiment_spec_from_json(json::parse(spec_json));
    auto result = embinv::run_experiment(spec);
    json summary = summary_to_json(result.summary);
    summary["report_path"] = spec.report_path;
    summary["summary_path"] = spec.summary_path;
    *summary_json_out = dup_string(summary.dump());
    return EMBINV_OK;
  });
}

embinv_status embinv_eval_file(const char* reconstructions_jsonl, const char* victim_json,
                               const char* summary_csv_path, char** summary_json_out) {
  if (auto rc = require(reconstructions_jsonl && summary_json_out,
                        "input path and out must be non-NULL")) {
    return rc;
  }
  return guarded([&] {
    std::optional<embinv::VictimSpec> victim;
    if (victim_json) victim = embinv::victim_spec_from_json(json::parse(victim_json));
    auto summary = embinv::evaluate_file(reconstructions_jsonl, victim,
                                         summary_csv_path ? summary_csv_path : "");
    *summary_json_out = dup_string(summary_to_json(summary).dump());
    return EMBINV_OK;
  });
}

embinv_status embinv_serve_json(const char* spec_json) {
  if (auto rc = require(spec_json != nullptr, "spec must be non-NULL")) return rc;
  return guarded([&] {
    auto spec = embinv::serve_spec_from_json(json::parse(spec_json));
    embinv::EmbedService service(spec);
    service.run_blocking();
    return EMBINV_OK;
  });
}

}  // extern "C"
