#include "embinv/harness.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <thread>

namespace embinv {

namespace {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

}  // namespace

struct EmbedService::Impl {
  ServeSpec spec;
  std::shared_ptr<EmbedderPort> embedder;
  httplib::Server server;
  std::thread thread;
  std::atomic<std::uint64_t> request_counter{0};
  int bound_port = 0;

  explicit Impl(ServeSpec s) : spec(std::move(s)) {
    if (auto err = defense_error(spec.defense)) throw std::invalid_argument(*err);
    embedder = make_embedder(spec.embedder);
    install_routes();
  }

  void install_routes() {
    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"status", "ok"}, {"dim", embedder->dim()}}.dump(),
                      "application/json");
    });

    server.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception&) {
        reply_error(res, 400, "malformed JSON body");
        return;
      }
      if (!body.contains("texts") || !body["texts"].is_array() || body["texts"].empty()) {
        reply_error(res, 400, "\"texts\" must be a non-empty array of strings");
        return;
      }
      const auto& texts_json = body["texts"];
      if (static_cast<int>(texts_json.size()) > spec.max_batch) {
        reply_error(res, 413, "batch exceeds " + std::to_string(spec.max_batch) + " texts");
        return;
      }
      std::vector<std::string> texts;
      texts.reserve(texts_json.size());
      for (const auto& t : texts_json) {
        if (!t.is_string()) {
          reply_error(res, 400, "\"texts\" must contain only strings");
          return;
        }
        texts.push_back(t.get<std::string>());
      }

      std::vector<Embedding> embs;
      try {
        embs = embedder->embed_batch(texts);
      } catch (const std::exception& e) {
        reply_error(res, 500, e.what());
        return;
      }

      // Each request gets its own noise stream.
      std::mt19937_64 rng(mix_seed(spec.defense.seed ^ request_counter.fetch_add(1)));
      json rows = json::array();
      for (auto& e : embs) {
        if (spec.normalize) {
          double n = e.norm();
          if (n > 1e-12) e /= n;
        }
        if (spec.defense.kind != DefenseKind::None) e = apply_defense(spec.defense, e, rng);
        json row = json::array();
        for (int i = 0; i < e.size(); ++i) row.push_back(e[i]);
        rows.push_back(std::move(row));
      }
      res.set_content(json{{"embeddings", std::move(rows)}, {"dim", embedder->dim()}}.dump(),
                      "application/json");
    });
  }
};

EmbedService::EmbedService(ServeSpec spec) : impl_(std::make_unique<Impl>(std::move(spec))) {}

EmbedService::~EmbedService() { stop(); }

int EmbedService::start() {
  auto& impl = *impl_;
  if (impl.spec.port == 0) {
    impl.bound_port = impl.server.bind_to_any_port(impl.spec.host);
    if (impl.bound_port <= 0) throw std::runtime_error("failed to bind embedding service");
  } else {
    if (!impl.server.bind_to_port(impl.spec.host, impl.spec.port)) {
      throw std::runtime_error("failed to bind port " + std::to_string(impl.spec.port));
    }
    impl.bound_port = impl.spec.port;
  }
  impl.thread = std::thread([&impl] { impl.server.listen_after_bind(); });
  for (int i = 0; i < 200 && !impl.server.is_running(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (!impl.server.is_running()) throw std::runtime_error("embedding service failed to start");
  return impl.bound_port;
}

void EmbedService::stop() {
  if (!impl_) return;
  if (impl_->server.is_running()) impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void EmbedService::run_blocking() {
  auto& impl = *impl_;
  if (!impl.server.listen(impl.spec.host, impl.spec.port)) {
    throw std::runtime_error("embedding service terminated abnormally");
  }
}

}  // namespace embinv
