#include "embinv/embed.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <thread>

namespace embinv {

namespace {

using nlohmann::json;

std::string strip_trailing_slash(std::string url) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  return url;
}

httplib::Headers auth_headers() {
  httplib::Headers headers;
  if (const char* key = std::getenv("EMBINV_API_KEY")) {
    if (*key != '\0') headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  return headers;
}

}  // namespace

RemoteEmbedder::RemoteEmbedder(std::string base_url, int timeout_ms, int retries)
    : base_url_(strip_trailing_slash(std::move(base_url))),
      timeout_ms_(timeout_ms),
      retries_(retries) {
  if (base_url_.empty()) throw std::invalid_argument("remote embedder requires a base URL");
}

int RemoteEmbedder::dim() const {
  if (dim_ > 0) return dim_;
  httplib::Client client(base_url_);
  client.set_connection_timeout(0, timeout_ms_ * 1000);
  client.set_read_timeout(0, timeout_ms_ * 1000);
  auto res = client.Get("/health", auth_headers());
  if (!res || res->status != 200) {
    throw std::runtime_error("remote embedder health check failed: " + base_url_);
  }
  dim_ = json::parse(res->body).at("dim").get<int>();
  return dim_;
}

std::vector<Embedding> RemoteEmbedder::embed_batch(const std::vector<std::string>& texts) {
  json body;
  body["texts"] = texts;
  const std::string payload = body.dump();

  std::string last_error;
  int attempts = retries_ + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(0, timeout_ms_ * 1000);
    client.set_read_timeout(0, timeout_ms_ * 1000);
    auto res = client.Post("/embed", auth_headers(), payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
    } else {
      json parsed = json::parse(res->body);
      const auto& rows = parsed.at("embeddings");
      if (rows.size() != texts.size()) {
        throw std::runtime_error("remote embedder returned " + std::to_string(rows.size()) +
                                 " embeddings for " + std::to_string(texts.size()) + " texts");
      }
      dim_ = parsed.at("dim").get<int>();
      std::vector<Embedding> out;
      out.reserve(rows.size());
      for (const auto& row : rows) {
        Embedding e(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) e[static_cast<int>(i)] = row[i].get<double>();
        out.push_back(std::move(e));
      }
      return out;
    }
    if (attempt < attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20 * attempt));
    }
  }
  throw std::runtime_error("remote embed failed after " + std::to_string(attempts) +
                           " attempts (" + last_error + ")");
}

}  // namespace embinv
