#include "src/http_internal.hpp"

#include <cstdlib>
#include <optional>
#include <thread>

#include "httplib.h"
#include "promptevo/error.hpp"
#include "promptevo/error_topics.hpp"

namespace promptevo {
namespace detail {

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // /v1/...
};

Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint url must start with http:// or https://: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::optional<std::string> bearer_token(const std::string& auth_env) {
  if (auth_env.empty()) return std::nullopt;  // unauthenticated endpoint
  const char* value = std::getenv(auth_env.c_str());
  if (value == nullptr || *value == '\0') {
    throw ConfigError("auth environment variable '" + auth_env +
                      "' is not set");
  }
  return std::string(value);
}

bool retriable_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

}  // namespace

nlohmann::json post_json_with_retry(const std::string& endpoint_url,
                                    const nlohmann::json& body,
                                    const std::string& auth_env,
                                    std::chrono::milliseconds timeout,
                                    int retry_budget,
                                    std::chrono::milliseconds retry_base_delay,
                                    RateGate* gate) {
  const auto token = bearer_token(auth_env);  // config errors precede any I/O
  const Endpoint endpoint = parse_endpoint(endpoint_url);
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (token) headers.emplace("Authorization", "Bearer " + *token);

  std::string last_error;
  for (int attempt = 0; attempt <= retry_budget; ++attempt) {
    if (attempt > 0 && retry_base_delay.count() > 0) {
      std::this_thread::sleep_for(retry_base_delay * (1 << (attempt - 1)));
    }

    httplib::Client client(endpoint.base);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Result result = [&] {
      std::optional<RateGate::Ticket> ticket;
      if (gate) ticket.emplace(gate->acquire());
      return client.Post(endpoint.path, headers, payload, "application/json");
    }();

    if (!result) {
      last_error = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    if (retriable_status(result->status)) {
      last_error = "http status " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) {
      throw ProtocolError("endpoint " + endpoint_url + " answered status " +
                          std::to_string(result->status) + ": " + result->body);
    }
    try {
      return nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError("endpoint " + endpoint_url +
                          " returned malformed JSON: " + e.what());
    }
  }
  throw TransportError("request to " + endpoint_url + " failed after " +
                       std::to_string(retry_budget + 1) + " attempts (" +
                       last_error + ")");
}

}  // namespace detail

std::string chat_complete(const AgentConfig& cfg, const std::string& message,
                          RateGate* gate) {
  nlohmann::json body{
      {"model", cfg.model_name},
      {"messages", nlohmann::json::array({nlohmann::json{
                       {"role", "user"}, {"content", message}}})},
      {"temperature", cfg.temperature},
      {"max_tokens", cfg.max_output_tokens},
  };
  const nlohmann::json reply = detail::post_json_with_retry(
      cfg.endpoint_url, body, cfg.auth_env, cfg.request_timeout,
      cfg.retry_budget, cfg.retry_base_delay, gate);

  try {
    const auto& choice = reply.at("choices").at(0);
    if (choice.contains("message")) {
      return choice.at("message").at("content").get<std::string>();
    }
    return choice.at("text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("chat response lacks choices[0].message.content: " +
                        reply.dump());
  }
}

HttpEmbeddingProvider::HttpEmbeddingProvider(EmbeddingConfig cfg, RateGate* gate)
    : cfg_(std::move(cfg)), gate_(gate) {}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  nlohmann::json body{{"model", cfg_.model_name}, {"input", texts}};
  const nlohmann::json reply = detail::post_json_with_retry(
      cfg_.endpoint_url, body, cfg_.auth_env, cfg_.request_timeout,
      cfg_.retry_budget, cfg_.retry_base_delay, gate_);

  std::vector<std::vector<double>> vectors;
  try {
    for (const auto& item : reply.at("data")) {
      vectors.push_back(item.at("embedding").get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("embedding response lacks data[].embedding: " +
                        reply.dump());
  }
  if (vectors.size() != texts.size()) {
    throw ProtocolError("embedding endpoint returned " +
                        std::to_string(vectors.size()) + " vectors for " +
                        std::to_string(texts.size()) + " inputs");
  }
  return vectors;
}

}  // namespace promptevo
