// Kept apart from vlm.cpp so only this unit pulls in httplib and its TLS.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>

#include "json.hpp"

#include "car/datastore.hpp"
#include "car/vlm.hpp"

namespace car::vlm {

using json = nlohmann::json;

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw BackendError("endpoint must be an http(s) URL: " + url);
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

Transport http_transport(const LiveConfig& cfg) {
  const Endpoint ep = split_endpoint(cfg.endpoint);
  const std::string auth = "Bearer " + cfg.api_key;
  const int timeout = cfg.timeout_seconds;
  return [ep, auth, timeout](const std::string& body) {
    httplib::Client client(ep.origin);
    client.set_connection_timeout(timeout, 0);
    client.set_read_timeout(timeout, 0);
    client.set_write_timeout(timeout, 0);
    const httplib::Headers headers = {{"Authorization", auth}};
    const httplib::Result res = client.Post(ep.path, headers, body, "application/json");
    if (!res) throw BackendError("transport failure: " + httplib::to_string(res.error()));
    return HttpReply{res->status, res->body};
  };
}

}  // namespace

LiveBackend::LiveBackend(LiveConfig cfg, Transport transport) : cfg_(std::move(cfg)) {
  if (cfg_.api_key.empty()) {
    if (const char* key = std::getenv(std::string(kApiKeyEnv).c_str())) cfg_.api_key = key;
  }
  if (cfg_.api_key.empty()) throw BackendError("no API key: set " + std::string(kApiKeyEnv));
  if (cfg_.max_transport_retries < 0) throw InvalidConfig("max_transport_retries must be non-negative");
  if (cfg_.timeout_seconds < 1) throw InvalidConfig("timeout must be at least one second");
  transport_ = transport ? std::move(transport) : http_transport(cfg_);
}

std::string LiveBackend::request_body(const std::vector<ChatMessage>& conversation) const {
  json messages = json::array();
  for (const ChatMessage& m : conversation) {
    if (m.role == Role::Assistant && !m.images.empty()) throw BackendError("assistant messages carry no images");
    if (m.images.empty()) {
      messages.push_back({{"role", to_string(m.role)}, {"content", m.text}});
      continue;
    }
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", m.text}});
    for (const dsl::FramePtr& f : m.images) {
      const std::vector<std::uint8_t> png = encode_png(*f);
      const std::string b64 = httplib::detail::base64_encode(std::string(png.begin(), png.end()));
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + b64}}}});
    }
    messages.push_back({{"role", to_string(m.role)}, {"content", content}});
  }
  return json{{"model", cfg_.model}, {"messages", messages}}.dump();
}

std::string LiveBackend::parse_reply(const std::string& body) {
  try {
    const json j = json::parse(body);
    const json& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    // Some servers answer with content parts.
    std::string text;
    for (const json& part : content) {
      if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
    }
    return text;
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed reply: ") + e.what());
  }
}

std::string LiveBackend::complete(const std::vector<ChatMessage>& conversation) {
  const std::string body = request_body(conversation);
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_transport_retries; ++attempt) {
    HttpReply reply;
    try {
      reply = transport_(body);
    } catch (const BackendError& e) {
      last_error = e.what();
      continue;
    }
    if (reply.status == 200) return parse_reply(reply.body);
    last_error = "HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 200);
    // Client errors other than rate limiting will not improve on resend.
    if (reply.status != 429 && reply.status < 500) break;
  }
  throw BackendError(last_error);
}

}  // namespace car::vlm
