// SPDX-License-Identifier: Apache-2.0
#include "dxloop/remote.hpp"

#include <chrono>
#include <regex>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"

#include "dxloop/errors.hpp"

namespace dxloop {

namespace {

using nlohmann::json;

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

}  // namespace

ChatClient::ChatClient(RemoteConfig config) : config_(std::move(config)) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, url)) {
    throw ConfigError("remote.base_url must look like http://host[:port][/path]");
  }
  origin_ = m[1];
  std::string base = m[2];
  while (!base.empty() && base.back() == '/') base.pop_back();
  path_ = base + "/chat/completions";
  if (config_.max_in_flight == 0) throw ConfigError("remote.max_in_flight must be >= 1");
  slots_ = std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(config_.max_in_flight));
}

ChatClient::~ChatClient() = default;

std::string chat_request_json(const RemoteConfig& config, const std::vector<ChatMessage>& messages) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return json{{"model", config.model}, {"temperature", config.temperature}, {"messages", msgs}}.dump();
}

std::string chat_response_content(const std::string& body) {
  try {
    const json obj = json::parse(body);
    return obj.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected chat-completions response: ") + e.what());
  }
}

std::string ChatClient::complete(const std::vector<ChatMessage>& messages) const {
  const std::string body = chat_request_json(config_, messages);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_s));

  SlotGuard slot(*slots_);
  std::string last_error;
  for (int attempt = 0; attempt <= config_.transport_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(200 * attempt));
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body);
    return chat_response_content(res->body);
  }
  throw TransportError("chat completion failed: " + last_error);
}

RemoteAgent::RemoteAgent(const ChatBackend& backend, TestCatalog catalog, int max_reprompts)
    : backend_(&backend), catalog_(std::move(catalog)), max_reprompts_(max_reprompts) {}

std::string reprompt_text(const ParseError& error) {
  return std::string("Your reply could not be used (") + to_string(error.reason) +
         "). Please answer again in exactly the required format.";
}

std::vector<ChatMessage> RemoteAgent::hypothesis_messages(const ObservedState& state) const {
  return {{"system", render_hypothesis_prompt(state, catalog_)}};
}

std::vector<ChatMessage> RemoteAgent::decision_messages(const DecisionContext& ctx) const {
  std::vector<ChatMessage> msgs{
      {"system", render_decision_prompt(ctx.initial_state, ctx.initial_hypothesis, catalog_)}};
  for (const auto& turn : ctx.transcript) {
    msgs.push_back({"assistant", turn.generation});
    msgs.push_back({"user", turn.reply});
  }
  return msgs;
}

HypothesisStep RemoteAgent::hypothesize(const ObservedState& state, Rng&) const {
  auto msgs = hypothesis_messages(state);
  for (int attempt = 0;; ++attempt) {
    const std::string reply = backend_->complete(msgs);
    auto parsed = parse_hypothesis(reply, catalog_);
    if (parsed) return HypothesisStep{parsed.value(), 0.0, 0.0, reply};
    if (attempt >= max_reprompts_) {
      throw AgentFormatError("hypothesis reply could not be parsed", parsed.error());
    }
    msgs.push_back({"assistant", reply});
    msgs.push_back({"user", reprompt_text(parsed.error())});
  }
}

DecisionStep RemoteAgent::decide(const DecisionContext& context, Rng&) const {
  auto msgs = decision_messages(context);
  for (int attempt = 0;; ++attempt) {
    const std::string reply = backend_->complete(msgs);
    auto parsed = parse_decision(reply, catalog_);
    if (parsed) return DecisionStep{to_action(parsed.value()), std::nullopt, 0.0, reply};
    if (attempt >= max_reprompts_) {
      return DecisionStep{Malformed{to_string(parsed.error().reason)}, std::nullopt, 0.0, reply};
    }
    msgs.push_back({"assistant", reply});
    msgs.push_back({"user", reprompt_text(parsed.error())});
  }
}

}  // namespace dxloop
