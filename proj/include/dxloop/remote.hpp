// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include "dxloop/agents.hpp"

namespace dxloop {

/// OpenAI-compatible chat-completions endpoint.
struct RemoteConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model = "default";
  double temperature = 0.0;
  double timeout_s = 60.0;
  std::size_t max_in_flight = 4;
  int max_reprompts = 2;
  /// Extra attempts after a failed HTTP request.
  int transport_retries = 2;
  /// Only ever read from the environment; never written to disk.
  std::string api_key;
};

struct ChatMessage {
  std::string role;  // system, user or assistant
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

/// The endpoint could not be reached or answered with an error.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Anything that turns a conversation into the next assistant message.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages) const = 0;
};

/// HTTP client for POST {base_url}/chat/completions. Only the first choice's
/// message content is used. At most max_in_flight requests run at once.
class ChatClient : public ChatBackend {
 public:
  explicit ChatClient(RemoteConfig config);
  ~ChatClient() override;

  /// Throws TransportError after the configured retries are used up.
  std::string complete(const std::vector<ChatMessage>& messages) const override;

  const RemoteConfig& config() const { return config_; }

 private:
  RemoteConfig config_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;    // .../chat/completions
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

/// Request body for a chat completion.
std::string chat_request_json(const RemoteConfig& config, const std::vector<ChatMessage>& messages);
/// choices[0].message.content of a response body. Throws TransportError.
std::string chat_response_content(const std::string& body);

/// Language-model backend for either role. Hypothesis requests carry the
/// rendered hypothesis prompt as the system message. Decision requests carry
/// the decision prompt for the episode's opening state, then the earlier
/// exchanges as assistant/user turns. Unparseable replies are re-prompted up
/// to max_reprompts times; after that a hypothesis raises AgentFormatError
/// and a decision becomes a Malformed action.
class RemoteAgent : public Agent {
 public:
  RemoteAgent(const ChatBackend& backend, TestCatalog catalog, int max_reprompts = 2);

  HypothesisStep hypothesize(const ObservedState& state, Rng& rng) const override;
  DecisionStep decide(const DecisionContext& context, Rng& rng) const override;

  std::vector<ChatMessage> hypothesis_messages(const ObservedState& state) const;
  std::vector<ChatMessage> decision_messages(const DecisionContext& context) const;

 private:
  const ChatBackend* backend_;
  TestCatalog catalog_;
  int max_reprompts_;
};

/// User message sent after an unparseable reply.
std::string reprompt_text(const ParseError& error);

}  // namespace dxloop
