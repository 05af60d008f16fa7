#pragma once
// Adapters implementing the policy / world-model / generator / predictor
// interfaces against any chat-completions-style HTTP endpoint, plus a
// deterministic loopback server used by tests.
//
// The action envelope grammar is defined by this repo (see README): the
// model replies with free reasoning text followed by a fenced block
//
//   ```action
//   {"type": "tool_call", "tool_id": "...", "arguments": {...}}
//   ```
//
// or {"type": "answer", "text": "..."}. Unparseable replies are retried with
// a repair instruction before surfacing MalformedActionError to the engine.

#include "toolbudget/core.hpp"
#include "toolbudget/engine.hpp"
#include "toolbudget/oracle.hpp"

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <vector>

namespace toolbudget {

// Transient transport failure (timeout, refused connection) after retries;
// harnesses mark the task errored rather than failed.
struct TransportError : std::runtime_error {
    explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

enum class TokenCounterMode { FromResponseUsage, Approximate };

struct EndpointConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    std::string model_name = "default";
    std::string api_key_env_var;  // resolved at request time; empty = no auth header
    double sampling_diversity = 1.0;  // [0, 2]
    std::chrono::milliseconds request_timeout{10000};
    int max_retries = 2;
    TokenCounterMode token_counter_mode = TokenCounterMode::FromResponseUsage;

    void check() const;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatResult {
    std::string content;
    std::uint64_t tokens = 0;
};

// Minimal chat-completions client: POST {base_url}/v1/chat/completions with
// {model, messages, temperature}; retries transport failures max_retries
// times, then throws TransportError.
class ChatClient {
public:
    explicit ChatClient(EndpointConfig config);
    ~ChatClient();

    ChatResult complete(const std::vector<ChatMessage>& messages, double temperature);

    const EndpointConfig& config() const { return config_; }

private:
    EndpointConfig config_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Documented prompt mapping: System->system; Query/Budget/Market/Observation/
// OracleFeedback->user; Reasoning/Action->assistant.
std::vector<ChatMessage> render_chat_prompt(const History& history);

// Parses a completion into (reasoning, action); throws MalformedActionError.
PolicyStep parse_action_envelope(const std::string& completion);

class LlmPolicy : public PolicyInterface {
public:
    explicit LlmPolicy(std::shared_ptr<ChatClient> client);
    PolicyStep step(const History& history) override;

private:
    std::shared_ptr<ChatClient> client_;
};

class LlmWorldModel : public WorldModelInterface {
public:
    explicit LlmWorldModel(std::shared_ptr<ChatClient> client);
    std::string simulate(const ToolSpec& tool, const std::string& arguments,
                         RngStream& rng) override;

private:
    std::shared_ptr<ChatClient> client_;
};

// Conditional-generator variant: prepends a satisfaction directive for z=1
// and samples at low diversity (0.3 by default).
class LlmGenerator : public ConditionalGeneratorInterface {
public:
    explicit LlmGenerator(std::shared_ptr<ChatClient> client, double diversity = 0.3);
    std::string generate(const ToolSpec& tool, const std::string& arguments, bool satisfied,
                         RngStream& rng) override;

private:
    std::shared_ptr<ChatClient> client_;
    double diversity_;
};

class LlmPredictor : public IntentionPredictorInterface {
public:
    LlmPredictor(std::shared_ptr<ChatClient> client, double calibration_temperature = 1.0,
                 Rat rho_min = Rat(1, 1000));
    // Extracts a scalar logit from the endpoint, applies sigmoid temperature
    // scaling, clamps to [rho_min, 1]. Unparsable scores fall back to rho_min.
    Rat predict(const std::string& reasoning, const ToolSpec& tool,
                const std::string& arguments) override;

    std::uint64_t parse_failures() const { return parse_failures_.load(); }

private:
    std::shared_ptr<ChatClient> client_;
    double calibration_temperature_;
    Rat rho_min_;
    std::atomic<std::uint64_t> parse_failures_{0};
};

// Deterministic in-process test server speaking the chat-completions wire
// format. Responses come from a FIFO queue with a fallback default; all
// request bodies are recorded for inspection.
class LoopbackServer {
public:
    LoopbackServer();
    ~LoopbackServer();
    LoopbackServer(const LoopbackServer&) = delete;
    LoopbackServer& operator=(const LoopbackServer&) = delete;

    std::string base_url() const;
    int port() const { return port_; }

    void enqueue(std::string content);
    void set_default(std::string content);
    void set_delay(std::chrono::milliseconds delay);
    void set_usage_tokens(std::uint64_t tokens);

    std::vector<std::string> requests() const;
    std::size_t request_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace toolbudget
