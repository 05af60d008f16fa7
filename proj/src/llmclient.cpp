#include "toolbudget/llmclient.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <sstream>
#include <thread>

namespace toolbudget {

using nlohmann::json;

void EndpointConfig::check() const {
    if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0)
        throw ConfigError("base_url must start with http:// or https://");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (sampling_diversity < 0.0 || sampling_diversity > 2.0)
        throw ConfigError("sampling_diversity must lie in [0, 2]");
}

struct ChatClient::Impl {
    std::unique_ptr<httplib::Client> http;
};

ChatClient::ChatClient(EndpointConfig config) : config_(std::move(config)), impl_(new Impl) {
    config_.check();
    impl_->http = std::make_unique<httplib::Client>(config_.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.request_timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
        config_.request_timeout - secs);
    impl_->http->set_connection_timeout(secs.count(), usecs.count());
    impl_->http->set_read_timeout(secs.count(), usecs.count());
    impl_->http->set_write_timeout(secs.count(), usecs.count());
}

ChatClient::~ChatClient() = default;

ChatResult ChatClient::complete(const std::vector<ChatMessage>& messages, double temperature) {
    json body;
    body["model"] = config_.model_name;
    body["temperature"] = temperature;
    body["messages"] = json::array();
    std::uint64_t prompt_bytes = 0;
    for (const auto& m : messages) {
        prompt_bytes += m.content.size();
        body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }

    httplib::Headers headers;
    if (!config_.api_key_env_var.empty()) {
        if (const char* key = std::getenv(config_.api_key_env_var.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        auto res = impl_->http->Post("/v1/chat/completions", headers, body.dump(),
                                     "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::exception& e) {
            last_error = std::string("bad response json: ") + e.what();
            continue;
        }
        ChatResult out;
        out.content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        if (config_.token_counter_mode == TokenCounterMode::FromResponseUsage &&
            reply.contains("usage") && reply["usage"].contains("total_tokens"))
            out.tokens = reply["usage"]["total_tokens"].get<std::uint64_t>();
        else
            out.tokens = approx_tokens(out.content) + (prompt_bytes + 3) / 4;
        return out;
    }
    throw TransportError("chat completion failed after " +
                         std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

std::vector<ChatMessage> render_chat_prompt(const History& history) {
    std::vector<ChatMessage> messages;
    for (const auto& b : history.blocks()) {
        switch (b.kind) {
            case BlockKind::System:
                messages.push_back({"system", b.payload});
                break;
            case BlockKind::Reasoning:
            case BlockKind::Action:
                messages.push_back({"assistant", b.payload});
                break;
            default:
                messages.push_back({"user", b.payload});
                break;
        }
    }
    return messages;
}

PolicyStep parse_action_envelope(const std::string& completion) {
    static const std::string kFence = "```action";
    const auto open = completion.rfind(kFence);
    if (open == std::string::npos)
        throw MalformedActionError("no ```action fence in completion");
    const auto body_start = completion.find('\n', open);
    if (body_start == std::string::npos)
        throw MalformedActionError("unterminated action fence");
    const auto close = completion.find("```", body_start);
    if (close == std::string::npos)
        throw MalformedActionError("unterminated action fence");

    json j;
    try {
        j = json::parse(completion.substr(body_start, close - body_start));
    } catch (const json::exception& e) {
        throw MalformedActionError(std::string("action envelope is not valid json: ") + e.what());
    }

    PolicyStep ps;
    ps.reasoning = completion.substr(0, open);
    while (!ps.reasoning.empty() && (ps.reasoning.back() == '\n' || ps.reasoning.back() == ' '))
        ps.reasoning.pop_back();
    if (ps.reasoning.empty()) ps.reasoning = "(no reasoning)";

    try {
        const auto type = j.at("type").get<std::string>();
        if (type == "tool_call") {
            const auto& args = j.at("arguments");
            ps.action = Action::call(j.at("tool_id").get<std::string>(),
                                     args.is_string() ? args.get<std::string>() : args.dump());
        } else if (type == "answer") {
            ps.action = Action::answer(j.at("text").get<std::string>());
        } else {
            throw MalformedActionError("unknown action type: " + type);
        }
    } catch (const json::exception& e) {
        throw MalformedActionError(std::string("bad action envelope fields: ") + e.what());
    }
    return ps;
}

LlmPolicy::LlmPolicy(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}

PolicyStep LlmPolicy::step(const History& history) {
    auto messages = render_chat_prompt(history);
    messages.push_back(
        {"user",
         "Reply with your reasoning followed by exactly one fenced ```action block containing "
         "{\"type\":\"tool_call\",\"tool_id\":...,\"arguments\":{...}} or "
         "{\"type\":\"answer\",\"text\":...}."});
    std::string last_error;
    for (int attempt = 0; attempt <= client_->config().max_retries; ++attempt) {
        ChatResult res = client_->complete(messages, client_->config().sampling_diversity);
        record_usage(res.tokens);
        try {
            return parse_action_envelope(res.content);
        } catch (const MalformedActionError& e) {
            last_error = e.what();
            messages.push_back({"assistant", res.content});
            messages.push_back(
                {"user", std::string("Your previous reply was not a valid action envelope (") +
                             e.what() + "). Reply again with a single fenced ```action block."});
        }
    }
    throw MalformedActionError("action parsing exhausted retries: " + last_error);
}

LlmWorldModel::LlmWorldModel(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}

std::string LlmWorldModel::simulate(const ToolSpec& tool, const std::string& arguments,
                                    RngStream& /*rng*/) {
    std::vector<ChatMessage> messages{
        {"system",
         "You simulate the execution of external tools. Given a tool specification and call "
         "arguments, reply with a plausible raw tool response and nothing else."},
        {"user", "Tool: " + tool.name + " (" + tool.tool_id + ")\nDescription: " +
                     tool.description + "\nInput schema: " + tool.input_schema +
                     "\nArguments: " + arguments}};
    ChatResult res = client_->complete(messages, diversity());
    record_usage(res.tokens);
    return res.content;
}

LlmGenerator::LlmGenerator(std::shared_ptr<ChatClient> client, double diversity)
    : client_(std::move(client)), diversity_(diversity) {}

std::string LlmGenerator::generate(const ToolSpec& tool, const std::string& arguments,
                                   bool satisfied, RngStream& /*rng*/) {
    const char* directive =
        satisfied ? "Satisfaction directive (z=1): the response MUST fully satisfy the caller's "
                    "intention and parse as a successful tool response under the input schema."
                  : "Satisfaction directive (z=0): the response must represent a failed or "
                    "unhelpful tool call.";
    std::vector<ChatMessage> messages{
        {"system", std::string("You simulate the execution of external tools. ") + directive},
        {"user", "Tool: " + tool.name + " (" + tool.tool_id + ")\nDescription: " +
                     tool.description + "\nInput schema: " + tool.input_schema +
                     "\nArguments: " + arguments}};
    ChatResult res = client_->complete(messages, diversity_);
    record_usage(res.tokens);
    return res.content;
}

LlmPredictor::LlmPredictor(std::shared_ptr<ChatClient> client, double calibration_temperature,
                           Rat rho_min)
    : client_(std::move(client)),
      calibration_temperature_(calibration_temperature),
      rho_min_(std::move(rho_min)) {
    if (calibration_temperature_ <= 0) throw ConfigError("calibration temperature must be > 0");
}

Rat LlmPredictor::predict(const std::string& reasoning, const ToolSpec& tool,
                          const std::string& arguments) {
    std::vector<ChatMessage> messages{
        {"system",
         "Score how likely a single attempt of the proposed tool call satisfies the intention "
         "expressed in the reasoning. Reply with one real-valued logit and nothing else."},
        {"user", "Reasoning: " + reasoning + "\nTool: " + tool.name + " (" + tool.tool_id +
                     ")\nArguments: " + arguments}};

    double raw = 0.0;
    bool parsed = false;
    try {
        ChatResult res = client_->complete(messages, 0.0);
        std::istringstream in(res.content);
        std::string token;
        while (in >> token) {
            try {
                std::size_t used = 0;
                raw = std::stod(token, &used);
                if (used == token.size()) {
                    parsed = true;
                    break;
                }
            } catch (const std::exception&) {
            }
        }
    } catch (const TransportError&) {
        parsed = false;
    }
    if (!parsed) {
        ++parse_failures_;  // pessimistic fallback keeps INTENT conservative
        return rho_min_;
    }
    const double p = 1.0 / (1.0 + std::exp(-raw / calibration_temperature_));
    // 9-decimal grid keeps downstream arithmetic exact and replayable
    Rat rho(static_cast<std::int64_t>(std::llround(p * 1e9)), 1000000000LL);
    if (rho < rho_min_) rho = rho_min_;
    if (rho > 1) rho = 1;
    return rho;
}

// --- loopback server ---------------------------------------------------------

struct LoopbackServer::Impl {
    httplib::Server server;
    std::thread thread;
    mutable std::mutex mu;
    std::deque<std::string> queue;
    std::string fallback = "OK";
    std::chrono::milliseconds delay{0};
    std::uint64_t usage_tokens = 7;
    std::vector<std::string> bodies;
};

LoopbackServer::LoopbackServer() : impl_(new Impl) {
    impl_->server.Post("/v1/chat/completions",
                       [this](const httplib::Request& req, httplib::Response& res) {
                           std::chrono::milliseconds delay;
                           std::string content;
                           std::uint64_t tokens;
                           {
                               std::lock_guard<std::mutex> lock(impl_->mu);
                               impl_->bodies.push_back(req.body);
                               delay = impl_->delay;
                               tokens = impl_->usage_tokens;
                               if (!impl_->queue.empty()) {
                                   content = impl_->queue.front();
                                   impl_->queue.pop_front();
                               } else {
                                   content = impl_->fallback;
                               }
                           }
                           if (delay.count() > 0) std::this_thread::sleep_for(delay);
                           json reply = {
                               {"id", "loopback"},
                               {"object", "chat.completion"},
                               {"model", "loopback"},
                               {"choices",
                                json::array({{{"index", 0},
                                              {"message",
                                               {{"role", "assistant"}, {"content", content}}},
                                              {"finish_reason", "stop"}}})},
                               {"usage",
                                {{"prompt_tokens", tokens / 2},
                                 {"completion_tokens", tokens - tokens / 2},
                                 {"total_tokens", tokens}}}};
                           res.set_content(reply.dump(), "application/json");
                       });
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw TransportError("loopback server could not bind a port");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

LoopbackServer::~LoopbackServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string LoopbackServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

void LoopbackServer::enqueue(std::string content) {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->queue.push_back(std::move(content));
}

void LoopbackServer::set_default(std::string content) {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->fallback = std::move(content);
}

void LoopbackServer::set_delay(std::chrono::milliseconds delay) {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->delay = delay;
}

void LoopbackServer::set_usage_tokens(std::uint64_t tokens) {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->usage_tokens = tokens;
}

std::vector<std::string> LoopbackServer::requests() const {
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->bodies;
}

std::size_t LoopbackServer::request_count() const {
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->bodies.size();
}

}  // namespace toolbudget
