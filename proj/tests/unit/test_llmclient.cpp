#include "toolbudget/llmclient.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

using namespace toolbudget;
using namespace tbtest;

namespace {

std::shared_ptr<ChatClient> client_for(const LoopbackServer& server, int max_retries = 2,
                                       std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
    EndpointConfig cfg;
    cfg.base_url = server.base_url();
    cfg.max_retries = max_retries;
    cfg.request_timeout = timeout;
    return std::make_shared<ChatClient>(cfg);
}

const char* kToolCallEnvelope =
    "I should fetch the data first.\n"
    "```action\n"
    "{\"type\": \"tool_call\", \"tool_id\": \"t9\", \"arguments\": {\"symbol\": \"GOOGL\"}}\n"
    "```";

const char* kAnswerEnvelope =
    "Everything is collected.\n"
    "```action\n"
    "{\"type\": \"answer\", \"text\": \"done\"}\n"
    "```";

}  // namespace

TEST_CASE("parse_action_envelope handles both action kinds") {
    const auto call = parse_action_envelope(kToolCallEnvelope);
    CHECK(call.reasoning == "I should fetch the data first.");
    REQUIRE(call.action.is_call());
    CHECK(call.action.as_call().tool_id == "t9");
    CHECK(call.action.as_call().arguments.find("GOOGL") != std::string::npos);

    const auto ans = parse_action_envelope(kAnswerEnvelope);
    REQUIRE(ans.action.is_answer());
    CHECK(ans.action.as_answer().text == "done");

    CHECK_THROWS_AS(parse_action_envelope("no envelope at all"), MalformedActionError);
    CHECK_THROWS_AS(parse_action_envelope("```action\nnot json\n```"), MalformedActionError);
    CHECK_THROWS_AS(parse_action_envelope("```action\n{\"type\":\"weird\"}\n```"),
                    MalformedActionError);
}

TEST_CASE("llm policy round-trips through the loopback server") {
    LoopbackServer server;
    auto client = client_for(server);
    LlmPolicy policy(client);
    const History h = History::initial("sys", "query", "budget", "market");

    SUBCASE("answer envelope") {
        server.enqueue(kAnswerEnvelope);
        const auto ps = policy.step(h);
        CHECK(ps.action.is_answer());
        CHECK(server.request_count() == 1);
    }
    SUBCASE("tool-call envelope") {
        server.enqueue(kToolCallEnvelope);
        const auto ps = policy.step(h);
        REQUIRE(ps.action.is_call());
        CHECK(ps.action.as_call().tool_id == "t9");
    }
    SUBCASE("garbage exhausts the repair retries") {
        server.set_default("complete nonsense");
        CHECK_THROWS_AS(policy.step(h), MalformedActionError);
        CHECK(server.request_count() == 3);  // max_retries = 2 repair rounds + first attempt
    }
}

TEST_CASE("prompt rendering maps block kinds onto chat roles") {
    History h = History::initial("sys", "query", "budget", "market");
    h = h.append({BlockKind::Reasoning, "think", 1});
    h = h.append({BlockKind::Action, "act", 1});
    h = h.append({BlockKind::Observation, "obs", 1});
    h = h.append({BlockKind::OracleFeedback, "feedback", 1});
    const auto messages = render_chat_prompt(h);
    REQUIRE(messages.size() == 8);
    CHECK(messages[0].role == "system");
    CHECK(messages[1].role == "user");
    CHECK(messages[4].role == "assistant");  // reasoning
    CHECK(messages[5].role == "assistant");  // action
    CHECK(messages[6].role == "user");       // observation
    CHECK(messages[7].role == "user");       // oracle feedback
}

TEST_CASE("llm world model and generator speak the same wire format") {
    LoopbackServer server;
    auto client = client_for(server);
    const ToolSpec tool{"t9", "cashflow", "fetch cash flow", "{}", Rat(9)};
    RngStream rng(1, "oracle");

    LlmWorldModel wm(client);
    server.enqueue("{\"cash\": 1}");
    CHECK(wm.simulate(tool, "{}", rng) == "{\"cash\": 1}");

    LlmGenerator gen(client);
    server.enqueue("OK simulated");
    CHECK(gen.generate(tool, "{}", true, rng) == "OK simulated");
    const auto bodies = server.requests();
    REQUIRE(bodies.size() == 2);
    CHECK(bodies[1].find("z=1") != std::string::npos);  // satisfaction directive on the wire
    CHECK(nlohmann::json::parse(bodies[1])["temperature"].get<double>() ==
          doctest::Approx(0.3));
}

TEST_CASE("llm predictor applies sigmoid temperature and clamps") {
    LoopbackServer server;
    auto client = client_for(server);
    const ToolSpec tool{"t9", "cashflow", "d", "{}", Rat(9)};

    SUBCASE("logit 0 maps to exactly one half") {
        LlmPredictor predictor(client, 1.0);
        server.enqueue("0");
        CHECK(predictor.predict("r", tool, "{}") == Rat(1, 2));
    }
    SUBCASE("logit 2 at temperature 2 is sigmoid(1)") {
        LlmPredictor predictor(client, 2.0);
        server.enqueue("2.0");
        const Rat rho = predictor.predict("r", tool, "{}");
        CHECK(to_double(rho) == doctest::Approx(0.7310585786).epsilon(1e-6));
    }
    SUBCASE("garbage falls back to rho_min and counts a warning") {
        LlmPredictor predictor(client, 1.0, Rat(1, 1000));
        server.set_default("I cannot answer that");
        CHECK(predictor.predict("r", tool, "{}") == Rat(1, 1000));
        CHECK(predictor.parse_failures() == 1);
    }
}

TEST_CASE("transport errors surface after bounded retries") {
    LoopbackServer server;
    server.set_delay(std::chrono::milliseconds(400));
    auto client = client_for(server, 1, std::chrono::milliseconds(50));
    LlmPolicy policy(client);
    const History h = History::initial("sys", "query", "budget", "market");
    CHECK_THROWS_AS(policy.step(h), TransportError);
}

TEST_CASE("loopback runs are deterministic and meter token usage") {
    LoopbackServer server;
    server.set_usage_tokens(42);
    auto client = client_for(server);
    LlmPolicy policy(client);
    UsageMeter meter;
    policy.attach_meter(&meter);
    server.enqueue(kAnswerEnvelope);
    server.enqueue(kAnswerEnvelope);
    const History h = History::initial("sys", "query", "budget", "market");
    const auto a = policy.step(h);
    const auto b = policy.step(h);
    CHECK(a.reasoning == b.reasoning);
    CHECK(a.action == b.action);
    CHECK(meter.real_tokens == 84);
    CHECK(meter.real_requests == 2);
}
