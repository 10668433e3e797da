import time

import pytest

from conftest import make_detection, make_vs
from drivebench.agents import (
    AgentReply,
    AgentRequest,
    AsyncAgentDriver,
    RemoteAgent,
    RemoteConfig,
    Rule,
    RulePolicy,
    RuleAgent,
    ScriptedAgent,
    decide_remote,
    decide_rule,
    decide_scripted,
    default_policy,
)
from drivebench.midlayer import ActionVector
from drivebench.prompting import Prompt, parse_action

GOOD_REPLY = (
    "Selected Driving Behavior: [following]\n"
    "Lateral Control Params: [0.2, 0.35, 2.0]\n"
    "Longitudinal Control Params: [1.1, 0.02, 0.01]"
)


def request(seq=0, deadline_ms=500.0):
    prompt = Prompt(text="status", token_estimate=2, source_seq=(1, 1, 1, 1))
    return AgentRequest(prompt=prompt, deadline_ms=deadline_ms, seq=seq)


class TestRulePolicyTable:
    """The six reference situations and the decision each must produce."""

    def decide(self, vs) -> ActionVector:
        reply = decide_rule(vs, default_policy())
        assert reply.outcome == "ok"
        action = parse_action(reply.text)
        assert isinstance(action, ActionVector)
        return action

    def test_highway_slow_traffic_overtakes(self):
        vs = make_vs(
            map_label="highway",
            command="The traffic is too slow",
            detections=[make_detection(22.0, 0.3, "truck")],
        )
        action = self.decide(vs)
        assert action.behavior == "overtake"

    def test_highway_snow_caution(self):
        vs = make_vs(
            map_label="highway",
            command="Drive safely",
            frame_tag="cam_front|snow|t=5.00",
            detections=[make_detection(40.0, 0.0)],
        )
        action = self.decide(vs)
        assert action.behavior == "following"
        assert action.longitudinal[0] < 1.1  # softer throttle response
        assert action.lateral[2] > 2.0  # heavier steering penalty

    def test_intersection_urgency_speeds_up(self):
        vs = make_vs(
            map_label="intersection",
            behavior_ids=("yield", "following"),
            command="I need to catch a flight",
        )
        action = self.decide(vs)
        assert action.behavior == "following"
        assert action.longitudinal[0] > 1.1

    def test_intersection_snow_fog_caution(self):
        vs = make_vs(
            map_label="intersection",
            behavior_ids=("yield", "following"),
            command="Keep safe",
            frame_tag="cam_front|snow|t=5.00",
        )
        action = self.decide(vs)
        assert action.behavior == "following"
        assert action.longitudinal[0] < 1.1
        assert action.lateral[2] > 2.0

    def test_parking_crowded_raises_lateral_weight(self):
        vs = make_vs(
            map_label="parkinglot",
            behavior_ids=("yield", "following"),
            command="I'm in a hurry",
            detections=[make_detection(8.0, 2.6), make_detection(14.0, -2.6)],
        )
        action = self.decide(vs)
        assert action.behavior == "following"
        assert action.lateral[0] > 0.2

    def test_parking_free_relaxes_tracking_and_speeds_up(self):
        crowded = make_vs(
            map_label="parkinglot",
            behavior_ids=("yield", "following"),
            command="I'm in a hurry",
            detections=[make_detection(8.0, 2.6)],
        )
        free = make_vs(
            map_label="parkinglot",
            behavior_ids=("yield", "following"),
            command="Leave the parking lot quickly",
            detections=[make_detection(40.0, 2.6)],
        )
        tight = self.decide(crowded)
        loose = self.decide(free)
        assert loose.behavior == "following"
        assert loose.lateral[0] < tight.lateral[0]
        assert loose.longitudinal[0] > tight.longitudinal[0]

    def test_catch_all_follows_with_defaults(self):
        vs = make_vs(map_label="highway", command="none")
        action = self.decide(vs)
        assert action.behavior == "following"
        assert action.longitudinal == (1.1, 0.02, 0.01)
        assert action.lateral == (0.2, 0.35, 2.0)

    def test_rule_skipped_when_behavior_unavailable(self):
        vs = make_vs(
            map_label="highway",
            behavior_ids=("yield", "following"),  # no overtake on offer
            command="The traffic is too slow",
            detections=[make_detection(20.0, 0.0)],
        )
        action = self.decide(vs)
        assert action.behavior == "following"

    def test_determinism(self):
        vs = make_vs(command="Keep safe", frame_tag="cam_front|fog|t=1.00")
        a = decide_rule(vs, default_policy())
        b = decide_rule(vs, default_policy())
        assert a.text == b.text

    def test_policy_requires_catch_all(self):
        with pytest.raises(ValueError):
            RulePolicy(
                rules=(
                    Rule(
                        name="x", behavior="overtake",
                        lateral=(0.2, 0.35, 2.0), longitudinal=(1.1, 0.02, 0.01),
                        thought="t",
                    ),
                )
            )


class TestScripted:
    def test_first_step(self):
        assert decide_scripted(0, ["A", "B"]).text == "A"

    def test_holds_last_past_end(self):
        assert decide_scripted(5, ["A", "B"]).text == "B"

    def test_empty_script_rejected(self):
        with pytest.raises(ValueError):
            decide_scripted(0, [])

    def test_agent_uses_request_seq(self):
        agent = ScriptedAgent(["A", "B", "C"])
        vs = make_vs()
        assert agent.respond(request(seq=1), vs).text == "B"
        assert agent.respond(request(seq=9), vs).text == "C"

    def test_determinism(self):
        assert decide_scripted(3, ["A", "B"]) == decide_scripted(3, ["A", "B"])


class TestRemote:
    def config(self, endpoint, retries=0):
        return RemoteConfig(endpoint=endpoint, model="test-model", max_retries=retries)

    def test_echo_fixture(self, chat_server):
        server = chat_server(plan=["echo"], reply_text=GOOD_REPLY)
        reply = decide_remote(request(), self.config(server.endpoint))
        assert reply.outcome == "ok"
        assert reply.text == GOOD_REPLY
        assert reply.latency_wall > 0
        body = server.requests[0]
        assert body["model"] == "test-model"
        assert body["messages"][0]["content"] == "status"

    def test_timeout(self, chat_server):
        server = chat_server(plan=["sleep"], sleep_s=0.8)
        reply = decide_remote(request(deadline_ms=150.0), self.config(server.endpoint))
        assert reply.outcome == "timeout"
        assert reply.text == ""

    def test_unreachable_endpoint_after_retries(self):
        cfg = self.config("http://127.0.0.1:1/v1/chat/completions", retries=2)
        reply = decide_remote(request(deadline_ms=200.0), cfg)
        assert reply.outcome == "transport_error"

    def test_http_error_is_transport(self, chat_server):
        server = chat_server(plan=["error"])
        reply = decide_remote(request(), self.config(server.endpoint))
        assert reply.outcome == "transport_error"

    def test_malformed_body(self, chat_server):
        server = chat_server(plan=["malformed"])
        reply = decide_remote(request(), self.config(server.endpoint))
        assert reply.outcome == "malformed"

    def test_garbage_body(self, chat_server):
        server = chat_server(plan=["garbage"])
        reply = decide_remote(request(), self.config(server.endpoint))
        assert reply.outcome == "malformed"

    def test_retry_then_success(self, chat_server):
        server = chat_server(plan=["error", "echo"], reply_text=GOOD_REPLY)
        reply = decide_remote(request(), self.config(server.endpoint, retries=1))
        assert reply.outcome == "ok"
        assert len(server.requests) == 2

    def test_bearer_token_from_env(self, chat_server, monkeypatch):
        monkeypatch.setenv("DRIVEBENCH_API_TOKEN", "sekret")
        server = chat_server(plan=["echo"], reply_text=GOOD_REPLY)
        agent = RemoteAgent(self.config(server.endpoint))
        reply = agent.respond(request(), make_vs())
        assert reply.outcome == "ok"

    def test_unconfigured_endpoint_rejected(self):
        with pytest.raises(ValueError):
            decide_remote(request(), RemoteConfig(endpoint=""))


class TestAsyncDriver:
    class SlowAgent:
        name = "slow"

        def respond(self, req, vs):
            time.sleep(0.05)
            return AgentReply(text=GOOD_REPLY, latency_wall=50.0)

    def test_reply_applies_at_next_boundary(self):
        driver = AsyncAgentDriver(self.SlowAgent())
        vs = make_vs()
        assert driver.harvest() is None
        driver.submit(request(seq=0), vs)
        time.sleep(0.2)
        reply = driver.harvest()
        assert reply is not None and reply.outcome == "ok"
        driver.close()

    def test_unfinished_work_reports_timeout(self):
        class Stuck:
            name = "stuck"

            def respond(self, req, vs):
                time.sleep(1.0)
                return AgentReply(text=GOOD_REPLY, latency_wall=0.0)

        driver = AsyncAgentDriver(Stuck())
        driver.submit(request(), make_vs())
        reply = driver.harvest()
        assert reply.outcome == "timeout"
        driver.close()


class TestAgentContracts:
    def test_ok_reply_requires_text(self):
        with pytest.raises(ValueError):
            AgentReply(text="", latency_wall=0.0, outcome="ok")

    def test_request_needs_positive_deadline(self):
        with pytest.raises(ValueError):
            request(deadline_ms=0.0)

    def test_rule_agent_is_a_pure_function_of_inputs(self):
        agent = RuleAgent()
        vs = make_vs(command="The traffic is too slow",
                     detections=[make_detection(20.0, 0.0)])
        assert agent.respond(request(), vs).text == agent.respond(request(), vs).text
