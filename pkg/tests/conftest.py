from __future__ import annotations

import http.server
import json
import threading
import time
from pathlib import Path

import pytest

from drivebench.autonomy.perception import Detection, DetectionSet, VehicleState
from drivebench.autonomy.trajectory import BehaviorOption, BehaviorSet, Trajectory
from drivebench.midlayer import DrivingStateVector, HumanCommand, PerceptionFeed

FIXTURES = Path(__file__).parent / "fixtures"


def make_trajectory(behavior_id: str, v_ref: float = 10.0, length: float = 100.0):
    spacing = 2.0
    n = int(length / spacing) + 1
    return Trajectory.from_waypoints(
        behavior_id, [(i * spacing, 0.0, v_ref) for i in range(n)]
    )


def make_behavior_set(ids=("following",), unsafe=(), v_ref: float = 10.0) -> BehaviorSet:
    options = tuple(
        BehaviorOption(make_trajectory(bid, v_ref), safe=bid not in unsafe)
        for bid in ids
    )
    return BehaviorSet(options=options)


def make_vs(
    *,
    map_label: str = "highway",
    command: str = "none",
    frame_tag: str = "cam_front|clear|t=0.00",
    behavior_ids=("overtake", "yield", "following"),
    detections=(),
    x: float = 130.0,
    y: float = 46.0,
    psi: float = 0.97,
    v_kmh: float = 50.0,
    t: float = 0.0,
) -> DrivingStateVector:
    det_set = DetectionSet(items=tuple(detections), t_virtual=t, frame_tag=frame_tag)
    feed = PerceptionFeed(
        detections=det_set,
        frame_tag=frame_tag,
        summary=tuple(
            f"{d.cls} at {(d.box[0] ** 2 + d.box[1] ** 2) ** 0.5:.1f} m, "
            f"confidence {d.confidence:.2f}"
            for d in detections
        ),
    )
    return DrivingStateVector(
        perception=feed,
        behaviors=make_behavior_set(behavior_ids),
        vehicle=VehicleState(x=x, y=y, psi=psi, v=v_kmh / 3.6, m=map_label),
        command=HumanCommand(text=command, t_virtual=t, latched=False),
        t_virtual=t,
        part_seqs=(1, 2, 3, 4),
    )


def make_detection(cx: float, cy: float, cls: str = "car", confidence: float = 0.9):
    return Detection(box=(cx, cy, 4.5, 4.5), cls=cls, confidence=confidence)


class _ChatHandler(http.server.BaseHTTPRequestHandler):
    """Chat-completions stub; per-request behavior comes from server.plan."""

    def do_POST(self):  # noqa: N802 (stdlib naming)
        server = self.server
        index = server.request_index
        server.request_index += 1
        mode = server.plan[min(index, len(server.plan) - 1)]
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        server.requests.append(body)

        if mode == "sleep":
            time.sleep(server.sleep_s)
            mode = "echo"
        if mode == "error":
            self.send_response(500)
            self.end_headers()
            return
        if mode == "garbage":
            payload = b"not json at all"
        elif mode == "malformed":
            payload = json.dumps({"unexpected": "shape"}).encode()
        else:  # echo
            payload = json.dumps(
                {"choices": [{"message": {"role": "assistant", "content": server.reply_text}}]}
            ).encode()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
        except (BrokenPipeError, ConnectionResetError):
            pass  # client gave up (timeout test); nothing to answer

    def log_message(self, *args):  # silence request logging in tests
        pass

    def handle(self):
        try:
            super().handle()
        except (BrokenPipeError, ConnectionResetError):
            pass


class MockChatServer:
    def __init__(self, plan=("echo",), reply_text="", sleep_s=1.0):
        self.server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
        self.server.plan = list(plan)
        self.server.reply_text = reply_text
        self.server.sleep_s = sleep_s
        self.server.request_index = 0
        self.server.requests = []
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    @property
    def requests(self):
        return self.server.requests

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def chat_server():
    servers = []

    def factory(**kwargs) -> MockChatServer:
        server = MockChatServer(**kwargs)
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.close()
