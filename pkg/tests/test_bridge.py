import io
import json
import socket
import struct
import threading

import numpy as np
import pytest

from lobmm.bridge import (
    DataConfig,
    EnvServer,
    ObservationToggles,
    PROTOCOL_VERSION,
    SessionHandler,
    encode_observation,
    read_frame,
    session_loop,
    write_frame,
)
from lobmm.errors import ProtocolError
from lobmm.ingest import SyntheticMarketConfig
from lobmm.sim import EpisodeConfig


def make_data(seed=0, count=6000):
    return DataConfig(kind="synthetic", synthetic=SyntheticMarketConfig(seed=seed, event_count=count))


def episode_cfg(**kw):
    kw.setdefault("events_per_episode", 300)
    kw.setdefault("window", 50)
    return EpisodeConfig(**kw)


def make_handler(**kw):
    return SessionHandler(make_data(), episode_cfg(**kw))


def hello(handler, binary=False):
    return handler.handle({"type": "hello", "version": 1, "binary": binary})


def configure(handler, **overrides):
    msg = {"type": "configure", "episode": {"events_per_episode": 300}, "data": {"seed": 1}}
    msg.update(overrides)
    return handler.handle(msg)


# ---------------------------------------------------------------------------
# framing
# ---------------------------------------------------------------------------


def test_frame_roundtrip():
    buf = io.BytesIO()
    write_frame(buf, b"hello world")
    buf.seek(0)
    assert read_frame(buf) == b"hello world"
    assert read_frame(buf) is None  # EOF


def test_frame_header_is_big_endian_length():
    buf = io.BytesIO()
    write_frame(buf, b"abc")
    raw = buf.getvalue()
    assert raw[:4] == struct.pack(">I", 3)


def test_frame_truncation_raises():
    buf = io.BytesIO(struct.pack(">I", 10) + b"abc")
    with pytest.raises(ProtocolError):
        read_frame(buf)


def test_frame_oversize_rejected():
    buf = io.BytesIO(struct.pack(">I", 1 << 31))
    with pytest.raises(ProtocolError):
        read_frame(buf)


# ---------------------------------------------------------------------------
# session state machine
# ---------------------------------------------------------------------------


def test_hello_ack_carries_version():
    h = make_handler()
    resp = hello(h)
    assert resp == {"type": "hello_ack", "version": PROTOCOL_VERSION, "binary": False}


def test_messages_before_hello_rejected():
    h = make_handler()
    resp = h.handle({"type": "reset"})
    assert resp["type"] == "error" and resp["code"] == "NotGreeted"


def test_step_before_reset_keeps_session_alive():
    h = make_handler()
    hello(h)
    configure(h)
    resp = h.handle({"type": "step", "action": 0})
    assert resp["type"] == "error" and resp["code"] == "NotReset"
    # session still functional
    assert h.handle({"type": "reset"})["type"] == "outcome"


def test_reset_before_configure_rejected():
    h = make_handler()
    hello(h)
    resp = h.handle({"type": "reset"})
    assert resp["code"] == "NotConfigured"


def test_unknown_type_is_error_not_crash():
    h = make_handler()
    hello(h)
    resp = h.handle({"type": "frobnicate"})
    assert resp["type"] == "error" and resp["code"] == "UnknownType"


def test_unknown_fields_ignored():
    h = make_handler()
    resp = h.handle({"type": "hello", "version": 1, "future_extension": {"x": 1}})
    assert resp["type"] == "hello_ack"


def test_full_discrete_episode_over_handler():
    h = make_handler()
    hello(h)
    cfg_resp = configure(h)
    assert cfg_resp["type"] == "configured"
    assert cfg_resp["layout"]["total"] == 50 * 40 + 24 + 2
    out = h.handle({"type": "reset"})
    assert out["type"] == "outcome" and out["done"] is False
    assert len(out["observation"]) == 2026
    steps = 0
    while not out["done"]:
        out = h.handle({"type": "step", "action": steps % 7})
        assert out["type"] == "outcome"
        steps += 1
    assert steps == 300
    assert out["info"]["inventory"] == 0


def test_bad_action_reported():
    h = make_handler()
    hello(h)
    configure(h)
    h.handle({"type": "reset"})
    assert h.handle({"type": "step", "action": "zero"})["code"] == "BadAction"
    assert h.handle({"type": "step", "action": 9})["code"] == "BadAction"
    assert h.handle({"type": "step", "action": True})["code"] == "BadAction"


def test_continuous_action_space():
    h = make_handler()
    hello(h)
    resp = configure(h, action_space="continuous")
    assert resp["action_space"] == "continuous"
    h.handle({"type": "reset"})
    out = h.handle({"type": "step", "action": [0.3, 0.9]})
    assert out["type"] == "outcome"
    assert h.handle({"type": "step", "action": 3})["code"] == "BadAction"


def test_ablation_toggles_shrink_observation():
    h = make_handler()
    hello(h)
    resp = configure(h, observation={"lob_window": False})
    assert resp["layout"]["total"] == 26
    out = h.handle({"type": "reset"})
    assert len(out["observation"]) == 26
    resp = configure(h, observation={"lob_window": False, "dynamic_state": False})
    assert resp["layout"]["total"] == 2
    bad = configure(
        h, observation={"lob_window": False, "dynamic_state": False, "agent_state": False}
    )
    assert bad["code"] == "BadConfig"


def test_stream_exhausted_reported():
    # 380 events: one warmup+episode fits (350), a second reset cannot
    h = SessionHandler(make_data(count=380), episode_cfg())
    hello(h)
    configure(h)
    assert h.handle({"type": "reset"})["type"] == "outcome"
    resp = h.handle({"type": "reset"})
    assert resp["code"] == "StreamExhausted"


# ---------------------------------------------------------------------------
# observation codec
# ---------------------------------------------------------------------------


def decode_observation(vector, layout):
    parts = {}
    ofs = 0
    for g in layout["groups"]:
        n = g["length"]
        arr = np.asarray(vector[ofs : ofs + n], dtype=np.float32)
        parts[g["name"]] = arr.reshape(g["shape"])
        ofs += n
    assert ofs == layout["total"]
    return parts


def test_observation_codec_roundtrip():
    h = make_handler()
    hello(h)
    resp = configure(h)
    layout = resp["layout"]
    out = h.handle({"type": "reset"})
    parts = decode_observation(out["observation"], layout)
    sim = h.sim
    entry = sim._entries[0]
    assert np.array_equal(
        parts["lob_window"], np.asarray(entry.rows, dtype=np.float32)
    )
    assert np.allclose(parts["dynamic_state"], np.asarray(entry.dynamic.vector(), dtype=np.float32))


def test_encode_observation_group_order():
    from lobmm.rewards import ZERO_BREAKDOWN

    h = make_handler()
    hello(h)
    configure(h)
    h.handle({"type": "reset"})
    out = h.sim._outcome(ZERO_BREAKDOWN, (), False)
    vec = encode_observation(out, ObservationToggles())
    assert vec.dtype == np.float32
    assert vec.shape == (2026,)
    assert np.array_equal(vec[:2000].reshape(50, 40), out.window_array(np.float32))
    assert np.allclose(vec[2000:2024], np.asarray(out.dynamic.vector(), dtype=np.float32))
    assert np.allclose(vec[2024:], np.asarray(out.agent.vector(), dtype=np.float32))


# ---------------------------------------------------------------------------
# session loop over byte streams (stdio-style)
# ---------------------------------------------------------------------------


def run_session_bytes(messages, data=None, episode=None, raw_frames=None):
    rx = io.BytesIO()
    for m in messages if raw_frames is None else []:
        write_frame(rx, json.dumps(m).encode())
    if raw_frames is not None:
        for fr in raw_frames:
            write_frame(rx, fr)
    rx.seek(0)
    tx = io.BytesIO()
    session_loop(rx, tx, data or make_data(), episode or episode_cfg())
    tx.seek(0)
    out = []
    while True:
        payload = read_frame(tx)
        if payload is None:
            return out
        out.append(payload)


def test_session_loop_responds_once_per_request():
    msgs = [
        {"type": "hello", "version": 1},
        {"type": "configure"},
        {"type": "reset"},
        {"type": "step", "action": 0},
        {"type": "bye"},
    ]
    frames = run_session_bytes(msgs)
    decoded = [json.loads(f) for f in frames]
    assert [d["type"] for d in decoded] == [
        "hello_ack", "configured", "outcome", "outcome", "bye_ack",
    ]


def test_session_loop_malformed_json_is_error_and_continues():
    raw = [
        json.dumps({"type": "hello", "version": 1}).encode(),
        b"this is not json",
        json.dumps({"type": "bye"}).encode(),
    ]
    frames = run_session_bytes(None, raw_frames=raw)
    decoded = [json.loads(f) for f in frames]
    assert decoded[0]["type"] == "hello_ack"
    assert decoded[1]["type"] == "error" and decoded[1]["code"] == "BadMessage"
    assert decoded[2]["type"] == "bye_ack"


def test_binary_mode_emits_observation_frames():
    msgs = [
        {"type": "hello", "version": 1, "binary": True},
        {"type": "configure"},
        {"type": "reset"},
        {"type": "bye"},
    ]
    frames = run_session_bytes(msgs)
    ack = json.loads(frames[0])
    assert ack["binary"] is True
    configured = json.loads(frames[1])
    outcome = json.loads(frames[2])
    assert outcome["observation_frame"] is True and "observation" not in outcome
    obs = np.frombuffer(frames[3], dtype="<f4")
    assert obs.shape == (configured["layout"]["total"],)
    assert json.loads(frames[4])["type"] == "bye_ack"


# ---------------------------------------------------------------------------
# TCP server
# ---------------------------------------------------------------------------


class TcpClient:
    def __init__(self, address):
        self.sock = socket.create_connection(address)
        self.rx = self.sock.makefile("rb")
        self.tx = self.sock.makefile("wb")

    def send(self, msg):
        write_frame(self.tx, json.dumps(msg).encode())

    def recv_json(self):
        return json.loads(read_frame(self.rx))

    def rpc(self, msg):
        self.send(msg)
        return self.recv_json()

    def close(self):
        self.sock.close()


@pytest.fixture
def server():
    srv = EnvServer("127.0.0.1", 0, make_data(), episode_cfg())
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield srv
    srv.shutdown()


def test_two_concurrent_sessions_are_independent(server):
    c1 = TcpClient(server.address)
    c2 = TcpClient(server.address)
    for c, seed in ((c1, 100), (c2, 200)):
        assert c.rpc({"type": "hello", "version": 1})["type"] == "hello_ack"
        assert c.rpc({"type": "configure", "data": {"seed": seed}})["type"] == "configured"
    o1 = c1.rpc({"type": "reset"})
    o2 = c2.rpc({"type": "reset"})
    assert o1["observation"] != o2["observation"]  # different synthetic streams
    s1 = c1.rpc({"type": "step", "action": 0})
    s2 = c2.rpc({"type": "step", "action": 0})
    assert s1["info"]["seq"] != s2["info"]["seq"] or s1["observation"] != s2["observation"]
    c1.rpc({"type": "bye"})
    c2.rpc({"type": "bye"})
    c1.close()
    c2.close()


def test_protocol_determinism_replay(server):
    def transcript(seed):
        c = TcpClient(server.address)
        msgs = [
            {"type": "hello", "version": 1},
            {"type": "configure", "data": {"seed": seed}},
            {"type": "reset"},
            *({"type": "step", "action": i % 8} for i in range(40)),
            {"type": "bye"},
        ]
        out = [c.rpc(m) for m in msgs]
        c.close()
        return out

    assert transcript(31) == transcript(31)
    assert transcript(31) != transcript(32)


def test_server_side_default_ablation():
    h = SessionHandler(
        make_data(), episode_cfg(),
        default_toggles=ObservationToggles(lob_window=False),
    )
    hello(h)
    resp = h.handle({"type": "configure", "data": {"seed": 1}})
    assert resp["layout"]["total"] == 26  # server default drops the window
    # explicit client choice still wins
    resp = h.handle(
        {"type": "configure", "observation": {"lob_window": True}, "data": {"seed": 1}}
    )
    assert resp["layout"]["total"] == 2026
