"""Environment protocol server.

Serves the simulator as an episodic environment over length-prefixed
messages: a 4-byte big-endian length followed by a UTF-8 JSON payload.
When the client negotiates binary observations at hello, each outcome
message is immediately followed by one extra frame holding the raw
observation as little-endian float32.  See docs/protocol.md for the
message-by-message contract.

One session owns one simulator; sessions never share mutable state.
"""

from __future__ import annotations

import json
import logging
import socket
import struct
import sys
import threading
from dataclasses import dataclass, replace
from typing import BinaryIO, Optional, Sequence

import numpy as np

from .actions import ContinuousAction, DiscreteAction
from .book import MarketEvent
from .errors import EpisodeFinished, LobmmError, ProtocolError, StreamExhausted
from .features import AGENT_STATE_SIZE, DYNAMIC_STATE_SIZE
from .ingest import SyntheticMarketConfig, generate_synthetic
from .sim import EpisodeConfig, ExchangeSimulator, StepOutcome

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024
_HEADER = struct.Struct(">I")

OBSERVATION_GROUPS = ("lob_window", "dynamic_state", "agent_state")


def write_frame(stream: BinaryIO, payload: bytes) -> None:
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds limit")
    stream.write(_HEADER.pack(len(payload)))
    stream.write(payload)
    stream.flush()


def read_frame(stream: BinaryIO) -> Optional[bytes]:
    header = stream.read(_HEADER.size)
    if not header:
        return None
    if len(header) < _HEADER.size:
        raise ProtocolError("truncated frame header")
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"declared frame of {length} bytes exceeds limit")
    payload = b""
    while len(payload) < length:
        chunk = stream.read(length - len(payload))
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        payload += chunk
    return payload


@dataclass(frozen=True)
class ObservationToggles:
    lob_window: bool = True
    dynamic_state: bool = True
    agent_state: bool = True

    def __post_init__(self):
        if not (self.lob_window or self.dynamic_state or self.agent_state):
            raise ProtocolError("at least one observation group must be enabled")


def observation_layout(toggles: ObservationToggles, T: int, width: int) -> dict:
    groups = []
    if toggles.lob_window:
        groups.append({"name": "lob_window", "shape": [T, width], "length": T * width})
    if toggles.dynamic_state:
        groups.append({"name": "dynamic_state", "shape": [DYNAMIC_STATE_SIZE], "length": DYNAMIC_STATE_SIZE})
    if toggles.agent_state:
        groups.append({"name": "agent_state", "shape": [AGENT_STATE_SIZE], "length": AGENT_STATE_SIZE})
    return {"groups": groups, "total": sum(g["length"] for g in groups)}


def encode_observation(out: StepOutcome, toggles: ObservationToggles) -> np.ndarray:
    """Concatenate enabled groups in fixed order as float32."""
    parts = []
    if toggles.lob_window:
        parts.append(out.window_array(np.float32).reshape(-1))
    if toggles.dynamic_state:
        parts.append(np.asarray(out.dynamic.vector(), dtype=np.float32))
    if toggles.agent_state:
        parts.append(np.asarray(out.agent.vector(), dtype=np.float32))
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


@dataclass(frozen=True)
class DataConfig:
    """Where a session's event stream comes from."""

    kind: str = "synthetic"  # "synthetic" | "file"
    synthetic: Optional[SyntheticMarketConfig] = None
    events: Optional[Sequence[MarketEvent]] = None  # for kind == "file"
    tick: float = 0.01

    def build_events(self, seed_override: Optional[int], count_override: Optional[int]) -> Sequence[MarketEvent]:
        if self.kind == "file":
            if self.events is None:
                raise ProtocolError("server has no event file loaded")
            return self.events
        cfg = self.synthetic or SyntheticMarketConfig(seed=0)
        if seed_override is not None:
            cfg = replace(cfg, seed=seed_override)
        if count_override is not None:
            cfg = replace(cfg, event_count=count_override)
        return generate_synthetic(cfg)


_EPISODE_KEYS = (
    "events_per_episode", "omega", "window", "latency", "eta", "zeta",
    "trade_unit", "levels", "max_bias", "max_spread", "fee_ticks",
)


class SessionHandler:
    """Drives one client connection; single-threaded request/response."""

    def __init__(self, data: DataConfig, default_episode: EpisodeConfig,
                 default_toggles: Optional[ObservationToggles] = None):
        self.data = data
        self.default_episode = default_episode
        self.default_toggles = default_toggles or ObservationToggles()
        self.binary = False
        self.greeted = False
        self.sim: Optional[ExchangeSimulator] = None
        self.toggles = self.default_toggles
        self.action_space = "discrete"
        self._pending_obs: Optional[np.ndarray] = None

    # -- message handlers ---------------------------------------------------

    def handle(self, msg: dict) -> dict:
        """Return the response message; may stash a binary observation frame."""
        self._pending_obs = None
        mtype = msg.get("type")
        if mtype == "hello":
            return self._on_hello(msg)
        if not self.greeted:
            return _error("NotGreeted", "hello required first")
        if mtype == "configure":
            return self._on_configure(msg)
        if mtype == "reset":
            return self._on_reset()
        if mtype == "step":
            return self._on_step(msg)
        if mtype == "bye":
            return {"type": "bye_ack"}
        return _error("UnknownType", f"unknown message type {mtype!r}")

    def _on_hello(self, msg: dict) -> dict:
        version = msg.get("version", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            return _error("BadVersion", f"server speaks version {PROTOCOL_VERSION}")
        self.binary = bool(msg.get("binary", False))
        self.greeted = True
        return {"type": "hello_ack", "version": PROTOCOL_VERSION, "binary": self.binary}

    def _on_configure(self, msg: dict) -> dict:
        obs = msg.get("observation", {})
        defaults = self.default_toggles
        try:
            toggles = ObservationToggles(
                lob_window=bool(obs.get("lob_window", defaults.lob_window)),
                dynamic_state=bool(obs.get("dynamic_state", defaults.dynamic_state)),
                agent_state=bool(obs.get("agent_state", defaults.agent_state)),
            )
        except ProtocolError as exc:
            return _error("BadConfig", str(exc))
        action_space = msg.get("action_space", "discrete")
        if action_space not in ("discrete", "continuous"):
            return _error("BadConfig", f"unknown action space {action_space!r}")
        ep = {k: v for k, v in msg.get("episode", {}).items() if k in _EPISODE_KEYS}
        data_msg = msg.get("data", {})
        try:
            cfg = replace(self.default_episode, action_space=action_space, **ep)
            events = self.data.build_events(
                seed_override=data_msg.get("seed"),
                count_override=data_msg.get("event_count"),
            )
            self.sim = ExchangeSimulator(events, cfg)
        except (LobmmError, ValueError, TypeError) as exc:
            self.sim = None
            return _error("BadConfig", str(exc))
        self.toggles = toggles
        self.action_space = action_space
        width = 4 * cfg.levels
        return {
            "type": "configured",
            "protocol": PROTOCOL_VERSION,
            "layout": observation_layout(toggles, cfg.window, width),
            "episode": {k: getattr(cfg, k) for k in _EPISODE_KEYS},
            "action_space": action_space,
        }

    def _on_reset(self) -> dict:
        if self.sim is None:
            return _error("NotConfigured", "configure required before reset")
        try:
            out = self.sim.reset()
        except StreamExhausted as exc:
            return _error("StreamExhausted", str(exc))
        return self._outcome_msg(out)

    def _on_step(self, msg: dict) -> dict:
        if self.sim is None:
            return _error("NotConfigured", "configure required before step")
        try:
            action = self._decode_action(msg.get("action"))
        except ProtocolError as exc:
            return _error("BadAction", str(exc))
        try:
            out = self.sim.step(action)
        except EpisodeFinished:
            return _error("NotReset", "episode finished or not started; reset first")
        return self._outcome_msg(out)

    def _decode_action(self, raw) -> DiscreteAction | ContinuousAction:
        if self.action_space == "discrete":
            if not isinstance(raw, int) or isinstance(raw, bool):
                raise ProtocolError(f"discrete action must be an integer, got {raw!r}")
            if not 0 <= raw <= 7:
                raise ProtocolError(f"discrete action out of range: {raw}")
            return DiscreteAction(raw)
        if (
            not isinstance(raw, (list, tuple))
            or len(raw) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw)
        ):
            raise ProtocolError(f"continuous action must be [a1, a2], got {raw!r}")
        return ContinuousAction(float(raw[0]), float(raw[1])).clipped()

    def _outcome_msg(self, out: StepOutcome) -> dict:
        obs = encode_observation(out, self.toggles)
        msg = {
            "type": "outcome",
            "done": out.done,
            "truncated": out.truncated,
            "reward": out.reward.to_dict(),
            "fills": [[f.price, f.volume, f.kind] for f in out.fills],
            "info": out.info,
        }
        if self.binary:
            msg["observation_frame"] = True
            self._pending_obs = obs
        else:
            msg["observation"] = [float(v) for v in obs]
        return msg

    def take_observation_frame(self) -> Optional[bytes]:
        if self._pending_obs is None:
            return None
        payload = self._pending_obs.astype("<f4", copy=False).tobytes()
        self._pending_obs = None
        return payload


def _error(code: str, message: str) -> dict:
    return {"type": "error", "code": code, "message": message}


def session_loop(rx: BinaryIO, tx: BinaryIO, data: DataConfig, episode: EpisodeConfig,
                 default_toggles: Optional[ObservationToggles] = None) -> None:
    """Serve one session until bye/EOF.  Malformed input never propagates."""
    handler = SessionHandler(data, episode, default_toggles)
    while True:
        try:
            payload = read_frame(rx)
        except ProtocolError as exc:
            log.warning("session framing error: %s", exc)
            return
        if payload is None:
            return
        try:
            msg = json.loads(payload.decode("utf-8"))
            if not isinstance(msg, dict):
                raise ValueError("message must be a JSON object")
        except (ValueError, UnicodeDecodeError) as exc:
            write_frame(tx, json.dumps(_error("BadMessage", str(exc))).encode("utf-8"))
            continue
        try:
            response = handler.handle(msg)
        except Exception as exc:  # never crash the server on one session
            log.exception("internal error handling %r", msg.get("type"))
            response = _error("Internal", str(exc))
        write_frame(tx, json.dumps(response).encode("utf-8"))
        frame = handler.take_observation_frame()
        if frame is not None:
            write_frame(tx, frame)
        if response.get("type") == "bye_ack":
            return


class EnvServer:
    """TCP acceptor dispatching sessions to a bounded pool of threads."""

    def __init__(
        self,
        host: str,
        port: int,
        data: DataConfig,
        episode: EpisodeConfig = EpisodeConfig(),
        max_sessions: int = 8,
        default_toggles: Optional[ObservationToggles] = None,
    ):
        self.data = data
        self.episode = episode
        self.default_toggles = default_toggles
        self._sem = threading.Semaphore(max_sessions)
        self._sock = socket.create_server((host, port))
        self._sock.settimeout(0.2)
        self.address = self._sock.getsockname()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def serve_forever(self) -> None:
        try:
            while not self._stop.is_set():
                try:
                    conn, _ = self._sock.accept()
                except socket.timeout:
                    continue
                self._sem.acquire()
                t = threading.Thread(target=self._run_session, args=(conn,), daemon=True)
                self._threads.append(t)
                t.start()
        finally:
            self._sock.close()

    def _run_session(self, conn: socket.socket) -> None:
        try:
            with conn:
                rx = conn.makefile("rb")
                tx = conn.makefile("wb")
                session_loop(rx, tx, self.data, self.episode, self.default_toggles)
        except Exception:
            log.exception("session crashed")
        finally:
            self._sem.release()

    def shutdown(self) -> None:
        self._stop.set()


def serve(
    host: str,
    port: int,
    data: DataConfig,
    episode: EpisodeConfig = EpisodeConfig(),
    max_sessions: int = 8,
    default_toggles: Optional[ObservationToggles] = None,
) -> None:
    server = EnvServer(host, port, data, episode, max_sessions, default_toggles)
    log.info("serving on %s:%d", *server.address[:2])
    server.serve_forever()


def serve_stdio(data: DataConfig, episode: EpisodeConfig = EpisodeConfig(),
                default_toggles: Optional[ObservationToggles] = None) -> None:
    """Single session over stdin/stdout, for subprocess embedding."""
    session_loop(sys.stdin.buffer, sys.stdout.buffer, data, episode, default_toggles)
