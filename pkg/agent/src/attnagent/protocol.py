"""Client for the environment's length-prefixed message protocol.

Frames are a 4-byte big-endian length followed by the payload: UTF-8
JSON for messages, raw little-endian float32 for binary observation
frames (negotiated at hello).  The client can connect over TCP or spawn
the environment server as a subprocess speaking the same protocol on
stdio, and can record a full session transcript for deterministic
replay.
"""

from __future__ import annotations

import json
import socket
import struct
import subprocess
from dataclasses import dataclass, field
from typing import BinaryIO, Optional

import numpy as np

_HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 64 * 1024 * 1024


class EnvProtocolError(RuntimeError):
    pass


def write_frame(stream: BinaryIO, payload: bytes) -> None:
    stream.write(_HEADER.pack(len(payload)))
    stream.write(payload)
    stream.flush()


def read_frame(stream: BinaryIO) -> bytes:
    header = stream.read(_HEADER.size)
    if len(header) < _HEADER.size:
        raise EnvProtocolError("connection closed")
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise EnvProtocolError(f"oversized frame: {length}")
    payload = b""
    while len(payload) < length:
        chunk = stream.read(length - len(payload))
        if not chunk:
            raise EnvProtocolError("connection closed mid-frame")
        payload += chunk
    return payload


@dataclass
class Outcome:
    observation: np.ndarray
    reward: dict
    fills: list
    info: dict
    done: bool
    truncated: bool


@dataclass
class Transcript:
    """Recorded (request, response, observation bytes) triples."""

    entries: list = field(default_factory=list)

    def record(self, request: bytes, response: bytes, obs_frame: Optional[bytes]) -> None:
        self.entries.append((request, response, obs_frame))


class EnvClient:
    """One protocol session; drives hello/configure/reset/step/bye."""

    def __init__(self, rx: BinaryIO, tx: BinaryIO, binary: bool = True,
                 record: bool = False, _closer=None):
        self._rx = rx
        self._tx = tx
        self.binary = binary
        self.layout: Optional[dict] = None
        self.transcript = Transcript() if record else None
        self._closer = _closer
        self.errors = 0

    # -- constructors --------------------------------------------------------

    @classmethod
    def connect_tcp(cls, host: str, port: int, binary: bool = True,
                    record: bool = False) -> "EnvClient":
        sock = socket.create_connection((host, port))
        return cls(sock.makefile("rb"), sock.makefile("wb"), binary=binary,
                   record=record, _closer=sock.close)

    @classmethod
    def spawn_stdio(cls, argv: list[str], binary: bool = True,
                    record: bool = False) -> "EnvClient":
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        return cls(proc.stdout, proc.stdin, binary=binary, record=record,
                   _closer=lambda: (proc.stdin.close(), proc.wait(timeout=10)))

    def close(self) -> None:
        if self._closer is not None:
            try:
                self._closer()
            except Exception:
                pass
            self._closer = None

    # -- request/response ---------------------------------------------------

    def request(self, msg: dict) -> dict:
        raw = json.dumps(msg).encode("utf-8")
        write_frame(self._tx, raw)
        payload = read_frame(self._rx)
        response = json.loads(payload.decode("utf-8"))
        obs_frame = None
        if response.get("observation_frame"):
            obs_frame = read_frame(self._rx)
        if self.transcript is not None:
            self.transcript.record(raw, payload, obs_frame)
        if response.get("type") == "error":
            self.errors += 1
            raise EnvProtocolError(f"{response.get('code')}: {response.get('message')}")
        response["_obs_frame"] = obs_frame
        return response

    def hello(self) -> dict:
        return self.request({"type": "hello", "version": 1, "binary": self.binary})

    def configure(self, action_space: str = "discrete", observation: Optional[dict] = None,
                  episode: Optional[dict] = None, data: Optional[dict] = None) -> dict:
        msg = {"type": "configure", "action_space": action_space}
        if observation is not None:
            msg["observation"] = observation
        if episode is not None:
            msg["episode"] = episode
        if data is not None:
            msg["data"] = data
        resp = self.request(msg)
        self.layout = resp["layout"]
        return resp

    def _to_outcome(self, resp: dict) -> Outcome:
        if resp.get("observation_frame"):
            obs = np.frombuffer(resp["_obs_frame"], dtype="<f4").copy()
        else:
            obs = np.asarray(resp["observation"], dtype=np.float32)
        if self.layout is not None and obs.shape[0] != self.layout["total"]:
            raise EnvProtocolError(
                f"observation length {obs.shape[0]} != layout total {self.layout['total']}"
            )
        return Outcome(
            observation=obs,
            reward=resp["reward"],
            fills=resp["fills"],
            info=resp["info"],
            done=resp["done"],
            truncated=resp.get("truncated", False),
        )

    def reset(self) -> Outcome:
        return self._to_outcome(self.request({"type": "reset"}))

    def step(self, action) -> Outcome:
        if isinstance(action, np.ndarray):
            action = [float(v) for v in action]
        elif isinstance(action, (np.integer,)):
            action = int(action)
        return self._to_outcome(self.request({"type": "step", "action": action}))

    def bye(self) -> None:
        try:
            self.request({"type": "bye"})
        finally:
            self.close()


def replay_transcript(transcript: Transcript, fresh: EnvClient) -> bool:
    """Send the recorded requests to a fresh session; True iff every
    response (and observation frame) is byte-identical."""
    for raw_request, expected, expected_obs in transcript.entries:
        write_frame(fresh._tx, raw_request)
        payload = read_frame(fresh._rx)
        response = json.loads(payload.decode("utf-8"))
        obs_frame = read_frame(fresh._rx) if response.get("observation_frame") else None
        if payload != expected or obs_frame != expected_obs:
            return False
    return True
