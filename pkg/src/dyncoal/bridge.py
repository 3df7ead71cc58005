"""Lockstep line protocol that lets an external process drive the robots.

Every message is one JSON object per line::

    {"kind": ..., "episode": int, "t": int, "robot": int | null, "payload": ...}

Per episode the server sends ``reset``; then for each step one ``observe``
per robot (payload: base64 float32 planes, channels followed by the action
mask), reads one ``act`` per robot in robot order (payload ``{"cell": i}``,
a flat row-major index into the window), and sends ``reward``. The episode
ends with ``done``. A bad reply triggers ``error`` followed by ``done``
with ``valid: false``.
"""

from __future__ import annotations

import base64
import json
import os
import select
import socket
import time
from dataclasses import dataclass
from typing import Any, Callable, Iterable

import numpy as np

from .config import EnvConfig
from .episode import EpisodeResult, run_episode
from .observe import Observation
from .policies import Policy, PolicyDecision

PROTOCOL = "dyncoal-bridge/1"
KINDS = ("reset", "observe", "act", "reward", "done", "error")


class BridgeError(Exception):
    code = "BridgeError"


class IllegalAction(BridgeError):
    code = "IllegalAction"


class Timeout(BridgeError):
    code = "Timeout"


class Malformed(BridgeError):
    code = "Malformed"


@dataclass(frozen=True)
class BridgeMessage:
    kind: str
    episode: int
    t: int
    robot: int | None = None
    payload: Any = None

    def encode(self) -> bytes:
        return json.dumps({"kind": self.kind, "episode": self.episode, "t": self.t,
                           "robot": self.robot, "payload": self.payload},
                          sort_keys=True, separators=(",", ":")).encode() + b"\n"

    @classmethod
    def decode(cls, line: bytes | str) -> BridgeMessage:
        try:
            obj = json.loads(line)
        except (ValueError, UnicodeDecodeError) as exc:
            raise Malformed(f"not JSON: {exc}") from None
        if not isinstance(obj, dict) or set(obj) != {"kind", "episode", "t", "robot", "payload"}:
            raise Malformed(f"wrong fields: {line!r:.120}")
        if obj["kind"] not in KINDS:
            raise Malformed(f"unknown kind {obj['kind']!r}")
        for key in ("episode", "t"):
            if type(obj[key]) is not int:
                raise Malformed(f"{key} must be an integer")
        if obj["robot"] is not None and type(obj["robot"]) is not int:
            raise Malformed("robot must be an integer or null")
        return cls(obj["kind"], obj["episode"], obj["t"], obj["robot"], obj["payload"])


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float32)
    return {"shape": list(a.shape), "dtype": "float32",
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(payload: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(payload["data"], validate=True)
        return np.frombuffer(raw, dtype=np.float32).reshape(payload["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise Malformed(f"bad array payload: {exc}") from None


class Transport:
    """Newline-framed byte stream over a pair of file descriptors."""

    def __init__(self, rfd: int, wfd: int, closer: Callable[[], None] | None = None):
        self.rfd, self.wfd = rfd, wfd
        self._buf = bytearray()
        self._closer = closer

    def send(self, msg: BridgeMessage) -> None:
        data = memoryview(msg.encode())
        while data:
            n = os.write(self.wfd, data)
            data = data[n:]

    def recv(self, timeout: float | None = None) -> BridgeMessage:
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[:nl + 1]
                return BridgeMessage.decode(line)
            wait = None if deadline is None else max(0.0, deadline - time.monotonic())
            ready, _, _ = select.select([self.rfd], [], [], wait)
            if not ready:
                raise Timeout(f"no message within {timeout}s")
            chunk = os.read(self.rfd, 1 << 16)
            if not chunk:
                raise Malformed("peer closed the stream")
            self._buf += chunk

    def close(self) -> None:
        if self._closer is not None:
            self._closer()
            self._closer = None

    @classmethod
    def stdio(cls) -> Transport:
        return cls(0, 1)

    @classmethod
    def from_socket(cls, sock: socket.socket) -> Transport:
        return cls(sock.fileno(), sock.fileno(), sock.close)


def unix_listen(path: str, timeout: float | None = None) -> Transport:
    """Accept one client on a unix stream socket at ``path``."""
    if os.path.exists(path):
        os.unlink(path)
    srv = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    srv.bind(path)
    srv.listen(1)
    srv.settimeout(timeout)
    try:
        conn, _ = srv.accept()
    finally:
        srv.close()
    conn.settimeout(None)
    return Transport.from_socket(conn)


def unix_connect(path: str) -> Transport:
    sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    sock.connect(path)
    return Transport.from_socket(sock)


class BridgePolicy(Policy):
    """Team policy whose decisions come from the peer on ``transport``."""

    name = "bridge"

    def __init__(self, transport: Transport, timeout: float | None = 30.0):
        self.transport = transport
        self.timeout = timeout
        self.episode = 0
        self.seed = 0

    def reset(self, state, rng):
        super().reset(state, rng)
        cfg = state.config
        S = 2 * cfg.comm_range + 1
        self.transport.send(BridgeMessage("reset", self.episode, state.time, None, {
            "protocol": PROTOCOL, "seed": self.seed, "n_robots": len(state.robots),
            "shape": [cfg.n_channels + 1, S, S], "config": cfg.to_dict(),
        }))

    def act(self, state, obs):
        t = state.time
        for i in range(len(obs)):
            self.transport.send(BridgeMessage("observe", self.episode, t, i,
                                              encode_array(obs[i].to_array())))
        out = []
        for i, robot in enumerate(state.robots):
            msg = self.transport.recv(self.timeout)
            if msg.kind != "act" or msg.robot != i or msg.t != t or msg.episode != self.episode:
                raise Malformed(f"expected act for robot {i} at t={t}, got {msg.kind} "
                                f"robot={msg.robot} t={msg.t}")
            cell = msg.payload.get("cell") if isinstance(msg.payload, dict) else None
            if type(cell) is not int:
                raise Malformed("act payload must be {\"cell\": int}")
            o: Observation = obs[i]
            if not 0 <= cell < o.side * o.side or not o.mask.flat[cell]:
                raise IllegalAction(f"robot {i} chose cell {cell} outside its action mask")
            target = o.cell_of_index(cell)
            out.append(PolicyDecision(target, target != robot.assigned_target))
        return out

    def send_reward(self, t: int, reward: float) -> None:
        self.transport.send(BridgeMessage("reward", self.episode, t, None, reward))


class BridgeServer:
    """Runs episodes whose policy lives on the other end of ``transport``."""

    def __init__(self, transport: Transport, config: EnvConfig, timeout: float | None = 30.0):
        self.transport = transport
        self.config = config
        self.policy = BridgePolicy(transport, timeout)
        self.results: list[EpisodeResult] = []

    def run_episode(self, seed: int, episode: int, keep_trace: bool = False) -> EpisodeResult:
        self.policy.episode, self.policy.seed = episode, seed
        result = run_episode(self.config, self.policy, seed, episode, keep_trace=keep_trace,
                             on_step=lambda st, rec: self.policy.send_reward(rec.t, rec.reward))
        if not result.valid:
            code = result.error.split(":", 1)[0] if result.error else "BridgeError"
            if code not in (IllegalAction.code, Timeout.code, Malformed.code):
                code = "Malformed"
            self._try_send(BridgeMessage("error", episode, result.steps, None,
                                         {"error": code, "detail": result.error}))
        self._try_send(BridgeMessage("done", episode, result.steps, None,
                                     {"reward": result.reward, "valid": result.valid}))
        self.results.append(result)
        return result

    def _try_send(self, msg: BridgeMessage) -> None:
        try:
            self.transport.send(msg)
        except OSError:
            pass  # peer already gone; the result records the failure

    def serve(self, episodes: Iterable[tuple[int, int]], keep_trace: bool = False) -> int:
        """Run ``(seed, episode)`` pairs in order; exit status 1 if any was invalid."""
        for seed, ep in episodes:
            self.run_episode(seed, ep, keep_trace)
        return 0 if all(r.valid for r in self.results) else 1


def serve(transport: Transport, config: EnvConfig, episodes: Iterable[tuple[int, int]],
          timeout: float | None = 30.0, keep_trace: bool = False) -> int:
    return BridgeServer(transport, config, timeout).serve(episodes, keep_trace)


def first_legal_cell(planes: np.ndarray) -> int:
    """Client-side rule: the first mask-legal cell, row-major."""
    return int(np.argmax(planes[-1].ravel() > 0))


def run_client(transport: Transport, choose: Callable[[np.ndarray], int] = first_legal_cell,
               timeout: float | None = 30.0) -> list[dict]:
    """Minimal client loop; returns the ``done`` payloads. Stops when the
    server closes the stream."""
    pending: list[BridgeMessage] = []
    n_robots = 0
    finished = []
    while True:
        try:
            msg = transport.recv(timeout)
        except Malformed:
            return finished  # stream closed
        if msg.kind == "reset":
            n_robots = msg.payload["n_robots"]
            pending = []
        elif msg.kind == "observe":
            pending.append(msg)
            if len(pending) == n_robots:
                for m in pending:
                    cell = choose(decode_array(m.payload))
                    transport.send(BridgeMessage("act", m.episode, m.t, m.robot, {"cell": cell}))
                pending = []
        elif msg.kind == "done":
            finished.append(msg.payload)
