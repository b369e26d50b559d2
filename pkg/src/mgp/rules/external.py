"""Client for external predictive services speaking the newline-delimited
JSON protocol: the server is stateless, so the client resends the full
growing context with every one-step-ahead request."""

import json
import socket

import numpy as np

from .base import (BinnedContinuous, Categorical, RuleError, RuleState,
                   sample_distribution)

PROTOCOL_VERSION = 1
WIRE_PROB_TOL = 1e-6

CLASSIFICATION = "classification"
REGRESSION = "regression"


class TransportError(RuleError):
    pass


class ProtocolError(RuleError):
    pass


class PredictiveServiceClient:
    """One TCP connection to a predictive service; not shared across owners."""

    def __init__(self, host, port, timeout=60.0):
        self.host = host
        self.port = int(port)
        try:
            self._sock = socket.create_connection((host, self.port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._rfile = self._sock.makefile("rb")
        self._next_id = 1
        hello = self._read_object()
        if hello.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported handshake {hello!r}")
        self.max_context = int(hello["max_context"])

    def close(self):
        try:
            self._rfile.close()
            self._sock.close()
        except OSError:
            pass

    def _read_object(self):
        try:
            line = self._rfile.readline()
        except OSError as exc:
            raise TransportError(f"read failed: {exc}") from exc
        if not line:
            raise TransportError("connection closed by server")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"bad JSON from server: {line[:200]!r}") from exc

    def _send(self, obj):
        try:
            self._sock.sendall(json.dumps(obj).encode() + b"\n")
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def request_many(self, requests):
        """Pipeline several requests; responses are matched by id and may
        arrive in any order. Returns {id: response}."""
        pending = set()
        for req in requests:
            self._send(req)
            pending.add(req["id"])
        out = {}
        while pending:
            resp = self._read_object()
            rid = resp.get("id")
            if rid not in pending:
                raise ProtocolError(f"unexpected response id {rid!r}")
            pending.discard(rid)
            out[rid] = resp
        return out

    def predict(self, task, ctx_x, ctx_y, query_x):
        """One-step-ahead predictive distribution for query_x given context."""
        if len(ctx_y) > self.max_context:
            raise RuleError(
                f"context length {len(ctx_y)} exceeds server maximum {self.max_context}")
        rid = self._next_id
        self._next_id += 1
        req = {
            "id": rid,
            "task": task,
            "context": {"x": [list(map(float, r)) for r in ctx_x],
                        "y": [int(v) if task == CLASSIFICATION else float(v)
                              for v in ctx_y]},
            "query_x": list(map(float, query_x)),
        }
        resp = self.request_many([req])[rid]
        return parse_distribution(resp, task)


def parse_distribution(resp, task):
    if "error" in resp:
        raise ProtocolError(f"server error: {resp['error']}")
    kind = resp.get("type")
    if task == CLASSIFICATION:
        if kind != "categorical":
            raise ProtocolError(f"expected categorical response, got {kind!r}")
        probs = np.asarray(resp.get("probs", []), dtype=float)
        if probs.size == 0 or np.any(probs < 0):
            raise ProtocolError("malformed probabilities")
        if abs(float(probs.sum()) - 1.0) > WIRE_PROB_TOL:
            raise ProtocolError(
                f"probabilities sum to {float(probs.sum())}, violating the protocol")
        return Categorical(probs / probs.sum())
    if kind != "grid":
        raise ProtocolError(f"expected grid response, got {kind!r}")
    edges = np.asarray(resp.get("edges", []), dtype=float)
    probs = np.asarray(resp.get("probs", []), dtype=float)
    if edges.size != probs.size + 1 or np.any(np.diff(edges) <= 0):
        raise ProtocolError("malformed or non-ascending grid edges")
    if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > WIRE_PROB_TOL:
        raise ProtocolError(
            f"probabilities sum to {float(probs.sum())}, violating the protocol")
    return BinnedContinuous(edges, probs / probs.sum())


class ExternalRuleState(RuleState):
    """Rule backed by a remote predictive service. The conditioning context
    lives client-side; each clone owns its own connection (opened lazily)."""

    kind = "external"

    def __init__(self, host, port, task, X, y, timeout=60.0):
        super().__init__()
        if task not in (CLASSIFICATION, REGRESSION):
            raise RuleError(f"unknown task {task!r}")
        self.host = host
        self.port = port
        self.task = task
        self.timeout = timeout
        n, d = X.shape
        self._cap = max(n, 1)
        self._X = np.empty((self._cap, d))
        self._y = np.empty(self._cap, dtype=float)
        self._X[:n] = X
        self._y[:n] = y
        self.step = n
        self._client = None

    @property
    def client(self):
        if self._client is None:
            self._client = PredictiveServiceClient(self.host, self.port, self.timeout)
        return self._client

    def clone(self):
        out = ExternalRuleState.__new__(ExternalRuleState)
        RuleState.__init__(out)
        out.host, out.port, out.task, out.timeout = (
            self.host, self.port, self.task, self.timeout)
        out._cap = self._cap
        out._X = self._X.copy()
        out._y = self._y.copy()
        out.step = self.step
        out._client = None  # connections are never shared
        return out

    def close(self):
        if self._client is not None:
            self._client.close()
            self._client = None

    def reserve(self, total):
        if total > self._cap:
            X = np.empty((total, self._X.shape[1]))
            y = np.empty(total, dtype=float)
            X[:self.step] = self._X[:self.step]
            y[:self.step] = self._y[:self.step]
            self._X, self._y, self._cap = X, y, total

    def predicted_distribution(self, x):
        return self.client.predict(self.task, self._X[:self.step],
                                   self._y[:self.step], x)

    def sample_response(self, x, rng):
        dist = self.predicted_distribution(x)
        val = sample_distribution(dist, rng)
        return int(val) if self.task == CLASSIFICATION else float(val)

    def update(self, x, y):
        if self.step == self._cap:
            self.reserve(2 * self._cap)
        self._X[self.step] = x
        self._y[self.step] = y
        self.step += 1
