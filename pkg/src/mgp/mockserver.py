"""Mock predictive service speaking the newline-delimited JSON protocol.

Responses are pure functions of the request, so runs against the mock are
reproducible. Behaviors: a fixed categorical or grid distribution, an
"empirical" mode that summarizes the request context (smoothed class
frequencies / an equal-width response histogram), and a deliberately
malformed mode for protocol tests.
"""

import json
import socketserver
import threading

import numpy as np

DEFAULT_MAX_CONTEXT = 10000

FIXED_CATEGORICAL = "fixed-categorical"
FIXED_GRID = "fixed-grid"
EMPIRICAL = "empirical"
MALFORMED_PROBS = "malformed-probs"


class MockBehavior:
    def __init__(self, mode=EMPIRICAL, probs=None, edges=None, n_classes=None,
                 n_bins=32):
        self.mode = mode
        self.probs = list(probs) if probs is not None else None
        self.edges = list(edges) if edges is not None else None
        self.n_classes = n_classes
        self.n_bins = int(n_bins)

    def respond(self, req):
        rid = req.get("id")
        task = req.get("task")
        if self.mode == MALFORMED_PROBS:
            return {"id": rid, "type": "categorical", "probs": [0.3, 0.5]}
        if self.mode == FIXED_CATEGORICAL:
            return {"id": rid, "type": "categorical", "probs": self.probs}
        if self.mode == FIXED_GRID:
            return {"id": rid, "type": "grid", "edges": self.edges,
                    "probs": self.probs}
        ys = req.get("context", {}).get("y", [])
        if task == "classification":
            k = self.n_classes or (int(max(ys)) + 1 if ys else 2)
            k = max(k, 2)
            counts = np.ones(k)  # add-one smoothing
            for v in ys:
                counts[int(v)] += 1.0
            probs = counts / counts.sum()
            return {"id": rid, "type": "categorical",
                    "probs": [float(p) for p in probs]}
        vals = np.asarray(ys, dtype=float)
        if vals.size == 0:
            lo, hi = -1.0, 1.0
        else:
            lo, hi = float(vals.min()), float(vals.max())
        pad = max((hi - lo) / self.n_bins, 1e-3)
        edges = np.linspace(lo - pad, hi + pad, self.n_bins + 1)
        counts, _ = np.histogram(vals, bins=edges)
        probs = (counts + 1.0) / (counts.sum() + self.n_bins)
        return {"id": rid, "type": "grid",
                "edges": [float(e) for e in edges],
                "probs": [float(p) for p in probs]}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        srv = self.server
        self.wfile.write(json.dumps(
            {"protocol": 1, "max_context": srv.max_context}).encode() + b"\n")
        for line in self.rfile:
            line = line.strip()
            if not line:
                continue
            try:
                req = json.loads(line)
            except json.JSONDecodeError:
                self.wfile.write(json.dumps(
                    {"id": None, "error": "bad JSON"}).encode() + b"\n")
                continue
            ctx = req.get("context", {}).get("y", [])
            if len(ctx) > srv.max_context:
                resp = {"id": req.get("id"),
                        "error": f"context exceeds maximum {srv.max_context}"}
            else:
                resp = srv.behavior.respond(req)
            self.wfile.write(json.dumps(resp).encode() + b"\n")


class MockPredictiveServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host="127.0.0.1", port=0, behavior=None,
                 max_context=DEFAULT_MAX_CONTEXT):
        super().__init__((host, port), _Handler)
        self.behavior = behavior or MockBehavior()
        self.max_context = int(max_context)

    @property
    def port(self):
        return self.server_address[1]

    def start_background(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
