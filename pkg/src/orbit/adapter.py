"""Newline-delimited JSON bridge to models running in another process.

Request::

    {"id": 3, "op": "predict" | "predict_dropout" | "activations",
     "seed": int | null, "h": 64, "w": 64, "pixels": [row-major floats]}

Response: ``{"id": 3, "labels": [...]}`` (optionally with ``"scores"``, a
row-major C x H x W list), ``{"id": 3, "values": [...]}`` or
``{"id": 3, "error": "..."}``. Responses must come back in request order
with the request id; anything else is a protocol error.

Running ``python -m orbit.adapter`` serves the built-in reference model.
"""

from __future__ import annotations

import argparse
import json
import queue
import shlex
import subprocess
import sys
import threading
from typing import IO, Optional

import numpy as np

from .errors import ProtocolError, TransportError, ValidationError
from .model import Prediction, check_image
from .scene import IMAGE_SIZE, NUM_CLASSES

_EOF = object()


class AdapterModel:
    """Client side: forwards model calls to a subprocess speaking the adapter protocol."""

    def __init__(self, command, num_classes: int = NUM_CLASSES,
                 image_shape: tuple[int, int] = (IMAGE_SIZE, IMAGE_SIZE), timeout: float = 30.0):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.command = argv
        self.num_classes = num_classes
        self.image_shape = tuple(image_shape)
        self.timeout = timeout
        self._next_id = 0
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as exc:
            raise TransportError(f"cannot start adapter {argv!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _call(self, op: str, image, seed: Optional[int]) -> dict:
        x = check_image(image, self.image_shape)
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            req = {"id": rid, "op": op, "seed": seed, "h": x.shape[0], "w": x.shape[1],
                   "pixels": x.ravel().tolist()}
            try:
                self._proc.stdin.write(json.dumps(req) + "\n")
                self._proc.stdin.flush()
            except (OSError, ValueError) as exc:
                raise TransportError(f"adapter stdin closed: {exc}") from exc
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise TransportError(f"adapter timed out after {self.timeout}s") from None
        if line is _EOF:
            raise TransportError("adapter exited")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed response: {line[:80]!r}") from exc
        if not isinstance(resp, dict) or resp.get("id") != rid:
            raise ProtocolError(f"expected response id {rid}, got {resp.get('id') if isinstance(resp, dict) else resp!r}")
        if "error" in resp:
            raise TransportError(f"adapter error: {resp['error']}")
        return resp

    def _prediction(self, resp: dict) -> Prediction:
        h, w = self.image_shape
        if "labels" not in resp:
            raise ProtocolError("response lacks labels")
        labels = np.asarray(resp["labels"], dtype=np.int64)
        if labels.size != h * w or labels.min() < 0 or labels.max() >= self.num_classes:
            raise ProtocolError("labels have the wrong size or range")
        scores = None
        if resp.get("scores") is not None:
            scores = np.asarray(resp["scores"], dtype=np.float64)
            if scores.size != self.num_classes * h * w:
                raise ProtocolError("scores have the wrong size")
            scores = scores.reshape(self.num_classes, h, w)
        return Prediction(labels=labels.reshape(h, w).astype(np.uint8), scores=scores)

    def predict(self, image) -> Prediction:
        return self._prediction(self._call("predict", image, None))

    def predict_with_dropout(self, image, pass_seed: int) -> Prediction:
        return self._prediction(self._call("predict_dropout", image, int(pass_seed)))

    def activations(self, image) -> np.ndarray:
        resp = self._call("activations", image, None)
        if "values" not in resp:
            raise ProtocolError("response lacks values")
        return np.asarray(resp["values"], dtype=np.float64)


def handle_request(model, req: dict, with_scores: bool = True) -> dict:
    rid = req.get("id")
    try:
        h, w = int(req["h"]), int(req["w"])
        pixels = np.asarray(req["pixels"], dtype=np.float64)
        if pixels.size != h * w:
            raise ValidationError("pixel count does not match h*w")
        image = pixels.reshape(h, w)
        op = req["op"]
        if op == "activations":
            return {"id": rid, "values": np.asarray(model.activations(image)).tolist()}
        if op == "predict":
            pred = model.predict(image)
        elif op == "predict_dropout":
            pred = model.predict_with_dropout(image, int(req["seed"]))
        else:
            raise ValidationError(f"unknown op {op!r}")
        out = {"id": rid, "labels": pred.labels.ravel().tolist()}
        if with_scores and pred.scores is not None:
            out["scores"] = pred.scores.ravel().tolist()
        return out
    except Exception as exc:  # reported to the client, never fatal for the server
        return {"id": rid, "error": f"{type(exc).__name__}: {exc}"}


def serve(model, stdin: IO[str], stdout: IO[str], with_scores: bool = True) -> None:
    for line in stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            resp = {"id": None, "error": f"bad json: {exc}"}
        else:
            resp = handle_request(model, req, with_scores)
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    from .model import ReferenceModel

    p = argparse.ArgumentParser(description="Serve the reference model over the adapter protocol")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", default="default")
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--no-scores", action="store_true", help="answer with labels only")
    args = p.parse_args(argv)
    serve(ReferenceModel(args.seed, args.mode, args.dropout), sys.stdin, sys.stdout, not args.no_scores)
    return 0


if __name__ == "__main__":
    sys.exit(main())
