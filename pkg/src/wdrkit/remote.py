"""HTTP logits client: plugs external model servers into the pipeline.

The wire contract is minimal: POST {base}/logits with a JSON body
{"texts": [...]} and read back {"logits": [[...], ...]}. The client
splits oversized batches, preserves input order, validates shapes
strictly, and retries only failures that are safe to repeat.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
import requests

from .textcore import TokenizedText, detokenize


class RemoteError(RuntimeError):
    """Base class for remote-provider failures."""


class RemoteTimeoutError(RemoteError):
    """The server did not answer within the configured timeout."""


class RemoteConnectionError(RemoteError):
    """The server could not be reached."""


class RemoteHttpError(RemoteError):
    """The server answered with a non-2xx status."""

    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"server returned HTTP {status}{': ' + detail if detail else ''}")
        self.status = status


class MalformedResponseError(RemoteError):
    """The response body was not the expected JSON document."""


class ShapeMismatchError(RemoteError):
    """The response had the wrong batch length or class count."""


class RemoteLogitsClient:
    """Logits provider backed by an HTTP model server.

    Never sends more than ``max_batch_size`` texts per request and
    reassembles results in input order, including when requests run
    concurrently. Timeouts and connection failures are retried up to
    ``retry_budget`` extra attempts; protocol violations (bad status,
    bad JSON, wrong shape) are surfaced immediately — repeating a
    request cannot fix a contract bug.
    """

    def __init__(self, base_url: str, num_classes: int, *,
                 timeout_ms: int = 30_000, max_batch_size: int = 64,
                 retry_budget: int = 2, max_concurrency: int = 1,
                 session: requests.Session | None = None):
        if num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if max_batch_size < 1:
            raise ValueError("max_batch_size must be positive")
        if timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if retry_budget < 0:
            raise ValueError("retry_budget must be non-negative")
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be positive")
        self.base_url = base_url.rstrip("/")
        self.num_classes = num_classes
        self.timeout_s = timeout_ms / 1000.0
        self.max_batch_size = max_batch_size
        self.retry_budget = retry_budget
        self.max_concurrency = max_concurrency
        self._session = session or requests.Session()

    def _post_once(self, texts: list[str]) -> list[np.ndarray]:
        try:
            resp = self._session.post(
                f"{self.base_url}/logits",
                json={"texts": texts},
                timeout=self.timeout_s,
            )
        except requests.Timeout as exc:
            raise RemoteTimeoutError(
                f"no response within {self.timeout_s:g}s"
            ) from exc
        except requests.ConnectionError as exc:
            raise RemoteConnectionError(str(exc)) from exc
        if not 200 <= resp.status_code < 300:
            raise RemoteHttpError(resp.status_code, resp.text[:200])
        try:
            payload = resp.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response is not JSON: {exc}") from exc
        if not isinstance(payload, dict) or "logits" not in payload:
            raise MalformedResponseError('response lacks a "logits" field')
        rows = payload["logits"]
        if not isinstance(rows, list):
            raise MalformedResponseError('"logits" must be a list')
        if len(rows) != len(texts):
            raise ShapeMismatchError(
                f"sent {len(texts)} texts, received {len(rows)} logit rows"
            )
        out = []
        for k, row in enumerate(rows):
            if (not isinstance(row, list)
                    or any(isinstance(v, bool) or not isinstance(v, (int, float))
                           for v in row)):
                raise MalformedResponseError(f"logit row {k} is not a number list")
            if len(row) != self.num_classes:
                raise ShapeMismatchError(
                    f"logit row {k} has {len(row)} classes, expected {self.num_classes}"
                )
            out.append(np.array(row, dtype=np.float64))
        return out

    def _post_chunk(self, texts: list[str]) -> list[np.ndarray]:
        attempts = self.retry_budget + 1
        for attempt in range(attempts):
            try:
                return self._post_once(texts)
            except (RemoteTimeoutError, RemoteConnectionError):
                if attempt == attempts - 1:
                    raise
        raise AssertionError("unreachable")

    def query(self, texts: Sequence[TokenizedText | str]) -> list[np.ndarray]:
        """Fetch one logit vector per text, in input order."""
        raw = [detokenize(t) if isinstance(t, TokenizedText) else str(t)
               for t in texts]
        if not raw:
            return []
        chunks = [raw[i:i + self.max_batch_size]
                  for i in range(0, len(raw), self.max_batch_size)]
        if self.max_concurrency > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
                results = list(pool.map(self._post_chunk, chunks))
        else:
            results = [self._post_chunk(c) for c in chunks]
        return [vec for chunk in results for vec in chunk]
