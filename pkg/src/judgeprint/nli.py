"""Entailment scoring backends.

Three providers implement the same batch contract: a precomputed score
store (the zero-inference reproduction path), a remote HTTP scoring
service, and a null provider that refuses. A caching wrapper keys results
by content hash of the (premise, hypothesis) pair and can export its
contents as a precomputed store.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

log = logging.getLogger(__name__)

ENV_REMOTE_URL = "JUDGEPRINT_NLI_URL"
PROB_SUM_TOLERANCE = 1e-4


class ProviderError(RuntimeError):
    pass


class ProviderDisabledError(ProviderError):
    """The null provider was asked to score."""


class ProviderUnavailableError(ProviderError):
    """Remote endpoint unreachable after bounded retries."""


class MissingScoresError(ProviderError):
    """Precomputed store has no entry for one or more requested pairs."""

    def __init__(self, keys: list[str]):
        super().__init__(f"precomputed store missing {len(keys)} score(s): "
                         + ", ".join(keys[:5]) + ("..." if len(keys) > 5 else ""))
        self.keys = keys


@dataclass(frozen=True)
class NLIResult:
    p_entail: float
    p_neutral: float
    p_contradict: float

    def __post_init__(self):
        for name in ("p_entail", "p_neutral", "p_contradict"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} out of [0, 1]")
        total = self.p_entail + self.p_neutral + self.p_contradict
        if abs(total - 1.0) > PROB_SUM_TOLERANCE:
            raise ValueError(f"probabilities sum to {total}, expected 1 +/- {PROB_SUM_TOLERANCE}")

    @property
    def margin(self) -> float:
        return self.p_entail - self.p_contradict


def text_hash(s: str) -> str:
    return hashlib.sha256(s.encode("utf-8")).hexdigest()


def pair_key(premise: str, hypothesis: str) -> str:
    """Content address of a scoring request."""
    return hashlib.sha256((text_hash(premise) + ":" + text_hash(hypothesis)).encode("ascii")).hexdigest()


def load_store(path: str | Path) -> dict[str, NLIResult]:
    """Read a line-delimited precomputed score store; triples validated."""
    store: dict[str, NLIResult] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        store[obj["key_hash"]] = NLIResult(
            p_entail=float(obj["p_entail"]),
            p_neutral=float(obj["p_neutral"]),
            p_contradict=float(obj["p_contradict"]),
        )
    return store


def save_store(entries: dict[str, dict], path: str | Path):
    """Write a store file. entries: key_hash -> {premise_hash, hypothesis_hash,
    p_entail, p_neutral, p_contradict}. Atomic, sorted, deterministic."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for key in sorted(entries):
            row = {"key_hash": key}
            row.update(entries[key])
            f.write(json.dumps(row, sort_keys=True) + "\n")
    os.replace(tmp, path)


class NLIProvider:
    kind = "abstract"

    def __init__(self):
        self.calls = 0  # batches actually served by this provider

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[NLIResult]:
        raise NotImplementedError


class NullProvider(NLIProvider):
    kind = "null"

    def score_batch(self, pairs):
        raise ProviderDisabledError("NLI provider disabled (null provider)")


class PrecomputedProvider(NLIProvider):
    kind = "precomputed"

    def __init__(self, store: dict[str, NLIResult]):
        super().__init__()
        self.store = store

    @classmethod
    def from_file(cls, path: str | Path) -> "PrecomputedProvider":
        return cls(load_store(path))

    def score_batch(self, pairs):
        self.calls += 1
        keys = [pair_key(p, h) for p, h in pairs]
        missing = [k for k in keys if k not in self.store]
        if missing:
            raise MissingScoresError(missing)
        return [self.store[k] for k in keys]


class RemoteProvider(NLIProvider):
    """Client for the batch scoring service: single POST endpoint, response
    array aligned by request index. Retries transient failures with
    exponential backoff (3 attempts, starting at 250 ms)."""

    kind = "remote"

    def __init__(self, url: str | None = None, timeout: float = 60.0,
                 max_retries: int = 3, backoff: float = 0.25):
        super().__init__()
        self.url = (url or os.environ.get(ENV_REMOTE_URL) or "").rstrip("/")
        if not self.url:
            raise ProviderError(f"remote provider needs a base URL (flag, config, or ${ENV_REMOTE_URL})")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.model_id: str | None = None

    def score_batch(self, pairs):
        self.calls += 1
        body = {"pairs": [{"premise": p, "hypothesis": h} for p, h in pairs]}
        last_err = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(self.url + "/score", json=body, timeout=self.timeout)
                if resp.status_code in (429, 503) or resp.status_code >= 500:
                    last_err = f"HTTP {resp.status_code}"
                    raise requests.RequestException(last_err)
                resp.raise_for_status()
                payload = resp.json()
                break
            except requests.RequestException as e:
                last_err = str(e)
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff * (2 ** attempt))
        else:
            raise ProviderUnavailableError(
                f"remote NLI endpoint {self.url} failed after {self.max_retries} attempts: {last_err}")
        results = payload.get("results")
        if not isinstance(results, list) or len(results) != len(pairs):
            raise ProviderError(f"remote response misaligned: {len(pairs)} pairs, "
                                f"{len(results) if isinstance(results, list) else 'no'} results")
        self.model_id = payload.get("model_id")
        return [NLIResult(p_entail=float(r["p_entail"]), p_neutral=float(r["p_neutral"]),
                          p_contradict=float(r["p_contradict"])) for r in results]


class CachingProvider(NLIProvider):
    """Content-addressed cache in front of another provider. Single writer,
    many readers; optional persistence is atomic (write temp + rename)."""

    def __init__(self, inner: NLIProvider, cache_path: str | Path | None = None):
        super().__init__()
        self.inner = inner
        self.kind = inner.kind
        self.cache_path = Path(cache_path) if cache_path else None
        self._lock = threading.Lock()
        self._cache: dict[str, NLIResult] = {}
        self._meta: dict[str, dict] = {}
        if self.cache_path and self.cache_path.exists():
            self._cache = load_store(self.cache_path)

    def score_batch(self, pairs):
        self.calls += 1
        keys = [pair_key(p, h) for p, h in pairs]
        miss_idx = [i for i, k in enumerate(keys) if k not in self._cache]
        if miss_idx:
            scored = self.inner.score_batch([pairs[i] for i in miss_idx])
            with self._lock:
                for i, res in zip(miss_idx, scored):
                    p, h = pairs[i]
                    self._cache[keys[i]] = res
                    self._meta[keys[i]] = {"premise_hash": text_hash(p), "hypothesis_hash": text_hash(h)}
                if self.cache_path:
                    self._persist()
        return [self._cache[k] for k in keys]

    def _persist(self):
        entries = {}
        for k, res in self._cache.items():
            meta = self._meta.get(k, {})
            entries[k] = {
                "premise_hash": meta.get("premise_hash", ""),
                "hypothesis_hash": meta.get("hypothesis_hash", ""),
                "p_entail": res.p_entail, "p_neutral": res.p_neutral,
                "p_contradict": res.p_contradict,
            }
        save_store(entries, self.cache_path)

    def export_store(self, path: str | Path):
        with self._lock:
            entries = {}
            for k, res in self._cache.items():
                meta = self._meta.get(k, {})
                entries[k] = {
                    "premise_hash": meta.get("premise_hash", ""),
                    "hypothesis_hash": meta.get("hypothesis_hash", ""),
                    "p_entail": res.p_entail, "p_neutral": res.p_neutral,
                    "p_contradict": res.p_contradict,
                }
            save_store(entries, path)

    def clear(self):
        with self._lock:
            self._cache.clear()
            self._meta.clear()


def provider_from_config(kind: str, store_path: str | None = None,
                         url: str | None = None,
                         cache_path: str | None = None) -> NLIProvider:
    kind = (kind or "null").lower()
    if kind == "null":
        base: NLIProvider = NullProvider()
    elif kind == "precomputed":
        if not store_path:
            raise ProviderError("precomputed provider needs a store path")
        base = PrecomputedProvider.from_file(store_path)
    elif kind == "remote":
        base = RemoteProvider(url=url)
    else:
        raise ProviderError(f"unknown NLI provider kind {kind!r}")
    if cache_path:
        return CachingProvider(base, cache_path)
    return base
