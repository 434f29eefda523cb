"""Chat-completion gateway with retry, caching, and deterministic replay.

Three providers are supported:

* ``openai-compatible`` — POST to a chat-completions endpoint, bearer auth;
* ``gemini-compatible`` — POST to a generateContent endpoint, API-key header;
* ``replay`` — no network at all; every request must hit the cache.

Every exchange is keyed by a SHA-256 over (system, user, model name,
temperature). With a cache path set, live providers record each new
exchange to a JSONL file and serve repeats from it; the replay provider
reads the same files. Credentials are named by environment variable and
resolved only at request time — the secret value never appears in configs,
caches, or logs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor

import requests

logger = logging.getLogger(__name__)

PROVIDERS = ("openai-compatible", "gemini-compatible", "replay")
_RETRYABLE_STATUS = frozenset({429}) | frozenset(range(500, 600))


class GatewayError(RuntimeError):
    """A request failed permanently (config error, auth, exhausted retries)."""


class ReplayMissError(GatewayError):
    """A replay-mode request was not found in the cache."""

    def __init__(self, key: str):
        super().__init__(f"no cached response for request key {key}")
        self.key = key


@dataclass(frozen=True)
class ModelConfig:
    """How to reach one model, and where its exchanges are cached."""

    provider: str
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    endpoint: str = ""
    credential_env: str = ""
    cache_path: str = ""
    max_retries: int = 4
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.provider not in PROVIDERS:
            raise GatewayError(f"unknown provider {self.provider!r}; expected one of {PROVIDERS}")
        if not self.model_name:
            raise GatewayError("model_name must be non-empty")
        if self.provider == "replay":
            if not self.cache_path:
                raise GatewayError("replay provider requires a cache_path")
        elif not self.endpoint:
            raise GatewayError(f"provider {self.provider!r} requires an endpoint URL")
        if self.max_retries < 0 or self.backoff_base < 0:
            raise GatewayError("retry settings must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise GatewayError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**data)

    def with_cache_path(self, cache_path: str) -> "ModelConfig":
        return replace(self, cache_path=cache_path)


def request_key(system: str, user: str, model_name: str, temperature: float) -> str:
    """Stable identity of one request, for caching and replay."""
    payload = json.dumps(
        [system, user, model_name, temperature], ensure_ascii=False, sort_keys=False
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Exchange:
    """One recorded request/response pair."""

    key: str
    response: str
    latency_ms: int = 0
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "response": self.response,
            "latency_ms": self.latency_ms,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Exchange":
        return cls(
            key=data["key"],
            response=data["response"],
            latency_ms=data.get("latency_ms", 0),
            timestamp=data.get("timestamp", ""),
        )


class ResponseCache:
    """JSONL-backed exchange store; safe for concurrent appends in one process."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._by_key: dict[str, Exchange] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    exchange = Exchange.from_dict(json.loads(line))
                    self._by_key[exchange.key] = exchange

    def get(self, key: str) -> Exchange | None:
        with self._lock:
            return self._by_key.get(key)

    def put(self, exchange: Exchange) -> None:
        with self._lock:
            if exchange.key in self._by_key:
                return
            self._by_key[exchange.key] = exchange
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(exchange.to_dict(), ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        with self._lock:
            return len(self._by_key)


Transport = Callable[[str, dict, dict, float], tuple[int, object]]


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float):
    response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    try:
        body = response.json()
    except ValueError:
        body = response.text
    return response.status_code, body


def _openai_payload(cfg: ModelConfig, system: str, user: str) -> dict:
    return {
        "model": cfg.model_name,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
    }


def _openai_extract(body) -> str:
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise GatewayError(f"malformed chat-completions response: {str(body)[:200]}")


def _gemini_payload(cfg: ModelConfig, system: str, user: str) -> dict:
    return {
        "system_instruction": {"parts": [{"text": system}]},
        "contents": [{"role": "user", "parts": [{"text": user}]}],
        "generationConfig": {
            "temperature": cfg.temperature,
            "maxOutputTokens": cfg.max_output_tokens,
        },
    }


def _gemini_extract(body) -> str:
    try:
        return body["candidates"][0]["content"]["parts"][0]["text"]
    except (KeyError, IndexError, TypeError):
        raise GatewayError(f"malformed generateContent response: {str(body)[:200]}")


@dataclass(frozen=True)
class BatchItem:
    """One slot of a batch result: a response text or an error message."""

    response: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class ChatGateway:
    """Issues chat completions for one model config."""

    def __init__(
        self,
        cfg: ModelConfig,
        transport: Transport | None = None,
        timeout: float = 120.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self.transport = transport or _requests_transport
        self.timeout = timeout
        self._sleep = sleep
        self.cache = ResponseCache(cfg.cache_path) if cfg.cache_path else None
        if cfg.provider == "replay" and self.cache is not None and not self.cache.path.exists():
            logger.warning("replay cache %s does not exist; every request will miss", cfg.cache_path)

    def _credential(self) -> str:
        name = self.cfg.credential_env
        if not name:
            raise GatewayError(f"provider {self.cfg.provider!r} requires credential_env")
        value = os.environ.get(name)
        if not value:
            raise GatewayError(f"credential environment variable {name} is not set")
        return value

    def _request_once(self, system: str, user: str) -> tuple[int, object]:
        cfg = self.cfg
        if cfg.provider == "openai-compatible":
            headers = {"Authorization": f"Bearer {self._credential()}"}
            payload = _openai_payload(cfg, system, user)
        else:
            headers = {"x-goog-api-key": self._credential()}
            payload = _gemini_payload(cfg, system, user)
        return self.transport(cfg.endpoint, headers, payload, self.timeout)

    def _request_with_retry(self, system: str, user: str) -> str:
        cfg = self.cfg
        extract = _openai_extract if cfg.provider == "openai-compatible" else _gemini_extract
        last_error = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            try:
                status, body = self._request_once(system, user)
            except requests.RequestException as exc:
                status, body = None, None
                last_error = f"transport error: {exc}"
            else:
                if status == 200:
                    return extract(body)
                last_error = f"HTTP {status}: {str(body)[:200]}"
                if status not in _RETRYABLE_STATUS:
                    raise GatewayError(last_error)
            if attempt < cfg.max_retries:
                delay = cfg.backoff_base * (2**attempt)
                logger.debug("retrying in %.2fs after %s", delay, last_error)
                self._sleep(delay)
        raise GatewayError(f"exhausted {cfg.max_retries} retries; last failure: {last_error}")

    def complete(self, system: str, user: str) -> str:
        """One completion; cached exchanges are served without a network call."""
        key = request_key(system, user, self.cfg.model_name, self.cfg.temperature)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit.response
        if self.cfg.provider == "replay":
            raise ReplayMissError(key)

        started = time.monotonic()
        response = self._request_with_retry(system, user)
        latency_ms = int((time.monotonic() - started) * 1000)
        if self.cache is not None:
            self.cache.put(
                Exchange(
                    key=key,
                    response=response,
                    latency_ms=latency_ms,
                    timestamp=datetime.now(timezone.utc).isoformat(),
                )
            )
        return response

    def batch_complete(
        self, items: Sequence[tuple[str, str]], parallelism: int = 4
    ) -> list[BatchItem]:
        """Complete many (system, user) pairs with bounded parallelism.

        The result list matches the input order; a permanently failed request
        occupies its slot as an error instead of aborting the batch.
        """
        if parallelism < 1:
            raise GatewayError("parallelism must be >= 1")
        results: list[BatchItem] = [BatchItem(error="not attempted")] * len(items)

        def work(index: int) -> None:
            system, user = items[index]
            try:
                results[index] = BatchItem(response=self.complete(system, user))
            except GatewayError as exc:
                logger.warning("request %d failed: %s", index, exc)
                results[index] = BatchItem(error=str(exc))

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(work, range(len(items))))
        return results


def complete(system: str, user: str, cfg: ModelConfig) -> str:
    """Convenience wrapper: one completion with a throwaway gateway."""
    return ChatGateway(cfg).complete(system, user)
