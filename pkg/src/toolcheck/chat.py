"""Chat messages and provider-agnostic chat clients."""

from __future__ import annotations

import json
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

ROLES = ("system", "user", "assistant")


class ClientError(RuntimeError):
    """Transport or provider failure."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ChatMessage":
        return cls(str(d["role"]), str(d.get("content") or ""))


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    generated_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.generated_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(self.prompt_tokens + other.prompt_tokens, self.generated_tokens + other.generated_tokens)

    def to_dict(self) -> dict[str, int]:
        return {"prompt_tokens": self.prompt_tokens, "generated_tokens": self.generated_tokens}


@dataclass(frozen=True)
class Completion:
    text: str
    usage: Usage


class ChatClient(Protocol):
    def complete(self, messages: Sequence[ChatMessage], **params: Any) -> Completion: ...


class ScriptedClient:
    """Replays canned completions, keyed by ``(case_id, round)`` or in call order.

    ``script`` entries look like ``{"id": "c1", "round": 1, "text": "...",
    "usage": {"prompt_tokens": 10, "generated_tokens": 3}}``; ``id`` and
    ``round`` are optional. Keyed lookups need ``case_id``/``round`` params.
    """

    def __init__(self, script: Sequence[Mapping[str, Any]] | Callable[..., Completion]):
        self._fn = script if callable(script) else None
        self._keyed: dict[tuple[str, int], Completion] = {}
        self._queue: list[Completion] = []
        self._lock = threading.Lock()
        self.calls: list[list[ChatMessage]] = []
        if self._fn is None:
            for entry in script:
                usage = Usage(**entry.get("usage", {}))
                comp = Completion(entry["text"], usage)
                if "id" in entry:
                    self._keyed[(str(entry["id"]), int(entry.get("round", 1)))] = comp
                else:
                    self._queue.append(comp)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedClient":
        with open(path, encoding="utf-8") as fh:
            return cls([json.loads(line) for line in fh if line.strip()])

    def complete(self, messages: Sequence[ChatMessage], **params: Any) -> Completion:
        with self._lock:
            self.calls.append(list(messages))
            if self._fn is not None:
                return self._fn(messages, **params)
            key = (str(params.get("case_id")), int(params.get("round", 1)))
            if key in self._keyed:
                return self._keyed[key]
            if not self._queue:
                raise ClientError(f"scripted client has no completion for {key}")
            return self._queue.pop(0)


class OpenAICompatibleClient:
    """Minimal chat-completions client over HTTP (stdlib only).

    The API key is read from ``api_key_env`` at call time so it never ends up
    in run records.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        temperature: float = 0.2,
        max_tokens: int = 256,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        retries: int = 2,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.retries = retries

    def complete(self, messages: Sequence[ChatMessage], **params: Any) -> Completion:
        body = {
            "model": self.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": params.get("temperature", self.temperature),
            "max_tokens": params.get("max_tokens", self.max_tokens),
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.endpoint if self.endpoint.endswith("/chat/completions") else self.endpoint + "/chat/completions"
        req = urllib.request.Request(url, data=json.dumps(body).encode(), headers=headers, method="POST")
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                break
            except urllib.error.HTTPError as exc:
                last = exc
                if exc.code < 500 and exc.code != 429:
                    raise ClientError(f"HTTP {exc.code}: {exc.reason}") from exc
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
                last = exc
            time.sleep(min(2**attempt, 8))
        else:
            raise ClientError(f"request failed after {self.retries + 1} attempts: {last}")
        try:
            text = payload["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ClientError(f"unexpected response shape: {str(payload)[:200]}") from exc
        u = payload.get("usage") or {}
        usage = Usage(int(u.get("prompt_tokens", 0)), int(u.get("completion_tokens", u.get("generated_tokens", 0))))
        return Completion(text, usage)


def estimate_tokens(text: str) -> int:
    """Whitespace token estimate, used where no tokenizer is available."""
    return len(text.split())
