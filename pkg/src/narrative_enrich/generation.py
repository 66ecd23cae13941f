"""Chat-style text generation with explicit session state.

Two backends: ``live`` speaks a minimal HTTP chat contract; ``scripted``
replays ordered pattern -> response rules from a fixture file, so every
pipeline behavior is reproducible offline. Stage isolation in the enrichment
pipeline relies on sessions being first-class, append-only values.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

import requests
import yaml

from .errors import BackendError, CapabilityError, ConfigError

ROLES = ("system", "user", "assistant")

ENV_LLM_URL = "NARRATIVE_ENRICH_LLM_URL"
ENV_LLM_MODEL = "NARRATIVE_ENRICH_LLM_MODEL"
ENV_LLM_KEY = "NARRATIVE_ENRICH_LLM_KEY"


@dataclass(frozen=True)
class Message:
    role: str
    content: str


class ChatSession:
    """Append-only ordered message history. One session is confined to one
    enrichment task at a time; past messages are never mutated."""

    def __init__(self) -> None:
        self._messages: list[Message] = []

    @property
    def messages(self) -> tuple[Message, ...]:
        return tuple(self._messages)

    def __len__(self) -> int:
        return len(self._messages)

    def add(self, role: str, content: str) -> None:
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        if not self._messages and role == "assistant":
            raise ValueError("first message must be system or user")
        self._messages.append(Message(role, content))

    def system(self, content: str) -> None:
        self.add("system", content)

    def user(self, content: str) -> None:
        self.add("user", content)

    def assistant(self, content: str) -> None:
        self.add("assistant", content)

    def transcript(self) -> str:
        return "\n\n".join(f"[{m.role}]\n{m.content}" for m in self._messages)

    def fingerprint(self) -> str:
        payload = json.dumps(
            [[m.role, m.content] for m in self._messages], ensure_ascii=False
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GenerationParams:
    max_new_tokens: int = 250
    temperature: float = 0.7
    top_p: float = 0.9
    sample: bool = True
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.max_new_tokens <= 0:
            raise ConfigError("max_new_tokens must be positive")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not (0.0 < self.top_p <= 1.0):
            raise ConfigError("top_p must be in (0, 1]")


@dataclass(frozen=True)
class TokenChoiceProbe:
    """A next-token probability probe: a prompt plus candidate continuations
    (e.g. affirmative/negative answer tokens)."""

    prompt: str
    candidates: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.candidates) < 2:
            raise ValueError("a probe needs at least 2 candidate tokens")


class GenerationBackend:
    """Base backend: counts completion calls (thread-safe) so callers can
    assert the zero-call guarantee for threshold-blocked sections."""

    supports_probabilities = False

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0
        self.probe_calls = 0

    def _count_call(self) -> None:
        with self._lock:
            self.calls += 1

    def _count_probe(self) -> None:
        with self._lock:
            self.probe_calls += 1

    def complete(self, session: ChatSession, params: GenerationParams) -> str:
        raise NotImplementedError

    def token_probabilities(self, probe: TokenChoiceProbe) -> list[float]:
        raise CapabilityError(
            f"{type(self).__name__} does not expose token probabilities"
        )


def _check_completable(session: ChatSession) -> None:
    if len(session) == 0:
        raise ValueError("cannot complete an empty session")
    if session.messages[-1].role == "assistant":
        raise ValueError("last message is already an assistant turn")


@dataclass(frozen=True)
class ScriptRule:
    """One scripted behavior: ``match`` is tested against the newest message
    (so each pipeline stage can be addressed by its instruction text) and the
    optional ``context`` against the whole transcript (so fixtures can give
    per-section answers). Both are substrings, or regexes when ``regex``."""

    match: str
    response: str
    regex: bool = False
    context: str | None = None

    def hits(self, last_message: str, transcript: str) -> bool:
        if self.regex:
            if re.search(self.match, last_message, re.DOTALL) is None:
                return False
            return self.context is None or (
                re.search(self.context, transcript, re.DOTALL) is not None
            )
        if self.match not in last_message:
            return False
        return self.context is None or self.context in transcript


@dataclass(frozen=True)
class ProbeRule:
    match: str
    values: tuple[float, ...]
    regex: bool = False

    def hits(self, text: str) -> bool:
        if self.regex:
            return re.search(self.match, text, re.DOTALL) is not None
        return self.match in text


class ScriptedBackend(GenerationBackend):
    """Deterministic backend: the first rule whose pattern matches the session
    transcript supplies the response. A pure function of (messages, rules);
    the seed parameter is accepted for interface parity and ignored."""

    def __init__(self, rules, probe_rules=(), seed: int | None = None):
        super().__init__()
        self.rules = tuple(rules)
        self.probe_rules = tuple(probe_rules)
        self.seed = seed

    @property
    def supports_probabilities(self) -> bool:  # type: ignore[override]
        return len(self.probe_rules) > 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        """Load ordered rules from a YAML/JSON file: either a bare list of
        ``{match, response}`` records or ``{rules: [...], probes: [...]}``
        where probes are ``{match, values}``."""
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, list):
            rule_records, probe_records = data, []
        elif isinstance(data, dict):
            rule_records = data.get("rules", [])
            probe_records = data.get("probes", [])
        else:
            raise ConfigError(f"scripted rules file {path} has unexpected shape")
        rules = [
            ScriptRule(
                match=r["match"],
                response=r["response"],
                regex=bool(r.get("regex", False)),
                context=r.get("context"),
            )
            for r in rule_records
        ]
        probes = [
            ProbeRule(
                match=p["match"],
                values=tuple(float(v) for v in p["values"]),
                regex=bool(p.get("regex", False)),
            )
            for p in probe_records
        ]
        return cls(rules, probes)

    def complete(self, session: ChatSession, params: GenerationParams) -> str:
        _check_completable(session)
        self._count_call()
        last = session.messages[-1].content
        transcript = session.transcript()
        for rule in self.rules:
            if rule.hits(last, transcript):
                return rule.response
        raise BackendError(
            "no scripted rule matched; last message started with "
            f"{last[:80]!r}"
        )

    def token_probabilities(self, probe: TokenChoiceProbe) -> list[float]:
        if not self.probe_rules:
            raise CapabilityError("scripted backend has no probe rules")
        self._count_probe()
        for rule in self.probe_rules:
            if rule.hits(probe.prompt):
                if len(rule.values) != len(probe.candidates):
                    raise BackendError(
                        f"probe rule supplies {len(rule.values)} values for "
                        f"{len(probe.candidates)} candidates"
                    )
                return list(rule.values)
        raise BackendError("no probe rule matched the probe prompt")


class HTTPChatBackend(GenerationBackend):
    """Remote chat backend speaking the wire contract:
    POST {model, messages, max_tokens, temperature, top_p} -> {"text": ...}."""

    def __init__(
        self, url: str, model: str, key: str | None = None, timeout: float = 60.0
    ):
        super().__init__()
        self.url = url
        self.model = model
        self.key = key
        self.timeout = timeout

    @classmethod
    def from_env(cls) -> "HTTPChatBackend":
        url = os.environ.get(ENV_LLM_URL)
        model = os.environ.get(ENV_LLM_MODEL)
        if not url or not model:
            raise ConfigError(f"{ENV_LLM_URL} and {ENV_LLM_MODEL} must be set")
        return cls(url, model, key=os.environ.get(ENV_LLM_KEY))

    def complete(self, session: ChatSession, params: GenerationParams) -> str:
        _check_completable(session)
        self._count_call()
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": m.role, "content": m.content} for m in session.messages
            ],
            "max_tokens": params.max_new_tokens,
            "temperature": params.temperature,
            "top_p": params.top_p,
        }
        last_exc: Exception | None = None
        for _ in range(2):  # one retry on transport failure
            try:
                resp = requests.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout
                )
                break
            except requests.RequestException as exc:
                last_exc = exc
        else:
            raise BackendError(f"generation backend unreachable: {last_exc}")
        if resp.status_code != 200:
            raise BackendError(
                f"generation backend returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError) as exc:
            raise BackendError(f"malformed generation response: {exc}") from exc
        if not isinstance(text, str) or not text.strip():
            raise BackendError("generation backend returned an empty completion")
        return text
