"""Uniform language-model access.

Three interchangeable backends behind one complete() call:

* live     - chat-completions over HTTP with retries and optional
             cassette recording,
* scripted - a deterministic rule table standing in for the LM in
             offline tests and experiments,
* replay   - recorded cassettes keyed by prompt hash; never touches
             the network.

Plus the reply parsers for the two query families.
"""

from __future__ import annotations

import ast
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .prompts import ANSWER_MARKER, PREFERENCE_CLAUSE, PREFERENCE_MARKER
from .util import sha256_hex


class GatewayError(RuntimeError):
    pass


class ConfigError(GatewayError):
    pass


class TransportError(GatewayError):
    """Live backend exhausted its retries."""


class ReplayMissError(GatewayError):
    """Prompt not present in the replay cassette."""


class ScriptedRuleError(GatewayError):
    """No rule, or more than one rule, matches a scripted query."""


class ParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}; raw reply: {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class ChatExchange:
    system_prompt: str
    user_prompt: str
    reply: str
    backend_tag: str
    latency_ms: int

    def to_dict(self) -> dict:
        return {
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "reply": self.reply,
            "backend_tag": self.backend_tag,
            "latency_ms": self.latency_ms,
        }


@dataclass(frozen=True)
class LmBackendConfig:
    mode: str  # live | scripted | replay
    base_url: str = ""
    model_name: str = ""
    api_key_env: str = "PLGA_API_KEY"
    temperature: float = 0.0
    max_retries: int = 3
    cassette_path: str | None = None
    rules_path: str | None = None
    max_inflight: int = 4
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.mode not in ("live", "scripted", "replay"):
            raise ConfigError(f"unknown backend mode {self.mode!r}")
        if self.mode == "live" and not self.base_url:
            raise ConfigError("live mode requires base_url")
        if self.mode == "scripted" and not self.rules_path:
            raise ConfigError("scripted mode requires rules_path")
        if self.mode == "replay" and not self.cassette_path:
            raise ConfigError("replay mode requires cassette_path")

    @classmethod
    def from_json(cls, path: str | Path) -> "LmBackendConfig":
        data = json.loads(Path(path).read_text("utf-8"))
        return cls(**data)

    @classmethod
    def from_uri(cls, uri: str) -> "LmBackendConfig":
        """CLI shorthand: scripted:rules.json | replay:cassette.jsonl | live:config.json."""
        mode, _, path = uri.partition(":")
        if not path:
            raise ConfigError(f"backend uri {uri!r} needs a path, e.g. scripted:rules.json")
        if mode == "scripted":
            return cls(mode="scripted", rules_path=path)
        if mode == "replay":
            return cls(mode="replay", cassette_path=path)
        if mode == "live":
            return cls.from_json(path)
        raise ConfigError(f"unknown backend mode in uri {uri!r}")


def prompt_hash(system: str, user: str) -> str:
    return sha256_hex(system + "\x1e" + user)


# ---------------------------------------------------------------------------
# reply parsing


def parse_preference_reply(reply: str) -> list[tuple[str, float]]:
    """Extract the first [["answer", score], ...] literal and renormalize."""
    for start in range(len(reply)):
        if reply[start] != "[":
            continue
        span = _balanced_span(reply, start)
        if span is None:
            continue
        try:
            value = ast.literal_eval(reply[start:span])
        except (ValueError, SyntaxError):
            continue
        pairs = _validate_pairs(value)
        if pairs is not None:
            total = sum(score for _, score in pairs)
            return [(text, score / total) for text, score in pairs]
    raise ParseError("no parseable preference list", reply)


def _balanced_span(text: str, start: int) -> int | None:
    depth = 0
    in_string: str | None = None
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if ch == "\\":
                continue
            if ch == in_string:
                in_string = None
            continue
        if ch in "'\"":
            in_string = ch
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def _validate_pairs(value) -> list[tuple[str, float]] | None:
    if not isinstance(value, list) or not value:
        return None
    pairs: list[tuple[str, float]] = []
    for item in value:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            return None
        text, score = item
        if not isinstance(text, str) or not isinstance(score, (int, float)):
            return None
        if score < 0:
            return None
        pairs.append((text, float(score)))
    if sum(s for _, s in pairs) <= 0:
        return None
    return pairs


_YES_NO_RE = re.compile(r"final answer\s*:\s*([a-zA-Z]+)", re.IGNORECASE)


def parse_yes_no(reply: str) -> bool:
    """Read the token after the last 'Final answer:' marker."""
    matches = _YES_NO_RE.findall(reply)
    if not matches:
        raise ParseError(f"missing {ANSWER_MARKER!r} marker", reply)
    token = matches[-1].lower()
    if token == "yes":
        return True
    if token == "no":
        return False
    raise ParseError(f"final answer token {token!r} is neither yes nor no", reply)


# ---------------------------------------------------------------------------
# scripted rules


_ABSTRACTION_USER_RE = re.compile(
    r'^The command is "(?P<rule>.*)"\. In an instantiation of the environment that contains '
    r'only some subset of the object types and colors, could the target object have '
    r'(?P<group>object type|object color) "(?P<candidate>.*)"\?',
    re.DOTALL,
)
_PREFERENCE_USER_RE = re.compile(r'^The task given to the user was: "(?P<utterance>.*)"\.$')


@dataclass(frozen=True)
class ScriptedRule:
    """One deterministic canned response.

    Preference rules match on the utterance plus (when several scenarios
    share an utterance) a kind name that must appear among the scene
    differences. Abstraction rules match on (utterance, preference,
    group) and answer per candidate with a mandatory default.
    """

    kind: str  # "preference" | "abstraction"
    utterance: str
    hypotheses: tuple[tuple[str, float], ...] = ()
    requires_difference_kind: str | None = None
    preference: str | None = None
    group: str | None = None
    answers: tuple[tuple[str, str], ...] = ()
    default: str = "no"


class ScriptedBackend:
    """Deterministic offline oracle: parses rendered prompts back into
    structured queries and answers them from the rule table."""

    tag = "scripted"

    def __init__(self, rules_path: str | Path):
        data = json.loads(Path(rules_path).read_text("utf-8"))
        self.preference_rules: list[ScriptedRule] = []
        self.abstraction_rules: dict[tuple[str, str | None, str], ScriptedRule] = {}
        seen_pref: set[tuple[str, str | None]] = set()
        for row in data.get("preference", []):
            rule = ScriptedRule(
                kind="preference",
                utterance=row["utterance"],
                hypotheses=tuple((t, float(s)) for t, s in row["hypotheses"]),
                requires_difference_kind=row.get("requires_difference_kind"),
            )
            key = (rule.utterance, rule.requires_difference_kind)
            if key in seen_pref:
                raise ScriptedRuleError(f"duplicate preference rule for {key}")
            seen_pref.add(key)
            self.preference_rules.append(rule)
        for row in data.get("abstraction", []):
            rule = ScriptedRule(
                kind="abstraction",
                utterance=row["utterance"],
                preference=row.get("preference"),
                group=row["group"],
                answers=tuple(row.get("answers", {}).items()),
                default=row.get("default", "no"),
            )
            key = (rule.utterance, rule.preference, rule.group)
            if key in self.abstraction_rules:
                raise ScriptedRuleError(f"duplicate abstraction rule for {key}")
            self.abstraction_rules[key] = rule

    def reply(self, system: str, user: str) -> str:
        if system.startswith(PREFERENCE_MARKER):
            return self._preference_reply(system, user)
        return self._abstraction_reply(user)

    def _preference_reply(self, system: str, user: str) -> str:
        m = _PREFERENCE_USER_RE.match(user)
        if not m:
            raise ScriptedRuleError(f"unparseable preference user prompt: {user!r}")
        utterance = m.group("utterance")
        diffs = _difference_captions(system)
        matches = [r for r in self.preference_rules if r.utterance == utterance]
        if len(matches) > 1:
            matches = [
                r
                for r in matches
                if r.requires_difference_kind is not None
                and _mentions_kind(diffs, r.requires_difference_kind)
            ]
        if len(matches) != 1:
            raise ScriptedRuleError(
                f"{len(matches)} preference rules match utterance {utterance!r} "
                f"with differences {sorted(diffs)}"
            )
        return json.dumps([[t, s] for t, s in matches[0].hypotheses])

    def _abstraction_reply(self, user: str) -> str:
        m = _ABSTRACTION_USER_RE.match(user)
        if not m:
            raise ScriptedRuleError(f"unparseable abstraction user prompt: {user!r}")
        rule_text, group, candidate = m.group("rule"), m.group("group"), m.group("candidate")
        utterance, sep, preference = rule_text.partition(PREFERENCE_CLAUSE)
        key = (utterance, preference if sep else None, group)
        rule = self.abstraction_rules.get(key)
        if rule is None:
            raise ScriptedRuleError(f"no abstraction rule for {key}")
        answer = dict(rule.answers).get(candidate, rule.default)
        return f'Considering {group} "{candidate}" for this command.\nFinal answer: {answer}'


def _difference_captions(system: str) -> set[str]:
    first = re.search(r"First scene-\n(.*?)\nSecond scene-", system, re.DOTALL)
    second = re.search(r"Second scene-\n(.*?)\n\nWhat are the most likely", system, re.DOTALL)
    captions: set[str] = set()
    for m in (first, second):
        if m:
            captions.update(line for line in m.group(1).splitlines() if line)
    return captions


def _mentions_kind(captions: set[str], kind: str) -> bool:
    return any(c == kind or c.endswith(" " + kind) for c in captions)


# ---------------------------------------------------------------------------
# replay + live


class ReplayBackend:
    tag = "replay"

    def __init__(self, cassette_path: str | Path):
        self._replies: dict[str, str] = {}
        path = Path(cassette_path)
        if path.exists():
            for line in path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                self._replies[row["prompt_hash"]] = row["reply"]

    def reply(self, system: str, user: str) -> str:
        key = prompt_hash(system, user)
        if key not in self._replies:
            raise ReplayMissError(f"no cassette entry for prompt hash {key}")
        return self._replies[key]


class LiveBackend:
    tag = "live"

    def __init__(self, config: LmBackendConfig):
        self.config = config
        self._semaphore = threading.Semaphore(config.max_inflight)
        self._record_lock = threading.Lock()

    def reply(self, system: str, user: str) -> str:
        import httpx

        api_key = os.environ.get(self.config.api_key_env, "")
        if not api_key:
            raise ConfigError(f"live backend needs the {self.config.api_key_env} env var")
        payload = {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {api_key}"}
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(min(0.2 * 2 ** (attempt - 1), 2.0))
            try:
                with self._semaphore:
                    response = httpx.post(
                        url, json=payload, headers=headers, timeout=self.config.timeout_s
                    )
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = GatewayError(f"HTTP {response.status_code}")
                    continue
                response.raise_for_status()
                reply = response.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_error = exc
                continue
            self._record(system, user, reply)
            return reply
        raise TransportError(
            f"live completion failed after {self.config.max_retries + 1} attempts: {last_error}"
        )

    def _record(self, system: str, user: str, reply: str) -> None:
        if not self.config.cassette_path:
            return
        row = {
            "prompt_hash": prompt_hash(system, user),
            "system": system,
            "user": user,
            "reply": reply,
        }
        with self._record_lock:
            with open(self.config.cassette_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# dispatch


_BACKENDS: dict[LmBackendConfig, object] = {}
_BACKENDS_LOCK = threading.Lock()
_COUNTS = {"preference": 0, "abstraction": 0, "total": 0}
_COUNTS_LOCK = threading.Lock()


def exchange_counts() -> dict[str, int]:
    """Process-wide completion counters, split by query family. Pipelines
    snapshot these around a run to prove baseline isolation."""
    with _COUNTS_LOCK:
        return dict(_COUNTS)


def backend_for(config: LmBackendConfig):
    with _BACKENDS_LOCK:
        backend = _BACKENDS.get(config)
        if backend is None:
            if config.mode == "scripted":
                backend = ScriptedBackend(config.rules_path)
            elif config.mode == "replay":
                backend = ReplayBackend(config.cassette_path)
            else:
                backend = LiveBackend(config)
            _BACKENDS[config] = backend
        return backend


def reset_backend_cache() -> None:
    """Drop cached backends (tests re-point rules/cassette paths)."""
    with _BACKENDS_LOCK:
        _BACKENDS.clear()


def complete(config: LmBackendConfig, system: str, user: str) -> ChatExchange:
    """Run one chat completion against the configured backend."""
    if not system or not user:
        raise ConfigError("prompts must be non-empty")
    backend = backend_for(config)
    started = time.perf_counter()
    reply = backend.reply(system, user)
    latency_ms = int((time.perf_counter() - started) * 1000)
    family = "preference" if system.startswith(PREFERENCE_MARKER) else "abstraction"
    with _COUNTS_LOCK:
        _COUNTS[family] += 1
        _COUNTS["total"] += 1
    return ChatExchange(
        system_prompt=system,
        user_prompt=user,
        reply=reply,
        backend_tag=backend.tag,
        latency_ms=latency_ms,
    )
