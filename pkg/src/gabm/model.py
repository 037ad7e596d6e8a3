"""Language model backends behind one narrow sampling interface.

The engine only ever needs two operations: sample free text, and sample one
option from a fixed list.  Every call is recorded to whichever CallRecorder
is currently installed on the backend, which is how trace records end up
holding the complete prompt/response log for each acting turn.

ScriptedModel is the deterministic test backend: an ordered rule list with
per-rule consumption budgets and a default response.  HttpModel adapts any
chat-completions endpoint and is never touched by the default test suite.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field

from .errors import BackendUnavailable, NoMatchingOption
from .kernel import ModelCall, parse_choice

# Crude budget bridge for backends that meter tokens rather than characters.
CHARS_PER_TOKEN = 4

CHOICE_RETRY_BUDGET = 3
_CHOICE_REPAIR = "Answer with exactly one of the options, verbatim."


class CallRecorder:
    """Thread-safe sink for model calls, drained into one trace record."""

    def __init__(self):
        self._lock = threading.Lock()
        self.calls: list[ModelCall] = []

    def record(self, call: ModelCall) -> None:
        with self._lock:
            self.calls.append(call)


class GenerativeModel:
    """Base backend: subclasses implement ``_complete`` only."""

    backend_id = "abstract"
    # Prompt budget in characters; None means unbounded.
    context_char_budget: int | None = None

    def __init__(self):
        self._recorder: CallRecorder | None = None

    def set_recorder(self, recorder: CallRecorder | None) -> None:
        self._recorder = recorder

    def _complete(self, prompt: str, max_chars: int | None) -> str:
        raise NotImplementedError

    def _record(self, caller: str, prompt: str, response: str) -> None:
        if self._recorder is not None:
            self._recorder.record(
                ModelCall(caller=caller, prompt=prompt, response=response, backend=self.backend_id)
            )

    def sample_text(self, prompt: str, *, max_chars: int | None = None, caller: str = "") -> str:
        response = self._complete(prompt, max_chars)
        self._record(caller, prompt, response)
        return response

    def sample_choice(
        self, prompt: str, options: list[str] | tuple[str, ...], *, caller: str = ""
    ) -> tuple[int, str]:
        """Ask for one option; re-prompt on garbage, then give up.

        The first attempt sends the prompt as rendered by the caller.  Each
        repair attempt appends an explicit instruction to answer with exactly
        one option.  After the retry budget the last parse error propagates.
        """
        attempt_prompt = prompt
        last_error: NoMatchingOption | None = None
        for attempt in range(1 + CHOICE_RETRY_BUDGET):
            if attempt > 0:
                attempt_prompt = attempt_prompt + "\n" + _CHOICE_REPAIR
            raw = self.sample_text(attempt_prompt, caller=caller)
            try:
                return parse_choice(raw, options)
            except NoMatchingOption as exc:
                last_error = exc
        raise last_error  # type: ignore[misc]


def render_choice_prompt(prompt: str, options: list[str] | tuple[str, ...]) -> str:
    """Standard option footer appended to choice prompts."""
    listed = "\n".join(f"- {option}" for option in options)
    return f"{prompt}\nPick exactly one option:\n{listed}\nAnswer:"


@dataclass
class ScriptRule:
    """One response rule: a matcher, the reply, and a consumption budget.

    Exactly one of ``contains``, ``contains_all``, ``pattern`` must be set.
    ``max_uses`` of None means the rule never exhausts.
    """

    response: str
    contains: str | None = None
    contains_all: tuple[str, ...] | None = None
    pattern: str | None = None
    max_uses: int | None = None
    uses: int = field(default=0, compare=False)

    def __post_init__(self):
        matchers = [m for m in (self.contains, self.contains_all, self.pattern) if m is not None]
        if len(matchers) != 1:
            raise ValueError("rule needs exactly one of contains / contains_all / pattern")
        if self.pattern is not None:
            self._compiled = re.compile(self.pattern, re.DOTALL)

    def matches(self, prompt: str) -> bool:
        if self.max_uses is not None and self.uses >= self.max_uses:
            return False
        if self.contains is not None:
            return self.contains in prompt
        if self.contains_all is not None:
            return all(piece in prompt for piece in self.contains_all)
        return self._compiled.search(prompt) is not None

    def to_dict(self) -> dict:
        data: dict = {"response": self.response}
        if self.contains is not None:
            data["contains"] = self.contains
        if self.contains_all is not None:
            data["contains_all"] = list(self.contains_all)
        if self.pattern is not None:
            data["pattern"] = self.pattern
        if self.max_uses is not None:
            data["max_uses"] = self.max_uses
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptRule":
        contains_all = data.get("contains_all")
        return cls(
            response=data["response"],
            contains=data.get("contains"),
            contains_all=tuple(contains_all) if contains_all is not None else None,
            pattern=data.get("pattern"),
            max_uses=data.get("max_uses"),
        )


class ScriptedModel(GenerativeModel):
    """Deterministic backend driven by an ordered rule list.

    The first live rule whose matcher hits the prompt answers and consumes
    one use; with no hit the default response answers.  Apart from the
    per-rule counters the backend is stateless, so identical prompt
    sequences always produce identical response sequences.
    """

    backend_id = "scripted"

    def __init__(self, rules: list[ScriptRule] | None = None, default_response: str = "pass"):
        super().__init__()
        self.rules = list(rules or [])
        self.default_response = default_response
        self.call_count = 0
        self._lock = threading.Lock()

    def _complete(self, prompt: str, max_chars: int | None) -> str:
        with self._lock:
            self.call_count += 1
            for rule in self.rules:
                if rule.matches(prompt):
                    rule.uses += 1
                    return rule.response
            return self.default_response

    def to_dict(self) -> dict:
        return {
            "default": self.default_response,
            "rules": [rule.to_dict() for rule in self.rules],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptedModel":
        return cls(
            rules=[ScriptRule.from_dict(r) for r in data.get("rules", [])],
            default_response=data.get("default", "pass"),
        )

    @classmethod
    def from_file(cls, path: str) -> "ScriptedModel":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


class EchoModel(GenerativeModel):
    """Fallback backend: answers with the last non-empty prompt line."""

    backend_id = "echo"

    def _complete(self, prompt: str, max_chars: int | None) -> str:
        lines = [line for line in prompt.splitlines() if line.strip()]
        return lines[-1].strip() if lines else ""


ENDPOINT_VAR = "GABM_MODEL_ENDPOINT"
KEY_VAR = "GABM_MODEL_KEY"
NAME_VAR = "GABM_MODEL_NAME"


class HttpModel(GenerativeModel):
    """Chat-completions adapter for an OpenAI-style HTTP endpoint.

    Endpoint, API key, and model name come from the constructor or the
    GABM_MODEL_ENDPOINT / GABM_MODEL_KEY / GABM_MODEL_NAME environment
    variables.  Transient failures are retried with backoff; a run out of
    retries surfaces as BackendUnavailable.
    """

    backend_id = "http"

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model_name: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
    ):
        super().__init__()
        self.endpoint = (endpoint or os.environ.get(ENDPOINT_VAR, "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(KEY_VAR, "")
        self.model_name = model_name or os.environ.get(NAME_VAR, "")
        self.timeout = timeout
        self.max_retries = max_retries
        if not self.endpoint:
            raise BackendUnavailable(f"no endpoint configured; set {ENDPOINT_VAR}")

    def _complete(self, prompt: str, max_chars: int | None) -> str:
        import requests

        payload: dict = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
        }
        if max_chars is not None:
            payload["max_tokens"] = max(1, max_chars // CHARS_PER_TOKEN)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.endpoint}/chat/completions"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                reply = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
                reply.raise_for_status()
                body = reply.json()
                return body["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - any transport failure retries
                last_error = exc
                time.sleep(min(2.0**attempt, 8.0))
        raise BackendUnavailable(f"model endpoint failed after {self.max_retries} tries: {last_error}")


class ReplayModel(GenerativeModel):
    """Feeds back a recorded call sequence, in original issue order.

    Each call pops the next recorded response regardless of prompt content;
    any divergence from the original run then shows up as a byte difference
    in the regenerated trace.  The recorded backend id is replayed too so
    regenerated model-call entries match the originals exactly.
    """

    def __init__(self, calls: list[ModelCall]):
        super().__init__()
        self._queue = list(calls)
        self._position = 0
        self.backend_id = "replay"

    def _complete(self, prompt: str, max_chars: int | None) -> str:
        if self._position >= len(self._queue):
            return ""
        recorded = self._queue[self._position]
        self._position += 1
        self.backend_id = recorded.backend
        return recorded.response

    @property
    def exhausted(self) -> bool:
        return self._position >= len(self._queue)
