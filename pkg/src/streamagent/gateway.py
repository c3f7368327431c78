"""Uniform access to chat-completion backends and the prompt template assets.

Two backend families: an OpenAI-compatible HTTP client with bounded retries,
and a deterministic scripted backend driven by ordered match rules (used for
benchmarks and tests). Every request/response pair is kept in an audit log so
downstream checks can scan exactly what each model call saw.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import requests

from .errors import ConfigError, GatewayError, ScriptMiss


class TemplateId(str, Enum):
    CAPTIONING = "captioning"
    BINARY_TRIGGER = "binary_trigger"
    COT_TRIGGER = "cot_trigger"
    ADVERSARIAL_REJECT = "adversarial_reject"
    REASONING = "reasoning"


TRIGGER_TEMPLATES = frozenset(
    {TemplateId.BINARY_TRIGGER, TemplateId.COT_TRIGGER, TemplateId.ADVERSARIAL_REJECT}
)

_TEMPLATE_FILES = {
    TemplateId.CAPTIONING: "captioning.txt",
    TemplateId.BINARY_TRIGGER: "binary_trigger.txt",
    TemplateId.COT_TRIGGER: "cot_trigger.txt",
    TemplateId.ADVERSARIAL_REJECT: "adversarial_reject.txt",
    TemplateId.REASONING: "reasoning.txt",
}

_template_cache: dict[TemplateId, str] = {}


def load_template(template_id: TemplateId) -> str:
    """Return the stored prompt template, byte-exact minus one trailing newline."""
    if template_id not in _template_cache:
        text = (
            resources.files("streamagent.prompts")
            .joinpath(_TEMPLATE_FILES[template_id])
            .read_text(encoding="utf-8")
        )
        _template_cache[template_id] = text.removesuffix("\n")
    return _template_cache[template_id]


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    locator: str


Part = TextPart | ImagePart


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_tokens: int = 1024


@dataclass(frozen=True)
class ModelRequest:
    template_id: TemplateId
    user_parts: tuple[Part, ...]
    decode: DecodeParams = DecodeParams()

    def __post_init__(self):
        if self.template_id in TRIGGER_TEMPLATES and self.decode.temperature != 0.0:
            raise ConfigError("trigger requests must use temperature 0")

    @property
    def system_text(self) -> str:
        return load_template(self.template_id)

    def flattened_user_text(self) -> str:
        """Every user part as one newline-joined string (script matching, audits)."""
        lines = []
        for part in self.user_parts:
            lines.append(part.text if isinstance(part, TextPart) else part.locator)
        return "\n".join(lines)


@dataclass(frozen=True)
class ModelResponse:
    text: str
    latency_ms: int = 0
    backend_id: str = "unknown"


@dataclass(frozen=True)
class ScriptRule:
    """First-match-wins response rule for the scripted backend.

    ``template`` restricts the rule to one template id (None matches all);
    ``contains`` is a plain substring test, ``pattern`` a regex search, both
    against the concatenated user parts. Exactly one of the two must be set.
    """

    response: str
    template: TemplateId | None = None
    contains: str | None = None
    pattern: str | None = None

    def __post_init__(self):
        if (self.contains is None) == (self.pattern is None):
            raise ConfigError("script rule needs exactly one of 'contains' or 'pattern'")

    def matches(self, request: ModelRequest) -> bool:
        if self.template is not None and request.template_id != self.template:
            return False
        haystack = request.flattened_user_text()
        if self.contains is not None:
            return self.contains in haystack
        return re.search(self.pattern, haystack) is not None


class ScriptedBackend:
    """Deterministic backend: pure function of (request, script rules, default)."""

    def __init__(self, rules: list[ScriptRule], default_response: str | None = None,
                 backend_id: str = "scripted"):
        self.rules = list(rules)
        self.default_response = default_response
        self.backend_id = backend_id

    def complete(self, request: ModelRequest) -> ModelResponse:
        for rule in self.rules:
            if rule.matches(request):
                return ModelResponse(rule.response, latency_ms=0, backend_id=self.backend_id)
        if self.default_response is not None:
            return ModelResponse(self.default_response, latency_ms=0, backend_id=self.backend_id)
        raise ScriptMiss(f"no script rule matched {request.template_id.value} request")


def load_script_rules(raw: list | str | Path) -> list[ScriptRule]:
    """Parse script rules from a JSON list or a file containing one."""
    if isinstance(raw, (str, Path)):
        path = Path(raw)
        if not path.is_file():
            raise ConfigError(f"gateway script file not found: {path}")
        raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ConfigError("gateway script must be a JSON list of rules")
    rules = []
    for entry in raw:
        template = entry.get("template")
        rules.append(
            ScriptRule(
                response=entry["response"],
                template=TemplateId(template) if template else None,
                contains=entry.get("contains"),
                pattern=entry.get("pattern"),
            )
        )
    return rules


class HttpBackend:
    """OpenAI-compatible chat-completions client with exponential-backoff retries."""

    def __init__(self, base_url: str, model: str, api_key: str = "",
                 timeout_s: float = 30.0, max_retries: int = 3,
                 max_in_flight: int = 4, supports_images: bool = False,
                 backoff_base_s: float = 0.5):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.supports_images = supports_images
        self.backoff_base_s = backoff_base_s
        self.backend_id = f"http:{model}"
        self._slots = threading.Semaphore(max_in_flight)

    def _messages(self, request: ModelRequest) -> list[dict]:
        image_parts = [p for p in request.user_parts if isinstance(p, ImagePart)]
        if image_parts and self.supports_images:
            content: list[dict] = []
            for part in request.user_parts:
                if isinstance(part, TextPart):
                    content.append({"type": "text", "text": part.text})
                else:
                    content.append({"type": "image_url", "image_url": {"url": part.locator}})
        else:
            content = request.flattened_user_text()
        return [
            {"role": "system", "content": request.system_text},
            {"role": "user", "content": content},
        ]

    def complete(self, request: ModelRequest) -> ModelResponse:
        payload = {
            "model": self.model,
            "messages": self._messages(request),
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"
        last_error: Exception | None = None
        started = time.monotonic()
        with self._slots:
            for attempt in range(self.max_retries):
                if attempt:
                    time.sleep(self.backoff_base_s * (2 ** (attempt - 1)))
                try:
                    resp = requests.post(url, json=payload, headers=headers,
                                         timeout=self.timeout_s)
                except requests.RequestException as exc:
                    last_error = exc
                    continue
                if resp.status_code // 100 != 2:
                    last_error = GatewayError(f"HTTP {resp.status_code} from {url}")
                    continue
                try:
                    text = resp.json()["choices"][0]["message"]["content"] or ""
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    last_error = GatewayError(f"malformed completion payload: {exc}")
                    continue
                latency = int((time.monotonic() - started) * 1000)
                return ModelResponse(text=text, latency_ms=latency, backend_id=self.backend_id)
        raise GatewayError(
            f"gave up after {self.max_retries} attempts: {last_error}"
        ) from last_error


@dataclass
class GatewayCall:
    request: ModelRequest
    response_text: str | None
    error: str | None = None


class ModelGateway:
    """Backend wrapper that records an audit trail of every call."""

    def __init__(self, backend):
        self.backend = backend
        self.call_log: list[GatewayCall] = []
        self._lock = threading.Lock()

    def complete(self, request: ModelRequest) -> ModelResponse:
        try:
            response = self.backend.complete(request)
        except GatewayError as exc:
            with self._lock:
                self.call_log.append(GatewayCall(request, None, error=str(exc)))
            raise
        with self._lock:
            self.call_log.append(GatewayCall(request, response.text))
        return response

    def dump_call_log(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for call in self.call_log:
                record = {
                    "template": call.request.template_id.value,
                    "system": call.request.system_text,
                    "user": call.request.flattened_user_text(),
                    "response": call.response_text,
                    "error": call.error,
                }
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def build_gateway(gateway_config: dict) -> ModelGateway:
    """Construct a gateway from the ``gateway`` section of a session config."""
    if not isinstance(gateway_config, dict):
        raise ConfigError("gateway config must be an object")
    kind = gateway_config.get("type", "scripted")
    if kind == "scripted":
        raw_rules = gateway_config.get("rules")
        if raw_rules is None and "script" in gateway_config:
            raw_rules = gateway_config["script"]
        rules = load_script_rules(raw_rules if raw_rules is not None else [])
        return ModelGateway(
            ScriptedBackend(rules, default_response=gateway_config.get("default_response"))
        )
    if kind == "http":
        import os

        key_env = gateway_config.get("api_key_env", "")
        return ModelGateway(
            HttpBackend(
                base_url=gateway_config["base_url"],
                model=gateway_config["model"],
                api_key=os.environ.get(key_env, "") if key_env else "",
                timeout_s=gateway_config.get("timeout_s", 30),
                max_retries=gateway_config.get("max_retries", 3),
                max_in_flight=gateway_config.get("max_in_flight", 4),
                supports_images=gateway_config.get("supports_images", False),
            )
        )
    raise ConfigError(f"unknown gateway type {kind!r}")
