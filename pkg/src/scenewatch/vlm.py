"""Client for qualitative scene assessment through a multimodal chat endpoint.

Two frozen prompt templates are supported; their byte content is part of the
contract and pinned by tests. Requests are POSTed as chat-completions-shaped
JSON (one text part, one base64 data-URI image part, temperature 0) so any
local model server exposing that shape can answer them.
"""

from __future__ import annotations

import base64
import json
import mimetypes
import os
import threading
import time
from dataclasses import dataclass

import requests

from .errors import EndpointError, ResponseSchemaError, TransportError, UnknownTemplate

DEFAULT_MAX_NEW_TOKENS = 100

# local model servers are easy to overload; cap in-flight requests per endpoint
_endpoint_slots: dict[str, threading.BoundedSemaphore] = {}
_slots_lock = threading.Lock()


def _endpoint_slot(url: str, limit: int) -> threading.BoundedSemaphore:
    with _slots_lock:
        if url not in _endpoint_slots:
            _endpoint_slots[url] = threading.BoundedSemaphore(max(1, limit))
        return _endpoint_slots[url]


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str
    question: str


_ORGANIZATION_TEXT = (
    "A chat between a curious user and an extremely picky inspector for the R&D lab. "
    "The inspector gives detailed answers to the user's questions. "
    "USER: <image>\\ Is the lab organized or disorganized?: ASSISTANT:"
)

_FLOOR_TEXT = (
    "A chat between a curious user and an extremely picky inspector for the R&D lab. "
    "There should be no objects on the floor."
    "The inspector gives detailed answers to the user's questions. "
    "USER: <image>\\ What is on the floor?: ASSISTANT:"
)

TEMPLATES = {
    "organization": PromptTemplate(
        id="organization",
        text=_ORGANIZATION_TEXT,
        question="Is the lab organized or disorganized?",
    ),
    "floor": PromptTemplate(
        id="floor",
        text=_FLOOR_TEXT,
        question="What is on the floor?",
    ),
}


def render_prompt(template_id: str) -> str:
    if template_id not in TEMPLATES:
        raise UnknownTemplate(
            f"unknown template {template_id!r}; known: {sorted(TEMPLATES)}"
        )
    return TEMPLATES[template_id].text


def parse_verdict(text: str) -> str:
    """Keyword scan with disorganized-first precedence.

    "disorganized" contains "organized", so the longer keyword must win;
    answers carrying neither keyword report unknown.
    """
    lowered = text.lower()
    if "disorganized" in lowered:
        return "disorganized"
    if "organized" in lowered:
        return "organized"
    return "unknown"


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str = "local-mslm"
    api_key_env: str = "SCENEWATCH_VLM_KEY"
    timeout_ms: int = 60000
    max_tokens: int = DEFAULT_MAX_NEW_TOKENS
    max_retries: int = 2
    backoff_s: float = 0.5
    concurrency: int = 2

    def resolved_url(self) -> str:
        url = self.url.rstrip("/")
        if url.endswith("/v1/chat/completions") or url.endswith("/chat/completions"):
            return url
        return url + "/v1/chat/completions"


@dataclass(frozen=True)
class AssessmentRecord:
    scene_id: str
    template_id: str
    raw_response: str
    verdict: str
    latency_ms: float
    endpoint: str
    max_new_tokens: int

    def to_document(self) -> dict:
        return {
            "schema": "scenewatch-assessment/1",
            "scene_id": self.scene_id,
            "template_id": self.template_id,
            "raw_response": self.raw_response,
            "verdict": self.verdict,
            "latency_ms": self.latency_ms,
            "endpoint": self.endpoint,
            "max_new_tokens": self.max_new_tokens,
        }


def _image_data_uri(image_path: str) -> str:
    mime = mimetypes.guess_type(image_path)[0] or "image/png"
    with open(image_path, "rb") as fh:
        payload = base64.b64encode(fh.read()).decode("ascii")
    return f"data:{mime};base64,{payload}"


def build_request_body(image_path: str, template_id: str, config: EndpointConfig) -> dict:
    return {
        "model": config.model,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": render_prompt(template_id)},
                    {"type": "image_url", "image_url": {"url": _image_data_uri(image_path)}},
                ],
            }
        ],
        "max_tokens": config.max_tokens,
        "temperature": 0,
    }


def assess(image_path: str, template_id: str, config: EndpointConfig,
           scene_id: str = "") -> AssessmentRecord:
    """One assessment request; transport failures retried with backoff.

    At most 1 + max_retries attempts are made; the failure then surfaces as
    TransportError. Non-2xx responses raise EndpointError without retrying.
    """
    body = build_request_body(image_path, template_id, config)
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(config.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    url = config.resolved_url()
    attempts = 1 + max(0, config.max_retries)
    started = time.monotonic()
    last_exc: Exception | None = None
    response = None
    slot = _endpoint_slot(url, config.concurrency)
    for attempt in range(attempts):
        try:
            with slot:
                response = requests.post(
                    url, data=json.dumps(body), headers=headers,
                    timeout=config.timeout_ms / 1000.0,
                )
            break
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_exc = exc
            if attempt + 1 < attempts:
                time.sleep(config.backoff_s * (2 ** attempt))
    if response is None:
        raise TransportError(
            f"endpoint unreachable after {attempts} attempts: {last_exc}", attempts=attempts
        )
    latency_ms = (time.monotonic() - started) * 1000.0

    if not (200 <= response.status_code < 300):
        raise EndpointError(
            f"endpoint returned {response.status_code}",
            status=response.status_code,
            body=response.text[:2000],
        )
    try:
        doc = response.json()
        content = doc["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ResponseSchemaError(f"unexpected response shape: {exc}") from exc
    if not isinstance(content, str):
        raise ResponseSchemaError(f"message content is {type(content).__name__}, expected string")

    return AssessmentRecord(
        scene_id=scene_id,
        template_id=template_id,
        raw_response=content,
        verdict=parse_verdict(content),
        latency_ms=latency_ms,
        endpoint=url,
        max_new_tokens=config.max_tokens,
    )
