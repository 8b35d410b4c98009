"""Instruction decomposition through an external chat-completion service."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Protocol

import httpx

from .instr_graph import DecompositionError, InstructionGraph, parse_decomposition

PROMPT_TEMPLATE = """\
Split the navigation instruction below into movement stages and answer with JSON shaped like:
{
  "stage 1": {
    "waypoint position": <position>,
    "connected nodes": [
      {"node": <object>, "object position": <position>},
      ...
    ]
  },
  ...
}

Input Instruction: <Instruction>

Rules:
- A stage contains exactly one change of position; turning in place is not a stage.
- "waypoint position" gives where the next waypoint lies relative to the current one: one of "front", "right", "left", "back", "unknown". When the instruction states a distance, write {"direction": <position>, "distance_m": <meters>} instead.
- "connected nodes" lists the objects mentioned in that stage, each object in exactly one stage.
- "object position" is the object's relation to the path: one of "right", "left", "through", "weave", "pass", "near", "back".
"""


class AdapterError(RuntimeError):
    """The decomposition service could not be reached or answered garbage."""


class DecompositionAdapter(Protocol):
    def complete(self, prompt: str) -> str: ...


def build_prompt(instruction: str) -> str:
    return PROMPT_TEMPLATE.replace("<Instruction>", instruction.strip())


def extract_document(reply: str) -> Optional[str]:
    """First balanced top-level ``{...}`` block in ``reply``, honoring JSON strings."""
    depth = 0
    start = None
    in_str = escape = False
    for i, ch in enumerate(reply):
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"' and depth > 0:
            in_str = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                return reply[start : i + 1]
    return None


def decompose_via_adapter(instruction: str, adapter: DecompositionAdapter, retries: int = 2) -> InstructionGraph:
    if not instruction.strip():
        raise DecompositionError("instruction is empty")
    prompt = build_prompt(instruction)
    last = "no reply"
    for _ in range(retries + 1):
        reply = adapter.complete(prompt)
        doc = extract_document(reply)
        if doc is None:
            last = "reply contains no JSON object"
            continue
        try:
            return parse_decomposition(doc)
        except DecompositionError as exc:
            last = str(exc)
    raise DecompositionError(f"no parseable document after {retries + 1} attempts ({last})")


@dataclass
class HttpChatAdapter:
    """OpenAI-style ``/chat/completions`` client."""

    url: str
    model: str = "default"
    api_key_env: Optional[str] = None
    timeout: float = 120.0
    transport: Optional[httpx.BaseTransport] = None

    @classmethod
    def from_config(cls, cfg: dict, url: Optional[str] = None) -> "HttpChatAdapter":
        section = cfg.get("adapter", {}) if cfg else {}
        return cls(
            url=url or section["url"],
            model=section.get("model", cls.model),
            api_key_env=section.get("api_key_env"),
        )

    def complete(self, prompt: str) -> str:
        headers = {}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        try:
            with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
                resp = client.post(self.url, json=body, headers=headers)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise AdapterError(f"decomposition request to {self.url} failed: {exc}") from exc
