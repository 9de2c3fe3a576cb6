"""Prompt-variant generation and ensembling.

A single phrasing of an edit ("a ship is on fire") can pull the guidance
toward unrelated senses of its words. Averaging the embeddings of several
synonymous phrasings damps that. Variants come from a chat-model client
when one is configured, and otherwise from a small offline rewrite bank
shipped with the package; a client failure logs a warning and falls back to
the bank, so the pipeline never depends on the network.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .embedders import Embedder
from .errors import DegenerateEnsembleError, InvalidInputError

logger = logging.getLogger(__name__)

DEFAULT_VARIANT_COUNT = 5

INSTRUCTION_TEMPLATE = (
    "I need you act as a text prompt generator. I will give you a text prompt "
    "that you need to use common sense to translate into a total of {count} "
    "prompts with different descriptions but similar meanings. Each prompt "
    "given meets the same syntax format as the original text prompt and is "
    "concise and easy to understand. Here is an example: Given \"A ship is on "
    "fire\", you need to take into account the actual scenario of the ship on "
    "fire and generate the approximate description \"A ship is burning\". You "
    "only need to provide the generated text prompt, you do not need to "
    "explain why."
)


@dataclass
class TemplateRule:
    pattern: re.Pattern
    replacement: str


def load_template_bank(path: str | None = None) -> list[TemplateRule]:
    """Parse the rewrite rules; see the data file header for the format."""
    if path is None:
        text = (resources.files("sinedit") / "data" / "prompt_templates.txt").read_text(
            encoding="utf-8"
        )
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rules = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=>" not in line:
            raise InvalidInputError(f"bad template line (no '=>'): {line!r}")
        pattern_text, replacement = (part.strip() for part in line.split("=>", 1))
        regex = re.escape(pattern_text).replace(re.escape("{x}"), "(?P<x>.+?)")
        rules.append(
            TemplateRule(
                pattern=re.compile(f"^{regex}$", re.IGNORECASE),
                replacement=replacement,
            )
        )
    return rules


def offline_variants(text: str, rules: list[TemplateRule] | None = None) -> list[str]:
    """All rewrites of the prompt the bank can produce, in bank order."""
    if rules is None:
        rules = load_template_bank()
    out = []
    for rule in rules:
        match = rule.pattern.match(text.strip())
        if match:
            out.append(rule.replacement.replace("{x}", match.group("x")))
    return out


class ChatVariantClient:
    """Minimal chat-completion client for variant generation.

    Speaks the common JSON chat API: POST {base_url}/chat/completions with a
    model name and messages, reads choices[0].message.content. The API key
    comes from an environment variable so it never lands in configs on disk.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "SINEDIT_LLM_API_KEY",
        timeout: float = 20.0,
        retries: int = 2,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.retries = retries

    def generate(self, text: str, count: int) -> list[str]:
        import requests

        key = os.environ.get(self.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": INSTRUCTION_TEMPLATE.format(count=count)},
                {"role": "user", "content": text},
            ],
        }
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = requests.post(
                    f"{self.base_url}/chat/completions",
                    data=json.dumps(payload),
                    headers=headers,
                    timeout=self.timeout,
                )
                response.raise_for_status()
                content = response.json()["choices"][0]["message"]["content"]
                return _parse_variant_lines(content)
            except Exception as exc:  # noqa: BLE001 - any failure falls back offline
                last_error = exc
        raise RuntimeError(f"variant generation failed: {last_error}")


def _parse_variant_lines(content: str) -> list[str]:
    lines = []
    for raw in content.splitlines():
        line = re.sub(r"^\s*(?:[-*]|\d+[.)])\s*", "", raw.strip())
        line = line.strip().strip('"').strip()
        if line:
            lines.append(line)
    return lines


def _dedupe(texts: list[str]) -> list[str]:
    seen = set()
    out = []
    for t in texts:
        key = t.strip().lower()
        if key and key not in seen:
            seen.add(key)
            out.append(t.strip())
    return out


def generate_variants(
    text: str,
    llm_client: ChatVariantClient | None = None,
    k: int = DEFAULT_VARIANT_COUNT,
    rules: list[TemplateRule] | None = None,
) -> list[str]:
    """Up to k distinct phrasings, the original always first.

    k counts the original, so k = 1 returns just [text]. The offline bank
    may produce fewer than requested; the result is simply shorter then.
    """
    if not text or not text.strip():
        raise InvalidInputError("prompt text is empty")
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    original = text.strip()
    if k == 1:
        return [original]

    generated: list[str] = []
    if llm_client is not None:
        try:
            generated = llm_client.generate(original, k)
        except Exception as exc:  # noqa: BLE001
            logger.warning("variant client failed (%s); using offline bank", exc)
            generated = []
    if not generated:
        generated = offline_variants(original, rules)
    return _dedupe([original] + generated)[:k]


def ensemble_embed(texts: list[str], embedder: Embedder) -> np.ndarray:
    """Unit-normalized mean of the per-text unit embeddings."""
    if not texts:
        raise InvalidInputError("no texts to ensemble")
    stack = np.stack([embedder.embed_text(t) for t in texts])
    mean = stack.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-8:
        raise DegenerateEnsembleError(
            f"ensemble of {len(texts)} prompts has near-zero mean embedding"
        )
    return (mean / norm).astype(np.float32)


@dataclass
class PromptBundle:
    """A prompt with its phrasing variants and their combined embedding."""

    original: str
    variants: list[str]
    embeddings: np.ndarray = field(repr=False)
    ensembled: np.ndarray = field(repr=False)


def build_prompt_bundle(
    text: str,
    embedder: Embedder,
    k: int = DEFAULT_VARIANT_COUNT,
    llm_client: ChatVariantClient | None = None,
) -> PromptBundle:
    variants = generate_variants(text, llm_client=llm_client, k=k)
    embeddings = np.stack([embedder.embed_text(t) for t in variants])
    return PromptBundle(
        original=text.strip(),
        variants=variants,
        embeddings=embeddings,
        ensembled=ensemble_embed(variants, embedder),
    )
