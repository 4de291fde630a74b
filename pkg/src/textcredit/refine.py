"""Loan-assessment refinement protocol.

Builds the fixed two-part analysis prompt around a human-written
assessment, talks to any OpenAI-compatible chat-completions endpoint (one
fresh single-turn request per document), parses the two numbered answer
sections, and caches responses on disk keyed by (prompt, model).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import requests

logger = logging.getLogger(__name__)

PROMPT_GREETING = "Hi ChatGPT, there is a bank loan borrower whose details are below."
PROMPT_TASK = (
    "The bank plans to lend to this borrower. Based on the above information, "
    "please carefully summarise and analyse the factors that support the "
    "borrower's ability to repay the loan on time and the factors that could "
    "lead to the borrower's default. The expected answer template consists of "
    "two parts: 1. Factors supporting the borrower's repayment: "
    "[Insert answer here]; 2. Factors that could potentially lead to the "
    "borrower's default: [Insert answer here]."
)

VARIANTS = ("positive", "negative", "pos_neg", "neg_pos")


class RefineError(Exception):
    """Base class for refinement-protocol failures."""


class AuthMissing(RefineError):
    pass


class HttpError(RefineError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(f"HTTP {status}: {message}" if message else f"HTTP {status}")
        self.status = status


class RateLimitedExhausted(RefineError):
    pass


class RequestTimeout(RefineError):
    pass


class MalformedResponse(RefineError):
    pass


class FormatMismatch(RefineError):
    """Response did not contain the two expected sections; ``raw`` is kept
    for manual handling."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


def build_prompt(human_text: str) -> str:
    """Render the refinement prompt around one assessment.

    Byte-deterministic: greeting, the original text, and the fixed task
    outline joined by single spaces.
    """
    if not human_text or not human_text.strip():
        raise ValueError("cannot build a prompt for empty text")
    return f"{PROMPT_GREETING} {human_text} {PROMPT_TASK}"


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 3
    rpm: int = 60
    auth_env: str = "REFINE_API_KEY"

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.rpm < 1:
            raise ValueError("rpm must be >= 1")


class RateLimiter:
    """Sliding-window limiter: at most ``rpm`` acquisitions per 60 seconds.

    The clock and sleep functions are injectable so the cap is testable
    against a fake clock.  Thread-safe.
    """

    def __init__(
        self,
        rpm: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rpm < 1:
            raise ValueError("rpm must be >= 1")
        self.rpm = rpm
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.rpm:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self._sleep(max(wait, 1e-3))


def call_llm(
    cfg: EndpointConfig,
    prompt: str,
    limiter: RateLimiter | None = None,
    session: requests.Session | None = None,
    sleep: Callable[[float], None] = time.sleep,
    backoff_base: float = 1.0,
    jitter_rng: np.random.Generator | None = None,
) -> str:
    """Send one single-turn chat request and return the first choice's text.

    Each call is its own conversation (no history).  HTTP 429 and 5xx
    responses are retried with exponential backoff plus jitter up to
    ``cfg.max_retries`` times; other failures raise immediately.
    """
    token = os.environ.get(cfg.auth_env)
    if not token:
        raise AuthMissing(f"environment variable {cfg.auth_env} is not set")
    url = cfg.base_url.rstrip("/")
    if not url.endswith("/chat/completions"):
        url += "/chat/completions"
    payload = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    }
    headers = {"Authorization": f"Bearer {token}", "Content-Type": "application/json"}
    post = (session or requests).post
    rng = jitter_rng if jitter_rng is not None else np.random.default_rng()

    last_status = None
    for attempt in range(cfg.max_retries + 1):
        if limiter is not None:
            limiter.acquire()
        try:
            resp = post(url, json=payload, headers=headers, timeout=cfg.timeout)
        except requests.Timeout as err:
            raise RequestTimeout(f"request timed out after {cfg.timeout}s") from err
        last_status = resp.status_code
        if resp.status_code == 429 or 500 <= resp.status_code < 600:
            if attempt < cfg.max_retries:
                delay = backoff_base * (2.0**attempt) + float(rng.uniform(0, backoff_base))
                logger.warning(
                    "chat endpoint returned %s; retry %d/%d in %.2fs",
                    resp.status_code,
                    attempt + 1,
                    cfg.max_retries,
                    delay,
                )
                sleep(delay)
                continue
            break
        if resp.status_code != 200:
            raise HttpError(resp.status_code, resp.text[:200])
        try:
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as err:
            raise MalformedResponse(f"unexpected response body: {err}") from err
    if last_status == 429:
        raise RateLimitedExhausted(f"rate limited after {cfg.max_retries} retries")
    raise HttpError(last_status or 0, f"server error after {cfg.max_retries} retries")


# Headers tolerate both apostrophe forms and "could lead" vs "could
# potentially lead"; anything else is a format mismatch, never a guess.
_APOS = "['’ʼ]"  # ASCII, right single quote, modifier apostrophe
_COLON = "[:：]"  # ASCII and full-width colon
_HEADER_POS = re.compile(
    r"1\s*[\.)]\s*factors\s+supporting\s+the\s+borrower" + _APOS + r"?s\s+repayment"
    r"\s*" + _COLON + "?",
    re.IGNORECASE,
)
_HEADER_NEG = re.compile(
    r"2\s*[\.)]\s*factors\s+that\s+could\s+(?:potentially\s+)?lead\s+to\s+the\s+"
    r"borrower" + _APOS + r"?s\s+default\s*" + _COLON + "?",
    re.IGNORECASE,
)


def _strip_section(text: str) -> str:
    text = text.strip()
    # drop a single leading bullet marker
    if text[:1] in ("*", "-", "•"):
        text = text[1:].strip()
    return text


def parse_sections(raw: str) -> dict[str, str]:
    """Split a refined response into its two numbered sections.

    Returns ``{"positive": ..., "negative": ...}``; the first header must
    precede the second.  Raises FormatMismatch (carrying the raw text) when
    the headers cannot be found in order.
    """
    m_pos = _HEADER_POS.search(raw)
    m_neg = _HEADER_NEG.search(raw)
    if m_pos is None or m_neg is None:
        raise FormatMismatch("expected the two numbered section headers", raw)
    if m_neg.start() < m_pos.end():
        raise FormatMismatch("section headers out of order", raw)
    positive = _strip_section(raw[m_pos.end() : m_neg.start()])
    negative = _strip_section(raw[m_neg.end() :])
    return {"positive": positive, "negative": negative}


def compose_variant(sections: dict[str, str], variant: str) -> str:
    """Assemble a refined-text variant from parsed sections.

    ``pos_neg`` joins positive then negative with a blank line; ``neg_pos``
    reverses the order (ordering matters downstream when encoders
    truncate); single sections are returned verbatim.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    need = {
        "positive": ("positive",),
        "negative": ("negative",),
        "pos_neg": ("positive", "negative"),
        "neg_pos": ("negative", "positive"),
    }[variant]
    for key in need:
        if not sections.get(key):
            raise ValueError(f"variant {variant!r} needs a non-empty {key!r} section")
    return "\n\n".join(sections[key] for key in need)


@dataclass(frozen=True)
class RefineResult:
    record_id: str
    raw: str
    positive: str
    negative: str
    model: str
    retrieved_from_cache: bool


def _cache_key(prompt: str, model: str) -> str:
    digest = hashlib.sha256()
    digest.update(prompt.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(model.encode("utf-8"))
    return digest.hexdigest()


def _checksum(raw: str) -> str:
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


def cached_refine(
    cache_dir: str | Path,
    cfg: EndpointConfig,
    record,
    limiter: RateLimiter | None = None,
    **call_kwargs,
) -> RefineResult:
    """Refine one record's human text, reusing the on-disk cache.

    The cache key is a cryptographic hash of (rendered prompt, model); a hit
    answers without any network call, and a corrupt entry is refetched with
    a warning.  ``record`` needs ``id`` and ``human_text`` attributes.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    prompt = build_prompt(record.human_text)
    key = _cache_key(prompt, cfg.model)
    entry_path = cache_dir / f"{key}.json"
    if entry_path.exists():
        try:
            entry = json.loads(entry_path.read_text(encoding="utf-8"))
            if entry["checksum"] != _checksum(entry["raw"]):
                raise ValueError("checksum mismatch")
            return RefineResult(
                record_id=record.id,
                raw=entry["raw"],
                positive=entry["positive"],
                negative=entry["negative"],
                model=entry["model"],
                retrieved_from_cache=True,
            )
        except (ValueError, KeyError) as err:
            logger.warning("corrupt cache entry %s (%s); refetching", entry_path, err)

    raw = call_llm(cfg, prompt, limiter=limiter, **call_kwargs)
    sections = parse_sections(raw)
    entry = {
        "prompt_hash": key,
        "model": cfg.model,
        "raw": raw,
        "positive": sections["positive"],
        "negative": sections["negative"],
        "timestamp": time.time(),
        "checksum": _checksum(raw),
    }
    tmp = entry_path.with_suffix(".tmp")
    tmp.write_text(json.dumps(entry, ensure_ascii=False), encoding="utf-8")
    tmp.replace(entry_path)
    return RefineResult(
        record_id=record.id,
        raw=raw,
        positive=sections["positive"],
        negative=sections["negative"],
        model=cfg.model,
        retrieved_from_cache=False,
    )


def refine_batch(
    cache_dir: str | Path,
    cfg: EndpointConfig,
    records,
    limiter: RateLimiter | None = None,
    max_concurrency: int = 2,
    **call_kwargs,
) -> tuple[dict[str, RefineResult], dict[str, Exception]]:
    """Refine many records with bounded concurrent requests.

    Records are grouped by cache key first, so a prompt shared by several
    records is fetched at most once even when requests run concurrently.
    Returns (results by record id, errors by record id); the shared rate
    limiter caps the request rate across workers.
    """
    from concurrent.futures import ThreadPoolExecutor

    if limiter is None:
        limiter = RateLimiter(cfg.rpm)
    groups: dict[str, list] = {}
    order: list[str] = []
    for rec in records:
        key = _cache_key(build_prompt(rec.human_text), cfg.model)
        if key not in groups:
            order.append(key)
        groups.setdefault(key, []).append(rec)

    def fetch(key: str):
        leader = groups[key][0]
        try:
            return key, cached_refine(
                cache_dir, cfg, leader, limiter=limiter, **call_kwargs
            ), None
        except RefineError as err:
            return key, None, err

    results: dict[str, RefineResult] = {}
    errors: dict[str, Exception] = {}
    with ThreadPoolExecutor(max_workers=max(1, max_concurrency)) as pool:
        for key, result, err in pool.map(fetch, order):
            for rec in groups[key]:
                if err is not None:
                    errors[rec.id] = err
                else:
                    results[rec.id] = RefineResult(
                        record_id=rec.id,
                        raw=result.raw,
                        positive=result.positive,
                        negative=result.negative,
                        model=result.model,
                        retrieved_from_cache=result.retrieved_from_cache
                        or rec.id != result.record_id,
                    )
    return results, errors
