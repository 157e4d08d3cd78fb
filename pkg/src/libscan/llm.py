"""LLM channel: prompt assembly, majority voting and the feedback loop.

A prompt is rendered as contract code, then the pattern catalog, then the
answer instructions. Every feedback round appends the previous verdict (as
canonical JSON) and a re-examination request. Each round asks the backend for
``k`` samples at temperature 0 and keeps the modal label.

Backends share one method, ``complete(prompt, sample) -> str``. The replay
backend serves stored transcripts, so the whole channel runs offline.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import string
import tempfile
import time
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Protocol, Sequence

from .kb import PatternLabel, PatternRecord, kb_by_label

log = logging.getLogger(__name__)

API_KEY_ENV = "LIBSCAN_LLM_API_KEY"
DEFAULT_K = 5
DEFAULT_MAX_ITERATIONS = 3
TEMPERATURE = 0.0
RETRIES = 3
VERDICT_FIELDS = ("pattern", "name", "description", "snippet")

INSTRUCTIONS = """\
Task: decide whether the contract above misuses a library in one of the
patterns P1 to P8 listed in the catalog. Compare the contract's logic with
each pattern's definition and its example snippets. If several patterns
apply, report the one with the most direct evidence.

Finish with exactly one fenced JSON object:

```json
{"pattern": "P1".."P8" or "NONE", "name": "<pattern name>", "description": "<why this code matches>", "snippet": "<the offending code, copied verbatim>"}
```

Use "NONE" with empty name, description and snippet when no pattern applies."""

RATIONALE_DIRECTIVE = """\
Let's think step by step. First write out your reasoning about which
library calls the contract makes and what each one guarantees, then give
the JSON answer; the answer must agree with that reasoning."""


class LlmError(RuntimeError):
    pass


class BackendError(LlmError):
    """Transport failure after retries, or a replay miss."""


class MalformedResponse(LlmError, ValueError):
    pass


class AllResponsesMalformed(LlmError):
    def __init__(self, raw_responses: Sequence[str]):
        super().__init__(f"all {len(raw_responses)} responses were unparseable")
        self.raw_responses = tuple(raw_responses)


# ---------------------------------------------------------------- verdicts


@dataclass(frozen=True)
class LlmVerdict:
    label: PatternLabel
    name: str = ""
    description: str = ""
    snippet: str = ""
    # raw responses of the round that produced this verdict
    raw: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "pattern": self.label.value,
            "name": self.name,
            "description": self.description,
            "snippet": self.snippet,
        }

    def to_json(self) -> str:
        """Canonical form; quoted verbatim in the next feedback prompt."""
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, obj: dict) -> "LlmVerdict":
        return cls(PatternLabel.parse(obj["pattern"]), obj.get("name", ""),
                   obj.get("description", ""), obj.get("snippet", ""))


_FENCE_RE = re.compile(r"```(?:json|JSON)?[ \t]*\n(.*?)```", re.S)


def _json_objects(raw: str) -> Iterator[object]:
    for m in _FENCE_RE.finditer(raw):
        try:
            yield json.loads(m.group(1))
        except json.JSONDecodeError:
            pass
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\{", raw):
        try:
            obj, _ = decoder.raw_decode(raw, m.start())
        except json.JSONDecodeError:
            continue
        yield obj


def parse_structured_response(raw: str, kb: Sequence[PatternRecord] | None = None) -> LlmVerdict:
    """Extract the verdict object from a model response.

    A fenced JSON block is preferred, then the first bare object that
    decodes and has a ``pattern`` key. Positive labels need all four fields;
    NONE may omit the other three. With ``kb`` given, the name is replaced by
    the knowledge-base name for the label.
    """
    for obj in _json_objects(raw):
        if isinstance(obj, dict) and "pattern" in obj:
            break
    else:
        raise MalformedResponse("no JSON verdict object found")
    try:
        label = PatternLabel.parse(obj["pattern"])
    except ValueError:
        raise MalformedResponse(f"bad pattern label {obj['pattern']!r}") from None
    values = {}
    for key in VERDICT_FIELDS[1:]:
        value = obj.get(key)
        if value is None and label is PatternLabel.NONE:
            value = ""
        if not isinstance(value, str):
            raise MalformedResponse(f"field {key!r} missing or not a string")
        values[key] = value
    if kb is not None and label is not PatternLabel.NONE:
        values["name"] = kb_by_label(kb)[label].name
    return LlmVerdict(label, raw=(raw,), **values)


# ---------------------------------------------------------------- prompts


def render_catalog(kb: Sequence[PatternRecord]) -> str:
    blocks = []
    for rec in kb:
        snippets = "\n".join(f"```solidity\n{s.strip()}\n```" for s in rec.snippets)
        blocks.append(f"{rec.pattern.value}: {rec.name}\n{rec.description}\nExamples:\n{snippets}")
    return "Library misuse patterns:\n\n" + "\n\n".join(blocks)


@dataclass(frozen=True)
class PromptBundle:
    contract_code: str
    pattern_catalog: str
    instructions: str
    rationale_directive: str
    feedback: tuple[str, ...] = ()

    def render(self) -> str:
        parts = [
            "Contract:\n```solidity\n" + self.contract_code.rstrip("\n") + "\n```",
            self.pattern_catalog,
            self.instructions,
            self.rationale_directive,
        ]
        parts.extend(self.feedback)
        return "\n\n".join(parts) + "\n"

    @property
    def sha256(self) -> str:
        return prompt_sha256(self.render())


def prompt_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def generate_initial_prompt(code: str, kb: Sequence[PatternRecord]) -> PromptBundle:
    return PromptBundle(code, render_catalog(kb), INSTRUCTIONS, RATIONALE_DIRECTIVE)


@dataclass(frozen=True)
class FeedbackTemplate:
    version: str
    positive: string.Template
    none: string.Template


def load_feedback_template(path: str | Path | None = None) -> FeedbackTemplate:
    if path is None:
        text = resources.files("libscan").joinpath("data/feedback_template.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    version = ""
    sections: dict[str, list[str]] = {}
    current: Optional[list[str]] = None
    for line in text.splitlines():
        m = re.fullmatch(r"== (\w+) ==", line.strip())
        if m:
            current = sections.setdefault(m.group(1), [])
        elif current is not None:
            current.append(line)
        elif line.startswith("# feedback-template"):
            version = line.split()[-1]
    missing = {"positive", "none"} - sections.keys()
    if missing:
        raise ValueError(f"feedback template lacks section(s): {sorted(missing)}")
    body = {k: string.Template("\n".join(v).strip("\n")) for k, v in sections.items()}
    return FeedbackTemplate(version, body["positive"], body["none"])


def generate_feedback_prompt(
    prev: PromptBundle,
    verdict: LlmVerdict,
    kb: Sequence[PatternRecord],
    template: FeedbackTemplate | None = None,
) -> PromptBundle:
    """Extend ``prev`` with the prior verdict and a re-examination block."""
    template = template or load_feedback_template()
    records = kb_by_label(kb)
    if verdict.label is PatternLabel.NONE:
        checklist = "\n".join(f"- {r.pattern.value} ({r.name}): {r.description}" for r in kb)
        block = template.none.substitute(verdict=verdict.to_json(), checklist=checklist)
    else:
        rec = records[verdict.label]
        others = ", ".join(r.pattern.value for r in kb if r.pattern is not verdict.label)
        block = template.positive.substitute(
            verdict=verdict.to_json(),
            pattern=verdict.label.value,
            name=rec.name,
            snippet=verdict.snippet or "(no snippet given)",
            description=rec.description,
            others=others,
        )
    return PromptBundle(
        prev.contract_code, prev.pattern_catalog, prev.instructions, prev.rationale_directive,
        prev.feedback + (block,),
    )


# ---------------------------------------------------------------- backends


class LlmBackend(Protocol):
    def complete(self, prompt: str, sample: int) -> str:
        """Return the model's reply to ``prompt`` (``sample`` is the vote index)."""


class ScriptedBackend:
    """Serves canned replies in order; for tests and transcript generation.

    ``replies`` is either a flat sequence consumed one reply per request, or
    a callable ``(prompt, sample, call_index) -> str``.
    """

    def __init__(self, replies: Sequence[str] | Callable[[str, int, int], str]):
        self._replies = replies
        self.calls: list[tuple[str, int]] = []

    def complete(self, prompt: str, sample: int) -> str:
        index = len(self.calls)
        self.calls.append((prompt, sample))
        if callable(self._replies):
            return self._replies(prompt, sample, index)
        if index >= len(self._replies):
            raise BackendError("scripted backend ran out of replies")
        return self._replies[index]


class ReplayBackend:
    """Answers from stored transcripts, keyed by the prompt's SHA-256."""

    def __init__(self, transcript_dir: str | Path):
        self.directory = Path(transcript_dir)
        self.responses: dict[str, tuple[str, ...]] = {}
        if not self.directory.is_dir():
            raise BackendError(f"transcript directory not found: {self.directory}")
        for path in sorted(self.directory.glob("*.json")):
            data = json.loads(path.read_text("utf-8"))
            for it in data.get("iterations", []):
                self.responses[it["prompt_sha256"]] = tuple(it["raw_responses"])

    def complete(self, prompt: str, sample: int) -> str:
        digest = prompt_sha256(prompt)
        stored = self.responses.get(digest)
        if stored is None:
            raise BackendError(f"no transcript for prompt {digest[:12]}")
        if sample >= len(stored):
            raise BackendError(f"transcript for prompt {digest[:12]} has only {len(stored)} samples")
        return stored[sample]


class HttpBackend:
    """OpenAI-compatible chat-completions endpoint at temperature 0."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        retries: int = RETRIES,
        backoff: float = 1.0,
        client=None,
    ):
        import httpx

        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.retries = retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)
        self._httpx = httpx

    def complete(self, prompt: str, sample: int) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = {
            "model": self.model,
            "temperature": TEMPERATURE,
            "messages": [{"role": "user", "content": prompt}],
        }
        last: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.url, json=body, headers=headers)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = BackendError(f"HTTP {resp.status_code}")
                    continue
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (self._httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last = exc
        raise BackendError(f"request failed after {self.retries} attempts: {last}")


class RecordingBackend:
    """Wraps a live backend and keeps every exchange for later persistence."""

    def __init__(self, inner: LlmBackend):
        self.inner = inner
        self.exchanges: list[tuple[str, int, str]] = []

    def complete(self, prompt: str, sample: int) -> str:
        reply = self.inner.complete(prompt, sample)
        self.exchanges.append((prompt_sha256(prompt), sample, reply))
        return reply


# ---------------------------------------------------------------- voting and the loop


def majority_label(labels: Iterable[PatternLabel]) -> PatternLabel:
    """Modal label; ties go to the lowest ordinal, so NONE loses every tie."""
    counts = Counter(labels)
    if not counts:
        raise ValueError("no labels to vote on")
    return min(counts, key=lambda lab: (-counts[lab], lab.code))


def query_majority(
    backend: LlmBackend,
    prompt: PromptBundle,
    k: int = DEFAULT_K,
    kb: Sequence[PatternRecord] | None = None,
) -> LlmVerdict:
    if k < 1:
        raise ValueError("k must be at least 1")
    text = prompt.render()
    raws = [backend.complete(text, i) for i in range(k)]
    parsed = []
    for raw in raws:
        try:
            parsed.append(parse_structured_response(raw, kb))
        except MalformedResponse:
            log.debug("discarding malformed response: %.80r", raw)
    if not parsed:
        raise AllResponsesMalformed(raws)
    winner = majority_label(v.label for v in parsed)
    chosen = next(v for v in parsed if v.label is winner)
    return LlmVerdict(chosen.label, chosen.name, chosen.description, chosen.snippet, raw=tuple(raws))


@dataclass
class FeedbackSession:
    contract_id: str
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    prompts: list[PromptBundle] = field(default_factory=list)
    verdicts: list[LlmVerdict] = field(default_factory=list)

    @property
    def iteration(self) -> int:
        return len(self.verdicts)

    @property
    def final(self) -> LlmVerdict:
        if not self.verdicts:
            raise LlmError("session has no verdicts")
        return self.verdicts[-1]

    def converged(self) -> bool:
        return len(self.verdicts) >= 2 and self.verdicts[-1].label is self.verdicts[-2].label

    def to_transcript(self) -> dict:
        return {
            "contract_id": self.contract_id,
            "iterations": [
                {"prompt_sha256": p.sha256, "raw_responses": list(v.raw), "parsed": v.to_dict()}
                for p, v in zip(self.prompts, self.verdicts)
            ],
        }


class TranscriptStore:
    """One JSON file per session, written atomically."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path_for(self, contract_id: str) -> Path:
        safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", contract_id).strip("._") or "contract"
        return self.directory / f"{safe}.json"

    def save(self, session: FeedbackSession) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        target = self.path_for(session.contract_id)
        text = json.dumps(session.to_transcript(), indent=2, ensure_ascii=False) + "\n"
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return target

    def load(self, contract_id: str) -> dict:
        return json.loads(self.path_for(contract_id).read_text("utf-8"))


def run_session(
    backend: LlmBackend,
    code: str,
    kb: Sequence[PatternRecord],
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    k: int = DEFAULT_K,
    contract_id: str = "contract",
    store: TranscriptStore | None = None,
    template: FeedbackTemplate | None = None,
) -> FeedbackSession:
    """Initial prompt, then feedback rounds until two labels agree or the cap is hit."""
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    template = template or load_feedback_template()
    session = FeedbackSession(contract_id, max_iterations)
    prompt = generate_initial_prompt(code, kb)
    try:
        while True:
            verdict = query_majority(backend, prompt, k, kb)
            session.prompts.append(prompt)
            session.verdicts.append(verdict)
            if session.converged() or session.iteration >= max_iterations:
                break
            prompt = generate_feedback_prompt(prompt, verdict, kb, template)
    finally:
        if store is not None:
            store.save(session)
    return session


def run_feedback_loop(
    backend: LlmBackend,
    code: str,
    kb: Sequence[PatternRecord],
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    **kwargs,
) -> LlmVerdict:
    return run_session(backend, code, kb, max_iterations, **kwargs).final
