"""End-to-end scanning: channel wiring, run configuration and reports.

In ``fused`` mode the static verdict is computed first, then the LLM
verdict, and the forest combines the two. If the LLM channel fails for a
file, that entry falls back to the static label and records a warning.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import datetime as _dt
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from . import __version__
from .evaluation import config_digest
from .forest import Forest, TrainingSample
from .kb import PatternLabel, load_kb, wrapper_pairs_near
from .llm import (
    DEFAULT_K,
    DEFAULT_MAX_ITERATIONS,
    HttpBackend,
    LlmBackend,
    LlmError,
    RecordingBackend,
    ReplayBackend,
    TranscriptStore,
    run_session,
)
from .rules import AnalysisMode, StaticAnalyzer
from .similarity import DEFAULT_THRESHOLD
from .solidity import LexError, parse

MODES = ("static-bcssm", "static-hcsa", "llm", "fused")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    kb_path: Optional[str] = None
    mode: str = "static-hcsa"
    match_threshold: float = DEFAULT_THRESHOLD
    model: Optional[str] = None
    base_url: Optional[str] = None
    k: int = DEFAULT_K
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    forest_path: Optional[str] = None
    seed: int = 0
    output_path: Optional[str] = None
    transcripts: Optional[str] = None
    record: bool = False
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if not 0.0 <= self.match_threshold <= 1.0:
            raise ConfigError("match threshold must lie in [0, 1]")
        if self.k < 1 or self.max_iterations < 1 or self.jobs < 1:
            raise ConfigError("k, max_iterations and jobs must be >= 1")
        if self.mode == "fused" and not self.forest_path:
            raise ConfigError("fused mode needs --forest")
        if self.mode in ("llm", "fused"):
            live = bool(self.base_url and self.model)
            if self.record and not (live and self.transcripts):
                raise ConfigError("--record needs --base-url, --model and --transcripts")
            if not live and not self.transcripts:
                raise ConfigError("llm/fused modes need --transcripts (replay) or --base-url and --model")
        return self

    def digest(self) -> str:
        """Hash of what determines verdicts: settings plus KB and forest contents.

        File locations, output paths and parallelism are left out so the same
        run from another directory hashes the same.
        """
        relevant = {k: v for k, v in asdict(self).items()
                    if k not in ("kb_path", "forest_path", "transcripts", "output_path", "jobs", "record")}
        if self.kb_path:
            relevant["kb_sha256"] = _file_sha256(self.kb_path)
        if self.forest_path:
            relevant["forest_sha256"] = _file_sha256(self.forest_path)
        return config_digest(relevant)


def _file_sha256(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return "unreadable"


# config keys that are spelled like their command-line flag
_FLAG_KEYS = {"kb": "kb_path", "forest": "forest_path", "out": "output_path"}


def read_config_file(path: str | Path) -> dict[str, Any]:
    """``key = value`` lines (``#`` comments, optional quotes) as RunConfig fields.

    Keys may use the field name or the flag spelling (``forest``, ``max-iterations``).
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[libscan]\n" + Path(path).read_text("utf-8"))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    types = {f.name: f.type for f in fields(RunConfig)}
    out: dict[str, Any] = {}
    for key, raw in parser["libscan"].items():
        name = key.replace("-", "_")
        name = _FLAG_KEYS.get(name, name)
        if name not in types:
            raise ConfigError(f"{path}: unknown key {key!r}")
        value = raw.strip().strip("\"'")
        kind = types[name]
        try:
            if kind in ("int", int):
                out[name] = int(value)
            elif kind in ("float", float):
                out[name] = float(value)
            elif kind in ("bool", bool):
                out[name] = value.lower() in ("1", "true", "yes", "on")
            else:
                out[name] = value
        except ValueError:
            raise ConfigError(f"{path}: bad value for {key!r}: {value!r}") from None
    return out


def merge_config(file_values: Mapping[str, Any], flags: Mapping[str, Any]) -> RunConfig:
    """File values first, then flags that were actually given."""
    values = dict(file_values)
    values.update({k: v for k, v in flags.items() if v is not None})
    return RunConfig(**values).validate()


def contract_id_for(path: str | Path) -> str:
    return Path(path).as_posix()


class Scanner:
    """Holds the loaded KB, analyzer, backend and forest for one run."""

    def __init__(self, config: RunConfig, backend: LlmBackend | None = None):
        self.config = config.validate()
        self.kb = load_kb(config.kb_path)
        self.analyzer = StaticAnalyzer(self.kb, config.match_threshold, wrapper_pairs_near(config.kb_path))
        self.forest = Forest.load(config.forest_path) if config.forest_path else None
        self.store: Optional[TranscriptStore] = None
        self.backend: Optional[LlmBackend] = backend
        if config.mode in ("llm", "fused") and backend is None:
            if config.base_url and config.model:
                self.backend = HttpBackend(config.base_url, config.model)
                if config.record:
                    self.backend = RecordingBackend(self.backend)
                    self.store = TranscriptStore(config.transcripts)
            else:
                self.backend = ReplayBackend(config.transcripts)

    @property
    def uses_static(self) -> bool:
        return self.config.mode in ("static-bcssm", "static-hcsa", "fused")

    def scan_source(self, source: str | bytes, path: str, contract_id: str | None = None) -> dict:
        contract_id = contract_id or contract_id_for(path)
        entry: dict[str, Any] = {"path": str(path), "id": contract_id, "label": None}
        warnings: list[str] = []
        try:
            unit = parse(source, str(path))
        except LexError as exc:
            entry["error"] = f"{path}:{exc}"
            return entry
        static = llm = None
        if self.uses_static:
            mode = AnalysisMode.BCSSM if self.config.mode == "static-bcssm" else AnalysisMode.HCSA
            verdict = self.analyzer.verdict(unit, mode)
            static = verdict.label
            entry["static"] = {"mode": mode.value, **verdict.to_dict()}
        if self.config.mode in ("llm", "fused"):
            try:
                session = run_session(
                    self.backend, unit.source, self.kb, self.config.max_iterations,
                    k=self.config.k, contract_id=contract_id, store=self.store,
                )
            except LlmError as exc:
                if self.config.mode == "llm":
                    entry["error"] = f"llm channel failed: {exc}"
                    return entry
                warnings.append(f"llm channel failed, using static verdict only: {exc}")
            else:
                llm = session.final.label
                entry["llm"] = {**session.final.to_dict(), "iterations": session.iteration}
        if self.config.mode == "fused":
            if llm is None:
                label = static
                entry["degraded"] = True
            else:
                label = self.forest.predict(llm, static)
        elif self.config.mode == "llm":
            label = llm
        else:
            label = static
        entry["label"] = label.value
        if warnings:
            entry["warnings"] = warnings
        return entry

    def scan_path(self, path: str | Path, contract_id: str | None = None) -> dict:
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            return {"path": str(path), "id": contract_id or contract_id_for(path), "label": None,
                    "error": f"cannot read file: {exc.strerror or exc}"}
        return self.scan_source(data, str(path), contract_id)

    def scan_many(self, items: Sequence[tuple[str | Path, Optional[str]]]) -> list[dict]:
        """Scan ``(path, id)`` pairs, up to ``jobs`` at a time; result sorted by path."""
        if self.config.jobs > 1 and len(items) > 1:
            with ThreadPoolExecutor(self.config.jobs) as pool:
                entries = list(pool.map(lambda it: self.scan_path(*it), items))
        else:
            entries = [self.scan_path(p, cid) for p, cid in items]
        return sorted(entries, key=lambda e: e["path"])


def build_report(entries: Sequence[Mapping], config: RunConfig, now: _dt.datetime | None = None) -> dict:
    now = now or _dt.datetime.now(_dt.timezone.utc)
    return {
        "tool": "libscan",
        "version": __version__,
        "generated_at": now.replace(microsecond=0).isoformat(),
        "mode": config.mode,
        "match_threshold": config.match_threshold,
        "config_digest": config.digest(),
        "entries": list(entries),
    }


def report_exit_code(entries: Iterable[Mapping]) -> int:
    """1 if any file failed, else 2 if any positive label, else 0."""
    entries = list(entries)
    if any(e.get("error") for e in entries):
        return 1
    if any(e.get("label") not in (None, "NONE") for e in entries):
        return 2
    return 0


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------- verdict tables


TABLE_COLUMNS = ("id", "llm_label", "static_label", "true_label")


def _label_code(value: str) -> int:
    value = value.strip()
    if value.isdigit():
        return int(value)
    return PatternLabel.parse(value).code


def load_verdict_table(path: str | Path) -> list[TrainingSample]:
    """CSV with columns ``id,llm_label,static_label,true_label`` (names or codes)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in TABLE_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise ConfigError(f"{path}: missing column(s): {', '.join(missing)}")
        samples = []
        for row_no, row in enumerate(reader, start=2):
            try:
                samples.append(TrainingSample(*(_label_code(row[c]) for c in TABLE_COLUMNS[1:])))
            except (ValueError, TypeError, AttributeError) as exc:
                raise ConfigError(f"{path}: row {row_no}: {exc}") from None
    if not samples:
        raise ConfigError(f"{path}: verdict table is empty")
    return samples


def load_label_map(path: str | Path) -> dict[str, PatternLabel]:
    """CSV ``id,label`` of precomputed verdicts."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"id", "label"} <= set(reader.fieldnames or ()):
            raise ConfigError(f"{path}: expected columns id,label")
        out = {}
        for row_no, row in enumerate(reader, start=2):
            try:
                out[row["id"].strip()] = PatternLabel.parse(row["label"])
            except ValueError as exc:
                raise ConfigError(f"{path}: row {row_no}: {exc}") from None
    return out
