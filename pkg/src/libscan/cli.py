"""Command-line interface.

``scan`` exits 0 when every file is clean, 2 when any file gets a positive
label, and 1 on an operational error (bad flags, unreadable input, a failed
channel). Other commands exit 0 or 1.
"""
from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Any, Optional

import click

from .evaluation import EvaluationError, evaluate_channel, load_manifest, stratified_sample
from .forest import ForestConfig, fit_forest, predict
from .kb import KbError, load_kb
from .pipeline import (
    MODES,
    ConfigError,
    RunConfig,
    Scanner,
    build_report,
    dump_json,
    load_label_map,
    load_verdict_table,
    merge_config,
    read_config_file,
    report_exit_code,
)
from .solidity import LexError, parse_file, unit_to_dict

EXIT_OK, EXIT_ERROR, EXIT_FINDINGS = 0, 1, 2


def _run_options(fn):
    options = [
        click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
                     help="key = value file; flags override it."),
        click.option("--kb", "kb_path", type=click.Path(exists=True, dir_okay=False),
                     help="Knowledge-base JSON (default: bundled)."),
        click.option("--mode", type=click.Choice(MODES), help="Channel to run (default static-hcsa)."),
        click.option("--match-threshold", type=float, help="Cosine threshold for the snippet matcher."),
        click.option("--forest", "forest_path", type=click.Path(dir_okay=False), help="Trained forest.json (fused mode)."),
        click.option("--transcripts", type=click.Path(file_okay=False),
                     help="Transcript directory: replayed, or written with --record."),
        click.option("--record", is_flag=True, default=None, help="Query the live model and store transcripts."),
        click.option("--base-url", help="OpenAI-compatible endpoint for live LLM mode."),
        click.option("--model", help="Model name for live LLM mode."),
        click.option("--k", type=int, help="Samples per LLM round (default 5)."),
        click.option("--max-iterations", type=int, help="Feedback rounds cap (default 3)."),
        click.option("--seed", type=int, help="Seed for every random choice."),
        click.option("--jobs", type=int, help="Files scanned in parallel."),
        click.option("--out", "output_path", type=click.Path(dir_okay=False), help="Write JSON here instead of stdout."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _config(config_file: Optional[str], **flags: Any) -> RunConfig:
    file_values = read_config_file(config_file) if config_file else {}
    return merge_config(file_values, flags)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, "utf-8")
    else:
        click.echo(text, nl=False)


@click.group()
@click.version_option(package_name="libscan")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose: bool) -> None:
    """Detect library misuse patterns in Solidity contracts."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@cli.command()
@click.argument("paths", nargs=-1, type=click.Path())
@click.option("--ast-dump", is_flag=True, help="Print the parsed syntax tree as JSON and exit.")
@_run_options
def scan(paths: tuple[str, ...], ast_dump: bool, config_file: Optional[str], **flags: Any) -> None:
    """Scan contract files and write a JSON report."""
    config = _config(config_file, **flags)
    if ast_dump:
        units = [unit_to_dict(parse_file(p)) for p in paths]
        _emit(dump_json(units), config.output_path)
        raise SystemExit(EXIT_OK)
    scanner = Scanner(config)
    entries = scanner.scan_many([(p, None) for p in paths])
    for e in entries:
        if e.get("error"):
            click.echo(f"error: {e['error']}", err=True)
        for w in e.get("warnings", ()):
            click.echo(f"warning: {e['path']}: {w}", err=True)
    _emit(dump_json(build_report(entries, config)), config.output_path)
    raise SystemExit(report_exit_code(entries))


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False),
              help="CSV with columns id,path,label.")
@click.option("--verdicts", type=click.Path(exists=True, dir_okay=False),
              help="Score precomputed verdicts (CSV id,label) instead of running a channel.")
@click.option("--sample", type=int, help="Evaluate a stratified sample of this size (uses --seed).")
@click.option("--macro-all-classes", is_flag=True, help="Average macro metrics over all nine labels.")
@_run_options
def evaluate(manifest: str, verdicts: Optional[str], sample: Optional[int], macro_all_classes: bool,
             config_file: Optional[str], **flags: Any) -> None:
    """Run a channel over a labeled manifest and report metrics."""
    config = _config(config_file, **flags)
    entries = load_manifest(manifest)
    if sample is not None:
        entries = stratified_sample(entries, sample, config.seed)
        entries.sort(key=lambda e: e.id)
    if verdicts:
        labels = load_label_map(verdicts)
        channel = "precomputed"
    else:
        scanned = Scanner(config).scan_many([(e.path, e.id) for e in entries])
        for e in scanned:
            if e.get("error"):
                click.echo(f"error: {e['error']}", err=True)
        labels = {e["id"]: e["label"] for e in scanned if e.get("label")}
        channel = config.mode
    settings = {"run": config.digest(), "manifest": Path(manifest).name, "sample": sample,
                "macro_all_classes": macro_all_classes}
    report = evaluate_channel(entries, labels, channel, settings, macro_all_classes)
    _emit(dump_json(report.to_dict()), config.output_path)


@cli.command("train-ensemble")
@click.argument("table", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output_path", default="forest.json", show_default=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-trees", type=int, default=100, show_default=True)
@click.option("--max-depth", type=int, default=10, show_default=True)
@click.option("--min-samples-leaf", type=int, default=5, show_default=True)
def train_ensemble(table: str, output_path: str, seed: int, n_trees: int, max_depth: int, min_samples_leaf: int) -> None:
    """Fit the fusion forest on a verdict table (id,llm_label,static_label,true_label)."""
    samples = load_verdict_table(table)
    forest = fit_forest(samples, ForestConfig(n_trees, max_depth, min_samples_leaf, seed))
    forest.save(output_path)
    hits = sum(predict(forest, s.llm_label, s.static_label).code == s.true_label for s in samples)
    click.echo(f"trained {n_trees} trees on {len(samples)} samples; training accuracy {hits / len(samples):.4f}")


@cli.command("kb-validate")
@click.argument("kb_path", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--kb", "kb_flag", type=click.Path(exists=True, dir_okay=False), help="Same as the argument.")
def kb_validate(kb_path: Optional[str], kb_flag: Optional[str]) -> None:
    """Check a knowledge-base file and list its snippet counts."""
    records = load_kb(kb_path or kb_flag)
    for rec in records:
        click.echo(f"{rec.pattern.value}  {len(rec.snippets)} snippet(s)  {rec.name}")
    click.echo(f"{len(records)} patterns, OK")


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cli.main(args=argv, prog_name="libscan", standalone_mode=False)
    except SystemExit as exc:
        return int(exc.code or 0)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_ERROR
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_ERROR
    except (ConfigError, KbError, EvaluationError, LexError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
