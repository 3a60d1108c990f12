"""
SyntaxNMT CLI - Command Line Interface
Config-driven preprocessing, training, translation and evaluation

Every subcommand reads the experiment config (--config FILE) and accepts
'--set section.key=value' overrides; a few common keys also have their own
flags (--beam, --threads, --seed).
"""

import functools
import logging
import os
import sys
from typing import Optional, Sequence

import click
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from backend.app.core.config import settings
from backend.app.core.exceptions import SNMTError
from backend.app.core.logging import setup_logging
from backend.app.modules.data.synthetic import write_bracket_task
from backend.app.modules.experiment import (
    ExperimentConfig,
    load_config,
    run_subcommand,
    serialize_config,
)

logger = logging.getLogger("snmt")

# Rich console for user-facing output
console = Console()


def _handle_errors(command):
    """Print SNMTError as a red one-liner and exit with status 1"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except SNMTError as e:
            console.print(f"[red]✗ {e.code}: {e.message}[/red]")
            logger.error(f"{e.code}: {e.message} {e.details}")
            sys.exit(1)
    return wrapper


def _config(config_path: Optional[str], overrides: Sequence[str], check: bool = True) -> ExperimentConfig:
    return load_config(config_path, list(overrides), check=check)


config_option = click.option(
    "--config", "-c", "config_path", type=click.Path(exists=True, dir_okay=False),
    default=None, help="Experiment config file"
)
set_option = click.option(
    "--set", "overrides", multiple=True, metavar="KEY=VALUE",
    help="Override a config key (repeatable), e.g. --set train.batch_size=8"
)


@click.group()
@click.version_option(version=settings.VERSION)
@click.option("--log-level", default=None, help="Log level (default from LOG_LEVEL)")
@click.option("--log-json", is_flag=True, help="Emit JSON log records")
def cli(log_level, log_json):
    """
    SyntaxNMT - neural machine translation with target-side supertags

    \b
    Quick Start:
      snmt bracket-task data/bracket           # Write the synthetic task
      snmt preprocess -c experiment.conf       # BPE, vocabularies, id files
      snmt train -c experiment.conf            # Train with dev validation
      snmt translate -c experiment.conf        # Decode the test split
      snmt score test.hyp test.tgt             # Corpus BLEU
      snmt analyze test.hyp --baseline b.hyp   # Construct / length breakdown
    """
    setup_logging(level=log_level, json_format=True if log_json else None)


@cli.command("bracket-task")
@click.argument("directory", type=click.Path(file_okay=False), required=False)
@click.option("--seed", default=None, type=int, help="Generator seed (default DEFAULT_SEED)")
@click.option("--train-size", default=2000, show_default=True)
@click.option("--dev-size", default=100, show_default=True)
@click.option("--test-size", default=200, show_default=True)
@_handle_errors
def bracket_task(directory, seed, train_size, dev_size, test_size):
    """
    Write the synthetic bracket-language task (.src/.tgt/.tags per split).

    DIRECTORY defaults to <DATA_DIR>/bracket.

    Example: snmt bracket-task data/bracket --seed 7
    """
    directory = directory or os.path.join(settings.DATA_DIR, "bracket")
    seed = settings.DEFAULT_SEED if seed is None else seed
    paths = write_bracket_task(directory, seed, {"train": train_size, "dev": dev_size, "test": test_size})
    for split, files in paths.items():
        console.print(f"✓ {split}: [green]{files['src']}[/green], {files['tgt']}, {files['tags']}")


@cli.command("show-config")
@config_option
@set_option
@_handle_errors
def show_config(config_path, overrides):
    """Print the effective config (file plus overrides) in config-file syntax."""
    click.echo(serialize_config(_config(config_path, overrides, check=False)), nl=False)


@cli.command()
@config_option
@set_option
@_handle_errors
def preprocess(config_path, overrides):
    """
    Learn BPE and vocabularies, write id-encoded corpora and the manifest.

    Example: snmt preprocess -c experiment.conf --set data.bpe_merges=500
    """
    console.print("\n[bold cyan]📦 SyntaxNMT Preprocessing[/bold cyan]\n")
    config = _config(config_path, overrides)
    manifest = run_subcommand("preprocess", config).artifacts

    table = Table(title=f"Corpus ({manifest.mode})", show_header=True, header_style="bold magenta")
    table.add_column("Split", style="cyan")
    for column in ("Read", "Unparsed", "Misaligned", "Filtered", "Retained"):
        table.add_column(column, justify="right")
    for split, summary in manifest.splits.items():
        table.add_row(
            split, str(summary.read), str(summary.unparsed), str(summary.misaligned),
            str(summary.filtered), f"[green]{summary.retained}[/green]"
        )
    console.print(table)
    sizes = ", ".join(f"{role} {size}" for role, size in manifest.vocabulary_sizes.items())
    console.print(f"✓ {manifest.merges} merges; vocabularies: {sizes}")


@cli.command()
@config_option
@set_option
@click.option("--seed", default=None, type=int, help="Experiment seed (same as --set seed=N)")
@_handle_errors
def train(config_path, overrides, seed):
    """
    Train a model; checkpoints and the log go to <output_dir>/model.

    Example: snmt train -c experiment.conf --set train.max_epochs=5
    """
    console.print("\n[bold cyan]🏋 SyntaxNMT Training[/bold cyan]\n")
    overrides = list(overrides) + ([f"seed={seed}"] if seed is not None else [])
    report = run_subcommand("train", _config(config_path, overrides)).artifacts

    best = "-" if report.best_bleu is None else f"{report.best_bleu:.2f}"
    panel = Panel(
        f"[green]Batches:[/green] {report.batches} ({report.epochs} epochs)\n"
        f"[green]Final loss:[/green] {report.final_loss:.4f}\n"
        f"[green]Best dev BLEU:[/green] {best}\n"
        f"[green]Stopped early:[/green] {'yes' if report.stopped_early else 'no'}\n"
        f"[green]Elapsed:[/green] {report.elapsed_seconds:.1f}s",
        title="📈 Training Summary",
        border_style="green"
    )
    console.print(panel)
    for path in report.checkpoints:
        console.print(f"  • {path}")
    console.print(f"✓ Last checkpoint: [green]{report.last_checkpoint}[/green]")


@cli.command()
@config_option
@set_option
@click.option("--input", "-i", "input_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Source file (default paths.test_src)")
@click.option("--output", "-o", "output_path", default=None, help="Output file")
@click.option("--checkpoint", "checkpoints", multiple=True, help="Ensemble member (repeatable)")
@click.option("--beam", type=click.IntRange(min=1), default=None, help="Beam width (1 = greedy)")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Decode threads (default SNMT_THREADS)")
@_handle_errors
def translate(config_path, overrides, input_path, output_path, checkpoints, beam, threads):
    """
    Translate a source file with one checkpoint or an ensemble.

    Example: snmt translate -c experiment.conf --checkpoint a.ckpt --checkpoint b.ckpt
    """
    console.print("\n[bold cyan]🌐 SyntaxNMT Translation[/bold cyan]\n")
    config = _config(config_path, overrides)
    summary = run_subcommand(
        "translate", config, input_path=input_path, output_path=output_path,
        checkpoints=list(checkpoints) or None, beam=beam, threads=threads
    ).artifacts
    console.print(f"✓ {summary.sentences} sentences ({len(summary.checkpoints)} model(s)) → "
                  f"[green]{summary.output}[/green]")
    if summary.tags_output:
        console.print(f"✓ Predicted tags → [green]{summary.tags_output}[/green]")
    if summary.annotated_output:
        console.print(f"✓ Annotated output → [green]{summary.annotated_output}[/green]")
    if summary.empty or summary.alternation_violations:
        console.print(f"[yellow]⚠ {summary.empty} empty outputs, "
                      f"{summary.alternation_violations} tag/word alternation violations[/yellow]")


@cli.command()
@click.argument("hypothesis", type=click.Path(exists=True, dir_okay=False))
@click.argument("reference", type=click.Path(exists=True, dir_okay=False))
@click.option("--baseline", "-b", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Second system for paired bootstrap")
@click.option("--resamples", type=click.IntRange(min=100), default=None, help="Bootstrap resamples")
@click.option("--seed", type=int, default=None, help="Bootstrap seed")
@config_option
@set_option
@_handle_errors
def score(hypothesis, reference, baseline, resamples, seed, config_path, overrides):
    """
    Corpus BLEU of HYPOTHESIS against REFERENCE.

    Example: snmt score syntax.hyp test.tgt --baseline baseline.hyp
    """
    config = _config(config_path, overrides, check=False)
    system, base, significance = run_subcommand(
        "score", config, hypothesis_path=hypothesis, reference_path=reference,
        baseline_path=baseline, resamples=resamples, seed=seed
    ).artifacts

    click.echo(str(system))
    if base is not None and significance is not None:
        click.echo(f"baseline {base}")
        click.echo(
            f"delta {system.score - base.score:+.2f}{significance.marker} "
            f"(p = {significance.p_value:.4f}, {significance.resamples} resamples)"
        )


@cli.command()
@click.argument("hypothesis", type=click.Path(exists=True, dir_okay=False))
@click.option("--baseline", "-b", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--reference", "-r", type=click.Path(exists=True, dir_okay=False), default=None,
              help="References (default paths.test_tgt)")
@click.option("--source", "-s", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Source sentences for length buckets (default paths.test_src)")
@click.option("--ref-tags", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Reference supertags for construct subsets (default paths.test_tags)")
@click.option("--hyp-tags", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Predicted supertags (default HYPOTHESIS.tags)")
@click.option("--output", "-o", default=None, help="TSV report (default HYPOTHESIS.analysis.tsv)")
@click.option("--resamples", type=click.IntRange(min=100), default=None)
@config_option
@set_option
@_handle_errors
def analyze(hypothesis, baseline, reference, source, ref_tags, hyp_tags, output, resamples,
            config_path, overrides):
    """
    Per-construct and per-length BLEU breakdown, with significance.

    Example: snmt analyze syntax.hyp -b baseline.hyp -c experiment.conf
    """
    config = _config(config_path, overrides)
    report, tsv_path = run_subcommand(
        "analyze", config, hypothesis_path=hypothesis, baseline_path=baseline, reference_path=reference,
        source_path=source, reference_tags_path=ref_tags, hypothesis_tags_path=hyp_tags,
        output_path=output, resamples=resamples
    ).artifacts

    table = Table(title="📊 BLEU Breakdown", show_header=True, header_style="bold magenta")
    table.add_column("Subset", style="cyan")
    table.add_column("Kind")
    table.add_column("Count", justify="right")
    table.add_column("System", justify="right", style="green")
    table.add_column("Baseline", justify="right")
    table.add_column("Δ", justify="right")
    table.add_column("Rel.", justify="right")
    for s in report.subsets:
        table.add_row(
            s.name, s.kind, str(s.count), f"{s.system_bleu:.2f}",
            "-" if s.baseline_bleu is None else f"{s.baseline_bleu:.2f}",
            "-" if s.delta is None else f"{s.delta:+.2f}{s.marker}",
            "-" if s.relative_delta is None else f"{s.relative_delta:+.1%}"
        )
    console.print(table)
    if report.tag_accuracy is not None and report.tag_accuracy.accuracy is not None:
        acc = report.tag_accuracy
        console.print(f"Tag accuracy: {acc.accuracy:.2f}% (match rate {acc.match_rate:.3f})")
    console.print(f"✓ Report saved to: [green]{tsv_path}[/green]")


if __name__ == "__main__":
    cli()
