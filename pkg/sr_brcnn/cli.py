"""
Module: sr_brcnn.cli
Purpose: Command-line interface for preprocessing, training, evaluation and diagnostics
Dependencies: click, pathlib
Reference: See docs/QUICK_START.md

Exit codes: 0 success, 1 data or schema error, 2 usage error (click),
3 numeric failure (non-finite loss, failed gradient check).
"""

from dataclasses import replace
from pathlib import Path
from typing import NoReturn, Optional
import json
import logging
import sys

import click

from sr_brcnn import __version__
from sr_brcnn.config import Config, get_config, set_config
from sr_brcnn.core import RelationClassifier, dump_predictions
from sr_brcnn.dataset import SPLITS, load_store, load_trees, preprocess as preprocess_store
from sr_brcnn.errors import DegeneratePairError, NumericError, SrBrcnnError
from sr_brcnn.evaluation import ablation, run_gradcheck_suite
from sr_brcnn.models.brcnn import ModelConfig
from sr_brcnn.structreg import CutKind, CutStrategy, path_length_stats, sdp_record, sr_sdp, strategy_name
from sr_brcnn.trainer import TrainConfig, fit
from sr_brcnn.treebank import parse_instances
from sr_brcnn.utils.output_manager import OutputManager, create_run_output
from sr_brcnn.utils.runtime import configure_runtime, derive_seed, print_runtime_info

logger = logging.getLogger(__name__)

STRATEGY_CHOICES = ["none"] + [kind.value for kind in CutKind]


def _fail(error: Exception) -> NoReturn:
    click.echo(f"✗ Error: {error}", err=True)
    sys.exit(error.exit_code if isinstance(error, SrBrcnnError) else 1)


def _strategy(name: Optional[str], cut_ratio: Optional[float], seed: int, config: Config) -> Optional[CutStrategy]:
    ratio = cut_ratio if cut_ratio is not None else config.structreg["cut_ratio"]
    return CutStrategy.parse(name, ratio, derive_seed(seed, "cut"))


def _train_config(
    config: Config,
    strategy: Optional[str],
    cut_ratio: Optional[float],
    **overrides,
) -> TrainConfig:
    train_config = TrainConfig.from_config(config, **overrides)
    if strategy is not None:
        train_config = replace(train_config, strategy=_strategy(strategy, cut_ratio, train_config.seed, config))
    elif cut_ratio is not None:
        train_config = replace(
            train_config, strategy=_strategy(config.structreg["strategy"], cut_ratio, train_config.seed, config)
        )
    return train_config


@click.group()
@click.version_option(version=__version__, prog_name="sr-brcnn")
@click.option(
    "--config", "config_file",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="YAML file overriding the default configuration"
)
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default=None,
    help="Logging level (default: from config, INFO)"
)
def cli(config_file: Optional[Path], log_level: Optional[str]):
    """
    SR-BRCNN - relation classification over structure-regularized dependency paths.

    Examples:

    \b
      # Validate a corpus and split it by article
      python -m sr_brcnn.cli preprocess corpus.conllu instances.jsonl --out store/

    \b
      # Inspect (SR-)SDPs
      python -m sr_brcnn.cli sdp corpus.conllu instances.jsonl --strategy preposition

    \b
      # Train and evaluate
      python -m sr_brcnn.cli train --store store/ --strategy preposition --out runs/prep
      python -m sr_brcnn.cli eval --ckpt runs/prep/checkpoints/best.ckpt --store store/ --split test
    """
    if config_file is not None:
        set_config(Config(config_file))
    config = get_config()
    logging.basicConfig(
        level=(log_level or config.logging["level"]).upper(),
        format=config.logging["format"],
        force=True,
    )
    configure_runtime()


@cli.command()
@click.argument("conllu_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("instances_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--out", "-o",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory of the instance store to write"
)
@click.option(
    "--seed",
    type=int,
    default=None,
    help="Seed of the article split (default: training.seed)"
)
def preprocess(conllu_file: Path, instances_file: Path, out: Path, seed: Optional[int]):
    """
    Validate CoNLL-U sentences and relation instances and split them by article.

    CONLLU_FILE: Dependency-parsed sentences

    INSTANCES_FILE: JSONL sidecar, one relation instance per line

    \b
    Examples:
      python -m sr_brcnn.cli preprocess corpus.conllu instances.jsonl --out store/
    """
    try:
        config = get_config()
        seed = config.training["seed"] if seed is None else seed
        manifest = preprocess_store(
            conllu_file, instances_file, out,
            relations=config.model["relations"],
            ratios=config.split_ratios(),
            seed=derive_seed(seed, "split"),
        )
        click.echo(f"✓ Wrote instance store to {out}")
        click.echo(f"  Sentences: {manifest.sentences}")
        for name in SPLITS:
            click.echo(f"  {name}: {manifest.counts[name]} instances, {manifest.articles[name]} articles")
    except (SrBrcnnError, ValueError, OSError) as e:
        _fail(e)


@cli.command()
@click.argument("conllu_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("instances_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--strategy",
    type=click.Choice(STRATEGY_CHOICES),
    default="none",
    help="Structure-regularization strategy (default: none)"
)
@click.option(
    "--cut-ratio",
    type=float,
    default=None,
    help="Fraction of tokens cut by the random strategy (default: 0.15)"
)
@click.option(
    "--seed",
    type=int,
    default=None,
    help="Seed of the random strategy (default: training.seed)"
)
@click.option(
    "--output", "-o",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Write JSONL here instead of stdout"
)
def sdp(
    conllu_file: Path,
    instances_file: Path,
    strategy: str,
    cut_ratio: Optional[float],
    seed: Optional[int],
    output: Optional[Path]
):
    """
    Emit the SDP (or SR-SDP) of every relation instance as JSONL.

    Path-length statistics go to stderr.

    \b
    Examples:
      python -m sr_brcnn.cli sdp corpus.conllu instances.jsonl
      python -m sr_brcnn.cli sdp corpus.conllu instances.jsonl --strategy random --cut-ratio 0.2 --seed 7
    """
    try:
        config = get_config()
        seed = config.training["seed"] if seed is None else seed
        cut = _strategy(strategy, cut_ratio, seed, config)
        _, trees = load_trees(conllu_file)
        instances = parse_instances(
            instances_file.read_text(encoding="utf-8"), trees, config.model["relations"], source=instances_file,
        )

        lines, paths = [], []
        for inst in instances:
            try:
                path = sr_sdp(inst.sentence, cut, inst.e1_head, inst.e2_head)
            except DegeneratePairError as e:
                logger.warning(f"Skipping instance in sentence {inst.sent_id}: {e}")
                continue
            paths.append(path)
            lines.append(json.dumps(sdp_record(path, inst.sent_id, cut), ensure_ascii=False, sort_keys=True))

        text = "".join(line + "\n" for line in lines)
        if output:
            output.write_text(text, encoding="utf-8")
            click.echo(f"✓ Wrote {len(lines)} paths to {output}", err=True)
        else:
            click.echo(text, nl=False)
        click.echo(path_length_stats(paths).to_text(), err=True)
    except (SrBrcnnError, ValueError, OSError) as e:
        _fail(e)


def _training_options(func):
    """Options shared by ``train`` and ``ablate``."""
    options = [
        click.option("--store", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True,
                     help="Instance store written by preprocess"),
        click.option("--cut-ratio", type=float, default=None, help="Random-strategy cut ratio (default: 0.15)"),
        click.option("--epochs", type=int, default=None, help="Maximum epochs (default: 50)"),
        click.option("--batch", type=int, default=None, help="Mini-batch size (default: 16)"),
        click.option("--lambda", "lam", type=float, default=None, help="L2 coefficient (default: 1e-4)"),
        click.option("--keep-prob", type=float, default=None, help="Dropout keep probability (default: 0.5)"),
        click.option("--alpha", type=float, default=None, help="Forward/backward mixing weight (default: 0.5)"),
        click.option("--seed", type=int, default=None, help="Run seed (default: 13)"),
        click.option("--patience", type=int, default=None, help="Early-stopping patience (default: 10)"),
        click.option("--embeddings", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None,
                     help="Pretrained word vectors in word2vec text format"),
        click.option("--out", "-o", type=click.Path(file_okay=False, path_type=Path), default=None,
                     help="Run directory (default: dated folder under output.directory)"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@cli.command()
@click.option(
    "--strategy",
    type=click.Choice(STRATEGY_CHOICES),
    default=None,
    help="Structure-regularization strategy (default: structreg.strategy)"
)
@_training_options
def train(strategy, store, cut_ratio, epochs, batch, lam, keep_prob, alpha, seed, patience, embeddings, out):
    """
    Train SR-BRCNN on an instance store with dev-F1 early stopping.

    Writes checkpoints/epoch_<n>.ckpt, checkpoints/best.ckpt and train_log.csv.

    \b
    Examples:
      python -m sr_brcnn.cli train --store store/ --strategy preposition --out runs/prep
      python -m sr_brcnn.cli train --store store/ --epochs 20 --embeddings vectors.txt --seed 7
    """
    try:
        config = get_config()
        dataset = load_store(store)
        train_config = _train_config(
            config, strategy, cut_ratio,
            epochs=epochs, batch_size=batch, lam=lam, keep_prob=keep_prob,
            alpha=alpha, seed=seed, patience=patience,
        )
        model_config = ModelConfig.from_config(config, alpha=train_config.alpha)
        name = strategy_name(train_config.strategy)
        output = OutputManager(base_dir=out, run_name=None) if out else \
            create_run_output(name, config.output["directory"])

        click.echo(f"🧠 Training strategy={name} seed={train_config.seed} "
                   f"({len(dataset.train)} train / {len(dataset.dev)} dev instances)")
        result = fit(dataset.train, dataset.dev, train_config, model_config, dataset.relations,
                     output=output, embeddings=embeddings)

        click.echo(f"✓ Best dev macro-F1 {result.best_dev_f1:.4f} at epoch {result.best_epoch}"
                   + (" (stopped early)" if result.stopped_early else ""))
        click.echo(f"  Checkpoint: {result.best_checkpoint}")
        click.echo(f"  Log: {result.log_path}")
    except (SrBrcnnError, ValueError, OSError) as e:
        _fail(e)


@cli.command(name="eval")
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True,
              help="Checkpoint to evaluate")
@click.option("--store", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True,
              help="Instance store written by preprocess")
@click.option("--split", type=click.Choice(list(SPLITS)), default="test", help="Split to score (default: test)")
@click.option("--alpha", type=float, default=None, help="Override the stored mixing weight")
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Also write the report as CSV")
def evaluate_command(ckpt: Path, store: Path, split: str, alpha: Optional[float], report: Optional[Path]):
    """
    Score a checkpoint on one split of an instance store.

    \b
    Examples:
      python -m sr_brcnn.cli eval --ckpt runs/prep/checkpoints/best.ckpt --store store/ --split dev
    """
    try:
        dataset = load_store(store)
        classifier = RelationClassifier(ckpt, alpha=alpha, relations=dataset.relations)
        scored = classifier.evaluate(dataset.split(split))
        click.echo(scored.report.to_text())
        click.echo(f"✓ {split} macro-F1 {scored.report.macro_f1:.4f}, micro-F1 {scored.report.micro_f1:.4f}")
        if report:
            report.parent.mkdir(parents=True, exist_ok=True)
            report.write_text(scored.report.to_csv(), encoding="utf-8")
            click.echo(f"  Report: {report}")
    except (SrBrcnnError, ValueError, OSError) as e:
        _fail(e)


@cli.command()
@click.argument("instances_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True,
              help="Checkpoint to decode with")
@click.option("--conllu", "conllu_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Sentences the instances refer to")
@click.option("--alpha", type=float, default=None, help="Override the stored mixing weight")
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write JSONL here instead of stdout")
def predict(instances_file: Path, ckpt: Path, conllu_file: Path, alpha: Optional[float], output: Optional[Path]):
    """
    Decode relation instances and write one JSON prediction per line.

    INSTANCES_FILE: JSONL instances (gold labels are echoed back)

    \b
    Examples:
      python -m sr_brcnn.cli predict store/test.jsonl --conllu store/sentences.conllu --ckpt best.ckpt -o pred.jsonl
    """
    try:
        classifier = RelationClassifier(ckpt, alpha=alpha)
        _, trees = load_trees(conllu_file)
        instances = parse_instances(
            instances_file.read_text(encoding="utf-8"), trees, classifier.schema.relations, source=instances_file,
        )
        text = dump_predictions(classifier.predict_records(instances))
        if output:
            output.write_text(text, encoding="utf-8")
            click.echo(f"✓ Wrote {text.count(chr(10))} predictions to {output}", err=True)
        else:
            click.echo(text, nl=False)
    except (SrBrcnnError, ValueError, OSError) as e:
        _fail(e)


@cli.command()
@click.option("--seed", type=int, default=0, help="Seed of the random inputs and parameters (default: 0)")
@click.option("--hidden", type=int, default=4, help="Model dimension of the end-to-end check (default: 4)")
@click.option("--step", type=float, default=1e-4, help="Finite-difference step (default: 1e-4)")
@click.option("--tolerance", type=float, default=1e-4, help="Maximum relative error (default: 1e-4)")
def gradcheck(seed: int, hidden: int, step: float, tolerance: float):
    """
    Check every primitive and the full loss against central differences.

    Exits with 3 if any check fails.
    """
    try:
        suite = run_gradcheck_suite(seed=seed, hidden=hidden, step=step, tolerance=tolerance)
        click.echo(suite.to_text())
        click.echo(f"max relative error: {suite.max_rel_error:.3e}")
        if not suite.passed:
            raise NumericError(f"gradient check failed (tolerance {tolerance:g})")
        click.echo("✓ All gradient checks passed")
    except (SrBrcnnError, ValueError) as e:
        _fail(e)


@cli.command()
@click.option(
    "--strategies",
    default="none,punctuation,random,preposition",
    help="Comma-separated strategies to compare (default: all four)"
)
@_training_options
def ablate(strategies, store, cut_ratio, epochs, batch, lam, keep_prob, alpha, seed, patience, embeddings, out):
    """
    Train one model per strategy and compare test F1 and path lengths.

    \b
    Examples:
      python -m sr_brcnn.cli ablate --store store/ --strategies none,preposition --epochs 20
    """
    try:
        config = get_config()
        names = [s.strip() for s in strategies.split(",") if s.strip()]
        unknown = [n for n in names if n not in STRATEGY_CHOICES]
        if not names or unknown:
            raise click.BadParameter(
                f"unknown strategies {unknown}" if unknown else "no strategy given", param_hint="--strategies"
            )
        dataset = load_store(store)
        base = _train_config(
            config, None, None,
            epochs=epochs, batch_size=batch, lam=lam, keep_prob=keep_prob,
            alpha=alpha, seed=seed, patience=patience,
        )
        cut_strategies = [_strategy(n, cut_ratio, base.seed, config) for n in names]
        output = OutputManager(base_dir=out, run_name=None) if out else \
            create_run_output("ablation", config.output["directory"])

        click.echo(f"🧪 Ablation over {', '.join(names)} (seed {base.seed})")
        table = ablation(dataset, cut_strategies, base, ModelConfig.from_config(config, alpha=base.alpha),
                         output=output, embeddings=embeddings)
        csv_path = output.get_output_path("ablation.csv", subdir="reports")
        csv_path.write_text(table.to_csv(), encoding="utf-8")
        output.get_output_path("ablation.txt", subdir="reports").write_text(table.to_text() + "\n", encoding="utf-8")
        click.echo(table.to_text())
        click.echo(f"✓ Report: {csv_path}")
    except (SrBrcnnError, ValueError, OSError) as e:
        _fail(e)


@cli.command()
def info():
    """
    Display runtime and configuration information.

    Shows:
    - Python, torch and numpy versions
    - Determinism settings
    - Effective configuration
    """
    click.echo("=== SR-BRCNN System Info ===\n")

    print_runtime_info()

    config = get_config()
    click.echo("--- Configuration ---")
    click.echo(f"Relations: {', '.join(config.model['relations'])}")
    click.echo(f"Dimensions: word {config.model['word_dim']}, relation {config.model['rel_dim']}, "
               f"conv {config.model['conv_dim']}, POS {config.model['pos_dim']}, "
               f"entity type {config.model['ner_dim']}")
    click.echo(f"Training: lambda {config.training['lambda']}, keep {config.training['keep_prob']}, "
               f"rho {config.training['rho']}, eps {config.training['eps']}, seed {config.training['seed']}")
    click.echo(f"Strategy: {config.structreg['strategy']} (cut ratio {config.structreg['cut_ratio']})")
    click.echo(f"Article split: {'/'.join(str(c) for c in config.data['split'])}")
    click.echo(f"Output directory: {config.output['directory']}")


def main():
    """Entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
