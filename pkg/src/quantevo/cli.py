"""Command-line surface wiring the two-phase pipeline together.

Subcommands: quantize, sensitivity, finetune, eval, complexity, fixture.
Options resolve as CLI flag > --config file > built-in default; every
run that writes files also writes a manifest.json recording the fully
resolved config, and replaying that manifest reproduces the model and
CSV outputs byte-for-byte.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format
error, 4 model/shape validation error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    ConfigError,
    ContainerFormatError,
    DatasetFormatError,
    DimensionError,
    EvaluationError,
    ModelValidationError,
    QuantevoError,
    TruncatedBlobError,
)
from .evolution import MutationConfig, RankEntry, SensitivityRanking, finetune_model, sensitivity_rank
from .metrics import METRICS, EvalReport, evaluate, make_evaluator
from .model_io import (
    DatasetHandle,
    load_csv,
    load_idx,
    load_model,
    load_schemes,
    make_teacher_fixture,
    save_csv_dataset,
    save_model,
    save_schemes,
)
from .netgraph import complexity
from .quantizer import quantize_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VALIDATION = 4


@dataclass
class RunConfig:
    """Resolved options of one CLI run; serialized into the manifest."""

    model: str | None = None
    data: str | None = None
    images: str | None = None
    labels: str | None = None
    features: str | None = None
    label_column: str = "label"
    metric: str = "agreement"
    total_bits: int = 8
    act_bits: int = 8
    sensitivity_bits: int = 4
    population: int = 32
    iterations: int = 64
    mutation_p: float = 0.02
    seed: int = 0
    eval_subset: int | None = None
    max_drop: float | None = None
    reference_metric: float | None = None
    reference_model: str | None = None
    threshold: float = 0.5
    ranking: str | None = None
    schemes: str | None = None
    workers: int = 1
    out: str | None = None
    json_output: bool = False
    arch: str = "64-32-10"
    input_dim: int = 16
    samples: int = 2000


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        if "config" in doc:  # a manifest from a previous run
            if doc.get("command") not in (None, args.command):
                raise ConfigError(
                    f"manifest was recorded for '{doc.get('command')}', not '{args.command}'"
                )
            doc = doc["config"]
        unknown = set(doc) - _FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in doc.items():
            setattr(cfg, key, value)
    for key in _FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def _write_manifest(cfg: RunConfig, command: str, out_dir: Path) -> None:
    manifest = {"command": command, "config": dataclasses.asdict(cfg)}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("this command writes files; --out is required")
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_dataset(cfg: RunConfig) -> DatasetHandle:
    if cfg.data:
        features = cfg.features.split(",") if cfg.features else None
        return load_csv(cfg.data, feature_columns=features, label_column=cfg.label_column)
    if cfg.images and cfg.labels:
        return load_idx(cfg.images, cfg.labels)
    raise ConfigError("no dataset: pass --data CSV or --images/--labels IDX files")


def _evaluator(cfg: RunConfig, data: DatasetHandle):
    return make_evaluator(
        data, cfg.metric, subset_size=cfg.eval_subset, seed=cfg.seed, threshold=cfg.threshold
    )


def _print_table(headers: list[str], rows: list[list]) -> None:
    cells = [[str(c) for c in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(headers)]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in cells:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def save_ranking_csv(ranking: SensitivityRanking, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "layer", "metric"])
        for rank, entry in enumerate(ranking.entries):
            writer.writerow([rank, entry.layer, repr(entry.metric)])


def load_ranking_csv(path) -> SensitivityRanking:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["rank", "layer", "metric"]:
            raise DatasetFormatError(f"{path}: expected header rank,layer,metric")
        rows = sorted(reader, key=lambda r: int(r["rank"]))
    return SensitivityRanking(tuple(RankEntry(r["layer"], float(r["metric"])) for r in rows))


def _print_report(report: EvalReport, as_json: bool) -> None:
    if as_json:
        print(json.dumps(dataclasses.asdict(report), sort_keys=True))
    else:
        print(
            f"{report.metric}={report.value:.6f}  n={report.n_samples}  "
            f"dataset={report.dataset_id[:12]}  seed={report.seed}  "
            f"wall={report.wall_time_s:.3f}s"
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_quantize(cfg: RunConfig) -> int:
    if not cfg.model:
        raise ConfigError("--model is required")
    out = _out_dir(cfg)
    model = load_model(cfg.model)
    qmodel, schemes = quantize_model(model, cfg.total_bits)
    save_model(qmodel, out / "quantized.qemodel")
    save_schemes(schemes, out / "schemes.json")
    _write_manifest(cfg, "quantize", out)
    rows = [
        [name, s.total_bits, s.int_bits, s.frac_bits, s.sigma]
        for name, s in schemes.items()
    ]
    _print_table(["layer", "total_bits", "int_bits", "frac_bits", "sigma"], rows)
    print(f"wrote {out / 'quantized.qemodel'} and {out / 'schemes.json'}")
    return EXIT_OK


def cmd_sensitivity(cfg: RunConfig) -> int:
    if not cfg.model:
        raise ConfigError("--model is required")
    out = _out_dir(cfg)
    model = load_model(cfg.model)
    data = _load_dataset(cfg)
    ranking = sensitivity_rank(model, _evaluator(cfg, data), cfg.sensitivity_bits)
    save_ranking_csv(ranking, out / "ranking.csv")
    _write_manifest(cfg, "sensitivity", out)
    _print_table(
        ["rank", "layer", cfg.metric],
        [[i, e.layer, f"{e.metric:.6f}"] for i, e in enumerate(ranking.entries)],
    )
    print(f"wrote {out / 'ranking.csv'}")
    return EXIT_OK


def cmd_finetune(cfg: RunConfig) -> int:
    if not cfg.model:
        raise ConfigError("--model is required (a quantized .qemodel)")
    if not cfg.schemes:
        raise ConfigError("--schemes sidecar is required")
    out = _out_dir(cfg)
    model = load_model(cfg.model)
    schemes = load_schemes(cfg.schemes)
    data = _load_dataset(cfg)
    evaluator = _evaluator(cfg, data)
    if cfg.ranking:
        ranking = load_ranking_csv(cfg.ranking)
    else:
        ranking = sensitivity_rank(model, evaluator, cfg.sensitivity_bits)
    reference = cfg.reference_metric
    if reference is None and cfg.reference_model:
        reference = evaluator(load_model(cfg.reference_model))
    mconfig = MutationConfig(
        p=cfg.mutation_p,
        population_size=cfg.population,
        iterations=cfg.iterations,
        seed=cfg.seed,
    )
    before = evaluate(
        model, data, cfg.metric, subset_size=cfg.eval_subset, seed=cfg.seed, threshold=cfg.threshold
    )
    tuned, histories = finetune_model(
        model,
        ranking,
        schemes,
        mconfig,
        evaluator,
        max_drop=cfg.max_drop,
        reference_metric=reference,
        workers=cfg.workers,
    )
    after = evaluate(
        tuned, data, cfg.metric, subset_size=cfg.eval_subset, seed=cfg.seed, threshold=cfg.threshold
    )
    save_model(tuned, out / "finetuned.qemodel")
    for layer, history in histories.items():
        with open(out / f"history_{_slug(layer)}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "best_fitness", "mean_fitness"])
            for record in history:
                writer.writerow([record.iteration, repr(record.best_fitness), repr(record.mean_fitness)])
    _write_manifest(cfg, "finetune", out)
    print(f"before: {cfg.metric}={before.value:.6f}  (n={before.n_samples})")
    print(f"after:  {cfg.metric}={after.value:.6f}  (n={after.n_samples})")
    print(f"wrote {out / 'finetuned.qemodel'} and {len(histories)} history CSV(s)")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    if not cfg.model:
        raise ConfigError("--model is required")
    model = load_model(cfg.model)
    data = _load_dataset(cfg)
    report = evaluate(
        model, data, cfg.metric, subset_size=cfg.eval_subset, seed=cfg.seed, threshold=cfg.threshold
    )
    _print_report(report, cfg.json_output)
    if cfg.out:
        out = _out_dir(cfg)
        _write_manifest(cfg, "eval", out)
    return EXIT_OK


def cmd_complexity(cfg: RunConfig) -> int:
    if not cfg.model:
        raise ConfigError("--model is required")
    model = load_model(cfg.model)
    report = complexity(model, cfg.total_bits, cfg.act_bits)
    if cfg.json_output:
        doc = {
            "layers": [dataclasses.asdict(r) for r in report.layers],
            "total_macs": report.total_macs,
            "total_memory_words": report.total_memory_words,
            "cycle_ratio": str(report.cycle_ratio),
            "weight_bits": report.weight_bits,
            "act_bits": report.act_bits,
        }
        print(json.dumps(doc, sort_keys=True))
    else:
        _print_table(
            ["layer", "kind", "macs", "memory_words"],
            [[r.name, r.kind, r.mac_count, r.memory_words] for r in report.layers],
        )
        print(f"total_macs={report.total_macs}  total_memory_words={report.total_memory_words}")
        print(
            f"cycle_ratio (w={report.weight_bits}b, a={report.act_bits}b vs float): "
            f"{report.cycle_ratio} ({float(report.cycle_ratio):.6f})"
        )
    if cfg.out:
        out = _out_dir(cfg)
        _write_manifest(cfg, "complexity", out)
    return EXIT_OK


def cmd_fixture(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    try:
        widths = [int(w) for w in cfg.arch.split("-")]
    except ValueError:
        raise ConfigError(f"--arch must look like '64-32-10', got '{cfg.arch}'") from None
    model, data = make_teacher_fixture(cfg.input_dim, widths, cfg.samples, cfg.seed)
    save_model(model, out / "model.qemodel")
    save_csv_dataset(data, out / "data.csv")
    _write_manifest(cfg, "fixture", out)
    print(f"arch input={cfg.input_dim} widths={widths} samples={cfg.samples} seed={cfg.seed}")
    print(f"dataset digest: {data.id}")
    print(f"wrote {out / 'model.qemodel'} and {out / 'data.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file or a previous run's manifest.json")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="root seed (default 0; never wall clock)")


def _add_dataset(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="CSV dataset path")
    p.add_argument("--features", help="comma-separated CSV feature columns (default: all but label)")
    p.add_argument("--label-column", dest="label_column", help="CSV label column (default 'label')")
    p.add_argument("--images", help="IDX image file")
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--metric", choices=METRICS, help="metric (default 'agreement')")
    p.add_argument("--eval-subset", dest="eval_subset", type=int, help="evaluate on a seeded subsample")
    p.add_argument("--threshold", type=float, help="decision threshold for f1 (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantevo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="nearest-neighbour quantize every weighted layer")
    p.add_argument("--model", help="input .qemodel")
    p.add_argument("--total-bits", dest="total_bits", type=int, help="bit width (default 8)")
    _add_common(p)
    p.set_defaults(fn=cmd_quantize)

    p = sub.add_parser("sensitivity", help="rank layers by solo-quantization accuracy")
    p.add_argument("--model", help="float .qemodel")
    p.add_argument("--sensitivity-bits", dest="sensitivity_bits", type=int, help="bit width (default 4)")
    _add_dataset(p)
    _add_common(p)
    p.set_defaults(fn=cmd_sensitivity)

    p = sub.add_parser("finetune", help="neuroevolution fine-tuning of a quantized model")
    p.add_argument("--model", help="quantized .qemodel")
    p.add_argument("--schemes", help="scheme sidecar JSON from quantize")
    p.add_argument("--ranking", help="ranking CSV from sensitivity (computed inline if absent)")
    p.add_argument("--sensitivity-bits", dest="sensitivity_bits", type=int, help="bits for inline ranking")
    p.add_argument("--population", type=int, help="population size (default 32)")
    p.add_argument("--iterations", type=int, help="iterations per layer (default 64)")
    p.add_argument("--mutation-p", dest="mutation_p", type=float, help="per-weight mutation probability (default 0.02)")
    p.add_argument("--max-drop", dest="max_drop", type=float, help="stop once within this drop of the reference")
    p.add_argument("--reference-metric", dest="reference_metric", type=float, help="reference metric for --max-drop")
    p.add_argument("--reference-model", dest="reference_model", help="model to evaluate as the reference")
    p.add_argument("--workers", type=int, help="parallel candidate evaluations (default 1)")
    _add_dataset(p)
    _add_common(p)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--model", help=".qemodel to score")
    p.add_argument("--json", dest="json_output", action="store_const", const=True, help="machine-readable output")
    _add_dataset(p)
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("complexity", help="MAC/memory/cycle report")
    p.add_argument("--model", help=".qemodel to analyze")
    p.add_argument("--total-bits", dest="total_bits", type=int, help="weight bit width (default 8)")
    p.add_argument("--act-bits", dest="act_bits", type=int, help="activation bit width (default 8)")
    p.add_argument("--json", dest="json_output", action="store_const", const=True, help="machine-readable output")
    _add_common(p)
    p.set_defaults(fn=cmd_complexity)

    p = sub.add_parser("fixture", help="generate a random teacher model + labelled dataset")
    p.add_argument("--arch", help="dense widths, e.g. '64-32-10'")
    p.add_argument("--input-dim", dest="input_dim", type=int, help="input feature count (default 16)")
    p.add_argument("--samples", type=int, help="sample count (default 2000)")
    _add_common(p)
    p.set_defaults(fn=cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return args.fn(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ContainerFormatError, TruncatedBlobError, DatasetFormatError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ModelValidationError, DimensionError, EvaluationError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except QuantevoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
