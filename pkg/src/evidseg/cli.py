"""Command-line entry point: phantom, train, eval, and report subcommands.

Configuration is layered: built-in defaults, then an optional JSON config
file (blocks "network", "train", "loss", "phantom", "eval"), then explicit
command-line flags. Every run derives a run id of the form
``s<seed>-<hash12>`` from the operative seed and a hash of the effective
configuration; the id is embedded in all outputs so artifacts can be traced
back to their settings.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from .errors import ConfigError, EvidsegError
from .evaluate import evaluate_model
from .losses import LossWeights
from .metrics import MetricsReport
from .network import (
    FUSION_MODES,
    NetworkConfig,
    TrainConfig,
    load_model,
    save_model,
    train,
)
from .phantom import PerturbSpec, generate_phantom
from .report import DEFAULT_METRICS, render_report
from .tensorio import load_dataset, save_dataset

LOSS_CSV_COLUMNS = ("epoch", "total", "phase_term", "mixture_term", "lr", "run_id")


def config_hash(config: dict) -> str:
    """First 12 hex digits of the SHA-256 of the canonical config JSON."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def make_run_id(seed: int, config: dict) -> str:
    return f"s{seed}-{config_hash(config)}"


def parse_perturb(text: Optional[str], seed: int) -> Optional[PerturbSpec]:
    """Parse ``noise:<var>``, ``blur:<var>,<k>``, or ``missing:<n>``."""
    if text is None or text == "" or text == "none":
        return None
    kind, sep, arg = text.partition(":")
    if not sep or not arg:
        raise ConfigError(f"malformed perturbation {text!r}")
    try:
        if kind == "noise":
            return PerturbSpec(kind="noise", noise_var=float(arg), seed=seed)
        if kind == "blur":
            var_text, sep, k_text = arg.partition(",")
            if not sep:
                raise ConfigError(f"blur needs variance and kernel size, got {arg!r}")
            return PerturbSpec(
                kind="blur", blur_var=float(var_text), kernel_size=int(k_text), seed=seed
            )
        if kind == "missing":
            return PerturbSpec(kind="missing", n_missing=int(arg), seed=seed)
    except ValueError as exc:
        raise ConfigError(f"malformed perturbation {text!r}: {exc}") from exc
    raise ConfigError(f"unknown perturbation kind {kind!r}")


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        config = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config


def _block(config: dict, name: str) -> dict:
    block = config.get(name, {})
    if not isinstance(block, dict):
        raise ConfigError(f"config block {name!r} must be an object")
    return dict(block)


def _build(cls, block: dict, overrides: dict, label: str):
    merged = dict(block)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**merged)
    except TypeError as exc:
        raise ConfigError(f"invalid {label} config: {exc}") from exc


def _seed_of(args, config: dict) -> int:
    if args.seed is not None:
        return args.seed
    return int(config.get("seed", 0))


def cmd_phantom(args) -> int:
    config = _load_config_file(args.config)
    block = _block(config, "phantom")
    seed = _seed_of(args, config)
    settings = {
        "count": args.count if args.count is not None else int(block.get("count", 200)),
        "size": args.size if args.size is not None else int(block.get("size", 32)),
        "slices_per_case": args.slices_per_case
        if args.slices_per_case is not None
        else int(block.get("slices_per_case", 5)),
        "seed": seed,
    }
    run_id = make_run_id(seed, settings)
    samples = generate_phantom(
        settings["count"], settings["size"], seed, settings["slices_per_case"]
    )
    save_dataset(
        args.out,
        samples,
        manifest_extra={
            "seed": seed,
            "size": settings["size"],
            "slices_per_case": settings["slices_per_case"],
            "config_hash": config_hash(settings),
            "run_id": run_id,
        },
    )
    print(f"wrote {settings['count']} samples to {args.out} (run {run_id})")
    return 0


def cmd_train(args) -> int:
    config = _load_config_file(args.config)
    seed = _seed_of(args, config)
    net_config = _build(
        NetworkConfig,
        _block(config, "network"),
        {"seed": seed, "channels": args.channels},
        "network",
    )
    train_config = _build(
        TrainConfig,
        _block(config, "train"),
        {
            "seed": seed,
            "epochs": args.epochs,
            "learning_rate": args.lr,
            "batch_size": args.batch_size,
            "fusion": args.fusion,
        },
        "train",
    )
    weights = _build(LossWeights, _block(config, "loss"), {}, "loss")
    semantic = {
        "seed": seed,
        "network": asdict(net_config),
        "train": asdict(train_config),
        "loss": asdict(weights),
    }
    semantic["network"]["phases"] = list(net_config.phases)
    run_id = make_run_id(seed, semantic)
    samples = load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(record: dict) -> None:
        if record["epoch"] % 10 == 0 or record["epoch"] == train_config.epochs - 1:
            print(
                f"epoch {record['epoch']:4d}  total {record['total']:.4f}  "
                f"lr {record['lr']:.2e}"
            )

    model, history = train(samples, net_config, train_config, weights, progress=progress)
    save_model(
        out / "checkpoint.evdf",
        model,
        extra={
            "train": semantic["train"],
            "loss": semantic["loss"],
            "seed": seed,
            "config_hash": config_hash(semantic),
            "run_id": run_id,
        },
    )
    lines = [",".join(LOSS_CSV_COLUMNS)]
    for record in history:
        lines.append(
            ",".join(
                [
                    str(record["epoch"]),
                    repr(record["total"]),
                    repr(record["phase_term"]),
                    repr(record["mixture_term"]),
                    repr(record["lr"]),
                    run_id,
                ]
            )
        )
    (out / "losses.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'checkpoint.evdf'} and {out / 'losses.csv'} (run {run_id})")
    return 0


def cmd_eval(args) -> int:
    config = _load_config_file(args.config)
    block = _block(config, "eval")
    seed = _seed_of(args, config)
    fusion = args.fusion if args.fusion is not None else block.get("fusion", "mems")
    if fusion not in FUSION_MODES:
        raise ConfigError(f"unknown fusion mode {fusion!r}")
    n_bins = args.bins if args.bins is not None else int(block.get("n_bins", 10))
    perturb_text = args.perturb if args.perturb is not None else block.get("perturb")
    spec = parse_perturb(perturb_text, seed)
    model, checkpoint_config = load_model(args.checkpoint)
    samples = load_dataset(args.dataset)
    semantic = {
        "seed": seed,
        "fusion": fusion,
        "n_bins": n_bins,
        "perturb": perturb_text or "none",
        "checkpoint_run_id": checkpoint_config.get("run_id", ""),
    }
    run_id = make_run_id(seed, semantic)
    report = evaluate_model(
        model, samples, fusion=fusion, perturb_spec=spec, n_bins=n_bins, run_id=run_id
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(
        MetricsReport.csv_header() + "\n" + report.to_csv_row() + "\n"
    )
    payload = report.to_json_dict()
    payload["seed"] = seed
    payload["config_hash"] = config_hash(semantic)
    (out / "metrics.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(
        f"run {run_id}: dgs {report.dgs:.4f} dcs {report.dcs:.4f} "
        f"ece {report.ece:.4f} ueo {report.ueo:.4f} mean_u {report.mean_u_fused:.4f}"
    )
    return 0


def cmd_report(args) -> int:
    metric_names = (
        tuple(name.strip() for name in args.metrics.split(",") if name.strip())
        if args.metrics
        else DEFAULT_METRICS
    )
    if not metric_names:
        raise ConfigError("no metrics requested")
    written = render_report(args.csvs, args.out, metric_names)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evidseg",
        description="Evidential multi-phase segmentation: data, training, evaluation, reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic multi-phase dataset")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--count", type=int, help="number of slices")
    p.add_argument("--size", type=int, help="image side length")
    p.add_argument("--slices-per-case", type=int, help="slices grouped per case")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("train", help="train the evidence network")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--lr", type=float, help="base learning rate")
    p.add_argument("--batch-size", type=int, help="batch size")
    p.add_argument("--channels", type=int, help="feature channels")
    p.add_argument("--fusion", choices=FUSION_MODES, help="fusion used in the objective")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint, optionally perturbed")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="run seed (also seeds perturbations)")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument(
        "--perturb", help="noise:<var> | blur:<var>,<kernel> | missing:<count>"
    )
    p.add_argument("--fusion", choices=FUSION_MODES, help="fusion mode")
    p.add_argument("--bins", type=int, help="calibration bins")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render metric CSVs into SVG plots")
    p.add_argument("csvs", nargs="+", help="metrics CSV files")
    p.add_argument("--metrics", help="comma-separated metric names")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except (EvidsegError, ValueError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
