"""Command-line pipeline: synth -> features -> train -> backtest -> report-cores.

Every command reads an optional flat key=value config file; flags override
file values.  Runs are reproducible: all randomness flows from the single
run seed through named streams, and each training run writes a manifest
with the resolved config and input hashes.

Exit codes: 0 success, 2 config error, 3 data error, 4 shape error,
1 I/O or unexpected failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import backtest as bt
from . import features as feat
from . import interpret, neural, tensor, ttformat
from .config import ConfigError, RunConfig, build_config, parse_config_file, stream_rng

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SHAPE = 4

CONFIG_ERRORS = (ConfigError, neural.InvalidConfig, feat.InvalidConfig)
DATA_ERRORS = (
    feat.NonPositivePrice,
    feat.WindowTooLarge,
    feat.MisalignedDates,
    feat.InsufficientHistory,
    feat.UnknownTarget,
    neural.EmptyDataset,
    neural.InvalidLabel,
    bt.InvalidDistribution,
    bt.ZeroVariance,
)
SHAPE_ERRORS = (
    tensor.ElementCountMismatch,
    tensor.ModeSizeMismatch,
    tensor.ModeIndexOutOfRange,
    ttformat.RankMismatch,
    ttformat.InvalidRank,
    ttformat.LengthMismatch,
    neural.ShapeMismatch,
    neural.EmptySequence,
    neural.CacheMismatch,
    bt.LengthMismatch,
    interpret.ShapeDrift,
)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_from_args(args) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {
        key: getattr(args, key)
        for key in (
            "data_manifest",
            "synth_days",
            "signal_strength",
            "target",
            "split",
            "seq_len",
            "epochs",
            "batch_size",
            "learning_rate",
            "ranks",
            "hidden_dims",
            "out_dir",
            "seed",
        )
        if hasattr(args, key)
    }
    return build_config(file_values, overrides)


def _load_or_synth_panel(cfg: RunConfig) -> tuple[feat.AssetPanel, list]:
    """Panel plus the list of input files that determine it (for hashing)."""
    if cfg.data_manifest:
        panel = feat.load_panel(cfg.data_manifest)
        base = os.path.dirname(os.path.abspath(cfg.data_manifest))
        inputs = [cfg.data_manifest]
        with open(cfg.data_manifest, newline="") as f:
            for row in csv.DictReader(f):
                inputs.append(os.path.join(base, row["path"]))
        return panel, inputs
    synth_cfg = feat.SynthConfig(
        days=cfg.synth_days,
        signal_strength=cfg.signal_strength,
        target=cfg.target,
        driver="EQ1" if cfg.target != "EQ1" else "EQ2",
    )
    return feat.synth_panel(synth_cfg, cfg.seed), []


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    panel, _ = _load_or_synth_panel(replace(cfg, data_manifest=""))
    data_dir = os.path.join(cfg.out_dir, "data")
    manifest = feat.write_panel(panel, data_dir)
    print(f"wrote {len(panel.instruments)} instrument files and {manifest}")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = _config_from_args(args)
    panel, _ = _load_or_synth_panel(cfg)
    fp = feat.assemble(panel, cfg.target, cfg.split)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "features.csv")
    feat.dump_features_csv(fp, path)
    print(
        f"wrote {path}: {fp.n_days} days x {len(fp.symbols)} instruments "
        f"x {feat.N_FEATURES} features ({fp.n_train} train days)"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    panel, input_files = _load_or_synth_panel(cfg)
    fp = feat.assemble(panel, cfg.target, cfg.split)
    train_samples, _ = fp.samples(cfg.seq_len)
    dataset = [s.pair for s in train_samples]

    in_dims = cfg.input_dims()
    hidden_dims = cfg.hidden_tensor_dims()
    ranks = cfg.rank_tuple()
    model = neural.init_model(in_dims, hidden_dims, ranks, stream_rng(cfg.seed, "init"))
    train_cfg = neural.TrainConfig(
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seq_len=cfg.seq_len,
        ranks=ranks,
        seed=cfg.seed,
    )
    model, log = neural.train(model, dataset, train_cfg)

    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt = os.path.join(cfg.out_dir, "checkpoint.txt")
    neural.save_model(model, ckpt, seed=cfg.seed, epoch=cfg.epochs)
    losses_path = os.path.join(cfg.out_dir, "epoch_losses.csv")
    with open(losses_path, "w") as f:
        f.write("epoch,mean_loss\n")
        for e, loss in enumerate(log.epoch_losses, start=1):
            f.write(f"{e},{loss!r}\n")
    if log.core_change is not None:
        interpret.write_core_change_csv(
            log.core_change, os.path.join(cfg.out_dir, "core_change.csv")
        )

    tt_params = ttformat.tt_param_count(in_dims, hidden_dims, ranks)
    dense_params = ttformat.dense_param_count(in_dims, hidden_dims)
    manifest = {
        "config": dict(sorted(cfg.__dict__.items())),
        "input_hashes": {os.path.basename(p): _sha256(p) for p in input_files},
        "tt_input_layer_params": tt_params,
        "dense_equivalent_params": dense_params,
        "compression_ratio": dense_params / tt_params,
        "train_samples": len(dataset),
        "final_train_loss": log.epoch_losses[-1],
    }
    with open(os.path.join(cfg.out_dir, "run_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    print(
        f"trained {cfg.epochs} epochs on {len(dataset)} samples; "
        f"TT input layer parameters: {tt_params} "
        f"(dense {dense_params}, compression {dense_params / tt_params:.1f}x)"
    )
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = _config_from_args(args)
    model, _meta = neural.load_model(args.checkpoint)
    panel, _ = _load_or_synth_panel(cfg)
    fp = feat.assemble(panel, cfg.target, cfg.split)
    if model.in_dims != feat.TENSOR_DIMS_5:
        raise neural.ShapeMismatch(
            f"checkpoint expects inputs {model.in_dims}, features provide "
            f"{feat.TENSOR_DIMS_5}"
        )
    _, test_samples = fp.samples(cfg.seq_len)
    if not test_samples:
        raise feat.InsufficientHistory("no test windows after the split")
    probs = np.array([neural.forward_sequence(model, s.inputs)[0] for s in test_samples])
    labels = [s.label for s in test_samples]
    next_returns = np.array([fp.target_next_return[s.end_index] for s in test_samples])
    dates = [s.date for s in test_samples]
    report = bt.evaluate_predictions(probs, labels, next_returns)

    os.makedirs(cfg.out_dir, exist_ok=True)
    json_path = os.path.join(cfg.out_dir, "backtest.json")
    csv_path = os.path.join(cfg.out_dir, "track.csv")
    bt.write_report_json(report, json_path)
    bt.write_track_csv(report, dates, csv_path)
    sharpe_text = f"{report.sharpe:.3f}" if report.sharpe_defined else "undefined"
    print(
        f"backtest over {len(test_samples)} days: sharpe {sharpe_text}, "
        f"total return {report.total_return:.4f}, accuracy {report.accuracy:.4f}"
    )
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


def cmd_report_cores(args) -> int:
    log = interpret.read_core_change_csv(args.log)
    labels = None
    manifest_path = args.manifest or os.path.join(os.path.dirname(args.log), "run_manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path) as f:
            manifest = json.load(f)
        dims = manifest.get("config", {}).get("in_dims")
        if dims:
            labels = interpret.mode_labels(int(x) for x in dims.split(","))
    out_dir = args.out_dir or os.path.dirname(args.log) or "."
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "core_ranking.json")
    interpret.write_ranking_json(log, json_path, labels=labels)
    ranking = interpret.modal_ranking(log)
    for core, total in ranking:
        name = labels[core - 1] if labels else f"data mode {core}"
        print(f"core {core} [{name}]: total normalized change {total:.3e}")
    print(f"wrote {json_path}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    with open(args.input) as f:
        lines = f.read().strip("\n").split("\n")
    head = lines[0].split()
    if head[0] != "tensor" or len(lines) < 2:
        raise ConfigError(f"{args.input}: expected 'tensor dims=...' header plus data line")
    dims = tuple(int(x) for x in dict(kv.split("=") for kv in head[1:])["dims"].split(","))
    values = np.array([float(x) for x in lines[1].split()])
    t = tensor.DenseTensor(dims, values)
    max_ranks = None
    if args.max_ranks:
        max_ranks = tuple(int(x) for x in args.max_ranks.split(","))
    tt = ttformat.tt_svd(t, max_ranks=max_ranks, tol=args.tol)
    with open(args.out, "w") as f:
        f.write(ttformat.format_tt_vector(tt))
    rebuilt = ttformat.tt_reconstruct(tt)
    err = math.sqrt(tensor.frobenius_norm_sq(tensor.DenseTensor(dims, rebuilt.data - t.data)))
    denom = math.sqrt(tensor.frobenius_norm_sq(t)) or 1.0
    print(f"ranks {tt.ranks}, relative reconstruction error {err / denom:.3e}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _add_run_options(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--data-manifest", dest="data_manifest", help="CSV manifest of instrument files")
    p.add_argument("--synth-days", dest="synth_days", type=int)
    p.add_argument("--signal-strength", dest="signal_strength", type=float)
    p.add_argument("--target", help="target instrument symbol")
    p.add_argument("--split", type=float, help="train fraction, in (0, 1)")
    p.add_argument("--seq-len", dest="seq_len", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--ranks", help="TT ranks: scalar, interior list, or full list")
    p.add_argument("--hidden-dims", dest="hidden_dims", help="hidden tensor mode sizes")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttrnn",
        description="Tensor-train recurrent forecasting pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic 24-instrument CSV panel")
    _add_run_options(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="assemble features and write the audit CSV")
    _add_run_options(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train a TT-RNN and write checkpoint + logs")
    _add_run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("backtest", help="evaluate a checkpoint on the test split")
    _add_run_options(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("report-cores", help="rank TT cores by training movement")
    p.add_argument("--log", required=True, help="core_change.csv from a training run")
    p.add_argument("--manifest", help="run_manifest.json for mode labels")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_report_cores)

    p = sub.add_parser("decompose", help="TT-SVD a dense tensor file")
    p.add_argument("--input", required=True, help="tensor file: 'tensor dims=..' + data line")
    p.add_argument("--out", required=True, help="output TT cores file")
    p.add_argument("--max-ranks", dest="max_ranks", help="full rank tuple, comma separated")
    p.add_argument("--tol", type=float, help="relative Frobenius error budget")
    p.set_defaults(func=cmd_decompose)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SHAPE_ERRORS as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
