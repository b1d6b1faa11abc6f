"""Command-line entry point: ``bayeslottery <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import checkpoint as ckpt_io
from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config, update
from .data import Dataset, load_cifar10, synth_blobs, synth_images, synth_moons
from .metrics import sparsity_profile
from .optimizer import evaluate
from .tickets import (PipelineResult, Ticket, imp, reinit_weights, shuffle_mask, train_ticket,
                      transplant, transplant_pipeline)

log = logging.getLogger("bayeslottery")

EPOCH_FIELDS = ["level", "remaining_fraction", "epoch", "lr", "total", "nll", "kl",
                "test_acc", "mace"]
SUMMARY_FIELDS = ["level", "remaining_fraction", "max_test_acc", "mace_at_max", "wall_seconds"]


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "blobs":
        return (synth_blobs(cfg.n_train, cfg.num_classes, cfg.spread, cfg.data_seed, grid=cfg.grid),
                synth_blobs(cfg.n_test, cfg.num_classes, cfg.spread, cfg.data_seed + 1,
                            grid=cfg.grid))
    if cfg.dataset == "moons":
        return (synth_moons(cfg.n_train, cfg.noise, cfg.data_seed),
                synth_moons(cfg.n_test, cfg.noise, cfg.data_seed + 1))
    if cfg.dataset == "images":
        return (synth_images(cfg.n_train, cfg.num_classes, cfg.image_size, cfg.noise,
                             cfg.data_seed),
                synth_images(cfg.n_test, cfg.num_classes, cfg.image_size, cfg.noise,
                             cfg.data_seed + 1))
    if not cfg.cifar_train or not cfg.cifar_test:
        raise ConfigError("cifar_train", "cifar10 needs cifar_train and cifar_test paths")
    limit = cfg.cifar_limit or None
    return (load_cifar10(*cfg.cifar_train.split(","), limit=limit),
            load_cifar10(*cfg.cifar_test.split(","), limit=limit))


def write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _write_result(out: Path, result: PipelineResult, cfg: ExperimentConfig, prefix: str = "",
                  stem: str = "L") -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{prefix}epochs.csv", EPOCH_FIELDS, result.epoch_rows())
    write_csv(out / f"{prefix}summary.csv", SUMMARY_FIELDS, result.summary_rows())
    text = dump_config(cfg)
    for t, r in zip(result.tickets, result.records):
        ckpt_io.save(out / f"{prefix}{stem}{t.level}.bltk",
                     ckpt_io.from_ticket(t, r.eval_seed, text))


def _resolve(args, base: ExperimentConfig | None = None) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = base or ExperimentConfig()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(item, "--set expects KEY=VALUE")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v
    for key in ("seed", "levels", "rate", "score", "out", "epochs", "samples"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    cfg = update(cfg, overrides)
    cfg.validate()
    return cfg


def _embedded_config(path) -> ExperimentConfig | None:
    ck = ckpt_io.load(path)
    return parse_config(ck.config) if ck.config else None


def _ticket_from(path, cfg: ExperimentConfig | None) -> tuple[Ticket, ExperimentConfig, int]:
    """Ticket stored at ``path``; the architecture always comes from the checkpoint."""
    ck = ckpt_io.load(path)
    embedded = parse_config(ck.config) if ck.config else (cfg or ExperimentConfig())
    run_cfg = cfg or embedded
    ticket = ckpt_io.to_ticket(ck, embedded.model_config(bayesian=ck.bayesian))
    return ticket, run_cfg, ck.eval_seed


def cmd_pipeline(args, cfg: ExperimentConfig) -> None:
    train_data, test_data = load_data(cfg)
    lineage = "lrr" if args.command == "lrr" else "imp"
    levels = 0 if args.command == "train" else cfg.levels
    score = cfg.score if cfg.bayesian else "magnitude"
    result = imp(cfg.model_config(), train_data, test_data, cfg.train_config(), levels,
                 cfg.rate, score, cfg.seed, rewind_rho=cfg.rewind_rho, lineage=lineage)
    _write_result(Path(cfg.out), result, cfg)
    for row in result.summary_rows():
        print(f"level {row['level']:2d}  remaining {row['remaining_fraction']:.4f}  "
              f"max_acc {row['max_test_acc']:.4f}  mace {row['mace_at_max']:.4f}")


def cmd_transform(args, cfg: ExperimentConfig) -> None:
    ticket, run_cfg, _ = _ticket_from(args.checkpoint, cfg)
    if args.command == "shuffle":
        new = shuffle_mask(ticket, args.mode, cfg.seed)
    else:
        new = reinit_weights(ticket, cfg.seed, args.dist)
    new = replace(new, trained_state=None)
    out = Path(run_cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{new.lineage}_L{new.level}"
    if args.no_train:
        ckpt_io.save(out / f"{stem}.bltk", ckpt_io.from_ticket(new, 0, dump_config(run_cfg)))
        print(f"wrote {out / f'{stem}.bltk'}")
        return
    train_data, test_data = load_data(run_cfg)
    record = train_ticket(new, train_data, test_data, run_cfg.train_config())
    _write_result(out, PipelineResult([new], [record]), run_cfg, prefix=f"{new.lineage}_")
    print(f"{new.lineage} level {new.level}: max_acc {record.max_test_acc:.4f} "
          f"mace {record.mace_at_max:.4f}")


def cmd_transplant(args, cfg: ExperimentConfig) -> None:
    out = Path(cfg.out)
    train_data, test_data = load_data(cfg)
    tcfg = cfg.train_config()
    if args.checkpoint:
        det_ticket, _, _ = _ticket_from(args.checkpoint, cfg)
        ticket = transplant(det_ticket, cfg.model_config(bayesian=True))
        record = train_ticket(ticket, train_data, test_data, tcfg)
        result = PipelineResult([ticket], [record])
        det_seconds = 0.0
    else:
        det, result = transplant_pipeline(cfg.model_config(), train_data, test_data, tcfg,
                                          cfg.levels, cfg.rate, cfg.seed)
        _write_result(out, det, replace(cfg, bayesian=False), prefix="det_")
        det_seconds = det.wall_seconds
    _write_result(out, result, replace(cfg, bayesian=True), prefix="transplant_")
    r = result.records[0]
    print(f"transplant level {result.tickets[0].level}: max_acc {r.max_test_acc:.4f} "
          f"mace {r.mace_at_max:.4f}  pipeline seconds {det_seconds + r.wall_seconds:.2f}")


def cmd_analyze(args, cfg: ExperimentConfig | None) -> None:
    sparsity_rows, metric_rows = [], []
    for path in args.checkpoint:
        ck = ckpt_io.load(path)
        prof = sparsity_profile(ck.masks)
        for row in prof.rows():
            sparsity_rows.append({"checkpoint": Path(path).name, "level": ck.level, **row})
        if args.no_eval:
            continue
        ticket, run_cfg, eval_seed = _ticket_from(path, cfg)
        _, test_data = load_data(run_cfg)
        model = ticket.model(ticket.trained_state or ticket.init_state)
        acc, cal = evaluate(model, test_data, run_cfg.eval_samples, eval_seed, run_cfg.bins)
        metric_rows.append({"checkpoint": Path(path).name, "level": ck.level,
                            "remaining_fraction": ticket.remaining_fraction,
                            "test_acc": acc, "mace": cal})
        print(f"{Path(path).name}: global sparsity {prof.global_sparsity:.6f} "
              f"acc {acc:.4f} mace {cal:.4f}")
    out = Path(args.out or (cfg.out if cfg else "."))
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sparsity.csv", ["checkpoint", "level", "layer", "size", "zeros", "sparsity"],
              sparsity_rows)
    if metric_rows:
        write_csv(out / "analyze.csv",
                  ["checkpoint", "level", "remaining_fraction", "test_acc", "mace"], metric_rows)
    if args.no_eval:
        for row in sparsity_rows:
            if row["layer"] == "global":
                print(f"{row['checkpoint']}: global sparsity {row['sparsity']:.6f}")


def bench(cfg: ExperimentConfig, pipelines: bool = False) -> list[dict]:
    """Wall-clock seconds of one training level, deterministic vs Bayesian."""
    train_data, test_data = load_data(cfg)
    tcfg = cfg.train_config()
    rows = []
    for bayes in (False, True):
        res = imp(cfg.model_config(bayesian=bayes), train_data, test_data, tcfg, 0, cfg.rate,
                  cfg.score if bayes else "magnitude", cfg.seed)
        rows.append({"variant": "bayesian" if bayes else "deterministic",
                     "samples": cfg.samples if bayes else 1,
                     "wall_seconds": res.wall_seconds})
    rows.append({"variant": "ratio", "samples": cfg.samples,
                 "wall_seconds": rows[1]["wall_seconds"] / rows[0]["wall_seconds"]})
    if pipelines:
        bayes_imp = imp(cfg.model_config(bayesian=True), train_data, test_data, tcfg,
                        cfg.levels, cfg.rate, cfg.score, cfg.seed)
        det, tp = transplant_pipeline(cfg.model_config(), train_data, test_data, tcfg,
                                      cfg.levels, cfg.rate, cfg.seed)
        rows.append({"variant": "bayesian_imp_pipeline", "samples": cfg.samples,
                     "wall_seconds": bayes_imp.wall_seconds})
        rows.append({"variant": "transplant_pipeline", "samples": cfg.samples,
                     "wall_seconds": det.wall_seconds + tp.wall_seconds})
    return rows


def cmd_bench(args, cfg: ExperimentConfig) -> None:
    rows = bench(cfg, args.pipelines)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "bench.csv", ["variant", "samples", "wall_seconds"], rows)
    for row in rows:
        print(f"{row['variant']:>24s}  {row['wall_seconds']:.3f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayeslottery",
                                     description="Bayesian lottery-ticket experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, pruning=True):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--epochs", type=int)
        p.add_argument("--samples", type=int)
        if pruning:
            p.add_argument("--levels", type=int)
            p.add_argument("--rate", type=float)
            p.add_argument("--score", choices=["magnitude", "snr", "square", "mu"])

    for name in ("train", "imp", "lrr"):
        common(sub.add_parser(name, help=f"run the {name} pipeline"))
    p = sub.add_parser("shuffle", help="shuffle a ticket's mask and retrain")
    common(p, pruning=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=["global", "even", "layerwise"], required=True)
    p.add_argument("--no-train", action="store_true")
    p = sub.add_parser("reinit", help="redraw a ticket's weights and retrain")
    common(p, pruning=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dist", choices=["uniform", "normal"])
    p.add_argument("--no-train", action="store_true")
    p = sub.add_parser("transplant", help="deterministic ticket -> Bayesian VI phase")
    common(p)
    p.add_argument("--checkpoint", help="deterministic ticket; default runs deterministic IMP")
    p = sub.add_parser("analyze", help="sparsity profile and metrics of checkpoints")
    p.add_argument("--checkpoint", nargs="+", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--no-eval", action="store_true", help="sparsity only")
    p = sub.add_parser("bench", help="deterministic vs Bayesian runtime per level")
    common(p)
    p.add_argument("--pipelines", action="store_true",
                   help="also time Bayesian IMP vs the transplant pipeline")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "analyze":
            cfg = load_config(args.config) if args.config else None
            cmd_analyze(args, cfg)
            return 0
        base = None
        if getattr(args, "checkpoint", None) and not args.config:
            base = _embedded_config(args.checkpoint)
        cfg = _resolve(args, base)
        handler = {"train": cmd_pipeline, "imp": cmd_pipeline, "lrr": cmd_pipeline,
                   "shuffle": cmd_transform, "reinit": cmd_transform,
                   "transplant": cmd_transplant, "bench": cmd_bench}[args.command]
        handler(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
