"""Command-line entry point: ``orcomplex <command> [options]``."""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .complex import CombinatorialComplex, ComplexError
from .config import ABLATION_ROWS, ConfigError, RunConfig
from .model import CheckpointMismatch, OrModel, no_grad_forward
from .numerics import NumericsError
from .scene import ModalityToggles, SceneError
from .synth import BadRatios, InvalidConfig, generate_episode
from .tasks import detect_sterility_breach, reduce_to_scene_graph
from .training import (
    MissingDataset,
    NonFiniteLoss,
    WindowSource,
    evaluate,
    load_dataset,
    save_dataset,
    train,
)

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 1, 3, 4

log = logging.getLogger("orcomplex")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.synth.seed = args.seed
        cfg.model.seed = args.seed
    return cfg


def _out_dir(args, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


@contextlib.contextmanager
def _thread_mode(single: bool):
    if not single:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


def _episode_job(payload):
    cfg_dict, index = payload
    return generate_episode(RunConfig.from_dict(cfg_dict).synth, index)


def cmd_generate(cfg: RunConfig, out: Path, single_thread: bool = True) -> dict:
    cfg.synth.validate()
    n = cfg.synth.episodes
    workers = 1 if single_thread else min(os.cpu_count() or 1, max(n, 1))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            episodes = list(pool.map(_episode_job, [(cfg.to_dict(), i) for i in range(n)]))
    else:
        episodes = [generate_episode(cfg.synth, i) for i in range(n)]
    manifest = save_dataset(episodes, cfg, out)
    cfg.save(out / "config.json")
    return manifest


def _splits(manifest: dict) -> dict:
    return {k: list(v) for k, v in manifest["splits"].items()}


def cmd_train(cfg: RunConfig, data: Path, out: Path):
    manifest, episodes = load_dataset(data)
    if not episodes:
        raise MissingDataset(f"{data} holds no episodes")
    result = train(cfg, episodes, _splits(manifest), on_log=lambda e: log.info("%s", json.dumps(e)))
    extra = {
        "best_step": result.best_step,
        "val": None if result.best_val is None else {
            "action_f1": result.best_val.action_f1,
            "phase_f1": result.best_val.phase_f1,
            "relation_f1": result.best_val.relation_f1,
        },
        "toggles": cfg.to_dict()["modality_toggles"],
    }
    result.model.save(out / "checkpoint.json", extra)
    io.write(out / "train_log.json", "train_log", {"history": result.history, "seconds": result.seconds, **extra})
    return result


def _subsample(items: list, limit: int) -> list:
    if not limit or len(items) <= limit:
        return items
    keep = np.linspace(0, len(items) - 1, limit).round().astype(int)
    return [items[i] for i in keep]


def cmd_eval(cfg: RunConfig, data: Path, checkpoint: Path, out: Path, splits=("train", "val", "test"),
             max_windows: int = 0, triplets: bool = False) -> dict:
    manifest, episodes = load_dataset(data)
    model, _ = OrModel.load(checkpoint)
    source = WindowSource(episodes, cfg)
    report = {}
    for split in splits:
        idx = _subsample(source.index(manifest["splits"][split]), max_windows)
        windows = [source.window(e, t) for e, t in idx]
        m = evaluate(model, windows, cfg, with_triplets=triplets)
        report[split] = m.report
        if triplets:
            io.write_lines(out / f"triplets_{split}.txt", m.report["triplets"])
    io.write(out / "report.json", "report", report)
    return report


def cmd_inspect(path: Path) -> tuple[dict, list]:
    data = io.read(path, "complex")
    try:
        cc = CombinatorialComplex.from_dict(data, strict=False)
    except (KeyError, TypeError, ValueError) as exc:
        raise io.ParseError(f"malformed complex record: {exc}") from exc
    return cc.summary(), cc.validate()


def cmd_build(cfg: RunConfig, data: Path, episode: int, end: int | None, out: Path) -> CombinatorialComplex:
    _, episodes = load_dataset(data)
    source = WindowSource(episodes, cfg)
    if end is None:
        end = len(episodes[episode].frames) - 1
    w = source.window(episode, end)
    io.write(out, "complex", w.cc.to_dict())
    return w.cc


def cmd_reduce(cfg: RunConfig, data: Path, checkpoint: Path, episode: int, end: int | None, out: Path) -> list[str]:
    _, episodes = load_dataset(data)
    model, _ = OrModel.load(checkpoint)
    source = WindowSource(episodes, cfg)
    if end is None:
        end = len(episodes[episode].frames) - 1
    w = source.window(episode, end)
    features = no_grad_forward(model, w.cc, cfg.build.root_joint).features
    lines = sorted(reduce_to_scene_graph(w.cc, features, model.heads, model.vocab["predicates"], cfg.build.root_joint))
    io.write_lines(out, lines)
    return lines


def cmd_breach_check(cfg: RunConfig, data: Path, out: Path) -> dict:
    manifest, episodes = load_dataset(data)
    source = WindowSource(episodes, cfg)
    rows = []
    for e, t in source.index(range(len(episodes))):
        w = source.window(e, t)
        flag, pairs = detect_sterility_breach(w.cc, cfg.build)
        rows.append({"episode": e, "end": t, "breach": flag, "pairs": [list(p) for p in pairs], "label": w.labels.breach})
    summary = {
        "windows": len(rows),
        "flagged": sum(r["breach"] for r in rows),
        "label_agreement": sum(r["breach"] == r["label"] for r in rows) / max(len(rows), 1),
        "rows": rows,
    }
    io.write(out / "breach.json", "breach_report", summary)
    return summary


def cmd_ablate(cfg: RunConfig, data: Path, out: Path, rows: list[str] | None = None, eval_split: str = "test",
               max_windows: int = 0) -> list[dict]:
    """Train and evaluate the cumulative modality rows; returns one dict per row, in table order."""
    manifest, episodes = load_dataset(data)
    selected = [(name, t) for name, t in ABLATION_ROWS if rows is None or name in rows]
    table = []
    for name, toggles in selected:
        run = RunConfig.from_dict(cfg.to_dict())
        run.modality_toggles = ModalityToggles(**toggles)
        result = train(run, episodes, _splits(manifest))
        source = WindowSource(episodes, run)
        idx = _subsample(source.index(manifest["splits"][eval_split]), max_windows)
        m = evaluate(result.model, [source.window(e, t) for e, t in idx], run)
        table.append({"row": name, "toggles": toggles, "next_action_f1": m.action_f1, "robot_phase_f1": m.phase_f1,
                      "relation_f1": m.relation_f1, "best_step": result.best_step})
    trend = {
        key: all(b[key] >= a[key] for a, b in zip(table, table[1:]))
        for key in ("next_action_f1", "robot_phase_f1")
    }
    io.write(out / "ablation.json", "ablation", {"rows": table, "monotone": trend, "split": eval_split})
    io.write_lines(out / "ablation.txt", format_ablation(table, trend))
    return table


def format_ablation(table: list[dict], trend: dict) -> list[str]:
    cols = ["objects", "skeletons", "visual", "robot_logs", "audio", "temporal"]
    lines = ["| " + " | ".join(cols) + " | next_action F1 | robot_phase F1 |",
             "|" + "---|" * (len(cols) + 2)]
    for r in table:
        marks = ["x" if r["toggles"][c] else "" for c in cols]
        lines.append("| " + " | ".join(marks) + f" | {100 * r['next_action_f1']:.2f} | {100 * r['robot_phase_f1']:.2f} |")
    lines.append(f"monotone next_action: {trend['next_action_f1']}; monotone robot_phase: {trend['robot_phase_f1']}")
    return lines


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config file (JSON container)")
    common.add_argument("--seed", type=int, help="overrides synth and model seeds")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("--single-thread", action="store_true", help="deterministic single-threaded mode")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="orcomplex", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write synthetic episodes and splits")
    t = sub.add_parser("train", parents=[common], help="multi-task training")
    t.add_argument("--data")
    t.add_argument("--steps", type=int)
    e = sub.add_parser("eval", parents=[common], help="metrics report for a checkpoint")
    e.add_argument("--data")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--split", action="append", choices=["train", "val", "test"])
    e.add_argument("--max-windows", type=int, default=0)
    e.add_argument("--triplets", action="store_true")
    i = sub.add_parser("inspect", parents=[common], help="summarise and validate a complex file")
    i.add_argument("path")
    b = sub.add_parser("build", parents=[common], help="build one window complex from the dataset")
    b.add_argument("--data")
    b.add_argument("--episode", type=int, default=0)
    b.add_argument("--end", type=int)
    a = sub.add_parser("ablate", parents=[common], help="incremental modality ablation")
    a.add_argument("--data")
    a.add_argument("--rows", nargs="+", choices=[name for name, _ in ABLATION_ROWS])
    a.add_argument("--steps", type=int)
    a.add_argument("--split", default="test", choices=["train", "val", "test"])
    a.add_argument("--max-windows", type=int, default=0)
    r = sub.add_parser("reduce", parents=[common], help="export predicted triplets for one window")
    r.add_argument("--data")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--episode", type=int, default=0)
    r.add_argument("--end", type=int)
    c = sub.add_parser("breach-check", parents=[common], help="rule-based breach detection, no model")
    c.add_argument("--data")
    return p


def _run(args) -> int:
    cfg = _load_config(args)
    data = Path(getattr(args, "data", None) or cfg.paths.data)
    if args.command == "generate":
        manifest = cmd_generate(cfg, _out_dir(args, cfg.paths.data), args.single_thread)
        sizes = {k: len(v) for k, v in manifest["splits"].items()}
        print(f"episodes: {len(manifest['episodes'])}; splits: {sizes['train']}/{sizes['val']}/{sizes['test']}")
    elif args.command == "train":
        if args.steps is not None:
            cfg.train.steps = args.steps
        result = cmd_train(cfg, data, _out_dir(args, str(Path(cfg.paths.checkpoint).parent)))
        v = result.best_val
        if v is not None:
            print(f"best step {result.best_step}: val next_action {v.action_f1:.4f}, "
                  f"robot_phase {v.phase_f1:.4f}, relation {v.relation_f1:.4f}")
        print(f"trained {cfg.train.steps} steps in {result.seconds:.1f}s")
    elif args.command == "eval":
        out = _out_dir(args, str(Path(cfg.paths.report).parent))
        report = cmd_eval(cfg, data, Path(args.checkpoint), out, tuple(args.split or ("train", "val", "test")),
                          args.max_windows, args.triplets)
        for split, rep in report.items():
            print(f"{split}: next_action {rep['next_action']['macro_f1']:.4f}, "
                  f"robot_phase {rep['robot_phase']['macro_f1']:.4f}, relation {rep['relation']['macro_f1']:.4f}, "
                  f"breach flagged {rep['breach']['flagged']}/{rep['windows']}")
    elif args.command == "inspect":
        summary, violations = cmd_inspect(Path(args.path))
        ranks = "/".join(str(summary["ranks"].get(r, 0)) for r in range(max(summary["ranks"], default=-1) + 1))
        print(f"ranks: {ranks}")
        print(f"cells: {summary['cells']}; incidence pairs: {summary['incidence']}")
        for kind, n in summary["kinds"].items():
            print(f"  {kind}: {n}")
        if violations:
            for v in violations:
                print(f"violation: {v}")
            return EXIT_VALIDATION
        print("valid")
    elif args.command == "build":
        out = Path(args.out) if args.out else Path("window.json")
        cc = cmd_build(cfg, data, args.episode, args.end, out)
        print(json.dumps(cc.summary(), sort_keys=True))
    elif args.command == "ablate":
        if args.steps is not None:
            cfg.train.steps = args.steps
        out = _out_dir(args, "ablation")
        cmd_ablate(cfg, data, out, args.rows, args.split, args.max_windows)
        print((out / "ablation.txt").read_text(encoding="utf-8"), end="")
    elif args.command == "reduce":
        out = Path(args.out) if args.out else Path("triplets.txt")
        for line in cmd_reduce(cfg, data, Path(args.checkpoint), args.episode, args.end, out):
            print(line)
    elif args.command == "breach-check":
        summary = cmd_breach_check(cfg, data, _out_dir(args, "breach"))
        print(f"windows: {summary['windows']}; flagged: {summary['flagged']}; "
              f"label agreement: {summary['label_agreement']:.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with _thread_mode(args.single_thread):
            return _run(args)
    except (io.IoFailure, MissingDataset) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NonFiniteLoss, NumericsError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.ParseError, ConfigError, InvalidConfig, BadRatios, ComplexError, SceneError, CheckpointMismatch,
            ValueError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
