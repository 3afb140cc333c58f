"""Dataset access, window caching, the training loop and evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from . import numerics as nx
from .complex import CombinatorialComplex
from .config import RunConfig, to_plain
from .model import OrModel, kind_dims, no_grad_forward
from .numerics import Adam, RngStream
from .scene import VisualGate, apply_toggles, build_frame, build_temporal
from .synth import Episode, TaskLabels, split_dataset
from .tasks import (
    confusion_matrix,
    detect_sterility_breach,
    format_triplet,
    macro_f1,
    multitask_loss,
    per_class_f1,
    relation_targets,
)

log = logging.getLogger(__name__)


class MissingDataset(FileNotFoundError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


def save_dataset(episodes: list[Episode], cfg: RunConfig, out_dir) -> dict:
    out = Path(out_dir)
    train, val, test = split_dataset(len(episodes), cfg.synth.split, cfg.synth.seed)
    files = []
    for ep in episodes:
        name = f"episode_{ep.index:04d}.json"
        io.write(out / name, "episode", ep.to_dict())
        files.append(name)
    manifest = {
        "episodes": files,
        "splits": {"train": train, "val": val, "test": test},
        "synth": to_plain(cfg.synth),
    }
    io.write(out / "manifest.json", "manifest", manifest)
    return manifest


def load_dataset(data_dir) -> tuple[dict, list[Episode]]:
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise MissingDataset(f"no dataset manifest at {path}")
    manifest = io.read(path, "manifest")
    episodes = [Episode.from_dict(io.read(Path(data_dir) / name, "episode")) for name in manifest["episodes"]]
    return manifest, episodes


@dataclass
class Window:
    cc: CombinatorialComplex
    labels: TaskLabels
    episode: int
    end: int
    rel_targets: np.ndarray | None = None


@dataclass
class WindowSource:
    """Builds spatio-temporal windows from episodes, caching per-frame complexes."""

    episodes: list[Episode]
    cfg: RunConfig
    _frames: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.gate = VisualGate(self.cfg.model.seed)
        self.T = self.cfg.build.window_T

    def index(self, episode_ids) -> list[tuple[int, int]]:
        """(episode position, window end frame) for every window of the given episodes."""
        return [(e, t) for e in episode_ids for t in self.episodes[e].window_ends(self.T)]

    def _frame(self, e: int, t: int) -> CombinatorialComplex:
        key = (e, t)
        if key not in self._frames:
            frame = apply_toggles(self.episodes[e].frames[t], self.cfg.modality_toggles)
            self._frames[key] = build_frame(frame, self.cfg.build, self.gate, 0)
        return self._frames[key]

    def window(self, e: int, t: int) -> Window:
        ep = self.episodes[e]
        span = range(t - self.T + 1, t + 1) if self.cfg.modality_toggles.temporal else range(t, t + 1)
        cc = build_temporal([self._frame(e, i) for i in span], self.cfg.build).freeze()
        labels = ep.labels_per_window(self.T)[t - (self.T - 1)]
        return Window(cc, labels, e, t)


@dataclass
class Metrics:
    action_f1: float
    phase_f1: float
    relation_f1: float
    report: dict

    @property
    def score(self) -> float:
        return (self.action_f1 + self.phase_f1 + self.relation_f1) / 3


def window_loss(model: OrModel, w: Window, cfg: RunConfig) -> nx.Tensor:
    out = model.forward(w.cc, cfg.build.root_joint)
    t = cfg.train
    loss = multitask_loss(out.action_logits, out.phase_logits, w.labels, t.lam_a, t.lam_p)
    if out.relation_logits is not None and t.lam_r:
        targets = relation_targets(out.pairs, w.labels.relations)
        loss = loss + nx.scale(nx.cross_entropy(out.relation_logits, targets), t.lam_r)
    return loss


def evaluate(model: OrModel, windows: list[Window], cfg: RunConfig, with_triplets: bool = False) -> Metrics:
    vocab = model.vocab
    A, P, R = len(vocab["actions"]), len(vocab["phases"]), len(vocab["predicates"])
    ya, pa, yp, pp, yr, pr = [], [], [], [], [], []
    breach_rows, triplets = [], []
    for w in windows:
        out = no_grad_forward(model, w.cc, cfg.build.root_joint)
        ya.append(w.labels.next_action)
        pa.append(int(out.action_logits.data.argmax()))
        yp.append(w.labels.robot_phase)
        pp.append(int(out.phase_logits.data.argmax()))
        if out.relation_logits is not None:
            pred = out.relation_logits.data.argmax(axis=1)
            yr.extend(relation_targets(out.pairs, w.labels.relations).tolist())
            pr.extend(pred.tolist())
            if with_triplets:
                triplets.extend(
                    format_triplet(s.entity_id, vocab["predicates"][k], o.entity_id)
                    for (s, o), k in zip(out.pairs, pred)
                    if k != 0
                )
        flag, pairs = detect_sterility_breach(w.cc, cfg.build)
        breach_rows.append({"episode": w.episode, "end": w.end, "breach": flag, "pairs": [list(p) for p in pairs],
                            "label": w.labels.breach})
    rel_classes = range(1, R)
    action_f1 = macro_f1(pa, ya, A)
    phase_f1 = macro_f1(pp, yp, P)
    relation_f1 = macro_f1(pr, yr, R, classes=rel_classes) if yr else 0.0

    def task(pred, true, n, names, classes=None):
        f1, present = per_class_f1(pred, true, n)
        return {
            "macro_f1": macro_f1(pred, true, n, classes),
            "per_class_f1": {names[i]: float(f1[i]) for i in range(n) if present[i]},
            "confusion": confusion_matrix(pred, true, n).tolist(),
            "classes": list(names),
        }

    n_flag = sum(r["breach"] for r in breach_rows)
    agree = sum(r["breach"] == r["label"] for r in breach_rows)
    report = {
        "windows": len(windows),
        "next_action": task(pa, ya, A, vocab["actions"]),
        "robot_phase": task(pp, yp, P, vocab["phases"]),
        "relation": task(pr, yr, R, vocab["predicates"], rel_classes),
        "breach": {"flagged": n_flag, "label_agreement": agree / max(len(breach_rows), 1), "windows": breach_rows},
    }
    if with_triplets:
        report["triplets"] = triplets
    return Metrics(action_f1, phase_f1, relation_f1, report)


def build_model(cfg: RunConfig, vocab: dict) -> OrModel:
    return OrModel(cfg.model, kind_dims(cfg.synth, cfg.build, cfg.modality_toggles), vocab)


@dataclass
class TrainResult:
    model: OrModel
    best_step: int
    best_val: Metrics | None
    history: list[dict]
    seconds: float


def train(cfg: RunConfig, episodes: list[Episode], splits: dict, on_log=None) -> TrainResult:
    """Adam on the joint loss; keeps the parameters with the best validation score."""
    start = time.perf_counter()
    source = WindowSource(episodes, cfg)
    model = build_model(cfg, episodes[0].vocab)
    train_idx = source.index(splits["train"])
    val_idx = source.index(splits["val"])
    if cfg.train.eval_windows and len(val_idx) > cfg.train.eval_windows:
        keep = np.linspace(0, len(val_idx) - 1, cfg.train.eval_windows).round().astype(int)
        val_idx = [val_idx[i] for i in keep]
    val_windows = [source.window(e, t) for e, t in val_idx]
    params = model.parameters()
    opt = Adam(params, lr=cfg.train.lr)
    order_rng = RngStream(cfg.model.seed, 400)
    order: list[int] = []
    history: list[dict] = []
    best_state, best_step, best_val = model.state(), 0, None
    running = []

    def checkpoint_eval(step: int) -> None:
        nonlocal best_state, best_step, best_val
        if not val_windows:
            return
        m = evaluate(model, val_windows, cfg)
        entry = {"step": step, "loss": float(np.mean(running)) if running else None,
                 "val_action_f1": m.action_f1, "val_phase_f1": m.phase_f1, "val_relation_f1": m.relation_f1}
        history.append(entry)
        running.clear()
        if on_log:
            on_log(entry)
        if best_val is None or m.score > best_val.score:
            best_state, best_step, best_val = model.state(), step, m

    for step in range(1, cfg.train.steps + 1):
        batch = []
        for _ in range(cfg.train.batch_size):
            if not order:
                order = [int(i) for i in order_rng.permutation(len(train_idx))]
            batch.append(train_idx[order.pop()])
        opt.zero_grad()
        total = None
        for e, t in batch:
            loss = window_loss(model, source.window(e, t), cfg)
            total = loss if total is None else total + loss
        total = nx.scale(total, 1.0 / len(batch))
        value = total.item()
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss became {value} at step {step}")
        nx.backward(total)
        opt.step()
        running.append(value)
        if step % cfg.train.eval_every == 0 or step == cfg.train.steps:
            checkpoint_eval(step)
    if cfg.train.steps == 0:
        best_state, best_step = model.state(), 0
    model.load_state(best_state)
    return TrainResult(model, best_step, best_val, history, time.perf_counter() - start)


def split_windows(cfg: RunConfig, episodes: list[Episode], ids) -> list[Window]:
    source = WindowSource(episodes, cfg)
    return [source.window(e, t) for e, t in source.index(ids)]
