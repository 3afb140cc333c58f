"""Task heads, the joint loss, the zero-shot breach rule, scene-graph reduction and metrics."""

from __future__ import annotations

import itertools
from collections.abc import Sequence

import numpy as np

from . import numerics as nx
from .complex import CombinatorialComplex
from .hat import DimMismatch, glorot
from .numerics import Parameter, RngStream, Tensor
from .scene import BuildConfig, EntityGeometry, complex_entities, entity_distance


class LengthMismatch(ValueError):
    pass


class MLP:
    """Two affine layers with a ReLU in between."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng: RngStream, prefix: str) -> None:
        self.d_in, self.d_out = d_in, d_out
        self.W1 = Parameter(glorot(rng, d_in, d_hidden), f"{prefix}.W1")
        self.b1 = Parameter(np.zeros(d_hidden), f"{prefix}.b1")
        self.W2 = Parameter(glorot(rng, d_hidden, d_out), f"{prefix}.W2")
        self.b2 = Parameter(np.zeros(d_out), f"{prefix}.b2")

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise DimMismatch(f"input width {x.shape[-1]} != {self.d_in}")
        hidden = nx.relu(nx.matmul(x, self.W1) + self.b1)
        return nx.matmul(hidden, self.W2) + self.b2

    def parameters(self) -> list[Parameter]:
        return [self.W1, self.b1, self.W2, self.b2]


class TaskHeads:
    def __init__(self, d_model: int, n_actions: int, n_phases: int, n_predicates: int, seed: int = 0) -> None:
        rng = RngStream(seed, 2)
        self.d_model = d_model
        self.action_head = MLP(d_model, d_model, n_actions, rng.spawn(0), "head.action")
        self.phase_head = MLP(d_model, d_model, n_phases, rng.spawn(1), "head.phase")
        self.relation_head = MLP(2 * d_model, d_model, n_predicates, rng.spawn(2), "head.relation")

    def parameters(self) -> list[Parameter]:
        return self.action_head.parameters() + self.phase_head.parameters() + self.relation_head.parameters()


def forward_heads(pooled: Tensor, heads: TaskHeads) -> tuple[Tensor, Tensor]:
    if pooled.shape[-1] != heads.d_model:
        raise DimMismatch(f"pooled width {pooled.shape[-1]} != d_model {heads.d_model}")
    return heads.action_head(pooled), heads.phase_head(pooled)


def multitask_loss(action_logits: Tensor, phase_logits: Tensor, labels, lam_a: float = 1.0, lam_p: float = 1.0) -> Tensor:
    """lam_a * CE(action) + lam_p * CE(phase).

    ``labels`` is a TaskLabels, or a sequence of them for 2-D batched logits.
    """
    if action_logits.ndim == 1:
        a_t, p_t = labels.next_action, labels.robot_phase
    else:
        a_t = [lab.next_action for lab in labels]
        p_t = [lab.robot_phase for lab in labels]
    return nx.scale(nx.cross_entropy(action_logits, a_t), lam_a) + nx.scale(nx.cross_entropy(phase_logits, p_t), lam_p)


def last_frame_entities(cc: CombinatorialComplex, root_joint: str = "pelvis") -> list[EntityGeometry]:
    frames = [c.frame for c in cc.cells.values() if c.frame is not None]
    last = max(frames) if frames else None
    return complex_entities(cc, root_joint, frame=last)


def detect_sterility_breach(cc: CombinatorialComplex, config: BuildConfig) -> tuple[bool, list[tuple[str, str]]]:
    """Zero-shot proximity rule on the (last) frame: every non-sterile/sterile pair closer than tau_breach."""
    ents = last_frame_entities(cc, config.root_joint)
    nonsterile = [e for e in ents if e.category in config.nonsterile_roles]
    sterile = [e for e in ents if e.category in config.sterile_roles]
    pairs = sorted(
        (u.entity_id, v.entity_id)
        for u in nonsterile
        for v in sterile
        if u.entity_id != v.entity_id and entity_distance(u, v) < config.tau_breach
    )
    return bool(pairs), pairs


def entity_pairs(entities: Sequence[EntityGeometry]) -> list[tuple[EntityGeometry, EntityGeometry]]:
    """Ordered pairs of distinct entities, sorted by (subject id, object id)."""
    ents = sorted(entities, key=lambda e: e.entity_id)
    return [(s, o) for s, o in itertools.permutations(ents, 2)]


def relation_logits(features: Tensor, pairs, heads: TaskHeads) -> Tensor:
    """(len(pairs), R) logits from [h_s ‖ h_o] of the representative cells."""
    subj = nx.take_rows(features, np.array([s.rep for s, _ in pairs], dtype=np.intp))
    obj = nx.take_rows(features, np.array([o.rep for _, o in pairs], dtype=np.intp))
    return heads.relation_head(nx.concat([subj, obj], axis=1))


def relation_targets(pairs, relations, none_id: int = 0) -> np.ndarray:
    """Predicate id per ordered pair; ``relations`` holds (subject, predicate id, object)."""
    table = {(s, o): p for s, p, o in relations}
    return np.array([table.get((s.entity_id, o.entity_id), none_id) for s, o in pairs], dtype=np.intp)


def format_triplet(subject: str, predicate: str, obj: str) -> str:
    return f"⟨{subject}, {predicate}, {obj}⟩"


def reduce_to_scene_graph(
    cc: CombinatorialComplex,
    features: Tensor,
    heads: TaskHeads,
    predicates: Sequence[str],
    root_joint: str = "pelvis",
    none_id: int = 0,
) -> set[str]:
    pairs = entity_pairs(last_frame_entities(cc, root_joint))
    if not pairs:
        return set()
    with nx.no_grad():
        pred = relation_logits(features, pairs, heads).data.argmax(axis=1)
    return {
        format_triplet(s.entity_id, predicates[p], o.entity_id)
        for (s, o), p in zip(pairs, pred)
        if p != none_id
    }


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    predictions, labels = np.asarray(predictions, dtype=np.intp), np.asarray(labels, dtype=np.intp)
    if predictions.shape != labels.shape:
        raise LengthMismatch(f"{predictions.size} predictions vs {labels.size} labels")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def per_class_f1(predictions, labels, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """F1 per class and a mask of classes present in labels or predictions."""
    cm = confusion_matrix(predictions, labels, n_classes)
    tp = np.diag(cm).astype(np.float64)
    n_pred = cm.sum(axis=0)
    n_true = cm.sum(axis=1)
    denom = n_pred + n_true
    f1 = np.divide(2 * tp, denom, out=np.zeros(n_classes), where=denom > 0)
    return f1, denom > 0


def macro_f1(predictions, labels, n_classes: int, classes: Sequence[int] | None = None) -> float:
    """Unweighted mean F1 over classes seen in labels or predictions.

    ``classes`` restricts the mean (e.g. to exclude a background class).
    A split where no considered class appears scores 0.
    """
    f1, present = per_class_f1(predictions, labels, n_classes)
    keep = present.copy()
    if classes is not None:
        sel = np.zeros(n_classes, dtype=bool)
        sel[list(classes)] = True
        keep &= sel
    return float(f1[keep].mean()) if keep.any() else 0.0
