"""Full model (HAT encoder, pooling, task heads) and its checkpoint format."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import io
from . import numerics as nx
from .complex import CellKind
from .config import ModelConfig, from_plain, to_plain
from .hat import HatNetwork, pool
from .numerics import Parameter, Tensor
from .scene import EVIDENCE_ORDER, HUMAN_ROLES, BuildConfig, ModalityToggles
from .synth import SynthConfig
from .tasks import TaskHeads, entity_pairs, forward_heads, last_frame_entities, relation_logits


class CheckpointMismatch(ValueError):
    pass


def kind_dims(synth: SynthConfig, build: BuildConfig, toggles: ModalityToggles | None = None) -> dict[CellKind, int]:
    """Raw-feature width of every cell kind the builder can emit for this data."""
    toggles = toggles or ModalityToggles()
    visual = synth.grid_shape[2] if (toggles.visual and synth.cameras > 0) else 0
    ev = synth.evidence_dims
    return {
        CellKind.JOINT: synth.semantic_dim + visual,
        CellKind.OBJECT: synth.semantic_dim + 3 + visual,
        CellKind.EVIDENCE_ROBOT_LOG: ev["robot_log"],
        CellKind.EVIDENCE_AUDIO: ev["audio"],
        CellKind.EVIDENCE_SCREEN: ev["screen"],
        CellKind.SKELETON_EDGE: 1,
        CellKind.SPATIAL_EDGE: 1,
        CellKind.SEMANTIC_EDGE: max(len(build.semantic_links), 1),
        CellKind.EVIDENCE_EDGE: len(EVIDENCE_ORDER),
        CellKind.TEMPORAL_EDGE: 1,
        CellKind.PERSON_CELL: len(HUMAN_ROLES),
        CellKind.FUNCTIONAL_CELL: max(len(build.functional_templates), 1),
    }


@dataclass
class WindowOutput:
    features: Tensor
    pooled: Tensor
    action_logits: Tensor
    phase_logits: Tensor
    pairs: list
    relation_logits: Tensor | None


class OrModel:
    def __init__(self, cfg: ModelConfig, dims: dict[CellKind, int], vocab: dict[str, list[str]]) -> None:
        self.cfg = cfg
        self.dims = {CellKind(k): int(v) for k, v in dims.items()}
        self.vocab = {k: list(v) for k, v in vocab.items()}
        self.network = HatNetwork(cfg.hat(), self.dims, cfg.seed)
        self.heads = TaskHeads(
            cfg.d_model, len(vocab["actions"]), len(vocab["phases"]), len(vocab["predicates"]), cfg.seed
        )

    def parameters(self) -> list[Parameter]:
        return self.network.parameters() + self.heads.parameters()

    def forward(self, cc, root_joint: str = "pelvis") -> WindowOutput:
        arr = cc.arrays() if hasattr(cc, "arrays") else cc
        features = self.network.forward(arr)
        pooled = pool(arr, features, self.network.pooling)
        a, p = forward_heads(pooled, self.heads)
        pairs = entity_pairs(last_frame_entities(cc, root_joint)) if hasattr(cc, "cells") else []
        rel = relation_logits(features, pairs, self.heads) if pairs else None
        return WindowOutput(features, pooled, a, p, pairs, rel)

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.parameters()}
        if set(params) != set(state):
            missing, extra = sorted(set(params) - set(state)), sorted(set(state) - set(params))
            raise CheckpointMismatch(f"parameter names differ; missing {missing[:3]}, unexpected {extra[:3]}")
        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != params[name].shape:
                raise CheckpointMismatch(f"{name}: shape {value.shape} != {params[name].shape}")
            params[name].data = value.copy()

    def to_dict(self, extra: dict | None = None) -> dict:
        return {
            "model": to_plain(self.cfg),
            "kind_dims": {k.value: v for k, v in self.dims.items()},
            "vocab": self.vocab,
            "params": {name: {"shape": list(v.shape), "values": v.ravel().tolist()} for name, v in self.state().items()},
            "extra": extra or {},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrModel":
        try:
            cfg = from_plain(ModelConfig, d["model"])
            model = cls(cfg, {CellKind(k): v for k, v in d["kind_dims"].items()}, d["vocab"])
            state = {
                name: np.asarray(p["values"], dtype=np.float64).reshape(p["shape"]) for name, p in d["params"].items()
            }
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CheckpointMismatch):
                raise
            raise CheckpointMismatch(f"malformed checkpoint: {exc}") from exc
        model.load_state(state)
        return model

    def save(self, path, extra: dict | None = None) -> None:
        io.write(path, "checkpoint", self.to_dict(extra))

    @classmethod
    def load(cls, path) -> tuple["OrModel", dict]:
        d = io.read(path, "checkpoint")
        return cls.from_dict(d), d.get("extra", {})

    def same_state(self, other: "OrModel") -> bool:
        a, b = self.state(), other.state()
        return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def no_grad_forward(model: OrModel, cc, root_joint: str = "pelvis") -> WindowOutput:
    with nx.no_grad():
        return model.forward(cc, root_joint)
