"""Lifting multimodal operating-room frames into combinatorial complexes.

Rank 0 holds joints, objects and evidence nodes; rank 1 holds skeleton,
spatial, semantic, evidence and temporal edges; rank 2 holds person and
functional cells. A window of frames becomes one spatio-temporal complex.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .complex import Cell, CellKind, CombinatorialComplex, disjoint_union
from .numerics import RngStream

JOINT_NAMES = (
    "pelvis", "spine", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_knee", "l_ankle", "r_knee", "r_ankle",
)
KINEMATIC_TREE = (
    ("pelvis", "spine"), ("spine", "neck"), ("neck", "head"),
    ("neck", "l_shoulder"), ("l_shoulder", "l_elbow"), ("l_elbow", "l_wrist"),
    ("neck", "r_shoulder"), ("r_shoulder", "r_elbow"), ("r_elbow", "r_wrist"),
    ("pelvis", "l_knee"), ("l_knee", "l_ankle"),
    ("pelvis", "r_knee"), ("r_knee", "r_ankle"),
)
HUMAN_ROLES = ("head_surgeon", "assistant", "nurse", "technician", "patient")
OBJECT_CLASSES = ("robot", "saw", "table", "tracker", "monitor", "drill")
EVIDENCE_KINDS = {
    "robot_log": CellKind.EVIDENCE_ROBOT_LOG,
    "audio": CellKind.EVIDENCE_AUDIO,
    "screen": CellKind.EVIDENCE_SCREEN,
}
EVIDENCE_ORDER = tuple(EVIDENCE_KINDS)


class SceneError(ValueError):
    pass


class InvalidFrame(SceneError):
    pass


class NoGeometry(SceneError):
    pass


class DegenerateCamera(SceneError):
    pass


class WindowEmpty(SceneError):
    pass


@dataclass(eq=False)
class Joint:
    name: str
    position: np.ndarray
    feature: np.ndarray


@dataclass(eq=False)
class Human:
    entity_id: str
    role: str
    joints: list[Joint]


@dataclass(eq=False)
class SceneObject:
    entity_id: str
    cls: str
    center: np.ndarray
    extent: np.ndarray
    feature: np.ndarray


@dataclass(eq=False)
class CameraView:
    intrinsics: np.ndarray
    extrinsics: np.ndarray
    feature_grid: np.ndarray

    def __post_init__(self) -> None:
        self.intrinsics = np.asarray(self.intrinsics, dtype=np.float64).reshape(3, 3)
        self.extrinsics = np.asarray(self.extrinsics, dtype=np.float64).reshape(4, 4)
        self.feature_grid = np.asarray(self.feature_grid, dtype=np.float64)
        if self.feature_grid.ndim != 3:
            raise InvalidFrame("feature_grid must be H x W x C")

    def validate(self) -> None:
        K = self.intrinsics
        if abs(np.linalg.det(K)) < 1e-12 or K[0, 0] <= 0 or K[1, 1] <= 0:
            raise DegenerateCamera("intrinsics must be invertible with positive focal lengths")
        if np.any(np.abs(np.tril(K, -1)) > 0):
            raise DegenerateCamera("intrinsics must be upper-triangular")
        R = self.extrinsics[:3, :3]
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6:
            raise InvalidFrame("extrinsic rotation is not orthonormal")

    def project(self, point: np.ndarray) -> tuple[float, float, float]:
        """Pixel (u, v) and camera-frame depth of a world point."""
        cam = self.extrinsics[:3, :3] @ point + self.extrinsics[:3, 3]
        uvw = self.intrinsics @ cam
        depth = cam[2]
        if depth <= 0:
            return float("nan"), float("nan"), float(depth)
        return float(uvw[0] / uvw[2]), float(uvw[1] / uvw[2]), float(depth)

    def sample(self, u: float, v: float) -> np.ndarray | None:
        """Bilinear sample at pixel (u, v); None outside the grid."""
        Hg, Wg, _ = self.feature_grid.shape
        if not (0.0 <= u <= Wg - 1 and 0.0 <= v <= Hg - 1):
            return None
        c0, r0 = min(int(np.floor(u)), max(Wg - 2, 0)), min(int(np.floor(v)), max(Hg - 2, 0))
        c1, r1 = min(c0 + 1, Wg - 1), min(r0 + 1, Hg - 1)
        du, dv = u - c0, v - r0
        g = self.feature_grid
        top = (1 - du) * g[r0, c0] + du * g[r0, c1]
        bottom = (1 - du) * g[r1, c0] + du * g[r1, c1]
        return (1 - dv) * top + dv * bottom


@dataclass(eq=False)
class SceneFrame:
    timestamp: float
    humans: list[Human] = field(default_factory=list)
    objects: list[SceneObject] = field(default_factory=list)
    evidence: dict[str, np.ndarray] = field(default_factory=dict)
    cameras: list[CameraView] = field(default_factory=list)

    def validate(self) -> None:
        ids = [h.entity_id for h in self.humans] + [o.entity_id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise InvalidFrame("entity ids must be unique within a frame")
        for h in self.humans:
            if h.role not in HUMAN_ROLES:
                raise InvalidFrame(f"unknown role {h.role!r}")
            for j in h.joints:
                if not np.isfinite(j.position).all():
                    raise InvalidFrame(f"non-finite joint {h.entity_id}.{j.name}")
        for o in self.objects:
            if o.cls not in OBJECT_CLASSES:
                raise InvalidFrame(f"unknown object class {o.cls!r}")
            if np.any(np.asarray(o.extent) <= 0):
                raise InvalidFrame(f"object {o.entity_id} extent must be positive")
        for kind in self.evidence:
            if kind not in EVIDENCE_KINDS:
                raise InvalidFrame(f"unknown evidence kind {kind!r}")

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "humans": [
                {
                    "entity_id": h.entity_id,
                    "role": h.role,
                    "joints": [
                        {"name": j.name, "position": j.position.tolist(), "feature": j.feature.tolist()}
                        for j in h.joints
                    ],
                }
                for h in self.humans
            ],
            "objects": [
                {
                    "entity_id": o.entity_id,
                    "class": o.cls,
                    "center": o.center.tolist(),
                    "extent": o.extent.tolist(),
                    "feature": o.feature.tolist(),
                }
                for o in self.objects
            ],
            "evidence": {k: v.tolist() for k, v in sorted(self.evidence.items())},
            "cameras": [
                {
                    "intrinsics": c.intrinsics.tolist(),
                    "extrinsics": c.extrinsics.tolist(),
                    "feature_grid": c.feature_grid.tolist(),
                }
                for c in self.cameras
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneFrame":
        arr = lambda x: np.asarray(x, dtype=np.float64)  # noqa: E731
        return cls(
            timestamp=float(d["timestamp"]),
            humans=[
                Human(
                    h["entity_id"],
                    h["role"],
                    [Joint(j["name"], arr(j["position"]), arr(j["feature"])) for j in h["joints"]],
                )
                for h in d.get("humans", [])
            ],
            objects=[
                SceneObject(o["entity_id"], o["class"], arr(o["center"]), arr(o["extent"]), arr(o["feature"]))
                for o in d.get("objects", [])
            ],
            evidence={k: arr(v) for k, v in d.get("evidence", {}).items()},
            cameras=[CameraView(c["intrinsics"], c["extrinsics"], c["feature_grid"]) for c in d.get("cameras", [])],
        )


@dataclass
class BuildConfig:
    tau_prox: float = 0.8
    kinematic_tree: list[tuple[str, str]] = field(default_factory=lambda: [tuple(p) for p in KINEMATIC_TREE])
    root_joint: str = "pelvis"
    semantic_links: list[tuple[str, str]] = field(
        default_factory=lambda: [("technician", "robot"), ("head_surgeon", "monitor")]
    )
    evidence_map: dict[str, list[str]] = field(
        default_factory=lambda: {
            "robot_log": ["robot"],
            "audio": list(HUMAN_ROLES),
            "screen": ["monitor", "head_surgeon"],
        }
    )
    functional_templates: list[list[str]] = field(
        default_factory=lambda: [
            ["head_surgeon", "robot", "saw", "patient"],
            ["technician", "robot", "monitor"],
        ]
    )
    window_T: int = 8
    sterile_roles: list[str] = field(default_factory=lambda: ["head_surgeon", "assistant", "patient"])
    nonsterile_roles: list[str] = field(default_factory=lambda: ["nurse", "technician"])
    tau_breach: float = 0.5

    def __post_init__(self) -> None:
        self.kinematic_tree = [tuple(p) for p in self.kinematic_tree]
        self.semantic_links = [tuple(p) for p in self.semantic_links]
        if self.tau_prox <= 0 or self.tau_breach <= 0:
            raise ValueError("thresholds must be positive")
        if self.window_T < 1:
            raise ValueError("window_T must be >= 1")
        _check_tree(self.kinematic_tree)


def _check_tree(edges) -> None:
    nodes = {n for e in edges for n in e}
    if not edges:
        return
    if len(edges) != len(nodes) - 1:
        raise ValueError("kinematic_tree must have exactly |joints| - 1 edges")
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise ValueError("kinematic_tree contains a cycle")
        parent[ra] = rb


@dataclass
class ModalityToggles:
    objects: bool = True
    skeletons: bool = True
    visual: bool = True
    robot_logs: bool = True
    audio: bool = True
    temporal: bool = True


def apply_toggles(frame: SceneFrame, toggles: ModalityToggles) -> SceneFrame:
    """Drop disabled modalities before building. Screen evidence rides with ``visual``."""
    evidence = dict(frame.evidence)
    if not toggles.robot_logs:
        evidence.pop("robot_log", None)
    if not toggles.audio:
        evidence.pop("audio", None)
    if not toggles.visual:
        evidence.pop("screen", None)
    return SceneFrame(
        timestamp=frame.timestamp,
        humans=list(frame.humans) if toggles.skeletons else [],
        objects=list(frame.objects) if toggles.objects else [],
        evidence=evidence,
        cameras=list(frame.cameras) if toggles.visual else [],
    )


@dataclass
class EntityGeometry:
    entity_id: str
    category: str
    is_human: bool
    points: np.ndarray
    rep: int | None = None
    cells: list[int] = field(default_factory=list)


def entity_distance(a: EntityGeometry, b: EntityGeometry) -> float:
    """Centre distance between objects; a human contributes all of its joints.

    Both cases reduce to the minimum pairwise distance between point sets.
    """
    if a.points.size == 0 or b.points.size == 0:
        raise NoGeometry(f"{a.entity_id} or {b.entity_id} has no geometric cells")
    diff = a.points[:, None, :] - b.points[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=-1)).min())


def frame_entities(frame: SceneFrame, root_joint: str = "pelvis") -> list[EntityGeometry]:
    out = [
        EntityGeometry(h.entity_id, h.role, True, np.array([j.position for j in h.joints]).reshape(-1, 3))
        for h in frame.humans
    ]
    out += [EntityGeometry(o.entity_id, o.cls, False, np.asarray(o.center, dtype=np.float64).reshape(1, 3))
            for o in frame.objects]
    return out


def complex_entities(cc: CombinatorialComplex, root_joint: str = "pelvis", frame: int | None = None) -> list[EntityGeometry]:
    """Physical entities of a complex (optionally one frame), in cell-id order."""
    found: dict[str, EntityGeometry] = {}
    for cid in sorted(cc.rank_index.get(0, ())):
        c = cc.cells[cid]
        if not c.kind.geometric or (frame is not None and c.frame != frame):
            continue
        key = c.entity_id if c.entity_id is not None else f"#{cid}"
        ent = found.get(key)
        if ent is None:
            ent = found[key] = EntityGeometry(key, c.category or "", c.kind == CellKind.JOINT, np.zeros((0, 3)))
        ent.cells.append(cid)
        if c.kind == CellKind.OBJECT or c.part == root_joint:
            ent.rep = cid
    for ent in found.values():
        ent.points = np.array([cc.cells[i].position for i in ent.cells])
        if ent.rep is None:
            ent.rep = ent.cells[0]
    return list(found.values())


def build_rank0(frame: SceneFrame, frame_index: int | None = None) -> CombinatorialComplex:
    frame.validate()
    cc = CombinatorialComplex(meta={"frame_timestamps": [frame.timestamp]})
    for h in frame.humans:
        for j in h.joints:
            cc.add_cell(Cell(0, CellKind.JOINT, j.feature, j.position, h.entity_id, h.role, j.name, frame_index))
    for o in frame.objects:
        raw = np.concatenate([np.asarray(o.feature, dtype=np.float64), np.asarray(o.extent, dtype=np.float64)])
        cc.add_cell(Cell(0, CellKind.OBJECT, raw, o.center, o.entity_id, o.cls, None, frame_index))
    for kind in EVIDENCE_ORDER:
        if kind in frame.evidence:
            cc.add_cell(Cell(0, EVIDENCE_KINDS[kind], frame.evidence[kind], None, None, kind, None, frame_index))
    return cc


def _frame_of(cc: CombinatorialComplex) -> int | None:
    frames = {c.frame for c in cc.cells.values()}
    return frames.pop() if len(frames) == 1 else None


def spatial_pairs(entities: list[EntityGeometry], tau_prox: float) -> list[tuple[EntityGeometry, EntityGeometry, float]]:
    out = []
    for a, b in itertools.combinations(entities, 2):
        d = entity_distance(a, b)
        if d < tau_prox:
            out.append((a, b, d))
    return out


def build_rank1(frame: SceneFrame, cc: CombinatorialComplex, config: BuildConfig) -> CombinatorialComplex:
    fi = _frame_of(cc)
    entities = complex_entities(cc, config.root_joint)
    joints: dict[tuple[str, str], int] = {}
    for cid in cc.rank_index.get(0, ()):
        c = cc.cells[cid]
        if c.kind == CellKind.JOINT:
            joints[(c.entity_id, c.part)] = cid

    for ent in entities:
        if not ent.is_human:
            continue
        for a, b in config.kinematic_tree:
            ja, jb = joints.get((ent.entity_id, a)), joints.get((ent.entity_id, b))
            if ja is None or jb is None:
                continue
            length = np.linalg.norm(cc.cells[ja].position - cc.cells[jb].position)
            e = cc.add_cell(Cell(1, CellKind.SKELETON_EDGE, [length], None, ent.entity_id, ent.category, f"{a}-{b}", fi))
            cc.add_incidence(ja, e)
            cc.add_incidence(jb, e)

    for a, b, d in spatial_pairs(entities, config.tau_prox):
        e = cc.add_cell(Cell(1, CellKind.SPATIAL_EDGE, [d], None, None, None, f"{a.entity_id}|{b.entity_id}", fi))
        cc.add_incidence(a.rep, e)
        cc.add_incidence(b.rep, e)

    n_links = len(config.semantic_links)
    for li, (ca, cb) in enumerate(config.semantic_links):
        onehot = np.zeros(max(n_links, 1))
        onehot[li] = 1.0
        for a in entities:
            if a.category != ca:
                continue
            for b in entities:
                if b.category != cb or b.entity_id == a.entity_id:
                    continue
                e = cc.add_cell(Cell(1, CellKind.SEMANTIC_EDGE, onehot, None, None, None, f"{a.entity_id}|{b.entity_id}", fi))
                cc.add_incidence(a.rep, e)
                cc.add_incidence(b.rep, e)

    for cid in sorted(cc.rank_index.get(0, ())):
        c = cc.cells[cid]
        if c.kind.geometric:
            continue
        kind = c.category
        onehot = np.zeros(len(EVIDENCE_ORDER))
        onehot[EVIDENCE_ORDER.index(kind)] = 1.0
        targets = set(config.evidence_map.get(kind, ()))
        for ent in entities:
            if ent.category in targets:
                e = cc.add_cell(Cell(1, CellKind.EVIDENCE_EDGE, onehot, None, ent.entity_id, kind, f"{kind}|{ent.entity_id}", fi))
                cc.add_incidence(cid, e)
                cc.add_incidence(ent.rep, e)
    return cc


def build_rank2(frame: SceneFrame, cc: CombinatorialComplex, config: BuildConfig) -> CombinatorialComplex:
    fi = _frame_of(cc)
    entities = complex_entities(cc, config.root_joint)
    by_id = {e.entity_id: e for e in entities}
    skeleton: dict[str, list[int]] = {}
    pair_edges: list[tuple[int, set[str]]] = []
    for cid in sorted(cc.rank_index.get(1, ())):
        c = cc.cells[cid]
        if c.kind == CellKind.SKELETON_EDGE:
            skeleton.setdefault(c.entity_id, []).append(cid)
        elif c.kind in (CellKind.SPATIAL_EDGE, CellKind.SEMANTIC_EDGE):
            ends = {cc.cells[x].entity_id for x in cc.boundary(cid)}
            pair_edges.append((cid, ends))

    for ent in entities:
        if not ent.is_human:
            continue
        onehot = np.zeros(len(HUMAN_ROLES))
        onehot[HUMAN_ROLES.index(ent.category)] = 1.0
        p = cc.add_cell(Cell(2, CellKind.PERSON_CELL, onehot, None, ent.entity_id, ent.category, None, fi))
        for e in skeleton.get(ent.entity_id, []):
            cc.add_incidence(e, p)
        for j in ent.cells:
            cc.add_incidence(j, p)

    n_tpl = len(config.functional_templates)
    for ti, template in enumerate(config.functional_templates):
        members = [e for e in entities if e.category in template]
        if len({e.category for e in members}) < 2:
            continue
        onehot = np.zeros(max(n_tpl, 1))
        onehot[ti] = 1.0
        f = cc.add_cell(Cell(2, CellKind.FUNCTIONAL_CELL, onehot, None, None, None, "+".join(template), fi))
        member_ids = {e.entity_id for e in members}
        for e, ends in pair_edges:
            if ends <= member_ids:
                cc.add_incidence(e, f)
        for ent in members:
            cc.add_incidence(by_id[ent.entity_id].rep, f)
    return cc


def _sigmoid(x: float) -> float:
    return float(1.0 / (1.0 + np.exp(-x)))


class VisualGate:
    """Scalar gate weights per (cell kind, input width), derived deterministically from a seed."""

    def __init__(self, seed: int = 0, scale: float = 0.1) -> None:
        self.seed = seed
        self.scale = scale
        self._cache: dict[tuple[CellKind, int], np.ndarray] = {}

    def weight(self, kind: CellKind, width: int) -> np.ndarray:
        key = (kind, width)
        if key not in self._cache:
            rng = RngStream(self.seed, 7, list(CellKind).index(kind), width)
            self._cache[key] = rng.normal(size=width) * self.scale
        return self._cache[key]


def ground_visual(cc: CombinatorialComplex, cameras: list[CameraView], gate: VisualGate) -> dict[int, np.ndarray]:
    """Gated multi-view bilinear feature sampling for every geometric cell.

    Returns the new raw feature per cell id: the old feature with the fused
    visual feature appended (zeros where no camera sees the point).
    """
    for cam in cameras:
        cam.validate()
    if not cameras:
        return {}
    channels = cameras[0].feature_grid.shape[2]
    out = {}
    for cid in sorted(cc.rank_index.get(0, ())):
        c = cc.cells[cid]
        if not c.kind.geometric:
            continue
        num = np.zeros(channels)
        den = 0.0
        for cam in cameras:
            u, v, depth = cam.project(c.position)
            if depth <= 0:
                continue
            f = cam.sample(u, v)
            if f is None:
                continue
            w = gate.weight(c.kind, c.raw_feature.size + channels)
            g = _sigmoid(float(w @ np.concatenate([c.raw_feature, f])))
            num += g * f
            den += g
        fused = num / den if den > 0 else np.zeros(channels)
        out[cid] = np.concatenate([c.raw_feature, fused])
    return out


def build_frame(
    frame: SceneFrame,
    config: BuildConfig,
    gate: VisualGate | None = None,
    frame_index: int | None = None,
) -> CombinatorialComplex:
    cc = build_rank0(frame, frame_index)
    if frame.cameras:
        for cid, feat in ground_visual(cc, frame.cameras, gate or VisualGate()).items():
            cc.set_raw_feature(cid, feat)
    build_rank1(frame, cc, config)
    build_rank2(frame, cc, config)
    return cc


def build_temporal(frame_complexes: list[CombinatorialComplex], config: BuildConfig) -> CombinatorialComplex:
    """Disjoint union of per-frame complexes joined by temporal edges.

    A temporal edge links an entity's representative cells in consecutive
    frames; both endpoints sit in its boundary, so messages flow both ways.
    """
    if not frame_complexes:
        raise WindowEmpty("no frames in window")
    cc, maps = disjoint_union(frame_complexes, frames=range(len(frame_complexes)))
    stamps = []
    for part in frame_complexes:
        stamps.extend(part.meta.get("frame_timestamps", []))
    cc.meta = {"frame_timestamps": stamps}
    reps = []
    for i, part in enumerate(frame_complexes):
        reps.append({e.entity_id: (maps[i][e.rep], e) for e in complex_entities(part, config.root_joint)})
    for i in range(len(frame_complexes) - 1):
        for eid, (a, ent) in reps[i].items():
            if eid not in reps[i + 1]:
                continue
            b = reps[i + 1][eid][0]
            shift = np.linalg.norm(cc.cells[b].position - cc.cells[a].position)
            t = cc.add_cell(Cell(1, CellKind.TEMPORAL_EDGE, [shift], None, eid, ent.category, f"{i}->{i + 1}", i + 1))
            cc.add_incidence(a, t)
            cc.add_incidence(b, t)
    return cc


def build_window(
    frames: list[SceneFrame],
    config: BuildConfig,
    toggles: ModalityToggles | None = None,
    gate: VisualGate | None = None,
) -> CombinatorialComplex:
    toggles = toggles or ModalityToggles()
    if not toggles.temporal:
        frames = frames[-1:]
    built = [build_frame(apply_toggles(f, toggles), config, gate, i) for i, f in enumerate(frames)]
    return build_temporal(built, config).freeze()
