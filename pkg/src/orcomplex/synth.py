"""Seeded synthetic operating-room episodes with oracle labels.

Each episode walks an ordered phase schedule while an action chain runs on
its own segment clock. Evidence features are Gaussian clusters conditioned
on generator state; robot logs and audio announce the state ``cue_lead``
frames ahead (planner logs and verbal call-outs precede what they describe),
the screen shows the current phase. Non-sterile staff are kept clear of the
sterile field except during scripted approach events, so the breach label of
every frame is known by construction and re-checked against the distance rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream
from .scene import (
    HUMAN_ROLES,
    JOINT_NAMES,
    OBJECT_CLASSES,
    CameraView,
    EntityGeometry,
    Human,
    Joint,
    SceneFrame,
    SceneObject,
    entity_distance,
    frame_entities,
)

PREDICATES = ("none", "close_to", "holding", "cutting", "operating", "assisting", "calibrating")

# (subject role/class, object role/class, phases in which the relation holds)
SCRIPTED_RELATIONS = (
    ("head_surgeon", "saw", "holding", ("cut",)),
    ("saw", "patient", "cutting", ("cut",)),
    ("head_surgeon", "robot", "operating", ("approach", "cut")),
    ("assistant", "head_surgeon", "assisting", ("approach", "cut", "retract")),
    ("technician", "robot", "calibrating", ("idle", "close")),
)

# standing pose relative to the pelvis, facing +x, z up
_POSE = {
    "pelvis": (0.0, 0.0, 0.0),
    "spine": (0.0, 0.0, 0.25),
    "neck": (0.0, 0.0, 0.5),
    "head": (0.0, 0.0, 0.7),
    "l_shoulder": (0.0, 0.2, 0.45),
    "l_elbow": (0.1, 0.25, 0.2),
    "l_wrist": (0.3, 0.2, 0.15),
    "r_shoulder": (0.0, -0.2, 0.45),
    "r_elbow": (0.1, -0.25, 0.2),
    "r_wrist": (0.3, -0.2, 0.15),
    "l_knee": (0.0, 0.1, -0.45),
    "l_ankle": (0.0, 0.1, -0.9),
    "r_knee": (0.0, -0.1, -0.45),
    "r_ankle": (0.0, -0.1, -0.9),
}
_EXTENTS = {
    "robot": (0.6, 0.6, 1.6),
    "saw": (0.3, 0.08, 0.08),
    "table": (2.0, 0.8, 0.9),
    "tracker": (0.1, 0.1, 0.1),
    "monitor": (0.8, 0.1, 0.5),
    "drill": (0.25, 0.08, 0.2),
}


class InvalidConfig(ValueError):
    pass


class BadRatios(ValueError):
    pass


@dataclass
class PhaseSpec:
    name: str
    min_frames: int
    max_frames: int


def _default_phases() -> list[PhaseSpec]:
    return [
        PhaseSpec("idle", 12, 18),
        PhaseSpec("approach", 18, 26),
        PhaseSpec("cut", 26, 36),
        PhaseSpec("retract", 16, 24),
        PhaseSpec("close", 12, 18),
    ]


def _default_transitions() -> dict[str, dict[str, list[str]]]:
    return {
        "idle": {"idle": ["move_table"], "move_table": ["idle", "hand_off"], "hand_off": ["idle"],
                 "pick_saw": ["idle"], "cut_bone": ["idle"]},
        "approach": {"idle": ["move_table"], "move_table": ["pick_saw", "hand_off"], "pick_saw": ["hand_off"],
                     "hand_off": ["move_table", "pick_saw"], "cut_bone": ["pick_saw"]},
        "cut": {"idle": ["pick_saw"], "move_table": ["pick_saw"], "pick_saw": ["cut_bone"],
                "cut_bone": ["hand_off", "pick_saw"], "hand_off": ["cut_bone"]},
        "retract": {"idle": ["move_table"], "move_table": ["hand_off", "idle"], "pick_saw": ["hand_off"],
                    "cut_bone": ["hand_off"], "hand_off": ["move_table"]},
        "close": {"idle": ["move_table", "hand_off"], "move_table": ["idle"], "pick_saw": ["idle"],
                  "cut_bone": ["idle"], "hand_off": ["idle"]},
    }


@dataclass
class SynthConfig:
    seed: int = 0
    episodes: int = 20
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    phases: list[PhaseSpec] = field(default_factory=_default_phases)
    actions: list[str] = field(default_factory=lambda: ["move_table", "pick_saw", "cut_bone", "hand_off", "idle"])
    action_transitions: dict[str, dict[str, list[str]]] = field(default_factory=_default_transitions)
    action_frames: tuple[int, int] = (8, 14)
    cue_lead: int = 4
    room_bounds: tuple[float, float, float] = (6.0, 6.0, 3.0)
    motion_noise_sigma: float = 0.01
    feature_noise_sigma: float = 0.3
    cluster_separation: float = 2.0
    humans: list[str] = field(default_factory=lambda: list(HUMAN_ROLES))
    objects: list[str] = field(default_factory=lambda: list(OBJECT_CLASSES))
    evidence_dims: dict[str, int] = field(default_factory=lambda: {"robot_log": 32, "audio": 32, "screen": 16})
    semantic_dim: int = 8
    cameras: int = 2
    grid_shape: tuple[int, int, int] = (6, 8, 4)
    breach_fraction: float = 0.15
    tau_breach: float = 0.5
    tau_prox: float = 0.8
    sterile_roles: list[str] = field(default_factory=lambda: ["head_surgeon", "assistant", "patient"])
    nonsterile_roles: list[str] = field(default_factory=lambda: ["nurse", "technician"])
    fps: float = 1.0

    def validate(self) -> None:
        if not self.phases:
            raise InvalidConfig("at least one phase is required")
        for p in self.phases:
            if p.min_frames < 1 or p.max_frames < p.min_frames:
                raise InvalidConfig(f"bad duration range for phase {p.name}")
        lo, hi = self.action_frames
        if lo < 1 or hi < lo:
            raise InvalidConfig("bad action_frames range")
        if self.motion_noise_sigma < 0 or self.feature_noise_sigma < 0:
            raise InvalidConfig("noise sigmas must be >= 0")
        if self.cluster_separation <= 0:
            raise InvalidConfig("cluster_separation must be > 0")
        if self.episodes < 0 or self.cue_lead < 0:
            raise InvalidConfig("episodes and cue_lead must be >= 0")
        if not 0 <= self.breach_fraction < 1:
            raise InvalidConfig("breach_fraction must be in [0, 1)")
        for role in self.humans:
            if role not in HUMAN_ROLES:
                raise InvalidConfig(f"unknown role {role!r}")
        for cls in self.objects:
            if cls not in OBJECT_CLASSES:
                raise InvalidConfig(f"unknown object class {cls!r}")
        for phase, table in self.action_transitions.items():
            for a, nxt in table.items():
                if a not in self.actions or any(b not in self.actions for b in nxt) or not nxt:
                    raise InvalidConfig(f"transition table for {phase}/{a} names unknown actions")

    @property
    def phase_names(self) -> list[str]:
        return [p.name for p in self.phases]


@dataclass
class FrameLabels:
    phase: int
    action: int
    next_action: int
    breach: bool
    breach_pairs: list[tuple[str, str]]
    relations: list[tuple[str, str, str]]

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "action": self.action,
            "next_action": self.next_action,
            "breach": self.breach,
            "breach_pairs": [list(p) for p in self.breach_pairs],
            "relations": [list(r) for r in self.relations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameLabels":
        return cls(
            int(d["phase"]), int(d["action"]), int(d["next_action"]), bool(d["breach"]),
            [tuple(p) for p in d["breach_pairs"]], [tuple(r) for r in d["relations"]],
        )


@dataclass
class TaskLabels:
    next_action: int
    robot_phase: int
    breach: bool
    relations: frozenset[tuple[str, int, str]]


@dataclass
class Episode:
    index: int
    frames: list[SceneFrame]
    frame_labels: list[FrameLabels]
    vocab: dict[str, list[str]]
    # generator-side record of the cue target per frame, for oracle checks
    cue_phase: list[int] = field(default_factory=list)

    def window_ends(self, window_T: int) -> range:
        return range(window_T - 1, len(self.frames))

    def labels_per_window(self, window_T: int) -> list[TaskLabels]:
        preds = {p: i for i, p in enumerate(self.vocab["predicates"])}
        out = []
        for t in self.window_ends(window_T):
            fl = self.frame_labels[t]
            rel = frozenset((s, preds[p], o) for s, p, o in fl.relations)
            out.append(TaskLabels(fl.next_action, fl.phase, fl.breach, rel))
        return out

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "vocab": self.vocab,
            "frames": [f.to_dict() for f in self.frames],
            "frame_labels": [fl.to_dict() for fl in self.frame_labels],
            "cue_phase": list(self.cue_phase),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        return cls(
            int(d["index"]),
            [SceneFrame.from_dict(f) for f in d["frames"]],
            [FrameLabels.from_dict(x) for x in d["frame_labels"]],
            d["vocab"],
            list(d.get("cue_phase", [])),
        )


def _yaw(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


_POSE_ARR = np.array([_POSE[n] for n in JOINT_NAMES])
_LYING = _POSE_ARR[:, [2, 1, 0]]


def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera rigid transform, camera z axis pointing at ``target``."""
    z = target - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.array([0.0, 0.0, 1.0]))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    E = np.eye(4)
    E[:3, :3] = R
    E[:3, 3] = -R @ eye
    return E


class _Clusters:
    """Global (seed-level, episode-independent) feature centroids."""

    def __init__(self, cfg: SynthConfig) -> None:
        rng = RngStream(cfg.seed, 100)
        s = cfg.cluster_separation
        P, A = len(cfg.phases), len(cfg.actions)
        d = cfg.evidence_dims
        self.robot_log = rng.unit_vectors(P, d["robot_log"]) * s
        self.audio = rng.unit_vectors(A, d["audio"]) * s
        self.screen = rng.unit_vectors(P, d["screen"]) * s
        self.appearance = rng.unit_vectors(P, cfg.grid_shape[2]) * s
        self.role = rng.unit_vectors(len(HUMAN_ROLES), cfg.semantic_dim) * s
        self.joint = rng.unit_vectors(len(JOINT_NAMES), cfg.semantic_dim) * (0.5 * s)
        self.obj = rng.unit_vectors(len(OBJECT_CLASSES), cfg.semantic_dim) * s
        Hg, Wg, C = cfg.grid_shape
        rows, cols = np.meshgrid(np.arange(Hg), np.arange(Wg), indexing="ij")
        freq = rng.uniform(0.3, 1.2, size=(C, 2))
        phase = rng.uniform(0, 2 * np.pi, size=C)
        self.pattern = np.stack(
            [0.5 * np.sin(freq[c, 0] * rows + freq[c, 1] * cols + phase[c]) for c in range(C)], axis=-1
        )


def _schedule(cfg: SynthConfig, rng: RngStream) -> tuple[list[int], list[int], list[int]]:
    phase_of: list[int] = []
    for i, p in enumerate(cfg.phases):
        phase_of += [i] * int(rng.integers(p.min_frames, p.max_frames + 1))
    n = len(phase_of)
    a_idx = {a: i for i, a in enumerate(cfg.actions)}
    segments: list[tuple[int, int]] = []  # (start, action)
    start, action = 0, a_idx["idle"] if "idle" in a_idx else 0
    lo, hi = cfg.action_frames
    while True:
        segments.append((start, action))
        if start >= n:
            break
        start += int(rng.integers(lo, hi + 1))
        phase = cfg.phases[phase_of[min(start, n) - 1]].name
        options = cfg.action_transitions.get(phase, {}).get(cfg.actions[action]) or [cfg.actions[action]]
        action = a_idx[options[int(rng.integers(len(options)))]]
    action_of, next_of = [], []
    seg = 0
    for t in range(n):
        while segments[seg + 1][0] <= t:
            seg += 1
        action_of.append(segments[seg][1])
        next_of.append(segments[seg + 1][1])
    return phase_of, action_of, next_of


class _Walker:
    """Random-waypoint path inside an axis-aligned box, linearly interpolated."""

    def __init__(self, rng: RngStream, lo, hi, n: int, every: int = 10) -> None:
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        k = n // every + 2
        pts = rng.uniform(lo, hi, size=(k, lo.size))
        t = np.arange(n) / every
        i = np.minimum(t.astype(int), k - 2)
        w = (t - i)[:, None]
        self.path = (1 - w) * pts[i] + w * pts[i + 1]

    def __getitem__(self, t: int) -> np.ndarray:
        return self.path[t]


def _bounded_noise(rng: RngStream, sigma: float, size) -> np.ndarray:
    if sigma == 0:
        return np.zeros(size)
    return np.clip(rng.normal(0.0, sigma, size=size), -3 * sigma, 3 * sigma)


def _min_dist(a: np.ndarray, b: np.ndarray) -> float:
    return entity_distance(EntityGeometry("a", "", True, a), EntityGeometry("b", "", True, b))


def _move_to_distance(
    actor: np.ndarray, target: np.ndarray, direction: np.ndarray, goal: float, towards: bool, reach: float = 8.0
) -> np.ndarray:
    """Translate ``actor`` along ``direction`` until its min distance to ``target`` crosses ``goal``.

    The distance must be monotone on [0, reach] for the bisection to hold.
    """
    lo, hi = 0.0, reach
    sign = 1.0 if towards else -1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        d = _min_dist(actor + sign * mid * direction, target)
        if (d > goal) == towards:
            lo = mid
        else:
            hi = mid
    return actor + sign * hi * direction


def generate_episode(cfg: SynthConfig, index: int = 0) -> Episode:
    cfg.validate()
    rng = RngStream(cfg.seed, 200, index)
    clusters = _Clusters(cfg)
    phase_of, action_of, next_of = _schedule(cfg, rng.spawn(0))
    n = len(phase_of)
    names = cfg.phase_names
    room = np.asarray(cfg.room_bounds, dtype=float)
    cx, cy = room[0] / 2, room[1] / 2
    sig_m, sig_f = cfg.motion_noise_sigma, cfg.feature_noise_sigma
    geo = rng.spawn(1)
    feat_rng = rng.spawn(2)

    walkers = {
        "head_surgeon": _Walker(geo, (cx - 0.4, cy + 0.8, 1.0), (cx + 0.4, cy + 1.0, 1.0), n),
        "assistant": _Walker(geo, (cx - 0.4, cy - 1.0, 1.0), (cx + 0.4, cy - 0.8, 1.0), n),
        "nurse": _Walker(geo, (0.5, 0.5, 1.0), (1.5, room[1] - 0.5, 1.0), n),
        "technician": _Walker(geo, (cx + 1.7, cy - 1.5, 1.0), (room[0] - 0.4, cy + 1.5, 1.0), n),
    }
    robot_home = np.array([cx + 1.7, cy + 0.3, 0.8])
    robot_near = np.array([cx + 1.1, cy + 0.3, 0.8])
    fixed = {
        "table": np.array([cx, cy, 0.45]),
        "tracker": np.array([cx + 0.6, cy - 0.6, 1.2]),
        "monitor": np.array([cx + 2.0, cy - 2.0, 1.6]),
        "drill": np.array([cx - 1.5, cy + 1.2, 0.9]),
    }
    saw_rest = np.array([cx - 1.5, cy + 1.0, 0.9])

    events = _breach_events(cfg, geo, n)

    eyes = [np.array([0.2, 0.2, 2.6]), np.array([room[0] - 0.2, room[1] - 0.2, 2.6]),
            np.array([0.2, room[1] - 0.2, 2.6]), np.array([room[0] - 0.2, 0.2, 2.6])]
    Hg, Wg, C = cfg.grid_shape
    f = 0.9 * Wg
    K = np.array([[f, 0.0, (Wg - 1) / 2], [0.0, f, (Hg - 1) / 2], [0.0, 0.0, 1.0]])
    extrinsics = [_look_at(eyes[i % 4], np.array([cx, cy, 0.9])) for i in range(cfg.cameras)]

    frames, labels, cue_phase = [], [], []
    for t in range(n):
        phase = names[phase_of[t]]
        lead = min(t + cfg.cue_lead, n - 1)
        humans: dict[str, np.ndarray] = {}
        for role in cfg.humans:
            if role == "patient":
                pts = _LYING + np.array([cx - 0.6, cy, 1.0])
            else:
                root = walkers[role][t].copy()
                if role == "head_surgeon" and phase == "cut":
                    root[1] -= 0.15
                facing = math.atan2(cy - root[1], cx - root[0])
                pts = _POSE_ARR @ _yaw(facing).T + root
            humans[role] = pts + _bounded_noise(geo, sig_m, pts.shape)

        robot_w = {"approach": 0.6, "cut": 1.0, "retract": 0.4}.get(phase, 0.0)
        centers = dict(fixed)
        centers["robot"] = (1 - robot_w) * robot_home + robot_w * robot_near
        if phase == "cut" and "head_surgeon" in humans:
            centers["saw"] = humans["head_surgeon"][JOINT_NAMES.index("r_wrist")] + np.array([0.1, 0.0, 0.0])
        else:
            centers["saw"] = saw_rest
        centers = {k: v + _bounded_noise(geo, sig_m, 3) for k, v in centers.items()}

        _enforce_breach_script(cfg, humans, events.get(t))
        hs = []
        for role in cfg.humans:
            r_i = HUMAN_ROLES.index(role)
            joints = []
            for j_i, name in enumerate(JOINT_NAMES):
                feat = clusters.role[r_i] + clusters.joint[j_i] + feat_rng.normal(0, sig_f, cfg.semantic_dim)
                joints.append(Joint(name, humans[role][j_i], feat))
            hs.append(Human(role, role, joints))
        objs = []
        for cls in cfg.objects:
            feat = clusters.obj[OBJECT_CLASSES.index(cls)] + feat_rng.normal(0, sig_f, cfg.semantic_dim)
            objs.append(SceneObject(cls, cls, centers[cls], np.array(_EXTENTS[cls]), feat))
        d = cfg.evidence_dims
        evidence = {
            "robot_log": clusters.robot_log[phase_of[lead]] + feat_rng.normal(0, sig_f, d["robot_log"]),
            "audio": clusters.audio[next_of[lead]] + feat_rng.normal(0, sig_f, d["audio"]),
            "screen": clusters.screen[phase_of[t]] + feat_rng.normal(0, sig_f, d["screen"]),
        }
        cams = []
        for E in extrinsics:
            grid = clusters.appearance[phase_of[t]] + clusters.pattern + feat_rng.normal(0, sig_f, (Hg, Wg, C))
            cams.append(CameraView(K, E, grid))
        frame = SceneFrame(t / cfg.fps, hs, objs, evidence, cams)

        pairs = breach_pairs_of(frame, cfg.sterile_roles, cfg.nonsterile_roles, cfg.tau_breach)
        script = events.get(t)
        if bool(pairs) != (script is not None):
            raise RuntimeError(f"breach script and geometry disagree at frame {t}")
        labels.append(
            FrameLabels(
                phase_of[t], action_of[t], next_of[t], bool(pairs), pairs,
                frame_relations(frame, phase, cfg.tau_prox),
            )
        )
        cue_phase.append(phase_of[lead])
        frames.append(frame)
    vocab = {"phases": names, "actions": list(cfg.actions), "predicates": list(PREDICATES)}
    return Episode(index, frames, labels, vocab, cue_phase)


def _breach_events(cfg: SynthConfig, rng: RngStream, n: int) -> dict[int, tuple[str, str]]:
    actors = [r for r in cfg.humans if r in cfg.nonsterile_roles]
    targets = [r for r in cfg.humans if r in cfg.sterile_roles]
    events: dict[int, tuple[str, str]] = {}
    if not actors or not targets or cfg.breach_fraction == 0:
        return events
    want = int(round(cfg.breach_fraction * n))
    tries = 0
    while len(events) < want and tries < 200:
        tries += 1
        length = int(rng.integers(3, 7))
        start = int(rng.integers(0, max(n - length, 1)))
        span = range(max(start - 1, 0), min(start + length + 1, n))
        if any(t in events for t in span):
            continue
        pair = (actors[int(rng.integers(len(actors)))], targets[int(rng.integers(len(targets)))])
        for t in range(start, min(start + length, n)):
            events[t] = pair
    return events


def _enforce_breach_script(cfg: SynthConfig, humans: dict[str, np.ndarray], event) -> None:
    """Place non-sterile staff inside breach range during events and clear of it otherwise."""
    margin = 0.1
    sterile = [r for r in humans if r in cfg.sterile_roles]
    for actor in [r for r in humans if r in cfg.nonsterile_roles]:
        if event is not None and event[0] == actor:
            target = humans[event[1]]
            direction = target.mean(axis=0) - humans[actor].mean(axis=0)
            direction[2] = 0.0
            reach = float(np.linalg.norm(direction))
            direction /= max(reach, 1e-9)
            humans[actor] = _move_to_distance(
                humans[actor], target, direction, 0.5 * cfg.tau_breach, towards=True, reach=reach
            )
            continue
        if not sterile:
            continue
        field_pts = np.concatenate([humans[s] for s in sterile])
        if _min_dist(humans[actor], field_pts) >= cfg.tau_breach + margin:
            continue
        direction = humans[actor].mean(axis=0) - field_pts.mean(axis=0)
        direction[2] = 0.0
        direction /= max(np.linalg.norm(direction), 1e-9)
        humans[actor] = _move_to_distance(humans[actor], field_pts, direction, cfg.tau_breach + margin, towards=False)


def breach_pairs_of(frame: SceneFrame, sterile_roles, nonsterile_roles, tau_breach: float) -> list[tuple[str, str]]:
    """Exhaustive (non-sterile, sterile) pairs closer than ``tau_breach``."""
    ents = frame_entities(frame)
    out = []
    for u in ents:
        if u.category not in nonsterile_roles:
            continue
        for v in ents:
            if v.category in sterile_roles and v.entity_id != u.entity_id and entity_distance(u, v) < tau_breach:
                out.append((u.entity_id, v.entity_id))
    return sorted(out)


def frame_relations(frame: SceneFrame, phase: str, tau_prox: float) -> list[tuple[str, str, str]]:
    """Ground-truth ordered relations: scripted predicates first, then proximity."""
    ents = frame_entities(frame)
    by_cat: dict[str, list[EntityGeometry]] = {}
    for e in ents:
        by_cat.setdefault(e.category, []).append(e)
    taken: dict[tuple[str, str], str] = {}
    for subj, obj, pred, phases in SCRIPTED_RELATIONS:
        if phase not in phases:
            continue
        for s in by_cat.get(subj, []):
            for o in by_cat.get(obj, []):
                if s.entity_id != o.entity_id:
                    taken[(s.entity_id, o.entity_id)] = pred
    for i, a in enumerate(ents):
        for b in ents[i + 1:]:
            if entity_distance(a, b) < tau_prox:
                taken.setdefault((a.entity_id, b.entity_id), "close_to")
                taken.setdefault((b.entity_id, a.entity_id), "close_to")
    return sorted((s, p, o) for (s, o), p in taken.items())


def generate_dataset(cfg: SynthConfig) -> list[Episode]:
    return [generate_episode(cfg, i) for i in range(cfg.episodes)]


def split_dataset(n_or_episodes, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> tuple[list[int], list[int], list[int]]:
    """Episode-level split; val/test sizes are floored, the remainder goes to train."""
    n = n_or_episodes if isinstance(n_or_episodes, int) else len(n_or_episodes)
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    order = [int(i) for i in RngStream(seed, 300).permutation(n)]
    n_val = int(math.floor(n * ratios[1] + 1e-9))
    n_test = int(math.floor(n * ratios[2] + 1e-9))
    n_train = n - n_val - n_test
    train = sorted(order[:n_train])
    val = sorted(order[n_train:n_train + n_val])
    test = sorted(order[n_train + n_val:])
    return train, val, test
