import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factories import random_frame
from orcomplex.complex import CellKind
from orcomplex.scene import (
    JOINT_NAMES,
    KINEMATIC_TREE,
    BuildConfig,
    CameraView,
    DegenerateCamera,
    EntityGeometry,
    Human,
    InvalidFrame,
    Joint,
    ModalityToggles,
    NoGeometry,
    SceneFrame,
    SceneObject,
    VisualGate,
    WindowEmpty,
    build_frame,
    build_rank0,
    build_rank1,
    build_rank2,
    build_temporal,
    build_window,
    complex_entities,
    entity_distance,
    frame_entities,
    ground_visual,
)


def human(eid="technician", role="technician", offset=(0.0, 0.0, 0.0)):
    joints = [Joint(n, np.array(offset) + np.array([0.0, 0.0, 0.1 * i]), np.ones(3)) for i, n in enumerate(JOINT_NAMES)]
    return Human(eid, role, joints)


def obj(cls, center, eid=None):
    return SceneObject(eid or cls, cls, np.array(center, dtype=float), np.ones(3), np.ones(3))


def kinds(cc):
    return [c.kind for c in cc.cells.values()]


def test_rank0_counts_and_positions():
    frame = SceneFrame(0.0, [human()], [obj("robot", [5, 0, 0]), obj("saw", [9, 0, 0])], {"audio": np.ones(4)}, [])
    cc = build_rank0(frame)
    assert len(cc.rank_index[0]) == 17
    joints = [c for c in cc.cells.values() if c.kind == CellKind.JOINT]
    for c, j in zip(joints, frame.humans[0].joints):
        assert np.array_equal(c.position, j.position)
    robot = next(c for c in cc.cells.values() if c.kind == CellKind.OBJECT)
    assert robot.raw_feature.tolist() == [1.0] * 6


def test_empty_frame():
    cc = build_frame(SceneFrame(0.0, [], [], {}, []), BuildConfig())
    assert len(cc.cells) == 0
    assert cc.validate() == []


def test_invalid_frame():
    bad = SceneFrame(0.0, [], [obj("saw", [0, 0, 0]), obj("saw", [1, 0, 0])], {}, [])
    with pytest.raises(InvalidFrame):
        build_rank0(bad)
    neg = SceneFrame(0.0, [], [SceneObject("saw", "saw", np.zeros(3), -np.ones(3), np.ones(2))], {}, [])
    with pytest.raises(InvalidFrame):
        build_rank0(neg)


def test_entity_distance_rules():
    a = EntityGeometry("a", "robot", False, np.array([[1.0, 2.0, 3.0]]))
    assert entity_distance(a, a) == 0.0
    h = EntityGeometry("h", "nurse", True, np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]]))
    o = EntityGeometry("o", "saw", False, np.array([[0.0, 0.0, 2.4]]))
    assert abs(entity_distance(h, o) - 0.4) < 1e-12
    assert entity_distance(h, o) == entity_distance(o, h)
    with pytest.raises(NoGeometry):
        entity_distance(a, EntityGeometry("e", "x", False, np.zeros((0, 3))))


def spatial_edge_pairs(cc):
    out = set()
    for cid in cc.rank_index.get(1, ()):
        if cc.cells[cid].kind == CellKind.SPATIAL_EDGE:
            out.add(frozenset(cc.cells[x].entity_id for x in cc.boundary(cid)))
    return out


def test_spatial_threshold_is_strict():
    cfg = BuildConfig(tau_prox=0.5)
    near = SceneFrame(0.0, [], [obj("robot", [0, 0, 0]), obj("saw", [0.3, 0, 0])], {}, [])
    assert spatial_edge_pairs(build_frame(near, cfg)) == {frozenset({"robot", "saw"})}
    edge = SceneFrame(0.0, [], [obj("robot", [0, 0, 0]), obj("saw", [0.5, 0, 0])], {}, [])
    assert spatial_edge_pairs(build_frame(edge, cfg)) == set()


def brute_spatial(frame, tau):
    pts = {h.entity_id: [j.position for j in h.joints] for h in frame.humans}
    pts.update({o.entity_id: [o.center] for o in frame.objects})
    out = set()
    for a, b in itertools.combinations(pts, 2):
        d = min(np.linalg.norm(np.asarray(p) - np.asarray(q)) for p in pts[a] for q in pts[b])
        if d < tau:
            out.add(frozenset({a, b}))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.1, 2.0))
def test_spatial_edges_match_pairwise_scan(seed, tau):
    frame = random_frame(seed)
    cc = build_frame(frame, BuildConfig(tau_prox=tau))
    assert spatial_edge_pairs(cc) == brute_spatial(frame, tau)
    assert cc.validate() == []


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.randoms(use_true_random=False))
def test_spatial_edges_independent_of_entity_order(seed, shuffler):
    frame = random_frame(seed)
    humans, objects = list(frame.humans), list(frame.objects)
    shuffler.shuffle(humans)
    shuffler.shuffle(objects)
    other = SceneFrame(frame.timestamp, humans, objects, frame.evidence, [])
    cfg = BuildConfig(tau_prox=1.0)
    assert spatial_edge_pairs(build_frame(frame, cfg)) == spatial_edge_pairs(build_frame(other, cfg))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.1, 1.0), st.floats(0.0, 1.0))
def test_spatial_edges_nested_in_threshold(seed, tau, extra):
    frame = random_frame(seed)
    small = spatial_edge_pairs(build_frame(frame, BuildConfig(tau_prox=tau)))
    large = spatial_edge_pairs(build_frame(frame, BuildConfig(tau_prox=tau + extra)))
    assert small <= large


def test_semantic_and_evidence_edges():
    frame = SceneFrame(0.0, [human()], [obj("robot", [9, 9, 9])], {"robot_log": np.ones(3), "audio": np.ones(2)}, [])
    cc = build_frame(frame, BuildConfig())
    assert kinds(cc).count(CellKind.SEMANTIC_EDGE) == 1
    # robot_log -> robot, audio -> the technician
    assert kinds(cc).count(CellKind.EVIDENCE_EDGE) == 2
    assert cc.validate() == []


def test_person_cell_boundary():
    cc = build_frame(SceneFrame(0.0, [human()], [], {}, []), BuildConfig())
    person = next(cid for cid, c in cc.cells.items() if c.kind == CellKind.PERSON_CELL)
    assert len(cc.boundary(person)) == len(KINEMATIC_TREE) + len(JOINT_NAMES) == 27
    for cid, c in cc.cells.items():
        if c.kind == CellKind.SKELETON_EDGE:
            assert [k for k in cc.coboundary(cid) if cc.cells[k].kind == CellKind.PERSON_CELL] == [person]


def test_functional_cells():
    only_robot = SceneFrame(0.0, [], [obj("robot", [0, 0, 0])], {}, [])
    assert CellKind.FUNCTIONAL_CELL not in kinds(build_frame(only_robot, BuildConfig(functional_templates=[["head_surgeon", "robot", "saw", "patient"]])))

    cfg = BuildConfig(tau_prox=5.0, functional_templates=[["head_surgeon", "robot", "saw", "patient"]], semantic_links=[])
    frame = SceneFrame(
        0.0,
        [human("head_surgeon", "head_surgeon"), human("patient", "patient", (0.5, 0, 0))],
        [obj("robot", [0, 0.5, 0]), obj("saw", [0.5, 0.5, 0])],
        {},
        [],
    )
    cc = build_frame(frame, cfg)
    f = next(cid for cid, c in cc.cells.items() if c.kind == CellKind.FUNCTIONAL_CELL)
    bd = cc.boundary(f)
    assert sum(cc.cells[x].kind == CellKind.SPATIAL_EDGE for x in bd) == 6
    reps = {x for x in bd if cc.cells[x].rank == 0}
    assert len(reps) == 4
    assert {cc.cells[x].part for x in reps if cc.cells[x].kind == CellKind.JOINT} == {"pelvis"}


def camera(grid, t=(0.0, 0.0, 0.0)):
    K = np.array([[2.0, 0.0, 1.5], [0.0, 2.0, 1.0], [0.0, 0.0, 1.0]])
    E = np.eye(4)
    E[:3, 3] = t
    return CameraView(K, E, grid)


def test_camera_projection_and_sampling():
    cam = camera(np.zeros((3, 4, 2)))
    u, v, depth = cam.project(np.array([0.0, 0.0, 1.0]))
    assert (u, v, depth) == (1.5, 1.0, 1.0)
    const = camera(np.full((3, 4, 2), 0.7))
    assert np.allclose(const.sample(0.3, 1.6), 0.7, atol=1e-15)
    with pytest.raises(DegenerateCamera):
        CameraView(np.zeros((3, 3)), np.eye(4), np.zeros((2, 2, 1))).validate()


def test_ground_visual_fallback_and_constant_grid():
    frame = SceneFrame(0.0, [], [obj("robot", [0, 0, 1.0]), obj("saw", [0, 0, -1.0])], {"audio": np.ones(2)}, [])
    cc = build_rank0(frame)
    before_pos = {k: (None if c.position is None else c.position.copy()) for k, c in cc.cells.items()}
    new = ground_visual(cc, [camera(np.full((3, 4, 2), 0.25))], VisualGate(0))
    robot, saw = 0, 1
    assert np.allclose(new[robot][-2:], 0.25, atol=1e-15)
    assert new[saw][-2:].tolist() == [0.0, 0.0]
    assert 2 not in new
    for k, c in cc.cells.items():
        assert (c.position is None and before_pos[k] is None) or np.array_equal(c.position, before_pos[k])


def test_grounding_changes_features_only():
    frame = random_frame(3)
    frame.cameras = [camera(np.random.default_rng(0).normal(size=(3, 4, 2)), (-1.0, -1.0, 3.0))]
    with_cam = build_frame(frame, BuildConfig())
    no_cam = build_frame(SceneFrame(frame.timestamp, frame.humans, frame.objects, frame.evidence, []), BuildConfig())
    assert with_cam.incidence == no_cam.incidence
    for cid, c in with_cam.cells.items():
        assert c.kind == no_cam.cells[cid].kind


def persistent_frames(n=8, present=None):
    frames = []
    for t in range(n):
        objects = [obj("robot", [0, 0, 0]), obj("table", [3, 0, 0])]
        if present is None or t in present:
            objects.append(obj("saw", [6, 0, t * 0.1]))
        frames.append(SceneFrame(float(t), [], objects, {"audio": np.ones(2)}, []))
    return frames


def temporal_count(cc):
    return kinds(cc).count(CellKind.TEMPORAL_EDGE)


def test_temporal_edge_counts():
    cfg = BuildConfig(semantic_links=[], functional_templates=[])
    assert temporal_count(build_window(persistent_frames(1), cfg)) == 0
    assert temporal_count(build_window(persistent_frames(8), cfg)) == 3 * 7
    cc = build_window(persistent_frames(6, present={1, 2, 4, 5}), cfg)
    saw_edges = sorted(c.part for c in cc.cells.values() if c.kind == CellKind.TEMPORAL_EDGE and c.entity_id == "saw")
    assert saw_edges == ["1->2", "4->5"]
    with pytest.raises(WindowEmpty):
        build_temporal([], cfg)


def test_temporal_edges_link_representatives_both_ways():
    cfg = BuildConfig()
    frames = [SceneFrame(float(t), [human()], [], {}, []) for t in range(2)]
    cc = build_window(frames, cfg)
    edge = next(cid for cid, c in cc.cells.items() if c.kind == CellKind.TEMPORAL_EDGE)
    ends = cc.boundary(edge)
    assert {cc.cells[x].part for x in ends} == {"pelvis"}
    assert {cc.cells[x].frame for x in ends} == {0, 1}
    assert all(edge in cc.coboundary(x) for x in ends)


def test_toggles_remove_modalities():
    frame = random_frame(5, n_humans=2, n_objects=3)
    frame.evidence = {"robot_log": np.ones(2), "audio": np.ones(2), "screen": np.ones(2)}
    frames = [frame] * 3
    off = ModalityToggles(objects=False, skeletons=False, robot_logs=False, audio=False, visual=False, temporal=False)
    cc = build_window(frames, BuildConfig(), off)
    assert len(cc.cells) == 0
    only_obj = build_window(frames, BuildConfig(), ModalityToggles(skeletons=False, temporal=False))
    assert CellKind.JOINT not in kinds(only_obj)
    assert {c.frame for c in only_obj.cells.values()} == {0}


@pytest.mark.parametrize("seed", range(5))
def test_frame_round_trip(seed):
    frame = random_frame(seed)
    frame.cameras = [camera(np.ones((2, 2, 1)))]
    back = SceneFrame.from_dict(frame.to_dict())
    assert back.to_dict() == frame.to_dict()


def test_complex_entities_use_root_joint():
    cc = build_frame(SceneFrame(0.0, [human()], [obj("robot", [1, 1, 1])], {}, []), BuildConfig())
    ents = {e.entity_id: e for e in complex_entities(cc)}
    assert cc.cells[ents["technician"].rep].part == "pelvis"
    assert cc.cells[ents["robot"].rep].kind == CellKind.OBJECT
    assert [e.entity_id for e in frame_entities(SceneFrame(0.0, [human()], [], {}, []))] == ["technician"]
