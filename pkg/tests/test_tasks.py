import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from factories import brute_force_breach, random_frame
from orcomplex import numerics as nx
from orcomplex.hat import DimMismatch
from orcomplex.numerics import Tensor
from orcomplex.scene import JOINT_NAMES, BuildConfig, Human, Joint, SceneFrame, SceneObject, build_frame, build_window
from orcomplex.synth import TaskLabels
from orcomplex.tasks import (
    LengthMismatch,
    TaskHeads,
    confusion_matrix,
    detect_sterility_breach,
    entity_pairs,
    format_triplet,
    forward_heads,
    last_frame_entities,
    macro_f1,
    multitask_loss,
    reduce_to_scene_graph,
    relation_logits,
)

PREDICATES = ["none", "close_to", "holding"]


def heads(d=8, seed=0):
    return TaskHeads(d, 5, 4, len(PREDICATES), seed)


def labels(a=1, p=2):
    return TaskLabels(a, p, False, frozenset())


def test_head_widths_and_zero_logits():
    h = heads()
    a, p = forward_heads(Tensor(np.ones(8)), h)
    assert a.shape == (5,) and p.shape == (4,)
    for param in h.parameters():
        param.data[:] = 0.0
    a, p = forward_heads(Tensor(np.ones(8)), h)
    assert not a.data.any() and not p.data.any()
    with pytest.raises(DimMismatch):
        forward_heads(Tensor(np.ones(7)), h)


def test_heads_are_deterministic():
    x = Tensor(np.linspace(-1, 1, 8))
    a1, _ = forward_heads(x, heads(seed=3))
    a2, _ = forward_heads(x, heads(seed=3))
    assert np.array_equal(a1.data, a2.data)


def test_loss_hand_computed():
    a = np.array([0.5, -1.0, 2.0, 0.0, 0.3])
    p = np.array([1.0, 1.0, -2.0, 0.5])

    def ce(z, k):
        return -(z[k] - math.log(sum(math.exp(v) for v in z)))

    got = multitask_loss(Tensor(a), Tensor(p), labels(2, 3), 0.7, 1.3).item()
    assert abs(got - (0.7 * ce(a, 2) + 1.3 * ce(p, 3))) < 1e-12


def test_loss_confident_limit_and_non_negative():
    a = np.full(5, -40.0)
    a[1] = 40.0
    p = np.full(4, -40.0)
    p[2] = 40.0
    assert multitask_loss(Tensor(a), Tensor(p), labels(1, 2)).item() < 1e-30
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert multitask_loss(Tensor(rng.normal(size=5)), Tensor(rng.normal(size=4)), labels()).item() > 0


def test_zero_action_weight_decouples_action_head():
    h = heads()
    pooled = Tensor(np.random.default_rng(1).normal(size=8))
    for q in h.parameters():
        q.zero_grad()
    a, p = forward_heads(pooled, h)
    nx.backward(multitask_loss(a, p, labels(), lam_a=0.0))
    assert all(not q.grad.any() for q in h.action_head.parameters())
    assert any(q.grad.any() for q in h.phase_head.parameters())


def person(role, root):
    root = np.asarray(root, dtype=float)
    return Human(role, role, [Joint(n, root + [0, 0, 0.05 * i], np.ones(2)) for i, n in enumerate(JOINT_NAMES)])


def test_breach_examples():
    cfg = BuildConfig(tau_breach=0.5)
    frame = SceneFrame(0.0, [person("technician", [0, 0, 0]), person("patient", [0.2, 0, 0])], [], {}, [])
    assert detect_sterility_breach(build_frame(frame, cfg), cfg) == (True, [("technician", "patient")])
    sterile_only = SceneFrame(0.0, [person("head_surgeon", [0, 0, 0]), person("patient", [0.1, 0, 0])], [], {}, [])
    assert detect_sterility_breach(build_frame(sterile_only, cfg), cfg) == (False, [])


def test_breach_uses_last_frame_of_window():
    cfg = BuildConfig(tau_breach=0.5)
    near = SceneFrame(0.0, [person("nurse", [0, 0, 0]), person("patient", [0.1, 0, 0])], [], {}, [])
    far = SceneFrame(1.0, [person("nurse", [0, 0, 0]), person("patient", [3.0, 0, 0])], [], {}, [])
    assert detect_sterility_breach(build_window([near, far], cfg), cfg)[0] is False
    assert detect_sterility_breach(build_window([far, near], cfg), cfg)[0] is True


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1_000_000), st.floats(0.1, 1.5))
def test_breach_matches_brute_force(seed, tau):
    cfg = BuildConfig(tau_breach=tau)
    frame = random_frame(seed)
    got = detect_sterility_breach(build_frame(frame, cfg), cfg)
    want = brute_force_breach(frame, cfg.sterile_roles, cfg.nonsterile_roles, tau)
    assert got == (bool(want), want)


def test_relation_reduction_examples():
    cfg = BuildConfig()
    frame = SceneFrame(
        0.0, [person("head_surgeon", [0, 0, 0])],
        [SceneObject("saw", "saw", np.array([0.1, 0, 0]), np.ones(3), np.ones(2))], {}, [],
    )
    cc = build_frame(frame, cfg).freeze()
    feats = Tensor(np.random.default_rng(0).normal(size=(len(cc.cells), 8)))
    h = heads()
    h.relation_head.b2.data = np.array([100.0, 0.0, 0.0])
    assert reduce_to_scene_graph(cc, feats, h, PREDICATES) == set()
    h.relation_head.b2.data = np.array([0.0, 0.0, 100.0])
    assert reduce_to_scene_graph(cc, feats, h, PREDICATES) == {
        "⟨head_surgeon, holding, saw⟩",
        "⟨saw, holding, head_surgeon⟩",
    }
    single = build_frame(SceneFrame(0.0, [person("nurse", [0, 0, 0])], [], {}, []), cfg).freeze()
    assert reduce_to_scene_graph(single, Tensor(np.zeros((len(single.cells), 8))), h, PREDICATES) == set()


def test_reduction_is_order_invariant():
    cfg = BuildConfig()
    frame = random_frame(11, n_humans=3, n_objects=3)
    shuffled = SceneFrame(frame.timestamp, frame.humans[::-1], frame.objects[::-1], frame.evidence, [])
    outs = []
    h = heads(seed=4)
    for fr in (frame, shuffled):
        cc = build_frame(fr, cfg).freeze()
        # features as a function of entity identity only, so both enumerations see the same inputs
        rows = []
        for cid in sorted(cc.cells):
            key = f"{cc.cells[cid].entity_id}|{cc.cells[cid].part}|{cc.cells[cid].kind.value}"
            rows.append(np.random.default_rng(zlib.crc32(key.encode())).normal(size=8))
        outs.append(reduce_to_scene_graph(cc, Tensor(np.array(rows)), h, PREDICATES))
    assert outs[0] == outs[1]


def test_relation_logits_shape():
    cc = build_frame(random_frame(2, n_humans=2, n_objects=2), BuildConfig()).freeze()
    pairs = entity_pairs(last_frame_entities(cc))
    assert len(pairs) == 12
    out = relation_logits(Tensor(np.zeros((len(cc.cells), 8))), pairs, heads())
    assert out.shape == (12, 3)


def test_triplet_format():
    assert format_triplet("nurse", "close_to", "table") == "⟨nurse, close_to, table⟩"


def test_macro_f1_examples():
    assert macro_f1([0, 1, 2], [0, 1, 2], 3) == 1.0
    assert macro_f1([1, 0, 0, 1], [1, 1, 0, 0], 2) == 0.5
    assert math.isclose(macro_f1([0] * 8, [0, 1, 2, 3] * 2, 4), 0.1, rel_tol=1e-12)
    # a class absent from both sequences is excluded
    assert macro_f1([0, 1], [0, 1], 5) == 1.0
    assert macro_f1([], [], 3) == 0.0
    with pytest.raises(LengthMismatch):
        macro_f1([0], [0, 1], 2)


def test_confusion_matrix_orientation():
    cm = confusion_matrix([1, 0, 0, 1], [1, 1, 0, 0], 2)
    assert cm.tolist() == [[1, 1], [1, 1]]
    cm = confusion_matrix([2, 2], [0, 1], 3)
    assert cm[0, 2] == 1 and cm[1, 2] == 1


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6).flatmap(lambda k: st.tuples(
    st.just(k),
    st.lists(st.tuples(st.integers(0, k - 1), st.integers(0, k - 1)), min_size=1, max_size=40),
)))
def test_macro_f1_matches_sklearn(case):
    k, data = case
    pred, true = [p for p, _ in data], [t for _, t in data]
    present = sorted(set(pred) | set(true))
    want = f1_score(true, pred, labels=present, average="macro", zero_division=0)
    assert abs(macro_f1(pred, true, k) - want) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=30), st.permutations(range(4)))
def test_macro_f1_relabel_symmetry(data, perm):
    pred, true = [p for p, _ in data], [t for _, t in data]
    relabel = [[perm[x] for x in seq] for seq in (pred, true)]
    assert math.isclose(macro_f1(pred, true, 4), macro_f1(*relabel, 4), abs_tol=1e-12)


def test_macro_f1_single_class_is_plain_f1():
    pred, true = [0, 0, 0], [0, 0, 0]
    assert macro_f1(pred, true, 1) == f1_score(true, pred, average="binary", pos_label=0)
