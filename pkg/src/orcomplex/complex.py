"""Combinatorial complexes: ranked cells plus an explicit incidence relation.

Incidence is stored extensionally. ``boundary(y)`` is exactly the set of
stored pairs with ``upper == y``; nothing is inferred by transitivity, so a
builder that wants a joint to see its person cell inserts that pair itself.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple

import numpy as np

from .numerics import Segments


class CellKind(str, Enum):
    JOINT = "joint"
    OBJECT = "object"
    EVIDENCE_ROBOT_LOG = "evidence_robot_log"
    EVIDENCE_AUDIO = "evidence_audio"
    EVIDENCE_SCREEN = "evidence_screen"
    SKELETON_EDGE = "skeleton_edge"
    SPATIAL_EDGE = "spatial_edge"
    SEMANTIC_EDGE = "semantic_edge"
    EVIDENCE_EDGE = "evidence_edge"
    TEMPORAL_EDGE = "temporal_edge"
    PERSON_CELL = "person_cell"
    FUNCTIONAL_CELL = "functional_cell"

    @property
    def rank(self) -> int:
        return KIND_RANK[self]

    @property
    def geometric(self) -> bool:
        return self in GEOMETRIC_KINDS


KIND_RANK = {
    CellKind.JOINT: 0,
    CellKind.OBJECT: 0,
    CellKind.EVIDENCE_ROBOT_LOG: 0,
    CellKind.EVIDENCE_AUDIO: 0,
    CellKind.EVIDENCE_SCREEN: 0,
    CellKind.SKELETON_EDGE: 1,
    CellKind.SPATIAL_EDGE: 1,
    CellKind.SEMANTIC_EDGE: 1,
    CellKind.EVIDENCE_EDGE: 1,
    CellKind.TEMPORAL_EDGE: 1,
    CellKind.PERSON_CELL: 2,
    CellKind.FUNCTIONAL_CELL: 2,
}
GEOMETRIC_KINDS = frozenset({CellKind.JOINT, CellKind.OBJECT})
ALL_KINDS = tuple(CellKind)


class ComplexError(ValueError):
    pass


class DuplicateId(ComplexError):
    pass


class KindRankMismatch(ComplexError):
    pass


class InvalidCell(ComplexError):
    pass


class MissingCell(ComplexError, KeyError):
    pass


class RankOrderViolation(ComplexError):
    pass


class DuplicatePair(ComplexError):
    pass


class FrozenComplex(ComplexError):
    pass


@dataclass(eq=False)
class Cell:
    """One cell. ``id`` may be left as None and is then assigned on insertion."""

    rank: int
    kind: CellKind
    raw_feature: np.ndarray
    position: np.ndarray | None = None
    entity_id: str | None = None
    category: str | None = None
    part: str | None = None
    frame: int | None = None
    id: int | None = None

    def __post_init__(self) -> None:
        self.kind = CellKind(self.kind)
        self.raw_feature = np.array(self.raw_feature, dtype=np.float64).reshape(-1)
        if self.position is not None:
            self.position = np.array(self.position, dtype=np.float64).reshape(3)

    def same_fields(self, other: "Cell") -> bool:
        def arr_eq(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.id == other.id
            and self.rank == other.rank
            and self.kind == other.kind
            and self.entity_id == other.entity_id
            and self.category == other.category
            and self.part == other.part
            and self.frame == other.frame
            and arr_eq(self.position, other.position)
            and arr_eq(self.raw_feature, other.raw_feature)
        )


class Violation(NamedTuple):
    rule: str
    cell_ids: tuple[int, ...]
    detail: str

    def __str__(self) -> str:
        ids = ",".join(str(i) for i in self.cell_ids)
        return f"{self.rule} [{ids}]: {self.detail}"


def _check_cell(cell: Cell) -> None:
    if cell.rank < 0:
        raise KindRankMismatch(f"negative rank {cell.rank}")
    if KIND_RANK[cell.kind] != cell.rank:
        raise KindRankMismatch(f"kind {cell.kind.value} requires rank {KIND_RANK[cell.kind]}, got {cell.rank}")
    if (cell.position is not None) != cell.kind.geometric:
        raise InvalidCell(f"position must be present exactly for joint/object cells ({cell.kind.value})")


class CombinatorialComplex:
    def __init__(self, meta: dict | None = None) -> None:
        self.cells: dict[int, Cell] = {}
        self.incidence: set[tuple[int, int]] = set()
        self.rank_index: dict[int, set[int]] = {}
        self.meta: dict = dict(meta or {})
        self._down: dict[int, set[int]] = {}
        self._up: dict[int, set[int]] = {}
        self._frozen = False
        self._arrays: ComplexArrays | None = None

    def __len__(self) -> int:
        return len(self.cells)

    def __contains__(self, cid: int) -> bool:
        return cid in self.cells

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _require_mutable(self) -> None:
        if self._frozen:
            raise FrozenComplex("complex is frozen")

    def add_cell(self, cell: Cell) -> int:
        self._require_mutable()
        _check_cell(cell)
        if cell.id is None:
            cell.id = len(self.cells)
            while cell.id in self.cells:
                cell.id += 1
        elif cell.id < 0:
            raise InvalidCell("cell ids are non-negative")
        if cell.id in self.cells:
            raise DuplicateId(f"cell id {cell.id} already present")
        self.cells[cell.id] = cell
        self.rank_index.setdefault(cell.rank, set()).add(cell.id)
        self._down[cell.id] = set()
        self._up[cell.id] = set()
        return cell.id

    def add_incidence(self, lower: int, upper: int) -> None:
        self._require_mutable()
        for cid in (lower, upper):
            if cid not in self.cells:
                raise MissingCell(cid)
        if self.cells[lower].rank >= self.cells[upper].rank:
            raise RankOrderViolation(
                f"rank({lower})={self.cells[lower].rank} is not below rank({upper})={self.cells[upper].rank}"
            )
        if (lower, upper) in self.incidence:
            raise DuplicatePair(f"pair ({lower}, {upper}) already present")
        self.incidence.add((lower, upper))
        self._down[upper].add(lower)
        self._up[lower].add(upper)

    def set_raw_feature(self, cid: int, feature) -> None:
        """Replace a cell's raw feature; allowed after freezing, invalidates cached arrays."""
        self.cells[cid].raw_feature = np.array(feature, dtype=np.float64).reshape(-1)
        self._arrays = None

    def cell(self, cid: int) -> Cell:
        try:
            return self.cells[cid]
        except KeyError:
            raise MissingCell(cid) from None

    def boundary(self, y: int) -> set[int]:
        if y not in self.cells:
            raise MissingCell(y)
        return set(self._down[y])

    def coboundary(self, y: int) -> set[int]:
        if y not in self.cells:
            raise MissingCell(y)
        return set(self._up[y])

    def neighborhood(self, y: int) -> set[int]:
        return self.boundary(y) | self.coboundary(y)

    def cells_of_rank(self, k: int) -> list[int]:
        return sorted(self.rank_index.get(k, ()))

    def validate(self) -> list[Violation]:
        out: list[Violation] = []
        by_rank: dict[int, set[int]] = {}
        for cid, cell in self.cells.items():
            if cell.id != cid:
                out.append(Violation("IdMismatch", (cid,), f"stored under {cid} but cell.id={cell.id}"))
            by_rank.setdefault(cell.rank, set()).add(cid)
            if KIND_RANK.get(cell.kind) != cell.rank:
                out.append(Violation("KindRankMismatch", (cid,), f"kind {cell.kind.value} at rank {cell.rank}"))
            if (cell.position is not None) != cell.kind.geometric:
                out.append(Violation("PositionPresence", (cid,), f"kind {cell.kind.value} position mismatch"))
            elif cell.position is not None and not np.isfinite(cell.position).all():
                out.append(Violation("NonFinitePosition", (cid,), "position is not finite"))
            if not np.isfinite(cell.raw_feature).all():
                out.append(Violation("NonFiniteFeature", (cid,), "raw_feature is not finite"))
        for k in sorted(set(by_rank) | set(self.rank_index)):
            want, have = by_rank.get(k, set()), self.rank_index.get(k, set())
            if want != have:
                diff = tuple(sorted(want ^ have))
                out.append(Violation("PartitionMismatch", diff, f"rank_index[{k}] disagrees with cell ranks"))
        for lower, upper in sorted(self.incidence):
            missing = tuple(c for c in (lower, upper) if c not in self.cells)
            if missing:
                out.append(Violation("MissingCell", missing, f"pair ({lower}, {upper}) names an absent cell"))
                continue
            if lower == upper:
                out.append(Violation("SelfPair", (lower,), "cell incident to itself"))
            elif self.cells[lower].rank >= self.cells[upper].rank:
                out.append(
                    Violation("RankOrderViolation", (lower, upper), "pair is not strictly increasing in rank")
                )
        return out

    def freeze(self) -> "CombinatorialComplex":
        """Freeze structure; ids must be exactly 0..n-1 so they double as row indices."""
        if sorted(self.cells) != list(range(len(self.cells))):
            raise ComplexError("freeze requires dense cell ids 0..n-1")
        self._frozen = True
        return self

    def arrays(self) -> "ComplexArrays":
        if not self._frozen:
            raise ComplexError("arrays() requires a frozen complex")
        if self._arrays is None:
            self._arrays = ComplexArrays.from_complex(self)
        return self._arrays

    def summary(self) -> dict:
        ranks = {k: len(v) for k, v in sorted(self.rank_index.items())}
        kinds = Counter(c.kind.value for c in self.cells.values())
        return {
            "cells": len(self.cells),
            "ranks": ranks,
            "kinds": dict(sorted(kinds.items())),
            "incidence": len(self.incidence),
        }

    def to_dict(self) -> dict:
        cells = []
        for cid in sorted(self.cells):
            c = self.cells[cid]
            rec = {"id": c.id, "rank": c.rank, "kind": c.kind.value, "raw_feature": c.raw_feature.tolist()}
            if c.position is not None:
                rec["position"] = c.position.tolist()
            for key in ("entity_id", "category", "part", "frame"):
                val = getattr(c, key)
                if val is not None:
                    rec[key] = val
            cells.append(rec)
        meta = {"format_version": 1, **{k: v for k, v in self.meta.items() if k != "format_version"}}
        return {"cells": cells, "incidence": [list(p) for p in sorted(self.incidence)], "meta": meta}

    @classmethod
    def from_dict(cls, doc: dict, strict: bool = True) -> "CombinatorialComplex":
        """Rebuild a complex. ``strict=False`` loads records verbatim so validate() can report faults."""
        meta = {k: v for k, v in doc.get("meta", {}).items() if k != "format_version"}
        cc = cls(meta=meta)
        for rec in doc["cells"]:
            cell = Cell(
                rank=int(rec["rank"]),
                kind=CellKind(rec["kind"]),
                raw_feature=rec["raw_feature"],
                position=rec.get("position"),
                entity_id=rec.get("entity_id"),
                category=rec.get("category"),
                part=rec.get("part"),
                frame=rec.get("frame"),
                id=int(rec["id"]),
            )
            if strict:
                cc.add_cell(cell)
            else:
                if cell.id in cc.cells:
                    raise DuplicateId(f"cell id {cell.id} already present")
                cc.cells[cell.id] = cell
                cc.rank_index.setdefault(cell.rank, set()).add(cell.id)
                cc._down[cell.id] = set()
                cc._up[cell.id] = set()
        for lower, upper in doc["incidence"]:
            lower, upper = int(lower), int(upper)
            if strict:
                cc.add_incidence(lower, upper)
            else:
                cc.incidence.add((lower, upper))
                cc._down.setdefault(upper, set()).add(lower)
                cc._up.setdefault(lower, set()).add(upper)
        return cc

    def same_as(self, other: "CombinatorialComplex") -> bool:
        return (
            self.incidence == other.incidence
            and self.cells.keys() == other.cells.keys()
            and all(self.cells[k].same_fields(other.cells[k]) for k in self.cells)
            and {k: v for k, v in self.meta.items()} == {k: v for k, v in other.meta.items()}
        )


def disjoint_union(
    parts: Iterable[CombinatorialComplex], frames: Iterable[int] | None = None
) -> tuple[CombinatorialComplex, list[dict[int, int]]]:
    """Concatenate complexes with fresh dense ids; returns the id maps per part.

    ``frames`` optionally overrides the ``frame`` field of every cell, per part.
    """
    out = CombinatorialComplex()
    maps = []
    frame_iter = iter(frames) if frames is not None else None
    for part in parts:
        override = next(frame_iter) if frame_iter is not None else None
        mapping = {}
        for cid in sorted(part.cells):
            c = part.cells[cid]
            mapping[cid] = out.add_cell(
                Cell(c.rank, c.kind, c.raw_feature,
                     c.position, c.entity_id, c.category, c.part,
                     c.frame if override is None else override)
            )
        for lower, upper in part.incidence:
            out.add_incidence(mapping[lower], mapping[upper])
        maps.append(mapping)
    return out, maps


@dataclass
class ComplexArrays:
    """Array view of a frozen complex, as consumed by the attention layers.

    Attention edges are (target, source) pairs over N(y) ∪ {y}, sorted by
    target so that each target's sources form one contiguous segment.
    """

    n: int
    ranks: np.ndarray
    kinds: list[CellKind]
    kind_rows: dict[CellKind, np.ndarray]
    kind_features: dict[CellKind, np.ndarray]
    dst: np.ndarray
    src: np.ndarray
    segments: Segments
    rank_members: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_complex(cls, cc: CombinatorialComplex) -> "ComplexArrays":
        n = len(cc)
        ranks = np.array([cc.cells[i].rank for i in range(n)], dtype=np.intp)
        kinds = [cc.cells[i].kind for i in range(n)]
        kind_rows: dict[CellKind, list[int]] = {}
        for i, k in enumerate(kinds):
            kind_rows.setdefault(k, []).append(i)
        kind_features = {}
        for k, rows in kind_rows.items():
            dims = {cc.cells[i].raw_feature.size for i in rows}
            if len(dims) != 1:
                raise ComplexError(f"cells of kind {k.value} have differing feature widths {sorted(dims)}")
            kind_features[k] = np.stack([cc.cells[i].raw_feature for i in rows])
        if cc.incidence:
            pairs = np.array(sorted(cc.incidence), dtype=np.intp)
            lo, hi = pairs[:, 0], pairs[:, 1]
        else:
            lo = hi = np.zeros(0, dtype=np.intp)
        selfs = np.arange(n, dtype=np.intp)
        dst = np.concatenate([hi, lo, selfs])
        src = np.concatenate([lo, hi, selfs])
        order = np.lexsort((src, dst))
        dst, src = dst[order], src[order]
        rank_members = {int(r): np.flatnonzero(ranks == r) for r in np.unique(ranks)}
        return cls(
            n=n,
            ranks=ranks,
            kinds=kinds,
            kind_rows={k: np.array(v, dtype=np.intp) for k, v in kind_rows.items()},
            kind_features=kind_features,
            dst=dst,
            src=src,
            segments=Segments(dst, n),
            rank_members=rank_members,
        )
