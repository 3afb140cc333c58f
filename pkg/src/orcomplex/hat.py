"""Higher-order attention over incidence neighbourhoods with a rank-pair bias.

For every cell y and head h, attention runs over N(y) ∪ {y}:

    score(y, x) = <W_Q h_y, W_K h_x> / sqrt(d_k) + phi(e_rk(y) * e_rk(x))[h]

Heads are concatenated, projected by W_O and added residually.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .complex import ALL_KINDS, CellKind, CombinatorialComplex, ComplexArrays
from .numerics import Parameter, RngStream, Tensor


class HatError(ValueError):
    pass


class MissingEmbedder(HatError):
    pass


class DimMismatch(HatError):
    pass


class RankOutOfRange(HatError):
    pass


@dataclass
class HatConfig:
    d_model: int = 64
    heads: int = 4
    d_r: int = 16
    layers: int = 2
    max_rank: int = 2

    def __post_init__(self) -> None:
        for name in ("d_model", "heads", "d_r", "layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_rank < 0:
            raise ValueError("max_rank must be >= 0")
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads


def glorot(rng: RngStream, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class HatLayer:
    """Weights of one attention layer (never shared across layers)."""

    def __init__(self, cfg: HatConfig, rng: RngStream, prefix: str = "layer0") -> None:
        self.cfg = cfg
        d, dk, H = cfg.d_model, cfg.d_k, cfg.heads
        self.W_Q = [Parameter(glorot(rng, d, dk), f"{prefix}.head{h}.W_Q") for h in range(H)]
        self.W_K = [Parameter(glorot(rng, d, dk), f"{prefix}.head{h}.W_K") for h in range(H)]
        self.W_V = [Parameter(glorot(rng, d, dk), f"{prefix}.head{h}.W_V") for h in range(H)]
        self.W_O = Parameter(glorot(rng, H * dk, d), f"{prefix}.W_O")
        self.rank_embeddings = [
            Parameter(rng.normal(size=cfg.d_r) / math.sqrt(cfg.d_r), f"{prefix}.e{r}")
            for r in range(cfg.max_rank + 1)
        ]
        self.phi = Parameter(np.zeros((cfg.d_r, H)), f"{prefix}.phi")

    def parameters(self) -> list[Parameter]:
        return [*self.W_Q, *self.W_K, *self.W_V, self.W_O, *self.rank_embeddings, self.phi]


class InputEmbedders:
    """One affine map per cell kind, raw_feature width -> d_model."""

    def __init__(self, dims: dict[CellKind, int], d_model: int, rng: RngStream) -> None:
        self.d_model = d_model
        self.dims = {CellKind(k): int(v) for k, v in dims.items()}
        self.A: dict[CellKind, Parameter] = {}
        self.b: dict[CellKind, Parameter] = {}
        for kind in ALL_KINDS:
            if kind in self.dims:
                self.A[kind] = Parameter(glorot(rng, self.dims[kind], d_model), f"embed.{kind.value}.A")
                self.b[kind] = Parameter(np.zeros(d_model), f"embed.{kind.value}.b")

    def parameters(self) -> list[Parameter]:
        return [p for kind in ALL_KINDS if kind in self.A for p in (self.A[kind], self.b[kind])]


class Pooling:
    def __init__(self, cfg: HatConfig, rng: RngStream) -> None:
        width = (cfg.max_rank + 1) * cfg.d_model
        self.cfg = cfg
        self.W = Parameter(glorot(rng, width, cfg.d_model), "pool.W")
        self.b = Parameter(np.zeros(cfg.d_model), "pool.b")

    def parameters(self) -> list[Parameter]:
        return [self.W, self.b]


def _arrays(cc: CombinatorialComplex | ComplexArrays) -> ComplexArrays:
    return cc if isinstance(cc, ComplexArrays) else cc.arrays()


def embed_inputs(cc, embedders: InputEmbedders) -> Tensor:
    """Layer-0 features: A_kind · raw_feature + b_kind, rows in cell-id order."""
    arr = _arrays(cc)
    blocks, rows = [], []
    for kind in ALL_KINDS:
        if kind not in arr.kind_rows:
            continue
        if kind not in embedders.A:
            raise MissingEmbedder(kind.value)
        feats = arr.kind_features[kind]
        if feats.shape[1] != embedders.dims[kind]:
            raise DimMismatch(f"{kind.value}: raw width {feats.shape[1]} != embedder {embedders.dims[kind]}")
        blocks.append(nx.matmul(Tensor._wrap(feats), embedders.A[kind]) + embedders.b[kind])
        rows.append(arr.kind_rows[kind])
    if not blocks:
        return Tensor(np.zeros((0, embedders.d_model)))
    order = np.concatenate(rows)
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    stacked = blocks[0] if len(blocks) == 1 else nx.concat(blocks, axis=0)
    return nx.take_rows(stacked, inverse)


def _check_ranks(ranks: np.ndarray, layer: HatLayer) -> None:
    if ranks.size and ranks.max() > layer.cfg.max_rank:
        raise RankOutOfRange(f"rank {int(ranks.max())} exceeds max_rank {layer.cfg.max_rank}")


def rank_bias_table(layer: HatLayer) -> Tensor:
    """(R*R, H) tensor whose row rk_y*R + rk_x is the bias of that rank pair."""
    R = layer.cfg.max_rank + 1
    emb = nx.stack(layer.rank_embeddings)
    ry = np.repeat(np.arange(R), R)
    rx = np.tile(np.arange(R), R)
    prod = nx.take_rows(emb, ry) * nx.take_rows(emb, rx)
    return nx.matmul(prod, layer.phi)


def rank_bias(rk_y: int, rk_x: int, layer: HatLayer) -> Tensor:
    R = layer.cfg.max_rank + 1
    if not (0 <= rk_y < R and 0 <= rk_x < R):
        raise RankOutOfRange(f"rank pair ({rk_y}, {rk_x}) outside 0..{R - 1}")
    prod = layer.rank_embeddings[rk_y] * layer.rank_embeddings[rk_x]
    return nx.matmul(prod, layer.phi)


def attention_coeffs(y: int, head: int, cc: CombinatorialComplex, features: Tensor, layer: HatLayer) -> Tensor:
    """Dense, mask-based coefficients of cell ``y`` for one head.

    Returns a length-n vector that is zero outside N(y) ∪ {y}.
    """
    arr = _arrays(cc)
    _check_ranks(arr.ranks, layer)
    dk = layer.cfg.d_k
    q = nx.matmul(features[y], layer.W_Q[head])
    keys = nx.matmul(features, layer.W_K[head])
    scores = nx.matmul(keys, q) * (1.0 / math.sqrt(dk))
    R = layer.cfg.max_rank + 1
    table = rank_bias_table(layer)
    scores = scores + nx.index(table, (arr.ranks[y] * R + arr.ranks, head))
    mask = np.zeros(arr.n, dtype=bool)
    mask[arr.src[arr.dst == y]] = True
    return nx.softmax_row(scores, mask)


def layer_attention(cc, features: Tensor, layer: HatLayer) -> Tensor:
    """Coefficients for every attention edge, shape (E, H), aligned with arrays().dst/src."""
    arr = _arrays(cc)
    _check_ranks(arr.ranks, layer)
    cfg = layer.cfg
    n, H, dk = arr.n, cfg.heads, cfg.d_k
    q = nx.matmul(features, nx.concat(layer.W_Q, axis=1)).reshape(n, H, dk)
    k = nx.matmul(features, nx.concat(layer.W_K, axis=1)).reshape(n, H, dk)
    dots = (nx.take_rows(q, arr.dst) * nx.take_rows(k, arr.src)).sum(axis=-1)
    R = cfg.max_rank + 1
    bias = nx.take_rows(rank_bias_table(layer), arr.ranks[arr.dst] * R + arr.ranks[arr.src])
    scores = dots * (1.0 / math.sqrt(dk)) + bias
    return nx.segment_softmax(scores, arr.segments)


def hat_layer_forward(cc, features: Tensor, layer: HatLayer) -> Tensor:
    arr = _arrays(cc)
    cfg = layer.cfg
    n, H, dk = arr.n, cfg.heads, cfg.d_k
    if features.shape != (n, cfg.d_model):
        raise DimMismatch(f"features {features.shape} != ({n}, {cfg.d_model})")
    alpha = layer_attention(arr, features, layer)
    v = nx.matmul(features, nx.concat(layer.W_V, axis=1)).reshape(n, H, dk)
    weighted = alpha.reshape(alpha.shape[0], H, 1) * nx.take_rows(v, arr.src)
    messages = nx.segment_sum(weighted, arr.segments).reshape(n, H * dk)
    return features + nx.matmul(messages, layer.W_O)


def network_forward(cc, embedders: InputEmbedders, layers: list[HatLayer]) -> Tensor:
    if not layers:
        raise ValueError("network_forward needs at least one layer")
    arr = _arrays(cc)
    h = embed_inputs(arr, embedders)
    for layer in layers:
        h = hat_layer_forward(arr, h, layer)
    return h


def pool(cc, features: Tensor, pooling: Pooling) -> Tensor:
    """Per-rank mean (zeros for an empty rank), concatenated in rank order, then affine."""
    arr = _arrays(cc)
    d = pooling.cfg.d_model
    parts = []
    for r in range(pooling.cfg.max_rank + 1):
        members = arr.rank_members.get(r)
        if members is None or members.size == 0:
            parts.append(Tensor._wrap(np.zeros(d)))
        else:
            parts.append(nx.take_rows(features, members).mean(axis=0))
    return nx.matmul(nx.concat(parts, axis=0), pooling.W) + pooling.b


class HatNetwork:
    """Embedders, stacked layers and pooling, initialised from one seed."""

    def __init__(self, cfg: HatConfig, kind_dims: dict[CellKind, int], seed: int = 0) -> None:
        rng = RngStream(seed, 1)
        self.cfg = cfg
        self.embedders = InputEmbedders(kind_dims, cfg.d_model, rng.spawn(0))
        self.layers = [HatLayer(cfg, rng.spawn(1, i), f"layer{i}") for i in range(cfg.layers)]
        self.pooling = Pooling(cfg, rng.spawn(2))

    def parameters(self) -> list[Parameter]:
        out = self.embedders.parameters()
        for layer in self.layers:
            out.extend(layer.parameters())
        return out + self.pooling.parameters()

    def forward(self, cc) -> Tensor:
        return network_forward(cc, self.embedders, self.layers)
