"""User scheduling over a candidate pool: random, semi-orthogonal, and layered-quota.

Semi-orthogonal selection (SUS) greedily picks the candidate with the largest
channel component orthogonal to the already-selected basis, then drops
candidates too correlated with the newly added basis vector. The layered
variant additionally caps how many users each layer may contribute.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .csi import CsiDataset, Layer

__all__ = [
    "SelectionMethod",
    "SusFallback",
    "SusParams",
    "SelectionResult",
    "SelectionError",
    "random_select",
    "orthogonal_residual",
    "correlation",
    "sus_select",
    "sus_select_layered",
]


class SelectionMethod(enum.Enum):
    RANDOM = "random"
    SUS = "sus"
    SUS_LAYERED = "sus_layered"
    EXHAUSTIVE = "exhaustive"  # brute-force oracle provenance, never scheduled live


class SusFallback(enum.Enum):
    """What to do when pruning empties the candidate set before the quota is met."""

    MAX_RESIDUAL_NORM = "max_residual_norm"
    FAIL = "fail"


class SelectionError(ValueError):
    """Raised when a selection request cannot be satisfied."""


@dataclass(frozen=True)
class SusParams:
    """Tuning knobs for semi-orthogonal selection.

    ``alpha`` is the correlation threshold at or above which a candidate is
    dropped; the default 0.6 keeps pruning active at small schedules while the
    fallback survives large ones.
    """

    alpha: float = 0.6
    fallback: SusFallback = SusFallback.MAX_RESIDUAL_NORM

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class SelectionResult:
    """An ordered schedule of record ids with per-layer counts and provenance.

    ``fallback_used_from`` is the 0-based selection rank at which pruning had
    exhausted the candidates and picks switched to plain max-residual-norm;
    None when the orthogonality criterion held throughout.
    """

    chosen: tuple[int, ...]
    per_layer_counts: dict[Layer, int]
    method: SelectionMethod
    fallback_used_from: int | None = None

    def __post_init__(self):
        if len(set(self.chosen)) != len(self.chosen):
            raise ValueError("selection contains duplicate record ids")
        if sum(self.per_layer_counts.values()) != len(self.chosen):
            raise ValueError("per-layer counts do not sum to the schedule size")

    def __len__(self) -> int:
        return len(self.chosen)


def _counts_for(pool: CsiDataset, chosen: Sequence[int]) -> dict[Layer, int]:
    counts = {layer: 0 for layer in Layer}
    for rec_id in chosen:
        counts[pool.record(rec_id).layer] += 1
    return counts


def random_select(pool: CsiDataset, k: int, seed: int) -> SelectionResult:
    """Draw k distinct records uniformly without replacement."""
    if not 1 <= k <= len(pool):
        raise ValueError(f"k must be in 1..{len(pool)}, got {k}")
    rng = np.random.default_rng(seed)
    positions = rng.choice(len(pool), size=k, replace=False)
    chosen = tuple(pool.records[p].index for p in positions)
    return SelectionResult(chosen, _counts_for(pool, chosen), SelectionMethod.RANDOM)


def orthogonal_residual(h: np.ndarray, basis: Sequence[np.ndarray]) -> np.ndarray:
    """Component of h orthogonal to the span of the basis vectors.

    One projection per basis vector: g = h - sum_j (<g_j, h> / ||g_j||^2) g_j.
    """
    g = np.array(h, dtype=np.complex128)
    for b in basis:
        b = np.asarray(b, dtype=np.complex128)
        norm_sq = np.vdot(b, b).real
        if norm_sq == 0.0:
            raise ValueError("basis contains a zero vector")
        g -= (np.vdot(b, g) / norm_sq) * b
    return g


def correlation(h: np.ndarray, g: np.ndarray) -> float:
    """Normalized inner-product magnitude |<h, g>| / (||h|| ||g||), in [0, 1]."""
    h = np.asarray(h, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    nh = np.linalg.norm(h)
    ng = np.linalg.norm(g)
    if nh == 0.0 or ng == 0.0:
        raise ValueError("correlation of a zero vector is undefined")
    return min(float(np.abs(np.vdot(h, g)) / (nh * ng)), 1.0)


def _sus_engine(
    pool: CsiDataset,
    total: int,
    params: SusParams,
    caps: dict[Layer, int] | None,
    method: SelectionMethod,
) -> SelectionResult:
    channels = pool.channel_matrix()  # (N, M)
    ids = np.array([r.index for r in pool.records])
    layers = np.array([r.layer is Layer.AERIAL for r in pool.records])  # False = terrestrial
    norms = np.linalg.norm(channels, axis=1)

    residuals = channels.copy()
    unpruned = np.ones(len(pool), dtype=bool)
    unselected = np.ones(len(pool), dtype=bool)
    counts = {Layer.TERRESTRIAL: 0, Layer.AERIAL: 0}
    chosen: list[int] = []
    fallback_from: int | None = None

    def open_mask() -> np.ndarray:
        if caps is None:
            return np.ones(len(pool), dtype=bool)
        mask = np.zeros(len(pool), dtype=bool)
        if counts[Layer.TERRESTRIAL] < caps.get(Layer.TERRESTRIAL, 0):
            mask |= ~layers
        if counts[Layer.AERIAL] < caps.get(Layer.AERIAL, 0):
            mask |= layers
        return mask

    while len(chosen) < total:
        eligible = unselected & open_mask()
        if fallback_from is None:
            candidates = eligible & unpruned
            if not candidates.any():
                if params.fallback is SusFallback.FAIL:
                    raise SelectionError(
                        f"candidates exhausted after {len(chosen)} of {total} selections "
                        f"at alpha={params.alpha}"
                    )
                fallback_from = len(chosen)
                candidates = eligible
        else:
            candidates = eligible
        if not candidates.any():
            raise SelectionError("pool exhausted before the requested schedule size")

        res_norms = np.linalg.norm(residuals[candidates], axis=1)
        cand_positions = np.flatnonzero(candidates)
        best = res_norms.max()
        tied = cand_positions[res_norms == best]
        pick = tied[np.argmin(ids[tied])]  # deterministic tie-break: lowest record id

        g = residuals[pick].copy()
        chosen.append(int(ids[pick]))
        unselected[pick] = False
        counts[pool.records[pick].layer] += 1

        norm_sq = float(np.vdot(g, g).real)
        if norm_sq > 0.0:
            # expand the basis: project everyone onto the new direction once
            residuals -= np.outer(residuals @ g.conj() / norm_sq, g)
            if fallback_from is None:
                live = unpruned & unselected
                denom = np.maximum(norms[live], 1e-300) * np.sqrt(norm_sq)
                corr = np.abs(channels[live] @ g.conj()) / denom
                drop = np.flatnonzero(live)[corr >= params.alpha]
                unpruned[drop] = False

    return SelectionResult(tuple(chosen), _counts_for(pool, chosen), method, fallback_from)


def sus_select(pool: CsiDataset, k: int, params: SusParams = SusParams()) -> SelectionResult:
    """Semi-orthogonal user selection of k users from the pool.

    Repeats: pick the candidate with the largest residual norm against the
    selected basis, add that residual to the basis, drop candidates whose
    correlation with the new basis vector is >= alpha. When pruning exhausts
    the candidates first, the configured fallback takes over.
    """
    if not 1 <= k <= len(pool):
        raise ValueError(f"k must be in 1..{len(pool)}, got {k}")
    return _sus_engine(pool, k, params, caps=None, method=SelectionMethod.SUS)


def sus_select_layered(
    pool: CsiDataset, quota: Mapping[Layer, int], params: SusParams = SusParams()
) -> SelectionResult:
    """SUS with a per-layer quota: a layer that reaches its quota drops out.

    Users are chosen from either layer until one layer's running count hits
    its quota; from then on only the other layer's candidates (including in
    fallback) are considered, so the final per-layer counts equal the quota
    whenever the pool suffices.
    """
    caps = {layer: int(quota.get(layer, 0)) for layer in Layer}
    if any(c < 0 for c in caps.values()):
        raise ValueError("quotas must be nonnegative")
    total = sum(caps.values())
    if total < 1:
        raise ValueError("total quota must be at least 1")
    populations = pool.layer_counts()
    for layer, cap in caps.items():
        if cap > populations[layer]:
            raise SelectionError(
                f"quota {cap} exceeds the {populations[layer]} available "
                f"{layer.value} records"
            )
    return _sus_engine(pool, total, params, caps=caps, method=SelectionMethod.SUS_LAYERED)
