"""Experiment harness: SE vs. total users, the per-layer quota grid, and analysis helpers.

Every emitted row carries the schedule it came from, so any table entry can be
re-evaluated standalone. Rows are ordered canonically (method, k_ground,
k_aerial, trial) regardless of how the grid was executed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .csi import CsiDataset, Layer
from .sched import (
    SelectionMethod,
    SelectionResult,
    SusParams,
    random_select,
    sus_select,
    sus_select_layered,
)
from .zfmetrics import IllConditionedError, evaluate_selection

__all__ = [
    "CSV_HEADER",
    "SweepRow",
    "SweepTable",
    "sweep_total_users",
    "sweep_layer_grid",
    "max_users_for_min_se",
    "find_peak",
    "exhaustive_oracle",
]

CSV_HEADER = "method,k_total,k_ground,k_aerial,trial,sum_se,mean_individual_se,fallback_rank"


@dataclass(frozen=True)
class SweepRow:
    """One evaluated schedule. ``selection`` is kept for re-evaluation, not serialized."""

    method: SelectionMethod
    k_total: int
    k_ground: int
    k_aerial: int
    trial: int
    sum_se: float
    mean_individual_se: float
    fallback_rank: int | None
    selection: SelectionResult | None  # None only for tables re-read from CSV

    def csv_line(self) -> str:
        fallback = "" if self.fallback_rank is None else str(self.fallback_rank)
        return (
            f"{self.method.value},{self.k_total},{self.k_ground},{self.k_aerial},"
            f"{self.trial},{self.sum_se:.6g},{self.mean_individual_se:.6g},{fallback}"
        )


@dataclass(frozen=True)
class SweepTable:
    """Result rows plus the run metadata needed to reproduce them."""

    rows: tuple[SweepRow, ...]
    meta: dict

    def __len__(self) -> int:
        return len(self.rows)

    def csv_text(self) -> str:
        lines = [CSV_HEADER]
        lines.extend(row.csv_line() for row in self.rows)
        return "\n".join(lines) + "\n"


def _row_from(selection: SelectionResult, report, trial: int) -> SweepRow:
    k_total = len(selection)
    return SweepRow(
        method=selection.method,
        k_total=k_total,
        k_ground=selection.per_layer_counts[Layer.TERRESTRIAL],
        k_aerial=selection.per_layer_counts[Layer.AERIAL],
        trial=trial,
        sum_se=report.sum_se,
        mean_individual_se=report.sum_se / k_total,
        fallback_rank=selection.fallback_used_from,
        selection=selection,
    )


def _base_meta(pool: CsiDataset, seed: int, params: SusParams) -> dict:
    counts = pool.layer_counts()
    return {
        "seed": seed,
        "alpha": params.alpha,
        "snr_db": pool.snr_target_db,
        "pool_terrestrial": counts[Layer.TERRESTRIAL],
        "pool_aerial": counts[Layer.AERIAL],
        "m_antennas": pool.m_antennas,
        "dataset_fingerprint": pool.fingerprint(),
    }


def _trial_seed(seed: int, k: int, trial: int) -> int:
    # stable per (run seed, schedule size, trial) so single rows can be replayed
    return int(np.random.SeedSequence([seed, k, trial]).generate_state(1)[0])


def sweep_total_users(
    pool: CsiDataset,
    k_range: Iterable[int],
    methods: Iterable[SelectionMethod] = (SelectionMethod.RANDOM, SelectionMethod.SUS),
    trials: int = 20,
    seed: int = 0,
    params: SusParams = SusParams(),
    tx_power: float = 1.0,
) -> SweepTable:
    """Schedule and evaluate every k for each method.

    Random selection is drawn ``trials`` times per k; SUS is deterministic and
    recorded once (trial 0).
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("empty k range")
    if ks[0] < 1 or ks[-1] > len(pool):
        raise ValueError(f"k range {ks[0]}..{ks[-1]} outside pool size {len(pool)}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    methods = set(methods)
    unsupported = methods - {SelectionMethod.RANDOM, SelectionMethod.SUS}
    if unsupported:
        raise ValueError(f"unsupported sweep methods: {sorted(m.value for m in unsupported)}")

    rows: list[SweepRow] = []
    for method in (SelectionMethod.RANDOM, SelectionMethod.SUS):
        if method not in methods:
            continue
        for k in ks:
            if method is SelectionMethod.SUS:
                selection = sus_select(pool, k, params)
                rows.append(_row_from(selection, evaluate_selection(pool, selection, tx_power), 0))
            else:
                for trial in range(trials):
                    selection = random_select(pool, k, _trial_seed(seed, k, trial))
                    rows.append(
                        _row_from(selection, evaluate_selection(pool, selection, tx_power), trial)
                    )
    meta = _base_meta(pool, seed, params)
    meta.update({"sweep": "total_users", "trials": trials, "k_min": ks[0], "k_max": ks[-1]})
    return SweepTable(rows=tuple(rows), meta=meta)


def sweep_layer_grid(
    pool: CsiDataset,
    ground_range: Iterable[int],
    aerial_range: Iterable[int],
    params: SusParams = SusParams(),
    seed: int = 0,
    tx_power: float = 1.0,
) -> SweepTable:
    """Layered SUS over every (k_ground, k_aerial) pair except (0, 0)."""
    grounds = sorted(set(int(k) for k in ground_range))
    aerials = sorted(set(int(k) for k in aerial_range))
    if not grounds or not aerials:
        raise ValueError("empty grid range")
    counts = pool.layer_counts()
    if grounds[0] < 0 or grounds[-1] > counts[Layer.TERRESTRIAL]:
        raise ValueError(
            f"ground range {grounds[0]}..{grounds[-1]} outside layer population "
            f"{counts[Layer.TERRESTRIAL]}"
        )
    if aerials[0] < 0 or aerials[-1] > counts[Layer.AERIAL]:
        raise ValueError(
            f"aerial range {aerials[0]}..{aerials[-1]} outside layer population "
            f"{counts[Layer.AERIAL]}"
        )

    rows: list[SweepRow] = []
    for k_ground in grounds:
        for k_aerial in aerials:
            if k_ground == 0 and k_aerial == 0:
                continue
            quota = {Layer.TERRESTRIAL: k_ground, Layer.AERIAL: k_aerial}
            selection = sus_select_layered(pool, quota, params)
            rows.append(_row_from(selection, evaluate_selection(pool, selection, tx_power), 0))
    meta = _base_meta(pool, seed, params)
    meta.update(
        {
            "sweep": "layer_grid",
            "ground_min": grounds[0],
            "ground_max": grounds[-1],
            "aerial_min": aerials[0],
            "aerial_max": aerials[-1],
        }
    )
    return SweepTable(rows=tuple(rows), meta=meta)


def max_users_for_min_se(table: SweepTable, method: SelectionMethod, threshold_se: float) -> int:
    """Largest k whose trial-averaged individual SE stays at or above the threshold.

    Returns 0 when no k qualifies.
    """
    if not table.rows:
        raise ValueError("empty sweep table")
    per_k: dict[int, list[float]] = {}
    for row in table.rows:
        if row.method is method:
            per_k.setdefault(row.k_total, []).append(row.mean_individual_se)
    if not per_k:
        raise ValueError(f"table has no rows for method {method.value}")
    qualifying = [k for k, values in per_k.items() if float(np.mean(values)) >= threshold_se]
    return max(qualifying) if qualifying else 0


def find_peak(table: SweepTable) -> tuple[int, int, float]:
    """(k_ground, k_aerial, sum_se) of the best row.

    Ties on sum_se go to the smaller total user count, then fewer aerial users.
    """
    if not table.rows:
        raise ValueError("empty sweep table")
    best = max(table.rows, key=lambda r: (r.sum_se, -r.k_total, -r.k_aerial))
    return best.k_ground, best.k_aerial, best.sum_se


def exhaustive_oracle(
    pool: CsiDataset,
    k: int,
    tx_power: float = 1.0,
    budget: int = 1_000_000,
) -> tuple[tuple[int, ...], float]:
    """Exact optimum schedule of size k by enumerating every subset.

    Subsets whose Gram matrix is beyond the condition cap are skipped (their
    SE is effectively zero). Intended for desk-scale checks only.
    """
    n = len(pool)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    n_subsets = math.comb(n, k)
    if n_subsets > budget:
        raise ValueError(f"C({n},{k}) = {n_subsets} exceeds the enumeration budget {budget}")

    ids = [r.index for r in pool.records]
    best_ids: tuple[int, ...] | None = None
    best_sum = -math.inf
    for combo in itertools.combinations(ids, k):
        counts = {layer: 0 for layer in Layer}
        for rec_id in combo:
            counts[pool.record(rec_id).layer] += 1
        selection = SelectionResult(combo, counts, SelectionMethod.EXHAUSTIVE)
        try:
            report = evaluate_selection(pool, selection, tx_power)
        except IllConditionedError:
            continue
        if report.sum_se > best_sum:
            best_sum = report.sum_se
            best_ids = combo
    if best_ids is None:
        raise IllConditionedError("every size-k subset is ill-conditioned")
    return best_ids, best_sum
