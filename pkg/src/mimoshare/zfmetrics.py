"""Zero-forcing combining and the SINR / spectral-efficiency pipeline.

With the scheduled channels column-stacked as an M x K matrix H, the combiner
is V = H (H^H H)^-1, so v_k^H h_i is 1 for i == k and 0 otherwise. SINR is
evaluated literally, interference term included, so the same routine is valid
for any combiner, not only ZF.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .csi import CsiDataset
from .sched import SelectionResult

__all__ = [
    "DEFAULT_COND_CAP",
    "IllConditionedError",
    "CombinerMatrix",
    "SeReport",
    "zf_combiner",
    "sinr",
    "spectral_efficiency",
    "sum_se",
    "evaluate_selection",
]

DEFAULT_COND_CAP = 1e10


class IllConditionedError(ValueError):
    """Gram matrix of the scheduled channels is singular or near-singular."""


@dataclass(frozen=True)
class CombinerMatrix:
    """Per-user combining vectors, one column per scheduled user."""

    matrix: np.ndarray  # (M, K) complex, column k combines user k
    gram_condition: float  # condition number of the K x K Gram matrix

    @property
    def k_users(self) -> int:
        return self.matrix.shape[1]

    @property
    def m_antennas(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SeReport:
    """Per-user SINR/SE and the summed SE for one evaluated schedule."""

    per_user_sinr: np.ndarray  # linear
    per_user_se: np.ndarray  # bits/s/Hz
    sum_se: float  # bits/s/Hz
    selection: SelectionResult
    noise_power: float
    tx_power: float


def _as_user_matrix(channels) -> np.ndarray:
    a = np.asarray(channels, dtype=np.complex128)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError(f"expected a (K, M) stack of channel rows, got shape {a.shape}")
    return a


def zf_combiner(channels, cond_cap: float = DEFAULT_COND_CAP) -> CombinerMatrix:
    """Zero-forcing combiner for K user channels given as rows of a (K, M) array.

    The K x K Gram system is solved by Cholesky factorization plus residual
    correction, which holds the v_k^H h_i = delta_ki contract to ~1e-12 even
    near the condition cap. Raises IllConditionedError when K > M would allow
    no null space or when the Gram condition number exceeds the cap.
    """
    a = _as_user_matrix(channels)
    k_users, m_antennas = a.shape
    if k_users > m_antennas:
        raise IllConditionedError(
            f"cannot null {k_users} users with {m_antennas} antennas (K > M)"
        )
    h = a.T  # (M, K), columns are the user channels
    gram = a.conj() @ a.T  # H^H H
    svals = np.linalg.svd(gram, compute_uv=False)
    cond = float(svals[0] / svals[-1]) if svals[-1] > 0.0 else float("inf")
    if not np.isfinite(cond) or cond > cond_cap:
        raise IllConditionedError(
            f"Gram condition number {cond:.3e} exceeds cap {cond_cap:.1e}"
        )
    try:
        factor = cho_factor(gram, lower=True)
    except LinAlgError as exc:
        raise IllConditionedError(f"Gram matrix is not positive definite: {exc}") from exc

    v = h @ cho_solve(factor, np.eye(k_users, dtype=np.complex128))
    # one refinement pass: correct V by the observed crosstalk V^H H - I
    for _ in range(2):
        crosstalk = v.conj().T @ h - np.eye(k_users)
        if np.abs(crosstalk).max() < 1e-13:
            break
        v = v - h @ cho_solve(factor, crosstalk.conj().T)
    return CombinerMatrix(matrix=v, gram_condition=cond)


def sinr(
    combiner: CombinerMatrix,
    channels,
    tx_power: float,
    noise_power: float,
) -> np.ndarray:
    """Per-user SINR, interference term evaluated literally.

    SINR_k = p |v_k^H h_k|^2 / (sum_{i != k} p |v_k^H h_i|^2 + sigma^2 ||v_k||^2)
    with one equal transmit power p for every user.
    """
    a = _as_user_matrix(channels)
    v = combiner.matrix
    if v.shape != (a.shape[1], a.shape[0]):
        raise ValueError(
            f"combiner shape {v.shape} does not match {a.shape[0]} channels of length {a.shape[1]}"
        )
    if tx_power <= 0.0 or noise_power <= 0.0:
        raise ValueError("tx_power and noise_power must be positive")
    cross = v.conj().T @ a.T  # (K, K): cross[k, i] = v_k^H h_i
    desired = tx_power * np.abs(np.diagonal(cross)) ** 2
    interference = tx_power * np.sum(np.abs(cross) ** 2, axis=1) - desired
    noise = noise_power * np.sum(np.abs(v) ** 2, axis=0)
    return desired / (interference + noise)


def spectral_efficiency(sinr_values) -> np.ndarray:
    """Elementwise log2(1 + SINR), bits/s/Hz."""
    s = np.asarray(sinr_values, dtype=np.float64)
    if s.size and s.min() < 0.0:
        raise ValueError("SINR values must be nonnegative")
    return np.log2(1.0 + s)


def sum_se(se_values) -> float:
    """Summed spectral efficiency of a schedule."""
    se = np.asarray(se_values, dtype=np.float64)
    if se.size == 0:
        return 0.0
    if se.min() < 0.0:
        raise ValueError("spectral efficiencies must be nonnegative")
    return float(np.sum(se))


def evaluate_selection(
    pool: CsiDataset,
    selection: SelectionResult,
    tx_power: float = 1.0,
    cond_cap: float = DEFAULT_COND_CAP,
) -> SeReport:
    """ZF combiner + SINR + SE for the scheduled users of a normalized pool."""
    if pool.noise_power is None:
        raise ValueError("pool has no noise power; normalize it before evaluation")
    channels = pool.channels_for(selection.chosen)
    combiner = zf_combiner(channels, cond_cap=cond_cap)
    sinr_values = sinr(combiner, channels, tx_power, pool.noise_power)
    se_values = spectral_efficiency(sinr_values)
    return SeReport(
        per_user_sinr=sinr_values,
        per_user_se=se_values,
        sum_se=sum_se(se_values),
        selection=selection,
        noise_power=pool.noise_power,
        tx_power=tx_power,
    )
