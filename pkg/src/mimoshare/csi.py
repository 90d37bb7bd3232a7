"""Channel data model: capture ingestion, synthetic two-layer generation, SNR normalization.

A dataset is an ordered pool of per-timestep channel vectors (one complex gain
per base-station antenna), each tagged with the user layer it belongs to.
Datasets come either from raw fixed-point capture files or from the built-in
geometric generator, and are normalized to a target average SNR before any
link-level evaluation.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SPEED_OF_LIGHT",
    "Layer",
    "CaptureError",
    "CsiRecord",
    "CsiDataset",
    "FixedPointFormat",
    "ScenarioConfig",
    "PoolPolicy",
    "load_csi_binary",
    "encode_csi_binary",
    "save_csi_binary",
    "read_sidecar",
    "sidecar_text",
    "write_sidecar",
    "load_capture",
    "merge_datasets",
    "generate_synthetic",
    "element_positions",
    "trajectory_points",
    "normalize_to_snr",
    "subsample_pool",
]

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class Layer(enum.Enum):
    """User layer a candidate location belongs to."""

    TERRESTRIAL = "terrestrial"
    AERIAL = "aerial"


class CaptureError(ValueError):
    """Raised when a capture file does not match its declared binary format."""


def _as_channel(gains) -> np.ndarray:
    """Validate and coerce one channel vector to a read-only complex array."""
    h = np.asarray(gains, dtype=np.complex128)
    if h.ndim != 1 or h.shape[0] == 0:
        raise ValueError(f"channel vector must be 1-D and non-empty, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ValueError("channel vector contains NaN or Inf components")
    if h.flags.writeable:
        h = h.copy()
        h.flags.writeable = False
    return h


@dataclass(frozen=True)
class CsiRecord:
    """One candidate user location: a timestamped channel snapshot."""

    index: int
    layer: Layer
    timestep_ms: int
    channel: np.ndarray  # (M,) complex gains across the BS antennas
    position: np.ndarray | None = None  # (3,) meters, when known

    def __post_init__(self):
        object.__setattr__(self, "channel", _as_channel(self.channel))
        if self.position is not None:
            object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))


@dataclass(frozen=True)
class CsiDataset:
    """Ordered pool of channel records plus normalization metadata.

    ``noise_power`` is the linear noise variance implied by the target SNR,
    set by :func:`normalize_to_snr`; until then the dataset is un-normalized
    (``scale_applied`` 1, ``noise_power`` None). Instances are immutable and
    safe to share across concurrent evaluations.
    """

    records: tuple[CsiRecord, ...]
    m_antennas: int
    scale_applied: float = 1.0
    noise_power: float | None = None  # sigma^2, linear
    snr_target_db: float | None = None
    _pos_by_id: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.m_antennas <= 0:
            raise ValueError("m_antennas must be positive")
        seen: dict[int, int] = {}
        for pos, rec in enumerate(self.records):
            if rec.channel.shape != (self.m_antennas,):
                raise ValueError(
                    f"record {rec.index}: channel length {rec.channel.shape[0]} "
                    f"does not match dataset m_antennas={self.m_antennas}"
                )
            if rec.index in seen:
                raise ValueError(f"duplicate record index {rec.index}")
            seen[rec.index] = pos
        object.__setattr__(self, "_pos_by_id", seen)

    def __len__(self) -> int:
        return len(self.records)

    def channel_matrix(self) -> np.ndarray:
        """All channels stacked as an (N, M) array, one row per record."""
        if not self.records:
            return np.zeros((0, self.m_antennas), dtype=np.complex128)
        return np.stack([r.channel for r in self.records])

    def record(self, index: int) -> CsiRecord:
        """Look up a record by its id."""
        return self.records[self._pos_by_id[index]]

    def channels_for(self, indices: Iterable[int]) -> np.ndarray:
        """Channels of the given record ids stacked as a (K, M) array."""
        return np.stack([self.record(i).channel for i in indices])

    def ids_in_layer(self, layer: Layer) -> list[int]:
        """Record ids of one layer, in dataset (time) order."""
        return [r.index for r in self.records if r.layer is layer]

    def layer_counts(self) -> dict[Layer, int]:
        counts = {layer: 0 for layer in Layer}
        for r in self.records:
            counts[r.layer] += 1
        return counts

    def fingerprint(self) -> str:
        """Short content hash covering ids, layers, timesteps and gains."""
        digest = hashlib.sha256()
        digest.update(f"M={self.m_antennas};".encode())
        for r in self.records:
            digest.update(f"{r.index},{r.layer.value},{r.timestep_ms};".encode())
            digest.update(r.channel.tobytes())
        return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Fixed-point capture files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedPointFormat:
    """Binary layout of a capture file.

    Each timestep is a block of ``m_antennas`` complex values, every value a
    pair of 16-bit signed integers (I then Q). ``frac_bits`` 15 is Q1.15.
    """

    m_antennas: int
    frac_bits: int = 15
    little_endian: bool = True

    def __post_init__(self):
        if self.m_antennas <= 0:
            raise ValueError("m_antennas must be positive")
        if not 0 <= self.frac_bits <= 15:
            raise ValueError("frac_bits must be in 0..15")

    @property
    def bytes_per_record(self) -> int:
        return self.m_antennas * 2 * 2

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<i2" if self.little_endian else ">i2")


def load_csi_binary(
    path,
    fmt: FixedPointFormat,
    *,
    layer: Layer = Layer.TERRESTRIAL,
    sample_interval_ms: float = 1.0,
    start_index: int = 0,
) -> CsiDataset:
    """Decode a raw fixed-point capture into an un-normalized dataset.

    One record per timestep, in file order. Layer and timing metadata are not
    part of the binary stream; they come from the sidecar (see
    :func:`read_sidecar`) or from the keyword arguments.
    """
    data = Path(path).read_bytes()
    if len(data) == 0:
        raise CaptureError(f"{path}: empty capture file")
    if len(data) % fmt.bytes_per_record != 0:
        raise CaptureError(
            f"{path}: length {len(data)} is not a multiple of the "
            f"{fmt.bytes_per_record}-byte record size for M={fmt.m_antennas} "
            "(truncated file or wrong antenna count)"
        )
    raw = np.frombuffer(data, dtype=fmt.dtype).astype(np.float64)
    scale = float(1 << fmt.frac_bits)
    iq = raw.reshape(-1, fmt.m_antennas, 2) / scale
    gains = iq[:, :, 0] + 1j * iq[:, :, 1]
    gains.flags.writeable = False

    records = tuple(
        CsiRecord(
            index=start_index + t,
            layer=layer,
            timestep_ms=int(round(t * sample_interval_ms)),
            channel=gains[t],
        )
        for t in range(gains.shape[0])
    )
    return CsiDataset(records=records, m_antennas=fmt.m_antennas)


def encode_csi_binary(dataset: CsiDataset, fmt: FixedPointFormat | None = None) -> bytes:
    """Encode a dataset to the raw fixed-point layout.

    Components are rounded to the nearest representable value; magnitudes at
    or beyond full scale raise instead of saturating so that decode/encode
    round-trips stay exact.
    """
    if fmt is None:
        fmt = FixedPointFormat(m_antennas=dataset.m_antennas)
    if fmt.m_antennas != dataset.m_antennas:
        raise CaptureError(
            f"format M={fmt.m_antennas} does not match dataset M={dataset.m_antennas}"
        )
    scale = float(1 << fmt.frac_bits)
    gains = dataset.channel_matrix()
    iq = np.empty((len(dataset), fmt.m_antennas, 2), dtype=np.float64)
    iq[:, :, 0] = gains.real
    iq[:, :, 1] = gains.imag
    quant = np.round(iq * scale)
    if quant.size and (quant.max() > 32767 or quant.min() < -32768):
        raise ValueError(
            "gain component outside the representable fixed-point range; "
            "normalize or rescale the dataset before encoding"
        )
    return quant.astype(fmt.dtype).tobytes()


def save_csi_binary(dataset: CsiDataset, path, fmt: FixedPointFormat | None = None) -> FixedPointFormat:
    """Encode a dataset and write it to a capture file."""
    if fmt is None:
        fmt = FixedPointFormat(m_antennas=dataset.m_antennas)
    Path(path).write_bytes(encode_csi_binary(dataset, fmt))
    return fmt


def sidecar_text(
    fmt: FixedPointFormat,
    layer: Layer,
    *,
    altitude_m: float | None = None,
    sample_interval_ms: float = 1.0,
    extra: dict | None = None,
) -> str:
    """Render the flat key-value metadata accompanying a capture binary."""
    lines = [
        f"m_antennas = {fmt.m_antennas}",
        f"frac_bits = {fmt.frac_bits}",
        f"byteorder = {'little' if fmt.little_endian else 'big'}",
        f"layer = {layer.value}",
        f"sample_interval_ms = {sample_interval_ms:g}",
    ]
    if altitude_m is not None:
        lines.append(f"altitude_m = {altitude_m:g}")
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_sidecar(
    path,
    fmt: FixedPointFormat,
    layer: Layer,
    *,
    altitude_m: float | None = None,
    sample_interval_ms: float = 1.0,
    extra: dict | None = None,
) -> None:
    """Write the sidecar metadata file for a capture binary."""
    Path(path).write_text(
        sidecar_text(
            fmt,
            layer,
            altitude_m=altitude_m,
            sample_interval_ms=sample_interval_ms,
            extra=extra,
        )
    )


def _parse_keyvalues(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def read_sidecar(path) -> tuple[FixedPointFormat, Layer, float]:
    """Parse a capture sidecar into (format, layer, sample interval in ms)."""
    values = _parse_keyvalues(Path(path).read_text())
    try:
        m_antennas = int(values["m_antennas"])
    except KeyError:
        raise CaptureError(f"{path}: sidecar is missing m_antennas") from None
    fmt = FixedPointFormat(
        m_antennas=m_antennas,
        frac_bits=int(values.get("frac_bits", "15")),
        little_endian=values.get("byteorder", "little") == "little",
    )
    layer = Layer(values.get("layer", "terrestrial"))
    interval = float(values.get("sample_interval_ms", "1"))
    return fmt, layer, interval


def load_capture(bin_path, sidecar_path=None) -> CsiDataset:
    """Load one capture binary with metadata from its sidecar.

    The sidecar defaults to the binary path with a ``.cfg`` suffix appended.
    """
    bin_path = Path(bin_path)
    if sidecar_path is None:
        sidecar_path = bin_path.with_suffix(bin_path.suffix + ".cfg")
    fmt, layer, interval = read_sidecar(sidecar_path)
    return load_csi_binary(bin_path, fmt, layer=layer, sample_interval_ms=interval)


def merge_datasets(datasets: Sequence[CsiDataset]) -> CsiDataset:
    """Concatenate datasets (e.g. one capture per layer) into one pool.

    Records are renumbered sequentially so ids stay unique. Normalization
    metadata is dropped; normalize the merged pool afterwards.
    """
    if not datasets:
        raise ValueError("nothing to merge")
    m = datasets[0].m_antennas
    if any(d.m_antennas != m for d in datasets):
        raise ValueError("datasets disagree on antenna count")
    records = []
    next_id = 0
    for ds in datasets:
        for rec in ds.records:
            records.append(replace(rec, index=next_id))
            next_id += 1
    return CsiDataset(records=tuple(records), m_antennas=m)


# ---------------------------------------------------------------------------
# Synthetic two-layer generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and fading parameters for the synthetic generator.

    The base-station array is a vertical m_rows x m_cols planar array facing
    the user trajectories. Each layer is one straight constant-altitude pass
    parallel to the array face, sampled every ``sample_interval_ms``.
    """

    m_rows: int = 8
    m_cols: int = 8
    carrier_hz: float = 2.61e9
    element_spacing_wavelengths: float = 0.5
    bs_height_m: float = 11.0
    trajectory_length_m: float = 42.48
    trajectory_speed_mps: float = 1.5
    sample_interval_ms: float = 1.0
    layer_altitudes_m: tuple[float, float] = (8.0, 24.0)  # (terrestrial, aerial)
    standoff_distance_m: float = 30.0  # horizontal array-to-trajectory distance
    rician_k_db: tuple[float, float] = (3.0, 20.0)  # (terrestrial, aerial)
    seed: int = 0

    def __post_init__(self):
        positive = {
            "m_rows": self.m_rows,
            "m_cols": self.m_cols,
            "carrier_hz": self.carrier_hz,
            "element_spacing_wavelengths": self.element_spacing_wavelengths,
            "bs_height_m": self.bs_height_m,
            "trajectory_length_m": self.trajectory_length_m,
            "trajectory_speed_mps": self.trajectory_speed_mps,
            "sample_interval_ms": self.sample_interval_ms,
            "standoff_distance_m": self.standoff_distance_m,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if any(a <= 0 for a in self.layer_altitudes_m):
            raise ValueError("layer altitudes must be strictly positive")
        if self.layer_altitudes_m[0] == self.layer_altitudes_m[1]:
            raise ValueError("layer altitudes must be distinct")

    @property
    def m_antennas(self) -> int:
        return self.m_rows * self.m_cols

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def samples_per_layer(self) -> int:
        step = self.trajectory_speed_mps * self.sample_interval_ms / 1000.0
        # epsilon guards grid arithmetic when length is an exact multiple of the step
        return int(math.floor(self.trajectory_length_m / step + 1e-9)) + 1


def element_positions(config: ScenarioConfig) -> np.ndarray:
    """(M, 3) element coordinates in meters, row-major over the array face.

    x runs horizontally along the trajectory direction, y toward the users,
    z up; the array sits in the x-z plane centered at (0, 0, bs_height_m).
    """
    d = config.element_spacing_wavelengths * config.wavelength_m
    cols = (np.arange(config.m_cols) - (config.m_cols - 1) / 2.0) * d
    rows = (np.arange(config.m_rows) - (config.m_rows - 1) / 2.0) * d
    pos = np.zeros((config.m_rows, config.m_cols, 3))
    pos[:, :, 0] = cols[None, :]
    pos[:, :, 2] = config.bs_height_m + rows[:, None]
    return pos.reshape(-1, 3)


def trajectory_points(config: ScenarioConfig, altitude_m: float) -> np.ndarray:
    """(N, 3) sampling positions along one constant-altitude pass."""
    step = config.trajectory_speed_mps * config.sample_interval_ms / 1000.0
    n = config.samples_per_layer
    x = -config.trajectory_length_m / 2.0 + step * np.arange(n)
    pts = np.empty((n, 3))
    pts[:, 0] = x
    pts[:, 1] = config.standoff_distance_m
    pts[:, 2] = altitude_m
    return pts


def generate_synthetic(config: ScenarioConfig) -> CsiDataset:
    """Generate an un-normalized two-layer dataset from the scenario geometry.

    Per sample, the channel is the exact spherical-wave LOS term (free-space
    amplitude, phase -2*pi*d/lambda from the per-element path length) plus a
    diffuse circular-Gaussian term whose power is LOS power / K for the
    layer's Rician K-factor. K of +inf disables the diffuse term. Deterministic
    for a fixed seed.
    """
    rng = np.random.default_rng(config.seed)
    elems = element_positions(config)
    lam = config.wavelength_m

    records: list[CsiRecord] = []
    next_id = 0
    layer_plan = zip(
        (Layer.TERRESTRIAL, Layer.AERIAL), config.layer_altitudes_m, config.rician_k_db
    )
    for layer, altitude, k_db in layer_plan:
        pts = trajectory_points(config, altitude)
        dists = np.linalg.norm(pts[:, None, :] - elems[None, :, :], axis=-1)  # (N, M)
        amps = lam / (4.0 * np.pi * dists)
        gains = amps * np.exp(-2j * np.pi * dists / lam)

        k_lin = 10.0 ** (k_db / 10.0)
        diffuse_power = np.mean(amps**2, axis=1) / k_lin  # (N,) ; 0 when K=inf
        noise = rng.standard_normal((pts.shape[0], config.m_antennas)) + 1j * rng.standard_normal(
            (pts.shape[0], config.m_antennas)
        )
        gains = gains + np.sqrt(diffuse_power / 2.0)[:, None] * noise
        gains.flags.writeable = False

        for t in range(pts.shape[0]):
            records.append(
                CsiRecord(
                    index=next_id,
                    layer=layer,
                    timestep_ms=int(round(t * config.sample_interval_ms)),
                    channel=gains[t],
                    position=pts[t],
                )
            )
            next_id += 1
    return CsiDataset(records=tuple(records), m_antennas=config.m_antennas)


# ---------------------------------------------------------------------------
# Normalization and pool subsampling
# ---------------------------------------------------------------------------

def normalize_to_snr(dataset: CsiDataset, snr_db: float) -> CsiDataset:
    """Rescale all gains by one global factor so mean ||h||^2 over records is 1.

    With unit transmit power this makes the dataset-average SNR equal to
    ``snr_db``; the implied linear noise power 10^(-snr_db/10) is recorded.
    Re-applying is a no-op up to floating-point roundoff.
    """
    if len(dataset) == 0:
        raise ValueError("cannot normalize an empty dataset")
    gains = dataset.channel_matrix()
    mean_sq_norm = float(np.mean(np.sum(np.abs(gains) ** 2, axis=1)))
    if mean_sq_norm == 0.0:
        raise ValueError("cannot normalize an all-zero dataset")
    scale = 1.0 / math.sqrt(mean_sq_norm)
    scaled = gains * scale
    scaled.flags.writeable = False
    records = tuple(
        replace(rec, channel=scaled[pos]) for pos, rec in enumerate(dataset.records)
    )
    return CsiDataset(
        records=records,
        m_antennas=dataset.m_antennas,
        scale_applied=dataset.scale_applied * scale,
        noise_power=10.0 ** (-snr_db / 10.0),
        snr_target_db=snr_db,
    )


class PoolPolicy(enum.Enum):
    """How to thin a layer's records down to a candidate pool."""

    STRIDE = "stride"
    SEEDED_UNIFORM = "uniform"


def subsample_pool(
    dataset: CsiDataset,
    per_layer_count: tuple[int | None, int | None],
    policy: PoolPolicy = PoolPolicy.STRIDE,
    seed: int = 0,
) -> CsiDataset:
    """Reduce the dataset to a fixed-size candidate pool per layer.

    ``per_layer_count`` is (terrestrial, aerial); None keeps a layer whole.
    STRIDE takes evenly spaced timesteps; SEEDED_UNIFORM draws without
    replacement from the given seed. Record ids and order are preserved.
    """
    if len(per_layer_count) != 2:
        raise ValueError("per_layer_count must be a (terrestrial, aerial) pair")
    rng = np.random.default_rng(seed)
    keep_positions: list[int] = []
    requested = dict(zip((Layer.TERRESTRIAL, Layer.AERIAL), per_layer_count))
    for layer, count in requested.items():
        positions = [p for p, r in enumerate(dataset.records) if r.layer is layer]
        if count is None:
            keep_positions.extend(positions)
            continue
        population = len(positions)
        if count > population:
            raise ValueError(
                f"requested {count} {layer.value} records, only {population} available"
            )
        if policy is PoolPolicy.STRIDE:
            ranks = np.floor(np.arange(count) * population / count).astype(int) if count else []
        else:
            ranks = sorted(rng.choice(population, size=count, replace=False)) if count else []
        keep_positions.extend(positions[r] for r in ranks)
    keep_positions.sort()
    return replace(
        dataset, records=tuple(dataset.records[p] for p in keep_positions)
    )
