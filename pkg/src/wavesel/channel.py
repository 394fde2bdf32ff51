"""Doubly-dispersive channel physics and effective channel operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidChannelError
from .transforms import GridConfig, TransformSet, tf_to_dd_operator, time_to_tf_operator

__all__ = [
    "PathSet",
    "EffectiveChannel",
    "tf_response_at",
    "sample_tf_grid",
    "delay_taps",
    "burst_time_operator",
    "per_symbol_time_operator",
    "effective_matrices",
    "inject_estimation_error",
]


@dataclass(frozen=True, eq=False)
class PathSet:
    """Multipath realization: complex gains, delays [s] and Doppler shifts [Hz]."""

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        delays = np.atleast_1d(np.asarray(self.delays, dtype=float))
        dopplers = np.atleast_1d(np.asarray(self.dopplers, dtype=float))
        if gains.ndim != 1 or not (gains.shape == delays.shape == dopplers.shape):
            raise InvalidChannelError("gains, delays and dopplers must be 1-D of equal length")
        if gains.size < 1:
            raise InvalidChannelError("a path set needs at least one path")
        if np.any(delays < 0) or not np.all(np.isfinite(delays)):
            raise InvalidChannelError("path delays must be finite and >= 0")
        if self.normalized and abs(np.sum(np.abs(gains) ** 2) - 1.0) > 1e-10:
            raise InvalidChannelError("normalized path set must have unit total power")
        for name, arr in (("gains", gains), ("delays", delays), ("dopplers", dopplers)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def single(cls, gain=1.0, delay=0.0, doppler=0.0) -> "PathSet":
        return cls([gain], [delay], [doppler])

    @property
    def num_paths(self) -> int:
        return self.gains.size

    def scaled(self, factor: complex) -> "PathSet":
        return PathSet(self.gains * factor, self.delays, self.dopplers)

    def __eq__(self, other):
        if not isinstance(other, PathSet):
            return NotImplemented
        return (
            np.array_equal(self.gains, other.gains)
            and np.array_equal(self.delays, other.delays)
            and np.array_equal(self.dopplers, other.dopplers)
        )


@dataclass(frozen=True, eq=False)
class EffectiveChannel:
    H_tf_grid: np.ndarray  # (N, M) samples of H(nT0, mF0)
    H_time: np.ndarray  # (NM, NM) burst-circular time-domain operator
    H_tf_mat: np.ndarray  # (NM, NM)
    H_dd: np.ndarray  # (NM, NM)
    ofdm_blocks: np.ndarray = field(repr=False)  # (N, M, M) per-symbol TF operators


def tf_response_at(paths: PathSet, t, f):
    """H(t, f) = sum_k a_k exp(-j2pi tau_k f) exp(-j2pi nu_k t); broadcasts over t and f."""
    t = np.asarray(t, dtype=float)[..., None]
    f = np.asarray(f, dtype=float)[..., None]
    phase = np.exp(-2j * np.pi * paths.delays * f) * np.exp(-2j * np.pi * paths.dopplers * t)
    out = np.sum(paths.gains * phase, axis=-1)
    return out[()] if out.ndim == 0 else out


def sample_tf_grid(paths: PathSet, grid: GridConfig) -> np.ndarray:
    t = np.arange(grid.N)[:, None] * grid.T0
    f = np.arange(grid.M)[None, :] * grid.F0
    return tf_response_at(paths, t, f)


def delay_taps(paths: PathSet, grid: GridConfig) -> np.ndarray:
    """Delays quantized to the nearest sample period."""
    return np.rint(paths.delays / grid.Ts).astype(int)


def burst_time_operator(paths: PathSet, grid: GridConfig) -> np.ndarray:
    """Time-domain operator, circular over the whole NM-sample burst."""
    NM = grid.size
    taps = delay_taps(paths, grid)
    if np.any(taps >= NM):
        raise InvalidChannelError(f"path delay exceeds the burst duration ({NM} samples)")
    q = np.arange(NM)
    H = np.zeros((NM, NM), dtype=complex)
    for a, l, nu in zip(paths.gains, taps, paths.dopplers):
        H[q, (q - l) % NM] += a * np.exp(2j * np.pi * nu * q * grid.Ts)
    return H


def per_symbol_time_operator(paths: PathSet, grid: GridConfig, n: int) -> np.ndarray:
    """M x M operator of OFDM symbol ``n`` with an ideal cyclic prefix."""
    M = grid.M
    taps = delay_taps(paths, grid)
    if np.any(taps >= M):
        raise InvalidChannelError(f"path delay exceeds the OFDM symbol duration ({M} samples)")
    q = np.arange(M)
    t = n * grid.T0 + q * grid.Ts
    C = np.zeros((M, M), dtype=complex)
    for a, l, nu in zip(paths.gains, taps, paths.dopplers):
        C[q, (q - l) % M] += a * np.exp(2j * np.pi * nu * t)
    return C


def effective_matrices(
    paths: PathSet, grid: GridConfig, T: TransformSet | None = None, dense: bool = False
) -> EffectiveChannel:
    """Build every operator of one channel realization.

    The default path applies the Kronecker-structured transforms with FFTs;
    ``dense=True`` multiplies by the materialized matrices of ``T`` instead.
    """
    N, M = grid.N, grid.M
    H_time = burst_time_operator(paths, grid)
    if dense:
        if T is None:
            raise ValueError("dense=True needs a TransformSet")
        H_tf_mat = T.U_tf.conj().T @ H_time @ T.U_tf
        H_dd = T.U_sfft @ H_tf_mat @ T.U_sfft.conj().T
    else:
        H_tf_mat = time_to_tf_operator(H_time, N, M)
        H_dd = tf_to_dd_operator(H_tf_mat, N, M)

    blocks = np.stack([per_symbol_time_operator(paths, grid, n) for n in range(N)])
    # U_M C_n U_M^H for every n at once
    blocks = np.fft.ifft(np.fft.fft(blocks, axis=1, norm="ortho"), axis=2, norm="ortho")

    out = EffectiveChannel(
        H_tf_grid=sample_tf_grid(paths, grid),
        H_time=H_time,
        H_tf_mat=H_tf_mat,
        H_dd=H_dd,
        ofdm_blocks=blocks,
    )
    for arr in (out.H_tf_grid, out.H_time, out.H_tf_mat, out.H_dd, out.ofdm_blocks):
        arr.setflags(write=False)
    return out


def inject_estimation_error(H_tf_grid: np.ndarray, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Add CN(0, mean|H|^2 / rho) estimation error to every grid entry."""
    if not rho > 0:
        raise ValueError(f"linear SNR must be > 0, got {rho!r}")
    H = np.asarray(H_tf_grid, dtype=complex)
    noise = rng.standard_normal((2,) + H.shape)
    if np.isinf(rho):
        return H.copy()
    var = np.mean(np.abs(H) ** 2) / rho
    return H + np.sqrt(var / 2) * (noise[0] + 1j * noise[1])
