"""Unitary transforms of the two-step OTFS modem and plain OFDM.

Grid convention: an N x M grid (N symbol times / Doppler bins, M subcarriers /
delay bins) is vectorized row-major, so entry ``(n, m)`` sits at ``n*M + m`` and
OFDM symbol ``n`` occupies the contiguous sample block ``[n*M, (n+1)*M)``.
With this ordering

    U_tf   = I_N (x) U_M^H        (Heisenberg synthesis, rectangular pulse)
    U_sfft = U_N (x) U_M^H        (SFFT, TF -> DD)
    U_dd   = U_tf U_sfft^H        (DD symbols -> time samples)

and ``U_sfft^H vec(X_dd)`` is the unitary-normalized ISFFT

    X_tf[n, m] = 1/sqrt(NM) sum_{k,l} X_dd[k, l] exp(j2pi(nk/N - ml/M)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError

__all__ = [
    "GridConfig",
    "TransformSet",
    "dft_matrix",
    "kron",
    "build_transform_set",
    "otfs_modulate",
    "otfs_demodulate",
    "ofdm_modulate",
    "ofdm_demodulate",
    "time_to_tf_operator",
    "tf_to_dd_operator",
]

_REL_TOL = 1e-12


@dataclass(frozen=True)
class GridConfig:
    """Burst geometry. ``T0 * F0 = 1`` and ``B = M * F0`` are enforced."""

    N: int
    M: int
    T0: float
    F0: float
    fc: float
    B: float

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise InvalidDimensionError(f"N and M must be >= 1, got N={self.N}, M={self.M}")
        if self.T0 <= 0 or self.F0 <= 0:
            raise ValueError("T0 and F0 must be positive")
        if abs(self.T0 * self.F0 - 1.0) > _REL_TOL:
            raise ValueError(f"T0*F0 must equal 1, got {self.T0 * self.F0!r}")
        if abs(self.B - self.M * self.F0) > _REL_TOL * self.B:
            raise ValueError(f"B must equal M*F0, got B={self.B!r}, M*F0={self.M * self.F0!r}")

    @classmethod
    def make(cls, N: int, M: int, T0: float = 9e-6, fc: float = 4e9) -> "GridConfig":
        F0 = 1.0 / T0
        return cls(N=N, M=M, T0=T0, F0=F0, fc=fc, B=M * F0)

    @classmethod
    def stock(cls) -> "GridConfig":
        """9 x 135 grid, 9 us symbols, 4 GHz carrier, 15 MHz bandwidth."""
        return cls.make(9, 135, T0=9e-6, fc=4e9)

    @property
    def size(self) -> int:
        return self.N * self.M

    @property
    def nu0(self) -> float:
        """Doppler resolution 1/(N T0)."""
        return 1.0 / (self.N * self.T0)

    @property
    def tau0(self) -> float:
        """Delay resolution 1/(M F0)."""
        return 1.0 / (self.M * self.F0)

    @property
    def Ts(self) -> float:
        """Sample period at critical sampling (equals tau0)."""
        return self.T0 / self.M


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix, entry ``(a, b) = exp(-j2pi ab/n)/sqrt(n)``."""
    if n < 1:
        raise InvalidDimensionError(f"DFT size must be >= 1, got {n}")
    idx = np.arange(n)
    # reduce the exponent mod n before scaling to keep phases exact for large n
    return np.exp(-2j * np.pi * (np.outer(idx, idx) % n) / n) / np.sqrt(n)


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(A), np.asarray(B))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TransformSet:
    grid: GridConfig
    U_N: np.ndarray
    U_M: np.ndarray
    U_sfft: np.ndarray
    U_tf: np.ndarray
    U_dd: np.ndarray


def build_transform_set(grid: GridConfig) -> TransformSet:
    U_N = dft_matrix(grid.N)
    U_M = dft_matrix(grid.M)
    U_sfft = kron(U_N, U_M.conj().T)
    U_tf = kron(np.eye(grid.N), U_M.conj().T)
    U_dd = U_tf @ U_sfft.conj().T
    return TransformSet(
        grid=grid,
        U_N=_frozen(U_N),
        U_M=_frozen(U_M),
        U_sfft=_frozen(U_sfft),
        U_tf=_frozen(U_tf),
        U_dd=_frozen(U_dd),
    )


def _check_grid(X: np.ndarray, T: TransformSet) -> np.ndarray:
    X = np.asarray(X)
    if X.shape != (T.grid.N, T.grid.M):
        raise InvalidDimensionError(f"expected a {T.grid.N}x{T.grid.M} grid, got shape {X.shape}")
    return X


def _check_samples(r: np.ndarray, T: TransformSet) -> np.ndarray:
    r = np.asarray(r)
    if r.shape != (T.grid.size,):
        raise InvalidDimensionError(f"expected {T.grid.size} samples, got shape {r.shape}")
    return r


def otfs_modulate(X_dd: np.ndarray, T: TransformSet) -> np.ndarray:
    """ISFFT followed by Heisenberg synthesis."""
    X_dd = _check_grid(X_dd, T)
    return T.U_tf @ (T.U_sfft.conj().T @ X_dd.reshape(-1))


def otfs_demodulate(r: np.ndarray, T: TransformSet) -> np.ndarray:
    """Wigner (matched-filter) analysis followed by the SFFT."""
    r = _check_samples(r, T)
    return (T.U_sfft @ (T.U_tf.conj().T @ r)).reshape(T.grid.N, T.grid.M)


def ofdm_modulate(X_tf: np.ndarray, T: TransformSet) -> np.ndarray:
    X_tf = _check_grid(X_tf, T)
    return T.U_tf @ X_tf.reshape(-1)


def ofdm_demodulate(r: np.ndarray, T: TransformSet) -> np.ndarray:
    r = _check_samples(r, T)
    return (T.U_tf.conj().T @ r).reshape(T.grid.N, T.grid.M)


# Fast conjugations of NM x NM operators exploiting the Kronecker structure.
# They agree with the dense products U_tf^H H U_tf and U_sfft H U_sfft^H.

def time_to_tf_operator(H_time: np.ndarray, N: int, M: int) -> np.ndarray:
    """Return ``U_tf^H H_time U_tf`` for U_tf = I_N (x) U_M^H."""
    H = np.asarray(H_time).reshape(N, M, N, M)
    H = np.fft.fft(H, axis=1, norm="ortho")
    H = np.fft.ifft(H, axis=3, norm="ortho")
    return H.reshape(N * M, N * M)


def tf_to_dd_operator(H_tf: np.ndarray, N: int, M: int) -> np.ndarray:
    """Return ``U_sfft H_tf U_sfft^H`` for U_sfft = U_N (x) U_M^H."""
    H = np.asarray(H_tf).reshape(N, M, N, M)
    H = np.fft.fft(H, axis=0, norm="ortho")
    H = np.fft.ifft(H, axis=1, norm="ortho")
    H = np.fft.ifft(H, axis=2, norm="ortho")
    H = np.fft.fft(H, axis=3, norm="ortho")
    return H.reshape(N * M, N * M)
