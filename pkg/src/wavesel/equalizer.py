"""Linear MMSE combining and per-symbol MSE for OTFS and OFDM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import EffectiveChannel
from .errors import SingularMatrixError

SUPPORTED_QAM = (4, 16, 64, 256, 1024)


@dataclass(frozen=True, eq=False)
class QamConstellation:
    """Unit-average-power square QAM; ``points[label]`` is the Gray-labelled symbol."""

    order: int
    points: np.ndarray

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))


@dataclass(frozen=True)
class MsePair:
    otfs: float
    ofdm: float
    rho: float
    qam: int

    @property
    def noise_power(self) -> float:
        return 1.0 / self.rho

    @property
    def best(self) -> int:
        """0 for OTFS, 1 for OFDM (ties go to OFDM)."""
        return 0 if self.otfs < self.ofdm else 1


def _gray(n):
    return n ^ (n >> 1)


def qam_constellation(m: int) -> QamConstellation:
    if m not in SUPPORTED_QAM:
        raise ValueError(f"unsupported QAM order {m}; expected one of {SUPPORTED_QAM}")
    k = int(np.log2(m)) // 2
    L = 1 << k
    levels = 2 * np.arange(L) - (L - 1)
    j = np.arange(L)
    # label bits: high half picks the in-phase level, low half the quadrature level
    labels = (_gray(j)[:, None] << k) | _gray(j)[None, :]
    pts = np.empty(m, dtype=complex)
    pts[labels] = levels[:, None] + 1j * levels[None, :]
    pts /= np.sqrt(2 * (m - 1) / 3)
    pts.setflags(write=False)
    return QamConstellation(order=m, points=pts)


def mmse_combiner(H: np.ndarray, lam: float) -> np.ndarray:
    """W = (H H^H + lam I)^{-1} H via a Cholesky solve."""
    H = np.asarray(H, dtype=complex)
    if lam < 0:
        raise ValueError("regularizer must be >= 0")
    A = H @ H.conj().T + lam * np.eye(H.shape[0])
    try:
        cho = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("H H^H + lam I is not positive definite") from exc
    if lam == 0 and np.min(np.abs(np.diag(cho[0]))) ** 2 < 1e-12 * np.max(np.abs(np.diag(A))):
        raise SingularMatrixError("H is rank deficient and lam = 0")
    return scipy.linalg.cho_solve(cho, H, check_finite=False)


def squared_singular_values(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H)
    s2 = np.linalg.eigvalsh(H.conj().T @ H)
    return np.clip(s2, 0.0, None)


def mse_from_spectrum(s2: np.ndarray, noise_power):
    """Per-symbol MMSE error power given squared singular values.

    ``noise_power`` may be an array, in which case one MSE per entry is returned.
    """
    sig = np.asarray(noise_power, dtype=float)
    if np.any(sig <= 0):
        raise ValueError("noise power must be > 0")
    s2 = np.asarray(s2, dtype=float)
    out = np.mean(sig[..., None] / (sig[..., None] + s2), axis=-1)
    return float(out) if out.ndim == 0 else out


def analytic_mse(H: np.ndarray, noise_power):
    """Trace of the linear-MMSE error covariance divided by n (unit-power symbols).

    Equals ``mean(sig / (sig + s_i^2))`` over the singular values ``s_i`` of H.
    A scalar noise power is evaluated as ``sig/n * tr((H^H H + sig I)^{-1})``
    through a Cholesky factor, which is several times cheaper than the spectrum.
    """
    sig = np.asarray(noise_power, dtype=float)
    if np.any(sig <= 0):
        raise ValueError("noise power must be > 0")
    H = np.asarray(H)
    if sig.ndim > 0:
        return mse_from_spectrum(squared_singular_values(H), sig)
    n = H.shape[1]
    A = H.conj().T @ H
    A[np.diag_indices(n)] += float(sig)
    try:
        L = scipy.linalg.cholesky(A, lower=True, check_finite=False)
        Linv, info = _trtri(L)
        if info != 0:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        return mse_from_spectrum(squared_singular_values(H), sig)
    return float(sig) * float(np.sum(np.abs(Linv) ** 2)) / n


def _trtri(L):
    if np.iscomplexobj(L):
        return scipy.linalg.lapack.ztrtri(L, lower=1)
    return scipy.linalg.lapack.dtrtri(L, lower=1)


def monte_carlo_mse(
    H: np.ndarray,
    constellation: QamConstellation,
    noise_power: float,
    trials: int,
    rng: np.random.Generator,
    chunk: int = 4096,
    return_stderr: bool = False,
):
    """Empirical per-symbol MSE of the MMSE combiner with random QAM inputs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    H = np.asarray(H, dtype=complex)
    n = H.shape[1]
    W = mmse_combiner(H, noise_power)
    WH = W.conj().T
    per_trial = np.empty(trials)
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        x = constellation.points[rng.integers(0, constellation.order, size=(n, b))]
        noise = rng.standard_normal((2, H.shape[0], b))
        y = H @ x + np.sqrt(noise_power / 2) * (noise[0] + 1j * noise[1])
        err = WH @ y - x
        per_trial[done:done + b] = np.sum(np.abs(err) ** 2, axis=0) / n
        done += b
    mean = float(np.mean(per_trial))
    if return_stderr:
        se = float(np.std(per_trial, ddof=1) / np.sqrt(trials)) if trials > 1 else float("inf")
        return mean, se
    return mean


@dataclass(frozen=True, eq=False)
class ChannelSpectra:
    """Squared singular values of the OTFS operator and of every OFDM block."""

    otfs: np.ndarray
    ofdm: np.ndarray  # (N, M)
    ofdm_full_burst: np.ndarray | None = None

    def mse(self, rho, full_burst_ofdm: bool = False):
        sig = 1.0 / np.asarray(rho, dtype=float)
        d_otfs = mse_from_spectrum(self.otfs, sig)
        if full_burst_ofdm:
            d_ofdm = mse_from_spectrum(self.ofdm_full_burst, sig)
        else:
            d_ofdm = np.mean(mse_from_spectrum(self.ofdm, sig[..., None]), axis=-1)
            d_ofdm = float(d_ofdm) if np.ndim(d_ofdm) == 0 else d_ofdm
        return d_otfs, d_ofdm


def channel_spectra(eff: EffectiveChannel, full_burst_ofdm: bool = False) -> ChannelSpectra:
    blocks = np.asarray(eff.ofdm_blocks)
    gram = blocks.conj().transpose(0, 2, 1) @ blocks
    s2_ofdm = np.clip(np.linalg.eigvalsh(gram), 0.0, None)
    return ChannelSpectra(
        otfs=squared_singular_values(eff.H_dd),
        ofdm=s2_ofdm,
        ofdm_full_burst=squared_singular_values(eff.H_tf_mat) if full_burst_ofdm else None,
    )


def evaluate_pair(eff: EffectiveChannel, rho: float, m: int, full_burst_ofdm: bool = False) -> MsePair:
    """MMSE MSE of both waveforms on one channel at linear SNR ``rho``.

    ``full_burst_ofdm`` replaces the per-symbol ideal-CP blocks by the
    whole-burst TF operator without SFFT precoding.
    """
    if not rho > 0:
        raise ValueError("linear SNR must be > 0")
    sig = 1.0 / rho
    d_otfs = analytic_mse(eff.H_dd, sig)
    if full_burst_ofdm:
        d_ofdm = analytic_mse(eff.H_tf_mat, sig)
    else:
        blocks = np.asarray(eff.ofdm_blocks)
        s2 = np.clip(np.linalg.eigvalsh(blocks.conj().transpose(0, 2, 1) @ blocks), 0.0, None)
        d_ofdm = float(np.mean(mse_from_spectrum(s2, sig)))
    return MsePair(otfs=float(d_otfs), ofdm=float(d_ofdm), rho=float(rho), qam=int(m))
