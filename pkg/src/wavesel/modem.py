"""Switched-waveform modem: training mode, realization mode and policy comparison."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .chanmodels import ModelSpec, ScenarioConfig, derive_seed, draw_pathset
from .channel import effective_matrices, inject_estimation_error
from .classifier import ClassifierModel, predict
from .dataset import Sample, encode_image, generate_dataset, observe_interval
from .equalizer import channel_spectra
from .transforms import GridConfig

OTFS, OFDM = 0, 1
WAVEFORMS = {OTFS: "OTFS", OFDM: "OFDM"}


@dataclass(frozen=True)
class IntervalResult:
    chosen: int
    realized: float
    oracle: float
    mse_otfs: float
    mse_ofdm: float
    snr_db: float
    qam: int
    model_name: str
    seed: int

    @property
    def regret(self) -> float:
        return self.realized - self.oracle

    @property
    def waveform(self) -> str:
        return WAVEFORMS[self.chosen]


@dataclass
class PolicyReport:
    count: int
    mean_mse: dict
    mean_regret: dict
    agreement: float
    per_snr: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean_mse": self.mean_mse,
            "mean_regret": self.mean_regret,
            "agreement_with_oracle": self.agreement,
            "per_snr": {str(k): v for k, v in sorted(self.per_snr.items())},
        }


def as_decision(model_or_fn):
    """Wrap a classifier as ``decide(image, snr_db, qam) -> label``.

    The classifier reads SNR and QAM size from the image's meta row, so only
    the image is passed on; callables receive all three.
    """
    if isinstance(model_or_fn, ClassifierModel):
        return lambda image, snr_db, qam: predict(model_or_fn, image)[0]
    return model_or_fn


def run_training_mode(scenario: ScenarioConfig, count: int, master_seed: int, start_index: int = 0, **kw) -> list[Sample]:
    """Both chains on the same channel per interval; emits labelled samples."""
    return generate_dataset(scenario, count, master_seed, start_index=start_index, **kw)


def realize(decide, sample: Sample) -> IntervalResult:
    label = int(decide(sample.image, sample.snr_db, sample.qam))
    if label not in (OTFS, OFDM):
        raise ValueError(f"decision must be 0 or 1, got {label}")
    realized = sample.mse_otfs if label == OTFS else sample.mse_ofdm
    return IntervalResult(
        chosen=label,
        realized=realized,
        oracle=min(sample.mse_otfs, sample.mse_ofdm),
        mse_otfs=sample.mse_otfs,
        mse_ofdm=sample.mse_ofdm,
        snr_db=sample.snr_db,
        qam=sample.qam,
        model_name=sample.model_name,
        seed=sample.seed,
    )


def realize_samples(model_or_fn, samples) -> list[IntervalResult]:
    """Realization mode over an already generated set (e.g. the stored test set)."""
    decide = as_decision(model_or_fn)
    return [realize(decide, s) for s in samples]


def run_realization_mode(model_or_fn, scenario: ScenarioConfig, count: int, master_seed: int,
                         start_index: int = 0) -> list[IntervalResult]:
    """Per interval the decision sees only (image of H_hat, SNR, QAM); the realized
    MSE is the true-channel MSE of the chosen chain."""
    if count < 1:
        raise ValueError("count must be >= 1")
    decide = as_decision(model_or_fn)
    out = []
    for i in range(start_index, start_index + count):
        sample, _ = observe_interval(scenario, derive_seed(master_seed, i))
        out.append(realize(decide, sample))
    return out


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _summarize(results) -> tuple[dict, dict, float]:
    policies = {
        "switched": [r.realized for r in results],
        "always_otfs": [r.mse_otfs for r in results],
        "always_ofdm": [r.mse_ofdm for r in results],
        "oracle": [r.oracle for r in results],
    }
    oracle = policies["oracle"]
    mean_mse = {k: _mean(v) for k, v in policies.items()}
    mean_regret = {k: _mean(a - o for a, o in zip(v, oracle)) for k, v in policies.items()}
    best = [OTFS if r.mse_otfs < r.mse_ofdm else OFDM for r in results]
    agreement = _mean(float(r.chosen == b) for r, b in zip(results, best))
    return mean_mse, mean_regret, agreement


def compare_policies(results) -> PolicyReport:
    results = list(results)
    if not results:
        raise ValueError("no interval results")
    mean_mse, mean_regret, agreement = _summarize(results)
    # fsum is exact, so oracle dominance holds without tolerance
    for k, v in mean_mse.items():
        if mean_mse["oracle"] > v:
            raise AssertionError(f"oracle mean MSE exceeds policy {k}")
    groups = defaultdict(list)
    for r in results:
        groups[r.snr_db].append(r)
    per_snr = {}
    for snr, rs in sorted(groups.items()):
        mm, mr, ag = _summarize(rs)
        per_snr[snr] = {"count": len(rs), "mean_mse": mm, "mean_regret": mr, "agreement_with_oracle": ag,
                        "chosen_fraction_otfs": _mean(float(r.chosen == OTFS) for r in rs)}
    return PolicyReport(count=len(results), mean_mse=mean_mse, mean_regret=mean_regret,
                        agreement=agreement, per_snr=per_snr)


def chosen_fraction(results, waveform: int = OTFS) -> float:
    return float(np.mean([r.chosen == waveform for r in results]))


CURVE_COLUMNS = ("snr_db", "mse_otfs", "mse_ofdm", "mse_switched", "chosen_fraction_otfs")


def sweep_curves(model_or_fn, spec: ModelSpec, grid: GridConfig, qam: int, snr_db, draws: int = 25,
                 seed: int = 0) -> list[dict]:
    """MSE-vs-SNR curves for one scenario, averaged over ``draws`` channel realizations.

    Every SNR point sees the same channel draws; estimation noise is seeded per
    (draw, SNR point). Rows come out in the order of ``snr_db``.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    decide = as_decision(model_or_fn)
    snr_db = [float(x) for x in snr_db]
    acc = np.zeros((len(snr_db), 4))
    for d in range(draws):
        paths = draw_pathset(spec, np.random.default_rng(derive_seed(seed, d)))
        eff = effective_matrices(paths, grid)
        spectra = channel_spectra(eff)
        for j, snr in enumerate(snr_db):
            rho = 10 ** (snr / 10)
            d_otfs, d_ofdm = spectra.mse(rho)
            noise_rng = np.random.default_rng(np.random.SeedSequence([int(seed), d, j]))
            image = encode_image(inject_estimation_error(eff.H_tf_grid, rho, noise_rng), snr, qam)
            label = int(decide(image, snr, qam))
            acc[j] += (d_otfs, d_ofdm, d_otfs if label == OTFS else d_ofdm, float(label == OTFS))
    acc /= draws
    return [dict(zip(CURVE_COLUMNS, (snr, *row))) for snr, row in zip(snr_db, acc)]
