"""Stochastic EPA/EVA/ETU path-set generation with Jakes-style Doppler draws."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import PathSet
from .transforms import GridConfig

SPEED_OF_LIGHT = 299_792_458.0

STOCK_SNR_DB = (-20, -15, -10, -5, 0, 5, 10, 15, 20, 25, 30)
STOCK_QAM = (4, 16, 64, 256, 1024)
STOCK_SPEEDS_KMH = (10.0, 20.0, 150.0, 200.0, 250.0)
STOCK_MODELS = ("EPA", "EVA", "ETU")

# stable ids used in the dataset binary format
MODEL_IDS = {"EPA": 0, "EVA": 1, "ETU": 2}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    powers_db: tuple
    tau_rms: float
    tau_max: float
    v_max: float = 0.0  # km/h
    fc: float = 4e9
    delays: tuple | None = None  # fixed delays [s]; skips the Gaussian draw

    def __post_init__(self):
        object.__setattr__(self, "powers_db", tuple(float(p) for p in self.powers_db))
        if self.delays is not None:
            object.__setattr__(self, "delays", tuple(float(d) for d in self.delays))
            if len(self.delays) != len(self.powers_db):
                raise ValueError("delays override must have one entry per path")
        if len(self.powers_db) not in (7, 9):
            raise ValueError(f"{self.name}: path count must be 7 or 9, got {len(self.powers_db)}")
        if not 0 <= self.tau_rms < self.tau_max:
            raise ValueError(f"{self.name}: need 0 <= tau_rms < tau_max")
        if self.v_max < 0 or self.fc <= 0:
            raise ValueError(f"{self.name}: invalid speed or carrier")

    @property
    def num_paths(self) -> int:
        return len(self.powers_db)

    @property
    def nu_max(self) -> float:
        return self.v_max / 3.6 * self.fc / SPEED_OF_LIGHT

    def with_speed(self, v_max: float) -> "ModelSpec":
        return replace(self, v_max=float(v_max))

    @classmethod
    def from_dict(cls, d: dict, fc: float = 4e9) -> "ModelSpec":
        delays = d.get("delays_ns")
        return cls(
            name=d["name"],
            powers_db=tuple(d["powers_db"]),
            tau_rms=d["tau_rms_ns"] * 1e-9,
            tau_max=d["tau_max_ns"] * 1e-9,
            v_max=d.get("v_max_kmh", 0.0),
            fc=d.get("fc_hz", fc),
            delays=None if delays is None else tuple(x * 1e-9 for x in delays),
        )

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "powers_db": list(self.powers_db),
            "tau_rms_ns": self.tau_rms * 1e9,
            "tau_max_ns": self.tau_max * 1e9,
            "v_max_kmh": self.v_max,
            "fc_hz": self.fc,
        }
        if self.delays is not None:
            d["delays_ns"] = [x * 1e9 for x in self.delays]
        return d


def load_model_spec(path, fc: float = 4e9) -> ModelSpec:
    return ModelSpec.from_dict(json.loads(Path(path).read_text()), fc=fc)


def stock_model(name: str, v_max: float | None = None, fc: float = 4e9) -> ModelSpec:
    text = resources.files("wavesel.data").joinpath(f"{name.lower()}.json").read_text()
    spec = ModelSpec.from_dict(json.loads(text), fc=fc)
    return spec if v_max is None else spec.with_speed(v_max)


@dataclass(frozen=True)
class ScenarioConfig:
    """What a dataset draws from: model family, speeds, SNRs and QAM orders."""

    grid: GridConfig = field(default_factory=GridConfig.stock)
    models: tuple = STOCK_MODELS
    speeds_kmh: tuple = STOCK_SPEEDS_KMH
    snr_set_db: tuple = STOCK_SNR_DB
    qam_set: tuple = STOCK_QAM

    def __post_init__(self):
        models = tuple(m.upper() if isinstance(m, str) else m for m in self.models)
        object.__setattr__(self, "models", models)
        for attr in ("models", "speeds_kmh", "snr_set_db", "qam_set"):
            if len(getattr(self, attr)) == 0:
                raise ValueError(f"scenario {attr} must be nonempty")

    def model_spec(self, index: int, v_max: float) -> ModelSpec:
        m = self.models[index]
        spec = stock_model(m, fc=self.grid.fc) if isinstance(m, str) else m
        return spec.with_speed(v_max)

    def to_dict(self) -> dict:
        return {
            "models": [m if isinstance(m, str) else m.to_dict() for m in self.models],
            "speeds_kmh": list(self.speeds_kmh),
            "snr_set_db": list(self.snr_set_db),
            "qam_set": list(self.qam_set),
        }


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit per-sample seed hashed from (master_seed, index)."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def draw_delays(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Gaussian delays around tau_rms, clamped to [0, tau_max]; path 0 is the zero-delay tap."""
    if spec.delays is not None:
        return np.array(spec.delays)
    sigma = (spec.tau_max - spec.tau_rms) / 3.0
    d = rng.normal(spec.tau_rms, sigma, spec.num_paths)
    d = np.clip(d, 0.0, spec.tau_max)
    d[0] = 0.0
    return d


def draw_dopplers(spec: ModelSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    theta = rng.uniform(0.0, np.pi, n)
    return spec.nu_max * np.cos(theta)


def draw_pathset(spec: ModelSpec, rng: np.random.Generator) -> PathSet:
    delays = draw_delays(spec, rng)
    dopplers = draw_dopplers(spec, rng, spec.num_paths)
    phases = rng.uniform(0.0, 2 * np.pi, spec.num_paths)
    gains = 10 ** (np.array(spec.powers_db) / 20) * np.exp(1j * phases)
    gains /= np.sqrt(np.sum(np.abs(gains) ** 2))
    return PathSet(gains, delays, dopplers, normalized=True)
