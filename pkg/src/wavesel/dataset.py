"""Training/test set generation, channel-image encoding and the binary dataset format.

Binary split file layout (little-endian, packed):

    header (16 bytes): magic b"DDLK", version u16, N u16, M u16, reserved u16, count u32
    count records:     image f32[(N+1)*M], snr_db f32, qam u32, label u8,
                       mse_otfs f32, mse_ofdm f32, model_id u8, seed u64
    trailer:           CRC-32 u32 of everything before it
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chanmodels import ModelSpec, ScenarioConfig, derive_seed, draw_pathset
from .channel import PathSet, effective_matrices, inject_estimation_error
from .equalizer import MsePair, evaluate_pair
from .errors import ChecksumError, DatasetFormatError, TruncatedFileError, VersionMismatchError
from .transforms import GridConfig

MAGIC = b"DDLK"
FORMAT_VERSION = 1
ENCODING_VERSION = 1
HEADER = struct.Struct("<4sHHHHI")
CRC = struct.Struct("<I")
DEFAULT_MODEL_NAMES = ("EPA", "EVA", "ETU")

# affine meta-pixel mappings, versioned by ENCODING_VERSION
SNR_PIXEL_RANGE_DB = (-20.0, 30.0)
QAM_PIXEL_SCALE = 10.0


@dataclass(frozen=True, eq=False)
class Sample:
    image: np.ndarray  # float32 (N+1, M)
    snr_db: float
    qam: int
    label: int
    mse_otfs: float
    mse_ofdm: float
    model_name: str
    seed: int

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.image.dtype == other.image.dtype
            and np.array_equal(self.image, other.image)
            and (self.snr_db, self.qam, self.label, self.mse_otfs, self.mse_ofdm, self.model_name, self.seed)
            == (other.snr_db, other.qam, other.label, other.mse_otfs, other.mse_ofdm, other.model_name, other.seed)
        )

    @property
    def rho(self) -> float:
        return 10 ** (self.snr_db / 10)


@dataclass
class DatasetManifest:
    grid: GridConfig
    scenario: dict
    master_seed: int
    train_count: int
    test_count: int
    train_index_range: tuple
    test_index_range: tuple
    model_names: tuple = DEFAULT_MODEL_NAMES
    format_version: int = FORMAT_VERSION
    encoding_version: int = ENCODING_VERSION
    files: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "format_version": self.format_version,
            "encoding_version": self.encoding_version,
            "encoding": {
                "magnitude": "abs(H_hat) / max(abs(H_hat))",
                "snr_pixel": "(snr_db + 20) / 50",
                "qam_pixel": "log2(m) / 10",
            },
            "grid": {"N": g.N, "M": g.M, "T0": g.T0, "F0": g.F0, "fc": g.fc, "B": g.B},
            "scenario": self.scenario,
            "master_seed": self.master_seed,
            "seed_scheme": "seed_i = SeedSequence([master_seed, i]) first u64 word",
            "train": {"count": self.train_count, "index_range": list(self.train_index_range)},
            "test": {"count": self.test_count, "index_range": list(self.test_index_range)},
            "model_names": list(self.model_names),
            "files": self.files,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if d.get("format_version") != FORMAT_VERSION:
            raise VersionMismatchError(f"manifest format {d.get('format_version')} != {FORMAT_VERSION}")
        g = d["grid"]
        return cls(
            grid=GridConfig(N=g["N"], M=g["M"], T0=g["T0"], F0=g["F0"], fc=g["fc"], B=g["B"]),
            scenario=d["scenario"],
            master_seed=d["master_seed"],
            train_count=d["train"]["count"],
            test_count=d["test"]["count"],
            train_index_range=tuple(d["train"]["index_range"]),
            test_index_range=tuple(d["test"]["index_range"]),
            model_names=tuple(d["model_names"]),
            format_version=d["format_version"],
            encoding_version=d["encoding_version"],
            files=d.get("files", {}),
        )


def snr_pixel(snr_db: float) -> float:
    lo, hi = SNR_PIXEL_RANGE_DB
    return min(max((snr_db - lo) / (hi - lo), 0.0), 1.0)


def qam_pixel(m: int) -> float:
    return min(max(math.log2(m) / QAM_PIXEL_SCALE, 0.0), 1.0)


def encode_image(H_hat: np.ndarray, snr_db: float, m: int) -> np.ndarray:
    """(N+1) x M float32 image: normalized |H_hat| rows plus one meta row."""
    H_hat = np.asarray(H_hat)
    N, M = H_hat.shape
    if M < 2:
        raise ValueError("need at least two columns for the meta pixels")
    img = np.zeros((N + 1, M), dtype=np.float32)
    mag = np.abs(H_hat)
    peak = mag.max()
    if peak > 0:
        img[:N] = mag / peak
    img[N, 0] = snr_pixel(snr_db)
    img[N, 1] = qam_pixel(m)
    return img


def label_sample(mse_otfs: float, mse_ofdm: float) -> int:
    """0 = OTFS, 1 = OFDM; ties go to OFDM."""
    if math.isnan(mse_otfs) or math.isnan(mse_ofdm):
        raise ValueError("MSE must not be NaN")
    if mse_otfs < 0 or mse_ofdm < 0:
        raise ValueError("MSE must be >= 0")
    return 0 if mse_otfs < mse_ofdm else 1


@dataclass(frozen=True, eq=False)
class IntervalDraw:
    """Everything drawn for one coherence interval from its seed."""

    seed: int
    spec: ModelSpec
    speed_kmh: float
    snr_db: float
    qam: int
    paths: PathSet
    rng: np.random.Generator  # positioned for the estimation-error draw


def draw_interval(scenario: ScenarioConfig, seed: int) -> IntervalDraw:
    rng = np.random.default_rng(seed)
    model_idx = int(rng.integers(len(scenario.models)))
    speed = float(scenario.speeds_kmh[int(rng.integers(len(scenario.speeds_kmh)))])
    snr_db = float(scenario.snr_set_db[int(rng.integers(len(scenario.snr_set_db)))])
    qam = int(scenario.qam_set[int(rng.integers(len(scenario.qam_set)))])
    spec = scenario.model_spec(model_idx, speed)
    paths = draw_pathset(spec, rng)
    return IntervalDraw(seed, spec, speed, snr_db, qam, paths, rng)


def observe_interval(scenario: ScenarioConfig, seed: int) -> tuple[Sample, MsePair]:
    """Run one interval: true-channel MSE pair, estimated channel, encoded sample."""
    d = draw_interval(scenario, seed)
    rho = 10 ** (d.snr_db / 10)
    eff = effective_matrices(d.paths, scenario.grid)
    pair = evaluate_pair(eff, rho, d.qam)
    H_hat = inject_estimation_error(eff.H_tf_grid, rho, d.rng)
    mse_otfs = float(np.float32(pair.otfs))
    mse_ofdm = float(np.float32(pair.ofdm))
    sample = Sample(
        image=encode_image(H_hat, d.snr_db, d.qam),
        snr_db=float(np.float32(d.snr_db)),
        qam=d.qam,
        # labels follow the stored (float32) values so they are reproducible from the file
        label=label_sample(mse_otfs, mse_ofdm),
        mse_otfs=mse_otfs,
        mse_ofdm=mse_ofdm,
        model_name=d.spec.name,
        seed=seed,
    )
    return sample, pair


def _sample_at(args):
    scenario, master_seed, i = args
    return observe_interval(scenario, derive_seed(master_seed, i))[0]


def generate_dataset(
    scenario: ScenarioConfig,
    p: int,
    master_seed: int,
    start_index: int = 0,
    workers: int = 1,
    progress=None,
) -> list[Sample]:
    """Samples for indices ``start_index .. start_index + p - 1``; deterministic in master_seed."""
    if p < 1:
        raise ValueError("p must be >= 1")
    jobs = [(scenario, master_seed, i) for i in range(start_index, start_index + p)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            it = ex.map(_sample_at, jobs, chunksize=8)
            out = list(it if progress is None else progress(it, total=p))
    else:
        it = map(_sample_at, jobs)
        out = list(it if progress is None else progress(it, total=p))
    return out


def generate_split(scenario: ScenarioConfig, p: int, q: int, master_seed: int, **kw):
    """Train indices [0, p) and test indices [p, p+q) under one master seed."""
    train = generate_dataset(scenario, p, master_seed, start_index=0, **kw)
    test = generate_dataset(scenario, q, master_seed, start_index=p, **kw)
    manifest = DatasetManifest(
        grid=scenario.grid,
        scenario=scenario.to_dict(),
        master_seed=int(master_seed),
        train_count=p,
        test_count=q,
        train_index_range=(0, p),
        test_index_range=(p, p + q),
        model_names=_model_names(scenario),
    )
    return train, test, manifest


def _model_names(scenario: ScenarioConfig) -> tuple:
    names = list(DEFAULT_MODEL_NAMES)
    for m in scenario.models:
        name = m if isinstance(m, str) else m.name
        if name not in names:
            names.append(name)
    return tuple(names)


def record_dtype(N: int, M: int) -> np.dtype:
    return np.dtype(
        [
            ("image", "<f4", ((N + 1) * M,)),
            ("snr_db", "<f4"),
            ("qam", "<u4"),
            ("label", "u1"),
            ("mse_otfs", "<f4"),
            ("mse_ofdm", "<f4"),
            ("model_id", "u1"),
            ("seed", "<u8"),
        ]
    )


def encode_split(samples, N: int, M: int, model_names=DEFAULT_MODEL_NAMES) -> bytes:
    dt = record_dtype(N, M)
    rec = np.zeros(len(samples), dtype=dt)
    ids = {name: i for i, name in enumerate(model_names)}
    for i, s in enumerate(samples):
        if s.image.shape != (N + 1, M):
            raise ValueError(f"sample {i} image shape {s.image.shape} != {(N + 1, M)}")
        rec[i] = (s.image.reshape(-1), s.snr_db, s.qam, s.label, s.mse_otfs, s.mse_ofdm, ids[s.model_name], s.seed)
    body = HEADER.pack(MAGIC, FORMAT_VERSION, N, M, 0, len(samples)) + rec.tobytes()
    return body + CRC.pack(zlib.crc32(body))


def read_header(buf: bytes) -> tuple[int, int, int]:
    if len(buf) < HEADER.size:
        raise TruncatedFileError("file shorter than the header")
    magic, version, N, M, _, count = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"file format version {version} != {FORMAT_VERSION}")
    return N, M, count


def decode_split(buf: bytes, model_names=DEFAULT_MODEL_NAMES) -> list[Sample]:
    N, M, count = read_header(buf)
    dt = record_dtype(N, M)
    expected = HEADER.size + count * dt.itemsize + CRC.size
    if len(buf) < expected:
        raise TruncatedFileError(f"expected {expected} bytes, got {len(buf)}")
    if len(buf) > expected:
        raise DatasetFormatError(f"{len(buf) - expected} trailing bytes")
    (crc,) = CRC.unpack_from(buf, expected - CRC.size)
    if zlib.crc32(buf[: expected - CRC.size]) != crc:
        raise ChecksumError("CRC-32 mismatch")
    rec = np.frombuffer(buf, dtype=dt, count=count, offset=HEADER.size)
    return [
        Sample(
            image=r["image"].reshape(N + 1, M).copy(),
            snr_db=float(r["snr_db"]),
            qam=int(r["qam"]),
            label=int(r["label"]),
            mse_otfs=float(r["mse_otfs"]),
            mse_ofdm=float(r["mse_ofdm"]),
            model_name=model_names[int(r["model_id"])],
            seed=int(r["seed"]),
        )
        for r in rec
    ]


def write_split(path, samples, N: int, M: int, model_names=DEFAULT_MODEL_NAMES) -> int:
    data = encode_split(samples, N, M, model_names)
    Path(path).write_bytes(data)
    return zlib.crc32(data)


def read_split(path, model_names=DEFAULT_MODEL_NAMES) -> list[Sample]:
    return decode_split(Path(path).read_bytes(), model_names)


def _dump_manifest(manifest: DatasetManifest) -> str:
    return json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"


def save_dataset(path, train, test, manifest: DatasetManifest) -> Path:
    """Write ``manifest.json``, ``train.bin`` and ``test.bin`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    N, M = manifest.grid.N, manifest.grid.M
    files = {}
    for name, samples in (("train", train), ("test", test)):
        crc = write_split(path / f"{name}.bin", samples, N, M, manifest.model_names)
        files[name] = {"path": f"{name}.bin", "crc32": crc}
    manifest.files = files
    manifest.train_count, manifest.test_count = len(train), len(test)
    (path / "manifest.json").write_text(_dump_manifest(manifest))
    return path


def read_manifest(path) -> DatasetManifest:
    """Manifest only; no tensors are read."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    return DatasetManifest.from_dict(json.loads(path.read_text()))


def load_dataset(path):
    """Return ``(manifest, train, test)``; raises on version, truncation or CRC problems."""
    path = Path(path)
    manifest = read_manifest(path)
    splits = []
    for name in ("train", "test"):
        samples = read_split(path / f"{name}.bin", manifest.model_names)
        header_n, header_m = samples[0].image.shape if samples else (manifest.grid.N + 1, manifest.grid.M)
        if (header_n - 1, header_m) != (manifest.grid.N, manifest.grid.M):
            raise DatasetFormatError(f"{name}.bin grid does not match the manifest")
        splits.append(samples)
    return manifest, splits[0], splits[1]


def scenario_from_manifest(manifest: DatasetManifest) -> ScenarioConfig:
    sc = manifest.scenario
    models = tuple(m if isinstance(m, str) else ModelSpec.from_dict(m, fc=manifest.grid.fc) for m in sc["models"])
    return ScenarioConfig(
        grid=manifest.grid,
        models=models,
        speeds_kmh=tuple(sc["speeds_kmh"]),
        snr_set_db=tuple(sc["snr_set_db"]),
        qam_set=tuple(sc["qam_set"]),
    )
