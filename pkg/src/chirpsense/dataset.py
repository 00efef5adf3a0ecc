"""Synthetic labeled corpora of noisy LoRa signal blocks.

Every entry is one M-sample block of a single configuration at one SNR,
written as a CIQ1 file and listed in a CSV manifest. Entry seeds derive
from the master seed by counter, so any entry (and any fresh noise
realization of it) can be regenerated without reading the others.
"""

from __future__ import annotations

import csv
import hashlib
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .channel import RNG_ALGORITHM, add_awgn, make_rng
from .config import DEFAULT_FS, LoRaConfig, all_configs
from .features import extract_features
from .framing import DEFAULT_BLOCK_LEN
from .iqfile import IqFormatError, read_iq, write_iq
from .modem import modulate_stream

MANIFEST_FIELDS = ("path", "class_index", "bw_hz", "sf", "snr_db", "seed", "offset")
PAYLOADS = ("upchirp", "random")

# noise streams drawn from an entry seed
_SYMBOL_STREAM = 0
_FILE_NOISE_STREAM = 1
_EVAL_NOISE_STREAM = 2


class DatasetError(RuntimeError):
    pass


def uniform_levels(low: float, high: float, count: int) -> tuple[float, ...]:
    """``count`` evenly spaced SNRs from ``low`` to ``high`` inclusive, rounded to 0.01 dB."""
    if count == 1:
        return (round(float(low), 2),)
    step = (high - low) / (count - 1)
    return tuple(round(low + k * step, 2) for k in range(count))


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for a corpus.

    ``payload`` selects what the chirps carry: ``"upchirp"`` repeats the
    base up-chirp (a preamble), ``"random"`` draws uniform symbols.
    ``random_offset`` starts each block at a uniform sample offset within
    the first symbol instead of on a symbol boundary.
    """

    snr_levels_db: tuple = tuple(range(0, 20, 2))
    files_per_config_per_snr: int = 10
    configs: tuple = field(default_factory=lambda: tuple(all_configs()))
    block_len: int = DEFAULT_BLOCK_LEN
    seed: int = 0
    random_offset: bool = False
    payload: str = "upchirp"
    fs: int = DEFAULT_FS

    def __post_init__(self):
        levels = tuple(float(s) for s in self.snr_levels_db)
        object.__setattr__(self, "snr_levels_db", levels)
        object.__setattr__(self, "configs", tuple(self.configs))
        if not levels:
            raise ValueError("snr_levels_db must be non-empty")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("snr_levels_db must be strictly increasing")
        if self.files_per_config_per_snr <= 0 or self.block_len <= 0:
            raise ValueError("files_per_config_per_snr and block_len must be positive")
        if not self.configs:
            raise ValueError("configs must be non-empty")
        if any(c.fs != self.fs for c in self.configs):
            raise ValueError("every config must share the dataset sampling rate")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.payload not in PAYLOADS:
            raise ValueError(f"payload must be one of {PAYLOADS}, got {self.payload!r}")

    @property
    def n_entries(self) -> int:
        return len(self.snr_levels_db) * len(self.configs) * self.files_per_config_per_snr

    def to_mapping(self) -> dict[str, str]:
        return {
            "snr_levels_db": ",".join(f"{s:g}" for s in self.snr_levels_db),
            "files_per_config_per_snr": str(self.files_per_config_per_snr),
            "configs": ",".join(f"{c.bw}:{c.sf}" for c in self.configs),
            "block_len": str(self.block_len),
            "seed": str(self.seed),
            "random_offset": str(self.random_offset).lower(),
            "payload": self.payload,
            "fs": str(self.fs),
        }

    @classmethod
    def from_mapping(cls, values: dict) -> "DatasetSpec":
        """Build a spec from string key/values (spec files, manifest headers)."""
        values = dict(values)
        base = cls()
        if "preset" in values:
            name = values.pop("preset")
            if name not in PRESETS:
                raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
            base = PRESETS[name]()
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown dataset spec keys: {', '.join(sorted(unknown))}")
        kw = {}
        fs = int(values.get("fs", base.fs))
        for key, raw in values.items():
            raw = str(raw).strip()
            if key == "snr_levels_db":
                kw[key] = tuple(float(v) for v in raw.split(",") if v.strip())
            elif key == "configs":
                pairs = [p.split(":") for p in raw.split(",") if p.strip()]
                kw[key] = tuple(LoRaConfig(int(bw), int(sf), fs) for bw, sf in pairs)
            elif key == "random_offset":
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"random_offset must be a boolean, got {raw!r}")
                kw[key] = raw.lower() in ("true", "1", "yes")
            elif key == "payload":
                kw[key] = raw
            else:
                kw[key] = int(raw)
        if "fs" in kw and "configs" not in kw:
            kw["configs"] = tuple(LoRaConfig(c.bw, c.sf, fs) for c in base.configs)
        return replace(base, **kw)


def full_train_spec(seed: int = 0) -> DatasetSpec:
    """10 SNR levels x 18 configs x 50 files = 9000 entries."""
    return DatasetSpec(tuple(range(0, 20, 2)), 50, seed=seed)


def full_validation_spec(seed: int = 1) -> DatasetSpec:
    """18 SNR levels x 18 configs x 20 files = 6480 entries."""
    return DatasetSpec(uniform_levels(-15, 20, 18), 20, seed=seed)


def desk_train_spec(seed: int = 0) -> DatasetSpec:
    return DatasetSpec(tuple(range(0, 20, 2)), 10, seed=seed)


def desk_validation_spec(seed: int = 1) -> DatasetSpec:
    return DatasetSpec(uniform_levels(-15, 20, 18), 5, seed=seed)


PRESETS = {
    "full-train": full_train_spec,
    "full-validation": full_validation_spec,
    "desk-train": desk_train_spec,
    "desk-validation": desk_validation_spec,
}


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_spec(path) -> DatasetSpec:
    return DatasetSpec.from_mapping(parse_kv_text(Path(path).read_text()))


# --- entries -----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: str
    class_index: int
    bw_hz: int
    sf: int
    snr_db: float
    seed: int
    offset: int

    def config(self, fs: int) -> LoRaConfig:
        return LoRaConfig(self.bw_hz, self.sf, fs)


def derive_seed(*keys) -> int:
    return int(make_rng(*keys).integers(0, 2 ** 63))


@lru_cache(maxsize=64)
def _upchirp_block(cfg: LoRaConfig, offset: int, block_len: int) -> np.ndarray:
    n = -(-(offset + block_len) // cfg.samples_per_symbol)
    block = modulate_stream(cfg, np.zeros(n, dtype=np.int64))[offset:offset + block_len]
    block.flags.writeable = False
    return block


def clean_block(cfg: LoRaConfig, entry_seed: int, block_len: int, random_offset: bool,
                payload: str = "upchirp") -> tuple[np.ndarray, int]:
    """Noiseless block of an entry and its starting offset."""
    offset = clean_block_offset(cfg, entry_seed, random_offset)
    if payload == "upchirp":
        return _upchirp_block(cfg, offset, block_len), offset
    rng = make_rng(entry_seed, _SYMBOL_STREAM, 1)
    n = -(-(offset + block_len) // cfg.samples_per_symbol)
    stream = modulate_stream(cfg, rng.integers(0, cfg.n_levels, n))
    return stream[offset:offset + block_len], offset


def noisy_block(spec: DatasetSpec, entry: ManifestEntry, noise_seed: int) -> np.ndarray:
    """Entry's clean block plus AWGN, quantized to the on-disk complex64."""
    cfg = entry.config(spec.fs)
    block, _ = clean_block(cfg, entry.seed, spec.block_len, spec.random_offset, spec.payload)
    return add_awgn(block, entry.snr_db, noise_seed).astype(np.complex64)


def file_noise_seed(entry: ManifestEntry) -> int:
    return derive_seed(entry.seed, _FILE_NOISE_STREAM)


def eval_noise_seed(entry: ManifestEntry, eval_seed: int, repetition: int) -> int:
    return derive_seed(entry.seed, _EVAL_NOISE_STREAM, eval_seed, repetition)


def plan_entries(spec: DatasetSpec) -> list[ManifestEntry]:
    """Deterministic entry list: configs x SNR levels x files, in that nesting."""
    entries = []
    counter = 0
    for cfg in spec.configs:
        for snr in spec.snr_levels_db:
            for i in range(spec.files_per_config_per_snr):
                seed = derive_seed(spec.seed, counter)
                offset = clean_block_offset(cfg, seed, spec.random_offset)
                path = f"bw{cfg.bw // 1000}k/sf{cfg.sf}/snr{snr:g}/{i}.ciq"
                entries.append(ManifestEntry(path, cfg.class_index, cfg.bw, cfg.sf, snr, seed, offset))
                counter += 1
    return entries


def clean_block_offset(cfg: LoRaConfig, entry_seed: int, random_offset: bool) -> int:
    if not random_offset:
        return 0
    return int(make_rng(entry_seed, _SYMBOL_STREAM).integers(0, cfg.samples_per_symbol))


# --- manifest ----------------------------------------------------------------

@dataclass
class Manifest:
    spec: DatasetSpec
    entries: list[ManifestEntry]
    root: Path = Path(".")
    header: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# generator=chirpsense {__version__}\n")
        buf.write(f"# rng={RNG_ALGORITHM}\n")
        for key, value in self.spec.to_mapping().items():
            buf.write(f"# spec.{key}={value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for e in self.entries:
            writer.writerow([e.path, e.class_index, e.bw_hz, e.sf, f"{e.snr_db:g}", e.seed, e.offset])
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()[:16]

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.class_index for e in self.entries], dtype=np.int64)


def read_manifest(path) -> Manifest:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc}") from None
    header = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    spec_values = {k[5:]: v for k, v in header.items() if k.startswith("spec.")}
    try:
        spec = DatasetSpec.from_mapping(spec_values)
        rows = list(csv.DictReader(body))
        if not body or tuple(next(csv.reader(body[:1]))) != MANIFEST_FIELDS:
            raise ValueError(f"expected columns {','.join(MANIFEST_FIELDS)}")
        entries = [ManifestEntry(r["path"], int(r["class_index"]), int(r["bw_hz"]), int(r["sf"]),
                                 float(r["snr_db"]), int(r["seed"]), int(r["offset"])) for r in rows]
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"malformed manifest {path}: {exc}") from None
    for i, e in enumerate(entries):
        if LoRaConfig(e.bw_hz, e.sf, spec.fs).class_index != e.class_index:
            raise DatasetError(f"{path}: entry {i} ({e.path}) has class_index inconsistent with bw/sf")
    return Manifest(spec, entries, path.parent, header)


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def synthesize(spec: DatasetSpec, out_dir, threads: int = 1) -> Manifest:
    """Write every entry of ``spec`` under ``out_dir`` plus ``manifest.csv``.

    Output is byte-identical for a given spec regardless of ``threads``.
    """
    out_dir = Path(out_dir)
    entries = plan_entries(spec)
    manifest = Manifest(spec, entries, out_dir)

    def write(entry: ManifestEntry) -> None:
        target = out_dir / entry.path
        target.parent.mkdir(parents=True, exist_ok=True)
        write_iq(target, noisy_block(spec, entry, file_noise_seed(entry)), spec.fs)

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _map(write, entries, threads)
        manifest.save(out_dir / "manifest.csv")
    except OSError as exc:
        raise DatasetError(f"cannot write dataset under {out_dir}: {exc}") from None
    return manifest


def load_features(manifest: Manifest, threads: int = 1, chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Read every entry's IQ file and return ``(IF vectors in Hz, class indices)``.

    Rows follow manifest order.
    """
    def read(entry: ManifestEntry) -> np.ndarray:
        path = manifest.resolve(entry)
        try:
            samples, fs = read_iq(path)
        except (OSError, IqFormatError) as exc:
            raise DatasetError(f"entry {entry.path}: {exc}") from None
        if samples.size != manifest.spec.block_len or fs != manifest.spec.fs:
            raise DatasetError(
                f"entry {entry.path}: expected {manifest.spec.block_len} samples at {manifest.spec.fs} Hz, "
                f"found {samples.size} at {fs} Hz")
        return samples

    parts = []
    entries = manifest.entries
    for start in range(0, len(entries), chunk):
        blocks = np.stack(_map(read, entries[start:start + chunk], threads))
        parts.append(extract_features(blocks, fs=manifest.spec.fs))
    if not parts:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    return np.concatenate(parts), manifest.labels
