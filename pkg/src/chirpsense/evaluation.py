"""Accuracy-vs-SNR curves with 95% confidence intervals over repetitions.

Each repetition draws fresh AWGN for every manifest entry (the clean
signal is regenerated from the entry seed), classifies the whole set and
records accuracy per (group, SNR). Groups are ``overall``, ``sf=<n>`` and
``bw=<hz>``.
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifier import MlpModel, TrainConfig, encode_model, train
from .classifier import predict_proba as mlp_predict_proba
from .config import BANDWIDTHS, SPREADING_FACTORS
from .dataset import Manifest, eval_noise_seed, noisy_block
from .features import extract_features

Z_95 = 1.96
REPORT_FIELDS = ("group", "snr_db", "mean", "ci_low", "ci_high", "n")


@dataclass(frozen=True)
class ReportRow:
    group: str
    snr_db: float
    mean: float
    ci_low: float
    ci_high: float
    n: int


def _group_key(group: str):
    kind, _, value = group.partition("=")
    order = {"overall": 0, "sf": 1, "bw": 2}
    return (order.get(kind, 3), float(value) if value else 0.0, group)


@dataclass
class EvalReport:
    rows: list[ReportRow]
    metadata: dict = field(default_factory=dict)
    # per-repetition accuracies keyed by (group, snr_db); not serialized
    trials: dict = field(default_factory=dict)

    def row(self, group: str, snr_db: float) -> ReportRow:
        for r in self.rows:
            if r.group == group and np.isclose(r.snr_db, snr_db):
                return r
        raise KeyError((group, snr_db))

    @property
    def groups(self) -> list[str]:
        return sorted({r.group for r in self.rows}, key=_group_key)

    @property
    def snr_levels(self) -> list[float]:
        return sorted({r.snr_db for r in self.rows})

    def accuracy(self, group: str) -> np.ndarray:
        """Mean accuracy of ``group`` at each SNR level, ascending SNR."""
        return np.array([self.row(group, s).mean for s in self.snr_levels])


def confidence_interval(samples) -> tuple[float, float, float]:
    """Mean and normal-approximation 95% interval clipped to [0, 1]."""
    samples = np.asarray(samples, dtype=float)
    mean = float(samples.mean())
    half = Z_95 * float(samples.std(ddof=1)) / np.sqrt(samples.size) if samples.size > 1 else 0.0
    return mean, max(0.0, mean - half), min(1.0, mean + half)


def _predictor(model):
    if isinstance(model, MlpModel):
        return lambda X: mlp_predict_proba(model, X)
    if hasattr(model, "predict_proba"):
        return model.predict_proba
    raise TypeError(f"cannot classify with {type(model).__name__}; need an MlpModel or predict_proba()")


def _digest_model(model) -> str:
    if isinstance(model, MlpModel):
        return hashlib.sha256(encode_model(model)).hexdigest()[:16]
    return type(model).__name__


def _group_masks(manifest: Manifest) -> dict[str, np.ndarray]:
    sf = np.array([e.sf for e in manifest.entries])
    bw = np.array([e.bw_hz for e in manifest.entries])
    masks = {"overall": np.ones(len(sf), dtype=bool)}
    for k in SPREADING_FACTORS:
        if np.any(sf == k):
            masks[f"sf={k}"] = sf == k
    for b in BANDWIDTHS:
        if np.any(bw == b):
            masks[f"bw={b}"] = bw == b
    return masks


def repetition_features(manifest: Manifest, seed: int, repetition: int, threads: int = 1,
                        chunk: int = 64) -> np.ndarray:
    """IF vectors of every entry under the noise draw of one repetition."""
    spec = manifest.spec
    entries = manifest.entries

    def block(entry):
        return noisy_block(spec, entry, eval_noise_seed(entry, seed, repetition))

    out = []
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for start in range(0, len(entries), chunk):
            part = entries[start:start + chunk]
            blocks = list(pool.map(block, part)) if pool else [block(e) for e in part]
            out.append(extract_features(np.stack(blocks), fs=spec.fs))
    finally:
        if pool:
            pool.shutdown()
    return np.concatenate(out) if out else np.zeros((0, 0))


def evaluate(model, manifest: Manifest, repetitions: int = 30, seed: int = 0, threads: int = 1,
             retrain_data=None, train_config: TrainConfig | None = None, keep_predictions: bool = False,
             progress=None) -> EvalReport:
    """Classify ``manifest`` under ``repetitions`` fresh noise draws.

    Parameters
    ----------
    model : MlpModel or estimator with ``predict_proba``
        Fixed classifier shared by all repetitions.
    retrain_data : (features, labels), optional
        When given, a new model is trained for every repetition (seed
        ``train_config.seed + repetition``) instead of reusing ``model``.
    keep_predictions : bool
        Store the first repetition's per-entry predictions in
        ``report.metadata["predictions"]``.
    """
    if repetitions < 2:
        raise ValueError("need at least 2 repetitions for a confidence interval")
    if model is None and retrain_data is None:
        raise ValueError("evaluate needs a model or retrain data")
    if len(manifest) == 0:
        raise ValueError("manifest has no entries")

    labels = manifest.labels
    snrs = np.array([e.snr_db for e in manifest.entries])
    masks = _group_masks(manifest)
    levels = sorted(set(snrs.tolist()))
    trials = {(g, s): [] for g in masks for s in levels}
    predictions = None

    for rep in range(repetitions):
        current = model
        if retrain_data is not None:
            cfg = train_config or TrainConfig()
            cfg = TrainConfig(**{**cfg.__dict__, "seed": cfg.seed + rep})
            current, _ = train(retrain_data[0], retrain_data[1], cfg)
        probs = _predictor(current)(repetition_features(manifest, seed, rep, threads))
        predicted = np.argmax(probs, axis=1)
        correct = predicted == labels
        for g, mask in masks.items():
            for s in levels:
                cell = mask & (snrs == s)
                trials[(g, s)].append(float(correct[cell].mean()))
        if keep_predictions and rep == 0:
            predictions = [(e.path, int(t), int(p), float(pr.max()))
                           for e, t, p, pr in zip(manifest.entries, labels, predicted, probs)]
        if progress:
            progress(rep + 1, repetitions)

    rows = []
    for (g, s), acc in trials.items():
        mean, lo, hi = confidence_interval(acc)
        rows.append(ReportRow(g, s, mean, lo, hi, repetitions))
    rows.sort(key=lambda r: (_group_key(r.group), r.snr_db))
    metadata = {
        "model_digest": _digest_model(model) if model is not None else "retrained",
        "dataset_digest": manifest.digest(),
        "repetitions": repetitions,
        "seed": seed,
    }
    if predictions is not None:
        metadata["predictions"] = predictions
    return EvalReport(rows, metadata, {k: np.array(v) for k, v in trials.items()})


def group_curves(report: EvalReport, group_by: str) -> dict[str, list[ReportRow]]:
    """Curves of one family (``"sf"`` or ``"bw"``), each sorted by SNR."""
    if group_by not in ("sf", "bw", "overall"):
        raise ValueError(f"group_by must be 'sf', 'bw' or 'overall', got {group_by!r}")
    curves: dict[str, list[ReportRow]] = {}
    for r in report.rows:
        if r.group == group_by or r.group.startswith(group_by + "="):
            curves.setdefault(r.group, []).append(r)
    for rows in curves.values():
        rows.sort(key=lambda r: r.snr_db)
    return dict(sorted(curves.items(), key=lambda kv: _group_key(kv[0])))


def export_report(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        for r in report.rows:
            writer.writerow([r.group, f"{r.snr_db:.6f}", f"{r.mean:.6f}", f"{r.ci_low:.6f}",
                             f"{r.ci_high:.6f}", r.n])


def read_report(path) -> EvalReport:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != REPORT_FIELDS:
            raise ValueError(f"{path}: expected columns {','.join(REPORT_FIELDS)}")
        rows = [ReportRow(g, float(s), float(m), float(lo), float(hi), int(n))
                for g, s, m, lo, hi, n in reader]
    return EvalReport(rows)


def write_predictions(path, predictions) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("path", "true_class", "predicted_class", "max_probability"))
        for p, t, c, pr in predictions:
            writer.writerow((p, t, c, f"{pr:.6f}"))
