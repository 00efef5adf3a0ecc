"""``chirpsense`` command line.

Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .channel import make_rng
from .classifier import ModelFormatError, TrainConfig, TrainingError, classify, load_model, save_model, train
from .config import ConfigError, LoRaConfig
from .dataset import PRESETS, DatasetError, DatasetSpec, load_features, load_spec, parse_kv_text, read_manifest, synthesize
from .evaluation import evaluate, export_report, write_predictions
from .features import extract_features
from .iqfile import IqFormatError, read_iq, write_iq
from .jammer import STRATEGIES, JamStrategy, jam_effectiveness, model_block_len, reactive_pipeline, write_ser_csv
from .modem import SymbolError, demodulate_stream

log = logging.getLogger("chirpsense")

RUNTIME_ERRORS = (OSError, DatasetError, ModelFormatError, IqFormatError, TrainingError, SymbolError, ConfigError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _default_seed() -> int:
    raw = os.environ.get("CHIRPSENSE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"CHIRPSENSE_SEED must be an integer, got {raw!r}") from None


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None,
                   help="master random seed (default: $CHIRPSENSE_SEED or 0)")
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads; results do not depend on this (default: all cores)")
    g.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="chirpsense", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", parents=[common], help="synthesize a labeled IQ corpus",
                       description="Synthesize a labeled IQ corpus and its manifest.csv.")
    p.add_argument("--spec", required=True,
                   help=f"key=value dataset spec file, or a preset name ({', '.join(PRESETS)})")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", parents=[common], help="train the classifier on a manifest",
                       description="Train the (BW, SF) classifier on a manifest's IQ files.")
    p.add_argument("--manifest", required=True, help="training manifest.csv")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--epochs", type=int, help="training epochs (default 100)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--batch", type=int, help="mini-batch size (default 32)")
    p.add_argument("--config", help="key=value file with TrainConfig fields; flags override it")

    p = sub.add_parser("eval", parents=[common], help="accuracy vs SNR with 95%% CIs",
                       description="Evaluate a model over repeated noise draws of a manifest.")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True, help="validation manifest.csv")
    p.add_argument("--reps", type=int, default=30, help="repetitions (default 30)")
    p.add_argument("--out", required=True, help="report CSV to write")
    p.add_argument("--dump-predictions", action="store_true",
                   help="also write <out>.predictions.csv with per-entry results of repetition 0")

    p = sub.add_parser("classify", parents=[common], help="infer BW/SF of an IQ capture",
                       description="Classify the first block of a CIQ1 capture.")
    p.add_argument("--model", required=True)
    p.add_argument("--iq", required=True)

    p = sub.add_parser("demod", parents=[common], help="demodulate symbols from an IQ file",
                       description="Dechirp/FFT demodulation of a CIQ1 file at a known config.")
    p.add_argument("--bw", type=int, required=True, help="bandwidth in Hz")
    p.add_argument("--sf", type=int, required=True, help="spreading factor")
    p.add_argument("--iq", required=True)
    p.add_argument("--offset", type=int, default=0, help="first window start in samples")

    p = sub.add_parser("jam-sim", parents=[common], help="simulate the reactive jammer",
                       description="Infer BW/SF from a capture, then measure the symbol error rate "
                                   "the chosen jamming strategy inflicts on a simulated packet of "
                                   "that configuration.")
    p.add_argument("--model", required=True)
    p.add_argument("--iq", required=True, help="observed CIQ1 capture")
    p.add_argument("--strategy", choices=STRATEGIES, default="synchronized_chirps")
    p.add_argument("--gain-db", type=float, default=0.0, help="jammer power relative to the target")
    p.add_argument("--delay", type=int, default=0, help="jammer delay in samples")
    p.add_argument("--snr-db", type=float, default=30.0, help="target SNR at the receiver")
    p.add_argument("--symbols", type=int, default=200, help="simulated target symbols")
    p.add_argument("--out", required=True, help="CSV with one symbol-error row")
    p.add_argument("--write-jam", action="store_true", help="also write the jam waveform to <out>.jam.ciq")
    return parser


def _sibling(out: str, suffix: str) -> Path:
    out = Path(out)
    return out.with_name(out.name + suffix)


def _train_config(args, seed: int) -> TrainConfig:
    values = {}
    if args.config:
        raw = parse_kv_text(Path(args.config).read_text())
        types = {f.name: f.type for f in fields(TrainConfig)}
        unknown = set(raw) - set(types)
        if unknown:
            raise UsageError(f"unknown training config keys: {', '.join(sorted(unknown))}")
        for k, v in raw.items():
            values[k] = int(v) if types[k] in (int, "int") else float(v)
    for flag, key in (("epochs", "epochs"), ("lr", "learning_rate"), ("batch", "batch_size")):
        if getattr(args, flag) is not None:
            values[key] = getattr(args, flag)
    values.setdefault("seed", seed)
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_block(path: str, model) -> tuple[np.ndarray, int]:
    samples, fs = read_iq(path)
    m = model_block_len(model)
    if samples.size < m:
        raise ValueError(f"{path}: {samples.size} samples, need at least one {m}-sample block")
    return samples, fs


def cmd_gen_data(args, seed):
    spec = PRESETS[args.spec]() if args.spec in PRESETS else load_spec(args.spec)
    if args.seed is not None or "CHIRPSENSE_SEED" in os.environ:
        spec = DatasetSpec.from_mapping({**spec.to_mapping(), "seed": str(seed)})
    manifest = synthesize(spec, args.out, threads=args.threads)
    print(f"wrote {len(manifest)} entries to {Path(args.out) / 'manifest.csv'}")


def cmd_train(args, seed):
    cfg = _train_config(args, seed)
    manifest = read_manifest(args.manifest)
    X, y = load_features(manifest, threads=args.threads)
    model, history = train(X, y, cfg, norm_constant=manifest.spec.fs / 2, verbose=args.verbose)
    model.metadata["dataset_digest"] = manifest.digest()
    save_model(model, args.out)
    print(f"final loss {history['loss'][-1]:.4f} accuracy {history['accuracy'][-1]:.4f}; model -> {args.out}")


def cmd_eval(args, seed):
    if args.reps < 2:
        raise UsageError("--reps must be at least 2")
    model = load_model(args.model)
    manifest = read_manifest(args.manifest)
    progress = (lambda i, n: log.info("repetition %d/%d", i, n)) if args.verbose else None
    report = evaluate(model, manifest, args.reps, seed, threads=args.threads,
                      keep_predictions=args.dump_predictions, progress=progress)
    export_report(report, args.out)
    if args.dump_predictions:
        write_predictions(_sibling(args.out, ".predictions.csv"), report.metadata["predictions"])
    overall = [r for r in report.rows if r.group == "overall"]
    for r in overall:
        print(f"snr={r.snr_db:g} accuracy={r.mean:.4f} [{r.ci_low:.4f}, {r.ci_high:.4f}]")


def cmd_classify(args, seed):
    model = load_model(args.model)
    samples, fs = _read_block(args.iq, model)
    features = extract_features(samples[:model_block_len(model)], fs=fs)
    cls, probs = classify(model, features[0])
    cfg = LoRaConfig.from_class_index(cls, fs)
    print(f"class={cls} bw={cfg.bw} sf={cfg.sf} confidence={probs[cls]:.4f}")
    print("probabilities=" + " ".join(f"{p:.4f}" for p in probs))


def cmd_demod(args, seed):
    try:
        cfg = LoRaConfig(args.bw, args.sf)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    samples, fs = read_iq(args.iq)
    cfg = LoRaConfig(args.bw, args.sf, fs)
    print(" ".join(str(s) for s in demodulate_stream(cfg, samples, args.offset)))


def cmd_jam_sim(args, seed):
    model = load_model(args.model)
    samples, fs = _read_block(args.iq, model)
    strategy = JamStrategy(args.strategy, symbol_seed=seed)
    result = reactive_pipeline(samples, model, strategy, n_symbols=args.symbols, fs=fs)
    cfg = result.config
    targets = make_rng(seed, 1).integers(0, cfg.n_levels, args.symbols)
    report = jam_effectiveness(cfg, targets, strategy, args.gain_db, args.delay, args.snr_db, seed)
    write_ser_csv(args.out, [report])
    if args.write_jam:
        write_iq(_sibling(args.out, ".jam.ciq"), result.jam, fs)
    print(f"inferred bw={cfg.bw} sf={cfg.sf} confidence={result.confidence:.4f}; "
          f"{args.strategy} at {args.gain_db:g} dB: SER={report.ser:.4f} ({report.errors}/{report.sent})")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "classify": cmd_classify,
    "demod": cmd_demod,
    "jam-sim": cmd_jam_sim,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        seed = args.seed if args.seed is not None else _default_seed()
        if seed < 0:
            raise UsageError("--seed must be non-negative")
        COMMANDS[args.command](args, seed)
    except UsageError as exc:
        print(f"chirpsense {args.command}: usage error: {exc}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as exc:
        print(f"chirpsense {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
