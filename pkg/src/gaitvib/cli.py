"""Command-line entry point: simulate, train, assess, export-features, benchmark."""

from __future__ import annotations

import argparse
import csv
import enum
import json
import re
import sys
from dataclasses import fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .analysis import (CHANNEL_MODES, analyze_recording, event_features, event_segment,
                       match_labels)
from .dynamics.beam import BeamModel
from .dynamics.dataset import (ABNORMALITIES, GaitSequenceSpec, read_labels_csv,
                               synth_gait_dataset, write_labels_csv)
from .dynamics.forces import CONTACT_ORDER, DEFAULT_TEMPLATES, ContactType, TemplateParams
from .evalharness import (AnalyzedWalk, BenchmarkConfig, BenchmarkResult, Walk, analyze_walks,
                          evaluate, fit_models, leave_one_walker_out, noise_sweep,
                          select_basis, walker_matrix, write_benchmark_csvs, write_sweep_csv)
from .features import power_spectrum, write_features_csv
from .learning import ModelBundle, PlattFitError, TrainingError, assess_gait
from .pipeline import PipelineConfig, write_events_csv
from .signal import ConfigurationError, ValidationError, read_signal_csv, write_signal_csv

EXIT_ERROR = 2
SIGNAL_FILE = "signal.csv"
LABELS_FILE = "labels.csv"

# -- configuration ---------------------------------------------------------------

_DATACLASS_SECTIONS = {"beam": BeamModel, "gait": GaitSequenceSpec, "pipeline": PipelineConfig}
_SKIP = {"beam": {"_freqs"}, "gait": {"template_overrides", "noise_snr_db", "random_seed"}, "pipeline": set()}
_BENCHMARK_KEYS = ("walkers", "abnormal_walkers", "body_weight_range", "cadence_range",
                   "duration_jitter", "peak_jitter", "steps_per_walk", "asymmetric_durations",
                   "snr_db", "match_tolerance")


def _plain(value):
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def default_config() -> dict:
    """Every configurable key with its default value."""
    cfg = {"seed": 0}
    for name, cls in _DATACLASS_SECTIONS.items():
        cfg[name] = {f.name: _plain(f.default) for f in fields(cls)
                     if f.init and f.name not in _SKIP[name]}
    cfg["gait"]["noise_snr_db"] = None
    cfg["templates"] = {c.value: {f.name: _plain(getattr(DEFAULT_TEMPLATES[c], f.name))
                                  for f in fields(TemplateParams)} for c in CONTACT_ORDER}
    cfg["features"] = {"k_per_type": 6, "half_bandwidth": 3.0, "channels": "nearest"}
    cfg["learning"] = {"C": 10.0, "gamma": None, "folds": 3}
    bench = BenchmarkConfig.__dataclass_fields__
    cfg["benchmark"] = {k: _plain(bench[k].default) for k in _BENCHMARK_KEYS}
    cfg["benchmark"]["noise_sweep"] = []
    cfg["simulate"] = {"suite": False}
    return cfg


def _parse_value(text: str):
    if text.strip().lower() in ("none", "null"):
        return None
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text.strip()


def _set_key(cfg: dict, path: str, value) -> None:
    parts = path.split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigurationError(f"unknown config key '{path}'")
        node = node[part]
    leaf = parts[-1]
    if leaf not in node or isinstance(node[leaf], dict):
        raise ConfigurationError(f"unknown config key '{path}'")
    node[leaf] = value


def _flatten(d: dict, prefix: str = ""):
    for key, value in d.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, path + ".")
        else:
            yield path, value


def resolve_config(path=None, overrides=(), seed=None) -> dict:
    """Defaults, then the config file, then ``--set`` pairs, then ``--seed``."""
    cfg = default_config()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            loaded = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"config {path}: {exc}") from None
        for key, value in _flatten(loaded):
            _set_key(cfg, key, None if value == "none" else value)
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects key=value, got '{item}'")
        _set_key(cfg, key.strip(), _parse_value(text))
    if seed is not None:
        cfg["seed"] = seed
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigurationError("seed must be a non-negative integer")
    return cfg


def _typed(cls, section: dict) -> dict:
    out = {}
    defaults = {f.name: f.default for f in fields(cls)}
    for key, value in section.items():
        if isinstance(defaults.get(key), tuple) and isinstance(value, list):
            value = tuple(value)
        out[key] = value
    return out


def _build(cls, cfg: dict, name: str, **extra):
    kwargs = _typed(cls, cfg[name])
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{name}: {exc}") from None


def beam_from(cfg):
    return _build(BeamModel, cfg, "beam")


def pipeline_from(cfg):
    return _build(PipelineConfig, cfg, "pipeline")


def gait_from(cfg, seed=None):
    overrides = {}
    for ctype, params in cfg["templates"].items():
        defaults = DEFAULT_TEMPLATES[ContactType.parse(ctype)]
        base = {f.name: _plain(getattr(defaults, f.name)) for f in fields(TemplateParams)}
        changed = {k: tuple(v) if isinstance(v, list) else v
                   for k, v in params.items() if v != base[k]}
        if changed:
            overrides[ctype] = changed
    return _build(GaitSequenceSpec, cfg, "gait", template_overrides=overrides,
                  noise_snr_db=cfg["gait"]["noise_snr_db"],
                  random_seed=cfg["seed"] if seed is None else seed)


def benchmark_from(cfg) -> BenchmarkConfig:
    feats, learn = cfg["features"], cfg["learning"]
    if feats["channels"] not in CHANNEL_MODES:
        raise ConfigurationError(f"features.channels must be one of {list(CHANNEL_MODES)}")
    if not isinstance(learn["folds"], int) or learn["folds"] < 2:
        raise ConfigurationError("learning.folds must be an integer >= 2")
    if not learn["C"] > 0:
        raise ConfigurationError("learning.C must be > 0")
    if learn["gamma"] is not None and not learn["gamma"] > 0:
        raise ConfigurationError("learning.gamma must be > 0")
    bench = _typed(BenchmarkConfig, {k: cfg["benchmark"][k] for k in _BENCHMARK_KEYS})
    try:
        return BenchmarkConfig(**bench, seed=cfg["seed"], C=float(learn["C"]),
                               gamma=learn["gamma"], k_per_type=feats["k_per_type"],
                               half_bandwidth=float(feats["half_bandwidth"]),
                               channels=feats["channels"], beam=beam_from(cfg),
                               pipeline=pipeline_from(cfg))
    except TypeError as exc:
        raise ConfigurationError(f"benchmark: {exc}") from None


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _finish(out: Path, cfg: dict, command: str) -> None:
    """Echo the resolved config; the timestamp lives only in metadata.json."""
    (out / "resolved_config.json").write_text(_json(cfg))
    meta = {"command": command, "version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    (out / "metadata.json").write_text(_json(meta))


# -- recordings on disk ----------------------------------------------------------

def find_recordings(root) -> list:
    """Directories under ``root`` (itself included) holding a signal file."""
    root = Path(root)
    if root.is_file():
        return [root.parent]
    if not root.is_dir():
        raise ValidationError(f"no such file or directory: {root}")
    found = sorted({p.parent for p in root.rglob(SIGNAL_FILE)})
    if not found:
        raise ValidationError(f"no {SIGNAL_FILE} found under {root}")
    return found


def _group_of(directory: Path, index: int) -> int:
    m = re.match(r"walker_(\d+)_", directory.name)
    return int(m.group(1)) if m else index


def load_labelled(root, cfg) -> list:
    """Analysed recordings with labels, as harness walks grouped by walker."""
    pipeline = pipeline_from(cfg)
    walks = []
    for k, d in enumerate(find_recordings(root)):
        labels_path = d / LABELS_FILE
        if not labels_path.exists():
            raise ValidationError(f"{d}: missing {LABELS_FILE}")
        signal = read_signal_csv(d / SIGNAL_FILE)
        labels = read_labels_csv(labels_path)
        res = analyze_recording(signal, pipeline)
        walks.append(AnalyzedWalk(Walk(_group_of(d, k), d.name, None), res, labels,
                                  match_labels(res.events, labels,
                                               cfg["benchmark"]["match_tolerance"])))
    return walks


def _check_coverage(walks) -> None:
    types = {lab.contact_type for aw in walks for _, lab in aw.pairs}
    for c in CONTACT_ORDER:
        if c not in types:
            raise TrainingError(f"training data lack contact type {c.value}")
    tags = {t for aw in walks for _, lab in aw.pairs for t in lab.abnormality_tags}
    for name in ABNORMALITIES:
        if name not in tags:
            raise TrainingError(f"training data lack abnormality class {name}")
    if not any(not lab.abnormality_tags for aw in walks for _, lab in aw.pairs):
        raise TrainingError("training data lack normal footsteps")


# -- commands --------------------------------------------------------------------

def cmd_simulate(cfg: dict, out: Path) -> None:
    beam = beam_from(cfg)
    if cfg["simulate"]["suite"]:
        for walk in walker_matrix(benchmark_from(cfg)):
            d = out / f"walker_{walk.walker:02d}_{walk.kind}"
            d.mkdir(parents=True, exist_ok=True)
            signal, labels = synth_gait_dataset(beam, walk.spec)
            write_signal_csv(signal, d / SIGNAL_FILE)
            write_labels_csv(labels, d / LABELS_FILE)
    else:
        signal, labels = synth_gait_dataset(beam, gait_from(cfg))
        write_signal_csv(signal, out / SIGNAL_FILE)
        write_labels_csv(labels, out / LABELS_FILE)
    _finish(out, cfg, "simulate")


def _cv_folds(walks, folds: int) -> list:
    groups = sorted({aw.walk.walker for aw in walks})
    return [[g for i, g in enumerate(groups) if i % folds == f] for f in range(folds)]


def train_metrics(walks, bench: BenchmarkConfig, folds: int) -> BenchmarkResult:
    """Cross-validated metrics with whole walkers (or recordings) held out."""
    outcomes, medians = [], []
    missed = fp = 0
    for held in _cv_folds(walks, folds):
        if not held:
            continue
        train = [aw for aw in walks if aw.walk.walker not in held]
        test = [aw for aw in walks if aw.walk.walker in held]
        o, m, mi, f = evaluate(train, test, bench)
        outcomes += o
        medians += m
        missed += mi
        fp += f
    return BenchmarkResult(outcomes, medians, missed, fp)


def _r(x):
    return None if x is None or np.isnan(x) else float(x)


def cmd_train(cfg: dict, out: Path, data) -> None:
    bench = benchmark_from(cfg)
    walks = load_labelled(data, cfg)
    _check_coverage(walks)
    rates = {aw.analysis.clean.sample_rate for aw in walks}
    if len(rates) != 1:
        raise ValidationError("training recordings mix sample rates")
    echo = {"sample_rate": rates.pop(), "pipeline": cfg["pipeline"],
            "features": cfg["features"], "learning": cfg["learning"], "seed": cfg["seed"]}
    bundle = fit_models(walks, bench)
    bundle = replace(bundle, config_echo=echo)
    bundle.save(out / "model.json")

    res = train_metrics(walks, bench, cfg["learning"]["folds"])
    report = {
        "cross_validation_folds": cfg["learning"]["folds"],
        "events": len(res.outcomes), "missed": res.missed,
        "false_positives": res.false_positives,
        "contact_type_accuracy": _r(res.contact_type_accuracy()),
        "per_class_accuracy": {
            c.value: _r(np.mean([o.predicted_type is c for o in res.outcomes
                                 if o.true_type is c and o.predicted_type is not None]))
            if any(o.true_type is c and o.predicted_type is not None for o in res.outcomes)
            else None for c in CONTACT_ORDER},
        "abnormality_accuracy": {n: _r(res.abnormality_accuracy(n)) for n in ABNORMALITIES},
        "duration_mae_fraction": _r(res.duration_mae()),
        "frequency_basis": list(bundle.basis.frequencies),
        "basis_warning": bundle.basis.warning,
    }
    (out / "metrics.json").write_text(_json(report))
    with (out / "confusion.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["true\\predicted", *(c.value for c in CONTACT_ORDER), "missed"])
        for c in CONTACT_ORDER:
            rows = [o for o in res.outcomes if o.true_type is c]
            wr.writerow([c.value, *(sum(o.predicted_type is p for o in rows)
                                    for p in CONTACT_ORDER),
                         sum(o.predicted_type is None for o in rows)])
    _finish(out, cfg, "train")


def cmd_assess(cfg: dict, out: Path, model, recording) -> None:
    try:
        bundle = ModelBundle.load(model)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot load model bundle {model}: {exc}") from None
    signal = read_signal_csv(recording)
    trained_rate = bundle.config_echo.get("sample_rate")
    if trained_rate is not None and float(trained_rate) != signal.sample_rate:
        raise ValidationError(f"recording sample rate {signal.sample_rate:g} Hz differs "
                              f"from the model's {float(trained_rate):g} Hz")
    channels = cfg["features"]["channels"]
    res = analyze_recording(signal, pipeline_from(cfg), bundle.basis, channels)
    events = [e for e in res.events if e.features is not None]
    assessment = assess_gait([e.features for e in events], [e.duration for e in events],
                             bundle)
    events = [replace(e, contact_type=a.contact_type, probabilities=a.probabilities)
              for e, a in zip(events, assessment.events)]
    doc = assessment.to_dict()
    for row, ev in zip(doc["events"], events):
        row["t_contact_s"] = ev.timing.initial_contact
        row["t_off_s"] = ev.timing.foot_off
        row["channel"] = ev.channel
    (out / "assessment.json").write_text(_json(doc))
    write_events_csv(events, out / "events.csv")
    with (out / "spectra.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["event_index", "frequency_hz", "amplitude"])
        for ev in events:
            seg = event_segment(res.clean, ev, channels)
            spec = power_spectrum(seg)
            amp = spec.amplitude.mean(axis=0)
            keep = spec.frequencies <= cfg["pipeline"]["f_max"]
            for f, a in zip(spec.frequencies[keep], amp[keep]):
                wr.writerow([ev.event_index, repr(float(f)), repr(float(a))])
    _finish(out, cfg, "assess")


def cmd_export_features(cfg: dict, out: Path, data, model=None) -> None:
    bench = benchmark_from(cfg)
    walks = load_labelled(data, cfg)
    if model is not None:
        basis = ModelBundle.load(model).basis
    else:
        basis = select_basis(walks, bench)
    channels = bench.channels
    rows = []
    n_channels = 1
    for aw in walks:
        if channels == "concatenate":
            n_channels = aw.analysis.clean.n_channels
        for ev, lab in aw.pairs:
            vec = event_features(aw.analysis.clean, ev, basis, channels)
            rows.append((len(rows), lab.contact_type, lab.foot, vec))
    write_features_csv(rows, basis, out / "features.csv", n_channels)
    (out / "frequency_basis.json").write_text(_json(basis.to_dict()))
    _finish(out, cfg, "export-features")


def cmd_benchmark(cfg: dict, out: Path) -> None:
    bench = benchmark_from(cfg)
    walks = analyze_walks(bench)
    result = leave_one_walker_out(walks, bench)
    write_benchmark_csvs(result, bench, out)
    sweep = cfg["benchmark"]["noise_sweep"]
    if sweep:
        write_sweep_csv(noise_sweep(bench, tuple(float(s) for s in sweep), walks),
                        out / "noise_sweep.csv")
    _finish(out, cfg, "benchmark")


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    p = argparse.ArgumentParser(prog="gaitvib", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a walk (or the walker suite)")
    tr = sub.add_parser("train", parents=[common], help="train a model bundle")
    tr.add_argument("data", help="directory of recordings with labels")
    a = sub.add_parser("assess", parents=[common], help="assess one recording")
    a.add_argument("model", help="model bundle JSON")
    a.add_argument("recording", help="signal CSV")
    ex = sub.add_parser("export-features", parents=[common], help="write feature CSV")
    ex.add_argument("data", help="directory of recordings with labels")
    ex.add_argument("--model", help="take the frequency basis from this bundle")
    sub.add_parser("benchmark", parents=[common], help="leave-one-walker-out benchmark")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_ERROR
    try:
        cfg = resolve_config(args.config, args.set, args.seed)
        # build every section once so a bad value fails before any work
        beam_from(cfg)
        pipeline_from(cfg)
        gait_from(cfg)
        benchmark_from(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(cfg, out)
        elif args.command == "train":
            cmd_train(cfg, out, args.data)
        elif args.command == "assess":
            cmd_assess(cfg, out, args.model, args.recording)
        elif args.command == "export-features":
            cmd_export_features(cfg, out, args.data, args.model)
        else:
            cmd_benchmark(cfg, out)
    except (ValidationError, ConfigurationError, TrainingError, PlattFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "),
              file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
