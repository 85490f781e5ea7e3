"""Leave-one-walker-out evaluation on a synthetic walker matrix."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import (RecordingAnalysis, analyze_recording, event_features, event_segment,
                       match_labels)
from .dynamics.beam import BeamModel
from .dynamics.dataset import ABNORMALITIES, GaitSequenceSpec, synth_gait_dataset
from .dynamics.forces import CONTACT_ORDER, ContactType
from .features import select_dominant_frequencies
from .learning import TrainingSample, assess_gait, duration_contrast, train_bundle
from .pipeline import PipelineConfig
from .signal import ConfigurationError

#: Walk kinds every walker performs, and the extra ones of abnormal walkers.
BASE_WALKS = ("heel", "midfoot", "toe")
ABNORMAL_WALKS = ("dragging", "asymmetric")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Walker matrix and learning settings of one benchmark run.

    Walker ``k`` gets body weight spaced evenly over ``body_weight_range``,
    a cadence drawn from ``cadence_range`` and a random start position.
    The last ``abnormal_walkers`` walkers also walk dragging both feet and
    with asymmetric left/right contact durations.
    """

    walkers: int = 8
    abnormal_walkers: int = 3
    body_weight_range: tuple = (500.0, 900.0)
    cadence_range: tuple = (0.45, 0.55)
    duration_jitter: float = 0.10
    peak_jitter: float = 0.05
    steps_per_walk: int = 10
    asymmetric_durations: tuple = (0.6, 0.9)
    seed: int = 0
    snr_db: float | None = None
    C: float = 10.0
    gamma: float | None = None
    k_per_type: int = 6
    half_bandwidth: float = 3.0
    channels: str = "nearest"
    match_tolerance: float = 0.1
    beam: BeamModel = field(default_factory=BeamModel)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if self.walkers < 2:
            raise ConfigurationError("benchmark.walkers must be >= 2")
        if not 0 <= self.abnormal_walkers <= self.walkers:
            raise ConfigurationError("benchmark.abnormal_walkers must be in [0, walkers]")
        if self.abnormal_walkers == 1:
            raise ConfigurationError(
                "benchmark.abnormal_walkers must be 0 or >= 2 for leave-one-walker-out")
        lo, hi = self.body_weight_range
        if not 0 < lo <= hi:
            raise ConfigurationError("benchmark.body_weight_range must satisfy 0 < lo <= hi")
        lo, hi = self.cadence_range
        if not 0 < lo <= hi:
            raise ConfigurationError("benchmark.cadence_range must satisfy 0 < lo <= hi")


@dataclass(frozen=True)
class Walk:
    walker: int
    kind: str
    spec: GaitSequenceSpec


def walker_matrix(config: BenchmarkConfig) -> list:
    """Every scripted walk of the benchmark, in a fixed order."""
    rng = np.random.default_rng(config.seed)
    lo, hi = config.body_weight_range
    weights = np.linspace(lo, hi, config.walkers)
    walks = []
    for w in range(config.walkers):
        cadence = float(rng.uniform(*config.cadence_range))
        start = float(rng.uniform(0.7, 1.1))
        base = GaitSequenceSpec(
            step_count=config.steps_per_walk, cadence=cadence, body_weight=float(weights[w]),
            start_position=start, duration_jitter=config.duration_jitter,
            peak_jitter=config.peak_jitter, noise_snr_db=config.snr_db)
        kinds = BASE_WALKS
        if w >= config.walkers - config.abnormal_walkers:
            kinds = kinds + ABNORMAL_WALKS
        for kind in kinds:
            seed = int(rng.integers(2**31))
            if kind in ("heel", "midfoot", "toe"):
                ctype = ContactType.parse(kind.capitalize())
                spec = replace(base, left_type=ctype, right_type=ctype, random_seed=seed)
            elif kind == "dragging":
                spec = replace(base, left_dragging=True, right_dragging=True,
                               random_seed=seed)
            else:
                left, right = config.asymmetric_durations
                spec = replace(base, left_duration=left, right_duration=right,
                               random_seed=seed)
            walks.append(Walk(w, kind, spec))
    return walks


@dataclass(frozen=True)
class AnalyzedWalk:
    walk: Walk
    analysis: RecordingAnalysis
    labels: list
    pairs: list


def analyze_walks(config: BenchmarkConfig, walks=None) -> list:
    out = []
    for walk in walks if walks is not None else walker_matrix(config):
        signal, labels = synth_gait_dataset(config.beam, walk.spec)
        res = analyze_recording(signal, config.pipeline)
        out.append(AnalyzedWalk(walk, res, labels,
                                match_labels(res.events, labels, config.match_tolerance)))
    return out


def _samples(walks, basis, config):
    """Training samples plus, per walk, the matched features in event order."""
    samples = []
    for aw in walks:
        feats = {ev.event_index: event_features(aw.analysis.clean, ev, basis,
                                                config.channels).values
                 for ev in aw.analysis.events}
        contrast = duration_contrast([ev.duration for ev in aw.analysis.events])
        for ev, lab in aw.pairs:
            samples.append(TrainingSample(feats[ev.event_index], ev.duration,
                                          float(contrast[ev.event_index]),
                                          lab.contact_type, tuple(lab.abnormality_tags)))
    return samples


def select_basis(walks, config: BenchmarkConfig):
    """Dominant-frequency basis from the matched events of analysed walks."""
    groups = {}
    for aw in walks:
        for ev, lab in aw.pairs:
            seg = event_segment(aw.analysis.clean, ev, config.channels)
            if seg.n_channels > 1:
                seg = seg.replace_data(seg.data.mean(axis=0, keepdims=True))
            groups.setdefault(lab.contact_type, []).append(seg)
    return select_dominant_frequencies(groups, config.k_per_type,
                                       half_bandwidth=config.half_bandwidth)


def fit_models(walks, config: BenchmarkConfig):
    """Frequency basis and model bundle from analysed training walks."""
    basis = select_basis(walks, config)
    bundle = train_bundle(_samples(walks, basis, config), basis, config.C, config.gamma,
                          seed=config.seed)
    return bundle


@dataclass
class EventOutcome:
    walker: int
    kind: str
    true_type: ContactType
    predicted_type: ContactType | None
    true_tags: tuple
    probabilities: dict
    true_duration: float
    detected_duration: float | None


@dataclass
class BenchmarkResult:
    outcomes: list
    walk_medians: list
    missed: int
    false_positives: int

    def contact_type_accuracy(self, walker: int | None = None,
                              count_missed: bool = False) -> float:
        rows = [o for o in self.outcomes if walker is None or o.walker == walker]
        if not count_missed:
            rows = [o for o in rows if o.predicted_type is not None]
        if not rows:
            return float("nan")
        return float(np.mean([o.predicted_type is o.true_type for o in rows]))

    def duration_mae(self, walker: int | None = None) -> float:
        """Mean of ``|detected - true| / true`` over detected events."""
        rows = [o for o in self.outcomes if o.detected_duration is not None
                and (walker is None or o.walker == walker)]
        if not rows:
            return float("nan")
        return float(np.mean([abs(o.detected_duration - o.true_duration) / o.true_duration
                              for o in rows]))

    def abnormality_accuracy(self, name: str, walker: int | None = None,
                             threshold: float = 0.5) -> float:
        """Detector accuracy over normal footsteps and footsteps carrying ``name``."""
        rows = [o for o in self.outcomes if o.predicted_type is not None
                and (walker is None or o.walker == walker)
                and (not o.true_tags or name in o.true_tags)]
        if not rows:
            return float("nan")
        return float(np.mean([(o.probabilities[name] > threshold) == (name in o.true_tags)
                              for o in rows]))

    def mean_abnormality_accuracy(self) -> float:
        return float(np.nanmean([self.abnormality_accuracy(n) for n in ABNORMALITIES]))


def evaluate(train_walks, test_walks, config: BenchmarkConfig) -> tuple:
    """Train on one set of analysed walks and score another."""
    bundle = fit_models(train_walks, config)
    outcomes, medians = [], []
    missed = fp = 0
    for aw in test_walks:
        events = aw.analysis.events
        feats = [event_features(aw.analysis.clean, ev, bundle.basis, config.channels)
                 for ev in events]
        assessment = assess_gait(feats, [ev.duration for ev in events], bundle)
        matched = {ev.event_index: lab for ev, lab in aw.pairs}
        for ev, ea in zip(events, assessment.events):
            lab = matched.get(ev.event_index)
            if lab is None:
                fp += 1
                continue
            outcomes.append(EventOutcome(aw.walk.walker, aw.walk.kind, lab.contact_type,
                                         ea.contact_type, tuple(lab.abnormality_tags),
                                         ea.probabilities, lab.duration, ev.duration))
        found = {lab.event_index for lab in matched.values()}
        for lab in aw.labels:
            if lab.event_index not in found:
                missed += 1
                outcomes.append(EventOutcome(aw.walk.walker, aw.walk.kind, lab.contact_type,
                                             None, tuple(lab.abnormality_tags), {},
                                             lab.duration, None))
        medians.append((aw.walk.walker, aw.walk.kind, assessment.median_probabilities,
                        assessment.asymmetry_index))
    return outcomes, medians, missed, fp


def leave_one_walker_out(walks, config: BenchmarkConfig, test_walks=None) -> BenchmarkResult:
    """Each walker is scored by models trained on all the others.

    ``test_walks`` substitutes the scored recordings (e.g. noisy copies of
    the same walks) while training always uses ``walks``.
    """
    test_walks = walks if test_walks is None else test_walks
    outcomes, medians = [], []
    missed = fp = 0
    for w in sorted({aw.walk.walker for aw in walks}):
        train = [aw for aw in walks if aw.walk.walker != w]
        test = [aw for aw in test_walks if aw.walk.walker == w]
        o, m, mi, f = evaluate(train, test, config)
        outcomes += o
        medians += m
        missed += mi
        fp += f
    return BenchmarkResult(outcomes, medians, missed, fp)


def run_benchmark(config: BenchmarkConfig = BenchmarkConfig(), out_dir=None) -> BenchmarkResult:
    """Simulate the walker matrix, run leave-one-walker-out, write the CSVs."""
    walks = analyze_walks(config)
    result = leave_one_walker_out(walks, config)
    if out_dir is not None:
        write_benchmark_csvs(result, config, out_dir)
    return result


def noise_sweep(config: BenchmarkConfig = BenchmarkConfig(), snrs=(20.0, 15.0, 10.0, 5.0),
                clean_walks=None) -> list:
    """Mean accuracy at each SNR, models trained on clean walks.

    The score is the mean of contact-type accuracy and the four detector
    accuracies, each counting missed footsteps as errors.
    """
    clean = clean_walks if clean_walks is not None else analyze_walks(config)
    rows = []
    for snr in snrs:
        noisy = [replace(aw.walk, spec=replace(aw.walk.spec, noise_snr_db=float(snr)))
                 for aw in clean]
        noisy_walks = analyze_walks(config, noisy)
        res = leave_one_walker_out(clean, config, noisy_walks)
        rows.append((float(snr), sweep_score(res), res.missed, res.false_positives))
    return rows


def sweep_score(result: BenchmarkResult) -> float:
    n = len(result.outcomes)
    if n == 0:
        return float("nan")
    ok_type = sum(o.predicted_type is o.true_type for o in result.outcomes) / n
    det = []
    for name in ABNORMALITIES:
        rows = [o for o in result.outcomes if not o.true_tags or name in o.true_tags]
        det.append(np.mean([o.predicted_type is not None
                            and (o.probabilities[name] > 0.5) == (name in o.true_tags)
                            for o in rows]))
    return float(np.mean([ok_type, *det]))


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))


def write_benchmark_csvs(result: BenchmarkResult, config: BenchmarkConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    walkers = sorted({o.walker for o in result.outcomes})
    with (out / "contact_type_accuracy.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["walker", "contact_type", "events", "accuracy"])
        for w in walkers:
            for c in CONTACT_ORDER:
                rows = [o for o in result.outcomes if o.walker == w and o.true_type is c
                        and o.predicted_type is not None]
                acc = np.mean([o.predicted_type is c for o in rows]) if rows else None
                wr.writerow([w, c.value, len(rows), _fmt(acc)])
            wr.writerow([w, "all", "", _fmt(result.contact_type_accuracy(w))])
        wr.writerow(["all", "all", "", _fmt(result.contact_type_accuracy())])
    with (out / "duration_mae.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["walker", "walk", "events", "mae_fraction", "mae_s"])
        for w in walkers:
            for kind in dict.fromkeys(o.kind for o in result.outcomes if o.walker == w):
                rows = [o for o in result.outcomes if o.walker == w and o.kind == kind
                        and o.detected_duration is not None]
                rel = [abs(o.detected_duration - o.true_duration) / o.true_duration
                       for o in rows]
                ab = [abs(o.detected_duration - o.true_duration) for o in rows]
                wr.writerow([w, kind, len(rows), _fmt(np.mean(rel) if rows else None),
                             _fmt(np.mean(ab) if rows else None)])
        wr.writerow(["all", "all", "", _fmt(result.duration_mae()), ""])
    with (out / "abnormality_accuracy.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["walker", *ABNORMALITIES])
        for w in walkers:
            wr.writerow([w, *(_fmt(result.abnormality_accuracy(n, w)) for n in ABNORMALITIES)])
        wr.writerow(["all", *(_fmt(result.abnormality_accuracy(n)) for n in ABNORMALITIES)])
        wr.writerow(["mean", _fmt(result.mean_abnormality_accuracy()), "", "", ""])
    with (out / "probability_profiles.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["walker", "walk", *(f"median_{n}" for n in ABNORMALITIES),
                     "asymmetry_index"])
        for w, kind, med, asym in result.walk_medians:
            wr.writerow([w, kind, *(_fmt(med[n]) for n in ABNORMALITIES), _fmt(asym)])
    with (out / "detection_summary.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["events", "missed", "false_positives"])
        wr.writerow([len(result.outcomes), result.missed, result.false_positives])


def write_sweep_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["snr_db", "mean_accuracy", "missed", "false_positives"])
        for snr, score, missed, fp in rows:
            wr.writerow([_fmt(snr), _fmt(score), missed, fp])
