"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line straight to the terminal
(bypassing capture) before asserting, so ``pytest tests/test_acceptance.py``
shows the verdicts even when all tests pass.
"""
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from gaitvib.dynamics.beam import WALKWAY_MODES_HZ, BeamModel
from gaitvib.dynamics.dataset import GaitSequenceSpec, add_noise, synth_gait_dataset
from gaitvib.dynamics.forces import ContactForceProfile, ContactType, force_template, \
    participation_vector
from gaitvib.dynamics.simulate import modal_states, simulate_direct, simulate_response
from gaitvib.evalharness import BenchmarkConfig, analyze_walks, fit_models, \
    leave_one_walker_out
from gaitvib.features import power_spectrum, spectral_peaks
from gaitvib.learning import ABNORMALITIES, ModelBundle, PlattModel, kkt_violations, \
    platt_fit, train_svm
from gaitvib.pipeline import process_recording

BEAM = BeamModel()
TYPES = ("Heel", "Midfoot", "Toe")


@pytest.fixture
def verdict(capsys):
    def report(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, detail
    return report


def _rel_rms(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2) / np.mean(b ** 2)))


def test_simulator_oracle(verdict):
    beams = [BEAM, BeamModel(frequency_overrides=None),
             BeamModel(length=4.0, mode_count=4, damping_ratios=(0.05,),
                       frequency_overrides=None, sensor_positions=(1.0, 2.0, 3.0))]
    t0 = time.perf_counter()
    worst = 0.0
    for beam in beams:
        for ctype in TYPES:
            prof = force_template(ctype, 700, 0.3 * beam.length)
            fast = simulate_response(beam, prof, 1.5)
            slow = simulate_direct(beam, prof, 1.5)
            worst = max(worst, _rel_rms(slow.data, fast.data))
    elapsed = time.perf_counter() - t0
    verdict("simulator oracle", worst < 1e-3 and elapsed < 10.0,
            f"worst relative RMS {worst:.2e} (< 1e-3), {elapsed:.2f} s (< 10 s)")


def test_linearity_and_superposition(verdict):
    worst_scale = 0.0
    for ctype in TYPES:
        prof = force_template(ctype, 700, 1.8)
        base = simulate_response(BEAM, prof, 1.5).data
        scaled = simulate_response(BEAM, prof.scaled(1.7), 1.5).data
        worst_scale = max(worst_scale, np.max(np.abs(scaled - 1.7 * base)) / np.max(np.abs(base)))
    # a generated two-step walk against the sum of independently simulated steps
    spec = GaitSequenceSpec(step_count=2, velocity=False, path="straight", step_length=0.0)
    sig, labels = synth_gait_dataset(BEAM, spec)
    prof = force_template("Heel", spec.body_weight, labels[0].position)
    total = sig.duration - sig.dt
    ref = sum(simulate_response(BEAM, prof, total, onset=lab.t_contact_s).data
              for lab in labels)
    sup = np.max(np.abs(sig.data - ref)) / np.max(np.abs(ref))
    verdict("linearity & superposition", worst_scale <= 1e-9 and sup <= 1e-9,
            f"body-weight scaling {worst_scale:.1e}, two-step superposition {sup:.1e} (<= 1e-9)")


def _mean_spectrum(ctype):
    sig = simulate_response(BEAM, force_template(ctype, 700, 0.3 * BEAM.length), 3.0)
    spec = power_spectrum(sig, 4096)
    return spec.frequencies, spec.amplitude.mean(axis=0)


def _high_fraction(hf):
    prof = force_template("Heel", 700, 1.8, horizontal_fraction=hf)
    states = modal_states(BEAM, prof, 1.5, 1000.0)
    disp = states.participation[:, None] * states.displacement
    energy = (disp ** 2 * BEAM.omegas[:, None] ** 2).sum(axis=1)
    return energy[BEAM.frequencies >= 100].sum() / energy.sum()


def test_spectral_characterization(verdict):
    f, amp = _mean_spectrum("Midfoot")
    top = sorted(f[spectral_peaks(f, amp, min_prominence_db=10)[:2]])
    mid_ok = abs(top[0] - 11.0) <= 1.0 and abs(top[1] - 53.0) <= 1.0
    missing = []
    for ctype in ("Heel", "Toe"):
        f, amp = _mean_spectrum(ctype)
        db = 20 * np.log10(amp)
        for mode in WALKWAY_MODES_HZ:
            near = np.abs(f - mode) <= 1.5
            around = (np.abs(f - mode) > 4) & (np.abs(f - mode) < 10)
            if db[near].max() - np.median(db[around]) < 10.0:
                missing.append((ctype, mode))
    fracs = [_high_fraction(h) for h in (0.0, 0.1, 0.2, 0.4, 0.8)]
    rising = all(b > a for a, b in zip(fracs, fracs[1:]))
    verdict("spectral characterization", mid_ok and not missing and rising,
            f"midfoot top peaks {top[0]:.1f}/{top[1]:.1f} Hz, heel/toe modes without a "
            f"peak {missing or 'none'}, high-band share {[round(float(x), 4) for x in fracs]}")


def test_contact_area_law(verdict):
    L = BEAM.length
    ratios = []
    for frac in (0.01, 0.05, 0.1, 0.15):
        prof = ContactForceProfile(ContactType.Heel, 700.0, 0.3 * L, frac * L,
                                   np.array([0.0, 1.0]), 1000.0, 1.0, 0.0, 1e-3)
        p = participation_vector(BEAM, prof)
        ratios.append(abs(p[4]) / abs(p[0]))
    ok = all(b <= a for a, b in zip(ratios, ratios[1:]))
    verdict("contact-area law", ok, f"|P5|/|P1| = {[round(float(r), 4) for r in ratios]}")


def _match(events, labels, tol=0.1):
    hits, used = [], set()
    for lab in labels:
        for ev in events:
            if ev.event_index not in used and abs(ev.timing.initial_contact - lab.t_contact_s) < tol:
                used.add(ev.event_index)
                hits.append((ev, lab))
                break
    return hits, len(events) - len(used)


def test_event_detection(verdict):
    clean, labels = synth_gait_dataset(BEAM, GaitSequenceSpec(step_count=10))
    events = process_recording(clean)
    hits, _ = _match(events, labels)
    err = max(max(abs(ev.timing.initial_contact - lab.t_contact_s),
                  abs(ev.timing.foot_off - lab.t_off_s)) for ev, lab in hits)
    clean_ok = len(events) == 10 and len(hits) == 10 and err <= 0.025
    recalls, fps = [], []
    for seed in range(5):
        noisy = add_noise(clean, labels, 10.0, np.random.default_rng(seed))
        hits_n, fp = _match(process_recording(noisy), labels)
        recalls.append(len(hits_n) / len(labels))
        fps.append(fp)
    noisy_ok = min(recalls) >= 0.8 and max(fps) <= 1
    verdict("event detection", clean_ok and noisy_ok,
            f"clean {len(hits)}/10 with {len(events)} events, worst timing error "
            f"{1e3 * err:.1f} ms (<= 25); 10 dB recall {recalls} (>= 0.8), FP {fps} (<= 1)")


@pytest.fixture(scope="module")
def benchmark():
    config = BenchmarkConfig()
    t0 = time.perf_counter()
    walks = analyze_walks(config)
    result = leave_one_walker_out(walks, config)
    return config, walks, result, time.perf_counter() - t0


def test_duration_estimation(verdict, benchmark):
    _, _, result, _ = benchmark
    mae = result.duration_mae()
    verdict("duration estimation", mae <= 0.05,
            f"duration MAE {100 * mae:.2f}% of true contact time (<= 5%) over "
            f"{len(result.outcomes)} detected events")


def test_classification_benchmark(verdict, benchmark):
    _, _, result, elapsed = benchmark
    acc = result.contact_type_accuracy()
    det = {n: result.abnormality_accuracy(n) for n in ABNORMALITIES}
    ok = acc >= 0.9 and min(det.values()) >= 0.9 and elapsed < 300
    verdict("classification benchmark", ok,
            f"contact type {100 * acc:.1f}% (>= 90), detectors "
            f"{ {n: round(100 * v, 1) for n, v in det.items()} } (>= 90), {elapsed:.0f} s (< 300)")


def test_learning_correctness(verdict):
    worst_kkt = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(120, 6))
        y = x[:, 0] * x[:, 1] + 0.3 * rng.normal(size=120) > 0
        res = train_svm(x, y, C=10.0, full=True)
        worst_kkt = max(worst_kkt, float(kkt_violations(res, x).max()))
    rng = np.random.default_rng(0)
    f = rng.normal(0.0, 2.0, 10_000)
    lab = rng.random(f.size) < 1.0 / (1.0 + np.exp(-2.0 * f + 0.5))
    pm = platt_fit(f, lab)
    platt_ok = abs(pm.w + 2.0) <= 0.1 and abs(pm.b - 0.5) <= 0.1
    grid = np.linspace(-20, 20, 4001)
    p = pm.probability(grid)
    p_ok = bool(np.all((p > 0) & (p < 1)) and np.all(np.diff(p) >= 0))
    steep = PlattModel(-50.0, 0.0).probability(np.linspace(-1e3, 1e3, 101))
    p_ok = p_ok and bool(np.all((steep > 0) & (steep < 1)) and np.all(np.diff(steep) >= 0))
    verdict("learning correctness", worst_kkt <= 1e-3 and platt_ok and p_ok,
            f"max KKT violation {worst_kkt:.1e} (<= 1e-3), Platt (w, b) = "
            f"({pm.w:.3f}, {pm.b:.3f}) vs (-2, 0.5) +-0.1, probabilities in (0,1) and monotone {p_ok}")


SMALL = ["--set", "benchmark.walkers=4", "--set", "benchmark.abnormal_walkers=2",
         "--set", "benchmark.steps_per_walk=6"]


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "gaitvib.cli", *map(str, args)],
                          capture_output=True, text=True)


def _snapshot(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            data = p.read_bytes()
            if p.name == "metadata.json":
                doc = json.loads(data)
                doc.pop("timestamp")
                data = json.dumps(doc, sort_keys=True).encode()
            out[p.relative_to(root).as_posix()] = data
    return out


def test_determinism(verdict, tmp_path):
    differing = []
    for run in ("a", "b"):
        base = tmp_path / run
        steps = [
            ("simulate", "--out", base / "walk", "--seed", 5, "--set", "gait.noise_snr_db=10"),
            ("simulate", "--out", base / "sim", "--seed", 3, "--set", "simulate.suite=true",
             *SMALL),
            ("train", base / "sim", "--out", base / "model", *SMALL),
            ("assess", base / "model" / "model.json", base / "walk" / "signal.csv",
             "--out", base / "assess"),
            ("export-features", base / "sim", "--model", base / "model" / "model.json",
             "--out", base / "features", *SMALL),
            ("benchmark", "--out", base / "bench", *SMALL),
        ]
        for args in steps:
            r = _cli(*args)
            assert r.returncode == 0, (args[0], r.stderr)
    a, b = _snapshot(tmp_path / "a"), _snapshot(tmp_path / "b")
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    commands = sorted({k.split("/")[0] for k in a})
    verdict("determinism", not differing,
            f"{len(a)} files from {commands} byte-identical across two runs "
            f"(timestamp excluded); differing: {differing or 'none'}")


def test_bundle_round_trip(verdict, benchmark, tmp_path):
    config, walks, _, _ = benchmark
    bundle = fit_models([aw for aw in walks if aw.walk.walker >= 4], config)
    path = tmp_path / "model.json"
    bundle.save(path)
    back = ModelBundle.load(path)
    probes = np.random.default_rng(9).uniform(0, 1, (100, len(bundle.basis)))
    worst = 0.0
    for c in bundle.type_models:
        worst = max(worst, np.max(np.abs(bundle.type_models[c].decision(probes)
                                          - back.type_models[c].decision(probes))))
    for name, model in bundle.detector_models.items():
        d = model.support_vectors.shape[1]
        pr = np.random.default_rng(10).uniform(0, 1, (100, d))
        worst = max(worst, np.max(np.abs(model.decision(pr)
                                          - back.detector_models[name].decision(pr))))
        worst = max(worst, abs(bundle.platt_models[name].w - back.platt_models[name].w),
                    abs(bundle.platt_models[name].b - back.platt_models[name].b))
    verdict("round-trip", worst <= 1e-12,
            f"max margin change after save/load {worst:.1e} on 100 probes (<= 1e-12)")
