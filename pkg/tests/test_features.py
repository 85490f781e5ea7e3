import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitvib.analysis import event_features, labelled_segments, training_samples
from gaitvib.dynamics.beam import WALKWAY_MODES_HZ, BeamModel
from gaitvib.dynamics.dataset import GaitSequenceSpec, synth_gait_dataset
from gaitvib.dynamics.forces import CONTACT_ORDER, ContactType, force_template
from gaitvib.dynamics.simulate import simulate_response
from gaitvib.features import (FeatureVector, FrequencyBasis, extract_features,
                              feature_columns, power_spectrum, select_dominant_frequencies,
                              spectral_peaks, write_features_csv)
from gaitvib.signal import ConfigurationError, Signal, ValidationError

BEAM = BeamModel()
FS = 1000.0
MODES = np.array(WALKWAY_MODES_HZ)
SIX = FrequencyBasis(WALKWAY_MODES_HZ, 3.0)


def _tone(freq, seconds=1.0, amp=1.0):
    t = np.arange(int(seconds * FS)) / FS
    return Signal(FS, amp * np.sin(2 * np.pi * freq * t))


@pytest.fixture(scope="module")
def recordings():
    out = []
    for ctype in CONTACT_ORDER:
        for seed in range(2):
            spec = GaitSequenceSpec(step_count=4, left_type=ctype, right_type=ctype,
                                    random_seed=seed, body_weight=600 + 200 * seed,
                                    duration_jitter=0.1, peak_jitter=0.05)
            out.append(synth_gait_dataset(BEAM, spec))
    return out


@pytest.fixture(scope="module")
def segments(recordings):
    return labelled_segments(recordings)


@pytest.fixture(scope="module")
def basis(segments):
    return select_dominant_frequencies(segments, 6)


# -- spectrum --------------------------------------------------------------------

def test_tone_peak_bin():
    spec = power_spectrum(_tone(11.0))
    k = int(np.argmax(spec.amplitude[0]))
    assert spec.frequencies[k] == 11.0
    # the symmetric Hann window reads a bin-centred tone a hair low
    assert abs(spec.amplitude[0, k] - 1.0) < 1e-5
    assert spec.resolution == 1.0


@pytest.mark.parametrize("n_fft", [None, 1000, 1024, 4096])
def test_parseval(n_fft):
    rng = np.random.default_rng(0)
    sig = Signal(FS, rng.normal(size=(2, 777)))
    spec = power_spectrum(sig, n_fft)
    windowed = sig.data * np.hanning(sig.n_samples)
    np.testing.assert_allclose(spec.energy(), (windowed ** 2).sum(axis=1), rtol=1e-6)


def test_toe_step_peaks_at_modes():
    prof = force_template("Toe", 700, 0.3 * BEAM.length)
    sig = simulate_response(BEAM, prof, 3.0).to_velocity()
    spec = power_spectrum(sig, 4096)
    amp = spec.amplitude.mean(axis=0)
    found = spec.frequencies[spectral_peaks(spec.frequencies, amp)[:6]]
    assert len(found) == 6
    for f in found:
        assert np.min(np.abs(MODES - f)) <= 2 * spec.resolution
    for m in MODES:
        assert np.min(np.abs(found - m)) <= 2 * spec.resolution


def test_short_segment_rejected():
    with pytest.raises(ValidationError):
        power_spectrum(_tone(11.0, 0.2))
    with pytest.raises(ConfigurationError):
        power_spectrum(_tone(11.0, 0.5), n_fft=100)


# -- basis selection ---------------------------------------------------------------

def test_basis_k4_contains_low_modes(segments):
    got = np.array(select_dominant_frequencies(segments, 4).frequencies)
    for f in (11.0, 53.0):
        assert np.min(np.abs(got - f)) <= 2.0
    for f in got:
        assert np.min(np.abs(MODES - f)) <= 2.0


def test_basis_default_is_six_modes(basis):
    np.testing.assert_allclose(basis.frequencies, MODES, atol=2.0)


def test_identical_segments_give_one_peak_set(segments):
    heel = segments[ContactType.Heel]
    alone = select_dominant_frequencies({ContactType.Heel: heel}, 4)
    same = select_dominant_frequencies({c: heel for c in CONTACT_ORDER}, 4)
    assert same.frequencies == alone.frequencies


def test_noise_training_sets_warning():
    rng = np.random.default_rng(0)
    noise = {c: [Signal(FS, rng.normal(size=600)) for _ in range(6)] for c in CONTACT_ORDER}
    try:
        got = select_dominant_frequencies(noise, 6)
    except ValidationError as exc:
        # no peak at all is the limiting case of too few peaks
        assert "peak" in str(exc)
    else:
        assert got.warning is not None


def test_basis_stable_under_reshuffle(segments, basis):
    rng = np.random.default_rng(5)
    shuffled = {c: [segs[i] for i in rng.permutation(len(segs))]
                for c, segs in reversed(list(segments.items()))}
    assert select_dominant_frequencies(shuffled, 6) == basis


def test_basis_errors(segments):
    with pytest.raises(ConfigurationError):
        select_dominant_frequencies(segments, 0)
    with pytest.raises(ValidationError):
        select_dominant_frequencies({ContactType.Heel: segments[ContactType.Heel][:3]}, 4)
    with pytest.raises(ValidationError):
        select_dominant_frequencies({}, 4)


@pytest.mark.parametrize("freqs,hbw", [((), 3.0), ((50.0, 40.0), 3.0), ((50.0, 55.0), 3.0)])
def test_invalid_basis(freqs, hbw):
    with pytest.raises(ValidationError):
        FrequencyBasis(freqs, hbw)


def test_basis_dict_roundtrip(basis):
    assert FrequencyBasis.from_dict(basis.to_dict()) == basis


# -- extraction ---------------------------------------------------------------------

def test_tone_feature():
    vec = extract_features(_tone(53.0), SIX).values
    k = WALKWAY_MODES_HZ.index(53.0)
    assert vec[k] == 1.0
    assert np.all(np.delete(vec, k) < 1e-2)


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_scale_invariance(alpha, seed):
    rng = np.random.default_rng(seed)
    seg = Signal(FS, rng.normal(size=(2, 400)))
    a = extract_features(seg, SIX).values
    b = extract_features(seg.replace_data(alpha * seg.data), SIX).values
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    assert a.max() == 1.0 and np.all(a >= 0)


def test_midfoot_has_less_high_mass(recordings, basis):
    samples = training_samples(recordings, basis)
    high = np.array(basis.frequencies) >= 80.0

    def mass(ctype):
        vecs = [s.features for s in samples if s.contact_type is ctype]
        return np.mean([v[high].sum() / v.sum() for v in vecs])

    assert mass(ContactType.Midfoot) < mass(ContactType.Heel)


def test_feature_separability(recordings, basis):
    samples = training_samples(recordings, basis)
    groups = {c: np.array([s.features for s in samples if s.contact_type is c])
              for c in CONTACT_ORDER}
    centroids = {c: g.mean(axis=0) for c, g in groups.items()}
    spread = np.mean([np.linalg.norm(g - centroids[c], axis=1).mean()
                      for c, g in groups.items()])
    for i, a in enumerate(CONTACT_ORDER):
        for b in CONTACT_ORDER[i + 1:]:
            assert np.linalg.norm(centroids[a] - centroids[b]) >= 2 * spread


def test_extract_errors():
    with pytest.raises(ValidationError):
        extract_features(Signal(FS, np.zeros(500)), SIX)
    with pytest.raises(ConfigurationError):
        extract_features(np.ones(500), SIX)


def test_concatenated_features(recordings, basis):
    from gaitvib.analysis import analyze_recording
    sig, _ = recordings[0]
    res = analyze_recording(sig)
    ev = res.events[0]
    vec = event_features(res.clean, ev, basis, "concatenate")
    assert len(vec) == sig.n_channels * len(basis)
    assert vec.values.max() == 1.0
    near = event_features(res.clean, ev, basis, "nearest")
    assert len(near) == len(basis)
    with pytest.raises(ConfigurationError):
        event_features(res.clean, ev, basis, "all")


def test_features_csv(tmp_path, basis):
    rows = [(0, ContactType.Heel, "left", FeatureVector(np.linspace(0, 1, len(basis)))),
            (1, "Toe", "right", FeatureVector(np.ones(len(basis))))]
    path = tmp_path / "features.csv"
    write_features_csv(rows, basis, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == ["event_index", "label", "foot", *feature_columns(basis)]
    assert lines[1].startswith("0,Heel,left,")
    assert len(lines) == 3
    with pytest.raises(ValidationError):
        write_features_csv([(0, "Heel", "left", FeatureVector(np.ones(2)))], basis, path)
    cols = feature_columns(basis, 2)
    assert len(cols) == 2 * len(basis) and cols[0].startswith("ch1_")
