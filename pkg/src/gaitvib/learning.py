"""RBF-kernel SVMs trained by SMO, Platt calibration, and gait assessment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .dynamics.dataset import ABNORMALITIES
from .dynamics.forces import CONTACT_ORDER, ContactType
from .features import FeatureVector, FrequencyBasis
from .signal import ConfigurationError, ValidationError

BUNDLE_VERSION = 1
#: Detectors that see the contact duration next to the spectral features.
DURATION_DETECTORS = ("dragging", "asymmetry")


class TrainingError(ValueError):
    """The data cannot produce a model (e.g. only one class present)."""


def _values(x) -> np.ndarray:
    if isinstance(x, FeatureVector):
        return x.values
    return np.asarray(x, dtype=float)


def _matrix(xs) -> np.ndarray:
    if isinstance(xs, np.ndarray) and xs.ndim == 2:
        return xs.astype(float, copy=False)
    rows = [_values(x) for x in xs]
    if not rows:
        raise ValidationError("no feature vectors")
    if len({r.size for r in rows}) != 1:
        raise ValidationError("feature vectors differ in length")
    return np.vstack(rows)


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """``exp(-gamma * |a_i - b_j|^2)`` for all row pairs."""
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def default_gamma(x: np.ndarray) -> float:
    """``1 / (d * Var(X))`` over all entries; 1/d when the data are constant."""
    var = float(np.var(x))
    d = x.shape[1]
    return 1.0 / (d * var) if var > 0 else 1.0 / d


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    dual_coefficients: np.ndarray
    bias: float
    kernel_gamma: float
    regularization_C: float
    labels: tuple = ("negative", "positive")

    def __post_init__(self):
        sv = np.atleast_2d(np.asarray(self.support_vectors, dtype=float))
        coef = np.asarray(self.dual_coefficients, dtype=float).ravel()
        if sv.shape[0] != coef.size:
            raise ValidationError("one dual coefficient per support vector is required")
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coefficients", coef)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dimension(self) -> int:
        return self.support_vectors.shape[1]

    def decision(self, xs) -> np.ndarray:
        """Margins for a batch of inputs."""
        x = np.atleast_2d(_matrix(xs) if not isinstance(xs, np.ndarray) else xs)
        if x.shape[1] != self.dimension:
            raise ValidationError(
                f"input has {x.shape[1]} features, the model expects {self.dimension}")
        if self.support_vectors.shape[0] == 0:
            return np.full(x.shape[0], self.bias)
        k = rbf_kernel(x, self.support_vectors, self.kernel_gamma)
        return k @ self.dual_coefficients + self.bias

    def to_dict(self) -> dict:
        return {"support_vectors": self.support_vectors.tolist(),
                "dual_coefficients": self.dual_coefficients.tolist(),
                "bias": self.bias, "kernel_gamma": self.kernel_gamma,
                "regularization_C": self.regularization_C, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        sv = np.asarray(d["support_vectors"], dtype=float)
        if sv.size == 0:
            sv = sv.reshape(0, 0)
        return cls(sv, np.asarray(d["dual_coefficients"], dtype=float), float(d["bias"]),
                   float(d["kernel_gamma"]), float(d["regularization_C"]),
                   tuple(d.get("labels", ("negative", "positive"))))


@dataclass(frozen=True)
class TrainingResult:
    """A trained model plus the full dual solution, for diagnostics."""

    model: SvmModel
    alpha: np.ndarray
    y: np.ndarray
    iterations: int
    polished: bool


def _signed(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.dtype == bool:
        return np.where(y, 1.0, -1.0)
    y = y.astype(float)
    uniq = set(np.unique(y).tolist())
    if uniq <= {0.0, 1.0}:
        return np.where(y > 0, 1.0, -1.0)
    if uniq <= {-1.0, 1.0}:
        return y
    raise ValidationError("binary labels must be bool, {0, 1} or {-1, +1}")


def train_svm(features, labels, C: float = 10.0, gamma: float | None = None,
              tol: float = 1e-3, max_iter: int = 1_000_000,
              names=("negative", "positive"), full: bool = False):
    """Soft-margin RBF SVM by SMO with second-order working-set selection.

    The positive class is ``True``/``1``/``+1``. After SMO converges the
    free multipliers are refined by solving the KKT equalities exactly on
    the free set; this removes the solver's tolerance from the result so it
    no longer depends on the order of the training samples.
    """
    x = _matrix(features)
    y = _signed(labels)
    if x.shape[0] != y.size:
        raise ValidationError("features and labels differ in length")
    if not C > 0:
        raise ConfigurationError("learning.C must be > 0")
    if gamma is None:
        gamma = default_gamma(x)
    if not gamma > 0:
        raise ConfigurationError("learning.gamma must be > 0")
    if np.all(y > 0) or np.all(y < 0):
        raise TrainingError("training data hold a single class")
    k = np.ascontiguousarray(rbf_kernel(x, x, gamma))
    yc = np.ascontiguousarray(y)
    total = 0
    # the solver stops on the maximal-violation gap; half the KKT tolerance
    # leaves room for the bias estimate. When the active set found at that
    # tolerance is not exactly right the polish fails, so tighten and retry.
    for stop in (float(tol) / 2.0, 1e-6, 1e-10):
        alpha, grad, it = kernels.smo_solve(k, yc, float(C), stop, int(max_iter))
        total += int(it)
        alpha = np.clip(np.asarray(alpha), 0.0, C)
        alpha, bias, polished = _polish(k, y, alpha, np.asarray(grad), C)
        if polished or not _free_mask(alpha, C).any():
            break
    sv = alpha > 0
    model = SvmModel(x[sv].copy(), (alpha * y)[sv], float(bias), float(gamma), float(C),
                     tuple(names))
    if full:
        return TrainingResult(model, alpha, y, total, polished)
    return model


def _free_mask(alpha, C):
    eps = 1e-8 * C
    return (alpha > eps) & (alpha < C - eps)


def _bias_from_gradient(y, alpha, grad, C):
    free = _free_mask(alpha, C)
    yg = y * grad
    if free.any():
        rho = float(np.mean(yg[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = np.max(-yg[up]) if up.any() else 0.0
        lo = np.min(-yg[low]) if low.any() else 0.0
        rho = -0.5 * (hi + lo)
    return -rho


def _polish(k, y, alpha, grad, C):
    """Exact solve for the free multipliers with the bounded ones held."""
    eps = 1e-8 * C
    alpha = np.where(alpha < eps, 0.0, np.where(alpha > C - eps, C, alpha))
    free = _free_mask(alpha, C)
    bias = _bias_from_gradient(y, alpha, grad, C)
    if not free.any():
        return alpha, bias, False
    bound = alpha >= C
    beta_b = y[bound] * C
    f = np.flatnonzero(free)
    n = f.size
    system = np.zeros((n + 1, n + 1))
    system[:n, :n] = k[np.ix_(f, f)]
    system[:n, n] = 1.0
    system[n, :n] = 1.0
    rhs = np.empty(n + 1)
    rhs[:n] = y[f] - k[np.ix_(f, np.flatnonzero(bound))] @ beta_b
    rhs[n] = -beta_b.sum()
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        return alpha, bias, False
    new_free = y[f] * sol[:n]
    if not np.all(np.isfinite(sol)) or np.any(new_free <= 0) or np.any(new_free >= C):
        return alpha, bias, False
    out = alpha.copy()
    out[f] = new_free
    # the held multipliers must still satisfy their KKT conditions, or the
    # free set was guessed wrong
    yf = y * (k @ (out * y) + sol[n])
    slack = 1e-9
    if np.any(yf[out == 0.0] < 1.0 - slack) or np.any(yf[out == C] > 1.0 + slack):
        return alpha, bias, False
    return out, float(sol[n]), True


def decision_margin(model: SvmModel, x) -> float:
    """``f(x) = sum_i coef_i K(s_i, x) + bias``."""
    v = _values(x)
    if v.ndim != 1:
        raise ValidationError("decision_margin takes a single feature vector")
    return float(model.decision(v[None, :])[0])


def kkt_violations(result: TrainingResult, features, tol: float = 1e-3) -> np.ndarray:
    """Per-sample KKT violation of a trained model (0 where satisfied)."""
    x = _matrix(features)
    y, alpha, C = result.y, result.alpha, result.model.regularization_C
    yf = y * result.model.decision(x)
    eps = 1e-8 * C
    viol = np.zeros(y.size)
    at_zero = alpha <= eps
    at_c = alpha >= C - eps
    free = ~at_zero & ~at_c
    viol[at_zero] = np.maximum(0.0, 1.0 - yf[at_zero])
    viol[at_c] = np.maximum(0.0, yf[at_c] - 1.0)
    viol[free] = np.abs(yf[free] - 1.0)
    return viol


# -- Platt scaling ---------------------------------------------------------------

@dataclass(frozen=True)
class PlattModel:
    """``P(abnormal | f) = 1 / (1 + exp(w f + b))``."""

    w: float
    b: float

    def probability(self, margins) -> np.ndarray:
        z = self.w * np.asarray(margins, dtype=float) + self.b
        # stable in both tails; clipped so the result stays inside (0, 1)
        p = np.where(z >= 0, np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))),
                     1.0 / (1.0 + np.exp(-np.abs(z))))
        tiny = np.finfo(float).eps
        return np.clip(p, tiny, 1.0 - tiny)

    def to_dict(self) -> dict:
        return {"w": self.w, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "PlattModel":
        return cls(float(d["w"]), float(d["b"]))


class PlattFitError(ValueError):
    """Platt scaling cannot be fitted to the given margins."""


def platt_fit(margins, labels, max_iter: int = 200, grad_tol: float = 1e-8,
              min_step: float = 1e-12) -> PlattModel:
    """Maximum-likelihood fit with Platt's smoothed targets.

    Newton's method with backtracking line search on the regularised
    negative log-likelihood; positive labels mean abnormal.
    """
    f = np.asarray(margins, dtype=float).ravel()
    pos = _signed(labels) > 0
    if f.size != pos.size:
        raise ValidationError("margins and labels differ in length")
    if not np.all(np.isfinite(f)):
        raise ValidationError("margins must be finite")
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise PlattFitError("Platt scaling needs both classes")
    if np.ptp(f) == 0:
        raise PlattFitError("all margins are equal")
    t = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(w, b):
        z = w * f + b
        # sum of t*z + log(1 + exp(-z)), written stably
        return float(np.sum(t * z + np.logaddexp(0.0, -z)))

    w, b = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    obj = objective(w, b)
    for _ in range(max_iter):
        z = w * f + b
        p = 1.0 / (1.0 + np.exp(-z))  # logistic of z, i.e. 1 - P(abnormal)
        d1 = t - (1.0 - p)
        g = np.array([np.dot(f, d1), d1.sum()])
        if np.linalg.norm(g) < grad_tol:
            break
        d2 = p * (1.0 - p)
        h = np.array([[np.dot(f * f, d2) + 1e-12, np.dot(f, d2)],
                      [np.dot(f, d2), d2.sum() + 1e-12]])
        step = -np.linalg.solve(h, g)
        size = 1.0
        while size >= min_step:
            nw, nb = w + size * step[0], b + size * step[1]
            new = objective(nw, nb)
            if new < obj + 1e-4 * size * float(g @ step):
                w, b, obj = nw, nb, new
                break
            size /= 2.0
        else:
            break
    return PlattModel(float(w), float(b))


def abnormal_probability(svm: SvmModel, platt: PlattModel, x) -> float:
    return float(platt.probability(decision_margin(svm, x)))


# -- contact type and assessment -------------------------------------------------

def classify_contact_type(models: dict, x) -> ContactType:
    """One-vs-rest argmax; ties go to the earlier of Heel, Midfoot, Toe."""
    margins = contact_margins(models, x)
    return CONTACT_ORDER[int(np.argmax(margins))]


def contact_margins(models: dict, x) -> np.ndarray:
    missing = [c.value for c in CONTACT_ORDER if _lookup(models, c) is None]
    if missing:
        raise ConfigurationError(f"missing contact-type model(s): {missing}")
    return np.array([decision_margin(_lookup(models, c), x) for c in CONTACT_ORDER])


def _lookup(models, ctype):
    if ctype in models:
        return models[ctype]
    return models.get(ctype.value)


def cv_margins(features, labels, C, gamma, folds: int = 3, seed: int = 0) -> np.ndarray:
    """Out-of-fold margins from a stratified ``folds``-way split."""
    x = _matrix(features)
    y = _signed(labels)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=int)
    for cls in (-1.0, 1.0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = np.arange(idx.size) % folds
    out = np.empty(y.size)
    for k in range(folds):
        test = fold_of == k
        train = ~test
        if not test.any():
            continue
        if np.unique(y[train]).size < 2:
            raise TrainingError("a cross-validation fold lost one class")
        model = train_svm(x[train], y[train], C, gamma)
        out[test] = model.decision(x[test])
    return out


@dataclass(frozen=True)
class ModelBundle:
    basis: FrequencyBasis
    type_models: dict
    detector_models: dict
    platt_models: dict
    config_echo: dict = field(default_factory=dict)
    version: int = BUNDLE_VERSION

    def to_dict(self) -> dict:
        svms = {f"contact_{c.value}": self.type_models[c].to_dict() for c in CONTACT_ORDER}
        svms.update({name: self.detector_models[name].to_dict() for name in ABNORMALITIES})
        return {"version": self.version, "frequency_basis": self.basis.to_dict(),
                "svm_models": svms,
                "platt_models": {n: self.platt_models[n].to_dict() for n in ABNORMALITIES},
                "config_echo": self.config_echo}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        if d.get("version") != BUNDLE_VERSION:
            raise ValidationError(f"unsupported model bundle version {d.get('version')!r}")
        svms = d["svm_models"]
        try:
            types = {c: SvmModel.from_dict(svms[f"contact_{c.value}"]) for c in CONTACT_ORDER}
            det = {n: SvmModel.from_dict(svms[n]) for n in ABNORMALITIES}
            platt = {n: PlattModel.from_dict(d["platt_models"][n]) for n in ABNORMALITIES}
        except KeyError as exc:
            raise ValidationError(f"model bundle lacks {exc.args[0]!r}") from None
        return cls(FrequencyBasis.from_dict(d["frequency_basis"]), types, det, platt,
                   d.get("config_echo", {}), d["version"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ModelBundle":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrainingSample:
    """One labelled footstep for training."""

    features: np.ndarray
    duration: float
    contrast: float
    contact_type: ContactType
    tags: tuple


def detector_input(name: str, features, duration: float, contrast: float) -> np.ndarray:
    """Feature vector a detector sees: spectral values, plus timing for
    the dragging and asymmetry detectors."""
    v = _values(features)
    if name == "dragging":
        return np.append(v, duration)
    if name == "asymmetry":
        return np.append(v, [duration, contrast])
    return v


def duration_contrast(durations) -> np.ndarray:
    """How much each step's duration departs from its neighbours' mean,
    relative to the local mean duration. Zero for a single step."""
    d = np.asarray(durations, dtype=float)
    if d.size < 2:
        return np.zeros(d.size)
    out = np.empty(d.size)
    for k in range(d.size):
        nb = [d[j] for j in (k - 1, k + 1) if 0 <= j < d.size]
        local = np.mean(nb)
        out[k] = abs(d[k] - local) / (0.5 * (d[k] + local))
    return out


def train_bundle(samples, basis: FrequencyBasis, C: float = 10.0, gamma: float | None = None,
                 seed: int = 0, folds: int = 3, config_echo: dict | None = None) -> ModelBundle:
    """Three one-vs-rest contact-type SVMs and four calibrated detectors."""
    if not samples:
        raise TrainingError("no training samples")
    x = np.vstack([s.features for s in samples])
    present = {s.contact_type for s in samples}
    missing = [c.value for c in CONTACT_ORDER if c not in present]
    if missing:
        raise TrainingError(f"training data lack contact type(s): {missing}")
    g = gamma if gamma is not None else default_gamma(x)
    types = {}
    for c in CONTACT_ORDER:
        y = np.array([s.contact_type is c for s in samples])
        types[c] = train_svm(x, y, C, g, names=("other", c.value))
    normal = np.array([not s.tags for s in samples])
    det, platt = {}, {}
    for name in ABNORMALITIES:
        has = np.array([name in s.tags for s in samples])
        keep = normal | has
        if not has.any():
            raise TrainingError(f"training data lack abnormality class {name!r}")
        if not normal.any():
            raise TrainingError("training data lack normal footsteps")
        xd = np.vstack([detector_input(name, s.features, s.duration, s.contrast)
                        for s, k in zip(samples, keep) if k])
        yd = has[keep]
        gd = gamma if gamma is not None else default_gamma(xd)
        det[name] = train_svm(xd, yd, C, gd, names=("normal", name))
        margins = cv_margins(xd, yd, C, gd, folds, seed)
        platt[name] = platt_fit(margins, yd)
    return ModelBundle(basis, types, det, platt, dict(config_echo or {}))


@dataclass(frozen=True)
class EventAssessment:
    event_index: int
    contact_type: ContactType
    probabilities: dict
    duration: float


@dataclass(frozen=True)
class GaitAssessment:
    events: tuple
    median_probabilities: dict
    asymmetry_index: float | None
    event_count: int
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "event_count": self.event_count,
            "asymmetry_index": self.asymmetry_index,
            "median_probabilities": self.median_probabilities,
            "warning": self.warning,
            "events": [{"event_index": e.event_index, "contact_type": e.contact_type.value,
                        "duration_s": e.duration, "probabilities": e.probabilities}
                       for e in self.events],
        }


def asymmetry_index(durations) -> float | None:
    """``|mean(odd steps) - mean(even steps)| / mean(all)``; None below two steps."""
    d = np.asarray(durations, dtype=float)
    if d.size < 2:
        return None
    return float(abs(d[0::2].mean() - d[1::2].mean()) / d.mean())


def assess_gait(features, durations, bundle: ModelBundle) -> GaitAssessment:
    """Per-event contact type and abnormality probabilities, per-walk medians.

    ``features`` and ``durations`` describe the walk's footsteps in time
    order; feet are assumed to alternate.
    """
    feats = [_values(f) for f in features]
    durations = [float(d) for d in durations]
    if len(feats) != len(durations):
        raise ValidationError("features and durations differ in length")
    if not feats:
        return GaitAssessment((), {n: None for n in ABNORMALITIES}, None, 0,
                              "no footstep events detected")
    for v in feats:
        if v.size != len(bundle.basis):
            raise ValidationError("feature vector does not match the model's frequency basis")
    contrast = duration_contrast(durations)
    events = []
    for k, (v, d) in enumerate(zip(feats, durations)):
        probs = {}
        for name in ABNORMALITIES:
            xin = detector_input(name, v, d, contrast[k])
            probs[name] = float(bundle.platt_models[name].probability(
                decision_margin(bundle.detector_models[name], xin)))
        events.append(EventAssessment(k, classify_contact_type(bundle.type_models, v),
                                      probs, d))
    medians = {n: float(np.median([e.probabilities[n] for e in events]))
               for n in ABNORMALITIES}
    asym = asymmetry_index(durations)
    warning = None if asym is not None else "asymmetry undefined for a single event"
    return GaitAssessment(tuple(events), medians, asym, len(events), warning)
