"""Detector response, coincidence statistics, Poisson counting and visibilities."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .fock import MixedEnsemble, StateVector


@dataclass(frozen=True)
class DetectorModel:
    label: str
    efficiency: float = 1.0
    dark_prob: float = 0.0

    def __post_init__(self):
        for name in ("efficiency", "dark_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def _as_ensemble(obj) -> MixedEnsemble:
    return obj if isinstance(obj, MixedEnsemble) else MixedEnsemble.pure(obj)


def _detector_groups(registry, detectors: Mapping[str, DetectorModel]):
    """Map each detector label to (model, registry indices it watches)."""
    groups: dict = {}
    for mode, det in detectors.items():
        if mode not in registry:
            raise KeyError(f"detector {det.label} watches unknown mode {mode!r}")
        model, idx = groups.setdefault(det.label, (det, []))
        if model != det:
            raise ValueError(f"conflicting models for detector {det.label}")
        idx.append(registry.index(mode))
    return {lab: (m, tuple(idx)) for lab, (m, idx) in sorted(groups.items())}


def click_probabilities(ensemble, detectors: Mapping[str, DetectorModel]) -> dict:
    """Joint distribution of threshold-detector click patterns.

    ``detectors`` maps mode labels to detector models; several modes may share
    one detector. Keys of the result are frozensets of clicking detector
    labels. Each photon is detected independently; a dark click ORs in.
    """
    ens = _as_ensemble(ensemble)
    groups = _detector_groups(ens.registry, detectors)
    labels = list(groups)
    # probability mass per tuple of photon numbers reaching each detector
    by_counts: dict = {}
    for w, state in ens:
        for occ, p in state.probabilities().items():
            key = tuple(sum(occ[i] for i in idx) for _, idx in groups.values())
            by_counts[key] = by_counts.get(key, 0.0) + w * p
    out = {frozenset(c): 0.0 for r in range(len(labels) + 1) for c in itertools.combinations(labels, r)}
    for counts, p in by_counts.items():
        p_click = [
            1.0 - (1.0 - m.efficiency) ** n * (1.0 - m.dark_prob) for (m, _), n in zip(groups.values(), counts)
        ]
        for pattern in itertools.product((False, True), repeat=len(labels)):
            q = p
            for clicked, pc in zip(pattern, p_click):
                q *= pc if clicked else 1.0 - pc
            out[frozenset(lab for lab, c in zip(labels, pattern) if c)] += q
    return out


def coincidence_probability(ensemble, pair: Sequence[str], detectors: Mapping[str, DetectorModel]) -> float:
    """Probability that both detectors in ``pair`` click in the same gate."""
    a, b = pair
    probs = click_probabilities(ensemble, detectors)
    for lab in (a, b):
        if not any(lab in k for k in probs):
            raise KeyError(f"no detector labelled {lab!r}")
    return sum(p for k, p in probs.items() if a in k and b in k)


def coincidence_rate(ensemble, pair: Sequence[str], detectors: Mapping[str, DetectorModel]) -> float:
    """Mean number of detected (A, B) pairs per gate, to first order in dark counts.

    eta_A eta_B <n_A n_B> + eta_A d_B <n_A> + d_A eta_B <n_B> + d_A d_B.
    For states holding at most two photons with no dark counts this equals
    :func:`coincidence_probability`; for multi-photon light it is the
    intensity correlation that weak-light coincidence counting measures.
    """
    ens = _as_ensemble(ensemble)
    groups = _detector_groups(ens.registry, detectors)
    try:
        (ma, ia), (mb, ib) = groups[pair[0]], groups[pair[1]]
    except KeyError as exc:
        raise KeyError(f"no detector labelled {exc.args[0]!r}") from None
    nab = na = nb = 0.0
    for w, state in ens:
        for occ, p in state.probabilities().items():
            xa = sum(occ[i] for i in ia)
            xb = sum(occ[i] for i in ib)
            nab += w * p * xa * xb
            na += w * p * xa
            nb += w * p * xb
    return (
        ma.efficiency * mb.efficiency * nab
        + ma.efficiency * mb.dark_prob * na
        + ma.dark_prob * mb.efficiency * nb
        + ma.dark_prob * mb.dark_prob
    )


@dataclass(frozen=True)
class CountsRecord:
    trials: int
    counts: int
    duration_s: float | None = None

    def __post_init__(self):
        if self.counts < 0 or self.counts > self.trials:
            raise ValueError(f"counts {self.counts} outside [0, {self.trials}]")

    @property
    def rate(self) -> float:
        return self.counts / self.trials

    @property
    def stderr(self) -> float:
        return math.sqrt(self.counts)


def sample_counts(probability: float, trials: int, seed, duration_s: float | None = None) -> CountsRecord:
    """Poisson-distributed counts with mean ``probability * trials``.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts; a tuple
    such as ``(run_seed, point_index)`` gives independent per-point streams.
    """
    if not 0.0 <= probability <= 1.0:
        raise ValueError(f"probability must be in [0, 1], got {probability}")
    if trials <= 0:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(list(seed) if isinstance(seed, (tuple, list)) else seed)
    counts = int(rng.poisson(probability * trials))
    return CountsRecord(trials=trials, counts=min(counts, trials), duration_s=duration_s)


class ScanPoint(NamedTuple):
    setting: float
    expected_rate: float
    counts: int
    stderr: float


@dataclass(frozen=True)
class FringeScan:
    """Ordered scan; ``stderr`` is always sqrt(counts)."""

    settings: np.ndarray
    expected_rate: np.ndarray
    counts: np.ndarray
    trials: int = 1
    kind: str = "theta"
    stderr: np.ndarray = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.settings, dtype=float)
        e = np.asarray(self.expected_rate, dtype=float)
        c = np.asarray(self.counts, dtype=np.int64)
        if not (s.shape == e.shape == c.shape) or s.ndim != 1 or s.size == 0:
            raise ValueError("settings, expected_rate and counts must be equal-length, non-empty 1-D")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "settings", s)
        object.__setattr__(self, "expected_rate", e)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "stderr", np.sqrt(c.astype(float)))

    def __len__(self):
        return self.settings.size

    @property
    def points(self) -> list:
        return [ScanPoint(*row) for row in zip(self.settings, self.expected_rate, self.counts.tolist(), self.stderr)]

    def values(self, use_expected: bool = False) -> np.ndarray:
        """Data to analyse: raw counts, or expected counts (rate * trials)."""
        if use_expected:
            return self.expected_rate * self.trials
        return self.counts.astype(float)


def _extrema(scan, fit, use_expected):
    if fit is not None:
        x = np.asarray(scan.settings if isinstance(scan, FringeScan) else fit.x_range, dtype=float)
        dense = np.linspace(x.min(), x.max(), 4001)
        y = fit.predict(np.concatenate([dense, x]))
    elif isinstance(scan, FringeScan):
        y = scan.values(use_expected)
    else:
        y = np.asarray(scan, dtype=float)
    if y.size == 0:
        raise ValueError("empty scan")
    return float(np.max(y)), float(np.min(y))


def visibility_v0(scan, fit=None, use_expected: bool = False) -> float:
    """Dip visibility (C_max - C_min) / C_max.

    Extrema come from ``fit`` when given, otherwise from the data.
    """
    c_max, c_min = _extrema(scan, fit, use_expected)
    if c_max <= 0:
        raise ValueError("C_max must be positive")
    return (c_max - c_min) / c_max


def visibility_v1(scan, fit=None, use_expected: bool = False) -> float:
    """Fringe visibility (C_max - C_min) / (C_max + C_min)."""
    c_max, c_min = _extrema(scan, fit, use_expected)
    if c_max + c_min <= 0:
        raise ValueError("C_max + C_min must be positive")
    return (c_max - c_min) / (c_max + c_min)


def g2_max(scan, use_expected: bool = False, wing_fraction: float = 0.2) -> float:
    """Peak coincidence rate over the far-wing baseline.

    The baseline averages the points whose |setting| lies in the outer
    ``wing_fraction`` of the scanned range (at least two points).
    """
    if isinstance(scan, FringeScan):
        x, y = scan.settings, scan.values(use_expected)
    else:
        x, y = (np.asarray(v, dtype=float) for v in scan)
    r = np.abs(x)
    order = np.argsort(-r, kind="stable")
    n_wing = max(2, int(round(wing_fraction * x.size)))
    baseline = float(np.mean(y[order[:n_wing]]))
    if baseline <= 0:
        raise ValueError("baseline rate is zero")
    return float(np.max(y)) / baseline
