"""Optical elements: beam splitters, wave plates, the phase module, source
distinguishability, mode mismatch, and the lossy gated memory channel.

Internal degrees of freedom (temporal bin, spatial/polarization mismatch,
leaked-vs-stored time slot) are carried as *twin modes*: a label such as
``"N:t:x"`` is path ``N`` in the orthogonal temporal bin and the mismatched
transverse mode. Twins never interfere with each other but share a detector
with their root path. :func:`apply_linear` applies a path-level element to
every twin pair at once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.stats import poisson

from .fock import (
    ZERO_TOL,
    MixedEnsemble,
    ModeRegistry,
    StateVector,
    apply_mode_pair_unitary,
    apply_phase,
    make_state,
)

TEMPORAL = "t"
MISMATCH = "x"
LEAKED = "l"
TAG_ORDER = (TEMPORAL, MISMATCH, LEAKED)

COHERENT_TAIL_LIMIT = 1e-6

Optical = Union[StateVector, MixedEnsemble]


# ---------------------------------------------------------------- twin modes

def split_label(label: str) -> tuple:
    root, *tags = label.split(":")
    return root, tuple(tags)


def twin(label: str, tag: str) -> str:
    root, tags = split_label(label)
    if tag in tags:
        raise ValueError(f"{label!r} already carries tag {tag!r}")
    return ":".join((root,) + tuple(sorted(tags + (tag,), key=TAG_ORDER.index)))


def twin_registry(roots: Sequence[str], tags: Iterable[str] = (), max_total_photons: int = 4) -> ModeRegistry:
    """Registry holding every root path together with all its twin combinations."""
    tags = sorted(set(tags), key=TAG_ORDER.index)
    labels = []
    for root in roots:
        for r in range(len(tags) + 1):
            for combo in itertools.combinations(tags, r):
                labels.append(":".join((root,) + combo))
    return ModeRegistry(tuple(labels), max_total_photons)


def family(registry: ModeRegistry, root: str, exclude: Iterable[str] = ()) -> list:
    exclude = set(exclude)
    out = []
    for lab in registry.labels:
        r, tags = split_label(lab)
        if r == root and not exclude.intersection(tags):
            out.append(lab)
    return out


def _map(obj: Optical, fn):
    if isinstance(obj, MixedEnsemble):
        return obj.map(fn)
    return fn(obj)


def apply_linear(obj: Optical, root_a: str, root_b: str, u) -> Optical:
    """Apply a path-level 2x2 element to every twin pair of ``(root_a, root_b)``."""
    reg = obj.registry
    pairs = []
    for lab in family(reg, root_a):
        tags = split_label(lab)[1]
        partner = ":".join((root_b,) + tags)
        if partner in reg:
            pairs.append((lab, partner))
    if not pairs:
        raise KeyError(f"no mode pair for paths {root_a!r}, {root_b!r}")

    def fn(state):
        for a, b in pairs:
            state = apply_mode_pair_unitary(state, a, b, u)
        return state

    return _map(obj, fn)


# ---------------------------------------------------------- matrix elements

def beam_splitter(reflectivity: float = 0.5) -> np.ndarray:
    """Symmetric beam splitter [[t, i r], [i r, t]] with r = sqrt(R)."""
    if not 0.0 <= reflectivity <= 1.0:
        raise ValueError(f"reflectivity must be in [0, 1], got {reflectivity}")
    t = math.sqrt(1.0 - reflectivity)
    r = math.sqrt(reflectivity)
    return np.array([[t, 1j * r], [1j * r, t]], dtype=complex)


@dataclass(frozen=True)
class PolarizationMatrix:
    """2x2 Jones operator acting on (|H>, |V>) column vectors."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("Jones matrices are 2x2")
        object.__setattr__(self, "entries", m)

    def __matmul__(self, other):
        if isinstance(other, PolarizationMatrix):
            return PolarizationMatrix(self.entries @ other.entries)
        return self.entries @ np.asarray(other, dtype=complex)

    def is_unitary(self, tol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.entries.conj().T @ self.entries - np.eye(2))) < tol)


H_POL = np.array([1.0, 0.0], dtype=complex)


def qwp(q: float) -> PolarizationMatrix:
    """Quarter-wave plate with fast axis at ``q`` from vertical."""
    c, s = math.cos(2 * q), math.sin(2 * q)
    return PolarizationMatrix(np.array([[1j - c, s], [s, 1j + c]]) / math.sqrt(2))


def hwp(theta: float) -> PolarizationMatrix:
    """Half-wave plate with fast axis at ``theta`` from vertical."""
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    return PolarizationMatrix(np.array([[c, -s], [-s, -c]], dtype=complex))


@dataclass(frozen=True)
class PhaseModuleSetting:
    """QWP(q1), HWP(theta), QWP(q2) in the order light meets them."""

    theta: float
    q1: float = math.pi / 4
    q2: float = math.pi / 4

    @property
    def alpha(self) -> float:
        """Path phase imprinted on |H>, on the branch nearest 2*theta.

        Only defined when the module maps |H> onto itself; the global -1 of
        the plate stack is dropped.
        """
        out = phase_module(self) @ H_POL
        if abs(out[1]) > ZERO_TOL or abs(abs(out[0]) - 1.0) > 1e-10:
            raise ValueError("phase module does not act as a pure phase on |H> at this setting")
        nominal = 2.0 * self.theta
        delta = np.angle(-out[0]) - nominal
        return nominal + float((delta + math.pi) % (2 * math.pi) - math.pi)


def phase_module(setting: PhaseModuleSetting) -> PolarizationMatrix:
    return qwp(setting.q2) @ hwp(setting.theta) @ qwp(setting.q1)


# ------------------------------------------------------ state-level elements

def apply_path_phase(state: StateVector, mode: str, alpha: float) -> StateVector:
    return apply_phase(state, mode, alpha)


def apply_family_phase(obj: Optical, root: str, alpha: float) -> Optical:
    labels = family(obj.registry, root)

    def fn(state):
        for lab in labels:
            state = apply_phase(state, lab, alpha)
        return state

    return _map(obj, fn)


@dataclass(frozen=True)
class OverlapModel:
    """Gaussian temporal overlap of the two photons versus source delay."""

    tau_ns: float
    delta_t_ns: float = 0.0

    def __post_init__(self):
        if self.tau_ns <= 0:
            raise ValueError("tau_ns must be positive")

    @property
    def xi(self) -> float:
        return math.exp(-self.delta_t_ns ** 2 / (2.0 * self.tau_ns ** 2))


def mix_distinguishability(registry: ModeRegistry, mode_a: str, mode_b: str, xi: float) -> MixedEnsemble:
    """One photon in each of ``mode_a`` and ``mode_b`` with overlap amplitude ``xi``.

    With weight xi**2 both photons share a temporal mode and interfere; with
    weight 1 - xi**2 the second photon sits in the orthogonal temporal twin
    of ``mode_b`` and the pair behaves classically at a beam splitter.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must be in [0, 1], got {xi}")
    w = xi * xi
    comps = []
    if w > 0.0:
        comps.append((w, _pair(registry, mode_a, mode_b)))
    if w < 1.0:
        comps.append((1.0 - w, _pair(registry, mode_a, twin(mode_b, TEMPORAL))))
    return MixedEnsemble(comps)


def _pair(registry, a, b):
    occ = [0] * len(registry)
    occ[registry.index(a)] += 1
    occ[registry.index(b)] += 1
    return make_state(registry, [(occ, 1.0)])


def apply_mode_mismatch(obj: Optical, root: str, overlap: float) -> Optical:
    """Couple path ``root`` into its mismatch twin so only ``overlap`` of the
    field amplitude stays in the interfering transverse mode."""
    if not 0.0 <= overlap <= 1.0:
        raise ValueError(f"overlap must be in [0, 1], got {overlap}")
    if overlap == 1.0:
        return obj
    s = math.sqrt(1.0 - overlap ** 2)
    u = np.array([[overlap, -s], [s, overlap]], dtype=complex)
    labels = family(obj.registry, root, exclude=(MISMATCH,))

    def fn(state):
        for lab in labels:
            state = apply_mode_pair_unitary(state, lab, twin(lab, MISMATCH), u)
        return state

    return _map(obj, fn)


@dataclass(frozen=True)
class MemoryChannel:
    """Phenomenological storage: each photon is retrieved with probability beta.

    Unretrieved light is either lost or, for a fraction ``leak_fraction`` of
    it, leaks straight through in an earlier time slot. With the gate enabled
    the leaked slot is never counted, so it is equivalent to loss.
    ``storage_time_ns`` is bookkeeping only.
    """

    beta: float
    storage_time_ns: float = 0.0
    gate_enabled: bool = True
    leak_fraction: float = 1.0
    phase_jitter: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not 0.0 <= self.leak_fraction <= 1.0:
            raise ValueError("leak_fraction must be in [0, 1]")
        if self.phase_jitter < 0:
            raise ValueError("phase_jitter must be nonnegative")

    @property
    def pair_survival(self) -> float:
        return self.beta ** 2


def _loss_branches(state: StateVector, label: str, eta: float) -> list:
    """Kraus branches of pure loss on one mode, keyed by photons lost."""
    i = state.registry.index(label)
    branches: dict = {}
    for occ, amp in state.items():
        n = occ[i]
        for k in range(n + 1):
            c = math.sqrt(math.comb(n, k) * eta ** (n - k) * (1.0 - eta) ** k)
            if c == 0.0:
                continue
            new = list(occ)
            new[i] = n - k
            branch = branches.setdefault(k, {})
            branch[tuple(new)] = branch.get(tuple(new), 0j) + amp * c
    return [StateVector._trusted(state.registry, amps) for amps in branches.values()]


def _lossy(ens: MixedEnsemble, label: str, eta: float) -> MixedEnsemble:
    if eta == 1.0:
        return ens
    comps = []
    for w, state in ens:
        for branch in _loss_branches(state, label, eta):
            p = branch.norm() ** 2
            if p > 0.0:
                comps.append((w * p, StateVector._trusted(branch.registry, {k: a / math.sqrt(p) for k, a in branch.items()})))
    return MixedEnsemble(_renormalized(comps))


def _renormalized(comps):
    total = sum(w for w, _ in comps)
    return [(w / total, s) for w, s in comps]


def memory_apply(ensemble: Optical, channel: MemoryChannel, modes: Sequence[str]) -> MixedEnsemble:
    """Send the listed paths (and their twins) through the memory.

    Loss outcomes are enumerated exactly as Kraus branches, giving a mixture
    over retained photon-number sectors.
    """
    ens = ensemble if isinstance(ensemble, MixedEnsemble) else MixedEnsemble.pure(ensemble)
    reg = ens.registry
    if channel.phase_jitter > 0.0 and modes:
        nodes, weights = hermegauss(15)
        weights = weights / weights.sum()
        comps = []
        for x, wx in zip(nodes, weights):
            shifted = apply_family_phase(ens, modes[0], channel.phase_jitter * x)
            comps.extend((w * wx, s) for w, s in shifted)
        ens = MixedEnsemble(_renormalized(comps))
    leak = 0.0 if channel.gate_enabled else (1.0 - channel.beta) * channel.leak_fraction
    for root in modes:
        for lab in family(reg, root, exclude=(LEAKED,)):
            kept = 1.0
            if leak > 0.0:
                kept = 1.0 - leak
                r = math.sqrt(leak)
                u = np.array([[math.sqrt(kept), -r], [r, math.sqrt(kept)]], dtype=complex)
                ens = apply_linear_pair(ens, lab, twin(lab, LEAKED), u)
            ens = _lossy(ens, lab, min(1.0, channel.beta / kept) if kept > 0 else 0.0)
    return ens


def apply_linear_pair(ens: MixedEnsemble, a: str, b: str, u) -> MixedEnsemble:
    return ens.map(lambda s: apply_mode_pair_unitary(s, a, b, u))


def weak_coherent_state(registry: ModeRegistry, mode: str, amplitude: complex) -> StateVector:
    """Coherent state truncated at the registry bound and renormalized."""
    amplitude = complex(amplitude)
    mu = abs(amplitude) ** 2
    n_max = registry.max_total_photons
    tail = float(poisson.sf(n_max, mu)) if mu > 0 else 0.0
    if tail >= COHERENT_TAIL_LIMIT:
        raise ValueError(
            f"coherent amplitude {abs(amplitude):.3g} leaves tail mass {tail:.2e} above "
            f"{n_max} photons (limit {COHERENT_TAIL_LIMIT:g})"
        )
    i = registry.index(mode)
    terms = []
    for n in range(n_max + 1):
        occ = [0] * len(registry)
        occ[i] = n
        c = math.exp(-mu / 2) * amplitude ** n / math.sqrt(math.factorial(n))
        if c != 0:
            terms.append((occ, c))
    return make_state(registry, terms)
