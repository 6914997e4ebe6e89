"""Sparse multi-mode Fock states in a truncated occupation-number basis.

States are immutable maps from occupation tuples to complex amplitudes over a
:class:`ModeRegistry`. Two-mode linear optics is lifted to Fock space by
expanding the transformed creation-operator monomials directly, so the cost
scales with the number of populated basis states rather than the full
truncated Hilbert-space dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

ALGEBRA_TOL = 1e-10
ZERO_TOL = 1e-12
DEFAULT_MAX_PHOTONS = 4

# amplitudes below this magnitude are dropped after a transformation
_PRUNE = 1e-15


class TruncationError(ValueError):
    """A basis state exceeds the registry's photon-number bound."""


@dataclass(frozen=True)
class ModeRegistry:
    """Ordered set of mode labels plus the total photon-number cut-off."""

    labels: tuple
    max_total_photons: int = DEFAULT_MAX_PHOTONS
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"mode labels must be unique: {labels}")
        if self.max_total_photons < 2:
            raise ValueError("max_total_photons must be at least 2")
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown mode {label!r}") from None

    def check(self, occupations: Sequence[int]) -> tuple:
        occ = tuple(int(n) for n in occupations)
        if len(occ) != len(self.labels):
            raise ValueError(
                f"occupation tuple has length {len(occ)}, registry has {len(self.labels)} modes"
            )
        if any(n < 0 for n in occ):
            raise ValueError(f"negative occupation in {occ}")
        if sum(occ) > self.max_total_photons:
            raise TruncationError(
                f"{occ} holds {sum(occ)} photons, bound is {self.max_total_photons}"
            )
        return occ

    def vacuum(self) -> tuple:
        return (0,) * len(self.labels)


class StateVector:
    """Normalized-or-not pure state; treat instances as immutable."""

    __slots__ = ("registry", "_amps")

    def __init__(self, registry: ModeRegistry, amplitudes: Mapping[tuple, complex]):
        self.registry = registry
        self._amps = {registry.check(k): complex(v) for k, v in amplitudes.items()}

    @classmethod
    def _trusted(cls, registry, amplitudes):
        obj = cls.__new__(cls)
        obj.registry = registry
        obj._amps = amplitudes
        return obj

    def __repr__(self):
        terms = " + ".join(f"({a:.4g})|{','.join(map(str, k))}>" for k, a in self.items())
        return f"StateVector({terms or '0'})"

    def __len__(self):
        return len(self._amps)

    def items(self):
        return sorted(self._amps.items())

    def amplitude(self, occupations) -> complex:
        return self._amps.get(tuple(occupations), 0j)

    def amplitudes(self) -> dict:
        return dict(self._amps)

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self._amps.values()))

    def probabilities(self) -> dict:
        return {k: abs(a) ** 2 for k, a in self._amps.items()}

    def photon_number_distribution(self) -> dict:
        dist: dict = {}
        for k, a in self._amps.items():
            n = sum(k)
            dist[n] = dist.get(n, 0.0) + abs(a) ** 2
        return dist

    def mean_photons(self, mode) -> float:
        i = self.registry.index(mode)
        return sum(k[i] * abs(a) ** 2 for k, a in self._amps.items())

    def to_dense(self, basis: Sequence[tuple]) -> np.ndarray:
        return np.array([self.amplitude(b) for b in basis], dtype=complex)


class MixedEnsemble:
    """Classical mixture of pure states sharing one registry."""

    __slots__ = ("components",)

    def __init__(self, components: Iterable[tuple[float, StateVector]]):
        comps = tuple((float(w), s) for w, s in components)
        if not comps:
            raise ValueError("ensemble needs at least one component")
        if any(w < 0 for w, _ in comps):
            raise ValueError("ensemble weights must be nonnegative")
        total = sum(w for w, _ in comps)
        if abs(total - 1.0) > ALGEBRA_TOL:
            raise ValueError(f"ensemble weights sum to {total!r}, expected 1")
        registry = comps[0][1].registry
        if any(s.registry != registry for _, s in comps):
            raise ValueError("all ensemble states must share one registry")
        self.components = comps

    @classmethod
    def pure(cls, state: StateVector) -> "MixedEnsemble":
        return cls([(1.0, state)])

    @property
    def registry(self) -> ModeRegistry:
        return self.components[0][1].registry

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def map(self, fn: Callable[[StateVector], StateVector]) -> "MixedEnsemble":
        return MixedEnsemble((w, fn(s)) for w, s in self.components)

    def probability(self, pattern) -> float:
        return sum(w * occupation_probability(s, pattern) for w, s in self.components)

    def mean_photons(self, mode) -> float:
        return sum(w * s.mean_photons(mode) for w, s in self.components)

    def project(self, pattern):
        """Componentwise projection; returns ``(probability, ensemble)``.

        The ensemble is ``None`` when no component has support on the pattern.
        """
        kept = []
        for w, s in self.components:
            p, proj = project(s, pattern)
            if proj is not None and w * p > 0.0:
                kept.append((w * p, proj))
        total = sum(w for w, _ in kept)
        if total <= 0.0:
            return 0.0, None
        return total, MixedEnsemble((w / total, s) for w, s in kept)

    def photon_number_distribution(self) -> dict:
        dist: dict = {}
        for w, s in self.components:
            for n, p in s.photon_number_distribution().items():
                dist[n] = dist.get(n, 0.0) + w * p
        return dist


Pattern = Union[None, Callable[[tuple], bool], Mapping]


def _compile_pattern(registry: ModeRegistry, pattern: Pattern) -> Callable[[tuple], bool]:
    """Turn a pattern into a predicate on occupation tuples.

    A pattern is ``None`` (always true), a callable on the occupation tuple,
    or a mapping ``{mode: int | callable(n) -> bool}`` combined with AND.
    """
    if pattern is None:
        return lambda occ: True
    if callable(pattern):
        return pattern
    if not isinstance(pattern, Mapping):
        raise TypeError(f"malformed pattern {pattern!r}")
    checks = []
    for mode, want in pattern.items():
        i = registry.index(mode)
        if callable(want):
            checks.append((i, want))
        elif isinstance(want, (int, np.integer)):
            checks.append((i, lambda n, w=int(want): n == w))
        else:
            raise TypeError(f"malformed pattern entry {mode!r}: {want!r}")
    return lambda occ: all(f(occ[i]) for i, f in checks)


def make_state(registry: ModeRegistry, terms) -> StateVector:
    """Build a normalized state from ``(occupations, amplitude)`` pairs."""
    terms = list(terms)
    if not terms:
        raise ValueError("make_state needs at least one term")
    amps: dict = {}
    for occ, amp in terms:
        key = registry.check(occ)
        if key in amps:
            raise ValueError(f"duplicate basis entry {key}")
        amps[key] = complex(amp)
    return normalize(StateVector._trusted(registry, amps))


def basis_state(registry: ModeRegistry, occupied: Mapping) -> StateVector:
    """Single Fock ket from ``{mode: photons}``; unlisted modes are empty."""
    occ = [0] * len(registry)
    for mode, n in occupied.items():
        occ[registry.index(mode)] = n
    return make_state(registry, [(occ, 1.0)])


def normalize(state: StateVector) -> StateVector:
    nrm = state.norm()
    if nrm == 0.0:
        raise ValueError("cannot normalize a zero-norm state")
    return StateVector._trusted(state.registry, {k: a / nrm for k, a in state._amps.items()})


def tensor(first: StateVector, second: StateVector) -> StateVector:
    """Product state on the concatenated registry."""
    reg = ModeRegistry(
        first.registry.labels + second.registry.labels,
        first.registry.max_total_photons + second.registry.max_total_photons,
    )
    amps = {ka + kb: aa * ab for ka, aa in first._amps.items() for kb, ab in second._amps.items()}
    return StateVector._trusted(reg, amps)


def occupation_probability(state: StateVector, pattern: Pattern = None) -> float:
    match = _compile_pattern(state.registry, pattern)
    return sum(abs(a) ** 2 for k, a in state._amps.items() if match(k))


def project(state: StateVector, pattern: Pattern):
    """Project onto the basis states matching ``pattern``.

    Returns ``(probability, renormalized_state)``. When nothing matches the
    result is ``(0.0, None)``: there is no post-measurement state to return.
    """
    match = _compile_pattern(state.registry, pattern)
    kept = {k: a for k, a in state._amps.items() if match(k)}
    prob = sum(abs(a) ** 2 for a in kept.values())
    if prob <= 0.0:
        return 0.0, None
    return prob, normalize(StateVector._trusted(state.registry, kept))


def check_unitary(u, tol: float = ALGEBRA_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {u.shape}")
    err = np.max(np.abs(u.conj().T @ u - np.eye(2)))
    if err > tol:
        raise ValueError(f"matrix is not unitary (max deviation {err:.3g})")
    return u


def _binomial_poly(c_a: complex, c_b: complex, n: int) -> np.ndarray:
    # coefficients of A^j B^(n-j) in (c_a A + c_b B)^n, indexed by j
    j = np.arange(n + 1)
    binom = np.array([math.comb(n, int(x)) for x in j], dtype=float)
    return binom * c_a ** j * c_b ** (n - j)


def apply_mode_pair_unitary(state: StateVector, mode_a, mode_b, u) -> StateVector:
    """Apply a 2x2 mode transformation to ``(mode_a, mode_b)``.

    Creation operators transform as a† -> u00 a† + u10 b† and
    b† -> u01 a† + u11 b† (columns of ``u`` are the images of the inputs).
    """
    u = check_unitary(u)
    reg = state.registry
    ia, ib = reg.index(mode_a), reg.index(mode_b)
    if ia == ib:
        raise ValueError("mode pair must be two distinct modes")
    out: dict = {}
    cache: dict = {}
    for occ, amp in state._amps.items():
        na, nb = occ[ia], occ[ib]
        total = na + nb
        if (na, nb) not in cache:
            poly = np.convolve(_binomial_poly(u[0, 0], u[1, 0], na), _binomial_poly(u[0, 1], u[1, 1], nb))
            k = np.arange(total + 1)
            fact = np.array([math.sqrt(math.factorial(int(x)) * math.factorial(total - int(x))) for x in k])
            cache[(na, nb)] = poly * fact / math.sqrt(math.factorial(na) * math.factorial(nb))
        coeffs = cache[(na, nb)]
        base = list(occ)
        for k, c in enumerate(coeffs):
            if c == 0:
                continue
            base[ia], base[ib] = k, total - k
            key = tuple(base)
            out[key] = out.get(key, 0j) + amp * c
    if sum(max(out, key=sum, default=())) > reg.max_total_photons:
        raise TruncationError("photon number exceeded the registry bound")
    pruned = {k: a for k, a in out.items() if abs(a) > _PRUNE}
    return StateVector._trusted(reg, pruned)


def apply_phase(state: StateVector, mode, phase: float) -> StateVector:
    """Multiply each amplitude by exp(i * phase * n_mode)."""
    i = state.registry.index(mode)
    return StateVector._trusted(
        state.registry, {k: a * np.exp(1j * phase * k[i]) for k, a in state._amps.items()}
    )
