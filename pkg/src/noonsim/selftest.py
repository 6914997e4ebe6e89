"""Built-in consistency checks run by ``noonsim selftest``."""

import itertools
import math

import numpy as np
from scipy.stats import unitary_group

from .config import ExperimentConfig
from .detection import DetectorModel, coincidence_probability
from .fock import ModeRegistry, StateVector, apply_mode_pair_unitary, basis_state, occupation_probability
from .optics import H_POL, PhaseModuleSetting, beam_splitter, phase_module
from .oracle import embed, fock_transfer_matrix, sector_basis
from .scenarios import fringe_rates


def check_hom_null() -> float:
    reg = ModeRegistry(("a", "b"), 2)
    out = apply_mode_pair_unitary(basis_state(reg, {"a": 1, "b": 1}), "a", "b", beam_splitter(0.5))
    dets = {"a": DetectorModel("D1"), "b": DetectorModel("D2")}
    return coincidence_probability(out, ("D1", "D2"), dets)


def check_noon_generation() -> float:
    reg = ModeRegistry(("M", "N"), 2)
    out = apply_mode_pair_unitary(basis_state(reg, {"M": 1, "N": 1}), "M", "N", beam_splitter(0.5))
    return max(
        abs(occupation_probability(out, {"M": 2}) - 0.5),
        abs(occupation_probability(out, {"N": 2}) - 0.5),
        occupation_probability(out, {"M": 1, "N": 1}),
    )


def check_phase_module(n: int = 100, seed: int = 11) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for theta in rng.uniform(-math.pi, math.pi, n):
        out = phase_module(PhaseModuleSetting(theta)) @ H_POL
        want = -np.exp(2j * theta) * H_POL
        worst = max(worst, float(np.max(np.abs(out - want))))
    return worst


def oracle_max_error(max_modes: int = 3, max_photons: int = 4, unitaries: int = 3, seed: int = 5) -> float:
    """Largest amplitude mismatch between the lifted action and the permanent oracle."""
    worst = 0.0
    rng = np.random.default_rng(seed)
    mats = [beam_splitter(0.5), np.eye(2)] + [unitary_group.rvs(2, random_state=rng) for _ in range(unitaries)]
    for n_modes in range(2, max_modes + 1):
        reg = ModeRegistry(tuple(f"m{i}" for i in range(n_modes)), max_photons)
        for i, j in itertools.permutations(range(n_modes), 2):
            for u in mats:
                for n in range(max_photons + 1):
                    basis = sector_basis(n_modes, n)
                    dense = fock_transfer_matrix(embed(u, n_modes, i, j), basis)
                    for col, occ in enumerate(basis):
                        state = StateVector(reg, {occ: 1.0})
                        got = apply_mode_pair_unitary(state, reg.labels[i], reg.labels[j], u).to_dense(basis)
                        worst = max(worst, float(np.max(np.abs(got - dense[:, col]))))
    return worst


def check_fringe_law() -> float:
    cfg = ExperimentConfig(mode_mismatch=1.0, noiseless=True, theta_points=64)
    th = cfg.theta_grid
    rates = fringe_rates(cfg)
    return float(np.max(np.abs(rates - (1 - np.cos(4 * th)) / 2)))


CHECKS = [
    ("hom-null", check_hom_null, 1e-12),
    ("noon-generation", check_noon_generation, 1e-12),
    ("phase-module-identity", check_phase_module, 1e-12),
    ("oracle-equivalence", oracle_max_error, 1e-10),
    ("noon-fringe-law", check_fringe_law, 1e-9),
]


def run_selftest(out=print) -> bool:
    ok = True
    for name, fn, tol in CHECKS:
        err = fn()
        passed = err < tol
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'} {name}: error {err:.3g} (tolerance {tol:g})")
    return ok
