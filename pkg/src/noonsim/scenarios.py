"""End-to-end pipelines: HOM dip, Fock-state peak, phase fringes, source test.

Path layout. BS1 acts in place on two ports that become the interferometer
arms ``M`` and ``N``; BS2 acts in place on (M, N), after which ``M`` feeds D1
and ``N`` feeds D2. In the D3/D4 geometry BS3 splits the D2 port with an
empty port ``V``: ``N`` then feeds D3 and ``V`` feeds D4. ``T`` is the
heralding detector for the partner photon in the single-photon runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .config import ExperimentConfig
from .detection import DetectorModel, FringeScan, coincidence_rate, g2_max, sample_counts
from .fitting import FitError, FitResult, fit_fringe, fit_gaussian_dip
from .fock import MixedEnsemble, basis_state
from .optics import (
    LEAKED,
    MISMATCH,
    TEMPORAL,
    MemoryChannel,
    OverlapModel,
    PhaseModuleSetting,
    apply_family_phase,
    apply_linear,
    apply_mode_mismatch,
    beam_splitter,
    family,
    memory_apply,
    mix_distinguishability,
    twin_registry,
    weak_coherent_state,
)

BS50 = beam_splitter(0.5)

# Interferometer lock point (extra phase on arm N) that puts the dark fringe
# of the recorded coincidence at theta = 0 for each input/detection pairing.
LOCK_PHASE = {
    ("single", "d1d2"): math.pi,
    ("noon", "d1d2"): math.pi / 2,
    ("noon", "d3d4"): 0.0,
    ("coherent", "d1d2"): 0.0,
    ("coherent", "d3d4"): math.pi,
}

# fringe model and harmonic for each (source, detectors) combination
FIT_MODEL = {
    ("single", "d1d2"): ("cosine_k", 1),
    ("noon", "d1d2"): ("cosine_k", 2),
    ("noon", "d3d4"): ("cosine_k", 2),
    ("coherent", "d1d2"): ("cosine_k", 2),
    ("coherent", "d3d4"): ("cosine_squared", 1),
}

AMBIGUITY_RATIO = 1.05


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioResult:
    scenario: str
    scan: FringeScan
    fit: FitResult | None
    visibility: float
    visibility_stderr: float
    metrics: dict = field(default_factory=dict)


def _detectors(registry, config, roots_to_labels, perfect=()):
    dets = {}
    for root, label in roots_to_labels.items():
        eff = 1.0 if label in perfect else config.det_efficiency
        model = DetectorModel(label, efficiency=eff)
        for mode in family(registry, root):
            dets[mode] = model
    return dets


def _sampled_scan(config, settings, rates, kind):
    rates = np.clip(np.asarray(rates, dtype=float), 0.0, 1.0)
    if config.noiseless:
        counts = np.zeros(rates.size, dtype=np.int64)
    else:
        counts = np.array(
            [sample_counts(p, config.trials_per_point, (config.seed, i)).counts for i, p in enumerate(rates)],
            dtype=np.int64,
        )
    return FringeScan(settings, rates, counts, trials=config.trials_per_point, kind=kind)


def _pair_source(config, extra_roots=(), extra_tags=()):
    reg = twin_registry(("M", "N") + tuple(extra_roots), (TEMPORAL,) + tuple(extra_tags), config.max_total_photons)
    return reg


def hom_rate(config: ExperimentConfig, delta_t: float) -> float:
    reg = _pair_source(config)
    xi = OverlapModel(config.tau_ns, delta_t).xi * math.sqrt(config.mode_mismatch)
    ens = apply_linear(mix_distinguishability(reg, "M", "N", xi), "M", "N", BS50)
    dets = _detectors(reg, config, {"M": "D1", "N": "D2"})
    return coincidence_rate(ens, ("D1", "D2"), dets) + config.background


def run_hom_scan(config: ExperimentConfig) -> ScenarioResult:
    """Coincidences behind BS1 versus source delay, with a Gaussian dip fit."""
    grid = config.delta_t_grid
    scan = _sampled_scan(config, grid, [hom_rate(config, dt) for dt in grid], "delay")
    fit = fit_gaussian_dip(scan, use_expected=config.noiseless)
    return ScenarioResult("hom", scan, fit, fit.visibility, fit.visibility_stderr)


def fock_peak_rate(config: ExperimentConfig, delta_t: float) -> float:
    reg = _pair_source(config)
    xi = OverlapModel(config.tau_ns, delta_t).xi * math.sqrt(config.mode_mismatch)
    ens = apply_linear(mix_distinguishability(reg, "M", "N", xi), "M", "N", BS50)
    n_idx = [reg.index(m) for m in family(reg, "N")]
    p_kept, kept = ens.project(lambda occ: all(occ[i] == 0 for i in n_idx))
    if kept is None:
        return config.background
    kept = apply_linear(kept, "M", "N", BS50)
    dets = _detectors(reg, config, {"M": "D1", "N": "D2"})
    return p_kept * coincidence_rate(kept, ("D1", "D2"), dets) + config.background


def run_fock_peak_scan(config: ExperimentConfig) -> ScenarioResult:
    """Path N blocked, BS2 splits path M: coincidences peak at zero delay."""
    grid = config.delta_t_grid
    scan = _sampled_scan(config, grid, [fock_peak_rate(config, dt) for dt in grid], "delay")
    try:
        fit = fit_gaussian_dip(scan, use_expected=config.noiseless)
        vis, vis_err = fit.visibility, fit.visibility_stderr
    except FitError:
        fit, vis, vis_err = None, math.nan, math.nan
    metrics = {
        "g2_max": g2_max(scan, use_expected=config.noiseless),
        "g2_max_expected": g2_max((scan.settings, scan.expected_rate)),
    }
    return ScenarioResult("fock-peak", scan, fit, vis, vis_err, metrics)


def _prepare(config: ExperimentConfig):
    """Input state just after BS1, its detector map, and the coincidence pair."""
    source, dets = config.source, config.detectors
    if source == "single" and dets == "d3d4":
        raise ScenarioError("the single-photon source is only recorded at D1/D2")
    tags = [MISMATCH]
    if config.stage == "after" and not config.gate_enabled:
        tags.append(LEAKED)
    roots = ["M", "N"]
    if dets == "d3d4":
        roots.append("V")
    if source == "single":
        roots.append("T")
        reg = twin_registry(roots, tags, config.max_total_photons)
        ens = MixedEnsemble.pure(basis_state(reg, {"M": 1, "T": 1}))
    elif source == "noon":
        reg = twin_registry(roots, [TEMPORAL] + tags, config.max_total_photons)
        # sources at the best-fit delay: only the static mismatch limits the overlap
        ens = mix_distinguishability(reg, "M", "N", math.sqrt(config.mode_mismatch))
    else:
        reg = twin_registry(roots, tags, config.max_total_photons)
        ens = MixedEnsemble.pure(weak_coherent_state(reg, "M", config.coherent_amplitude))
    ens = apply_linear(ens, "M", "N", BS50)
    if source == "single":
        detectors = _detectors(reg, config, {"T": "T", "N": "D2"}, perfect=("T",))
        pair = ("T", "D2")
    elif dets == "d1d2":
        detectors = _detectors(reg, config, {"M": "D1", "N": "D2"})
        pair = ("D1", "D2")
    else:
        detectors = _detectors(reg, config, {"N": "D3", "V": "D4"})
        pair = ("D3", "D4")
    return ens, detectors, pair


def fringe_rates(config: ExperimentConfig, thetas=None, lock_phase=None) -> np.ndarray:
    """Expected per-gate coincidence rate at each half-wave-plate angle."""
    thetas = config.theta_grid if thetas is None else np.asarray(thetas, dtype=float)
    ens0, detectors, pair = _prepare(config)
    if lock_phase is None:
        lock_phase = LOCK_PHASE[(config.source, config.detectors)]
    channel = MemoryChannel(
        config.beta, config.storage_time_ns, config.gate_enabled, config.leak_fraction, config.phase_jitter
    )
    ens0 = apply_family_phase(ens0, "N", lock_phase)
    rates = []
    for theta in thetas:
        alpha = PhaseModuleSetting(float(theta)).alpha
        ens = apply_family_phase(ens0, "M", alpha)
        if config.stage == "after":
            ens = memory_apply(ens, channel, ["M", "N"])
        ens = apply_mode_mismatch(ens, "N", config.mode_mismatch)
        ens = apply_linear(ens, "M", "N", BS50)
        if config.detectors == "d3d4":
            ens = apply_linear(ens, "N", "V", BS50)
        rates.append(coincidence_rate(ens, pair, detectors) + config.background)
    return np.array(rates)


def run_phase_fringe(config: ExperimentConfig) -> ScenarioResult:
    """Phase fringe for the configured source, stage and detector pair."""
    grid = config.theta_grid
    scan = _sampled_scan(config, grid, fringe_rates(config, grid), "theta")
    model, k = FIT_MODEL[(config.source, config.detectors)]
    fit = fit_fringe(scan, k=k, model=model, use_expected=config.noiseless)
    scenario = f"fringe-{config.source}-{config.stage}-{config.detectors}"
    return ScenarioResult(scenario, scan, fit, fit.visibility, fit.visibility_stderr)


@dataclass
class Classification:
    label: str
    residual_ratio: float
    noon_fit: FitResult
    coherent_fit: FitResult

    @property
    def confidence(self) -> float:
        return self.residual_ratio


def classify_source(scan, use_expected: bool = False) -> Classification:
    """Decide NOON vs coherent input from the D3/D4 fringe shape."""
    noon = fit_fringe(scan, k=2, model="cosine_k", use_expected=use_expected)
    coh = fit_fringe(scan, model="cosine_squared", use_expected=use_expected)
    lo, hi = sorted((noon.residual_rms, coh.residual_rms))
    ratio = hi / lo if lo > 0 else math.inf
    if hi == 0.0 or ratio < AMBIGUITY_RATIO:
        label = "ambiguous"
    else:
        label = "noon" if noon.residual_rms < coh.residual_rms else "coherent"
    return Classification(label, ratio, noon, coh)


def fringe_visibility(config: ExperimentConfig) -> float:
    """Fitted V1 of the noiseless fringe for ``config``."""
    return run_phase_fringe(config.replace(noiseless=True)).visibility


def calibrate(config: ExperimentConfig, single_before: float = 0.909, single_after: float = 0.820,
              tol: float = 1e-9, max_rounds: int = 50) -> ExperimentConfig:
    """Choose mode mismatch and background so the single-photon fringes hit
    the target visibilities before and after storage.

    The background is shared by both stages, so the two conditions are
    solved alternately until neither parameter moves by more than ``tol``.
    """
    single = config.replace(source="single", detectors="d1d2", noiseless=True)
    m, b = single.mode_mismatch, single.background
    for _ in range(max_rounds):
        before = single.replace(stage="before", background=b)
        m_new = brentq(lambda x: fringe_visibility(before.replace(mode_mismatch=x)) - single_before, 1e-6, 1.0, xtol=1e-13)
        after = single.replace(stage="after", mode_mismatch=m_new)
        if fringe_visibility(after.replace(background=0.0)) < single_after:
            raise ScenarioError("target after-storage visibility is above the noise-free value")
        b_new = brentq(lambda x: fringe_visibility(after.replace(background=x)) - single_after, 0.0, 1.0, xtol=1e-13)
        done = abs(m_new - m) < tol and abs(b_new - b) < tol
        m, b = m_new, b_new
        if done:
            return config.replace(mode_mismatch=m, background=b)
    raise ScenarioError("visibility calibration did not converge")
