import math

import numpy as np
import pytest

from noonsim.detection import DetectorModel, coincidence_probability
from noonsim.fock import MixedEnsemble, ModeRegistry, basis_state, make_state, occupation_probability
from noonsim.optics import (
    H_POL,
    MemoryChannel,
    OverlapModel,
    PhaseModuleSetting,
    apply_family_phase,
    apply_linear,
    apply_mode_mismatch,
    apply_path_phase,
    beam_splitter,
    hwp,
    memory_apply,
    mix_distinguishability,
    phase_module,
    qwp,
    twin,
    twin_registry,
    weak_coherent_state,
)

SQ2 = math.sqrt(2)


def test_beam_splitter_limits():
    np.testing.assert_allclose(beam_splitter(0.0), np.eye(2))
    np.testing.assert_allclose(beam_splitter(0.5), np.array([[1, 1j], [1j, 1]]) / SQ2)
    np.testing.assert_allclose(beam_splitter(1.0), np.array([[0, 1j], [1j, 0]]))
    for r in (0.0, 0.3, 0.5, 1.0):
        u = beam_splitter(r)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-14)
    with pytest.raises(ValueError):
        beam_splitter(1.2)


def test_qwp_values(rng):
    np.testing.assert_allclose(qwp(math.pi / 4).entries, np.array([[1j, 1], [1, 1j]]) / SQ2, atol=1e-15)
    np.testing.assert_allclose(qwp(0.0).entries, np.diag([1j - 1, 1j + 1]) / SQ2, atol=1e-15)
    assert all(qwp(q).is_unitary() for q in rng.uniform(-10, 10, 100))


def test_hwp_values(rng):
    np.testing.assert_allclose(hwp(0.0).entries, np.diag([1, -1]))
    np.testing.assert_allclose(hwp(math.pi / 4).entries, [[0, -1], [-1, 0]], atol=1e-15)
    for theta in rng.uniform(-10, 10, 100):
        m = hwp(theta).entries
        np.testing.assert_allclose(m @ m, np.eye(2), atol=1e-14)
        np.testing.assert_allclose(m, m.conj().T)
        assert np.linalg.det(m) == pytest.approx(-1.0)


def test_phase_module_examples():
    out = phase_module(PhaseModuleSetting(0.0)) @ H_POL
    np.testing.assert_allclose(out, -H_POL, atol=1e-15)
    # written-out plate matrices at q = pi/4 and theta = pi/4
    q = np.array([[1j, 1], [1, 1j]]) / SQ2
    h = np.array([[0, -1], [-1, 0]])
    expected = q @ h @ q @ H_POL
    out = phase_module(PhaseModuleSetting(math.pi / 4)) @ H_POL
    np.testing.assert_allclose(out, expected, atol=1e-15)
    np.testing.assert_allclose(out, -1j * H_POL, atol=1e-15)


def test_phase_module_identity_random(rng):
    for theta in rng.uniform(-math.pi, math.pi, 100):
        setting = PhaseModuleSetting(theta)
        m = phase_module(setting).entries
        assert abs(m[1, 0]) < 1e-12
        np.testing.assert_allclose(m @ H_POL, -np.exp(2j * theta) * H_POL, atol=1e-12)
        assert setting.alpha == pytest.approx(2 * theta, abs=1e-12)
        assert phase_module(setting).is_unitary()


def test_alpha_undefined_off_design():
    with pytest.raises(ValueError):
        PhaseModuleSetting(0.3, q1=0.1).alpha


def test_path_phase(noon):
    assert apply_path_phase(noon, "M", 0.0).amplitudes() == noon.amplitudes()
    reg = ModeRegistry(("M", "N"), 2)
    two = basis_state(reg, {"M": 2})
    assert apply_path_phase(two, "M", math.pi / 2).amplitude((2, 0)) == pytest.approx(-1.0)
    shifted = apply_path_phase(noon, "M", 0.77)
    for n in range(3):
        assert occupation_probability(shifted, {"M": n}) == pytest.approx(occupation_probability(noon, {"M": n}))
    with pytest.raises(KeyError):
        apply_path_phase(noon, "Q", 0.1)


def test_overlap_model():
    assert OverlapModel(20.0, 0.0).xi == 1.0
    xs = [OverlapModel(20.0, dt).xi for dt in (0, 5, 10, 20, 40, 80)]
    assert all(a > b for a, b in zip(xs, xs[1:]))
    assert OverlapModel(20.0, -10).xi == OverlapModel(20.0, 10).xi
    with pytest.raises(ValueError):
        OverlapModel(0.0)


def _hom_coincidence(ens):
    out = apply_linear(ens, "M", "N", beam_splitter(0.5))
    reg = out.registry
    dets = {m: DetectorModel("D1") for m in ("M", "M:t")} | {m: DetectorModel("D2") for m in ("N", "N:t")}
    return coincidence_probability(out, ("D1", "D2"), dets)


@pytest.mark.parametrize("xi", [1.0, 0.0, 0.9117, 0.5])
def test_mix_distinguishability_hom(xi):
    reg = twin_registry(["M", "N"], ["t"], 2)
    ens = mix_distinguishability(reg, "M", "N", xi)
    assert len(ens) == (1 if xi in (0.0, 1.0) else 2)
    # per-component: indistinguishable pair never splits, orthogonal pair splits half the time
    per_component = sum(w * (0.0 if occupation_probability(s, {"N": 1}) else 0.5) for w, s in ens)
    got = _hom_coincidence(ens)
    assert got == pytest.approx(per_component, abs=1e-12)
    assert got == pytest.approx((1 - xi ** 2) / 2, abs=1e-12)


def test_mix_distinguishability_matches_hom_visibility():
    reg = twin_registry(["M", "N"], ["t"], 2)
    dip = _hom_coincidence(mix_distinguishability(reg, "M", "N", 0.9117))
    base = _hom_coincidence(mix_distinguishability(reg, "M", "N", 0.0))
    assert (base - dip) / base == pytest.approx(0.9117 ** 2, abs=1e-12)
    assert (base - dip) / base == pytest.approx(0.83, abs=2e-3)
    with pytest.raises(ValueError):
        mix_distinguishability(reg, "M", "N", 1.1)


def test_memory_identity(noon):
    out = memory_apply(noon, MemoryChannel(1.0), ["M", "N"])
    assert len(out) == 1
    assert out.components[0][1].amplitudes() == pytest.approx(noon.amplitudes())


def test_memory_pair_survival(noon):
    out = memory_apply(noon, MemoryChannel(0.2), ["M", "N"])
    dist = out.photon_number_distribution()
    assert dist[2] == pytest.approx(0.04, abs=1e-12)
    assert dist[1] == pytest.approx(2 * 0.2 * 0.8, abs=1e-12)
    assert dist[0] == pytest.approx(0.64, abs=1e-12)
    assert sum(w for w, _ in out) == pytest.approx(1.0, abs=1e-12)


def test_memory_single_photon():
    reg = ModeRegistry(("M", "N"), 2)
    out = memory_apply(basis_state(reg, {"M": 1}), MemoryChannel(0.2), ["M"])
    dist = out.photon_number_distribution()
    assert dist == pytest.approx({1: 0.2, 0: 0.8})


@pytest.mark.parametrize("beta", [0.0, 0.13, 0.5, 0.91])
def test_memory_mean_photon_number(beta, rng):
    reg = ModeRegistry(("M", "N"), 4)
    s = make_state(reg, [((2, 0), 1.0), ((1, 1), 0.3j), ((0, 3), rng.normal()), ((2, 2), 0.4)])
    n_in = s.mean_photons("M") + s.mean_photons("N")
    out = memory_apply(s, MemoryChannel(beta), ["M", "N"])
    assert out.mean_photons("M") + out.mean_photons("N") == pytest.approx(beta * n_in, abs=1e-12)


def test_memory_coherence_survives_in_two_photon_sector(noon):
    out = memory_apply(noon, MemoryChannel(0.2), ["M", "N"])
    (w, s), = [(w, s) for w, s in out if sum(s.items()[0][0]) == 2]
    assert s.amplitudes() == pytest.approx(noon.amplitudes())


def test_ungated_memory_keeps_leaked_light():
    reg = twin_registry(["M", "N"], ["l"], 2)
    s = basis_state(reg, {"M": 1})
    gated = memory_apply(s, MemoryChannel(0.3, gate_enabled=True), ["M"])
    open_ = memory_apply(s, MemoryChannel(0.3, gate_enabled=False), ["M"])
    assert gated.mean_photons("M:l") == 0.0
    assert open_.mean_photons("M") == pytest.approx(0.3)
    assert open_.mean_photons("M:l") == pytest.approx(0.7)


def test_memory_phase_jitter_mixes_phases(noon):
    out = memory_apply(noon, MemoryChannel(1.0, phase_jitter=0.5), ["M", "N"])
    assert len(out) > 1
    assert sum(w for w, _ in out) == pytest.approx(1.0)


def test_weak_coherent_state():
    reg = ModeRegistry(("M", "N"), 4)
    vac = weak_coherent_state(reg, "M", 0.0)
    assert vac.amplitudes() == {(0, 0): 1.0}
    s = weak_coherent_state(reg, "M", 0.3)
    assert s.probabilities()[(0, 0)] == pytest.approx(math.exp(-0.09), abs=1e-7)
    wide = ModeRegistry(("M", "N"), 6)
    for a in (0.1, 0.3, 0.5, 0.5j):
        assert weak_coherent_state(wide, "M", a).mean_photons("M") == pytest.approx(abs(a) ** 2, abs=1e-4)
    with pytest.raises(ValueError):
        weak_coherent_state(reg, "M", 0.5)


def test_mode_mismatch_sets_single_photon_visibility():
    reg = twin_registry(["M", "N"], ["x"], 2)
    bs = beam_splitter(0.5)
    for overlap in (1.0, 0.9, 0.5):
        rates = []
        for alpha in (0.0, math.pi):
            s = apply_linear(basis_state(reg, {"M": 1}), "M", "N", bs)
            s = apply_family_phase(s, "M", alpha)
            s = apply_mode_mismatch(s, "N", overlap)
            s = apply_linear(s, "M", "N", bs)
            rates.append(s.mean_photons("M") + s.mean_photons("M:x"))
        hi, lo = max(rates), min(rates)
        assert (hi - lo) / (hi + lo) == pytest.approx(overlap, abs=1e-12)


def test_twin_labels():
    assert twin("N:l", "t") == "N:t:l"
    with pytest.raises(ValueError):
        twin("N:t", "t")
    assert twin_registry(["M"], ["l", "t"]).labels == ("M", "M:t", "M:l", "M:t:l")


def test_apply_linear_on_ensemble():
    reg = twin_registry(["M", "N"], ["t"], 2)
    ens = mix_distinguishability(reg, "M", "N", 0.5)
    out = apply_linear(ens, "M", "N", np.eye(2))
    assert isinstance(out, MixedEnsemble)
    with pytest.raises(KeyError):
        apply_linear(ens, "M", "Q", np.eye(2))
