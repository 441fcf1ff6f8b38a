import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gqr import metrology as mt
from gqr import symplectic as sp
from gqr.channels import (
    FOUR_SCHEMES,
    Scheme,
    SchemeParams,
    family,
    parent_family,
    random_mixer,
    theta_family,
)
from gqr.errors import StepTooLargeError

from helpers import random_state


def sld(p, x=None):
    return mt.qfi_sld(family(p), p.kappa if x is None else x).value


class TestFidelity:
    def test_identical(self):
        s = sp.apply(sp.two_mode_squeeze(0.7, "A", "B"), sp.tensor(sp.thermal(0.4, "A"), sp.thermal(1.1, "B")))
        assert mt.fidelity(s, s) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("n", [0.1, 1.0, 4.0])
    def test_vacuum_thermal(self, n):
        # number-basis overlap <0|rho_th|0> = 1/(N+1)
        assert mt.fidelity(sp.vacuum(1, ["S"]), sp.thermal(n)) == pytest.approx(1 / (n + 1), rel=1e-12)

    def test_coherent_pair(self):
        z, w = np.array([0.4, -1.0]), np.array([1.5, 0.2])
        a = sp.displace(sp.vacuum(1, ["S"]), "S", z)
        b = sp.displace(sp.vacuum(1, ["S"]), "S", w)
        assert mt.fidelity(a, b) == pytest.approx(np.exp(-np.sum((z - w) ** 2) / 2), rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_symmetric_and_bounded(self, seed, n):
        rng = np.random.default_rng(seed)
        a, _ = random_state(rng, n)
        b, _ = random_state(rng, n)
        fab, fba = mt.fidelity(a, b), mt.fidelity(b, a)
        assert abs(fab - fba) <= 1e-10
        assert 0.0 <= fab <= 1.0 + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_one_only_for_equal_states(self, seed):
        rng = np.random.default_rng(seed)
        a, _ = random_state(rng, 2)
        b = sp.GaussianState(a.modes, a.mean + 1e-3 * rng.normal(size=4), a.cov)
        assert mt.fidelity(a, a) == pytest.approx(1.0, abs=1e-9)
        assert mt.fidelity(a, b) < 1.0 - 1e-9

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_two_mode_route(self, seed):
        rng = np.random.default_rng(seed)
        a, _ = random_state(rng, 2)
        b, _ = random_state(rng, 2)
        assert mt.fidelity_two_mode(a, b) == pytest.approx(mt.fidelity(a, b), rel=1e-8, abs=1e-12)


class TestNumericQfi:
    def test_coherent_spot(self):
        p = SchemeParams(Scheme.COHERENT_THERMAL, 1.0, 0.0, 0.25)
        assert mt.qfi_fd(family(p), 0.25).value == pytest.approx(4.0, rel=1e-6)
        assert sld(p) == pytest.approx(4.0, rel=1e-6)

    def test_tmss_and_circuit_spots(self):
        assert sld(SchemeParams(Scheme.TMSS, 1.0, 0.0, 0.5)) == pytest.approx(4.0, rel=1e-6)
        assert sld(SchemeParams(Scheme.MODEL1, 1.0, 0.0, 0.5)) == pytest.approx(12 / 7, rel=1e-6)
        assert sld(SchemeParams(Scheme.MODEL2, 1.0, 0.0, 0.5)) == pytest.approx(
            np.log(1 + np.sqrt(2)) ** 2 / 0.5, rel=1e-6)

    def test_thermal_only_probe(self):
        p = SchemeParams(Scheme.COHERENT_THERMAL, 1.0, 0.0, 0.5, n_th=1.0)
        assert sld(p) == pytest.approx(4 / 3, rel=1e-6)
        assert mt.qfi_coherent_thermal(1.0, 0.0, 0.5, 0.0) == pytest.approx(4 / 3)

    def test_pure_loss_pure_state(self):
        # QFI of the joint signal-environment state (nothing traced out)
        p = SchemeParams(Scheme.COHERENT_THERMAL, 1.5, 0.0, 0.3)
        assert mt.qfi_sld(parent_family(p), 0.3).value == pytest.approx(3.0 / (2 * 0.3 * 0.7), rel=1e-6)

    def test_theta_parametrized_tmss_is_flat(self):
        p = SchemeParams(Scheme.TMSS, 1.0, 0.0, 0.5)
        vals = [mt.qfi_sld(theta_family(p), np.arccos(np.sqrt(k)), domain=None).value for k in (0.2, 0.5, 0.8)]
        assert max(vals) - min(vals) <= 1e-4 * max(vals)

    def test_fd_matches_sld_two_mode(self):
        p = SchemeParams(Scheme.TMSS, 0.7, 0.5, 0.4)
        assert mt.qfi_two_mode(family(p), 0.4).value == pytest.approx(sld(p), rel=1e-5)

    def test_step_outside_domain(self):
        p = SchemeParams(Scheme.TMSS, 1.0, 0.0, 0.01)
        with pytest.raises(StepTooLargeError):
            mt.qfi_fd(family(p), 0.01, step=0.01)
        with pytest.raises(StepTooLargeError):
            mt.qfi_sld(family(p), 0.01, step=0.01)

    def test_pure_modes_flagged(self):
        p = SchemeParams(Scheme.COHERENT_THERMAL, 1.0, 0.0, 0.25)
        assert mt.qfi_sld(family(p), 0.25).regularized

    def test_reparameterization(self):
        f = mt.reparameterize_qfi(0.5)
        assert f["theta"] == pytest.approx(1.0) and f["sqrt_kappa"] == pytest.approx(0.5)


def _grid(n, seed=7):
    rng = np.random.default_rng(seed)
    return [(FOUR_SCHEMES[i % 4], float(rng.uniform(0.1, 3)), float(rng.uniform(0, 5)),
             float(rng.uniform(0.05, 0.95))) for i in range(n)]


@pytest.mark.parametrize("scheme,ns,nb,k", _grid(100))
def test_fd_agrees_with_sld(scheme, ns, nb, k):
    p = SchemeParams(scheme, ns, nb, k)
    fd = mt.qfi_fd(family(p), k).value
    assert abs(fd - sld(p)) / fd <= 1e-5


CLOSED = [
    (Scheme.COHERENT_THERMAL, mt.qfi_coherent),
    (Scheme.TMSS, mt.qfi_tmss),
    (Scheme.MODEL1, mt.qfi_model1),
]


@pytest.mark.parametrize("scheme,fn", CLOSED, ids=[s.value for s, _ in CLOSED])
@pytest.mark.parametrize("ns,nb,k", [(0.3, 0.0, 0.2), (1.0, 0.7, 0.5), (2.5, 3.0, 0.85), (0.8, 10.0, 0.05)])
def test_closed_forms(scheme, fn, ns, nb, k):
    assert sld(SchemeParams(scheme, ns, nb, k)) == pytest.approx(fn(ns, nb, k), rel=1e-5)


@pytest.mark.parametrize("ns,k", [(0.5, 0.1), (1.0, 0.5), (3.0, 0.9)])
def test_noiseless_rows(ns, k):
    assert sld(SchemeParams(Scheme.MODEL2, ns, 0.0, k)) == pytest.approx(mt.qfi_model2_noiseless(ns, k), rel=1e-5)
    assert sld(SchemeParams(Scheme.MODEL1, ns, 0.0, k)) == pytest.approx(mt.qfi_model1_noiseless(ns, k), rel=1e-5)
    assert mt.qfi_model1(ns, 0.0, k) == pytest.approx(mt.qfi_model1_noiseless(ns, k), rel=1e-12)
    assert mt.qfi_tmss(ns, 0.0, k) == pytest.approx(mt.qfi_fock(ns, k), rel=1e-12)


class TestClosedFormValues:
    def test_bound_example(self):
        assert mt.theorem1_bound(1.0, 1.0, 0.5) == pytest.approx(16.0)

    def test_leading_coefficients(self):
        assert mt.model1_leading_coefficient(1.0, 0.0) == pytest.approx(0.5)
        assert mt.tmss_leading_coefficient(1.0, 0.0) == pytest.approx(1.0)
        assert mt.tmss_leading_coefficient(2.0, 0.0) == pytest.approx(2.0)

    def test_low_photon_number_coherent(self):
        # to lowest order the split of N_S between thermal and coherent parts is irrelevant
        ns, k = 1e-5, 0.2
        for frac in (0.0, 0.3, 0.9):
            val = mt.qfi_coherent_thermal(frac * ns, 0.0, k, 2 * (1 - frac) * ns)
            assert val == pytest.approx(ns / k, rel=1e-4)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(FOUR_SCHEMES), st.floats(0.1, 3), st.floats(0, 5), st.floats(0.05, 0.95))
def test_partial_trace_cannot_increase_qfi(scheme, ns, nb, k):
    p = SchemeParams(scheme, ns, nb, k)
    assert sld(p) <= mt.qfi_sld(parent_family(p), k).value * (1 + 1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5), st.floats(0, 50), st.floats(0.01, 0.95))
def test_mixed_receiver_below_bound(seed, ns, nb, k):
    rng = np.random.default_rng(seed)
    p = SchemeParams(Scheme.IDLER_MIXER, ns, nb, k)
    val = mt.qfi_sld(family(p, random_mixer(rng)), k).value
    assert val <= mt.theorem1_bound(ns, nb, k) * (1 + 1e-6)


NB_STEPS = (0.0, 2.0, 5.0, 10.0, 20.0)


@pytest.mark.parametrize("ns", [10.0, 100.0])
def test_background_grows_scaled_qfi_once_present(ns):
    k = 1e-3
    vals = [k * (1 - k) * sld(SchemeParams(Scheme.MODEL2, ns, nb, k)) for nb in NB_STEPS[1:]]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_background_dependence_follows_asymptotic_shape():
    # the first step away from N_B = 0 lowers the QFI below N_S ~ 430, for the
    # exact value and the leading-order expression alike
    k = 1e-3
    exact = [sld(SchemeParams(Scheme.MODEL2, 100.0, nb, k)) for nb in NB_STEPS]
    approx = [mt.qfi_model2_asymptotic(100.0, nb, k) for nb in NB_STEPS]
    assert np.array_equal(np.sign(np.diff(exact)), np.sign(np.diff(approx)))
    assert exact[1] < exact[0]


def test_asymptotic_ratio():
    p = SchemeParams(Scheme.MODEL2, 1e4, 5.0, 1e-4)
    assert mt.qfi_model2_asymptotic(1e4, 5.0, 1e-4) / sld(p) == pytest.approx(1.0, abs=0.02)
