import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gqr import symplectic as sp
from gqr.channels import FOUR_SCHEMES, Scheme, SchemeParams
from gqr.detection import (
    detect,
    fuchs_van_de_graaf_chain,
    fvg_qfi_bound,
    hypotheses,
    limit_coefficient,
    log10_fvg_qfi_bound,
    qce,
    s_overlap,
)
from gqr.errors import DomainError
from gqr.metrology import fidelity

from helpers import random_state

# number-basis oracle values (truncated density matrices at cutoff 60), frozen
ORACLE_Q_HALF_VACUUM_THERMAL1 = 0.7071067811865476
ORACLE_Q_HALF_COHERENT2_VACUUM = 0.3678794411714424
ORACLE_QCE_COHERENT1_VACUUM = 0.5000000000000002

FIG2B_M = np.logspace(4, 8, 9)


def coherent(z):
    return sp.displace(sp.vacuum(1, ["S"]), "S", z)


class TestOverlap:
    def test_identical(self):
        s_ = sp.apply(sp.two_mode_squeeze(0.5, "A", "B"), sp.tensor(sp.thermal(0.3, "A"), sp.vacuum(1, ["B"])))
        for s in (0.1, 0.5, 0.9):
            assert s_overlap(s_, s_, s) == pytest.approx(1.0, abs=1e-10)

    def test_oracle_values(self):
        assert s_overlap(sp.vacuum(1, ["S"]), sp.thermal(1.0), 0.5) == pytest.approx(
            ORACLE_Q_HALF_VACUUM_THERMAL1, abs=1e-6)
        assert s_overlap(coherent((np.sqrt(2), 0.0)), sp.vacuum(1, ["S"]), 0.5) == pytest.approx(
            ORACLE_Q_HALF_COHERENT2_VACUUM, abs=1e-6)

    def test_root_fidelity_when_pure(self):
        for n in (0.2, 1.0, 3.0):
            assert s_overlap(sp.vacuum(1, ["S"]), sp.thermal(n), 0.5) == pytest.approx(
                np.sqrt(fidelity(sp.vacuum(1, ["S"]), sp.thermal(n))), rel=1e-9)

    def test_domain(self):
        with pytest.raises(DomainError):
            s_overlap(sp.thermal(1.0), sp.thermal(2.0), 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 2))
    def test_log_convex(self, seed, n):
        rng = np.random.default_rng(seed)
        a, _ = random_state(rng, n)
        b, _ = random_state(rng, n)
        # keep the pair close enough that Q_s stays well above underflow
        b = sp.GaussianState(a.modes, a.mean + 0.3 * (b.mean - a.mean), 0.7 * a.cov + 0.3 * b.cov)
        s = np.linspace(0.02, 0.98, 21)
        lq = np.log([s_overlap(a, b, x) for x in s])
        second = lq[2:] - 2 * lq[1:-1] + lq[:-2]
        assert np.all(second >= -1e-9 * np.max(np.abs(lq)) - 1e-12)


class TestChernoff:
    def test_identical(self):
        t = sp.thermal(2.0)
        res = qce(t, t, [1, 10])
        assert res.qce == pytest.approx(0.0, abs=1e-12)
        assert all(v == pytest.approx(np.log10(0.5)) for _, v in res.p_err_envelope)

    def test_pure_pair(self):
        res = qce(coherent((1.0, 0.0)), sp.vacuum(1, ["S"]))
        assert res.qce == pytest.approx(ORACLE_QCE_COHERENT1_VACUUM, abs=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a, _ = random_state(rng, 2)
        b, _ = random_state(rng, 2)
        b = sp.GaussianState(a.modes, a.mean + 0.2 * (b.mean - a.mean), 0.8 * a.cov + 0.2 * b.cov)
        ab, ba = qce(a, b), qce(b, a)
        assert ab.qce == pytest.approx(ba.qce, abs=1e-8)
        assert ab.s_star == pytest.approx(1 - ba.s_star, abs=1e-3)

    def test_below_half_log_fidelity(self):
        for scheme in FOUR_SCHEMES:
            a, b = hypotheses(SchemeParams(scheme, 0.5, 0.2, 0.3))
            assert qce(a, b).qce >= -0.5 * np.log(fidelity(a, b)) - 1e-10


class TestBounds:
    def test_zero_copies(self):
        assert fvg_qfi_bound(0, 1e-4, 3.0) == 0.5
        assert log10_fvg_qfi_bound(0, 1e-4, 3.0) == pytest.approx(np.log10(0.5))

    def test_coherent_coefficient(self):
        assert limit_coefficient(SchemeParams(Scheme.COHERENT_THERMAL, 1.0, 0.0, 1e-4)) == pytest.approx(1.0, rel=1e-6)
        c = 1.0
        expected = 0.5 * np.exp(-0.5 * 1e6 * (np.pi / 2 - np.arccos(0.01)) ** 2 * c)
        assert fvg_qfi_bound(1e6, 1e-4, c) == pytest.approx(expected, rel=1e-12)
        a, b = hypotheses(SchemeParams(Scheme.COHERENT_THERMAL, 1.0, 0.0, 1e-4))
        assert 0.5 * np.exp(-1e6 * qce(a, b).qce) <= expected

    @pytest.mark.parametrize("scheme", FOUR_SCHEMES, ids=lambda s: s.value)
    @pytest.mark.parametrize("ns", [1e-2, 1e-1])
    def test_bound_dominates_exact(self, scheme, ns):
        p = SchemeParams(scheme, ns, 20.0, 1e-4)
        res = detect(p, FIG2B_M)
        for (M, exact), bound in zip(res.p_err_envelope, res.fvg_bound_envelope):
            assert bound[1] >= exact

    def test_bounds_monotone(self):
        vals = [fvg_qfi_bound(M, 1e-3, 2.0) for M in [0, 1, 10, 100, 1e3]]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_identical_states_chain(self):
        t = sp.thermal(1.0)
        ch = fuchs_van_de_graaf_chain(t, t, 100, 0.5, 1.0)
        assert ch.fidelity == pytest.approx(1.0) and ch.fidelity_bound == pytest.approx(0.5)

    def test_tmss_chain(self):
        p = SchemeParams(Scheme.TMSS, 1.0, 0.0, 1e-3)
        a, b = hypotheses(p)
        ch = fuchs_van_de_graaf_chain(a, b, 100, 1e-3, limit_coefficient(p))
        assert 0.5 * np.exp(-100 * qce(a, b).qce) <= ch.fidelity_bound

    @pytest.mark.parametrize("scheme", FOUR_SCHEMES, ids=lambda s: s.value)
    @pytest.mark.parametrize("ns", [1e-2, 1e-1])
    def test_chain_on_detection_grid(self, scheme, ns, record_property):
        p = SchemeParams(scheme, ns, 20.0, 1e-4)
        a, b = hypotheses(p)
        c = qce(a, b).qce
        lim = limit_coefficient(p)
        premise = []
        for M in FIG2B_M:
            ch = fuchs_van_de_graaf_chain(a, b, M, 1e-4, lim)
            assert 0.5 * np.exp(-M * c) <= ch.fidelity_bound * (1 + 1e-12)
            if ch.premise_holds:
                assert ch.fidelity_bound <= ch.quadratic_bound * (1 + 1e-12)
            premise.append(ch.premise_holds)
        record_property("fidelity_below_quadratic_bound", all(premise))


def test_limit_coefficients_match_closed_forms():
    from gqr.metrology import coherent_leading_coefficient, model1_leading_coefficient, tmss_leading_coefficient

    ns, nb = 0.7, 3.0
    assert limit_coefficient(SchemeParams(Scheme.TMSS, ns, nb, 0.1)) == pytest.approx(
        tmss_leading_coefficient(ns, nb), rel=1e-6)
    assert limit_coefficient(SchemeParams(Scheme.MODEL1, ns, nb, 0.1)) == pytest.approx(
        model1_leading_coefficient(ns, nb), rel=1e-6)
    assert limit_coefficient(SchemeParams(Scheme.COHERENT_THERMAL, ns, nb, 0.1)) == pytest.approx(
        coherent_leading_coefficient(ns, nb), rel=1e-6)
