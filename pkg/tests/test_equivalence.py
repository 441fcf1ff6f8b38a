import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from gqr import symplectic as sp
from gqr.channels import MODES_4, SchemeParams, Scheme, model1_circuit, model2_generator, receiver, theta_of_kappa
from gqr.equivalence import (
    BranchFailure,
    GeneratorResult,
    analyze,
    circuit_symplectic,
    decompose,
    lie_basis,
    model1_equivalence,
    principal_generator,
    project_to_algebra,
    reassemble,
)
from gqr.errors import DomainError

MODES = ("A", "B")


class TestCircuit:
    def test_empty_is_identity(self):
        assert np.allclose(circuit_symplectic([], MODES).S, np.eye(4))

    def test_inverse_pair(self):
        S = circuit_symplectic([sp.beamsplitter(0.4, "A", "B"), sp.beamsplitter(-0.4, "A", "B")])
        assert np.allclose(S.S, np.eye(4), atol=1e-14)

    def test_circuit_matches_receiver(self):
        g, k, nb = 0.4, 0.3, 0.7
        S = circuit_symplectic(model1_circuit(g, theta_of_kappa(k)), MODES_4)
        start = sp.reorder(sp.tensor(sp.vacuum(3, ["S", "I1", "I2"]), sp.thermal(nb, "E")), MODES_4)
        out = sp.partial_trace(sp.apply(S, start), ["I1", "I2"])
        ref = receiver(SchemeParams(Scheme.MODEL1, np.sinh(g) ** 2, nb, k))
        assert np.allclose(out.cov, ref.cov, atol=1e-12)


class TestGenerator:
    def test_identity(self):
        res = principal_generator(np.eye(8))
        assert isinstance(res, GeneratorResult) and np.allclose(res.x, 0)

    def test_recovers_model2_generator(self):
        K = model2_generator(theta_of_kappa(0.3)).K * 0.5
        res = principal_generator(expm(K))
        assert isinstance(res, GeneratorResult)
        assert np.max(np.abs(res.x - K)) <= 1e-6

    def test_branch_failure(self):
        res = principal_generator(-np.eye(4))
        assert isinstance(res, BranchFailure)
        assert np.allclose(res.eigenvalues, -1)

    def test_rejects_non_symplectic(self):
        with pytest.raises(DomainError):
            principal_generator(np.diag([2.0, 1.0]))

    def test_projection(self):
        K = model2_generator(0.4).K
        xp, d = project_to_algebra(K)
        assert d < 1e-12 and np.allclose(xp, K)


class TestDecomposition:
    def test_basis_dimension(self):
        basis = lie_basis(MODES_4)
        assert len(basis) == 36
        A = np.column_stack([b.K.ravel() for b in basis])
        assert np.linalg.matrix_rank(A) == 36

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_coefficients_recovered(self, seed):
        rng = np.random.default_rng(seed)
        basis = lie_basis(MODES_4)
        c = rng.normal(size=36)
        x = sum(ci * b.K for ci, b in zip(c, basis))
        dec = decompose(x, MODES_4)
        got = np.array([dec.coefficients[b.label] for b in basis])
        assert np.max(np.abs(got - c)) <= 1e-10
        assert np.allclose(reassemble(dec), x)

    def test_beamsplitter_single_element(self):
        rep = analyze([sp.beamsplitter(0.3, "A", "B")], MODES)
        assert rep.ok
        nz = rep.decomposition.nonzero(1e-9)
        assert list(nz) == ["BS(A,B)"]
        assert abs(nz["BS(A,B)"]) == pytest.approx(0.3)

    def test_model2_weights(self):
        k = 0.3
        dec = decompose(model2_generator(theta_of_kappa(k)).K, MODES_4)
        assert dec.coupling("TMS", "S", "I1") == pytest.approx(np.sqrt(k))
        assert dec.coupling("TMS", "I1", "E") == pytest.approx(np.sqrt(1 - k))
        assert dec.coupling("TMS", "S", "I2") == pytest.approx(1.0)
        assert dec.coupling("TMS", "I2", "E") == pytest.approx(0.0, abs=1e-12)


class TestCircuitModel:
    @pytest.mark.parametrize("k", [0.1, 0.3, 0.5])
    def test_environment_idler_squeezer(self, k):
        rep = model1_equivalence(g=0.4, kappa=k)
        assert rep.ok
        assert rep.decomposition.coupling("TMS", "I2", "E") > 1e-6
        assert rep.round_trip_error <= 1e-6

    def test_energy_argument(self):
        a = model1_equivalence(n_s=np.sinh(0.4) ** 2, kappa=0.5)
        b = model1_equivalence(g=0.4, kappa=0.5)
        assert np.allclose(a.result.x, b.result.x)
        with pytest.raises(DomainError):
            model1_equivalence()

    def test_table_sorted(self):
        rows = model1_equivalence(g=0.4, kappa=0.5).table()
        assert [r[0] for r in rows] == sorted(r[0] for r in rows)

    def test_round_trip_random_circuits(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            els = [sp.beamsplitter(rng.uniform(-1, 1), "A", "B"), sp.two_mode_squeeze(rng.uniform(-0.5, 0.5), "A", "B"),
                   sp.phase_rotation(rng.uniform(-1, 1), "B").embed(MODES)]
            rep = analyze(els, MODES)
            if rep.ok:
                assert rep.round_trip_error <= 1e-6
