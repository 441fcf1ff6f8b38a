"""Circuit to quadratic-Hamiltonian equivalence.

Given the symplectic matrix ``S`` of a Gaussian circuit, look for a single
generator ``x`` in sp(2n, R) with ``exp(x) = S`` (the principal real matrix
logarithm) and express it in a labeled basis of physical couplings. A
nonzero coefficient on an element that the optical diagram does not contain
(for instance a two-mode squeezer between environment and idler) shows that
the circuit is not generated by the couplings of the diagram alone.

Only charge-free generators are attempted; when no real principal logarithm
exists a :class:`BranchFailure` report is returned instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm, logm

from . import symplectic as sp
from .channels import MODES_4, model1_circuit, squeezing_for_energy, theta_of_kappa
from .errors import DimensionError, DomainError
from .symplectic import SymplecticTransform

IMAG_TOL = 1e-9
ROUND_TRIP_TOL = 1e-6
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class BasisElement:
    label: str
    kind: str
    modes: tuple[str, ...]
    K: np.ndarray


@dataclass
class LieBasisDecomposition:
    modes: tuple[str, ...]
    coefficients: dict
    residual: float
    charges_used: list = field(default_factory=list)

    def coupling(self, kind: str, a: str, b: str | None = None) -> float:
        """Magnitude of a coupling summed over its two quadrature phases.

        ``kind`` is ``"BS"``, ``"TMS"`` (two modes) or ``"SQ"`` (one mode).
        """
        names = _pair_names(kind, a, b) if b is not None else (f"{kind}({a})", f"{kind}i({a})")
        return float(np.hypot(*(self.coefficients.get(n, 0.0) for n in names)))

    def nonzero(self, tol: float = 1e-9) -> dict:
        return {k: v for k, v in self.coefficients.items() if abs(v) > tol}


@dataclass
class BranchFailure:
    """No real principal logarithm: eigenvalue evidence for the report."""

    reason: str
    eigenvalues: np.ndarray
    charges_may_be_required: bool = True


@dataclass
class GeneratorResult:
    x: np.ndarray
    projection_defect: float
    round_trip_error: float
    imag_defect: float


def _pair_names(kind, a, b):
    return f"{kind}({a},{b})", f"{kind}i({a},{b})"


def lie_basis(modes: Sequence[str]) -> list[BasisElement]:
    """Labeled basis of sp(2n, R) built from ladder-operator bilinears.

    Per pair ``(j, k)``: ``BS = a_j^dag a_k - h.c.``, ``BSi = i(a_j^dag a_k + h.c.)``,
    ``TMS = a_j^dag a_k^dag - h.c.``, ``TMSi = i a_j^dag a_k^dag + h.c.``.
    Per mode: ``phase = i a^dag a``, ``SQ = (a^dag^2 - h.c.)/2``,
    ``SQi = (i a^dag^2 + h.c.)/2``.
    """
    modes = tuple(modes)
    n = len(modes)
    out = []

    def add(label, kind, ms, W, Z):
        out.append(BasisElement(label, kind, ms, sp.generator_from_ladder(W, Z)))

    for j in range(n):
        for k in range(j + 1, n):
            a, b = modes[j], modes[k]
            for phase, suffix in ((1.0, ""), (1j, "i")):
                W = np.zeros((n, n), dtype=complex)
                W[j, k] = phase
                W[k, j] = -np.conj(phase)
                add(f"BS{suffix}({a},{b})", "BS", (a, b), W, np.zeros((n, n)))
                Z = np.zeros((n, n), dtype=complex)
                Z[j, k] = Z[k, j] = phase
                add(f"TMS{suffix}({a},{b})", "TMS", (a, b), np.zeros((n, n)), Z)
    for j, a in enumerate(modes):
        W = np.zeros((n, n), dtype=complex)
        W[j, j] = 1j
        add(f"phase({a})", "phase", (a,), W, np.zeros((n, n)))
        for phase, suffix in ((1.0, ""), (1j, "i")):
            Z = np.zeros((n, n), dtype=complex)
            Z[j, j] = phase
            add(f"SQ{suffix}({a})", "SQ", (a,), np.zeros((n, n)), Z)
    return out


def circuit_symplectic(elements: Sequence[SymplecticTransform], modes: Sequence[str] | None = None) -> SymplecticTransform:
    """Ordered product: the first element acts first."""
    if modes is None:
        modes = []
        for e in elements:
            modes += [m for m in e.modes if m not in modes]
    modes = tuple(modes)
    total = sp.identity_transform(modes) if modes else SymplecticTransform((), np.zeros((0, 0)))
    for e in elements:
        total = total.then(e.embed(modes))
    return total


def project_to_algebra(x: np.ndarray) -> tuple[np.ndarray, float]:
    """Nearest element with ``Omega x`` symmetric, and the distance to it."""
    n = x.shape[0] // 2
    om = sp.symplectic_form(n)
    A = om @ x
    xp = -om @ (0.5 * (A + A.T))
    return xp, float(np.linalg.norm(x - xp))


def principal_generator(S: np.ndarray | SymplecticTransform) -> GeneratorResult | BranchFailure:
    """Real principal logarithm of a symplectic matrix, projected into sp(2n, R)."""
    if isinstance(S, SymplecticTransform):
        S = S.S
    S = np.asarray(S, dtype=float)
    if S.shape[0] != S.shape[1] or S.shape[0] % 2:
        raise DimensionError("S must be a square matrix of even size")
    if not sp.is_symplectic(S, tol=1e-8):
        raise DomainError("S is not symplectic")
    ev = np.linalg.eigvals(S)
    on_cut = np.abs(ev.imag) < 1e-12 * np.abs(ev)
    if np.any(on_cut & (ev.real < 0)):
        return BranchFailure("eigenvalues on the negative real axis", ev)
    L = logm(S)
    L = np.asarray(L, dtype=complex)
    imag = float(np.max(np.abs(L.imag))) if L.size else 0.0
    if imag > IMAG_TOL * max(1.0, float(np.max(np.abs(L.real)))):
        return BranchFailure(f"principal logarithm is not real (imaginary part {imag:.2e})", ev)
    x, defect = project_to_algebra(L.real)
    err = float(np.max(np.abs(expm(x) - S)))
    if err > ROUND_TRIP_TOL:
        return BranchFailure(f"exp(log S) misses S by {err:.2e}", ev)
    return GeneratorResult(x, defect, err, imag)


def decompose(x: np.ndarray, modes: Sequence[str]) -> LieBasisDecomposition:
    """Least-squares coefficients of ``x`` on :func:`lie_basis`."""
    modes = tuple(modes)
    if x.shape != (2 * len(modes), 2 * len(modes)):
        raise DimensionError("generator size does not match the mode list")
    basis = lie_basis(modes)
    A = np.column_stack([b.K.ravel() for b in basis])
    coef, *_ = np.linalg.lstsq(A, x.ravel(), rcond=None)
    residual = float(np.linalg.norm(x.ravel() - A @ coef))
    return LieBasisDecomposition(modes, {b.label: float(c) for b, c in zip(basis, coef)}, residual)


def reassemble(dec: LieBasisDecomposition) -> np.ndarray:
    basis = lie_basis(dec.modes)
    return sum(dec.coefficients[b.label] * b.K for b in basis)


@dataclass
class EquivalenceReport:
    modes: tuple[str, ...]
    result: GeneratorResult | BranchFailure
    decomposition: LieBasisDecomposition | None
    round_trip_error: float | None

    @property
    def ok(self) -> bool:
        return isinstance(self.result, GeneratorResult)

    def table(self, tol: float = 1e-9) -> list[tuple[str, float]]:
        if self.decomposition is None:
            return []
        return sorted(self.decomposition.nonzero(tol).items())


def analyze(elements: Sequence[SymplecticTransform], modes: Sequence[str] | None = None) -> EquivalenceReport:
    """Generator and coupling decomposition of a circuit."""
    total = circuit_symplectic(elements, modes)
    res = principal_generator(total)
    if isinstance(res, BranchFailure):
        return EquivalenceReport(total.modes, res, None, None)
    dec = decompose(res.x, total.modes)
    rt = float(np.max(np.abs(expm(reassemble(dec)) - total.S)))
    return EquivalenceReport(total.modes, res, dec, rt)


def model1_equivalence(g: float | None = None, kappa: float = 0.5, n_s: float | None = None) -> EquivalenceReport:
    """Decomposition of the circuit model at squeezing ``g`` (or energy ``n_s``)."""
    if g is None:
        if n_s is None:
            raise DomainError("give g or n_s")
        g = squeezing_for_energy(n_s)
    return analyze(model1_circuit(g, theta_of_kappa(kappa)), MODES_4)
