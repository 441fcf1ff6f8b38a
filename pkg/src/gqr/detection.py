"""Symmetric hypothesis testing between no-target and target receiver states."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import symplectic as sp
from .channels import SchemeParams, receiver_theta, theta_family, theta_of_kappa
from .errors import DomainError, NumericalFailure
from .metrology import fidelity, qfi_sld
from .symplectic import GaussianState

S_CLAMP = 1e-6
S_TOL = 1e-6
# symplectic eigenvalues this close to 1/2 are snapped to exactly 1/2
PURE_SNAP = 1e-9

LN10 = np.log(10.0)


@dataclass(frozen=True)
class DetectionResult:
    qce: float
    s_star: float
    p_err_envelope: list = field(default_factory=list)
    fvg_bound_envelope: list = field(default_factory=list)


def _power_moments(state: GaussianState, s: float):
    """Williamson data of the (unnormalized) Gaussian operator ``rho^s``.

    Returns the prefactor ``prod_k G_s(2 nu_k)`` and the covariance
    ``Sw diag(Lambda_s(2 nu_k) / 2) Sw^T``.
    """
    wd = sp.williamson(state)
    x = 2 * np.where(wd.nu - 0.5 < PURE_SNAP, 0.5, wd.nu)
    plus, minus = (x + 1) ** s, (x - 1) ** s
    G = 2**s / (plus - minus)
    lam = (plus + minus) / (plus - minus)
    cov = wd.Sw @ np.diag(np.repeat(lam / 2, 2)) @ wd.Sw.T
    return float(np.prod(G)), cov


def s_overlap(a: GaussianState, b: GaussianState, s: float) -> float:
    """``tr(rho_a^s rho_b^(1-s))`` for Gaussian states, ``0 < s < 1``."""
    if not 0.0 < s < 1.0:
        raise DomainError(f"s must lie in (0, 1), got {s}")
    if a.n_modes != b.n_modes:
        raise DomainError("states must have the same number of modes")
    ga, va = _power_moments(a, s)
    gb, vb = _power_moments(b, 1 - s)
    V = va + vb
    dm = a.mean - b.mean
    return float(ga * gb / np.sqrt(np.linalg.det(V)) * np.exp(-0.5 * dm @ np.linalg.solve(V, dm)))


def _minimize_convex(f, lo, hi, tol):
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(res.x), float(res.fun)


def log_envelope(qce: float, Ms: Sequence[float]) -> list:
    """``(M, log10(exp(-M C) / 2))`` pairs."""
    return [(float(M), float(np.log10(0.5) - M * qce / LN10)) for M in Ms]


def qce(a: GaussianState, b: GaussianState, Ms: Sequence[float] = ()) -> DetectionResult:
    """Quantum Chernoff exponent ``-ln min_s tr(rho_a^s rho_b^(1-s))``."""
    samples = {}

    def log_q(s):
        q = s_overlap(a, b, s)
        samples[s] = q
        return np.log(q)

    try:
        s_star, logq = _minimize_convex(log_q, S_CLAMP, 1 - S_CLAMP, S_TOL)
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"Chernoff search failed; samples {samples}") from exc
    for s_end in (S_CLAMP, 1 - S_CLAMP):
        v = log_q(s_end)
        if v < logq:
            s_star, logq = s_end, v
    c = max(0.0, -logq)
    return DetectionResult(c, float(s_star), log_envelope(c, Ms))


def fvg_qfi_bound(M: float, kappa: float, limit_coefficient: float) -> float:
    """``exp(-(M/2) (pi/2 - arccos(sqrt(kappa)))^2 c) / 2``."""
    if not 0.0 < kappa < 1.0:
        raise DomainError("kappa must lie in (0, 1)")
    if limit_coefficient < 0:
        raise DomainError("limit coefficient must be >= 0")
    return float(0.5 * np.exp(-0.5 * M * quadratic_exponent(kappa, limit_coefficient)))


def quadratic_exponent(kappa: float, limit_coefficient: float) -> float:
    """Per-copy exponent ``(pi/2 - arccos(sqrt(kappa)))^2 c`` (without the 1/2)."""
    return float((np.pi / 2 - np.arccos(np.sqrt(kappa))) ** 2 * limit_coefficient)


def log10_fvg_qfi_bound(M: float, kappa: float, limit_coefficient: float) -> float:
    return float(np.log10(0.5) - 0.5 * M * quadratic_exponent(kappa, limit_coefficient) / LN10)


@dataclass(frozen=True)
class FvgChain:
    fidelity: float
    fidelity_bound: float
    quadratic_bound: float
    premise_holds: bool


def fuchs_van_de_graaf_chain(
    a: GaussianState, b: GaussianState, M: float, kappa: float, limit_coefficient: float
) -> FvgChain:
    """``F^{M/2}/2`` and the quadratic-in-angle bound for ``M`` copies.

    The second inequality only holds where ``sqrt(F)`` lies below
    ``exp(-(c/2) (pi/2 - theta)^2)``; ``premise_holds`` records whether it
    does at this point instead of assuming it.
    """
    F = fidelity(a, b)
    x = quadratic_exponent(kappa, limit_coefficient)
    premise = 0.5 * np.log(F) <= -0.5 * x + 1e-15
    return FvgChain(F, 0.5 * F ** (M / 2), 0.5 * np.exp(-0.5 * M * x), bool(premise))


def limit_coefficient(p: SchemeParams) -> float:
    """``lim_{kappa -> 0} kappa (1 - kappa) QFI(kappa)``, equal to ``QFI_theta(pi/2) / 4``."""
    res = qfi_sld(theta_family(p), np.pi / 2, step=1e-4, domain=None)
    return res.value / 4


def hypotheses(p: SchemeParams) -> tuple[GaussianState, GaussianState]:
    """(no target, target at ``p.kappa``) receiver states."""
    return receiver_theta(p, np.pi / 2), receiver_theta(p, theta_of_kappa(p.kappa))


def detect(p: SchemeParams, Ms: Sequence[float] = ()) -> DetectionResult:
    """Chernoff exponent, error envelope and the QFI bound envelope for a scheme."""
    rho0, rho1 = hypotheses(p)
    res = qce(rho0, rho1, Ms)
    c = limit_coefficient(p)
    bound = [(float(M), log10_fvg_qfi_bound(M, p.kappa, c)) for M in Ms]
    return DetectionResult(res.qce, res.s_star, res.p_err_envelope, bound)
