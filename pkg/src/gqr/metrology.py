"""Gaussian fidelity and quantum Fisher information (QFI) for one-parameter families.

Two independent numerical routes are provided:

* :func:`qfi_fd` differentiates the root fidelity twice,
  ``QFI(x) = -4 d^2/dy^2 sqrt(F(rho_x, rho_y))`` at ``y = x``;
* :func:`qfi_sld` evaluates the symmetric-logarithmic-derivative formula
  ``1/2 vec(dV)^T (V (x) V - Omega (x) Omega / 4)^+ vec(dV) + dm^T V^{-1} dm``
  in the Williamson basis of ``V``, where it is block diagonal.

The closed-form expressions for the sensing schemes live at the bottom of
this module.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import symplectic as sp
from .errors import DimensionError, DomainError, NumericalFailure, StepTooLargeError
from .symplectic import GaussianState

PURE_TOL = 1e-9
# below this 4 a^2 - 1 is treated as an exact zero in the fidelity kernel
SQRT_CLAMP = 1e-12

Family = Callable[[float], GaussianState]


class QfiMethod(str, enum.Enum):
    FINITE_DIFF_FIDELITY = "fd_fidelity"
    SLD = "sld"
    TWO_MODE_INVARIANTS = "two_mode_invariants"
    CLOSED_FORM = "closed_form"


@dataclass(frozen=True)
class QfiResult:
    value: float
    method: QfiMethod
    step: float | None = None
    est_error: float | None = None
    regularized: bool = False
    tag: str | None = None

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class TwoModeFidelityInvariants:
    delta: float
    gamma: float
    lam: float

    @property
    def x(self) -> float:
        return float(np.sqrt(max(self.gamma, 0.0)) + np.sqrt(max(self.lam, 0.0)))


# -- fidelity -------------------------------------------------------------


def _same_shape(a: GaussianState, b: GaussianState):
    if a.n_modes != b.n_modes:
        raise DimensionError(f"mode counts differ: {a.n_modes} vs {b.n_modes}")


def is_pure(state: GaussianState, tol: float = PURE_TOL) -> bool:
    return bool(sp.symplectic_eigenvalues(state.cov)[-1] < 0.5 + tol)


def _mean_factor(a: GaussianState, b: GaussianState, V: np.ndarray) -> float:
    dm = a.mean - b.mean
    return float(np.exp(-0.5 * dm @ np.linalg.solve(V, dm)))


def overlap(a: GaussianState, b: GaussianState) -> float:
    """``tr(rho_a rho_b)``."""
    _same_shape(a, b)
    V = a.cov + b.cov
    return _mean_factor(a, b, V) / np.sqrt(np.linalg.det(V))


def fidelity(a: GaussianState, b: GaussianState) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho_a) rho_b sqrt(rho_a)))^2``.

    Uses ``tr(rho_a rho_b)`` when either state is pure, otherwise the
    general multimode expression built from the auxiliary matrix
    ``V_aux = Omega^T (V_a + V_b)^{-1} (Omega/4 + V_b Omega V_a)``.
    """
    _same_shape(a, b)
    if is_pure(a) or is_pure(b):
        return min(1.0, overlap(a, b))
    n = a.n_modes
    om = sp.symplectic_form(n)
    V = a.cov + b.cov
    Vaux = om.T @ np.linalg.solve(V, om / 4 + b.cov @ om @ a.cov)
    ev = np.linalg.eigvals(Vaux @ om)
    amp = np.sort(np.abs(ev.imag))[0::2]
    t = 4 * amp**2 - 1
    t = np.where(t < SQRT_CLAMP, 0.0, t)
    kernel = np.prod((1 + np.sqrt(t) / (2 * amp)) ** 2)
    ftot4 = 4.0**n * np.linalg.det(Vaux) * kernel / np.linalg.det(V)
    if ftot4 <= 0:
        raise NumericalFailure(f"non-positive fidelity kernel {ftot4:.3e}")
    return float(min(1.0, np.sqrt(ftot4) * _mean_factor(a, b, V)))


def two_mode_invariants(a: GaussianState, b: GaussianState) -> TwoModeFidelityInvariants:
    """``Delta = det(V_a + V_b)``, ``Gamma = 16 det(Om V_a Om V_b - I/4)``,
    ``Lambda = 16 det(V_a + i Om/2) det(V_b + i Om/2)``."""
    if a.n_modes != 2 or b.n_modes != 2:
        raise DimensionError("two-mode invariants need two-mode states")
    om = sp.symplectic_form(2)
    delta = np.linalg.det(a.cov + b.cov)
    gamma = 16 * np.linalg.det(om @ a.cov @ om @ b.cov - np.eye(4) / 4)
    lam = 16 * np.linalg.det(a.cov + 0.5j * om).real * np.linalg.det(b.cov + 0.5j * om).real
    return TwoModeFidelityInvariants(float(delta), float(gamma), float(max(lam, 0.0)))


def fidelity_two_mode(a: GaussianState, b: GaussianState) -> float:
    """Two-mode fidelity from ``Delta, Gamma, Lambda`` (cross-check route)."""
    inv = two_mode_invariants(a, b)
    x = inv.x
    denom = x - np.sqrt(max(x * x - inv.delta, 0.0))
    return float(_mean_factor(a, b, a.cov + b.cov) / denom)


# -- finite differences ---------------------------------------------------


def _check_stencil(x, reach, domain):
    if domain is None:
        return
    lo, hi = domain
    if not (lo < x - reach and x + reach < hi):
        raise StepTooLargeError(
            f"stencil [{x - reach:.3g}, {x + reach:.3g}] leaves the domain ({lo}, {hi})"
        )


def default_fd_step(x: float) -> float:
    return 0.05 * min(x, 1.0 - x)


def default_sld_step(x: float) -> float:
    return 1e-3 * min(x, 1.0 - x)


def second_derivative(f: Callable[[float], float], x: float, h: float) -> tuple[float, float]:
    """Five-point second derivative with one Richardson refinement.

    Returns ``(value, error_estimate)``.
    """
    f0 = f(x)

    def d2(step):
        return (-f(x + 2 * step) + 16 * f(x + step) - 30 * f0
                + 16 * f(x - step) - f(x - 2 * step)) / (12 * step**2)

    coarse, fine = d2(h), d2(h / 2)
    return (16 * fine - coarse) / 15, abs(fine - coarse) / 15


def derivative(f, x: float, h: float):
    """Five-point central first derivative of an array-valued function."""
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


def qfi_fd(
    family: Family,
    x: float,
    step: float | None = None,
    domain: tuple[float, float] | None = (0.0, 1.0),
    tol: float = 1e-7,
    max_halvings: int = 3,
    fidelity_fn: Callable | None = None,
) -> QfiResult:
    """QFI from the second derivative of the root fidelity.

    ``fidelity_fn`` replaces the Gaussian fidelity, e.g. for density matrices.
    """
    fid = fidelity if fidelity_fn is None else fidelity_fn
    h = default_fd_step(x) if step is None else step
    _check_stencil(x, 2 * h, domain)
    ref = family(x)

    def root_f(y):
        return np.sqrt(fid(ref, family(y)))

    value, err = second_derivative(root_f, x, h)
    for _ in range(max_halvings):
        if err <= tol * max(1.0, abs(value)):
            break
        h2 = h / 2
        v2, e2 = second_derivative(root_f, x, h2)
        if e2 >= err:
            break
        h, value, err = h2, v2, e2
    qfi = -4 * value
    if qfi < -max(1e-8, 40 * err):
        raise NumericalFailure(f"negative QFI {qfi:.3e} (error estimate {4 * err:.1e})")
    return QfiResult(max(qfi, 0.0), QfiMethod.FINITE_DIFF_FIDELITY, h, 4 * err)


def _sld_from_moments(state: GaussianState, dcov: np.ndarray, dmean: np.ndarray):
    wd = sp.williamson(state)
    Sinv = np.linalg.inv(wd.Sw)
    P = Sinv @ dcov @ Sinv.T
    nu = wd.nu
    n = len(nu)
    total = 0.0
    regularized = False
    r = 1 / np.sqrt(2)
    for a in range(n):
        for b in range(n):
            blk = P[2 * a:2 * a + 2, 2 * b:2 * b + 2]
            p, q, rr, s = blk[0, 0], blk[0, 1], blk[1, 0], blk[1, 1]
            lam = nu[a] * nu[b]
            comps = (
                (r * (p + s), lam - 0.25),
                (r * (p - s), lam + 0.25),
                (r * (q + rr), lam + 0.25),
                (r * (q - rr), lam - 0.25),
            )
            for u, e in comps:
                if e < PURE_TOL:
                    regularized = True
                    continue
                total += u * u / e
    value = 0.5 * total + float(dmean @ np.linalg.solve(state.cov, dmean))
    return value, regularized


def qfi_sld_moments(state: GaussianState, dcov: np.ndarray, dmean: np.ndarray) -> QfiResult:
    """SLD QFI given the state and the derivatives of its moments."""
    value, reg = _sld_from_moments(state, np.asarray(dcov), np.asarray(dmean))
    return QfiResult(value, QfiMethod.SLD, regularized=reg)


def qfi_single_mode(cov: np.ndarray, dcov: np.ndarray, dmean: np.ndarray) -> float:
    """Closed-form QFI of a one-mode Gaussian family from its moment derivatives.

    Uses the purity ``mu = 1 / (2 sqrt(det cov))``; the purity term is dropped
    at a pure point, where its numerator vanishes as well.
    """
    cov, dcov, dmean = np.asarray(cov), np.asarray(dcov), np.asarray(dmean)
    inv = np.linalg.inv(cov)
    A = inv @ dcov
    det = float(np.linalg.det(cov))
    mu = 0.5 / np.sqrt(det)
    dmu = -0.5 * mu * float(np.trace(A))
    value = 0.5 * float(np.trace(A @ A)) / (1 + mu**2) + float(dmean @ inv @ dmean)
    if 1 - mu**4 > PURE_TOL:
        value += 2 * dmu**2 / (1 - mu**4)
    return value


def qfi_sld(
    family: Family,
    x: float,
    step: float | None = None,
    domain: tuple[float, float] | None = (0.0, 1.0),
) -> QfiResult:
    """SLD QFI with moment derivatives from five-point central differences.

    Symplectic eigenvalues equal to 1/2 (pure modes) make the linear system
    singular; those components are dropped, which is exact when the pure
    modes persist in a neighbourhood of ``x``. The result is flagged
    ``regularized`` when that happens.
    """
    h = default_sld_step(x) if step is None else step
    _check_stencil(x, 2 * h, domain)
    state = family(x)
    dcov = derivative(lambda y: family(y).cov, x, h)
    dmean = derivative(lambda y: family(y).mean, x, h)
    value, reg = _sld_from_moments(state, dcov, dmean)
    # truncation estimate from a step-doubled derivative, when it fits
    est = 0.0
    if domain is None or (domain[0] < x - 4 * h and x + 4 * h < domain[1]):
        v2, _ = _sld_from_moments(state, derivative(lambda y: family(y).cov, x, 2 * h), dmean)
        est = abs(v2 - value) / 15
    return QfiResult(value, QfiMethod.SLD, h, est, reg)


def qfi_two_mode(
    family: Family,
    x: float,
    step: float | None = None,
    domain: tuple[float, float] | None = (0.0, 1.0),
) -> QfiResult:
    """Two-mode QFI ``(Delta'' - 2 X'') / (X - 1)`` with ``X = sqrt(Gamma) + sqrt(Lambda)``.

    Derivatives are taken in the second argument at ``x' = x``; a mean
    contribution ``dm^T V^{-1} dm`` is added for displaced families.
    """
    h = default_fd_step(x) if step is None else step
    _check_stencil(x, 2 * h, domain)
    ref = family(x)
    if ref.n_modes != 2:
        raise DimensionError("two-mode route needs two-mode states")

    def inv(y):
        return two_mode_invariants(ref, family(y))

    d2_delta, e1 = second_derivative(lambda y: inv(y).delta, x, h)
    d2_x, e2 = second_derivative(lambda y: inv(y).x, x, h)
    x0 = inv(x).x
    if x0 - 1 <= 0:
        raise NumericalFailure("two-mode route is singular for globally pure pairs")
    dmean = derivative(lambda y: family(y).mean, x, default_sld_step(x) if domain else h)
    value = (d2_delta - 2 * d2_x) / (x0 - 1) + float(dmean @ np.linalg.solve(ref.cov, dmean))
    return QfiResult(value, QfiMethod.TWO_MODE_INVARIANTS, h, (e1 + 2 * e2) / (x0 - 1))


# -- reparameterization ---------------------------------------------------


def reparameterize_qfi(kappa: float) -> dict:
    """Factors converting QFI in ``theta = arccos(sqrt(kappa))`` or ``sqrt(kappa)`` to ``kappa``.

    ``QFI(kappa) = factor * QFI(other)``.
    """
    if not 0.0 < kappa < 1.0:
        raise DomainError("kappa must lie in (0, 1)")
    return {"theta": 1.0 / (4 * kappa * (1 - kappa)), "sqrt_kappa": 1.0 / (4 * kappa)}


# -- closed forms ---------------------------------------------------------


def _check_open_kappa(kappa):
    if not 0.0 < kappa < 1.0:
        raise DomainError(f"closed forms need kappa in (0, 1), got {kappa}")


def qfi_coherent_thermal(n_th: float, n_b: float, kappa: float, z_norm_sq: float) -> float:
    """Displaced-thermal probe through a thermal attenuator (shadow effect kept)."""
    _check_open_kappa(kappa)
    mix = (1 - kappa) * n_b + kappa * n_th
    first = 0.0 if (n_th - n_b) == 0 else (n_th - n_b) ** 2 / ((mix + 1) * mix)
    second = z_norm_sq / (2 * kappa * (2 * n_th * kappa + 2 * n_b * (1 - kappa) + 1))
    return first + second


def qfi_coherent(n_s: float, n_b: float, kappa: float) -> float:
    """Coherent probe carrying all of ``N_S``."""
    return qfi_coherent_thermal(0.0, n_b, kappa, 2 * n_s)


def coherent_leading_coefficient(n_s: float, n_b: float) -> float:
    """``lim kappa (1 - kappa) QFI`` for the coherent probe."""
    return n_s / (2 * n_b + 1)


def qfi_tmss(n_s: float, n_b: float, kappa: float) -> float:
    _check_open_kappa(kappa)
    num = n_s * (n_s + 1) - kappa * (n_s**2 - n_b * (2 * n_s + 1))
    den = kappa * (1 - kappa) * (1 + (1 - kappa) * (n_s + n_b + 2 * n_s * n_b))
    return num / den


def tmss_leading_coefficient(n_s: float, n_b: float) -> float:
    return n_s * (n_s + 1) / (1 + n_b + n_s + 2 * n_b * n_s)


def qfi_model1(n_s: float, n_b: float, kappa: float) -> float:
    _check_open_kappa(kappa)
    k = kappa
    g1 = ((n_s + 1) * (1 + n_s + n_s * n_b)
          + k * (n_b - n_s) * (1 + n_s + n_b + 2 * n_s * n_b)
          + k**2 * n_b * (n_s**2 - n_b * (2 * n_s + 1)))
    g2 = (n_s + 1 + (1 - k) * n_b * n_s) * (2 + (2 - k) * n_s + (1 - k) * n_b * (2 * n_s + 1))
    return n_s / (k * (1 - k)) * g1 / g2


def model1_leading_coefficient(n_s: float, n_b: float) -> float:
    return n_s * (n_s + 1) / (2 + n_b + 2 * n_s + 2 * n_b * n_s)


def qfi_model1_noiseless(n_s: float, kappa: float) -> float:
    _check_open_kappa(kappa)
    return n_s * (1 + (1 - kappa) * n_s) / (kappa * (1 - kappa) * (2 + (2 - kappa) * n_s))


def qfi_model2_noiseless(n_s: float, kappa: float) -> float:
    _check_open_kappa(kappa)
    g = np.log(np.sqrt(n_s + 1) + np.sqrt(n_s))
    return g**2 / (2 * kappa * (1 - kappa))


def qfi_model2_asymptotic(n_s: float, n_b: float, kappa: float) -> float:
    """Leading large-``N_S``, small-``kappa`` term for the Hamiltonian model."""
    g = np.log(np.sqrt(n_s + 1) + np.sqrt(n_s))
    return ((n_b + 2) * g - n_b) ** 2 / (8 * kappa * (1 + n_b))


def qfi_fock(n_s: float, kappa: float) -> float:
    _check_open_kappa(kappa)
    return n_s / (kappa * (1 - kappa))


def qfi_coherent_noiseless(n_s: float, kappa: float) -> float:
    _check_open_kappa(kappa)
    return n_s / kappa


def theorem1_bound(n_s: float, n_b: float, kappa: float) -> float:
    _check_open_kappa(kappa)
    return (n_s + n_b + 2 * n_s * n_b) / (kappa * (1 - kappa))


def theorem1_saturating(n_s: float, n_b: float, kappa: float) -> float:
    return (n_s + n_b + 2 * n_s * n_b) / (2 * kappa)
