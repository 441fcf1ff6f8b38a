"""Transmitter/receiver schemes for reflectivity sensing.

Every scheme maps ``(N_S, N_B, kappa)`` to the Gaussian state of the register
that is measured at the receiver:

========================  ==========  =====================================
scheme                    register    pipeline
========================  ==========  =====================================
coherent                  S           displaced thermal probe, attenuator
tmss                      S, I        two-mode squeezer, attenuator on S
model1                    I1, I2      TMS(S,I1), BS(S,E), TMS(S,I2)
model2                    I1, I2      exp(g K) of the joint quadratic flow
idler_mixer               S, I        TMS(I,S), BS(S,E), mixer on (I,E)
========================  ==========  =====================================

Receivers are built internally from the beamsplitter angle
``theta = arccos(sqrt(kappa))`` so the families stay smooth through
``kappa = 0`` (``theta = pi/2``); see :func:`family`.

The squeezer in the two-mode transmitter is written with ``a_S^dag a_I`` in
some references; the physics (both modes at ``sinh(g)^2`` photons) requires
``a_S^dag a_I^dag`` and that is what is implemented.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.linalg import expm

from . import symplectic as sp
from .errors import ContractError, DomainError
from .symplectic import GaussianState, SymplecticTransform


class Scheme(str, enum.Enum):
    COHERENT_THERMAL = "coherent"
    TMSS = "tmss"
    MODEL1 = "model1"
    MODEL2 = "model2"
    IDLER_MIXER = "idler_mixer"


FOUR_SCHEMES = (Scheme.COHERENT_THERMAL, Scheme.TMSS, Scheme.MODEL1, Scheme.MODEL2)


def squeezing_for_energy(n_s: float) -> float:
    """``g = log(sqrt(N_S + 1) + sqrt(N_S)) = arcsinh(sqrt(N_S))``."""
    if n_s < 0:
        raise DomainError(f"N_S must be >= 0, got {n_s}")
    return float(np.arcsinh(np.sqrt(n_s)))


def theta_of_kappa(kappa: float) -> float:
    return float(np.arccos(np.sqrt(kappa)))


@dataclass(frozen=True)
class SchemeParams:
    scheme: Scheme
    n_s: float
    n_b: float = 0.0
    kappa: float = 0.5
    n_th: float = 0.0
    neglect_shadow: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.n_s < 0:
            raise DomainError(f"N_S must be >= 0, got {self.n_s}")
        if self.n_b < 0:
            raise DomainError(f"N_B must be >= 0, got {self.n_b}")
        if not 0.0 <= self.kappa <= 1.0:
            raise DomainError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.n_th < 0 or self.n_th > self.n_s:
            raise DomainError(f"need 0 <= N_th <= N_S, got N_th={self.n_th}, N_S={self.n_s}")

    @property
    def g(self) -> float:
        return squeezing_for_energy(self.n_s)

    def with_kappa(self, kappa: float) -> "SchemeParams":
        return replace(self, kappa=kappa)


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """Quadrature generator ``K`` in sp(2n, R) with flow ``R -> exp(t K) R``."""

    modes: tuple[str, ...]
    K: np.ndarray

    def __post_init__(self):
        om = sp.symplectic_form(len(self.modes))
        A = om @ self.K
        if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(self.K))):
            raise DomainError("K is not in sp(2n, R)")

    def flow(self, t: float) -> SymplecticTransform:
        S = expm(t * np.asarray(self.K))
        return SymplecticTransform(self.modes, S)

    @classmethod
    def from_ladder(cls, modes, W, Z) -> "QuadraticHamiltonian":
        return cls(tuple(modes), sp.generator_from_ladder(W, Z))


# -- channels -------------------------------------------------------------


def _check_kappa_nb(kappa, n_b):
    if not 0.0 <= kappa <= 1.0:
        raise DomainError(f"kappa must lie in [0, 1], got {kappa}")
    if n_b < 0:
        raise DomainError(f"N_B must be >= 0, got {n_b}")


def _fresh_label(state: GaussianState, base: str = "E") -> str:
    label = base
    k = 0
    while label in state.modes:
        k += 1
        label = f"{base}_{k}"
    return label


def attenuate_theta(state: GaussianState, label: str, theta: float, n_b: float) -> GaussianState:
    env = _fresh_label(state, "_env")
    joint = sp.tensor(state, sp.thermal(n_b, env))
    joint = sp.apply(sp.beamsplitter(theta, label, env), joint)
    return sp.partial_trace(joint, state.modes)


def thermal_attenuator(state: GaussianState, label: str, kappa: float, n_b: float) -> GaussianState:
    """Bosonic thermal attenuator with transmissivity ``kappa`` on one mode."""
    _check_kappa_nb(kappa, n_b)
    return attenuate_theta(state, label, theta_of_kappa(kappa), n_b)


# -- receivers, parametrized by the beamsplitter angle ---------------------


def _coherent_theta(p: SchemeParams, theta: float) -> GaussianState:
    z = np.array([np.sqrt(2.0 * (p.n_s - p.n_th)), 0.0])
    probe = sp.displace(sp.thermal(p.n_th, "S"), "S", z)
    if p.neglect_shadow:
        kappa = np.cos(theta) ** 2
        if kappa >= 1.0:
            raise DomainError("the shadow-free background N_B/(1-kappa) needs kappa < 1")
        return attenuate_theta(probe, "S", theta, p.n_b / (1.0 - kappa))
    return attenuate_theta(probe, "S", theta, p.n_b)


def _tmss_theta(p: SchemeParams, theta: float) -> GaussianState:
    st = sp.apply(sp.two_mode_squeeze(p.g, "S", "I"), sp.vacuum(2, ["S", "I"]))
    return attenuate_theta(st, "S", theta, p.n_b)


def model1_circuit(g: float, theta: float) -> list[SymplecticTransform]:
    """Ordered elements of the circuit model on (S, I1, I2, E)."""
    return [
        sp.two_mode_squeeze(g, "S", "I1"),
        sp.beamsplitter(theta, "S", "E"),
        sp.two_mode_squeeze(g, "S", "I2"),
    ]


MODES_4 = ("S", "I1", "I2", "E")


def _model1_full(p: SchemeParams, theta: float, g: float | None = None) -> GaussianState:
    g = p.g if g is None else g
    st = sp.tensor(sp.vacuum(3, ["S", "I1", "I2"]), sp.thermal(p.n_b, "E"))
    return sp.apply_all(model1_circuit(g, theta), st)


def model2_generator(theta: float) -> QuadraticHamiltonian:
    """Generator of ``exp(-i g H)`` per unit ``g`` on (S, I1, I2, E).

    ``-i H = (cos(theta) a_S^dag - i sin(theta) a_E^dag) a_I1^dag
    + a_S^dag a_I2^dag - h.c.``
    """
    c, s = np.cos(theta), np.sin(theta)
    iS, iI1, iI2, iE = range(4)
    Z = np.zeros((4, 4), dtype=complex)
    Z[iS, iI1] = Z[iI1, iS] = c
    Z[iE, iI1] = Z[iI1, iE] = -1j * s
    Z[iS, iI2] = Z[iI2, iS] = 1.0
    return QuadraticHamiltonian.from_ladder(MODES_4, np.zeros((4, 4)), Z)


def model2_environment(theta: float, n_b: float) -> GaussianState:
    """Initial (S, E) state: thermal in ``c = i sin(theta) a_S + cos(theta) a_E``.

    Built by a passive transform on ``thermal(N_B)_S (x) vacuum_E``; the
    orthogonal mode stays in vacuum. At ``theta = pi/2`` this is thermal on S
    (up to a phase) and vacuum on E.
    """
    c, s = np.cos(theta), np.sin(theta)
    U = np.array([[-1j * s, c], [c, -1j * s]])
    st = sp.tensor(sp.thermal(n_b, "S"), sp.vacuum(1, ["E"]))
    return sp.apply(sp.passive(U, ["S", "E"]), st)


def _model2_full(p: SchemeParams, theta: float, g: float | None = None) -> GaussianState:
    g = p.g if g is None else g
    env = model2_environment(theta, p.n_b)
    st = sp.reorder(sp.tensor(env, sp.vacuum(2, ["I1", "I2"])), MODES_4)
    return sp.apply(model2_generator(theta).flow(g), st)


def _idler_mixer_full(p: SchemeParams, theta: float, mixer: SymplecticTransform | None) -> GaussianState:
    if mixer is not None and "S" in mixer.modes:
        raise ContractError("the mixer may only act on the I and E modes")
    if mixer is not None and not set(mixer.modes) <= {"I", "E"}:
        raise ContractError(f"mixer modes {mixer.modes} must be a subset of (I, E)")
    st = sp.tensor(sp.vacuum(2, ["I", "S"]), sp.thermal(p.n_b, "E"))
    st = sp.apply(sp.two_mode_squeeze(p.g, "I", "S"), st)
    st = sp.apply(sp.beamsplitter(theta, "S", "E"), st)
    if mixer is not None:
        st = sp.apply(mixer, st)
    return st


def receiver_theta(p: SchemeParams, theta: float, mixer: SymplecticTransform | None = None) -> GaussianState:
    """Receiver state at beamsplitter angle ``theta`` (``kappa = cos(theta)^2``)."""
    if p.scheme is Scheme.COHERENT_THERMAL:
        return _coherent_theta(p, theta)
    if p.scheme is Scheme.TMSS:
        return _tmss_theta(p, theta)
    if p.scheme is Scheme.MODEL1:
        return sp.partial_trace(_model1_full(p, theta), ["I1", "I2"])
    if p.scheme is Scheme.MODEL2:
        return sp.partial_trace(_model2_full(p, theta), ["I1", "I2"])
    if p.scheme is Scheme.IDLER_MIXER:
        return sp.partial_trace(_idler_mixer_full(p, theta, mixer), ["S", "I"])
    raise DomainError(f"unknown scheme {p.scheme}")


def receiver(p: SchemeParams, mixer: SymplecticTransform | None = None) -> GaussianState:
    return receiver_theta(p, theta_of_kappa(p.kappa), mixer)


def coherent_thermal_receiver(p: SchemeParams) -> GaussianState:
    return receiver(replace(p, scheme=Scheme.COHERENT_THERMAL))


def tmss_receiver(p: SchemeParams) -> GaussianState:
    return receiver(replace(p, scheme=Scheme.TMSS))


def model1_receiver(p: SchemeParams) -> GaussianState:
    return receiver(replace(p, scheme=Scheme.MODEL1))


def model2_receiver(p: SchemeParams) -> GaussianState:
    return receiver(replace(p, scheme=Scheme.MODEL2))


def theorem1_state(p: SchemeParams, mixer: SymplecticTransform | None = None) -> GaussianState:
    return receiver(replace(p, scheme=Scheme.IDLER_MIXER), mixer)


def saturating_mixer() -> SymplecticTransform:
    """50:50 beamsplitter on (I, E)."""
    return sp.beamsplitter(np.pi / 4, "I", "E")


def parent_state(p: SchemeParams, mixer: SymplecticTransform | None = None) -> GaussianState:
    """Receiver state before the final partial trace (all modes kept)."""
    theta = theta_of_kappa(p.kappa)
    if p.scheme is Scheme.COHERENT_THERMAL:
        z = np.array([np.sqrt(2.0 * (p.n_s - p.n_th)), 0.0])
        probe = sp.displace(sp.thermal(p.n_th, "S"), "S", z)
        st = sp.tensor(probe, sp.thermal(p.n_b, "E"))
        return sp.apply(sp.beamsplitter(theta, "S", "E"), st)
    if p.scheme is Scheme.TMSS:
        st = sp.tensor(sp.vacuum(2, ["S", "I"]), sp.thermal(p.n_b, "E"))
        st = sp.apply(sp.two_mode_squeeze(p.g, "S", "I"), st)
        return sp.apply(sp.beamsplitter(theta, "S", "E"), st)
    if p.scheme is Scheme.MODEL1:
        return _model1_full(p, theta)
    if p.scheme is Scheme.MODEL2:
        return _model2_full(p, theta)
    return _idler_mixer_full(p, theta, mixer)


def family(p: SchemeParams, mixer: SymplecticTransform | None = None) -> Callable[[float], GaussianState]:
    """``kappa -> receiver state`` with every other parameter frozen."""
    return lambda kappa: receiver_theta(p, theta_of_kappa(kappa), mixer)


def theta_family(p: SchemeParams, mixer: SymplecticTransform | None = None) -> Callable[[float], GaussianState]:
    """``theta -> receiver state``; smooth through ``theta = pi/2`` (no target)."""
    return lambda theta: receiver_theta(p, theta, mixer)


def parent_family(p: SchemeParams, mixer: SymplecticTransform | None = None) -> Callable[[float], GaussianState]:
    return lambda kappa: parent_state(p.with_kappa(kappa), mixer)


def random_mixer(rng: np.random.Generator, max_squeezing: float = 0.5) -> SymplecticTransform:
    """Random Gaussian unitary on (I, E): passive, squeeze, passive."""

    def haar2():
        z = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))) / np.sqrt(2)
        q, r = np.linalg.qr(z)
        return q * (np.diag(r) / np.abs(np.diag(r)))

    r1, r2 = rng.uniform(0, max_squeezing, size=2)
    sq = np.diag([np.exp(-r1), np.exp(r1), np.exp(-r2), np.exp(r2)])
    S = sp.passive(haar2(), ["I", "E"]).S @ sq @ sp.passive(haar2(), ["I", "E"]).S
    return SymplecticTransform(("I", "E"), S)


# -- single-mode Gaussian probes ------------------------------------------


def squeezed_coherent_probe(n_s: float, squeeze_fraction: float, phi: float) -> GaussianState:
    """Pure single-mode probe with ``sinh^2 r = f N_S`` and ``|alpha|^2 = (1 - f) N_S``.

    The displacement is along ``q``; ``phi`` rotates the squeezing ellipse
    (``phi = 0`` squeezes ``q``).
    """
    if n_s < 0:
        raise DomainError("N_S must be >= 0")
    if not 0.0 <= squeeze_fraction <= 1.0:
        raise DomainError("squeeze fraction must lie in [0, 1]")
    r = np.arcsinh(np.sqrt(squeeze_fraction * n_s))
    amp = np.sqrt((1 - squeeze_fraction) * n_s)
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    cov = R @ np.diag([np.exp(-2 * r), np.exp(2 * r)]) @ R.T / 2
    return GaussianState(("S",), np.array([np.sqrt(2) * amp, 0.0]), cov)


def probe_family(probe: GaussianState, n_b: float = 0.0) -> Callable[[float], GaussianState]:
    """``kappa ->`` probe after the thermal attenuator."""
    label = probe.modes[0]
    return lambda kappa: thermal_attenuator(probe, label, kappa, n_b)


def best_gaussian_probe(n_s: float, kappa: float) -> tuple[GaussianState, float]:
    """Pure single-mode Gaussian probe of energy ``N_S`` maximizing the lossy QFI.

    Coarse grid over the squeezing fraction and the two principal squeezing
    orientations, then Nelder-Mead refinement. Returns ``(probe, QFI)``.
    """
    from scipy.optimize import minimize

    from .metrology import qfi_single_mode

    vac = 0.5 * np.eye(2)

    def qfi(f, phi):
        probe = squeezed_coherent_probe(n_s, float(np.clip(f, 0, 1)), phi)
        cov = kappa * probe.cov + (1 - kappa) * vac
        return qfi_single_mode(cov, probe.cov - vac, probe.mean / (2 * np.sqrt(kappa)))

    start = max(((f, ph) for f in np.linspace(0, 1, 11) for ph in (0.0, np.pi / 2)), key=lambda x: qfi(*x))
    res = minimize(lambda v: -qfi(v[0], v[1]), start, method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-13})
    f, phi = float(np.clip(res.x[0], 0, 1)), float(res.x[1])
    return squeezed_coherent_probe(n_s, f, phi), float(-res.fun)
