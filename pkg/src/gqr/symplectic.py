"""Phase-space representation of multimode Gaussian states.

Conventions used throughout the package:

* hbar = 1, ``a = (q + i p) / sqrt(2)``, so the vacuum covariance is ``I / 2``
  and a thermal state with mean occupation ``N`` has covariance ``(N + 1/2) I``.
* Quadratures are ordered mode by mode, ``(q1, p1, q2, p2, ...)``.
* A :class:`SymplecticTransform` stores the Heisenberg action ``R -> S R + d``
  of a Gaussian unitary on the quadrature vector. Applying it to a state maps
  ``mean -> S mean + d`` and ``cov -> S cov S^T``. Composing ``U2 U1`` (``U1``
  acts first) gives ``S2 @ S1``.
* The beamsplitter is the real rotation ``a -> cos(t) a + sin(t) b``,
  ``b -> cos(t) b - sin(t) a``, generated by ``t (a^dag b - b^dag a)``. The
  output covariance of a thermal attenuator does not depend on this phase
  choice.
* ``two_mode_squeeze(g)`` is ``exp(g (a^dag b^dag - a b))``; both output modes
  of the squeezed vacuum carry ``sinh(g)^2`` photons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import schur

from .errors import DimensionError, DomainError, LabelError, PhysicalityError

SYMMETRY_TOL = 1e-8
PHYSICALITY_TOL = 1e-10

KNOWN_LABELS = ("S", "I", "I1", "I2", "E", "E1", "E2")


def symplectic_form(n: int) -> np.ndarray:
    """Block-diagonal symplectic form with per-mode block [[0, 1], [-1, 0]]."""
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _check_labels(labels: Sequence[str]) -> tuple[str, ...]:
    labels = tuple(str(x) for x in labels)
    if len(set(labels)) != len(labels):
        raise LabelError(f"duplicate mode labels: {labels}")
    return labels


def _sqrtm_psd(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _quad_index(positions: Iterable[int]) -> np.ndarray:
    return np.array([2 * i + k for i in positions for k in (0, 1)], dtype=int)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianState:
    """Labeled Gaussian state: mean vector and covariance of the quadratures."""

    modes: tuple[str, ...]
    mean: np.ndarray
    cov: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        modes = _check_labels(self.modes)
        n = len(modes)
        if n < 1:
            raise DimensionError("a state needs at least one mode")
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape != (2 * n,) or cov.shape != (2 * n, 2 * n):
            raise DimensionError(
                f"expected mean of length {2 * n} and cov {2 * n}x{2 * n}, "
                f"got {mean.shape} and {cov.shape}"
            )
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
            raise PhysicalityError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "cov", _readonly(cov))
        if self.validate:
            nu = symplectic_eigenvalues(cov)
            if nu[0] < 0.5 - PHYSICALITY_TOL * scale:
                raise PhysicalityError(
                    f"smallest symplectic eigenvalue {nu[0]:.3e} is below 1/2"
                )

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def index(self, label: str) -> int:
        try:
            return self.modes.index(label)
        except ValueError:
            raise LabelError(f"mode {label!r} not in state {self.modes}") from None

    def quadratures(self, label: str) -> slice:
        i = self.index(label)
        return slice(2 * i, 2 * i + 2)

    def to_dict(self) -> dict:
        return {
            "modes": list(self.modes),
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianState":
        return cls(tuple(data["modes"]), np.array(data["mean"]), np.array(data["cov"]))

    @classmethod
    def from_json(cls, text: str) -> "GaussianState":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SymplecticTransform:
    """Heisenberg action ``R -> S R + d`` on the quadratures of ``modes``."""

    modes: tuple[str, ...]
    S: np.ndarray
    d: np.ndarray | None = None

    def __post_init__(self):
        modes = _check_labels(self.modes)
        n = len(modes)
        S = np.asarray(self.S, dtype=float)
        if S.shape != (2 * n, 2 * n):
            raise DimensionError(f"S must be {2 * n}x{2 * n}, got {S.shape}")
        d = np.zeros(2 * n) if self.d is None else np.asarray(self.d, dtype=float)
        if d.shape != (2 * n,):
            raise DimensionError(f"d must have length {2 * n}")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "S", _readonly(S))
        object.__setattr__(self, "d", _readonly(d))

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def symplectic_defect(self) -> float:
        om = symplectic_form(self.n_modes)
        return float(np.max(np.abs(self.S @ om @ self.S.T - om)))

    def embed(self, modes: Sequence[str]) -> "SymplecticTransform":
        """Extend to act as the identity on the other modes of ``modes``."""
        modes = _check_labels(modes)
        missing = [m for m in self.modes if m not in modes]
        if missing:
            raise LabelError(f"modes {missing} not present in {modes}")
        idx = _quad_index(modes.index(m) for m in self.modes)
        S = np.eye(2 * len(modes))
        S[np.ix_(idx, idx)] = self.S
        d = np.zeros(2 * len(modes))
        d[idx] = self.d
        return SymplecticTransform(modes, S, d)

    def then(self, other: "SymplecticTransform") -> "SymplecticTransform":
        """Composite transform: ``self`` first, then ``other``."""
        modes = list(self.modes) + [m for m in other.modes if m not in self.modes]
        a = self.embed(modes)
        b = other.embed(modes)
        return SymplecticTransform(tuple(modes), b.S @ a.S, b.S @ a.d + b.d)

    def inverse(self) -> "SymplecticTransform":
        Sinv = np.linalg.inv(self.S)
        return SymplecticTransform(self.modes, Sinv, -Sinv @ self.d)


@dataclass(frozen=True)
class WilliamsonDecomposition:
    """``cov = Sw @ diag(nu (x) I2) @ Sw.T`` with ``nu`` sorted ascending."""

    nu: np.ndarray
    Sw: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.Sw @ np.diag(np.repeat(self.nu, 2)) @ self.Sw.T


# -- constructors ---------------------------------------------------------


def vacuum(n: int, labels: Sequence[str] | None = None) -> GaussianState:
    if n < 1:
        raise DomainError("mode count must be >= 1")
    if labels is None:
        labels = [f"m{i}" for i in range(n)]
    if len(labels) != n:
        raise DimensionError(f"{n} modes but {len(labels)} labels")
    return GaussianState(tuple(labels), np.zeros(2 * n), 0.5 * np.eye(2 * n))


def thermal(n_th: float, label: str = "S") -> GaussianState:
    if n_th < 0:
        raise DomainError(f"thermal occupation must be >= 0, got {n_th}")
    return GaussianState((label,), np.zeros(2), (n_th + 0.5) * np.eye(2))


def coherent(z: Sequence[float], label: str = "S") -> GaussianState:
    return displace(vacuum(1, [label]), label, z)


def displace(state: GaussianState, label: str, z: Sequence[float]) -> GaussianState:
    z = np.asarray(z, dtype=float)
    if z.shape != (2,):
        raise DimensionError("displacement must be a real 2-vector")
    mean = state.mean.copy()
    mean[state.quadratures(label)] += z
    return GaussianState(state.modes, mean, state.cov, validate=False)


def beamsplitter(theta: float, label_a: str, label_b: str) -> SymplecticTransform:
    """Real beamsplitter; mode ``label_a`` keeps amplitude ``cos(theta)``."""
    c, s = np.cos(theta), np.sin(theta)
    S = np.array(
        [
            [c, 0, s, 0],
            [0, c, 0, s],
            [-s, 0, c, 0],
            [0, -s, 0, c],
        ]
    )
    return SymplecticTransform((label_a, label_b), S)


def two_mode_squeeze(g: float, label_a: str, label_b: str) -> SymplecticTransform:
    ch, sh = np.cosh(g), np.sinh(g)
    S = np.array(
        [
            [ch, 0, sh, 0],
            [0, ch, 0, -sh],
            [sh, 0, ch, 0],
            [0, -sh, 0, ch],
        ]
    )
    return SymplecticTransform((label_a, label_b), S)


def phase_rotation(phi: float, label: str) -> SymplecticTransform:
    """``a -> exp(i phi) a``."""
    c, s = np.cos(phi), np.sin(phi)
    return SymplecticTransform((label,), np.array([[c, -s], [s, c]]))


def passive(U: np.ndarray, labels: Sequence[str]) -> SymplecticTransform:
    """Passive linear optics with Heisenberg action ``a_j -> sum_k U_jk a_k``."""
    U = np.asarray(U, dtype=complex)
    n = len(labels)
    if U.shape != (n, n):
        raise DimensionError("U must be square with one row per label")
    if np.max(np.abs(U @ U.conj().T - np.eye(n))) > 1e-10:
        raise DomainError("U is not unitary")
    X, Y = U.real, U.imag
    S = np.zeros((2 * n, 2 * n))
    S[0::2, 0::2] = X
    S[0::2, 1::2] = -Y
    S[1::2, 0::2] = Y
    S[1::2, 1::2] = X
    return SymplecticTransform(tuple(labels), S)


def identity_transform(labels: Sequence[str]) -> SymplecticTransform:
    return SymplecticTransform(tuple(labels), np.eye(2 * len(labels)))


# -- complex <-> quadrature bookkeeping -----------------------------------


def ladder_matrix(n: int) -> np.ndarray:
    """T with ``(a_1..a_n, a_1^dag..a_n^dag) = T @ (q1, p1, ..., qn, pn)``."""
    T = np.zeros((2 * n, 2 * n), dtype=complex)
    r = 1 / np.sqrt(2)
    for j in range(n):
        T[j, 2 * j] = r
        T[j, 2 * j + 1] = 1j * r
        T[n + j, 2 * j] = r
        T[n + j, 2 * j + 1] = -1j * r
    return T


def generator_from_ladder(W: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Quadrature generator of ``X = sum W_jk a_j^dag a_k + (1/2) sum (Z_jk a_j^dag a_k^dag - h.c.)``.

    ``W`` must be anti-Hermitian and ``Z`` symmetric so that ``X`` is
    anti-Hermitian. The Heisenberg flow of ``exp(t X)`` is ``exp(t K) R``.
    """
    W = np.asarray(W, dtype=complex)
    Z = np.asarray(Z, dtype=complex)
    n = W.shape[0]
    M = np.block([[W, Z], [Z.conj(), W.conj()]])
    T = ladder_matrix(n)
    K = np.linalg.solve(T, M @ T)
    if np.max(np.abs(K.imag)) > 1e-12 * max(1.0, np.max(np.abs(K))):
        raise DomainError("generator is not real; check W anti-Hermitian, Z symmetric")
    return K.real


def cov_from_ladder_moments(N: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Covariance from ``N_jk = <a_j^dag a_k>`` and ``M_jk = <a_j a_k>`` (zero mean)."""
    N = np.asarray(N, dtype=complex)
    M = np.asarray(M, dtype=complex)
    n = N.shape[0]
    eye = np.eye(n)
    G = np.block([[M, N.T + 0.5 * eye], [N + 0.5 * eye, M.conj()]])
    Tinv = np.linalg.inv(ladder_matrix(n))
    cov = Tinv @ G @ Tinv.T
    return cov.real


# -- operations -----------------------------------------------------------


def apply(transform: SymplecticTransform, state: GaussianState) -> GaussianState:
    t = transform.embed(state.modes) if transform.modes != state.modes else transform
    if t.S.shape[0] != 2 * state.n_modes:
        raise DimensionError("transform and state dimensions differ")
    mean = t.S @ state.mean + t.d
    cov = t.S @ state.cov @ t.S.T
    return GaussianState(state.modes, mean, cov, validate=False)


def apply_all(transforms: Iterable[SymplecticTransform], state: GaussianState) -> GaussianState:
    for t in transforms:
        state = apply(t, state)
    return state


def tensor(*states: GaussianState) -> GaussianState:
    modes: list[str] = []
    for s in states:
        for m in s.modes:
            if m in modes:
                raise LabelError(f"label collision on {m!r}")
            modes.append(m)
    mean = np.concatenate([s.mean for s in states])
    cov = np.zeros((2 * len(modes), 2 * len(modes)))
    k = 0
    for s in states:
        d = 2 * s.n_modes
        cov[k:k + d, k:k + d] = s.cov
        k += d
    return GaussianState(tuple(modes), mean, cov, validate=False)


def partial_trace(state: GaussianState, keep: Sequence[str]) -> GaussianState:
    keep = _check_labels(keep)
    idx = _quad_index(state.index(m) for m in keep)
    return GaussianState(keep, state.mean[idx], state.cov[np.ix_(idx, idx)], validate=False)


def reorder(state: GaussianState, modes: Sequence[str]) -> GaussianState:
    if set(modes) != set(state.modes) or len(modes) != state.n_modes:
        raise LabelError(f"{modes} is not a permutation of {state.modes}")
    return partial_trace(state, modes)


def relabel(state: GaussianState, mapping: dict) -> GaussianState:
    modes = tuple(mapping.get(m, m) for m in state.modes)
    return GaussianState(modes, state.mean, state.cov, validate=False)


def partial_transpose(state: GaussianState, label: str) -> GaussianState:
    """Partial transposition of one mode, ``p -> -p`` on that mode."""
    F = np.eye(2 * state.n_modes)
    F[2 * state.index(label) + 1, 2 * state.index(label) + 1] = -1.0
    return GaussianState(state.modes, F @ state.mean, F @ state.cov @ F, validate=False)


def symplectic_eigenvalues(cov: np.ndarray | GaussianState) -> np.ndarray:
    """Symplectic spectrum, ascending.

    The moduli of the eigenvalues of ``i Omega cov`` equal the square roots of
    the (doubly degenerate) eigenvalues of the symmetric matrix
    ``-(A @ A)`` with ``A = cov^{1/2} Omega cov^{1/2}``.
    """
    if isinstance(cov, GaussianState):
        cov = cov.cov
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0] // 2
    r = _sqrtm_psd(cov)
    A = r @ symplectic_form(n) @ r
    w = np.linalg.eigvalsh(A.T @ A)
    w = np.sort(np.sqrt(np.clip(w, 0.0, None)))
    return 0.5 * (w[0::2] + w[1::2])


def williamson(state: GaussianState | np.ndarray) -> WilliamsonDecomposition:
    cov = state.cov if isinstance(state, GaussianState) else np.asarray(state, dtype=float)
    n = cov.shape[0] // 2
    w, v = np.linalg.eigh(cov)
    if w[0] <= 0:
        raise PhysicalityError("covariance matrix is not positive definite")
    half = (v * np.sqrt(w)) @ v.T
    inv_half = (v / np.sqrt(w)) @ v.T
    A = inv_half @ symplectic_form(n) @ inv_half
    A = 0.5 * (A - A.T)
    T, O = schur(A, output="real")
    nu = np.empty(n)
    for k in range(n):
        i = 2 * k
        t = T[i, i + 1]
        if t < 0:
            O[:, [i, i + 1]] = O[:, [i + 1, i]]
            t = -t
        nu[k] = 1.0 / t
    if nu.min() < 0.5 - PHYSICALITY_TOL * max(1.0, np.max(np.abs(cov))):
        raise PhysicalityError(f"symplectic eigenvalue {nu.min():.3e} is below 1/2")
    order = np.argsort(nu)
    nu = nu[order]
    cols = _quad_index(order)
    O = O[:, cols]
    Sw = half @ O @ np.diag(np.repeat(1.0 / np.sqrt(nu), 2))
    return WilliamsonDecomposition(nu, Sw)


def mean_photon_number(state: GaussianState, label: str) -> float:
    sl = state.quadratures(label)
    c = state.cov[sl, sl]
    m = state.mean[sl]
    return float((np.trace(c) + m @ m - 1.0) / 2.0)


def total_photon_number(state: GaussianState, labels: Sequence[str] | None = None) -> float:
    labels = state.modes if labels is None else labels
    return sum(mean_photon_number(state, m) for m in labels)


def is_symplectic(S: np.ndarray, tol: float = 1e-10) -> bool:
    n = S.shape[0] // 2
    om = symplectic_form(n)
    return bool(np.max(np.abs(S @ om @ S.T - om)) <= tol * max(1.0, np.max(np.abs(S)) ** 2))
