"""Truncated Fock-space oracle.

Density matrices of every receiver are built here by exponentiating the
bosonic generators on a truncated number basis, with no reference to
covariance matrices. Fidelity, s-overlaps, QFI, photon numbers and moments
computed from these matrices serve as the independent check of the
phase-space pipeline.

Truncation keeps the computation tractable:

* every generator conserves a linear *charge* ``sum_i c_i n_i`` (two-mode
  squeezers create one photon in each mode, beamsplitters move one), so each
  thermal environment photon number ``k`` is evolved in its own sector;
* the idler photon total is capped, and the population reaching the cap is
  reported as leakage together with the discarded thermal tail.

Mixed inputs are expanded as ``sum_k q_k |k><k|`` and the pure branches are
evolved separately, so only state vectors are ever propagated.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, ceil
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sps
from scipy.linalg import expm
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import connected_components

from .channels import Scheme, SchemeParams, squeezing_for_energy
from .errors import CutoffTooSmallError, DimensionError, DomainError, NumericalFailure
from .symplectic import cov_from_ladder_moments

LEAKAGE_BUDGET = 1e-6
EIG_TOL = 1e-13
SLICE_NORM = 5.0
TAYLOR_TOL = 1e-16
MAX_TAYLOR_TERMS = 200
# cutoff growth per retry; leakage falls geometrically so doubling overshoots
CUTOFF_GROWTH = 1.25


def _codes(occ: np.ndarray, radices: np.ndarray) -> np.ndarray:
    strides = np.concatenate([np.cumprod(radices[::-1])[::-1][1:], [1]]).astype(np.int64)
    return occ.astype(np.int64) @ strides


class FockSpace:
    """Number basis of a few modes, optionally restricted to a charge sector.

    ``cutoffs[i]`` is the largest occupation allowed in mode ``i``; ``caps``
    is a list of ``(mode_indices, max_total)`` constraints.
    """

    def __init__(
        self,
        modes: Sequence[str],
        cutoffs: Sequence[int],
        charges: Sequence[int] | None = None,
        charge: int = 0,
        caps: Sequence[tuple[Sequence[int], int]] = (),
    ):
        self.modes = tuple(modes)
        self.cutoffs = np.asarray(cutoffs, dtype=np.int64)
        n = len(self.modes)
        if len(self.cutoffs) != n:
            raise DimensionError("one cutoff per mode is required")
        self.radices = self.cutoffs + 1
        free = list(range(n))
        solve = None
        if charges is not None:
            charges = np.asarray(charges, dtype=np.int64)
            nz = [i for i in range(n) if charges[i] != 0]
            solve = nz[-1]
            free.remove(solve)
        grids = np.indices([int(self.radices[i]) for i in free]).reshape(len(free), -1).T
        occ = np.zeros((len(grids), n), dtype=np.int64)
        occ[:, free] = grids
        keep = np.ones(len(occ), dtype=bool)
        if solve is not None:
            rem = charge - occ @ charges
            c = charges[solve]
            ns = rem // c
            keep &= (rem % c == 0) & (ns >= 0) & (ns <= self.cutoffs[solve])
            occ[:, solve] = ns
        for idx, cap in caps:
            keep &= occ[:, list(idx)].sum(axis=1) <= cap
        self.occ = occ[keep]
        codes = _codes(self.occ, self.radices)
        order = np.argsort(codes)
        self.occ = self.occ[order]
        self.codes = codes[order]

    @property
    def dim(self) -> int:
        return len(self.occ)

    def index(self, label: str) -> int:
        return self.modes.index(label)

    def lookup(self, occ: np.ndarray) -> np.ndarray:
        """Basis indices of occupation rows, ``-1`` where absent."""
        inside = np.all((occ >= 0) & (occ <= self.cutoffs), axis=1)
        codes = _codes(np.clip(occ, 0, self.cutoffs), self.radices)
        pos = np.searchsorted(self.codes, codes)
        pos = np.clip(pos, 0, self.dim - 1)
        found = inside & (self.codes[pos] == codes)
        return np.where(found, pos, -1)

    def operator(self, terms) -> sps.csr_matrix:
        """Sparse matrix of ``sum coef * op_1 op_2 ... op_r`` restricted to the space.

        ``terms`` is a list of ``(coef, [(label, dagger), ...])``; the
        rightmost factor acts first. Matrix elements leaving the space are
        dropped.
        """
        rows, cols, vals = [], [], []
        src = np.arange(self.dim)
        for coef, factors in terms:
            occ = self.occ.copy()
            amp = np.ones(self.dim)
            for label, dagger in reversed(factors):
                i = self.index(label)
                if dagger:
                    amp = amp * np.sqrt(occ[:, i] + 1.0)
                    occ[:, i] += 1
                else:
                    amp = amp * np.sqrt(np.maximum(occ[:, i], 0).astype(float))
                    occ[:, i] -= 1
            tgt = self.lookup(occ)
            ok = (tgt >= 0) & (amp != 0)
            rows.append(tgt[ok])
            cols.append(src[ok])
            vals.append(coef * amp[ok])
        if not rows:
            return sps.csr_matrix((self.dim, self.dim), dtype=complex)
        data = np.concatenate(vals).astype(complex)
        return sps.csr_matrix(
            (data, (np.concatenate(rows), np.concatenate(cols))), shape=(self.dim, self.dim)
        )

    def basis_vector(self, occupation: Sequence[int]) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        i = self.lookup(np.asarray([occupation]))[0]
        if i < 0:
            raise DimensionError(f"occupation {occupation} not in the truncated space")
        v[i] = 1.0
        return v

    def vector(self, amplitudes: dict) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        for occupation, amp in amplitudes.items():
            i = self.lookup(np.asarray([occupation]))[0]
            if i >= 0:
                v[i] += amp
        return v


def evolve(generator: sps.spmatrix, v: np.ndarray) -> np.ndarray:
    """``exp(generator) v`` by Taylor series over slices of 1-norm at most ``SLICE_NORM``.

    Within a slice ``||A||_2 <= ||A||_1`` for the anti-Hermitian generators
    used here, so once the term index exceeds twice the slice norm the
    remaining tail is bounded by the last term and summation can stop.
    """
    norm = float(abs(generator).sum(axis=0).max()) if generator.nnz else 0.0
    if norm == 0.0:
        return v.copy()
    slices = max(1, int(ceil(norm / SLICE_NORM)))
    step = (generator / slices).tocsr()
    h = norm / slices
    for _ in range(slices):
        term = v
        out = v.copy()
        scale = float(np.linalg.norm(v))
        for j in range(1, MAX_TAYLOR_TERMS):
            term = (step @ term) / j
            out += term
            if j >= 2 * h and np.linalg.norm(term) <= TAYLOR_TOL * scale:
                break
        else:
            raise NumericalFailure("Taylor series did not converge")
        v = out
    return v


_CHAIN_CACHE: dict = {}
_CHAIN_CACHE_LIMIT = 200_000


def apply_two_mode(space: FockSpace, terms, a: str, b: str, v: np.ndarray) -> np.ndarray:
    """``exp(G) v`` for a generator ``G`` acting on modes ``a, b`` only.

    ``G`` splits into chains of states differing only in ``(n_a, n_b)``. A
    chain's exponential depends only on the generator, its first occupation
    pair and its length, so it is cached on that key and reused across
    sectors and repeated builds.
    """
    ia, ib = space.index(a), space.index(b)
    G = space.operator(terms).tocsr()
    _, labels = connected_components(abs(G) + sps.eye(space.dim), directed=False)
    order = np.lexsort((space.occ[:, ia], labels))
    lab = labels[order]
    starts = np.flatnonzero(np.r_[True, lab[1:] != lab[:-1]])
    sizes = np.diff(np.r_[starts, len(order)])
    first = order[starts]
    keys = np.column_stack([space.occ[first, ia], space.occ[first, ib], sizes])
    uniq, rep, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    tkey = (a, b, tuple((complex(c), tuple(f)) for c, f in terms))
    if len(_CHAIN_CACHE) > _CHAIN_CACHE_LIMIT:
        _CHAIN_CACHE.clear()
    full_keys = [(tkey,) + tuple(int(x) for x in k) for k in uniq]
    missing = [u for u, fk in enumerate(full_keys) if fk not in _CHAIN_CACHE]
    for m in np.unique(uniq[missing, 2]) if missing else ():
        which = [u for u in missing if uniq[u, 2] == m]
        idx = order[starts[rep[which]][:, None] + np.arange(m)[None, :]]
        rows = np.repeat(idx, m, axis=1).ravel()
        cols = np.tile(idx, (1, m)).ravel()
        blocks = np.asarray(G[rows, cols]).reshape(len(which), m, m)
        for u, blk in zip(which, blocks):
            _CHAIN_CACHE[full_keys[u]] = expm(blk)
    out = np.array(v, dtype=complex)
    by_key = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[by_key], np.arange(len(uniq) + 1))
    for u in range(len(uniq)):
        members = starts[by_key[bounds[u]:bounds[u + 1]]]
        m = int(uniq[u, 2])
        idx = order[members[:, None] + np.arange(m)[None, :]]
        out[idx] = v[idx] @ _CHAIN_CACHE[full_keys[u]].T
    return out


def two_mode_squeeze_terms(g: float, a: str, b: str):
    return [(g, [(a, True), (b, True)]), (-g, [(a, False), (b, False)])]


def beamsplitter_terms(theta: float, a: str, b: str):
    """Generator of ``a -> cos a + sin b`` (same real convention as the phase-space side)."""
    return [(theta, [(a, True), (b, False)]), (-theta, [(b, True), (a, False)])]


@dataclass
class FockDensityMatrix:
    """Density matrix on a truncated number basis of ``modes``."""

    modes: tuple[str, ...]
    occ: np.ndarray
    matrix: np.ndarray
    leakage: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.occ)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def space(self) -> FockSpace:
        return _space_from_occ(self.modes, self.occ)

    def expectation(self, terms) -> complex:
        op = self.space().operator(terms)
        return complex(np.sum(op.toarray().T * self.matrix))

    def mean_photon_number(self, label: str) -> float:
        i = self.modes.index(label)
        return float(np.real(np.diag(self.matrix)) @ self.occ[:, i])

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature mean and covariance (hbar = 1, vacuum variance 1/2)."""
        n = len(self.modes)
        sp_ = self.space()
        rho = self.matrix

        def ev(terms):
            return np.sum(sp_.operator(terms).toarray().T * rho)

        alpha = np.array([ev([(1.0, [(m, False)])]) for m in self.modes])
        N = np.zeros((n, n), dtype=complex)
        M = np.zeros((n, n), dtype=complex)
        for j, mj in enumerate(self.modes):
            for k, mk in enumerate(self.modes):
                N[j, k] = ev([(1.0, [(mj, True), (mk, False)])]) - alpha[j].conj() * alpha[k]
                M[j, k] = ev([(1.0, [(mj, False), (mk, False)])]) - alpha[j] * alpha[k]
        mean = np.empty(2 * n)
        mean[0::2] = np.sqrt(2) * alpha.real
        mean[1::2] = np.sqrt(2) * alpha.imag
        return mean, cov_from_ladder_moments(N, M)


def _space_from_occ(modes, occ) -> FockSpace:
    space = FockSpace.__new__(FockSpace)
    space.modes = tuple(modes)
    space.cutoffs = occ.max(axis=0).astype(np.int64) if len(occ) else np.zeros(len(modes), np.int64)
    space.radices = space.cutoffs + 1
    codes = _codes(occ, space.radices)
    order = np.argsort(codes)
    space.occ = occ[order]
    space.codes = codes[order]
    return space


# -- reduced states -------------------------------------------------------


def reduce(space: FockSpace, vectors, weights, keep: Sequence[str]):
    """``sum_k w_k tr_rest |v_k><v_k|`` as ``(occ, sparse matrix)`` on the kept modes."""
    keep_idx = [space.index(m) for m in keep]
    rest_idx = [i for i in range(len(space.modes)) if i not in keep_idx]
    kept_occ = space.occ[:, keep_idx]
    rest_occ = space.occ[:, rest_idx]
    kradix = kept_occ.max(axis=0) + 1
    rradix = rest_occ.max(axis=0) + 1 if rest_idx else np.ones(0, np.int64)
    kcodes = _codes(kept_occ, kradix)
    rcodes = _codes(rest_occ, rradix) if rest_idx else np.zeros(space.dim, np.int64)
    ku, kinv = np.unique(kcodes, return_inverse=True)
    ru, rinv = np.unique(rcodes, return_inverse=True)
    first = np.zeros(len(ku), dtype=np.int64)
    first[kinv] = np.arange(space.dim)
    occ_out = kept_occ[first]
    rho = sps.csr_matrix((len(ku), len(ku)), dtype=complex)
    for v, w in zip(vectors, weights):
        A = sps.csr_matrix((v, (kinv, rinv)), shape=(len(ku), len(ru)))
        rho = rho + w * (A @ A.conj().T)
    return occ_out, rho


def _merge(parts):
    """Sum of ``(occ, sparse)`` pieces living on different kept bases."""
    all_occ = np.concatenate([o for o, _ in parts])
    radix = all_occ.max(axis=0) + 1
    codes = _codes(all_occ, radix)
    uniq, inv = np.unique(codes, return_inverse=True)
    first = np.zeros(len(uniq), dtype=np.int64)
    first[inv] = np.arange(len(codes))
    occ = all_occ[first]
    total = sps.csr_matrix((len(uniq), len(uniq)), dtype=complex)
    start = 0
    for o, m in parts:
        idx = inv[start:start + len(o)]
        start += len(o)
        coo = m.tocoo()
        total = total + sps.csr_matrix(
            (coo.data, (idx[coo.row], idx[coo.col])), shape=(len(uniq), len(uniq))
        )
    return occ, total


def thermal_weights(n_b: float, budget: float = LEAKAGE_BUDGET):
    """Geometric weights ``q_k`` and the discarded tail mass."""
    if n_b < 0:
        raise DomainError("N_B must be >= 0")
    if n_b == 0:
        return np.array([1.0]), 0.0
    ratio = n_b / (n_b + 1)
    kmax = int(ceil(np.log(budget / 10) / np.log(ratio)))
    k = np.arange(kmax + 1)
    q = ratio**k / (n_b + 1)
    return q, float(ratio ** (kmax + 1))


def _theta(kappa: float) -> float:
    return float(np.arccos(np.sqrt(kappa)))


def default_cutoff(n_s: float, n_b: float) -> int:
    return max(20, int(ceil(10 * (1 + n_s + n_b))))


# -- scheme builders ------------------------------------------------------


def _boundary_population(space: FockSpace, v: np.ndarray, idx, cap) -> float:
    at_cap = space.occ[:, list(idx)].sum(axis=1) >= cap
    return float(np.sum(np.abs(v[at_cap]) ** 2))


def _sector_space(modes, charges, k, idler_idx, cap):
    cut = [cap + k if c < 0 else cap for c in charges]
    return FockSpace(modes, cut, charges=charges, charge=-k, caps=[(idler_idx, cap)])


def _build_sectors(modes, charges, idlers, keep, n_b, cap, prepare, run):
    """Evolve each thermal branch ``k`` in its own sector and reduce."""
    q, tail = thermal_weights(n_b)
    idler_idx = [modes.index(m) for m in idlers]
    parts = []
    leak = tail
    for k, w in enumerate(q):
        space = _sector_space(modes, charges, k, idler_idx, cap)
        v = run(space, prepare(space, k))
        leak += w * _boundary_population(space, v, idler_idx, cap)
        parts.append(reduce(space, [v], [w], keep))
    occ, rho = _merge(parts)
    return FockDensityMatrix(tuple(keep), occ, rho.toarray(), leak)


def _displaced_fock(alpha: complex, n: int, dim: int, pad: int = 40) -> np.ndarray:
    big = dim + pad
    a = np.diag(np.sqrt(np.arange(1, big)), 1)
    D = expm(alpha * a.conj().T - np.conj(alpha) * a)
    return D[:dim, n]


def _single_mode_probe_receiver(probe_branches, n_b, theta, cutoff):
    """Probe branches ``[(weight, vector on S)]`` through BS(S,E) with thermal E."""
    q, tail = thermal_weights(n_b)
    kmax = len(q) - 1
    cap = cutoff + kmax
    space = FockSpace(("S", "E"), [cap, cap], caps=[((0, 1), cap)])
    gen = space.operator(beamsplitter_terms(theta, "S", "E"))
    vectors, weights = [], []
    leak = tail
    for wp, psi in probe_branches:
        leak += wp * max(0.0, 1 - float(np.vdot(psi, psi).real))
        for k, wk in enumerate(q):
            amps = {(n, k): psi[n] for n in range(len(psi)) if psi[n] != 0}
            v0 = space.vector(amps)
            vectors.append(evolve(gen, v0))
            weights.append(wp * wk)
    occ, rho = reduce(space, vectors, weights, ["S"])
    return FockDensityMatrix(("S",), occ, rho.toarray(), leak)


def coherent_receiver(p: SchemeParams, theta: float, cutoff: int | None = None) -> FockDensityMatrix:
    """Displaced thermal probe (``N_th`` thermal + the rest coherent) after the attenuator."""
    cutoff = cutoff or default_cutoff(p.n_s, p.n_b)
    amp = np.sqrt(p.n_s - p.n_th)
    qth, _ = thermal_weights(p.n_th)
    branches = [(w, _displaced_fock(amp, n, cutoff + 1)) for n, w in enumerate(qth)]
    nb = p.n_b
    if p.neglect_shadow:
        nb = p.n_b / (1 - np.cos(theta) ** 2)
    return _single_mode_probe_receiver(branches, nb, theta, cutoff)


def fock_probe_receiver(n: int, n_b: float, theta: float, cutoff: int | None = None) -> FockDensityMatrix:
    """Fock probe ``|n>`` through the thermal attenuator."""
    cutoff = cutoff or max(n + 5, default_cutoff(n, n_b))
    psi = np.zeros(cutoff + 1, dtype=complex)
    psi[n] = 1.0
    return _single_mode_probe_receiver([(1.0, psi)], n_b, theta, cutoff)


def tmss_receiver(p: SchemeParams, theta: float, cap: int | None = None) -> FockDensityMatrix:
    g = squeezing_for_energy(p.n_s)
    cap = cap or default_cutoff(p.n_s, p.n_b)
    modes = ("S", "I", "E")

    def prepare(space, k):
        return space.basis_vector((0, 0, k))

    def run(space, v):
        v = apply_two_mode(space, two_mode_squeeze_terms(g, "S", "I"), "S", "I", v)
        return apply_two_mode(space, beamsplitter_terms(theta, "S", "E"), "S", "E", v)

    return _build_sectors(modes, (-1, 1, -1), ["I"], ["S", "I"], p.n_b, cap, prepare, run)


MODES_4 = ("S", "I1", "I2", "E")
CHARGES_4 = (-1, 1, 1, -1)


def model1_receiver(p: SchemeParams, theta: float, cap: int | None = None) -> FockDensityMatrix:
    g = squeezing_for_energy(p.n_s)
    cap = cap or default_cutoff(p.n_s, p.n_b)

    def prepare(space, k):
        return space.basis_vector((0, 0, 0, k))

    def run(space, v):
        v = apply_two_mode(space, two_mode_squeeze_terms(g, "S", "I1"), "S", "I1", v)
        v = apply_two_mode(space, beamsplitter_terms(theta, "S", "E"), "S", "E", v)
        return apply_two_mode(space, two_mode_squeeze_terms(g, "S", "I2"), "S", "I2", v)

    return _build_sectors(MODES_4, CHARGES_4, ["I1", "I2"], ["I1", "I2"], p.n_b, cap, prepare, run)


def model2_receiver(p: SchemeParams, theta: float, cap: int | None = None) -> FockDensityMatrix:
    """Joint evolution under ``exp(-i g H)`` with a thermal state of the rotated mode.

    ``-i g H = g[(cos a_S^dag - i sin a_E^dag) a_I1^dag + a_S^dag a_I2^dag - h.c.]``
    and the environment photons occupy ``c^dag = -i sin a_S^dag + cos a_E^dag``.
    """
    g = squeezing_for_energy(p.n_s)
    cap = cap or default_cutoff(p.n_s, p.n_b)
    c, s = np.cos(theta), np.sin(theta)

    def prepare(space, k):
        amps = {}
        for j in range(k + 1):
            amps[(j, 0, 0, k - j)] = np.sqrt(comb(k, j)) * (-1j * s) ** j * c ** (k - j)
        return space.vector(amps)

    def run(space, v):
        H = (
            space.operator([(g * c, [("S", True), ("I1", True)]), (-g * c, [("S", False), ("I1", False)])])
            + space.operator([(-1j * g * s, [("E", True), ("I1", True)]),
                              (-1j * g * s, [("E", False), ("I1", False)])])
            + space.operator(two_mode_squeeze_terms(g, "S", "I2"))
        )
        return evolve(H, v)

    return _build_sectors(MODES_4, CHARGES_4, ["I1", "I2"], ["I1", "I2"], p.n_b, cap, prepare, run)


_BUILDERS = {
    Scheme.COHERENT_THERMAL: coherent_receiver,
    Scheme.TMSS: tmss_receiver,
    Scheme.MODEL1: model1_receiver,
    Scheme.MODEL2: model2_receiver,
}


def select_cutoff(p: SchemeParams, theta: float | None = None, cutoff: int | None = None,
                  budget: float = LEAKAGE_BUDGET, max_cutoff: int | None = None) -> tuple[FockDensityMatrix, int]:
    """Grow the cutoff by ``CUTOFF_GROWTH`` until the leakage is within ``budget``.

    Returns the accepted density matrix and its cutoff.
    """
    try:
        builder = _BUILDERS[p.scheme]
    except KeyError:
        raise DomainError(f"no Fock builder for scheme {p.scheme}") from None
    theta = _theta(p.kappa) if theta is None else theta
    cutoff = cutoff or default_cutoff(p.n_s, p.n_b)
    limit = max_cutoff or 8 * cutoff
    while True:
        rho = builder(p, theta, cutoff)
        if rho.leakage <= budget:
            return rho, cutoff
        nxt = int(ceil(CUTOFF_GROWTH * cutoff))
        if nxt > limit:
            raise CutoffTooSmallError(
                f"leakage {rho.leakage:.2e} exceeds {budget:.0e} at cutoff {cutoff}",
                leakage=rho.leakage,
                suggested_cutoff=nxt,
            )
        cutoff = nxt


def fock_build_theta(p: SchemeParams, theta: float, cutoff: int | None = None,
                     budget: float = LEAKAGE_BUDGET) -> FockDensityMatrix:
    """Receiver density matrix at beamsplitter angle ``theta``."""
    return select_cutoff(p, theta, cutoff, budget)[0]


def fock_build(p: SchemeParams, cutoff: int | None = None, budget: float = LEAKAGE_BUDGET) -> FockDensityMatrix:
    return fock_build_theta(p, _theta(p.kappa), cutoff, budget)


def fock_family(p: SchemeParams, cutoff: int | None = None) -> Callable[[float], FockDensityMatrix]:
    """``kappa -> receiver density matrix`` with the cutoff frozen at its value for ``p.kappa``."""
    if cutoff is None:
        cutoff = select_cutoff(p)[1]
    builder = _BUILDERS[p.scheme]
    return lambda kappa: builder(p, _theta(kappa), cutoff)


def thermal_density(n_th: float, cutoff: int) -> FockDensityMatrix:
    ratio = n_th / (n_th + 1)
    w = ratio ** np.arange(cutoff + 1) / (n_th + 1)
    return FockDensityMatrix(("S",), np.arange(cutoff + 1)[:, None], np.diag(w).astype(complex),
                             float(ratio ** (cutoff + 1)))


def coherent_density(alpha: complex, cutoff: int) -> FockDensityMatrix:
    psi = _displaced_fock(alpha, 0, cutoff + 1)
    return FockDensityMatrix(("S",), np.arange(cutoff + 1)[:, None], np.outer(psi, psi.conj()),
                             max(0.0, 1 - float(np.vdot(psi, psi).real)))


def tmss_density(g: float, cutoff: int, pad: int = 40) -> FockDensityMatrix:
    """Two-mode squeezed vacuum on (S, I) built by exponentiating the generator.

    The evolution runs ``pad`` levels beyond ``cutoff`` so the hard wall of
    the truncated generator does not reflect amplitude back.
    """
    space = FockSpace(("S", "I"), [cutoff + pad, cutoff + pad], charges=(-1, 1), charge=0)
    v = evolve(space.operator(two_mode_squeeze_terms(g, "S", "I")), space.basis_vector((0, 0)))
    keep = space.occ[:, 0] <= cutoff
    v = v[keep]
    leak = max(0.0, 1 - float(np.vdot(v, v).real))
    return FockDensityMatrix(("S", "I"), space.occ[keep], np.outer(v, v.conj()), leak)


def _quadrature_ops(n: int, dim: int) -> list[np.ndarray]:
    """Dense ``q_1, p_1, q_2, p_2, ...`` on ``n`` modes of local dimension ``dim``."""
    a = np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)
    q = (a + a.conj().T) / np.sqrt(2)
    p = (a - a.conj().T) / (1j * np.sqrt(2))
    eye = np.eye(dim)
    ops = []
    for j in range(n):
        for local in (q, p):
            m = np.array([[1.0 + 0j]])
            for k in range(n):
                m = np.kron(m, local if k == j else eye)
            ops.append(m)
    return ops


def _quadratic_unitary(x: np.ndarray, R: list[np.ndarray]) -> np.ndarray:
    """``exp(-i R^T H R / 2)`` with ``H = -Omega x``, so that ``U^dag R U = exp(x) R``."""
    n = x.shape[0] // 2
    om = np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    H = -om @ x
    H = 0.5 * (H + H.T)
    G = sum(H[j, k] * (R[j] @ R[k]) for j in range(2 * n) for k in range(2 * n) if H[j, k] != 0)
    if isinstance(G, int):
        return np.eye(R[0].shape[0], dtype=complex)
    return expm(-0.5j * G)


def gaussian_density(state, cutoff: int, pad: int = 10) -> FockDensityMatrix:
    """Number-basis density matrix of a Gaussian state.

    Built as ``D V (thermal product) V^dag D^dag`` from the Williamson form,
    with the symplectic ``V`` split into positive and orthogonal factors so
    that each has a real logarithm. Work is done with ``pad`` extra levels
    per mode and the result is cut back to ``cutoff``.
    """
    from scipy.linalg import logm, sqrtm

    from .symplectic import williamson

    n = state.n_modes
    dim = cutoff + 1 + pad
    if dim**n > 4000:
        raise DimensionError(f"dense conversion needs {dim**n} levels; reduce cutoff or pad")
    wd = williamson(state)
    Sw = wd.Sw
    P = np.real(sqrtm(Sw.T @ Sw))
    O = Sw @ np.linalg.inv(P)
    U = O[0::2, 0::2] + 1j * O[1::2, 0::2]
    A = logm(U)
    xO = np.zeros((2 * n, 2 * n))
    xO[0::2, 0::2] = A.real
    xO[0::2, 1::2] = -A.imag
    xO[1::2, 0::2] = A.imag
    xO[1::2, 1::2] = A.real
    xP = np.real(logm(P))
    R = _quadrature_ops(n, dim)
    V = _quadratic_unitary(xO, R) @ _quadratic_unitary(xP, R)
    w = np.array([1.0 + 0j])
    for nu in wd.nu:
        nth = max(nu - 0.5, 0.0)
        w = np.kron(w, (nth / (nth + 1)) ** np.arange(dim) / (nth + 1))
    rho = (V * w) @ V.conj().T
    m = state.mean
    if np.any(m != 0):
        # D^dag R D = R + m for D = exp(i R^T Omega m)
        om = np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))
        lin = om @ m
        D = expm(1j * sum(lin[j] * R[j] for j in range(2 * n)))
        rho = D @ rho @ D.conj().T
    occ = np.indices((dim,) * n).reshape(n, -1).T
    keep = np.all(occ <= cutoff, axis=1)
    rho = rho[np.ix_(keep, keep)]
    return FockDensityMatrix(tuple(state.modes), occ[keep], rho, max(0.0, 1 - float(np.trace(rho).real)))


def trace_distance(rho: FockDensityMatrix, sigma: FockDensityMatrix) -> float:
    _, (a, b) = _align(rho, sigma)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(a - b))))


# -- functionals ----------------------------------------------------------


def _align(*rhos: FockDensityMatrix):
    """Embed density matrices on the union of their bases."""
    modes = rhos[0].modes
    for r in rhos[1:]:
        if r.modes != modes:
            raise DimensionError(f"mode lists differ: {modes} vs {r.modes}")
    all_occ = np.concatenate([r.occ for r in rhos])
    radix = all_occ.max(axis=0) + 1
    codes = _codes(all_occ, radix)
    uniq, inv = np.unique(codes, return_inverse=True)
    first = np.zeros(len(uniq), dtype=np.int64)
    first[inv] = np.arange(len(codes))
    out = []
    start = 0
    for r in rhos:
        idx = inv[start:start + r.dim]
        start += r.dim
        m = np.zeros((len(uniq), len(uniq)), dtype=complex)
        m[np.ix_(idx, idx)] = r.matrix
        out.append(m)
    return all_occ[first], out


def _blocks(*mats):
    pattern = sum((np.abs(m) > 0).astype(np.int8) for m in mats)
    n, labels = connected_components(sps.csr_matrix(pattern), directed=False)
    return [np.flatnonzero(labels == b) for b in range(n)]


def _eigh_psd(m):
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return np.clip(w, 0.0, None), v


def _mat_power(m, s):
    w, v = _eigh_psd(m)
    ws = np.where(w > EIG_TOL, w, 0.0) ** s
    return (v * ws) @ v.conj().T


def fock_fidelity(rho: FockDensityMatrix, sigma: FockDensityMatrix) -> float:
    _, (a, b) = _align(rho, sigma)
    root = 0.0
    for idx in _blocks(a, b):
        ab = a[np.ix_(idx, idx)]
        bb = b[np.ix_(idx, idx)]
        # trace norm of sqrt(a) sqrt(b): singular values carry absolute rounding
        # error, unlike square roots of the eigenvalues of sqrt(a) b sqrt(a)
        prod = _mat_power(ab, 0.5) @ _mat_power(bb, 0.5)
        root += float(np.sum(np.linalg.svd(prod, compute_uv=False)))
    return root**2


def fock_s_overlap(rho: FockDensityMatrix, sigma: FockDensityMatrix, s: float) -> float:
    if not 0.0 < s < 1.0:
        raise DomainError("s must lie in (0, 1)")
    _, (a, b) = _align(rho, sigma)
    total = 0.0
    for idx in _blocks(a, b):
        pa = _mat_power(a[np.ix_(idx, idx)], s)
        pb = _mat_power(b[np.ix_(idx, idx)], 1 - s)
        total += float(np.real(np.sum(pa * pb.T)))
    return total


def fock_qce(rho: FockDensityMatrix, sigma: FockDensityMatrix, tol: float = 1e-5) -> tuple[float, float]:
    """``(C, s*)`` by bounded scalar minimization of the oracle log s-overlap."""
    _, (a, b) = _align(rho, sigma)
    blocks = []
    for idx in _blocks(a, b):
        wa, va = _eigh_psd(a[np.ix_(idx, idx)])
        wb, vb = _eigh_psd(b[np.ix_(idx, idx)])
        overlap = np.abs(va.conj().T @ vb) ** 2
        blocks.append((wa, wb, overlap))

    def log_q(s):
        tot = 0.0
        for wa, wb, ov in blocks:
            pa = np.where(wa > EIG_TOL, wa, 0.0) ** s
            pb = np.where(wb > EIG_TOL, wb, 0.0) ** (1 - s)
            tot += pa @ ov @ pb
        return np.log(tot)

    res = minimize_scalar(log_q, bounds=(1e-6, 1 - 1e-6), method="bounded", options={"xatol": tol})
    return float(-res.fun), float(res.x)


def fock_qfi_from_derivative(rho: np.ndarray, drho: np.ndarray) -> float:
    """``2 sum |<i|drho|j>|^2 / (l_i + l_j)`` over pairs with ``l_i + l_j > 0``."""
    total = 0.0
    for idx in _blocks(rho, drho):
        w, v = _eigh_psd(rho[np.ix_(idx, idx)])
        d = v.conj().T @ drho[np.ix_(idx, idx)] @ v
        den = w[:, None] + w[None, :]
        mask = den > 1e-12
        total += 2 * float(np.sum(np.abs(d[mask]) ** 2 / den[mask]))
    return total


def fock_qfi(family: Callable[[float], FockDensityMatrix], x: float, step: float | None = None) -> float:
    """QFI from the SLD eigenbasis sum with a five-point derivative of ``rho``."""
    h = step if step is not None else 1e-3 * min(x, 1 - x)
    rhos = [family(x + j * h) for j in (-2, -1, 0, 1, 2)]
    _, mats = _align(*rhos)
    drho = (mats[0] - 8 * mats[1] + 8 * mats[3] - mats[4]) / (12 * h)
    return fock_qfi_from_derivative(mats[2], drho)


# -- purification variance ------------------------------------------------


def theorem1_variance_check(g: float, n_b: float, cutoff: int | None = None) -> tuple[float, float]:
    """``4 Var(a_S^dag a_E1 + h.c.)`` on ``|psi_TMSS>_IS (x) sum_k sqrt(q_k)|k,k>_E1E2``.

    Returns ``(value, leakage)``.
    """
    n_s = float(np.sinh(g) ** 2)
    t = np.tanh(g)
    if cutoff is None:
        # Schmidt tail below 1e-16 so fourth moments are unaffected
        tail = int(ceil(np.log(1e-16) / (2 * np.log(t)))) if t > 0 else 0
        cutoff = max(default_cutoff(n_s, n_b), tail)
    n = np.arange(cutoff + 1)
    c = t**n / np.cosh(g)
    q, _ = thermal_weights(n_b, budget=1e-14)
    q = q[: cutoff + 1]
    kmax = len(q) - 1
    modes = ("I", "S", "E1", "E2")
    space = FockSpace(modes, [cutoff, cutoff + kmax, cutoff + kmax, kmax],
                      charges=(1, -1, -1, 1), charge=0)
    amps = {(i, i, k, k): c[i] * np.sqrt(q[k]) for i in range(cutoff + 1) for k in range(kmax + 1)}
    phi = space.vector(amps)
    norm2 = float(np.vdot(phi, phi).real)
    A = space.operator([(1.0, [("S", True), ("E1", False)]), (1.0, [("E1", True), ("S", False)])])
    Aphi = A @ phi
    mean = np.vdot(phi, Aphi).real / norm2
    second = np.vdot(Aphi, Aphi).real / norm2
    return float(4 * (second - mean**2)), float(max(0.0, 1 - norm2))


# -- comparison with the phase-space pipeline -----------------------------


@dataclass
class OracleComparison:
    """Oracle and Gaussian values of the same quantities at one parameter point.

    ``values`` maps a quantity name to ``(oracle, gaussian)``; fidelity and
    s-overlaps compare the target state against the no-target state.
    """

    params: SchemeParams
    cutoff: int
    leakage: float
    values: dict
    max_moment_error: float

    def errors(self) -> dict:
        return {k: abs(o - g) for k, (o, g) in self.values.items()}

    def passes(self, abs_tol: float = 1e-4, qfi_rel_tol: float = 1e-3) -> bool:
        for name, (o, g) in self.values.items():
            if name == "qfi":
                if abs(o - g) > qfi_rel_tol * abs(g):
                    return False
            elif abs(o - g) > abs_tol:
                return False
        return self.max_moment_error <= abs_tol


def compare_with_gaussian(p: SchemeParams, s_values: Sequence[float] = (0.3, 0.5, 0.7),
                          qfi_step: float | None = None) -> OracleComparison:
    """Fidelity, s-overlaps, QFI and moments from both pipelines."""
    from .channels import receiver_theta, family
    from .detection import s_overlap
    from .metrology import fidelity, qfi_sld

    builder = _BUILDERS[p.scheme]
    rho1, cutoff = select_cutoff(p)
    rho0 = builder(p, np.pi / 2, cutoff)
    h = qfi_step if qfi_step is not None else 1e-3 * min(p.kappa, 1 - p.kappa)
    lo = builder(p, _theta(p.kappa - h), cutoff)
    hi = builder(p, _theta(p.kappa + h), cutoff)
    _, (m_lo, m_mid, m_hi) = _align(lo, rho1, hi)
    oracle_qfi = fock_qfi_from_derivative(m_mid, (m_hi - m_lo) / (2 * h))

    g1 = receiver_theta(p, _theta(p.kappa))
    g0 = receiver_theta(p, np.pi / 2)
    values = {
        "fidelity": (fock_fidelity(rho0, rho1), fidelity(g0, g1)),
        "qfi": (oracle_qfi, qfi_sld(family(p), p.kappa).value),
    }
    for s in s_values:
        values[f"q_s={s:g}"] = (fock_s_overlap(rho0, rho1, s), s_overlap(g0, g1, s))
    mean, cov = rho1.moments()
    moment_err = float(max(np.abs(mean - g1.mean).max(), np.abs(cov - g1.cov).max()))
    leak = max(rho1.leakage, rho0.leakage, lo.leakage, hi.leakage)
    return OracleComparison(p, cutoff, leak, values, moment_err)
