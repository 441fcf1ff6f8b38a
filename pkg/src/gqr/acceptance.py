"""Acceptance checks, shared by ``gqr verify`` and the test suite.

Each check returns a :class:`CriterionResult`; failures carry the offending
values in ``detail`` rather than raising.
"""

from __future__ import annotations

import itertools
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import metrology as mt
from . import symplectic as sp
from .channels import (
    FOUR_SCHEMES,
    Scheme,
    SchemeParams,
    best_gaussian_probe,
    family,
    probe_family,
    random_mixer,
    receiver,
    receiver_theta,
    saturating_mixer,
)
from .detection import fuchs_van_de_graaf_chain, hypotheses, limit_coefficient, qce


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.title} ({self.seconds:.1f} s)"


class _Checker:
    def __init__(self):
        self.ok = True
        self.detail = []

    def check(self, cond: bool, message: str):
        if not cond:
            self.ok = False
            self.detail.append(message)

    def note(self, message: str):
        self.detail.append(message)


def _rel(a, b):
    return abs(a - b) / abs(b)


def _timed(number: int, title: str, body: Callable[[_Checker], None]) -> CriterionResult:
    t0 = time.perf_counter()
    c = _Checker()
    body(c)
    return CriterionResult(number, title, c.ok, c.detail, time.perf_counter() - t0)


def leading_coefficient(qfi_of_kappa: Callable[[float], float], k1: float = 1e-3, k2: float = 1e-4) -> float:
    """Linear extrapolation of ``kappa (1 - kappa) QFI`` to ``kappa = 0``."""
    c1 = k1 * (1 - k1) * qfi_of_kappa(k1)
    c2 = k2 * (1 - k2) * qfi_of_kappa(k2)
    return c2 - (c1 - c2) * k2 / (k1 - k2)


def _sld(p: SchemeParams) -> float:
    return mt.qfi_sld(family(p), p.kappa).value


# -- 1 --------------------------------------------------------------------

TABLE1_NS = (0.5, 1.0, 2.0)
TABLE1_KAPPA = (0.1, 0.3, 0.5, 0.8)


def criterion_table1() -> CriterionResult:
    def body(c: _Checker):
        from . import fock

        tol = 1e-5
        closed = {
            Scheme.COHERENT_THERMAL: mt.qfi_coherent_noiseless,
            Scheme.TMSS: mt.qfi_fock,
            Scheme.MODEL2: mt.qfi_model2_noiseless,
            Scheme.MODEL1: mt.qfi_model1_noiseless,
        }
        for ns, k in itertools.product(TABLE1_NS, TABLE1_KAPPA):
            for scheme, fn in closed.items():
                fam = family(SchemeParams(scheme, ns, 0.0, k))
                ref = fn(ns, k)
                for name, val in (("fd", mt.qfi_fd(fam, k).value), ("sld", mt.qfi_sld(fam, k).value)):
                    c.check(_rel(val, ref) <= tol, f"{scheme.value} {name} N_S={ns} k={k}: {val} vs {ref}")
            if float(ns).is_integer():
                n = int(ns)

                def ffam(kk, n=n):
                    return fock.fock_probe_receiver(n, 0.0, float(np.arccos(np.sqrt(kk))))

                ref = mt.qfi_fock(ns, k)
                fd = mt.qfi_fd(ffam, k, fidelity_fn=fock.fock_fidelity).value
                sld = fock.fock_qfi(ffam, k)
                c.check(_rel(fd, ref) <= tol and _rel(sld, ref) <= tol,
                        f"fock N_S={ns} k={k}: fd {fd} sld {sld} vs {ref}")
            # best Gaussian: between coherent and Fock, deficit O(kappa)
            _, best = best_gaussian_probe(ns, k)
            c.check(ns / k * (1 - tol) <= best <= mt.qfi_fock(ns, k) * (1 + tol),
                    f"best Gaussian N_S={ns} k={k}: {best} outside [N_S/k, N_S/(k(1-k))]")
        for ns in TABLE1_NS:
            deficits = []
            for k in (1e-2, 1e-3):
                _, best = best_gaussian_probe(ns, k)
                deficits.append((ns - k * (1 - k) * best) / k)
            c.check(deficits[1] > 0 and _rel(deficits[0], deficits[1]) < 0.05,
                    f"best Gaussian deficit/kappa not converging at N_S={ns}: {deficits}")
        c.note("Fock row checked at integer N_S only; a Fock state needs integer photon number")
        spots = [
            (Scheme.COHERENT_THERMAL, 1.0, 0.25, 4.0),
            (Scheme.MODEL1, 1.0, 0.5, 12 / 7),
            (Scheme.MODEL2, 1.0, 0.5, np.log(1 + np.sqrt(2)) ** 2 / 0.5),
        ]
        for scheme, ns, k, ref in spots:
            val = _sld(SchemeParams(scheme, ns, 0.0, k))
            c.check(_rel(val, ref) <= tol, f"spot {scheme.value} ({ns}, {k}): {val} vs {ref}")
        c.check(abs(np.log(1 + np.sqrt(2)) ** 2 / 0.5 - 1.55364) < 5e-6, "Model 2 spot value")

    res = _timed(1, "noiseless closed forms (fd and sld, rel 1e-5)", body)
    if res.seconds >= 10:
        res.passed = False
        res.detail.append(f"runtime {res.seconds:.1f} s exceeds 10 s")
    return res


# -- 2 --------------------------------------------------------------------


def criterion_coherent_thermal() -> CriterionResult:
    def body(c: _Checker):
        for nth, nb, k in itertools.product((0.0, 1.0), (0.0, 0.5, 2.0), (0.1, 0.5, 0.9)):
            p = SchemeParams(Scheme.COHERENT_THERMAL, nth + 1.0, nb, k, n_th=nth)
            ref = mt.qfi_coherent_thermal(nth, nb, k, 2.0)
            fam = family(p)
            for name, val in (("fd", mt.qfi_fd(fam, k).value), ("sld", mt.qfi_sld(fam, k).value)):
                c.check(_rel(val, ref) <= 1e-5, f"{name} N_th={nth} N_B={nb} k={k}: {val} vs {ref}")
        for nb in (0.5, 2.0):
            covs = [receiver(SchemeParams(Scheme.COHERENT_THERMAL, 1.0, nb, k, neglect_shadow=True)).cov
                    for k in np.linspace(0.0, 0.95, 20)]
            dev = max(np.max(np.abs(cv - covs[0])) for cv in covs)
            c.check(dev <= 1e-12, f"shadow-neglect covariance varies by {dev:.2e} at N_B={nb}")

    return _timed(2, "displaced-thermal QFI and shadow-neglect covariance", body)


# -- 3 --------------------------------------------------------------------

GRID_NS = (0.5, 1.0, 2.0)
GRID_NB = (0.0, 0.5, 2.0)


def criterion_tmss() -> CriterionResult:
    def body(c: _Checker):
        for ns, nb, k in itertools.product(GRID_NS, GRID_NB, (0.1, 0.5, 0.9)):
            fam = family(SchemeParams(Scheme.TMSS, ns, nb, k))
            ref = mt.qfi_tmss(ns, nb, k)
            for name, val in (("fd", mt.qfi_fd(fam, k).value), ("sld", mt.qfi_sld(fam, k).value)):
                c.check(_rel(val, ref) <= 1e-5, f"{name} N_S={ns} N_B={nb} k={k}: {val} vs {ref}")
        for ns, nb in itertools.product(GRID_NS, GRID_NB):
            lead = leading_coefficient(lambda k: _sld(SchemeParams(Scheme.TMSS, ns, nb, k)))
            ref = mt.tmss_leading_coefficient(ns, nb)
            c.check(_rel(lead, ref) <= 0.01, f"leading coefficient N_S={ns} N_B={nb}: {lead} vs {ref}")

    return _timed(3, "two-mode squeezed QFI and leading coefficient", body)


# -- 4 --------------------------------------------------------------------


def criterion_model1() -> CriterionResult:
    def body(c: _Checker):
        for ns, nb, k in itertools.product(GRID_NS, GRID_NB, TABLE1_KAPPA):
            fam = family(SchemeParams(Scheme.MODEL1, ns, nb, k))
            ref = mt.qfi_model1(ns, nb, k)
            for name, val in (("fd", mt.qfi_fd(fam, k).value), ("sld", mt.qfi_sld(fam, k).value)):
                c.check(_rel(val, ref) <= 1e-5, f"{name} N_S={ns} N_B={nb} k={k}: {val} vs {ref}")
        for ns, nb in itertools.product(GRID_NS, GRID_NB):
            lead = leading_coefficient(lambda k: _sld(SchemeParams(Scheme.MODEL1, ns, nb, k)))
            ref = mt.model1_leading_coefficient(ns, nb)
            c.check(_rel(lead, ref) <= 0.01, f"leading coefficient N_S={ns} N_B={nb}: {lead} vs {ref}")
        for ns in GRID_NS:
            ratio = _sld(SchemeParams(Scheme.MODEL1, ns, 0.0, 1e-4)) / _sld(SchemeParams(Scheme.TMSS, ns, 0.0, 1e-4))
            c.check(abs(ratio - 0.5) <= 0.005, f"circuit/TMSS ratio at N_S={ns}: {ratio}")

    return _timed(4, "circuit-model QFI, leading coefficient, factor 1/2", body)


# -- 5 --------------------------------------------------------------------


def criterion_model2() -> CriterionResult:
    def body(c: _Checker):
        from .reports import FIG2A_NB, FIG2A_NS

        for ns, k in itertools.product(TABLE1_NS, TABLE1_KAPPA):
            val = _sld(SchemeParams(Scheme.MODEL2, ns, 0.0, k))
            ref = mt.qfi_model2_noiseless(ns, k)
            c.check(_rel(val, ref) <= 1e-5, f"N_B=0 N_S={ns} k={k}: {val} vs {ref}")
        for nb in (2.0, 5.0, 20.0):
            k = 1e-4
            p = SchemeParams(Scheme.MODEL2, 1e4, nb, k)
            ratio = mt.qfi_model2_asymptotic(1e4, nb, k) / mt.qfi_sld(family(p), k).value
            c.check(0.98 <= ratio <= 1.02, f"asymptotic ratio N_B={nb}: {ratio}")
        k = 1e-3
        for ns in FIG2A_NS:
            vals = [k * (1 - k) * _sld(SchemeParams(Scheme.MODEL2, ns, nb, k)) for nb in FIG2A_NB]
            shown = ", ".join(f"{v:.4g}" for v in vals)
            c.check(all(b > a for a, b in zip(vals, vals[1:])),
                    f"scaled QFI not increasing in N_B at N_S={ns:.4g}: [{shown}]")

    return _timed(5, "Hamiltonian model: noiseless row, asymptotic form, growth with N_B", body)


# -- 6 --------------------------------------------------------------------


def bound_check_points():
    ns = (0.1, 0.5, 1.0, 3.0, 10.0)
    nb = (0.0, 0.5, 5.0, 50.0)
    ks = (0.01, 0.1, 0.3, 0.5, 0.9)
    return [(a, b, ks[(i + j) % len(ks)]) for i, a in enumerate(ns) for j, b in enumerate(nb)]


def criterion_bound(seed: int = 1234, n_mixers: int = 50) -> CriterionResult:
    def body(c: _Checker):
        from .fock import theorem1_variance_check

        for ns, nb in itertools.product((0.5, 1.0), (0.0, 0.5, 1.0)):
            g = float(np.arcsinh(np.sqrt(ns)))
            val, leak = theorem1_variance_check(g, nb)
            ref = 4 * (ns + nb + 2 * ns * nb)
            c.check(_rel(val, ref) <= 1e-6, f"variance N_S={ns} N_B={nb}: {val} vs {ref} (leak {leak:.1e})")
        rng = np.random.default_rng(seed)
        worst = 0.0
        for ns, nb, k in bound_check_points():
            bound = mt.theorem1_bound(ns, nb, k)
            p = SchemeParams(Scheme.IDLER_MIXER, ns, nb, k)
            for _ in range(n_mixers):
                val = mt.qfi_sld(family(p, random_mixer(rng)), k).value
                worst = max(worst, val / bound)
                c.check(val <= bound * (1 + 1e-6), f"bound violated N_S={ns} N_B={nb} k={k}: {val} > {bound}")
        c.note(f"largest QFI/bound over random mixers: {worst:.6f}")
        p = SchemeParams(Scheme.IDLER_MIXER, 1.0, 100.0, 1e-4)
        val = mt.qfi_sld(family(p, saturating_mixer()), 1e-4).value
        ratio = val / mt.theorem1_saturating(1.0, 100.0, 1e-4)
        c.check(0.95 <= ratio <= 1.05, f"saturating ratio {ratio}")
        c.note(f"saturating ratio {ratio:.6f}")

    return _timed(6, "entanglement-assisted bound: variance, random mixers, saturation", body)


# -- 7 --------------------------------------------------------------------


def criterion_energy() -> CriterionResult:
    def body(c: _Checker):
        for scheme in (Scheme.MODEL1, Scheme.MODEL2):
            for ns, nb in itertools.product((0.5, 1.0, 2.0), (0.0, 1.0, 5.0)):
                st = receiver_theta(SchemeParams(scheme, ns, nb, 0.0), np.pi / 2)
                val = sp.total_photon_number(st)
                ref = ns * (nb + 2)
                c.check(abs(val - ref) <= 1e-9 * max(1.0, ref), f"{scheme.value} N_S={ns} N_B={nb}: {val} vs {ref}")

    return _timed(7, "idler energy N_S(N_B+2) without target", body)


# -- 8 --------------------------------------------------------------------

ORACLE_NS = (0.2, 0.5, 1.0)
ORACLE_NB = (0.0, 0.2, 0.5)
ORACLE_KAPPA = (0.1, 0.3, 0.5, 0.9)


def criterion_oracle(level: str = "full") -> CriterionResult:
    def body(c: _Checker):
        from .fock import compare_with_gaussian

        schemes = FOUR_SCHEMES if level == "full" else FOUR_SCHEMES[:3]
        if level != "full":
            c.note("quick level: Hamiltonian-model oracle builds skipped")
        worst = {}
        for scheme in schemes:
            for ns, nb, k in itertools.product(ORACLE_NS, ORACLE_NB, ORACLE_KAPPA):
                cmp = compare_with_gaussian(SchemeParams(scheme, ns, nb, k))
                c.check(cmp.passes(), f"{scheme.value} N_S={ns} N_B={nb} k={k}: {cmp.values} "
                        f"moments {cmp.max_moment_error:.1e}")
                errs = cmp.errors()
                errs["qfi"] /= abs(cmp.values["qfi"][1])
                worst[scheme.value] = max(worst.get(scheme.value, 0.0), max(errs.values()), cmp.max_moment_error)
        c.note("worst error per scheme: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))

    res = _timed(8, "Fock oracle agrees with Gaussian pipeline", body)
    if res.seconds >= 600:
        res.passed = False
        res.detail.append(f"runtime {res.seconds:.0f} s exceeds 600 s")
    return res


# -- 9 --------------------------------------------------------------------

DETECTION_NB = 20.0
DETECTION_KAPPA = 1e-4
DETECTION_NS = (1e-2, 1e-1)
DETECTION_M = tuple(np.logspace(4, 8, 9))
ORACLE_CHAIN_POINTS = ((0.2, 0.0, 0.3), (0.5, 0.2, 0.1), (1.0, 0.5, 0.5))


def criterion_detection() -> CriterionResult:
    def body(c: _Checker):
        from .fock import compare_with_gaussian, fock_build, fock_build_theta, fock_fidelity, fock_qce
        from .detection import log10_fvg_qfi_bound

        for ns in DETECTION_NS:
            vals = {}
            for scheme in FOUR_SCHEMES:
                p = SchemeParams(scheme, ns, DETECTION_NB, DETECTION_KAPPA)
                rho0, rho1 = hypotheses(p)
                res = qce(rho0, rho1)
                vals[scheme] = res.qce
                lim = limit_coefficient(p)
                for M in DETECTION_M:
                    exact = np.log10(0.5) - M * res.qce / np.log(10)
                    bound = log10_fvg_qfi_bound(M, DETECTION_KAPPA, lim)
                    c.check(bound >= exact, f"bound below exact for {scheme.value} N_S={ns} M={M:.0e}")
                    chain = fuchs_van_de_graaf_chain(rho0, rho1, M, DETECTION_KAPPA, lim)
                    c.check(0.5 * np.exp(-M * res.qce) <= chain.fidelity_bound * (1 + 1e-12),
                            f"fidelity chain fails for {scheme.value} N_S={ns} M={M:.0e}")
            c.note(f"N_S={ns}: " + ", ".join(f"{s.value} {v:.4e}" for s, v in vals.items()))
            for other in (Scheme.COHERENT_THERMAL, Scheme.TMSS, Scheme.MODEL1):
                c.check(vals[Scheme.MODEL2] > vals[other],
                        f"N_S={ns}: Hamiltonian-model exponent {vals[Scheme.MODEL2]:.4e} "
                        f"does not exceed {other.value} {vals[other]:.4e}")
        # chain on density matrices at small parameters
        for scheme in FOUR_SCHEMES:
            for ns, nb, k in ORACLE_CHAIN_POINTS:
                p = SchemeParams(scheme, ns, nb, k)
                rho1 = fock_build(p)
                rho0 = fock_build_theta(p, np.pi / 2)
                C, _ = fock_qce(rho0, rho1)
                F = fock_fidelity(rho0, rho1)
                for M in (1, 10, 100):
                    c.check(np.exp(-M * C) <= F ** (M / 2) * (1 + 1e-9),
                            f"oracle chain fails for {scheme.value} {ns},{nb},{k} M={M}")
                g0, g1 = hypotheses(p)
                Cg = qce(g0, g1).qce
                c.check(abs(C - Cg) <= 1e-4 * max(1.0, Cg), f"oracle exponent {C} vs Gaussian {Cg}")

    return _timed(9, "detection exponents, bound dominance, fidelity chain", body)


# -- 10 -------------------------------------------------------------------


def criterion_equivalence() -> CriterionResult:
    def body(c: _Checker):
        from .equivalence import model1_equivalence

        for k in (0.1, 0.5):
            rep = model1_equivalence(g=0.4, kappa=k)
            c.check(rep.ok, f"no principal generator at k={k}: {rep.result}")
            if rep.ok:
                coup = rep.decomposition.coupling("TMS", "I2", "E")
                c.check(coup > 1e-6, f"TMS(I2,E) coupling {coup} at k={k}")
                c.check(rep.round_trip_error <= 1e-6, f"round trip {rep.round_trip_error} at k={k}")
                c.note(f"k={k}: |TMS(I2,E)| = {coup:.6f}, round trip {rep.round_trip_error:.1e}")

    return _timed(10, "circuit generator contains an environment-idler squeezer", body)


# -- 11 -------------------------------------------------------------------


def criterion_determinism() -> CriterionResult:
    def body(c: _Checker):
        outs = []
        with tempfile.TemporaryDirectory() as tmp:
            for i, workers in enumerate(("1", "2")):
                path = os.path.join(tmp, f"run{i}.csv")
                env = dict(os.environ, GQR_WORKERS=workers)
                proc = subprocess.run([sys.executable, "-m", "gqr.cli", "fig2a", "--out", path],
                                      env=env, capture_output=True, text=True)
                c.check(proc.returncode == 0, f"gqr fig2a failed: {proc.stderr[-500:]}")
                if proc.returncode == 0:
                    with open(path, "rb") as fh:
                        outs.append(fh.read())
        if len(outs) == 2:
            c.check(outs[0] == outs[1], "fig2a CSV differs between runs")
            c.note(f"{len(outs[0])} bytes, identical with 1 and 2 workers")

    return _timed(11, "fig2a output is byte-identical across runs", body)


CRITERIA = {
    1: criterion_table1,
    2: criterion_coherent_thermal,
    3: criterion_tmss,
    4: criterion_model1,
    5: criterion_model2,
    6: criterion_bound,
    7: criterion_energy,
    8: criterion_oracle,
    9: criterion_detection,
    10: criterion_equivalence,
    11: criterion_determinism,
}


def run_all(level: str = "full", only=None) -> list[CriterionResult]:
    out = []
    for n, fn in CRITERIA.items():
        if only and n not in only:
            continue
        out.append(fn(level) if n == 8 else fn())
    return out
