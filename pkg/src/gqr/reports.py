"""Table and figure data as deterministic CSV/JSON reports."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from . import __version__
from . import metrology as mt
from .channels import (
    FOUR_SCHEMES,
    Scheme,
    SchemeParams,
    best_gaussian_probe,
    family,
    probe_family,
    random_mixer,
)
from .detection import detect, fuchs_van_de_graaf_chain, hypotheses, limit_coefficient, log10_fvg_qfi_bound, log_envelope
from .errors import DomainError
from .symplectic import total_photon_number

CONVENTION = "hbar=1; a=(q+ip)/sqrt(2); vacuum quadrature variance 1/2; ordering (q1,p1,q2,p2,...)"
SORT_KEYS = ("scheme", "N_S", "N_B", "kappa", "M")
SCHEME_COLORS = {
    Scheme.COHERENT_THERMAL: "black",
    Scheme.TMSS: "red",
    Scheme.MODEL1: "blue",
    Scheme.MODEL2: "green",
}


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else f"{v:.11e}"
    return str(v)


def _sort_key(row: dict):
    key = []
    for k in SORT_KEYS:
        if k in row:
            v = row[k]
            key.append((0, v) if isinstance(v, str) else (1, float(v)))
    return tuple(key)


@dataclass
class Report:
    name: str
    columns: list[str]
    rows: list[dict]
    params: dict = field(default_factory=dict)
    sort: bool = True

    def ordered_rows(self) -> list[dict]:
        return sorted(self.rows, key=_sort_key) if self.sort else list(self.rows)

    def header_lines(self) -> list[str]:
        params = " ".join(f"{k}={_param_text(v)}" for k, v in self.params.items())
        return [
            f"# gqr {__version__} {self.name}",
            f"# params: {params}",
            f"# conventions: {CONVENTION}",
        ]

    def to_csv(self) -> str:
        lines = self.header_lines() + [",".join(self.columns)]
        for row in self.ordered_rows():
            lines.append(",".join(format_value(row.get(c, "")) for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        out = []
        for row in self.ordered_rows():
            out.append({c: _json_value(row.get(c)) for c in self.columns})
        return json.dumps(out, indent=1) + "\n"

    def render(self, fmt: str = "csv") -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise DomainError(f"unknown format {fmt!r}")


def _param_text(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ";".join(format_value(x) for x in v) + "]"
    return format_value(v)


def _json_value(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) else float(format_value(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("GQR_WORKERS")
    if env:
        return max(1, int(env))
    if requested:
        return max(1, int(requested))
    return os.cpu_count() or 1


def parallel_map(fn, items: Sequence, workers: int | None = None) -> list:
    """Order-preserving map over a bounded process pool."""
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- noiseless transmitter rows ------------------------------------------

TABLE1_COLUMNS = ["model", "N_S", "kappa", "closed_form", "qfi_fd", "qfi_sld", "rel_dev_fd", "rel_dev_sld", "note"]


def _rel(a, b):
    return abs(a - b) / abs(b) if b else abs(a - b)


def _fock_row(n_s: float, kappa: float) -> dict:
    from . import fock

    closed = mt.qfi_fock(n_s, kappa)
    if abs(n_s - round(n_s)) > 1e-12:
        return {"model": "fock", "closed_form": closed, "qfi_fd": float("nan"), "qfi_sld": float("nan"),
                "rel_dev_fd": float("nan"), "rel_dev_sld": float("nan"),
                "note": "needs integer N_S"}
    n = int(round(n_s))

    def fam(k):
        return fock.fock_probe_receiver(n, 0.0, float(np.arccos(np.sqrt(k))))

    fd = mt.qfi_fd(fam, kappa, fidelity_fn=fock.fock_fidelity).value
    sld = fock.fock_qfi(fam, kappa)
    return {"model": "fock", "closed_form": closed, "qfi_fd": fd, "qfi_sld": sld,
            "rel_dev_fd": _rel(fd, closed), "rel_dev_sld": _rel(sld, closed),
            "note": "truncated Fock oracle; equals the TMSS row"}


def table1_rows(n_s: float, kappa: float) -> list[dict]:
    rows = []

    def gaussian_row(name, fam, closed, note=""):
        fd = mt.qfi_fd(fam, kappa).value
        sld = mt.qfi_sld(fam, kappa).value
        return {"model": name, "closed_form": closed, "qfi_fd": fd, "qfi_sld": sld,
                "rel_dev_fd": _rel(fd, closed), "rel_dev_sld": _rel(sld, closed), "note": note}

    rows.append(gaussian_row("coherent", family(SchemeParams(Scheme.COHERENT_THERMAL, n_s, 0.0, kappa)),
                             mt.qfi_coherent_noiseless(n_s, kappa)))
    probe, _ = best_gaussian_probe(n_s, kappa)
    rows.append(gaussian_row("best_single_mode_gaussian", probe_family(probe), mt.qfi_fock(n_s, kappa),
                             "closed form is the leading term N_S/(k(1-k)); the deficit is O(kappa)"))
    rows.append(_fock_row(n_s, kappa))
    rows.append(gaussian_row("tmss", family(SchemeParams(Scheme.TMSS, n_s, 0.0, kappa)),
                             mt.qfi_fock(n_s, kappa)))
    rows.append(gaussian_row("model2", family(SchemeParams(Scheme.MODEL2, n_s, 0.0, kappa)),
                             mt.qfi_model2_noiseless(n_s, kappa)))
    rows.append(gaussian_row("model1", family(SchemeParams(Scheme.MODEL1, n_s, 0.0, kappa)),
                             mt.qfi_model1_noiseless(n_s, kappa)))
    for r in rows:
        r["N_S"], r["kappa"] = n_s, kappa
    return rows


def table1(n_s: float = 1.0, kappa: float = 0.5) -> Report:
    n_s, kappa = float(n_s), float(kappa)
    return Report("table1", TABLE1_COLUMNS, table1_rows(n_s, kappa), {"N_S": n_s, "kappa": kappa, "N_B": 0.0},
                  sort=False)


# -- scaled QFI versus N_S ----------------------------------------------

FIG2A_COLUMNS = ["N_S", "N_B", "kappa", "scaled_qfi", "asymptotic", "nb0_closed_form"]
FIG2A_NS = tuple(np.logspace(0, 2, 21))
FIG2A_NB = (0.0, 2.0, 5.0, 10.0, 20.0)


def _fig2a_point(args) -> dict:
    n_s, n_b, kappa = args
    scale = kappa * (1 - kappa)
    q = mt.qfi_sld(family(SchemeParams(Scheme.MODEL2, n_s, n_b, kappa)), kappa).value
    return {
        "N_S": n_s,
        "N_B": n_b,
        "kappa": kappa,
        "scaled_qfi": scale * q,
        "asymptotic": scale * mt.qfi_model2_asymptotic(n_s, n_b, kappa),
        "nb0_closed_form": scale * mt.qfi_model2_noiseless(n_s, kappa),
    }


def fig2a(kappa: float = 1e-3, ns_grid: Sequence[float] = FIG2A_NS, nb_list: Sequence[float] = FIG2A_NB,
          workers: int | None = None) -> Report:
    """Hamiltonian-model QFI scaled by ``kappa (1 - kappa)`` versus ``N_S`` for several ``N_B``."""
    points = [(float(ns), float(nb), float(kappa)) for nb in nb_list for ns in ns_grid]
    rows = parallel_map(_fig2a_point, points, workers)
    return Report("fig2a", FIG2A_COLUMNS, rows,
                  {"kappa": kappa, "N_S": list(ns_grid), "N_B": list(nb_list)})


# -- detection exponents and bounds --------------------------------------

FIG2B_COLUMNS = ["scheme", "N_S", "N_B", "kappa", "M", "qce", "s_star", "limit_coefficient",
                 "log10_p_err", "log10_bound", "premise_holds", "color"]
FIG2B_M = (0.0,) + tuple(np.logspace(4, 8, 9))


def _fig2b_scheme(args) -> list[dict]:
    scheme, n_s, n_b, kappa, Ms = args
    p = SchemeParams(scheme, n_s, n_b, kappa)
    res = detect(p, Ms)
    c = limit_coefficient(p)
    rho0, rho1 = hypotheses(p)
    premise = fuchs_van_de_graaf_chain(rho0, rho1, 1.0, kappa, c).premise_holds
    rows = []
    for (M, lp), (_, lb) in zip(res.p_err_envelope, res.fvg_bound_envelope):
        rows.append({
            "scheme": scheme.value, "N_S": n_s, "N_B": n_b, "kappa": kappa, "M": M,
            "qce": res.qce, "s_star": res.s_star, "limit_coefficient": c,
            "log10_p_err": lp, "log10_bound": lb, "premise_holds": premise,
            "color": SCHEME_COLORS[scheme],
        })
    return rows


def fig2b(n_b: float = 20.0, kappa: float = 1e-4, ns_list: Sequence[float] = (1e-2, 1e-1),
          Ms: Sequence[float] = FIG2B_M, workers: int | None = None) -> Report:
    """Chernoff-envelope error probabilities and the quadratic-angle bound per scheme."""
    jobs = [(s, float(ns), float(n_b), float(kappa), tuple(float(m) for m in Ms))
            for ns in ns_list for s in FOUR_SCHEMES]
    rows = [r for chunk in parallel_map(_fig2b_scheme, jobs, workers) for r in chunk]
    return Report("fig2b", FIG2B_COLUMNS, rows,
                  {"N_B": n_b, "kappa": kappa, "N_S": list(ns_list), "M": list(Ms)})


# -- sweeps ---------------------------------------------------------------

SWEEP_OUTPUTS = ("qfi_fd", "qfi_sld", "closed_form", "qce", "limit_coefficient", "energy",
                 "bound_ratio", "log10_p_err", "log10_bound")
BOUND_MIXERS = 10


@dataclass
class SweepSpec:
    schemes: list = field(default_factory=lambda: [s.value for s in FOUR_SCHEMES])
    n_s: object = field(default_factory=lambda: [1.0])
    n_b: object = field(default_factory=lambda: [0.0])
    kappa: object = field(default_factory=lambda: [0.5])
    M: object = field(default_factory=list)
    outputs: list = field(default_factory=lambda: ["qfi_sld", "closed_form"])
    format: str = "csv"
    workers: int | None = None
    seed: int = 0

    def __post_init__(self):
        self.schemes = [Scheme(s).value for s in _as_list(self.schemes)]
        self.n_s = expand_grid(self.n_s)
        self.n_b = expand_grid(self.n_b)
        self.kappa = expand_grid(self.kappa)
        self.M = expand_grid(self.M) if self.M not in (None, []) else []
        self.outputs = _as_list(self.outputs)
        unknown = [o for o in self.outputs if o not in SWEEP_OUTPUTS]
        if unknown:
            raise DomainError(f"unknown outputs {unknown}; choose from {SWEEP_OUTPUTS}")
        if not (self.schemes and self.n_s and self.n_b and self.kappa):
            raise DomainError("sweep grids must be nonempty")
        if any(not 0.0 < k < 1.0 for k in self.kappa):
            raise DomainError("sweep kappa values must lie in (0, 1)")
        if self.format not in ("csv", "json"):
            raise DomainError("format must be csv or json")
        if {"log10_p_err", "log10_bound"} & set(self.outputs) and not self.M:
            raise DomainError("error-probability outputs need an M grid")

    @classmethod
    def from_mapping(cls, data: dict) -> "SweepSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise DomainError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)


def _as_list(v) -> list:
    if isinstance(v, (str, int, float)):
        return [v]
    return list(v)


def expand_grid(spec) -> list[float]:
    """A list, a scalar, or ``{log: [lo_exp, hi_exp, n]}`` / ``{linear: [lo, hi, n]}``."""
    if isinstance(spec, dict):
        if len(spec) != 1:
            raise DomainError(f"grid spec must have one key, got {spec}")
        (kind, (lo, hi, n)), = spec.items()
        if kind == "log":
            return [float(x) for x in np.logspace(lo, hi, int(n))]
        if kind == "linear":
            return [float(x) for x in np.linspace(lo, hi, int(n))]
        raise DomainError(f"unknown grid kind {kind!r}")
    return [float(x) for x in _as_list(spec)]


def load_config(path: str) -> dict:
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise DomainError("config must be a single mapping")
    return data


def closed_form_qfi(p: SchemeParams) -> float:
    if p.scheme is Scheme.COHERENT_THERMAL:
        return mt.qfi_coherent_thermal(p.n_th, p.n_b, p.kappa, 2 * (p.n_s - p.n_th))
    if p.scheme is Scheme.TMSS:
        return mt.qfi_tmss(p.n_s, p.n_b, p.kappa)
    if p.scheme is Scheme.MODEL1:
        return mt.qfi_model1(p.n_s, p.n_b, p.kappa)
    if p.scheme is Scheme.MODEL2:
        if p.n_b == 0:
            return mt.qfi_model2_noiseless(p.n_s, p.kappa)
        return mt.qfi_model2_asymptotic(p.n_s, p.n_b, p.kappa)
    return float("nan")


def _bound_ratio(p: SchemeParams, rng: np.random.Generator) -> float:
    """Largest QFI / entanglement-assisted bound over random idler-environment mixers."""
    bound = mt.theorem1_bound(p.n_s, p.n_b, p.kappa)
    tp = SchemeParams(Scheme.IDLER_MIXER, p.n_s, p.n_b, p.kappa)
    worst = 0.0
    for _ in range(BOUND_MIXERS):
        q = mt.qfi_sld(family(tp, random_mixer(rng)), p.kappa).value
        worst = max(worst, q / bound)
    return worst


def _sweep_point(args) -> list[dict]:
    scheme, n_s, n_b, kappa, outputs, Ms, seed = args
    p = SchemeParams(Scheme(scheme), n_s, n_b, kappa)
    row = {"scheme": scheme, "N_S": n_s, "N_B": n_b, "kappa": kappa}
    fam = family(p)
    if "bound_ratio" in outputs:
        row["bound_ratio"] = _bound_ratio(p, np.random.default_rng(seed))
    if "qfi_fd" in outputs:
        row["qfi_fd"] = mt.qfi_fd(fam, kappa).value
    if "qfi_sld" in outputs:
        row["qfi_sld"] = mt.qfi_sld(fam, kappa).value
    if "closed_form" in outputs:
        row["closed_form"] = closed_form_qfi(p)
    if "energy" in outputs:
        row["energy"] = total_photon_number(fam(kappa))
    need_c = {"limit_coefficient", "log10_bound"} & set(outputs)
    c = limit_coefficient(p) if need_c else None
    if "limit_coefficient" in outputs:
        row["limit_coefficient"] = c
    qce_val = None
    if {"qce", "log10_p_err"} & set(outputs):
        qce_val = detect(p).qce
        if "qce" in outputs:
            row["qce"] = qce_val
    if not Ms:
        return [row]
    rows = []
    for M in Ms:
        r = dict(row, M=M)
        if "log10_p_err" in outputs:
            r["log10_p_err"] = log_envelope(qce_val, [M])[0][1]
        if "log10_bound" in outputs:
            r["log10_bound"] = log10_fvg_qfi_bound(M, kappa, c)
        rows.append(r)
    return rows


def sweep(spec: SweepSpec) -> Report:
    grid = [(s, ns, nb, k) for s in spec.schemes for ns in spec.n_s for nb in spec.n_b for k in spec.kappa]
    # one child seed per grid point so results do not depend on scheduling
    seeds = np.random.SeedSequence(spec.seed).spawn(len(grid))
    jobs = [g + (tuple(spec.outputs), tuple(spec.M), sd) for g, sd in zip(grid, seeds)]
    rows = [r for chunk in parallel_map(_sweep_point, jobs, spec.workers) for r in chunk]
    columns = ["scheme", "N_S", "N_B", "kappa"] + (["M"] if spec.M else [])
    columns += [o for o in SWEEP_OUTPUTS if o in spec.outputs]
    params = {"schemes": spec.schemes, "N_S": spec.n_s, "N_B": spec.n_b, "kappa": spec.kappa,
              "M": spec.M, "seed": spec.seed}
    return Report("sweep", columns, rows, params)


def write_report(report: Report, fmt: str = "csv", path: str | None = None) -> str:
    text = report.render(fmt)
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text

