"""``gqr`` command-line interface."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from . import reports as rp
from .errors import GqrError

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_BRANCH = 3

# couplings drawn in the circuit diagram of the induced-coherence radar
MODEL1_DIAGRAM = {("TMS", ("S", "I1")), ("BS", ("S", "E")), ("TMS", ("S", "I2"))}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _config(args) -> dict:
    return rp.load_config(args.config) if getattr(args, "config", None) else {}


def _pick(args, cfg: dict, name: str, default):
    """CLI flag, then config value, then default."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _emit(report: rp.Report, args) -> None:
    text = rp.write_report(report, args.format, args.out)
    if not args.out:
        sys.stdout.write(text)


def cmd_table1(args) -> int:
    _emit(rp.table1(args.ns, args.kappa), args)
    return EXIT_OK


def cmd_fig2a(args) -> int:
    cfg = _config(args)
    report = rp.fig2a(
        kappa=float(_pick(args, cfg, "kappa", 1e-3)),
        ns_grid=rp.expand_grid(_pick(args, cfg, "n_s", list(rp.FIG2A_NS))),
        nb_list=rp.expand_grid(_pick(args, cfg, "n_b", list(rp.FIG2A_NB))),
        workers=_pick(args, cfg, "workers", None),
    )
    _emit(report, args)
    return EXIT_OK


def cmd_fig2b(args) -> int:
    cfg = _config(args)
    kwargs = dict(
        n_b=float(_pick(args, cfg, "n_b", 20.0)),
        kappa=float(_pick(args, cfg, "kappa", 1e-4)),
        ns_list=rp.expand_grid(_pick(args, cfg, "n_s", [1e-2, 1e-1])),
        workers=_pick(args, cfg, "workers", None),
    )
    m = _pick(args, cfg, "M", None)
    if m is not None:
        kwargs["Ms"] = rp.expand_grid(m)
    _emit(rp.fig2b(**kwargs), args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    for name in ("schemes", "n_s", "n_b", "kappa", "M", "outputs", "workers", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            cfg[name] = v
    if args.format_explicit:
        cfg["format"] = args.format
    spec = rp.SweepSpec.from_mapping(cfg)
    args.format = spec.format
    _emit(rp.sweep(spec), args)
    return EXIT_OK


def _load_circuit(path: str):
    """YAML circuit: ``modes: [...]`` and ``elements`` of ``{type, modes, value}``.

    Types: ``bs`` (angle), ``tms`` (squeezing), ``phase`` (angle), ``matrix``
    (``value`` is a row-major symplectic matrix on ``modes``).
    """
    from . import symplectic as sp

    data = rp.load_config(path)
    out = []
    for el in data.get("elements", []):
        kind, ms, val = el["type"], list(el["modes"]), el.get("value")
        if kind == "bs":
            out.append(sp.beamsplitter(float(val), *ms))
        elif kind == "tms":
            out.append(sp.two_mode_squeeze(float(val), *ms))
        elif kind == "phase":
            out.append(sp.phase_rotation(float(val), *ms))
        elif kind == "matrix":
            out.append(sp.SymplecticTransform(tuple(ms), np.array(val, dtype=float)))
        else:
            raise GqrError(f"unknown circuit element type {kind!r}")
    return out, data.get("modes")


def cmd_equiv(args) -> int:
    from . import equivalence as eq

    if args.circuit == "model1":
        report = eq.model1_equivalence(g=args.g, kappa=args.kappa)
        diagram = MODEL1_DIAGRAM
    else:
        elements, modes = _load_circuit(args.circuit)
        report = eq.analyze(elements, modes)
        diagram = None
    if not report.ok:
        fail = report.result
        print(f"branch failure: {fail.reason}")
        print("eigenvalues: " + ", ".join(f"{z:.6g}" for z in fail.eigenvalues))
        if fail.charges_may_be_required:
            print("a generator outside the principal branch (or a complex charge) may be required")
        return EXIT_BRANCH
    print(f"modes: {', '.join(report.modes)}")
    print(f"round-trip error: {report.round_trip_error:.3e}")
    print(f"{'element':<16} {'coefficient':>16}  note")
    for label, coef in report.table(args.tol):
        note = ""
        if diagram is not None:
            kind = label.split("(")[0].rstrip("i")
            pair = tuple(label[label.index("(") + 1:-1].split(","))
            if (kind, pair) not in diagram:
                note = "not in diagram"
        print(f"{label:<16} {coef:>16.10f}  {note}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import run_all

    only = {int(x) for x in args.only.split(",") if x.strip()} if args.only else None
    results = run_all(args.level, only)
    for r in results:
        print(r.line())
        if args.verbose or not r.passed:
            for d in r.detail:
                print(f"    {d}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gqr", description="Gaussian-state reflectivity sensing reports.")
    parser.add_argument("--version", action="version", version=f"gqr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def outputs(p, config=True):
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", "--output", dest="out", help="write here instead of stdout")
        if config:
            p.add_argument("--config", help="YAML file; flags override its values")
            p.add_argument("--workers", type=int)

    p = sub.add_parser("table1", help="noiseless transmitter QFI rows")
    p.add_argument("--ns", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=0.5)
    outputs(p, config=False)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("fig2a", help="scaled Hamiltonian-model QFI versus N_S")
    p.add_argument("--kappa", type=float)
    p.add_argument("--ns", dest="n_s", type=_floats, help="comma-separated N_S values")
    p.add_argument("--nb", dest="n_b", type=_floats, help="comma-separated N_B values")
    outputs(p)
    p.set_defaults(func=cmd_fig2a)

    p = sub.add_parser("fig2b", help="Chernoff error exponents and bounds")
    p.add_argument("--nb", dest="n_b", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--ns", dest="n_s", type=_floats)
    p.add_argument("--m", dest="M", type=_floats, help="comma-separated copy numbers")
    outputs(p)
    p.set_defaults(func=cmd_fig2b)

    p = sub.add_parser("sweep", help="configurable parameter sweep")
    p.add_argument("--schemes", type=lambda s: s.split(","))
    p.add_argument("--ns", dest="n_s", type=_floats)
    p.add_argument("--nb", dest="n_b", type=_floats)
    p.add_argument("--kappa", type=_floats)
    p.add_argument("--m", dest="M", type=_floats)
    p.add_argument("--outputs", type=lambda s: s.split(","))
    p.add_argument("--seed", type=int)
    outputs(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("equiv", help="single-generator decomposition of a circuit")
    p.add_argument("--circuit", default="model1", help="'model1' or a YAML circuit file")
    p.add_argument("--g", type=float, default=0.4)
    p.add_argument("--kappa", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    raw = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(raw)
    args.format_explicit = "--format" in raw
    try:
        return args.func(args)
    except (GqrError, OSError, ValueError) as exc:
        print(f"gqr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
