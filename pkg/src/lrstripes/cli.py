"""Command-line front end.

Commands: jc, stripe-curve, verify, ground {exhaustive,dp,anneal}, sweep.
Exit codes: 0 success / all checks passed, 1 verification failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys

import numpy as np

from . import droplet_geometry as dg
from . import energy_decomposition as ed
from . import ground_state_search as gs
from . import stripe_analytics as sa
from .model_core import ModelParams, critical_coupling
from .spin_lattice import (AllPlus, BoxGeometry, Periodic, _parse_bc, random_configuration,
                           to_text, total_energy)

SUITES = ("decomposition", "bounds", "localization", "chessboard", "counting")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# verification suites
# ---------------------------------------------------------------------------

def suite_decomposition(n: int, seed: int) -> list[ed.BoundReport]:
    """H_direct versus the droplet decomposition on random 10x10 boxes."""
    reports = []
    for i in range(n):
        p = (5.0, 7.0)[i % 2]
        density = (0.1, 0.3, 0.5)[(i // 2) % 3]
        params = ModelParams.from_tau(-0.02, p, 2)
        c = random_configuration(BoxGeometry((10, 10)), AllPlus(), seed * 100003 + i, density)
        H = total_energy(c, params).value
        D = ed.decompose(c, params).total
        reports.append(ed.BoundReport("decomposition", 1e-9 * (1.0 + abs(H)), abs(H - D),
                                      instance_id=f"{seed}:{i}:p={p:g}:rho={density}"))
    return reports


def suite_bounds(n: int, seed: int) -> list[ed.BoundReport]:
    """Self-energy and crude bounds on the droplets of random 8x8 boxes."""
    reports = []
    for i in range(n):
        params = ModelParams.from_tau(-0.02, (5.0, 7.0)[i % 2], 2)
        c = random_configuration(BoxGeometry((8, 8)), AllPlus(), seed * 100003 + i, 0.35)
        for k, drop in enumerate(dg.split_droplets(c)):
            tag = f"{seed}:{i}:{k}"
            reports.append(ed.self_energy_lower_bound(drop, params, instance_id=tag))
            reports.append(ed.crude_lower_bound(drop, params, instance_id=tag))
    return reports


def suite_localization(n: int, seed: int) -> list[ed.BoundReport]:
    """H >= sum_Q E_Q and the corner-length bound on random 12x12 boxes."""
    reports = []
    params = ModelParams.from_tau(-0.02, 7.0, 2)
    for i in range(n):
        ell = (3, 4, 6)[i % 3]
        density = (0.1, 0.3, 0.5)[(i // 3) % 3]
        c = random_configuration(BoxGeometry((12, 12)), AllPlus(), seed * 100003 + i, density)
        tag = f"{seed}:{i}:ell={ell}"
        _, rep, boxes = ed.localized_energy(c, ell, params, instance_id=tag)
        reports.append(rep)
        for box, bubbles in sorted(boxes.items()):
            for j, b in enumerate(bubbles):
                reports.append(ed.corner_length_report(b, ell, 2, f"{tag}:{box}:{j}"))
    return reports


def suite_chessboard(n: int, seed: int) -> list[ed.BoundReport]:
    """Ring energy under phi_ell versus the sum of block energies."""
    rng = np.random.default_rng(seed)
    params = ModelParams.from_tau(-0.02, 7.0, 2)
    reports = []
    for i in range(n):
        ell = (1, 2, 4)[i % 3]
        k = 2 * int(rng.integers(1, 9))
        widths = rng.integers(1, 13, k)
        while widths.sum() > 255:
            widths = np.maximum(1, widths // 2)
        widths[-1] += widths.sum() % 2  # rings have even length 2L
        prof = sa.StripeProfile(tuple(int(w) for w in widths))
        reports.append(sa.chessboard_check(prof, ell, params, instance_id=f"{seed}:{i}:ell={ell}"))
    return reports


def suite_counting(n: int, seed: int) -> list[ed.BoundReport]:
    """Counting bound over all fixed polyominoes with up to n cells (default 12).

    One report per cell count: lhs is the smallest margin found, rhs is zero.
    """
    del seed  # exhaustive, nothing random
    max_cells = n if n > 0 else 12
    worst: dict[int, float] = {}
    for batch in dg.polyomino_batches(max_cells):
        margins = dg.counting_margins(batch)
        for size in np.unique(batch.sizes):
            m = float(margins[batch.sizes == size].min())
            worst[int(size)] = min(worst.get(int(size), math.inf), m)
    return [ed.BoundReport("counting", worst[k], 0.0, instance_id=f"cells={k}")
            for k in sorted(worst)]


SUITE_RUNNERS = {"decomposition": suite_decomposition, "bounds": suite_bounds,
                 "localization": suite_localization, "chessboard": suite_chessboard,
                 "counting": suite_counting}


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

def load_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return cp


def params_from_config(cp: configparser.ConfigParser) -> ModelParams:
    if "model" not in cp:
        raise ConfigError("config needs a [model] section")
    m = cp["model"]
    if ("J" in m) == ("tau" in m):
        raise ConfigError("[model] needs exactly one of J or tau")
    p = m.getfloat("p")
    d = m.getint("d", 2)
    if p is None:
        raise ConfigError("[model] needs p")
    if "tau" in m:
        return ModelParams.from_tau(m.getfloat("tau"), p, d)
    return ModelParams(m.getfloat("J"), p, d)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _seeds(sec) -> tuple[int, ...]:
    return _int_list(sec.get("seeds", "0"))


def _schedule(sec) -> gs.AnnealSchedule:
    return gs.AnnealSchedule(sec.getfloat("initial", 0.15),
                             sec.getfloat("decay", (0.2) ** (1 / 2000)),
                             sec.getint("sweeps", 2000))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_jc(args) -> int:
    c = critical_coupling(args.p, args.d, args.tol)
    print(json.dumps({"p": args.p, "d": args.d, "jc": c.value, "error": c.error}))
    return 0


def cmd_stripe_curve(args) -> int:
    params = ModelParams.from_tau(args.tau, args.p, args.d)
    curve = sa.stripe_energy_curve(params, args.hmax)
    text = sa.curve_to_csv(curve)
    _write(text, args.out)
    print(json.dumps({"h_star": curve.h_star, "e_S": curve.e_star}), file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    reports = SUITE_RUNNERS[args.suite](args.n, args.seed)
    _write(ed.reports_to_csv(reports), args.out)
    failed = [r for r in reports if r.passed is False]
    print(f"{args.suite}: {len(reports) - len(failed)}/{len(reports)} pass", file=sys.stderr)
    return 1 if failed else 0


def _result_row(res: gs.SearchResult, params: ModelParams) -> str:
    buf = io.StringIO()
    buf.write("# schema=1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "J", "tau", "p", "d", "seed", "energy", "energy_per_site",
                "certificate", "iterations", "profile"])
    prof = " ".join(str(h) for h in res.profile.widths) if res.profile else ""
    w.writerow([res.method, repr(params.J), repr(params.tau), repr(params.p), params.d,
                "" if res.seed is None else res.seed, repr(res.best_energy),
                repr(res.energy_per_site), res.certificate, res.iterations, prof])
    return buf.getvalue()


def cmd_ground(args) -> int:
    cp = load_config(args.config)
    params = params_from_config(cp)
    meth = cp["method"] if "method" in cp else {}
    if args.method == "dp":
        ring = int(meth.get("ring_length", 64))
        kernel = meth.get("kernel", "v")
        ell = int(meth["ell"]) if "ell" in meth else None
        res = gs.striped_optimum_on_ring(ring, params, kernel, ell)
    else:
        if "geometry" not in cp:
            raise ConfigError("config needs a [geometry] section")
        geo = cp["geometry"]
        geometry = BoxGeometry(_int_list(geo.get("dims", "")))
        tok = geo.get("bc", "plus").strip()
        # bare "periodic" wraps every axis
        bc = Periodic(tuple(range(geometry.d))) if tok == "periodic" else _parse_bc(tok)
        if args.method == "exhaustive":
            res = gs.exhaustive_ground_state(geometry, bc, params)
        else:
            res = gs.best_of_annealing(geometry, bc, params, _seeds(meth), _schedule(meth))
    out = cp["output"] if "output" in cp else {}
    _write(_result_row(res, params), out.get("csv"))
    if res.best_configuration is not None and out.get("configuration"):
        _write(to_text(res.best_configuration), out.get("configuration"))
    return 0


def cmd_sweep(args) -> int:
    cp = load_config(args.config)
    if "sweep" not in cp or "model" not in cp:
        raise ConfigError("config needs [model] and [sweep] sections")
    sw = cp["sweep"]
    m = cp["model"]
    taus = _float_list(sw.get("taus", ""))
    if not taus:
        raise ConfigError("[sweep] needs a non-empty taus list")
    method = sw.get("method", "dp")
    budget = sw.getint("budget", 256)
    rows = gs.ratio_study(taus, m.getfloat("p"), m.getint("d", 2), method, budget,
                          _seeds(sw), _schedule(sw))
    out = cp["output"] if "output" in cp else {}
    _write(gs.ratio_rows_to_csv(rows), out.get("csv"))
    if out.get("data"):
        lines = ["# tau e0 e_S ratio"] + [f"{r.tau!r} {r.e0!r} {r.e_S!r} {r.ratio!r}" for r in rows]
        _write("\n".join(lines) + "\n", out.get("data"))
    return 0


def _write(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrstripes", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("jc", help="critical coupling J_c as JSON")
    p.add_argument("--p", type=float, required=True, help="decay exponent, p > 2d")
    p.add_argument("--d", type=int, default=2, choices=(2, 3), help="dimension")
    p.add_argument("--tol", type=float, default=1e-10, help="certified absolute error")
    p.set_defaults(func=cmd_jc)

    p = sub.add_parser("stripe-curve", help="CSV of e_s(h) with h* and e_S in the header")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--d", type=int, default=2, choices=(2, 3))
    p.add_argument("--tau", type=float, required=True, help="2 (J - J_c)")
    p.add_argument("--hmax", type=int, default=32)
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_stripe_curve)

    p = sub.add_parser("verify", help="run an inequality suite; exit 1 on any failure")
    p.add_argument("--suite", required=True, choices=SUITES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100,
                   help="instances (for counting: maximum polyomino size)")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("ground", help="ground-state search driven by a config file")
    p.add_argument("method", choices=("exhaustive", "dp", "anneal"))
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("sweep", help="e0 / e_S ratio table over a list of tau values")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"lrstripes {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
