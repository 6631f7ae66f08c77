"""Command-line entry point.

Exit codes: 0 success, 2 parse error, 3 validation error, 4 runtime error,
5 a reproduction row fell outside tolerance.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import claims
from .physcore import PALLAS, TWO_PI, UnknownSpeciesError, load_species, species_names
from .scenario import (ConfigError, CrystalRequest, DynamicsRequest, GateRequest, ModuleRuntimeError,
                       PIPELINES, Scenario, TrackingRequest, ValidationError, atomic_write_text,
                       dumps_json, parse_scenario, report_from_json, run_scenario, validate)
from .dynamics import counter_propagating_pair

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 2, 3, 4, 5


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="scenario file (INI)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--tolerance-profile", choices=sorted(claims.PROFILES), default="default")
    p.add_argument("--json", action="store_true", help="print JSON instead of a text report")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="ringqc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("budget", parents=[common], help="closed-form scalar budget")
    b.add_argument("--species", default=None)

    c = sub.add_parser("crystal", parents=[common], help="equilibrium and normal modes")
    c.add_argument("--species", default=None)
    c.add_argument("--n-ions", type=int, default=None)
    c.add_argument("--axial-khz", type=float, default=None)
    c.add_argument("--transverse-khz", type=float, nargs=2, default=None, metavar=("X", "Y"))
    c.add_argument("--branch", default=None)

    k = sub.add_parser("cool", parents=[common], help="Doppler cooling with velocity control")
    k.add_argument("--species", default=None)
    k.add_argument("--n-ions", type=int, default=None)
    k.add_argument("--duration-us", type=float, default=None)
    k.add_argument("--split-mhz", type=float, default=None)

    g = sub.add_parser("gates", parents=[common], help="switching budget, schedule and gate plan")
    g.add_argument("--species", default=None)
    g.add_argument("--pulse-ns", type=float, default=None)
    g.add_argument("--eta", type=float, default=None)
    g.add_argument("--n-ions", type=float, default=None)
    g.add_argument("--targets", type=int, nargs="*", default=None)

    t = sub.add_parser("track", parents=[common], help="bright/dark pattern statistics and detection")
    t.add_argument("--n-ions", type=int, default=None)
    t.add_argument("--dark-fraction", type=float, default=None)
    t.add_argument("--seeds", type=int, default=None, help="number of seeds")
    t.add_argument("--events", type=int, default=None)

    r = sub.add_parser("run", parents=[common], help="run a full scenario file")
    r.add_argument("path", nargs="?", type=Path)

    sub.add_parser("paper-check", parents=[common], help="recompute the published numbers")
    sub.add_parser("species", parents=[common], help="list built-in species")
    return ap


def _scenario_for(args, module: str) -> Scenario:
    if args.config is not None:
        sc = parse_scenario(args.config)
    else:
        name = getattr(args, "species", None) or "Ca-40"
        try:
            sp = load_species(name)
        except UnknownSpeciesError as exc:
            raise ValidationError(exc.args[0]) from None
        sc = Scenario(name=module, species=sp, ring=PALLAS)
    sc = replace(sc, modules=[module])
    if getattr(args, "species", None) and args.config is not None:
        try:
            sc.species = load_species(args.species)
        except UnknownSpeciesError as exc:
            raise ValidationError(exc.args[0]) from None
    if args.seed is not None:
        sc.seed = args.seed
    if module == "crystal":
        req = sc.crystal or CrystalRequest()
        if args.n_ions is not None:
            req.n_ions = args.n_ions
        if args.axial_khz is not None:
            req.axial_freq = TWO_PI * 1e3 * args.axial_khz
        if args.transverse_khz is not None:
            req.transverse_x, req.transverse_y = (TWO_PI * 1e3 * f for f in args.transverse_khz)
        if args.branch is not None:
            req.branch = args.branch
        sc.crystal = req
    elif module == "cool":
        req = sc.dynamics or DynamicsRequest()
        if args.n_ions is not None:
            req.n_ions = args.n_ions
        if args.duration_us is not None:
            req.duration = args.duration_us * 1e-6
        sc.dynamics = req
        if not sc.beams or args.split_mhz is not None:
            sp = sc.species
            if sp.cooling_linewidth is None or sp.cooling_wavelength is None:
                raise ValidationError(f"species {sp.name} has no cooling transition data")
            split = TWO_PI * 1e6 * (args.split_mhz if args.split_mhz is not None else 10.0)
            sc.beams = counter_propagating_pair(sp.cooling_wavelength, -0.5 * sp.cooling_linewidth, split, 0.5)
    elif module == "gates":
        req = sc.gates or GateRequest()
        if args.pulse_ns is not None:
            req.pulse_length = args.pulse_ns * 1e-9
        if args.eta is not None:
            req.eta = args.eta
        if args.n_ions is not None:
            req.n_ions = args.n_ions
        if args.targets is not None:
            req.targets = args.targets
        sc.gates = req
    elif module == "track":
        req = sc.tracking or TrackingRequest()
        if args.n_ions is not None:
            req.n_ions = args.n_ions
        if args.dark_fraction is not None:
            req.dark_fraction = args.dark_fraction
        if args.seeds is not None:
            req.seeds = list(range(args.seeds))
        if args.events is not None:
            req.n_events = args.events
        sc.tracking = req
    validate(sc)
    return sc


def _emit(args, payload: dict, files: dict, stem: str) -> None:
    body = dumps_json(payload)
    text = report_from_json(json.loads(body), stem)
    if args.out is not None:
        atomic_write_text(args.out / f"{stem}.json", body)
        atomic_write_text(args.out / f"{stem}_report.txt", text)
        for name, content in sorted(files.items()):
            atomic_write_text(args.out / f"{stem}_{name}", content)
    sys.stdout.write(body if args.json else text)


def _paper_check(args) -> int:
    rows = claims.claim_rows(args.tolerance_profile)
    payload = {"profile": args.tolerance_profile, "rows": [r.to_dict() for r in rows]}
    body = dumps_json(payload)
    table = claims.format_table(rows)
    if args.out is not None:
        atomic_write_text(args.out / "paper_check.json", body)
        atomic_write_text(args.out / "paper_check.txt", table)
    sys.stdout.write(body if args.json else table)
    bad = claims.failed(rows)
    if bad:
        sys.stderr.write(f"{len(bad)} row(s) outside tolerance: {', '.join(r.claim_id for r in bad)}\n")
        return EXIT_ACCEPTANCE
    return EXIT_OK


def dispatch(args) -> int:
    cmd = args.command
    if cmd == "paper-check":
        return _paper_check(args)
    if cmd == "species":
        sys.stdout.write("\n".join(species_names()) + "\n")
        return EXIT_OK
    if cmd == "run":
        path = args.path or args.config
        if path is None:
            raise ConfigError("run needs a scenario path")
        sc = parse_scenario(path)
        if args.seed is not None:
            sc.seed = args.seed
        out = args.out or Path("out")
        results = run_scenario(sc, out)
        if args.json:
            sys.stdout.write(dumps_json(results))
        else:
            sys.stdout.write(f"wrote {out / sc.name}\n")
        return EXIT_OK
    sc = _scenario_for(args, cmd)
    try:
        payload, files = PIPELINES[cmd](sc)
    except (ConfigError, ValidationError):
        raise
    except Exception as exc:  # noqa: BLE001
        raise ModuleRuntimeError(f"{cmd}: {type(exc).__name__}: {exc}") from exc
    _emit(args, payload, files, cmd)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        return dispatch(args)
    except ConfigError as exc:
        sys.stderr.write(f"parse error: {exc}\n")
        return EXIT_PARSE
    except ValidationError as exc:
        sys.stderr.write(f"validation error: {exc}\n")
        return EXIT_VALIDATION
    except ModuleRuntimeError as exc:
        sys.stderr.write(f"runtime error: {exc}\n")
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"runtime error: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
