"""Command-line entry point.

    groundpop couplings  [--species S] [--polarizations +1,-1,0]
    groundpop synth      [--config C] [--populations ...] [--raw]
    groundpop calibrate  RAW.csv [--degree 3]
    groundpop reconstruct SPEC.csv ... [--full-pinv]
    groundpop simulate   --scenario {1,2} [--start/--stop/--points | --intensity]

Options come from built-in defaults, then ``--config`` (a JSON object), then
explicit flags.  Every output embeds the resolved options.

Exit codes: 0 success, 1 numerical failure, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    AmbiguousAssignmentError,
    CalibrationError,
    ScanTruth,
    calibrate,
    generate_raw_bundle,
)
from .forward import (
    PopulationDistribution,
    ProbeConfig,
    add_noise,
    linear_zeeman_offsets,
    synthesize,
)
from .io import (
    FormatError,
    read_json,
    read_raw_bundle_csv,
    read_spectrum_csv,
    write_json,
    write_pump_curve_csv,
    write_raw_bundle_csv,
    write_spectrum_csv,
)
from .lineshape import VoigtParams
from .nnls import NNLSError
from .pumping import SteadyStateError, log_grid, scenario_experiment1, scenario_experiment2, sweep
from .reconstruction import ReconstructionError, ReconstructionOptions, XiFitError, reconstruct
from .structure import LevelScheme, SpeciesFileError, load_scheme, rb87_d1, sas_reference_lines

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2

QNAME = {1: "sigma_plus", -1: "sigma_minus", 0: "pi"}


class InputError(Exception):
    pass


DEFAULTS = {
    "couplings": {"polarizations": [1, -1]},
    "synth": {
        "populations": "thermal",
        "n0_per_cm3": 1.0e10,
        "gamma_hz": 103e6,
        "sigma_fwhm_hz": 202e6,
        "path_length_cm": 5.0,
        "start_hz": -5.5e9,
        "stop_hz": 6.5e9,
        "points": 2500,
        "polarizations": [1, -1],
        "noise": 0.0,
        "seed": 0,
        "field_gauss": 0.0,
        "raw": False,
        "chirp": 0.1,
    },
    "calibrate": {"degree": 3, "q": None, "path_length_cm": None, "lines": None},
    "reconstruct": {
        "method": "xi",
        "nnls_f2": True,
        "gamma_hz": None,
        "sigma_fwhm_hz": None,
        "wing_correction": False,
        "rcond": 1e-10,
    },
    "simulate": {
        "scenario": 1,
        "start": 0.1,
        "stop": 1.0e4,
        "points": 41,
        "intensity": None,
        "include_nonresonant": True,
        "velocity_groups": None,
        "ground_relaxation_rate": None,
        "laser_linewidth_hz": None,
    },
}


# --------------------------------------------------------------------------
# helpers


def _species(arg: str | None) -> tuple[LevelScheme, str]:
    if arg in (None, "rb87_d1", "rb87-d1"):
        return rb87_d1(), "rb87_d1"
    p = Path(arg)
    if not p.is_file():
        raise InputError(f"species file not found: {arg}")
    try:
        return load_scheme(p), str(p)
    except (SpeciesFileError, ValueError, KeyError) as exc:
        raise InputError(f"bad species file {arg}: {exc}") from exc


def _resolve(cmd: str, args: argparse.Namespace, overrides: dict) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS[cmd]))
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        try:
            loaded = read_json(path)
        except FormatError as exc:
            raise InputError(str(exc)) from exc
        if not isinstance(loaded, dict):
            raise InputError("config file must hold a JSON object")
        loaded = loaded.get(cmd, loaded)
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise InputError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise InputError(f"--out must be a directory: {out}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_pols(s) -> list[int]:
    if isinstance(s, list):
        vals = s
    else:
        vals = [int(x) for x in str(s).replace(" ", "").split(",") if x]
    if not vals or any(v not in (-1, 0, 1) for v in vals):
        raise InputError(f"polarizations must be drawn from -1, 0, +1: {s}")
    return [int(v) for v in vals]


def _populations(spec, scheme: LevelScheme) -> PopulationDistribution:
    states = scheme.ground_states()
    try:
        if spec == "thermal":
            return PopulationDistribution.thermal(scheme)
        if isinstance(spec, str):
            spec = [float(x) for x in spec.split(",")]
        if isinstance(spec, dict):
            labels = {g.label(): g for g in states}
            bad = set(spec) - set(labels)
            if bad:
                raise InputError(f"unknown sublevel labels {sorted(bad)}; expected {sorted(labels)}")
            return PopulationDistribution.from_mapping(scheme, {labels[k]: float(v) for k, v in spec.items()})
        return PopulationDistribution(np.array(spec, dtype=float), scheme)
    except ValueError as exc:
        raise InputError(f"invalid population vector: {exc}") from exc


# --------------------------------------------------------------------------
# subcommands


def cmd_couplings(args) -> int:
    scheme, species = _species(args.species)
    cfg = _resolve("couplings", args, {"polarizations": args.polarizations})
    pols = _parse_pols(cfg["polarizations"])
    cfg["polarizations"] = pols
    out = _out_dir(args)
    manifolds = {}
    for tf in sorted(scheme.ground_levels):
        exact = scheme.table.xi_matrix_exact(tf, polarizations=pols)
        M = np.array([[float(v) for v in row] for row in exact])
        s = np.linalg.svd(M, compute_uv=False)
        rank = int(np.sum(s > 1e-10 * s.max())) if s.size else 0
        rows = [f"F'={tfp // 2},q={q:+d}" for q in pols for (f, tfp) in scheme.hyperfine_pairs() if f == tf]
        manifolds[f"F={tf // 2}"] = {
            "rows": rows,
            "columns": [f"mF={m // 2:+d}" for m in range(-tf, tf + 1, 2)],
            "matrix_exact": [[str(v) for v in row] for row in exact],
            "matrix": M.tolist(),
            "singular_values": s.tolist(),
            "rank": rank,
        }
    doc = {"schema": "groundpop.couplings/1", "species": species, "config": cfg, "manifolds": manifolds}
    path = write_json(out / "couplings.json", doc)
    for name, m in manifolds.items():
        print(f"{name}: {len(m['rows'])}x{len(m['columns'])} rank {m['rank']}")
        for label, row in zip(m["rows"], m["matrix_exact"]):
            print(f"  {label:<12} " + " ".join(f"{v:>5}" for v in row))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    scheme, species = _species(args.species)
    cfg = _resolve(
        "synth",
        args,
        {
            "populations": args.populations,
            "n0_per_cm3": args.n0,
            "gamma_hz": args.gamma,
            "sigma_fwhm_hz": args.sigma,
            "noise": args.noise,
            "seed": args.seed,
            "points": args.points,
            "polarizations": args.polarizations,
            "field_gauss": args.field,
            "raw": True if args.raw else None,
        },
    )
    P = _populations(cfg["populations"], scheme)
    pols = _parse_pols(cfg["polarizations"])
    cfg["polarizations"] = pols
    try:
        voigt = VoigtParams(float(cfg["gamma_hz"]), float(cfg["sigma_fwhm_hz"]))
        axis = np.linspace(float(cfg["start_hz"]), float(cfg["stop_hz"]), int(cfg["points"]))
        offsets = linear_zeeman_offsets(scheme, float(cfg["field_gauss"])) if cfg["field_gauss"] else None
        base = ProbeConfig(pols[0], axis, float(cfg["n0_per_cm3"]), voigt, float(cfg["path_length_cm"]), offsets)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = _out_dir(args)
    seeds = np.random.SeedSequence(int(cfg["seed"])).spawn(len(pols))
    header = {
        "species": species,
        "n0_per_cm3": base.n0,
        "gamma_hz": voigt.gamma,
        "sigma_fwhm_hz": voigt.sigma_fwhm,
        "path_length_cm": base.path_length,
        "populations_true": P.p.tolist(),
        "config": cfg,
    }
    for q, ss in zip(pols, seeds):
        pcfg = base.with_q(q)
        rng_seed = int(ss.generate_state(1)[0])
        spec = add_noise(synthesize(P, pcfg), float(cfg["noise"]), seed=rng_seed)
        path = write_spectrum_csv(out / f"{QNAME[q]}.csv", spec, header)
        print(f"wrote {path}")
        if cfg["raw"]:
            truth = ScanTruth(int(cfg["points"]), float(cfg["start_hz"]), float(cfg["stop_hz"]) - float(cfg["start_hz"]), float(cfg["chirp"]))

            def alpha_fn(f, pcfg=pcfg):
                return synthesize(P, pcfg.with_axis(f)).alpha

            bundle = generate_raw_bundle(
                truth, sas_reference_lines(), alpha_fn=alpha_fn, path_length=base.path_length, q=q,
                noise=float(cfg["noise"]) * 0.1, seed=rng_seed,
            )
            path = write_raw_bundle_csv(out / f"raw_{QNAME[q]}.csv", bundle, {"config": cfg, "species": species})
            print(f"wrote {path}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    scheme, species = _species(args.species)
    cfg = _resolve("calibrate", args, {"degree": args.degree, "q": args.q, "path_length_cm": args.path_length, "lines": args.lines})
    src = Path(args.raw)
    if not src.is_file():
        raise InputError(f"raw bundle not found: {src}")
    try:
        bundle, _ = read_raw_bundle_csv(src)
    except (FormatError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    for ch in ("fp", "sas"):
        if getattr(bundle, ch) is None:
            raise InputError(f"raw bundle {src} has no {ch!r} channel")
    if cfg["lines"]:
        try:
            doc = read_json(cfg["lines"])
            lines = [d for d in doc["lines"] if not d.get("crossover", False)]
            for d in lines:
                float(d["frequency_hz"])
        except (FormatError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad SAS line list {cfg['lines']}: {exc}") from exc
    else:
        lines = sas_reference_lines()
    degree = int(cfg["degree"])
    if degree < 1:
        raise InputError("--degree must be at least 1")
    out = _out_dir(args)
    fmap, spec = calibrate(bundle, lines, degree=degree, path_length=cfg["path_length_cm"], q=cfg["q"])
    doc = fmap.to_dict()
    doc.update({"config": cfg, "species": species, "source": src.name})
    path = write_json(out / f"{src.stem}_map.json", doc)
    print(f"wrote {path}  (anchor rms {fmap.anchor_rms_hz / 1e6:.3f} MHz, degree {fmap.degree})")
    if spec is not None:
        header = {
            "species": species,
            "path_length_cm": cfg["path_length_cm"] or bundle.meta.get("path_length_cm", 5.0),
            "n0_per_cm3": None,
            "gamma_hz": None,
            "sigma_fwhm_hz": None,
            "config": cfg,
            "degree": fmap.degree,
            "source": src.name,
        }
        path = write_spectrum_csv(out / f"{src.stem}_spectrum.csv", spec, header)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    scheme, species = _species(args.species)
    cfg = _resolve(
        "reconstruct",
        args,
        {
            "method": "pinv" if args.full_pinv else None,
            "nnls_f2": False if args.no_nnls else None,
            "gamma_hz": args.gamma,
            "sigma_fwhm_hz": args.sigma,
            "wing_correction": True if args.wing_correction else None,
        },
    )
    spectra = []
    for f in args.spectra:
        if not Path(f).is_file():
            raise InputError(f"spectrum file not found: {f}")
        try:
            spectra.append(read_spectrum_csv(f)[0])
        except (FormatError, ValueError) as exc:
            raise InputError(str(exc)) from exc
    qs = {s.q for s in spectra}
    missing = {1, -1} - qs
    if missing:
        names = ", ".join(QNAME[q] for q in sorted(missing))
        raise InputError(f"reconstruction needs both sigma+ and sigma- spectra; missing {names}")
    voigt = None
    if cfg["gamma_hz"] is not None and cfg["sigma_fwhm_hz"] is not None:
        voigt = VoigtParams(float(cfg["gamma_hz"]), float(cfg["sigma_fwhm_hz"]))
    opts = ReconstructionOptions(
        method=cfg["method"], nnls_f2=bool(cfg["nnls_f2"]), voigt=voigt,
        wing_correction=bool(cfg["wing_correction"]), rcond=float(cfg["rcond"]),
    )
    out = _out_dir(args)
    rep = reconstruct(spectra, scheme, opts)
    doc = {
        "schema": "groundpop.reconstruction/1",
        "species": species,
        "config": cfg,
        "inputs": [Path(f).name for f in args.spectra],
        "states": [g.label() for g in scheme.ground_states()],
        "report": rep.to_dict(),
    }
    path = write_json(out / "report.json", doc)
    if rep.populations is not None:
        for g, v in zip(scheme.ground_states(), rep.populations):
            print(f"  {g.label():<8} {v:.6f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scheme, species = _species(args.species)
    cfg = _resolve(
        "simulate",
        args,
        {
            "scenario": args.scenario,
            "start": args.start,
            "stop": args.stop,
            "points": args.points,
            "intensity": args.intensity,
            "include_nonresonant": False if args.no_nonresonant else None,
            "velocity_groups": args.velocity_groups,
            "ground_relaxation_rate": args.relaxation,
            "laser_linewidth_hz": args.linewidth,
        },
    )
    scen = int(cfg["scenario"])
    if scen not in (1, 2):
        raise InputError("--scenario must be 1 or 2")
    ens, pump = (scenario_experiment1 if scen == 1 else scenario_experiment2)(scheme)
    try:
        ens = replace(ens, include_nonresonant=bool(cfg["include_nonresonant"]))
        if cfg["velocity_groups"] is not None:
            ens = replace(ens, n_velocity_groups=int(cfg["velocity_groups"]))
        if cfg["ground_relaxation_rate"] is not None:
            ens = replace(ens, ground_relaxation_rate=float(cfg["ground_relaxation_rate"]))
        if cfg["laser_linewidth_hz"] is not None:
            pump = replace(pump, linewidth_hz=float(cfg["laser_linewidth_hz"]))
        if cfg["intensity"] is not None:
            grid = np.array([float(cfg["intensity"])])
            if grid[0] < 0:
                raise ValueError("intensity must be non-negative")
        else:
            grid = log_grid(float(cfg["start"]), float(cfg["stop"]), int(cfg["points"]))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = _out_dir(args)
    curve = sweep(ens, pump, grid)
    header = {"species": species, "config": cfg, "scenario_meta": ens.meta}
    path = write_pump_curve_csv(out / f"pump_curve_scenario{scen}.csv", curve, header)
    print(f"wrote {path}  ({grid.size} points)")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--species", default=None, help="species JSON file (default: bundled rb87_d1)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None, help="JSON file of options; flags take precedence")

    p = argparse.ArgumentParser(prog="groundpop", description="ground-state population reconstruction toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("couplings", parents=[common], help="dump xi coupling matrices")
    c.add_argument("--polarizations", default=None, help="comma list, e.g. 1,-1,0")
    c.set_defaults(func=cmd_couplings)

    s = sub.add_parser("synth", parents=[common], help="synthesize absorption spectra")
    s.add_argument("--populations", default=None, help="'thermal' or 8 comma-separated values")
    s.add_argument("--n0", type=float, default=None)
    s.add_argument("--gamma", type=float, default=None, help="Lorentzian FWHM (Hz)")
    s.add_argument("--sigma", type=float, default=None, help="Gaussian FWHM (Hz)")
    s.add_argument("--noise", type=float, default=None, help="relative noise std")
    s.add_argument("--points", type=int, default=None)
    s.add_argument("--polarizations", default=None)
    s.add_argument("--field", type=float, default=None, help="magnetic field (G) for linear Zeeman shifts")
    s.add_argument("--raw", action="store_true", help="also write raw probe/FP/SAS bundles")
    s.set_defaults(func=cmd_synth)

    k = sub.add_parser("calibrate", parents=[common], help="calibrate a raw bundle")
    k.add_argument("raw")
    k.add_argument("--degree", type=int, default=None)
    k.add_argument("--q", type=int, default=None, choices=(-1, 0, 1))
    k.add_argument("--path-length", type=float, default=None)
    k.add_argument("--lines", default=None, help="SAS line list JSON")
    k.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("reconstruct", parents=[common], help="reconstruct populations from spectra")
    r.add_argument("spectra", nargs="+")
    r.add_argument("--full-pinv", action="store_true", help="full pseudoinverse regression")
    r.add_argument("--no-nnls", action="store_true")
    r.add_argument("--gamma", type=float, default=None)
    r.add_argument("--sigma", type=float, default=None)
    r.add_argument("--wing-correction", action="store_true")
    r.set_defaults(func=cmd_reconstruct)

    m = sub.add_parser("simulate", parents=[common], help="optical pumping sweep")
    m.add_argument("--scenario", type=int, default=None)
    m.add_argument("--start", type=float, default=None)
    m.add_argument("--stop", type=float, default=None)
    m.add_argument("--points", type=int, default=None)
    m.add_argument("--intensity", type=float, default=None, help="single intensity (uW/mm^2)")
    m.add_argument("--no-nonresonant", action="store_true")
    m.add_argument("--velocity-groups", type=int, default=None)
    m.add_argument("--relaxation", type=float, default=None, help="ground equilibration rate (1/s)")
    m.add_argument("--linewidth", type=float, default=None, help="pump laser linewidth (Hz)")
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ReconstructionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT if exc.stage == "input" else EXIT_NUMERIC
    except (AmbiguousAssignmentError, CalibrationError, XiFitError, NNLSError, SteadyStateError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
