"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numeric error, 4 fit
non-convergence. Every command computes its full result before writing any
file, so a rejected configuration leaves no partial output behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .angmom import HalfInt
from .blocks import decompose, display_order
from .errors import (ConfigurationError, ConvergenceError, FitError, PreconditionError,
                     SymmetryViolationError)
from .model import build_hamiltonian, read_scenario_document, scenario_from_dict, with_overrides
from .spectral import (morris_shore_spectrum, sweep, two_level_extrapolation,
                       two_level_reference)
from .spectro import (OmegaDistribution, ProbeSpec, Spectrum, TrapGeometry, fit_peaks,
                      normalize_heights, synthesize_spectrum, trap_omega_distribution)

log = logging.getLogger("dressedlevels")

SCENARIO_DIR_ENV = "DRESSEDLEVELS_SCENARIO_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FIT = 0, 2, 3, 4


# ------------------------------------------------------------------ helpers

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_sets(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = _parse_value(value.strip())
    return out


def _resolve_scenario(name):
    if name is None:
        return None
    path = Path(name)
    if path.exists() or path.is_absolute() or path.parent != Path("."):
        return path
    env_dir = os.environ.get(SCENARIO_DIR_ENV)
    if env_dir:
        for cand in (Path(env_dir) / name, Path(env_dir) / f"{name}.json"):
            if cand.exists():
                return cand
    return path


def _load(args):
    doc = read_scenario_document(_resolve_scenario(args.scenario))
    doc = with_overrides(doc, _parse_sets(args.set))
    return doc, scenario_from_dict(doc)


def _grid(args, default=(0.0, 800.0, 2.0)):
    if getattr(args, "omegas", None) is not None:
        text = args.omegas.strip()
        try:
            vals = [float(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"--omegas: {exc}") from None
        return np.array(vals)
    lo = default[0] if args.omega_min is None else args.omega_min
    hi = default[1] if args.omega_max is None else args.omega_max
    step = default[2] if args.omega_step is None else args.omega_step
    if step <= 0 or hi < lo or lo < 0:
        raise ConfigurationError("omega grid needs 0 <= min <= max and step > 0")
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def _csv_text(header, rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write(outputs):
    for path, text in outputs:
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")


def _probe(doc, args):
    probe = dict(doc.get("probe", {}))
    if getattr(args, "probe_q", None) is not None:
        probe["q"] = args.probe_q
    if getattr(args, "linewidth", None) is not None:
        probe["linewidth_MHz"] = args.linewidth
    return ProbeSpec.from_dict(probe)


# ----------------------------------------------------------------- commands

def cmd_blocks(args):
    doc, spec = _load(args)
    if args.omega < 0:
        raise ConfigurationError("--omega must be non-negative")
    H = build_hamiltonian(spec, args.omega)
    decomp = decompose(H, spec.polarization_q)
    order = display_order(H, decomp)
    M = np.abs(H.entries[np.ix_(order, order)])
    labels = [str(H.labels[i]) for i in order]
    matrix_csv = _csv_text(["state"] + labels,
                           [[labels[r]] + [_fmt(v) for v in M[r]] for r in range(len(order))])
    report = {
        "schema_version": 1,
        "scenario": spec.name,
        "omega_MHz": args.omega,
        "polarization_q": spec.polarization_q,
        "order": [int(i) for i in order],
        "rcm_permutation": [int(i) for i in decomp.permutation],
        "blocks": [
            {"mtilde": str(b.mtilde), "size": b.size,
             "states": [str(H.labels[i]) for i in b.indices]}
            for b in decomp.blocks
        ],
        "dark_singletons": [
            {"mtilde": str(m), "state": str(H.labels[i])}
            for i, m in zip(decomp.dark_singletons, decomp.singleton_mtilde)
        ],
    }
    _write([(args.matrix_csv, matrix_csv), (args.report_json, _json_text(report))])
    sizes = ", ".join(f"{b.mtilde}:{b.size}" for b in decomp.blocks)
    print(f"{len(decomp.blocks)} blocks [{sizes}], {len(decomp.dark_singletons)} singletons")
    return EXIT_OK


def cmd_sweep(args):
    doc, spec = _load(args)
    grid = _grid(args)
    probe = _probe(doc, args)
    probed = probe.probed_state_in(spec)
    wanted = {HalfInt.of(m) for m in args.mtilde} if args.mtilde else None
    bs = sweep(spec, grid, probed)
    header = ["omega_MHz", "block_id", "mtilde", "branch_id", "energy_MHz",
              "probed_admixture", "signal_weight", "classification"]
    extrap = {}
    if args.extrapolation:
        header.append("extrapolation_MHz")
        for k, blk in enumerate(bs.decomposition.blocks):
            lines = two_level_extrapolation(spec, blk, bs.basis, grid)
            if lines and 2 * len(lines) == blk.size:
                extrap[k] = np.sort(np.hstack(list(lines.values())), axis=1)
    adm = [bs.admixture(b) for b in range(len(bs.branches))]
    sw = [bs.signal_weight(b) for b in range(len(bs.branches))]
    rows = []
    for i, om in enumerate(grid):
        rank = {}
        for k, blk in enumerate(bs.decomposition.blocks):
            ids = [b for b, br in enumerate(bs.branches) if br.block_id == k]
            ids.sort(key=lambda b: bs.branches[b].energies[i])
            rank.update({b: r for r, b in enumerate(ids)})
        for b, br in enumerate(bs.branches):
            if wanted is not None and br.mtilde not in wanted:
                continue
            row = [_fmt(om), br.block_id, str(br.mtilde), b, _fmt(br.energies[i]),
                   _fmt(adm[b][i]), _fmt(sw[b][i]), bs.classifications[b]]
            if args.extrapolation:
                row.append(_fmt(extrap[br.block_id][i, rank[b]]) if br.block_id in extrap else "")
            rows.append(row)
    _write([(args.output, _csv_text(header, rows))])
    print(f"{len(grid)} grid points x {len(bs.branches)} branches -> {args.output}")
    return EXIT_OK


def cmd_spectrum(args):
    doc, spec = _load(args)
    probe = _probe(doc, args)
    probe.probed_state_in(spec)
    if args.omega < 0:
        raise ConfigurationError("--omega must be non-negative")
    if args.detuning_step <= 0 or args.detuning_max <= args.detuning_min:
        raise ConfigurationError("detuning grid needs max > min and step > 0")
    n = int(round((args.detuning_max - args.detuning_min) / args.detuning_step))
    grid = args.detuning_min + args.detuning_step * np.arange(n + 1)
    meta = {"schema_version": 1, "scenario": spec.name, "peak_omega_MHz": args.omega,
            "distribution": args.distribution, "linewidth_MHz": probe.linewidth,
            "probe_q": probe.probe_q, "probed_state": str(probe.probed_lower_state),
            "deterministic": True}
    if args.distribution == "homogeneous":
        dist = OmegaDistribution.homogeneous(args.omega)
    else:
        trap = TrapGeometry.from_dict(doc.get("trap", {}))
        dist = trap_omega_distribution(trap, args.omega, args.samples, args.seed)
        meta.update({"seed": args.seed, "samples": args.samples,
                     "trap": {k: getattr(trap, k) for k in trap.__dataclass_fields__}})
    spectrum = synthesize_spectrum(spec, probe, dist, grid)
    meta_path = args.metadata or str(Path(args.output).with_suffix(".meta.json"))
    _write([(args.output, spectrum.to_csv()), (meta_path, _json_text(meta))])
    print(f"spectrum with {grid.size} points -> {args.output}")
    return EXIT_OK


def cmd_fit(args):
    if not Path(args.input).exists():
        raise ConfigurationError(f"spectrum file {args.input} does not exist")
    if args.n_peaks < 1:
        raise ConfigurationError("--n-peaks must be at least 1")
    spectrum = Spectrum.from_csv(args.input)
    try:
        result = fit_peaks(spectrum, args.n_peaks, baseline=args.baseline,
                           max_iter=args.max_iter)
    except FitError as exc:
        if exc.report is not None:
            _write([(args.output, _json_text(exc.report.to_dict()))])
        raise
    if args.normalize:
        normalize_heights(result, args.reference_height)
    _write([(args.output, _json_text(result.to_dict()))])
    for p in result.peaks:
        print(f"center {p.center:12.4f} MHz  sigma {p.sigma:8.4f}  amplitude {p.amplitude:.6g}")
    return EXIT_OK


def cmd_reference(args):
    doc, spec = _load(args)
    grid = _grid(args, default=(0.0, 800.0, 50.0))
    if np.any(grid < 0):
        raise ConfigurationError("omegas must be non-negative")
    if args.morris_shore and (spec.lower.hyperfine_A or spec.upper.hyperfine_A):
        raise ConfigurationError(
            "Morris-Shore reference requires hyperfine_A = 0 in both manifolds "
            "(try --set lower.hyperfine_A_MHz=0)")
    rows = []
    for om in grid:
        lo, hi = two_level_reference(om, args.delta)
        rows.append(["two-level", _fmt(om), 0, _fmt(float(lo))])
        rows.append(["two-level", _fmt(om), 1, _fmt(float(hi))])
    if args.morris_shore:
        for om in grid:
            for k, e in enumerate(morris_shore_spectrum(spec, om)):
                rows.append(["morris-shore", _fmt(om), k, _fmt(float(e))])
    _write([(args.output, _csv_text(["model", "omega_MHz", "index", "energy_MHz"], rows))])
    print(f"{len(rows)} reference rows -> {args.output}")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _add_common(p):
    p.add_argument("--scenario", help="scenario JSON path or name (default: packaged Rb-87)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a scenario field by dotted path, e.g. lower.hyperfine_A_MHz=0")


def _add_grid(p):
    p.add_argument("--omegas", help="comma-separated Rabi frequencies (MHz); overrides the range")
    p.add_argument("--omega-min", type=float)
    p.add_argument("--omega-max", type=float)
    p.add_argument("--omega-step", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="dressedlevels",
                                     description="Dressed multi-level atom simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blocks", help="symmetry blocks and the reordered coupling matrix")
    _add_common(p)
    p.add_argument("--omega", type=float, default=200.0)
    p.add_argument("--matrix-csv", default="coupling_matrix.csv")
    p.add_argument("--report-json", default="blocks.json")
    p.set_defaults(func=cmd_blocks)

    p = sub.add_parser("sweep", help="dressed-state energies versus Rabi frequency")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--mtilde", action="append", help="only export blocks with this m~ (repeatable)")
    p.add_argument("--extrapolation", action="store_true",
                   help="add weak-coupling two-level extrapolation column")
    p.add_argument("--probe-q", type=int)
    p.add_argument("--deterministic", action="store_true",
                   help="accepted for symmetry with 'spectrum'; output is always reproducible")
    p.add_argument("-o", "--output", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectrum", help="synthesise a probe spectrum")
    _add_common(p)
    p.add_argument("--omega", type=float, default=400.0, help="peak Rabi frequency (MHz)")
    p.add_argument("--distribution", choices=["homogeneous", "trap"], default="homogeneous")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=20240601)
    p.add_argument("--detuning-min", type=float, default=-400.0)
    p.add_argument("--detuning-max", type=float, default=400.0)
    p.add_argument("--detuning-step", type=float, default=0.5)
    p.add_argument("--linewidth", type=float)
    p.add_argument("--probe-q", type=int)
    p.add_argument("--deterministic", action="store_true",
                   help="samples are always summed in fixed order; kept for scripts")
    p.add_argument("-o", "--output", default="spectrum.csv")
    p.add_argument("--metadata", help="metadata JSON path (default: <output>.meta.json)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("fit", help="fit Gaussian peaks to a spectrum CSV")
    p.add_argument("input")
    p.add_argument("--n-peaks", type=int, required=True)
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--normalize", action="store_true", help="add normalized peak heights")
    p.add_argument("--reference-height", type=float,
                   help="divide heights by this instead of the largest fitted amplitude")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("-o", "--output", default="fit.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reference", help="two-level and Morris-Shore reference tables")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--delta", type=float, default=0.0, help="two-level detuning (MHz)")
    p.add_argument("--morris-shore", action="store_true")
    p.add_argument("-o", "--output", default="reference.csv")
    p.set_defaults(func=cmd_reference)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ConvergenceError as exc:
        print(f"numeric error: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, PreconditionError, SymmetryViolationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
