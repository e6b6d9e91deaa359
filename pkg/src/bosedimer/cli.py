"""Command-line front end producing plot-ready CSV/JSON datasets.

Commands:
  stationary  stationary density matrix, diagonal, purity, spectrum
  spectrum    leading Liouvillian eigenvalues
  sweep1d     one-parameter quantum + classical bifurcation diagram
  sweep2d     two-parameter count maps with refined boundary points
  meanfield   classical equilibrium branches
  chaos       driven stroboscopic histograms (classical and quantum)

Every file embeds the schema version and the resolved configuration,
and identical config + seed reproduce identical bytes: floats are
written with repr (shortest round trip), JSON keys are sorted, and no
timestamps or machine identifiers appear anywhere.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bifurcation import (chaos_diagram_classical, chaos_diagram_quantum,
                          diagonal_maxima, locate_bifurcation,
                          sweep_stationary, two_parameter_diagram)
from .errors import BoseDimerError
from .liouvillian import (build_supermatrix, leading_spectrum, purity,
                          stationary_state)
from .meanfield import DEFAULT_B0, find_equilibria
from .model import DimerParams

SCHEMA_VERSION = 1

_PARAM_FIELDS = {"J": float, "U": float, "E": float, "A": float,
                 "T": float, "gamma": float, "N": int}

# default drive for the chaotic sweeps: the modulation switches after
# one time unit and repeats after two, i.e. full period T = 2
_CHAOS_BASE = {"J": -1.0, "U": 0.5, "E": 1.0, "A": 1.5, "T": 2.0,
               "gamma": 0.1, "N": 100}

# (name, type, default, help) per command; None types stay strings
_COMMON = [
    ("out", str, None, "output path prefix (default: ./<command>)"),
    ("format", str, "csv", "data table format: csv or json"),
]

_OPTIONS = {
    "stationary": _COMMON + [
        ("floor", float, 1e-6, "maxima detection floor"),
    ],
    "spectrum": _COMMON + [
        ("k", int, 3, "number of leading eigenvalues"),
    ],
    "sweep1d": _COMMON + [
        ("axis", str, "U", "swept parameter: U, E or J"),
        ("range", str, "0.05:0.7", "sweep range lo:hi"),
        ("steps", int, 60, "number of grid points"),
        ("floor", float, 1e-6, "maxima detection floor"),
        ("tol", float, 1e-3, "bisection tolerance for refinement"),
        ("workers", int, 1, "parallel sweep workers"),
    ],
    "sweep2d": _COMMON + [
        ("axis", str, "U", "first swept parameter"),
        ("range", str, "0.1:1.0", "first axis range lo:hi"),
        ("steps", int, 10, "first axis grid points"),
        ("axis2", str, "E", "second swept parameter"),
        ("range2", str, "0.0:0.1", "second axis range lo:hi"),
        ("steps2", int, 5, "second axis grid points"),
        ("floor", float, 1e-6, "maxima detection floor"),
        ("tol", float, 1e-3, "bisection tolerance for boundaries"),
        ("workers", int, 1, "parallel grid workers"),
    ],
    "meanfield": _COMMON + [
        ("axis", str, None, "swept parameter; omit for a single point"),
        ("range", str, "0.05:0.7", "sweep range lo:hi"),
        ("steps", int, 60, "number of grid points"),
    ],
    "chaos": _COMMON + [
        ("model", str, "both", "which diagram: classical, quantum or both"),
        ("range", str, "0.4:1.5", "interaction sweep range lo:hi"),
        ("steps", int, 12, "number of grid points"),
        ("transient", int, 2000, "periods discarded before recording"),
        ("record", int, 2000, "periods recorded per trajectory"),
        ("realizations", int, 8, "trajectories pooled per quantum column"),
        ("bins", int, 200, "histogram bins over [0, N]"),
        ("seed", int, 0, "base seed; column i uses seed + i"),
        ("dt", float, None, "integration step (default: solver choice)"),
        ("b0", str, None, "classical initial point theta:phi"),
        ("cluster-gap", float, None, "cluster split gap (default 1e-6 N)"),
        ("allow-large-n", bool, False, "run quantum sweeps beyond N = 100"),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bosedimer",
        description="bifurcation diagrams of the open boson dimer")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in _OPTIONS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--param", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="model parameter (repeatable): "
                            + ", ".join(_PARAM_FIELDS))
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file; flags override its entries")
        for name, typ, _default, helptext in opts:
            flag = "--" + name
            if typ is bool:
                p.add_argument(flag, action="store_true", default=None,
                               help=helptext)
            else:
                p.add_argument(flag, type=typ, default=None,
                               dest=name.replace("-", "_"), help=helptext)
    return parser


def _resolve(args) -> dict:
    """Merge builtin defaults, --config entries, and explicit flags."""
    file_cfg = {}
    if args.config is not None:
        file_cfg = json.loads(Path(args.config).read_text())
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")
    cfg = {}
    for name, typ, default, _h in _OPTIONS[args.command]:
        v = getattr(args, name.replace("-", "_"), None)
        if v is None:
            v = file_cfg.get(name, default)
            if v is not None and typ is not bool:
                v = typ(v)
        cfg[name] = v
    if cfg["out"] is None:
        cfg["out"] = args.command
    if cfg["format"] not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {cfg['format']!r}")

    base = dict(_CHAOS_BASE) if args.command == "chaos" else {}
    base.update(file_cfg.get("param", {}))
    for entry in args.param:
        key, sep, raw = entry.partition("=")
        if not sep or key not in _PARAM_FIELDS:
            raise ValueError(f"bad --param {entry!r}; expected KEY=VALUE "
                             f"with KEY in {sorted(_PARAM_FIELDS)}")
        base[key] = _PARAM_FIELDS[key](raw)
    cfg["params"] = DimerParams(**{k: _PARAM_FIELDS[k](v)
                                   for k, v in base.items()})
    return cfg


def _parse_range(text: str):
    lo, sep, hi = str(text).partition(":")
    if not sep:
        raise ValueError(f"bad range {text!r}; expected lo:hi")
    return float(lo), float(hi)


def _config_echo(cmd: str, cfg: dict) -> dict:
    p = cfg["params"]
    echo = {k: v for k, v in cfg.items() if k != "params"}
    echo["command"] = cmd
    echo["param"] = {k: getattr(p, k) for k in _PARAM_FIELDS}
    return echo


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    raise TypeError(f"not JSON-serializable: {type(x)}")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _cell(x) -> str:
    s = _fmt(x)
    if "," in s or '"' in s:
        s = '"' + s.replace('"', '""') + '"'
    return s


def _write_csv(path: Path, meta: dict, header, rows):
    lines = [f"# schema_version={SCHEMA_VERSION}",
             "# config=" + json.dumps(meta, sort_keys=True,
                                      default=_jsonable),
             ",".join(header)]
    lines.extend(",".join(_cell(x) for x in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2,
                               default=_jsonable) + "\n")


def _emit(cfg: dict, meta: dict, tables: dict, sidecar: dict) -> None:
    """Write tables as CSV files plus a JSON sidecar, or one JSON file.

    tables maps a suffix ('' for the main table) to (header, rows).
    """
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    if cfg["format"] == "json":
        blob = {"config": meta, **sidecar}
        for suffix, (header, rows) in tables.items():
            key = "table" + (suffix if suffix else "")
            blob[key] = {"header": list(header),
                         "rows": [list(r) for r in rows]}
        _write_json(out.with_suffix(".json"), blob)
        return
    for suffix, (header, rows) in tables.items():
        _write_csv(out.parent / (out.name + suffix + ".csv"),
                   meta, header, rows)
    _write_json(out.parent / (out.name + ".json"),
                {"config": meta, **sidecar})


# ------------------------------------------------------------------ commands

def cmd_stationary(cfg: dict) -> int:
    p = cfg["params"]
    if p.A != 0:
        raise ValueError("stationary requires A = 0 (undriven system)")
    sm = build_supermatrix(p)
    rho = stationary_state(sm)
    diag = np.diag(rho).real
    count, idx = diagonal_maxima(diag, floor=cfg["floor"])
    lam = leading_spectrum(sm, k=3)
    d = p.dim
    state_rows = [(i, j, float(rho[i, j].real), float(rho[i, j].imag))
                  for i in range(d) for j in range(d)]
    meta = _config_echo("stationary", cfg)
    _emit(cfg, meta,
          {"": (("n", "rho_nn"), list(enumerate(diag.tolist()))),
           "_state": (("row", "col", "re", "im"), state_rows)},
          {"purity": purity(rho),
           "maxima_count": count,
           "maxima_indices": list(idx),
           "spectrum": [{"re": v.real, "im": v.imag} for v in lam]})
    return 0


def cmd_spectrum(cfg: dict) -> int:
    p = cfg["params"]
    if p.A != 0:
        raise ValueError("spectrum requires A = 0 (undriven generator)")
    lam = leading_spectrum(build_supermatrix(p), k=cfg["k"])
    rows = [(i, v.real, v.imag) for i, v in enumerate(lam)]
    _emit(cfg, _config_echo("spectrum", cfg),
          {"": (("index", "re", "im"), rows)}, {})
    return 0


def _refined_points(params, axis, columns, tol, floor):
    """Bisect every adjacent count change of an executed 1-d sweep."""
    points = []
    for a, b in zip(columns[:-1], columns[1:]):
        if a.error is not None or b.error is not None:
            continue
        pairs = [("quantum", a.maxima_count, b.maxima_count)]
        sa = sum(s == "stable" for _, s in a.classical)
        sb = sum(s == "stable" for _, s in b.classical)
        pairs.append(("classical", sa, sb))
        for kind, ca, cb in pairs:
            if ca == cb:
                continue
            bp = locate_bifurcation(params, axis, a.value, b.value,
                                    tol=tol, kind=kind, floor=floor)
            points.append({"kind": kind, "axis": axis, "value": bp.value,
                           "before": bp.before, "after": bp.after,
                           "tolerance": bp.tolerance})
    return points


def cmd_sweep1d(cfg: dict) -> int:
    p = cfg["params"]
    lo, hi = _parse_range(cfg["range"])
    columns = sweep_stationary(p, cfg["axis"], lo, hi, cfg["steps"],
                               floor=cfg["floor"], workers=cfg["workers"])
    rows = []
    classical_rows = []
    col_meta = []
    for c in columns:
        col_meta.append({
            "value": c.value, "maxima_count": c.maxima_count,
            "maxima_indices": list(c.maxima_indices),
            "purity": c.purity, "re_lambda1": c.re_lambda1,
            "re_lambda2": c.re_lambda2,
            "re_lambda3": c.re_lambda3, "error": c.error})
        if c.error is not None:
            continue
        for n, w in enumerate(c.diagonal):
            rows.append((cfg["axis"], c.value, n, float(w),
                         int(n in c.maxima_indices)))
        for n_val, stab in c.classical:
            classical_rows.append((cfg["axis"], c.value, float(n_val), stab))
    points = _refined_points(p, cfg["axis"], columns, cfg["tol"],
                             cfg["floor"])
    _emit(cfg, _config_echo("sweep1d", cfg),
          {"": (("axis", "value", "n", "rho_nn", "is_max"), rows),
           "_classical": (("axis", "value", "n", "stability"),
                          classical_rows)},
          {"columns": col_meta, "bifurcation_points": points})
    return 0


def cmd_sweep2d(cfg: dict) -> int:
    p = cfg["params"]
    lo1, hi1 = _parse_range(cfg["range"])
    lo2, hi2 = _parse_range(cfg["range2"])
    d = two_parameter_diagram(p, cfg["axis"], cfg["axis2"],
                              lo1, hi1, cfg["steps"],
                              lo2, hi2, cfg["steps2"],
                              floor=cfg["floor"], tol=cfg["tol"],
                              workers=cfg["workers"])
    rows = []
    for i2, v2 in enumerate(d.values2):
        for i1, v1 in enumerate(d.values1):
            rows.append((cfg["axis"], float(v1), cfg["axis2"], float(v2),
                         int(d.quantum_counts[i2, i1]),
                         int(d.classical_stable[i2, i1]),
                         int(d.classical_unstable[i2, i1]),
                         d.region_labels[i2, i1]))
    boundary_rows = [("quantum", v1, v2) for v1, v2 in d.quantum_boundary]
    boundary_rows += [("classical", v1, v2) for v1, v2 in d.classical_boundary]
    _emit(cfg, _config_echo("sweep2d", cfg),
          {"": (("axis1", "value1", "axis2", "value2", "quantum_count",
                 "classical_stable", "classical_unstable", "label"), rows),
           "_boundary": (("kind", "value1", "value2"), boundary_rows)},
          {"errors": [{"i1": i, "i2": j, "message": m}
                      for i, j, m in d.errors],
           "quantum_boundary": [list(pt) for pt in d.quantum_boundary],
           "classical_boundary": [list(pt) for pt in d.classical_boundary]})
    return 0


def cmd_meanfield(cfg: dict) -> int:
    p = cfg["params"]
    if cfg["axis"] is None:
        sweeps = [(p.U, find_equilibria(p))]
    else:
        if cfg["axis"] not in ("U", "E", "J"):
            raise ValueError(f"axis must be U, E or J, got {cfg['axis']!r}")
        lo, hi = _parse_range(cfg["range"])
        sweeps = [(float(v), find_equilibria(
            replace(p, **{cfg["axis"]: float(v)})))
            for v in np.linspace(lo, hi, cfg["steps"])]
    axis = cfg["axis"] or "U"
    rows = []
    counts = []
    for v, eqs in sweeps:
        stable = sum(e.stability == "stable" for e in eqs)
        counts.append({"value": v, "stable": stable,
                       "total": len(eqs)})
        for e in eqs:
            rows.append((axis, v, float(e.n), float(e.theta),
                         float(e.phi), e.stability))
    _emit(cfg, _config_echo("meanfield", cfg),
          {"": (("axis", "value", "n", "theta", "phi", "stability"), rows)},
          {"counts": counts})
    return 0


def cmd_chaos(cfg: dict) -> int:
    p = cfg["params"]
    if cfg["model"] not in ("classical", "quantum", "both"):
        raise ValueError("model must be classical, quantum or both")
    lo, hi = _parse_range(cfg["range"])
    rows = []
    col_meta = []

    def add(model, cols):
        for c in cols:
            e = c.histogram.edges
            w = c.histogram.weights
            for b in range(len(w)):
                rows.append((model, c.value, float(e[b]), float(e[b + 1]),
                             float(w[b])))
            entry = {"model": model, "value": c.value,
                     "occupied_bins": c.occupied_bins,
                     "cluster_count": c.cluster_count}
            if model == "classical":
                entry["cluster_centers"] = list(c.cluster_centers)
            col_meta.append(entry)

    if cfg["model"] in ("classical", "both"):
        b0 = DEFAULT_B0
        if cfg["b0"] is not None:
            b0 = _parse_range(cfg["b0"])
        add("classical", chaos_diagram_classical(
            p, lo, hi, cfg["steps"], n_transient=cfg["transient"],
            n_record=cfg["record"], n_bins=cfg["bins"], b0=b0,
            dt=cfg["dt"], cluster_gap=cfg["cluster-gap"]))
    if cfg["model"] in ("quantum", "both"):
        add("quantum", chaos_diagram_quantum(
            p, lo, hi, cfg["steps"], n_realizations=cfg["realizations"],
            n_transient=cfg["transient"], n_record=cfg["record"],
            n_bins=cfg["bins"], base_seed=cfg["seed"], dt=cfg["dt"],
            cluster_gap=cfg["cluster-gap"],
            allow_large_n=bool(cfg["allow-large-n"])))
    seeds = [cfg["seed"] + i for i in range(cfg["steps"])] \
        if cfg["model"] in ("quantum", "both") else []
    _emit(cfg, _config_echo("chaos", cfg),
          {"": (("model", "value", "bin_lo", "bin_hi", "weight"), rows)},
          {"columns": col_meta, "column_seeds": seeds})
    return 0


_COMMANDS = {
    "stationary": cmd_stationary,
    "spectrum": cmd_spectrum,
    "sweep1d": cmd_sweep1d,
    "sweep2d": cmd_sweep2d,
    "meanfield": cmd_meanfield,
    "chaos": cmd_chaos,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:           # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        cfg = _resolve(args)
        return _COMMANDS[args.command](cfg)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"bosedimer: usage error: {exc}", file=sys.stderr)
        return 2
    except BoseDimerError as exc:
        print(f"bosedimer: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
