"""Command line entry point: ``ohm <command> --config run.ini [--set section.key=value]... [--out dir]``.

Exit status: 0 success, 2 malformed config, 3 invalid config, 4 runtime
failure, 5 file-system failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import COMMANDS, RunConfig, load_config, make_model
from .errors import ConfigParseError, ConfigValidationError, OhmError
from .experiment import (SweepConfig, model_name, mott_sweep, predicted_limit, scaling_sweep, solve_cell,
                         weak_convergence_probe, worker_count)
from .homog import assemble_effective_matrix, direction_geometry, solve_corrector, torus_graph
from .env import periodic_environment
from .network import dump_network
from .solver import dump_solution

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4, 5

SWEEP_HEADER = ("model", "d", "direction", "ell", "seed", "sigma_flux", "sigma_energy", "rescaled", "iterations",
                "residual", "crossing_bound")
SUMMARY_HEADER = ("ell", "mean_rescaled", "std_error", "n_ok", "n_failed", "predicted_limit")
WEAK_HEADER = ("ell", "phi_index", "pairing")
MOTT_HEADER = ("beta", "d11", "log_d11", "mott_abscissa")


@dataclass
class Results:
    command: str
    summary: str
    tables: dict[str, tuple[Sequence[str], list[Sequence]]] = field(default_factory=dict)
    records: dict[str, dict] = field(default_factory=dict)
    texts: dict[str, str] = field(default_factory=dict)


# ------------------------------------------------------------ formatting


def fmt(v) -> str:
    """Round-trip exact text for a table cell."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return "nan"
    return str(v)


def _direction_text(e) -> str:
    return ";".join(fmt(float(x)) for x in e)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def table_text(header: Sequence[str], rows: list[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def record_text(record: dict) -> str:
    return json.dumps(_json_safe(record), indent=2, sort_keys=True) + "\n"


# ------------------------------------------------------------- dispatch


def _sweep_config(cfg: RunConfig) -> SweepConfig:
    g, s, v = cfg.sections["geometry"], cfg.sections["sampling"], cfg.sections["solver"]
    return SweepConfig(
        model=make_model(cfg), dim=g["d"], ells=tuple(g["ells"]), seeds=tuple(s["seeds"]),
        direction=tuple(g["direction"]) if g["direction"] else None, geometry=g["frame"], margin=g["margin"],
        intensity=cfg.get("model", "intensity"), tol=v["tol"], max_iter=v["max_iter"], n_gamma=v["n_gamma"],
        method=v["method"], crossings=v["crossings"], torus_size=s["torus_n"],
        torus_seeds=tuple(s["torus_seeds"] or s["seeds"]))


def _cmd_solve(cfg: RunConfig) -> Results:
    sc = _sweep_config(cfg)
    _, _, frame = predicted_limit(sc)
    ell, seed = sc.ells[0], sc.seeds[0]
    net, sol, rep, cross = solve_cell(sc, frame, ell, seed, keep_net=True)
    record = {
        "model": model_name(sc.model), "d": sc.dim, "direction": sc.unit_direction(), "ell": ell, "seed": seed,
        "sigma_flux": rep.sigma_flux, "sigma_energy": rep.sigma_energy, "rescaled": rep.rescaled,
        "flux_profile": [list(p) for p in rep.flux_profile], "iterations": sol.iterations,
        "residual": sol.residual, "converged": sol.converged, "method": sol.method, "n_nodes": net.n_nodes,
        "n_edges": net.n_edges, "truncation_bound": net.truncation_bound, "frame": frame.kind,
    }
    if cross is not None:
        record.update(n_crossings=cross.n_crossings, crossing_bound=cross.lower_bound,
                      crossing_jensen_bound=cross.jensen_bound, path_lengths=list(cross.path_lengths))
    res = Results("solve", f"ell={fmt(float(ell))} seed={seed}: sigma={fmt(rep.sigma_energy)} "
                           f"rescaled={fmt(rep.rescaled)}")
    res.records["report.json"] = record
    if cfg.get("output", "dump_network"):
        res.texts["network.txt"] = dump_network(net)
    if cfg.get("output", "dump_solution"):
        res.texts["solution.txt"] = dump_solution(sol)
    return res


def _cmd_sweep(cfg: RunConfig) -> Results:
    sc = _sweep_config(cfg)
    result = scaling_sweep(sc)
    direction = _direction_text(result.direction)
    rows = []
    for r in result.records:
        rep = r.report
        rows.append((result.model, result.dim, direction, float(r.ell), r.seed,
                     rep.sigma_flux if rep else float("nan"), rep.sigma_energy if rep else float("nan"),
                     rep.rescaled if rep else float("nan"), r.iterations, float(r.residual), float(r.crossing_bound)))
    limit = result.predicted_limit
    limit_cell = float("nan") if limit is None else float(limit)
    summary_rows = [(s.ell, s.mean, s.std_error, s.n_ok, s.n_failed, limit_cell) for s in result.stats]
    res = Results("sweep", "")
    res.tables["sweep.csv"] = (SWEEP_HEADER, rows)
    res.tables["summary.csv"] = (SUMMARY_HEADER, summary_rows)
    res.records["summary.json"] = {
        "model": result.model, "d": result.dim, "direction": result.direction, "frame": result.frame_kind,
        "predicted_limit": limit, "last_gap": result.last_gap,
        "levels": [s.__dict__ for s in result.stats],
        "failed_cells": [{"ell": r.ell, "seed": r.seed, "error": r.error} for r in result.records if not r.ok],
        "effective_matrix": result.effective.to_record() if result.effective is not None else None,
    }
    last = result.stats[-1]
    if limit is None:
        res.summary = f"ell={fmt(last.ell)}: mean rescaled {fmt(last.mean)} (no predicted limit requested)"
    else:
        res.summary = (f"ell={fmt(last.ell)}: mean rescaled {fmt(last.mean)} vs predicted limit {fmt(float(limit))}"
                       f" (last gap {fmt(result.last_gap)})")
    return res


def _effective(cfg: RunConfig):
    s = cfg.sections["sampling"]
    seeds = tuple(s["torus_seeds"] or s["seeds"])
    return assemble_effective_matrix(make_model(cfg), cfg.get("geometry", "d"), s["torus_n"], seeds,
                                     intensity=cfg.get("model", "intensity"), tol=cfg.get("solver", "tol"),
                                     method=cfg.get("solver", "method"))


def _cmd_corrector(cfg: RunConfig) -> Results:
    em = _effective(cfg)
    res = Results("corrector", "D = " + json.dumps(_json_safe(em.matrix)) + f", m = {fmt(em.intensity)}")
    res.records["effective_matrix.json"] = em.to_record()
    if cfg.get("output", "dump_corrector"):
        s = cfg.sections["sampling"]
        seed = (s["torus_seeds"] or s["seeds"])[0]
        env = periodic_environment(make_model(cfg), cfg.get("geometry", "d"), s["torus_n"], seed,
                                   intensity=cfg.get("model", "intensity"))
        sol = solve_corrector(torus_graph(env), np.eye(env.dim)[0], tol=cfg.get("solver", "tol"))
        res.texts["corrector.txt"] = dump_solution(sol.corrector)
    return res


def _cmd_direction(cfg: RunConfig) -> Results:
    d = cfg.get("geometry", "d")
    e = cfg.get("geometry", "direction") or tuple(np.eye(d)[0])
    matrix = cfg.get("geometry", "matrix")
    if matrix is not None:
        m = cfg.get("model", "intensity") if "model" in cfg.present and cfg.get("model", "intensity") else 1.0
        geo = direction_geometry(np.asarray(matrix, dtype=float), e, intensity=m)
        D = np.asarray(matrix, dtype=float)
    else:
        em = _effective(cfg)
        geo = direction_geometry(em, e)
        D = em.matrix
    f = geo.frame
    res = Results("direction", f"predicted limit m a.Da = {fmt(geo.predicted_limit)} (frame {f.kind})")
    res.records["direction.json"] = {
        "matrix": D, "direction": np.asarray(e, float) / np.linalg.norm(e), "w": geo.w, "a": geo.a, "c": f.c,
        "d_star": geo.d_star, "frame": f.kind, "rotation": f.rotation, "lateral": f.lateral,
        "predicted_limit": geo.predicted_limit,
    }
    return res


def _cmd_weakprobe(cfg: RunConfig) -> Results:
    probe = weak_convergence_probe(_sweep_config(cfg))
    rows = [(ell, k, probe.values[(ell, k)]) for ell in probe.ells for k in range(probe.n_functions)]
    worst = max(abs(probe.values[(probe.ells[-1], k)]) for k in range(probe.n_functions))
    res = Results("weakprobe", f"ell={fmt(probe.ells[-1])}: max |pairing| = {fmt(worst)}")
    res.tables["weakprobe.csv"] = (WEAK_HEADER, rows)
    return res


def _cmd_mott(cfg: RunConfig) -> Results:
    s = cfg.sections["sampling"]
    rows = mott_sweep(s["betas"], make_model(cfg), cfg.get("geometry", "d"), s["torus_n"], s["seeds"][0],
                      cfg.get("model", "intensity"), tol=cfg.get("solver", "tol"))
    table = [(r.beta, r.d11, r.log_d11, r.mott_abscissa) for r in rows]
    res = Results("mott", "D11 by beta: " + ", ".join(f"{fmt(r.beta)}->{fmt(r.d11)}" for r in rows))
    res.tables["mott.csv"] = (MOTT_HEADER, table)
    return res


DISPATCH = {"solve": _cmd_solve, "sweep": _cmd_sweep, "corrector": _cmd_corrector, "direction": _cmd_direction,
            "weakprobe": _cmd_weakprobe, "mott": _cmd_mott}


def execute(cfg: RunConfig) -> Results:
    return DISPATCH[cfg.command](cfg)


# --------------------------------------------------------------- outputs


def metadata(cfg: RunConfig) -> dict:
    s = cfg.sections["sampling"]
    return {
        "artifact": "artifact", "version": __version__, "command": cfg.command, "config_hash": cfg.hash(),
        "config": cfg.canonical(), "seeds": list(s["seeds"]), "torus_seeds": list(s["torus_seeds"] or s["seeds"]),
        "threads": worker_count(), "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def emit_outputs(results: Results, out_dir: str | Path, cfg: RunConfig | None = None) -> list[Path]:
    """Write tables, records, dumps and (with ``cfg``) the metadata sidecar; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in results.tables.items():
        written.append(_write(out / name, table_text(header, rows)))
    for name, record in results.records.items():
        written.append(_write(out / name, record_text(record)))
    for name, text in results.texts.items():
        written.append(_write(out / name, text))
    if cfg is not None:
        written.append(_write(out / "metadata.json", record_text(metadata(cfg))))
    return written


def _write(path: Path, text: str) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


# ------------------------------------------------------------------- main


def run_config(path: str | Path, command: str | None = None, overrides: Sequence[str] = (),
               out: str | Path | None = None, stdout=None, stderr=None) -> int:
    """Load, validate, execute and write one run; returns the exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = load_config(path, overrides, command)
    except ConfigParseError as exc:
        print(f"ohm: parse error: {exc}", file=stderr)
        return EXIT_PARSE
    except ConfigValidationError as exc:
        print(f"ohm: validation error: {exc}", file=stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"ohm: I/O error: cannot read config {path}: {exc.strerror or exc}", file=stderr)
        return EXIT_IO
    try:
        results = execute(cfg)
    except (OhmError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"ohm: runtime error in {cfg.command}: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_RUNTIME
    target = out if out is not None else cfg.get("output", "dir")
    try:
        emit_outputs(results, target, cfg)
    except OSError as exc:
        print(f"ohm: I/O error: cannot write outputs to {target}: {exc.strerror or exc}", file=stderr)
        return EXIT_IO
    print(f"{cfg.command}: {results.summary}", file=stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ohm", description="Random resistor networks and effective conductivity.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--out", default=None, help="output directory (default: output.dir from the config)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_PARSE
    return run_config(args.config, args.command, args.overrides, args.out)


if __name__ == "__main__":
    sys.exit(main())
