"""Command-line front end.

    geomq curvature --chart sphere:R=1 --at 0.7,0.3
    geomq potential --chart flat_torus:R1=1,R2=2
    geomq verify prokhorov --suite random20 --seed 1
    geomq spectrum layer --chart circle:R=1 --delta 0.05 --nev 6 --out layer.json

Every run produces a report with one record per check; the exit status is 0
when all records pass, 1 when any fails and 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import adapted, geometry, potentials, rng, solver, suites
from .charts import make_chart
from .errors import ConfigError, GeomqError

COMMANDS = {
    "curvature": (None,),
    "potential": (None,),
    "verify": ("series", "divn", "prokhorov", "detexp", "vq", "stereo"),
    "spectrum": ("surface", "layer", "shell", "sweep", "factorization"),
}

DEFAULT_TOLERANCES = {
    "divn": 1e-6, "prokhorov": 1e-5, "vq": 1e-6, "stereo": 1e-6, "detexp": 2.7,
    "potential": 1e-6, "factorization": 1e-3,
}
DEFAULT_CHARTS = {"series": "ellipse", "layer": "circle", "surface": "circle",
                  "sweep": "circle", "factorization": "circle"}
SLOPE_BAND = (0.7, 1.5)
SERIES_BAND = (2.7, 3.3)


@dataclass
class RunConfig:
    command: str
    target: Optional[str] = None
    chart: Optional[str] = None
    at: list = field(default_factory=list)
    delta: Optional[float] = None
    deltas: list = field(default_factory=list)
    nev: int = 6
    grid: list = field(default_factory=list)
    seed: int = 0
    suite: Optional[str] = None
    R: float = 1.0
    lmax: int = 3
    diagonal: bool = False
    tolerance: Optional[float] = None
    out: Optional[str] = None
    format: str = "json"
    timing: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        targets = COMMANDS[self.command]
        if self.target not in targets:
            raise ConfigError(f"{self.command}: target must be one of {targets}")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) \
                or not 0 <= self.seed <= rng.MAX_SEED:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError("delta must be positive")
        if any(not d > 0 for d in self.deltas):
            raise ConfigError("deltas must be positive")
        if self.nev < 1 or self.lmax < 0:
            raise ConfigError("nev must be >= 1 and lmax >= 0")
        if not self.R > 0:
            raise ConfigError("R must be positive")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        if self.suite is not None:
            try:
                suites.parse_suite(self.suite)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        data = dict(data)
        data["at"] = [[float(x) for x in p] for p in data.get("at", [])]
        data["deltas"] = [float(x) for x in data.get("deltas", [])]
        data["grid"] = [int(x) for x in data.get("grid", [])]
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return dataclasses.asdict(self)


# ----------------------------------------------------------------- argument parsing

def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--chart", help="NAME:k=v,... (list values separated by ';')")
    common.add_argument("--at", type=_floats, action="append", help="evaluation point, CSV")
    common.add_argument("--delta", type=float)
    common.add_argument("--deltas", type=_floats)
    common.add_argument("--nev", type=int)
    common.add_argument("--grid", type=_ints, help="N[,N]: tangent (and normal) points")
    common.add_argument("--seed", type=int)
    common.add_argument("--suite", help="randomN")
    common.add_argument("--R", type=float, dest="R")
    common.add_argument("--lmax", type=int)
    common.add_argument("--diagonal", action="store_true", default=None)
    common.add_argument("--tolerance", type=float)
    common.add_argument("--config", help="JSON config; flags override its values")
    common.add_argument("--out")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--timing", action="store_true", default=None,
                        help="record wall-clock seconds (reports are then not reproducible)")

    parser = argparse.ArgumentParser(prog="geomq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"geomq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, targets in COMMANDS.items():
        p = sub.add_parser(name, parents=[common])
        if targets != (None,):
            p.add_argument("target", choices=targets)
    return parser


def config_from_args(args):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data["command"] = args.command
    data["target"] = getattr(args, "target", None)
    for key in ("chart", "at", "delta", "deltas", "nev", "grid", "seed", "suite", "R", "lmax",
                "diagonal", "tolerance", "out", "format", "timing"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    return RunConfig.from_dict(data)


# -------------------------------------------------------------------------- records

def clean(value):
    """JSON-ready copy: numpy to builtins, NaN/inf to None."""
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return clean(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value + 0.0 if math.isfinite(value) else None
    return value


def record(name, inputs, values, residual, tolerance, passed):
    return {"name": name, "inputs": inputs, "values": values, "residual": residual,
            "tolerance": tolerance, "pass": bool(passed), "seconds": None}


def _run_case(case, timing):
    name, inputs, fn = case
    start = time.perf_counter()
    try:
        rec = fn()
    except GeomqError as exc:
        rec = record(name, inputs, {"error": f"{type(exc).__name__}: {exc}"}, None, None, False)
    rec["name"], rec["inputs"] = name, inputs
    if timing:
        rec["seconds"] = time.perf_counter() - start
    return clean(rec)


def _threads():
    try:
        return max(1, int(os.environ.get("GEOMQ_THREADS", "4")))
    except ValueError:
        raise ConfigError("GEOMQ_THREADS must be an integer") from None


def run_cases(cases, timing=False):
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        records = list(pool.map(lambda c: _run_case(c, timing), cases))
    return sorted(records, key=lambda r: r["name"])


# ------------------------------------------------------------------------- commands

def _chart(config, default=None):
    spec = config.chart or default
    if spec is None:
        raise ConfigError(f"{config.command}: --chart is required")
    return make_chart(spec)


def _points(config, chart):
    if config.at:
        for p in config.at:
            if len(p) != chart.m:
                raise ConfigError(f"--at needs {chart.m} coordinates, got {len(p)}")
        return config.at
    if chart.default_point is None:
        raise ConfigError("chart has no default point; pass --at")
    return [list(chart.default_point)]


def _tol(config, key):
    return config.tolerance if config.tolerance is not None else DEFAULT_TOLERANCES[key]


def cmd_curvature(config):
    chart = _chart(config)
    cases = []
    for i, p in enumerate(_points(config, chart)):
        def run(p=p):
            data = geometry.curvature_forms(chart, p)
            traces, gram = data.trace_invariants()
            values = {"forms": data.forms, "traces": traces, "gram": gram,
                      "normals": data.normal_frame}
            if data.principal is not None:
                values["principal"] = data.principal
            ok = bool(np.all(np.isfinite(data.forms)))
            return record("", {}, values, None, None, ok)
        cases.append((f"curvature/{i:03d}", {"chart": config.chart, "at": p}, run))
    return cases


def cmd_potential(config):
    chart = _chart(config)
    tol = _tol(config, "potential")
    cases = []
    for i, p in enumerate(_points(config, chart)):
        def run(p=p):
            rep = potentials.potential_report(chart, p)
            residual = abs(rep.vq_general_invariant - rep.vq_numeric)
            return record("", {}, rep.to_dict(), residual, tol, residual <= tol)
        cases.append((f"potential/{i:03d}", {"chart": config.chart, "at": p}, run))
    return cases


def _quadric_cases(config, prefix, check):
    if config.chart:
        chart = make_chart(config.chart)
        return [(f"{prefix}/{i:03d}", {"chart": config.chart, "at": p},
                 lambda p=p: check(chart, p)) for i, p in enumerate(_points(config, chart))]
    count = suites.parse_suite(config.suite or "random20")
    cases = []
    for i, s in enumerate(suites.quadric_seeds(config.seed, count)):
        spec = f"random_quadric:seed={s}"

        def run(spec=spec):
            chart = make_chart(spec)
            return check(chart, chart.default_point)
        cases.append((f"{prefix}/{i:03d}", {"chart": spec}, run))
    return cases


def verify_divn(config):
    tol = _tol(config, "divn")

    def check(chart, p):
        div = geometry.divergence_of_normal(chart, p)
        residual = abs(div.principal_sum - div.numerical)
        return record("", {}, div._asdict(), residual, tol, residual <= tol)
    return _quadric_cases(config, "divn", check)


def verify_prokhorov(config):
    tol = _tol(config, "prokhorov")

    def check(chart, p):
        res = adapted.prokhorov_equivalence_check(chart, p)
        return record("", {}, dataclasses.asdict(res), res.residual, tol, res.residual <= tol)
    return _quadric_cases(config, "prokhorov", check)


def verify_series(config):
    chart = _chart(config, DEFAULT_CHARTS["series"])
    eps = list(np.logspace(-3, -1, 9))

    def check(p):
        res = adapted.verify_series_order(chart, p, eps)
        ok = res.terminates or SERIES_BAND[0] <= res.slope <= SERIES_BAND[1]
        return record("", {}, dataclasses.asdict(res), res.max_residual, list(SERIES_BAND), ok)
    return [(f"series/{i:03d}", {"chart": chart.name, "params": chart.params, "at": p},
             lambda p=p: check(p)) for i, p in enumerate(_points(config, chart))]


def verify_detexp(config):
    count = suites.parse_suite(config.suite or "random5")
    threshold = _tol(config, "detexp")
    eps = np.logspace(-3, -1.5, 7)
    cases = []
    for i in range(count):
        def run(i=i):
            gen = rng.stream(config.seed, i)
            forms = suites.random_forms(gen, 2, 2, diagonal=config.diagonal)
            slope, residuals = adapted.det_expansion_order(forms, eps)
            at_001 = adapted.det_expansion_check(forms, 0.01)
            values = {"forms": forms, "slope": slope, "residuals": residuals,
                      "residual_at_0.01": dataclasses.asdict(at_001)}
            # only the diagonal regime carries a contract; otherwise the order is reported
            ok = slope >= threshold if config.diagonal else True
            return record("", {}, values, at_001.residual, threshold if config.diagonal else None,
                          ok)
        cases.append((f"detexp/{i:03d}", {"seed": config.seed, "diagonal": config.diagonal}, run))
    return cases


def verify_vq(config):
    tol = _tol(config, "vq")
    count = suites.parse_suite(config.suite or "random50")
    diagonal = True if config.diagonal else None
    cases = []
    for i, forms in enumerate(suites.form_sets(config.seed, count, diagonal)):
        def run(forms=forms):
            rep = potentials.compare_potentials(forms)
            residual = abs(rep.vq_general_invariant - rep.vq_numeric)
            ok = residual <= tol
            is_diag = all(np.allclose(f, np.diag(np.diag(f)), atol=0, rtol=0) for f in forms)
            if is_diag:
                ok = ok and abs(rep.vq_general_paper - rep.vq_general_invariant) <= 1e-10
            values = {**rep.to_dict(), "forms": forms, "diagonal": is_diag}
            return record("", {}, values, residual, tol, ok)
        cases.append((f"vq/{i:03d}", {"seed": config.seed, "index": i}, run))
    return cases


def verify_stereo(config):
    tol = _tol(config, "stereo")
    count = 50
    if config.suite:
        count = suites.parse_suite(config.suite)
    pts = suites.stereo_points(config.seed, count, config.R)
    cases = []
    for name, f in suites.stereo_functions():
        def run(f=f):
            r = potentials.stereographic_operator_check(config.R, [f], pts)
            return record("", {}, {"max_relative_residual": r}, r, tol, r <= tol)
        cases.append((f"stereo/{name}", {"R": config.R, "points": count, "seed": config.seed},
                      run))
    return cases


def _grid(config, default_tangent=128):
    nt = config.grid[0] if config.grid else default_tangent
    nn = config.grid[1] if len(config.grid) > 1 else 16
    return nt, nn


def _scenario(config, delta=None):
    chart = _chart(config, DEFAULT_CHARTS.get(config.target))
    nt, nn = _grid(config)
    d = delta if delta is not None else config.delta
    if d is None:
        raise ConfigError("--delta is required")
    try:
        return solver.ThinLayerScenario(chart, d, nt, nn, config.nev)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _spectrum_record(result):
    return record("", {}, result.to_dict(), None, None, True)


def spectrum_cases(config):
    target = config.target
    if target == "surface":
        chart = _chart(config, DEFAULT_CHARTS["surface"])
        nt, _ = _grid(config, 256)
        inputs = {"chart": config.chart, "grid": nt, "nev": config.nev}
        return [("spectrum/surface", inputs,
                 lambda: _spectrum_record(solver.surface_spectrum(chart, True, nt, config.nev)))]
    if target == "layer":
        sc = _scenario(config)
        inputs = {"chart": config.chart, "delta": sc.delta, "grid": [sc.n_tangent, sc.n_normal],
                  "nev": sc.num_eigenvalues}
        return [("spectrum/layer", inputs,
                 lambda: _spectrum_record(solver.layer_spectrum_curve(sc)))]
    if target == "shell":
        delta = config.delta if config.delta is not None else 0.025
        n_radial = config.grid[0] if config.grid else 400
        inputs = {"R": config.R, "delta": delta, "lmax": config.lmax, "grid": n_radial}
        return [("spectrum/shell", inputs, lambda: _spectrum_record(
            solver.layer_spectrum_shell(config.R, delta, config.lmax, n_radial)))]
    if target == "sweep":
        deltas = config.deltas or [0.1, 0.05, 0.025]
        sc = _scenario(config, delta=max(deltas))
        inputs = {"chart": config.chart, "deltas": deltas, "grid": [sc.n_tangent, sc.n_normal]}

        def run():
            rep = solver.delta_sweep(sc, deltas)
            slopes = [s for s in rep.slopes if not math.isnan(s)]
            ok = all(SLOPE_BAND[0] <= s <= SLOPE_BAND[1] for s in slopes)
            final = float(np.max(np.abs(rep.errors[-1])))
            return record("", {}, rep.to_dict(), final, list(SLOPE_BAND), ok)
        return [("spectrum/sweep", inputs, run)]
    if target == "factorization":
        tol = _tol(config, "factorization")
        deltas = config.deltas or ([config.delta] if config.delta else [0.05, 0.025])
        cases = []
        for d in deltas:
            sc = _scenario(config, delta=d)

            def run(sc=sc):
                r = solver.factorization_residual(sc)
                return record("", {}, {"defect": r}, r, tol, r <= tol)
            cases.append((f"factorization/delta={d:g}", {"chart": config.chart, "delta": d}, run))
        return cases
    raise ConfigError(f"unknown spectrum target {target!r}")


def build_cases(config):
    if config.command == "curvature":
        return cmd_curvature(config)
    if config.command == "potential":
        return cmd_potential(config)
    if config.command == "verify":
        return globals()[f"verify_{config.target}"](config)
    return spectrum_cases(config)


def build_report(config):
    records = run_cases(build_cases(config), timing=config.timing)
    return {"version": __version__, "config": clean(config.to_dict()), "records": records,
            "pass": all(r["pass"] for r in records)}


# ---------------------------------------------------------------------------- output

def render_json(report):
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def render_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    spectra = [r for r in report["records"] if "eigenvalues" in r["values"]]
    if spectra:
        values = spectra[0]["values"]
        size = {i: len(g) for g in values["degeneracies"] for i in g}
        writer.writerow(["index", "eigenvalue", "subtracted", "degeneracy"])
        subtracted = values["subtracted"]
        for i, e in enumerate(values["eigenvalues"]):
            writer.writerow([i, repr(e), "" if subtracted is None else repr(subtracted[i]),
                             size.get(i, 1)])
    else:
        writer.writerow(["name", "residual", "tolerance", "pass"])
        for r in report["records"]:
            writer.writerow([r["name"], "" if r["residual"] is None else repr(r["residual"]),
                             json.dumps(r["tolerance"]), "true" if r["pass"] else "false"])
    return buf.getvalue()


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(config, report):
    text = render_csv(report) if config.format == "csv" else render_json(report)
    if config.out is None:
        sys.stdout.write(text)
        return
    write_atomic(config.out, text)
    if config.command == "spectrum" and config.format == "json":
        write_atomic(Path(config.out).with_suffix(".csv"), render_csv(report))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        report = build_report(config)
    except ConfigError as exc:
        print(f"geomq: error: {exc}", file=sys.stderr)
        return 2
    emit(config, report)
    return 0 if report["pass"] else 1
