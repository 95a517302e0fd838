"""Benchmark experiments: sweeps over the system dimensions, baseline
schemes, per-iteration timing, CSV output and aggregation.

Result CSVs are reproducible byte for byte: rows are derived purely
from (config, master seed), sorted canonically, and formatted with a
fixed float representation; the header records the package version,
the configuration hash, and the seed.  Timing output is inherently
machine-dependent and carries no such guarantee.
"""

from __future__ import annotations

import csv
import io
import os
import re
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .configio import RunConfig, config_hash
from .continual import PolicyParams, inner_loop, mhacl_run
from .em import (
    PhaseTensor,
    SystemConfig,
    build_correlation,
    build_geometry,
    build_propagation,
    sample_scenario,
)
from .linalg import SeededRng
from .manifold import (
    ProductManifoldPoint,
    QuantizationCodebook,
    power_project,
    quantize_phases,
    simhacl_optimize,
)
from .secrecy import PowerAmplitudes, evaluate, grad_power

EXPERIMENTS = ("layers", "atoms", "bits", "users", "power")

SCHEMES = ("simhacl", "mhacl", "power-only", "random-all")

_QUANT_SCHEME = re.compile(r"^(simhacl|mhacl)-b(\d+)$")

RESULT_COLUMNS = ("experiment", "sweep_param", "sweep_value", "scheme", "trial", "wssr", "iterations")
TIMING_COLUMNS = ("scheme", "layers", "atoms", "users", "rep", "sec_per_iter")
SUMMARY_COLUMNS = ("experiment", "sweep_param", "sweep_value", "scheme", "n", "wssr_mean", "wssr_ci95")


def parse_scheme(name: str):
    """Split a scheme name into (base, eval-time bits or None)."""
    if name in SCHEMES:
        return name, None
    m = _QUANT_SCHEME.match(name)
    if m:
        return m.group(1), int(m.group(2))
    raise ValueError(
        f"unknown scheme {name!r}; expected one of {SCHEMES} or e.g. mhacl-b2"
    )


@dataclass
class ResultRow:
    experiment: str
    sweep_param: str
    sweep_value: str
    scheme: str
    trial: int
    wssr: float
    iterations: int


@dataclass
class TimingRow:
    scheme: str
    layers: int
    atoms: int
    users: int
    rep: int
    sec_per_iter: float


def _sweep_values(experiment: str, base: SystemConfig):
    """Sweep points and the function that builds each point's config."""
    if experiment == "layers":
        values = list(range(2, 9))
        make = lambda m: replace(base, n_layers=m, nx=8, ny=8)
        param = "layers"
    elif experiment == "atoms":
        values = [4, 6, 8, 10]  # grid side, so 16..100 atoms
        make = lambda s: replace(base, nx=s, ny=s, n_layers=4)
        param = "atoms"
        return param, [(s * s, make(s)) for s in values]
    elif experiment == "users":
        values = list(range(2, 9))

        def make_users(k):
            return replace(base, n_users=k, n_antennas=k, weights=None, nx=8, ny=8, n_layers=4)

        make = make_users
        param = "users"
    elif experiment == "power":
        values = [20.0, 24.0, 28.0, 32.0, 36.0, 40.0]
        make = lambda dbm: replace(base, total_power_w=10.0 ** (dbm / 10.0) / 1000.0)
        param = "power_dbm"
    elif experiment == "bits":
        # handled separately: one optimization per trial, evaluated
        # under each codebook resolution
        return "bits", [(b, base) for b in (1, 2, 3, 4, "continuous")]
    else:
        raise ValueError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    return param, [(v, make(v)) for v in values]


def _build_instance(cfg: SystemConfig):
    geom = build_geometry(cfg)
    prop = build_propagation(geom)
    corr = build_correlation(geom)
    return geom, prop, corr


def random_all_point(cfg: SystemConfig, rng: SeededRng) -> ProductManifoldPoint:
    """Untrained baseline: uniform random phases, equal power split."""
    gen = rng.split("phases").generator
    phi = gen.uniform(0.0, 2.0 * np.pi, size=(cfg.n_layers, cfg.n_atoms))
    a = np.full(cfg.n_users, np.sqrt(cfg.total_power_w / cfg.n_users))
    return ProductManifoldPoint(PhaseTensor(phi), PowerAmplitudes(a))


def power_only_optimize(cfg, prop, chs, rng, iters: int = 300, lr: float = 0.05):
    """Projected power ascent under fixed random phases."""
    point = random_all_point(cfg, rng)
    best, best_wssr = point.copy(), -np.inf
    a = point.amps.a
    for _ in range(iters):
        amps = PowerAmplitudes(a)
        report = evaluate(cfg, point.phases, prop, chs, amps)
        if report.wssr > best_wssr:
            best_wssr = report.wssr
            best = ProductManifoldPoint(point.phases, amps)
        a = power_project(a + lr * grad_power(report, amps), cfg.total_power_w)
    return best, best_wssr, iters


def run_scheme(name: str, cfg: SystemConfig, prop, chs, rng: SeededRng, rc: RunConfig):
    """One scheme on one scenario: returns (point, wssr, iterations).

    The returned wssr reflects eval-time phase rounding when the scheme
    carries a -b suffix or the system config fixes a resolution.
    """
    base, bits = parse_scheme(name)
    if bits is None:
        bits = cfg.quant_bits

    if base == "simhacl":
        opts = replace(rc.simhacl, quant=_book(bits))
        res = simhacl_optimize(cfg, prop, chs, rng.split("simhacl"), opts)
        return res.point, res.report.wssr, res.iterations
    if base == "mhacl":
        results, _ = mhacl_run(cfg, prop, [chs], rng.split("mhacl"), rc.meta)
        point, wssr = results[0].point, results[0].wssr
        if bits is not None:
            point = ProductManifoldPoint(
                quantize_phases(point.phases, _book(bits)), point.amps
            )
            wssr = evaluate(cfg, point.phases, prop, chs, point.amps).wssr
        return point, wssr, len(results[0].trace)
    if base == "power-only":
        point, wssr, iters = power_only_optimize(cfg, prop, chs, rng.split("power-only"))
        return _maybe_quantized(cfg, prop, chs, point, wssr, bits) + (iters,)
    if base == "random-all":
        point = random_all_point(cfg, rng.split("random-all"))
        wssr = evaluate(cfg, point.phases, prop, chs, point.amps).wssr
        return _maybe_quantized(cfg, prop, chs, point, wssr, bits) + (0,)
    raise ValueError(f"unhandled scheme {name!r}")


def _book(bits):
    return None if bits is None else QuantizationCodebook(bits=bits)


def _maybe_quantized(cfg, prop, chs, point, wssr, bits):
    if bits is None:
        return point, wssr
    q = ProductManifoldPoint(quantize_phases(point.phases, _book(bits)), point.amps)
    return q, evaluate(cfg, q.phases, prop, chs, q.amps).wssr


def _trial_rows(args):
    """All rows of one (sweep value, trial) cell; top level for pickling."""
    experiment, param, value, cfg, rc, trial = args
    geom, prop, corr = _build_instance(cfg)
    trial_rng = SeededRng(rc.experiment.seed).split(experiment, str(value), "trial", trial)
    chs = sample_scenario(cfg, geom, corr, trial_rng.split("channel"))
    rows = []
    for scheme in rc.experiment.schemes:
        # a -bN variant shares the base scheme's random stream, so the
        # codebook rounding is the only difference between their rows
        base, _ = parse_scheme(scheme)
        point, wssr, iters = run_scheme(scheme, cfg, prop, chs, trial_rng.split(base), rc)
        rows.append(
            ResultRow(experiment, param, str(value), scheme, trial, wssr, iters)
        )
    return rows


def _bits_trial_rows(args):
    """Bits sweep shares one optimization per trial across resolutions."""
    experiment, cfg, rc, trial = args
    geom, prop, corr = _build_instance(cfg)
    trial_rng = SeededRng(rc.experiment.seed).split(experiment, "trial", trial)
    chs = sample_scenario(cfg, geom, corr, trial_rng.split("channel"))
    rows = []
    for scheme in rc.experiment.schemes:
        base, fixed_bits = parse_scheme(scheme)
        if fixed_bits is not None:
            raise ValueError("bits sweep already sweeps resolution; use plain scheme names")
        point, wssr, iters = run_scheme(base, cfg, prop, chs, trial_rng.split(scheme), rc)
        for value in (1, 2, 3, 4, "continuous"):
            if value == "continuous":
                v_wssr = wssr
            else:
                _, v_wssr = _maybe_quantized(cfg, prop, chs, point, wssr, value)
            rows.append(
                ResultRow(experiment, "bits", str(value), scheme, trial, v_wssr, iters)
            )
    return rows


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("SIMSEC_WORKERS", "1")))
    except ValueError:
        return 1


def _map_jobs(fn, jobs):
    workers = n_workers()
    if workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    import multiprocessing

    with multiprocessing.Pool(workers) as pool:
        return pool.map(fn, jobs)


def run_experiment(experiment: str, rc: RunConfig) -> list:
    """All result rows of one experiment, canonically sorted."""
    rows: list = []
    if experiment == "bits":
        jobs = [(experiment, rc.system, rc, t) for t in range(rc.experiment.trials)]
        for chunk in _map_jobs(_bits_trial_rows, jobs):
            rows.extend(chunk)
    else:
        param, points = _sweep_values(experiment, rc.system)
        jobs = [
            (experiment, param, value, cfg, rc, t)
            for value, cfg in points
            for t in range(rc.experiment.trials)
        ]
        for chunk in _map_jobs(_trial_rows, jobs):
            rows.extend(chunk)
    rows.sort(key=_row_key)
    return rows


def _value_key(text: str):
    try:
        return (0, float(text), "")
    except ValueError:
        return (1, 0.0, text)


def _row_key(row: ResultRow):
    return (_value_key(row.sweep_value), row.scheme, row.trial)


def run_timing(
    rc: RunConfig,
    layer_counts=(2, 4, 6, 8),
    reps: int = 5,
    iters: int = 30,
    schemes=("simhacl", "mhacl"),
) -> list:
    """Median-friendly per-inner-iteration wall times.

    Both schemes run the same inner loop; the continual variant carries
    a non-uniform learned filter so its spectral transform is exercised.
    """
    rows = []
    for m in layer_counts:
        cfg = replace(rc.system, n_layers=m, nx=8, ny=8)
        geom, prop, corr = _build_instance(cfg)
        rng = SeededRng(rc.experiment.seed).split("timing", m)
        chs = sample_scenario(cfg, geom, corr, rng.split("channel"))
        layout = (cfg.n_layers, cfg.n_atoms, cfg.n_users)
        gen = rng.split("params").generator
        params_by_scheme = {
            "simhacl": PolicyParams.identity(*layout, rc.simhacl.power_rate),
            "mhacl": PolicyParams(
                gain_phi=1.0 + 0.1 * gen.standard_normal((cfg.n_layers, cfg.n_atoms)),
                bias_phi=0.01 * gen.standard_normal((cfg.n_layers, cfg.n_atoms)),
                gain_amp=np.full(cfg.n_users, rc.meta.lr_power),
                bias_amp=np.zeros(cfg.n_users),
            ),
        }
        points = {}
        scales = {}
        for scheme in schemes:
            phi0 = rng.split("phi", scheme).generator.uniform(
                0, 2 * np.pi, (cfg.n_layers, cfg.n_atoms)
            )
            points[scheme] = ProductManifoldPoint(
                PhaseTensor(phi0),
                PowerAmplitudes(np.full(cfg.n_users, np.sqrt(cfg.total_power_w / cfg.n_users))),
            )
            scales[scheme] = rc.simhacl.phase_scale if scheme == "simhacl" else rc.meta.lr_phase
            # warm-up outside the clock
            inner_loop(cfg, prop, chs, points[scheme].copy(), params_by_scheme[scheme],
                       scales[scheme], 2)
        # interleave schemes so load drift hits both evenly
        for rep in range(reps):
            for scheme in schemes:
                start = time.perf_counter()
                inner_loop(cfg, prop, chs, points[scheme].copy(), params_by_scheme[scheme],
                           scales[scheme], iters)
                elapsed = time.perf_counter() - start
                rows.append(
                    TimingRow(scheme, m, cfg.n_atoms, cfg.n_users, rep, elapsed / iters)
                )
    return rows


def summarize(rows: list) -> list:
    """Mean and half-width of the 95% CI per (sweep point, scheme)."""
    groups: dict = {}
    for row in rows:
        key = (row.experiment, row.sweep_param, row.sweep_value, row.scheme)
        groups.setdefault(key, []).append(row.wssr)
    out = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], _value_key(k[2]), k[3])):
        vals = np.asarray(groups[key])
        n = vals.size
        ci = 1.96 * vals.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
        out.append((*key, n, float(vals.mean()), float(ci)))
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _header_lines(rc: RunConfig) -> list:
    return [
        f"# simsec-bench v{__version__}",
        f"# config_hash: {config_hash(rc)}",
        f"# master_seed: {rc.experiment.seed}",
    ]


def _write_csv(path, header_lines, columns, tuples):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for tup in tuples:
        writer.writerow([_fmt(v) for v in tup])
    data = buf.getvalue()
    if path is None:
        return data
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(data)
    return data


def write_results(path, rows: list, rc: RunConfig) -> str:
    tuples = [
        (r.experiment, r.sweep_param, r.sweep_value, r.scheme, r.trial, r.wssr, r.iterations)
        for r in rows
    ]
    return _write_csv(path, _header_lines(rc), RESULT_COLUMNS, tuples)


def write_timing(path, rows: list, rc: RunConfig) -> str:
    tuples = [
        (r.scheme, r.layers, r.atoms, r.users, r.rep, r.sec_per_iter) for r in rows
    ]
    return _write_csv(path, _header_lines(rc), TIMING_COLUMNS, tuples)


def write_summary(path, summary_tuples: list, rc: RunConfig) -> str:
    return _write_csv(path, _header_lines(rc), SUMMARY_COLUMNS, summary_tuples)


def read_csv(path):
    """Returns (header_comment_lines, column_names, row_dicts)."""
    header = []
    with open(path, newline="") as fh:
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            header.append(line.rstrip("\n"))
            pos = fh.tell()
            line = fh.readline()
        fh.seek(pos)
        reader = csv.DictReader(fh)
        rows = list(reader)
        columns = tuple(reader.fieldnames or ())
    return header, columns, rows


def read_results(path) -> list:
    _, columns, dicts = read_csv(path)
    if columns != RESULT_COLUMNS:
        raise ValueError(f"unexpected result columns {columns}")
    return [
        ResultRow(
            d["experiment"], d["sweep_param"], d["sweep_value"], d["scheme"],
            int(d["trial"]), float(d["wssr"]), int(d["iterations"]),
        )
        for d in dicts
    ]


def validate_output(path) -> list:
    """Schema check for any CSV this package writes; returns problems."""
    problems = []
    try:
        header, columns, rows = read_csv(path)
    except OSError as exc:
        return [f"cannot read {path}: {exc}"]
    except csv.Error as exc:
        return [f"malformed csv: {exc}"]

    if len(header) < 3 or not header[0].startswith("# simsec-bench"):
        problems.append("missing metadata header comments")
    else:
        if not any(h.startswith("# config_hash:") for h in header):
            problems.append("missing config_hash header")
        if not any(h.startswith("# master_seed:") for h in header):
            problems.append("missing master_seed header")

    known = {RESULT_COLUMNS: "results", TIMING_COLUMNS: "timing", SUMMARY_COLUMNS: "summary"}
    kind = known.get(columns)
    if kind is None:
        problems.append(f"unrecognized column set {columns}")
        return problems
    if not rows:
        problems.append("no data rows")
    numeric = {
        "results": ("trial", "wssr", "iterations"),
        "timing": ("layers", "atoms", "users", "rep", "sec_per_iter"),
        "summary": ("n", "wssr_mean", "wssr_ci95"),
    }[kind]
    for i, row in enumerate(rows):
        for col in numeric:
            try:
                float(row[col])
            except (ValueError, TypeError):
                problems.append(f"row {i}: non-numeric {col} = {row.get(col)!r}")
                break
    return problems
