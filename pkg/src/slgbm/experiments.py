"""Configuration-driven experiment runner behind the command line.

An experiment spec is a small JSON document::

    {"schema_version": 1, "command": "moments", "n": 3, "p": 2, "tau": [1.0]}

validated against :data:`SPEC_SCHEMA`.  :func:`run_experiment` dispatches to
the library, and :class:`Report` carries CSV rows, plot series, a
human-readable summary and a provenance block.  CSV output depends only on
the spec and the code version; wall time appears in the JSON report only.
"""

import csv
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from importlib import metadata

import jsonschema
import numpy as np

from . import estimators, moments, noise, pde
from .integrators import TrajectoryConfig, simulate
from .rng import RngStream
from .stats import summarize

__all__ = [
    "SCHEMA_VERSION",
    "SPEC_SCHEMA",
    "CSV_COLUMNS",
    "SpecError",
    "ExperimentSpec",
    "Report",
    "load_spec",
    "parse_spec",
    "run_experiment",
    "format_number",
    "write_atomic",
]

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "moments", "qvcheck", "nontight", "pde", "report")
CSV_COLUMNS = ("command", "n", "p_or_partition", "tau", "scheme", "dt", "n_paths", "seed",
               "estimate", "stderr", "exact_value", "lower_bound", "upper_bound", "flag")
# Monte Carlo rows fail when the exact value is further than this many standard errors
MC_SIGMA = 5.0
NONTIGHT_C = 2.0
CHAIN_K = 10.0

SPEC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "command"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"enum": list(COMMANDS)},
        "n": {"type": "integer", "minimum": 2},
        "p": {"type": "integer", "minimum": 1, "maximum": moments.MAX_DEGREE},
        "tau": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "paths": {"type": "integer", "minimum": 1},
        "samples": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "scheme": {"enum": ["euler", "exponential"]},
        "workers": {"type": "integer", "minimum": 1},
        "input": {"type": "string"},
        "out": {"type": "string"},
        "format": {"enum": ["csv", "json", "both"]},
        "plots": {"type": "boolean"},
    },
}

DEFAULTS = {
    "n": 3, "p": 2, "tau": [1.0], "dt": 1e-3, "paths": 10000, "samples": 1000000, "seed": 0,
    "scheme": "exponential", "out": ".", "format": "both", "plots": False,
}


class SpecError(ValueError):
    """Schema violation; the message names the field and its line in the file."""


def _line_of(text, key):
    if text is None:
        return None
    needle = f'"{key}"'
    for k, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return k
    return None


def parse_spec(obj, text=None, source="<spec>"):
    """Validate a decoded spec object; ``text`` is used to report line numbers."""
    validator = jsonschema.Draft202012Validator(SPEC_SCHEMA)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        if e.path:
            name = str(e.path[0])
        elif e.validator == "required":
            name = e.message.split("'")[1]
        elif e.validator == "additionalProperties":
            name = e.message.split("'")[1]
        else:
            name = "<root>"
        line = _line_of(text, name) or 1
        raise SpecError(f"{source}:{line}: field '{name}': {e.message}")
    return ExperimentSpec(**{k: (tuple(v) if k == "tau" else v)
                             for k, v in obj.items() if k != "schema_version"})


def load_spec(path):
    with open(path) as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None
    return parse_spec(obj, text, path)


@dataclass(frozen=True)
class ExperimentSpec:
    command: str
    n: int = DEFAULTS["n"]
    p: int = DEFAULTS["p"]
    tau: tuple = tuple(DEFAULTS["tau"])
    dt: float = DEFAULTS["dt"]
    paths: int = DEFAULTS["paths"]
    samples: int = DEFAULTS["samples"]
    seed: int = DEFAULTS["seed"]
    scheme: str = DEFAULTS["scheme"]
    workers: int = None
    input: str = None
    out: str = DEFAULTS["out"]
    format: str = DEFAULTS["format"]
    plots: bool = DEFAULTS["plots"]

    def to_dict(self):
        d = {"schema_version": SCHEMA_VERSION}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            if v is not None:
                d[k] = list(v) if k == "tau" else v
        return d


def format_number(x):
    """17 significant digits for floats, plain digits for ints, empty for missing."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if np.isnan(x) else format(x, ".17g")
    return str(x)


def _label(lam):
    return "(" + ",".join(str(q) for q in lam) + ")"


@dataclass
class Report:
    command: str
    spec: dict
    rows: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add(self, **kw):
        row = {c: kw.get(c) for c in CSV_COLUMNS}
        row["command"] = self.command
        self.rows.append(row)
        return row

    @property
    def failed(self):
        return any(r["flag"] == "fail" for r in self.rows)

    def summary_lines(self):
        out = []
        for r in self.rows:
            parts = [f"{r['p_or_partition']}", f"tau={format_number(r['tau'])}"]
            parts.append(f"estimate={format_number(r['estimate'])}")
            if r["stderr"] is not None:
                parts.append(f"stderr={format_number(r['stderr'])}")
            if r["exact_value"] is not None:
                parts.append(f"exact={format_number(r['exact_value'])}")
            out.append(" ".join(parts) + f" [{r['flag']}]")
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([format_number(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json_obj(self):
        rows = [{c: _jsonable(r[c]) for c in CSV_COLUMNS} for r in self.rows]
        return {"schema_version": SCHEMA_VERSION, "command": self.command, "spec": self.spec,
                "rows": rows, "series": _jsonable(self.series), "summary": self.summary_lines(),
                "provenance": _jsonable(self.provenance)}

    def to_json(self):
        return dumps_report(self.to_json_obj())


def dumps_report(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return None if not np.isfinite(x) else float(x)
    return x


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and ``os.replace``."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def code_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _mc_flag(summary, exact):
    if summary.failed:
        return "fail"
    if exact is None:
        return "report"
    return "pass" if abs(summary.mean - exact) <= MC_SIGMA * summary.stderr else "fail"


def _bounds_for(n, p, lam, tau):
    if lam == (p,) or lam == (1,) * p:
        try:
            return moments.moment_bounds(n, p, tau)
        except moments.MomentRangeError:
            return None, None
    return None, None


def _exact_or_none(n, p, tau):
    try:
        return moments.exact_moments(n, p, tau)
    except moments.MomentRangeError:
        return None


def _run_moments(spec, rep):
    n, p = spec.n, spec.p
    for tau in spec.tau:
        table = moments.exact_moments(n, p, tau)
        for lam in moments.partitions(p):
            lo, hi = _bounds_for(n, p, lam, tau)
            v = table[lam]
            ok = lo is None or (lo * (1 - 1e-9) <= v <= hi * (1 + 1e-9))
            rep.add(n=n, p_or_partition=_label(lam), tau=float(tau), estimate=v, exact_value=v,
                    lower_bound=lo, upper_bound=hi, flag="pass" if ok else "fail")
    grid = np.linspace(0.0, max(spec.tau), 101)
    curves = []
    for q in range(1, p + 1):
        gen_max = moments.max_tau(n, q)
        g = grid[grid <= gen_max]
        tabs = [moments.exact_moments(n, q, t, cross_check=False) for t in g]
        bnds = [moments.moment_bounds(n, q, t) for t in g]
        curves.append({
            "p": q, "tau": g,
            "log_trace_power": [np.log(t[(q,)]) for t in tabs],
            "log_power_trace": [np.log(t[(1,) * q]) for t in tabs],
            "log_lower": [np.log(b[0]) for b in bnds],
            "log_upper": [np.log(b[1]) for b in bnds],
        })
    rep.series["moments"] = curves


def _histogram(x, mu_ref, var_ref, tau, bins=60):
    counts, edges = np.histogram(x, bins=bins)
    return {"tau": tau, "edges": edges, "counts": counts, "mu_ref": mu_ref, "var_ref": var_ref}


def _run_simulate(spec, rep):
    n, p = spec.n, spec.p
    taus = tuple(sorted(float(t) for t in spec.tau))
    cfg = TrajectoryConfig(n, max(taus), spec.dt, scheme=spec.scheme, p_max=p, checkpoints=taus,
                           master_seed=spec.seed)
    ens = simulate(cfg, spec.paths, spec.workers)
    table = estimators.moments_from_ensemble(ens)
    for (t, lam), s in table.items():
        q = sum(lam)
        ex = _exact_or_none(n, q, t)
        exact = ex[lam] if ex is not None else None
        lo, hi = _bounds_for(n, q, lam, t)
        rep.add(n=n, p_or_partition=_label(lam), tau=t, scheme=spec.scheme, dt=spec.dt,
                n_paths=spec.paths, seed=spec.seed, estimate=s.mean, stderr=s.stderr,
                exact_value=exact, lower_bound=lo, upper_bound=hi, flag=_mc_flag(s, exact))
    ln = estimators.lognormal_from_ensemble(ens)
    x = np.log(ens.trace_powers[~ens.diverged, -1, 0])
    rep.series["histogram"] = _histogram(x, ln.mu_ref, ln.var_ref, ln.tau)
    rep.provenance["n_diverged"] = ens.n_diverged


def _run_qvcheck(spec, rep):
    rng = RngStream(spec.seed)
    checks = noise.noise_law_checks(spec.n, spec.samples, rng)
    for c in checks:
        rep.add(n=spec.n, p_or_partition=c.name, tau=1.0, dt=1.0, n_paths=spec.samples, seed=spec.seed,
                estimate=c.estimate, stderr=c.stderr, exact_value=c.exact,
                flag="pass" if c.passed else "fail")


def _run_nontight(spec, rep):
    n = spec.n
    taus = tuple(sorted(float(t) for t in spec.tau))
    if taus[0] < 1:
        raise ValueError(f"tau_star must be >= 1, got {taus[0]}")
    cfg = TrajectoryConfig(n, max(taus), spec.dt, scheme=spec.scheme, p_max=1, checkpoints=taus,
                           master_seed=spec.seed)
    ens = simulate(cfg, spec.paths, spec.workers)
    common = dict(n=n, scheme=spec.scheme, dt=spec.dt, n_paths=spec.paths, seed=spec.seed)
    est, err = [], []
    for c, t in enumerate(taus):
        nt = estimators.nontightness_from_ensemble(ens, c)
        s = nt.summary
        upper = 0.5 + NONTIGHT_C / np.sqrt(t)
        ok = not s.failed and s.mean - 3 * s.stderr <= upper
        rep.add(p_or_partition="nontightness", tau=t, estimate=s.mean, stderr=s.stderr,
                exact_value=estimators.LogNormalReference(n, t).functional_ref, upper_bound=upper,
                flag="pass" if ok else "fail", **common)
        est.append(s.mean)
        err.append(s.stderr)
        ch = estimators.chain_from_ensemble(ens, c)
        rep.add(p_or_partition="chain_excess", tau=t, estimate=ch.excess, stderr=ch.lhs.stderr,
                exact_value=ch.bound, upper_bound=CHAIN_K * ch.bound + 3 * ch.lhs.stderr,
                flag="pass" if ch.required_constant <= CHAIN_K else "fail", **common)
        ln = estimators.lognormal_from_ensemble(ens, c)
        rep.add(p_or_partition="log_norm_mean", tau=t, estimate=ln.emp_mean, stderr=ln.mean_stderr,
                exact_value=ln.mu_ref, flag="report", **common)
        rep.add(p_or_partition="log_norm_var", tau=t, estimate=ln.emp_var, stderr=ln.var_stderr,
                exact_value=ln.var_ref, flag="report", **common)
    rep.series["nontight"] = {"tau_star": taus, "estimate": est, "stderr": err}
    x = np.log(ens.trace_powers[~ens.diverged, -1, 0])
    ln = estimators.lognormal_from_ensemble(ens)
    rep.series["histogram"] = _histogram(x, ln.mu_ref, ln.var_ref, ln.tau)
    rep.provenance["n_diverged"] = ens.n_diverged


def _run_pde(spec, rep):
    n = spec.n
    for t in spec.tau:
        t = float(t)
        term = pde.terminal_condition(pde.critical_sigma(n, t))
        z0 = pde.solve_backward(n, t, term, 0.0, 0.0)
        bound = float(pde.phi_bound(n, t, term.sigma_star, 0.0, 0.0))
        rep.add(n=n, p_or_partition="zeta_origin", tau=t, estimate=z0, exact_value=bound,
                upper_bound=0.5, flag="pass" if z0 <= 0.5 + 1e-9 else "fail")
        d1, d2 = pde.derivative_sup(n, t, term, 0.0)
        rep.add(n=n, p_or_partition="sup_d1", tau=t, estimate=d1, flag="report")
        rep.add(n=n, p_or_partition="sup_d2", tau=t, estimate=d2, flag="report")
        rep.add(n=n, p_or_partition="chain_integral", tau=t, estimate=pde.lemma7_bound(n, t, term),
                flag="report")


_DISPATCH = {"moments": _run_moments, "simulate": _run_simulate, "qvcheck": _run_qvcheck,
             "nontight": _run_nontight, "pde": _run_pde}


def run_experiment(spec):
    """Run ``spec`` and return its :class:`Report` (files are written by the caller)."""
    if spec.command == "report":
        raise ValueError("the report command re-renders an existing report; use slgbm.plots")
    t0 = time.perf_counter()
    rep = Report(spec.command, spec.to_dict())
    rep.provenance.update(seed=spec.seed, dt=spec.dt, n_paths=spec.paths,
                          code_version=code_version())
    _DISPATCH[spec.command](spec, rep)
    rep.provenance["wall_time_s"] = time.perf_counter() - t0
    return rep


def write_report(rep, out_dir, fmt="both"):
    files = []
    if fmt in ("csv", "both"):
        files.append(write_atomic(os.path.join(out_dir, f"{rep.command}.csv"), rep.to_csv()))
    if fmt in ("json", "both"):
        files.append(write_atomic(os.path.join(out_dir, f"{rep.command}.json"), rep.to_json()))
    return files
