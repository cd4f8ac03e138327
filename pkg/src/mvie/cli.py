"""Batch front end: ``mvie --config run.yaml --out results/``.

Exit codes: 0 success, 1 validation bound exceeded, 2 configuration error,
3 regime violation, 4 solver failure, 5 baseline mismatch.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, RegimeViolation, SolverError
from .farfield import FarField, far_field, fibonacci_sphere
from .grid import ProbeSpec, ShapeSpec, rasterize
from .media import EPS0_SI, MU0_SI, MediumSpec, check_regime

log = logging.getLogger("mvie")

EXPERIMENTS = ("check-regime", "solve", "farfield", "mie-validate", "probe-blowup", "discriminate")
EXIT_OK, EXIT_BOUND, EXIT_CONFIG, EXIT_REGIME, EXIT_SOLVER, EXIT_BASELINE = 0, 1, 2, 3, 4, 5

SCHEMA = {
    "medium": {"units", "eps", "mu", "eps_r", "mu_r", "eps0", "mu0", "V", "omega", "cpw"},
    "shape": {"kind", "center", "size"},
    "grid": {"h", "n", "margin"},
    "solver": {"method", "tol", "maxit", "J", "restart", "derivatives"},
    "experiment": {"kind", "incident", "directions", "bound", "ray", "polarization",
                   "shape2", "medium2", "incident_directions", "threshold", "require_regime"},
    "output": {"directory", "formats", "baseline_rtol"},
}
DEFAULTS = {
    "medium": {"units": "normalized", "V": [0.0, 0.0, 0.0], "omega": 1.0, "cpw": 1.0},
    "shape": {"kind": "sphere", "center": [0.0, 0.0, 0.0], "size": [1.0]},
    "grid": {"margin": 1},
    "solver": {"method": "krylov", "tol": 1e-8, "maxit": 500, "J": None, "restart": 30,
               "derivatives": "kernel"},
    "output": {"formats": ["csv", "json"], "baseline_rtol": 1e-12},
}


# configuration ---------------------------------------------------------------

def _check_keys(section, block, allowed):
    if not isinstance(block, dict):
        raise ConfigError(section, "must be a mapping")
    for k in block:
        if k not in allowed:
            raise ConfigError(f"{section}.{k}", "unknown key")


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from None
    return resolve_config(raw)


def resolve_config(raw):
    """Validate a raw mapping and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")
    for k in raw:
        if k not in SCHEMA:
            raise ConfigError(k, "unknown section")
    if "experiment" not in raw:
        raise ConfigError("experiment", "missing section")
    cfg = {}
    for sec, allowed in SCHEMA.items():
        block = raw.get(sec, {})
        _check_keys(sec, block, allowed)
        merged = dict(DEFAULTS.get(sec, {}))
        merged.update(block)
        cfg[sec] = merged
    kind = cfg["experiment"].get("kind")
    if kind not in EXPERIMENTS:
        raise ConfigError("experiment.kind", f"must be one of {', '.join(EXPERIMENTS)}")
    if cfg["solver"]["method"] not in ("born", "krylov"):
        raise ConfigError("solver.method", "must be 'born' or 'krylov'")
    if "h" not in cfg["grid"] and "n" not in cfg["grid"] and kind != "check-regime":
        raise ConfigError("grid", "give either h or n")
    build_medium(cfg["medium"], "medium")
    if kind != "check-regime":
        build_shape(cfg["shape"], "shape")
    return cfg


def build_medium(block, section="medium"):
    units = block.get("units", "normalized")
    if units not in ("normalized", "si"):
        raise ConfigError(f"{section}.units", "must be 'normalized' or 'si'")
    eps0 = float(block.get("eps0", 1.0 if units == "normalized" else EPS0_SI))
    mu0 = float(block.get("mu0", 1.0 if units == "normalized" else MU0_SI))
    if units == "normalized" and (eps0 != 1.0 or mu0 != 1.0):
        raise ConfigError(f"{section}.units", "normalized units require eps0 = mu0 = 1")
    if "eps" in block and "eps_r" in block:
        raise ConfigError(f"{section}.eps", "give eps or eps_r, not both")
    if "mu" in block and "mu_r" in block:
        raise ConfigError(f"{section}.mu", "give mu or mu_r, not both")
    eps = float(block["eps"]) if "eps" in block else float(block.get("eps_r", 1.0)) * eps0
    mu = float(block["mu"]) if "mu" in block else float(block.get("mu_r", 1.0)) * mu0
    V = block.get("V", [0.0, 0.0, 0.0])
    if np.shape(V) != (3,):
        raise ConfigError(f"{section}.V", "must be a 3-vector")
    try:
        return MediumSpec(eps0, mu0, eps, mu, tuple(V), float(block.get("omega", 1.0)), units)
    except ValueError as exc:
        raise ConfigError(section, str(exc)) from None


def build_shape(block, section="shape"):
    try:
        return ShapeSpec(block.get("kind", "sphere"), block.get("center", (0.0, 0.0, 0.0)),
                         tuple(np.atleast_1d(block.get("size", [1.0]))))
    except (ValueError, TypeError) as exc:
        raise ConfigError(section, str(exc)) from None


def grid_spacing(cfg, shape):
    g = cfg["grid"]
    if "h" in g:
        return float(g["h"])
    lo, hi = shape.bounds()
    return float(np.max(hi - lo) / (int(g["n"]) - 2 * int(g["margin"])))


# experiments -----------------------------------------------------------------

class Run:
    def __init__(self, cfg, out, seed=0, threads=1):
        self.cfg, self.out, self.seed, self.threads = cfg, out, seed, threads
        self.artifacts = []
        self.summary = []
        self.records = {}
        os.makedirs(out, exist_ok=True)

    def write(self, name, text):
        path = os.path.join(self.out, name)
        with open(path, "w") as fh:
            fh.write(text)
        self.artifacts.append(name)
        return path

    def medium(self):
        return build_medium(self.cfg["medium"])

    def operator(self, shape, m):
        from .greens import KernelTable
        from .scatter import LSOperator
        h = grid_spacing(self.cfg, shape)
        dom = rasterize(shape, h, int(self.cfg["grid"]["margin"]),
                        dims=self.cfg["grid"].get("n"))
        table = KernelTable(m.k0, dom.h, dom.dims, workers=self.threads)
        s = self.cfg["solver"]
        return LSOperator(m, dom, table, J=s["J"], derivatives=s["derivatives"],
                          workers=self.threads)

    def solve(self, op, inc_spec):
        from .scatter import solve_born, solve_krylov
        s = self.cfg["solver"]
        inc = inc_spec.on(op.domain, op.medium)
        require = bool(self.cfg["experiment"].get("require_regime", False))
        if s["method"] == "born":
            rep = solve_born(op, inc, s["tol"], s["maxit"], require_regime=require,
                             cpw=self.cfg["medium"]["cpw"], seed=self.seed)
        else:
            rep = solve_krylov(op, inc, s["tol"], s["maxit"], s["restart"])
        self.records.setdefault("solves", []).append(rep.to_record())
        return rep

    def incident(self):
        from .scatter import IncidentSpec
        block = self.cfg["experiment"].get("incident", {}) or {}
        try:
            return IncidentSpec(block.get("kind", "plane"), tuple(block.get("d", (0.0, 0.0, 1.0))),
                                tuple(block.get("p", (1.0, 0.0, 0.0))),
                                tuple(block["z"]) if "z" in block else None)
        except ValueError as exc:
            raise ConfigError("experiment.incident", str(exc)) from None

    def directions(self):
        n = int(self.cfg["experiment"].get("directions", 196))
        return fibonacci_sphere(n)

    def emit_farfield(self, ff: FarField, stem="farfield"):
        fmts = self.cfg["output"]["formats"]
        if "csv" in fmts:
            self.write(f"{stem}.csv", ff.to_csv())
        if "json" in fmts:
            self.write(f"{stem}.json", ff.to_json())

    # one method per experiment kind
    def check_regime(self):
        m = self.medium()
        rep = check_regime(m, self.cfg["medium"]["cpw"])
        self.write("regime.json", json.dumps(rep.to_record(), indent=1))
        self.summary.append(f"regime: lhs1={rep.lhs1:.6g} pass1={rep.pass1} "
                            f"lhs2={rep.lhs2:.6g} pass2={rep.pass2}")
        if rep.cpw_is_default:
            self.summary.append("note: cpw is the unvalidated default 1")
        if self.cfg["experiment"].get("require_regime") and not rep.passed:
            raise RegimeViolation("medium fails the admissibility check")
        return EXIT_OK

    def _forward(self):
        m = self.medium()
        if self.cfg["experiment"].get("require_regime"):
            if not check_regime(m, self.cfg["medium"]["cpw"]).passed:
                raise RegimeViolation("medium fails the admissibility check")
        op = self.operator(build_shape(self.cfg["shape"]), m)
        rep = self.solve(op, self.incident())
        self.summary.append(f"{rep.method}: {rep.iterations} iterations, rho={rep.rho:.4g}, "
                            f"final residual {rep.residuals[-1]:.3g}")
        return op, rep

    def solve_exp(self):
        op, rep = self._forward()
        self.write("solve.json", json.dumps(rep.to_record(), indent=1))
        return EXIT_OK

    def farfield(self):
        op, rep = self._forward()
        self.emit_farfield(far_field(op, rep.total, self.directions()))
        return EXIT_OK

    def mie_validate(self):
        from .farfield import relative_l2_error
        from .oracle import mie_far_field
        m = self.medium()
        shape = build_shape(self.cfg["shape"])
        if shape.kind != "sphere" or m.speed != 0.0:
            raise ConfigError("shape", "mie-validate needs a sphere at rest")
        op = self.operator(shape, m)
        inc = self.incident()
        rep = self.solve(op, inc)
        dirs = self.directions()
        ff = far_field(op, rep.total, dirs)
        ref = mie_far_field(shape.size[0], m, inc.d, inc.p, dirs)
        c = np.asarray(shape.center)
        d = np.asarray(inc.d, dtype=float)
        shift = np.exp(1j * m.k0 * (d @ c - dirs @ c))[:, None]
        ref = FarField(dirs, ref.E_inf * shift, ref.H_inf * shift, ref.k0, ref.omega)
        err = np.linalg.norm(ff.E_inf - ref.E_inf, axis=1) / np.abs(ref.E_inf).max()
        l2 = relative_l2_error(ff, ref)
        lines = ["# mvie-mie-diff-csv v1", "theta_x,theta_y,theta_z,rel_error"]
        lines += [",".join(repr(float(v)) for v in (*t, e)) for t, e in zip(dirs, err)]
        self.write("mie_diff.csv", "\n".join(lines) + "\n")
        self.emit_farfield(ff)
        self.emit_farfield(ref, "mie_reference")
        bound = float(self.cfg["experiment"].get("bound", 0.03))
        self.records["mie"] = {"l2_error": l2, "max_rel_error": float(err.max()), "bound": bound}
        self.summary.append(f"mie: relative L2 error {l2:.4g}, max pointwise {err.max():.4g}, "
                            f"bound {bound:g}")
        return EXIT_OK if err.max() < bound else EXIT_BOUND

    def probe_blowup(self):
        from .inverse import probe_blowup
        e = self.cfg["experiment"]
        m = self.medium()
        shape = build_shape(self.cfg["shape"])
        ray = e.get("ray", {}) or {}
        try:
            spec = ProbeSpec("ray", d0=float(ray.get("d0", 0.5)), levels=int(ray.get("levels", 3)),
                             anchor=tuple(ray.get("anchor", (0.0, 0.0, 1.0))),
                             direction=tuple(ray.get("direction", (0.0, 0.0, 1.0))))
        except (TypeError, ValueError) as exc:
            raise ConfigError("experiment.ray", str(exc)) from None
        s = self.cfg["solver"]
        res = probe_blowup(shape, m, spec, tuple(e.get("polarization", (1.0, 0.0, 0.0))),
                           h=grid_spacing(self.cfg, shape), method=s["method"], tol=s["tol"])
        self.write("probe.json", res.to_json())
        self.summary.append(f"probe: exponent {res.exponent:.4f} +- {res.exponent_stderr:.3f}, "
                            f"image model {res.image_exponent:.4f}, monotone={res.monotone}")
        return EXIT_OK

    def discriminate(self):
        from .inverse import discriminate
        e = self.cfg["experiment"]
        m1 = self.medium()
        m2 = build_medium(e.get("medium2", self.cfg["medium"]), "experiment.medium2")
        s1 = build_shape(self.cfg["shape"])
        s2 = build_shape(e.get("shape2", self.cfg["shape"]), "experiment.shape2")
        s = self.cfg["solver"]
        rep = discriminate(s1, s2, m1, m2, e.get("incident_directions"),
                           h=grid_spacing(self.cfg, s1), threshold=e.get("threshold"),
                           dirs=self.directions(), method=s["method"], tol=s["tol"],
                           require_regime=e.get("require_regime", True),
                           cpw=self.cfg["medium"]["cpw"])
        self.write("discrimination.json", rep.to_json())
        verdict = "different" if rep.different else "same"
        self.summary.append(f"discriminate: delta {rep.delta:.4g}, threshold "
                            f"{rep.threshold:.4g} -> {verdict}")
        return EXIT_OK

    def execute(self):
        kind = self.cfg["experiment"]["kind"]
        method = {"check-regime": self.check_regime, "solve": self.solve_exp,
                  "farfield": self.farfield, "mie-validate": self.mie_validate,
                  "probe-blowup": self.probe_blowup, "discriminate": self.discriminate}[kind]
        return method()


# baselines -------------------------------------------------------------------

def _numeric_payload(path):
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".csv"):
        rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")][1:]
        return [float(v) for ln in rows for v in ln.split(",")]
    doc = json.loads(text)
    out = []

    def walk(x):
        if isinstance(x, bool):
            return
        if isinstance(x, (int, float)):
            out.append(float(x))
        elif isinstance(x, list):
            for v in x:
                walk(v)
        elif isinstance(x, dict):
            for k in sorted(x):
                if k not in ("wall_time", "runs", "solves"):
                    walk(x[k])

    walk(doc)
    return out


def emit_baseline(out, artifacts, rtol=1e-12):
    """Content-hashed snapshot of the numeric artifacts of a run."""
    files = {}
    for name in sorted(artifacts):
        path = os.path.join(out, name)
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        files[name] = {"sha256": digest, "values": _numeric_payload(path)}
    return {"schema": "mvie-baseline v1", "rtol": rtol, "files": files}


def compare_baseline(current, reference):
    """Return a list of human-readable mismatches (empty when the runs agree)."""
    problems = []
    rtol = float(reference.get("rtol", 1e-12))
    for name, ref in reference["files"].items():
        cur = current["files"].get(name)
        if cur is None:
            problems.append(f"{name}: missing from this run")
            continue
        if cur["sha256"] == ref["sha256"]:
            continue
        a, b = np.array(cur["values"]), np.array(ref["values"])
        if a.shape != b.shape:
            problems.append(f"{name}: {a.size} values vs {b.size} in baseline")
            continue
        scale = max(np.abs(b).max(initial=0.0), 1e-300)
        dev = float(np.abs(a - b).max(initial=0.0) / scale)
        if dev > rtol:
            problems.append(f"{name}: max relative deviation {dev:.3g} > {rtol:g}")
    return problems


# entry point -----------------------------------------------------------------

def _versions():
    import scipy
    return {"mvie": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def run(config_path, out=None, seed=0, threads=1, baseline=None):
    """Execute one configured experiment; returns the exit status."""
    t0 = time.perf_counter()
    manifest = {"config_path": config_path, "seed": seed, "threads": threads,
                "versions": _versions()}
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = out or cfg["output"].get("directory") or "mvie-out"
    r = Run(cfg, out, seed, threads)
    manifest["config"] = cfg
    status = EXIT_OK
    try:
        status = r.execute()
    except ConfigError as exc:
        manifest["error"] = {"type": type(exc).__name__, "key": exc.key, "message": str(exc)}
        status = EXIT_CONFIG
    except RegimeViolation as exc:
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = EXIT_REGIME
    except SolverError as exc:
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        if exc.report is not None:
            manifest["error"]["report"] = exc.report.to_record()
        status = EXIT_SOLVER
    manifest["records"] = r.records
    manifest["artifacts"] = list(r.artifacts)
    if status in (EXIT_OK, EXIT_BOUND) and baseline:
        snap = emit_baseline(out, r.artifacts, float(cfg["output"]["baseline_rtol"]))
        if os.path.exists(baseline):
            with open(baseline) as fh:
                problems = compare_baseline(snap, json.load(fh))
            manifest["baseline"] = {"path": baseline, "problems": problems}
            if problems:
                for p in problems:
                    print(f"baseline mismatch: {p}", file=sys.stderr)
                status = EXIT_BASELINE
            r.summary.append(f"baseline: {'FAILED' if problems else 'matched'} ({baseline})")
        else:
            with open(baseline, "w") as fh:
                json.dump(snap, fh)
            manifest["baseline"] = {"path": baseline, "written": True}
            r.summary.append(f"baseline written to {baseline}")
    manifest["exit_status"] = status
    manifest["wall_time"] = time.perf_counter() - t0
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, default=str)
    if "error" in manifest:
        r.summary.append(f"error: {manifest['error']['type']}: {manifest['error']['message']}")
    r.summary.append(f"exit status {status}")
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write("\n".join(r.summary) + "\n")
    print("\n".join(r.summary))
    return status


def main(argv=None):
    ap = argparse.ArgumentParser(prog="mvie", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomised estimates")
    ap.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    ap.add_argument("--baseline", help="baseline file: written if absent, compared otherwise")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return run(args.config, args.out, args.seed, args.threads, args.baseline)


if __name__ == "__main__":
    sys.exit(main())
