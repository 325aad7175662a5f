"""
Command-line orchestration: manifest validation, experiment dispatch over
parameter grids, CSV/JSON persistence and baseline comparison.

Usage::

    kcsm gap --manifest m.json [--seed S] [--out DIR] [--strict] [--threads N]
    kcsm compare RESULT.csv BASELINE.csv [--tol 1e-10] [--override]

Exit codes: 0 success, 1 comparison failed, 2 invalid manifest,
3 eigensolver residual above tolerance, 4 non-ergodic instance under
``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import bootstrap, kmc, percolation, spectral
from .lattice import DensityParams, LatticeError, ModelSpec, Region, bc_from_json, model_from_json
from .rng import resolve_threads
from .stats import Curve, InsufficientData, fit_exponential_rate, wilson_intervals

SCHEMA_VERSION = 1
KINDS = ("gap", "bootstrap", "kmc", "persistence", "perc", "bound", "blockcheck")

EXIT_OK, EXIT_COMPARE, EXIT_INVALID, EXIT_NUMERIC, EXIT_NONERGODIC = 0, 1, 2, 3, 4

HEADERS = {
    "gap": ["model", "d", "sides", "bc", "q", "states", "components", "gap", "residual", "seed"],
    "bootstrap": bootstrap.SPANNING_HEADER,
    "kmc": ["t", "F", "ci_lo", "ci_hi"],
    "persistence": ["t", "F", "ci_lo", "ci_hi"],
    "perc": percolation.SURVIVAL_HEADER,
    "bound": ["model", "d", "q", "L", "lower", "upper", "limit_target"],
    "blockcheck": ["mu_c1", "formula_gap", "diag_gap", "abs_diff"],
}

TOP_KEYS = {"schema", "kind", "model", "grid", "seed", "output", "tolerances", "params"}
MODEL_KEYS = {"model", "d", "j", "offset_sets", "name", "bc"}
BC_KEYS = {"mode", "preset", "fill", "flipped", "width", "site"}
GRID_KEYS = {"q", "L", "p", "t_max", "n_samples", "mu_c1"}
TOLERANCE_KEYS = {"residual"}
PARAM_KEYS = {
    "gap": {"mode"},
    "bootstrap": set(),
    "kmc": {"tracked"},
    "persistence": {"origin", "value_window"},
    "perc": set(),
    "bound": {"model", "d", "constants", "log_base"},
    "blockcheck": {"n1", "n2"},
}
DEFAULT_TOLERANCES = {"residual": 1e-10}


class ManifestError(ValueError):
    pass


# --------------------------------------------------------------------------- #
# Manifest
# --------------------------------------------------------------------------- #

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def manifest_hash(doc: dict) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _check_keys(doc: dict, allowed: set, where: str):
    if not isinstance(doc, dict):
        raise ManifestError(f"{where} must be an object")
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ManifestError(f"unknown keys in {where}: {', '.join(extra)}")


def _numbers(values, name, lo, hi, integer=False, open_lo=False):
    out = []
    for v in _as_list(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not float(v).is_integer()):
            raise ManifestError(f"{name} must be {'an integer' if integer else 'a number'}, got {v!r}")
        if not (lo < v if open_lo else lo <= v) or not v <= hi or (isinstance(v, float) and math.isnan(v)):
            raise ManifestError(f"{name}={v} outside [{lo}, {hi}]")
        out.append(int(v) if integer else float(v))
    return out


@dataclass(frozen=True)
class Manifest:
    """Validated experiment description; ``doc`` is its canonical form."""

    doc: dict

    @property
    def kind(self) -> str:
        return self.doc["kind"]

    @property
    def seed(self) -> int:
        return self.doc["seed"]

    @property
    def grid(self) -> dict:
        return self.doc["grid"]

    @property
    def params(self) -> dict:
        return self.doc["params"]

    @property
    def model_doc(self) -> dict | None:
        return self.doc.get("model")

    @property
    def hash(self) -> str:
        return manifest_hash(self.doc)

    def dumps(self) -> str:
        return canonical_json(self.doc)

    def with_seed(self, seed: int) -> "Manifest":
        return parse_manifest({**self.doc, "seed": seed})


def parse_manifest(doc: dict) -> Manifest:
    """Validate ``doc`` and fill defaults; raises :class:`ManifestError`."""
    _check_keys(doc, TOP_KEYS, "manifest")
    if doc.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ManifestError(f"unsupported schema {doc.get('schema')!r}")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ManifestError(f"kind must be one of {', '.join(KINDS)}")
    seed = doc.get("seed", 0)
    _numbers(seed, "seed", 0, 2**64 - 1, integer=True)

    grid = dict(doc.get("grid", {}))
    _check_keys(grid, GRID_KEYS, "grid")
    clean = {}
    if "q" in grid:
        open_q = kind in ("gap", "bound")
        clean["q"] = _numbers(grid["q"], "q", 0.0, 1.0, open_lo=open_q)
        if open_q and any(q >= 1 for q in clean["q"]):
            raise ManifestError("q must lie in (0, 1) for this kind")
    if "p" in grid:
        clean["p"] = _numbers(grid["p"], "p", 0.0, 1.0)
    if "L" in grid:
        clean["L"] = _numbers(grid["L"], "L", 1, 10**6, integer=True)
    if "t_max" in grid:
        clean["t_max"] = _numbers(grid["t_max"], "t_max", 0.0, 1e12)[0]
    if "n_samples" in grid:
        clean["n_samples"] = _numbers(grid["n_samples"], "n_samples", 1, 10**9, integer=True)[0]
    if "mu_c1" in grid:
        clean["mu_c1"] = _numbers(grid["mu_c1"], "mu_c1", 0.0, 1.0, open_lo=True)

    required = {
        "gap": ["q", "L"],
        "bootstrap": ["q", "L", "n_samples"],
        "kmc": ["q", "L", "t_max", "n_samples"],
        "persistence": ["q", "L", "t_max", "n_samples"],
        "perc": ["p", "L", "n_samples"],
        "bound": ["q"],
        "blockcheck": ["mu_c1"],
    }[kind]
    missing = [k for k in required if k not in clean]
    if missing:
        raise ManifestError(f"grid for {kind} needs {', '.join(missing)}")

    model = doc.get("model")
    if kind in ("gap", "bootstrap", "kmc", "persistence"):
        if model is None:
            raise ManifestError(f"{kind} needs a model")
        _check_keys(model, MODEL_KEYS, "model")
        if "bc" in model:
            _check_keys(model["bc"], BC_KEYS, "model.bc")
        try:
            spec = model_from_json(model)
            for L in clean["L"]:
                region = Region.cube(L, spec.d)
                bc_from_json(model.get("bc"), region)
        except LatticeError as exc:
            raise ManifestError(str(exc)) from exc
        model = json.loads(canonical_json(model))
    elif model is not None:
        raise ManifestError(f"{kind} takes no model document")

    tol = dict(doc.get("tolerances", {}))
    _check_keys(tol, TOLERANCE_KEYS, "tolerances")
    tol = {**DEFAULT_TOLERANCES, **{k: _numbers(v, k, 0.0, 1.0)[0] for k, v in tol.items()}}

    params = dict(doc.get("params", {}))
    _check_keys(params, PARAM_KEYS[kind], "params")
    if kind == "bound":
        if "model" not in params:
            raise ManifestError("bound needs params.model")
    if kind == "gap" and params.get("mode", "auto") not in ("auto", "dense", "iterative"):
        raise ManifestError("params.mode must be auto, dense or iterative")

    out = {
        "schema": SCHEMA_VERSION,
        "kind": kind,
        "grid": clean,
        "seed": int(seed),
        "output": str(doc.get("output", ".")),
        "tolerances": tol,
        "params": json.loads(canonical_json(params)),
    }
    if model is not None:
        out["model"] = model
    return Manifest(out)


def load_manifest(path) -> Manifest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from exc
    return parse_manifest(doc)


# --------------------------------------------------------------------------- #
# Results
# --------------------------------------------------------------------------- #

@dataclass
class ResultRecord:
    manifest_hash: str
    version: str
    wall_time: float
    rows: list
    warnings: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    header: list = field(default_factory=list)
    exit_code: int = EXIT_OK


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).resolve().parent,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "0.1.0"


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_cell(v) for v in r])
    return buf.getvalue()


def _fan_out(fn, items, threads):
    """Evaluate ``fn`` over ``items`` with a worker pool; results keep item order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _system(m: Manifest, L: int):
    doc = m.model_doc
    model = model_from_json(doc)
    region = Region.cube(L, model.d)
    return model, region, bc_from_json(doc.get("bc"), region)


def _run_gap(m: Manifest, threads: int, record: ResultRecord):
    mode = m.params.get("mode", "auto")
    points = [(L, q) for L in m.grid["L"] for q in m.grid["q"]]

    def one(pt):
        L, q = pt
        model, region, bc = _system(m, L)
        gen = spectral.build_generator(model, region, bc, DensityParams(q))
        return region, bc, gen, spectral.exact_gap(gen, mode, m.doc["tolerances"]["residual"])

    for (L, q), (region, bc, gen, res) in zip(points, _fan_out(one, points, threads)):
        sides = "x".join(map(str, region.sides))
        record.rows.append([gen.model.name, region.d, sides, bc.describe(), q, gen.n_states, res.multiplicity, res.gap, res.residual, m.seed])
        if not res.ergodic:
            record.warnings.append(f"non-ergodic: L={L} q={q} has {res.multiplicity} components")
        if res.residual > m.doc["tolerances"]["residual"]:
            record.warnings.append(f"residual {res.residual:.3e} above tolerance at L={L} q={q}")
            record.exit_code = max(record.exit_code, EXIT_NUMERIC)


def _run_bootstrap(m: Manifest, threads: int, record: ResultRecord):
    model = model_from_json(m.model_doc)
    n = m.grid["n_samples"]
    points = [(L, q) for L in m.grid["L"] for q in m.grid["q"]]

    def one(pt):
        L, q = pt
        spanned = bootstrap.spanning_probability(model, L, q, n, m.seed, threads=1)
        surrounded = bootstrap.spanning_probability(model, L, q, n, m.seed, threads=1, exterior=0)
        return spanned, surrounded

    record.summary["surrounded"] = []
    for (L, q), (est, sur) in zip(points, _fan_out(one, points, threads)):
        record.rows.append(est.csv_row())
        record.summary["surrounded"].append({"L": L, "q": q, "k": sur.k, "estimate": sur.estimate, "ci": list(sur.ci)})


def _fit_summary(curve, value_window, record: ResultRecord, label: str) -> dict | None:
    try:
        fit = fit_exponential_rate(curve, value_window=value_window)
    except InsufficientData as exc:
        record.warnings.append(f"poor fit ({label}): {exc}")
        return None
    if fit.poor:
        record.warnings.append(f"poor fit ({label}): R^2 = {fit.r2:.3f}")
    return {**asdict(fit), "poor": fit.poor}


def _single(m: Manifest, key: str):
    vals = m.grid[key]
    if len(vals) != 1:
        raise ManifestError(f"{m.kind} takes a single {key}")
    return vals[0]


def _run_persistence(m: Manifest, threads: int, record: ResultRecord):
    L, q = _single(m, "L"), _single(m, "q")
    model, region, bc = _system(m, L)
    grid = kmc.geometric_grid(m.grid["t_max"])
    origin = m.params.get("origin")
    pc = kmc.persistence_curve(model, region, bc, DensityParams(q), grid, m.grid["n_samples"], m.seed, origin, threads)
    record.rows.extend(pc.rows())
    window = tuple(m.params.get("value_window", (0.02, 0.5)))
    record.summary["fit"] = _fit_summary(pc.curve(), window, record, "persistence")


def _run_kmc(m: Manifest, threads: int, record: ResultRecord):
    L, q = _single(m, "L"), _single(m, "q")
    model, region, bc = _system(m, L)
    n, t_max = m.grid["n_samples"], m.grid["t_max"]
    grid = kmc.geometric_grid(t_max)
    tracked = m.params.get("tracked")
    params = DensityParams(q)

    def one(i):
        return kmc.kmc_run(model, region, bc, params, t_max, m.seed, tracked, grid, index=i)

    runs = _fan_out(one, list(range(n)), threads)
    total = runs[0].n_tracked * n
    surv = np.sum([r.survival for r in runs], axis=0)
    lo, hi = wilson_intervals(surv, total)
    F = surv / total
    record.rows.extend([[float(t), float(f), float(a), float(b)] for t, f, a, b in zip(grid, F, lo, hi)])
    record.summary["events"] = int(sum(r.events for r in runs))
    record.summary["final_hashes"] = hashlib.sha256("".join(r.final_hash for r in runs).encode()).hexdigest()[:16]
    record.summary["fit"] = _fit_summary(Curve(grid, F, total), (0.02, 0.5), record, "kmc persistence")


def _run_perc(m: Manifest, threads: int, record: ResultRecord):
    n = m.grid["n_samples"]
    points = [(L, p) for L in m.grid["L"] for p in m.grid["p"]]

    def one(pt):
        L, p = pt
        return percolation.survival_probability(p, L, n, m.seed, threads=1)

    for (L, p), est in zip(points, _fan_out(one, points, threads)):
        record.rows.append(est.csv_row())
        if est.k:
            record.warnings.append(f"censored: {est.k} of {n} clusters reach depth {L} at p={p}")


def _run_bound(m: Manifest, threads: int, record: ResultRecord):
    tag = m.params["model"]
    constants = m.params.get("constants", {})
    base = float(m.params.get("log_base", math.e))
    d = int(m.params.get("d", 1))
    Ls = m.grid.get("L", [None])
    for L in Ls:
        for q in m.grid["q"]:
            try:
                b = spectral.bound_evaluate(tag, q, constants, d=d, L=L, log_base=base)
            except (KeyError, ValueError) as exc:
                raise ManifestError(str(exc)) from exc
            record.rows.append([tag, d, q, "" if L is None else L, _blank(b.lower), _blank(b.upper), _blank(b.limit_target)])


def _blank(v):
    return "" if v is None else v


def _run_blockcheck(m: Manifest, threads: int, record: ResultRecord):
    n1 = int(m.params.get("n1", 2))
    n2 = int(m.params.get("n2", 4))
    q = m.grid.get("q", [0.5])[0]
    for target in m.grid["mu_c1"]:
        spec = block_spec_for(target, n1, n2, q)
        res = spectral.block_gap_verify(spec)
        record.rows.append([res.mu_c1, res.formula, res.diagonalized, res.abs_diff])
        if abs(res.mu_c1 - target) > 1e-12:
            record.warnings.append(f"mu(c1) target {target} realised as {res.mu_c1}")


def block_spec_for(target: float, n1: int, n2: int, q: float) -> spectral.BlockChainSpec:
    """``c1`` = the ``k`` lowest-indexed second-block configurations, with
    ``k`` chosen so that ``mu(c1)`` is as close to ``target`` as possible."""
    w = spectral._product_weights(np.arange(2**n2, dtype=np.int64), n2, q)
    cum = np.cumsum(w)
    k = int(np.argmin(np.abs(cum - target))) + 1
    c1 = np.zeros(2**n2, dtype=bool)
    c1[:k] = True
    return spectral.BlockChainSpec(n1, n2, c1, q)


RUNNERS = {
    "gap": _run_gap,
    "bootstrap": _run_bootstrap,
    "kmc": _run_kmc,
    "persistence": _run_persistence,
    "perc": _run_perc,
    "bound": _run_bound,
    "blockcheck": _run_blockcheck,
}


def run_experiment(manifest: Manifest | str | Path, out_dir=None, threads: int | None = None, strict: bool = False) -> ResultRecord:
    """Run a manifest and write ``<kind>.csv`` and ``<kind>.json`` to ``out_dir``.

    Raises :class:`spectral.NonErgodic` under ``strict`` when a gap instance
    has several ergodic components.
    """
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    threads = resolve_threads(threads)
    start = time.perf_counter()
    record = ResultRecord(manifest.hash, version_string(), 0.0, [], header=HEADERS[manifest.kind])
    try:
        RUNNERS[manifest.kind](manifest, threads, record)
    except LatticeError as exc:
        raise ManifestError(str(exc)) from exc
    if strict and any(w.startswith("non-ergodic") for w in record.warnings):
        record.exit_code = EXIT_NONERGODIC
    record.wall_time = time.perf_counter() - start

    out = Path(out_dir if out_dir is not None else manifest.doc["output"])
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{manifest.kind}.csv").write_text(render_csv(record.header, record.rows), encoding="utf-8", newline="")
    summary = {
        "manifest": manifest.doc,
        "manifest_hash": record.manifest_hash,
        "version": record.version,
        "wall_time": record.wall_time,
        "threads": threads,
        "warnings": record.warnings,
        "summary": record.summary,
        "exit_code": record.exit_code,
    }
    (out / f"{manifest.kind}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return record


# --------------------------------------------------------------------------- #
# Baseline comparison
# --------------------------------------------------------------------------- #

MC_ESTIMATE_COLUMNS = {"estimate", "F"}
MC_DERIVED_COLUMNS = {"k", "survived", "ci_lo", "ci_hi", "r_mean", "l_mean"}
Z95 = 1.959963984540054


class SchemaMismatch(ValueError):
    pass


@dataclass
class CompareReport:
    passed: bool
    failures: list = field(default_factory=list)
    checked: int = 0

    def lines(self) -> list[str]:
        head = "PASS" if self.passed else "FAIL"
        return [f"{head}: {self.checked} rows compared"] + [f"  row {r} column {c}: {msg}" for r, c, msg in self.failures]


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path} is empty")
    return rows[0], rows[1:]


def _float(s):
    try:
        return float(s)
    except ValueError:
        return None


def _close(a: str, b: str, tol: float) -> bool:
    if a == b:
        return True
    x, y = _float(a), _float(b)
    if x is None or y is None:
        return False
    if math.isnan(x) and math.isnan(y):
        return True
    return math.isclose(x, y, rel_tol=tol, abs_tol=tol)


def _summary_hash(csv_path: Path):
    js = Path(csv_path).with_suffix(".json")
    if js.exists():
        try:
            return json.loads(js.read_text(encoding="utf-8")).get("manifest_hash")
        except json.JSONDecodeError:
            return None
    return None


def compare_baseline(result_path, baseline_path, tolerances: dict | None = None, override: bool = False) -> CompareReport:
    """Column-wise comparison of a result CSV against a baseline CSV.

    Deterministic columns must agree to ``tol`` (relative and absolute,
    default ``1e-10``; text exactly). Monte Carlo estimate columns pass when
    the estimates differ by at most ``3`` standard errors, read off the
    larger of the two Wilson intervals. Columns derived from the same
    samples (counts, interval ends, edge means) are not compared. When both
    files have JSON summaries their manifest hashes must match unless
    ``override`` is set.
    """
    tol = float((tolerances or {}).get("tol", 1e-10))
    n_sigma = float((tolerances or {}).get("n_sigma", 3.0))
    h1, r1 = _read_csv(result_path)
    h2, r2 = _read_csv(baseline_path)
    if h1 != h2:
        raise SchemaMismatch(f"headers differ: {h1} vs {h2}")
    report = CompareReport(True)
    ha, hb = _summary_hash(result_path), _summary_hash(baseline_path)
    if not override and ha and hb and ha != hb:
        report.passed = False
        report.failures.append(("-", "manifest_hash", f"{ha[:12]} != {hb[:12]}"))
    if len(r1) != len(r2):
        report.passed = False
        report.failures.append(("-", "-", f"row count {len(r1)} != {len(r2)}"))
        return report
    col = {name: i for i, name in enumerate(h1)}
    for k, (a, b) in enumerate(zip(r1, r2)):
        report.checked += 1
        for name, i in col.items():
            if name in MC_DERIVED_COLUMNS:
                continue
            if name in MC_ESTIMATE_COLUMNS and "ci_lo" in col:
                ea, eb = float(a[i]), float(b[i])
                sa = (float(a[col["ci_hi"]]) - float(a[col["ci_lo"]])) / (2 * Z95)
                sb = (float(b[col["ci_hi"]]) - float(b[col["ci_lo"]])) / (2 * Z95)
                sigma = max(sa, sb)
                if abs(ea - eb) > n_sigma * sigma + 1e-15:
                    report.passed = False
                    report.failures.append((k, name, f"{ea} vs {eb} differ by more than {n_sigma} sigma ({sigma:.3g})"))
                continue
            if not _close(a[i], b[i], tol):
                report.passed = False
                report.failures.append((k, name, f"{a[i]} vs {b[i]}"))
    return report


# --------------------------------------------------------------------------- #
# Entry point
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kcsm", description="Kinetically constrained spin model experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run a {kind} manifest")
        s.add_argument("--manifest", required=True, help="path to the JSON manifest")
        s.add_argument("--seed", type=int, default=None, help="override the manifest seed (unsigned 64-bit)")
        s.add_argument("--out", default=None, help="output directory (default: manifest 'output')")
        s.add_argument("--strict", action="store_true", help="exit 4 on non-ergodic instances")
        s.add_argument("--threads", type=int, default=None, help="worker threads (default: $KCSM_THREADS or 1)")
    c = sub.add_parser("compare", help="compare a result CSV with a baseline")
    c.add_argument("result")
    c.add_argument("baseline")
    c.add_argument("--tol", type=float, default=1e-10)
    c.add_argument("--sigma", type=float, default=3.0)
    c.add_argument("--override", action="store_true", help="ignore manifest hash mismatches")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "compare":
        try:
            report = compare_baseline(args.result, args.baseline, {"tol": args.tol, "n_sigma": args.sigma}, args.override)
        except (OSError, SchemaMismatch) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        print("\n".join(report.lines()))
        return EXIT_OK if report.passed else EXIT_COMPARE

    try:
        manifest = load_manifest(args.manifest)
        if manifest.kind != args.command:
            raise ManifestError(f"manifest kind {manifest.kind!r} does not match subcommand {args.command!r}")
        if args.seed is not None:
            manifest = manifest.with_seed(args.seed)
        if args.threads is not None and args.threads < 1:
            raise ManifestError("--threads must be positive")
        record = run_experiment(manifest, args.out, args.threads, args.strict)
    except ManifestError as exc:
        print(f"invalid manifest: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for w in record.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
