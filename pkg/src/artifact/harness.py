"""Experiment grids: run replications, aggregate gaps, write the output files."""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import objectives as obj_mod
from .objectives import EnvelopeParams, InstanceFamily, Objective
from .optimizers import OptimizerSpec, run_algorithm
from .simulation import NoiseModel, RngStream, SimulationOracle, hash_seed

COLUMNS = ["objective", "optimizer", "d", "sigma2", "n", "R", "mean_gap", "stderr", "wall_ms", "note"]
DEFAULT_BUDGETS = [300, 1000, 3000, 10_000, 30_000, 100_000]
DEFAULT_SIGMA2 = [1e-2, 1e-6, 1e-10, 0.0]


class ConfigError(ValueError):
    pass


# configuration --------------------------------------------------------------

def build_family(spec: dict) -> InstanceFamily:
    """Family from a JSON-style spec: family kind, d, alpha, beta, M, M_tilde, n, sigma2."""
    try:
        kind = spec["family"]
        env = EnvelopeParams(float(spec["alpha"]), float(spec["beta"]), float(spec["M"]),
                             float(spec["M_tilde"]))
        d, n = int(spec["d"]), int(spec["n"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad family spec: {exc}") from exc
    if kind == "G1":
        return obj_mod.family_G1(n, float(spec.get("sigma2", 0.0)), env, d)
    if kind == "G2":
        return obj_mod.family_G2(n, env, d)
    if kind == "C2":
        return obj_mod.family_C2(n, d, env, spec.get("a_bar"))
    raise ConfigError(f"unknown family kind {kind!r}")


def member_index(fam: InstanceFamily, which) -> int:
    """Member by flat index, or 'center' for the member whose cell holds the cube center."""
    if which == "center":
        mid = np.full(fam.meta["d"], 0.5)
        for i in range(len(fam)):
            if fam.region(i).contains(mid):
                return i
        raise ConfigError("no member cell contains the cube center")
    i = int(which)
    if not 0 <= i < len(fam):
        raise ConfigError(f"member index {i} outside 0..{len(fam) - 1}")
    return i


def build_objective(spec: dict) -> Objective:
    kind = spec.get("kind")
    if kind in ("test1", "test2"):
        make = obj_mod.make_test1 if kind == "test1" else obj_mod.make_test2
        return make(int(spec["d"]), spec.get("c"))
    if kind == "family_member":
        fam = build_family(spec["family"])
        return fam.member(member_index(fam, spec.get("member", 0)))
    raise ConfigError(f"unknown objective kind {kind!r}")


@lru_cache(maxsize=64)
def _cached_objective(spec_json: str) -> Objective:
    return build_objective(json.loads(spec_json))


def objective_D(obj: Objective) -> float | None:
    env = obj.envelope
    return None if env is None else env.effective_dimension(obj.dim)


@dataclass
class ExperimentConfig:
    objectives: list[dict]
    optimizers: list[dict]
    sigma2: list[float] = field(default_factory=lambda: list(DEFAULT_SIGMA2))
    budgets: list[int] = field(default_factory=lambda: list(DEFAULT_BUDGETS))
    replications: int = 200
    seed: int = 0
    output_dir: str | None = None
    workers: int = 1
    timing: bool = False
    raw: bool = False
    diagnostics: bool = False
    switch_threshold: float = 2.0

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if list(self.budgets) != sorted(self.budgets) or len(set(self.budgets)) != len(self.budgets):
            raise ConfigError("budgets must be strictly ascending")
        if any(b < 1 for b in self.budgets):
            raise ConfigError("budgets must be positive")
        if any(s < 0 for s in self.sigma2):
            raise ConfigError("sigma2 entries must be nonnegative")
        if not self.objectives or not self.optimizers:
            raise ConfigError("need at least one objective and one optimizer")
        for o in self.optimizers:
            try:
                OptimizerSpec(o["kind"], dict(o.get("params", {})))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad optimizer spec {o}: {exc}") from exc
        for o in self.objectives:
            build_objective(o)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        if "objective" in raw:
            raw.setdefault("objectives", [raw.pop("objective")])
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


@dataclass
class ExperimentRow:
    objective: str
    optimizer: str
    d: int
    sigma2: float
    n: int
    R: int
    mean_gap: float
    stderr: float
    wall_ms: float | None = None
    note: str = ""
    diagnostics: dict = field(default_factory=dict)
    gaps: np.ndarray | None = field(default=None, repr=False, compare=False)
    audit_failures: int = field(default=0, compare=False)


# execution ------------------------------------------------------------------

def _optimizer_label(o: dict) -> str:
    return o.get("label", o["kind"])


def _run_cell(task) -> dict:
    obj_json, opt, sigma2, n, reps, cell_seed = task
    obj = _cached_objective(obj_json)
    spec = OptimizerSpec(opt["kind"], dict(opt.get("params", {})))
    noise = NoiseModel.from_variance(sigma2)
    base = RngStream(cell_seed)
    gaps = np.empty(len(reps))
    diag: dict[str, float] = {}
    audit = 0
    t0 = time.perf_counter()
    for j, r in enumerate(reps):
        oracle = SimulationOracle(obj, noise, n, base.fork(r, 0))
        rec = run_algorithm(spec, oracle, base.fork(r, 1).generator(), n)
        traj = rec.trajectory
        if len(traj) > n or not traj.visited(rec.x_hat):
            audit += 1
        gaps[j] = obj.gap(rec.x_hat)
        for k, v in rec.diagnostics.items():
            diag[k] = diag.get(k, 0.0) + float(v)
    return {"gaps": gaps, "diag": diag, "audit": audit, "ms": 1000 * (time.perf_counter() - t0)}


def _feasibility(opt: dict, n: int, d: int) -> str:
    if opt["kind"] == "stroquool" and n < 16:
        return "infeasible: stroquool needs n >= 16"
    if opt["kind"] == "kwsa" and n < 2 * d + 1:
        return f"infeasible: kwsa needs n >= {2 * d + 1}"
    return ""


def cell_seed(master: int, label: str, optimizer: str, sigma2: float, n: int) -> int:
    return hash_seed(int(master), label, optimizer, float(sigma2), int(n))


def _chunks(R: int, size: int) -> list[range]:
    return [range(i, min(R, i + size)) for i in range(0, R, size)]


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> list[ExperimentRow]:
    workers = config.workers if workers is None else workers
    R = config.replications
    cells, tasks = [], []
    for ospec in config.objectives:
        obj = build_objective(ospec)
        obj_json = json.dumps(ospec, sort_keys=True)
        label = ospec.get("label", obj.label)
        for opt in config.optimizers:
            for s2 in config.sigma2:
                for n in config.budgets:
                    note = _feasibility(opt, n, obj.dim)
                    seed = cell_seed(config.seed, label, _optimizer_label(opt), s2, n)
                    chunks = [] if note else _chunks(R, max(1, math.ceil(R / max(1, 4 * workers))))
                    first = len(tasks)
                    tasks += [(obj_json, opt, float(s2), int(n), list(c), seed) for c in chunks]
                    cells.append((label, _optimizer_label(opt), obj.dim, float(s2), int(n), note,
                                  range(first, len(tasks))))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]

    rows = []
    for label, opt, d, s2, n, note, idx in cells:
        if note:
            rows.append(ExperimentRow(label, opt, d, s2, n, R, math.nan, math.nan, None, note))
            continue
        parts = [results[i] for i in idx]
        gaps = np.concatenate([p["gaps"] for p in parts])
        diag = {}
        for p in parts:
            for k, v in p["diag"].items():
                diag[k] = diag.get(k, 0.0) + v
        diag = {k: v / R for k, v in sorted(diag.items())}
        audit = sum(p["audit"] for p in parts)
        mean = float(np.mean(gaps))
        se = float(np.std(gaps, ddof=1) / math.sqrt(R)) if R > 1 else 0.0
        notes = []
        if R == 1:
            notes.append("R=1: stderr undefined, reported as 0")
        if audit:
            notes.append(f"audit failures: {audit}")
        wall = sum(p["ms"] for p in parts) if config.timing else None
        rows.append(ExperimentRow(label, opt, d, s2, n, R, mean, se, wall, "; ".join(notes), diag,
                                  gaps, audit))
    return rows


# analysis -------------------------------------------------------------------

def normalized_errors(rows: Iterable[ExperimentRow], D: float) -> list[dict]:
    out = []
    for r in rows:
        if r.sigma2 <= 0:
            raise ValueError("normalized errors need sigma2 > 0 rows")
        scale = (r.sigma2 / r.n) ** (1 / (D + 2))
        out.append({"objective": r.objective, "optimizer": r.optimizer, "sigma2": r.sigma2,
                    "n": r.n, "mean_gap": r.mean_gap, "normalized": r.mean_gap / scale})
    return out


def detect_switch(rows_sigma: Sequence[ExperimentRow], rows_zero: Sequence[ExperimentRow],
                  threshold: float = 2.0) -> float:
    """Smallest budget from which gap(sigma2)/gap(0) stays at or above threshold."""
    a = sorted(rows_sigma, key=lambda r: r.n)
    b = sorted(rows_zero, key=lambda r: r.n)
    if [r.n for r in a] != [r.n for r in b]:
        raise ValueError("budget grids differ")
    ratios = []
    for ra, rb in zip(a, b):
        if rb.mean_gap > 0:
            ratios.append(ra.mean_gap / rb.mean_gap)
        else:
            ratios.append(math.inf if ra.mean_gap > 0 else 1.0)
    switch = math.inf
    for r, q in zip(reversed(a), reversed(ratios)):
        if q < threshold:
            break
        switch = r.n
    return float(switch)


def fit_loglog_slope(rows: Sequence[ExperimentRow], window: tuple[float, float] | None = None) -> float:
    sel = [r for r in rows if window is None or window[0] <= r.n <= window[1]]
    if len(sel) < 3:
        raise ValueError("need at least three budgets in the window")
    if any(not r.mean_gap > 0 for r in sel):
        raise ValueError("nonpositive gap in the window")
    x = np.log([r.n for r in sel])
    y = np.log([r.mean_gap for r in sel])
    return float(np.polyfit(x, y, 1)[0])


def switch_table(rows: Sequence[ExperimentRow], threshold: float = 2.0) -> list[dict]:
    out = []
    for (obj, opt), group in _group(rows, ("objective", "optimizer")).items():
        zero = [r for r in group if r.sigma2 == 0]
        if not zero:
            continue
        for s2 in sorted({r.sigma2 for r in group if r.sigma2 > 0}, reverse=True):
            cur = [r for r in group if r.sigma2 == s2 and not r.note.startswith("infeasible")]
            z = [r for r in zero if not r.note.startswith("infeasible")]
            try:
                n_star = detect_switch(cur, z, threshold)
            except ValueError:
                continue
            out.append({"objective": obj, "optimizer": opt, "sigma2": s2, "switch_budget": n_star})
    return out


def _group(rows, keys):
    out: dict = {}
    for r in rows:
        out.setdefault(tuple(getattr(r, k) for k in keys), []).append(r)
    return out


# output ---------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _row_fields(r: ExperimentRow, diag_keys) -> list[str]:
    base = [r.objective, r.optimizer, str(r.d), _fmt(r.sigma2), str(r.n), str(r.R), _fmt(r.mean_gap),
            _fmt(r.stderr), _fmt(r.wall_ms), r.note]
    return base + [_fmt(r.diagnostics.get(k)) for k in diag_keys]


def write_results(rows: Sequence[ExperimentRow], path, diagnostics: bool = False) -> None:
    diag_keys = sorted({k for r in rows for k in r.diagnostics}) if diagnostics else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS + [f"diag_{k}" for k in diag_keys])
        for r in rows:
            w.writerow(_row_fields(r, diag_keys))


def read_results(path) -> list[ExperimentRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            diag = {k[5:]: float(v) for k, v in rec.items() if k.startswith("diag_") and v != ""}
            rows.append(ExperimentRow(
                rec["objective"], rec["optimizer"], int(rec["d"]), float(rec["sigma2"]), int(rec["n"]),
                int(rec["R"]), float(rec["mean_gap"]), float(rec["stderr"]),
                float(rec["wall_ms"]) if rec["wall_ms"] else None, rec["note"], diag))
    return rows


def _safe(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "._-=" else "_" for ch in s)


def emit_outputs(rows: Sequence[ExperimentRow], out_dir, D_by_objective: dict | None = None,
                 threshold: float = 2.0, diagnostics: bool = False, raw: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "results.csv"]
    write_results(rows, written[0], diagnostics)
    D_by_objective = D_by_objective or {}
    with open(out / "manifest.json", "w") as fh:
        json.dump({"D": D_by_objective, "switch_threshold": threshold}, fh, indent=2, sort_keys=True)
    written.append(out / "manifest.json")
    written += _derived_tables(rows, out, D_by_objective, threshold)
    if raw:
        path = out / "raw_gaps.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["objective", "optimizer", "sigma2", "n", "rep", "gap"])
            for r in rows:
                for i, g in enumerate([] if r.gaps is None else r.gaps):
                    w.writerow([r.objective, r.optimizer, _fmt(r.sigma2), r.n, i, _fmt(g)])
        written.append(path)
    return written


def _derived_tables(rows, out: Path, D_by_objective: dict, threshold: float) -> list[Path]:
    written = []
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    for (obj, opt, s2), group in _group(rows, ("objective", "optimizer", "sigma2")).items():
        path = curves / _safe(f"gap_vs_n__{obj}__{opt}__sigma2={_fmt(s2)}.dat")
        with open(path, "w") as fh:
            fh.write("# n mean_gap stderr\n")
            for r in sorted(group, key=lambda r: r.n):
                fh.write(f"{r.n} {_fmt(r.mean_gap)} {_fmt(r.stderr)}\n")
        written.append(path)

    path = out / "normalized.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["objective", "optimizer", "sigma2", "n", "D", "mean_gap", "normalized"])
        for r in rows:
            D = D_by_objective.get(r.objective)
            if D is None or r.sigma2 <= 0 or not math.isfinite(r.mean_gap):
                continue
            e = normalized_errors([r], D)[0]
            w.writerow([r.objective, r.optimizer, _fmt(r.sigma2), r.n, _fmt(D), _fmt(r.mean_gap),
                        _fmt(e["normalized"])])
    written.append(path)

    path = out / "switch.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["objective", "optimizer", "sigma2", "switch_budget"])
        for e in switch_table(rows, threshold):
            w.writerow([e["objective"], e["optimizer"], _fmt(e["sigma2"]), _fmt(e["switch_budget"])])
    written.append(path)
    return written


def run_and_emit(config: ExperimentConfig, out_dir=None) -> list[ExperimentRow]:
    rows = run_experiment(config)
    D = {}
    for ospec in config.objectives:
        o = build_objective(ospec)
        D[ospec.get("label", o.label)] = objective_D(o)
    out_dir = out_dir or config.output_dir
    if out_dir is None:
        raise ConfigError("no output directory given")
    emit_outputs(rows, out_dir, D, config.switch_threshold, config.diagnostics, config.raw)
    return rows


def report(in_dir) -> list[Path]:
    """Rebuild the derived tables from results.csv and manifest.json."""
    in_dir = Path(in_dir)
    rows = read_results(in_dir / "results.csv")
    D, threshold = {}, 2.0
    man = in_dir / "manifest.json"
    if man.exists():
        meta = json.loads(man.read_text())
        D, threshold = meta.get("D", {}), meta.get("switch_threshold", 2.0)
    return _derived_tables(rows, in_dir, D, threshold)

