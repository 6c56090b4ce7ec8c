"""Grid scans over the (h, p, theta) families with persistent, resumable output.

A scan is described by a :class:`ScanConfig`, usually loaded from YAML.  It
expands into tasks (one grid point and one engine each).  Every finished
task appends its rows to a JSON-lines journal, so an interrupted scan can be
resumed.  The final CSV/JSON reports list rows in task order, so identical
configurations give identical files apart from the timing column.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .couplings import SELFDUAL_THETA, general_couplings, selfdual_couplings
from .imps import CHI_LADDER, build_row_mpo, entanglement_entropy, fit_central_charge, \
    fixed_point_mps, mps_correlation_length, expand_mps
from .models import (ObservableSpec, anyon_observable, at_model, column_path, coupled_model,
                     nflavor_model)
from .montecarlo import MCConfig, mc_run
from .transfer import (build_transfer, correlation_length, disorder_parameter,
                       dominant_spectrum, free_energy_density, mixed_correlator,
                       sector_correlation_length, two_point_order)

FAMILIES = ("selfdual-at", "general-at", "coupled", "nflavor")
ENGINES = ("exact", "imps", "mc")
MAX_STATE_BITS = 24
MAX_CHI = 256
DEFAULT_FES_WINDOW = (16, 48)

IMPS_DEFAULTS = {"tol": 1e-10, "max_iters": 5000, "window": list(DEFAULT_FES_WINDOW),
                 "warm_start": True}
MC_DEFAULTS = {"Lx": 8, "Ly": 8, "sweeps": 20000, "thermalization": 2000, "stride": 1,
               "bins": 16, "chains": 8}
OUTPUT_DEFAULTS = {"dir": "decotopo-out", "name": "scan", "formats": ["csv", "json"]}

TOP_KEYS = ("name", "family", "p", "theta", "h", "n", "engine", "Lx", "r", "chi",
            "observables", "imps", "mc", "output", "seed", "xi_threshold")

FIXED_COLUMNS = ("h", "p", "theta", "engine", "size_param", "xi", "S_vn", "free_energy", "c_fit")
TAIL_COLUMNS = ("converged", "seconds")
EXTRA_COLUMNS = ("inv_xi", "xi_full", "n", "row_kind", "error", "key", "config_hash", "version")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def _as_list(v, name):
    if isinstance(v, (list, tuple)):
        out = list(v)
    else:
        out = [v]
    if not out:
        raise ConfigError(f"{name}: grid must be nonempty", name)
    return out


def _floats(v, name):
    out = []
    for x in _as_list(v, name):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{name}: expected numbers, got {x!r}", name)
        out.append(float(x))
    return tuple(out)


def _ints(v, name, lo=None, hi=None):
    out = []
    for x in _as_list(v, name):
        if isinstance(x, bool) or not isinstance(x, int):
            raise ConfigError(f"{name}: expected integers, got {x!r}", name)
        if (lo is not None and x < lo) or (hi is not None and x > hi):
            raise ConfigError(f"{name}: {x} out of [{lo}, {hi}]", name)
        out.append(int(x))
    return tuple(out)


def _section(raw, defaults: dict, name: str) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping", name)
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(unknown)}", f"{name}.{unknown[0]}")
    out = dict(defaults)
    out.update(raw)
    return out


@dataclass(frozen=True)
class ScanConfig:
    """Validated scan description.  See :data:`TOP_KEYS` for the accepted keys."""

    family: str
    p: tuple
    engines: tuple = ("exact",)
    theta: tuple | None = None
    h: tuple | None = None
    n: tuple | None = None
    Lx: tuple = (4,)
    r: tuple = (1, 2, 3, 4)
    chi: tuple = CHI_LADDER
    observables: tuple = ()
    imps: dict = field(default_factory=lambda: dict(IMPS_DEFAULTS))
    mc: dict = field(default_factory=lambda: dict(MC_DEFAULTS))
    output: dict = field(default_factory=lambda: dict(OUTPUT_DEFAULTS))
    seed: int = 0
    xi_threshold: float = 0.05
    name: str = "scan"

    # ------------------------------------------------------------ building
    @classmethod
    def from_dict(cls, raw: dict) -> "ScanConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping at the top level")
        unknown = sorted(set(raw) - set(TOP_KEYS))
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(unknown)}", unknown[0])
        if "family" not in raw:
            raise ConfigError("family is required", "family")
        family = raw["family"]
        if family not in FAMILIES:
            raise ConfigError(f"family must be one of {', '.join(FAMILIES)}", "family")
        if "p" not in raw:
            raise ConfigError("p is required", "p")
        p = _floats(raw["p"], "p")
        for x in p:
            if not 0.0 <= x <= 0.5:
                raise ConfigError(f"p out of [0, 0.5]: {x!r}", "p")
        engines = tuple(_as_list(raw.get("engine", "exact"), "engine"))
        for e in engines:
            if e not in ENGINES:
                raise ConfigError(f"engine must be one of {', '.join(ENGINES)}, got {e!r}",
                                  "engine")
        theta = h = n = None
        if family == "general-at":
            theta = _floats(raw.get("theta", [SELFDUAL_THETA]), "theta")
            for x in theta:
                if not 0.0 <= x <= math.pi / 2 + 1e-15:
                    raise ConfigError(f"theta out of [0, pi/2]: {x!r}", "theta")
        elif "theta" in raw:
            raise ConfigError("theta applies to family general-at only", "theta")
        if family in ("coupled", "nflavor"):
            if "h" not in raw:
                raise ConfigError(f"h is required for family {family}", "h")
            h = _floats(raw["h"], "h")
            lo_ok = (lambda x: 0.0 < x <= 1.0) if family == "coupled" else \
                (lambda x: 0.0 <= x <= 1.0)
            for x in h:
                if not lo_ok(x):
                    rng = "(0, 1]" if family == "coupled" else "[0, 1]"
                    raise ConfigError(f"h out of {rng}: {x!r}", "h")
        elif "h" in raw:
            raise ConfigError("h applies to families coupled and nflavor only", "h")
        if family == "nflavor":
            n = _ints(raw.get("n", [2]), "n", 2, 8)
        elif "n" in raw:
            raise ConfigError("n applies to family nflavor only", "n")
        flavors = {"selfdual-at": [2], "general-at": [2], "coupled": [4],
                   "nflavor": list(n or [])}[family]
        Lx = _ints(raw.get("Lx", [4]), "Lx", 1)
        for L in Lx:
            for f in flavors:
                if L * f > MAX_STATE_BITS:
                    raise ConfigError(f"Lx: {L} columns of {f} flavors exceed 2^24 states", "Lx")
        r = _ints(raw.get("r", [1, 2, 3, 4]), "r", 1, 64)
        chi = _ints(raw.get("chi", list(CHI_LADDER)), "chi", 2, MAX_CHI)
        if list(chi) != sorted(set(chi)):
            raise ConfigError("chi: ladder must be strictly increasing", "chi")
        obs = tuple(str(o) for o in (raw.get("observables") or []))
        for o in obs:
            parse_observable(o, family)
        imps = _section(raw.get("imps"), IMPS_DEFAULTS, "imps")
        if not (isinstance(imps["tol"], (int, float)) and imps["tol"] > 0):
            raise ConfigError("imps.tol must be positive", "imps.tol")
        if not (isinstance(imps["max_iters"], int) and imps["max_iters"] >= 1):
            raise ConfigError("imps.max_iters must be a positive integer", "imps.max_iters")
        if imps["window"] is not None:
            w = _ints(imps["window"], "imps.window", 1, MAX_CHI)
            if len(w) != 2 or w[0] >= w[1]:
                raise ConfigError("imps.window must be [chi_min, chi_max]", "imps.window")
            imps["window"] = list(w)
        imps["tol"] = float(imps["tol"])
        imps["warm_start"] = bool(imps["warm_start"])
        mc = _section(raw.get("mc"), MC_DEFAULTS, "mc")
        for k in mc:
            _ints(mc[k], f"mc.{k}", 1)
        if "mc" in engines:
            try:
                MCConfig(mc["Lx"], mc["Ly"], mc["sweeps"], mc["thermalization"], mc["stride"],
                         0, mc["bins"], mc["chains"])
            except ValueError as exc:
                raise ConfigError(f"mc: {exc}", "mc") from None
            if mc["Lx"] > 256 or mc["Ly"] > 256:
                raise ConfigError("mc: lattice sides are capped at 256", "mc")
        output = _section(raw.get("output"), OUTPUT_DEFAULTS, "output")
        fm = _as_list(output["formats"], "output.formats")
        for f in fm:
            if f not in ("csv", "json"):
                raise ConfigError(f"output.formats: unknown format {f!r}", "output.formats")
        output["formats"] = list(fm)
        seed = raw.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
        thr = raw.get("xi_threshold", 0.05)
        if isinstance(thr, bool) or not isinstance(thr, (int, float)) or thr <= 0:
            raise ConfigError("xi_threshold must be positive", "xi_threshold")
        name = str(raw.get("name", "scan"))
        return cls(family, p, engines, theta, h, n, Lx, r, chi, obs, imps, mc, output,
                   int(seed), float(thr), name)

    def to_dict(self) -> dict:
        out = {"name": self.name, "family": self.family, "p": list(self.p),
               "engine": list(self.engines)}
        if self.theta is not None:
            out["theta"] = list(self.theta)
        if self.h is not None:
            out["h"] = list(self.h)
        if self.n is not None:
            out["n"] = list(self.n)
        out.update({"Lx": list(self.Lx), "r": list(self.r), "chi": list(self.chi),
                    "observables": list(self.observables), "imps": dict(self.imps),
                    "mc": dict(self.mc), "output": dict(self.output), "seed": self.seed,
                    "xi_threshold": self.xi_threshold})
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def replace(self, **kw) -> "ScanConfig":
        return ScanConfig.from_dict({**self.to_dict(), **kw})

    @property
    def hash(self) -> str:
        return config_hash(self)


def config_hash(cfg: ScanConfig) -> str:
    """Digest of everything that influences results (output paths excluded)."""
    d = cfg.to_dict()
    d.pop("output", None)
    d.pop("name", None)
    blob = json.dumps(d, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _format_mark(exc) -> str:
    mark = getattr(exc, "problem_mark", None) or getattr(exc, "context_mark", None)
    if mark is None:
        return ""
    return f" at line {mark.line + 1}, column {mark.column + 1}"


def loads_config(text: str, source: str = "<string>") -> ScanConfig:
    """Parse YAML text into a validated :class:`ScanConfig`."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{source}: parse error{_format_mark(exc)}: {problem}") from None
    if raw is None:
        raise ConfigError(f"{source}: empty config")
    return ScanConfig.from_dict(raw)


def load_config(path) -> ScanConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return loads_config(path.read_text(), str(path))


# ------------------------------------------------------------------ presets

def presets() -> dict:
    """Named reproduction entry points; each maps to a list of configs."""
    pgrid = [round(x, 6) for x in np.linspace(0.0, 0.5, 21)]
    return {
        "fig3c": [ScanConfig.from_dict({
            "name": "fig3c", "family": "coupled", "h": [0.1, 0.2, 0.3], "p": pgrid,
            "engine": "imps", "chi": [48], "xi_threshold": 0.05})],
        "fig3b": [
            ScanConfig.from_dict({"name": "fig3b-at", "family": "selfdual-at", "p": [0.5],
                                  "engine": "imps", "chi": list(CHI_LADDER)}),
            ScanConfig.from_dict({"name": "fig3b-coupled", "family": "coupled",
                                  "h": [0.5], "p": [0.0, 0.3], "engine": "imps",
                                  "chi": list(CHI_LADDER)}),
            ScanConfig.from_dict({"name": "fig3b-interior", "family": "coupled",
                                  "h": [0.2], "p": [0.45], "engine": "imps",
                                  "chi": list(CHI_LADDER)}),
        ],
        "fig2b": [ScanConfig.from_dict({
            "name": "fig2b", "family": "general-at",
            "p": [round(x, 6) for x in np.linspace(0.05, 0.5, 10)],
            "theta": [round(x, 6) for x in np.linspace(0.0, math.pi / 2, 7)],
            "engine": "exact", "Lx": [6], "r": [2, 4, 6],
            "observables": ["I.I|e.e", "e.I|e.I", "I.I|m.m"]})],
    }


# ----------------------------------------------------------------- observables

def parse_observable(label: str, family: str) -> ObservableSpec:
    """Anyon label ``"bra|ket"`` or raw ``order:M`` / ``disorder:M`` / ``mixed:M/N``."""
    label = label.strip()
    if ":" in label:
        kind, _, rest = label.partition(":")
        try:
            if kind == "mixed":
                a, _, b = rest.partition("/")
                return ObservableSpec("mixed", int(a), int(b), label)
            if kind == "order":
                return ObservableSpec("order", int(rest), 0, label)
            if kind == "disorder":
                return ObservableSpec("disorder", 0, int(rest), label)
        except ValueError as exc:
            raise ConfigError(f"observables: bad raw observable {label!r} ({exc})",
                              "observables") from None
        raise ConfigError(f"observables: unknown kind {kind!r}", "observables")
    if "|" not in label:
        raise ConfigError(f"observables: {label!r} is neither 'bra|ket' nor kind:mask",
                          "observables")
    if family == "nflavor":
        raise ConfigError("observables: anyon labels need the AT or coupled families; "
                          "use order:/disorder: masks for nflavor", "observables")
    bra, _, ket = label.partition("|")
    try:
        spec = anyon_observable(bra, ket, reduced=family in ("selfdual-at", "general-at"))
    except ValueError as exc:
        raise ConfigError(f"observables: {exc}", "observables") from None
    return dataclasses.replace(spec, label=label)


# ------------------------------------------------------------------- tasks

@dataclass(frozen=True)
class Task:
    index: int
    family: str
    h: float
    p: float
    theta: float
    n: int | None
    engine: str

    @property
    def key(self) -> str:
        n = "" if self.n is None else f"|n={self.n}"
        return f"{self.family}|h={self.h!r}|p={self.p!r}|theta={self.theta!r}{n}|{self.engine}"


def expand_tasks(cfg: ScanConfig) -> list[Task]:
    tasks = []
    thetas = cfg.theta if cfg.theta is not None else (
        (0.0,) if cfg.family == "nflavor" else (SELFDUAL_THETA,))
    hs = cfg.h if cfg.h is not None else (0.0,)
    ns = cfg.n if cfg.n is not None else (None,)
    for engine in cfg.engines:
        for n in ns:
            for h in hs:
                for th in thetas:
                    for p in cfg.p:
                        tasks.append(Task(len(tasks), cfg.family, h, p, th, n, engine))
    return tasks


def build_model(task: Task):
    if task.family == "selfdual-at":
        return at_model(selfdual_couplings(task.p))
    if task.family == "general-at":
        return at_model(general_couplings(task.p, task.theta))
    if task.family == "coupled":
        return coupled_model(task.h, task.p)
    return nflavor_model(task.h, task.p, task.n)


def task_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _blank_row(task: Task, cfg: ScanConfig) -> dict:
    return {"h": task.h, "p": task.p, "theta": task.theta, "engine": task.engine,
            "size_param": "", "xi": math.nan, "S_vn": math.nan, "free_energy": math.nan,
            "c_fit": math.nan, "obs": {}, "converged": False, "seconds": 0.0,
            "inv_xi": math.nan, "xi_full": math.nan, "n": task.n if task.n is not None else "",
            "row_kind": "point", "error": "", "key": task.key,
            "config_hash": cfg.hash, "version": __version__}


def _inv(x: float) -> float:
    if x == 0:
        return math.inf
    return 0.0 if math.isinf(x) else 1.0 / x


def _exact_rows(task, cfg, model) -> list[dict]:
    specs = [parse_observable(o, cfg.family) for o in cfg.observables]
    rows = []
    for L in cfg.Lx:
        t0 = time.perf_counter()
        row = _blank_row(task, cfg)
        row["size_param"] = f"Lx={L}"
        try:
            t = build_transfer(model, L)
            spec = dominant_spectrum(t, 2)
            row["xi_full"] = correlation_length(t, spec)
            row["xi"] = sector_correlation_length(t)
            row["inv_xi"] = _inv(row["xi"])
            row["free_energy"] = free_energy_density(t, spec)
            row["converged"] = bool(spec.converged)
            for ob in specs:
                for r in cfg.r:
                    row["obs"][f"obs_{ob.label}_r{r}"] = _exact_observable(t, ob, r, spec)
        except Exception as exc:  # per-point failures stay in the row
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    return rows


def _exact_observable(t, ob: ObservableSpec, r: int, spec) -> float:
    if ob.kind == "order":
        return two_point_order(t, ob.order_mask, r, "column", 0, spec)
    path = column_path(0, 0, r)
    if ob.kind == "disorder":
        return disorder_parameter(t, path, ob.disorder_mask, spec)
    return mixed_correlator(t, ob.order_mask, ob.disorder_mask, path, [(0, 0), (0, r)], spec)


def _cache_path(task: Task, chi: int) -> Path | None:
    root = os.environ.get("DECOTOPO_CACHE")
    if not root:
        return None
    digest = hashlib.sha256(task.key.replace(f"|{task.engine}", "").encode()).hexdigest()[:20]
    return Path(root) / f"mps-{digest}-chi{chi}.npz"


def _imps_rows(task, cfg, model) -> list[dict]:
    rows = []
    mpo = build_row_mpo(model)
    seed = task_seed(cfg.seed, task.index) % (2**32)
    prev = None
    samples = []
    for chi in cfg.chi:
        t0 = time.perf_counter()
        row = _blank_row(task, cfg)
        row["size_param"] = f"chi={chi}"
        row["row_kind"] = "chi"
        try:
            init = None
            cp = _cache_path(task, chi)
            if cp is not None and cp.exists():
                with np.load(cp) as z:
                    init = (z["AL"], z["AR"], z["AC"], z["C"])
            elif cfg.imps["warm_start"] and prev is not None and prev.chi < chi:
                init = expand_mps(prev, chi, seed)
            psi = fixed_point_mps(mpo, chi, cfg.imps["tol"], cfg.imps["max_iters"], seed, init)
            if cp is not None:
                cp.parent.mkdir(parents=True, exist_ok=True)
                np.savez(cp, AL=psi.AL, AR=psi.AR, AC=psi.AC, C=psi.C)
            prev = psi
            row["xi"] = mps_correlation_length(psi)
            row["inv_xi"] = _inv(row["xi"])
            row["S_vn"] = entanglement_entropy(psi)
            row["free_energy"] = psi.free_energy
            row["converged"] = bool(psi.converged)
            if psi.complex_flag:
                row["error"] = "complex-flagged eigenvalue"
            samples.append((chi, row["xi"], row["S_vn"]))
        except Exception as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    if len(cfg.chi) >= 4:
        row = _blank_row(task, cfg)
        row["row_kind"] = "fes"
        w = cfg.imps["window"]
        row["size_param"] = f"chi={w[0]}-{w[1]}" if w else f"chi={cfg.chi[0]}-{cfg.chi[-1]}"
        try:
            fit = fit_central_charge(samples, tuple(w) if w else None)
            row["c_fit"] = fit.c
            row["converged"] = all(r["converged"] for r in rows)
            row["seconds"] = sum(r["seconds"] for r in rows)
        except Exception as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def _mc_rows(task, cfg, model) -> list[dict]:
    t0 = time.perf_counter()
    row = _blank_row(task, cfg)
    m = cfg.mc
    row["size_param"] = f"{m['Lx']}x{m['Ly']}"
    try:
        mcfg = MCConfig(m["Lx"], m["Ly"], m["sweeps"], m["thermalization"], m["stride"],
                        task_seed(cfg.seed, task.index), m["bins"], m["chains"])
        specs = [parse_observable(o, cfg.family) for o in cfg.observables]
        specs = [s for s in specs if s.kind == "order"]
        ests = mc_run(model, mcfg, specs, cfg.r) if specs else []
        k = 0
        for s in specs:
            for r in cfg.r:
                e = ests[k]
                k += 1
                row["obs"][f"obs_{s.label}_r{r}"] = e.mean
                row["obs"][f"obs_{s.label}_r{r}_err"] = e.stderr
        row["converged"] = True
    except Exception as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["seconds"] = time.perf_counter() - t0
    return [row]


def run_task(task: Task, cfg: ScanConfig) -> list[dict]:
    """Rows for one task; failures are reported in-row and never raise."""
    try:
        model = build_model(task)
    except Exception as exc:
        row = _blank_row(task, cfg)
        row["error"] = f"{type(exc).__name__}: {exc}"
        return [row]
    if task.engine == "exact":
        return _exact_rows(task, cfg, model)
    if task.engine == "imps":
        return _imps_rows(task, cfg, model)
    return _mc_rows(task, cfg, model)


def _run_task_packed(args):
    task, cfg_dict = args
    return task.index, run_task(task, ScanConfig.from_dict(cfg_dict))


# ------------------------------------------------------------ journal / run

def _journal_path(out_dir: Path, cfg: ScanConfig) -> Path:
    return out_dir / f"{cfg.name}.journal.jsonl"


def _read_journal(path: Path, cfg_hash: str) -> dict:
    done: dict = {}
    if not path.exists():
        return done
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break  # torn final line from an interrupted write
            if rec.get("config_hash") != cfg_hash:
                continue
            done[rec["key"]] = rec["rows"]
    return done


def run_scan(cfg: ScanConfig, out_dir=None, workers: int = 1, resume: bool = False,
             max_tasks: int | None = None):
    """Run every task of ``cfg`` and yield rows as tasks complete.

    Finished tasks are journaled under ``out_dir``.  With ``resume`` the
    journal is read first and tasks already recorded for the same config
    hash are replayed instead of recomputed.  ``max_tasks`` stops after that
    many newly computed tasks (used to emulate interruptions).
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    journal = _journal_path(out_dir, cfg)
    h = cfg.hash
    done = _read_journal(journal, h) if resume else {}
    if not resume and journal.exists():
        journal.unlink()
    tasks = expand_tasks(cfg)
    todo = [t for t in tasks if t.key not in done]
    for t in tasks:
        if t.key in done:
            yield from done[t.key]
    if max_tasks is not None:
        todo = todo[:max_tasks]
    with journal.open("a") as fh:
        def record(task, rows):
            fh.write(json.dumps({"key": task.key, "config_hash": h, "rows": rows},
                                default=_json_default) + "\n")
            fh.flush()

        if workers <= 1:
            for t in todo:
                rows = run_task(t, cfg)
                record(t, rows)
                yield from rows
        else:
            payload = [(t, cfg.to_dict()) for t in todo]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for idx, rows in pool.map(_run_task_packed, payload):
                    record(tasks[idx], rows)
                    yield from rows


def scan_to_reports(cfg: ScanConfig, out_dir=None, workers: int = 1, resume: bool = False,
                    max_tasks: int | None = None) -> dict:
    """Run a scan and write the configured reports; returns ``{format: path}``."""
    out_dir = Path(out_dir if out_dir is not None else cfg.output["dir"])
    rows = list(run_scan(cfg, out_dir, workers, resume, max_tasks))
    order = {t.key: t.index for t in expand_tasks(cfg)}
    rows.sort(key=lambda r: order[r["key"]])
    paths = {}
    for fmt in cfg.output["formats"]:
        path = out_dir / f"{cfg.name}.{fmt}"
        emit_report(rows, fmt, path, cfg)
        paths[fmt] = path
    return paths


# ------------------------------------------------------------------ reports

def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def fmt_number(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return "%.17g" % x
    return str(x)


def report_columns(rows) -> list[str]:
    obs = []
    for r in rows:
        for k in r.get("obs", {}):
            if k not in obs:
                obs.append(k)
    return list(FIXED_COLUMNS) + obs + list(TAIL_COLUMNS) + list(EXTRA_COLUMNS)


def _flatten(row: dict, columns) -> list:
    out = []
    for c in columns:
        if c.startswith("obs_"):
            out.append(row.get("obs", {}).get(c, math.nan))
        else:
            out.append(row.get(c, ""))
    return out


def _csv_field(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def _json_text(v) -> str:
    """JSON with every float written to 17 significant digits (non-finite as null)."""
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_text(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_text(x) for x in v) + "]"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v) if math.isfinite(v) else "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return "null"
    return json.dumps(str(v))


def emit_report(rows, fmt: str, path, cfg: ScanConfig | None = None) -> Path:
    """Write rows as CSV (fixed column order) or JSON (rows plus config)."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to report")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            cols = report_columns(rows)
            lines = [",".join(cols)]
            for r in rows:
                lines.append(",".join(_csv_field(fmt_number(v)) for v in _flatten(r, cols)))
            path.write_text("\n".join(lines) + "\n")
        elif fmt == "json":
            cols = report_columns(rows)
            body = {"version": __version__,
                    "config": cfg.to_dict() if cfg is not None else None,
                    "config_hash": cfg.hash if cfg is not None else None,
                    "rows": [dict(zip(cols, _flatten(r, cols))) for r in rows]}
            if cfg is not None:
                body["summary"] = summarize(rows, cfg.xi_threshold)
            path.write_text(_json_text(body) + "\n")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc
    return path


def summarize(rows, threshold: float) -> list[dict]:
    """Per (engine, h, theta, n, size) curve: first p where ``1/xi`` drops below ``threshold``."""
    curves: dict = {}
    for r in rows:
        if r.get("row_kind") == "fes" or not math.isfinite(r.get("inv_xi", math.nan)):
            continue
        key = (r["engine"], r["h"], r["theta"], r.get("n", ""), r["size_param"])
        curves.setdefault(key, []).append((r["p"], r["inv_xi"]))
    out = []
    for (engine, h, theta, n, size), pts in curves.items():
        pts.sort()
        below = [p for p, v in pts if v < threshold]
        out.append({"engine": engine, "h": h, "theta": theta, "n": n, "size_param": size,
                    "threshold": threshold, "p_onset": below[0] if below else None})
    return out


def classify_at_phase(ss: float, stst: float, threshold: float = 0.1) -> str:
    """AT phase from long-distance ``<s s>`` and ``<s tau s tau>`` values."""
    if abs(ss) > threshold:
        return "ordered"
    if abs(stst) > threshold:
        return "partial"
    return "disordered"
