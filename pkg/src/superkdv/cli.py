"""Batch front end: ``superkdv {derive,simulate,verify,stability}``.

Every run is driven by one JSON config; flags override its fields.  Each
output file carries the hash of the effective config, and all files are
written atomically (temp file + rename).
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
import statistics
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .algebra import AlgebraElement, bar, body_projection, get_algebra, random_element
from .observables import (
    StabilityConfig,
    apriori_check,
    charge_report,
    stability_experiment,
)
from .pde import (
    BlowUpError,
    ConfigurationError,
    ConstraintError,
    FieldState,
    SchemeConfig,
    gardner_map,
    integrate,
    kdv6_soliton_profile,
    make_system,
    perturb,
    soliton_profile,
)
from .spectral import DECAY_TOL, DecayContractError, Grid, boundary_max
from .symbolics.charges import (
    EQUIV_ATOL,
    ChargeDensity,
    ConsistencyError,
    QuadratureContractError,
    apply_Q_density,
    charge,
    compile_density,
    derive,
    equiv_residual,
    expand_bosonic_nonlocal,
    expand_fermionic_nonlocal,
    expand_local_charges,
)
from .symbolics.superexpr import gardner_roundtrip_residual

log = logging.getLogger("superkdv")

EXIT_OK, EXIT_CHECK, EXIT_BLOWUP, EXIT_CONFIG = 0, 2, 3, 4
SUITES = ("algebra", "cohomology", "gardner-roundtrip", "conservation", "negative-controls", "apriori")
SYSTEM_NAMES = ("kdv", "skdv", "gardner", "broken")
FAMILIES = ("local", "fermionic_nl", "bosonic_nl")


class ConfigError(ValueError):
    pass


class InputMismatchError(ConfigError):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


# -- configuration -------------------------------------------------------------

DEFAULT_CONFIG = {
    "system": "broken",
    "algebra": {"kind": "clifford", "n": 2},
    "grid": {"L": 20 * math.pi, "N": 1024},
    "scheme": {"method": "IFRK4", "dt": 1e-3, "dealias": True},
    "T": 10.0,
    "sample_interval": 1.0,
    "seeds": [0],
    "eps": None,
    "initial": {"type": "soliton", "C": 1.0, "kappa": 1.0, "x0": 0.0},
    "perturbation": None,
    "trajectory_decay_tol": 1e-3,
    "drift_alarm": None,
    "write_trajectory": True,
    "charge_files": [],
    "inputs": [],
    "output_dir": "out",
    "derive": {"family": "local", "K": 2},
    "verify": {"samples": 1000, "K": 4, "drift_tol": 1e-6, "nc_threshold": 1e-2,
               "gardner_tol": 1e-5, "apriori_tol": 1e-9},
    "stability": {"C": 1.0, "deltas": [1e-3, 1e-2], "seeds": list(range(8)),
                  "modes": ["constrained", "free"], "L": 20 * math.pi, "N": 1024,
                  "dt": 1e-3, "T": 10.0, "sample_interval": 0.5, "n_channels": 2,
                  "trajectory_decay_tol": 1e-3},
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    """Effective configuration of one CLI invocation."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONFIG))

    @classmethod
    def load(cls, path: str | None = None, overrides: dict | None = None) -> "RunConfig":
        raw = {}
        if path:
            try:
                raw = json.loads(Path(path).read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file {path} does not exist") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
        unknown = set(raw) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(_merge(_merge(DEFAULT_CONFIG, raw), overrides or {}))
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    @property
    def hash(self) -> str:
        # the output location does not change results
        payload = {k: v for k, v in self.data.items() if k != "output_dir"}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self):
        d = self.data
        if d["system"] not in SYSTEM_NAMES:
            raise ConfigError(f"system must be one of {SYSTEM_NAMES}")
        if d["system"] == "gardner" and d["eps"] is None:
            raise ConfigError("the gardner system needs eps")
        try:
            self.grid()
            self.algebra()
            self.scheme()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        for key in ("T", "sample_interval"):
            if not isinstance(d[key], (int, float)):
                raise ConfigError(f"{key} must be a number")
        if not all(isinstance(s, int) and s >= 0 for s in d["seeds"]) or not d["seeds"]:
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        for p in d["charge_files"]:
            if not Path(p).exists():
                raise ConfigError(f"charge file {p} does not exist")
        for p in d["inputs"]:
            if not Path(p).is_dir():
                raise ConfigError(f"input directory {p} does not exist")
        fam = d["derive"]["family"]
        if fam not in FAMILIES:
            raise ConfigError(f"derive family must be one of {FAMILIES}")
        if d["initial"].get("type", "soliton") not in ("soliton", "zero"):
            raise ConfigError("initial.type must be 'soliton' or 'zero'")

    def grid(self) -> Grid:
        return Grid(float(self.data["grid"]["L"]), int(self.data["grid"]["N"]))

    def algebra(self):
        a = self.data["algebra"]
        kind = a.get("kind", "real")
        if kind not in ("real", "grassmann", "clifford"):
            raise ValueError(f"unknown algebra kind {kind!r}")
        return get_algebra(kind, 0 if kind == "real" else int(a.get("n", 2)))

    def scheme(self) -> SchemeConfig:
        s = self.data["scheme"]
        return SchemeConfig(float(s["dt"]), s.get("method", "IFRK4"), bool(s.get("dealias", True)))

    def system(self):
        return make_system(self.data["system"], self.data["eps"])


# -- atomic output ---------------------------------------------------------------

def atomic_write(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, config_hash: str, header: list, rows: list):
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in r])
    atomic_write(path, buf.getvalue())


def read_csv(path: Path):
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# config_hash="):
        raise InputMismatchError(f"{path} carries no config hash")
    h = lines[0].split("=", 1)[1].strip()
    reader = csv.reader(lines[1:])
    header = next(reader)
    rows = [[float(c) for c in r] for r in reader]
    return h, header, rows


def build_id() -> str:
    """sha1 over the package sources, in the spirit of a git tree id."""
    root = Path(__file__).parent
    h = hashlib.sha1()
    for p in sorted(root.rglob("*.py")):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _manifest(cfg: RunConfig, files: list, extra: dict | None = None) -> dict:
    out = {
        "config_hash": cfg.hash,
        "config": cfg.data,
        "build_id": build_id(),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "files": sorted(files),
    }
    out.update(extra or {})
    return out


# -- derive -----------------------------------------------------------------------

def density_filename(d: ChargeDensity) -> str:
    return "HNL_half.json" if d.name == "HNL1_2" else f"{d.name}.json"


def cmd_derive(cfg: RunConfig, out: Path) -> int:
    fam, K = cfg["derive"]["family"], int(cfg["derive"]["K"])
    try:
        densities = derive(fam, K)
    except ConsistencyError as exc:
        log.error("consistency check failed at ε^%s: %s", exc.order, exc)
        return EXIT_CHECK
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    lines = []
    for d in densities:
        write_json(out / density_filename(d), {"config_hash": cfg.hash, **d.to_json()})
        lines.append(f"{d.name} (dimension {d.dimension}, ε^{d.eps_order}):")
        if d.super_form is not None:
            lines.append(f"  super:      {d.super_form}")
        lines.append(f"  components: {d.component_form}")
    atomic_write(out / f"{fam}_K{K}.txt", f"# config_hash={cfg.hash}\n" + "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def load_density(path) -> ChargeDensity:
    data = json.loads(Path(path).read_text())
    return ChargeDensity.from_json(data)


# -- simulate ----------------------------------------------------------------------

def initial_state(cfg: RunConfig, seed: int) -> FieldState:
    grid, alg = cfg.grid(), cfg.algebra()
    init = cfg["initial"]
    s = FieldState.zeros(grid, alg)
    if init.get("type", "soliton") == "soliton":
        x = grid.x - float(init.get("x0", 0.0))
        if cfg["system"] == "broken":
            prof = soliton_profile(float(init.get("C", 1.0)), x)
        else:
            prof = kdv6_soliton_profile(float(init.get("kappa", 1.0)), x)
        if boundary_max(prof) > DECAY_TOL:
            raise ConfigError("initial soliton does not decay inside the box")
        u = alg.zeros(grid.N)
        u[0] = prof
        s = s.with_fields(u=u)
    pert = cfg["perturbation"]
    if pert and float(pert.get("delta", 0.0)) > 0:
        s = perturb(s, seed, float(pert["delta"]), pert.get("mode", "free"),
                    width=tuple(pert.get("width", (1.0, 2.0))), centre=float(pert.get("centre", 4.0)))
    try:
        s.check_decay(DECAY_TOL)
    except DecayContractError as exc:
        raise ConfigError(f"initial state: {exc}") from None
    return s


def _channel_columns(prefix, channels, alg):
    return [f"{prefix}_{alg.label(m)}" for m in channels]


def _as_array(v, alg) -> np.ndarray:
    if isinstance(v, AlgebraElement):
        return v.to_array()
    arr = np.zeros(alg.dim)
    arr[0] = float(v)
    return arr


class ChargeTable:
    """Column layout of charges.csv for one algebra and a list of extra densities."""

    def __init__(self, alg, extra: list[ChargeDensity]):
        self.alg = alg
        self.odd = alg.channels("odd")
        self.even = alg.channels("even")
        self.extra = extra
        self.extra_ch = [self.odd if d.parity else self.even for d in extra]
        self.header = (["t"] + _channel_columns("H_half", self.odd, alg) + ["H1", "V", "M"]
                       + _channel_columns("NLxixi", self.even, alg) + _channel_columns("NCuxi", self.odd, alg))
        for d, ch in zip(extra, self.extra_ch):
            self.header += _channel_columns(d.name, ch, alg)
        self.header += ["sobolev", "apriori_slack"]

    def row(self, st: FieldState, decay_tol, evaluators) -> list:
        rep = charge_report(st, decay_tol)
        _, slack = apriori_check(st, (rep.H_half, rep.H_1, rep.V, rep.M), decay_tol)
        alg = self.alg
        r = [st.t]
        r += list(_as_array(rep.H_half, alg)[self.odd])
        r += [rep.H_1, rep.V, rep.M]
        r += list(_as_array(rep.NL_xixi, alg)[self.even])
        r += list(_as_array(rep.NC_uxi, alg)[self.odd])
        for ev, ch in zip(evaluators, self.extra_ch):
            r += list(_as_array(ev(st), alg)[ch])
        r += [rep.sobolev, slack]
        return r


def relative_drift(rows: list, cols: list) -> float:
    a = np.array([[r[c] for c in cols] for r in rows])
    if a.size == 0:
        return 0.0
    drift = float(np.max(np.abs(a - a[0])))
    scale = float(np.max(np.abs(a[0])))
    return drift / scale if scale > 0 else drift


def drift_groups(header: list) -> dict:
    groups = {}
    for i, name in enumerate(header):
        if name in ("t", "sobolev", "apriori_slack") or name.startswith("drift_"):
            continue
        key = name if name in ("H1", "V", "M") else name.rsplit("_", 1)[0]
        groups.setdefault(key, []).append(i)
    return groups


BROKEN_ONLY = ("H_half", "V", "M", "NLxixi")


def conserved_groups(system: str, groups: dict) -> dict:
    """Charges expected to be conserved by ``system`` (the negative control never is)."""
    return {k: v for k, v in groups.items()
            if k != "NCuxi" and (system == "broken" or k not in BROKEN_ONLY)}


def simulate_one(cfg: RunConfig, seed: int):
    """Integrate one seed; returns (header, rows, states)."""
    s0 = initial_state(cfg, seed)
    extra = [load_density(p) for p in cfg["charge_files"]]
    table = ChargeTable(s0.algebra, extra)
    tol = cfg["trajectory_decay_tol"]
    evaluators = [compile_density(d, decay_tol=tol) for d in extra]
    states = integrate(s0, cfg.system(), cfg.scheme(), float(cfg["T"]), float(cfg["sample_interval"]))
    rows = [table.row(st, tol, evaluators) for st in states]
    return table.header, rows, states


def _trajectory_files(out: Path, cfg: RunConfig, states) -> list:
    names = []
    alg = states[0].algebra
    uc = [0] if cfg["system"] == "broken" else alg.channels("even")
    xc = alg.channels("odd")
    header = ["x"] + [f"u_{alg.label(m)}" for m in uc] + [f"xi_{alg.label(m)}" for m in xc]
    for i, st in enumerate(states):
        rows = [[x] + [st.u[m][j] for m in uc] + [st.xi[m][j] for m in xc]
                for j, x in enumerate(st.grid.x)]
        name = f"trajectory/t_{i:05d}.csv"
        write_csv(out / name, cfg.hash, header, rows)
        names.append(name)
    times = {name: st.t for name, st in zip(names, states)}
    write_json(out / "trajectory/times.json", {"config_hash": cfg.hash, "times": times})
    return names + ["trajectory/times.json"]


def _simulate_job(args):
    data, seed = args
    cfg = RunConfig(data)
    return simulate_one(cfg, seed)


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    seeds = cfg["seeds"]
    workers = int(os.environ.get("SKDV_NUM_WORKERS", "1"))
    jobs = [(cfg.data, s) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_job, jobs))
    else:
        results = [_simulate_job(j) for j in jobs]
    alarm = cfg["drift_alarm"]
    status = EXIT_OK
    for seed, (header, rows, states) in zip(seeds, results):
        target = out if len(seeds) == 1 else out / f"seed_{seed}"
        groups = drift_groups(header)
        drifts = {k: relative_drift(rows, v) for k, v in groups.items()}
        full_header = header + [f"drift_{k}" for k in groups]
        full_rows = []
        for i in range(len(rows)):
            full_rows.append(rows[i] + [relative_drift(rows[: i + 1], groups[k]) for k in groups])
        write_csv(target / "charges.csv", cfg.hash, full_header, full_rows)
        files = ["charges.csv"]
        if cfg["write_trajectory"]:
            files += _trajectory_files(target, cfg, states)
        write_json(target / "manifest.json", _manifest(cfg, files, {
            "seed": seed, "grid": cfg.grid().to_dict(), "scheme": cfg.scheme().to_dict(),
            "boundary_residual": max(st.boundary_residual() for st in states)}))
        for k, v in drifts.items():
            print(f"seed {seed}  {k:>10s}  relative drift {v:.3e}")
        if alarm is not None:
            watched = conserved_groups(cfg["system"], drifts)
            bad = {k: v for k, v in watched.items() if v > float(alarm)}
            if bad:
                log.error("drift alarm (%g) exceeded: %s", alarm, bad)
                status = EXIT_CHECK
    return status


# -- verify ---------------------------------------------------------------------------

def _check(name, measured, tolerance, passed, **extra) -> dict:
    return {"name": name, "measured": float(measured), "tolerance": float(tolerance),
            "passed": bool(passed), **extra}


def suite_algebra(cfg: RunConfig) -> list:
    checks = []
    for kind in ("clifford", "grassmann"):
        worst = 0
        for n in range(1, 9):
            one = AlgebraElement.scalar(kind, n)
            for i in range(1, n + 1):
                ei = AlgebraElement.generator(kind, n, i)
                for j in range(1, n + 1):
                    ej = AlgebraElement.generator(kind, n, j)
                    want = (-2 if (i == j and kind == "clifford") else 0) * one
                    if ei * ej + ej * ei != want:
                        worst += 1
        checks.append(_check(f"{kind} generator relations n<=8", worst, 0, worst == 0))
    samples = int(cfg["verify"]["samples"])
    bad_assoc = bad_proj = bad_bar = 0
    for k in range(samples):
        n = 1 + k % 4
        kind = "clifford" if k % 2 == 0 else "grassmann"
        a, b, c = (random_element(3 * k + j, "even" if j % 2 else "odd", n, kind, exact=True) for j in range(3))
        if (a * b) * c != a * (b * c):
            bad_assoc += 1
        xi = random_element(10_000 + k, "odd" if k % 3 else "even", n, "clifford", exact=True)
        if body_projection(xi) != sum(Fraction(v) ** 2 for v in xi.coeffs.values()):
            bad_proj += 1
        if kind == "clifford" and bar(a * b) != bar(b) * bar(a):
            bad_bar += 1
    checks.append(_check(f"associativity on {samples} rational triples", bad_assoc, 0, bad_assoc == 0))
    checks.append(_check(f"body projection equals sum of squares ({samples} samples)", bad_proj, 0, bad_proj == 0))
    checks.append(_check("bar reverses products", bad_bar, 0, bad_bar == 0))
    return checks


def suite_cohomology(cfg: RunConfig) -> list:
    loc = expand_local_charges(4)
    fer = expand_fermionic_nonlocal(1)
    bos = expand_bosonic_nonlocal(0)
    H1 = loc[0]

    def q(d):
        return apply_Q_density(d.super_form)

    checks = []
    for n, d in enumerate(loc):
        r = equiv_residual(q(d), 0)
        checks.append(_check(f"delta_Q {d.name} = 0 (n={n})", r, EQUIV_ATOL, r <= EQUIV_ATOL))
    r = equiv_residual(q(fer[0]), H1)
    checks.append(_check("delta_Q HNL_1/2 = H1", r, EQUIV_ATOL, r <= EQUIV_ATOL))
    rhs = charge(fer[1]) - Fraction(1, 2) * charge(H1) * charge(fer[0])
    r = equiv_residual(q(bos[0]), rhs)
    checks.append(_check("delta_Q HNL_1 = HNL_3/2 - H1 HNL_1/2 / 2", r, EQUIV_ATOL, r <= EQUIV_ATOL))
    return checks


def _load_run(dirs: list):
    """Read charges.csv and snapshots of simulate outputs; all hashes must agree."""
    hashes, runs = set(), []
    for d in dirs:
        d = Path(d)
        manifest = json.loads((d / "manifest.json").read_text())
        hashes.add(manifest["config_hash"])
        h, header, rows = read_csv(d / "charges.csv")
        hashes.add(h)
        snaps = []
        traj = d / "trajectory"
        if traj.is_dir():
            times = json.loads((traj / "times.json").read_text())
            hashes.add(times["config_hash"])
            for name in sorted(times["times"]):
                sh, sheader, srows = read_csv(d / name)
                hashes.add(sh)
                snaps.append((times["times"][name], sheader, np.array(srows)))
        runs.append({"manifest": manifest, "header": header, "rows": rows, "snapshots": snaps})
    if len(hashes) > 1:
        raise InputMismatchError(f"inputs carry mixed config hashes: {sorted(hashes)}")
    return runs


def _runs_for(cfg: RunConfig):
    if cfg["inputs"]:
        return [(r["header"], r["rows"]) for r in _load_run(cfg["inputs"])]
    return [simulate_one(cfg, s)[:2] for s in cfg["seeds"]]


def suite_conservation(cfg: RunConfig) -> list:
    tol = float(cfg["verify"]["drift_tol"])
    checks = []
    for header, rows in _runs_for(cfg):
        for key, cols in conserved_groups(cfg["system"], drift_groups(header)).items():
            d = relative_drift(rows, cols)
            checks.append(_check(f"{key} relative drift", d, tol, d < tol))
    return checks


def suite_negative_controls(cfg: RunConfig) -> list:
    thr = float(cfg["verify"]["nc_threshold"])
    checks = []
    for header, rows in _runs_for(cfg):
        cols = drift_groups(header).get("NCuxi", [])
        d = relative_drift(rows, cols)
        checks.append(_check("int u int xi flagged non-conserved", d, thr, d > thr, direction="above"))
    return checks


def suite_apriori(cfg: RunConfig) -> list:
    tol = float(cfg["verify"]["apriori_tol"])
    checks = []
    for header, rows in _runs_for(cfg):
        i = header.index("apriori_slack")
        worst = min(r[i] for r in rows)
        checks.append(_check("a-priori Sobolev bound slack", worst, -tol, worst >= -tol, direction="above"))
    return checks


def _state_from_snapshot(cfg: RunConfig, t, header, arr) -> FieldState:
    grid, alg = cfg.grid(), cfg.algebra()
    u, xi = alg.zeros(grid.N), alg.zeros(grid.N)
    labels = {alg.label(m): m for m in range(alg.dim)}
    for j, name in enumerate(header[1:], start=1):
        field_name, lab = name.split("_", 1)
        (u if field_name == "u" else xi)[labels[lab]] = arr[:, j]
    return FieldState(grid, t, u, xi, alg)


def suite_gardner(cfg: RunConfig) -> list:
    K = int(cfg["verify"]["K"])
    res = gardner_roundtrip_residual(K)
    checks = [_check(f"symbolic round trip through eps^{K}", len(res.terms), 0, res.is_zero())]
    run = None
    if cfg["inputs"]:
        run = _load_run(cfg["inputs"])[0]
        # physics comes from the run that produced the inputs
        cfg = RunConfig(run["manifest"]["config"])
    if cfg["system"] != "gardner":
        return checks
    eps = float(cfg["eps"])
    if run is not None:
        if len(run["snapshots"]) < 2:
            raise ConfigError("gardner-roundtrip needs a simulate output with trajectory snapshots")
        first, last = run["snapshots"][0], run["snapshots"][-1]
        chi0 = _state_from_snapshot(cfg, *first)
        chiT = _state_from_snapshot(cfg, *last)
    else:
        chi0 = initial_state(cfg, cfg["seeds"][0])
        chiT = integrate(chi0, cfg.system(), cfg.scheme(), float(cfg["T"]))[-1]
    phi = integrate(gardner_map(chi0, eps), make_system("skdv"), cfg.scheme(), chiT.t - chi0.t)[-1]
    mapped = gardner_map(chiT, eps)
    err = max(float(np.max(np.abs(mapped.u - phi.u))), float(np.max(np.abs(mapped.xi - phi.xi))))
    tol = float(cfg["verify"]["gardner_tol"])
    checks.append(_check(f"Gardner map commutes with the flow at t={chiT.t:g}", err, tol, err < tol))
    return checks


SUITE_FUNCS = {
    "algebra": suite_algebra,
    "cohomology": suite_cohomology,
    "gardner-roundtrip": suite_gardner,
    "conservation": suite_conservation,
    "negative-controls": suite_negative_controls,
    "apriori": suite_apriori,
}


def cmd_verify(cfg: RunConfig, out: Path, suite: str) -> int:
    if suite not in SUITE_FUNCS:
        raise ConfigError(f"suite must be one of {SUITES}")
    checks = SUITE_FUNCS[suite](cfg)
    passed = bool(checks) and all(c["passed"] for c in checks)
    report = {"config_hash": cfg.hash, "suite": suite, "passed": passed, "checks": checks}
    write_json(out / f"verify_{suite}.json", report)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: measured {c['measured']:.3e} (tol {c['tolerance']:.1e})")
    return EXIT_OK if passed else EXIT_CHECK


# -- stability ---------------------------------------------------------------------

def _stats(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return {"min": None, "median": None, "max": None}
    return {"min": min(vals), "median": statistics.median(vals), "max": max(vals)}


def stability_summary(records) -> list:
    rows = []
    keys = sorted({(r.mode, r.delta) for r in records})
    for mode, delta in keys:
        sel = [r for r in records if r.mode == mode and r.delta == delta]
        rows.append({
            "mode": mode, "delta": delta, "runs": len(sel),
            "K": _stats([r.ratio for r in sel]),
            "l": _stats([r.l_estimate for r in sel]),
            "sup_dII": _stats([r.sup_dII for r in sel]),
            "dM_drift": _stats([r.dM_drift for r in sel]),
        })
    return rows


def cmd_stability(cfg: RunConfig, out: Path) -> int:
    st = cfg["stability"]
    sc = StabilityConfig(C=float(st["C"]), L=float(st["L"]), N=int(st["N"]), dt=float(st["dt"]),
                         T=float(st["T"]), sample_interval=float(st["sample_interval"]),
                         n_channels=int(st["n_channels"]),
                         trajectory_decay_tol=float(st["trajectory_decay_tol"]))
    try:
        records = stability_experiment(sc.C, st["deltas"], st["seeds"], st["modes"], sc)
    except ConstraintError as exc:
        raise ConfigError(str(exc)) from None
    write_json(out / "stability.json", [{"config_hash": cfg.hash, **r.to_dict()} for r in records])
    summary = stability_summary(records)
    header = ["mode", "delta", "runs"] + [f"{k}_{s}" for k in ("K", "l", "sup_dII", "dM_drift")
                                          for s in ("min", "median", "max")]
    rows = []
    for row in summary:
        vals = [row["mode"], fmt(row["delta"]), str(row["runs"])]
        for k in ("K", "l", "sup_dII", "dM_drift"):
            vals += ["" if row[k][s] is None else fmt(row[k][s]) for s in ("min", "median", "max")]
        rows.append(vals)
    write_csv(out / "stability_summary.csv", cfg.hash, header, rows)
    print(f"{'mode':<12s}{'delta':>10s}{'runs':>6s}{'K med':>12s}{'K max':>12s}{'l min':>12s}")
    for row in summary:
        lmin = row["l"]["min"]
        print(f"{row['mode']:<12s}{row['delta']:>10.1e}{row['runs']:>6d}{row['K']['median']:>12.4f}"
              f"{row['K']['max']:>12.4f}{'-' if lmin is None else format(lmin, '.4g'):>12s}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="superkdv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("derive", "simulate", "verify", "stability"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="single seed (overrides seeds)")
        if name == "verify":
            sp.add_argument("--suite", required=True, choices=SUITES)
        if name == "derive":
            sp.add_argument("--family", choices=FAMILIES)
            sp.add_argument("--order", "-K", type=int)
    return p


def _overrides(args) -> dict:
    o = {}
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        o["seeds"] = [args.seed]
        o["stability"] = {"seeds": [args.seed]}
    if args.command == "derive":
        d = {}
        if args.family:
            d["family"] = args.family
        if args.order is not None:
            d["K"] = args.order
        if d:
            o["derive"] = d
    return o


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        out = Path(args.out or cfg["output_dir"])
        if args.command == "derive":
            return cmd_derive(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.suite)
        return cmd_stability(cfg, out)
    except BlowUpError as exc:
        log.error("%s (last good time %g)", exc, exc.t_last)
        return EXIT_BLOWUP
    except (DecayContractError, QuadratureContractError) as exc:
        log.error("decay contract violated: %s", exc)
        return EXIT_CHECK
    except (ConfigError, ConfigurationError, ValueError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
