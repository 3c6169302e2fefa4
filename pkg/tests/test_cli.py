import json
import math
from pathlib import Path

import pytest

from superkdv.cli import (
    EXIT_BLOWUP,
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_OK,
    RunConfig,
    main,
    read_csv,
)

SMALL = {
    "system": "broken",
    "algebra": {"kind": "clifford", "n": 2},
    "grid": {"L": 20 * math.pi, "N": 256},
    "scheme": {"method": "IFRK4", "dt": 1e-3, "dealias": True},
    "T": 0.2,
    "sample_interval": 0.1,
}


def write_config(tmp_path, name="cfg.json", **fields):
    data = {**SMALL, **fields}
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def run(*argv):
    return main([str(a) for a in argv])


# -- derive --------------------------------------------------------------------------

def test_derive_local_K2(tmp_path):
    out = tmp_path / "d"
    assert run("derive", "--family", "local", "-K", 2, "--out", out) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["H1.json", "H3.json", "local_K2.txt"]
    h1 = json.loads((out / "H1.json").read_text())
    assert h1["config_hash"] == RunConfig.load(None, {"derive": {"family": "local", "K": 2}}).hash
    assert h1["name"] == "H1"


def test_derive_local_K0_and_fermionic(tmp_path):
    assert run("derive", "--family", "local", "-K", 0, "--out", tmp_path / "a") == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "a").glob("*.json")) == ["H1.json"]
    assert run("derive", "--family", "fermionic_nl", "-K", 0, "--out", tmp_path / "b") == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "b").glob("*.json")) == ["HNL_half.json"]


def test_derive_is_idempotent(tmp_path):
    run("derive", "--family", "local", "-K", 2, "--out", tmp_path / "a")
    first = (tmp_path / "a" / "H3.json").read_bytes()
    run("derive", "--family", "local", "-K", 2, "--out", tmp_path / "a")
    assert (tmp_path / "a" / "H3.json").read_bytes() == first


def test_derive_rejects_order_beyond_cap(tmp_path):
    assert run("derive", "--family", "local", "-K", 9, "--out", tmp_path) == EXIT_CONFIG


# -- simulate --------------------------------------------------------------------------

def test_simulate_soliton(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert run("simulate", "--config", cfg, "--out", out) == EXIT_OK
    h, header, rows = read_csv(out / "charges.csv")
    assert h == RunConfig.load(cfg).hash
    assert header[:6] == ["t", "H_half_1", "H_half_2", "H1", "V", "M"]
    assert "NLxixi_12" in header and "NCuxi_1" in header and "drift_NCuxi" in header
    assert [r[0] for r in rows] == pytest.approx([0.0, 0.1, 0.2])
    for name in ("H1", "V", "M"):
        assert rows[-1][header.index(f"drift_{name}")] < 1e-6
    H1 = rows[0][header.index("H1")]
    assert H1 == pytest.approx(12.0, abs=1e-10)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == h
    for f in manifest["files"]:
        assert (out / f).exists()


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, perturbation={"delta": 0.1, "mode": "free"})
    run("simulate", "--config", cfg, "--out", tmp_path / "a")
    run("simulate", "--config", cfg, "--out", tmp_path / "b")
    a_files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    b_files = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert a_files == b_files
    for rel in a_files:
        if rel.name == "manifest.json":
            ma = json.loads((tmp_path / "a" / rel).read_text())
            mb = json.loads((tmp_path / "b" / rel).read_text())
            ma.pop("created"), mb.pop("created")
            assert ma == mb
        else:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_every_output_carries_the_hash(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    run("simulate", "--config", cfg, "--out", out)
    h = RunConfig.load(cfg).hash
    for p in out.rglob("*"):
        if p.suffix == ".csv":
            assert p.read_text().startswith(f"# config_hash={h}\n")
        elif p.suffix == ".json":
            assert json.loads(p.read_text())["config_hash"] == h


def test_zero_state_gives_zero_charges(tmp_path):
    cfg = write_config(tmp_path, initial={"type": "zero"})
    out = tmp_path / "z"
    assert run("simulate", "--config", cfg, "--out", out) == EXIT_OK
    _, header, rows = read_csv(out / "charges.csv")
    for r in rows:
        assert all(v == 0.0 for v in r[1:])


def test_multiple_seeds_get_own_directories(tmp_path):
    cfg = write_config(tmp_path, seeds=[0, 1], perturbation={"delta": 0.05, "mode": "free"},
                       write_trajectory=False)
    out = tmp_path / "m"
    assert run("simulate", "--config", cfg, "--out", out) == EXIT_OK
    a = (out / "seed_0" / "charges.csv").read_text()
    b = (out / "seed_1" / "charges.csv").read_text()
    assert a != b


def test_seed_flag_overrides(tmp_path):
    cfg = write_config(tmp_path, seeds=[0, 1], perturbation={"delta": 0.05, "mode": "free"},
                       write_trajectory=False)
    out = tmp_path / "s"
    assert run("simulate", "--config", cfg, "--seed", 1, "--out", out) == EXIT_OK
    assert (out / "charges.csv").exists() and not (out / "seed_0").exists()


def test_drift_alarm_gives_check_failure(tmp_path):
    cfg = write_config(tmp_path, perturbation={"delta": 0.5, "mode": "free"}, drift_alarm=1e-14,
                       write_trajectory=False)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "x") == EXIT_CHECK


def test_blow_up_exit_code(tmp_path):
    cfg = write_config(tmp_path, system="kdv", algebra={"kind": "real"}, initial={"kappa": 5.0},
                       scheme={"dt": 0.01}, T=5.0, sample_interval=0.01, write_trajectory=False)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "x") == EXIT_BLOWUP


@pytest.mark.parametrize("fields", [
    {"bogus": 1},
    {"system": "nls"},
    {"grid": {"N": 100}},
    {"scheme": {"method": "euler"}},
    {"system": "gardner"},
    {"system": "skdv"},  # Clifford coefficients are rejected
    {"charge_files": ["/nonexistent.json"]},
    {"seeds": []},
])
def test_config_errors(tmp_path, fields):
    cfg = write_config(tmp_path, **fields)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "x") == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert run("simulate", "--config", tmp_path / "nope.json") == EXIT_CONFIG


def test_hash_ignores_output_dir():
    assert RunConfig.load(None, {"output_dir": "a"}).hash == RunConfig.load(None, {"output_dir": "b"}).hash
    assert RunConfig.load(None, {"T": 1.0}).hash != RunConfig.load(None).hash


# -- verify --------------------------------------------------------------------------

@pytest.mark.parametrize("suite", ["algebra", "cohomology"])
def test_exact_suites_pass(tmp_path, suite):
    assert run("verify", "--suite", suite, "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / f"verify_{suite}.json").read_text())
    assert report["passed"] and report["checks"]
    for c in report["checks"]:
        assert {"name", "measured", "tolerance", "passed"} <= set(c)


def test_verify_consumes_simulate_output(tmp_path):
    cfg = write_config(tmp_path)
    run("simulate", "--config", cfg, "--out", tmp_path / "run")
    vcfg = write_config(tmp_path, "v.json", inputs=[str(tmp_path / "run")])
    assert run("verify", "--suite", "conservation", "--config", vcfg, "--out", tmp_path / "v") == EXIT_OK
    assert run("verify", "--suite", "apriori", "--config", vcfg, "--out", tmp_path / "v") == EXIT_OK
    # a bare soliton has no fermion, so the negative control is not flagged
    assert run("verify", "--suite", "negative-controls", "--config", vcfg, "--out", tmp_path / "v") == EXIT_CHECK


def test_verify_refuses_mixed_hashes(tmp_path):
    a = write_config(tmp_path, "a.json")
    b = write_config(tmp_path, "b.json", T=0.1)
    run("simulate", "--config", a, "--out", tmp_path / "ra")
    run("simulate", "--config", b, "--out", tmp_path / "rb")
    v = write_config(tmp_path, "v.json", inputs=[str(tmp_path / "ra"), str(tmp_path / "rb")])
    assert run("verify", "--suite", "conservation", "--config", v, "--out", tmp_path / "v") == EXIT_CONFIG


def test_unknown_suite_is_rejected(tmp_path):
    with pytest.raises(SystemExit):
        run("verify", "--suite", "everything", "--out", tmp_path)


# -- stability -------------------------------------------------------------------------

def test_stability_zero_delta_row(tmp_path):
    cfg = write_config(tmp_path, stability={"deltas": [0.0], "seeds": [0], "modes": ["constrained", "free"],
                                            "N": 1024, "T": 0.5, "sample_interval": 0.25})
    out = tmp_path / "st"
    assert run("stability", "--config", cfg, "--out", out) == EXIT_OK
    records = json.loads((out / "stability.json").read_text())
    assert {r["mode"] for r in records} == {"constrained", "free"}
    for r in records:
        assert r["d_I0"] == 0.0 and r["sup_dII"] < 1e-6 and r["ratio"] == 0.0
    h, header, rows = read_csv_text(out / "stability_summary.csv")
    assert h == RunConfig.load(cfg).hash
    assert "K_median" in header and "l_min" in header and len(rows) == 2


def read_csv_text(path: Path):
    lines = path.read_text().splitlines()
    h = lines[0].split("=", 1)[1]
    header = lines[1].split(",")
    return h, header, [ln.split(",") for ln in lines[2:]]
