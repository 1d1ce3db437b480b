import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from deformspde.cli import main


def run(cwd, *args, env=None):
    full_env = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "deformspde", *map(str, args)], cwd=cwd,
                          capture_output=True, text=True, env=full_env)


def ok(cwd, *args, **kw):
    r = run(cwd, *args, **kw)
    assert r.returncode == 0, r.stderr
    return json.loads(r.stdout.strip().splitlines()[-1])


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    ok(d, "synthesize", "--preset", "identity", "--alpha", 3, "--extent", 5, 5, "--nx", 6, "--ny", 6,
       "--n", 30, "--raw-mean", 1.0, "--out", "raw.csv", "--truth", "truth.json", "--mesh-out", "sim", "--seed", 1)
    pts = np.column_stack([np.linspace(0.5, 4.5, 20), np.full(20, 2.5)])
    with open(d / "route.csv", "w") as fh:
        fh.write("x,y\n" + "".join(f"{x},{y}\n" for x, y in pts.tolist()))
    return d


def test_ingest_outputs(work):
    s = ok(work, "ingest", "raw.csv", "--out", "std.csv", "--stats", "stats.json", "--train", "tr.csv",
           "--test", "te.csv")
    assert s["ocean_cells"] == 36
    for f in ("std.csv", "stats.json", "tr.csv", "te.csv", "std.csv.manifest.json"):
        assert (work / f).exists()
    man = json.loads((work / "std.csv.manifest.json").read_text())
    assert man["format"] == "deformspde-manifest" and man["command"] == "ingest"
    assert set(man["inputs"]) == {"raw.csv"} and "std.csv" in man["outputs"]
    assert {"numpy", "scipy", "deformspde"} <= set(man["versions"]) and man["wall_time_s"] >= 0


def test_fit_lrt_chain(work):
    ok(work, "mesh", "--data", "raw.csv", "--out", "m")
    st = ok(work, "fit", "--data", "raw.csv", "--mesh", "m", "--k", 1, "--alpha", 3, "--stationary",
            "--max-iter", 3, "--out", "st.json")
    ns = ok(work, "fit", "--data", "raw.csv", "--mesh", "m", "--k", 1, "--alpha", 3, "--init", "st.json",
            "--max-iter", 2, "--out", "ns.json")
    assert (work / "st.report.json").exists()
    assert ns["log_likelihood"] >= st["log_likelihood"] - 1e-6
    res = ok(work, "lrt", "--stationary", "st.report.json", "--nonstationary", "ns.report.json", "--out", "lrt.json")
    assert res["df"] == 9
    out = json.loads((work / "lrt.json").read_text())
    assert set(out) == {"lambda", "df", "critical_value", "reject", "significance"}
    assert out["reject"] == (out["lambda"] < out["critical_value"])


def test_simulate_and_correlate(work):
    ok(work, "simulate", "--params", "truth.json", "--mesh", "sim", "--like", "raw.csv", "--n", 4, "--out", "s.csv")
    # JSON header line followed by one line per replicate
    assert len((work / "s.csv").read_text().splitlines()) == 1 + 4
    ok(work, "correlate", "--params", "truth.json", "--mesh", "sim", "--node", 10, "--out", "c.csv")
    r = rows(work / "c.csv")
    assert list(r[0]) == ["node", "x", "y", "correlation"]
    assert float(r[10]["correlation"]) == pytest.approx(1.0)
    ok(work, "correlate", "--params", "truth.json", "--mesh", "sim", "--point", 2.5, 2.5, "--out", "cp.csv")


def test_exceed_table(work):
    ok(work, "exceed", "--params", "truth.json", "--mesh", "sim", "--route", "route.csv", "--data", "raw.csv",
       "--n-sim", 200, "--batches", 2, "--out", "ex.csv")
    r = rows(work / "ex.csv")
    assert len(r) == 21
    assert float(r[0]["threshold_m"]) == 2.0 and float(r[-1]["threshold_m"]) == 12.0
    assert {"rice_bound", "simulated", "sim_lo", "sim_hi", "data"} <= set(r[0])
    sim = [float(x["simulated"]) for x in r]
    assert all(a >= b for a, b in zip(sim, sim[1:]))


def test_fatigue_files(work):
    ok(work, "fatigue", "--params", "truth.json", "--mesh", "sim", "--route", "route.csv", "--data", "raw.csv",
       "--metres-per-unit", 1e5, "--n-sim", 5, "--out", "fat")
    summary = json.loads((work / "fat_summary.json").read_text())
    assert {"data", "dependent", "independent"} <= set(summary)
    assert len(rows(work / "fat_damage.csv")) > 0 and (work / "fat_qq.csv").exists()


def test_deform(work):
    s = ok(work, "deform", "--params", "truth.json", "--mesh", "sim", "--out", "d.csv")
    assert s["folds"] == 0 and s["unreached"] == 0
    r = rows(work / "d.csv")
    assert len(r) == len((work / "sim_nodes.csv").read_text().splitlines()) - 2


def test_determinism_and_rerun(work):
    args = ("--preset", "smooth", "--extent", 4, 4, "--nx", 5, "--ny", 5, "--n", 7, "--seed", 3, "--truth")
    ok(work, "synthesize", *args, "t1.json", "--out", "a1.csv")
    ok(work, "synthesize", *args, "t2.json", "--out", "a2.csv")
    assert (work / "a1.csv").read_bytes() == (work / "a2.csv").read_bytes()
    assert (work / "t1.json").read_bytes() == (work / "t2.json").read_bytes()
    ok(work, "synthesize", *args[:-3], "--seed", 4, "--truth", "t3.json", "--out", "a3.csv")
    assert (work / "a1.csv").read_bytes() != (work / "a3.csv").read_bytes()
    r = run(work, "rerun", "a1.csv.manifest.json", "--check")
    assert r.returncode == 0, r.stderr
    (work / "a1.csv").write_text("tampered\n")
    assert run(work, "rerun", "a1.csv.manifest.json", "--check").returncode == 0
    assert (work / "a1.csv").read_bytes() == (work / "a2.csv").read_bytes()


def test_zero_replicates(work):
    ok(work, "synthesize", "--preset", "identity", "--extent", 4, 4, "--nx", 4, "--ny", 4, "--n", 0,
       "--out", "empty.csv", "--truth", "te.json")
    lines = (work / "empty.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("#")


def test_threads_environment(work):
    ok(work, "ingest", "raw.csv", "--out", "t.csv", env={"DEFORMSPDE_THREADS": "3"})
    assert json.loads((work / "t.csv.manifest.json").read_text())["threads"] == 3
    ok(work, "ingest", "raw.csv", "--out", "t.csv", "--threads", 2, env={"DEFORMSPDE_THREADS": "3"})
    assert json.loads((work / "t.csv.manifest.json").read_text())["threads"] == 2


def test_exit_codes(work, capsys):
    r = run(work, "fit", "--data", "missing.csv", "--mesh", "m", "--out", "x.json")
    assert r.returncode == 2 and r.stderr.count("\n") == 1 and "missing.csv" in r.stderr
    assert run(work, "synthesize", "--n", -1, "--out", "x.csv", "--truth", "x.json").returncode == 2
    assert run(work, "fit", "--data", "raw.csv").returncode == 2
    assert run(work, "exceed", "--params", "st_missing.json", "--mesh", "sim", "--route", "route.csv",
               "--data", "raw.csv", "--out", "e.csv").returncode == 2
    # a node outside every triangle makes the precision matrix singular
    (work / "bad_nodes.csv").write_text((work / "sim_nodes.csv").read_text() + "100.0,100.0\n")
    (work / "bad_triangles.csv").write_text((work / "sim_triangles.csv").read_text())
    r = run(work, "correlate", "--params", "truth.json", "--mesh", "bad", "--node", 3, "--out", "bad.csv")
    assert r.returncode == 3 and "numerical failure" in r.stderr and r.stderr.count("\n") == 1
    os.chdir(work)
    assert main(["lrt", "--stationary", "nope.json", "--nonstationary", "nope.json", "--out", "l.json"]) == 2
