import hashlib
import json
import subprocess
import sys

import pytest
import yaml

from otocsim.cli import main, prepare
from otocsim.experiments import EXPERIMENTS
from otocsim.io import load_config, preset_names

SMALL_FOTOC = {
    "experiment": "dimer-fotoc",
    "model": {"N": 20, "NU": -2.0},
    "state": {"z": 0.0, "phi": 0.0},
    "fotoc": {"generator": "Sx", "delta": 0.01},
    "time": {"t_max": 5.0, "dt": 0.1},
    "analysis": {"fit": {"target": "de", "lo": 1e-3, "hi": 0.1}, "stats_window": [2.0, 5.0]},
}

SMALL_WIGNER = {
    "experiment": "dimer-wigner",
    "model": {"N": 10, "NU": -2.0},
    "state": {"z": 0.0, "phi": 0.0},
    "time": {"t_max": 0.5, "dt": 0.1},
    "wigner": {"samples": 200},
}


def write_config(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in EXPERIMENTS:
        assert name in out
    assert "saddle-fotoc" in out


def test_every_preset_validates():
    for name in preset_names():
        cfg, exp, _, _ = prepare(name)
        assert exp.name == cfg["experiment"]


def test_run_writes_outputs_and_manifest(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write_config(tmp_path / "c.yaml", SMALL_FOTOC), "--out-dir", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    names = [f["path"] for f in manifest["files"]]
    assert names == sorted(["fotoc.csv", "observables.csv", "summary.json"])
    for f in manifest["files"]:
        assert hashlib.sha256((out / f["path"]).read_bytes()).hexdigest() == f["sha256"]
    assert manifest["config"]["model"]["N"] == 20
    assert manifest["config"]["output"]["dir"] == str(out)
    header = (out / "fotoc.csv").read_text().splitlines()
    assert header[0] == "# label: fotoc" and "t,value" in header
    summary = json.loads((out / "summary.json").read_text())
    assert summary["ude"] == pytest.approx(1e-4 * 20 * 22 / 12)


def test_repeat_runs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", SMALL_WIGNER)
    for d in ("a", "b"):
        assert main(["run", cfg, "--out-dir", str(tmp_path / d), "--seed", "7"]) == 0
    for f in ("fotoc_tw.csv", "fotoc_exact.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert main(["run", cfg, "--out-dir", str(tmp_path / "c"), "--seed", "8"]) == 0
    assert (tmp_path / "a" / "fotoc_tw.csv").read_bytes() != (tmp_path / "c" / "fotoc_tw.csv").read_bytes()


def test_seed_and_threads_recorded(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.yaml", SMALL_WIGNER)
    monkeypatch.setenv("OTOCSIM_THREADS", "2")
    assert main(["run", cfg, "--out-dir", str(tmp_path / "o"), "--seed", "3"]) == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["config"]["seed"] == 3 and m["threads"] == 2
    assert main(["run", cfg, "--out-dir", str(tmp_path / "p"), "--seed", "3", "--threads", "1"]) == 0
    assert json.loads((tmp_path / "p" / "manifest.json").read_text())["threads"] == 1


@pytest.mark.parametrize("mutate,key", [
    (lambda c: c.pop("model"), "model"),
    (lambda c: c.update(experiment="nope"), "experiment"),
    (lambda c: c["model"].update(U=0.1), "model.NU"),
    (lambda c: c["model"].update(N=0), "model.N"),
    (lambda c: c["time"].update(dt="fast"), "time.dt"),
    (lambda c: c["fotoc"].update(mode="exact", delta=0.5), "fotoc.delta"),
    (lambda c: c["analysis"].update(stats_window=[5.0, 1.0]), "analysis.stats_window"),
])
def test_config_errors_exit_2_without_outputs(tmp_path, capsys, mutate, key):
    cfg = json.loads(json.dumps(SMALL_FOTOC))
    mutate(cfg)
    out = tmp_path / "out"
    assert main(["run", write_config(tmp_path / "c.yaml", cfg), "--out-dir", str(out)]) == 2
    assert key in capsys.readouterr().err
    assert not out.exists()


def test_missing_seed_is_config_error(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", write_config(tmp_path / "c.yaml", SMALL_WIGNER), "--out-dir", str(out)]) == 2
    assert "seed" in capsys.readouterr().err
    assert not out.exists()


def test_bad_thread_settings(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.yaml", SMALL_FOTOC)
    assert main(["run", cfg, "--out-dir", str(tmp_path / "a"), "--threads", "0"]) == 2
    monkeypatch.setenv("OTOCSIM_THREADS", "many")
    assert main(["run", cfg, "--out-dir", str(tmp_path / "b")]) == 2
    assert not (tmp_path / "a").exists() and not (tmp_path / "b").exists()


def test_unreadable_configs(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [1, 2\n")
    assert main(["run", str(bad), "--out-dir", str(tmp_path / "o")]) == 2
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    assert main(["run", str(tmp_path / "list.yaml")]) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    cfg = {
        "experiment": "dicke-diag",
        "model": {"N": 40, "omega": 0.5, "delta": 1.0, "gamma": 1.5, "n_max": 6, "delta_n": 2},
    }
    assert main(["run", write_config(tmp_path / "c.yaml", cfg), "--out-dir", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_preset_lookup():
    assert load_config("saddle-fotoc")["experiment"] == "dimer-fotoc"
    assert load_config("preset:saddle-fotoc") == load_config("saddle-fotoc")


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "otocsim", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "dimer-fotoc" in r.stdout
    r = subprocess.run([sys.executable, "-m", "otocsim", "run", str(tmp_path / "none.yaml")],
                       capture_output=True, text=True)
    assert r.returncode == 2
