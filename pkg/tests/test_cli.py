import configparser
import csv
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from pxsym.cli import EXIT_ASSERT, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, emit_plot_data, main
from pxsym.config import parse_config
from pxsym.errors import MissingRun

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def _run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def _run_dir(stdout):
    line = [l for l in stdout.splitlines() if l.startswith("run directory: ")][-1]
    return Path(line.split(": ", 1)[1])


def _manifest(run_dir):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read(run_dir / "manifest.txt")
    return cp


def _stable_text(run_dir):
    return "\n".join(l for l in (run_dir / "manifest.txt").read_text().splitlines() if not l.startswith("wall_clock_s"))


def test_suite_passes_and_is_deterministic(tmp_path, capsys):
    codes, dirs = [], []
    for _ in range(2):
        code, out, _ = _run(["suite", "--samples", "20", "--output-dir", str(tmp_path)], capsys)
        codes.append(code)
        dirs.append(_run_dir(out))
    assert codes == [EXIT_OK, EXIT_OK]
    assert dirs[0] != dirs[1]  # never overwritten
    man = _manifest(dirs[0])
    assert len(man["assertions"]) >= 12 and set(man["assertions"].values()) == {"PASS"}
    assert _stable_text(dirs[0]) == _stable_text(dirs[1])


def test_mp_symmetric_interval_end_to_end(tmp_path, capsys):
    code, out, _ = _run(["run", str(CONFIG_DIR / "mp_symmetric_interval.ini"), "--output-dir", str(tmp_path)], capsys)
    assert code == EXIT_OK
    rd = _run_dir(out)
    man = _manifest(rd)
    assert float(man["results.solve"]["phi_u"]) > 0
    assert man["assertions"]["phi_gap_within_tol"] == "PASS"
    assert rd.name.startswith("mp_symmetric_") and rd.name.endswith("_s0")
    # config echo re-parses to the same configuration
    echo = {s[len("config."):]: dict(man[s]) for s in man.sections() if s.startswith("config.")}
    original = parse_config((CONFIG_DIR / "mp_symmetric_interval.ini").read_text(), CONFIG_DIR)
    original.sections["experiment"]["output_dir"] = str(tmp_path.resolve())
    assert echo == original.sections

    plots = emit_plot_data(rd)
    rows = list(csv.reader(open(plots / "trace.csv")))
    assert rows[0] == ["iter", "phi", "residual", "max_point_index"]
    assert len(rows) - 1 == int(man["results.solve"]["iterations"]) + 1
    first = {p.name: p.read_bytes() for p in plots.iterdir()}
    code, _, _ = _run(["emit-plots", str(rd)], capsys)
    assert code == EXIT_OK
    assert {p.name: p.read_bytes() for p in plots.iterdir()} == first


def test_radial_stability_plots(tmp_path, capsys):
    code, out, _ = _run(["run", str(CONFIG_DIR / "radial_stability_disk.ini"), "--resolution", "33",
                         "--output-dir", str(tmp_path)], capsys)
    assert code == EXIT_OK
    rd = _run_dir(out)
    plots = emit_plot_data(rd)
    header = next(csv.reader(open(plots / "radial_profile.csv")))
    assert header == ["r", "u_min", "u_mean", "u_max"]
    assert next(csv.reader(open(plots / "eigenfunction_profile.csv"))) == ["r", "phi1_min", "phi1_mean", "phi1_max"]
    assert next(csv.reader(open(plots / "angular_deviation.csv"))) == ["r", "deviation_over_osc"]
    assert len(list(csv.reader(open(plots / "radial_profile.csv")))) > 10


def test_seed_override_recorded(tmp_path, capsys):
    code, out, _ = _run(["run", str(CONFIG_DIR / "mp_symmetric_interval.ini"), "--seed", "7",
                         "--resolution", "33", "--output-dir", str(tmp_path)], capsys)
    assert code == EXIT_OK
    man = _manifest(_run_dir(out))
    assert man["run"]["seed"] == "7" and man["config.grid"]["resolution"] == "33"


def test_missing_grid_is_config_error(tmp_path, capsys):
    text = (CONFIG_DIR / "mp_symmetric_disk.ini").read_text()
    start = text.index("[grid]")
    end = text.index("[problem]")
    bad = tmp_path / "bad.ini"
    bad.write_text(text[:start] + text[end:])
    code, _, err = _run(["run", str(bad), "--output-dir", str(tmp_path)], capsys)
    assert code == EXIT_CONFIG and "grid" in err


def test_missing_config_file(capsys):
    code, _, err = _run(["run", "/nonexistent/config.ini"], capsys)
    assert code == EXIT_CONFIG and "not found" in err


def test_assertion_failure_exit(tmp_path, capsys):
    text = (CONFIG_DIR / "mp_symmetric_interval.ini").read_text()
    text = text.replace("[solver]", "[solver]\nmax_iters = 2")
    cfg = tmp_path / "short.ini"
    cfg.write_text(text)
    code, out, _ = _run(["run", str(cfg), "--output-dir", str(tmp_path)], capsys)
    assert code == EXIT_ASSERT
    assert "FAIL converged" in out
    assert _manifest(_run_dir(out))["summary"]["status"] == "FAIL"


def test_runtime_error_exit(tmp_path, capsys):
    text = (CONFIG_DIR / "radial_stability_disk.ini").read_text()
    text = text.replace("p = radial:quadratic, 2.0, 1.0", "p = constant:1.5")
    cfg = tmp_path / "p15.ini"
    cfg.write_text(text)
    code, _, err = _run(["run", str(cfg), "--resolution", "33", "--output-dir", str(tmp_path)], capsys)
    assert code == EXIT_RUNTIME and "ExponentBelowTwo" in err


def test_emit_plots_missing_run(tmp_path, capsys):
    code, _, err = _run(["emit-plots", str(tmp_path / "nothing")], capsys)
    assert code == EXIT_RUNTIME
    with pytest.raises(MissingRun):
        emit_plot_data(tmp_path)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "pxsym", "suite", "--samples", "10", "--output-dir", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "PASS polarization_idempotence" in res.stdout


def test_pure_python_backend_switch(tmp_path):
    import os
    env = dict(os.environ, PXSYM_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", "from pxsym import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env)
    assert res.stdout.strip() == "python"
