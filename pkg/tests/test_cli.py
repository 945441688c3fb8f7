import json
import subprocess
import sys

import numpy as np
import pytest

from mvtda.array_core import ImageStack, save_stack
from mvtda.cli import main
from mvtda.simgen import cylinder_spec, truth_stack


@pytest.fixture
def cylinder(tmp_path):
    return save_stack(truth_stack(cylinder_spec()), tmp_path / "cyl")


def test_simulate_then_run(tmp_path, capsys):
    assert main(["simulate", "--pattern", "A2", "--seed", "1", "--out", str(tmp_path / "sim")]) == 0
    manifest = tmp_path / "sim" / "frames.json"
    assert manifest.exists() and (tmp_path / "sim" / "truth_table.json").exists()
    rc = main(["run", "--input", str(manifest), "--smooth-span", "0.03", "--permutations", "99",
               "--out", str(tmp_path / "out"), "--no-plots"])
    assert rc == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["reject"] is True
    assert not (tmp_path / "out" / "zigzag.svg").exists()
    assert "reject=true" in capsys.readouterr().out


def test_test_subcommand(cylinder, tmp_path):
    rc = main(["test", "--input", str(cylinder), "--smooth-degree", "1", "--smooth-span", "0.3",
               "--permutations", "99", "--seed", "2", "--out", str(tmp_path),
               "--svg", str(tmp_path / "null.svg")])
    assert rc == 0
    res = json.loads((tmp_path / "maxtest.json").read_text())
    assert res["reject"] and res["permutations"] == 99
    assert (tmp_path / "null.svg").read_text().startswith("<svg")


def test_seed_from_environment(cylinder, tmp_path, monkeypatch):
    monkeypatch.setenv("MVTDA_SEED", "9")
    main(["test", "--input", str(cylinder), "--no-smooth", "--permutations", "99",
          "--out", str(tmp_path / "a.json")])
    assert json.loads((tmp_path / "a.json").read_text())["seed"] == 9


def test_zigzag_from_masks_and_from_threshold(cylinder, tmp_path):
    assert main(["zigzag", "--input", str(cylinder), "--threshold", "10", "--no-smooth",
                 "--out", str(tmp_path / "z1")]) == 0
    rows = (tmp_path / "z1" / "zigzag.csv").read_text().splitlines()
    assert "1,3,5,1.0,2.0" in rows
    assert main(["zigzag", "--masks", str(tmp_path / "z1" / "masks"), "--time-spacing", "1",
                 "--out", str(tmp_path / "z2"), "--svg", str(tmp_path / "z.svg")]) == 0
    assert (tmp_path / "z2" / "zigzag.csv").read_text() == "\n".join(rows) + "\n"


def test_pcvr_subcommand(tmp_path):
    f = np.full((5, 5, 2), 10.0)
    f[1:4, 1:4] = 2.0
    manifest = save_stack(ImageStack(f), tmp_path / "in")
    assert main(["pcvr", "--input", str(manifest), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "pcvr_tracks.csv").read_text().splitlines()
    assert len(lines) >= 3


def test_study_with_no_replicates(tmp_path):
    assert main(["study", "--replicates", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "study.json").exists()


def test_missing_input_exit_code(tmp_path, capsys):
    assert main(["run", "--input", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_span_too_small_exit_code(cylinder, tmp_path):
    assert main(["test", "--input", str(cylinder), "--smooth-span", "0.05",
                 "--out", str(tmp_path)]) == 2


def test_rank_deficient_fit_exit_code(tmp_path):
    manifest = save_stack(ImageStack(np.zeros((1, 12, 3))), tmp_path / "in")
    assert main(["test", "--input", str(manifest), "--smooth-span", "1.0",
                 "--out", str(tmp_path)]) == 3


def test_zigzag_needs_one_source(tmp_path):
    assert main(["zigzag", "--out", str(tmp_path)]) == 2


def test_unknown_pattern_exit_code(tmp_path):
    assert main(["simulate", "--pattern", "Z", "--out", str(tmp_path)]) == 2


def test_bad_thread_count(cylinder):
    with pytest.raises(SystemExit) as exc:
        main(["test", "--input", str(cylinder), "--threads", "0"])
    assert exc.value.code == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "mvtda", "--help"], capture_output=True,
                         text=True, check=True)
    assert "simulate" in out.stdout
