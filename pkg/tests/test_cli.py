import json
import subprocess
import sys

import numpy as np
import pytest

from transcomp import bench, cli
from transcomp.decompositions import load_formats

SMALL = ["--extent-lambda", "2", "--box-edge-lambda", "0.5", "--digits", "2"]


@pytest.fixture
def suite3d(tmp_path):
    path = tmp_path / "suite.bin"
    assert cli.main(["generate", *SMALL, "--out", str(path)]) == 0
    return path


def test_generate_layouts_consistent(tmp_path, suite3d):
    path4 = tmp_path / "suite4.bin"
    assert cli.main(["generate", *SMALL, "--layout", "4d", "--out", str(path4)]) == 0
    a = cli.read_suite(suite3d)
    b = cli.read_suite(path4)
    assert len(a) == len(b) == 231
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_generate_memory_cap_exit_code(tmp_path):
    code = cli.main(["generate", *SMALL, "--layout", "4d", "--mem-cap-gb", "1e-6",
                     "--out", str(tmp_path / "x.bin")])
    assert code == cli.EXIT_MEMCAP


@pytest.mark.parametrize("method", ["tucker3d", "tt3d", "tt4d", "tucker4d", "htucker"])
def test_compress_restore_verify(tmp_path, suite3d, method):
    comp = tmp_path / "c.bin"
    assert cli.main(["compress", str(suite3d), "--methods", method, "--gamma", "1e-6",
                     "--out", str(comp)]) == 0
    formats = load_formats(comp)
    assert len(formats) == (231 if method in bench.METHODS_3D else 1)
    out = tmp_path / "r.bin"
    assert cli.main(["restore", str(comp), "--verify", str(suite3d), "--out", str(out)]) == 0
    restored = cli.read_suite(out)
    original = cli.read_suite(suite3d)
    assert len(restored) == len(original)
    err = max(np.linalg.norm(a - b) / np.linalg.norm(a) for a, b in zip(original, restored))
    assert err <= 1e-5


def test_restore_verify_failure(tmp_path, suite3d):
    comp = tmp_path / "c.bin"
    cli.main(["compress", str(suite3d), "--methods", "tucker3d", "--gamma", "1e-6", "--out", str(comp)])
    scaled = tmp_path / "scaled.bin"
    slices = [2.0 * t for t in cli.read_suite(suite3d)]
    cli._write_slices(scaled, slices, len(slices))
    assert cli.main(["restore", str(comp), "--verify", str(scaled)]) == cli.EXIT_VERIFY


def test_compress_needs_one_method(suite3d, tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["compress", str(suite3d), "--methods", "tt3d,tt4d", "--out", str(tmp_path / "c")])


def test_sweep_report_verify(tmp_path, capsys):
    out = tmp_path / "tol.csv"
    code = cli.main(["sweep", "--kind", "tolerance", *SMALL, "--values", "1e-2,1e-4",
                     "--methods", "tt3d,htucker", "--out", str(out)])
    assert code == 0
    recs = bench.read_report(out)
    assert [(r.method, r.sweep_value) for r in recs] == [("tt3d", 1e-2), ("htucker", 1e-2),
                                                        ("tt3d", 1e-4), ("htucker", 1e-4)]
    capsys.readouterr()
    code = cli.main(["verify-tables", str(out)])
    text = capsys.readouterr().out
    assert "tolerance trend tt3d" in text
    assert code in (0, cli.EXIT_VERIFY)
    js = tmp_path / "tol.json"
    assert cli.main(["report", str(out), "--format", "json", "--out", str(js)]) == 0
    assert len(json.loads(js.read_text())) == 4


def test_config_file_and_flag_precedence(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"gamma": 1e-3, "digits": 3, "values": [8, 16]}))
    args = cli.build_parser().parse_args(["sweep", "--kind", "structure", "--config", str(cfg_path),
                                          "--digits", "4", "--out", "x.csv"])
    cfg = cli.config_from_args(args, "structure_size")
    assert cfg.gamma == 1e-3 and cfg.digits == 4 and cfg.values == (8, 16)
    args = cli.build_parser().parse_args(["sweep", "--kind", "loss", "--out", "x.csv"])
    cfg = cli.config_from_args(args, "loss")
    assert cfg.eps_real == 2.0 and cfg.values == (0.0, 0.0167, 0.0334, 0.1335)


def test_config_file_unknown_key(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"gamme": 1e-3}))
    assert cli.main(["sweep", "--kind", "tolerance", "--config", str(cfg_path), "--out", "x.csv"]) == 1


def test_sweep_all_refused_by_cap(tmp_path):
    code = cli.main(["sweep", "--kind", "single", *SMALL, "--methods", "tt4d", "--mem-cap-gb", "1e-6",
                     "--out", str(tmp_path / "x.csv")])
    assert code == cli.EXIT_MEMCAP


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "transcomp", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "verify-tables" in res.stdout
