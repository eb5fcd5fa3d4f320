import json
import os

import pytest
from click.testing import CliRunner

from decem.cli import main, run_config, validate_config, ConfigError


@pytest.fixture()
def runner():
    return CliRunner()


def test_list_contains_canned(runner):
    res = runner.invoke(main, ["list"])
    assert res.exit_code == 0
    for name in ("balls:1", "hopf_link", "wormhole_obstacle", "solid_torus"):
        assert name in res.output


def test_run_topology_balls2(runner, tmp_path):
    res = runner.invoke(
        main, ["run", "topology", "--geometry", "balls:2", "--output", str(tmp_path)]
    )
    assert res.exit_code == 0, res.output
    assert "[PASS] dim_H1: 2" in res.output
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] is True
    assert summary["result"]["dims"]["1"] == 2


def test_run_determinism_byte_identical(runner, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        res = runner.invoke(
            main,
            ["run", "topology", "--geometry", "balls:1", "--seed", "7", "--output", str(out)],
        )
        assert res.exit_code == 0
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_unknown_geometry_config_error(runner):
    res = runner.invoke(main, ["run", "topology", "--geometry", "moebius:9"])
    assert res.exit_code == 2


def test_missing_geometry_config_error(runner):
    res = runner.invoke(main, ["run", "topology"])
    assert res.exit_code == 2


def test_validate_config_rejects_bad_tolerance():
    with pytest.raises(ConfigError, match="tolerance"):
        validate_config(
            {"geometry": "balls:1", "pipeline": "hodge", "params": {"some_tol": -1.0}}
        )


def test_validate_config_rejects_bad_version():
    with pytest.raises(ConfigError, match="version"):
        validate_config({"version": 99, "geometry": "balls:1"})


def test_run_config_yaml_roundtrip(tmp_path):
    import yaml

    cfg = {
        "version": 1,
        "seed": 3,
        "geometry": {"canned": "balls:1"},
        "pipeline": "topology",
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    from decem.cli import load_config

    code, summary = run_config(load_config(str(path)))
    assert code == 0 and summary["passed"]
    assert os.path.exists(tmp_path / "out" / "summary.json")


def test_dump_mesh(runner, tmp_path):
    out = tmp_path / "mesh.txt"
    res = runner.invoke(main, ["dump-mesh", "--geometry", "balls:1", "--out", str(out)])
    assert res.exit_code == 0
    from decem.mesh import load_complex

    c = load_complex(out.read_text())
    assert c.dim == 3
    meta = json.loads(res.output)
    assert meta["counts"]["3"] == c.n(3)


def test_export_matrices(runner, tmp_path):
    res = runner.invoke(
        main,
        ["export-matrices", "--geometry", "balls:1", "--degree", "1", "--out", str(tmp_path)],
    )
    assert res.exit_code == 0
    header = (tmp_path / "d1.txt").read_text().splitlines()
    assert header[0].startswith("# sparse triplet")
    rows, cols, nnz = (int(x) for x in header[1].split())
    assert nnz == len(header) - 2


def test_stress_empty_pipeline(runner, tmp_path):
    res = runner.invoke(
        main,
        ["run", "stress", "--geometry", "cube_obstacle", "--empty", "--output", str(tmp_path)],
    )
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "summary.json").read_text())
    names = [r["name"] for r in summary["result"]["assertions"]]
    assert "empty_nullity" in names
    assert summary["result"]["total_energy"] == 0.0


def test_run_hodge_pipeline(runner, tmp_path):
    res = runner.invoke(
        main,
        ["run", "hodge", "--geometry", "cube_obstacle", "--output", str(tmp_path)],
    )
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["result"]["harmonic_dim"] == 1
