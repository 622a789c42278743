import csv
from pathlib import Path

import numpy as np
import pytest

from crebound import cli
from crebound.config import OUTPUT_ENV, load_config, parse_config
from crebound.errors import ConfigError, SingularSystemError
from crebound.export import (SUMMARY_COLUMNS, density, export_fields, read_fields_csv,
                             write_vtk)
from crebound.mesh import BoundaryRule, build_topology, read_mesh

SHEAR_CASE = """
[case]
mesh = fixture:shear_pair
reference_levels = 2
repeats = 1

[estimators]
methods = eet, spet, eespt
costs = J0
"""


def _case(tmp_path, text, name="case.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _two_triangles():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return build_topology(nodes, tris, [BoundaryRule("all", "neumann")])


def test_parse_full_grammar(tmp_path):
    cfg = parse_config("""
[case]
mesh = fixture:cantilever_sensor   # comment
output = out
reference_levels = 1
repeats = 2
[fixture]
h = 0.5
smooth = true
[material]
young = 2.0
[estimators]
methods = EET, eespt eet
costs = J2, J0
k = 2
penalty = 1e6
pinning = point
[load.load]
traction = 0.0, -2.0
[body]
force = 1 2
""", base_dir=tmp_path)
    assert cfg.fixture == "cantilever_sensor"
    assert cfg.methods == ("EET", "EESPT")
    assert cfg.costs == ("J2", "J0")
    assert (cfg.k, cfg.penalty, cfg.pinning) == (2, 1e6, "point")
    assert cfg.fixture_options == {"h": 0.5, "smooth": True}
    assert cfg.output == str(tmp_path / "out")
    assert cfg.tractions == {"load": (0.0, -2.0)}
    assert cfg.body_force == (1.0, 2.0)
    mesh, material, loads = cfg.build()
    assert material.young == 2.0 and material.poisson == 0.3
    assert loads.tractions["load"] == (0.0, -2.0)


@pytest.mark.parametrize("text", [
    "[case]\nmesh = fixture:patch_test\n[estimators]\nmethods =\n",
    "[case]\nmesh = fixture:nope\n",
    "[case]\nmesh = missing.msh\n",
    "[case]\noutput = x\n",
    "[case]\nmesh = fixture:patch_test\n[estimators]\npenalty = 0\n",
    "[case]\nmesh = fixture:patch_test\n[estimators]\nk = 4\n",
    "[case]\nmesh = fixture:patch_test\n[estimators]\nk = two\n",
    "[case]\nmesh = fixture:patch_test\n[estimators]\ncosts = J7\n",
    "[case]\nmesh = fixture:patch_test\n[estimators]\nmethods = zz\n",
    "[case]\nmesh = fixture:patch_test\n[estimators]\nmethods = eet\ncosts =\n",
    "[case]\nmesh = fixture:patch_test\n[wat]\n",
    "[case]\nmesh = fixture:patch_test\n[material]\ndensity = 1\n",
    "[case]\nmesh = fixture:patch_test\n[load.top]\ntraction = 1\n",
    "[case]\nmesh = fixture:patch_test\n[load.top]\ntraction = a b\n",
    "[case]\nmesh = fixture:patch_test\n[load.top]\nvalue = 1 2\n",
    "[case]\nmesh = fixture:patch_test\n[displacement.left]\nvalue = nan 0\n",
    "not an ini file",
])
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        parse_config(text, base_dir=tmp_path)


def test_spet_only_needs_no_cost(tmp_path):
    cfg = parse_config("[case]\nmesh = fixture:patch_test\n[estimators]\nmethods = spet\n"
                       "costs =\n", base_dir=tmp_path)
    assert cfg.methods == ("SPET",) and cfg.costs == ()


def test_empty_methods_fail_before_solving(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise AssertionError("solver called")
    monkeypatch.setattr(cli, "assemble_solve", boom)
    path = _case(tmp_path, "[case]\nmesh = fixture:patch_test\n[estimators]\nmethods =\n")
    assert cli.main(["run", str(path)]) == cli.EXIT_INVALID
    assert "at least one" in capsys.readouterr().err


def test_patch_test_run(tmp_path, capsys):
    path = _case(tmp_path, "[case]\nmesh = fixture:patch_test\noutput = out\nrepeats = 1\n"
                           "[estimators]\ncosts = J0 J1 J2\n")
    assert cli.main(["run", str(path), "--quiet"]) == cli.EXIT_OK
    table = capsys.readouterr().out
    assert table.splitlines()[0].split() == ["method", "cost", "theta", "ref_error", "eta", "cpu"]
    with open(tmp_path / "out" / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["method"], r["cost"]) for r in rows] == [
        ("EET", "J0"), ("EET", "J1"), ("EET", "J2"), ("SPET", "-"),
        ("EESPT", "J0"), ("EESPT", "J1"), ("EESPT", "J2")]
    for r in rows:
        assert float(r["theta"]) <= 1e-9


def test_plate_eet_three_costs(tmp_path):
    cfg = parse_config("[case]\nmesh = fixture:plate_with_hole_quarter\nrepeats = 1\n"
                       "[estimators]\nmethods = eet\ncosts = J0, J1, J2\n", base_dir=tmp_path)
    result = cli.run_case(cfg, output=tmp_path / "plate")
    assert len(result.rows) == 3
    assert all(r.bound_holds for r in result.reports)
    assert all(row["cpu_normalized"] == 1.0 for row in result.rows)
    with open(result.files["summary"], newline="") as fh:
        reader = csv.reader(fh)
        assert tuple(next(reader)) == SUMMARY_COLUMNS
        assert all(row[-1] == "1" for row in reader)


def test_outputs_and_determinism(tmp_path):
    cfg = parse_config(SHEAR_CASE, base_dir=tmp_path)
    first = cli.run_case(cfg, output=tmp_path / "a")
    second = cli.run_case(cfg, output=tmp_path / "b")

    def strip_cpu(path):
        with open(path, newline="") as fh:
            return [row[:-1] for row in csv.reader(fh)]
    assert strip_cpu(first.files["summary"]) == strip_cpu(second.files["summary"])
    assert first.files["csv"].read_bytes() == second.files["csv"].read_bytes()
    assert first.files["vtk"].read_bytes() == second.files["vtk"].read_bytes()

    fields = read_fields_csv(first.files["csv"])
    ref = first.reference.per_element
    np.testing.assert_array_equal(fields["ref_error"], ref)
    np.testing.assert_array_equal(fields["ref_density"], ref ** 2 / first.solution.mesh.areas)
    for report in first.reports:
        label = report.method.lower() + ("" if report.cost is None else f"_{report.cost}")
        np.testing.assert_array_equal(fields[f"{label}_theta"], report.contributions)
    # SPET is timed against EET with the same (first) cost
    spet_row = next(r for r in first.rows if r["method"] == "SPET")
    assert spet_row["cpu_normalized"] > 0


def test_output_env_override(tmp_path, monkeypatch):
    cfg = parse_config(SHEAR_CASE, base_dir=tmp_path)
    assert cfg.output_dir() == tmp_path / "crebound-out"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert cfg.output_dir() == tmp_path / "env"
    path = _case(tmp_path, SHEAR_CASE)
    assert cli.main(["run", str(path), "-q"]) == cli.EXIT_OK
    assert (tmp_path / "env" / "summary.csv").is_file()


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    path = _case(tmp_path, SHEAR_CASE + "\n")
    assert cli.main(["run", str(path), "-o", str(blocker / "sub")]) == cli.EXIT_INVALID
    assert "cannot write" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    def fail(*args, **kwargs):
        raise SingularSystemError("synthetic")
    monkeypatch.setattr(cli, "admissible_stress", fail)
    path = _case(tmp_path, SHEAR_CASE)
    assert cli.main(["run", str(path), "-q"]) == cli.EXIT_NUMERICAL
    err = capsys.readouterr().err
    assert "shear_pair" in err and "EET J0" in err


def test_fixture_commands(tmp_path, capsys):
    assert cli.main(["fixtures", "list"]) == 0
    listing = capsys.readouterr().out
    for name in ("patch_test", "cantilever_sensor", "plate_with_hole_quarter", "shear_pair"):
        assert name in listing
    target = tmp_path / "pt.msh"
    assert cli.main(["fixtures", "write", "patch_test", str(target)]) == 0
    mesh = read_mesh(target)
    capsys.readouterr()
    assert cli.main(["mesh", "info", str(target)]) == 0
    from_file = capsys.readouterr().out
    assert cli.main(["mesh", "info", "fixture:patch_test"]) == 0
    from_fixture = capsys.readouterr().out
    # group order follows first appearance in the file
    assert sorted(from_fixture.split()) == sorted(from_file.split())
    assert f"{mesh.n_elements}" in from_file
    assert cli.main(["mesh", "info", str(tmp_path / "missing.msh")]) == cli.EXIT_INVALID
    assert cli.main(["fixtures", "write", "nope", str(target)]) == cli.EXIT_INVALID


def test_vtk_layout(tmp_path):
    mesh = _two_triangles()
    path = write_vtk(mesh, {"theta": [1.0, 2.0]}, tmp_path / "two.vtk")
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "DATASET UNSTRUCTURED_GRID" in lines
    i = lines.index("CELLS 2 8")
    assert lines[i + 1:i + 3] == ["3 0 1 2", "3 0 2 3"]
    j = lines.index("CELL_TYPES 2")
    assert lines[j + 1:j + 3] == ["5", "5"]
    k = lines.index("SCALARS theta double 1")
    assert lines[k + 2:k + 4] == ["1", "2"]
    assert lines[k - 1] == "CELL_DATA 2"


def test_csv_round_trip_is_bitwise(tmp_path, rng):
    mesh = _two_triangles()
    values = {"a": rng.standard_normal(2) * 1e-7, "b": [np.pi, 1 / 3]}
    _, path = export_fields(mesh, values, tmp_path)
    back = read_fields_csv(path)
    for name, v in values.items():
        np.testing.assert_array_equal(back[name], v)


def test_export_errors(tmp_path):
    mesh = _two_triangles()
    with pytest.raises(ValueError):
        write_vtk(mesh, {"x": [1.0]}, tmp_path / "a.vtk")
    with pytest.raises(ValueError):
        write_vtk(mesh, {"bad name": [1.0, 2.0]}, tmp_path / "a.vtk")
    with pytest.raises(OSError):
        write_vtk(mesh, {"x": [1.0, 2.0]}, tmp_path / "no" / "dir" / "a.vtk")
    (tmp_path / "bad.csv").write_text("id,x\n0,1\n")
    with pytest.raises(ValueError):
        read_fields_csv(tmp_path / "bad.csv")


def test_uniform_density():
    mesh = _two_triangles()
    np.testing.assert_allclose(density(mesh, [3.0, 3.0]), [18.0, 18.0], rtol=1e-15)
