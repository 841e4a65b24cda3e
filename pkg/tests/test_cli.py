"""Tests for run configuration, field/series I/O, figures, and the CLI."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from boltzlab.analysis import fit_decay
from boltzlab.cli import main
from boltzlab.config import DEFAULTS, ConfigError, RunConfig
from boltzlab.evolve import DIAG_COLUMNS, DiagnosticsSeries
from boltzlab.fieldio import (
    load_field,
    read_series_csv,
    save_field,
    series_column,
    write_cell_moments_csv,
)
from boltzlab.phase import (
    DistributionField,
    SpatialGrid,
    VelocityGrid,
    equilibrium_field,
    maxwellian,
)
from boltzlab.report import render_decay_figure, render_run_figures


def _write_config(path, **overrides):
    doc = {
        "velocity": {"v_max": 6.0, "n_per_axis": 8},
        "kernel": {"gamma": 0.0, "cb": 1.0},
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and key in doc:
            doc[key].update(val)
        else:
            doc[key] = val
    path.write_text(json.dumps(doc))
    return str(path)


# -- config ---------------------------------------------------------------


def test_config_defaults_resolve():
    cfg = RunConfig({})
    assert cfg.vgrid.n_per_axis == DEFAULTS["velocity"]["n_per_axis"]
    assert cfg.params.gamma == 1.0
    assert cfg.step.beta == 4.5
    assert cfg.resolved["initial"]["recipe"] == "equilibrium"
    prov = cfg.provenance()
    prov["seed"] = 99
    assert cfg.resolved["seed"] == 0  # provenance is a deep copy


def test_config_rejects_bad_documents():
    with pytest.raises(ConfigError):
        RunConfig({"kernel": {"gamm": 1.0}})
    with pytest.raises(ConfigError):
        RunConfig({"kernel": 3})
    with pytest.raises(ConfigError):
        RunConfig({"initial": {"recipe": "vortex"}})
    with pytest.raises(ConfigError):
        RunConfig({"seed": 1.5})
    with pytest.raises(ConfigError):
        RunConfig({"velocity": {"n_per_axis": 7}})
    # the weight exponent must exceed max(3, 3 + gamma)
    with pytest.raises(ConfigError):
        RunConfig({"step": {"beta": 3.5}})  # default gamma = 1
    RunConfig({"step": {"beta": 3.5}, "kernel": {"gamma": 0.0}})
    with pytest.raises(ConfigError):
        RunConfig({"initial": {"recipe": "file"}})
    with pytest.raises(ConfigError):
        RunConfig({"initial": {"recipe": "density-profile", "kind": "ramp"}})


def test_config_recipe_fields():
    base = {"velocity": {"v_max": 6.0, "n_per_axis": 8}}
    eq = RunConfig(dict(base)).build_initial()
    mu = maxwellian(eq.vgrid)
    assert eq.values == pytest.approx(mu[None, :], rel=1e-15)

    doc = dict(base)
    doc["spatial"] = {"dimension": 1, "period": 1.0, "n_cells": 8}
    doc["initial"] = {
        "recipe": "density-profile",
        "kind": "cosine",
        "mean": 1.0,
        "amplitude": 0.5,
        "mode": 1,
    }
    fld = RunConfig(doc).build_initial()
    x = fld.sgrid.axis
    rho = 1.0 + 0.5 * np.cos(2.0 * np.pi * x)
    assert fld.values == pytest.approx(rho[:, None] * mu[None, :], rel=1e-14)

    doc["initial"] = {
        "recipe": "density-profile",
        "kind": "step",
        "inside": 0.0,
        "outside": 1.0,
        "window": [0.25, 0.75],
    }
    fld = RunConfig(doc).build_initial()
    inside = (x >= 0.25) & (x < 0.75)
    assert np.all(fld.values[inside] == 0.0)
    assert np.allclose(fld.values[~inside], mu[None, :], rtol=1e-15, atol=0.0)

    doc["initial"] = {"recipe": "density-profile", "kind": "constant", "rho0": -0.5}
    with pytest.raises(ConfigError):
        RunConfig(doc).build_initial()

    doc2 = dict(base)
    doc2["initial"] = {"recipe": "bump", "amplitude": 0.1, "center": [1.0, 0.0, 0.0], "pair": True}
    fld = RunConfig(doc2).build_initial()
    vals = fld.values[0]
    nodes = fld.vgrid.nodes().reshape(-1, 3)
    b = np.exp(-np.sum((nodes - [1.0, 0.0, 0.0]) ** 2, axis=1) / 2.0)
    b = b + np.exp(-np.sum((nodes + [1.0, 0.0, 0.0]) ** 2, axis=1) / 2.0)
    assert vals == pytest.approx(mu + 0.1 * b, rel=1e-14)

    doc2["initial"] = {"recipe": "bump", "width": -1.0}
    with pytest.raises(ConfigError):
        RunConfig(doc2).build_initial()


def test_config_file_recipe(tmp_path):
    vg = VelocityGrid(v_max=6.0, n_per_axis=8)
    fld = equilibrium_field(vg, SpatialGrid(dimension=0))
    p = tmp_path / "state.npz"
    save_field(p, fld, provenance={"origin": "test"})
    doc = {
        "velocity": {"v_max": 6.0, "n_per_axis": 8},
        "initial": {"recipe": "file", "path": str(p)},
    }
    loaded = RunConfig(doc).build_initial()
    assert np.array_equal(loaded.values, fld.values)
    doc["velocity"] = {"v_max": 6.0, "n_per_axis": 12}
    with pytest.raises(ConfigError):
        RunConfig(doc).build_initial()


# -- field and series I/O --------------------------------------------------


def test_field_npz_round_trip(tmp_path):
    vg = VelocityGrid(v_max=6.0, n_per_axis=8)
    sg = SpatialGrid(dimension=1, period=2.0, n_cells=4)
    rng = np.random.default_rng(2)
    vals = rng.uniform(0.0, 1.0, size=(4, vg.n_nodes))
    fld = DistributionField(vg, sg, vals)
    p = tmp_path / "field.npz"
    save_field(p, fld, provenance={"seed": 11})
    back, prov = load_field(p)
    assert np.array_equal(back.values, vals)
    assert back.vgrid == vg and back.sgrid == sg
    assert prov == {"seed": 11}


def test_series_csv_round_trip(tmp_path):
    series = DiagnosticsSeries()
    rng = np.random.default_rng(8)
    for i in range(4):
        kw = dict(zip(DIAG_COLUMNS, rng.uniform(-1.0, 1.0, size=len(DIAG_COLUMNS))))
        kw["t"] = 0.1 * i
        series.add(**kw)
    p = tmp_path / "series.csv"
    series.to_csv(p, provenance={"seed": 4})
    columns, rows, prov = read_series_csv(p)
    assert columns == DIAG_COLUMNS
    assert prov == {"seed": 4}
    # %.17g preserves float64 exactly
    assert np.array_equal(rows, np.array(series.rows))
    assert series_column(columns, rows, "t") == pytest.approx([0.0, 0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        series_column(columns, rows, "bogus")
    empty = tmp_path / "empty.csv"
    empty.write_text("# columns: t\n")
    with pytest.raises(ValueError):
        read_series_csv(empty)


def test_cell_moments_csv(tmp_path):
    vg = VelocityGrid(v_max=6.0, n_per_axis=8)
    sg = SpatialGrid(dimension=1, period=1.0, n_cells=4)
    mu = maxwellian(vg)
    rho = np.array([0.5, 1.0, 1.5, 2.0])
    fld = DistributionField(vg, sg, rho[:, None] * mu[None, :])
    p = tmp_path / "moments.csv"
    write_cell_moments_csv(p, fld, provenance={"k": 1})
    columns, rows, prov = read_series_csv(p)
    assert columns == ["x", "rho", "jx", "jy", "jz", "e"]
    assert prov == {"k": 1}
    assert series_column(columns, rows, "x") == pytest.approx(sg.axis)
    got_rho = series_column(columns, rows, "rho")
    assert got_rho == pytest.approx(rho * got_rho[1], rel=1e-12)


# -- figures ----------------------------------------------------------------


def test_render_figures(tmp_path):
    rows = []
    for i in range(5):
        t = 0.2 * i
        row = {c: 0.0 for c in DIAG_COLUMNS}
        row.update(t=t, winf=math.exp(-t), linfx_l1v=0.5 * math.exp(-t), entropy=0.1, M0=1e-6)
        rows.append([row[c] for c in DIAG_COLUMNS])
    written = render_run_figures(DIAG_COLUMNS, rows, str(tmp_path), "series", provenance={"a": 1})
    assert len(written) == 2
    for path in written:
        assert path.endswith(".png")
        assert (tmp_path / path.split("/")[-1]).stat().st_size > 0
    t = np.linspace(0.0, 2.0, 12)
    y = 0.7 * np.exp(-1.1 * t)
    fit = fit_decay(list(zip(t, y)), window=(0.0, 2.0))
    fig = render_decay_figure(t, y, fit, str(tmp_path), "series")
    assert fig.endswith("series_decay.png")
    assert (tmp_path / "series_decay.png").stat().st_size > 0


# -- CLI --------------------------------------------------------------------


def test_cli_certify_exit_codes(tmp_path):
    ok = _write_config(tmp_path / "eq.json")
    out = tmp_path / "a"
    assert main(["certify", "--config", ok, "--out", str(out), "--seed", "7"]) == 0
    doc = json.loads((out / "certificate.json").read_text())
    assert doc["certificate"]["verdict"] is True
    assert doc["provenance"]["seed"] == 7

    big = _write_config(
        tmp_path / "big.json",
        initial={"recipe": "density-profile", "kind": "constant", "rho0": 2.0},
    )
    assert main(["certify", "--config", big, "--out", str(tmp_path / "b")]) == 2
    doc = json.loads((tmp_path / "b" / "certificate.json").read_text())
    assert doc["certificate"]["verdict"] is False


def test_cli_config_errors(tmp_path):
    bad = _write_config(tmp_path / "bad.json", step={"beta": 3.5}, kernel={"gamma": 1.0})
    assert main(["certify", "--config", bad, "--out", str(tmp_path)]) == 1
    notjson = tmp_path / "broken.json"
    notjson.write_text("{nope")
    assert main(["certify", "--config", str(notjson), "--out", str(tmp_path)]) == 1
    assert main(["certify", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1


def test_cli_run_artifacts(tmp_path):
    cfgp = _write_config(
        tmp_path / "run.json",
        step={"dt": 0.02, "t_end": 0.06, "picard_tol": 1e-7},
        initial={"recipe": "bump", "amplitude": 0.05, "center": [1.2, 0.0, 0.0], "width": 1.0},
    )
    out = tmp_path / "runout"
    assert main(["run", "--config", cfgp, "--out", str(out)]) == 0
    for name in (
        "series.csv",
        "series.json",
        "final_state.npz",
        "final_moments.csv",
        "series_norms.png",
        "series_invariants.png",
    ):
        assert (out / name).exists(), name
    columns, rows, prov = read_series_csv(out / "series.csv")
    assert columns == DIAG_COLUMNS
    assert prov["kernel"]["gamma"] == 0.0
    assert rows[0, 0] == 0.0 and rows[-1, 0] == pytest.approx(0.06)
    fld, _ = load_field(out / "final_state.npz")
    assert float(fld.values.min()) >= 0.0


def test_cli_verify_nonlinear(tmp_path):
    cfgp = _write_config(tmp_path / "v.json", seed=3)
    out = tmp_path / "verify"
    assert main(["verify", "--config", cfgp, "--suite", "nonlinear", "--out", str(out)]) == 0
    doc = json.loads((out / "verify_nonlinear.json").read_text())
    assert doc["suite"] == "nonlinear"
    assert len(doc["checks"]) == 3
    assert all(c["pass"] for c in doc["checks"])


def test_cli_decay_paths(tmp_path):
    series = DiagnosticsSeries()
    for i in range(10):
        t = 0.1 * i
        kw = {c: 0.0 for c in DIAG_COLUMNS}
        kw.update(t=t, winf=0.8 * math.exp(-1.3 * t), linfx_l1v=math.exp(0.5 * t))
        series.add(**kw)
    p = tmp_path / "series.csv"
    series.to_csv(p, provenance={"seed": 0})

    out = tmp_path / "d1"
    rc = main(["decay", str(p), "--window", "0:1", "--out", str(out)])
    assert rc == 0
    doc = json.loads((out / "decay_fit.json").read_text())
    assert doc["fit"]["rate"] == pytest.approx(1.3, rel=1e-9)
    assert (out / "series_decay.png").exists()

    # a growing column fits with a negative rate: completed fit, exit 2
    assert main(
        ["decay", str(p), "--column", "linfx_l1v", "--window", "0:1", "--out", str(tmp_path)]
    ) == 2
    # input errors exit 1
    assert main(["decay", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 1
    assert main(["decay", str(p), "--window", "zz", "--out", str(tmp_path)]) == 1
    assert main(["decay", str(p), "--column", "bogus", "--window", "0:1", "--out", str(tmp_path)]) == 1
    # entirely nonpositive column cannot be fitted: exit 1
    series2 = DiagnosticsSeries()
    for i in range(6):
        kw = {c: 0.0 for c in DIAG_COLUMNS}
        kw.update(t=0.1 * i)
        series2.add(**kw)
    p2 = tmp_path / "zero.csv"
    series2.to_csv(p2)
    assert main(["decay", str(p2), "--window", "0:1", "--out", str(tmp_path)]) == 1
