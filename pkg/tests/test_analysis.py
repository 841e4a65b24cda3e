"""Tests for certificates, estimate checkers, and decay fitting."""

from __future__ import annotations

import math

import numpy as np
import pytest

from boltzlab.analysis import (
    Certificate,
    DecayFit,
    certify,
    check_density_bound,
    check_lemma_2_5,
    check_lemma_4_2,
    fit_decay,
    p_conditions,
    p_exponent,
)
from boltzlab.collision import CollisionOperator, KernelParams, SphereQuadrature
from boltzlab.evolve import DIAG_COLUMNS, DiagnosticsSeries
from boltzlab.phase import (
    DistributionField,
    PerturbationField,
    SpatialGrid,
    VelocityGrid,
    conserved_snapshot,
    equilibrium_field,
    fsum,
    maxwellian,
)


def test_certificate_on_equilibrium(vg_small):
    cert = certify(equilibrium_field(vg_small, SpatialGrid(dimension=0)), beta=4.5)
    assert cert.verdict
    assert cert.winf_beta == 0.0
    assert cert.l1x_linfv == 0.0
    assert cert.entropy == pytest.approx(0.0, abs=1e-15)
    assert cert.t1 == pytest.approx(0.125, rel=1e-15)
    d = cert.to_dict()
    assert set(d) == {"winf_beta", "l1x_linfv", "entropy", "epsilon0", "t1", "m_bar", "verdict"}


def test_certificate_rejects_large_data(vg_small):
    mu = maxwellian(vg_small)
    fld = DistributionField(vg_small, SpatialGrid(dimension=0), 2.0 * mu[None, :])
    cert = certify(fld, beta=4.5)
    # entropy of 2 mu alone exceeds the default threshold
    assert not cert.verdict
    assert cert.entropy > cert.epsilon0
    assert cert.t1 > 0.0


def test_certificate_verdict_consistency():
    with pytest.raises(ValueError):
        Certificate(
            winf_beta=0.0,
            l1x_linfv=0.0,
            entropy=0.0,
            epsilon0=0.1,
            t1=0.125,
            m_bar=10.0,
            verdict=False,
        )


def test_lemma_2_5_closed_form(vg_small):
    sg = SpatialGrid(dimension=0)
    mu = maxwellian(vg_small)
    m_d = fsum(mu) * vg_small.dv**3
    fld = DistributionField(vg_small, sg, 2.0 * mu[None, :])
    snap0 = conserved_snapshot(fld)
    rep = check_lemma_2_5(fld, snap0)
    assert rep["lhs"] == pytest.approx(0.25 * m_d, rel=1e-12)
    assert rep["rhs"] == pytest.approx((2.0 * math.log(2.0) - 1.0) * m_d, rel=1e-12)
    assert rep["pass"]
    # against an equilibrium reference the bound must fail
    snap_eq = conserved_snapshot(equilibrium_field(vg_small, sg))
    assert not check_lemma_2_5(fld, snap_eq)["pass"]


def test_p_exponent_values_and_range():
    assert p_exponent(1.0) == 1.0 + 4.0 / 32.0  # exactly 9/8
    assert p_exponent(1.0) == 9.0 / 8.0
    assert p_exponent(0.0) == pytest.approx(13.0 / 12.0, rel=1e-15)
    for g in (-3.0, 1.0001, -4.0):
        with pytest.raises(ValueError):
            p_exponent(g)


def test_p_conditions_full_scan():
    grid = np.linspace(-3.0, 1.0, 102)[1:]
    last = 1.0
    for g in grid:
        rep = p_conditions(float(g))
        assert rep["p_le_9_8"] and rep["dual_ge_9"]
        assert rep["gain_integrable"] and rep["loss_integrable"]
        assert 1.0 < rep["p"] <= 9.0 / 8.0
        assert rep["p"] > last or g == grid[0]
        last = rep["p"]


def test_lemma_4_2_random_field(vg_small):
    sg = SpatialGrid(dimension=0)
    params = KernelParams(gamma=0.0, cb=1.0)
    op = CollisionOperator(vg_small, params, SphereQuadrature.product(4, 8))
    rng = np.random.default_rng(5)
    smu = np.sqrt(maxwellian(vg_small))
    vals = 0.2 * rng.normal(size=vg_small.n_nodes) * smu
    f = PerturbationField(vg_small, sg, vals[None, :])
    for alpha in (0.0, 2.0):
        rep = check_lemma_4_2(f, alpha, params, op=op)
        assert rep["p"] == pytest.approx(13.0 / 12.0, rel=1e-15)
        assert rep["n_samples"] == 64
        assert 0.0 < rep["max_ratio"] <= 1.0
        flipped = check_lemma_4_2(
            PerturbationField(vg_small, sg, -vals[None, :]), alpha, params, op=op
        )
        assert flipped["max_ratio"] == pytest.approx(rep["max_ratio"], rel=1e-13)
    zero = PerturbationField(vg_small, sg, np.zeros((1, vg_small.n_nodes)))
    assert check_lemma_4_2(zero, 0.0, params, op=op)["max_ratio"] == 0.0


def _series_with_rho(rows):
    s = DiagnosticsSeries()
    for t, lo, hi in rows:
        kw = {c: 0.0 for c in DIAG_COLUMNS}
        kw.update(t=t, rho_min=lo, rho_max=hi)
        s.add(**kw)
    return s


def test_density_bound_windowing():
    s = _series_with_rho([(0.0, 0.1, 3.0), (1.0, 0.5, 1.5), (2.0, 0.8, 1.2)])
    rep = check_density_bound(s, t0=1.0)
    assert rep["sup_dev"] == pytest.approx(0.5, rel=1e-15)
    assert rep["pass"]
    # the early report is outside the window and must not count
    rep_all = check_density_bound(s, t0=0.0)
    assert rep_all["sup_dev"] == pytest.approx(2.0, rel=1e-15)
    assert not rep_all["pass"]
    with pytest.raises(ValueError):
        check_density_bound(s, t0=5.0)


def test_fit_decay_recovers_exponential():
    t = np.linspace(0.0, 5.0, 26)
    y = 0.8 * np.exp(-1.7 * t)
    fit = fit_decay(list(zip(t, y)))
    assert fit.model == "exp"
    assert fit.rate == pytest.approx(1.7, rel=1e-12)
    assert fit.amplitude == pytest.approx(0.8, rel=1e-12)
    assert fit.residual <= 1e-13
    # default window drops the first five sample spacings
    assert fit.window[0] == pytest.approx(1.0, rel=1e-12)
    d = fit.to_dict()
    assert isinstance(d["window"], list)


def test_fit_decay_recovers_algebraic():
    t = np.linspace(0.0, 8.0, 30)
    y = 2.3 * (1.0 + t) ** (-2.2)
    fit = fit_decay(list(zip(t, y)), model="alg", window=(0.0, 8.0))
    assert fit.rate == pytest.approx(2.2, rel=1e-12)
    assert fit.amplitude == pytest.approx(2.3, rel=1e-12)
    assert fit.residual <= 1e-13


def test_fit_decay_skips_nonpositive_prefix():
    t = np.linspace(0.0, 5.0, 26)
    y = 0.5 * np.exp(-0.9 * t)
    y[2] = 0.0
    fit = fit_decay(list(zip(t, y)), window=(0.0, 5.0))
    assert fit.window[0] == pytest.approx(t[3], rel=1e-12)
    assert fit.rate == pytest.approx(0.9, rel=1e-12)


def test_fit_decay_errors():
    t = np.linspace(0.0, 1.0, 4)
    y = np.exp(-t)
    with pytest.raises(ValueError):
        fit_decay(list(zip(t, y)))  # fewer than 5 samples
    with pytest.raises(ValueError):
        fit_decay([(0.0, 1.0)], model="power")
    with pytest.raises(ValueError):
        fit_decay([0.0, 1.0, 2.0])
    tt = np.linspace(0.0, 5.0, 20)
    with pytest.raises(ValueError):
        fit_decay(list(zip(tt, np.zeros_like(tt))))
