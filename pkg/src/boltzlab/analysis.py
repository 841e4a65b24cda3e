"""Certificates, estimate checkers, and decay-rate fitting.

Pure post-processing on phase-space fields and diagnostics series: the
small-data certificate (defect entropy plus L1_x Linf_v against a threshold,
weighted sup norm against an amplitude cap), the entropy-to-L2 inequality
checked along trajectories, the weighted nonlinear-term estimate checked at
sampled nodes, the density-deviation bound, and least-squares decay fits of
norm histories in exponential or algebraic form.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .collision import CollisionOperator, KernelParams, SphereQuadrature
from .evolve import lemma25_lhs, lifespan
from .phase import conserved_snapshot, fsum, norms, to_perturbation, weight


@dataclass(frozen=True)
class Certificate:
    """Small-data certificate for an initial field.

    verdict is pass exactly when entropy + l1x_linfv <= epsilon0 and
    winf_beta <= m_bar; t1 is the guaranteed local-existence window for the
    recorded amplitude.  Advisory only: a failing certificate never blocks.
    """

    winf_beta: float
    l1x_linfv: float
    entropy: float
    epsilon0: float
    t1: float
    m_bar: float
    verdict: bool

    def __post_init__(self):
        want = (self.entropy + self.l1x_linfv <= self.epsilon0) and (
            self.winf_beta <= self.m_bar
        )
        if self.verdict != want:
            raise ValueError("certificate verdict inconsistent with its fields")

    def to_dict(self):
        return asdict(self)


def certify(F0, beta, epsilon0=0.1, m_bar=10.0, c4_tilde=1.0):
    """Evaluate the smallness certificate on an initial DistributionField."""
    snap = conserved_snapshot(F0)
    pert = to_perturbation(F0)
    nm = norms(pert, beta)
    winf = nm["winf"]
    l1 = nm["l1x_linfv"]
    verdict = (snap.entropy + l1 <= epsilon0) and (winf <= m_bar)
    return Certificate(
        winf_beta=winf,
        l1x_linfv=l1,
        entropy=snap.entropy,
        epsilon0=float(epsilon0),
        t1=lifespan(winf, c4_tilde),
        m_bar=float(m_bar),
        verdict=verdict,
    )


def check_lemma_2_5(F, snapshot0, tol=1e-9):
    """Entropy-to-L2 control: pointwise quadratic/linear split vs E(F0).

    lhs integrates |F-mu|^2/(4 mu) where |F-mu| < mu and |F-mu|/4 where
    |F-mu| >= mu (boundary points on the linear branch); rhs is the defect
    entropy of the reference snapshot.  pass iff lhs <= rhs (1+tol) + 1e-15.
    """
    lhs = lemma25_lhs(F.values, F.vgrid, F.sgrid)
    rhs = snapshot0.entropy
    return {
        "lhs": lhs,
        "rhs": rhs,
        "pass": bool(lhs <= rhs * (1.0 + tol) + 1e-15),
    }


def p_exponent(gamma):
    """Interpolation exponent p(gamma) = 1 + (3+gamma)/(4(9-gamma))."""
    if not (-3.0 < gamma <= 1.0):
        raise ValueError("gamma must lie in (-3, 1]")
    return 1.0 + (3.0 + gamma) / (4.0 * (9.0 - gamma))


def p_conditions(gamma):
    """The four admissibility conditions on p(gamma); all must hold."""
    p = p_exponent(gamma)
    return {
        "p": p,
        "p_le_9_8": bool(p <= 9.0 / 8.0),
        "dual_ge_9": bool(p / (p - 1.0) >= 9.0),
        "gain_integrable": bool(p * (gamma - 3.0) / 2.0 > -3.0),
        "loss_integrable": bool(p * gamma > -3.0),
    }


def check_lemma_4_2(f, alpha, params, sample_nodes=None, op=None, seed=20, n_samples=64):
    """Weighted nonlinear-term estimate at sampled (x, v) nodes.

    For each sampled cell/node, compares |w_alpha Gamma_pm(f,f)| against
    nu(v) ||w_alpha f||_inf * mid^{(4p+1)/(5p)} * (int |f(x,u)| du)^{(p-1)/(5p)}
    with mid = ||f||_inf for the loss part and ||w_{1/2} f||_inf for the
    gain part.  Reports the max ratio over samples and branches; both sides
    are invariant under f -> -f.
    """
    vg, sg = f.vgrid, f.sgrid
    if op is None:
        op = CollisionOperator(vg, params, SphereQuadrature.product(4, 8))
    p = p_exponent(params.gamma)
    e_mid = (4.0 * p + 1.0) / (5.0 * p)
    e_last = (p - 1.0) / (5.0 * p)
    w_a = weight(vg, alpha)
    w_h = weight(vg, 0.5)
    vals = f.values
    winf_a = float(np.max(np.abs(vals) * w_a[None, :]))
    winf_0 = float(np.max(np.abs(vals)))
    winf_h = float(np.max(np.abs(vals) * w_h[None, :]))
    nu = op.nu_grid()
    if sample_nodes is None:
        rng = np.random.default_rng(seed)
        cells = rng.integers(0, sg.n_cells, size=n_samples)
        nodes = rng.integers(0, vg.n_nodes, size=n_samples)
        sample_nodes = list(zip(cells.tolist(), nodes.tolist()))
    parts = {}
    l1v = {}
    for c, _ in sample_nodes:
        if c not in parts:
            parts[c] = op.gamma_nl_parts(np.ascontiguousarray(vals[c]))
            l1v[c] = fsum(np.abs(vals[c])) * vg.dv**3
    max_ratio = 0.0
    max_gain = 0.0
    max_loss = 0.0
    for c, k in sample_nodes:
        gain, loss = parts[c]
        common = winf_a * l1v[c] ** e_last
        rhs_gain = nu[k] * common * winf_h**e_mid
        rhs_loss = nu[k] * common * winf_0**e_mid
        lhs_gain = w_a[k] * abs(gain[k])
        lhs_loss = w_a[k] * abs(loss[k])
        rg = 0.0 if lhs_gain == 0.0 else lhs_gain / rhs_gain
        rl = 0.0 if lhs_loss == 0.0 else lhs_loss / rhs_loss
        max_gain = max(max_gain, rg)
        max_loss = max(max_loss, rl)
    max_ratio = max(max_gain, max_loss)
    return {
        "max_ratio": max_ratio,
        "max_ratio_gain": max_gain,
        "max_ratio_loss": max_loss,
        "p": p,
        "alpha": float(alpha),
        "n_samples": len(sample_nodes),
        "seed": seed,
    }


def check_density_bound(series, t0):
    """sup over reported times >= t0 and cells of |rho - 1| vs the 3/4 cap."""
    t = np.asarray(series.column("t"), dtype=float)
    sel = t >= t0
    if not sel.any():
        raise ValueError("series contains no reports at or after t0")
    hi = np.asarray(series.column("rho_max"), dtype=float)[sel]
    lo = np.asarray(series.column("rho_min"), dtype=float)[sel]
    sup_dev = float(max(np.max(hi - 1.0), np.max(1.0 - lo)))
    return {"sup_dev": sup_dev, "pass": bool(sup_dev <= 0.75), "t0": float(t0)}


@dataclass(frozen=True)
class DecayFit:
    """Least-squares decay fit of a norm history.

    model "exp": y ~ amplitude * e^{-rate t}; model "alg": y ~ amplitude *
    (1+t)^{-rate}.  residual is the RMS of log-residuals over the fitted
    window.  rate > 0 is the pass signal for decay.
    """

    model: str
    rate: float
    amplitude: float
    residual: float
    window: tuple

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def fit_decay(pairs, model="exp", window=None):
    """Fit a decay law to (t, norm) samples inside a time window.

    The default window drops an initial transient of five sample spacings.
    Non-positive samples cannot enter the log fit: the window is shrunk past
    the last non-positive sample.  Requires at least five usable samples.
    """
    if model not in ("exp", "alg"):
        raise ValueError("model must be 'exp' or 'alg'")
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be a sequence of (t, value)")
    t, y = arr[:, 0], arr[:, 1]
    order = np.argsort(t)
    t, y = t[order], y[order]
    if window is None:
        spacing = np.median(np.diff(t)) if t.size > 1 else 0.0
        window = (t[0] + 5.0 * spacing, t[-1])
    lo, hi = float(window[0]), float(window[1])
    sel = (t >= lo) & (t <= hi)
    ts, ys = t[sel], y[sel]
    bad = np.nonzero(ys <= 0.0)[0]
    if bad.size:
        ts, ys = ts[bad[-1] + 1 :], ys[bad[-1] + 1 :]
    if ts.size < 5:
        raise ValueError("fewer than 5 positive samples in the fit window")
    x = ts if model == "exp" else np.log1p(ts)
    coef = np.polyfit(x, np.log(ys), 1)
    pred = np.polyval(coef, x)
    resid = float(np.sqrt(np.mean((np.log(ys) - pred) ** 2)))
    return DecayFit(
        model=model,
        rate=float(-coef[0]),
        amplitude=float(math.exp(coef[1])),
        residual=resid,
        window=(float(ts[0]), float(ts[-1])),
    )
