"""Windowed Kaniel-Shinbrot evolution of the mild cutoff Boltzmann equation.

Each window of length tau <= t1 = 1/(8 C4 (1 + sup |w_beta f|)) runs the
monotone iteration

    F^0 = mu,   d/dt F^{n+1} + v.grad_x F^{n+1} + F^{n+1} g(F^n) = Q+(F^n, F^n)

in mild (Duhamel) form along characteristics, with the iterate F^n held
constant in time across the window (its time dependence enters through the
spatial foot points).  The loss exponent is a trapezoid sum over `substeps`
sub-nodes; the gain integral uses per-subinterval exponential product
integration (exact damping factor, endpoint-linear gain), which preserves
F = mu exactly and keeps every term nonnegative, so F_next >= 0 holds by
construction.  Convergence is declared when the weighted sup difference of
consecutive iterates drops below picard_tol; three consecutive non-contracting
ratios trigger window halving.

A mild-form stepper in perturbation variables (nu f - K f - Gamma(f,f) on the
right, same discrete measure) is available behind StepConfig.stepper="mild"
for cross-validation; it does not guarantee positivity.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from . import _kernels
from .collision import CollisionOperator, KernelParams, SphereQuadrature
from .phase import (
    MU_FLOOR,
    DistributionField,
    PerturbationField,
    cell_moments,
    conserved_snapshot,
    equilibrium_field,
    fsum,
    maxwellian,
    norms,
    to_perturbation,
    weight,
)


class SolverDiverged(Exception):
    """Picard iteration failed to contract at the attempted window length."""


class SolverAbort(Exception):
    """Unrecoverable solver state (negativity / non-finite values)."""

    def __init__(self, message, field=None, t=None):
        super().__init__(message)
        self.field = field
        self.t = t


@dataclass
class StepConfig:
    """Window/iteration parameters.  dt caps the window length; the actual
    window is min(dt, t1(current state), remaining horizon).  picard_tol is
    relative: iteration stops when the weighted sup difference drops below
    picard_tol * max(1, sup|w_beta f0|)."""

    dt: float = 0.05
    t_end: float = 1.0
    picard_tol: float = 1e-9
    picard_max: int = 40
    c4_tilde: float = 1.0
    substeps: int = 4
    beta: float = 4.5
    n_cos: int = 4
    n_az: int = 8
    energy_cut_factor: float = 1.5  # E_max = factor * v_max^2; inf disables
    stepper: str = "ks"  # "ks" | "mild"
    report_every: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be positive")
        if self.c4_tilde < 1.0:
            raise ValueError("c4_tilde must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.stepper not in ("ks", "mild"):
            raise ValueError("stepper must be 'ks' or 'mild'")


@dataclass
class IterateTrace:
    """Sup-norm differences d_n of consecutive iterates and their ratios."""

    d: list = field(default_factory=list)
    winf_iterates: list = field(default_factory=list)
    converged: bool = False
    diverged: bool = False
    bound_violated: bool = False

    @property
    def ratios(self):
        return [b / a for a, b in zip(self.d, self.d[1:]) if a > 0.0]


def lifespan(winf0, c4_tilde=1.0):
    """t1 = 1 / (8 C4 (1 + sup |w_beta f0|)), the guaranteed window length."""
    if c4_tilde < 1.0:
        raise ValueError("c4_tilde must be >= 1")
    return 1.0 / (8.0 * c4_tilde * (1.0 + winf0))


def trace_back(x, v, dt, grid):
    """Characteristic foot point (x - v_slab dt) wrapped into [0, period).

    v is a 3-vector (or array of them); only the slab-axis component moves
    the position.  A homogeneous grid (dimension 0) returns x unchanged.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if grid.dimension == 0:
        return x
    v_slab = np.asarray(v, dtype=np.float64)[..., 0]
    return (x - v_slab * dt) % grid.period


@njit(parallel=True, cache=True)
def _duhamel(F0, g, q, vx, dx, period, tau, substeps, out):
    """Mild step along characteristics for every (cell, velocity node).

    F0, g, q, out: (C, N3) arrays; g and q are the frozen-iterate loss rate
    and gain fields.  Foot points use linear periodic interpolation in x.
    Exponential product integration per sub-interval: with xk = gbar h,

      acc <- acc exp(-xk) + qa (E1 - E2) + qb E2,
      E1 = (1 - e^-x)/gbar,  E2 = (1 - (1 - e^-x)/x)/gbar,

    which telescopes to F0 e^{-G} + int e^{-(G - G(s))} q(s) ds and is exact
    when q = gbar * const (equilibrium).  All terms are nonnegative when
    F0, g, q are.
    """
    C, N3 = F0.shape
    h = tau / substeps
    for j in prange(N3):
        v = vx[j]
        for c in range(C):
            xa = (c + 0.5) * dx
            # foot value helper: position at slice k is xa - v*(tau - k h)
            # slice 0 values
            xf = (xa - v * tau) % period
            cc = xf / dx - 0.5
            i0 = int(np.floor(cc))
            w = cc - i0
            i0 = i0 % C
            i1 = (i0 + 1) % C
            acc = F0[i0, j] * (1.0 - w) + F0[i1, j] * w
            ga = g[i0, j] * (1.0 - w) + g[i1, j] * w
            qa = q[i0, j] * (1.0 - w) + q[i1, j] * w
            for k in range(substeps):
                s1 = (k + 1) * h
                xf = (xa - v * (tau - s1)) % period
                cc = xf / dx - 0.5
                i0 = int(np.floor(cc))
                w = cc - i0
                i0 = i0 % C
                i1 = (i0 + 1) % C
                gb = g[i0, j] * (1.0 - w) + g[i1, j] * w
                qb = q[i0, j] * (1.0 - w) + q[i1, j] * w
                gbar = 0.5 * (ga + gb)
                x = gbar * h
                if x < 1e-6:
                    e1 = h * (1.0 - 0.5 * x + x * x / 6.0)
                    e2 = h * (0.5 - x / 6.0 + x * x / 24.0)
                    damp = 1.0 - x + 0.5 * x * x
                else:
                    damp = np.exp(-x)
                    e1 = (1.0 - damp) / gbar
                    e2 = (1.0 - (1.0 - damp) / x) / gbar
                acc = acc * damp + qa * (e1 - e2) + qb * e2
                ga = gb
                qa = qb
            out[c, j] = acc
    return out


class KSSolver:
    """Kaniel-Shinbrot window solver bound to one grid/kernel configuration."""

    def __init__(self, vgrid, sgrid, params, cfg, quad=None):
        self.vgrid = vgrid
        self.sgrid = sgrid
        self.params = params
        self.cfg = cfg
        if quad is None:
            quad = SphereQuadrature.product(cfg.n_cos, cfg.n_az)
        ecut = cfg.energy_cut_factor * vgrid.v_max**2
        if not np.isfinite(ecut):
            ecut = None
        self.op = CollisionOperator(vgrid, params, quad, energy_cut=ecut)
        self.mu = self.op.mu
        self.sqrt_mu = self.op.sqrt_mu
        self.w_beta = weight(vgrid, cfg.beta)
        self.sw_beta = np.sqrt(self.w_beta)
        self.vx = np.ascontiguousarray(vgrid.nodes()[:, 0])
        self.n_gain_evals = 0

    # -- per-iterate operator fields ------------------------------------
    def _fields_ks(self, F):
        """(g, q) loss-rate and gain fields for each cell of F."""
        C = self.sgrid.n_cells
        g = np.empty_like(F)
        q = np.empty_like(F)
        for c in range(C):
            gain, rate = self.op.gain_loss(F[c], F[c])
            q[c] = gain
            g[c] = rate
            self.n_gain_evals += 1
        return g, q

    def _step(self, F0, g, q, tau):
        out = np.empty_like(F0)
        _duhamel(
            F0,
            g,
            q,
            self.vx,
            self.sgrid.dx,
            self.sgrid.period,
            tau,
            self.cfg.substeps,
            out,
        )
        return out

    def ks_linear_step(self, F_prev, F0, tau):
        """One linear Duhamel step: damp/gain fields from F_prev, data F0.

        Both arguments are DistributionFields; returns a DistributionField
        that is nonnegative by construction.
        """
        g, q = self._fields_ks(F_prev.values)
        out = self._step(F0.values, g, q, tau)
        if out.min() < 0.0:
            raise SolverAbort("negative value out of linear step (interpolation bug)")
        return DistributionField(self.vgrid, self.sgrid, out)

    def winf(self, F):
        """sup |w_beta (F - mu)/sqrt(mu)| over the product grid."""
        f = (F - self.mu[None, :]) / self.sqrt_mu[None, :]
        return float(np.max(np.abs(f) * self.w_beta[None, :]))

    def _diff_norm(self, Fa, Fb):
        """sup |sqrt(w_beta) (f_a - f_b)| (contraction norm)."""
        d = (Fa - Fb) / self.sqrt_mu[None, :]
        return float(np.max(np.abs(d) * self.sw_beta[None, :]))

    def local_solve(self, F0, tau):
        """Iterate the window map from F^0 = mu until the weighted sup
        difference of consecutive iterates drops below picard_tol.

        Returns (F_end, trace).  Raises SolverDiverged on three consecutive
        non-contracting ratios or a hard iterate-bound violation.
        """
        cfg = self.cfg
        winf0 = self.winf(F0)
        bound = 2.0 * winf0 * (1.0 + 1e-9) + 1e-12
        tol = cfg.picard_tol * max(1.0, winf0)
        C = self.sgrid.n_cells
        mu_f = np.tile(self.mu, (C, 1))
        F_prev = mu_f
        # iterate 1 uses the cached equilibrium fields: g(mu), Q+(mu,mu)=mu g(mu)
        g_mu = self.op.g_mu()
        g = np.tile(g_mu, (C, 1))
        q = np.tile(g_mu * self.mu, (C, 1))
        trace = IterateTrace()
        grow = 0
        for it in range(cfg.picard_max):
            if it > 0:
                g, q = self._fields_ks(F_prev)
            F_next = self._step(F0, g, q, tau)
            if not np.isfinite(F_next).all():
                raise SolverAbort("non-finite iterate in local solve")
            if F_next.min() < 0.0:
                raise SolverAbort("negative iterate in local solve (impossible by construction)")
            d = self._diff_norm(F_next, F_prev)
            trace.d.append(d)
            wn = self.winf(F_next)
            trace.winf_iterates.append(wn)
            if wn > bound:
                trace.bound_violated = True
                raise SolverDiverged(
                    f"iterate bound violated: sup|w f^{it+1}| = {wn:.3e} > 2*{winf0:.3e}"
                )
            if d <= tol:
                trace.converged = True
                return F_next, trace
            if len(trace.d) >= 2 and trace.d[-2] > 0.0:
                grow = grow + 1 if d >= trace.d[-2] else 0
                if grow >= 3:
                    trace.diverged = True
                    raise SolverDiverged(
                        f"non-contracting iteration at window {tau:.3e}: d = {trace.d[-3:]}"
                    )
            F_prev = F_next
        trace.converged = False
        return F_prev, trace

    # -- mild-form cross-validation stepper ------------------------------
    def _fields_mild(self, F):
        """(g, q) with g = g_mu and q = gain-form of nu f - L f + Gamma terms.

        The mild form in perturbation variables uses the same discrete
        measure: f_t + v.grad f + g_mu f = sqrt(mu) Sk(q) + Gamma(f, f), so
        the Duhamel source is q_mild = mu g_mu + sqrt(mu)(Sk + Gamma-parts),
        written back in F variables to reuse the same characteristic kernel.
        """
        C = self.sgrid.n_cells
        op = self.op
        g_mu = op.g_mu()
        g = np.tile(g_mu, (C, 1))
        q = np.empty_like(F)
        n = self.vgrid.n_per_axis
        for c in range(C):
            f = (F[c] - self.mu) / self.sqrt_mu
            with np.errstate(divide="ignore", invalid="ignore"):
                qq = f / self.sqrt_mu
            qq[self.mu < MU_FLOOR] = 0.0
            qq = np.ascontiguousarray(qq)
            sk = _kernels.lin_k(
                qq,
                self.mu,
                op.u2,
                op.io1,
                op.fr1,
                op.io2,
                op.fr2,
                op.W,
                n,
                op.quad.n_nodes,
                op.energy_cut,
            )
            gam = op.gamma_nl(f)
            # F-form source: F_t + v.grad F + g_mu F = mu g_mu + mu Sk + sqrt(mu) Gamma
            q[c] = self.mu * (g_mu + sk) + self.sqrt_mu * gam
            self.n_gain_evals += 2
        return g, q

    def local_solve_mild(self, F0, tau):
        """Same window iteration with the linearized + Gamma right-hand side."""
        cfg = self.cfg
        tol = cfg.picard_tol * max(1.0, self.winf(F0))
        C = self.sgrid.n_cells
        F_prev = np.tile(self.mu, (C, 1))
        g_mu = self.op.g_mu()
        g = np.tile(g_mu, (C, 1))
        q = np.tile(g_mu * self.mu, (C, 1))
        trace = IterateTrace()
        for it in range(cfg.picard_max):
            if it > 0:
                g, q = self._fields_mild(F_prev)
            F_next = self._step(F0, g, q, tau)
            if not np.isfinite(F_next).all():
                raise SolverAbort("non-finite iterate in mild local solve")
            d = self._diff_norm(F_next, F_prev)
            trace.d.append(d)
            trace.winf_iterates.append(self.winf(F_next))
            if d <= tol:
                trace.converged = True
                return F_next, trace
            if len(trace.d) >= 4 and all(
                b >= a for a, b in zip(trace.d[-4:], trace.d[-3:])
            ):
                trace.diverged = True
                raise SolverDiverged(f"mild iteration non-contracting: d = {trace.d[-3:]}")
            F_prev = F_next
        trace.converged = False
        return F_prev, trace


DIAG_COLUMNS = [
    "t",
    "M0",
    "J0x",
    "J0y",
    "J0z",
    "E0",
    "entropy",
    "winf",
    "linfx_l1v",
    "rho_min",
    "rho_max",
    "lemma25_lhs",
]


@dataclass
class DiagnosticsSeries:
    """Per-report-time scalar diagnostics of a run.

    Columns (midpoint Riemann sums, exact summation):
      t           report time
      M0,J0*,E0   defect moments of F relative to mu
      entropy     defect entropy functional (>= 0)
      winf        sup |w_beta f|
      linfx_l1v   sup_x int |f| dv
      rho_min/max extrema over cells of the density int F dv
      lemma25_lhs pointwise-split entropy lower bound (quadratic branch where
                  |F-mu| <= mu plus linear branch elsewhere); bounded by the
                  initial entropy along exact solutions
    """

    columns: list = field(default_factory=lambda: list(DIAG_COLUMNS))
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    aborted: bool = False
    abort_reason: str = ""
    final_field: DistributionField | None = None

    def add(self, **kw):
        self.rows.append([kw[c] for c in self.columns])

    def column(self, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self, path, provenance=None):
        with open(path, "w") as fh:
            if provenance is not None:
                fh.write("# provenance: " + json.dumps(provenance, sort_keys=True) + "\n")
            fh.write("# columns: " + ",".join(self.columns) + "\n")
            fh.write(",".join(self.columns) + "\n")
            for r in self.rows:
                fh.write(",".join(f"{x:.17g}" for x in r) + "\n")

    def to_json(self, path, provenance=None):
        doc = {
            "provenance": provenance,
            "columns": self.columns,
            "rows": self.rows,
            "meta": self.meta,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)


def lemma25_lhs(F, vgrid, sgrid):
    """Pointwise-split entropy lower-bound functional.

    int int [ |F-mu|^2/(4 mu) 1_{|F-mu| <= mu} + |F-mu|/4 1_{|F-mu| > mu} ];
    the boundary set |F-mu| = mu is assigned to the linear branch.
    """
    mu = maxwellian(vgrid)[None, :]
    diff = np.abs(F - mu)
    quad_branch = diff < mu
    val = np.where(quad_branch, diff**2 / (4.0 * mu), 0.25 * diff)
    return fsum(val) * vgrid.dv**3 * sgrid.dx


def run(F0_field, cfg, params, quad=None, on_window=None):
    """Windowed globalization of the local solver.

    Window length = min(dt, t1(current winf), remaining time); windows that
    fail to contract are retried at half length.  Emits one diagnostics row
    per `report_every` windows (always including the initial state and the
    final time).  Returns a DiagnosticsSeries with the terminal state
    attached as .final_field.  Raises SolverAbort (with the offending field
    attached) on positivity or non-finite failures that survive retries.
    """
    vgrid, sgrid = F0_field.vgrid, F0_field.sgrid
    solver = KSSolver(vgrid, sgrid, params, cfg, quad=quad)
    series = DiagnosticsSeries(
        meta={
            "vgrid": vgrid.meta(),
            "sgrid": sgrid.meta(),
            "gamma": params.gamma,
            "cb": params.cb,
            "beta": cfg.beta,
        }
    )

    def report(t, F):
        fld = DistributionField(vgrid, sgrid, F)
        snap = conserved_snapshot(fld)
        pert = to_perturbation(fld)
        nr = norms(pert, cfg.beta)
        mom = cell_moments(fld)
        series.add(
            t=t,
            M0=snap.M0,
            J0x=snap.J0[0],
            J0y=snap.J0[1],
            J0z=snap.J0[2],
            E0=snap.E0,
            entropy=snap.entropy,
            winf=nr["winf"],
            linfx_l1v=nr["linfx_l1v"],
            rho_min=float(mom["rho"].min()),
            rho_max=float(mom["rho"].max()),
            lemma25_lhs=lemma25_lhs(F, vgrid, sgrid),
        )

    F = np.array(F0_field.values, dtype=np.float64)
    if F.min() < 0.0:
        raise SolverAbort("initial data has negative values", F0_field, 0.0)
    t = 0.0
    report(0.0, F)
    window_index = 0
    while t < cfg.t_end - 1e-12:
        t_wall = time.perf_counter()
        winf = solver.winf(F)
        t1 = lifespan(winf, cfg.c4_tilde)
        tau = min(cfg.dt, t1, cfg.t_end - t)
        tau_floor = tau / 64.0
        trace = None
        while True:
            try:
                fld = DistributionField(vgrid, sgrid, F)
                if cfg.stepper == "mild":
                    F_new, trace = solver.local_solve_mild(fld.values, tau)
                else:
                    F_new, trace = solver.local_solve(fld.values, tau)
                if trace.converged:
                    break
                raise SolverDiverged("picard_max reached without meeting picard_tol")
            except SolverDiverged:
                tau *= 0.5
                if tau < tau_floor:
                    raise SolverAbort(
                        "window halving exhausted without contraction",
                        DistributionField(vgrid, sgrid, F),
                        t,
                    )
            except SolverAbort as exc:
                exc.field = DistributionField(vgrid, sgrid, F)
                exc.t = t
                raise
        F = F_new
        t += tau
        window_index += 1
        wall = time.perf_counter() - t_wall
        last = t >= cfg.t_end - 1e-12
        if window_index % max(1, cfg.report_every) == 0 or last:
            report(t, F)
        if on_window is not None:
            on_window(
                window_index,
                t,
                tau,
                trace,
                wall,
                DistributionField(vgrid, sgrid, F),
            )
    series.meta["n_gain_evals"] = solver.n_gain_evals
    series.final_field = DistributionField(vgrid, sgrid, F)
    return series
