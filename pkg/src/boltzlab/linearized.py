"""Linearized collision operator L = nu - K and its kernel-bound verifiers.

The operator K acts on velocity profiles f through the Maxwellian-weighted
collision integral; Grad's representation writes it with integral kernels,
Kf = int (k_2 - k_1)(v, eta) f(eta) d eta.  Only k_1 has a closed form here;
the k_2 part is handled through its Gaussian upper envelope and K itself is
always applied by direct (u, omega) quadrature in the ratio variable
q = f / sqrt(mu).

A smooth cutoff chi_m on the relative speed splits K = K^m + K^c.  The small
relative-speed part K^m is integrated on the shell |u - v| <= 2m; the
complement K^c is recovered as K - K^m.  Three families of kernel estimates
are checked numerically, labelled by the bound tags used throughout this
project: 2.31 (screened-part sup bound with m^{3+gamma} scaling), 2.18
(weighted integral of the full kernel envelope), and 2.40 (weighted integral
of the complement-kernel envelope, with its m^{gamma-1} growth).  Verifier
reports are plain dicts ready for JSON emission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _kernels
from .collision import KernelParams, SphereQuadrature, nu_exact
from .phase import MU_FLOOR, VelocityGrid, maxwellian

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class KernelEval:
    """A kernel evaluation together with the two parts it was built from.

    For the full-kernel envelope the parts are (k1_part, k2_part) and the
    value is their sum, an upper bound for |k| = |k_2 - k_1|.  For the
    complement kernel the parts are (l_smooth, l_gaussian) and the value is
    again the sum.  In both cases value recombines from parts exactly.
    """

    value: float
    parts: tuple[float, float]

    def __post_init__(self):
        if self.value != self.parts[0] + self.parts[1]:
            raise ValueError("value must equal the sum of its parts")


@dataclass(frozen=True)
class CutoffSplit:
    """Relative-speed cutoff profile chi_m: 1 on [0, m], 0 on [2m, inf).

    The transition uses the quintic smoothstep sigma(t) = 6t^5 - 15t^4 + 10t^3
    evaluated at t = (2m - s)/m, so chi_m is C^2 with plateaus at both ends
    and is monotone non-increasing on [m, 2m].
    """

    m: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.m <= 1.0):
            raise ValueError("cutoff parameter m must lie in (0, 1]")

    def chi(self, s):
        t = np.clip((2.0 * self.m - np.asarray(s, dtype=float)) / self.m, 0.0, 1.0)
        out = t * t * t * (t * (6.0 * t - 15.0) + 10.0)
        if np.isscalar(s):
            return float(out)
        return out


def k1_kernel(v, eta, params):
    """Closed-form kernel c1 |v-eta|^gamma e^{-|v|^2/4} e^{-|eta|^2/4}.

    c1 = 2 pi C_b, the angular integral of the |cos theta| factor.  For
    gamma < 0 the diagonal v = eta is a non-integrable point evaluation and
    is rejected; quadratures must exclude it.
    """
    v = np.asarray(v, dtype=float)
    eta = np.asarray(eta, dtype=float)
    d = v - eta
    dn = math.sqrt(float(d @ d))
    if dn == 0.0:
        if params.gamma < 0.0:
            raise ValueError("k1 is singular on the diagonal for gamma < 0")
        if params.gamma > 0.0:
            return 0.0
        # gamma == 0: |v-eta|^0 -> 1 in the limit
        return TWO_PI * params.cb * math.exp(-0.5 * float(v @ v))
    c1 = TWO_PI * params.cb
    return c1 * dn**params.gamma * math.exp(-0.25 * float(v @ v) - 0.25 * float(eta @ eta))


def k2_bound(v, eta, params):
    """Gaussian upper envelope for the gain-part kernel k_2 (unit constant).

    Shape: |d|^{-(3-gamma)/2} e^{-|d|^2/8} e^{-(|v|^2-|eta|^2)^2/(8|d|^2)}
    with d = v - eta.  The diagonal is singular for every gamma <= 1.
    """
    v = np.asarray(v, dtype=float)
    eta = np.asarray(eta, dtype=float)
    d = v - eta
    d2 = float(d @ d)
    if d2 == 0.0:
        raise ValueError("k2 envelope is singular on the diagonal")
    dn = math.sqrt(d2)
    diff = float(v @ v) - float(eta @ eta)
    return dn ** (-0.5 * (3.0 - params.gamma)) * math.exp(-0.125 * d2 - 0.125 * diff * diff / d2)


def k_envelope(v, eta, params):
    """KernelEval for the full-kernel envelope |k| <= k1 + k2_bound."""
    a = k1_kernel(v, eta, params)
    b = k2_bound(v, eta, params)
    return KernelEval(value=a + b, parts=(a, b))


def l_envelope(v, eta, params, m, a=1.0):
    """KernelEval for the complement-kernel envelope at interpolation a.

    Smooth part: m^{a(gamma-1)} |d|^{-(1+(1-a)(1-gamma)/2)}
    (1+|v|+|eta|)^{-a(1-gamma)} e^{-|d|^2/10} e^{-(|v|^2-|eta|^2)^2/(16|d|^2)};
    Gaussian part: the k1 shape with unit constant.  a=1 gives the
    m^{gamma-1} envelope, a=0 the m-free |d|^{-(3-gamma)/2} one.
    """
    if not (0.0 <= a <= 1.0):
        raise ValueError("interpolation parameter a must lie in [0, 1]")
    v = np.asarray(v, dtype=float)
    eta = np.asarray(eta, dtype=float)
    d = v - eta
    d2 = float(d @ d)
    if d2 == 0.0:
        raise ValueError("l envelope is singular on the diagonal")
    v2 = float(v @ v)
    e2 = float(eta @ eta)
    dn = math.sqrt(d2)
    diff = v2 - e2
    p = 1.0 + 0.5 * (1.0 - a) * (1.0 - params.gamma)
    smooth = (
        m ** (a * (params.gamma - 1.0))
        * dn ** (-p)
        * (1.0 + math.sqrt(v2) + math.sqrt(e2)) ** (-a * (1.0 - params.gamma))
        * math.exp(-0.1 * d2 - 0.0625 * diff * diff / d2)
    )
    gauss = dn**params.gamma * math.exp(-0.25 * v2 - 0.25 * e2)
    return KernelEval(value=smooth + gauss, parts=(smooth, gauss))


def _node_index(vgrid, idx):
    if np.isscalar(idx):
        return int(idx)
    ax, ay, az = (int(i) for i in idx)
    n = vgrid.n_per_axis
    return (ax * n + ay) * n + az


def _ratio_profile(f, vgrid):
    mu = maxwellian(vgrid)
    q = np.zeros_like(mu)
    mask = mu > MU_FLOOR
    q[mask] = np.asarray(f, dtype=float).ravel()[mask] / np.sqrt(mu[mask])
    return np.ascontiguousarray(q)


def apply_K(f, idx, vgrid, params, quad):
    """(K f)(v) at one grid node by direct (u, omega) quadrature.

    f is a raw velocity profile on the lattice; internally the ratio
    q = f / sqrt(mu) is interpolated tricubically at post-collision points,
    which makes K exact on the five collision-invariant profiles
    {sqrt(mu), v sqrt(mu), |v|^2 sqrt(mu)} up to round-off.
    """
    val, _ = apply_K_with_nu(f, idx, vgrid, params, quad)
    return val


def apply_K_with_nu(f, idx, vgrid, params, quad):
    """Same as apply_K but also returns the matched discrete nu(v)."""
    k = _node_index(vgrid, idx)
    n = vgrid.n_per_axis
    ax, r = divmod(k, n * n)
    ay, az = divmod(r, n)
    q = _ratio_profile(f, vgrid)
    sk, nu = _kernels.apply_k_node(
        q, n, vgrid.dv, vgrid.v_max, ax, ay, az, quad.nodes, quad.weights, params.gamma, params.cb
    )
    vnode = -vgrid.v_max + (np.array([ax, ay, az]) + 0.5) * vgrid.dv
    smu = math.exp(-0.25 * float(vnode @ vnode)) * (2.0 * math.pi) ** (-0.75)
    return smu * sk, nu


def shell_rules(split, n_r=16, n_polar=4, n_az=12):
    """Quadrature rules for the shell integral |u - v| <= 2m.

    Radial Gauss-Legendre on [0, 2m] (endpoints excluded, so the integrable
    r^{2+gamma} origin is never sampled) and a product rule on the unit
    sphere of shell directions.
    """
    x, w = np.polynomial.legendre.leggauss(n_r)
    rn = (x + 1.0) * split.m  # scale [-1,1] -> [0, 2m]
    rw = w * split.m
    xc, wc = np.polynomial.legendre.leggauss(n_polar)
    phi = (np.arange(n_az) + 0.5) * (TWO_PI / n_az)
    st = np.sqrt(1.0 - xc**2)
    sgn = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.outer(xc, np.ones(n_az)).ravel(),
        ],
        axis=1,
    )
    sgw = np.outer(wc, np.full(n_az, TWO_PI / n_az)).ravel()
    return (
        np.ascontiguousarray(rn),
        np.ascontiguousarray(rw),
        np.ascontiguousarray(sgn),
        np.ascontiguousarray(sgw),
    )


def apply_Km(f, idx, vgrid, params, split, quad, n_r=16, n_polar=4, n_az=12):
    """(K^m f)(v) at one grid node: the chi_m-screened shell integral."""
    k = _node_index(vgrid, idx)
    n = vgrid.n_per_axis
    ax, r = divmod(k, n * n)
    ay, az = divmod(r, n)
    q = _ratio_profile(f, vgrid)
    rn, rw, sgn, sgw = shell_rules(split, n_r, n_polar, n_az)
    vnode = -vgrid.v_max + (np.array([ax, ay, az]) + 0.5) * vgrid.dv
    sk = _kernels.km_shell_node_q(
        q,
        n,
        vgrid.dv,
        vgrid.v_max,
        vnode[0],
        vnode[1],
        vnode[2],
        split.m,
        rn,
        rw,
        sgn,
        sgw,
        quad.nodes,
        quad.weights,
        params.gamma,
        params.cb,
    )
    smu = math.exp(-0.25 * float(vnode @ vnode)) * (2.0 * math.pi) ** (-0.75)
    return smu * sk


def apply_Kc(f, idx, vgrid, params, split, quad, n_r=16, n_polar=4, n_az=12):
    """(K^c f)(v) = (K f)(v) - (K^m f)(v); exact complement by construction."""
    return apply_K(f, idx, vgrid, params, quad) - apply_Km(
        f, idx, vgrid, params, split, quad, n_r, n_polar, n_az
    )


PROFILE_NAMES = {0: "constant", 1: "cos(5 v_x)", 2: "sign(sin(3 v_x))"}


def _eval_lattice(v_max, n):
    """Midpoint lattice plus an origin-centered probe cube.

    The midpoint lattice has no origin node, but the weighted sup of the
    screened operator sits at or near v = 0; a 3^3 cube at half the lattice
    spacing around the origin removes that systematic understatement.
    """
    ax = -v_max + (np.arange(n) + 0.5) * (2.0 * v_max / n)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    off = np.array([-0.5, 0.0, 0.5]) * (v_max / n)
    px, py, pz = np.meshgrid(off, off, off, indexing="ij")
    probe = np.stack([px.ravel(), py.ravel(), pz.ravel()], axis=1)
    return np.ascontiguousarray(np.vstack([pts, probe]))


def km_profile_values(profile_id, m, params, pts, n_r=16, n_polar=4, n_az=12, om_cos=4, om_az=8):
    """e^{|v|^2/10}-weighted |K^m g| over pts for an analytic unit-sup profile."""
    split = CutoffSplit(m)
    rn, rw, sgn, sgw = shell_rules(split, n_r, n_polar, n_az)
    om = SphereQuadrature.product(om_cos, om_az)
    out = np.empty(pts.shape[0])
    _kernels.km_profile_grid(
        profile_id, pts, m, rn, rw, sgn, sgw, om.nodes, om.weights, params.gamma, params.cb, out
    )
    speeds2 = np.sum(pts * pts, axis=1)
    return np.abs(out) * np.exp(speeds2 / 10.0)


def km_profile_sup(profile_id, m, params, pts, n_r=16, n_polar=4, n_az=12, om_cos=4, om_az=8):
    """sup over pts of |K^m g| e^{|v|^2/10} for an analytic unit-sup profile."""
    return float(
        np.max(km_profile_values(profile_id, m, params, pts, n_r, n_polar, n_az, om_cos, om_az))
    )


def verify_bound_2_31(
    params,
    m_list=(1.0, 0.5, 0.25, 0.125),
    v_max=4.0,
    n=16,
    profiles=(0, 1, 2),
    refine=True,
):
    """Screened-part sup bound: S(m) = sup_v |K^m g| e^{|v|^2/10} ~ C m^{3+gamma}.

    S(m) is maximized over analytic test profiles with unit sup norm,
    including a sign-alternating worst case, on a midpoint evaluation
    lattice.  The window v_max=4 contains the weighted sup with wide margin
    (the field falls below 5 percent of its peak by |v| ~ 3.5 for every
    gamma in range and every m <= 1); the finer spacing keeps the lattice
    sup within a few percent of the continuum peak, which sits at or near
    the origin.  Reports the log-log slope over the m list, the fitted
    constant C = max S(m)/m^{3+gamma}, and a refinement delta at the
    largest m: the sup location and its half-spacing lattice neighborhood
    are re-evaluated with every quadrature order doubled, probing both the
    evaluation grid and the integration rules without a full recompute.
    """
    pts = _eval_lattice(v_max, n)
    samples = []
    per_profile = {}
    for m in m_list:
        best = -1.0
        for p in profiles:
            vals = km_profile_values(p, m, params, pts)
            per_profile[(p, float(m))] = vals
            best = max(best, float(np.max(vals)))
        samples.append({"m": float(m), "S": best})
    logm = np.log([s["m"] for s in samples])
    logs = np.log([s["S"] for s in samples])
    slope = float(np.polyfit(logm, logs, 1)[0])
    fitted = float(max(s["S"] / s["m"] ** (3.0 + params.gamma) for s in samples))
    delta = None
    if refine:
        m0 = float(m_list[0])
        base = samples[0]["S"]
        h = v_max / n  # half lattice spacing
        offs = np.array([-1.0, 0.0, 1.0]) * h
        fine = 0.0
        for p in profiles:
            vals = per_profile[(p, m0)]
            center = pts[int(np.argmax(vals))]
            local = np.ascontiguousarray(
                center[None, :]
                + np.stack(np.meshgrid(offs, offs, offs, indexing="ij"), axis=-1).reshape(-1, 3)
            )
            fine = max(
                fine,
                float(
                    np.max(
                        km_profile_values(
                            p, m0, params, local, n_r=32, n_polar=8, n_az=24, om_cos=8, om_az=16
                        )
                    )
                ),
            )
        delta = float(abs(fine - base) / max(abs(fine), 1e-300))
    return {
        "bound_id": "2.31",
        "params": {"gamma": params.gamma, "cb": params.cb},
        "samples": samples,
        "slope": slope,
        "fitted_constant": fitted,
        "refinement_delta": delta,
    }


def _bound_integral(v, alpha, params, h, eta_max, kind, m=1.0, a=1.0):
    return _kernels.bound_integral_point(
        float(v[0]),
        float(v[1]),
        float(v[2]),
        float(alpha),
        params.gamma,
        float(h),
        float(eta_max),
        int(kind),
        float(m),
        float(a),
    )


def verify_bound_2_18(
    params,
    alpha_list=(0.0, 5.0),
    v_samples=(0.0, 2.0, 4.0, 8.0),
    h=0.5,
    eta_max=12.0,
):
    """Weighted integral of the full-kernel envelope against (1+|v|)^{-1}.

    For each sample v (placed on the x axis) and each weight exponent alpha,
    computes (1+|v|) * int |k1 + k2_bound| w_alpha(v)/w_alpha(eta) d eta on a
    midpoint eta lattice with one level of local refinement near eta = v, and
    again with the mesh halved.  Finite, refinement-stable values certify the
    bound; the fitted constant is the sup over samples of the refined value.
    """
    samples = []
    worst = 0.0
    for alpha in alpha_list:
        for speed in v_samples:
            v = np.array([float(speed), 0.0, 0.0])
            coarse = (1.0 + speed) * _bound_integral(v, alpha, params, h, eta_max, kind=0)
            fine = (1.0 + speed) * _bound_integral(v, alpha, params, 0.5 * h, eta_max, kind=0)
            rel = abs(fine - coarse) / max(abs(fine), 1e-300)
            worst = max(worst, rel)
            samples.append(
                {
                    "alpha": float(alpha),
                    "speed": float(speed),
                    "value": coarse,
                    "value_refined": fine,
                    "refinement_delta": rel,
                }
            )
    fitted = float(max(s["value_refined"] for s in samples))
    return {
        "bound_id": "2.18",
        "params": {"gamma": params.gamma, "cb": params.cb},
        "samples": samples,
        "fitted_constant": fitted,
        "refinement_delta": float(worst),
        "quadrature_converged": bool(worst <= 0.05),
    }


def verify_bound_2_40(
    params,
    m_list=(0.1, 0.2, 0.4, 0.8),
    v_samples=(0.0, 2.0, 4.0, 8.0),
    alpha=0.0,
    h=0.5,
    eta_max=12.0,
):
    """Weighted integral of the complement-kernel envelope, both forms.

    The m-dependent envelope integrates the a=1 smooth term plus the shared
    Gaussian term and is compared against m^{gamma-1} nu(v) / (1+|v|)^2; the
    m-free envelope integrates the a=0 form against (1+|v|)^{-1}.  The slope
    is fitted on the m-dependent smooth term alone (the Gaussian term carries
    no m and would flatten it); constants are fitted as the max ratio over
    samples and frozen in the report.
    """
    nu_of = {s: nu_exact(s, params) for s in v_samples}
    samples = []
    smooth_sup = []
    for m in m_list:
        per_v = []
        for speed in v_samples:
            v = np.array([float(speed), 0.0, 0.0])
            smooth = _bound_integral(v, alpha, params, h, eta_max, kind=1, m=m, a=1.0)
            gauss = _bound_integral(v, alpha, params, h, eta_max, kind=2)
            total = smooth + gauss
            envelope_m = m ** (params.gamma - 1.0) * nu_of[speed] / (1.0 + speed) ** 2
            per_v.append(
                {
                    "m": float(m),
                    "speed": float(speed),
                    "smooth": smooth,
                    "gaussian": gauss,
                    "total": total,
                    "envelope_m_dependent": envelope_m,
                }
            )
        samples.extend(per_v)
        smooth_sup.append(max(p["smooth"] for p in per_v))
    logm = np.log(np.asarray(m_list, dtype=float))
    slope = float(np.polyfit(logm, np.log(smooth_sup), 1)[0])
    c_m = max(s["total"] / s["envelope_m_dependent"] for s in samples)
    free = []
    for speed in v_samples:
        v = np.array([float(speed), 0.0, 0.0])
        smooth0 = _bound_integral(v, alpha, params, h, eta_max, kind=1, m=1.0, a=0.0)
        gauss = _bound_integral(v, alpha, params, h, eta_max, kind=2)
        free.append(
            {
                "speed": float(speed),
                "total": smooth0 + gauss,
                "envelope_m_free": 1.0 / (1.0 + speed),
            }
        )
    c_free = max(s["total"] / s["envelope_m_free"] for s in free)
    ref_v = np.array([float(v_samples[1]), 0.0, 0.0]) if len(v_samples) > 1 else np.zeros(3)
    base = _bound_integral(ref_v, alpha, params, h, eta_max, kind=1, m=m_list[0], a=1.0)
    fine = _bound_integral(ref_v, alpha, params, 0.5 * h, eta_max, kind=1, m=m_list[0], a=1.0)
    delta = float(abs(fine - base) / max(abs(fine), 1e-300))
    return {
        "bound_id": "2.40",
        "params": {"gamma": params.gamma, "cb": params.cb, "alpha": float(alpha)},
        "samples": samples,
        "m_free_samples": free,
        "slope": slope,
        "fitted_constant": float(c_m),
        "fitted_constant_m_free": float(c_free),
        "refinement_delta": delta,
        "quadrature_converged": bool(delta <= 0.05),
    }


def k1_integral_two_routes(speed, params, n_r=80, n_polar=24, n_az=24, quad=None):
    """Two independent evaluations of int k1(v, eta) d eta at |v| = speed.

    Route one integrates the closed-form kernel radially (adaptive, with the
    sphere average of |v - eta|^gamma in closed form).  Route two evaluates
    the defining double quadrature int int B sqrt(mu(v) mu(u)) domega du with
    Gauss-Legendre shells and a product sphere rule for omega; the kernel
    route carries the Maxwellian normalization (2 pi)^{-3/2} so both compute
    the same operator integral (K_1 applied to the constant profile).
    """
    g = params.gamma
    s = float(speed)

    def sphere_avg(r):
        # int_{S^2} |v - r sigma|^gamma dsigma, closed form
        if s == 0.0 or r == 0.0:
            return 4.0 * math.pi * max(r, s) ** g if (r or s) else 0.0
        if g == -2.0:
            return (TWO_PI / (s * r)) * math.log((s + r) ** 2 / (s - r) ** 2) if s != r else math.inf
        return TWO_PI * ((s + r) ** (g + 2.0) - abs(s - r) ** (g + 2.0)) / (s * r * (g + 2.0))

    def radial(r):
        return r * r * math.exp(-0.25 * r * r) * sphere_avg(r)

    tail, _ = integrate.quad(radial, 0.0, s + 40.0, points=[s] if s > 0 else None, limit=200)
    # (2 pi)^{-3/2} converts the kernel form to the operator integral
    kernel_route = TWO_PI * params.cb * math.exp(-0.25 * s * s) * tail * (2.0 * math.pi) ** (-1.5)

    if quad is None:
        quad = SphereQuadrature.product(8, 12)
    x, w = np.polynomial.legendre.leggauss(n_r)
    rmax = s + 14.0
    rn = 0.5 * (x + 1.0) * rmax
    rw = 0.5 * w * rmax
    xc, wc = np.polynomial.legendre.leggauss(n_polar)
    phi = (np.arange(n_az) + 0.5) * (TWO_PI / n_az)
    vvec = np.array([s, 0.0, 0.0])
    st = np.sqrt(1.0 - xc**2)
    dirs = np.stack(
        [
            np.outer(xc, np.ones(n_az)).ravel(),
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
        ],
        axis=1,
    )
    dw = np.outer(wc, np.full(n_az, TWO_PI / n_az)).ravel()
    cos_w = float(np.sum(quad.weights * np.abs(quad.nodes[:, 2])))
    norm = (2.0 * math.pi) ** (-1.5)
    acc = 0.0
    for r, wr in zip(rn, rw):
        u = r * dirs
        rel = vvec[None, :] - u
        rel_n = np.sqrt(np.sum(rel * rel, axis=1))
        mu_fac = norm * np.exp(-0.25 * s * s - 0.25 * r * r)
        vals = params.cb * rel_n**g * mu_fac
        acc += wr * r * r * float(np.sum(dw * vals))
    direct_route = acc * cos_w
    return {
        "kernel_route": float(kernel_route),
        "direct_route": float(direct_route),
        "rel_diff": float(abs(kernel_route - direct_route) / max(abs(direct_route), 1e-300)),
    }
