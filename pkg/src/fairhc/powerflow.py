"""Polar Newton-Raphson AC power flow for radial feeders, plus operational-limit
residuals and adjoint sensitivities of those residuals w.r.t. DG injections.

The Newton core is batched: a stack of injection vectors is solved simultaneously
with vectorized Jacobian assembly.  The public single-shot API wraps batch size 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, SingularJacobian
from .netmodel import NormalizedFeeder

PF_TOL = 1e-8
PF_MAX_ITER = 50
_V_FLOOR = 1e-6  # below this a point is declared diverged


@dataclass
class PowerFlowState:
    """Converged operating point in per unit."""

    v: np.ndarray  # (n,) bus voltage magnitudes
    theta: np.ndarray  # (n,) bus angles, rad
    p_flow: np.ndarray  # (L,) sending-end active flow, from-side
    q_flow: np.ndarray  # (L,) sending-end reactive flow, from-side
    p_flow_rev: np.ndarray  # (L,) flow measured at the to-side
    q_flow_rev: np.ndarray
    p_slack: float  # slack active exchange, pu
    q_slack: float
    iterations: int
    max_mismatch: float


@dataclass
class ConstraintResiduals:
    """Limit-minus-value margins; a feasible state has every entry >= 0.

    ``thermal`` and ``angle`` hold both orientations: row 0 is the from-side /
    upper margin, row 1 the to-side / lower margin.
    """

    v_upper: np.ndarray  # (n,)
    v_lower: np.ndarray  # (n,)
    thermal: np.ndarray  # (2, L)
    slack_p: np.ndarray  # (2,) upper, lower exchange margins
    slack_q: np.ndarray  # (2,)
    angle: np.ndarray  # (2, L)

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.v_upper, self.v_lower, self.thermal.ravel(), self.slack_p, self.slack_q, self.angle.ravel()]
        )

    def min(self) -> float:
        return float(self.as_vector().min())


def residual_labels(nf: NormalizedFeeder) -> list[str]:
    """Names matching the order of :meth:`ConstraintResiduals.as_vector`."""
    labels = [f"v_upper[{bid}]" for bid in nf.bus_ids]
    labels += [f"v_lower[{bid}]" for bid in nf.bus_ids]
    lines = [f"{nf.bus_ids[nf.from_bus[l]]}-{nf.bus_ids[nf.to_bus[l]]}" for l in range(nf.n_line)]
    labels += [f"thermal_fwd[{name}]" for name in lines]
    labels += [f"thermal_rev[{name}]" for name in lines]
    labels += ["slack_p_upper", "slack_p_lower", "slack_q_upper", "slack_q_lower"]
    labels += [f"angle_upper[{name}]" for name in lines]
    labels += [f"angle_lower[{name}]" for name in lines]
    return labels


# ---------------------------------------------------------------------------
# Branch flow model.  For a series admittance y = g + jb measured at end m:
#   P_mn = g Vm^2 - Vm Vn (g cos(t) + b sin(t)),  t = theta_m - theta_n
#   Q_mn = -b Vm^2 + Vm Vn (b cos(t) - g sin(t))
# ---------------------------------------------------------------------------

def _flows(vm, vn, t, g, b):
    c, s = np.cos(t), np.sin(t)
    p = g * vm**2 - vm * vn * (g * c + b * s)
    q = -b * vm**2 + vm * vn * (b * c - g * s)
    return p, q


def _flow_partials(vm, vn, t, g, b):
    """Partials of (P_mn, Q_mn) w.r.t. (theta_m, theta_n, Vm, Vn)."""
    c, s = np.cos(t), np.sin(t)
    dp_dtm = vm * vn * (g * s - b * c)
    dp_dvm = 2.0 * g * vm - vn * (g * c + b * s)
    dp_dvn = -vm * (g * c + b * s)
    dq_dtm = -vm * vn * (b * s + g * c)
    dq_dvm = -2.0 * b * vm + vn * (b * c - g * s)
    dq_dvn = vm * (b * c - g * s)
    return dp_dtm, -dp_dtm, dp_dvm, dp_dvn, dq_dtm, -dq_dtm, dq_dvm, dq_dvn


class _BatchResult:
    """Raw arrays from a batched Newton solve (shapes lead with batch size)."""

    __slots__ = ("v", "theta", "p_f", "q_f", "p_r", "q_r", "p_slack", "q_slack",
                 "converged", "mismatch", "iterations", "singular")

    def __init__(self, **kw):
        for k, val in kw.items():
            setattr(self, k, val)


def _injections(nf: NormalizedFeeder, dg: np.ndarray, dg_q: np.ndarray):
    B = dg.shape[0]
    p_inj = np.zeros((B, nf.n_bus))
    q_inj = np.zeros((B, nf.n_bus))
    p_inj[:, nf.load_bus] = dg - nf.p_demand[None, :]
    q_inj[:, nf.load_bus] = dg_q - nf.q_demand[None, :]
    return p_inj, q_inj


def _nodal_power(nf: NormalizedFeeder, v, theta):
    """Bus injections implied by (v, theta), plus both branch flow directions."""
    B = v.shape[0]
    fb, tb = nf.from_bus, nf.to_bus
    t = theta[:, fb] - theta[:, tb]
    p_f, q_f = _flows(v[:, fb], v[:, tb], t, nf.g[None, :], nf.b[None, :])
    p_r, q_r = _flows(v[:, tb], v[:, fb], -t, nf.g[None, :], nf.b[None, :])
    p_calc = np.zeros((B, nf.n_bus))
    q_calc = np.zeros((B, nf.n_bus))
    for l in range(nf.n_line):
        p_calc[:, fb[l]] += p_f[:, l]
        q_calc[:, fb[l]] += q_f[:, l]
        p_calc[:, tb[l]] += p_r[:, l]
        q_calc[:, tb[l]] += q_r[:, l]
    return p_calc, q_calc, p_f, q_f, p_r, q_r


def _assemble_jacobian(nf: NormalizedFeeder, v, theta, pos, m):
    """Dense (B, 2m, 2m) Jacobian of the non-slack mismatch equations."""
    B = v.shape[0]
    J = np.zeros((B, 2 * m, 2 * m))
    fb, tb = nf.from_bus, nf.to_bus
    for l in range(nf.n_line):
        a, c = int(fb[l]), int(tb[l])
        g, b = nf.g[l], nf.b[l]
        for eq, other, sign in ((a, c, 1.0), (c, a, -1.0)):
            # flow measured at `eq` toward `other`; contributes to eq's balance
            t = sign * (theta[:, a] - theta[:, c])
            parts = _flow_partials(v[:, eq], v[:, other], t, g, b)
            dp_dte, dp_dto, dp_dve, dp_dvo, dq_dte, dq_dto, dq_dve, dq_dvo = parts
            pe = pos[eq]
            if pe >= 0:
                rp, rq = pe, m + pe
                J[:, rp, pe] += dp_dte
                J[:, rp, m + pe] += dp_dve
                J[:, rq, pe] += dq_dte
                J[:, rq, m + pe] += dq_dve
                po = pos[other]
                if po >= 0:
                    J[:, rp, po] += dp_dto
                    J[:, rp, m + po] += dp_dvo
                    J[:, rq, po] += dq_dto
                    J[:, rq, m + po] += dq_dvo
    return J


def _solve_batch(nf: NormalizedFeeder, dg: np.ndarray, dg_q: np.ndarray,
                 tol: float = PF_TOL, max_iter: int = PF_MAX_ITER) -> _BatchResult:
    B = dg.shape[0]
    n = nf.n_bus
    ns = np.array([i for i in range(n) if i != nf.slack], dtype=int)
    m = n - 1
    pos = np.full(n, -1, dtype=int)
    pos[ns] = np.arange(m)
    p_inj, q_inj = _injections(nf, dg, dg_q)

    v = np.ones((B, n))
    theta = np.zeros((B, n))
    converged = np.zeros(B, dtype=bool)
    failed = np.zeros(B, dtype=bool)
    singular = np.zeros(B, dtype=bool)
    iterations = np.zeros(B, dtype=int)
    mismatch = np.full(B, np.inf)

    idx = np.arange(B)  # active (undecided) points; converged/failed drop out
    with np.errstate(all="ignore"):
        for it in range(max_iter + 1):
            p_calc, q_calc, *_ = _nodal_power(nf, v[idx], theta[idx])
            F = np.concatenate(
                [p_calc[:, ns] - p_inj[idx][:, ns], q_calc[:, ns] - q_inj[idx][:, ns]], axis=1
            )
            bad = ~np.isfinite(F).all(axis=1) | (v[idx][:, ns].min(axis=1) < _V_FLOOR)
            mis = np.abs(np.where(np.isfinite(F), F, np.inf)).max(axis=1) if m > 0 else np.zeros(len(idx))
            conv = ~bad & (mis < tol)
            iterations[idx[conv]] = it
            converged[idx[conv]] = True
            failed[idx[bad]] = True
            mismatch[idx] = np.where(bad, np.inf, mis)
            keep = ~conv & ~bad
            idx = idx[keep]
            if len(idx) == 0 or it == max_iter:
                break
            F = F[keep]
            J = _assemble_jacobian(nf, v[idx], theta[idx], pos, m)
            try:
                dx = np.linalg.solve(J, -F[..., None])[..., 0]
            except np.linalg.LinAlgError:
                dx = np.zeros_like(F)
                sing_local = np.zeros(len(idx), dtype=bool)
                for i in range(len(idx)):
                    try:
                        dx[i] = np.linalg.solve(J[i], -F[i])
                    except np.linalg.LinAlgError:
                        sing_local[i] = True
                singular[idx[sing_local]] = True
                failed[idx[sing_local]] = True
            theta[idx[:, None], ns[None, :]] += dx[:, :m]
            v[idx[:, None], ns[None, :]] += dx[:, m:]

        p_calc, q_calc, p_f, q_f, p_r, q_r = _nodal_power(nf, v, theta)
    return _BatchResult(
        v=v, theta=theta, p_f=p_f, q_f=q_f, p_r=p_r, q_r=q_r,
        p_slack=p_calc[:, nf.slack], q_slack=q_calc[:, nf.slack],
        converged=converged, mismatch=mismatch, iterations=iterations, singular=singular,
    )


def solve_power_flow(nf: NormalizedFeeder, dg: np.ndarray, dg_q: np.ndarray | None = None,
                     tol: float = PF_TOL, max_iter: int = PF_MAX_ITER) -> PowerFlowState:
    """Newton-Raphson solution of the nodal balances from a flat start.

    ``dg``/``dg_q`` are per-load active/reactive injections in pu (reactive
    defaults to zero, i.e. unity power factor).
    """
    dg = np.atleast_1d(np.asarray(dg, dtype=float))
    if dg.shape != (nf.n_loads,):
        raise ValueError(f"dg must have shape ({nf.n_loads},)")
    if not np.isfinite(dg).all():
        raise ValueError("dg must be finite")
    if dg_q is None:
        dg_q = np.zeros_like(dg)
    else:
        dg_q = np.atleast_1d(np.asarray(dg_q, dtype=float))
    res = _solve_batch(nf, dg[None, :], dg_q[None, :], tol=tol, max_iter=max_iter)
    if res.singular[0]:
        raise SingularJacobian("power-flow Jacobian became singular")
    if not res.converged[0]:
        raise NonConvergence(
            f"power flow did not converge in {max_iter} iterations "
            f"(last mismatch {res.mismatch[0]:.3e} pu)",
            mismatch=float(res.mismatch[0]),
        )
    return PowerFlowState(
        v=res.v[0], theta=res.theta[0],
        p_flow=res.p_f[0], q_flow=res.q_f[0],
        p_flow_rev=res.p_r[0], q_flow_rev=res.q_r[0],
        p_slack=float(res.p_slack[0]), q_slack=float(res.q_slack[0]),
        iterations=int(res.iterations[0]), max_mismatch=float(res.mismatch[0]),
    )


# ---------------------------------------------------------------------------
# Constraint residuals
# ---------------------------------------------------------------------------

def _residual_blocks(nf: NormalizedFeeder, v, theta, p_f, q_f, p_r, q_r, p_slack, q_slack):
    """Batched residual components (each leading dim = batch)."""
    fb, tb = nf.from_bus, nf.to_bus
    s2 = nf.s_rated[None, :] ** 2
    v_upper = nf.v_max[None, :] - v
    v_lower = v - nf.v_min[None, :]
    th_f = s2 - (p_f**2 + q_f**2)
    th_r = s2 - (p_r**2 + q_r**2)
    sp = np.stack([nf.slack_p_max - p_slack, p_slack + nf.slack_p_max], axis=1)
    sq = np.stack([nf.slack_q_max - q_slack, q_slack + nf.slack_q_max], axis=1)
    dth = theta[:, fb] - theta[:, tb]
    ang_u = nf.dtheta_max[fb][None, :] - dth
    ang_l = dth - nf.dtheta_min[fb][None, :]
    return v_upper, v_lower, th_f, th_r, sp, sq, ang_u, ang_l


def constraint_residuals(state: PowerFlowState, nf: NormalizedFeeder) -> ConstraintResiduals:
    """Margins of Ohm/Kirchhoff-feasible state against every operational limit."""
    blocks = _residual_blocks(
        nf, state.v[None, :], state.theta[None, :],
        state.p_flow[None, :], state.q_flow[None, :],
        state.p_flow_rev[None, :], state.q_flow_rev[None, :],
        np.array([state.p_slack]), np.array([state.q_slack]),
    )
    v_upper, v_lower, th_f, th_r, sp, sq, ang_u, ang_l = (blk[0] for blk in blocks)
    return ConstraintResiduals(
        v_upper=v_upper,
        v_lower=v_lower,
        thermal=np.stack([th_f, th_r]),
        slack_p=sp,
        slack_q=sq,
        angle=np.stack([ang_u, ang_l]),
    )


def residual_min_batch(nf: NormalizedFeeder, res: _BatchResult) -> np.ndarray:
    """Per-point minimum residual for a batched solve (used by the grid oracle)."""
    blocks = _residual_blocks(nf, res.v, res.theta, res.p_f, res.q_f, res.p_r, res.q_r,
                              res.p_slack, res.q_slack)
    return np.min([blk.min(axis=1) for blk in blocks], axis=0)


# ---------------------------------------------------------------------------
# Adjoint gradient
# ---------------------------------------------------------------------------

def adjoint_gradient(nf: NormalizedFeeder, dg: np.ndarray, weights: np.ndarray,
                     dg_q: np.ndarray | None = None, tol: float = PF_TOL,
                     state: PowerFlowState | None = None) -> np.ndarray:
    """Gradient of weights . residuals w.r.t. the DG active injections.

    One transposed-Jacobian solve at the converged state; ``weights`` follows
    the :meth:`ConstraintResiduals.as_vector` ordering.  A pre-solved ``state``
    at the same ``dg`` may be passed to skip the embedded power flow.
    """
    dg = np.asarray(dg, dtype=float)
    if state is None:
        state = solve_power_flow(nf, dg, dg_q, tol=tol)
    n, L, m = nf.n_bus, nf.n_line, nf.n_bus - 1
    weights = np.asarray(weights, dtype=float)
    expected = 2 * n + 4 * L + 4
    if weights.shape != (expected,):
        raise ValueError(f"weights must have shape ({expected},)")
    w_vu, weights = weights[:n], weights[n:]
    w_vl, weights = weights[:n], weights[n:]
    w_thf, weights = weights[:L], weights[L:]
    w_thr, weights = weights[:L], weights[L:]
    w_sp, weights = weights[:2], weights[2:]
    w_sq, weights = weights[:2], weights[2:]
    w_au, w_al = weights[:L], weights[L:]

    ns = np.array([i for i in range(n) if i != nf.slack], dtype=int)
    pos = np.full(n, -1, dtype=int)
    pos[ns] = np.arange(m)
    v, theta = state.v, state.theta
    rhs = np.zeros(2 * m)

    def add(col, val):
        if col >= 0:
            rhs[col] += val

    for i in range(n):
        p = pos[i]
        if p >= 0:
            rhs[m + p] += -w_vu[i] + w_vl[i]

    fb, tb = nf.from_bus, nf.to_bus
    for l in range(L):
        a, c = int(fb[l]), int(tb[l])
        g, b = nf.g[l], nf.b[l]
        for eq, other, wt, pflow, qflow in (
            (a, c, w_thf[l], state.p_flow[l], state.q_flow[l]),
            (c, a, w_thr[l], state.p_flow_rev[l], state.q_flow_rev[l]),
        ):
            if wt == 0.0:
                continue
            t = theta[eq] - theta[other]
            dp_dte, dp_dto, dp_dve, dp_dvo, dq_dte, dq_dto, dq_dve, dq_dvo = _flow_partials(
                v[eq], v[other], t, g, b
            )
            # thermal residual = s^2 - (P^2 + Q^2)
            cf = -2.0 * pflow * wt
            cq = -2.0 * qflow * wt
            pe, po = pos[eq], pos[other]
            add(pe, cf * dp_dte + cq * dq_dte)
            add(m + pe if pe >= 0 else -1, cf * dp_dve + cq * dq_dve)
            add(po, cf * dp_dto + cq * dq_dto)
            add(m + po if po >= 0 else -1, cf * dp_dvo + cq * dq_dvo)
        # angle margins: upper = dtheta_max - (theta_a - theta_c)
        w_ang = -w_au[l] + w_al[l]
        if w_ang != 0.0:
            add(pos[a], w_ang)
            add(pos[c], -w_ang)

    # slack exchange: p_slack = sum of flows measured at the slack end
    w_ps = -w_sp[0] + w_sp[1]
    w_qs = -w_sq[0] + w_sq[1]
    if w_ps != 0.0 or w_qs != 0.0:
        for l in range(L):
            a, c = int(fb[l]), int(tb[l])
            if a == nf.slack:
                eq, other = a, c
            elif c == nf.slack:
                eq, other = c, a
            else:
                continue
            t = theta[eq] - theta[other]
            dp_dte, dp_dto, dp_dve, dp_dvo, dq_dte, dq_dto, dq_dve, dq_dvo = _flow_partials(
                v[eq], v[other], t, nf.g[l], nf.b[l]
            )
            po = pos[other]
            add(po, w_ps * dp_dto + w_qs * dq_dto)
            add(m + po if po >= 0 else -1, w_ps * dp_dvo + w_qs * dq_dvo)

    J = _assemble_jacobian(nf, v[None, :], theta[None, :], pos, m)[0]
    try:
        lam = np.linalg.solve(J.T, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian("adjoint system is singular") from exc
    return lam[pos[nf.load_bus]]
