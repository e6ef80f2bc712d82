"""Hosting-capacity solvers.

Three routes:

* ``solve_egalitarian_bisection`` -- scalar bisection on the uniform allocation,
  exploiting the monotone voltage bottleneck of radial feeders.
* ``solve_nlp_al`` -- reduced-space augmented Lagrangian: the decision vector is
  the per-load DG injection (power flow embedded as an implicit map), inner
  bound-projected quasi-Newton (L-BFGS-B) driven by adjoint gradients,
  deterministic 3-point multi-start.
* ``brute_force_oracle`` -- exhaustive feasibility grid for desk-scale feeders,
  used as an independent verification oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import Infeasible, NonConvergence, SingularJacobian, TooManyLoads
from .formulation import FairnessPolicy, HCProblem
from .netmodel import NormalizedFeeder
from .powerflow import (
    _solve_batch,
    adjoint_gradient,
    constraint_residuals,
    residual_labels,
    residual_min_batch,
    solve_power_flow,
)

FEAS_TOL = 1e-6  # pu; residual >= -FEAS_TOL counts as satisfied
_BINDING_TOL = 1e-5
_FAIL_PENALTY = 1e6


@dataclass
class SolverOptions:
    tol: float = FEAS_TOL  # constraint-violation tolerance, pu
    pf_tol: float = 1e-8  # Newton mismatch tolerance, pu
    max_outer: int = 50
    max_inner: int = 120  # L-BFGS-B iterations per outer pass
    starts: int = 3
    seed: int = 0  # reserved; all starts are deterministic
    grid_steps: int = 201  # oracle resolution per dimension
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    penalty_trigger: float = 4.0  # grow penalty unless violation shrank by this factor
    bisect_tol: float = 1e-6  # pu bracket width
    power_factor: float | None = None  # DG power factor; None = unity (no reactive)
    pg_tol: float = 1e-6  # projected-gradient stationarity target
    comp_tol: float = 1e-8  # complementary-slackness target, max_i |lambda_i c_i|


@dataclass
class HCSolution:
    allocation: np.ndarray  # kW per load
    hc_total: float  # kW
    policy: FairnessPolicy
    status: str  # optimal | infeasible | max_iter | failed
    kkt_residual: float
    binding: list[str] = field(default_factory=list)
    iterations: tuple[int, int] = (0, 0)  # (outer, inner)
    disparity: float | None = None  # kW, bargaining only


def _dg_q(dg: np.ndarray, options: SolverOptions) -> np.ndarray | None:
    if options.power_factor is None:
        return None
    pf = options.power_factor
    return dg * np.sqrt(max(0.0, 1.0 - pf * pf)) / pf


def _residual_vector(nf: NormalizedFeeder, dg: np.ndarray, options: SolverOptions):
    """(state, residual vector) at ``dg``; None on power-flow failure."""
    try:
        state = solve_power_flow(nf, dg, _dg_q(dg, options), tol=options.pf_tol)
    except (NonConvergence, SingularJacobian):
        return None, None
    return state, constraint_residuals(state, nf).as_vector()


def _make_solution(nf: NormalizedFeeder, p: np.ndarray, policy: FairnessPolicy,
                   status: str, kkt: float, c_net: np.ndarray | None,
                   iterations: tuple[int, int]) -> HCSolution:
    sb = nf.s_base
    binding = []
    if c_net is not None:
        labels = residual_labels(nf)
        binding = [labels[i] for i in np.flatnonzero(c_net < _BINDING_TOL)]
    disparity = None
    if policy.variant == "bargaining":
        disparity = float(np.max(np.abs(p - p.mean()))) * sb if len(p) else 0.0
    return HCSolution(
        allocation=p * sb,
        hc_total=float(p.sum()) * sb,
        policy=policy,
        status=status,
        kkt_residual=kkt,
        binding=binding,
        iterations=iterations,
        disparity=disparity,
    )


# ---------------------------------------------------------------------------
# Egalitarian bisection
# ---------------------------------------------------------------------------

def solve_egalitarian_bisection(nf: NormalizedFeeder, options: SolverOptions | None = None,
                                t_min: float = 0.0, t_max: float | None = None,
                                policy: FairnessPolicy | None = None) -> HCSolution:
    """Largest uniform per-load injection keeping all residuals >= -tol.

    Assumes the binding constraint is monotone in the uniform injection; a
    coarse prescan detects non-monotone feasibility and falls back to the
    augmented-Lagrangian route on the tied scalar variable.
    """
    options = options or SolverOptions()
    policy = policy or FairnessPolicy.egalitarian()
    t_hi = nf.dg_cap if t_max is None else t_max
    n = nf.n_loads

    def margin(t: float) -> float:
        _, c = _residual_vector(nf, np.full(n, t), options)
        return -np.inf if c is None else float(c.min())

    outer = 0
    if margin(t_min) < -options.tol:
        raise Infeasible("baseline (lowest uniform injection) already violates limits")
    if margin(t_hi) >= -options.tol:
        p = np.full(n, t_hi)
        _, c = _residual_vector(nf, p, options)
        return _make_solution(nf, p, policy, "optimal", max(0.0, -c.min()), c, (1, 0))

    # monotonicity prescan: feasible probe above an infeasible one => downgrade
    probes = np.linspace(t_min, t_hi, 9)
    flags = [margin(t) >= -options.tol for t in probes]
    first_bad = flags.index(False)
    if any(flags[first_bad:]):
        problem = HCProblem(nf, policy, np.full(n, t_min), np.full(n, t_hi), tie=True)
        return _solve_tie_al(problem, options)
    lo, hi = probes[first_bad - 1], probes[first_bad]

    while hi - lo > options.bisect_tol:
        outer += 1
        mid = 0.5 * (lo + hi)
        if margin(mid) >= -options.tol:
            lo = mid
        else:
            hi = mid
    p = np.full(n, lo)
    _, c = _residual_vector(nf, p, options)  # independent re-verification
    if c is None or c.min() < -options.tol:
        raise NonConvergence("bisection endpoint failed re-verification")
    return _make_solution(nf, p, policy, "optimal", max(0.0, -float(c.min())), c, (outer, 0))


# ---------------------------------------------------------------------------
# Augmented Lagrangian
# ---------------------------------------------------------------------------

class _ALModel:
    """Objective/constraint oracle over the reduced decision vector.

    For bargaining the vector is ``[p_1..p_D, disparity]`` with two epigraph
    inequalities per load; otherwise just the injections.
    """

    def __init__(self, problem: HCProblem, options: SolverOptions, tie: bool = False):
        self.problem = problem
        self.nf = problem.feeder
        self.options = options
        self.tie = tie
        self.n = problem.n_loads
        self.barg = problem.policy.variant == "bargaining" and not tie
        if tie:
            self.dim = 1
            self.bounds = [(float(problem.lower.max()), float(problem.upper.min()))]
        else:
            self.dim = self.n + 1 if self.barg else self.n
            self.bounds = [(float(lo), float(hi)) for lo, hi in zip(problem.lower, problem.upper)]
            if self.barg:
                self.bounds.append((0.0, float(self.nf.dg_cap)))
        self.anchor = np.array([b[0] for b in self.bounds])
        self._cache: dict[bytes, tuple] = {}

    def injections(self, z: np.ndarray) -> np.ndarray:
        if self.tie:
            return np.full(self.n, z[0])
        return z[: self.n]

    def _pf(self, z: np.ndarray):
        key = z.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            p = self.injections(z)
            hit = _residual_vector(self.nf, p, self.options)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def objective(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        """Minimized objective (negated hosting-capacity objective)."""
        grad = np.zeros(self.dim)
        if self.tie:
            return -self.n * z[0], grad - self.n
        if self.barg:
            k = self.problem.policy.k
            grad[: self.n] = -k
            grad[self.n] = 1.0 - k
            return -(k * z[: self.n].sum() - (1.0 - k) * z[self.n]), grad
        grad[:] = -1.0
        return -float(z.sum()), grad

    def constraints(self, z: np.ndarray) -> np.ndarray | None:
        _, c_net = self._pf(z)
        if c_net is None:
            return None
        if not self.barg:
            return c_net
        p, dp = z[: self.n], z[self.n]
        dev = p - p.mean()
        return np.concatenate([c_net, dp - dev, dp + dev])

    def weighted_constraint_grad(self, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        """sum_i w_i * grad c_i(z)."""
        state, c_net = self._pf(z)
        nc = len(c_net)
        out = np.zeros(self.dim)
        w_net = w[:nc]
        if np.any(w_net != 0.0):
            g = adjoint_gradient(self.nf, self.injections(z), w_net,
                                 dg_q=_dg_q(self.injections(z), self.options),
                                 tol=self.options.pf_tol, state=state)
            if self.tie:
                out[0] += g.sum()
            else:
                out[: self.n] += g
        if self.barg:
            w1 = w[nc: nc + self.n]
            w2 = w[nc + self.n:]
            out[: self.n] += -w1 + w1.sum() / self.n
            out[: self.n] += w2 - w2.sum() / self.n
            out[self.n] += w1.sum() + w2.sum()
        return out

    def al_value_grad(self, z: np.ndarray, lam: np.ndarray, rho: float):
        c = self.constraints(z)
        if c is None:
            d = z - self.anchor
            return _FAIL_PENALTY * (1.0 + d @ d), 2.0 * _FAIL_PENALTY * d
        w = np.maximum(0.0, lam - rho * c)
        fval, fgrad = self.objective(z)
        val = fval + float(w @ w - lam @ lam) / (2.0 * rho)
        grad = fgrad - self.weighted_constraint_grad(z, w)
        return val, grad

    def n_constraints(self, z0: np.ndarray) -> int:
        c = self.constraints(z0)
        if c is None:
            raise Infeasible("power flow does not converge at the lower bound")
        return len(c)


def _run_auglag(model: _ALModel, z0: np.ndarray, options: SolverOptions):
    """One AL descent from z0. Returns (best_z, best_obj, kkt, outer, inner, converged)."""
    z = z0.copy()
    nc = model.n_constraints(np.array([b[0] for b in model.bounds]))
    lam = np.zeros(nc)
    rho = options.penalty0
    lo = np.array([b[0] for b in model.bounds])
    hi = np.array([b[1] for b in model.bounds])
    prev_measure = np.inf
    best = None  # (obj_min, z, kkt)
    inner_total = 0
    converged = False
    for outer in range(1, options.max_outer + 1):
        res = minimize(
            model.al_value_grad, z, args=(lam, rho), jac=True, method="L-BFGS-B",
            bounds=model.bounds,
            options={"maxiter": options.max_inner, "ftol": 1e-14, "gtol": 1e-10},
        )
        z = res.x
        inner_total += int(res.nit)
        c = model.constraints(z)
        if c is None:
            rho = min(rho * options.penalty_growth, 1e10)
            z = z0.copy()
            continue
        viol = max(0.0, -float(c.min()))
        lam = np.maximum(0.0, lam - rho * c)
        # stationarity holds by construction after the inner solve; progress is
        # measured by feasibility plus complementary slackness
        comp = float(np.max(np.abs(lam * c))) if nc else 0.0
        measure = max(viol, comp)
        if viol <= options.tol:
            fval, fgrad = model.objective(z)
            grad_l = fgrad - model.weighted_constraint_grad(z, lam)
            pg = float(np.max(np.abs(np.clip(z - grad_l, lo, hi) - z)))
            kkt = max(viol, pg)
            if best is None or fval < best[0]:
                best = (fval, z.copy(), kkt)
            if comp <= options.comp_tol and pg <= options.pg_tol:
                converged = True
                break
        if measure > prev_measure / options.penalty_trigger:
            rho = min(rho * options.penalty_growth, 1e10)
        if np.isfinite(measure):
            prev_measure = min(prev_measure, measure)
    return best, outer, inner_total, converged


def _starts_for(problem: HCProblem, options: SolverOptions, model: _ALModel) -> list[np.ndarray]:
    lo = np.array([b[0] for b in model.bounds])
    hi = np.array([b[1] for b in model.bounds])
    hi_f = np.where(np.isfinite(hi), hi, lo + 1.0)
    n = problem.n_loads

    def pack(p: np.ndarray) -> np.ndarray:
        p = np.clip(p, problem.lower, problem.upper)
        if model.barg:
            return np.append(p, np.max(np.abs(p - p.mean())) if n else 0.0)
        return p

    starts = [lo.copy()]
    egal = problem.reference_egal
    if egal is None:
        try:
            sol = solve_egalitarian_bisection(problem.feeder, options)
            egal = float(sol.allocation[0] / problem.feeder.s_base)
        except (Infeasible, NonConvergence):
            egal = None
    if egal is not None:
        starts.append(pack(np.full(n, egal)))
    starts.append(0.5 * (lo + hi_f))
    # dedupe
    unique, seen = [], set()
    for s in starts[: max(1, options.starts)]:
        key = np.round(s, 12).tobytes()
        if key not in seen:
            seen.add(key)
            unique.append(s)
    return unique


def solve_nlp_al(problem: HCProblem, options: SolverOptions | None = None) -> HCSolution:
    """Augmented-Lagrangian solve with deterministic multi-start.

    Raises :class:`Infeasible` when the lower-bound point already violates the
    operational limits (tolerance ``options.tol``).
    """
    options = options or SolverOptions()
    nf = problem.feeder
    model = _ALModel(problem, options)

    _, c_low = _residual_vector(nf, problem.lower, options)
    if c_low is None or c_low.min() < -options.tol:
        raise Infeasible("lower-bound allocation already violates operational limits")

    # lower bound is always a feasible fallback candidate
    z_low = np.array([b[0] for b in model.bounds])
    fallback = (model.objective(z_low)[0], z_low, max(0.0, -float(c_low.min())))

    best = fallback
    outer_total = inner_total = 0
    any_converged = False
    for z0 in _starts_for(problem, options, model):
        cand, outer, inner, conv = _run_auglag(model, z0, options)
        outer_total += outer
        inner_total += inner
        any_converged |= conv
        if cand is not None and cand[0] < best[0]:
            best = cand

    _, z, kkt = best
    p = model.injections(z)
    state, c_net = _residual_vector(nf, p, options)  # independent re-verification
    if c_net is None or c_net.min() < -options.tol:
        p = problem.lower
        _, c_net = _residual_vector(nf, p, options)
        kkt = np.inf
        any_converged = False
    status = "optimal" if any_converged else "max_iter"
    return _make_solution(nf, p, problem.policy, status, kkt, c_net, (outer_total, inner_total))


def _solve_tie_al(problem: HCProblem, options: SolverOptions) -> HCSolution:
    """AL fallback on the tied scalar variable (non-monotone egalitarian case)."""
    model = _ALModel(problem, options, tie=True)
    lo = np.array([model.bounds[0][0]])
    c0 = model.constraints(lo)
    if c0 is None or c0.min() < -options.tol:
        raise Infeasible("baseline (lowest uniform injection) already violates limits")
    best = (model.objective(lo)[0], lo, max(0.0, -float(c0.min())))
    cand, outer, inner, conv = _run_auglag(model, lo.copy(), options)
    if cand is not None and cand[0] < best[0]:
        best = cand
    _, z, kkt = best
    p = model.injections(z)
    _, c_net = _residual_vector(problem.feeder, p, options)
    status = "optimal" if conv else "max_iter"
    return _make_solution(problem.feeder, p, problem.policy, status, kkt, c_net, (outer, inner))


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def solve_hc(problem: HCProblem, options: SolverOptions | None = None) -> HCSolution:
    """Solve one hosting-capacity problem, dispatching per policy."""
    options = options or SolverOptions()
    nf = problem.feeder
    policy = problem.policy
    if problem.tie:
        return solve_egalitarian_bisection(
            nf, options, t_min=float(problem.lower.max()),
            t_max=float(problem.upper.min()), policy=policy,
        )
    if policy.variant == "bargaining" and policy.k == 0.0:
        # K=0 is degenerate (any uniform point zeroes the disparity); report the
        # egalitarian solution as its canonical representative.
        sol = solve_egalitarian_bisection(nf, options, policy=policy)
        sol.disparity = 0.0
        return sol
    if np.all(problem.upper - problem.lower <= 1e-12):
        p = problem.lower.copy()
        _, c = _residual_vector(nf, p, options)
        if c is None or c.min() < -options.tol:
            raise Infeasible("degenerate box is infeasible")
        return _make_solution(nf, p, policy, "optimal", max(0.0, -float(c.min())), c, (1, 0))
    return solve_nlp_al(problem, options)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

def _grid_points(problem: HCProblem, steps: int) -> np.ndarray:
    n = problem.n_loads
    if problem.tie:
        return np.linspace(problem.lower.max(), problem.upper.min(), steps)[:, None].repeat(n, axis=1)
    axes = [np.linspace(problem.lower[d], problem.upper[d], steps) for d in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([mm.ravel() for mm in mesh], axis=1)


def _grid_objective(problem: HCProblem):
    if problem.policy.variant == "bargaining":
        k = problem.policy.k

        def objective(block):
            dev = np.max(np.abs(block - block.mean(axis=1, keepdims=True)), axis=1)
            return k * block.sum(axis=1) - (1.0 - k) * dev
    else:
        def objective(block):
            return block.sum(axis=1)
    return objective


def brute_force_oracle(problem: HCProblem, grid_steps: int | None = None,
                       options: SolverOptions | None = None,
                       chunk: int = 1 << 18) -> HCSolution:
    """Exhaustive grid search over the policy box; feasibility via full power flow.

    Independent of the AL route: batched Newton solves plus direct residual
    evaluation, no adjoints and no penalties.
    """
    return brute_force_oracle_batch([problem], grid_steps, options, chunk)[0]


def brute_force_oracle_batch(problems: list[HCProblem], grid_steps: int | None = None,
                             options: SolverOptions | None = None,
                             chunk: int = 1 << 18) -> list[HCSolution]:
    """Grid-search several policies on one feeder.

    Policies whose search boxes coincide (e.g. utilitarian and bargaining)
    share the power-flow feasibility sweep, which dominates the runtime.
    """
    options = options or SolverOptions()
    steps = grid_steps or options.grid_steps
    if not problems:
        return []
    nf = problems[0].feeder
    for prob in problems:
        if prob.feeder is not nf:
            raise ValueError("all problems must share one feeder")
        if prob.n_loads > 3:
            raise TooManyLoads(f"oracle limited to 3 loads, got {prob.n_loads}")

    groups: dict[tuple, list[int]] = {}
    for j, prob in enumerate(problems):
        key = (prob.tie, prob.lower.tobytes(), prob.upper.tobytes())
        groups.setdefault(key, []).append(j)

    out: list[HCSolution | None] = [None] * len(problems)
    for members in groups.values():
        pts = _grid_points(problems[members[0]], steps)
        objectives = [_grid_objective(problems[j]) for j in members]
        best_val = [-np.inf] * len(members)
        best_p: list[np.ndarray | None] = [None] * len(members)
        for start in range(0, len(pts), chunk):
            block = pts[start: start + chunk]
            q_block = np.zeros_like(block)
            if options.power_factor is not None:
                pf = options.power_factor
                q_block = block * np.sqrt(max(0.0, 1.0 - pf * pf)) / pf
            res = _solve_batch(nf, block, q_block, tol=options.pf_tol)
            feas = res.converged & (residual_min_batch(nf, res) >= -options.tol)
            if not feas.any():
                continue
            for mi, objective in enumerate(objectives):
                vals = np.where(feas, objective(block), -np.inf)
                i = int(np.argmax(vals))
                if vals[i] > best_val[mi]:
                    best_val[mi] = float(vals[i])
                    best_p[mi] = block[i].copy()
        for mi, j in enumerate(members):
            if best_p[mi] is None:
                raise Infeasible("no feasible grid point")
            _, c_net = _residual_vector(nf, best_p[mi], options)
            out[j] = _make_solution(nf, best_p[mi], problems[j].policy, "optimal",
                                    max(0.0, -float(c_net.min())), c_net, (0, len(pts)))
    return out  # type: ignore[return-value]
