import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairhc.errors import NonConvergence
from fairhc.netmodel import NormalizedFeeder
from fairhc.powerflow import (
    ConstraintResiduals,
    PowerFlowState,
    adjoint_gradient,
    constraint_residuals,
    residual_labels,
    solve_power_flow,
)

from conftest import mk, make_two_bus


def two_bus_v2(p_net, r=0.05):
    """Closed-form receiving-end voltage for a lossy two-bus link, x = 0.

    ``p_net`` is the net active injection at bus 2 (positive = generation);
    root of V2^4 - (V1^2 + 2 r p) V2^2 + r^2 p^2 = 0 on the high-voltage branch.
    """
    a = 1.0 + 2.0 * r * p_net
    return math.sqrt((a + math.sqrt(a * a - 4.0 * r * r * p_net * p_net)) / 2.0)


class TestSolvePowerFlow:
    def test_no_load_flat(self):
        nf = mk(2, 0, [(0, 1, 0.05, 0.01)], [], p_demand=0.0, q_demand=0.0)
        state = solve_power_flow(nf, np.zeros(0))
        assert state.v == pytest.approx([1.0, 1.0])
        assert state.theta == pytest.approx([0.0, 0.0])
        assert state.p_flow == pytest.approx([0.0], abs=1e-12)
        assert state.max_mismatch < 1e-8

    def test_slack_reference_exact(self, lin3):
        state = solve_power_flow(lin3, np.array([0.3, 0.2]))
        assert state.v[0] == 1.0
        assert state.theta[0] == 0.0

    def test_two_bus_under_load(self):
        nf = mk(2, 0, [(0, 1, 0.05, 0.0)], [1], p_demand=0.1, q_demand=0.0)
        state = solve_power_flow(nf, np.zeros(1))
        assert state.v[1] == pytest.approx(two_bus_v2(-0.1), abs=1e-9)
        assert state.v[1] == pytest.approx(0.99497, abs=1e-5)

    def test_two_bus_with_generation(self, two_bus):
        state = solve_power_flow(two_bus, np.array([1.05]))
        assert state.v[1] == pytest.approx(two_bus_v2(1.05), abs=1e-9)
        assert state.v[1] == pytest.approx(1.05, abs=1e-4)

    def test_mismatch_below_tolerance(self, br4):
        state = solve_power_flow(br4, np.array([0.5, 0.2, 0.1]))
        assert state.max_mismatch < 1e-8

    def test_nonconvergence_beyond_power_transfer_limit(self):
        # max deliverable load on an r=0.05 link is V1^2/(4r) = 5 pu
        nf = mk(2, 0, [(0, 1, 0.05, 0.0)], [1], p_demand=6.0, q_demand=0.0)
        with pytest.raises(NonConvergence):
            solve_power_flow(nf, np.zeros(1))

    def test_bad_shape_rejected(self, two_bus):
        with pytest.raises(ValueError):
            solve_power_flow(two_bus, np.array([1.0, 2.0]))

    def test_reactive_injection_lifts_voltage_through_reactance(self):
        nf = mk(2, 0, [(0, 1, 0.02, 0.05)], [1], p_demand=0.0, q_demand=0.0)
        lifted = solve_power_flow(nf, np.array([0.5]), np.array([0.3]))
        unity = solve_power_flow(nf, np.array([0.5]))
        assert lifted.v[1] > unity.v[1]
        assert lifted.max_mismatch < 1e-8


class TestPhysicalInvariants:
    @pytest.mark.parametrize("dg", [[0.0, 0.0], [0.4, 0.1], [1.0, 1.0]])
    def test_power_balance(self, lin3, dg):
        dg = np.array(dg)
        state = solve_power_flow(lin3, dg)
        losses = float(np.sum(state.p_flow + state.p_flow_rev))
        imbalance = state.p_slack - (lin3.p_demand.sum() - dg.sum() + losses)
        assert abs(imbalance) < 1e-8

    @pytest.mark.parametrize("dg", [[0.0, 0.0, 0.0], [0.5, 0.3, 0.2]])
    def test_losses_nonnegative(self, br4, dg):
        state = solve_power_flow(br4, np.array(dg))
        assert np.all(state.p_flow + state.p_flow_rev >= -1e-12)

    def test_stiff_link_stays_near_unity(self):
        for scale in (1e-2, 1e-3, 1e-4):
            nf = mk(2, 0, [(0, 1, 0.05 * scale, 0.01 * scale)], [1])
            state = solve_power_flow(nf, np.array([0.5]))
            assert abs(state.v[1] - 1.0) < 10.0 * scale

    @given(dg=st.floats(0.0, 1.0))
    @settings(max_examples=25, deadline=None)
    def test_voltage_rises_with_injection(self, dg):
        nf = make_two_bus()
        lo = solve_power_flow(nf, np.array([dg]))
        hi = solve_power_flow(nf, np.array([dg + 0.05]))
        assert hi.v[1] > lo.v[1]


class TestConstraintResiduals:
    def test_flat_no_load_margins(self):
        nf = mk(2, 0, [(0, 1, 0.05, 0.01)], [], p_demand=0.0, q_demand=0.0,
                v_max=1.10)
        res = constraint_residuals(solve_power_flow(nf, np.zeros(0)), nf)
        assert res.v_upper == pytest.approx([0.10, 0.10])
        assert res.v_lower == pytest.approx([0.10, 0.10])
        assert res.min() >= 0

    def test_binding_voltage(self, two_bus):
        res = constraint_residuals(solve_power_flow(two_bus, np.array([1.05])), two_bus)
        assert res.v_upper[1] == pytest.approx(0.0, abs=1e-4)

    def test_thermal_residual_on_unit_circle(self, two_bus):
        state = solve_power_flow(two_bus, np.array([0.5]))
        state.p_flow = np.array([0.6])
        state.q_flow = np.array([0.8])
        nf = mk(2, 0, [(0, 1, 0.05, 0.0)], [1], s_rated=1.0,
                p_demand=0.0, q_demand=0.0)
        res = constraint_residuals(state, nf)
        assert res.thermal[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_vector_matches_labels(self, br4):
        res = constraint_residuals(solve_power_flow(br4, np.zeros(3)), br4)
        assert len(res.as_vector()) == len(residual_labels(br4))

    def test_angle_margins_symmetric_at_flat(self):
        nf = mk(2, 0, [(0, 1, 0.05, 0.01)], [], p_demand=0.0, q_demand=0.0)
        res = constraint_residuals(solve_power_flow(nf, np.zeros(0)), nf)
        assert res.angle[0] == pytest.approx(res.angle[1])


class TestAdjointGradient:
    def test_zero_weights(self, lin3):
        w = np.zeros(len(residual_labels(lin3)))
        g = adjoint_gradient(lin3, np.array([0.2, 0.2]), w)
        assert g == pytest.approx([0.0, 0.0], abs=1e-14)

    def test_two_bus_voltage_sensitivity(self, two_bus):
        # weight 1 on the v_upper residual of bus 1: gradient = -dV2/dP
        w = np.zeros(len(residual_labels(two_bus)))
        w[1] = 1.0
        g = adjoint_gradient(two_bus, np.array([1.05]), w)
        h = 1e-6
        fd = -(two_bus_v2(1.05 + h) - two_bus_v2(1.05 - h)) / (2.0 * h)
        assert g[0] == pytest.approx(fd, rel=1e-7)
        assert g[0] == pytest.approx(-1.0 / 22.0, rel=1e-4)

    def test_linearity_in_weights(self, br4):
        rng = np.random.default_rng(3)
        nw = len(residual_labels(br4))
        dg = np.array([0.3, 0.2, 0.1])
        w1, w2 = rng.normal(size=nw), rng.normal(size=nw)
        g12 = adjoint_gradient(br4, dg, w1 + 2.0 * w2)
        g1 = adjoint_gradient(br4, dg, w1)
        g2 = adjoint_gradient(br4, dg, w2)
        assert g12 == pytest.approx(g1 + 2.0 * g2, rel=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        n_loads = int(rng.integers(1, 4))
        lines = [(i, i + 1, float(rng.uniform(0.01, 0.08)), float(rng.uniform(0.0, 0.02)))
                 for i in range(n_loads)]
        nf = mk(n_loads + 1, 0, lines, list(range(1, n_loads + 1)))
        dg = rng.uniform(0.0, 0.5, size=n_loads)
        w = rng.normal(size=len(residual_labels(nf)))
        tol = 1e-12  # tight Newton stop so the implicit map is smooth at FD scale
        g = adjoint_gradient(nf, dg, w, tol=tol)
        h = 1e-6
        fd = np.zeros(n_loads)
        for d in range(n_loads):
            e = np.zeros(n_loads)
            e[d] = h
            cp = constraint_residuals(solve_power_flow(nf, dg + e, tol=tol), nf).as_vector()
            cm = constraint_residuals(solve_power_flow(nf, dg - e, tol=tol), nf).as_vector()
            fd[d] = w @ (cp - cm) / (2.0 * h)
        assert np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd))) < 1e-5

    def test_wrong_weight_shape(self, two_bus):
        with pytest.raises(ValueError):
            adjoint_gradient(two_bus, np.array([0.1]), np.zeros(3))
