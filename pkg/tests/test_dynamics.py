import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swnudge.dynamics import (
    CFL_LIMIT,
    FlowState,
    LinearState,
    Model,
    ModelParams,
    coriolis,
    courant_number,
    linear_energy,
    rhs_linearized,
    rhs_nonlinear,
    rhs_simplified,
    step_rk4,
    total_mass,
    wind_stress_profile,
)
from swnudge.errors import CFLError, InvalidArgumentError, StateInvalidError
from swnudge.grid import Grid, ScalarField, VectorField

BASIN = Grid.square(81, 25000.0)
CALM = ModelParams(tau_max=0.0)


def smooth_fields(grid, seed, amp_h=5.0, amp_v=0.05):
    """Random combinations of a few low sine/cosine modes."""
    rng = np.random.default_rng(seed)
    X, Y = grid.mesh()
    kx, ky = math.pi / grid.Lx, math.pi / grid.Ly
    h = np.full(grid.shape, 500.0)
    vx = np.zeros(grid.shape)
    vy = np.zeros(grid.shape)
    for p in range(1, 4):
        for q in range(1, 4):
            a, b, c = rng.standard_normal(3)
            h += amp_h * a * np.cos(p * kx * X) * np.cos(q * ky * Y)
            vx += amp_v * b * np.sin(p * kx * X) * np.cos(q * ky * Y)
            vy += amp_v * c * np.cos(p * kx * X) * np.sin(q * ky * Y)
    return h, vx, vy


def naive_nonlinear(h, u, v, grid, p, j, i):
    """Point evaluation of the flux-form momentum and continuity tendencies.

    Centred differences, advection expanded as div(q) u + q.grad(u), 5-point
    viscous Laplacian on the transport.
    """
    dx, dy = grid.dx, grid.dy
    qx, qy = h * u, h * v

    def ddx(a):
        return (a[j, i + 1] - a[j, i - 1]) / (2 * dx)

    def ddy(a):
        return (a[j + 1, i] - a[j - 1, i]) / (2 * dy)

    def lap(a):
        return (a[j, i + 1] - 2 * a[j, i] + a[j, i - 1]) / dx**2 + (a[j + 1, i] - 2 * a[j, i] + a[j - 1, i]) / dy**2

    y = j * dy
    f = p.f0 + p.beta * (y - p.D / 2)
    tau = -p.tau_max * math.cos(2 * math.pi * y / grid.Ly)
    divq = ddx(qx) + ddy(qy)
    nu = p.alpha_A * p.A
    mx = -(divq * u[j, i] + qx[j, i] * ddx(u) + qy[j, i] * ddy(u))
    mx += -p.g_reduced * h[j, i] * ddx(h) + f * qy[j, i] + nu * lap(qx) - p.R * qx[j, i] + p.alpha_tau * tau / p.rho
    my = -(divq * v[j, i] + qx[j, i] * ddx(v) + qy[j, i] * ddy(v))
    my += -p.g_reduced * h[j, i] * ddy(h) - f * qx[j, i] + nu * lap(qy) - p.R * qy[j, i]
    return -divq, mx, my


def naive_simplified(h, u, v, grid, g, j, i):
    dx, dy = grid.dx, grid.dy

    def ddx(a):
        return (a[j, i + 1] - a[j, i - 1]) / (2 * dx)

    def ddy(a):
        return (a[j + 1, i] - a[j - 1, i]) / (2 * dy)

    th = -(ddx(h * u) + ddy(h * v))
    tu = -(u[j, i] * ddx(u) + v[j, i] * ddy(u)) - g * ddx(h)
    tv = -(u[j, i] * ddx(v) + v[j, i] * ddy(v)) - g * ddy(h)
    return th, tu, tv


class TestForcing:
    def test_no_wind(self):
        assert np.all(wind_stress_profile(np.linspace(0, 2e6, 9), CALM, 2e6) == 0)

    def test_mid_basin(self):
        p = ModelParams()
        assert wind_stress_profile(1e6, p, 2e6) == pytest.approx(p.tau_max, rel=1e-15)

    def test_zero_mean(self):
        y = np.linspace(0.0, 2e6, 2001)
        tau = wind_stress_profile(y, ModelParams(), 2e6)
        assert abs(np.trapezoid(tau, y)) / (0.05 * 2e6) < 1e-12

    def test_coriolis_center(self):
        p = ModelParams().resolved(BASIN)
        assert coriolis(0.5 * p.D, p) == p.f0

    def test_coriolis_south_wall(self):
        p = ModelParams(D=2e6)
        assert coriolis(0.0, p) == pytest.approx(5e-5, rel=1e-12)

    def test_f_plane(self):
        p = ModelParams(beta=0.0, D=2e6)
        assert np.all(coriolis(np.linspace(0, 2e6, 5), p) == p.f0)

    def test_missing_d(self):
        with pytest.raises(InvalidArgumentError):
            coriolis(0.0, ModelParams())


class TestCourant:
    def test_reference(self):
        assert courant_number(BASIN, ModelParams(), 1800.0) == pytest.approx(0.322, abs=5e-4)

    def test_linear_in_dt(self):
        c1 = courant_number(BASIN, ModelParams(), 900.0)
        assert courant_number(BASIN, ModelParams(), 1800.0) == pytest.approx(2 * c1, rel=1e-15)
        assert courant_number(BASIN, ModelParams(), 1e-12) < 1e-15

    def test_refused_above_limit(self):
        m = Model("linear", BASIN)
        dt = 1.01 * CFL_LIMIT * 1800.0 / m.courant(1800.0)
        with pytest.raises(CFLError):
            m.step(m.equilibrium(), dt)
        m.step(m.equilibrium(), dt, force=True)


class TestRhs:
    def test_nonlinear_equilibrium(self):
        g = BASIN
        s = FlowState(ScalarField(g, np.full(g.shape, 500.0)), VectorField.zeros(g))
        t = rhs_nonlinear(s, CALM)
        assert np.all(t.h.values == 0) and np.all(t.v.x == 0) and np.all(t.v.y == 0)

    def test_pressure_term_only(self):
        g = BASIN
        h, _, _ = smooth_fields(g, 0)
        p = ModelParams(tau_max=0.0, R=0.0, A=0.0, f0=0.0, beta=0.0)
        t = rhs_nonlinear(FlowState(ScalarField(g, h), VectorField.zeros(g)), p)
        hx = (h[:, 2:] - h[:, :-2]) / (2 * g.dx)
        np.testing.assert_allclose(t.v.x[1:-1, 1:-1], (-p.g_reduced * h[:, 1:-1] * hx)[1:-1], rtol=1e-12)

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_nonlinear_naive_oracle(self, seed):
        g = BASIN
        h, u, v = smooth_fields(g, seed)
        p = ModelParams().resolved(g)
        t = rhs_nonlinear(FlowState(ScalarField(g, h), VectorField(g, u, v)), p)
        rng = np.random.default_rng(seed)
        for j, i in rng.integers(2, 79, size=(20, 2)):
            th, tx, ty = naive_nonlinear(h, u, v, g, p, j, i)
            assert t.h.values[j, i] == pytest.approx(th, rel=1e-10, abs=1e-20)
            assert t.v.x[j, i] == pytest.approx(tx, rel=1e-10, abs=1e-15)
            assert t.v.y[j, i] == pytest.approx(ty, rel=1e-10, abs=1e-15)

    @pytest.mark.parametrize("seed", [4, 5])
    def test_simplified_naive_oracle(self, seed):
        g = BASIN
        h, u, v = smooth_fields(g, seed)
        t = rhs_simplified(FlowState(ScalarField(g, h), VectorField(g, u, v)), 0.02)
        for j, i in np.random.default_rng(seed).integers(1, 80, size=(20, 2)):
            th, tu, tv = naive_simplified(h, u, v, g, 0.02, j, i)
            assert t.h.values[j, i] == pytest.approx(th, rel=1e-10, abs=1e-20)
            assert t.v.x[j, i] == pytest.approx(tu, rel=1e-10, abs=1e-20)
            assert t.v.y[j, i] == pytest.approx(tv, rel=1e-10, abs=1e-20)

    def test_simplified_at_rest(self):
        g = BASIN
        h, _, _ = smooth_fields(g, 6)
        t = rhs_simplified(FlowState(ScalarField(g, h), VectorField.zeros(g)), 0.02)
        hx = (h[:, 2:] - h[:, :-2]) / (2 * g.dx)
        np.testing.assert_allclose(t.v.x[1:-1, 1:-1], -0.02 * hx[1:-1], rtol=1e-12)

    def test_linear_zero(self):
        g = BASIN
        z = g.zeros()
        t = rhs_linearized(LinearState(z, VectorField.zeros(g)), 500.0, 0.02)
        assert np.all(t.h.values == 0) and np.all(t.v.x == 0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
    def test_linear_is_linear(self, seed, a, b):
        g = Grid.square(17, 25000.0)
        m = Model("linear", g)
        rng = np.random.default_rng(seed)
        s1 = tuple(rng.standard_normal(g.shape) for _ in range(3))
        s2 = tuple(rng.standard_normal(g.shape) for _ in range(3))
        lhs = m.rhs(tuple(a * x + b * y for x, y in zip(s1, s2)))
        r1, r2 = m.rhs(s1), m.rhs(s2)
        for L, x, y in zip(lhs, r1, r2):
            np.testing.assert_allclose(L, a * x + b * y, atol=1e-12)

    def test_negative_height(self):
        g = Grid.square(9, 1000.0)
        h = np.full(g.shape, 500.0)
        h[4, 4] = -1.0
        with pytest.raises(StateInvalidError):
            Model("simplified", g).rhs((h, np.zeros(g.shape), np.zeros(g.shape)))

    def test_walls_closed(self):
        g = BASIN
        m = Model("nonlinear", g, ModelParams())
        h, u, v = smooth_fields(g, 7)
        th, tx, ty = m.rhs(m.from_state(FlowState(ScalarField(g, h), VectorField(g, u, v))))
        assert np.all(tx[:, [0, -1]] == 0) and np.all(ty[[0, -1], :] == 0)


class TestRK4:
    def test_zero_rhs(self):
        y = np.arange(4.0)
        assert np.array_equal(step_rk4(y, lambda s: 0.0 * s, 0.1), y)

    def test_exponential(self):
        y = 1.0
        for _ in range(100):
            y = step_rk4(y, lambda s: -s, 0.01)
        assert abs(y - math.exp(-1)) <= 1e-8

    def test_fourth_order(self):
        errs = []
        for n in (10, 20):
            y = 1.0
            for _ in range(n):
                y = step_rk4(y, lambda s: -s, 1.0 / n)
            errs.append(abs(y - math.exp(-1)))
        assert math.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.15)

    def test_bad_dt(self):
        with pytest.raises(InvalidArgumentError):
            step_rk4(1.0, lambda s: s, 0.0)


class TestInvariants:
    @pytest.mark.parametrize("kind", ["linear", "simplified", "nonlinear"])
    def test_equilibrium_preserved(self, kind):
        g = Grid.square(21, 25000.0)
        m = Model(kind, g, CALM)
        y0 = m.equilibrium()
        y = y0
        for _ in range(10000):
            y = m.step(y, 1800.0)
        for a, b in zip(y, y0):
            assert np.max(np.abs(a - b)) <= 1e-12 * 500

    def test_standing_mode_frequency(self):
        g = BASIN
        m = Model("linear", g)
        X, Y = g.mesh()
        mode = np.cos(math.pi * X / g.Lx) * np.cos(math.pi * Y / g.Ly)
        y = (mode.copy(), np.zeros(g.shape), np.zeros(g.shape))
        dt = 1800.0
        proj = [1.0]
        w = mode / np.sum(mode * mode)
        for _ in range(1200):
            y = m.step(y, dt)
            proj.append(float(np.sum(w * y[0])))
        proj = np.array(proj)
        # downward zero crossings by linear interpolation
        idx = np.where((proj[:-1] > 0) & (proj[1:] <= 0))[0]
        tc = (idx + proj[idx] / (proj[idx] - proj[idx + 1])) * dt
        period = float(np.mean(np.diff(tc)))
        omega = math.sqrt(0.02 * 500.0) * math.pi * math.sqrt(2) / g.Lx
        assert 2 * math.pi / period == pytest.approx(omega, rel=0.01)

    def test_linear_energy_drift(self):
        g = BASIN
        m = Model("linear", g)
        X, Y = g.mesh()
        dh = 2.0 * np.cos(math.pi * X / g.Lx) * np.cos(2 * math.pi * Y / g.Ly) + np.cos(3 * math.pi * X / g.Lx)
        y = m.from_state(FlowState(ScalarField(g, 500.0 + dh), VectorField.zeros(g)))
        e0 = linear_energy(*y, g, 500.0, 0.02)
        for _ in range(5760):
            y = m.step(y, 1800.0)
        assert abs(linear_energy(*y, g, 500.0, 0.02) / e0 - 1) < 1e-3

    def test_mass_conserved(self):
        g = BASIN
        m = Model("simplified", g)
        h, u, v = smooth_fields(g, 8, amp_h=2.0, amp_v=0.01)
        y = m.from_state(FlowState(ScalarField(g, h), VectorField(g, u, v)))
        m0 = total_mass(y[0], g)
        for _ in range(1000):
            y = m.step(y, 1800.0)
        assert abs(total_mass(y[0], g) / m0 - 1) <= 1e-10

    def test_double_gyre_sign(self, spinup_state):
        # an anticyclonic southern gyre piles water up in the south
        h = spinup_state.h.values
        assert h[:40].mean() - h[41:].mean() > 10.0
        assert np.all(h > 0) and np.all(np.isfinite(spinup_state.v.x))
