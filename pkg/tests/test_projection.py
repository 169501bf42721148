import numpy as np
import pytest
from hypothesis import given, settings
from scipy.optimize import minimize

from conftest import checked, moving_jet, vec
from jetmbs.body import ForceModel, RigidBody, pack_jet
from jetmbs.projection import (
    EVAL_KEYS,
    ProjectionConfig,
    ProjectionError,
    project_full,
    project_hc,
    project_hc_orthogonal,
    project_invariants,
    project_orthogonal,
    project_theta,
    project_theta_orthogonal,
    residual_families,
    state_tangent_projector,
    velocity_projection,
)
from jetmbs.system import EnergyInvariant, Mechanism

TIGHT = ProjectionConfig(tol_abs=1e-12)


def audit(system, jet, f_inv=None):
    """Residual families recomputed from scratch."""
    y, y1 = jet.y, jet.y1
    cons = system.constraints
    out = {
        "theta": max(max(abs(y[s] @ y[s] - 1), abs(y[s] @ y1[s])) for s in system.theta_slices),
        "hc": max(np.abs(cons.residual(y)).max(), np.abs(cons.jacobian(y) @ y1).max()),
    }
    if f_inv is not None:
        e = system.energies(jet)
        out["inv"] = abs(e.W_total - f_inv.target) / (1 + abs(f_inv.target))
    return out


def noisy(jet, seed, size=1e-4):
    rng = np.random.default_rng(seed)
    return jet.with_values(y=jet.y + rng.uniform(-size, size, jet.y.size),
                          y1=jet.y1 + rng.uniform(-size, size, jet.y.size))


def test_theta_examples():
    st = project_theta([2, 0, 0, 0], [0, 1, 0, 0])
    np.testing.assert_array_equal(st.theta, [1, 0, 0, 0])
    np.testing.assert_array_equal(st.theta1, [0, 1, 0, 0])
    st = project_theta([1, 0, 0, 0], [3, 1, 0, 0])
    np.testing.assert_array_equal(st.theta1, [0, 1, 0, 0])
    with pytest.raises(ValueError):
        project_theta(np.zeros(4), np.ones(4))


@given(vec(4), vec(4))
def test_theta_idempotent(a, a1):
    if np.linalg.norm(a) < 1e-3:
        a = a + 1.0
    st = project_theta(a, a1)
    again = project_theta(st.theta, st.theta1)
    np.testing.assert_array_equal(again.theta, st.theta)
    np.testing.assert_array_equal(again.theta1, st.theta1)
    assert abs(st.theta @ st.theta - 1) < 1e-12 and abs(st.theta @ st.theta1) < 1e-12


@settings(max_examples=25)
@given(vec(4), vec(4))
def test_theta_orthogonal_matches_optimizer(a, a1):
    a = a + np.array([1.5, 0, 0, 0])
    a1 = 0.3 * a1
    st, _ = project_theta_orthogonal(a, a1)
    cons = [{"type": "eq", "fun": lambda x: x[:4] @ x[:4] - 1}, {"type": "eq", "fun": lambda x: x[:4] @ x[4:]}]
    guess = project_theta(a, a1)
    opt = minimize(lambda x: np.sum((x - np.r_[a, a1]) ** 2), np.r_[guess.theta, guess.theta1],
                   constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    np.testing.assert_allclose(np.r_[st.theta, st.theta1], opt.x, atol=1e-6)


def test_consistent_jet_untouched():
    spec, report = checked("pendulum")
    system = spec.mechanism()
    jet, _, rep = project_hc(report.jet, system.constraints, ProjectionConfig())
    assert rep.newton_iterations == 0
    np.testing.assert_allclose(jet.y, report.jet.y, atol=1e-12)
    out, rep = project_full(report.jet, system, ProjectionConfig())
    assert rep.outer_sweeps == 1 and rep.converged
    np.testing.assert_allclose(np.r_[out.y, out.y1], np.r_[report.jet.y, report.jet.y1], atol=1e-12)
    out, rep = project_orthogonal(report.jet, system, ProjectionConfig())
    np.testing.assert_allclose(np.r_[out.y, out.y1], np.r_[report.jet.y, report.jet.y1], atol=1e-12)


def test_pendulum_radial_perturbation():
    spec, _ = checked("pendulum")
    system = spec.mechanism()
    jet = pack_jet(0.0, [[0.766, 0, 0]], [[1, 0, 0, 0]])
    out, _, _ = project_hc(jet, system.constraints, ProjectionConfig())
    # the residual points along r, which the rotation cannot absorb at first order
    np.testing.assert_allclose(out.y, [0.765, 0, 0, 1, 0, 0, 0], atol=1e-12)


def test_pendulum_off_axis_perturbation():
    spec, _ = checked("pendulum")
    system = spec.mechanism()
    r = np.array([0.7, 0.2, -0.3])
    out, _, _ = project_hc(pack_jet(0.0, [r], [[1, 0, 0, 0]]), system.constraints, ProjectionConfig())
    assert np.abs(system.constraints.residual(out.y)).max() <= 1e-5


@given(vec(12))
def test_velocity_system(a1):
    rng = np.random.default_rng(int(abs(a1[0]) * 1e6))
    dg = rng.normal(size=(4, 12))
    y1, alpha = velocity_projection(dg, a1)
    assert np.abs(y1 + dg.T @ alpha - a1).max() <= 1e-10
    assert np.abs(dg @ y1).max() <= 1e-10


def test_free_particle_energy_rescale():
    body = RigidBody(2.0, [1.0, 1.0, 1.0])
    system = Mechanism.build([body], [], ForceModel())
    jet = pack_jet(0.0, [np.zeros(3)], [[1, 0, 0, 0]], [np.array([3.0, 4.0, 0.0])])
    inv = EnergyInvariant(system, 16.0)
    out, _ = project_invariants(jet, inv, TIGHT, system=system)
    np.testing.assert_allclose(out.y1[:3], [2.4, 3.2, 0.0], atol=1e-9)
    np.testing.assert_allclose(out.y, jet.y, atol=1e-12)


def test_exact_energy_is_identity():
    system, jet = moving_jet("pendulum", seed=1)
    inv = EnergyInvariant(system, system.energies(jet).W_total)
    out, rep = project_invariants(jet, inv, ProjectionConfig(), system=system)
    assert out is jet and rep.newton_iterations == 0


@pytest.mark.parametrize("seed", range(3))
def test_pendulum_energy_offset(seed):
    system, jet = moving_jet("pendulum", seed=seed, speed=2.0)
    W0 = system.energies(jet).W_total
    inv = EnergyInvariant(system, W0 - 1e-4)
    out, _ = project_invariants(jet, inv, ProjectionConfig(), system=system)
    assert abs(system.energies(out).W_total - inv.target) <= 1e-5
    p, q = np.r_[jet.y, jet.y1], np.r_[out.y, out.y1]
    move = np.abs(q - p).max() / (1 + np.abs(p)).min()
    assert 1e-7 < move < 1e-3


def test_invariant_step_along_gradient():
    system, jet = moving_jet("pendulum", seed=2)
    inv = EnergyInvariant(system, system.energies(jet).W_total + 0.05)
    out, _ = project_invariants(jet, inv, TIGHT)
    d = np.r_[out.y - jet.y, out.y1 - jet.y1]
    g = inv.jacobian(out.y, out.y1)[0]
    # p' - a = -mu df(p'), so the displacement is parallel to the gradient at p'
    assert np.linalg.norm(d - (d @ g) / (g @ g) * g) <= 1e-10 * np.linalg.norm(d)


def test_tangent_invariant_step_keeps_manifolds():
    system, jet = moving_jet("quadrangle", seed=4)
    inv = EnergyInvariant(system, system.energies(jet).W_total + 1e-3)
    out, _ = project_invariants(jet, inv, TIGHT, system=system)
    d = np.r_[out.y - jet.y, out.y1 - jet.y1]
    P = state_tangent_projector(system, jet.y, jet.y1)
    # first-order motion stays tangent; the normal part is second order
    assert np.linalg.norm(d - P @ d) <= 1e-2 * np.linalg.norm(d)
    res = audit(system, out)
    assert res["hc"] <= 10 * np.linalg.norm(d) ** 2 and res["theta"] <= 10 * np.linalg.norm(d) ** 2


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("with_inv", [True, False])
def test_cascade_converges_on_noisy_pendulum(seed, with_inv):
    system, jet = moving_jet("pendulum", seed=seed, speed=1.5)
    inv = EnergyInvariant(system, system.energies(jet).W_total) if with_inv else None
    out, rep = project_full(noisy(jet, seed), system, ProjectionConfig(), f_inv=inv)
    assert rep.converged and rep.outer_sweeps <= 5
    assert max(audit(system, out, inv).values()) <= 1e-5
    assert set(rep.final_residual) == ({"theta", "hc", "inv"} if with_inv else {"theta", "hc"})


@pytest.mark.parametrize("name", ["pendulum", "quadrangle", "crank"])
def test_orthogonal_cascade_on_noisy_input(name):
    system, jet = moving_jet(name, seed=7)
    inv = EnergyInvariant(system, system.energies(jet).W_total)
    out, rep = project_orthogonal(noisy(jet, 7), system, ProjectionConfig(), f_inv=inv)
    assert rep.converged and max(audit(system, out, inv).values()) <= 1e-5


@pytest.mark.parametrize("mode", ["quasi", "orthogonal"])
def test_full_projection_idempotent(mode):
    system, jet = moving_jet("crank", seed=5)
    cfg = ProjectionConfig(tol_abs=1e-10, mode=mode)
    once, _ = project_full(noisy(jet, 5), system, cfg)
    twice, _ = project_full(once, system, cfg)
    np.testing.assert_allclose(np.r_[twice.y, twice.y1], np.r_[once.y, once.y1], atol=1e-10)


def quasi_orthogonal_gaps(system, jet, seed, deltas=(1e-3, 5e-4, 2.5e-4)):
    u = noisy(jet, seed, 1.0)
    u = np.r_[u.y - jet.y, u.y1 - jet.y1]
    n = jet.y.size
    gaps = []
    for delta in deltas:
        p = jet.with_values(y=jet.y + delta * u[:n], y1=jet.y1 + delta * u[n:])
        q, _ = project_full(p, system, TIGHT)
        o, _ = project_full(p, system, TIGHT, mode="orthogonal")
        gaps.append(np.abs(np.r_[q.y - o.y, q.y1 - o.y1]).max())
    return np.array(gaps)


@pytest.mark.parametrize("name", ["pendulum", "quadrangle", "crank"])
def test_quasi_is_second_order_close_to_orthogonal_at_rest(name):
    spec, report = checked(name)
    gaps = quasi_orthogonal_gaps(spec.mechanism(), report.jet, 11)
    assert np.all(gaps[:-1] / gaps[1:] > 3.0), gaps


@pytest.mark.parametrize("name", ["pendulum", "crank"])
def test_quasi_orthogonal_gap_scales_with_speed(name):
    # the orthogonal normal space couples positions to velocities through d2g(y1, .),
    # so away from rest the two projections differ at first order, in proportion to |y1|
    slow = quasi_orthogonal_gaps(*moving_jet(name, seed=11, speed=0.5), 11)
    fast = quasi_orthogonal_gaps(*moving_jet(name, seed=11, speed=1.0), 11)
    np.testing.assert_allclose(slow[:-1] / slow[1:], 2.0, rtol=0.1)
    np.testing.assert_allclose(fast / slow, 2.0, rtol=0.2)


class Spy:
    """Counts calls into a constraint set and an invariant."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = dict.fromkeys(EVAL_KEYS, 0)

    def __getattr__(self, name):
        attr = getattr(self.inner, name)
        key = {"jacobian": "dg", "second_differential_rows": "d2g", "second_differential_directional": "d2g",
               "weighted_hessian": "d2g"}.get(name)
        if key is None or not callable(attr):
            return attr

        def wrapped(*a, **k):
            self.calls[key] += 1
            return attr(*a, **k)
        return wrapped


class InvSpy(Spy):
    def __getattr__(self, name):
        attr = getattr(self.inner, name)
        key = {"jacobian": "df_inv", "weighted_hessian": "d2f_inv"}.get(name)
        if key is None:
            return attr

        def wrapped(*a, **k):
            self.calls[key] += 1
            return attr(*a, **k)
        return wrapped


@pytest.mark.parametrize("mode", ["quasi", "orthogonal"])
def test_counters_match_calls(mode):
    system, jet = moving_jet("quadrangle", seed=9)
    spy = Spy(system.constraints)
    system.constraints = spy
    inv = InvSpy(EnergyInvariant(system, system.energies(jet).W_total))
    _, rep = project_full(noisy(jet, 9, 1e-2), system, ProjectionConfig(mode=mode), f_inv=inv)
    n = rep.differential_evals
    assert n["dg"] == spy.calls["dg"]
    # each finite-difference third differential costs 2N directional second differentials
    assert spy.calls["d2g"] == n["d2g"] + 2 * jet.y.size * n["d3g"]
    assert (n["df_inv"], n["d2f_inv"]) == (inv.calls["df_inv"], inv.calls["d2f_inv"])
    assert (n["d3g"] > 0) == (mode == "orthogonal")


def test_orthogonal_hc_lands_on_both_manifolds():
    system, jet = moving_jet("crank", seed=3)
    out, _ = project_hc_orthogonal(noisy(jet, 3, 1e-3), system.constraints, TIGHT)
    res = residual_families(system, out)
    assert res["hc"] <= 1e-12 and res["theta"] <= 1e-12


def test_newton_cap_raises():
    system, jet = moving_jet("quadrangle", seed=1)
    with pytest.raises(ProjectionError) as err:
        project_full(noisy(jet, 1, 0.3), system, ProjectionConfig(max_newton=1, max_outer=1))
    assert not err.value.report.converged


@pytest.mark.parametrize("kw", [dict(tol_abs=0), dict(max_outer=0), dict(forcing=1.0), dict(mode="exact")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ProjectionConfig(**kw)


def test_gmres_forcing_path():
    system, jet = moving_jet("crank", seed=2)
    out, rep = project_full(noisy(jet, 2), system, ProjectionConfig(forcing=1e-10))
    assert rep.converged and max(audit(system, out).values()) <= 1e-5
