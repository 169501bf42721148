import functools

import numpy as np
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jetmbs.integrator import integrate
from jetmbs.models import check_model, load_model

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# output grid shared by every run that is compared pointwise
GRID = tuple(np.round(np.arange(0.5, 10.0 + 1e-9, 0.5), 10))

finite = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False, allow_infinity=False)


def vec(n, elements=finite):
    return arrays(np.float64, n, elements=elements)


@st.composite
def unit_quaternions(draw):
    v = draw(vec(4))
    n = np.linalg.norm(v)
    if n < 1e-3:
        v, n = np.array([1.0, 0.0, 0.0, 0.0]), 1.0
    return v / n


@st.composite
def euler_states(draw):
    th = draw(unit_quaternions())
    w = draw(vec(4))
    return th, w - (w @ th) * th


@functools.lru_cache(maxsize=None)
def checked(name):
    spec = load_model(name)
    return spec, check_model(spec)


@functools.lru_cache(maxsize=None)
def model_run(name, mode="quasi", invariants=True, grid=False):
    """Full [0, t_end] run of a built-in model, shared across test modules."""
    spec, report = checked(name)
    control = spec.step_control(output_times=GRID if grid else ())
    return integrate(spec.mechanism(), report.jet, control, spec.projection_config(mode=mode), invariants=invariants)


def grid_states(traj):
    return np.array([np.r_[traj.at(t).y, traj.at(t).y1] for t in GRID])


def fd_jacobian(f, x, rel=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        h = rel * (1.0 + abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def tangent_velocity(system, y, v):
    """Component of ``v`` tangent to the constraint and Euler-parameter manifolds at ``y``."""
    rows = [system.constraints.jacobian(y)]
    for s in system.theta_slices:
        r = np.zeros(y.size)
        r[s] = y[s]
        rows.append(r[None])
    A = np.vstack(rows)
    return v - A.T @ np.linalg.lstsq(A @ A.T, A @ v, rcond=None)[0]


def moving_jet(name, seed=0, speed=1.0):
    """Consistent jet of a built-in model with a random admissible velocity."""
    spec, report = checked(name)
    system = spec.mechanism()
    y = report.jet.y
    v = tangent_velocity(system, y, np.random.default_rng(seed).normal(size=y.size))
    return system, report.jet.with_values(y1=speed * v / np.linalg.norm(v))


VERDICTS = {}


def verdict(num, title, ok, detail):
    VERDICTS[num] = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[num])
