"""Observed orders: Richardson order of the integrator and the energy-rate law."""
import numpy as np

from jetmbs import ForceModel, Mechanism, ProjectionConfig, RigidBody, SpringPotential, StepControl, pack_jet
from jetmbs.body import SystemJet
from jetmbs.integrator import integrate
from jetmbs.models import check_model, load_model


def richardson():
    m = Mechanism.build([RigidBody(2.0, (1.0, 2.0, 3.0))], [], ForceModel(potential=SpringPotential(50.0)))
    jet = pack_jet(0.0, [(1.0, 0.0, 0.5)], [(1, 0, 0, 0)], [(0.0, 2.0, 0.0)], [(0, 0, 0, 0)])
    hs = (0.2, 0.1, 0.05, 0.025, 0.0125)
    ends = [integrate(m, jet, StepControl(h0=h, t_end=2.0), ProjectionConfig(), invariants=False,
                      fixed_step=True).records[-1].y[:3] for h in hs]
    for k in range(len(hs) - 2):
        p = np.log2(np.linalg.norm(ends[k] - ends[k + 1]) / np.linalg.norm(ends[k + 1] - ends[k + 2]))
        print(f"h = {hs[k]:<7g} Richardson order {p:.3f}")


def energy_rate():
    spec = load_model("quadrangle")
    jet = check_model(spec).jet
    m = spec.mechanism()
    errs = []
    hs = (0.01, 0.005, 0.0025, 0.00125)
    for h in hs:
        tr = integrate(m, jet, spec.step_control(h0=h, t_end=1.0), spec.projection_config(),
                       invariants=False, fixed_step=True)
        W = tr.column("W")
        P = np.array([m.power(SystemJet(r.t, r.y, r.y1)) for r in tr.records])
        errs.append(np.abs((W[2:] - W[:-2]) / (2 * h) - P[1:-1]).max())
        print(f"h = {h:<7g} max |dW/dt - power| {errs[-1]:.3e}", flush=True)
    print("orders", np.round(np.log2(np.array(errs[:-1]) / np.array(errs[1:])), 3))


if __name__ == "__main__":
    richardson()
    energy_rate()
