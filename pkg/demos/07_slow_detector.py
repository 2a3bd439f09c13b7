"""A detector that averages over a time window washes out the asymmetry.

Each measurement is replaced by a Gaussian time average of the position;
once the window is longer than the tunneling period the forward and
reversed experiments become indistinguishable.
"""
from wmsim import models, quantum

p = models.DoubleWellParams(1.0, 1.0, 0.1)
h, z = models.dwell_model(p)
rho = models.dwell_state(p)
for width in (0.0, 0.5, 1.0, 2.0, 5.0, 10.0):
    t, w = quantum.gaussian_window(width / p.Delta)
    obs = [quantum.smoothed_observable(z, h, tk + t, w) for tk in (0.0, 1.0, 3.0)]
    plan = quantum.MeasurementPlan.of(obs, [0.0] * 3)
    print(f"window {width:>4} / Delta: Delta_T = {quantum.asymmetry(plan, rho, h):.2e}")
