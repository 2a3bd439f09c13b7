"""Three weak position measurements on a thermal double well.

The three-time correlator is computed three ways (closed form, exact
quasiprobability, simulated weak detector) and then compared with the
time-reversed experiment, which exchanges the two waiting times.
"""
from wmsim import models, quantum

p = models.DoubleWellParams(eps=1.0, tau=1.0, kT=0.1)
h, _ = models.dwell_model(p)
rho = models.dwell_state(p)
times = (0.0, 1.0, 3.0)

analytic = models.dwell_corr_analytic(p, *times)
exact = quantum.quasiprob(models.dwell_plan(times), rho, h).moment()
print(f"closed form           {analytic:+.10f}")
print(f"quasiprobability      {exact:+.10f}")

batch = quantum.sample_sequence(models.dwell_plan(times, 0.3), rho, h, 1_000_000, seed=1, workers=4)
m = quantum.deconvolve_moments(batch)
print(f"weak detector, g=0.3  {m[(0, 1, 2)]:+.4f} +- {m.error((0, 1, 2)):.4f}")

plan = models.dwell_plan(times)
print(f"reversed correlator   {quantum.time_reversed_quasiprob(plan, rho, h).moment():+.10f}")
print(f"gap-swapped forward   {models.dwell_corr_analytic(p, 0.0, 2.0, 3.0):+.10f}")
print(f"asymmetry Delta_T     {quantum.asymmetry(plan, rho, h):.4f}")
