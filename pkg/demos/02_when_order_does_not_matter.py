"""Cases where the arrow of time cannot be seen.

Two measurements, or any number of mutually compatible ones, give
identical forward and reversed quasiprobabilities.  Three incompatible
measurements generally do not.
"""
import numpy as np

from wmsim import linalg, quantum

rng = np.random.default_rng(0)
h = linalg.random_hermitian(3, rng)
rho = linalg.random_density(3, rng)
obs = [linalg.random_hermitian(3, rng) for _ in range(3)]

two = quantum.MeasurementPlan.of(obs[:2], [0.0, 0.8])
three = quantum.MeasurementPlan.of(obs, [0.0, 0.8, 1.9])
print(f"two steps:    Delta_T = {quantum.asymmetry(two, rho, h):.2e}")
print(f"three steps:  Delta_T = {quantum.asymmetry(three, rho, h):.2e}")

# observables sharing an eigenbasis with H
w, v = np.linalg.eigh(h)
diag = [v @ np.diag(rng.normal(size=3)) @ v.conj().T for _ in range(3)]
compat = quantum.MeasurementPlan.of(diag, [0.0, 0.8, 1.9])
print(f"compatible:   {quantum.compatibility_check(compat, h)}, "
      f"Delta_T = {quantum.asymmetry(compat, rho, h):.2e}")
