"""Leaving out a weak measurement changes nothing; a finite one disturbs at order g^2."""
import numpy as np

from wmsim import models, quantum

p = models.DoubleWellParams(1.0, 1.0, 0.1)
h, _ = models.dwell_model(p)
rho = models.dwell_state(p)
times = (0.0, 1.0, 3.0)

print(f"g = 0: disturbance of the middle step {quantum.disturbance(models.dwell_plan(times), rho, h, 1):.1e}")
gs = np.array([0.4, 0.2, 0.1, 0.05])
d = np.array([quantum.disturbance(models.dwell_plan(times, g), rho, h, 1) for g in gs])
for g, x in zip(gs, d):
    print(f"g = {g:<5} disturbance {x:.3e}")
print(f"log-log slope {np.polyfit(np.log(gs), np.log(d), 1)[0]:.3f}")
