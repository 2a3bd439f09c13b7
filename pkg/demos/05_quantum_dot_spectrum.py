"""Third cumulant of a quantum dot's occupation and its imaginary part.

The imaginary part of the bispectrum vanishes on the lines where one
frequency is zero; away from them it signals time asymmetry.  The peak
along the diagonal moves with the level position.
"""
import numpy as np

from wmsim import models

for eps in (1.0, 0.5, 0.2):
    dot = models.DotParams(eps, 1.0)
    w = np.linspace(0.05, 3.0, 60)
    im = np.array([abs(models.s3n(x, x, dot).value.imag) for x in w])
    k = int(np.argmax(im))
    print(f"eps/Gamma = {eps}: |Im S3| peaks near omega = {w[k]:.2f} at {im[k]:.4f}")

dot = models.DotParams(0.5, 1.0)
print(f"on the line omega = 0: Im S3 = {models.s3n(0.0, 1.3, dot).value.imag:.1e}")
print(f"far off resonance: |S3(1,1)| = {abs(models.s3n(1.0, 1.0, models.DotParams(20.0, 1.0)).value):.2e}")
