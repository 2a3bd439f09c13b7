"""A tunnel junction as charge detector for the dot.

Its own third cumulant vanishes at transmission 1/2, leaving the dot's
contribution scaled by chi^3.  A regime report shows whether the
detector is weak enough and fast enough; with these numbers the upper
bound on Gamma/eV is only met with equality.
"""
import warnings

from wmsim import models

j = models.JunctionParams(gammap=10.0, epsp=10.0, V=0.1, C=1.0)
q = models.junction_quantities(j)
print(f"transmission {q.transmission}, chi {q.chi:.4e}, intrinsic S3 {q.s3_i0}")

dot = models.DotParams(1e-3, 1e-3)
for e in models.regime_check(j, dot).entries:
    print(f"  {e.name:18s} ratio {e.ratio:10.3g}  {'ok' if e.passed else 'violated'}")
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    print(f"total S3 at (1, 1): {models.s3_total(j, dot, 1.0, 1.0):.3e}")
