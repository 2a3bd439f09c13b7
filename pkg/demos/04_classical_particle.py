"""A classical particle in a quartic double well, probed by a weak detector.

With a kickless detector, forward and reversed runs pair up exactly under
common random numbers.  In the weak limit the two sets of moments agree
within statistical error, so no classical arrow of time appears.
"""
from wmsim import classical as C

sys_ = C.ClassicalSystem.quartic_double_well()
q, p = C.position(), C.momentum()

ens = C.PhaseEnsemble.boltzmann(sys_, 0.5, 20_000, seed=1)
strong = C.ClassicalProtocol(((0.2, q), (0.7, q), (1.5, q)), 1.0, C.ClassicalDetectorSpec(0.3, 0.0))
f = C.estimate_moments(C.run_experiment(ens, sys_, strong, 2), 1.0, 0.3)
r = C.estimate_moments(C.reverse_experiment(ens, sys_, strong, 2), 1.0, 0.3)
print(f"kickless detector: <q q q> forward {f[(0, 1, 2)]:+.6f}, reversed {r[(0, 1, 2)]:+.6f}")

weak = C.ClassicalProtocol(((0.2, q), (0.7, p), (1.5, q)), 0.05, C.ClassicalDetectorSpec(1.0, 1.0))
e1 = C.PhaseEnsemble.boltzmann(sys_, 0.5, 200_000, seed=2)
e2 = C.PhaseEnsemble.boltzmann(sys_, 0.5, 200_000, seed=3)
wf = C.estimate_moments(C.run_experiment(e1, sys_, weak, 4, workers=4), 0.05, 1.0)
wr = C.estimate_moments(C.reverse_experiment(e2, sys_, weak, 5, workers=4), 0.05, 1.0)
z = C.moment_discrepancy(wf, wr)
print(f"weak detector: largest |z| over {len(z)} moments = {max(abs(v) for v in z.values()):.2f}")
