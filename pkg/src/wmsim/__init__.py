"""Sequential weak measurements: quasiprobabilities, detector Monte Carlo,
time-symmetry tests and the third cumulant of a quantum dot's occupation."""

from . import classical, linalg, models, quadrature, quantum, sampling

__all__ = ["classical", "linalg", "models", "quadrature", "quantum", "sampling"]
__version__ = "0.1.0"
