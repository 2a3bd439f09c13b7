"""Concrete systems: the two-level double well and the quantum-dot occupation.

Units: hbar = k_B = 1; for the junction detector e = 1 and h = 2 pi.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import quantum
from .linalg import pauli
from .quadrature import QuadratureError, integrate_real_line

E_CHARGE = 1.0
PLANCK_H = 2.0 * np.pi

# ---------------------------------------------------------------------------
# double well


@dataclass(frozen=True)
class DoubleWellParams:
    """Two-level double well: half splitting `eps`, tunneling `tau`, temperature `kT`."""

    eps: float
    tau: float
    kT: float

    def __post_init__(self):
        if self.eps == 0 and self.tau == 0:
            raise ValueError("eps and tau cannot both vanish")
        if not self.kT > 0:
            raise ValueError("kT must be positive")

    @property
    def Delta(self) -> float:
        return float(np.hypot(self.eps, self.tau))

    @property
    def alpha_c(self) -> float:
        d = self.Delta
        return -(self.eps / d ** 3) * np.tanh(d / self.kT)


def dwell_model(p: DoubleWellParams) -> tuple[quantum.Hamiltonian, quantum.Observable]:
    """H = eps Z + tau X in the (|l>, |r>) basis, and the position operator Z."""
    x, _, z = pauli()
    return quantum.Hamiltonian(p.eps * z + p.tau * x), quantum.Observable(z)


def dwell_state(p: DoubleWellParams) -> quantum.DensityMatrix:
    h, _ = dwell_model(p)
    return quantum.thermal_state(h, p.kT)


def dwell_plan(times, g=0.0) -> quantum.MeasurementPlan:
    """Plan measuring Z at each of `times`."""
    _, _, z = pauli()
    return quantum.MeasurementPlan.of([z] * len(times), times, g)


def dwell_corr_analytic(p: DoubleWellParams, t1: float, t2: float, t3: float) -> float:
    """Closed-form <z(t1) z(t2) z(t3)> of three weak Z measurements on the
    thermal state: alpha_c (eps^2 + tau^2 cos(2 (t3 - t2) Delta))."""
    if not t1 <= t2 <= t3:
        raise ValueError("times must satisfy t1 <= t2 <= t3")
    return p.alpha_c * (p.eps ** 2 + p.tau ** 2 * np.cos(2.0 * (t3 - t2) * p.Delta))


# ---------------------------------------------------------------------------
# quantum dot


@dataclass(frozen=True)
class DotParams:
    """Single dot level `eps`, tunneling rate `gamma`, temperature `kT` (0 allowed)."""

    eps: float
    gamma: float
    kT: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.kT < 0:
            raise ValueError("kT must be nonnegative")


N_HAT = np.diag([1.0, 0.25]).astype(np.complex128)


@dataclass(frozen=True)
class KeldyshBlock:
    gk: complex
    gr: complex
    ga: complex

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.gk, self.gr], [self.ga, 0.0]], dtype=np.complex128)


def _thermal_factor(omega, kT: float):
    if kT == 0:
        return np.sign(omega)
    return np.tanh(np.asarray(omega) / (2.0 * kT))


def _greens(omega, p: DotParams):
    omega = np.asarray(omega, dtype=float)
    gr = 1j / (omega - p.eps + 0.5j * p.gamma)
    ga = -np.conj(gr)
    gk = _thermal_factor(omega, p.kT) * p.gamma / (2.0 * (omega - p.eps) ** 2 + 0.5 * p.gamma ** 2)
    return gk, gr, ga


def green_functions(omega: float, p: DotParams) -> KeldyshBlock:
    gk, gr, ga = _greens(omega, p)
    return KeldyshBlock(complex(gk), complex(gr), complex(ga))


def _keldysh_stack(omega, p: DotParams) -> np.ndarray:
    gk, gr, ga = _greens(omega, p)
    g = np.zeros(np.shape(omega) + (2, 2), dtype=np.complex128)
    g[..., 0, 0] = gk
    g[..., 0, 1] = gr
    g[..., 1, 0] = ga
    return g


def s3n_integrand(alpha, omega: float, omega_p: float, p: DotParams) -> np.ndarray:
    """-Tr{G(a) N [G(a+w) + G(a+w')] N G(a+w+w') N} / 2 pi, vectorised in `alpha`."""
    alpha = np.asarray(alpha, dtype=float)
    g1 = _keldysh_stack(alpha, p) @ N_HAT
    mid = (_keldysh_stack(alpha + omega, p) + _keldysh_stack(alpha + omega_p, p)) @ N_HAT
    g3 = _keldysh_stack(alpha + omega + omega_p, p) @ N_HAT
    return -np.einsum("nij,njk,nki->n", g1, mid, g3) / (2.0 * np.pi)


def s3n_breakpoints(omega: float, omega_p: float, p: DotParams) -> list[float]:
    """Kinks of the zero-temperature kernel plus the level resonances."""
    shifts = [0.0, omega, omega_p, omega + omega_p]
    pts = [-s for s in shifts] + [p.eps - s for s in shifts]
    return sorted(set(pts))


@dataclass(frozen=True)
class S3Result:
    omega: float
    omega_p: float
    value: complex
    abs_error_estimate: float
    evaluations: int


def s3n(omega: float, omega_p: float, p: DotParams, tol: float = 1e-8,
        max_evals: int = 1_000_000) -> S3Result:
    """Third cumulant S_3^N(omega, omega') of the dot occupation.

    Raises
    ------
    QuadratureError
        If the integral does not reach `tol` within `max_evals`; the
        exception's ``outcome`` holds the partial estimate.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    out = integrate_real_line(lambda a: s3n_integrand(a, omega, omega_p, p), tol,
                              s3n_breakpoints(omega, omega_p, p), max_evals)
    if not out.converged:
        raise QuadratureError(
            f"S3 integral at ({omega}, {omega_p}) did not converge "
            f"(estimate {out.value}, error {out.abs_error_estimate:.3g})", out)
    return S3Result(float(omega), float(omega_p), out.value, out.abs_error_estimate, out.evaluations)


def symmetric_axis(wmax: float, n: int) -> np.ndarray:
    """`n` equally spaced frequencies on [-wmax, wmax] with exact mirror symmetry
    (so zero and the anti-diagonal are hit exactly for odd `n`)."""
    if n < 2:
        raise ValueError("need at least 2 grid points")
    half = (n - 1) / 2.0
    return wmax * ((np.arange(n) - half) / half)


def s3n_grid(p: DotParams, omegas: np.ndarray, omegas_p: np.ndarray | None = None,
             tol: float = 1e-8, workers: int = 1, max_evals: int = 1_000_000) -> list[S3Result]:
    """S_3^N on the product grid, row-major in (omega, omega_p)."""
    omegas_p = omegas if omegas_p is None else omegas_p
    points = [(float(w), float(wp)) for w in omegas for wp in omegas_p]

    def one(pt):
        return s3n(pt[0], pt[1], p, tol, max_evals)

    if workers <= 1:
        return [one(pt) for pt in points]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(one, points))


# ---------------------------------------------------------------------------
# junction detector


@dataclass(frozen=True)
class JunctionParams:
    """Broad-level junction used as charge detector: width `gammap`, level
    `epsp`, bias `V` and dot-junction capacitance `C`."""

    gammap: float
    epsp: float
    V: float
    C: float

    def __post_init__(self):
        if not self.gammap > 0:
            raise ValueError("gammap must be positive")
        if not self.C > 0:
            raise ValueError("C must be positive")


class JunctionQuantities(NamedTuple):
    transmission: float
    chi: float
    s3_i0: float


def transmission(gammap: float, epsp: float) -> float:
    return gammap ** 2 / (epsp ** 2 + gammap ** 2)


def mean_current(j: JunctionParams, epsp: float | None = None) -> float:
    epsp = j.epsp if epsp is None else epsp
    return transmission(j.gammap, epsp) * E_CHARGE ** 2 * j.V / PLANCK_H


def junction_quantities(j: JunctionParams) -> JunctionQuantities:
    """Transmission, charge susceptibility chi = -e^2 d<I>/d eps' / C, and the
    intrinsic third current cumulant T(1-T)(1-2T) e^4 V / h."""
    t = transmission(j.gammap, j.epsp)
    dt = -2.0 * j.epsp * j.gammap ** 2 / (j.epsp ** 2 + j.gammap ** 2) ** 2
    chi = -E_CHARGE ** 2 * (dt * E_CHARGE ** 2 * j.V / PLANCK_H) / j.C
    s3 = t * (1.0 - t) * (1.0 - 2.0 * t) * E_CHARGE ** 4 * j.V / PLANCK_H
    return JunctionQuantities(t, chi, s3)


@dataclass(frozen=True)
class RegimeEntry:
    name: str
    ratio: float
    passed: bool


@dataclass(frozen=True)
class RegimeReport:
    factor: float
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name: str) -> RegimeEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def group_passed(self, prefix: str) -> bool:
        return all(e.passed for e in self.entries if e.name.startswith(prefix))


def _ratio(big: float, small: float) -> float:
    big, small = abs(big), abs(small)
    if small == 0:
        return np.inf if big > 0 else np.nan
    return big / small


def regime_check(j: JunctionParams, d: DotParams, factor: float = 10.0) -> RegimeReport:
    """Scale-separation diagnostics for the dot + junction detector.

    Checks ``(Gamma, eps, kT) << eV << (Gamma', eps')`` and
    ``e^2/(Gamma' C) >> Gamma/eV >> (e^2/(Gamma' C))^2``, reading every
    ``a << b`` as ``b/a >= factor``.
    """
    ev = E_CHARGE * j.V
    coupling = E_CHARGE ** 2 / (j.gammap * j.C)
    back = d.gamma / ev if ev else np.inf
    rows = [
        ("scales:eV/Gamma", _ratio(ev, d.gamma)),
        ("scales:eV/eps", _ratio(ev, d.eps)),
        ("scales:eV/kT", _ratio(ev, d.kT)),
        ("scales:Gamma'/eV", _ratio(j.gammap, ev)),
        ("scales:eps'/eV", _ratio(j.epsp, ev)),
        ("window:left", _ratio(coupling, back)),
        ("window:right", _ratio(back, coupling ** 2)),
    ]
    entries = tuple(RegimeEntry(n, float(r), bool(r >= factor)) for n, r in rows)
    return RegimeReport(factor, entries)


def s3_total(j: JunctionParams, d: DotParams, omega: float, omega_p: float,
             tol: float = 1e-8) -> complex:
    """Detector current cumulant S_3^I0 + chi^3 S_3^N(omega, omega')."""
    report = regime_check(j, d)
    if not report.passed:
        failed = ", ".join(e.name for e in report.entries if not e.passed)
        warnings.warn(f"junction outside its weak-detection regime: {failed}", stacklevel=2)
    q = junction_quantities(j)
    return q.s3_i0 + q.chi ** 3 * s3n(omega, omega_p, d, tol).value
