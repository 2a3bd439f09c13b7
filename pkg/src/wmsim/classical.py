"""Classical weak measurements on phase-space ensembles.

A measurement of ``A(q, p)`` couples an independent Gaussian detector
through the impulsive interaction ``g p_d A``: the detector pointer is
shifted by ``g A`` and the system receives the kick generated by ``A``
with strength ``g p_d``.  Readings are reported in a-units (divided by
``g``), so the detector adds Gaussian noise of variance ``sigma_q / g**2``.

Detector spreads ``sigma_q``/``sigma_p`` are *variances* of the pointer
position and momentum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .sampling import (MomentTable, SampleBatch, gaussian_deconvolved_moments,
                       map_chunks, moment_keys, stream)

_ENSEMBLE_KEY = 101
_RUN_KEY = 202


@dataclass(frozen=True)
class PhasePoint:
    """Phase-space point(s); `q` and `p` have shape ``(dof,)`` or ``(n, dof)``."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float, ndmin=1)
        p = np.array(self.p, dtype=float, ndmin=1)
        if q.shape != p.shape:
            raise ValueError("q and p must have the same shape")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase point has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    def flipped(self) -> "PhasePoint":
        """Time-reversed point (q, -p)."""
        return PhasePoint(self.q, -self.p)

    def __len__(self) -> int:
        return self.q.shape[0] if self.q.ndim == 2 else 1


@dataclass(frozen=True)
class ClassicalSystem:
    """H = sum p^2 / 2m + V(q).  `potential` maps ``(..., dof) -> (...)`` and
    `gradient` maps ``(..., dof) -> (..., dof)``."""

    potential: Callable
    gradient: Callable
    masses: np.ndarray
    tag: str = "custom"

    def __post_init__(self):
        m = np.array(self.masses, dtype=float, ndmin=1)
        if np.any(m <= 0):
            raise ValueError("masses must be positive")
        object.__setattr__(self, "masses", m)

    @property
    def dof(self) -> int:
        return self.masses.shape[0]

    def energy(self, point: PhasePoint) -> np.ndarray:
        return np.sum(point.p ** 2 / (2.0 * self.masses), axis=-1) + self.potential(point.q)

    def force(self, q: np.ndarray) -> np.ndarray:
        f = -self.gradient(q)
        if not np.all(np.isfinite(f)):
            raise FloatingPointError("non-finite force")
        return f

    def gradient_error(self, rng: np.random.Generator, n: int = 20, h: float = 1e-6) -> float:
        """Largest relative mismatch between `gradient` and central differences of V."""
        worst = 0.0
        for _ in range(n):
            q = rng.normal(size=self.dof)
            g = self.gradient(q)
            for i in range(self.dof):
                e = np.zeros(self.dof)
                e[i] = h
                fd = (self.potential(q + e) - self.potential(q - e)) / (2 * h)
                worst = max(worst, abs(fd - g[i]) / max(1.0, abs(g[i])))
        return worst

    @classmethod
    def harmonic(cls, k: float = 1.0, m: float = 1.0, dof: int = 1) -> "ClassicalSystem":
        return cls(lambda q: 0.5 * k * np.sum(q * q, axis=-1), lambda q: k * q,
                   np.full(dof, m), "harmonic")

    @classmethod
    def quartic_double_well(cls, a: float = 1.0, b: float = 1.0, m: float = 1.0,
                            dof: int = 1) -> "ClassicalSystem":
        """V = a (q^2 - b^2)^2 per degree of freedom."""
        return cls(lambda q: a * np.sum((q * q - b * b) ** 2, axis=-1),
                   lambda q: 4.0 * a * q * (q * q - b * b),
                   np.full(dof, m), "quartic-double-well")

    @classmethod
    def cubic_anharmonic(cls, k: float = 1.0, c: float = 0.1, m: float = 1.0,
                         dof: int = 1) -> "ClassicalSystem":
        """V = k q^2/2 + c q^3/3 (unbounded below; use for short runs only)."""
        return cls(lambda q: np.sum(0.5 * k * q * q + c * q ** 3 / 3.0, axis=-1),
                   lambda q: k * q + c * q * q, np.full(dof, m), "cubic-anharmonic")

    @classmethod
    def free(cls, m: float = 1.0, dof: int = 1) -> "ClassicalSystem":
        return cls(lambda q: np.zeros(np.shape(q)[:-1]), lambda q: np.zeros_like(q),
                   np.full(dof, m), "free")


@dataclass(frozen=True)
class ClassicalObservable:
    """Observable A(q, p) with its partial derivatives and time-reversal parity."""

    func: Callable
    grad_q: Callable
    grad_p: Callable
    parity: str = "even"
    name: str = "A"

    def __post_init__(self):
        if self.parity not in ("even", "odd"):
            raise ValueError("parity must be 'even' or 'odd'")

    def __call__(self, point: PhasePoint) -> np.ndarray:
        return self.func(point.q, point.p)

    def negated(self) -> "ClassicalObservable":
        f, gq, gp = self.func, self.grad_q, self.grad_p
        return ClassicalObservable(lambda q, p: -f(q, p), lambda q, p: -gq(q, p),
                                   lambda q, p: -gp(q, p), self.parity, f"-{self.name}")

    def time_reversed(self) -> "ClassicalObservable":
        """A^T(q, p) = A(q, -p), i.e. -A for odd observables."""
        return self.negated() if self.parity == "odd" else self


def position(i: int = 0) -> ClassicalObservable:
    def grad_q(q, p):
        g = np.zeros_like(q)
        g[..., i] = 1.0
        return g

    return ClassicalObservable(lambda q, p: q[..., i], grad_q, lambda q, p: np.zeros_like(p),
                               "even", f"q{i}")


def momentum(i: int = 0) -> ClassicalObservable:
    def grad_p(q, p):
        g = np.zeros_like(p)
        g[..., i] = 1.0
        return g

    return ClassicalObservable(lambda q, p: p[..., i], lambda q, p: np.zeros_like(q), grad_p,
                               "odd", f"p{i}")


@dataclass(frozen=True)
class ClassicalDetectorSpec:
    sigma_q: float = 0.0
    sigma_p: float = 0.0

    def __post_init__(self):
        if self.sigma_q < 0 or self.sigma_p < 0:
            raise ValueError("detector variances must be nonnegative")


@dataclass(frozen=True)
class ClassicalProtocol:
    """Sequence of ``(time, observable)`` measurements with coupling `g`.

    `dt` is the largest leapfrog step used between measurements.
    """

    steps: tuple
    g: float
    detector: ClassicalDetectorSpec = field(default_factory=ClassicalDetectorSpec)
    dt: float = 1e-2

    def __post_init__(self):
        steps = tuple((float(t), a) for t, a in self.steps)
        if not steps:
            raise ValueError("protocol needs at least one step")
        times = [t for t, _ in steps]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("step times must be nondecreasing")
        if self.g < 0:
            raise ValueError("g must be nonnegative")
        if self.g == 0 and self.detector.sigma_p > 0:
            raise ValueError("g = 0 with sigma_p > 0 leaves the reading undefined")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "steps", steps)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.steps])

    @property
    def noise_var(self) -> float:
        """Variance of the reading noise in a-units."""
        return self.detector.sigma_q / self.g ** 2 if self.g > 0 else self.detector.sigma_q

    def without(self, index: int) -> "ClassicalProtocol":
        steps = self.steps[:index] + self.steps[index + 1:]
        return ClassicalProtocol(steps, self.g, self.detector, self.dt)


@dataclass(frozen=True)
class PhaseEnsemble:
    """Equal-weight sample of phase points drawn at time 0."""

    points: PhasePoint
    seed: int
    descriptor: str

    def __post_init__(self):
        if self.points.q.ndim != 2 or self.points.q.shape[0] == 0:
            raise ValueError("ensemble needs a nonempty (n, dof) array of points")

    def __len__(self) -> int:
        return self.points.q.shape[0]

    @classmethod
    def gaussian(cls, mean_q, mean_p, cov, n: int, seed: int) -> "PhaseEnsemble":
        """Multivariate normal in (q, p) with a (2 dof x 2 dof) covariance."""
        mean = np.concatenate([np.atleast_1d(mean_q), np.atleast_1d(mean_p)]).astype(float)
        dof = mean.size // 2
        x = stream(seed, _ENSEMBLE_KEY).multivariate_normal(mean, np.asarray(cov, dtype=float), size=n,
                                                            method="cholesky")
        return cls(PhasePoint(x[:, :dof], x[:, dof:]), seed, "gaussian")

    @classmethod
    def boltzmann(cls, sys: ClassicalSystem, kT: float, n: int, seed: int,
                  burn_in: int = 10_000, stride: int = 10, n_chains: int | None = None,
                  step: float | None = None) -> "PhaseEnsemble":
        """Canonical ensemble exp(-H/kT).

        Momenta are drawn exactly.  Positions are exact for the harmonic
        system and otherwise come from parallel random-walk Metropolis chains
        (step size tuned during burn-in only, then samples every `stride`
        sweeps).
        """
        if not kT > 0:
            raise ValueError("kT must be positive")
        rng = stream(seed, _ENSEMBLE_KEY)
        p = rng.normal(size=(n, sys.dof)) * np.sqrt(sys.masses * kT)
        if sys.tag == "harmonic":
            k = float(sys.gradient(np.ones(sys.dof))[0])
            q = rng.normal(size=(n, sys.dof)) * np.sqrt(kT / k)
            return cls(PhasePoint(q, p), seed, f"boltzmann(kT={kT})")
        q = _metropolis(sys.potential, sys.dof, kT, n, rng, burn_in, stride,
                        n_chains or min(n, 1024), step or 0.5 * np.sqrt(kT))
        return cls(PhasePoint(q, p), seed, f"boltzmann(kT={kT})")


def _metropolis(potential, dof, kT, n, rng, burn_in, stride, n_chains, step):
    x = rng.normal(size=(n_chains, dof))
    e = potential(x)
    accepted = 0
    for sweep in range(burn_in):
        prop = x + step * rng.normal(size=x.shape)
        ep = potential(prop)
        ok = np.log(rng.random(n_chains)) < -(ep - e) / kT
        x[ok] = prop[ok]
        e[ok] = ep[ok]
        accepted += ok.sum()
        if (sweep + 1) % 100 == 0:
            rate = accepted / (100 * n_chains)
            step *= 1.1 if rate > 0.4 else 1 / 1.1
            accepted = 0
    per_chain = -(-n // n_chains)
    out = np.empty((per_chain, n_chains, dof))
    for s in range(per_chain):
        for _ in range(stride):
            prop = x + step * rng.normal(size=x.shape)
            ep = potential(prop)
            ok = np.log(rng.random(n_chains)) < -(ep - e) / kT
            x[ok] = prop[ok]
            e[ok] = ep[ok]
        out[s] = x
    return out.reshape(-1, dof)[:n]


# ---------------------------------------------------------------------------
# dynamics and kicks


def leapfrog_evolve(point: PhasePoint, sys: ClassicalSystem, dt: float, steps: int) -> PhasePoint:
    """Velocity-Verlet integration for `steps` steps of size `dt` (> 0)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    q, p = _leapfrog(point.q, point.p, sys, dt, int(steps))
    return PhasePoint(q, p)


def _leapfrog(q, p, sys: ClassicalSystem, dt: float, steps: int):
    if steps <= 0:
        return q.copy(), p.copy()
    inv_m = 1.0 / sys.masses
    p = p + 0.5 * dt * sys.force(q)
    for _ in range(steps - 1):
        q = q + dt * p * inv_m
        p = p + dt * sys.force(q)
    q = q + dt * p * inv_m
    p = p + 0.5 * dt * sys.force(q)
    return q, p


def _segment(duration: float, dt: float) -> tuple[int, float]:
    """Number and size of equal steps covering |duration| with steps <= dt."""
    d = abs(duration)
    if d == 0:
        return 0, 0.0
    n = max(1, int(np.ceil(d / dt - 1e-9)))
    return n, d / n


def _evolve(q, p, sys, duration, dt):
    """Evolve by a signed duration; backwards runs use flip-evolve-flip."""
    n, h = _segment(duration, dt)
    if n == 0:
        return q, p
    if duration > 0:
        return _leapfrog(q, p, sys, h, n)
    q, p = _leapfrog(q, -p, sys, h, n)
    return q, -p


def measurement_kick(point: PhasePoint, A: ClassicalObservable, g: float,
                     p_d) -> tuple[PhasePoint, np.ndarray]:
    """Impulsive coupling g p_d A.

    Returns the kicked point and the noiseless pointer shift ``g A``
    (evaluated before the kick).  The kick is one explicit Euler step of the
    flow generated by ``g p_d A``: ``q += g p_d dA/dp``, ``p -= g p_d dA/dq``.
    """
    q, p = point.q, point.p
    reading = g * A.func(q, p)
    gq, gp = A.grad_q(q, p), A.grad_p(q, p)
    if not (np.all(np.isfinite(gq)) and np.all(np.isfinite(gp))):
        raise FloatingPointError("non-finite observable gradient")
    s = g * np.asarray(p_d, dtype=float)
    if np.ndim(s) == 1 and q.ndim == 2:
        s = s[:, None]
    return PhasePoint(q + s * gp, p - s * gq), reading


def _draws(gen: np.random.Generator, m: int, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return gen.standard_normal(m)
    half = gen.standard_normal((m + 1) // 2)
    out = np.empty(2 * half.size)
    out[0::2] = half
    out[1::2] = -half
    return out[:m]


def _simulate(ens: PhaseEnsemble, sys: ClassicalSystem, proto: ClassicalProtocol, seed: int,
              reverse: bool, antithetic: bool, workers: int) -> np.ndarray:
    n_steps = len(proto.steps)
    times = proto.times
    g = proto.g
    sq, sp = np.sqrt(proto.detector.sigma_q), np.sqrt(proto.detector.sigma_p)
    if reverse:
        order = list(range(n_steps - 1, -1, -1))
        obs = [proto.steps[k][1].time_reversed() for k in order]
        span = times[0] + times[-1]
        meas_times = [span - times[k] for k in order]
        # carry the ensemble to t_1 + t_n along the forward schedule, so the
        # reversed trajectories retrace the forward ones step for step
        prep = list(times) + [span]
    else:
        order = list(range(n_steps))
        obs = [a for _, a in proto.steps]
        meas_times = list(times)
        prep = []

    def run_chunk(chunk, lo, hi):
        m = hi - lo
        q = ens.points.q[lo:hi].copy()
        p = ens.points.p[lo:hi].copy()
        t_now = 0.0
        for t in prep:
            q, p = _evolve(q, p, sys, t - t_now, proto.dt)
            t_now = t
        if reverse:
            p = -p
            t_now = 0.0
        out = np.empty((m, n_steps))
        for j, k in enumerate(order):
            q, p = _evolve(q, p, sys, meas_times[j] - t_now, proto.dt)
            t_now = meas_times[j]
            gen = stream(seed, _RUN_KEY, chunk, k)
            z_read = _draws(gen, m, antithetic)
            z_kick = _draws(gen, m, antithetic)
            pt, shift = measurement_kick(PhasePoint(q, p), obs[j], g, sp * z_kick)
            q, p = pt.q, pt.p
            raw = shift + sq * z_read
            out[:, k] = raw / g if g > 0 else obs[j].func(q, p) + sq * z_read
        return out

    return map_chunks(run_chunk, len(ens), workers)


def run_experiment(ens: PhaseEnsemble, sys: ClassicalSystem, proto: ClassicalProtocol, seed: int,
                   antithetic: bool = False, workers: int = 1) -> SampleBatch:
    """Measure the protocol on every ensemble member; readings in a-units.

    With ``g == 0`` (only allowed for ``sigma_p == 0``) the observable is
    read directly, with additive noise of variance ``sigma_q``.
    `antithetic` pairs consecutive trajectories with opposite detector draws.
    """
    out = _simulate(ens, sys, proto, seed, False, antithetic, workers)
    return SampleBatch(out, proto.g, seed, proto.noise_var)


def reverse_experiment(ens: PhaseEnsemble, sys: ClassicalSystem, proto: ClassicalProtocol, seed: int,
                       antithetic: bool = False, workers: int = 1) -> SampleBatch:
    """The time-reversed experiment, columns aligned with the forward steps.

    Step times are reflected about the protocol midpoint, ``s = t_1 + t_n - t``,
    and ``A_k^T`` is measured in reversed order.  The initial points are first
    carried to ``t_1 + t_n`` (without measuring) and then momentum-flipped;
    for a stationary ensemble even in ``p`` this is the same initial density,
    and it makes the unperturbed reversed trajectories retrace the forward
    ones exactly.  Detector noise for the reversed measurement of step ``k``
    comes from the same stream as forward step ``k`` (common random numbers).
    """
    out = _simulate(ens, sys, proto, seed, True, antithetic, workers)
    return SampleBatch(out, proto.g, seed, proto.noise_var)


def estimate_moments(batch: SampleBatch, g: float, sigma_q: float) -> MomentTable:
    """Deconvolved mixed moments (order <= 3) for detector position variance `sigma_q`."""
    if batch.n_samples < 2:
        raise ValueError("need at least 2 samples")
    var = sigma_q / g ** 2 if g > 0 else sigma_q
    return gaussian_deconvolved_moments(batch.outcomes, var)


def moment_discrepancy(a: MomentTable, b: MomentTable) -> dict:
    """Per-moment difference in units of the combined standard error."""
    out = {}
    for key in a.keys():
        se = np.hypot(a.stderr[key], b.stderr[key])
        diff = a.values[key] - b.values[key]
        out[key] = diff / se if se > 0 else (0.0 if diff == 0 else np.inf)
    return out


def disturbance(ens: PhaseEnsemble, sys: ClassicalSystem, proto: ClassicalProtocol, index: int,
                seed: int, workers: int = 1) -> float:
    """Largest change of any deconvolved moment (order <= 3) of the other steps
    caused by performing measurement `index`.

    Every initial point is run twice with opposite detector draws, and both
    runs share points and draws, so the odd-order response to the kicks
    cancels and what remains is the O(g^2) disturbance.  The reading noise
    ``sigma_q / g**2`` enters the estimator variance, so scans over small
    `g` want a quiet position detector.
    """
    keep = [k for k in range(len(proto.steps)) if k != index]
    pts = ens.points
    ens = PhaseEnsemble(PhasePoint(np.repeat(pts.q, 2, axis=0), np.repeat(pts.p, 2, axis=0)),
                        ens.seed, ens.descriptor + " (paired)")
    full = _simulate(ens, sys, proto, seed, False, True, workers)[:, keep]
    # the skipped step becomes a null coupling so the other steps keep their streams
    steps = list(proto.steps)
    steps[index] = (steps[index][0], _null_observable(steps[index][1]))
    ghost = ClassicalProtocol(tuple(steps), proto.g, proto.detector, proto.dt)
    reduced = _simulate(ens, sys, ghost, seed, False, True, workers)[:, keep]
    keys = moment_keys(len(keep))
    m1 = gaussian_deconvolved_moments(full, proto.noise_var, keys)
    m2 = gaussian_deconvolved_moments(reduced, proto.noise_var, keys)
    return max(abs(m1.values[k] - m2.values[k]) for k in keys)


def _null_observable(a: ClassicalObservable) -> ClassicalObservable:
    return ClassicalObservable(lambda q, p: np.zeros(q.shape[:-1]), lambda q, p: np.zeros_like(q),
                               lambda q, p: np.zeros_like(p), a.parity, "0")
