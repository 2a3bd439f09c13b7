"""Sequential weak measurements on finite-dimensional quantum systems.

Conventions: hbar = k_B = 1.  Detector readings are reported in units of
the measured observable ("a-units"), i.e. the raw pointer position divided
by the coupling ``g``, so the Gaussian Kraus detector adds noise of variance
``1/g**2`` to each reading.

Quasiprobability tables are computed in the Heisenberg picture: every step
observable is evolved to its measurement time, and the initial density
matrix is acted on by the per-step measurement superoperators.

* ``g == 0`` (weak limit): the step acts as the Jordan product with each
  spectral projector, ``X -> (P_a X + X P_a)/2``, with outcome ``a`` the
  eigenvalue.
* ``g > 0``: in the eigenbasis of the step observable the block
  ``P_a X P_b`` is assigned to the outcome ``(a + b)/2`` and damped by
  ``exp(-g**2 (a - b)**2 / 8)``.  This is what remains of the Gaussian
  Kraus pair ``K_g(a) X K_g(a)^†`` once the detector noise is deconvolved.

The final step of a plan only contributes through a trace, so its outcome
axis is always the spectrum of the observable, whatever the strength.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

from . import linalg
from .linalg import LinalgError
from .sampling import (CHUNK_SIZE, MomentTable, SampleBatch, gaussian_deconvolved_moments,
                       map_chunks, stream)

MAX_STEPS = 6
MAX_DIM = 16
MAX_TABLE_ELEMENTS = 50_000_000
BIN_TOL = 1e-9


class PlanError(ValueError):
    """Invalid measurement plan or incompatible inputs."""


@dataclass(frozen=True, eq=False)
class Observable:
    matrix: np.ndarray

    def __post_init__(self):
        m = linalg.as_matrix(self.matrix)
        if not linalg.is_hermitian(m):
            raise LinalgError("observable must be Hermitian")
        object.__setattr__(self, "matrix", 0.5 * (m + m.conj().T))

    @cached_property
    def spectrum(self) -> linalg.SpectralDecomposition:
        return linalg.hermitian_eigen(self.matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def conj(self) -> "Observable":
        return Observable(self.matrix.conj())


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = linalg.as_matrix(self.matrix)
        if not linalg.is_hermitian(m):
            raise LinalgError("density matrix must be Hermitian")
        if abs(np.trace(m) - 1.0) > 1e-10:
            raise LinalgError(f"density matrix must have unit trace, got {np.trace(m).real}")
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise LinalgError("density matrix must be positive semidefinite")
        object.__setattr__(self, "matrix", 0.5 * (m + m.conj().T))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def expect(self, a) -> float:
        a = a.matrix if isinstance(a, Observable) else np.asarray(a)
        return float(np.trace(self.matrix @ a).real)

    def conj(self) -> "DensityMatrix":
        return DensityMatrix(self.matrix.conj())


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    matrix: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        m = linalg.as_matrix(self.matrix)
        if not linalg.is_hermitian(m):
            raise LinalgError("Hamiltonian must be Hermitian")
        if self.hbar != 1.0:
            raise ValueError("only hbar = 1 is supported")
        object.__setattr__(self, "matrix", 0.5 * (m + m.conj().T))

    @cached_property
    def spectrum(self) -> linalg.SpectralDecomposition:
        return linalg.hermitian_eigen(self.matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def propagator(self, t: float) -> np.ndarray:
        """U(t) = exp(-i H t)."""
        return linalg.matrix_function(self.spectrum, lambda x: np.exp(-1j * x * t))

    def conj(self) -> "Hamiltonian":
        return Hamiltonian(self.matrix.conj())


def _obs(a) -> Observable:
    return a if isinstance(a, Observable) else Observable(a)


def _ham(h) -> Hamiltonian:
    return h if isinstance(h, Hamiltonian) else Hamiltonian(h)


def _rho(r) -> DensityMatrix:
    return r if isinstance(r, DensityMatrix) else DensityMatrix(r)


@dataclass(frozen=True)
class MeasurementPlan:
    """Ordered list of ``(time, observable)`` steps measured with coupling `g`.

    `g` is either one strength shared by every step or a sequence of
    per-step strengths; 0 encodes the weak limit.
    """

    steps: tuple
    g: float | tuple = 0.0

    def __post_init__(self):
        steps = tuple((float(t), _obs(a)) for t, a in self.steps)
        if not steps:
            raise PlanError("a plan needs at least one step")
        times = [t for t, _ in steps]
        if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
            raise PlanError("step times must be nondecreasing")
        dims = {a.dim for _, a in steps}
        if len(dims) != 1:
            raise PlanError("all observables must act on the same space")
        if len(steps) > MAX_STEPS:
            raise PlanError(f"plans are limited to {MAX_STEPS} steps")
        if dims.pop() > MAX_DIM:
            raise PlanError(f"dimension is limited to {MAX_DIM}")
        g = self.g
        if np.ndim(g) == 0:
            g = float(g)
            if g < 0:
                raise PlanError("measurement strength must be >= 0")
        else:
            g = tuple(float(x) for x in g)
            if len(g) != len(steps) or min(g) < 0:
                raise PlanError("need one nonnegative strength per step")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "g", g)

    @classmethod
    def of(cls, observables: Sequence, times: Sequence[float], g=0.0) -> "MeasurementPlan":
        return cls(tuple(zip(times, observables)), g)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.steps])

    @property
    def observables(self) -> list[Observable]:
        return [a for _, a in self.steps]

    @property
    def strengths(self) -> np.ndarray:
        if isinstance(self.g, tuple):
            return np.array(self.g)
        return np.full(len(self.steps), self.g)

    @property
    def dim(self) -> int:
        return self.steps[0][1].dim

    def with_strength(self, g) -> "MeasurementPlan":
        return MeasurementPlan(self.steps, g)

    def without(self, index: int) -> "MeasurementPlan":
        """The plan with step `index` removed (the 'never measured' experiment)."""
        if not 0 <= index < len(self.steps):
            raise IndexError(index)
        steps = self.steps[:index] + self.steps[index + 1:]
        g = self.g
        if isinstance(g, tuple):
            g = g[:index] + g[index + 1:]
        return MeasurementPlan(steps, g)


@dataclass
class Quasiprobability:
    """Signed joint distribution over outcome tuples.

    ``weights[i0, i1, ...]`` is the weight of outcomes ``(axes[0][i0], axes[1][i1], ...)``.
    """

    axes: list
    weights: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.axes)

    def total(self) -> float:
        return float(np.sum(self.weights))

    def moment(self, key: Sequence[int] | None = None) -> float:
        """Mixed moment <a_k1 a_k2 ...>; default is the first mixed moment
        <a_0 a_1 ... a_{n-1}>."""
        key = range(self.n_steps) if key is None else key
        w = self.weights
        for k in key:
            shape = [1] * self.n_steps
            shape[k] = -1
            w = w * np.asarray(self.axes[k]).reshape(shape)
        return float(np.sum(w))

    def moments(self, max_order: int = 3) -> dict:
        from .sampling import moment_keys
        return {k: self.moment(k) for k in moment_keys(self.n_steps, max_order)}

    def items(self):
        for idx in np.ndindex(*self.weights.shape):
            yield tuple(float(self.axes[k][i]) for k, i in enumerate(idx)), float(self.weights[idx])

    def as_dict(self, digits: int = 8) -> dict:
        out: dict = {}
        for key, w in self.items():
            key = tuple(round(v, digits) + 0.0 for v in key)
            out[key] = out.get(key, 0.0) + w
        return out

    def min_weight(self) -> float:
        return float(np.min(self.weights)) if self.weights.size else 0.0


def table_distance(q1: Quasiprobability, q2: Quasiprobability) -> float:
    """Max-norm of ``q1 - q2`` over the union of both outcome supports."""
    d1, d2 = q1.as_dict(), q2.as_dict()
    return max((abs(d1.get(k, 0.0) - d2.get(k, 0.0)) for k in set(d1) | set(d2)), default=0.0)


def heisenberg_evolve(a, h, t: float) -> Observable:
    """A(t) = U(t)^† A U(t) with U(t) = exp(-iHt)."""
    a, h = _obs(a), _ham(h)
    u = h.propagator(t)
    return Observable(u.conj().T @ a.matrix @ u)


def thermal_state(h, kT: float) -> DensityMatrix:
    if not kT > 0:
        raise ValueError("kT must be positive")
    h = _ham(h)
    e0 = h.spectrum.eigenvalues[0]
    m = linalg.matrix_function(h.spectrum, lambda x: np.exp(-(x - e0) / kT))
    m = m / np.trace(m).real
    return DensityMatrix(0.5 * (m + m.conj().T))


def _evolved_spectrum(a: Observable, h: Hamiltonian, t: float):
    """Eigenvalues and Heisenberg-evolved spectral projectors of `a` at time `t`."""
    spec = a.spectrum
    u = h.propagator(t)
    proj = np.einsum("ji,ajk,kl->ail", u.conj(), spec.projectors, u)
    return spec.eigenvalues, proj


def _merge_bins(values: np.ndarray, tol: float = BIN_TOL):
    """Sorted unique values (within tol) and the bin index of every input value."""
    order = np.argsort(values, kind="stable")
    labels = np.empty(len(values), dtype=int)
    uniq: list[float] = []
    for i in order:
        if uniq and values[i] - uniq[-1] <= tol:
            labels[i] = len(uniq) - 1
        else:
            uniq.append(float(values[i]))
            labels[i] = len(uniq) - 1
    return np.array(uniq), labels


def _check_size(shape, extra: int):
    if int(np.prod(shape)) * extra > MAX_TABLE_ELEMENTS:
        raise PlanError("outcome table too large for dense evaluation")


def quasiprob(plan: MeasurementPlan, rho, h) -> Quasiprobability:
    """Joint quasiprobability of the plan's outcomes for initial state `rho`."""
    rho, h = _rho(rho), _ham(h)
    if rho.dim != plan.dim or h.dim != plan.dim:
        raise PlanError("state, Hamiltonian and observables must share a dimension")
    d = plan.dim
    x = rho.matrix[None, :, :]
    axes: list[np.ndarray] = []
    n = len(plan)
    for k, ((t, a), g) in enumerate(zip(plan.steps, plan.strengths)):
        lam, proj = _evolved_spectrum(a, h, t)
        if k == n - 1:
            w = np.einsum("aij,bji->ba", proj, x).real
            axes.append(lam)
            shape = [len(ax) for ax in axes]
            return Quasiprobability(axes, w.reshape(shape))
        if g == 0.0:
            _check_size(x.shape[:1] + (len(lam),), d * d)
            x = 0.5 * (np.einsum("aij,bjk->baik", proj, x) + np.einsum("bij,ajk->baik", x, proj))
            x = x.reshape(-1, d, d)
            axes.append(lam)
        else:
            mids = 0.5 * (lam[:, None] + lam[None, :])
            damp = np.exp(-(g ** 2) * (lam[:, None] - lam[None, :]) ** 2 / 8.0)
            centers, labels = _merge_bins(mids.ravel())
            _check_size(x.shape[:1] + (len(centers),), d * d)
            blocks = np.einsum("aij,bjk,ckl->bacil", proj, x, proj)
            blocks = blocks * damp[None, :, :, None, None]
            blocks = blocks.reshape(x.shape[0], -1, d, d)
            new = np.zeros((x.shape[0], len(centers), d, d), dtype=np.complex128)
            for pair, lbl in enumerate(labels):
                new[:, lbl] += blocks[:, pair]
            x = new.reshape(-1, d, d)
            axes.append(centers)
    raise AssertionError("unreachable")


def weak_moment(plan: MeasurementPlan, rho, h) -> float:
    """Tr rho {A_1(t_1), {A_2(t_2), ... {A_{n-1}, A_n}}} / 2^(n-1)."""
    rho, h = _rho(rho), _ham(h)
    ops = [heisenberg_evolve(a, h, t).matrix for t, a in plan.steps]
    m = ops[-1]
    for op in reversed(ops[:-1]):
        m = 0.5 * linalg.anticommutator(op, m)
    return float(np.trace(rho.matrix @ m).real)


def marginalize(q: Quasiprobability, step_index: int) -> Quasiprobability:
    """Sum out one step of the table."""
    if not 0 <= step_index < q.n_steps:
        raise IndexError(f"step index {step_index} out of range for {q.n_steps} steps")
    axes = q.axes[:step_index] + q.axes[step_index + 1:]
    return Quasiprobability(axes, np.sum(q.weights, axis=step_index))


def disturbance(plan: MeasurementPlan, rho, h, index: int) -> float:
    """Max-norm difference between the table with step `index` summed out and
    the table of the plan that never performs that step."""
    marginal = marginalize(quasiprob(plan, rho, h), index)
    return table_distance(marginal, quasiprob(plan.without(index), rho, h))


def time_reversed_quasiprob(plan: MeasurementPlan, rho, h) -> Quasiprobability:
    """Quasiprobability of the time-reversed experiment, axes in forward order.

    Time reversal is complex conjugation in the computational basis: the
    reversed run starts from ``rho*``, evolves with ``H*`` and measures
    ``A_k*`` at times ``-t_k`` in reversed order.
    """
    rho, h = _rho(rho), _ham(h)
    steps = tuple((-t, a.conj()) for t, a in reversed(plan.steps))
    g = plan.g[::-1] if isinstance(plan.g, tuple) else plan.g
    rev = quasiprob(MeasurementPlan(steps, g), rho.conj(), h.conj())
    n = rev.n_steps
    return Quasiprobability(rev.axes[::-1], np.transpose(rev.weights, tuple(range(n - 1, -1, -1))))


def asymmetry(plan: MeasurementPlan, rho, h) -> float:
    """Delta_T: max-norm distance between forward and aligned reversed tables."""
    return table_distance(quasiprob(plan, rho, h), time_reversed_quasiprob(plan, rho, h))


def compatibility_check(plan: MeasurementPlan, h) -> bool:
    h = _ham(h)
    ops = [heisenberg_evolve(a, h, t).matrix for t, a in plan.steps]
    for a, b in combinations(ops, 2):
        scale = linalg.frobenius(a) * linalg.frobenius(b)
        if linalg.frobenius(linalg.commutator(a, b)) > 1e-9 * scale:
            return False
    return True


def smoothed_observable(a, h, times: Sequence[float], weights: Sequence[float]) -> Observable:
    """Time-smeared observable ``sum_j w_j A(t_j)``.

    `weights` are quadrature weights ``f(t_j) dt`` of the switching function
    and must sum to 1.
    """
    a, h = _obs(a), _ham(h)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if times.size == 0:
        raise ValueError("empty window")
    if times.shape != weights.shape:
        raise ValueError("times and weights must have the same length")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("window weights must sum to 1")
    evals, vecs = np.linalg.eigh(h.matrix)
    # A(t) in the energy basis: A_mn exp(i (E_m - E_n) t)
    a_e = vecs.conj().T @ a.matrix @ vecs
    phase = np.exp(1j * np.subtract.outer(evals, evals)[None] * times[:, None, None])
    smeared = np.einsum("j,jmn->mn", weights, phase) * a_e
    return Observable(vecs @ smeared @ vecs.conj().T)


def gaussian_window(width: float, n_points: int = 201, span: float = 5.0):
    """Symmetric Gaussian switching function of standard deviation `width`,
    as (times, quadrature weights).  ``width == 0`` gives the instant window."""
    if width <= 0:
        return np.array([0.0]), np.array([1.0])
    t = np.linspace(-span * width, span * width, n_points)
    w = np.exp(-0.5 * (t / width) ** 2)
    return t, w / w.sum()


# ---------------------------------------------------------------------------
# Monte Carlo with the Gaussian Kraus detector


@dataclass(frozen=True)
class DetectorSpec:
    """Gaussian detector state ~ exp(-q^2/2 alpha - p^2/2 beta).

    ``sigma_q``/``sigma_p`` are the position/momentum variances seen under a
    projective readout.  The simulator itself uses the pure-Gaussian pointer
    with unit position variance; this class documents the general case.
    """

    alpha: float
    beta: float
    sigma_q: float
    sigma_p: float

    @classmethod
    def from_gaussian(cls, alpha: float, beta: float, hbar: float = 1.0) -> "DetectorSpec":
        if alpha <= 0 or beta <= 0:
            raise ValueError("alpha and beta must be positive")
        x = np.sqrt(hbar ** 2 / (4 * alpha * beta))
        coth = 1.0 / np.tanh(x)
        return cls(alpha, beta, 0.5 * hbar * np.sqrt(alpha / beta) * coth,
                   0.5 * hbar * np.sqrt(beta / alpha) * coth)


def kraus_operator(a, g: float, outcome: float) -> np.ndarray:
    """K_g(outcome) = (g^2/2pi)^(1/4) exp(-g^2 (A - outcome)^2 / 4)."""
    a = _obs(a)
    return linalg.matrix_function(
        a.spectrum, lambda x: (g * g / (2 * np.pi)) ** 0.25 * np.exp(-g * g * (x - outcome) ** 2 / 4))


def sample_sequence(plan: MeasurementPlan, rho, h, n_samples: int, seed: int,
                    workers: int = 1) -> SampleBatch:
    """Draw detector readings for repeated runs of the plan with Kraus updates.

    Each reading is drawn exactly from the Gaussian mixture
    ``sum_i p_i N(lambda_i, 1/g^2)`` and the state is then updated with the
    Kraus operator of that reading.
    """
    rho, h = _rho(rho), _ham(h)
    strengths = plan.strengths
    if np.any(strengths <= 0):
        raise PlanError("Monte Carlo sampling needs g > 0 on every step")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    steps = []
    for (t, a), g in zip(plan.steps, strengths):
        lam, _ = _evolved_spectrum(a, h, t)
        u = h.propagator(t)
        spec = a.spectrum
        vecs = np.concatenate(spec.vectors, axis=1)
        vals = np.concatenate([np.full(v.shape[1], lam[i]) for i, v in enumerate(spec.vectors)])
        steps.append((u.conj().T @ vecs, vals, g))
    rho0 = rho.matrix

    def run_chunk(chunk: int, lo: int, hi: int) -> np.ndarray:
        m = hi - lo
        r = np.broadcast_to(rho0, (m,) + rho0.shape).copy()
        out = np.empty((m, len(steps)))
        for k, (v, vals, g) in enumerate(steps):
            gen = stream(seed, chunk, k)
            u = gen.random(m)
            z = gen.standard_normal(m)
            re = np.einsum("ji,bjk,kl->bil", v.conj(), r, v)
            p = np.clip(np.einsum("bii->bi", re).real, 0.0, None)
            cdf = np.cumsum(p, axis=1)
            cdf /= cdf[:, -1:]
            comp = np.minimum((u[:, None] > cdf).sum(axis=1), len(vals) - 1)
            outcome = vals[comp] + z / g
            kr = np.exp(-g * g * (vals[None, :] - outcome[:, None]) ** 2 / 4.0)
            re = re * kr[:, :, None] * kr[:, None, :]
            re /= np.einsum("bii->b", re).real[:, None, None]
            r = np.einsum("ij,bjk,lk->bil", v, re, v.conj())
            out[:, k] = outcome
        return out

    outcomes = map_chunks(run_chunk, n_samples, workers, CHUNK_SIZE)
    g_out = float(strengths[0]) if np.all(strengths == strengths[0]) else tuple(strengths)
    return SampleBatch(outcomes, g_out, seed, noise_var=1.0 / strengths ** 2)


def deconvolve_moments(batch: SampleBatch) -> MomentTable:
    """Mixed moments (order <= 3) of Q_g from raw readings."""
    if batch.n_samples < 2:
        raise ValueError("need at least 2 samples")
    return gaussian_deconvolved_moments(batch.outcomes, batch.noise_var)
