import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from wmsim import linalg, models, quantum as Q
from wmsim.linalg import pauli

X, Y, Z = pauli()
I2 = np.eye(2)


def random_plan(seed, n_steps, g=0.0):
    r = np.random.default_rng(seed)
    dim = int(r.choice([2, 3]))
    h = linalg.random_hermitian(dim, r)
    obs = [linalg.random_hermitian(dim, r) for _ in range(n_steps)]
    times = np.sort(r.uniform(-2, 2, n_steps))
    return Q.MeasurementPlan.of(obs, times, g), linalg.random_density(dim, r), h


plan_seeds = st.integers(0, 2 ** 32 - 1)


# ----------------------------------------------------------------- types


def test_type_validation():
    with pytest.raises(linalg.LinalgError):
        Q.Observable(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        Q.DensityMatrix(np.diag([0.7, 0.7]))
    with pytest.raises(ValueError):
        Q.DensityMatrix(np.diag([1.2, -0.2]))
    with pytest.raises(Q.PlanError):
        Q.MeasurementPlan.of([Z, Z], [1.0, 0.0])
    with pytest.raises(Q.PlanError):
        Q.MeasurementPlan.of([], [])
    with pytest.raises(Q.PlanError):
        Q.MeasurementPlan.of([Z, Z], [0, 1], g=-1)


def test_observable_spectrum_reconstructs(rng):
    m = linalg.random_hermitian(5, rng)
    a = Q.Observable(m)
    assert np.linalg.norm(a.spectrum.reconstruct() - m) <= 1e-9 * np.linalg.norm(m)


# ----------------------------------------------------------------- evolution and states


def test_heisenberg_identity(rng):
    h = linalg.random_hermitian(3, rng)
    assert np.allclose(Q.heisenberg_evolve(np.eye(3), h, 1.7).matrix, np.eye(3), atol=1e-13)


def test_heisenberg_commuting():
    assert np.allclose(Q.heisenberg_evolve(Z, 2 * Z, 0.9).matrix, Z, atol=1e-14)


def test_heisenberg_series_oracle():
    t = 0.3
    u = np.eye(2, dtype=complex)
    term = np.eye(2, dtype=complex)
    for k in range(1, 40):
        term = term @ (-1j * t * Z) / k
        u = u + term
    ref = u.conj().T @ X @ u
    out = Q.heisenberg_evolve(X, Z, t).matrix
    assert np.max(np.abs(out - ref)) < 1e-10
    assert np.linalg.norm(out - out.conj().T) < 1e-10


def test_thermal_high_temperature(rng):
    h = linalg.random_hermitian(4, rng)
    rho = Q.thermal_state(h, 1e9 * np.linalg.norm(h))
    assert np.allclose(rho.matrix, np.eye(4) / 4, atol=1e-6)


def test_thermal_two_level():
    eps, kT = 0.8, 0.3
    rho = Q.thermal_state(np.diag([eps, -eps]), kT)
    assert abs(rho.expect(Z) + np.tanh(eps / kT)) < 1e-12


def test_thermal_random_is_state(rng):
    rho = Q.thermal_state(linalg.random_hermitian(5, rng), 0.7)
    assert abs(np.trace(rho.matrix) - 1) < 1e-12
    assert np.linalg.eigvalsh(rho.matrix).min() > -1e-12


def test_thermal_rejects_nonpositive():
    with pytest.raises(ValueError):
        Q.thermal_state(Z, 0.0)


# ----------------------------------------------------------------- quasiprobability


def superop_oracle(rho, h, obs, times):
    """Dense-superoperator evaluation of the weak-limit table on a qubit.

    Projectors of a Pauli-like A(t) are (I +- A(t))/2 computed from scipy's
    expm; each Jordan superoperator is the 4x4 matrix (I (x) P + P^T (x) I)/2
    acting on column-stacked vectors.
    """
    vec = rho.reshape(-1, order="F")
    tables = [vec]
    for k, (a, t) in enumerate(zip(obs, times)):
        u = scipy.linalg.expm(-1j * h * t)
        at = u.conj().T @ a @ u
        projs = [(I2 - at) / 2, (I2 + at) / 2]  # eigenvalues -1, +1
        new = []
        for v in tables:
            for p in projs:
                if k == len(obs) - 1:
                    x = v.reshape(2, 2, order="F")
                    new.append(np.trace(p @ x).real)
                else:
                    sup = 0.5 * (np.kron(I2, p) + np.kron(p.T, I2))
                    new.append(sup @ v)
        tables = new
    return np.array(tables).reshape([2] * len(obs))


def test_dense_superoperator_oracle(dwell):
    p, h, z, rho = dwell
    times = [0.0, 1.0, 2.0]
    q = Q.quasiprob(models.dwell_plan(times), rho, h)
    ref = superop_oracle(rho.matrix, h.matrix, [Z, Z, Z], times)
    assert [ax.tolist() for ax in q.axes] == [[-1.0, 1.0]] * 3
    assert np.max(np.abs(q.weights - ref)) < 1e-10
    assert q.min_weight() < 0


def _a8_oracle(a_mat, x, g, readings, n=1601):
    """Detector-convolved quasi-density of one finite-g step by direct quadrature.

    The xi-integral carries the detector's Fourier factor exp(-xi^2/2g^2), the
    phi-integral the Gaussian weight of variance g^2/4; both are done with
    the trapezoid rule and the exponentials with scipy's expm.
    """
    xi = np.linspace(-12 * g, 12 * g, n)
    phi = np.linspace(-6 * g, 6 * g, n)
    wphi = np.exp(-2 * phi ** 2 / g ** 2) / np.sqrt(np.pi * g ** 2 / 2) * (phi[1] - phi[0])
    inner = sum(w * scipy.linalg.expm(1j * f * a_mat) @ x @ scipy.linalg.expm(-1j * f * a_mat)
                for f, w in zip(phi, wphi))
    halves = [scipy.linalg.expm(0.5j * s * a_mat) for s in xi]
    out = []
    for a in readings:
        wxi = np.exp(-1j * xi * a - xi ** 2 / (2 * g ** 2)) * (xi[1] - xi[0]) / (2 * np.pi)
        out.append(sum(w * e @ inner @ e for w, e in zip(wxi, halves)))
    return out


def _closed_form(a_mat, x, g, readings):
    spec = linalg.hermitian_eigen(a_mat)
    lam, proj = spec.eigenvalues, spec.projectors
    out = []
    for a in readings:
        m = np.zeros_like(x, dtype=complex)
        for i in range(len(lam)):
            for j in range(len(lam)):
                mid = 0.5 * (lam[i] + lam[j])
                damp = np.exp(-g ** 2 * (lam[i] - lam[j]) ** 2 / 8)
                d = np.sqrt(g ** 2 / (2 * np.pi)) * np.exp(-g ** 2 * (a - mid) ** 2 / 2)
                m += damp * d * proj[i] @ x @ proj[j]
        out.append(m)
    return out


@pytest.mark.parametrize("g", [0.5, 1.3])
def test_finite_g_closed_form_against_quadrature(rng, g):
    a_mat = linalg.random_hermitian(2, rng)
    x = linalg.random_density(2, rng)
    readings = [-1.5, -0.2, 0.4, 1.9]
    for num, exact in zip(_a8_oracle(a_mat, x, g, readings), _closed_form(a_mat, x, g, readings)):
        assert np.max(np.abs(num - exact)) < 1e-10


def test_finite_g_table_matches_quadrature(rng):
    # two-step plan: finite-g step on A, final projective readout of Z
    g = 0.8
    a_mat = linalg.random_hermitian(2, rng)
    rho = linalg.random_density(2, rng)
    q = Q.quasiprob(Q.MeasurementPlan(((0.0, a_mat), (0.0, Z)), (g, 0.0)), rho, Z)
    readings = [-1.0, 0.3, 1.2]
    dens = _a8_oracle(a_mat, rho, g, readings)
    for a, m in zip(readings, dens):
        for ib, pb in enumerate([(I2 - Z) / 2, (I2 + Z) / 2]):
            pred = sum(q.weights[ic, ib] * np.sqrt(g ** 2 / (2 * np.pi)) * np.exp(-g ** 2 * (a - c) ** 2 / 2)
                       for ic, c in enumerate(q.axes[0]))
            assert abs(np.trace(pb @ m).real - pred) < 1e-10


def test_single_step_born_rule(rng):
    rho = linalg.random_density(3, rng)
    a = linalg.random_hermitian(3, rng)
    for g in (0.0, 0.3, 2.0):
        q = Q.quasiprob(Q.MeasurementPlan.of([a], [0.0], g), rho, np.zeros((3, 3)))
        spec = linalg.hermitian_eigen(a)
        born = [np.trace(p @ rho).real for p in spec.projectors]
        assert np.allclose(q.weights, born, atol=1e-12)
        assert q.min_weight() >= -1e-10


def test_compatible_plan_independent_of_g(rng):
    d = np.diag([1.0, -0.5, 2.0])
    h = np.diag([0.3, 1.1, -0.7])
    rho = linalg.random_density(3, rng)
    plan = Q.MeasurementPlan.of([d, d ** 2, d], [0.0, 0.5, 2.0])
    ref = Q.quasiprob(plan, rho, h)
    assert ref.min_weight() >= -1e-10
    for g in (0.2, 1.0, 3.0):
        q = Q.quasiprob(plan.with_strength(g), rho, h)
        assert Q.table_distance(q, ref) < 1e-10
        assert q.min_weight() >= -1e-10


@settings(max_examples=40, deadline=None)
@given(plan_seeds, st.integers(1, 4), st.sampled_from([0.0, 0.2, 1.0]))
def test_normalization(seed, n, g):
    plan, rho, h = random_plan(seed, n, g)
    assert abs(Q.quasiprob(plan, rho, h).total() - 1) < 1e-9


@settings(max_examples=40, deadline=None)
@given(plan_seeds, st.integers(1, 4))
def test_weak_moment_equals_first_mixed_moment(seed, n):
    plan, rho, h = random_plan(seed, n)
    assert abs(Q.weak_moment(plan, rho, h) - Q.quasiprob(plan, rho, h).moment()) < 1e-9


@settings(max_examples=40, deadline=None)
@given(plan_seeds, st.integers(2, 4), st.floats(0.05, 3.0))
def test_last_measurement_strong(seed, n, g_last):
    plan, rho, h = random_plan(seed, n)
    strong = Q.MeasurementPlan(plan.steps, (0.0,) * (n - 1) + (g_last,))
    assert Q.table_distance(Q.quasiprob(strong, rho, h), Q.quasiprob(plan, rho, h)) < 1e-10


def test_decreasing_times_rejected():
    with pytest.raises(Q.PlanError):
        Q.MeasurementPlan.of([Z, X], [2.0, 1.0])


def test_weak_moment_small_cases(rng):
    rho = Q.DensityMatrix(linalg.random_density(3, rng))
    a, b = linalg.random_hermitian(3, rng), linalg.random_hermitian(3, rng)
    h = np.zeros((3, 3))
    assert abs(Q.weak_moment(Q.MeasurementPlan.of([a], [0]), rho, h) - rho.expect(a)) < 1e-12
    ab = Q.weak_moment(Q.MeasurementPlan.of([a, b], [0, 0]), rho, h)
    ba = Q.weak_moment(Q.MeasurementPlan.of([b, a], [0, 0]), rho, h)
    assert abs(ab - np.trace((a @ b + b @ a) @ rho.matrix).real / 2) < 1e-12
    assert abs(ab - ba) < 1e-12


# ----------------------------------------------------------------- marginals and disturbance


def test_marginal_weak_limit_example():
    rho = Q.thermal_state(Z + 0.4 * X, 0.5)
    h = 0.7 * X + 0.2 * Z
    plan = Q.MeasurementPlan.of([Z, X, Z], [0.0, 1.0, 2.0])
    q = Q.quasiprob(plan, rho, h)
    assert Q.table_distance(Q.marginalize(q, 2), Q.quasiprob(plan.without(2), rho, h)) < 1e-10


def test_marginal_of_single_step(rng):
    q = Q.quasiprob(Q.MeasurementPlan.of([Z], [0.0]), linalg.random_density(2, rng), Z)
    m = Q.marginalize(q, 0)
    assert m.as_dict() == {(): pytest.approx(1.0, abs=1e-12)}


def test_marginal_bad_index(rng):
    q = Q.quasiprob(Q.MeasurementPlan.of([Z], [0.0]), linalg.random_density(2, rng), Z)
    with pytest.raises(IndexError):
        Q.marginalize(q, 1)


@settings(max_examples=40, deadline=None)
@given(plan_seeds, st.integers(2, 4), st.integers(0, 3))
def test_noninvasive_weak_limit(seed, n, k):
    plan, rho, h = random_plan(seed, n)
    k = k % n
    assert Q.disturbance(plan, rho, h, k) < 1e-10


def test_disturbance_quadratic_ratio(dwell):
    p, h, z, rho = dwell
    d = [Q.disturbance(models.dwell_plan((0.0, 1.0, 3.0), g), rho, h, 1) for g in (0.4, 0.2)]
    assert abs(d[0] / d[1] - 4) < 0.15 * 4


# ----------------------------------------------------------------- time reversal


@settings(max_examples=40, deadline=None)
@given(plan_seeds)
def test_two_step_time_symmetry(seed):
    plan, rho, h = random_plan(seed, 2)
    assert Q.asymmetry(plan, rho, h) < 1e-10


def test_compatible_plan_time_symmetric(rng):
    d = np.diag([1.0, -0.5, 2.0]).astype(complex)
    h = np.diag([0.3, 1.1, -0.7])
    rho = Q.thermal_state(h, 0.4)
    plan = Q.MeasurementPlan.of([d, d, d @ d], [0.0, 0.4, 2.0])
    assert Q.compatibility_check(plan, h)
    assert Q.asymmetry(plan, rho, h) < 1e-10


def test_witness_moments(dwell):
    p, h, z, rho = dwell
    plan = models.dwell_plan((0.0, 1.0, 3.0))
    fwd = Q.quasiprob(plan, rho, h).moment()
    rev = Q.time_reversed_quasiprob(plan, rho, h).moment()
    assert abs(fwd - p.alpha_c * (1 + np.cos(2 * 2 * p.Delta))) < 1e-10
    assert abs(rev - p.alpha_c * (1 + np.cos(2 * 1 * p.Delta))) < 1e-10
    assert abs(fwd - rev) > 0.1


def test_compatibility_examples():
    assert Q.compatibility_check(Q.MeasurementPlan.of([Z, Z, Z], [0, 1, 2]), 3 * Z)
    assert not Q.compatibility_check(Q.MeasurementPlan.of([Z, X], [0, 0]), Z)
    assert not Q.compatibility_check(Q.MeasurementPlan.of([Z, Z], [0, 1]), Z + X)


# ----------------------------------------------------------------- smoothing


def test_single_point_window():
    out = Q.smoothed_observable(Z, Z + X, [0.8], [1.0])
    assert np.allclose(out.matrix, Q.heisenberg_evolve(Z, Z + X, 0.8).matrix, atol=1e-13)


def test_wide_window_nearly_commutes(dwell):
    p, h, z, rho = dwell
    t, w = Q.gaussian_window(10 / p.Delta)
    xs = Q.smoothed_observable(X, h, t, w).matrix
    comm = np.linalg.norm(xs @ h.matrix - h.matrix @ xs)
    assert comm < 0.05 * np.linalg.norm(X) * np.linalg.norm(h.matrix)


def test_window_ladder_monotone(dwell):
    p, h, z, rho = dwell
    deltas = []
    for width in (0.0, 0.3, 0.8, 1.5):
        t, w = Q.gaussian_window(width / p.Delta)
        obs = [Q.smoothed_observable(z, h, tk + t, w) for tk in (0.0, 1.0, 3.0)]
        deltas.append(Q.asymmetry(Q.MeasurementPlan.of(obs, [0, 0, 0]), rho, h))
    assert all(b < a for a, b in zip(deltas, deltas[1:]))


def test_window_validation():
    with pytest.raises(ValueError):
        Q.smoothed_observable(Z, Z, [], [])
    with pytest.raises(ValueError):
        Q.smoothed_observable(Z, Z, [0, 1], [0.5, 0.6])


# ----------------------------------------------------------------- detector and sampling


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_detector_uncertainty(alpha, beta):
    d = Q.DetectorSpec.from_gaussian(alpha, beta)
    assert d.sigma_q * d.sigma_p >= 0.25 - 1e-12


def test_kraus_completeness():
    a = np.diag([-1.0, 0.5])
    grid = np.linspace(-40, 40, 20001)
    acc = sum(Q.kraus_operator(a, 0.7, x).conj().T @ Q.kraus_operator(a, 0.7, x) for x in grid)
    acc *= grid[1] - grid[0]
    assert np.allclose(acc, np.eye(2), atol=1e-10)


def test_sampler_single_step_mean_and_variance(rng):
    g = 0.5
    a = linalg.random_hermitian(3, rng)
    rho = Q.DensityMatrix(linalg.random_density(3, rng))
    batch = Q.sample_sequence(Q.MeasurementPlan.of([a], [0.0], g), rho, np.zeros((3, 3)), 400_000, 11)
    q = batch.outcomes[:, 0]
    mean = rho.expect(a)
    var_q = rho.expect(a @ a) - mean ** 2
    assert abs(q.mean() - mean) < 5 * q.std() / np.sqrt(q.size)
    # standard error of the sample variance from the fourth central moment
    c = q - q.mean()
    se_var = np.sqrt((np.mean(c ** 4) - np.mean(c ** 2) ** 2) / q.size)
    assert abs(q.var(ddof=1) - (var_q + 1 / g ** 2)) < 5 * se_var


def test_sampler_commuting_two_step_convolution():
    g = 0.6
    d = np.diag([1.0, -1.0, 0.5])
    e = np.diag([0.2, 0.9, -1.0])
    rho = Q.thermal_state(np.diag([0.1, 0.4, -0.3]), 0.5)
    plan = Q.MeasurementPlan.of([d, e], [0.0, 1.0], g)
    h = np.diag([0.3, -0.2, 0.0])
    batch = Q.sample_sequence(plan, rho, h, 400_000, 5)
    q = Q.quasiprob(plan, rho, h)
    v = 1 / g ** 2
    # noisy moments predicted by convolving the positive table with N(0, 1/g^2)
    pred = {(0,): q.moment([0]), (1,): q.moment([1]), (0, 1): q.moment([0, 1]),
            (0, 0): q.moment([0, 0]) + v, (1, 1): q.moment([1, 1]) + v,
            (0, 0, 1): q.moment([0, 0, 1]) + v * q.moment([1])}
    for key, target in pred.items():
        terms = np.prod([batch.outcomes[:, k] for k in key], axis=0)
        assert abs(terms.mean() - target) < 5 * terms.std() / np.sqrt(terms.size)


def test_sampler_reproducible_across_workers(dwell):
    p, h, z, rho = dwell
    plan = models.dwell_plan((0.0, 1.0, 3.0), 0.3)
    a = Q.sample_sequence(plan, rho, h, 150_000, 99, workers=1).outcomes
    b = Q.sample_sequence(plan, rho, h, 150_000, 99, workers=3).outcomes
    assert np.array_equal(a, b)
    c = Q.sample_sequence(plan, rho, h, 150_000, 100).outcomes
    assert not np.array_equal(a, c)


def test_sampler_requires_positive_g(dwell):
    p, h, z, rho = dwell
    with pytest.raises(Q.PlanError):
        Q.sample_sequence(models.dwell_plan((0, 1, 3), 0.0), rho, h, 10, 1)


def test_deconvolution_small_cases(rng):
    q = rng.normal(size=(100, 2))
    batch = Q.SampleBatch(q, 0.5, 0, 1 / 0.25)
    m = Q.deconvolve_moments(batch)
    assert m[(0,)] == np.mean(q[:, 0])
    assert np.isclose(m[(1, 1)], np.mean(q[:, 1] ** 2) - 4.0)
    with pytest.raises(ValueError):
        Q.deconvolve_moments(Q.SampleBatch(q[:1], 0.5, 0, 4.0))


def test_deconvolved_third_moment_matches_closed_form(dwell):
    p, h, z, rho = dwell
    batch = Q.sample_sequence(models.dwell_plan((0.0, 1.0, 3.0), 0.3), rho, h, 1_000_000, 2024,
                              workers=4)
    m = Q.deconvolve_moments(batch)
    assert abs(m[(0, 1, 2)] - models.dwell_corr_analytic(p, 0.0, 1.0, 3.0)) < 5 * m.error((0, 1, 2))


@settings(max_examples=10, deadline=None)
@given(plan_seeds, st.integers(1, 3), st.sampled_from([0.5, 1.0]))
def test_sampler_matches_quasiprob_moments(seed, n, g):
    plan, rho, h = random_plan(seed, n, g)
    batch = Q.sample_sequence(plan, rho, h, 100_000, seed)
    m = Q.deconvolve_moments(batch)
    q = Q.quasiprob(plan, rho, h)
    for key in m.keys():
        assert abs(m[key] - q.moment(list(key))) < 5 * m.error(key) + 1e-12
