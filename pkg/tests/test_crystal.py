import math

import numpy as np
import pytest
import scipy.constants as sc
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize
from scipy.spatial.distance import pdist, squareform

from ringqc import crystal as C
from ringqc.budget import ion_spacing
from ringqc.physcore import TWO_PI, load_species

CA = load_species("Ca-40")
WZ = TWO_PI * 1e6


def trap(ax, ay, wz=WZ):
    return C.TrapPotential(ax * wz, ay * wz, wz, CA.mass)


def brute_force_energy(n, aniso, starts=50, seed=0):
    """Lowest scaled energy over random BFGS starts, using pdist rather than the module kernels."""
    rng = np.random.default_rng(seed)
    a2 = np.asarray(aniso, float) ** 2

    def f(flat):
        r = flat.reshape(n, 3)
        d = pdist(r)
        e = 0.5 * (a2 * r**2).sum() + (1 / d).sum()
        diff = r[:, None, :] - r[None, :, :]
        dm = squareform(d)
        np.fill_diagonal(dm, np.inf)
        return e, (a2 * r - (diff / dm[..., None] ** 3).sum(1)).ravel()

    best = np.inf
    for _ in range(starts):
        x0 = rng.normal(scale=n ** (1 / 3), size=3 * n)
        res = minimize(f, x0, jac=True, method="BFGS", options={"gtol": 1e-10, "maxiter": 10000})
        best = min(best, res.fun)
    return best


def numeric_hessian_si(positions, t, h=1e-4):
    """Central-difference Hessian of the SI potential energy; step is h times the spacing."""
    k = 1.0 / (4 * math.pi * sc.epsilon_0)
    w2 = np.array([t.omega_x, t.omega_y, t.omega_z]) ** 2
    step = h * ion_spacing(t.mass, t.omega_z)

    def u(flat):
        r = flat.reshape(-1, 3)
        return 0.5 * t.mass * (w2 * r**2).sum() + k * t.charge**2 * (1 / pdist(r)).sum()

    x = positions.ravel()
    n = x.size
    hess = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            def at(si, sj):
                y = x.copy()
                y[i] += si * step
                y[j] += sj * step
                return u(y)
            hess[i, j] = hess[j, i] = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * step**2)
    return hess


def test_two_ion_spacing_matches_closed_form():
    st_ = C.solve_equilibrium(trap(3, 3.2), 2)
    d = np.linalg.norm(st_.positions[0] - st_.positions[1])
    assert d == pytest.approx(ion_spacing(CA, WZ), rel=1e-9)


def test_three_ion_axial_spectrum():
    t = trap(5, 5.5)
    state = C.solve_equilibrium(t, 3)
    spec = C.phonon_modes(state)
    axial = np.sort(spec.branch("axial")) / WZ
    expected = np.sqrt([1.0, 3.0, 29.0 / 5.0])
    assert axial == pytest.approx(expected, rel=1e-9)
    # independent finite-difference Hessian
    lam = np.linalg.eigvalsh(numeric_hessian_si(state.positions, t) / t.mass)
    oracle = np.sqrt(np.sort(lam)[:3]) / WZ
    assert axial == pytest.approx(oracle, rel=1e-6)


@pytest.mark.parametrize("aniso,n", [((3, 3.2, 1), 7), ((1.3, 2.0, 1), 9), ((1.05, 1.1, 1), 11)])
def test_equilibrium_is_global_minimum(aniso, n):
    state = C.solve_equilibrium(trap(aniso[0], aniso[1]), n)
    e = state.potential_energy / state.trap.energy_scale
    assert e == pytest.approx(brute_force_energy(n, aniso, starts=20), rel=1e-6)


def test_solution_is_deterministic():
    a = C.solve_equilibrium(trap(1.3, 2.0), 10)
    b = C.solve_equilibrium(trap(1.3, 2.0), 10)
    assert np.array_equal(a.positions, b.positions)


@given(ax=st.floats(1.2, 6.0), dy=st.floats(0.0, 1.0), n=st.integers(2, 8))
@settings(max_examples=25, deadline=None)
def test_equilibrium_invariants(ax, dy, n):
    t = trap(ax, ax + dy)
    state = C.solve_equilibrium(t, n)
    r = state.positions / t.length_scale
    # force balance, Newton's third law and a centred crystal
    assert np.abs(C.gradient(r, t.aniso)).max() < 1e-8
    assert np.abs(C.coulomb_forces(r).sum(axis=0)).max() < 1e-9 * max(1.0, np.abs(C.coulomb_forces(r)).max())
    assert np.abs(r.mean(axis=0)).max() < 1e-8
    spec = C.phonon_modes(state)
    assert spec.hessian_asymmetry < 1e-12
    # centre-of-mass modes sit exactly at the trap frequencies
    for w in (t.omega_x, t.omega_y, t.omega_z):
        assert np.min(np.abs(spec.frequencies - w)) < 1e-7 * w
    v = spec.eigenvectors
    assert np.allclose(v.T @ v, np.eye(3 * n), atol=1e-10)


@given(alpha=st.floats(0.2, 5.0))
@settings(max_examples=15, deadline=None)
def test_scaling_law(alpha):
    t = trap(2.0, 2.5)
    base = C.solve_equilibrium(t, 6)
    scaled = C.solve_equilibrium(t.scaled(alpha), 6)
    assert np.allclose(scaled.positions, base.positions * alpha ** (-2 / 3), rtol=0, atol=1e-9 * t.length_scale)
    f0 = C.phonon_modes(base).frequencies
    f1 = C.phonon_modes(scaled).frequencies
    assert f1 == pytest.approx(alpha * f0, rel=1e-8)


def test_linear_chain_modes_decouple():
    state = C.solve_equilibrium(trap(10, 11), 8)
    assert state.is_linear()
    spec = C.phonon_modes(state)
    w = spec.axial_weight
    assert np.all((w < 1e-12) | (w > 1 - 1e-12))
    assert len(spec.branch("axial")) == len(spec.branch("x")) == len(spec.branch("y")) == 8
    # breathing mode
    assert np.min(np.abs(spec.branch("axial") - math.sqrt(3) * WZ)) < 1e-8 * WZ


def test_equal_masses_leave_modes_unchanged():
    state = C.solve_equilibrium(trap(4, 4.5), 5)
    a = C.phonon_modes(state).frequencies
    b = C.phonon_modes(state, masses=np.full(5, CA.mass)).frequencies
    assert b == pytest.approx(a, rel=1e-12)
    heavy = C.phonon_modes(state, masses=np.r_[np.full(4, CA.mass), 2 * CA.mass]).frequencies
    assert heavy.min() < a.min()


def test_saddle_is_rejected():
    t = trap(1.2, 1.3)
    chain = C.default_seed(6, t) * t.length_scale
    with pytest.raises(C.InstabilityError):
        C.phonon_modes(C.CrystalState(chain * 1.0, 0.0, 0.0, trap=t))


def test_three_ion_zigzag_threshold_is_known_value():
    # a^2 = 12/5 for three ions
    assert C.critical_anisotropy(3) == pytest.approx(math.sqrt(12 / 5), rel=1e-10)


def _transverse_min_eig_oracle(n, alpha):
    """Lowest transverse curvature of the chain from a finite-difference full Hessian."""
    z = minimize(lambda z: 0.5 * z @ z + (1 / pdist(z[:, None])).sum(),
                 np.linspace(-1, 1, n) * n ** 0.6, method="BFGS", options={"gtol": 1e-12}).x
    t = C.TrapPotential(alpha, alpha * 1.0, 1.0, 1.0)
    r = np.zeros((n, 3))
    r[:, 2] = np.sort(z) * t.length_scale
    h = numeric_hessian_si(r, t)
    idx = np.r_[0:3 * n:3]
    return np.linalg.eigvalsh(h[np.ix_(idx, idx)])[0]


@pytest.mark.parametrize("n", [3, 5, 10])
def test_zigzag_flip_and_eigen_scan(n):
    alpha_c = C.critical_anisotropy(n)
    grid = np.linspace(1.0, 10.0, 901)
    signs = np.sign([C.lowest_transverse_eigenvalue(n, a) for a in grid])
    assert np.count_nonzero(np.diff(signs)) == 1
    # independent scan: bracket on a grid, then bisect on the oracle
    vals = np.array([_transverse_min_eig_oracle(n, a) for a in np.linspace(1.0, 6.0, 26)])
    k = np.flatnonzero(np.diff(np.sign(vals)))[0]
    lo, hi = 1.0 + 0.2 * k, 1.0 + 0.2 * (k + 1)
    while hi - lo > 1e-7:
        mid = 0.5 * (lo + hi)
        if _transverse_min_eig_oracle(n, mid) > 0:
            hi = mid
        else:
            lo = mid
    assert alpha_c == pytest.approx(mid, rel=1e-4)


@pytest.mark.parametrize("n", [3, 5, 10])
def test_full_solver_buckles_at_threshold(n):
    alpha_c = C.critical_anisotropy(n)
    above = C.solve_equilibrium(trap(alpha_c * 1.01, alpha_c * 1.2), n)
    below = C.solve_equilibrium(trap(alpha_c * 0.99, alpha_c * 1.2), n)
    assert above.is_linear()
    assert not below.is_linear() and below.is_planar()
    stable, freq = C.zigzag_stability(trap(alpha_c * 0.99, alpha_c * 1.2), n)
    assert not stable and freq < 0


def test_chain_band_extremes_match_dense():
    t = trap(25, 26)
    dense = C.phonon_modes(C.solve_equilibrium(t, 40))
    lo, hi = C.chain_band_extremes(t, 40, "x")
    x = dense.branch("x")
    assert (lo, hi) == pytest.approx((x.min(), x.max()), rel=1e-9)
    lo, hi = C.chain_band_extremes(t, 40, "axial")
    ax = dense.branch("axial")
    assert (lo, hi) == pytest.approx((ax.min(), ax.max()), rel=1e-9)


def test_long_chain_uses_sparse_path():
    t = trap(60, 60)
    lo, hi = C.chain_band_extremes(t, 300, "axial")
    assert lo == pytest.approx(WZ, rel=1e-8)
    assert hi > math.sqrt(3) * WZ
    with pytest.raises(C.InstabilityError):
        C.chain_band_extremes(trap(3, 3), 300)


def test_band_statistics():
    spec = C.phonon_modes(C.solve_equilibrium(trap(10, 11), 6))
    width, mean, smallest = C.band_statistics(spec, "axial")
    ax = np.sort(spec.branch("axial"))
    assert width == pytest.approx(ax[-1] - ax[0])
    assert mean == pytest.approx(width / 5)
    assert 0 < smallest <= mean


def test_input_errors():
    with pytest.raises(ValueError):
        C.solve_equilibrium(trap(2, 2), 0)
    with pytest.raises(ValueError):
        C.solve_equilibrium(trap(2, 2), 3, seed_layout=np.zeros((2, 3)))
    with pytest.raises(ValueError):
        C.TrapPotential(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        C.critical_anisotropy(4, lo=5.0, hi=6.0)


def test_csv_round_trip(tmp_path):
    state = C.solve_equilibrium(trap(3, 3.5), 4)
    spec = C.phonon_modes(state)
    C.write_state_csv(state, tmp_path / "pos.csv")
    C.write_spectrum_csv(spec, tmp_path / "modes.csv", tmp_path / "vecs.npy")
    assert np.array_equal(C.read_spectrum_csv(tmp_path / "modes.csv"), spec.frequencies)
    assert np.array_equal(np.load(tmp_path / "vecs.npy"), spec.eigenvectors)
