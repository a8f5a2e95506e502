import numpy as np
import pytest

from freefock import (
    EnsembleSpec,
    build_oscillator_model,
    build_wave_model,
    dalembert_average,
        estimate_mtcf,
    gaussian_free_moments,
    hydro_moments,
    marginals,
    pinned_ensemble,
    simulate,
)
from freefock.errors import CombinatorialBudget, NotADistribution, ShapeError, TrajectoryDiverged
from freefock.oracle import gaussian_moment_tensors, linear_response, moment_tensor, simulate_wave


@pytest.fixture
def harmonic():
    return build_oscillator_model(omega=1.0, dt=0.05, T=120, lam=0.0)


class TestSimulate:
    def test_harmonic_matches_cosine(self, harmonic):
        traj = simulate(harmonic, pinned_ensemble([1.0, 0.0], samples=1, seed=0))
        t = np.arange(harmonic.T) * harmonic.dt
        err = np.abs(traj.positions[0] - np.cos(t)).max()
        assert err <= 5.0 * harmonic.dt**2

    def test_zero_data_zero_trajectories(self, harmonic):
        traj = simulate(harmonic, pinned_ensemble([0.0, 0.0], samples=3, seed=1))
        assert np.all(traj.positions == 0.0)
        assert np.all(traj.velocities == 0.0)

    def test_seed_reproducibility(self, harmonic):
        ens = EnsembleSpec(mean=[0.0, 0.0], cov=0.1, samples=50, seed=123)
        a = simulate(harmonic, ens)
        b = simulate(harmonic, ens)
        assert a.positions.tobytes() == b.positions.tobytes()
        assert a.velocities.tobytes() == b.velocities.tobytes()

    def test_different_seed_differs(self, harmonic):
        a = simulate(harmonic, EnsembleSpec(mean=[0.0, 0.0], cov=0.1, samples=50, seed=1))
        b = simulate(harmonic, EnsembleSpec(mean=[0.0, 0.0], cov=0.1, samples=50, seed=2))
        assert not np.array_equal(a.positions, b.positions)

    def test_blow_up_detected(self):
        # anti-restoring cubic: the trajectory leaves the resolvable regime
        m = build_oscillator_model(omega=0.0, dt=0.1, T=200, lam=4.0)
        with pytest.raises(TrajectoryDiverged) as info:
            simulate(m, pinned_ensemble([2.0, 1.0], samples=1, seed=0))
        assert info.value.sample_index == 0

    def test_pinned_coordinates_exact(self, harmonic):
        ens = EnsembleSpec(
            mean=[0.7, 0.1], cov=0.2, samples=40, seed=9,
            pinned=np.array([True, False]),
        )
        draws = ens.draw()
        assert np.all(draws[:, 0] == 0.7)
        assert draws[:, 1].std() > 0.0


class TestEstimateMtcf:
    def test_centered_mean_within_three_sigma(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=10, lam=0.0)
        ens = EnsembleSpec(mean=[0.0, 0.0], cov=np.diag([0.09, 0.04]), samples=4000, seed=5)
        table = estimate_mtcf(simulate(m, ens), max_order=1)
        z = np.abs(table.values[1]) / table.stderr[1]
        assert z.max() <= 3.0

    def test_harmonic_two_point_function(self):
        # continuum prediction sigma_x^2 cos cos + (sigma_v/omega)^2 sin sin,
        # up to the integrator's O(dt^2) and the Monte-Carlo error
        omega, dt, T = 1.0, 0.02, 40
        m = build_oscillator_model(omega=omega, dt=dt, T=T, lam=0.0)
        sx, sv = 0.3, 0.2
        ens = EnsembleSpec(mean=[0.0, 0.0], cov=np.diag([sx**2, sv**2]), samples=30000, seed=17)
        table = estimate_mtcf(simulate(m, ens), max_order=2)
        t = np.arange(T) * dt
        pred = sx**2 * np.outer(np.cos(t), np.cos(t)) + (sv / omega) ** 2 * np.outer(
            np.sin(t), np.sin(t)
        )
        bound = 3.0 * table.stderr[2] + 10.0 * dt**2
        assert np.all(np.abs(table.values[2] - pred) <= bound)

    def test_table_is_permutation_symmetric(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=6, lam=0.1)
        ens = EnsembleSpec(mean=[0.3, 0.0], cov=0.05, samples=500, seed=2)
        table = estimate_mtcf(simulate(m, ens), max_order=3)
        t3 = table.values[3]
        assert np.allclose(t3, np.transpose(t3, (1, 0, 2)), atol=1e-14)
        assert np.allclose(t3, np.transpose(t3, (2, 1, 0)), atol=1e-14)

    def test_needs_two_samples(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=5, lam=0.0)
        traj = simulate(m, pinned_ensemble([1.0, 0.0], samples=1, seed=0))
        with pytest.raises(ShapeError):
            estimate_mtcf(traj, max_order=1)

    def test_smeared_estimator_on_stationary_ensemble(self):
        # unforced harmonic oscillator with the stationary Gaussian ensemble
        # (sigma_v = omega sigma_x): time-shift averaging changes nothing
        omega, dt, T = 1.0, 0.1, 14
        m = build_oscillator_model(omega=omega, dt=dt, T=T, lam=0.0)
        sx = 0.3
        ens = EnsembleSpec(
            mean=[0.0, 0.0], cov=np.diag([sx**2, (omega * sx) ** 2]), samples=60000, seed=23
        )
        traj = simulate(m, ens)
        smear = {0: 0.5, 2: 0.5}
        smeared = estimate_mtcf(traj, max_order=2, smearing=smear)
        plain = estimate_mtcf(traj, max_order=2)
        Tw = T - 2
        win = plain.values[2][:Tw, :Tw]
        win_se = plain.stderr[2][:Tw, :Tw]
        diff = np.abs(smeared.values[2] - win)
        # discrete-frequency mismatch is O(dt^2); allow it alongside statistics
        assert np.all(diff <= 3.0 * (smeared.stderr[2] + win_se) + 10.0 * dt**2)

    def test_moment_tensor_chunked_path_matches(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((300, 3))
        a = moment_tensor(x, 5, chunk=64)
        b = np.einsum("sa,sb,sc,sd,se->abcde", x, x, x, x, x) / 300
        assert np.allclose(a, b, atol=1e-12)


class TestGaussianOracle:
    def test_fourth_moment_factor_three(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=6, lam=0.0)
        ens = EnsembleSpec(mean=[0.0, 0.0], cov=np.diag([0.25, 0.04]), samples=10, seed=0)
        table = gaussian_free_moments(m, ens, max_order=4)
        for t_idx in range(6):
            m2 = table.values[2][t_idx, t_idx]
            m4 = table.values[4][t_idx, t_idx, t_idx, t_idx]
            assert m4 == pytest.approx(3.0 * m2**2, rel=1e-12)

    def test_odd_moments_vanish_for_centered_data(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=5, lam=0.0)
        ens = EnsembleSpec(mean=[0.0, 0.0], cov=np.diag([0.25, 0.04]), samples=10, seed=0)
        table = gaussian_free_moments(m, ens, max_order=3)
        assert np.abs(table.values[1]).max() == 0.0
        assert np.abs(table.values[3]).max() == 0.0

    def test_agreement_with_monte_carlo(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=8, lam=0.0, forcing=0.2,
                                   x0_mean=0.1, v0_mean=0.05)
        ens = EnsembleSpec(mean=[0.1, 0.05], cov=np.diag([0.09, 0.04]), samples=10000, seed=31)
        mc = estimate_mtcf(simulate(m, ens), max_order=4)
        ana = gaussian_free_moments(m, ens, max_order=4)
        for n in range(1, 5):
            gap = np.abs(mc.values[n] - ana.values[n])
            assert np.all(gap <= 3.0 * mc.stderr[n] + 1e-12), n

    def test_pairing_recursion_against_enumeration(self):
        # 2-variable Gaussian, order 4, brute-force pairing enumeration
        mean = np.array([0.3, -0.2])
        cov = np.array([[0.5, 0.1], [0.1, 0.4]])
        got = gaussian_moment_tensors(mean, cov, 4)[4]
        import itertools

        def brute(idx):
            # sum over all ways to partition slots into singletons and pairs
            slots = list(range(4))

            def rec(rest):
                if not rest:
                    return 1.0
                i, rest = rest[0], rest[1:]
                total = mean[idx[i]] * rec(rest)
                for j_pos, j in enumerate(rest):
                    total += cov[idx[i], idx[j]] * rec(rest[:j_pos] + rest[j_pos + 1:])
                return total

            return rec(slots)

        for idx in itertools.product(range(2), repeat=4):
            assert got[idx] == pytest.approx(brute(idx), rel=1e-12)

    def test_order_budget(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=4, lam=0.0)
        ens = EnsembleSpec(mean=[0.0, 0.0], cov=0.1, samples=10, seed=0)
        with pytest.raises(CombinatorialBudget):
            gaussian_free_moments(m, ens, max_order=9)

    def test_linear_response_is_exact(self):
        m = build_oscillator_model(omega=0.8, dt=0.1, T=12, lam=0.0, forcing=0.4,
                                   x0_mean=0.0, v0_mean=0.0)
        coeff, part = linear_response(m)
        for x0, v0 in ((0.5, -0.2), (-1.0, 0.3)):
            traj = simulate(m, pinned_ensemble([x0, v0], samples=1, seed=0))
            pred = coeff @ np.array([x0, v0]) + part
            assert np.abs(pred - traj.positions[0]).max() <= 1e-12


class TestEstimatorConsistency:
    def test_error_shrinks_like_root_samples(self):
        # a single realization of the rms error has too few effective
        # degrees of freedom for a tight ratio; average it over
        # independent repetitions at each sample size
        m = build_oscillator_model(omega=1.0, dt=0.1, T=8, lam=0.0)
        ens_kw = dict(mean=[0.0, 0.0], cov=np.diag([0.09, 0.04]))
        ana = None
        reps = 8
        errors = {}
        for s, base in ((1000, 100), (10000, 200), (100000, 300)):
            total = 0.0
            for r in range(reps):
                ens = EnsembleSpec(samples=s, seed=base + r, **ens_kw)
                table = estimate_mtcf(simulate(m, ens), max_order=2)
                if ana is None:
                    ana = gaussian_free_moments(m, ens, max_order=2)
                sq = np.concatenate(
                    [np.ravel((table.values[n] - ana.values[n]) ** 2) for n in (1, 2)]
                )
                total += sq.mean()
            errors[s] = float(np.sqrt(total / reps))
        r1 = errors[1000] / errors[10000]
        r2 = errors[10000] / errors[100000]
        root10 = np.sqrt(10.0)
        assert 0.5 * root10 <= r1 <= 1.5 * root10
        assert 0.5 * root10 <= r2 <= 1.5 * root10


class TestDalembert:
    def test_standing_wave(self):
        wm = build_wave_model(speed=1.0, nx=64, length=2.0, cfl=0.5, nt=64)
        u0 = lambda x: np.sin(np.pi * x)
        mean = np.concatenate([u0(wm.grid), np.zeros(wm.nx)])
        ens = EnsembleSpec(mean=mean, cov=0.0, samples=2, seed=0)
        out = dalembert_average(wm, ens, u0_mean=u0, w0_mean=None, steps=[32])
        rec = out[0]
        # closed form sin(pi x) cos(pi a t); the formula field must match it
        analytic = np.sin(np.pi * wm.grid) * np.cos(np.pi * rec["time"])
        assert np.abs(rec["formula"] - analytic).max() <= 1e-12
        assert np.abs(rec["formula"] - rec["simulated"]).max() <= 1e-3

    def test_velocity_term(self):
        wm = build_wave_model(speed=1.0, nx=64, length=2.0, cfl=0.5, nt=33)
        w0 = lambda x: np.cos(np.pi * x)
        mean = np.concatenate([np.zeros(wm.nx), w0(wm.grid)])
        ens = EnsembleSpec(mean=mean, cov=0.0, samples=2, seed=0)
        out = dalembert_average(wm, ens, u0_mean=lambda x: 0.0 * x, w0_mean=w0, steps=[32])
        rec = out[0]
        analytic = np.cos(np.pi * wm.grid) * np.sin(np.pi * rec["time"]) / np.pi
        assert np.abs(rec["formula"] - analytic).max() <= 1e-6
        assert np.abs(rec["formula"] - rec["simulated"]).max() <= 1e-3

    def test_zero_mean_gaussian_averages_to_zero(self):
        wm = build_wave_model(speed=1.0, nx=32, length=2.0, cfl=0.5, nt=16)
        ens = EnsembleSpec(mean=np.zeros(64), cov=0.01, samples=4000, seed=3)
        out = dalembert_average(wm, ens, u0_mean=lambda x: 0.0 * x, w0_mean=None, steps=[15])
        rec = out[0]
        assert np.all(np.abs(rec["simulated"]) <= 4.0 * rec["stderr"] + 1e-12)
        assert np.abs(rec["formula"]).max() == 0.0

    def test_pinned_hybrid_splits_linearly(self):
        # a few pinned grid points on a zero-mean Gaussian background: the
        # ensemble mean equals the deterministic propagation of the pinned
        # data (linearity), within statistics
        wm = build_wave_model(speed=1.0, nx=32, length=2.0, cfl=0.5, nt=16)
        nx = wm.nx
        mean = np.zeros(2 * nx)
        pinned = np.zeros(2 * nx, dtype=bool)
        bump = np.exp(-0.5 * ((wm.grid - 1.0) / 0.15) ** 2)
        mean[:nx] = bump
        pinned[:nx] = True
        ens = EnsembleSpec(mean=mean, cov=0.01, samples=4000, seed=11, pinned=pinned)
        traj = simulate_wave(wm, ens)
        det = simulate_wave(wm, EnsembleSpec(mean=mean, cov=0.0, samples=1, seed=0))
        sim_mean = traj.positions[:, -1, :].mean(axis=0)
        se = traj.positions[:, -1, :].std(axis=0, ddof=1) / np.sqrt(traj.samples)
        assert np.all(np.abs(sim_mean - det.positions[0, -1, :]) <= 4.0 * se + 1e-12)


class TestMarginals:
    def test_uniform(self):
        f = np.full((2, 2), 0.25)
        assert np.allclose(marginals(f, 1), [0.5, 0.5], atol=0)

    def test_product_distribution_factorizes(self):
        p = np.array([0.2, 0.8])
        q = np.array([0.5, 0.3, 0.2])
        f = np.multiply.outer(p, q)
        assert np.allclose(marginals(f, 1), p, atol=1e-15)

    def test_composition_law_exact(self):
        rng = np.random.default_rng(4)
        f = rng.random((3, 4, 2))
        f /= f.sum()
        a = marginals(f, 1)
        b = marginals(marginals(f, 2), 1)
        assert np.array_equal(a, b)

    def test_rejects_negative(self):
        with pytest.raises(NotADistribution):
            marginals(np.array([-0.5, 1.5]), 1)


class TestHydroMoments:
    def test_zeroth_moment_is_mean_velocity(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=8, lam=0.0)
        ens = EnsembleSpec(mean=[0.2, 0.3], cov=0.04, samples=500, seed=6)
        traj = simulate(m, ens)
        hm = hydro_moments(traj, k=0)
        assert np.allclose(hm.route_products, traj.velocities.mean(axis=0), atol=1e-14)
        assert np.array_equal(hm.route_field, hm.route_products) or np.allclose(
            hm.route_field, hm.route_products, atol=1e-12
        )

    def test_single_sample_routes_agree_exactly(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=8, lam=0.1, forcing=0.2)
        traj = simulate(m, pinned_ensemble([0.5, -0.1], samples=1, seed=0))
        hm = hydro_moments(traj, k=2)
        assert np.allclose(hm.route_field, hm.route_products, rtol=0, atol=0)

    def test_harmonic_ensemble_within_three_sigma(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=10, lam=0.0)
        ens = EnsembleSpec(mean=[0.3, 0.1], cov=np.diag([0.09, 0.04]), samples=3000, seed=8)
        traj = simulate(m, ens)
        for k in (0, 1, 2):
            hm = hydro_moments(traj, k=k)
            assert hm.max_discrepancy_sigma() <= 3.0

    def test_rejects_extra_exponents(self):
        m = build_oscillator_model(omega=1.0, dt=0.1, T=5, lam=0.0)
        traj = simulate(m, pinned_ensemble([1.0, 0.0], samples=2, seed=0))
        with pytest.raises(ShapeError):
            hydro_moments(traj, k=1, l=1)
