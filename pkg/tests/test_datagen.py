"""Fine-step reference data: long paths, datasets, downsampling, exact OU."""

from dataclasses import replace

import numpy as np
import pytest

from datagen import (GenerationConfig, LongTrajectory, TrajectoryDataset, generate_dataset,
                     generate_long_trajectory, ornstein_uhlenbeck_dataset, sample_initial_conditions)
from errors import BlowUp, ConfigError, ShapeMismatch
from sde_systems import make_linear_system


def _dataset(system, gap, M=6, total_steps=40, dt=1e-3, seed=11, workers=1):
    gen = GenerationConfig(system=system, dt=dt, total_steps=total_steps, gap=gap, M=M, seed=seed)
    initials = np.linspace(-1.0, 1.0, M * system.d).reshape(M, system.d)
    return generate_dataset(gen, initials, workers=workers)


# ============================================================================
# Long trajectory
# ============================================================================


class TestLongTrajectory:
    def test_noise_free_linear_decay(self):
        system = make_linear_system(1.0, 0.0)
        long = generate_long_trajectory(system, [1.0], 0.01, 50, seed=3)
        expected = 1.01 ** -np.arange(51.0)
        np.testing.assert_allclose(long.X[:, 0], expected, rtol=1e-12)

    def test_deterministic_in_seed(self, double_well):
        a = generate_long_trajectory(double_well, [0.5], 1e-3, 300, seed=5)
        b = generate_long_trajectory(double_well, [0.5], 1e-3, 300, seed=5)
        c = generate_long_trajectory(double_well, [0.5], 1e-3, 300, seed=6)
        np.testing.assert_array_equal(a.X, b.X)
        assert not np.array_equal(a.X, c.X)

    def test_rejects_empty(self, double_well):
        with pytest.raises(ConfigError):
            generate_long_trajectory(double_well, [0.5], 1e-3, 0, seed=1)

    def test_dataset_view_roundtrip(self, double_well):
        long = generate_long_trajectory(double_well, [0.5], 1e-3, 20, seed=1)
        ds = long.as_dataset()
        assert (ds.M, ds.N, ds.m) == (1, 20, 0)
        back = LongTrajectory.from_dataset(ds)
        np.testing.assert_array_equal(back.X, long.X)
        assert back.dt == long.dt


# ============================================================================
# Initial conditions
# ============================================================================


class TestInitialConditions:
    @pytest.fixture
    def long(self, double_well):
        return generate_long_trajectory(double_well, [0.5], 1e-3, 500, seed=2)

    def test_empty_request(self, long):
        assert sample_initial_conditions(long, 0, 100, seed=1).shape == (0, 1)

    def test_drawn_after_burn_in(self, long):
        init = sample_initial_conditions(long, 200, 100, seed=1)
        allowed = set(long.X[101:, 0].tolist())
        assert all(v in allowed for v in init[:, 0].tolist())

    def test_seeds_differ(self, long):
        a = sample_initial_conditions(long, 100, 100, seed=1)
        b = sample_initial_conditions(long, 100, 100, seed=2)
        assert not np.array_equal(a, b)

    def test_burn_in_too_long(self, long):
        with pytest.raises(ConfigError):
            sample_initial_conditions(long, 5, 500, seed=1)


# ============================================================================
# Datasets
# ============================================================================


class TestGenerateDataset:
    def test_shapes(self, lorenz):
        ds = _dataset(lorenz, gap=5, M=3, dt=5e-4)
        assert ds.X.shape == (3, 9, 3)
        assert ds.dB.shape == (3, 8, 2)
        assert ds.delta == pytest.approx(2.5e-3)

    def test_downsampling_is_consistent(self, double_well):
        fine = _dataset(double_well, gap=1)
        coarse = _dataset(double_well, gap=4)
        np.testing.assert_array_equal(coarse.X, fine.X[:, ::4])
        summed = fine.dB.reshape(fine.M, -1, 4, 1).sum(axis=2)
        np.testing.assert_allclose(coarse.dB, summed, rtol=1e-12, atol=1e-15)

    def test_worker_count_does_not_matter(self, gradient_2d):
        one = _dataset(gradient_2d, gap=2, M=7, workers=1)
        three = _dataset(gradient_2d, gap=2, M=7, workers=3)
        np.testing.assert_array_equal(one.X, three.X)
        np.testing.assert_array_equal(one.dB, three.dB)

    def test_increments_are_standard(self, double_well):
        ds = _dataset(double_well, gap=10, M=20, total_steps=2000)
        assert np.all(np.abs(ds.increment_z_scores()) < 5.0)

    def test_no_trajectories(self, double_well):
        ds = _dataset(double_well, gap=2, M=0)
        assert ds.X.shape == (0, 21, 1)

    def test_blowup_reports_first_step(self):
        system = make_linear_system(-50.0, 0.0)
        gen = GenerationConfig(system=system, dt=0.01, total_steps=100, gap=1, M=2, seed=0)
        with pytest.raises(BlowUp) as err:
            generate_dataset(gen, np.ones((2, 1)), workers=1)
        assert (err.value.trajectory, err.value.step) == (0, 34)

    def test_singular_solve_is_a_blowup(self):
        system = make_linear_system(-100.0, 0.0)
        gen = GenerationConfig(system=system, dt=0.01, total_steps=10, gap=1, M=1, seed=0)
        with pytest.raises(BlowUp, match="implicit solve failed"):
            generate_dataset(gen, np.ones((1, 1)), workers=1)

    def test_wrong_number_of_initials(self, double_well):
        gen = GenerationConfig(system=double_well, dt=1e-3, total_steps=10, gap=1, M=3, seed=0)
        with pytest.raises(ShapeMismatch):
            generate_dataset(gen, np.zeros((2, 1)))

    def test_config_validation(self, double_well):
        with pytest.raises(ConfigError):
            GenerationConfig(system=double_well, dt=1e-3, total_steps=10, gap=3, M=1, seed=0)
        with pytest.raises(ConfigError):
            GenerationConfig(system=double_well, dt=1e-3, total_steps=10, gap=1, M=1, seed=0,
                             burn_in_steps=10)
        with pytest.raises(ConfigError):
            GenerationConfig(system=double_well, dt=0.0, total_steps=10, gap=1, M=1, seed=0)


# ============================================================================
# Compiled and numpy paths
# ============================================================================


class TestCompiledGeneration:
    @pytest.mark.parametrize("name", ["double_well", "gradient_2d", "lorenz"])
    def test_dataset_matches_numpy_path(self, name, request):
        system = request.getfixturevalue(name)
        assert system.compiled is not None
        fast = _dataset(system, gap=4, M=3, total_steps=80, dt=5e-4)
        slow = _dataset(replace(system, compiled=None), gap=4, M=3, total_steps=80, dt=5e-4)
        np.testing.assert_allclose(fast.X, slow.X, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(fast.dB, slow.dB, rtol=1e-12, atol=1e-15)

    def test_long_path_matches_numpy_path(self, double_well):
        fast = generate_long_trajectory(double_well, [0.5], 1e-3, 5000, seed=9)
        slow = generate_long_trajectory(replace(double_well, compiled=None), [0.5], 1e-3, 5000, seed=9)
        np.testing.assert_allclose(fast.X, slow.X, rtol=1e-10, atol=1e-12)

    def test_blowup_reports_agree(self, double_well):
        initials = np.array([[0.1], [0.5], [0.3]])
        reports = []
        for system in (double_well, replace(double_well, compiled=None)):
            gen = GenerationConfig(system=system, dt=1e-3, total_steps=200, gap=2, M=3, seed=4,
                                   blowup_threshold=0.45)
            with pytest.raises(BlowUp) as err:
                generate_dataset(gen, initials, workers=1)
            reports.append((err.value.trajectory, err.value.step, err.value.reason))
        assert reports[0] == reports[1]
        assert reports[0][2] == "threshold exceeded"


class TestTrajectoryDataset:
    def test_take_and_concatenate(self, double_well):
        ds = _dataset(double_well, gap=2, M=4)
        part = ds.take(slice(0, 2), slice(5, 15))
        assert (part.M, part.N) == (2, 10)
        np.testing.assert_array_equal(part.X, ds.X[:2, 5:16])
        both = part.concatenate(ds.take(slice(2, 4), slice(5, 15)))
        np.testing.assert_array_equal(both.X, ds.X[:, 5:16])

    def test_shape_checks(self):
        with pytest.raises(ShapeMismatch):
            TrajectoryDataset(X=np.zeros((2, 5, 1)), dB=np.zeros((2, 5, 1)), delta=0.1, dt=0.1, gap=1,
                              system_name="x", seed=0)

    def test_concatenate_requires_same_delta(self, double_well):
        a = _dataset(double_well, gap=2, M=2)
        b = _dataset(double_well, gap=1, M=2, total_steps=20)
        with pytest.raises(ShapeMismatch):
            a.concatenate(b)


# ============================================================================
# Exact Ornstein-Uhlenbeck sampler
# ============================================================================


class TestOrnsteinUhlenbeck:
    @pytest.fixture(scope="class")
    def ou(self):
        return ornstein_uhlenbeck_dataset(a=1.0, sigma=1.0, delta=0.1, M=200, N=500, seed=9)

    def test_stationary_variance(self, ou):
        assert np.var(ou.X) == pytest.approx(0.5, rel=0.1)

    def test_one_step_correlation(self, ou):
        x0, x1 = ou.X[:, :-1, 0], ou.X[:, 1:, 0]
        assert np.mean(x1 * x0) / np.mean(x0 * x0) == pytest.approx(np.exp(-0.1), abs=0.02)

    def test_increment_covariance(self, ou):
        decay = np.exp(-0.1)
        resid = ou.X[:, 1:, 0] - decay * ou.X[:, :-1, 0]
        assert np.mean(resid * ou.dB[:, :, 0]) == pytest.approx(1.0 - decay, rel=0.1)

    def test_increments_are_standard(self, ou):
        assert np.all(np.abs(ou.increment_z_scores()) < 5.0)

    def test_fixed_start(self):
        ds = ornstein_uhlenbeck_dataset(a=2.0, sigma=0.5, delta=0.05, M=3, N=10, seed=1, x0=0.7)
        np.testing.assert_array_equal(ds.X[:, 0, 0], 0.7)
        assert ds.system_name == make_linear_system(2.0, 0.5).name

    def test_rejects_unstable(self):
        with pytest.raises(ConfigError):
            ornstein_uhlenbeck_dataset(a=-1.0, sigma=1.0, delta=0.1, M=1, N=1, seed=0)
