"""Inferred and plain scheme simulation, blow-up handling, synthetic data."""

import numpy as np
import pytest

from basis import Family
from errors import BlowUp, ConfigError
from inference import InferredScheme
from integrators import SchemeKind, em_step
from sde_systems import make_linear_system
from simulate import PlainScheme, SimConfig, simulate, step_inferred, synthesize_dataset


def _scheme(system, coefficients, sigma_eta=0.0, family=Family.IS_EM, include_c0=False, delta=0.01, gap=1):
    d = system.d
    return InferredScheme(family=family, include_c0=include_c0, delta=delta, gap=gap, dt=delta / gap,
                          system=system, coefficients=np.tile(coefficients, (d, 1)),
                          sigma_eta=np.full(d, sigma_eta))


# ============================================================================
# One step
# ============================================================================


class TestStepInferred:
    def test_plain_coefficients_reproduce_em(self, double_well, rng):
        scheme = _scheme(double_well, [0.0, 1.0, 1.0], include_c0=True, delta=0.05)
        x = rng.normal(size=(30, 1))
        xi = rng.normal(scale=np.sqrt(0.05), size=(30, 1))
        out = step_inferred(scheme, x, xi, np.zeros((30, 1)))
        np.testing.assert_allclose(out, em_step(double_well, x, xi, 0.05), rtol=1e-12, atol=1e-14)

    def test_zero_model_stays_put(self, gradient_2d, rng):
        scheme = _scheme(gradient_2d, [0.0, 0.0])
        x = rng.normal(size=(5, 2))
        np.testing.assert_array_equal(step_inferred(scheme, x, rng.normal(size=(5, 2)), np.zeros((5, 2))), x)

    def test_conditional_moments_for_linear_drift(self):
        a, delta, c1, sigma_eta = 2.0, 0.1, 0.7, 0.5
        scheme = _scheme(make_linear_system(a, 1.0), [c1, 1.0], sigma_eta=sigma_eta, delta=delta)
        rng = np.random.default_rng(8)
        n = 1_000_000
        out = step_inferred(scheme, np.ones((n, 1)), rng.normal(scale=np.sqrt(delta), size=(n, 1)),
                            rng.normal(size=(n, 1)))[:, 0]
        mean = 1.0 - c1 * a * delta
        assert abs(out.mean() - mean) < 4 * out.std() / np.sqrt(n)
        assert out.var() == pytest.approx(delta + (delta * sigma_eta) ** 2, rel=0.01)

    def test_singular_ssbe_rows_become_nan(self):
        scheme = _scheme(make_linear_system(-10.0, 1.0), [1.0, 1.0], family=Family.IS_SSBE, delta=0.1)
        out = step_inferred(scheme, np.array([[0.5], [1.0]]), np.zeros((2, 1)), np.zeros((2, 1)))
        assert np.isnan(out).all()

    def test_lorenz_batch_shape(self, lorenz, rng):
        scheme = _scheme(lorenz, [0.2, 1.0, 1.0], sigma_eta=0.1, family=Family.IS_RK4, include_c0=True,
                         delta=0.01)
        x = rng.normal(size=(4, 3)) + [0.0, 0.0, 25.0]
        assert step_inferred(scheme, x, rng.normal(size=(4, 2)), rng.normal(size=(4, 3))).shape == (4, 3)


# ============================================================================
# Ensembles
# ============================================================================


class TestSimulate:
    def test_deterministic_and_split_independent(self, double_well):
        scheme = _scheme(double_well, [0.9, 1.05], sigma_eta=0.2)
        sim = SimConfig(scheme=scheme, x0=np.linspace(-1, 1, 7)[:, None], steps=300, seed=12)
        a = simulate(sim, workers=1)
        b = simulate(sim, workers=3)
        np.testing.assert_array_equal(a.paths, b.paths)
        assert not a.any_blowup
        assert a.first_blowup is None

    def test_plain_and_embedded_agree(self, double_well):
        x0 = np.array([[0.5], [-0.5], [1.2]])
        plain = simulate(SimConfig(scheme=PlainScheme(SchemeKind.EM, double_well, 0.01), x0=x0, steps=50, seed=3))
        embedded = simulate(SimConfig(scheme=_scheme(double_well, [0.0, 1.0, 1.0], include_c0=True), x0=x0,
                                      steps=50, seed=3))
        np.testing.assert_allclose(embedded.paths, plain.paths, rtol=0, atol=1e-10)

    def test_residual_noise_does_not_disturb_forcing(self, double_well):
        x0 = np.zeros((3, 1))
        quiet = simulate(SimConfig(scheme=_scheme(double_well, [1.0, 1.0]), x0=x0, steps=40, seed=5,
                                   keep_increments=True))
        noisy = simulate(SimConfig(scheme=_scheme(double_well, [1.0, 1.0], sigma_eta=0.3), x0=x0, steps=40,
                                   seed=5, keep_increments=True))
        np.testing.assert_array_equal(quiet.increments, noisy.increments)
        assert not np.array_equal(quiet.paths, noisy.paths)

    def test_forcing_and_residual_noise_are_uncorrelated(self):
        a, delta, c1, c2, sigma_eta, steps = 1.0, 0.01, 0.8, 1.0, 0.5, 50_000
        scheme = _scheme(make_linear_system(a, 1.0), [c1, c2], sigma_eta=sigma_eta, delta=delta)
        res = simulate(SimConfig(scheme=scheme, x0=[[0.2]], steps=steps, seed=19, keep_increments=True))
        x = res.paths[0, :, 0]
        xi = res.increments[0, :, 0]
        eta = (x[1:] - x[:-1] - delta * c1 * (-a * x[:-1]) - c2 * xi) / (delta * sigma_eta)
        assert abs(eta.std() - 1.0) < 0.05
        assert abs(np.corrcoef(xi, eta)[0, 1]) < 4.0 / np.sqrt(steps)

    def test_plain_em_blows_up_at_large_step(self, double_well):
        res = simulate(SimConfig(scheme=PlainScheme(SchemeKind.EM, double_well, 0.5, gap=500),
                                 x0=np.full((5, 1), 3.0), steps=100, seed=1))
        assert res.blown_up.all()
        assert res.first_blowup == 3
        assert np.isnan(res.paths[:, 3:]).all()
        assert np.isfinite(res.paths[:, :3]).all()

    def test_plain_em_stable_at_small_step(self, double_well):
        res = simulate(SimConfig(scheme=PlainScheme(SchemeKind.EM, double_well, 0.001), x0=np.full((5, 1), 3.0),
                                 steps=1000, seed=1))
        assert not res.any_blowup
        assert np.isfinite(res.paths).all()

    def test_singular_implicit_solve_flags_blowup(self):
        scheme = PlainScheme(SchemeKind.SSBE, make_linear_system(-10.0, 1.0), 0.1)
        res = simulate(SimConfig(scheme=scheme, x0=np.ones((2, 1)), steps=5, seed=0))
        assert res.blown_up.all()
        assert res.first_blowup == 1

    def test_record_every(self, gradient_2d):
        scheme = PlainScheme(SchemeKind.SSBE, gradient_2d, 0.02)
        res = simulate(SimConfig(scheme=scheme, x0=np.zeros(2), steps=10, seed=0, record_every=5))
        assert res.paths.shape == (1, 3, 2)
        np.testing.assert_allclose(res.times(), [0.0, 0.1, 0.2])
        ds = res.as_dataset()
        assert (ds.N, ds.m, ds.delta) == (2, 0, pytest.approx(0.1))

    def test_config_validation(self, double_well):
        scheme = PlainScheme(SchemeKind.EM, double_well, 0.01)
        with pytest.raises(ConfigError):
            SimConfig(scheme=scheme, x0=np.zeros(1), steps=0, seed=0)
        with pytest.raises(ConfigError):
            SimConfig(scheme=scheme, x0=np.zeros(1), steps=10, seed=0, record_every=2, keep_increments=True)

    def test_plain_scheme_validation(self, double_well):
        assert PlainScheme(SchemeKind.HRK4, double_well, 0.02, gap=20).label == "plain-hrk4_gap-0020"
        with pytest.raises(ConfigError):
            PlainScheme("midpoint", double_well, 0.01)
        with pytest.raises(ConfigError):
            PlainScheme(SchemeKind.EM, double_well, -0.01)


# ============================================================================
# Synthetic data
# ============================================================================


class TestSynthesizeDataset:
    def test_shapes_and_increments(self, gradient_2d):
        scheme = _scheme(gradient_2d, [0.9, 1.0], sigma_eta=0.1, delta=0.04, gap=20)
        ds = synthesize_dataset(scheme, np.zeros((4, 2)), N=25, seed=2, workers=2)
        assert ds.X.shape == (4, 26, 2)
        assert ds.dB.shape == (4, 25, 2)
        assert (ds.delta, ds.gap) == (0.04, 20)
        assert ds.dt == pytest.approx(0.002)
        assert ds.meta["synthetic"] == scheme.label

    def test_diverging_model(self, double_well):
        scheme = _scheme(double_well, [1.0, 1.0], delta=0.5, gap=500)
        with pytest.raises(BlowUp):
            synthesize_dataset(scheme, np.full((2, 1), 3.0), N=20, seed=0)
