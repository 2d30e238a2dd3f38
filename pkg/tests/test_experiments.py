import math

import numpy as np
import pytest

from mvsde import models
from mvsde.config import ExperimentConfig
from mvsde.errors import ConfigError
from mvsde.experiments import (
    fit_loglog,
    run_convergence,
    run_density,
    run_moments,
    run_nscaling,
    run_paths,
)


@pytest.fixture
def oscillating_cubic_decay():
    """b = -x^3, sigma = 0, X0 = 3: explicit Euler diverges iff h x^2 > 2,
    so h = 0.25 oscillates to overflow while finer steps decay to 0."""

    def build():
        return models.ModelSpec(
            name="cubicdecay",
            d=1,
            m=1,
            drift=lambda t, x, mu: -(x**3),
            diffusion_col=lambda t, x, mu, r: np.zeros_like(x),
            rho=1.0,
            initial_sampler=lambda s: np.full(s.shape, 3.0),
        )

    models.BUILTIN_MODELS["cubicdecay"] = build
    yield "cubicdecay"
    del models.BUILTIN_MODELS["cubicdecay"]


def test_fit_loglog_recovers_exact_power():
    hs = [2.0**-k for k in range(3, 9)]
    ys = [5.0 * h**0.5 for h in hs]
    slope, intercept, r2 = fit_loglog(hs, ys)
    assert slope == pytest.approx(0.5, abs=1e-12)
    assert intercept == pytest.approx(math.log2(5.0), abs=1e-12)
    assert r2 == pytest.approx(1.0)


class TestConvergence:
    def small_cfg(self, **kw):
        base = dict(
            model_name="cubic",
            schemes=["me"],
            T=1.0,
            N=16,
            seed=5,
            h_ref=2.0**-8,
            h_list=[2.0**-4, 2.0**-5, 2.0**-6],
        )
        base.update(kw)
        return ExperimentConfig(**base)

    def test_self_comparison_is_exactly_zero(self):
        cfg = self.small_cfg(h_list=[2.0**-8], schemes=["me", "te(1)", "ssm"])
        for rep in run_convergence(cfg):
            assert rep.rows[0].rmse == 0.0

    def test_rows_sorted_descending_h(self):
        rep = run_convergence(self.small_cfg())[0]
        hs = [r.h for r in rep.rows]
        assert hs == sorted(hs, reverse=True)

    def test_deterministic_across_runs_and_threads(self):
        cfg = self.small_cfg(schemes=["me", "se(1)"])
        a = run_convergence(cfg, threads=1)
        b = run_convergence(cfg, threads=4)
        for ra, rb in zip(a, b):
            assert ra.scheme == rb.scheme
            assert [r.rmse for r in ra.rows] == [r.rmse for r in rb.rows]
            assert ra.slope == rb.slope

    def test_requires_grid_invariants(self):
        with pytest.raises(ConfigError):
            run_convergence(self.small_cfg(h_list=[0.3]))  # 0.3 / 2^-8 not integral
        with pytest.raises(ConfigError):
            run_convergence(self.small_cfg(h_ref=0.3))  # T / 0.3 not integral
        with pytest.raises(ConfigError):
            run_convergence(self.small_cfg(h_ref=None))

    def test_diverged_rows_flagged_and_others_unchanged(self, oscillating_cubic_decay):
        cfg = ExperimentConfig(
            model_name=oscillating_cubic_decay,
            schemes=["identity"],
            T=2.0,
            N=4,
            seed=3,
            h_ref=2.0**-6,
            h_list=[0.25, 2.0**-4, 2.0**-5],
        )
        rep = run_convergence(cfg)[0]
        assert rep.rows[0].diverged and math.isnan(rep.rows[0].rmse)
        assert not rep.rows[1].diverged and not rep.rows[2].diverged
        # excluding the diverged row does not change the remaining rows
        cfg2 = ExperimentConfig(
            model_name=oscillating_cubic_decay,
            schemes=["identity"],
            T=2.0,
            N=4,
            seed=3,
            h_ref=2.0**-6,
            h_list=[2.0**-4, 2.0**-5],
        )
        rep2 = run_convergence(cfg2)[0]
        assert [r.rmse for r in rep.rows[1:]] == [r.rmse for r in rep2.rows]
        # fewer than 3 usable points leaves the fit undefined
        assert rep2.n_fit == 2 and math.isnan(rep2.slope)

    def test_deterministic_drift_first_order(self):
        def build():
            return models.ModelSpec(
                name="lindecay",
                d=1,
                m=1,
                drift=lambda t, x, mu: -x,
                diffusion_col=lambda t, x, mu, r: np.zeros_like(x),
                rho=0.0,
                initial_sampler=lambda s: np.ones(s.shape),
            )

        models.BUILTIN_MODELS["lindecay"] = build
        try:
            cfg = ExperimentConfig(
                model_name="lindecay",
                schemes=["identity"],
                T=1.0,
                N=2,
                seed=1,
                h_ref=2.0**-12,
                h_list=[2.0**-k for k in range(5, 10)],
            )
            rep = run_convergence(cfg)[0]
            assert 0.9 <= rep.slope <= 1.1
        finally:
            del models.BUILTIN_MODELS["lindecay"]


class TestDensity:
    def cfg(self, **kw):
        base = dict(
            model_name="doublewell",
            model_params={"mu0": 0.0, "sigma0sq": 1.0},
            schemes=["te(1)"],
            T=1.0,
            N=64,
            seed=9,
            h_values=[0.05],
            record_times=[0.5, 1.0],
            reference_scheme="ssm",
            reference_h=0.01,
        )
        base.update(kw)
        return ExperimentConfig(**base)

    def test_entries_per_scheme_and_time(self):
        bundle = run_density(self.cfg())
        labels = {(e.scheme, e.time) for e in bundle.entries}
        assert ("te_a1", 0.5) in labels and ("te_a1", 1.0) in labels
        assert ("ssm_ref", 0.5) in labels and ("ssm_ref", 1.0) in labels
        for e in bundle.entries:
            assert e.curve is not None
            assert 0.9 <= e.curve.integral() <= 1.1

    def test_point_mass_model_peaks_at_start(self):
        cfg = self.cfg(model_name="cubic", model_params={}, reference_scheme=None)
        bundle = run_density(cfg)
        # cubic starts at 0 with drift pushing right; density mass is finite
        for e in bundle.entries:
            assert e.curve.n_source == 64

    def test_requires_h(self):
        with pytest.raises(ConfigError):
            run_density(self.cfg(h_values=[]))


class TestPaths:
    def test_summary_fields(self):
        cfg = ExperimentConfig(
            model_name="doublewell",
            model_params={"mu0": 3.0, "sigma0sq": 9.0},
            schemes=["te(1)"],
            T=1.0,
            N=32,
            seed=11,
            h_values=[0.05],
            trace_particles=[0, 5, 31],
            trace_stride=4,
        )
        bundle = run_paths(cfg)
        cell = bundle.cells[0]
        assert cell.particle_ids == (0, 5, 31)
        assert cell.values.shape == (20 // 4 + 1, 3, 1)
        assert cell.max_abs_recorded > 0
        assert cell.first_nonfinite_time is None
        assert not cell.diverged

    def test_one_cell_per_scheme_h_pair(self):
        cfg = ExperimentConfig(
            model_name="cubic",
            schemes=["me", "identity"],
            T=1.0,
            N=8,
            seed=2,
            h_values=[0.25, 0.125],
        )
        bundle = run_paths(cfg)
        assert len(bundle.cells) == 4


class TestMoments:
    def test_moments_constant_for_frozen_dynamics(self):
        def build():
            return models.ModelSpec(
                name="frozen",
                d=1,
                m=1,
                drift=lambda t, x, mu: np.zeros_like(x),
                diffusion_col=lambda t, x, mu, r: np.zeros_like(x),
                rho=0.0,
                initial_sampler=lambda s: np.full(s.shape, 1.5),
            )

        models.BUILTIN_MODELS["frozen"] = build
        try:
            cfg = ExperimentConfig(
                model_name="frozen", schemes=["identity"], T=1.0, N=8, seed=1,
                h_values=[0.125], orders=[2, 4],
            )
            bundle = run_moments(cfg)
            cell = bundle.cells[0]
            assert np.all(cell.moments[2] == 1.5**2)
            assert np.all(cell.moments[4] == 1.5**4)
            assert not cell.exceeded and not cell.nonfinite
        finally:
            del models.BUILTIN_MODELS["frozen"]

    def test_nonfinite_flag_on_oscillating_divergence(self, oscillating_cubic_decay):
        cfg = ExperimentConfig(
            model_name=oscillating_cubic_decay,
            schemes=["identity"],
            T=2.0,
            N=4,
            seed=3,
            h_values=[0.25],
        )
        bundle = run_moments(cfg)
        cell = bundle.cells[0]
        assert cell.nonfinite
        assert bundle.sup_moment(cell.scheme, 0.25, 2) > 0  # finite prefix exists


class TestNScaling:
    def cfg(self, **kw):
        base = dict(
            model_name="cubic",
            schemes=["me"],
            T=1.0,
            seed=42,
            h_values=[2.0**-5],
            n_list=[16, 32, 64],
            proxy_n=256,
            repetitions=4,
        )
        base.update(kw)
        return ExperimentConfig(**base)

    def test_error_zero_when_n_matches_proxy_with_shared_seed(self):
        rep = run_nscaling(self.cfg(n_list=[256], repetitions=1))
        assert rep.rows[0].mean_w2 == 0.0

    def test_error_decreases_with_n(self):
        rep = run_nscaling(self.cfg(repetitions=8))
        assert rep.rows[0].mean_w2 > rep.rows[-1].mean_w2
        assert rep.slope < 0

    def test_sem_shrinks_with_more_repetitions(self):
        # quadrupling R roughly halves the standard error of the mean
        sems4 = run_nscaling(self.cfg(n_list=[32], repetitions=4)).rows[0].sem_w2
        sems16 = run_nscaling(self.cfg(n_list=[32], repetitions=16)).rows[0].sem_w2
        assert 0.2 <= sems16 / sems4 <= 0.9

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            run_nscaling(self.cfg(h_values=[0.25, 0.125]))
        with pytest.raises(ConfigError):
            run_nscaling(self.cfg(n_list=[]))
        with pytest.raises(ConfigError):
            run_nscaling(self.cfg(schemes=["me", "te(1)"]))
