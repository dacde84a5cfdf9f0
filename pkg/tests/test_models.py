import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import special

from flimo import dual as ad
from flimo.models import MODELS, gandk, get_model, highdim, normal_toy, ricker, wright_fisher
from flimo.models.gandk import DegenerateObservation, GandKParams, gandk_quantile, gandk_simulate
from flimo.models.wright_fisher import WrightFisherConfig, wf_objective, wf_selection_map, wf_simulate
from flimo.objective import evaluate
from flimo.randomness import QuantileMatrix, make_data_quantiles, make_quantile_matrix
from flimo.statistics import moment_estimates


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# ----------------------------------------------------------------------
# g-and-k
# ----------------------------------------------------------------------
def test_gandk_median_is_location():
    rng = np.random.default_rng(0)
    for _ in range(20):
        A, B, g, k = rng.uniform([-5, 0.1, -3, 0], [5, 4, 3, 2])
        assert gandk_quantile(0.5, A, B, g, k) == A


def test_gandk_normal_case():
    q = np.array([0.01, 0.3, 0.77, 0.999])
    assert np.allclose(gandk_quantile(q, 1.5, 2.0, 0.0, 0.0), 1.5 + 2.0 * special.ndtri(q), rtol=0, atol=1e-14)


def test_gandk_value_at_z_equal_one():
    # z = 1: 3 + (1 + 0.8 (1 - e^-2) / (1 + e^-2)) * 2^0.5
    oracle = 3 + (1 + 0.8 * (1 - math.exp(-2)) / (1 + math.exp(-2))) * math.sqrt(2)
    assert abs(gandk_quantile(normal_cdf(1.0), GandKParams(3, 1, 2, 0.5)) - oracle) <= 1e-12
    assert abs(gandk_quantile(0.8413447, 3, 1, 2, 0.5) - oracle) <= 1e-6


def test_gandk_domain_errors():
    with pytest.raises(ValueError):
        GandKParams(0, 0, 1, 1)
    with pytest.raises(ValueError):
        GandKParams(0, 1, 1, -0.5)
    with pytest.raises(ValueError):
        gandk_quantile(1.0, 0, 1, 0, 0)
    with pytest.raises(ValueError):
        gandk_quantile(0.5, 0, -1, 0, 0)


def test_gandk_strictly_increasing_in_q_and_monotone_in_A():
    rng = np.random.default_rng(1)
    q = np.linspace(1e-4, 1 - 1e-4, 500)
    for _ in range(50):
        A, B, g, k = rng.uniform([-5, 0.1, 0, 0], [5, 4, 5, 2])
        x = gandk_quantile(q, A, B, g, k)
        assert np.all(np.diff(x) > 0)
        assert np.all(gandk_quantile(q, A + 0.5, B, g, k) >= x)


def test_gandk_octile_mode_affine_normal_when_g_k_zero():
    R = make_quantile_matrix(2, 5, 8).entries
    from flimo.statistics import uniform_octiles_via_spacings

    u = uniform_octiles_via_spacings(R, 1000)
    out = gandk_simulate((1.0, 3.0, 0.0, 0.0), R, 1000, mode="octiles")
    assert np.allclose(out, 1.0 + 3.0 * special.ndtri(u), atol=1e-13)


def test_gandk_simulation_deterministic_and_budget():
    q = make_data_quantiles(0, 0, 1000)
    assert np.array_equal(gandk_simulate(gandk.THETA_TRUE, q), gandk_simulate(gandk.THETA_TRUE, q))
    with pytest.raises(ValueError):
        gandk_simulate(gandk.THETA_TRUE, q[:10], 1000)
    with pytest.raises(ValueError):
        gandk_simulate(gandk.THETA_TRUE, q[:7], 1000, mode="octiles")


def test_gandk_large_sample_location_statistic():
    y = gandk.generate(gandk.THETA_TRUE, 100_000, seed=3)
    assert abs(moment_estimates(y).values[0] - 3.0) <= 0.05


def test_relative_squared_error_arithmetic():
    obs = np.array([3.0, 1.2, 0.4, 1.1])
    assert gandk.relative_squared_error(obs, obs) == 0.0
    assert np.isclose(gandk.relative_squared_error(obs, obs * [1.1, 1, 1, 1]), 0.01)
    with pytest.raises(DegenerateObservation):
        gandk.relative_squared_error(np.array([0.0, 1, 1, 1]), obs)


def test_gandk_dual_values_bit_identical():
    R = make_quantile_matrix(4, 3, 1000).entries
    theta = (3.0, 1.0, 2.0, 0.5)
    plain = gandk_simulate(theta, R)
    dual = gandk_simulate(ad.variables(theta), R)
    assert np.array_equal(dual.val, plain)


def test_gandk_octile_problem_needs_size_divisible_by_eight():
    with pytest.raises(ValueError):
        gandk.build_problem(gandk.generate(n=1001), n_sim=10)


# ----------------------------------------------------------------------
# Wright-Fisher
# ----------------------------------------------------------------------
def test_selection_map_fixed_points_and_neutrality():
    x = np.linspace(0, 1, 11)
    assert np.array_equal(wf_selection_map(x, 0.0, 0.5), x)
    for s, h in [(0.3, 0.5), (-0.6, 0.1), (2.0, 1.0)]:
        assert wf_selection_map(0.0, s, h) == 0.0 and wf_selection_map(1.0, s, h) == 1.0
        assert np.all((wf_selection_map(x, s, h) >= 0) & (wf_selection_map(x, s, h) <= 1))


def test_selection_map_rational_value():
    x, s, h = Fraction(1, 5), Fraction(1, 10), Fraction(1, 2)
    exact = x * (1 + s * h + s * (1 - h) * x) / (1 + 2 * s * h * x + s * (1 - 2 * h) * x * x)
    assert exact == Fraction(212, 1020)
    assert abs(wf_selection_map(0.2, 0.1, 0.5) - float(exact)) <= 1e-15


@pytest.mark.parametrize("variant", wright_fisher.VARIANTS)
def test_absorbing_boundaries(variant):
    cfg = WrightFisherConfig(Ne=200, n_k=60, variant=variant)
    R = make_quantile_matrix(0, 20, cfg.n_draw).entries
    assert np.all(wf_simulate(cfg, 0.3, R, 0.0) == 0)
    assert np.all(wf_simulate(cfg, 0.3, R, 1.0) == cfg.n_k)


@pytest.mark.parametrize("variant", wright_fisher.VARIANTS)
def test_counts_stay_in_range(variant):
    cfg = WrightFisherConfig(Ne=50, n_k=15, variant=variant)
    R = make_quantile_matrix(1, 200, cfg.n_draw).entries
    Y = np.asarray(ad.value(wf_simulate(cfg, -0.4, R, 0.1)))
    assert Y.shape == (200, cfg.n_times)
    assert np.all((Y >= 0) & (Y <= cfg.n_k))


def test_gaussian_transition_fluctuation_scales_with_population():
    q = make_quantile_matrix(5, 1, 20_000).entries[0]
    sd = {N: np.std(wright_fisher._normal_step(q, N, 0.4)) for N in (100, 10_000)}
    assert abs(sd[100] / sd[10_000] - 10.0) <= 0.5


@pytest.mark.parametrize("variant", wright_fisher.VARIANTS)
def test_mean_trajectory_follows_deterministic_map(variant):
    cfg = WrightFisherConfig.scenario(1000, variant=variant)
    R = make_quantile_matrix(6, 1000, cfg.n_draw).entries
    Y = np.asarray(ad.value(wf_simulate(cfg, 0.1, R, cfg.X0)))
    x, det = cfg.X0, []
    for t in range(cfg.T + 1):
        if t % cfg.dt == 0:
            det.append(x)
        x = wf_selection_map(x, 0.1, 0.5)
    mean = Y.mean(axis=0) / cfg.n_k
    assert np.all(np.diff(det) > 0)
    assert np.max(np.abs(mean - det)) <= 0.02


def test_sampling_times_and_budget():
    cfg = WrightFisherConfig.scenario(100)
    assert cfg.n_k == 30 and cfg.n_times == 10
    assert np.array_equal(cfg.times, np.arange(0, 46, 5))
    assert cfg.n_draw == 45 + 10
    with pytest.raises(ValueError):
        wf_simulate(cfg, 0.1, np.full((1, 20), 0.5), 0.2)
    with pytest.raises(ValueError):
        WrightFisherConfig(variant="moran")


def test_wf_objective_examples():
    obs = np.array([10.0, 20.0, 30.0, 40.0])
    sims = np.stack([obs - 1, obs, obs + 1])
    assert wf_objective(obs, sims, 0.0) == 0.0
    assert np.isclose(wf_objective(obs, sims, 0.5), 0.005)
    bumped = obs.copy()
    bumped[2] += 2
    assert np.isclose(wf_objective(bumped, sims, 0.0), 2 / len(obs))


def test_wf_generated_data_has_one_count_per_sampling_time():
    cfg = WrightFisherConfig.scenario(100)
    y = wright_fisher.generate(cfg, 0.1, seed=0)
    assert y.shape == (10,) and np.all(y == np.round(y))


def test_wf_gradient_available_for_gaussian_variant_only():
    cfg = WrightFisherConfig.scenario(1000)
    y = wright_fisher.generate(cfg, 0.1, seed=1)
    prob = wright_fisher.build_problem(y, cfg, n_sim=20)
    J, g = prob.fixed(prob.quantiles(0)).value_and_grad(np.array([0.1]))
    assert np.isfinite(J) and np.isfinite(g[0])
    binom = wright_fisher.build_problem(y, WrightFisherConfig.scenario(1000, variant="binomial"), n_sim=20)
    assert binom.objective.simulator.output_kind == "discrete"


# ----------------------------------------------------------------------
# Ricker
# ----------------------------------------------------------------------
def test_ricker_fixed_point():
    params = ricker.RickerParams(math.e, 0.0, 10.0)
    N = ricker.ricker_latent(params, np.full((1, 50), 0.5))
    assert np.allclose(N, 1.0, rtol=0, atol=1e-12)


def test_ricker_zero_state_gives_zero_counts():
    params = ricker.RickerParams(math.e, 0.0, 10.0)
    N = ricker.ricker_latent(params, np.full((1, 10), 0.5), N0=1000.0)
    assert np.all(N[:, 1:] == 0) and np.all(N >= 0)
    q = make_quantile_matrix(0, 1, 10).entries
    from flimo.randomness import poisson_quantile

    assert np.all(poisson_quantile(q, params.phi * N[:, 1:]) == 0)


def test_ricker_boom_and_crash_series():
    ok = 0
    for seed in range(20):
        y = ricker.generate(ricker.THETA_TRUE, 50, seed=seed)
        assert y.shape == (51,)
        ok += bool(np.any(y == 0) and y.max() > 100)
    assert ok >= 15


def test_ricker_overflow_capped():
    params = ricker.RickerParams(1e200, 0.0, 10.0)
    N = ricker.ricker_latent(params, np.full((1, 5), 0.5))
    assert np.all(np.isfinite(N)) and N.max() <= ricker.N_CAP


def test_ricker_relative_error_examples():
    s = np.array([1.0, -2.0, 0.5, 3.0, 20.0, 7.0])
    assert ricker.relative_error(s, s) == 0.0
    off = s.copy()
    off[3] *= 2
    assert ricker.relative_error(s, off) == 1.0


def test_ricker_truth_beats_doubled_growth_rate():
    wins = 0
    spec = ricker.make_objective(50)
    for seed in range(20):
        y = ricker.generate(seed=seed)
        obs = ricker.observed_summary(y)
        R = make_quantile_matrix(100 + seed, 100, 101)
        log_r, sigma, phi = ricker.THETA_TRUE
        wins += evaluate(spec, [log_r, sigma, phi], R, obs) < evaluate(spec, [log_r + math.log(2), sigma, phi], R, obs)
    assert wins >= 15


def test_ricker_params_validation():
    with pytest.raises(ValueError):
        ricker.RickerParams(0.0, 0.3, 10)
    with pytest.raises(ValueError):
        ricker.RickerParams(1.0, -0.1, 10)
    with pytest.raises(ValueError):
        ricker.RickerParams(1.0, 0.3, 0)
    assert np.isclose(ricker.RickerParams.from_log(ricker.THETA_TRUE).r, math.exp(3.8))


# ----------------------------------------------------------------------
# high-dimensional toy
# ----------------------------------------------------------------------
def test_highdim_error_criterion_and_nonnegativity():
    cfg = highdim.HighDimToyConfig(p=5)
    assert highdim.error_criterion(cfg, cfg.y_obs) == 0.0
    assert highdim.error_criterion(cfg, [9.0, 1.0, 5, 5, 5]) == 2.0
    R = make_quantile_matrix(0, 10, 5)
    rng = np.random.default_rng(0)
    assert all(highdim.highdim_objective(cfg, t, R) >= 0 for t in rng.normal(0, 10, size=(50, 5)))


def test_highdim_zero_only_when_mean_simulation_hits_observation():
    cfg = highdim.HighDimToyConfig(p=3)
    R = QuantileMatrix(np.full((1, 3), 0.5), 0)
    assert highdim.highdim_objective(cfg, cfg.y_obs, R) == 0.0
    assert highdim.highdim_objective(cfg, cfg.y_obs + 0.1, R) > 0.0


def test_highdim_dimension_check():
    with pytest.raises(ValueError):
        highdim.HighDimToyConfig(p=1)


def test_highdim_prior_start_is_banana_shaped():
    cfg = highdim.HighDimToyConfig(p=2)
    pts = np.array([highdim.sample_start(cfg, s) for s in range(2000)])
    # E[theta_2] = b (E[theta_1^2] - 100) = 0, and theta_2 grows with theta_1^2
    assert abs(pts[:, 1].mean()) <= 0.5
    assert np.corrcoef(pts[:, 0] ** 2, pts[:, 1])[0, 1] > 0.9


def test_highdim_inference_recovers_observation():
    cfg = highdim.HighDimToyConfig(p=10)
    prob = highdim.build_problem(cfg, n_sim=10, x0=highdim.sample_start(cfg, 1))
    R = prob.quantiles(3)
    res = prob.solve(R)
    zbar = special.ndtri(R.entries).mean(axis=0)
    assert np.allclose(res.theta_hat, cfg.y_obs - zbar, atol=1e-5)


# ----------------------------------------------------------------------
# analytic normal toy
# ----------------------------------------------------------------------
def test_normal_oracle_symmetric_row():
    y = normal_toy.generate((1.0, 2.0), 100, seed=0)
    c = normal_cdf(1.0)
    Q = np.array([c, 1 - c] * 10)
    mu, sigma = normal_toy.analytic_normal_oracle(y, Q)
    assert abs(mu - y.mean()) <= 1e-9 and abs(sigma - y.std()) <= 1e-9


def test_normal_oracle_large_m_limit():
    y = normal_toy.generate((1.0, 2.0), 100, seed=1)
    Q = make_quantile_matrix(2, 1, 100_000).entries[0]
    mu, sigma = normal_toy.analytic_normal_oracle(y, Q)
    assert abs(mu - y.mean()) <= 0.01 and abs(sigma - y.std()) <= 0.01


def test_normal_oracle_degenerate_row():
    with pytest.raises(ValueError):
        normal_toy.analytic_normal_oracle(np.arange(5.0), np.full(10, 0.3))
    with pytest.raises(ValueError):
        normal_toy.analytic_normal_oracle(np.arange(5.0), [0.3])


def test_normal_oracle_is_a_stationary_point():
    y = normal_toy.generate((0.5, 3.0), 100, seed=2)
    prob = normal_toy.build_problem(y, m=100)
    R = prob.quantiles(4)
    theta = normal_toy.analytic_normal_oracle(y, R.entries[0])
    J, g = prob.fixed(R).value_and_grad(np.array(theta))
    assert J <= 1e-20 and np.max(np.abs(g)) <= 1e-8


# ----------------------------------------------------------------------
# registry
# ----------------------------------------------------------------------
def test_registry_names_and_lookup():
    assert set(MODELS) == {"gandk", "wright-fisher", "ricker", "highdim", "normal-toy"}
    with pytest.raises(KeyError):
        get_model("lotka-volterra")


def test_registry_option_coercion():
    hd = get_model("highdim")
    assert hd.options({"p": "10"})["p"] == 10
    assert hd.param_names(hd.options({"p": 3})) == ("theta1", "theta2", "theta3")
    with pytest.raises(KeyError):
        hd.options({"q": 1})
    wf = get_model("wright-fisher")
    assert wf.options({"X0": "0.3"})["X0"] == 0.3


def test_registry_problem_checks():
    gk = get_model("gandk")
    opts = gk.options()
    y = gk.generate(gandk.THETA_TRUE, 0, 0, opts)
    with pytest.raises(ValueError):
        gk.build_problem(y, 10, opts, method="brent")
    nt = get_model("normal-toy")
    with pytest.raises(ValueError):
        nt.build_problem(np.arange(10.0), 5, nt.options())
    with pytest.raises(ValueError):
        gk.generate((1.0, 2.0), 0, 0, opts)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_registry_generation_is_deterministic(name):
    entry = get_model(name)
    opts = entry.options()
    theta = entry.true_theta(opts)
    a, b = entry.generate(theta, 3, 1, opts), entry.generate(theta, 3, 1, opts)
    assert np.array_equal(a, b)
    sampler = entry.start_sampler(entry.build_problem(a, entry.default_n_sim, opts), a, 0, opts)
    assert np.array_equal(sampler(2), sampler(2))
