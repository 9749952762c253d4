"""End-to-end acceptance checks, one test group per criterion.

Each test carries a ``criterion`` marker; conftest prints one PASS/FAIL
line per criterion in the terminal summary.  The benchmark reproduction
(criterion 3) trains 45 GANs and takes several minutes on one core.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import truncnorm

from sdg_gan import autodiff as ad
from sdg_gan.autodiff import Graph, grad_check_fd
from sdg_gan.cli import main
from sdg_gan.losses import gradient_penalty, lsgan_losses, nsgan_losses
from sdg_gan.metrics import js_discrete, js_divergence_samples, ks_statistic, pca_fit
from sdg_gan.nn import ModelParams, init_params, parse_layers, sample
from sdg_gan.prng import Prng
from sdg_gan.quantile import (
    DensitySpec,
    bimodal_mixture,
    build_continuous_quantile,
    sweep_width,
    truncated_normal,
)
from sdg_gan.trainer import MODELS, param_count, run_benchmark, summarize

from graphs import random_graph

criterion = pytest.mark.criterion


# ----------------------------------------------------------------------
# 1. quantile sampler fidelity


@criterion(1, "quantile sampler fidelity")
def test_truncated_normal_ks(record_property):
    start = time.perf_counter()
    qmap = build_continuous_quantile(truncated_normal(-2.0, 2.0, grid_n=4096))
    x = qmap.sample(Prng(0), 100_000)
    ks = ks_statistic(x, lambda t: truncnorm.cdf(t, -2.0, 2.0))
    elapsed = time.perf_counter() - start
    record_property("detail", f"KS={ks:.5f}, {elapsed:.2f}s")
    assert ks < 0.01
    assert elapsed < 5.0


@criterion(1, "quantile sampler fidelity")
def test_uniform_target_is_identity():
    qmap = build_continuous_quantile(DensitySpec(0.0, 1.0, lambda x: np.ones_like(x), 4096))
    np.testing.assert_allclose(qmap(qmap.z), qmap.z, atol=1e-9, rtol=0)


# ----------------------------------------------------------------------
# 2. width sweep


@criterion(2, "wider tanh networks approximate the bimodal quantile map better")
def test_width_sweep(record_property):
    widths = [4, 16, 64, 256]
    start = time.perf_counter()
    rows = sweep_width(build_continuous_quantile(bimodal_mixture()), widths, seeds=[0, 1, 2], steps=20_000)
    elapsed = time.perf_counter() - start
    med = [float(np.median([r["js"] for r in rows if r["width"] == w])) for w in widths]
    record_property("detail", "median js " + ", ".join(f"{w}:{m:.4f}" for w, m in zip(widths, med)) + f", {elapsed:.0f}s")
    eps = 0.005
    assert all(b <= a + eps for a, b in zip(med, med[1:]))
    assert med[-1] <= 0.5 * med[0]
    assert elapsed < 600


# ----------------------------------------------------------------------
# 3. synthetic benchmark


@pytest.fixture(scope="module")
def benchmark_medians(tmp_path_factory):
    out = tmp_path_factory.mktemp("benchmark")
    start = time.perf_counter()
    results = run_benchmark(out, iters=5000, seeds=range(5), final_samples=100_000)
    elapsed = time.perf_counter() - start
    medians = {(r["dataset"], r["model"]): r["median_js"] for r in summarize(results)}
    return medians, elapsed, len(results)


def _fmt(medians, name):
    return f"{name} medians " + ", ".join(f"{m}={medians[(name, m)]:.4f}" for m in MODELS)


@criterion(3, "synthetic benchmark at 5K iterations")
@pytest.mark.slow
@pytest.mark.parametrize("name", ["data1", "data2"])
def test_benchmark_gaussian_data(benchmark_medians, name, record_property):
    medians, elapsed, runs = benchmark_medians
    record_property("detail", _fmt(medians, name))
    for model in MODELS:
        assert medians[(name, model)] <= 0.03, f"{name}/{model}"


@criterion(3, "synthetic benchmark at 5K iterations")
@pytest.mark.slow
def test_benchmark_stochastic_data(benchmark_medians, record_property):
    medians, elapsed, runs = benchmark_medians
    record_property("detail", _fmt(medians, "data3") + f"; {runs} runs in {elapsed / 60:.1f} min")
    sdg = medians[("data3", "SDG-NSGAN")]
    assert sdg <= 0.05
    for model in ("NSGAN-100", "NSGAN-200"):
        assert medians[("data3", model)] >= 2.0 * sdg, model
    # per-run budget is 30 min; the whole grid is far below that
    assert elapsed / runs < 30 * 60


# ----------------------------------------------------------------------
# 4. parameter counts


@criterion(4, "parameter-count ordering of the benchmark generators")
def test_parameter_ordering(record_property):
    n100, nsdg, n200 = (param_count(MODELS[m]) for m in ("NSGAN-100", "SDG-NSGAN", "NSGAN-200"))
    record_property("detail", f"{n100} < {nsdg} < {n200}")
    assert n100 < nsdg < n200


# ----------------------------------------------------------------------
# 5. gradients


@criterion(5, "gradient checks")
def test_random_graph_gradients(record_property):
    start = time.perf_counter()
    worst = max(grad_check_fd(*random_graph(seed)) for seed in range(100))
    record_property("detail", f"100 graphs worst rel {worst:.2e}")
    assert worst < 1e-5
    assert time.perf_counter() - start < 60


def _one_hidden_critic(g, w1, b1, w2, act):
    return lambda x: ad.matmul(act(ad.add_row(ad.matmul(x, ad.transpose(w1)), b1)), ad.transpose(w2))


@criterion(5, "gradient checks")
@pytest.mark.parametrize("mode", ["wgangp", "dragan"])
@pytest.mark.parametrize("act", [ad.tanh, ad.softplus, ad.sigmoid], ids=["tanh", "softplus", "sigmoid"])
def test_penalty_double_backprop(mode, act):
    start = time.perf_counter()
    r = np.random.default_rng(11)
    worst = 0.0
    for trial in range(5):
        g = Graph()
        w1 = g.leaf(r.normal(size=(8, 3)))
        b1 = g.leaf(0.1 * r.normal(size=(1, 8)))
        w2 = g.leaf(r.normal(size=(1, 8)))
        real, fake = r.normal(size=(6, 3)), r.normal(size=(6, 3))
        p = gradient_penalty(g, _one_hidden_critic(g, w1, b1, w2, act), real, fake, mode, 10.0, Prng(trial))
        worst = max(worst, grad_check_fd(g, p, [w1, b1, w2]))
    assert worst < 1e-4
    assert time.perf_counter() - start < 60


# ----------------------------------------------------------------------
# 6. sigma = 0


@criterion(6, "zero scale head reduces a stochastic layer to a deterministic one")
def test_zero_sigma_bit_identical():
    rng = Prng(21)
    stoch = init_params(parse_layers(MODELS["SDG-NSGAN"]), rng)
    for k in (0, 1, 4, 5):
        stoch.arrays[k] = rng.gaussian(stoch.arrays[k].shape)
    stoch.arrays[2][:] = 0.0
    stoch.arrays[3][:] = 0.0
    det = ModelParams(parse_layers(MODELS["NSGAN-100"]), [stoch.arrays[k] for k in (0, 1, 4, 5)])
    z = rng.gaussian((100, 2))
    out_s = sample(stoch, z, Prng(22))
    out_d = sample(det, z)
    assert out_s.tobytes() == out_d.tobytes()


# ----------------------------------------------------------------------
# 7. loss values


@criterion(7, "loss unit values")
def test_loss_unit_values():
    g = Graph()
    zeros = g.constant(np.zeros((16, 1)))
    d, gl = nsgan_losses(zeros, zeros)
    assert abs(d.item() - 2 * math.log(2)) < 1e-12
    assert abs(gl.item() - math.log(2)) < 1e-12
    d, gl = lsgan_losses(g.constant(np.ones((16, 1))), zeros)
    assert (d.item(), gl.item()) == (0.0, 0.5)


@criterion(7, "loss unit values")
@pytest.mark.parametrize("mode", ["wgangp", "dragan"])
def test_unit_gradient_critic_zero_penalty(mode):
    g = Graph()
    w = np.full((4, 1), 0.5)  # ||w|| = 1
    wt = g.constant(w)
    x = Prng(3).gaussian((32, 4))
    p = gradient_penalty(g, lambda t: ad.matmul(t, wt), x, x + 1.0, mode, 10.0, Prng(4))
    assert p.item() == 0.0


# ----------------------------------------------------------------------
# 8. metric properties


@criterion(8, "JS metric properties")
def test_js_discrete_properties():
    r = np.random.default_rng(8)
    for _ in range(200):
        p, q = r.random(30) * (r.random(30) < 0.7), r.random(30)
        p, q = p / p.sum(), q / q.sum()
        a, b = js_discrete(p, q), js_discrete(q, p)
        assert a == pytest.approx(b, abs=1e-14)
        assert 0.0 <= a <= 1.0
        assert js_discrete(p, p) == 0.0


@criterion(8, "JS metric properties")
def test_js_samples_identity_and_disjoint(record_property):
    rng = Prng(9)
    a = rng.gaussian((5000, 10))
    basis = pca_fit(a)
    assert js_divergence_samples(a, a, basis) == 0.0
    far = rng.gaussian((5000, 10)) + 1000.0
    js = js_divergence_samples(a, far, basis)
    record_property("detail", f"disjoint js={js:.6f}")
    assert js >= 0.999


# ----------------------------------------------------------------------
# 9. determinism


@criterion(9, "benchmark summary is byte-identical across repeated runs")
def test_repro_table1_deterministic(tmp_path):
    args = ["repro-table1", "--iters", "200", "--seeds", "2", "--final-samples", "5000", "--eval-samples", "2000"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "summary.csv").read_bytes()
    b = (tmp_path / "b" / "summary.csv").read_bytes()
    assert a == b
    assert len(a.splitlines()) == 10
