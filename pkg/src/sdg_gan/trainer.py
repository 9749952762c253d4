"""Adversarial training loop, evaluation and the synthetic-benchmark driver."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Graph
from .losses import LossKind, adversarial_losses, gradient_penalty
from .metrics import js_divergence_samples, pca_fit, write_scatter
from .nn import ModelParams, init_params, model_forward, parse_layers, sample
from .optim import AdamState, adam_step
from .prng import Prng, derive_seed
from .synthetic import Dataset, SynthSpec, generate

log = logging.getLogger(__name__)

MODELS = {
    "NSGAN-100": "D2-100:none,D100-10:none",
    "NSGAN-200": "D2-200:none,D200-10:none",
    "SDG-NSGAN": "S2-100:none,D100-10:none",
}
DATASETS = ("data1", "data2", "data3")
DISCRIMINATOR = "D10-100:leaky_relu(0.2),D100-1:none"

# independent PRNG streams derived from the run seed
_STREAM_TRAIN, _STREAM_EVAL, _STREAM_FINAL = 1, 2, 3


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration: int, records: list):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration
        self.records = records


@dataclass
class TrainConfig:
    loss: str = "nsgan"
    penalty_weight: float = 10.0
    dragan_noise_scale: float | None = None
    generator: str = MODELS["NSGAN-100"]
    discriminator: str = DISCRIMINATOR
    latent_dim: int = 2
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch: int = 64
    iters: int = 5000
    eval_every: int = 0
    eval_samples: int = 10000
    n_critic: int = 1
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.batch <= 0 or self.iters < 0 or self.n_critic < 1:
            raise ValueError("batch and n_critic must be positive, iters non-negative")
        self.loss_kind  # validates loss fields

    @property
    def loss_kind(self) -> LossKind:
        return LossKind(self.loss, self.penalty_weight, self.dragan_noise_scale)

    @property
    def eval_interval(self) -> int:
        return self.eval_every if self.eval_every > 0 else max(1, self.iters // 50)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def parse_value(cls, key: str, text: str):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        if key not in types:
            raise KeyError(f"unknown config key {key!r}")
        kind = types[key]
        if "bool" in kind:
            if text.lower() in ("1", "true", "yes"):
                return True
            if text.lower() in ("0", "false", "no"):
                return False
            raise ValueError(f"{key}: expected a boolean, got {text!r}")
        if "None" in kind and text.lower() in ("none", ""):
            return None
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
        return text

    @classmethod
    def from_file(cls, path, base: "TrainConfig | None" = None) -> "TrainConfig":
        """Read ``key=value`` lines; blank lines and ``#`` comments are skipped."""
        changes = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            changes[key] = cls.parse_value(key, value)
        return dataclasses.replace(base or cls(), **changes)


@dataclass
class MetricsRecord:
    iteration: int
    d_loss: float
    g_loss: float
    js: float
    wall_time_ms: float


@dataclass
class TrainResult:
    generator: ModelParams
    discriminator: ModelParams
    records: list[MetricsRecord] = field(default_factory=list)


def param_count(arch: str) -> int:
    return sum(s.n_params for s in parse_layers(arch))


def check_benchmark_param_order() -> None:
    """The stochastic generator sits between the two deterministic ones in size."""
    n100, n200, nsdg = (param_count(MODELS[k]) for k in ("NSGAN-100", "NSGAN-200", "SDG-NSGAN"))
    if not n100 < nsdg < n200:
        raise AssertionError(f"parameter counts out of order: {n100}, {nsdg}, {n200}")


def _fold_output_affine(params: ModelParams, scale: float, shift: np.ndarray) -> ModelParams:
    """Absorb ``y -> scale * y + shift`` into the last (affine) layer."""
    last = params.specs[-1]
    if last.stochastic or last.activation != "none":
        raise ValueError("standardization needs a deterministic, activation-free output layer")
    out = params.copy()
    slots = out.layout[-1]
    out.arrays[slots["w"]] = out.arrays[slots["w"]] * scale
    out.arrays[slots["b"]] = out.arrays[slots["b"]] * scale + shift[None, :]
    return out


def _grads(graph: Graph, loss, tensors) -> list[np.ndarray]:
    grads = graph.backward(loss)
    return [grads[t.index].value if t.index in grads else np.zeros(t.shape) for t in tensors]


def train_gan(config: TrainConfig, dataset: Dataset) -> TrainResult:
    """Alternate one discriminator step (or ``n_critic``) and one generator step.

    With ``standardize`` on, training sees ``(x - mean) / std`` (a single
    scalar std over all entries) and the returned generator has the inverse
    map folded into its output layer, so it samples in data space.
    Metrics are logged every ``eval_interval`` iterations against
    ``eval_samples`` fresh draws of the dataset's ground-truth network.
    """
    gspec = parse_layers(config.generator)
    dspec = parse_layers(config.discriminator)
    data = dataset.data
    if gspec[0].in_dim != config.latent_dim:
        raise ValueError(f"generator input {gspec[0].in_dim} != latent_dim {config.latent_dim}")
    if gspec[-1].out_dim != data.shape[1] or dspec[0].in_dim != data.shape[1]:
        raise ValueError(f"dataset has {data.shape[1]} columns; generator/discriminator disagree")
    if dspec[-1].out_dim != 1:
        raise ValueError("discriminator must output one score per row")

    rng = Prng(derive_seed(config.seed, _STREAM_TRAIN))
    gparams = init_params(gspec, rng)
    dparams = init_params(dspec, rng)
    if config.iters == 0:
        return TrainResult(gparams, dparams, [])

    if config.standardize:
        center = data.mean(axis=0)
        spread = float(data.std())
    else:
        center, spread = np.zeros(data.shape[1]), 1.0
    train_data = (data - center) / spread

    eval_rng = Prng(derive_seed(config.seed, _STREAM_EVAL))
    reference = dataset.truth.sample(config.eval_samples, eval_rng)
    basis = pca_fit(reference)

    kind = config.loss_kind
    gstate, dstate = AdamState.like(gparams.arrays), AdamState.like(dparams.arrays)
    adam = dict(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
    records: list[MetricsRecord] = []
    start = time.perf_counter()
    n, b, d = train_data.shape[0], config.batch, config.latent_dim

    for it in range(1, config.iters + 1):
        for _ in range(config.n_critic):
            x_real = train_data[rng.integers(n, b)]
            x_fake = sample(gparams, rng.gaussian((b, d)), rng)
            g = Graph()
            dbound = dparams.bind(g)
            critic = lambda x: model_forward(dbound, x)
            d_loss, _ = adversarial_losses(kind, critic(g.constant(x_real)), critic(g.constant(x_fake)))
            if kind.penalized:
                gp = gradient_penalty(g, critic, x_real, x_fake, kind.variant, kind.penalty_weight, rng, kind.dragan_noise_scale)
                d_loss = ad.add(d_loss, gp)
            adam_step(dstate, dparams.arrays, _grads(g, d_loss, dbound.tensors), **adam)

        g = Graph()
        gbound = gparams.bind(g)
        fake = model_forward(gbound, g.constant(rng.gaussian((b, d))), rng)
        d_fake = model_forward(dparams.bind(g, requires_grad=False), fake)
        g_loss = adversarial_losses(kind, d_fake, d_fake)[1]
        adam_step(gstate, gparams.arrays, _grads(g, g_loss, gbound.tensors), **adam)

        dl, gl = d_loss.item(), g_loss.item()
        if not (np.isfinite(dl) and np.isfinite(gl)):
            raise NonFiniteLossError(it, records)
        if it % config.eval_interval == 0:
            gen = sample(gparams, eval_rng.gaussian((config.eval_samples, d)), eval_rng) * spread + center
            js = js_divergence_samples(reference, gen, basis)
            records.append(MetricsRecord(it, dl, gl, js, 1000.0 * (time.perf_counter() - start)))
            log.debug("iter %d d_loss %.4f g_loss %.4f js %.4f", it, dl, gl, js)

    if config.standardize:
        gparams = _fold_output_affine(gparams, spread, center)
    return TrainResult(gparams, dparams, records)


def write_metrics(records: Sequence[MetricsRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "d_loss", "g_loss", "js", "wall_time_ms"])
        for r in records:
            w.writerow([r.iteration, repr(r.d_loss), repr(r.g_loss), repr(r.js), f"{r.wall_time_ms:.1f}"])


def evaluate_model(
    generator: ModelParams,
    dataset: Dataset,
    n_samples: int = 10000,
    seed: int = 0,
    scatter_path=None,
    scatter_points: int = 2000,
) -> float:
    """JS divergence between ``n_samples`` generator draws and as many ground-truth draws.

    The PCA basis is fit on the ground-truth draws.  Optionally writes the
    first ``scatter_points`` projected points of each set as a scatter CSV.
    """
    rng = Prng(derive_seed(seed, _STREAM_FINAL))
    truth = dataset.truth.sample(n_samples, rng)
    basis = pca_fit(truth)
    d = generator.specs[0].in_dim
    model = sample(generator, rng.gaussian((n_samples, d)), rng)
    js = js_divergence_samples(truth, model, basis)
    if scatter_path is not None:
        k = min(scatter_points, n_samples)
        write_scatter(scatter_path, basis.project(truth[:k]), basis.project(model[:k]))
    return js


# ----------------------------------------------------------------------
# synthetic benchmark


@dataclass
class RunResult:
    dataset: str
    model: str
    seed: int
    js: float


def run_benchmark(
    out_dir,
    iters: int = 5000,
    seeds: Sequence[int] = range(5),
    final_samples: int = 100_000,
    datasets: Sequence[str] = DATASETS,
    models: Sequence[str] = tuple(MODELS),
    base: TrainConfig | None = None,
) -> list[RunResult]:
    """Train every (dataset, model, seed) combination and score the final generator.

    Each seed regenerates the dataset (generator matrices and samples) and
    seeds the training run.  Writes per-run metrics, ``runs.csv`` and
    ``summary.csv`` into ``out_dir``.
    """
    check_benchmark_param_order()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = base or TrainConfig()
    results = []
    for name in datasets:
        for seed in seeds:
            dataset = generate(SynthSpec.preset(name, seed=seed))
            for model in models:
                config = base.replace(generator=MODELS[model], iters=iters, seed=seed)
                t0 = time.perf_counter()
                result = train_gan(config, dataset)
                run = f"{name}_{model}_seed{seed}"
                write_metrics(result.records, out / f"metrics_{run}.csv")
                scatter = out / f"scatter_{run}.csv" if seed == seeds[0] else None
                js = evaluate_model(result.generator, dataset, final_samples, seed, scatter)
                results.append(RunResult(name, model, seed, js))
                log.info("%s js=%.4f (%.1fs)", run, js, time.perf_counter() - t0)
    write_runs(results, out / "runs.csv")
    write_summary(results, out / "summary.csv")
    return results


def write_runs(results: Sequence[RunResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "model", "seed", "js"])
        for r in results:
            w.writerow([r.dataset, r.model, r.seed, repr(r.js)])


def summarize(results: Sequence[RunResult]) -> list[dict]:
    groups: dict[tuple[str, str], list[float]] = {}
    for r in results:
        groups.setdefault((r.dataset, r.model), []).append(r.js)
    rows = []
    for (name, model), values in groups.items():
        v = np.array(values)
        rows.append(
            {
                "dataset": name,
                "model": model,
                "mean_js": float(v.mean()),
                "std_js": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                "median_js": float(np.median(v)),
                "seeds": v.size,
            }
        )
    return rows


def write_summary(results: Sequence[RunResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "model", "mean_js", "std_js", "seeds"])
        for row in summarize(results):
            w.writerow([row["dataset"], row["model"], f"{row['mean_js']:.6f}", f"{row['std_js']:.6f}", row["seeds"]])


def format_table(results: Sequence[RunResult]) -> str:
    """Plain-text dataset x model grid of ``mean±std``."""
    rows = summarize(results)
    models = list(dict.fromkeys(r["model"] for r in rows))
    names = list(dict.fromkeys(r["dataset"] for r in rows))
    cell = {(r["dataset"], r["model"]): f"{r['mean_js']:.4f}±{r['std_js']:.4f}" for r in rows}
    lines = ["JS Div.".ljust(8) + "".join(m.rjust(18) for m in models)]
    for name in names:
        lines.append(name.ljust(8) + "".join(cell.get((name, m), "-").rjust(18) for m in models))
    return "\n".join(lines)
