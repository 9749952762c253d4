"""Quantile maps that push uniform (or other) noise onto a target law.

Three constructions, all returning a :class:`QuantileMap`:

* discrete atoms: a step function whose breakpoints are the cumulative
  probabilities, ``Q(z) = x_i`` for ``c_{i-1} < z < c_i``;
* a continuous density on ``[lo, hi]``: tabulate ``z(t) = int_lo^t p`` on a
  uniform grid and invert by monotone linear interpolation;
* a general prior: ``Q = F_X^{-1} o F_Z``.

Independent coordinates are sampled with one map per axis
(:func:`sample_product`).  :func:`fit_mlp_quantile` regresses a quantile
map with a one-hidden-layer tanh network, the empirical side of universal
approximation for generators: wider networks should push uniform noise
closer to the target law.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Graph
from .metrics import js_divergence_1d
from .nn import LayerSpec, ModelParams, model_forward, sample
from .optim import AdamState, adam_step
from .prng import Prng

DEFAULT_GRID = 4096
MASS_TOL = 1e-6


class NormalizationError(ValueError):
    def __init__(self, mass: float):
        super().__init__(f"density integrates to {mass:.12g}, not 1 (tolerance {MASS_TOL:g})")
        self.mass = mass


@dataclass(frozen=True)
class DiscreteDist:
    atoms: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if atoms.size == 0:
            raise ValueError("discrete distribution needs at least one atom")
        if atoms.shape != probs.shape:
            raise ValueError(f"{atoms.size} atoms but {probs.size} probabilities")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum():.15g}, not 1")
        if np.any(np.diff(atoms) <= 0):
            raise ValueError("atoms must be strictly increasing")


@dataclass(frozen=True)
class DensitySpec:
    """A density on the compact interval ``[lo, hi]``, integrated on ``grid_n`` points."""

    lo: float
    hi: float
    density: Callable[[np.ndarray], np.ndarray]
    grid_n: int = DEFAULT_GRID

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"support must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if self.grid_n < 2:
            raise ValueError(f"grid_n must be at least 2, got {self.grid_n}")

    @classmethod
    def normalized(cls, lo, hi, density, grid_n: int = DEFAULT_GRID) -> "DensitySpec":
        """Rescale an unnormalized density by its trapezoid mass on the grid."""
        raw = cls(lo, hi, density, grid_n)
        mass = raw._raw_mass()
        return cls(lo, hi, lambda x: np.asarray(density(x), dtype=np.float64) / mass, grid_n)

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.lo + np.linspace(0.0, 1.0, self.grid_n) * (self.hi - self.lo)
        p = np.asarray(self.density(x), dtype=np.float64) * np.ones_like(x)
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("density must be finite and non-negative on its support")
        return x, p

    def _raw_mass(self) -> float:
        x, p = self.grid()
        return float(np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(x)))

    def cdf_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid points and the cumulative trapezoid integral, rescaled to end at 1.

        Raises :class:`NormalizationError` when the mass is off by more than 1e-6.
        """
        x, p = self.grid()
        cells = 0.5 * (p[1:] + p[:-1]) * np.diff(x)
        mass = float(cells.sum())
        if abs(mass - 1.0) > MASS_TOL:
            raise NormalizationError(mass)
        if np.any(cells <= 0):
            raise ValueError("density has a zero-mass grid cell; the quantile map would not be continuous")
        cum = np.concatenate([[0.0], np.cumsum(cells)]) / mass
        cum[-1] = 1.0
        return x, cum

    def cdf(self, x) -> np.ndarray:
        xs, cum = self.cdf_table()
        return np.interp(np.asarray(x, dtype=np.float64), xs, cum)


@dataclass(frozen=True)
class QuantileMap:
    """Non-decreasing map from noise to the target.

    ``z`` holds the knot abscissae and ``x`` the values.  For the
    piecewise-constant kind ``z[i]`` is the upper breakpoint of atom ``x[i]``.
    """

    kind: str
    z: np.ndarray
    x: np.ndarray

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "piecewise-constant":
            idx = np.searchsorted(self.z, z, side="right")
            return self.x[np.minimum(idx, self.x.size - 1)]
        return np.interp(z, self.z, self.x)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def sample(self, rng: Prng, n: int) -> np.ndarray:
        return self(rng.uniform(n))


def build_discrete_quantile(dist: DiscreteDist) -> QuantileMap:
    """Step function with breakpoints at cumulative probabilities.

    A ``z`` exactly on a breakpoint maps to the upper atom.
    """
    probs = np.asarray(dist.probs, dtype=np.float64)
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return QuantileMap("piecewise-constant", cum, np.asarray(dist.atoms, dtype=np.float64))


def build_continuous_quantile(density: DensitySpec) -> QuantileMap:
    x, cum = density.cdf_table()
    return QuantileMap("monotone-interpolant", cum, x)


def compose_prior(density_x: DensitySpec, prior_z: DensitySpec) -> QuantileMap:
    """``Q = F_X^{-1}(F_Z(z))`` tabulated on the prior's grid over ``[z_min, z_max]``."""
    tx, cx = density_x.cdf_table()
    tz, cz = prior_z.cdf_table()
    return QuantileMap("monotone-interpolant", tz, np.interp(cz, cx, tx))


def sample_product(maps: Sequence[QuantileMap], rng: Prng, n: int) -> np.ndarray:
    """n x d samples; column j is ``maps[j]`` applied to its own uniform draw."""
    if len(maps) < 1:
        raise ValueError("need at least one quantile map")
    u = rng.uniform((n, len(maps)))
    return np.column_stack([q(u[:, j]) for j, q in enumerate(maps)])


# ----------------------------------------------------------------------
# reference targets


def truncated_normal(lo: float, hi: float, mu: float = 0.0, sd: float = 1.0, grid_n: int = DEFAULT_GRID) -> DensitySpec:
    """Normal density restricted to ``[lo, hi]``, normalized by its trapezoid mass on the grid."""
    return DensitySpec.normalized(lo, hi, lambda x: np.exp(-0.5 * ((x - mu) / sd) ** 2), grid_n)


def bimodal_mixture(lo: float = -2.0, hi: float = 2.0, centre: float = 1.0, sd: float = 0.2, grid_n: int = DEFAULT_GRID) -> DensitySpec:
    """Equal mixture of N(-centre, sd^2) and N(centre, sd^2) truncated to ``[lo, hi]``."""

    def f(x):
        return np.exp(-0.5 * ((x + centre) / sd) ** 2) + np.exp(-0.5 * ((x - centre) / sd) ** 2)

    return DensitySpec.normalized(lo, hi, f, grid_n)


# ----------------------------------------------------------------------
# width sweep


@dataclass
class QuantileFit:
    params: ModelParams
    mse: float
    js: float


def _regression_init(width: int, rng: Prng, slope_scale: float) -> ModelParams:
    # tanh units with random slopes and centres spread over (0, 1)
    specs = [LayerSpec("deterministic", 1, width, "tanh"), LayerSpec("deterministic", width, 1)]
    w = slope_scale * rng.gaussian((width, 1))
    centres = rng.uniform((width, 1))
    b = -(w * centres).T
    c = 0.02 * rng.gaussian((1, width))
    return ModelParams(specs, [w, b, c, np.zeros((1, 1))])


def fit_mlp_quantile(
    qmap: QuantileMap,
    width: int,
    rng: Prng,
    steps: int = 20000,
    m: int = 4096,
    batch: int = 256,
    lr: float = 1e-2,
    slope_scale: float = 30.0,
    n_eval: int = 100_000,
    bins: int = 64,
) -> QuantileFit:
    """Least-squares fit of ``z -> Q(z)`` with a one-hidden-layer tanh network.

    Training points are the fixed grid ``z_i = (i + 1/2) / m``; step ``k``
    uses the strided slice ``k mod (m / batch)`` of it, so every point is
    visited once per ``m / batch`` steps.  The JS score compares ``n_eval``
    network pushforward samples to ``n_eval`` direct samples of ``qmap``.
    """
    if width < 1:
        raise ValueError(f"width must be at least 1, got {width}")
    if m % batch:
        raise ValueError(f"batch {batch} must divide m={m}")
    params = _regression_init(width, rng, slope_scale)
    z = ((np.arange(m) + 0.5) / m)[:, None]
    y = qmap(z)
    stride = m // batch
    state = AdamState.like(params.arrays)
    for k in range(steps):
        sl = slice(k % stride, None, stride)
        g = Graph()
        bound = params.bind(g)
        pred = model_forward(bound, g.constant(z[sl]))
        loss = ad.mean(ad.square(ad.sub(pred, g.constant(y[sl]))))
        grads = g.backward(loss)
        adam_step(state, params.arrays, [grads[t.index].value for t in bound.tensors], lr, 0.9, 0.999, 1e-8)
    mse = float(np.mean((sample(params, z) - y) ** 2))
    push = sample(params, rng.uniform((n_eval, 1))).ravel()
    direct = qmap.sample(rng, n_eval)
    js = js_divergence_1d(push, direct, (direct.min(), direct.max()), bins)
    return QuantileFit(params, mse, js)


def sweep_width(
    qmap: QuantileMap,
    widths: Sequence[int],
    seeds: Sequence[int],
    steps: int = 20000,
    **fit_kwargs,
) -> list[dict]:
    """Rows ``{width, seed, mse, js}`` for every (width, seed) pair."""
    rows = []
    for width in widths:
        for seed in seeds:
            fit = fit_mlp_quantile(qmap, width, Prng(seed), steps=steps, **fit_kwargs)
            rows.append({"width": width, "seed": seed, "mse": fit.mse, "js": fit.js})
    return rows
