"""Synthetic benchmark datasets built from random affine generators.

``linear-gaussian`` (Data1 with N1=100, Data2 with N1=200)::

    X = A2 (A1 z + b1) + b2,               z ~ N(0, I_d)

``sdg`` (Data3, N1=100)::

    X = A2 (A11 z + (A12 z) * eps + b1) + b2,   eps ~ N(0, I_N1)

with every A ~ N(0, 1) entrywise and every b ~ N(0, 1e-4) entrywise
(variance 1e-4, i.e. std 0.01).  The generator matrices are drawn once per
dataset from its seed and kept, so fresh ground-truth samples can be drawn
later from the very same network.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .nn import LayerSpec, ModelParams
from .prng import Prng

KINDS = ("linear-gaussian", "sdg")
PRESETS = {
    "data1": ("linear-gaussian", 100),
    "data2": ("linear-gaussian", 200),
    "data3": ("sdg", 100),
}
BIAS_STD = 0.01


class DatasetFormatError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "linear-gaussian"
    d: int = 2
    D: int = 10
    n1: int = 100
    n: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if not 0 < self.d <= self.D:
            raise ValueError(f"need 0 < d <= D, got d={self.d}, D={self.D}")
        if self.n <= 0 or self.n1 <= 0:
            raise ValueError("n and N1 must be positive")

    @classmethod
    def preset(cls, name: str, seed: int = 0, n: int = 10000) -> "SynthSpec":
        """``data1``, ``data2`` or ``data3`` with d=2, D=10."""
        try:
            kind, n1 = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
        return cls(kind=kind, n1=n1, n=n, seed=seed)


@dataclass
class GroundTruth:
    """The frozen data-generating network.  ``a_sigma`` is None for linear-gaussian."""

    a_mu: np.ndarray  # (N1, d)
    b1: np.ndarray  # (N1,)
    a2: np.ndarray  # (D, N1)
    b2: np.ndarray  # (D,)
    a_sigma: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return "linear-gaussian" if self.a_sigma is None else "sdg"

    def sample(self, n: int, rng: Prng) -> np.ndarray:
        z = rng.gaussian((n, self.a_mu.shape[1]))
        h = z @ self.a_mu.T
        if self.a_sigma is not None:
            eps = rng.gaussian((n, self.a_mu.shape[0]))
            h = h + (z @ self.a_sigma.T) * eps
        h = h + self.b1
        return h @ self.a2.T + self.b2

    def as_model(self) -> ModelParams:
        """The same network expressed as an nn model (no activations)."""
        n1, d = self.a_mu.shape
        D = self.a2.shape[0]
        if self.a_sigma is None:
            specs = [LayerSpec("deterministic", d, n1), LayerSpec("deterministic", n1, D)]
            arrays = [self.a_mu, self.b1[None, :]]
        else:
            specs = [LayerSpec("stochastic", d, n1), LayerSpec("deterministic", n1, D)]
            arrays = [self.a_mu, self.b1[None, :], self.a_sigma, np.zeros((1, n1))]
        arrays += [self.a2, self.b2[None, :]]
        return ModelParams(specs, [np.array(a, dtype=np.float64) for a in arrays])


@dataclass
class Dataset:
    data: np.ndarray
    spec: SynthSpec
    truth: GroundTruth = field(repr=False)

    def __post_init__(self):
        if self.data.shape != (self.spec.n, self.spec.D):
            raise ValueError(f"data shape {self.data.shape} disagrees with its SynthSpec (n={self.spec.n}, D={self.spec.D})")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("dataset contains non-finite values")


def draw_truth(spec: SynthSpec, rng: Prng) -> GroundTruth:
    """Draw generator matrices in a fixed order: mu-map, [sigma-map], b1, A2, b2."""
    a_mu = rng.gaussian((spec.n1, spec.d))
    a_sigma = rng.gaussian((spec.n1, spec.d)) if spec.kind == "sdg" else None
    b1 = BIAS_STD * rng.gaussian(spec.n1)
    a2 = rng.gaussian((spec.D, spec.n1))
    b2 = BIAS_STD * rng.gaussian(spec.D)
    return GroundTruth(a_mu, b1, a2, b2, a_sigma)


def _generate(spec: SynthSpec, overrides: dict) -> Dataset:
    rng = Prng(spec.seed)
    truth = draw_truth(spec, rng)
    if overrides:
        truth = replace(truth, **{k: np.asarray(v, dtype=np.float64) for k, v in overrides.items()})
    return Dataset(truth.sample(spec.n, rng), spec, truth)


def gen_linear_gaussian(spec: SynthSpec, **overrides) -> Dataset:
    """Data1/Data2.  Keyword overrides (``a_mu``, ``b1``, ``a2``, ``b2``) replace drawn matrices."""
    if spec.kind != "linear-gaussian":
        raise ValueError(f"gen_linear_gaussian needs kind linear-gaussian, got {spec.kind!r}")
    return _generate(spec, overrides)


def gen_sdg_data(spec: SynthSpec, **overrides) -> Dataset:
    """Data3; ``eps`` is redrawn for every sample."""
    if spec.kind != "sdg":
        raise ValueError(f"gen_sdg_data needs kind sdg, got {spec.kind!r}")
    return _generate(spec, overrides)


def generate(spec: SynthSpec) -> Dataset:
    return gen_sdg_data(spec) if spec.kind == "sdg" else gen_linear_gaussian(spec)


# ----------------------------------------------------------------------
# text format


def _header(spec: SynthSpec) -> str:
    return f"# kind={spec.kind} d={spec.d} D={spec.D} N1={spec.n1} n={spec.n} seed={spec.seed}"


_HEADER_RE = re.compile(r"# kind=(\S+) d=(\d+) D=(\d+) N1=(\d+) n=(\d+) seed=(-?\d+)")


def write_dataset(dataset: Dataset, path) -> None:
    lines = [_header(dataset.spec)]
    lines += [",".join(f"{v:.17g}" for v in row) for row in dataset.data]
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    """Parse a dataset file; the generator matrices are redrawn from the header seed."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DatasetFormatError(path, 1, "empty file")
    m = _HEADER_RE.fullmatch(lines[0].strip())
    if m is None:
        raise DatasetFormatError(path, 1, f"malformed header {lines[0]!r}")
    try:
        spec = SynthSpec(m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4)), int(m.group(5)), int(m.group(6)))
    except ValueError as exc:
        raise DatasetFormatError(path, 1, str(exc)) from None
    rows = lines[1:]
    data = np.empty((spec.n, spec.D))
    for k in range(spec.n):
        lineno = k + 2
        if k >= len(rows):
            raise DatasetFormatError(path, lineno, f"expected {spec.n} data rows, found {len(rows)}")
        fields = rows[k].split(",")
        if len(fields) != spec.D:
            raise DatasetFormatError(path, lineno, f"expected {spec.D} values, found {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise DatasetFormatError(path, lineno, str(exc)) from None
        if not all(math.isfinite(v) for v in values):
            raise DatasetFormatError(path, lineno, "non-finite value")
        data[k] = values
    if len(rows) > spec.n:
        raise DatasetFormatError(path, spec.n + 2, f"expected {spec.n} data rows, found {len(rows)}")
    truth = draw_truth(spec, Prng(spec.seed))
    return Dataset(data, spec, truth)


def default_path(out_dir, preset: str, seed: int) -> Path:
    return Path(out_dir) / f"{preset}_seed{seed}.csv"
