"""Fully connected layers, deterministic and stochastic (SDG).

A stochastic layer has two affine heads over the same input, a mean head
and a scale head, and emits ``act(mu(h) + sigma(h) * eps)`` with ``eps`` a
standard normal draw held constant w.r.t. differentiation.  The scale head
is a raw affine map, so ``sigma`` may be negative; only ``sigma * eps``
enters, giving the conditional law N(mu, |sigma|).
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, ShapeError, Tensor
from .prng import Prng

ACTIVATIONS = ("none", "relu", "leaky_relu", "tanh", "sigmoid")
INIT_STD = 0.02


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    activation: str = "none"
    alpha: float = 0.2

    def __post_init__(self):
        if self.kind not in ("deterministic", "stochastic"):
            raise ValueError(f"layer kind must be deterministic or stochastic, got {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def stochastic(self) -> bool:
        return self.kind == "stochastic"

    @property
    def n_params(self) -> int:
        block = self.in_dim * self.out_dim + self.out_dim
        return 2 * block if self.stochastic else block

    def __str__(self) -> str:
        act = self.activation
        if act == "leaky_relu":
            act = f"leaky_relu({self.alpha:g})"
        return f"{'S' if self.stochastic else 'D'}{self.in_dim}-{self.out_dim}:{act}"


_LAYER_RE = re.compile(r"^([DS])(\d+)-(\d+)(?::([a-z_]+)(?:\(([-+0-9.eE]+)\))?)?$")


def parse_layers(text: str) -> list[LayerSpec]:
    """Parse ``"S2-100:none,D100-10:none"`` style architecture strings.

    ``D``/``S`` select deterministic/stochastic; the activation suffix is
    optional and ``leaky_relu(0.2)`` carries its negative slope.
    """
    specs = []
    for token in text.replace(" ", "").split(","):
        m = _LAYER_RE.match(token)
        if m is None:
            raise ValueError(f"malformed layer token {token!r}")
        kind = "stochastic" if m.group(1) == "S" else "deterministic"
        act = m.group(4) or "none"
        alpha = float(m.group(5)) if m.group(5) else 0.2
        specs.append(LayerSpec(kind, int(m.group(2)), int(m.group(3)), act, alpha))
    check_chain(specs)
    return specs


def format_layers(specs: Sequence[LayerSpec]) -> str:
    return ",".join(str(s) for s in specs)


def check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ValueError("a model needs at least one layer")
    for a, b in zip(specs, specs[1:]):
        if a.out_dim != b.in_dim:
            raise ValueError(f"layer dims do not chain: {a} feeds {b}")


def _param_names(spec: LayerSpec) -> tuple[str, ...]:
    if spec.stochastic:
        return ("w_mu", "b_mu", "w_sigma", "b_sigma")
    return ("w", "b")


@dataclass
class ModelParams:
    """Parameter store: one flat list of arrays plus a per-layer name->slot layout.

    Weights are ``(out, in)`` and biases ``(1, out)`` so a layer computes
    ``h @ W.T + b``.
    """

    specs: list[LayerSpec]
    arrays: list[np.ndarray]
    layout: list[dict[str, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.layout:
            self.layout = _build_layout(self.specs)

    @property
    def count(self) -> int:
        return int(sum(a.size for a in self.arrays))

    def layer(self, i: int) -> dict[str, np.ndarray]:
        return {name: self.arrays[slot] for name, slot in self.layout[i].items()}

    def copy(self) -> "ModelParams":
        return ModelParams(list(self.specs), [a.copy() for a in self.arrays], [dict(d) for d in self.layout])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def bind(self, graph: Graph, requires_grad: bool = True) -> "BoundParams":
        """Register every array as a leaf of ``graph``."""
        if requires_grad:
            tensors = [graph.leaf(a) for a in self.arrays]
        else:
            tensors = [graph.constant(a) for a in self.arrays]
        return BoundParams(self, tensors)


def _build_layout(specs):
    layout, slot = [], 0
    for spec in specs:
        names = _param_names(spec)
        layout.append({name: slot + k for k, name in enumerate(names)})
        slot += len(names)
    return layout


@dataclass
class BoundParams:
    params: ModelParams
    tensors: list[Tensor]

    @property
    def specs(self) -> list[LayerSpec]:
        return self.params.specs

    def layer(self, i: int) -> dict[str, Tensor]:
        return {name: self.tensors[slot] for name, slot in self.params.layout[i].items()}


def init_params(specs: Sequence[LayerSpec], rng: Prng) -> ModelParams:
    """Weights ~ N(0, 0.02^2), biases zero; weights drawn layer by layer, mu head first."""
    specs = list(specs)
    check_chain(specs)
    arrays = []
    for spec in specs:
        for name in _param_names(spec):
            if name.startswith("w"):
                arrays.append(INIT_STD * rng.gaussian((spec.out_dim, spec.in_dim)))
            else:
                arrays.append(np.zeros((1, spec.out_dim)))
    return ModelParams(specs, arrays)


def activate(h: Tensor, spec: LayerSpec) -> Tensor:
    if spec.activation == "none":
        return h
    if spec.activation == "relu":
        return ad.relu(h)
    if spec.activation == "leaky_relu":
        return ad.leaky_relu(h, spec.alpha)
    if spec.activation == "tanh":
        return ad.tanh(h)
    return ad.sigmoid(h)


def _affine(h: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add_row(ad.matmul(h, ad.transpose(w)), b)


def _check_input(h: Tensor, spec: LayerSpec, i: int) -> None:
    if h.shape[1] != spec.in_dim:
        raise ShapeError(f"layer {i} ({spec}): input has {h.shape[1]} columns, expected {spec.in_dim}")


def forward_deterministic(bound: BoundParams, i: int, h: Tensor) -> Tensor:
    spec = bound.specs[i]
    _check_input(h, spec, i)
    p = bound.layer(i)
    if spec.stochastic:
        return activate(_affine(h, p["w_mu"], p["b_mu"]), spec)
    return activate(_affine(h, p["w"], p["b"]), spec)


def stochastic_heads(bound: BoundParams, i: int, h: Tensor) -> tuple[Tensor, Tensor]:
    spec = bound.specs[i]
    _check_input(h, spec, i)
    if not spec.stochastic:
        raise ValueError(f"layer {i} ({spec}) is not stochastic")
    p = bound.layer(i)
    return _affine(h, p["w_mu"], p["b_mu"]), _affine(h, p["w_sigma"], p["b_sigma"])


def forward_stochastic(bound: BoundParams, i: int, h: Tensor, eps: Tensor) -> Tensor:
    """``act(mu(h) + sigma(h) * eps)`` with ``eps`` of shape (batch, out_dim)."""
    mu, sigma = stochastic_heads(bound, i, h)
    return _reparameterize(bound.specs[i], mu, sigma, eps)


def _reparameterize(spec, mu, sigma, eps):
    if eps.shape != mu.shape:
        raise ShapeError(f"eps has shape {eps.shape}, expected {mu.shape}")
    return activate(ad.add(mu, ad.mul(sigma, eps)), spec)


def model_forward(
    bound: BoundParams,
    z: Tensor,
    rng: Prng | None = None,
    eps: Sequence[np.ndarray] | None = None,
) -> Tensor:
    """Run every layer in order.

    Each stochastic layer consumes one eps tensor: the next entry of ``eps``
    when given, otherwise a fresh draw from ``rng`` taken after both heads
    are evaluated.
    """
    specs = bound.specs
    if z.shape[1] != specs[0].in_dim:
        raise ShapeError(f"z has {z.shape[1]} columns, model expects {specs[0].in_dim}")
    eps_iter = iter(eps) if eps is not None else None
    h = z
    for i, spec in enumerate(specs):
        if not spec.stochastic:
            h = forward_deterministic(bound, i, h)
            continue
        mu, sigma = stochastic_heads(bound, i, h)
        if eps_iter is not None:
            noise = next(eps_iter, None)
            if noise is None:
                raise ValueError("fixed eps list is shorter than the number of stochastic layers")
        elif rng is not None:
            noise = rng.gaussian(mu.shape)
        else:
            raise ValueError("a stochastic model needs an rng or a fixed eps list")
        h = _reparameterize(spec, mu, sigma, h.graph.constant(noise))
    return h


def sample(params: ModelParams, z: np.ndarray, rng: Prng | None = None) -> np.ndarray:
    """Values-only forward pass for evaluation (nothing is recorded)."""
    g = Graph()
    with g.no_record():
        out = model_forward(params.bind(g), g.leaf(z), rng=rng)
    return out.value


# ----------------------------------------------------------------------
# serialization: one text header line, then little-endian float64 values


def write_params(params: ModelParams, path) -> None:
    header = f"layers={format_layers(params.specs)};count={params.count}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(params.flat().astype("<f8").tobytes())


def read_params(path) -> ModelParams:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing header line")
    m = re.fullmatch(r"layers=(.+);count=(\d+)", raw[:nl].decode("ascii"))
    if m is None:
        raise ValueError(f"{path}: malformed header {raw[:nl]!r}")
    specs = parse_layers(m.group(1))
    count = int(m.group(2))
    expected = sum(s.n_params for s in specs)
    if count != expected:
        raise ValueError(f"{path}: header count {count} disagrees with layers ({expected})")
    body = raw[nl + 1 :]
    if len(body) != 8 * count:
        raise ValueError(f"{path}: expected {8 * count} bytes of parameters, found {len(body)}")
    flat = np.array(struct.unpack(f"<{count}d", body), dtype=np.float64)
    arrays, pos = [], 0
    for spec in specs:
        for name in _param_names(spec):
            shape = (spec.out_dim, spec.in_dim) if name.startswith("w") else (1, spec.out_dim)
            size = shape[0] * shape[1]
            arrays.append(flat[pos : pos + size].reshape(shape))
            pos += size
    return ModelParams(specs, arrays)
