"""PINN function class: Fourier feature embedding, residual MLP, bounded parameters.

All tensors are 64-bit floats. The canonical flat parameter ordering is: hidden and
output weights in layer order, then biases in the same order, then the four raw
physical parameters (beta, delta, gamma, lambda_diff tilde).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .model import DomainSpec, ModelError

DTYPE = torch.float64

PHYS_PARAM_NAMES = ("beta", "delta", "gamma", "lambda_diff")


class NetworkError(ValueError):
    """Invalid network configuration or checkpoint."""


def _activation(name: str):
    if name == "tanh":
        return torch.tanh
    if name == "swish":
        return torch.nn.functional.silu
    if name == "identity":
        return lambda z: z
    if name == "square":
        return lambda z: z * z
    raise NetworkError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class NetworkConfig:
    dim: int = 1
    n_hidden: int = 4
    width: int = 64
    activation: str = "tanh"
    n_frequencies: int = 32
    frequency_scale: float = 1.0
    param_bounds: tuple = (1.0, 1.0, 1.0, 1.0)
    theta_start: tuple = (0.5, 0.5, 0.5, 0.5)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise NetworkError("dim must be 1 or 2")
        if self.n_hidden < 1 or self.width < 1 or self.n_frequencies < 1:
            raise NetworkError("invalid network shape")
        _activation(self.activation)
        if any(b <= 0 for b in self.param_bounds):
            raise NetworkError("param bounds must be > 0")
        if any(not 0.0 < v < b for v, b in zip(self.theta_start, self.param_bounds)):
            raise NetworkError("theta_start must lie strictly inside (0, bound)")


@dataclass(frozen=True)
class FourierFeatureMap:
    """Random sinusoidal embedding gamma(x) = [sin(2 pi B x), cos(2 pi B x)]."""

    B: np.ndarray

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def dim(self) -> int:
        return self.B.shape[1]

    @classmethod
    def sample(cls, m: int, dim: int, scale: float, rng: np.random.Generator):
        return cls(B=rng.normal(0.0, scale, size=(m, dim)))


def fourier_features(fmap: FourierFeatureMap, x) -> np.ndarray:
    """Embed points of shape (dim,) or (N, dim); output length 2m per point."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[-1] != fmap.dim:
        raise NetworkError(f"point dim {pts.shape[-1]} does not match map dim {fmap.dim}")
    proj = 2.0 * np.pi * pts @ fmap.B.T
    feats = np.concatenate([np.sin(proj), np.cos(proj)], axis=-1)
    return feats[0] if np.asarray(x).ndim == 1 else feats


def transform_params(raw, bounds):
    """Bounded transform theta = bound * sigmoid(raw); range (0, bound)."""
    if isinstance(raw, torch.Tensor):
        if not isinstance(bounds, torch.Tensor):
            bounds = torch.as_tensor(np.asarray(bounds, dtype=float), dtype=DTYPE)
        return bounds * torch.sigmoid(raw)
    raw = np.asarray(raw, dtype=float)
    return np.asarray(bounds, dtype=float) / (1.0 + np.exp(-raw))


def inverse_transform_params(values, bounds) -> np.ndarray:
    """Logit inverse of transform_params; values must lie in (0, bound)."""
    v = np.asarray(values, dtype=float) / np.asarray(bounds, dtype=float)
    if np.any(v <= 0) or np.any(v >= 1):
        raise NetworkError("values must lie strictly inside (0, bound)")
    return np.log(v / (1.0 - v))


class PinnModel:
    """Four-output coordinate network over the space-time cylinder.

    Inputs are normalized to [0, 1] per axis (t/T, x/L) before the spatial
    coordinates are embedded; the time coordinate is passed raw alongside the
    embedding, so the input width is 1 + 2m.
    """

    def __init__(self, config: NetworkConfig, domain: DomainSpec, feature_map: FourierFeatureMap,
                 weights, biases, raw_params, seed: int | None = None):
        if domain.dim != config.dim:
            raise NetworkError("domain dim does not match network config")
        if feature_map.dim != config.dim:
            raise NetworkError("feature map dim does not match network config")
        self.config = config
        self.domain = domain
        self.feature_map = feature_map
        self.seed = seed
        self._act = _activation(config.activation)
        self._B = torch.as_tensor(feature_map.B, dtype=DTYPE)
        self._scale = torch.tensor([domain.T] + list(domain.lengths), dtype=DTYPE)
        self.bounds = torch.as_tensor(np.asarray(config.param_bounds, dtype=float), dtype=DTYPE)
        self.weights = [torch.as_tensor(w, dtype=DTYPE).requires_grad_(True) for w in weights]
        self.biases = [torch.as_tensor(b, dtype=DTYPE).requires_grad_(True) for b in biases]
        self.raw_params = torch.as_tensor(np.asarray(raw_params, dtype=float), dtype=DTYPE).requires_grad_(True)
        in_dim = 1 + 2 * config.n_frequencies
        shapes = [w.shape for w in self.weights]
        expect_in = in_dim
        for li in range(config.n_hidden):
            if shapes[li] != (expect_in, config.width):
                raise NetworkError(f"layer {li} weight shape {tuple(shapes[li])} inconsistent")
            expect_in = config.width
        if shapes[-1] != (config.width, 4):
            raise NetworkError("output layer must map width -> 4")

    # -- construction ------------------------------------------------------

    @classmethod
    def xavier_init(cls, config: NetworkConfig, domain: DomainSpec, seed: int) -> "PinnModel":
        """Xavier-uniform weights, zero biases, raw params at configured start values."""
        rng = np.random.default_rng(seed)
        fmap = FourierFeatureMap.sample(config.n_frequencies, config.dim,
                                        config.frequency_scale, rng)
        in_dim = 1 + 2 * config.n_frequencies
        dims = [in_dim] + [config.width] * config.n_hidden + [4]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        raw = inverse_transform_params(config.theta_start, config.param_bounds)
        return cls(config, domain, fmap, weights, biases, raw, seed=seed)

    # -- evaluation --------------------------------------------------------

    def forward(self, t: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        """Evaluate at t (N,) or (N,1) and x (N, dim); returns (N, 4)."""
        t = t.reshape(-1, 1)
        x = x.reshape(-1, self.config.dim)
        if not (torch.isfinite(t).all() and torch.isfinite(x).all()):
            raise NetworkError("non-finite network input")
        tn = t / self._scale[0]
        xn = x / self._scale[1:]
        proj = 2.0 * torch.pi * xn @ self._B.T
        h = torch.cat([tn, torch.sin(proj), torch.cos(proj)], dim=1)
        streams = []
        for li in range(self.config.n_hidden):
            z = self._act(h @ self.weights[li] + self.biases[li])
            if li >= 2 and li % 2 == 0:
                z = z + streams[li - 2]
            streams.append(z)
            h = z
        return h @ self.weights[-1] + self.biases[-1]

    def forward_np(self, t, x) -> np.ndarray:
        with torch.no_grad():
            out = self.forward(torch.as_tensor(np.asarray(t, dtype=float), dtype=DTYPE),
                               torch.as_tensor(np.asarray(x, dtype=float), dtype=DTYPE))
        return out.numpy()

    def transformed_params(self) -> torch.Tensor:
        return self.bounds * torch.sigmoid(self.raw_params)

    def transformed_params_np(self) -> np.ndarray:
        with torch.no_grad():
            return self.transformed_params().numpy().copy()

    # -- flat parameter vector --------------------------------------------

    def parameters(self):
        """Trainable tensors in canonical order: weights, biases, raw params."""
        return [*self.weights, *self.biases, self.raw_params]

    @property
    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())

    @property
    def raw_param_slice(self) -> slice:
        return slice(self.n_params - 4, self.n_params)

    def get_flat(self) -> np.ndarray:
        with torch.no_grad():
            return np.concatenate([p.detach().numpy().ravel() for p in self.parameters()]).copy()

    def set_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params,):
            raise NetworkError(f"flat vector length {vec.shape} != {self.n_params}")
        off = 0
        with torch.no_grad():
            for p in self.parameters():
                n = p.numel()
                p.copy_(torch.as_tensor(vec[off:off + n].reshape(p.shape), dtype=DTYPE))
                off += n

    def zero_grad(self):
        for p in self.parameters():
            if p.grad is not None:
                p.grad = None

    def grad_flat(self) -> np.ndarray:
        out = []
        for p in self.parameters():
            if p.grad is None:
                out.append(np.zeros(p.numel()))
            else:
                out.append(p.grad.detach().numpy().ravel().copy())
        return np.concatenate(out)


# -- checkpoint format -----------------------------------------------------
#
# Line 1: UTF-8 JSON header terminated by '\n' (architecture, domain, seed,
#         Fourier frequencies, parameter count).
# Then:   n_params little-endian IEEE-754 float64 values in canonical order.

CHECKPOINT_KIND = "seirpinn-checkpoint"


def save_checkpoint(model: PinnModel, path):
    header = {
        "kind": CHECKPOINT_KIND,
        "schema_version": "1",
        "network": {
            "dim": model.config.dim,
            "n_hidden": model.config.n_hidden,
            "width": model.config.width,
            "activation": model.config.activation,
            "n_frequencies": model.config.n_frequencies,
            "frequency_scale": model.config.frequency_scale,
            "param_bounds": list(model.config.param_bounds),
            "theta_start": list(model.config.theta_start),
        },
        "domain": {"lengths": list(model.domain.lengths), "T": model.domain.T},
        "seed": model.seed,
        "fourier_b": model.feature_map.B.tolist(),
        "n_params": model.n_params,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(model.get_flat().astype("<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> PinnModel:
    try:
        with open(path, "rb") as f:
            header_line = f.readline()
            header = json.loads(header_line.decode())
            if header.get("kind") != CHECKPOINT_KIND:
                raise NetworkError(f"{path} is not a model checkpoint")
            blob = f.read()
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        raise NetworkError(f"cannot read checkpoint {path}: {exc}") from exc
    n = header["n_params"]
    if len(blob) != 8 * n:
        raise NetworkError(f"checkpoint {path} truncated: expected {8 * n} bytes, got {len(blob)}")
    net = header["network"]
    config = NetworkConfig(dim=net["dim"], n_hidden=net["n_hidden"], width=net["width"],
                           activation=net["activation"], n_frequencies=net["n_frequencies"],
                           frequency_scale=net["frequency_scale"],
                           param_bounds=tuple(net["param_bounds"]),
                           theta_start=tuple(net["theta_start"]))
    domain = DomainSpec(dim=net["dim"], lengths=tuple(header["domain"]["lengths"]),
                        T=header["domain"]["T"])
    fmap = FourierFeatureMap(B=np.array(header["fourier_b"], dtype=float))
    flat = np.frombuffer(blob, dtype="<f8").astype(float)
    in_dim = 1 + 2 * config.n_frequencies
    dims = [in_dim] + [config.width] * config.n_hidden + [4]
    weights = [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    model = PinnModel(config, domain, fmap, weights, biases, np.zeros(4), seed=header.get("seed"))
    model.set_flat(flat)
    return model
