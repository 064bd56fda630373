"""Composable flow stacks: ordered layers over a factorized prior.

A stack is square when data_dim == latent_dim and injective when a slice
layer widens the representation; injective stacks disable the plain
change-of-variables density in favor of the Gram-determinant form evaluated
on the model manifold.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import CapabilityError, DegenerateManifoldError, FlowError
from .layers import Layer, ActNorm, layer_from_config

_LOG_2PI = float(np.log(2.0 * np.pi))


class GaussianPrior:
    """Unit Gaussian, independent per dimension."""

    kind = "gaussian"

    def __init__(self, dim: int):
        self.dim = dim

    def log_prob(self, z: Node, idxs=None) -> Node:
        if idxs is not None:
            z = ad.slice_(z, (slice(None), list(idxs)))
        k = z.value.shape[1]
        return ad.sum_(-0.5 * (z * z), axis=1) - 0.5 * k * _LOG_2PI

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(size=(n, self.dim))

    def config(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


class FactorizedMixturePrior:
    """Independent per-dimension 1-D Gaussian mixtures."""

    kind = "mixture"

    def __init__(self, weights, means, sigmas):
        self.weights = np.asarray(weights, float)
        self.means = np.asarray(means, float)
        self.sigmas = np.asarray(sigmas, float)
        if not (self.weights.shape == self.means.shape == self.sigmas.shape):
            raise FlowError("mixture prior arrays must share shape (dim, K)")
        self.dim = self.weights.shape[0]
        row_sums = self.weights.sum(axis=1)
        if not np.allclose(row_sums, 1.0):
            raise FlowError("mixture weights must sum to 1 per dimension")

    def log_prob(self, z: Node, idxs=None) -> Node:
        dims = range(self.dim) if idxs is None else idxs
        total: Node | None = None
        for d in dims:
            col = ad.slice_(z, (slice(None), slice(d, d + 1)))
            t = (col - ad.constant(self.means[d][None, :])) / ad.constant(self.sigmas[d][None, :])
            comp = (
                ad.constant(np.log(self.weights[d])[None, :])
                - 0.5 * (t * t)
                - ad.constant(np.log(self.sigmas[d])[None, :])
                - 0.5 * _LOG_2PI
            )
            term = ad.logsumexp(comp, axis=1)
            total = term if total is None else total + term
        return total

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((n, self.dim))
        for d in range(self.dim):
            comp = rng.choice(self.weights.shape[1], size=n, p=self.weights[d])
            out[:, d] = rng.normal(self.means[d][comp], self.sigmas[d][comp])
        return out

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "sigmas": self.sigmas.tolist(),
        }


def prior_from_config(cfg: dict):
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind == GaussianPrior.kind:
        return GaussianPrior(**cfg)
    if kind == FactorizedMixturePrior.kind:
        return FactorizedMixturePrior(**cfg)
    raise FlowError(f"unknown prior kind {kind!r}")


class FlowStack:
    """Ordered composition of layers with a flat parameter vector."""

    def __init__(self, layers: list[Layer], prior=None, params: np.ndarray | None = None,
                 seed: int = 0):
        if not layers:
            raise FlowError("stack needs at least one layer")
        self.layers = list(layers)
        self.latent_dim = layers[0].in_dim
        width = self.latent_dim
        self._slice_count = 0
        for ly in layers:
            if ly.in_dim != width:
                raise FlowError(
                    f"layer {ly.kind} expects width {ly.in_dim}, got {width}"
                )
            if ly.out_dim != ly.in_dim:
                self._slice_count += 1
            width = ly.out_dim
        if self._slice_count > 1:
            raise FlowError("at most one slice layer per stack")
        self.data_dim = width
        self.prior = prior if prior is not None else GaussianPrior(self.latent_dim)
        if self.prior.dim != self.latent_dim:
            raise FlowError("prior dimension must equal latent dimension")
        self.offsets = np.cumsum([0] + [ly.n_params for ly in self.layers])
        self.n_params = int(self.offsets[-1])
        if params is None:
            rng = np.random.default_rng(seed)
            params = (
                np.concatenate([ly.init(rng) for ly in self.layers])
                if self.n_params
                else np.zeros(0)
            )
        if params.shape != (self.n_params,):
            raise FlowError(f"expected {self.n_params} parameters, got {params.shape}")
        self.params = np.asarray(params, dtype=np.float64)

    # ---- structure -------------------------------------------------------

    @property
    def is_injective(self) -> bool:
        return self.data_dim > self.latent_dim

    def layer_params(self, p: Node, i: int) -> Node:
        lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
        return ad.slice_(p, (slice(lo, hi),))

    def param_node(self) -> Node:
        return ad.constant(self.params)

    def config(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "data_dim": self.data_dim,
            "prior": self.prior.config(),
            "layers": [ly.config() for ly in self.layers],
        }

    @classmethod
    def from_config(cls, cfg: dict, params: np.ndarray | None = None) -> "FlowStack":
        layers = [layer_from_config(c) for c in cfg["layers"]]
        prior = prior_from_config(cfg["prior"])
        return cls(layers, prior=prior, params=params)

    # ---- node-level core ---------------------------------------------------

    def forward_nodes(self, p: Node, z: Node) -> tuple[Node, Node]:
        B = z.value.shape[0]
        logdet: Node = ad.constant(np.zeros(B))
        cur = z
        for i, ly in enumerate(self.layers):
            cur, ld = ly.forward(self.layer_params(p, i), cur)
            if ld is not None:
                logdet = logdet + ld
        return cur, logdet

    def inverse_nodes(self, p: Node, x: Node) -> tuple[Node, Node]:
        B = x.value.shape[0]
        logdet: Node = ad.constant(np.zeros(B))
        cur = x
        for i in reversed(range(len(self.layers))):
            cur, ld = self.layers[i].inverse(self.layer_params(p, i), cur)
            if ld is not None:
                logdet = logdet + ld
        return cur, logdet

    def log_prob_nodes(self, p: Node, x: Node) -> Node:
        if self.is_injective:
            raise CapabilityError(
                "log_prob is undefined for injective stacks; use log_prob_injective"
            )
        z, logdet_g = self.inverse_nodes(p, x)
        return self.prior.log_prob(z) + logdet_g

    # ---- numpy API ---------------------------------------------------------

    @staticmethod
    def _batched(a: np.ndarray) -> tuple[np.ndarray, bool]:
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 1:
            return a[None, :], True
        return a, False

    def forward(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        zb, single = self._batched(z)
        x, ld = self.forward_nodes(self.param_node(), ad.constant(zb))
        if single:
            return x.value[0].copy(), float(ld.value[0])
        return x.value.copy(), ld.value.copy()

    def inverse(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xb, single = self._batched(x)
        z, ld = self.inverse_nodes(self.param_node(), ad.constant(xb))
        if single:
            return z.value[0].copy(), float(ld.value[0])
        return z.value.copy(), ld.value.copy()

    def log_prob(self, x: np.ndarray) -> np.ndarray | float:
        xb, single = self._batched(x)
        lp = self.log_prob_nodes(self.param_node(), ad.constant(xb))
        return float(lp.value[0]) if single else lp.value.copy()

    def jacobian_at(self, z: np.ndarray) -> np.ndarray:
        """Dense d x / d z from latent-dim forward probes at a single point."""
        z = np.asarray(z, dtype=np.float64)
        p = self.param_node()
        _, push = ad.linearize(lambda zz: self.forward_nodes(p, zz)[0], z[None, :])
        cols = []
        for i in range(self.latent_dim):
            e = np.zeros((1, self.latent_dim))
            e[0, i] = 1.0
            cols.append(push(e).value[0])
        return np.stack(cols, axis=1)

    def jacobians_at(self, Z: np.ndarray) -> np.ndarray:
        """Batched forward Jacobians: (N, data_dim, latent_dim) from
        latent-dim probes shared across all points."""
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        p = self.param_node()
        _, push = ad.linearize(lambda zz: self.forward_nodes(p, zz)[0], Z)
        cols = []
        for i in range(self.latent_dim):
            e = np.zeros_like(Z)
            e[:, i] = 1.0
            cols.append(push(e).value)
        return np.stack(cols, axis=2)

    def inverse_jacobians_at(self, X: np.ndarray) -> np.ndarray:
        """Batched inverse-map Jacobians: (N, latent_dim, data_dim)."""
        if self.is_injective:
            raise CapabilityError("inverse Jacobian undefined for injective stacks")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        p = self.param_node()
        _, pull = ad.linearize_vjp(lambda xx: self.inverse_nodes(p, xx)[0], X)
        rows = []
        for i in range(self.latent_dim):
            e = np.zeros_like(X)
            e[:, i] = 1.0
            rows.append(pull(e).value)
        return np.stack(rows, axis=1)

    def inverse_jacobian_at(self, x: np.ndarray) -> np.ndarray:
        """Dense d g / d x from data-dim reverse probes at a single point."""
        if self.is_injective:
            raise CapabilityError("inverse Jacobian undefined for injective stacks")
        x = np.asarray(x, dtype=np.float64)
        p = self.param_node()
        _, pull = ad.linearize_vjp(lambda xx: self.inverse_nodes(p, xx)[0], x[None, :])
        rows = []
        for i in range(self.latent_dim):
            e = np.zeros((1, self.latent_dim))
            e[0, i] = 1.0
            rows.append(pull(e).value[0])
        return np.stack(rows, axis=0)

    def log_prob_injective(self, z: np.ndarray) -> np.ndarray | float:
        """Density on the model manifold at x = f(z): prior term minus half
        the log Gram determinant of the forward Jacobian."""
        zb, single = self._batched(z)
        p = self.param_node()
        zn = ad.constant(zb)
        out, push = ad.linearize(lambda zz: self.forward_nodes(p, zz)[0], zn)
        cols = []
        for i in range(self.latent_dim):
            e = np.zeros_like(zb)
            e[:, i] = 1.0
            cols.append(push(e).value)
        J = np.stack(cols, axis=2)  # (B, data_dim, latent_dim)
        gram = np.einsum("bik,bil->bkl", J, J)
        sign, logdet = np.linalg.slogdet(gram)
        if np.any(sign <= 0) or np.any(logdet < -680.0):
            raise DegenerateManifoldError("rank-deficient J^T J in injective density")
        lp = self.prior.log_prob(zn).value - 0.5 * logdet
        return float(lp[0]) if single else lp

    def sample(self, n: int, seed: int) -> np.ndarray:
        if n < 1:
            raise ValueError("sample count must be >= 1")
        rng = np.random.default_rng(seed)
        z = self.prior.sample(n, rng)
        x, _ = self.forward(z)
        return x

    def data_dependent_init(self, x: np.ndarray) -> None:
        """Set each act-norm layer so the normalizing direction whitens the
        first batch that reaches it."""
        cur = np.asarray(x, dtype=np.float64)
        for i in reversed(range(len(self.layers))):
            ly = self.layers[i]
            if isinstance(ly, ActNorm):
                lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
                self.params[lo:hi] = ActNorm.params_from_activation(cur)
            p_i = self.layer_params(self.param_node(), i)
            cur = ly.inverse(p_i, ad.constant(cur))[0].value
