"""Training objectives: maximum likelihood, the orthogonality-regularized
Lagrangian (forward-Jacobian form), the inverse-map form used when only g is
cheap, the injective lower-bound objective, and their single-probe unbiased
estimators.

All objectives are built on the autodiff graph as functions of the flat
parameter vector, so one reverse sweep yields parameter gradients even
though the losses internally contain Jacobian probes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .contours import Partition
from .errors import CapabilityError, FlowError
from .stack import FlowStack

KINDS = ("ML", "PF_LAGRANGIAN", "PF", "IPF", "IPF_STAGE1", "IPF_STAGE2")
ESTIMATORS = ("EXACT", "UNBIASED_SINGLE_BLOCK")


@dataclass
class ObjectiveConfig:
    kind: str = "ML"
    alpha: float = 0.0
    gamma: float = 0.0
    partition: Partition | None = None
    estimator: str = "EXACT"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FlowError(f"unknown objective kind {self.kind!r}")
        if self.estimator not in ESTIMATORS:
            raise FlowError(f"unknown estimator {self.estimator!r}")
        if self.alpha < 0 or self.gamma < 0:
            raise FlowError("alpha and gamma must be nonnegative")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "partition": None if self.partition is None else self.partition.to_json(),
            "estimator": self.estimator,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ObjectiveConfig":
        part = obj.get("partition")
        return cls(
            kind=obj["kind"],
            alpha=float(obj.get("alpha", 0.0)),
            gamma=float(obj.get("gamma", 0.0)),
            partition=None if part is None else Partition.from_json(part),
            estimator=obj.get("estimator", "EXACT"),
            seed=int(obj.get("seed", 0)),
        )


# --------------------------------------------------------------------------
# Differentiable small-Gram log-determinants from probe results
# --------------------------------------------------------------------------


def _gram_logdet_from_vectors(vectors: list[Node]) -> Node:
    """log det of the Gram matrix of per-sample vectors, elementwise over the
    batch.  Closed-form expansions cover blocks up to size 3."""
    r = len(vectors)
    g = [[ad.sum_(vectors[i] * vectors[j], axis=1) for j in range(i + 1)] for i in range(r)]
    if r == 1:
        det = g[0][0]
    elif r == 2:
        det = g[0][0] * g[1][1] - g[1][0] * g[1][0]
    elif r == 3:
        det = (
            g[0][0] * (g[1][1] * g[2][2] - g[2][1] * g[2][1])
            - g[1][0] * (g[1][0] * g[2][2] - g[2][1] * g[2][0])
            + g[2][0] * (g[1][0] * g[2][1] - g[1][1] * g[2][0])
        )
    else:
        raise FlowError("differentiable Gram determinants support block sizes <= 3")
    return ad.log(det)


def _row_probes(z: Node, x: Node, idxs, batch: int, dim: int) -> list[Node]:
    """Rows of d z / d x for the given output indices, one sweep per index."""
    rows = []
    for i in idxs:
        seed = np.zeros((batch, dim))
        seed[:, i] = 1.0
        ad.count_probe()
        (row,) = ad.backward(z, ad.constant(seed), [x])
        rows.append(row)
    return rows


def _col_probes(x_out: Node, z_in: Node, idxs, batch: int, dim: int) -> list[Node]:
    """Columns of d f / d z for the given input indices, one sweep per index."""
    cols = []
    for i in idxs:
        seed = np.zeros((batch, dim))
        seed[:, i] = 1.0
        ad.count_probe()
        col = ad.forward_tangent(x_out, {id(z_in): ad.constant(seed)})
        cols.append(col)
    return cols


def _per_sample_row_probes(z: Node, x: Node, index_matrix: np.ndarray,
                           batch: int, dim: int) -> list[Node]:
    """Like _row_probes but each sample probes its own index set; sweep j
    extracts, for sample b, row index_matrix[b, j]."""
    rows = []
    for j in range(index_matrix.shape[1]):
        seed = np.zeros((batch, dim))
        seed[np.arange(batch), index_matrix[:, j]] = 1.0
        ad.count_probe()
        (row,) = ad.backward(z, ad.constant(seed), [x])
        rows.append(row)
    return rows


def _per_sample_col_probes(x_out: Node, z_in: Node, index_matrix: np.ndarray,
                           batch: int, dim: int) -> list[Node]:
    cols = []
    for j in range(index_matrix.shape[1]):
        seed = np.zeros((batch, dim))
        seed[np.arange(batch), index_matrix[:, j]] = 1.0
        ad.count_probe()
        cols.append(ad.forward_tangent(x_out, {id(z_in): ad.constant(seed)}))
    return cols


def _check_square(stack: FlowStack, what: str) -> None:
    if stack.is_injective:
        raise CapabilityError(f"{what} requires a square stack")


def _draw_block_choice(partition: Partition, batch: int, seed: int) -> np.ndarray:
    """Uniform per-sample block draws; equal block sizes required so the
    |P|-scaling stays unbiased."""
    sizes = {len(b) for b in partition.blocks}
    if len(sizes) != 1:
        raise FlowError(
            "single-block estimator needs equal-size blocks; use the exact form"
        )
    rng = np.random.default_rng(seed)
    return rng.integers(0, len(partition.blocks), size=batch)


# --------------------------------------------------------------------------
# Node-level builders (p is the flat parameter node)
# --------------------------------------------------------------------------


def nll_node(stack: FlowStack, p: Node, x: np.ndarray) -> Node:
    _check_square(stack, "maximum likelihood")
    return ad.neg(ad.mean(stack.log_prob_nodes(p, ad.constant(x))))


def pf_lagrangian_node(stack: FlowStack, p: Node, x: np.ndarray, alpha: float,
                       partition: Partition) -> Node:
    """-log p + alpha I_P, expanded through forward-Jacobian blocks at
    z = g(x)."""
    _check_square(stack, "the forward-form objective")
    B, d = x.shape
    xn = ad.constant(x)
    z, _ = stack.inverse_nodes(p, xn)
    x_rec, logdet_f = stack.forward_nodes(p, z)
    per = ad.neg(stack.prior.log_prob(z)) - (alpha - 1.0) * logdet_f
    for b in partition.blocks:
        cols = _col_probes(x_rec, z, b, B, d)
        per = per + (alpha / 2.0) * _gram_logdet_from_vectors(cols)
    return ad.mean(per)


def pf_objective_node(stack: FlowStack, p: Node, x: np.ndarray, alpha: float,
                      partition: Partition) -> Node:
    """-log p - alpha Ihat_P via inverse-map rows: the training form when
    only g is cheap to evaluate."""
    _check_square(stack, "the inverse-form objective")
    B, d = x.shape
    xn = ad.constant(x)
    z, logdet_g = stack.inverse_nodes(p, xn)
    per = ad.neg(stack.prior.log_prob(z)) - (alpha + 1.0) * logdet_g
    for b in partition.blocks:
        rows = _row_probes(z, xn, b, B, d)
        per = per + (alpha / 2.0) * _gram_logdet_from_vectors(rows)
    return ad.mean(per)


def pf_objective_single_block_node(stack: FlowStack, p: Node, x: np.ndarray,
                                   alpha: float, partition: Partition,
                                   block_choice: np.ndarray) -> Node:
    """The inverse-form objective with an explicit per-sample block choice;
    the |P|-scaled single-block term replaces the full sum."""
    _check_square(stack, "the inverse-form objective")
    B, d = x.shape
    idx = np.asarray([partition.blocks[c] for c in block_choice], dtype=int)
    xn = ad.constant(x)
    z, logdet_g = stack.inverse_nodes(p, xn)
    per = ad.neg(stack.prior.log_prob(z)) - (alpha + 1.0) * logdet_g
    rows = _per_sample_row_probes(z, xn, idx, B, d)
    n_blocks = len(partition.blocks)
    per = per + (alpha * n_blocks / 2.0) * _gram_logdet_from_vectors(rows)
    return ad.mean(per)


def pf_objective_unbiased_node(stack: FlowStack, p: Node, x: np.ndarray, alpha: float,
                               partition: Partition, seed: int) -> Node:
    """Single uniformly drawn block per sample, scaled by |P|: equals the
    exact objective in expectation and costs one row-probe set per sample."""
    choice = _draw_block_choice(partition, x.shape[0], seed)
    return pf_objective_single_block_node(stack, p, x, alpha, partition, choice)


def ipf_objective_node(stack: FlowStack, p: Node, z: np.ndarray,
                       partition: Partition) -> Node:
    """Lower-bound objective for injective stacks, evaluated at latent
    points: -log p_z(z) + 1/2 sum_k log |J_k^T J_k|."""
    B, m = z.shape
    zn = ad.constant(z)
    x, _ = stack.forward_nodes(p, zn)
    per = ad.neg(stack.prior.log_prob(zn))
    for b in partition.blocks:
        cols = _col_probes(x, zn, b, B, m)
        per = per + 0.5 * _gram_logdet_from_vectors(cols)
    return ad.mean(per)


def injective_nll_node(stack: FlowStack, p: Node, z: np.ndarray) -> Node:
    """Exact manifold negative log likelihood: needs all latent-dim probes."""
    B, m = z.shape
    zn = ad.constant(z)
    x, _ = stack.forward_nodes(p, zn)
    cols = _col_probes(x, zn, range(m), B, m)
    return ad.mean(
        ad.neg(stack.prior.log_prob(zn)) + 0.5 * _gram_logdet_from_vectors(cols)
    )


def ipf_stage1_single_block_node(stack: FlowStack, p: Node, x: np.ndarray, gamma: float,
                                 partition: Partition, block_choice: np.ndarray) -> Node:
    B = x.shape[0]
    m = stack.latent_dim
    idx = np.asarray([partition.blocks[c] for c in block_choice], dtype=int)
    xn = ad.constant(x)
    z, _ = stack.inverse_nodes(p, xn)
    x_rec, _ = stack.forward_nodes(p, z)
    per = ad.neg(stack.prior.log_prob(z))
    cols = _per_sample_col_probes(x_rec, z, idx, B, m)
    n_blocks = len(partition.blocks)
    per = per + (n_blocks / 2.0) * _gram_logdet_from_vectors(cols)
    if gamma != 0.0:
        diff = x_rec - xn
        per = per + gamma * ad.sum_(diff * diff, axis=1)
    return ad.mean(per)


def ipf_stage1_node(stack: FlowStack, p: Node, x: np.ndarray, gamma: float,
                    partition: Partition, seed: int) -> Node:
    """Projected single-probe objective plus reconstruction pull toward the
    data: -log p_z(g(x)) + |P|/2 log|J_k^T J_k| at one uniform k per sample
    + gamma |f(g(x)) - x|^2."""
    choice = _draw_block_choice(partition, x.shape[0], seed)
    return ipf_stage1_single_block_node(stack, p, x, gamma, partition, choice)


def ipf_stage2_node(stack: FlowStack, p: Node, x: np.ndarray,
                    partition: Partition, seed: int) -> Node:
    return ipf_stage1_node(stack, p, x, 0.0, partition, seed)


# --------------------------------------------------------------------------
# Value-level wrappers
# --------------------------------------------------------------------------


def _value(node_builder) -> float:
    return float(node_builder.value)


def nll(stack: FlowStack, x: np.ndarray) -> float:
    return _value(nll_node(stack, stack.param_node(), np.atleast_2d(x)))


def pf_lagrangian(stack: FlowStack, x: np.ndarray, alpha: float,
                  partition: Partition) -> float:
    return _value(pf_lagrangian_node(stack, stack.param_node(), np.atleast_2d(x),
                                     alpha, partition))


def pf_objective(stack: FlowStack, x: np.ndarray, alpha: float,
                 partition: Partition) -> float:
    return _value(pf_objective_node(stack, stack.param_node(), np.atleast_2d(x),
                                    alpha, partition))


def pf_objective_unbiased(stack: FlowStack, x: np.ndarray, alpha: float,
                          partition: Partition, seed: int) -> float:
    return _value(pf_objective_unbiased_node(stack, stack.param_node(),
                                             np.atleast_2d(x), alpha, partition, seed))


def ipf_objective(stack: FlowStack, z: np.ndarray, partition: Partition) -> float:
    return _value(ipf_objective_node(stack, stack.param_node(), np.atleast_2d(z), partition))


def injective_nll(stack: FlowStack, z: np.ndarray) -> float:
    return _value(injective_nll_node(stack, stack.param_node(), np.atleast_2d(z)))


def ipf_stage1(stack: FlowStack, x: np.ndarray, gamma: float, partition: Partition,
               seed: int) -> float:
    return _value(ipf_stage1_node(stack, stack.param_node(), np.atleast_2d(x),
                                  gamma, partition, seed))


def ipf_stage2(stack: FlowStack, x: np.ndarray, partition: Partition, seed: int) -> float:
    return _value(ipf_stage2_node(stack, stack.param_node(), np.atleast_2d(x),
                                  partition, seed))


# --------------------------------------------------------------------------
# Dispatch used by the training loop
# --------------------------------------------------------------------------


def build_loss(stack: FlowStack, config: ObjectiveConfig, batch: np.ndarray,
               draw_seed: int):
    """Return a params-node -> scalar-node builder for one batch."""
    part = config.partition

    def builder(p: Node) -> Node:
        if config.kind == "ML":
            return nll_node(stack, p, batch)
        if config.kind == "PF_LAGRANGIAN":
            return pf_lagrangian_node(stack, p, batch, config.alpha, part)
        if config.kind == "PF":
            if config.estimator == "UNBIASED_SINGLE_BLOCK":
                return pf_objective_unbiased_node(stack, p, batch, config.alpha,
                                                  part, draw_seed)
            return pf_objective_node(stack, p, batch, config.alpha, part)
        if config.kind == "IPF":
            return ipf_objective_node(stack, p, batch, part)
        if config.kind == "IPF_STAGE1":
            return ipf_stage1_node(stack, p, batch, config.gamma, part, draw_seed)
        if config.kind == "IPF_STAGE2":
            return ipf_stage2_node(stack, p, batch, part, draw_seed)
        raise FlowError(f"unknown objective kind {config.kind!r}")

    return builder
