"""Contour analysis of flow stacks.

A contour is the manifold traced by varying one latent block while holding
the rest fixed.  This module computes per-contour log densities in both the
forward-Jacobian (column) and inverse-Jacobian (row) forms, the pointwise
mutual information between contours and its partition aggregate, binary-tree
decompositions of the full log likelihood, principal frames, traced
principal manifolds, contour/component similarity matrices, and the
stretch-thresholded manifold-corrected density.

Matrix-level forms are exposed separately so randomized audits can exercise
the identities on raw Jacobians without building a flow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, DegenerateManifoldError, EmptySelectionError, FlowError
from .stack import FlowStack


# --------------------------------------------------------------------------
# Partitions
# --------------------------------------------------------------------------


def _left_leaning_tree(n_blocks: int):
    tree = 0
    for i in range(1, n_blocks):
        tree = (tree, i)
    return tree


def _tree_leaves(tree) -> list[int]:
    if isinstance(tree, int):
        return [tree]
    left, right = tree
    return _tree_leaves(left) + _tree_leaves(right)


@dataclass(frozen=True)
class Partition:
    """Disjoint index blocks covering [0, dim), with an optional binary
    tree over block indices (leaf = block position, parent = pair)."""

    blocks: tuple[tuple[int, ...], ...]
    dim: int
    tree: object = None

    def __post_init__(self):
        seen: set[int] = set()
        for b in self.blocks:
            if len(b) == 0:
                raise FlowError("empty block in partition")
            if seen & set(b):
                raise FlowError("partition blocks must be disjoint")
            seen |= set(b)
        if seen != set(range(self.dim)):
            raise FlowError(f"blocks must cover exactly [0, {self.dim})")
        if self.tree is not None:
            leaves = sorted(_tree_leaves(self.tree))
            if leaves != list(range(len(self.blocks))):
                raise FlowError("tree leaves must be exactly the block indices")

    @classmethod
    def of_blocks(cls, blocks, dim: int, tree=None) -> "Partition":
        return cls(tuple(tuple(sorted(int(i) for i in b)) for b in blocks), dim, tree)

    @classmethod
    def singletons(cls, dim: int, tree=None) -> "Partition":
        return cls(tuple((i,) for i in range(dim)), dim, tree)

    def with_tree(self, tree) -> "Partition":
        return Partition(self.blocks, self.dim, tree)

    def default_tree(self):
        return self.tree if self.tree is not None else _left_leaning_tree(len(self.blocks))

    def indices_of(self, tree) -> list[int]:
        return sorted(i for b in _tree_leaves(tree) for i in self.blocks[b])

    def to_json(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks], "dim": self.dim,
                "tree": self.tree}

    @classmethod
    def from_json(cls, obj: dict) -> "Partition":
        tree = obj.get("tree")

        def fix(t):
            return int(t) if isinstance(t, int) else (fix(t[0]), fix(t[1]))

        return cls.of_blocks(obj["blocks"], int(obj["dim"]),
                             None if tree is None else fix(tree))


# --------------------------------------------------------------------------
# Matrix-level identities (the randomized-audit surface)
# --------------------------------------------------------------------------


def gram_logdet(M: np.ndarray) -> float:
    """log det of a symmetric PSD Gram matrix.  Cholesky first, retried with
    1e-12 jitter, with a clipped eigenvalue fallback."""
    M = np.asarray(M, dtype=np.float64)
    for jitter in (0.0, 1e-12):
        try:
            L = np.linalg.cholesky(M + jitter * np.eye(M.shape[0]))
            return float(2.0 * np.sum(np.log(np.diag(L))))
        except np.linalg.LinAlgError:
            continue
    w = np.linalg.eigvalsh(M)
    w = np.clip(w, 1e-300, None)
    return float(np.sum(np.log(w)))


def _proj(A: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column space of A."""
    return A @ np.linalg.solve(A.T @ A, A.T)


def block_gram_logdet(J: np.ndarray, idxs) -> float:
    Jk = J[:, list(idxs)]
    return gram_logdet(Jk.T @ Jk)


def row_gram_logdet(G: np.ndarray, idxs) -> float:
    Gk = G[list(idxs), :]
    return gram_logdet(Gk @ Gk.T)


def pmi_from_columns(J: np.ndarray, s, t, form: str = "det") -> float:
    """I(s;t) from forward-Jacobian columns; `det` and `projection` forms."""
    s, t = list(s), list(t)
    if set(s) & set(t):
        raise FlowError("pmi blocks must be disjoint")
    if form == "det":
        return float(
            -0.5 * block_gram_logdet(J, s + t)
            + 0.5 * block_gram_logdet(J, s)
            + 0.5 * block_gram_logdet(J, t)
        )
    if form == "projection":
        Ps, Pt = _proj(J[:, s]), _proj(J[:, t])
        sign, ld = np.linalg.slogdet(np.eye(J.shape[0]) - Ps @ Pt)
        if sign <= 0:
            raise DegenerateManifoldError("projection-form determinant not positive")
        return float(-0.5 * ld)
    raise ValueError(f"unknown pmi form {form!r}")


def pmi_hat_from_rows(G: np.ndarray, s, t, form: str = "det") -> float:
    """Ihat(s;t) from inverse-Jacobian rows; always <= 0."""
    s, t = list(s), list(t)
    if set(s) & set(t):
        raise FlowError("pmi blocks must be disjoint")
    if form == "det":
        return float(
            0.5 * row_gram_logdet(G, s + t)
            - 0.5 * row_gram_logdet(G, s)
            - 0.5 * row_gram_logdet(G, t)
        )
    if form == "projection":
        Ps, Pt = _proj(G[s, :].T), _proj(G[t, :].T)
        sign, ld = np.linalg.slogdet(np.eye(G.shape[1]) - Ps @ Pt)
        if sign <= 0:
            raise DegenerateManifoldError("projection-form determinant not positive")
        return float(0.5 * ld)
    raise ValueError(f"unknown pmi form {form!r}")


def partition_pmi_from_columns(J: np.ndarray, blocks) -> float:
    """I_P = -1/2 log|J^T J| + 1/2 sum_k log|J_k^T J_k|."""
    total = -0.5 * gram_logdet(J.T @ J)
    for b in blocks:
        total += 0.5 * block_gram_logdet(J, b)
    return float(total)


def partition_pmi_hat_from_rows(G: np.ndarray, blocks) -> float:
    """Ihat_P = 1/2 log|G G^T| - 1/2 sum_k log|G_k G_k^T|."""
    total = 0.5 * gram_logdet(G @ G.T)
    for b in blocks:
        total -= 0.5 * row_gram_logdet(G, b)
    return float(total)


# --------------------------------------------------------------------------
# Stack-level contour quantities
# --------------------------------------------------------------------------


def _require_block(block) -> list[int]:
    block = sorted(int(i) for i in block)
    if not block:
        raise FlowError("empty block")
    return block


def jacobian_columns(stack: FlowStack, z: np.ndarray, block) -> np.ndarray:
    """Columns of the forward Jacobian with indices in `block`, one forward
    probe per index."""
    block = _require_block(block)
    J = stack.jacobians_at(np.asarray(z, float)[None, :])[0]
    return J[:, block]


def inverse_jacobian_rows(stack: FlowStack, x: np.ndarray, block) -> np.ndarray:
    """Rows of the inverse-map Jacobian with indices in `block`, one reverse
    probe per index."""
    block = _require_block(block)
    if stack.is_injective:
        raise CapabilityError("row quantities undefined for injective stacks")
    x = np.asarray(x, dtype=np.float64)
    G = stack.inverse_jacobians_at(x[None, :])[0]
    return G[block, :]


def contour_log_density(stack: FlowStack, z: np.ndarray, block) -> float:
    """L_k = log p_k(z_k) - 1/2 log |J_k^T J_k| at x = f(z)."""
    block = _require_block(block)
    Jk = jacobian_columns(stack, z, block)
    ld = gram_logdet(Jk.T @ Jk)
    if ld < -680.0:
        raise DegenerateManifoldError("singular block Gram in contour density")
    import pmflow.autodiff as ad

    prior_term = stack.prior.log_prob(ad.constant(np.asarray(z, float)[None, :]), block).value[0]
    return float(prior_term - 0.5 * ld)


def contour_log_density_hat(stack: FlowStack, x: np.ndarray, block) -> float:
    """Lhat_k = log p_k(z_k) + 1/2 log |G_k G_k^T| at z = g(x)."""
    block = _require_block(block)
    Gk = inverse_jacobian_rows(stack, x, block)
    z, _ = stack.inverse(np.asarray(x, float))
    import pmflow.autodiff as ad

    prior_term = stack.prior.log_prob(ad.constant(z[None, :]), block).value[0]
    return float(prior_term + 0.5 * gram_logdet(Gk @ Gk.T))


def pmi(stack: FlowStack, z: np.ndarray, s, t, form: str = "det") -> float:
    s, t = _require_block(s), _require_block(t)
    J = stack.jacobians_at(np.asarray(z, float)[None, :])[0]
    return pmi_from_columns(J, s, t, form)


def pmi_hat(stack: FlowStack, x: np.ndarray, s, t, form: str = "det") -> float:
    s, t = _require_block(s), _require_block(t)
    if stack.is_injective:
        raise CapabilityError("hat quantities undefined for injective stacks")
    G = stack.inverse_jacobians_at(np.asarray(x, float)[None, :])[0]
    return pmi_hat_from_rows(G, s, t, form)


def forward_partition_pmi(stack: FlowStack, z: np.ndarray, partition: Partition) -> float:
    """I_P from forward probes; valid for square and injective stacks."""
    J = stack.jacobians_at(np.asarray(z, float)[None, :])[0]
    return partition_pmi_from_columns(J, partition.blocks)


def partition_pmi(stack: FlowStack, partition: Partition, *, z: np.ndarray | None = None,
                  x: np.ndarray | None = None) -> tuple[float, float]:
    """(I_P, Ihat_P) for a square stack at corresponding points z, x.

    Exactly one of z / x may be supplied; the other is derived.
    """
    if stack.is_injective:
        raise CapabilityError(
            "hat quantities undefined for injective stacks; use forward_partition_pmi"
        )
    if (z is None) == (x is None):
        raise ValueError("supply exactly one of z or x")
    if z is None:
        z, _ = stack.inverse(np.asarray(x, float))
    elif x is None:
        x, _ = stack.forward(np.asarray(z, float))
    I_P = forward_partition_pmi(stack, z, partition)
    G = stack.inverse_jacobians_at(np.asarray(x, float)[None, :])[0]
    return I_P, partition_pmi_hat_from_rows(G, partition.blocks)


def batched_partition_pmi(stack: FlowStack, Z: np.ndarray, partition: Partition) -> np.ndarray:
    """Exact I_P for every row of Z via latent-dim shared probes."""
    J = stack.jacobians_at(Z)
    full = J.transpose(0, 2, 1) @ J
    _, total = np.linalg.slogdet(full)
    out = -0.5 * total
    for b in partition.blocks:
        Jb = J[:, :, list(b)]
        _, ld = np.linalg.slogdet(Jb.transpose(0, 2, 1) @ Jb)
        out = out + 0.5 * ld
    return out


# --------------------------------------------------------------------------
# Tree decomposition
# --------------------------------------------------------------------------


@dataclass
class TreeDecomposition:
    leaf_terms: list[tuple[int, float]]
    parent_terms: list[tuple[tuple[int, ...], tuple[int, ...], float]]
    total: float

    @property
    def pmi_total(self) -> float:
        return float(sum(t for _, _, t in self.parent_terms))


def tree_decompose(stack: FlowStack, z: np.ndarray, partition: Partition,
                   tree=None) -> TreeDecomposition:
    """Recursive split of log p(x) into leaf contour densities plus one
    pairwise term per tree parent; the parent sum is tree-independent."""
    tree = partition.default_tree() if tree is None else tree
    if sorted(_tree_leaves(tree)) != list(range(len(partition.blocks))):
        raise FlowError("tree leaves must be exactly the block indices")
    z = np.asarray(z, dtype=np.float64)
    J = stack.jacobians_at(z[None, :])[0]
    leaf_terms = [
        (i, contour_log_density(stack, z, b)) for i, b in enumerate(partition.blocks)
    ]
    parent_terms: list[tuple[tuple[int, ...], tuple[int, ...], float]] = []

    def walk(t) -> list[int]:
        if isinstance(t, int):
            return list(partition.blocks[t])
        left, right = walk(t[0]), walk(t[1])
        parent_terms.append(
            (tuple(left), tuple(right), pmi_from_columns(J, left, right, "det"))
        )
        return sorted(left + right)

    walk(tree)
    total = sum(v for _, v in leaf_terms) + sum(v for *_, v in parent_terms)
    return TreeDecomposition(leaf_terms, parent_terms, float(total))


# --------------------------------------------------------------------------
# Principal frames and manifold tracing
# --------------------------------------------------------------------------


@dataclass
class PrincipalFrame:
    """Eigenpairs of J J^T: eigenvalues descending, orthonormal column
    eigenvectors with the largest-magnitude entry made positive."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def component(self, i: int) -> np.ndarray:
        return self.eigenvectors[:, i]


_TIE_GAP = 1e-10


def principal_frame(stack: FlowStack, z: np.ndarray) -> PrincipalFrame:
    J = stack.jacobians_at(np.asarray(z, float)[None, :])[0]
    return principal_frame_of_jacobian(J)


def principal_frame_of_jacobian(J: np.ndarray) -> PrincipalFrame:
    M = J @ J.T
    w, V = np.linalg.eigh(M)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    for i in range(V.shape[1]):
        j = int(np.argmax(np.abs(V[:, i])))
        if V[j, i] < 0:
            V[:, i] = -V[:, i]
    # Ties: order eigenvectors within a near-degenerate group lexicographically
    # (any orthonormal basis of the eigenspace is equally valid).
    i = 0
    n = len(w)
    while i < n:
        j = i + 1
        while j < n and abs(w[j - 1] - w[j]) < _TIE_GAP:
            j += 1
        if j - i > 1:
            sub = V[:, i:j]
            order2 = sorted(range(sub.shape[1]), key=lambda c: tuple(sub[:, c]))
            V[:, i:j] = sub[:, order2]
        i = j
    return PrincipalFrame(np.clip(w, 0.0, None), V)


@dataclass
class TraceResult:
    times: np.ndarray
    points: np.ndarray
    latents: np.ndarray
    tangent_cosines: np.ndarray
    truncated: bool = False
    reason: str = ""


def trace_principal_manifold(stack: FlowStack, x0: np.ndarray, block,
                             t_max: float = 2.0, step: float = 0.02) -> TraceResult:
    """Integrate dx/dt = w_i(x) sqrt(lambda_i) with classic RK4.

    The tracked component i is the one whose eigenvalue rank matches the
    block's stretch rank at the start point.  Direction continuity flips the
    eigenvector when it opposes the previous tangent; a near-crossing of the
    tracked eigenvalue (gap < 1e-6) truncates the trace.
    """
    block = _require_block(block)
    if len(block) != 1:
        raise FlowError("tracing integrates one direction at a time (1-D blocks)")
    if stack.is_injective:
        raise CapabilityError("tracing requires a square stack")
    x = np.asarray(x0, dtype=np.float64).copy()
    m = stack.latent_dim

    z0, _ = stack.inverse(x)
    J0 = stack.jacobians_at(z0[None, :])[0]
    diag = np.einsum("ij,ij->j", J0, J0)
    rank = int(np.sum(diag > diag[block[0]]))  # 0 = largest stretch

    prev_dir: np.ndarray | None = None

    def velocity(pt: np.ndarray, direction: np.ndarray | None):
        z, _ = stack.inverse(pt)
        frame = principal_frame(stack, z)
        w = frame.eigenvalues
        if rank > 0 and abs(w[rank - 1] - w[rank]) < 1e-6:
            return None, None, z
        if rank + 1 < len(w) and abs(w[rank] - w[rank + 1]) < 1e-6:
            return None, None, z
        v = frame.component(rank)
        if direction is not None and v @ direction < 0:
            v = -v
        return v * np.sqrt(w[rank]), v, z

    n_steps = int(round(t_max / step))
    times = [0.0]
    points = [x.copy()]
    latents = [z0.copy()]
    cosines: list[float] = []
    truncated = False
    reason = ""
    for k in range(n_steps):
        v1, d1, z_here = velocity(x, prev_dir)
        if v1 is None:
            truncated, reason = True, f"eigenvalue crossing at step {k}"
            break
        Jh = stack.jacobians_at(z_here[None, :])[0]
        col = Jh[:, block[0]]
        cosines.append(float(abs(col @ d1) / (np.linalg.norm(col) * np.linalg.norm(d1))))
        v2, d2, _ = velocity(x + 0.5 * step * v1, d1)
        v3, d3, _ = velocity(x + 0.5 * step * v2, d2) if v2 is not None else (None, None, None)
        v4, _, _ = velocity(x + step * v3, d3) if v3 is not None else (None, None, None)
        if v2 is None or v3 is None or v4 is None:
            truncated, reason = True, f"eigenvalue crossing at step {k}"
            break
        x = x + (step / 6.0) * (v1 + 2 * v2 + 2 * v3 + v4)
        prev_dir = d1
        times.append((k + 1) * step)
        points.append(x.copy())
        z_next, _ = stack.inverse(x)
        latents.append(z_next)
    return TraceResult(
        np.asarray(times),
        np.asarray(points),
        np.asarray(latents),
        np.asarray(cosines),
        truncated,
        reason,
    )


def similarity_matrix(stack: FlowStack, points: np.ndarray,
                      latent_inputs: bool = False) -> np.ndarray:
    """Mean |cosine| between contour tangents and principal components.

    Rows are latent dimensions ordered by increasing diag(J^T J); columns
    are principal components ordered by increasing eigenvalue; both orders
    are per-point, then entries are averaged over points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if latent_inputs:
        Z = pts
    else:
        if stack.is_injective:
            raise CapabilityError("similarity over data points needs a square stack")
        Z, _ = stack.inverse(pts)
    J = stack.jacobians_at(Z)
    m = stack.latent_dim
    acc = np.zeros((m, m))
    for b in range(J.shape[0]):
        Jb = J[b]
        diag = np.einsum("ij,ij->j", Jb, Jb)
        row_order = np.argsort(diag, kind="stable")
        frame = principal_frame_of_jacobian(Jb)
        # Columns by increasing eigenvalue; keep only latent-dim components.
        comps = frame.eigenvectors[:, ::-1][:, -m:] if Jb.shape[0] > m else frame.eigenvectors[:, ::-1]
        cols = Jb / np.linalg.norm(Jb, axis=0, keepdims=True)
        cos = np.abs(cols[:, row_order].T @ comps)
        acc += cos
    return acc / J.shape[0]


# --------------------------------------------------------------------------
# Manifold-corrected density
# --------------------------------------------------------------------------


@dataclass
class ManifoldDensity:
    log_pm: float
    selected: tuple[int, ...]
    stretches: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.selected)


def manifold_corrected_logpdf(stack: FlowStack, partition: Partition, *,
                              x: np.ndarray | None = None,
                              z: np.ndarray | None = None,
                              epsilon: float = 1e-2) -> ManifoldDensity:
    """Sum of contour densities over blocks whose stretch |J_k^T J_k|^(1/2)
    clears a threshold relative to the largest stretch; ties included."""
    if (z is None) == (x is None):
        raise ValueError("supply exactly one of z or x")
    if z is None:
        if stack.is_injective:
            raise CapabilityError("supply z for injective stacks")
        z, _ = stack.inverse(np.asarray(x, float))
    z = np.asarray(z, dtype=np.float64)
    J = stack.jacobians_at(z[None, :])[0]
    stretches = np.array(
        [np.exp(0.5 * block_gram_logdet(J, b)) for b in partition.blocks]
    )
    cutoff = epsilon * np.max(stretches)
    selected = tuple(i for i, s in enumerate(stretches) if s >= cutoff)
    if not selected:
        raise EmptySelectionError("no contour stretch above threshold")
    log_pm = sum(contour_log_density(stack, z, partition.blocks[i]) for i in selected)
    return ManifoldDensity(float(log_pm), selected, stretches)


def batched_manifold_density(stack: FlowStack, Z: np.ndarray, partition: Partition,
                             epsilon: float = 1e-2) -> tuple[np.ndarray, np.ndarray]:
    """(log_pm, rank) per row of Z, sharing Jacobian probes across points."""
    import pmflow.autodiff as ad

    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    N = Z.shape[0]
    J = stack.jacobians_at(Z)
    K = len(partition.blocks)
    logdets = np.empty((N, K))
    priors = np.empty((N, K))
    zn = ad.constant(Z)
    for k, b in enumerate(partition.blocks):
        Jb = J[:, :, list(b)]
        _, logdets[:, k] = np.linalg.slogdet(Jb.transpose(0, 2, 1) @ Jb)
        priors[:, k] = stack.prior.log_prob(zn, list(b)).value
    stretches = np.exp(0.5 * logdets)
    cutoff = epsilon * stretches.max(axis=1, keepdims=True)
    sel = stretches >= cutoff
    if not sel.any(axis=1).all():
        raise EmptySelectionError("no contour stretch above threshold")
    L = priors - 0.5 * logdets
    log_pm = np.where(sel, L, 0.0).sum(axis=1)
    return log_pm, sel.sum(axis=1)


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


@dataclass
class ContourReport:
    block_ids: list[list[int]]
    L_k: list[float]
    Lhat_k: list[float]
    stretch_k: list[float]
    logpx: float
    I_P: float
    Ihat_P: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "block_ids": self.block_ids,
                "L_k": self.L_k,
                "Lhat_k": self.Lhat_k,
                "stretch_k": self.stretch_k,
                "logpx": self.logpx,
                "I_P": self.I_P,
                "Ihat_P": self.Ihat_P,
            }
        )

    @classmethod
    def from_json(cls, s: str) -> "ContourReport":
        return cls(**json.loads(s))


def contour_report(stack: FlowStack, partition: Partition, *,
                   x: np.ndarray | None = None,
                   z: np.ndarray | None = None) -> ContourReport:
    """Full per-point decomposition for a square stack."""
    if stack.is_injective:
        raise CapabilityError("reports require a square stack")
    if (z is None) == (x is None):
        raise ValueError("supply exactly one of z or x")
    if z is None:
        z, _ = stack.inverse(np.asarray(x, float))
    else:
        x, _ = stack.forward(np.asarray(z, float))
    J = stack.jacobians_at(np.asarray(z, float)[None, :])[0]
    G = stack.inverse_jacobians_at(np.asarray(x, float)[None, :])[0]
    L_k = [contour_log_density(stack, z, b) for b in partition.blocks]
    Lhat_k = [contour_log_density_hat(stack, x, b) for b in partition.blocks]
    stretch = [float(np.exp(0.5 * block_gram_logdet(J, b))) for b in partition.blocks]
    logpx = float(stack.log_prob(np.asarray(x, float)))
    return ContourReport(
        block_ids=[list(b) for b in partition.blocks],
        L_k=[float(v) for v in L_k],
        Lhat_k=[float(v) for v in Lhat_k],
        stretch_k=stretch,
        logpx=logpx,
        I_P=partition_pmi_from_columns(J, partition.blocks),
        Ihat_P=partition_pmi_hat_from_rows(G, partition.blocks),
    )
