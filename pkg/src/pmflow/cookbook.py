"""Randomized audit of the contour-density identities on raw Jacobians.

Draws random full-rank matrices and checks, at tolerance, the closed-form
agreements and sign bounds that the contour machinery relies on:

  * determinant vs projection form of the pairwise term (columns and rows)
  * nonnegativity of I(s;t) and I_P, nonpositivity of the hat versions
  * tree-independence of the partition decomposition
  * block-orthogonal constructions drive all terms to zero simultaneously
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contours import (
    partition_pmi_from_columns,
    partition_pmi_hat_from_rows,
    pmi_from_columns,
    pmi_hat_from_rows,
)


def random_partition(rng: np.random.Generator, dim: int) -> list[list[int]]:
    idx = rng.permutation(dim).tolist()
    n_blocks = int(rng.integers(1, dim + 1))
    cuts = sorted(rng.choice(range(1, dim), size=n_blocks - 1, replace=False).tolist()) if n_blocks > 1 else []
    blocks, prev = [], 0
    for c in cuts + [dim]:
        blocks.append(sorted(idx[prev:c]))
        prev = c
    return blocks


def split_two(rng: np.random.Generator, dim: int) -> tuple[list[int], list[int]]:
    idx = rng.permutation(dim).tolist()
    cut = int(rng.integers(1, dim))
    return sorted(idx[:cut]), sorted(idx[cut:])


def block_orthogonal_jacobian(rng: np.random.Generator, n: int,
                              blocks: list[list[int]]) -> np.ndarray:
    """J = U Sigma blockdiag(V_k)^T with semi-orthogonal U: every pair of
    block column spaces is exactly orthogonal."""
    m = sum(len(b) for b in blocks)
    q, _ = np.linalg.qr(rng.normal(size=(n, m)))
    sigma = np.diag(np.exp(rng.normal(0.0, 0.5, size=m)))
    Vt = np.zeros((m, m))
    pos = 0
    for b in blocks:
        r = len(b)
        vb, _ = np.linalg.qr(rng.normal(size=(r, r)))
        cols = list(b)
        Vt[np.ix_(range(pos, pos + r), cols)] = vb.T
        pos += r
    return q @ sigma @ Vt


@dataclass
class AuditResult:
    trials: int
    violations: dict[str, float] = field(default_factory=dict)

    def worst(self) -> float:
        return max(self.violations.values())

    def passed(self, tol: float = 1e-8) -> bool:
        return self.worst() <= tol


def run_audit(trials: int = 1000, max_dim: int = 6, seed: int = 0) -> AuditResult:
    """Audit over `trials` random full-rank Jacobians with N(0,1) entries,
    shapes (n, m), m <= n <= max_dim.  Reports per-claim max violation."""
    rng = np.random.default_rng(seed)
    v = {
        "pmi_det_vs_projection": 0.0,
        "pmi_hat_det_vs_projection": 0.0,
        "pmi_nonnegative": 0.0,
        "pmi_hat_nonpositive": 0.0,
        "partition_pmi_nonnegative": 0.0,
        "partition_pmi_hat_nonpositive": 0.0,
        "tree_independence": 0.0,
        "block_orthogonal_zero": 0.0,
    }
    for _ in range(trials):
        n = int(rng.integers(2, max_dim + 1))
        m = int(rng.integers(2, n + 1))
        J = rng.normal(size=(n, m))
        s, t = split_two(rng, m)
        det = pmi_from_columns(J, s, t, "det")
        proj = pmi_from_columns(J, s, t, "projection")
        v["pmi_det_vs_projection"] = max(v["pmi_det_vs_projection"], abs(det - proj))
        v["pmi_nonnegative"] = max(v["pmi_nonnegative"], -det)

        blocks = random_partition(rng, m)
        ip = partition_pmi_from_columns(J, blocks)
        v["partition_pmi_nonnegative"] = max(v["partition_pmi_nonnegative"], -ip)

        # Tree independence: sum of pairwise terms along two distinct
        # merge orders equals the direct partition form.
        if len(blocks) >= 2:
            for order in (blocks, blocks[::-1]):
                acc, merged = 0.0, list(order[0])
                for b in order[1:]:
                    acc += pmi_from_columns(J, merged, b, "det")
                    merged = sorted(merged + list(b))
                v["tree_independence"] = max(v["tree_independence"], abs(acc - ip))

        if n == m:
            G = np.linalg.inv(J)
            dh = pmi_hat_from_rows(G, s, t, "det")
            ph = pmi_hat_from_rows(G, s, t, "projection")
            v["pmi_hat_det_vs_projection"] = max(v["pmi_hat_det_vs_projection"], abs(dh - ph))
            v["pmi_hat_nonpositive"] = max(v["pmi_hat_nonpositive"], dh)
            ih = partition_pmi_hat_from_rows(G, blocks)
            v["partition_pmi_hat_nonpositive"] = max(v["partition_pmi_hat_nonpositive"], ih)

        Jo = block_orthogonal_jacobian(rng, n, [list(b) for b in blocks])
        v["block_orthogonal_zero"] = max(
            v["block_orthogonal_zero"], abs(partition_pmi_from_columns(Jo, blocks))
        )
    return AuditResult(trials, v)
