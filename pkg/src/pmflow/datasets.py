"""Synthetic datasets with documented generators, CSV/manifest I/O, and the
variable-rank 3-D family with analytic ground truth.

2-D generators (all O(1) scale, deterministic per seed):

  points    8 Gaussians (sigma 0.10) equally spaced on a circle of radius 2
  circles   two concentric rings, radii 1.0 and 0.5, radial noise 0.02
  caret     two line segments meeting at an apex, Gaussian noise 0.05
  swirl     single-turn spiral with radius proportional to angle, noise 0.03
  grid      5x5 lattice of Gaussians, spacing 1, sigma 0.05
  moons     two interleaved half circles, noise 0.05
  pinwheel  five Gaussian arms warped azimuthally by radius
  swissroll two-turn spiral with linearly growing radius, noise 0.02

The 3-D family draws u1 from an equal-weight three-component Gaussian
mixture (means -2, 0, 2, std 0.3) and u2 from a standard normal, then maps
(u1, u2) -> (u1, u2 * max(0, 1 - |1/u1|), sin u1); the image is a 1-D
manifold where |u1| <= 1 and 2-D elsewhere.  Isotropic Gaussian noise is
added for training while clean copies keep the analytic density and rank.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

VARDIM_MIX_MEANS = np.array([-2.0, 0.0, 2.0])
VARDIM_MIX_STD = 0.3
GEN_2D_NAMES = (
    "points", "circles", "caret", "swirl", "grid", "moons", "pinwheel", "swissroll",
)


@dataclass
class Dataset:
    name: str
    points: np.ndarray
    true_logpdf: np.ndarray | None = None
    true_rank: np.ndarray | None = None
    clean: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def clean_view(self) -> "Dataset":
        """The noiseless copies with their ground truth attached."""
        if self.clean is None:
            raise ValueError(f"dataset {self.name!r} has no clean copies")
        return Dataset(self.name + "-clean", self.clean.copy(),
                       true_logpdf=self.true_logpdf, true_rank=self.true_rank,
                       meta=dict(self.meta))

    def split(self, train_frac: float) -> tuple["Dataset", "Dataset"]:
        nt = int(round(self.n * train_frac))

        def take(sl):
            return Dataset(
                self.name,
                self.points[sl].copy(),
                None if self.true_logpdf is None else self.true_logpdf[sl].copy(),
                None if self.true_rank is None else self.true_rank[sl].copy(),
                None if self.clean is None else self.clean[sl].copy(),
                dict(self.meta),
            )

        return take(slice(0, nt)), take(slice(nt, self.n))


# --------------------------------------------------------------------------
# 2-D generators
# --------------------------------------------------------------------------


def _gen_points(n, rng):
    angles = 2 * np.pi * rng.integers(0, 8, size=n) / 8
    centers = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return centers + rng.normal(0, 0.10, size=(n, 2))


def _gen_circles(n, rng):
    radius = np.where(rng.random(n) < 0.5, 1.0, 0.5)
    theta = rng.uniform(0, 2 * np.pi, size=n)
    r = radius + rng.normal(0, 0.02, size=n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _gen_caret(n, rng):
    apex = np.array([0.0, 0.6])
    side = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    u = rng.random(n)
    length = 1.2
    pts = apex + np.stack(
        [side * u * length / np.sqrt(2), -u * length / np.sqrt(2)], axis=1
    )
    return pts + rng.normal(0, 0.05, size=(n, 2))


def _gen_swirl(n, rng):
    theta = 2.5 * np.pi * np.sqrt(rng.random(n))
    r = 2.0 * theta / (2.5 * np.pi)
    pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return pts + rng.normal(0, 0.03, size=(n, 2))


def _gen_grid(n, rng):
    cells = rng.integers(0, 25, size=n)
    cx = cells % 5 - 2.0
    cy = cells // 5 - 2.0
    return np.stack([cx, cy], axis=1) + rng.normal(0, 0.05, size=(n, 2))


def _gen_moons(n, rng):
    upper = rng.random(n) < 0.5
    t = rng.uniform(0, np.pi, size=n)
    x = np.where(upper, np.cos(t), 1.0 - np.cos(t))
    y = np.where(upper, np.sin(t), 0.5 - np.sin(t))
    return np.stack([x, y], axis=1) + rng.normal(0, 0.05, size=(n, 2))


def _gen_pinwheel(n, rng):
    arms, radial_std, tangential_std, rate = 5, 0.3, 0.1, 0.25
    labels = rng.integers(0, arms, size=n)
    feats = rng.normal(size=(n, 2)) * np.array([radial_std, tangential_std]) + np.array([1.0, 0.0])
    angles = 2 * np.pi * labels / arms + rate * np.exp(feats[:, 0])
    c, s = np.cos(angles), np.sin(angles)
    return np.stack(
        [feats[:, 0] * c - feats[:, 1] * s, feats[:, 0] * s + feats[:, 1] * c], axis=1
    )


def _gen_swissroll(n, rng):
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.random(n))
    pts = np.stack([t * np.cos(t), t * np.sin(t)], axis=1) / (2.25 * np.pi)
    return pts + rng.normal(0, 0.02, size=(n, 2))


_GEN_2D = {
    "points": _gen_points,
    "circles": _gen_circles,
    "caret": _gen_caret,
    "swirl": _gen_swirl,
    "grid": _gen_grid,
    "moons": _gen_moons,
    "pinwheel": _gen_pinwheel,
    "swissroll": _gen_swissroll,
}


def gen_2d(name: str, n: int, seed: int) -> Dataset:
    if name not in _GEN_2D:
        raise ValueError(f"unknown 2-D dataset {name!r}; choose from {GEN_2D_NAMES}")
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    pts = _GEN_2D[name](n, rng)
    return Dataset(name, pts, meta={"name": name, "n": n, "seed": seed})


# --------------------------------------------------------------------------
# Variable-rank 3-D family
# --------------------------------------------------------------------------


def _mix_logpdf(z1: np.ndarray) -> np.ndarray:
    t = (z1[..., None] - VARDIM_MIX_MEANS) / VARDIM_MIX_STD
    comp = -0.5 * t**2 - np.log(VARDIM_MIX_STD) - 0.5 * np.log(2 * np.pi) + np.log(1 / 3)
    m = comp.max(axis=-1)
    return m + np.log(np.exp(comp - m[..., None]).sum(axis=-1))


def vardim_map(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    factor = np.maximum(0.0, 1.0 - np.abs(1.0 / z1))
    return np.stack([z1, z2 * factor, np.sin(z1)], axis=-1)


def gen_vardim_3d(n: int, seed: int, noise_sigma: float = 0.01) -> Dataset:
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    comp = rng.integers(0, 3, size=n)
    z1 = rng.normal(VARDIM_MIX_MEANS[comp], VARDIM_MIX_STD)
    z2 = rng.normal(size=n)
    clean = vardim_map(z1, z2)
    logpdf, rank = true_logpdf_vardim(clean)
    noisy = clean + rng.normal(0, noise_sigma, size=clean.shape)
    return Dataset(
        "vardim3d", noisy, true_logpdf=logpdf, true_rank=rank, clean=clean,
        meta={"name": "vardim3d", "n": n, "seed": seed, "noise_sigma": noise_sigma},
    )


def true_logpdf_vardim(x_clean: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic density and intrinsic rank on the clean manifold, computed
    branchwise: the 1-D region marginalizes the collapsed coordinate, the
    2-D region uses the two-column Jacobian Gram determinant."""
    x = np.atleast_2d(np.asarray(x_clean, dtype=np.float64))
    z1 = x[:, 0]
    if np.max(np.abs(x[:, 2] - np.sin(z1))) > 1e-9:
        raise ValueError("point off the generative manifold (third coordinate)")
    rank1 = np.abs(z1) <= 1.0
    if np.any(np.abs(x[rank1, 1]) > 1e-9):
        raise ValueError("point off the generative manifold (collapsed coordinate)")
    out = np.empty(len(x))
    # 1-D branch: tangent (1, 0, cos z1)
    out[rank1] = _mix_logpdf(z1[rank1]) - 0.5 * np.log(1.0 + np.cos(z1[rank1]) ** 2)
    # 2-D branch
    idx = ~rank1
    if np.any(idx):
        z1b = z1[idx]
        factor = 1.0 - 1.0 / np.abs(z1b)
        z2b = x[idx, 1] / factor
        d1 = np.stack([np.ones_like(z1b), z2b * np.sign(z1b) / z1b**2, np.cos(z1b)], axis=1)
        d2 = np.stack([np.zeros_like(z1b), factor, np.zeros_like(z1b)], axis=1)
        g11 = np.einsum("ij,ij->i", d1, d1)
        g12 = np.einsum("ij,ij->i", d1, d2)
        g22 = np.einsum("ij,ij->i", d2, d2)
        det = g11 * g22 - g12**2
        lp_z2 = -0.5 * z2b**2 - 0.5 * np.log(2 * np.pi)
        out[idx] = _mix_logpdf(z1b) + lp_z2 - 0.5 * np.log(det)
    ranks = np.where(rank1, 1, 2)
    if np.isscalar(x_clean) or np.asarray(x_clean).ndim == 1:
        return out[0], int(ranks[0])
    return out, ranks


# --------------------------------------------------------------------------
# CSV / manifest I/O
# --------------------------------------------------------------------------


def _columns(ds: Dataset) -> list[str]:
    cols = [f"x{i + 1}" for i in range(ds.dim)]
    if ds.true_logpdf is not None:
        cols.append("true_logpdf")
    if ds.true_rank is not None:
        cols.append("true_rank")
    return cols


def write_csv(ds: Dataset, path: str) -> None:
    cols = _columns(ds)
    mat = [ds.points]
    if ds.true_logpdf is not None:
        mat.append(ds.true_logpdf[:, None])
    if ds.true_rank is not None:
        mat.append(ds.true_rank[:, None].astype(np.float64))
    data = np.hstack(mat)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    os.replace(tmp, path)


def write_manifest(ds: Dataset, path: str) -> None:
    manifest = dict(ds.meta)
    manifest["columns"] = _columns(ds)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_csv(path: str, name: str | None = None) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in r] for r in rows])
    point_cols = [c for c in header if c.startswith("x")]
    d = len(point_cols)
    pts = data[:, :d]
    logpdf = rank = None
    if "true_logpdf" in header:
        logpdf = data[:, header.index("true_logpdf")]
    if "true_rank" in header:
        rank = data[:, header.index("true_rank")].astype(int)
    return Dataset(name or os.path.basename(path), pts, logpdf, rank)


def split_and_write(ds: Dataset, train_frac: float, stem: str) -> tuple[str, str]:
    """Write `<stem>_train.csv` and `<stem>_test.csv` plus a manifest."""
    train, test = ds.split(train_frac)
    train_path, test_path = f"{stem}_train.csv", f"{stem}_test.csv"
    write_csv(train, train_path)
    write_csv(test, test_path)
    write_manifest(ds, f"{stem}_manifest.json")
    return train_path, test_path
