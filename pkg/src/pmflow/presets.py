"""Desk-scale architecture presets used by the CLI and the experiment
scripts: spline-coupling stacks interleaved with act-norm and dense
invertible mixing layers."""

from __future__ import annotations


def square_spline_architecture(dim: int, n_coupling: int = 6, hidden: int = 32,
                               n_blocks: int = 2, n_bins: int = 8,
                               bound: float = 4.0) -> dict:
    layers = []
    for i in range(n_coupling):
        layers.append({"kind": "act-norm", "dim": dim})
        layers.append({"kind": "invertible-linear", "dim": dim, "perm": list(range(dim))})
        layers.append(
            {
                "kind": "rq-spline-coupling",
                "dim": dim,
                "n_bins": n_bins,
                "hidden": hidden,
                "n_blocks": n_blocks,
                "flip": bool(i % 2),
                "bound": bound,
            }
        )
    layers.append({"kind": "act-norm", "dim": dim})
    return {
        "latent_dim": dim,
        "data_dim": dim,
        "prior": {"kind": "gaussian", "dim": dim},
        "layers": layers,
    }


def injective_architecture(latent_dim: int, data_dim: int, n_latent_coupling: int = 2,
                           n_ambient_coupling: int = 3, hidden: int = 16,
                           n_blocks: int = 1) -> dict:
    """Latent flow, zero-pad widening, then an ambient flow: the generative
    composition runs latent -> pad -> ambient."""
    layers = []
    for i in range(n_latent_coupling):
        layers.append({"kind": "act-norm", "dim": latent_dim})
        layers.append(
            {
                "kind": "affine-coupling",
                "dim": latent_dim,
                "hidden": hidden,
                "n_blocks": n_blocks,
                "flip": bool(i % 2),
            }
        )
    layers.append({"kind": "slice", "dim": latent_dim, "out": data_dim})
    for i in range(n_ambient_coupling):
        layers.append({"kind": "act-norm", "dim": data_dim})
        layers.append(
            {"kind": "invertible-linear", "dim": data_dim, "perm": list(range(data_dim))}
        )
        layers.append(
            {
                "kind": "affine-coupling",
                "dim": data_dim,
                "hidden": hidden,
                "n_blocks": n_blocks,
                "flip": bool(i % 2),
            }
        )
    return {
        "latent_dim": latent_dim,
        "data_dim": data_dim,
        "prior": {"kind": "gaussian", "dim": latent_dim},
        "layers": layers,
    }
