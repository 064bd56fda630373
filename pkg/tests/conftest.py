import numpy as np
import pytest

from pmflow.layers import (
    ActNorm,
    AffineCoupling,
    InvertibleLinear,
    Logit,
    MixtureCdfCoupling,
    RqSplineCoupling,
    ShiftScale,
    SlicePad,
)
from pmflow.stack import FlowStack, GaussianPrior


def perturb(stack: FlowStack, seed: int, scale: float = 0.1) -> FlowStack:
    """Randomize parameters away from the (near-identity) initialization."""
    rng = np.random.default_rng(seed)
    stack.params = stack.params + rng.normal(0.0, scale, size=stack.params.shape)
    return stack


def make_affine_stack(dim: int = 2, n_coupling: int = 3, seed: int = 0,
                      hidden: int = 8, perturb_scale: float = 0.3) -> FlowStack:
    layers = []
    for i in range(n_coupling):
        layers.append(ActNorm(dim))
        layers.append(InvertibleLinear(dim))
        layers.append(AffineCoupling(dim, hidden=hidden, n_blocks=1, flip=bool(i % 2)))
    stack = FlowStack(layers, seed=seed)
    return perturb(stack, seed + 1, perturb_scale)


def make_spline_stack(dim: int = 2, n_coupling: int = 2, seed: int = 0,
                      hidden: int = 8, perturb_scale: float = 0.2) -> FlowStack:
    layers = []
    for i in range(n_coupling):
        layers.append(ActNorm(dim))
        layers.append(RqSplineCoupling(dim, n_bins=4, hidden=hidden, n_blocks=1, flip=bool(i % 2)))
    stack = FlowStack(layers, seed=seed)
    return perturb(stack, seed + 1, perturb_scale)


def make_mixture_stack(dim: int = 2, seed: int = 0, n_components: int = 3,
                       perturb_scale: float = 0.1) -> FlowStack:
    layers = [
        MixtureCdfCoupling(dim, n_components=n_components, hidden=8, n_blocks=1,
                           flip=False, apply_logit=True),
        AffineCoupling(dim, hidden=8, n_blocks=1, flip=True),
        ShiftScale(dim),
    ]
    stack = FlowStack(layers, seed=seed)
    return perturb(stack, seed + 1, perturb_scale)


def make_linear_stack(A: np.ndarray) -> FlowStack:
    """Stack computing x = A z exactly, via one LU-parameterized layer."""
    import scipy.linalg

    d = A.shape[0]
    layer = InvertibleLinear(d)
    P, L, U = scipy.linalg.lu(A)
    layer.perm = [int(np.argmax(P[i])) for i in range(d)]
    layer._P = np.eye(d)[layer.perm]
    low = np.array([L[i, j] for i in range(d) for j in range(d) if i > j])
    up = np.array([U[i, j] for i in range(d) for j in range(d) if i < j])
    params = np.concatenate([low, up, np.diag(U)])
    return FlowStack([layer], params=params)


def make_injective_stack(latent: int = 2, data: int = 3, seed: int = 0,
                         perturb_scale: float = 0.25) -> FlowStack:
    layers = [
        AffineCoupling(latent, hidden=8, n_blocks=1, flip=False),
        SlicePad(latent, data),
        ActNorm(data),
        InvertibleLinear(data),
        AffineCoupling(data, hidden=8, n_blocks=1, flip=False),
        AffineCoupling(data, hidden=8, n_blocks=1, flip=True),
    ]
    stack = FlowStack(layers, prior=GaussianPrior(latent), seed=seed)
    return perturb(stack, seed + 1, perturb_scale)


@pytest.fixture
def affine_stack_2d():
    return make_affine_stack(dim=2, seed=11)
