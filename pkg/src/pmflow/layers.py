"""Invertible and injective flow layers.

Every layer maps batches (B, dim) -> (B, dim) in the generative direction
(`forward`, latent toward data) and back (`inverse`), returning a
per-sample log |det Jacobian| for the direction applied.  Both directions
are recorded on the autodiff graph, so Jacobian probes and parameter
gradients work through either map.  The logistic-mixture CDF is the one
transform without a closed-form inverse; its inverse brackets by doubling,
bisects to 1e-10, then reattaches gradients with three on-graph Newton
steps.

Parameters live in a single flat float64 vector owned by the stack; each
layer reads its slice.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import BracketError, FlowError

_LOG_2PI = float(np.log(2.0 * np.pi))


def _take(p: Node, start: int, size: int, shape=None) -> Node:
    out = ad.slice_(p, (slice(start, start + size),))
    if shape is not None:
        out = ad.reshape(out, shape)
    return out


def _per_sample(scalar: Node, batch: int) -> Node:
    """Broadcast a parameter-only log-determinant to shape (B,)."""
    return ad.broadcast_to(ad.reshape(scalar, (1,)), (batch,))


class ConditionerNet:
    """Residual MLP: input -> hidden, `n_blocks` residual tanh blocks,
    linear head initialized to zero so couplings start near identity."""

    def __init__(self, d_in: int, d_out: int, hidden: int, n_blocks: int):
        self.d_in = d_in
        self.d_out = d_out
        self.hidden = hidden
        self.n_blocks = n_blocks

    @property
    def n_params(self) -> int:
        h = self.hidden
        return (self.d_in * h + h) + self.n_blocks * 2 * (h * h + h) + (h * self.d_out + self.d_out)

    def init(self, rng: np.random.Generator, head_bias: np.ndarray | None = None) -> np.ndarray:
        h = self.hidden
        parts = [
            rng.normal(0.0, 1.0 / np.sqrt(self.d_in), size=self.d_in * h),
            np.zeros(h),
        ]
        for _ in range(self.n_blocks):
            parts.append(rng.normal(0.0, 1.0 / np.sqrt(h), size=h * h))
            parts.append(np.zeros(h))
            parts.append(rng.normal(0.0, 1.0 / np.sqrt(h), size=h * h))
            parts.append(np.zeros(h))
        parts.append(np.zeros(h * self.d_out))
        parts.append(np.zeros(self.d_out) if head_bias is None else np.asarray(head_bias, float))
        return np.concatenate(parts)

    def apply(self, p: Node, x: Node) -> Node:
        h = self.hidden
        o = 0
        W = _take(p, o, self.d_in * h, (self.d_in, h)); o += self.d_in * h
        b = _take(p, o, h, (1, h)); o += h
        a = ad.tanh(ad.matmul(x, W) + b)
        for _ in range(self.n_blocks):
            W1 = _take(p, o, h * h, (h, h)); o += h * h
            b1 = _take(p, o, h, (1, h)); o += h
            W2 = _take(p, o, h * h, (h, h)); o += h * h
            b2 = _take(p, o, h, (1, h)); o += h
            a = a + ad.matmul(ad.tanh(ad.matmul(a, W1) + b1), W2) + b2
        Wo = _take(p, o, h * self.d_out, (h, self.d_out)); o += h * self.d_out
        bo = _take(p, o, self.d_out, (1, self.d_out))
        return ad.matmul(a, Wo) + bo


class Layer:
    kind = "base"

    def __init__(self, dim: int):
        self.dim = dim

    @property
    def n_params(self) -> int:
        return 0

    @property
    def in_dim(self) -> int:
        return self.dim

    @property
    def out_dim(self) -> int:
        return self.dim

    def init(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.n_params)

    def forward(self, p: Node, z: Node) -> tuple[Node, Node | None]:
        raise NotImplementedError

    def inverse(self, p: Node, x: Node) -> tuple[Node, Node | None]:
        raise NotImplementedError

    def config(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


class ActNorm(Layer):
    """Per-dimension affine with data-dependent initialization hook.

    Identity at default initialization; `init_from_data` (called by the
    stack) sets the parameters so the inverse direction whitens its input.
    """

    kind = "act-norm"

    @property
    def n_params(self) -> int:
        return 2 * self.dim

    def _unpack(self, p: Node):
        return _take(p, 0, self.dim, (1, self.dim)), _take(p, self.dim, self.dim, (1, self.dim))

    def forward(self, p: Node, z: Node):
        log_s, b = self._unpack(p)
        x = z * ad.exp(log_s) + b
        return x, _per_sample(ad.sum_(log_s), z.value.shape[0])

    def inverse(self, p: Node, x: Node):
        log_s, b = self._unpack(p)
        z = (x - b) * ad.exp(ad.neg(log_s))
        return z, _per_sample(ad.neg(ad.sum_(log_s)), x.value.shape[0])

    @staticmethod
    def params_from_activation(x: np.ndarray) -> np.ndarray:
        std = np.maximum(x.std(axis=0), 1e-7)
        return np.concatenate([np.log(std), x.mean(axis=0)])


class ShiftScale(Layer):
    """Global learnable per-dimension affine x = z * exp(a) + b."""

    kind = "shift-scale"

    @property
    def n_params(self) -> int:
        return 2 * self.dim

    def forward(self, p: Node, z: Node):
        a = _take(p, 0, self.dim, (1, self.dim))
        b = _take(p, self.dim, self.dim, (1, self.dim))
        return z * ad.exp(a) + b, _per_sample(ad.sum_(a), z.value.shape[0])

    def inverse(self, p: Node, x: Node):
        a = _take(p, 0, self.dim, (1, self.dim))
        b = _take(p, self.dim, self.dim, (1, self.dim))
        return (x - b) * ad.exp(ad.neg(a)), _per_sample(ad.neg(ad.sum_(a)), x.value.shape[0])


class Logit(Layer):
    """Parameter-free logit: forward maps (0,1) -> R, inverse is sigmoid."""

    kind = "logit"

    def forward(self, p: Node, z: Node):
        if np.any(z.value <= 0.0) or np.any(z.value >= 1.0):
            raise FlowError("logit layer input must lie strictly inside (0, 1)")
        x = ad.log(z) - ad.log(1.0 - z)
        ld = ad.sum_(ad.neg(ad.log(z) + ad.log(1.0 - z)), axis=1)
        return x, ld

    def inverse(self, p: Node, x: Node):
        z = ad.sigmoid(x)
        ld = ad.sum_(ad.log(z) + ad.log(1.0 - z), axis=1)
        return z, ld


def _coupling_split(dim: int, flip: bool):
    k = (dim + 1) // 2
    first, second = slice(0, k), slice(k, dim)
    if flip:
        return second, first
    return first, second


class _CouplingLayer(Layer):
    """Shared structure: pass one index block through, transform the other
    conditioned on it, reassemble in original index order."""

    def __init__(self, dim: int, hidden: int, n_blocks: int, flip: bool, out_per_dim: int):
        if dim < 2:
            raise FlowError("coupling layers need dim >= 2")
        super().__init__(dim)
        self.flip = bool(flip)
        self.id_slice, self.tr_slice = _coupling_split(dim, flip)
        self.id_size = self.id_slice.stop - self.id_slice.start
        self.tr_size = self.tr_slice.stop - self.tr_slice.start
        self.net = ConditionerNet(self.id_size, self.tr_size * out_per_dim, hidden, n_blocks)

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def _head_bias(self) -> np.ndarray | None:
        return None

    def init(self, rng: np.random.Generator) -> np.ndarray:
        return self.net.init(rng, self._head_bias())

    def _split(self, v: Node):
        return (
            ad.slice_(v, (slice(None), self.id_slice)),
            ad.slice_(v, (slice(None), self.tr_slice)),
        )

    def _join(self, ident: Node, transformed: Node) -> Node:
        if self.flip:
            return ad.concat([transformed, ident], axis=1)
        return ad.concat([ident, transformed], axis=1)

    def _transform(self, raw: Node, u: Node, forward: bool) -> tuple[Node, Node]:
        raise NotImplementedError

    def forward(self, p: Node, z: Node):
        ident, u = self._split(z)
        raw = self.net.apply(p, ident)
        out, ld = self._transform(raw, u, forward=True)
        return self._join(ident, out), ld

    def inverse(self, p: Node, x: Node):
        ident, u = self._split(x)
        raw = self.net.apply(p, ident)
        out, ld = self._transform(raw, u, forward=False)
        return self._join(ident, out), ld

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "hidden": self.net.hidden,
            "n_blocks": self.net.n_blocks,
            "flip": self.flip,
        }


class AffineCoupling(_CouplingLayer):
    """x = u * exp(s) + t with s soft-clamped by tanh for stability."""

    kind = "affine-coupling"
    LOG_SCALE_CLAMP = 3.0

    def __init__(self, dim: int, hidden: int = 32, n_blocks: int = 2, flip: bool = False):
        super().__init__(dim, hidden, n_blocks, flip, out_per_dim=2)

    def _transform(self, raw: Node, u: Node, forward: bool):
        B = u.value.shape[0]
        raw = ad.reshape(raw, (B, self.tr_size, 2))
        s_raw = ad.reshape(ad.slice_(raw, (slice(None), slice(None), 0)), (B, self.tr_size))
        t = ad.reshape(ad.slice_(raw, (slice(None), slice(None), 1)), (B, self.tr_size))
        c = self.LOG_SCALE_CLAMP
        s = ad.tanh(s_raw / c) * c
        if forward:
            return u * ad.exp(s) + t, ad.sum_(s, axis=1)
        return (u - t) * ad.exp(ad.neg(s)), ad.neg(ad.sum_(s, axis=1))


class MixtureCdfCoupling(_CouplingLayer):
    """Monotone map through a conditioned K-component logistic-mixture CDF.

    Forward sends R -> (0,1); compose with a Logit layer to return to R.
    The inverse brackets by interval doubling and bisects, then runs three
    Newton steps on the graph so derivatives of any order flow through the
    implicitly defined solution.
    """

    kind = "logistic-mixture-cdf-coupling"
    BISECT_TOL = 1e-10
    BISECT_MAX_ITERS = 200
    NEWTON_POLISH = 3

    def __init__(self, dim: int, n_components: int = 8, hidden: int = 32,
                 n_blocks: int = 2, flip: bool = False, apply_logit: bool = False,
                 layer_index: int | None = None):
        self.n_components = n_components
        self.apply_logit = bool(apply_logit)
        super().__init__(dim, hidden, n_blocks, flip, out_per_dim=3 * n_components)
        self.layer_index = layer_index

    def _head_bias(self) -> np.ndarray:
        # Spread component means so the initial CDF is usefully smooth.
        K = self.n_components
        bias = np.zeros((self.tr_size, 3, K))
        bias[:, 1, :] = np.linspace(-2.0, 2.0, K)
        return bias.ravel()

    def _mixture_params(self, raw: Node, B: int):
        K = self.n_components
        raw = ad.reshape(raw, (B * self.tr_size, 3, K))
        logits = ad.reshape(ad.slice_(raw, (slice(None), 0, slice(None))), (B * self.tr_size, K))
        means = ad.reshape(ad.slice_(raw, (slice(None), 1, slice(None))), (B * self.tr_size, K))
        log_scales = ad.reshape(ad.slice_(raw, (slice(None), 2, slice(None))), (B * self.tr_size, K))
        log_w = logits - ad.logsumexp(logits, axis=1, keepdims=True)
        return log_w, means, log_scales

    @staticmethod
    def _cdf(u_flat: Node, log_w: Node, means: Node, log_scales: Node) -> Node:
        t = (ad.reshape(u_flat, (u_flat.value.shape[0], 1)) - means) * ad.exp(ad.neg(log_scales))
        return ad.sum_(ad.exp(log_w) * ad.sigmoid(t), axis=1)

    @staticmethod
    def _log_pdf(u_flat: Node, log_w: Node, means: Node, log_scales: Node) -> Node:
        t = (ad.reshape(u_flat, (u_flat.value.shape[0], 1)) - means) * ad.exp(ad.neg(log_scales))
        comp = ad.neg(ad.softplus(t) + ad.softplus(ad.neg(t))) - log_scales
        return ad.logsumexp(log_w + comp, axis=1)

    def _transform(self, raw: Node, u: Node, forward: bool):
        B = u.value.shape[0]
        log_w, means, log_scales = self._mixture_params(raw, B)
        flat = ad.reshape(u, (B * self.tr_size,))
        if forward:
            out = self._cdf(flat, log_w, means, log_scales)
            if np.any(out.value <= 0.0) or np.any(out.value >= 1.0):
                raise FlowError(
                    f"mixture-CDF output left (0,1) before logit (layer {self.layer_index})"
                )
            ld = ad.reshape(self._log_pdf(flat, log_w, means, log_scales), (B, self.tr_size))
            if self.apply_logit:
                ld = ld - ad.reshape(ad.log(out) + ad.log(1.0 - out), (B, self.tr_size))
                out = ad.log(out) - ad.log(1.0 - out)
            return ad.reshape(out, (B, self.tr_size)), ad.sum_(ld, axis=1)
        if self.apply_logit:
            flat = ad.sigmoid(flat)
        z = self._invert(flat, log_w, means, log_scales)
        ld = ad.neg(ad.reshape(self._log_pdf(z, log_w, means, log_scales), (B, self.tr_size)))
        if self.apply_logit:
            ld = ld + ad.reshape(ad.log(flat) + ad.log(1.0 - flat), (B, self.tr_size))
        return ad.reshape(z, (B, self.tr_size)), ad.sum_(ld, axis=1)

    def _invert(self, target: Node, log_w: Node, means: Node, log_scales: Node) -> Node:
        tv = target.value
        if np.any(tv <= 0.0) or np.any(tv >= 1.0):
            raise BracketError(
                f"mixture-CDF inverse target outside (0,1) (layer {self.layer_index})"
            )
        w = np.exp(log_w.value)
        mu = means.value
        sc = np.exp(log_scales.value)

        def cdf_np(z):
            return np.sum(w * (0.5 * (np.tanh(0.5 * (z[:, None] - mu) / sc) + 1.0)), axis=1)

        lo = np.min(mu - 2.0 * sc, axis=1)
        hi = np.max(mu + 2.0 * sc, axis=1)
        span = np.maximum(hi - lo, 1.0)
        for _ in range(80):
            bad_lo = cdf_np(lo) >= tv
            bad_hi = cdf_np(hi) <= tv
            if not (bad_lo.any() or bad_hi.any()):
                break
            lo = np.where(bad_lo, lo - span, lo)
            hi = np.where(bad_hi, hi + span, hi)
            span = span * 2.0
        else:
            raise BracketError(
                f"mixture-CDF bisection failed to bracket (layer {self.layer_index})"
            )
        for _ in range(self.BISECT_MAX_ITERS):
            mid = 0.5 * (lo + hi)
            below = cdf_np(mid) < tv
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.max(hi - lo) < self.BISECT_TOL:
                break
        z = ad.constant(0.5 * (lo + hi))
        # On-graph Newton polish: attaches exact derivatives w.r.t. the
        # target and the mixture parameters via the implicit function rule.
        for _ in range(self.NEWTON_POLISH):
            resid = self._cdf(z, log_w, means, log_scales) - target
            z = z - resid * ad.exp(ad.neg(self._log_pdf(z, log_w, means, log_scales)))
        return z

    def config(self) -> dict:
        c = super().config()
        c["n_components"] = self.n_components
        c["apply_logit"] = self.apply_logit
        return c


class RqSplineCoupling(_CouplingLayer):
    """Monotone rational-quadratic spline on [-bound, bound] with linear
    tails; closed form in both directions."""

    kind = "rq-spline-coupling"
    MIN_BIN = 1e-3
    MIN_DERIV = 1e-3

    def __init__(self, dim: int, n_bins: int = 8, hidden: int = 32, n_blocks: int = 2,
                 flip: bool = False, bound: float = 4.0):
        self.n_bins = n_bins
        self.bound = float(bound)
        super().__init__(dim, hidden, n_blocks, flip, out_per_dim=3 * n_bins - 1)

    def _head_bias(self) -> np.ndarray:
        K = self.n_bins
        bias = np.zeros((self.tr_size, 3 * K - 1))
        # softplus(raw) + MIN_DERIV == 1 makes the initial spline the identity
        bias[:, 2 * K:] = np.log(np.expm1(1.0 - self.MIN_DERIV))
        return bias.ravel()

    def _knots(self, raw: Node, N: int):
        K = self.n_bins
        raw = ad.reshape(raw, (N, 3 * K - 1))
        w_raw = ad.slice_(raw, (slice(None), slice(0, K)))
        h_raw = ad.slice_(raw, (slice(None), slice(K, 2 * K)))
        d_raw = ad.slice_(raw, (slice(None), slice(2 * K, 3 * K - 1)))
        two_b = 2.0 * self.bound

        def _bins(r: Node) -> Node:
            frac = ad.exp(r - ad.logsumexp(r, axis=1, keepdims=True))
            frac = self.MIN_BIN + (1.0 - self.MIN_BIN * K) * frac
            return frac * two_b

        widths = _bins(w_raw)
        heights = _bins(h_raw)
        cums = ad.constant(np.triu(np.ones((K, K))))
        kx = ad.concat([ad.constant(np.full((N, 1), -self.bound)),
                        ad.matmul(widths, cums) - self.bound], axis=1)
        ky = ad.concat([ad.constant(np.full((N, 1), -self.bound)),
                        ad.matmul(heights, cums) - self.bound], axis=1)
        ones = ad.constant(np.ones((N, 1)))
        derivs = ad.concat([ones, self.MIN_DERIV + ad.softplus(d_raw), ones], axis=1)
        return widths, heights, kx, ky, derivs

    @staticmethod
    def _gather(q: Node, onehot: np.ndarray) -> Node:
        return ad.sum_(q * ad.constant(onehot), axis=1)

    def _transform(self, raw: Node, u: Node, forward: bool):
        B = u.value.shape[0]
        N = B * self.tr_size
        K = self.n_bins
        flat = ad.reshape(u, (N,))
        inside = np.abs(flat.value) < self.bound
        safe = ad.where_mask(inside, flat, ad.constant(np.zeros(N)))
        widths, heights, kx, ky, derivs = self._knots(raw, N)

        ref = kx if forward else ky
        idx = np.clip(
            np.sum(ref.value[:, :-1] <= safe.value[:, None], axis=1) - 1, 0, K - 1
        )
        sel = np.zeros((N, K))
        sel[np.arange(N), idx] = 1.0
        sel_hi = np.zeros((N, K + 1))
        sel_hi[np.arange(N), idx + 1] = 1.0
        sel_lo = np.zeros((N, K + 1))
        sel_lo[np.arange(N), idx] = 1.0

        wk = self._gather(widths, sel)
        hk = self._gather(heights, sel)
        xk = self._gather(kx, sel_lo)
        yk = self._gather(ky, sel_lo)
        dk = self._gather(derivs, sel_lo)
        dk1 = self._gather(derivs, sel_hi)
        s = hk / wk

        if forward:
            xi = (safe - xk) / wk
        else:
            # Solve the quadratic in xi for the inverse direction.
            dy = safe - yk
            a = hk * (s - dk) + dy * (dk1 + dk - 2.0 * s)
            b = hk * dk - dy * (dk1 + dk - 2.0 * s)
            c = ad.neg(s * dy)
            disc = ad.relu(b * b - 4.0 * a * c)
            xi = (2.0 * c) / (ad.neg(b) - ad.sqrt(disc))
        omx = 1.0 - xi
        denom = s + (dk1 + dk - 2.0 * s) * xi * omx
        deriv_num = s * s * (dk1 * xi * xi + 2.0 * s * xi * omx + dk * omx * omx)
        log_deriv = ad.log(deriv_num) - 2.0 * ad.log(denom)
        if forward:
            out = yk + (hk * (s * xi * xi + dk * xi * omx)) / denom
            ld_el = log_deriv
        else:
            out = xk + xi * wk
            ld_el = ad.neg(log_deriv)
        out = ad.where_mask(inside, out, flat)
        ld_el = ad.where_mask(inside, ld_el, ad.constant(np.zeros(N)))
        return ad.reshape(out, (B, self.tr_size)), ad.sum_(ad.reshape(ld_el, (B, self.tr_size)), axis=1)

    def config(self) -> dict:
        c = super().config()
        c.update(n_bins=self.n_bins, bound=self.bound)
        return c


class InvertibleLinear(Layer):
    """Dense invertible map x = W z with W = P L U (fixed permutation P,
    unit-lower L, upper U).  log|det W| = sum log|diag U|."""

    kind = "invertible-linear"

    def __init__(self, dim: int, perm: list[int] | None = None):
        super().__init__(dim)
        self.perm = list(range(dim)) if perm is None else list(perm)
        d = dim
        self._n_tri = d * (d - 1) // 2
        lower_idx = [(i, j) for i in range(d) for j in range(d) if i > j]
        upper_idx = [(i, j) for i in range(d) for j in range(d) if i < j]
        self._scatter_low = np.zeros((self._n_tri, d * d))
        self._scatter_up = np.zeros((self._n_tri, d * d))
        for k, (i, j) in enumerate(lower_idx):
            self._scatter_low[k, i * d + j] = 1.0
        for k, (i, j) in enumerate(upper_idx):
            self._scatter_up[k, i * d + j] = 1.0
        self._scatter_diag = np.zeros((d, d * d))
        for i in range(d):
            self._scatter_diag[i, i * d + i] = 1.0
        self._P = np.eye(d)[self.perm]

    @property
    def n_params(self) -> int:
        return 2 * self._n_tri + self.dim

    def init(self, rng: np.random.Generator) -> np.ndarray:
        import scipy.linalg

        # Start from a random rotation; its permutation becomes the fixed P.
        q, _ = np.linalg.qr(rng.normal(size=(self.dim, self.dim)))
        P, L, U = scipy.linalg.lu(q)
        self.perm = [int(np.argmax(P[i])) for i in range(self.dim)]
        self._P = np.eye(self.dim)[self.perm]
        d = self.dim
        low_flat = np.array([L[i, j] for i in range(d) for j in range(d) if i > j])
        up_flat = np.array([U[i, j] for i in range(d) for j in range(d) if i < j])
        return np.concatenate([low_flat, up_flat, np.diag(U).copy()])

    def _assemble(self, p: Node):
        d = self.dim
        low = _take(p, 0, self._n_tri)
        up = _take(p, self._n_tri, self._n_tri)
        diag = _take(p, 2 * self._n_tri, d)
        L = ad.reshape(ad.matmul(ad.reshape(low, (1, self._n_tri)), ad.constant(self._scatter_low)), (d, d))
        L = L + ad.constant(np.eye(d))
        U = ad.reshape(ad.matmul(ad.reshape(up, (1, self._n_tri)), ad.constant(self._scatter_up)), (d, d))
        U = U + ad.reshape(ad.matmul(ad.reshape(diag, (1, d)), ad.constant(self._scatter_diag)), (d, d))
        return L, U, diag

    def _logdet(self, diag: Node, batch: int) -> Node:
        return _per_sample(0.5 * ad.sum_(ad.log(diag * diag)), batch)

    def forward(self, p: Node, z: Node):
        L, U, diag = self._assemble(p)
        W = ad.matmul(ad.constant(self._P), ad.matmul(L, U))
        x = ad.matmul(z, ad.transpose(W))
        return x, self._logdet(diag, z.value.shape[0])

    def inverse(self, p: Node, x: Node):
        L, U, diag = self._assemble(p)
        y = ad.matmul(x, ad.constant(self._P))  # (P^T x)^T rows
        a = self._solve_unit_lower(L, y)
        z = self._solve_upper(U, a)
        return z, ad.neg(self._logdet(diag, x.value.shape[0]))

    def _solve_unit_lower(self, L: Node, y: Node) -> Node:
        d = self.dim
        cols: list[Node] = []
        for i in range(d):
            acc = ad.slice_(y, (slice(None), slice(i, i + 1)))
            for j in range(i):
                lij = ad.reshape(ad.slice_(L, (i, j)), (1, 1))
                acc = acc - cols[j] * lij
            cols.append(acc)
        return ad.concat(cols, axis=1)

    def _solve_upper(self, U: Node, y: Node) -> Node:
        d = self.dim
        cols: list[Node | None] = [None] * d
        for i in reversed(range(d)):
            acc = ad.slice_(y, (slice(None), slice(i, i + 1)))
            for j in range(i + 1, d):
                uij = ad.reshape(ad.slice_(U, (i, j)), (1, 1))
                acc = acc - cols[j] * uij
            uii = ad.reshape(ad.slice_(U, (i, i)), (1, 1))
            cols[i] = acc / uii
        return ad.concat(cols, axis=1)

    def config(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "perm": self.perm}


class SlicePad(Layer):
    """Injective widening: forward zero-pads latent coordinates up to the
    data dimension; inverse projects back onto the first `dim` coordinates.
    Contributes nothing to the log-determinant."""

    kind = "slice"

    def __init__(self, dim: int, out: int):
        if out <= dim:
            raise FlowError("slice layer must widen: out > dim")
        super().__init__(dim)
        self.out = out

    @property
    def out_dim(self) -> int:
        return self.out

    def forward(self, p: Node, z: Node):
        B = z.value.shape[0]
        pad = ad.constant(np.zeros((B, self.out - self.dim)))
        return ad.concat([z, pad], axis=1), None

    def inverse(self, p: Node, x: Node):
        return ad.slice_(x, (slice(None), slice(0, self.dim))), None

    def config(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "out": self.out}


LAYER_KINDS = {
    cls.kind: cls
    for cls in (ActNorm, ShiftScale, Logit, AffineCoupling, MixtureCdfCoupling,
                RqSplineCoupling, InvertibleLinear, SlicePad)
}


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    try:
        cls = LAYER_KINDS[kind]
    except KeyError:
        raise FlowError(f"unknown layer kind {kind!r}") from None
    return cls(**cfg)
