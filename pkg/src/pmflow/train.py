"""Optimization loop, metric logging, and checkpointing.

Training is deterministic given the config seed: the per-epoch data order,
estimator block draws, and parameter initialization all derive from counter-
based seeds, so a checkpoint (parameters + optimizer state + step counter)
resumes the exact trajectory.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .contours import batched_partition_pmi, partition_pmi_hat_from_rows
from .datasets import Dataset
from .errors import FlowError
from .layers import SlicePad
from .objectives import ObjectiveConfig, build_loss
from .stack import FlowStack

OPTIMIZERS = ("ADABELIEF", "ADAM", "SGD")


@dataclass
class OptHyper:
    kind: str = "ADABELIEF"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-16

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise FlowError(f"unknown optimizer {self.kind!r}")
        if self.lr <= 0:
            raise FlowError("learning rate must be positive")


@dataclass
class OptState:
    step: int
    m: np.ndarray
    s: np.ndarray

    @classmethod
    def fresh(cls, n: int) -> "OptState":
        return cls(0, np.zeros(n), np.zeros(n))


def optimizer_step(state: OptState, params: np.ndarray, grads: np.ndarray,
                   hyper: OptHyper) -> tuple[OptState, np.ndarray, bool]:
    """One update.  Non-finite gradients skip the step (state and parameters
    unchanged); the third return says whether the step was applied."""
    if not np.all(np.isfinite(grads)):
        return state, params, False
    t = state.step + 1
    if hyper.kind == "SGD":
        return OptState(t, state.m, state.s), params - hyper.lr * grads, True
    m = hyper.beta1 * state.m + (1 - hyper.beta1) * grads
    if hyper.kind == "ADAM":
        s = hyper.beta2 * state.s + (1 - hyper.beta2) * grads**2
    else:  # ADABELIEF: variance of the gradient around its running mean
        s = hyper.beta2 * state.s + (1 - hyper.beta2) * (grads - m) ** 2 + hyper.eps
    m_hat = m / (1 - hyper.beta1**t)
    s_hat = s / (1 - hyper.beta2**t)
    new_params = params - hyper.lr * m_hat / (np.sqrt(s_hat) + hyper.eps)
    return OptState(t, m, s), new_params, True


@dataclass
class TrainConfig:
    objective: ObjectiveConfig
    architecture: dict
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 10
    optimizer: str = "ADABELIEF"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-16
    eval_interval: int = 200
    eval_points: int = 1024
    seed: int = 0
    stage2_epochs: int = 0
    stage2_learning_rate: float = 1e-3

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise FlowError("learning rate must be positive")
        if self.batch_size < 1:
            raise FlowError("batch size must be >= 1")

    def hyper(self, lr: float | None = None) -> OptHyper:
        return OptHyper(self.optimizer, lr if lr is not None else self.learning_rate,
                        self.beta1, self.beta2, self.eps_opt)

    def to_json(self) -> dict:
        d = {
            "objective": self.objective.to_json(),
            "architecture": self.architecture,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "optimizer": self.optimizer,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps_opt": self.eps_opt,
            "eval_interval": self.eval_interval,
            "eval_points": self.eval_points,
            "seed": self.seed,
            "stage2_epochs": self.stage2_epochs,
            "stage2_learning_rate": self.stage2_learning_rate,
        }
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        obj = dict(obj)
        obj["objective"] = ObjectiveConfig.from_json(obj["objective"])
        return cls(**obj)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MetricRow:
    step: int
    nll: float
    I_P: float
    Ihat_P: float
    wall_time: float


def metrics_to_csv(rows: list[MetricRow], path: str) -> None:
    import os

    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("step,nll,I_P,Ihat_P,wall_time\n")
        for r in rows:
            fh.write(f"{r.step},{r.nll:.17g},{r.I_P:.17g},{r.Ihat_P:.17g},{r.wall_time:.6f}\n")
    os.replace(tmp, path)


_MAGIC = b"PMFLOWCKPT1\n"


@dataclass
class Checkpoint:
    architecture: dict
    params: np.ndarray
    opt_m: np.ndarray
    opt_s: np.ndarray
    step: int
    seed: int
    config_hash: str
    metrics: list[MetricRow] = field(default_factory=list)

    def stack(self) -> FlowStack:
        return FlowStack.from_config(self.architecture, params=self.params.copy())

    def save(self, path: str) -> None:
        import os

        header = {
            "architecture": self.architecture,
            "step": self.step,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "n_params": int(self.params.size),
            "metrics": [
                [r.step, r.nll, r.I_P, r.Ihat_P, r.wall_time] for r in self.metrics
            ],
        }
        blob = json.dumps(header, sort_keys=True).encode()
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for arr in (self.params, self.opt_m, self.opt_s):
                fh.write(np.asarray(arr, "<f8").tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise FlowError(f"{path} is not a checkpoint file")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode())
            n = header["n_params"]
            arrays = [
                np.frombuffer(fh.read(8 * n), dtype="<f8").astype(np.float64)
                for _ in range(3)
            ]
        metrics = [MetricRow(int(r[0]), r[1], r[2], r[3], r[4]) for r in header["metrics"]]
        return cls(header["architecture"], arrays[0], arrays[1], arrays[2],
                   int(header["step"]), int(header["seed"]), header["config_hash"], metrics)


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng(_derive_seed(seed, 7919, epoch)).permutation(n)


def _evaluate(stack: FlowStack, config: TrainConfig, eval_points: np.ndarray,
              step: int, t0: float) -> MetricRow:
    part = config.objective.partition
    if stack.is_injective:
        z, _ = stack.inverse(eval_points)
        nll = -float(np.mean(stack.log_prob_injective(z)))
        ip = float(np.mean(batched_partition_pmi(stack, z, part)))
        ihat = float("nan")
    else:
        nll = -float(np.mean(stack.log_prob(eval_points)))
        z, _ = stack.inverse(eval_points)
        if part is not None:
            ip = float(np.mean(batched_partition_pmi(stack, z, part)))
            G = stack.inverse_jacobians_at(eval_points)
            ihat = float(np.mean(
                [partition_pmi_hat_from_rows(G[i], part.blocks) for i in range(len(G))]
            ))
        else:
            ip = ihat = float("nan")
    return MetricRow(step, nll, ip, ihat, time.time() - t0)


def _safe_evaluate(stack, config, eval_points, step, t0) -> MetricRow:
    try:
        return _evaluate(stack, config, eval_points, step, t0)
    except (ad.NonFiniteError, FlowError):
        return MetricRow(step, float("nan"), float("nan"), float("nan"),
                         time.time() - t0)


def _run_steps(stack: FlowStack, config: TrainConfig, objective: ObjectiveConfig,
               train: np.ndarray, eval_points: np.ndarray, opt: OptState,
               hyper: OptHyper, n_steps: int, metrics: list[MetricRow],
               trainable_mask: np.ndarray | None = None,
               log=None) -> tuple[OptState, bool]:
    """Advance the loop by `n_steps` updates from the state's step counter.

    The (epoch, batch) schedule is a pure function of the absolute step, so
    resuming from a checkpoint mid-epoch replays the identical trajectory.
    """
    n = len(train)
    batches = max(1, n // config.batch_size)
    t0 = time.time()
    bad_evals = 0
    last_good = stack.params.copy()
    order_epoch, order = -1, None
    prev_finite = ad.set_finite_checks(False)
    try:
        last_step = opt.step + n_steps
        for t in range(opt.step, last_step):
            epoch, b = divmod(t, batches)
            if epoch != order_epoch:
                order_epoch, order = epoch, _epoch_order(config.seed, epoch, n)
            batch = train[order[b * config.batch_size:(b + 1) * config.batch_size]]
            if len(batch) == 0:
                batch = train[order[:config.batch_size]]
            draw = _derive_seed(objective.seed, epoch, b)
            builder = build_loss(stack, objective, batch, draw)
            try:
                _, grads = ad.value_and_grad(builder, stack.params)
            except ad.NonFiniteError:
                grads = np.full_like(stack.params, np.nan)
            if trainable_mask is not None and np.all(np.isfinite(grads)):
                grads = np.where(trainable_mask, grads, 0.0)
            opt, new_params, applied = optimizer_step(opt, stack.params, grads, hyper)
            if applied:
                stack.params = new_params
            else:
                opt = OptState(opt.step + 1, opt.m, opt.s)
                if log:
                    log(f"step {opt.step}: non-finite gradient, step skipped")
            if opt.step % config.eval_interval == 0 or opt.step == last_step:
                ad.set_finite_checks(True)
                row = _safe_evaluate(stack, config, eval_points, opt.step, t0)
                ad.set_finite_checks(False)
                metrics.append(row)
                if log:
                    log(
                        f"step {row.step}: nll={row.nll:.4f} I_P={row.I_P:.4f} "
                        f"Ihat_P={row.Ihat_P:.4f}"
                    )
                if not np.isfinite(row.nll):
                    bad_evals += 1
                    if bad_evals >= 3:
                        stack.params = last_good
                        return opt, True
                else:
                    bad_evals = 0
                    last_good = stack.params.copy()
    finally:
        ad.set_finite_checks(prev_finite)
    return opt, False


def _split_eval(data: Dataset, held_out: Dataset | None, config: TrainConfig):
    if held_out is None:
        train, held_out = data.split(0.9)
    else:
        train = data
    cap = min(config.eval_points, held_out.n)
    return train.points, held_out.points[:cap]


def fit(config: TrainConfig, data: Dataset, held_out: Dataset | None = None,
        resume: Checkpoint | None = None, log=None) -> Checkpoint:
    """Train per the config; returns the final checkpoint with its metric
    history.  Divergence (three consecutive non-finite evals) aborts with the
    last good parameters."""
    train, eval_points = _split_eval(data, held_out, config)
    if resume is not None:
        stack = resume.stack()
        opt = OptState(resume.step, resume.opt_m.copy(), resume.opt_s.copy())
        metrics = list(resume.metrics)
    else:
        stack = FlowStack.from_config(config.architecture)
        stack.params = _seeded_params(config)
        stack.data_dependent_init(train[: min(len(train), 1024)])
        opt = OptState.fresh(stack.n_params)
        metrics = []
    batches = max(1, len(train) // config.batch_size)
    n_steps = config.epochs * batches - opt.step
    opt, diverged = _run_steps(
        stack, config, config.objective, train, eval_points, opt,
        config.hyper(), max(n_steps, 0), metrics, log=log,
    )
    if diverged and log:
        log("training diverged; returning last good checkpoint")
    return Checkpoint(stack.config(), stack.params.copy(), opt.m.copy(), opt.s.copy(),
                      opt.step, config.seed, config.config_hash(), metrics)


def _seeded_params(config: TrainConfig) -> np.ndarray:
    from .stack import FlowStack as _FS

    probe = _FS.from_config(config.architecture)
    rng = np.random.default_rng(_derive_seed(config.seed, 1))
    return np.concatenate([ly.init(rng) for ly in probe.layers]) if probe.n_params else np.zeros(0)


def _latent_side_mask(stack: FlowStack) -> np.ndarray:
    """True for parameters of layers before the slice (the latent flow)."""
    mask = np.zeros(stack.n_params, dtype=bool)
    for i, ly in enumerate(stack.layers):
        if isinstance(ly, SlicePad):
            break
        mask[int(stack.offsets[i]):int(stack.offsets[i + 1])] = True
    return mask


def fit_injective(config: TrainConfig, data: Dataset, held_out: Dataset | None = None,
                  log=None) -> Checkpoint:
    """Two-stage training: stage 1 optimizes the projected single-probe
    objective with reconstruction on all parameters; stage 2 freezes every
    layer from the slice outward and fine-tunes the latent flow without the
    reconstruction term."""
    if config.objective.kind != "IPF_STAGE1":
        raise FlowError("fit_injective expects an IPF_STAGE1 objective")
    train, eval_points = _split_eval(data, held_out, config)
    stack = FlowStack.from_config(config.architecture)
    stack.params = _seeded_params(config)
    stack.data_dependent_init(train[: min(len(train), 1024)])
    if not stack.is_injective:
        raise FlowError("fit_injective needs an injective architecture")
    opt = OptState.fresh(stack.n_params)
    metrics: list[MetricRow] = []
    batches = max(1, len(train) // config.batch_size)
    opt, diverged = _run_steps(
        stack, config, config.objective, train, eval_points, opt,
        config.hyper(), config.epochs * batches, metrics, log=log,
    )
    if not diverged and config.stage2_epochs > 0:
        stage2 = replace(config.objective, kind="IPF_STAGE2")
        mask = _latent_side_mask(stack)
        opt2 = OptState(opt.step, np.zeros(stack.n_params), np.zeros(stack.n_params))
        opt, diverged = _run_steps(
            stack, config, stage2, train, eval_points, opt2,
            config.hyper(config.stage2_learning_rate), config.stage2_epochs * batches,
            metrics, trainable_mask=mask, log=log,
        )
    return Checkpoint(stack.config(), stack.params.copy(), opt.m.copy(), opt.s.copy(),
                      opt.step, config.seed, config.config_hash(), metrics)
