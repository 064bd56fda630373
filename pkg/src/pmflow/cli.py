"""Command-line entry point.

Commands: gen-data, train, eval, sample, report-contours, trace, similarity,
manifold-density, cookbook-check.  Artifacts are written atomically
(temporary file + rename); numeric CSV output carries 17 significant digits
so re-runs with the same config and seed are byte-identical apart from
wall-time fields.

Exit codes: 0 success, 2 usage error, 3 missing or malformed input file,
4 numerical or model error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import contours as ct
from . import datasets as dsets
from . import objectives as obj
from . import train as tr
from .cookbook import run_audit
from .errors import FlowError
from .stack import FlowStack

USAGE_ERROR, IO_ERROR, NUMERIC_ERROR = 2, 3, 4


def _out_path(path: str) -> str:
    base = os.environ.get("PMFLOW_OUT_DIR")
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _atomic_write(path: str, text: str) -> None:
    path = _out_path(path)
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_matrix_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _load_checkpoint(path: str) -> tr.Checkpoint:
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return tr.Checkpoint.load(path)


def _default_partition(stack: FlowStack) -> ct.Partition:
    return ct.Partition.singletons(stack.latent_dim)


# --------------------------------------------------------------------------
# command implementations
# --------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    if args.name == "vardim3d":
        data = dsets.gen_vardim_3d(args.n, args.seed, args.noise_sigma)
    else:
        data = dsets.gen_2d(args.name, args.n, args.seed)
    if args.train_frac is not None:
        stem = _out_path(args.out[:-4] if args.out.endswith(".csv") else args.out)
        dsets.split_and_write(data, args.train_frac, stem)
        print(f"wrote {stem}_train.csv, {stem}_test.csv, {stem}_manifest.json")
    else:
        dsets.write_csv(data, _out_path(args.out))
        dsets.write_manifest(data, _out_path(args.out) + ".manifest.json")
        print(f"wrote {args.out}")
    if args.clean_out:
        dsets.write_csv(data.clean_view(), _out_path(args.clean_out))
        print(f"wrote {args.clean_out}")
    return 0


def cmd_train(args) -> int:
    t0 = time.time()
    with open(args.config) as fh:
        cfg_json = json.load(fh)
    config = tr.TrainConfig.from_json(cfg_json)
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.learning_rate is not None:
        config.learning_rate = args.learning_rate
    if args.batch_size is not None:
        config.batch_size = args.batch_size
    if args.seed is not None:
        config.seed = args.seed
    data = dsets.read_csv(args.data)
    held_out = dsets.read_csv(args.eval_data) if args.eval_data else None
    out_dir = _out_path(args.out)
    os.makedirs(out_dir, exist_ok=True)
    log = print if args.verbose else None
    if config.objective.kind in ("IPF_STAGE1", "IPF_STAGE2"):
        ckpt = tr.fit_injective(config, data, held_out, log=log)
    else:
        ckpt = tr.fit(config, data, held_out, log=log)
    ckpt.save(os.path.join(out_dir, "checkpoint.ckpt"))
    tr.metrics_to_csv(ckpt.metrics, os.path.join(out_dir, "metrics.csv"))
    manifest = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "steps": ckpt.step,
        "version": __version__,
        "numpy_version": np.__version__,
        "wall_time_s": time.time() - t0,
    }
    _atomic_write(os.path.join(out_dir, "run.json"),
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"trained {ckpt.step} steps -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    ckpt = _load_checkpoint(args.ckpt)
    stack = ckpt.stack()
    data = dsets.read_csv(args.data)
    pts = data.points[: args.max_points]
    part = _default_partition(stack)
    if stack.is_injective:
        z, _ = stack.inverse(pts)
        nll = -float(np.mean(stack.log_prob_injective(z)))
        ip = float(np.mean(ct.batched_partition_pmi(stack, z, part)))
        ihat = None
    else:
        nll = -float(np.mean(stack.log_prob(pts)))
        z, _ = stack.inverse(pts)
        ip = float(np.mean(ct.batched_partition_pmi(stack, z, part)))
        G = stack.inverse_jacobians_at(pts)
        ihat = float(np.mean(
            [ct.partition_pmi_hat_from_rows(G[i], part.blocks) for i in range(len(G))]
        ))
    result = {"nll": nll, "I_P": ip, "Ihat_P": ihat, "n_points": int(len(pts))}
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.out:
        _atomic_write(args.out, text)
    print(text, end="")
    return 0


def cmd_sample(args) -> int:
    stack = _load_checkpoint(args.ckpt).stack()
    x = stack.sample(args.n, args.seed)
    header = [f"x{i + 1}" for i in range(x.shape[1])]
    _write_matrix_csv(args.out, header, [[float(v) for v in row] for row in x])
    print(f"wrote {args.out}")
    return 0


def cmd_report_contours(args) -> int:
    ckpt = _load_checkpoint(args.ckpt)
    stack = ckpt.stack()
    data = dsets.read_csv(args.data)
    part = _default_partition(stack)
    reports = []
    for xi in data.points[: args.max_points]:
        rep = ct.contour_report(stack, part, x=xi)
        reports.append(json.loads(rep.to_json()))
    _atomic_write(args.out, json.dumps(reports, indent=2) + "\n")
    print(f"wrote {args.out}")
    if args.lines_out:
        rows = []
        m = stack.latent_dim
        offsets = np.linspace(-args.line_span, args.line_span, args.n_lines)
        ts = np.linspace(-args.line_span, args.line_span, args.line_points)
        for block in range(m):
            for li, off in enumerate(offsets):
                Z = np.full((len(ts), m), off)
                Z[:, block] = ts
                X, _ = stack.forward(Z)
                for t, xr in zip(ts, X):
                    rows.append([block, li, float(t)] + [float(v) for v in xr])
        header = ["block_id", "line_id", "t"] + [f"x{i + 1}" for i in range(stack.data_dim)]
        _write_matrix_csv(args.lines_out, header, rows)
        print(f"wrote {args.lines_out}")
    return 0


def cmd_trace(args) -> int:
    stack = _load_checkpoint(args.ckpt).stack()
    x0 = np.array([float(v) for v in args.start.split(",")])
    res = ct.trace_principal_manifold(stack, x0, [args.block], t_max=args.t_max,
                                      step=args.step)
    rows = []
    for i in range(len(res.times)):
        cos = res.tangent_cosines[i] if i < len(res.tangent_cosines) else float("nan")
        rows.append(
            [float(res.times[i])]
            + [float(v) for v in res.points[i]]
            + [float(v) for v in res.latents[i]]
            + [float(cos)]
        )
    header = (
        ["t"]
        + [f"x{i + 1}" for i in range(res.points.shape[1])]
        + [f"z{i + 1}" for i in range(res.latents.shape[1])]
        + ["tangent_cos"]
    )
    _write_matrix_csv(args.out, header, rows)
    if res.truncated:
        print(f"trace truncated: {res.reason}")
    print(f"wrote {args.out}")
    return 0


def cmd_similarity(args) -> int:
    stack = _load_checkpoint(args.ckpt).stack()
    data = dsets.read_csv(args.data)
    S = ct.similarity_matrix(stack, data.points[: args.max_points])
    header = [f"pc{j + 1}" for j in range(S.shape[1])]
    _write_matrix_csv(args.out, header, [[float(v) for v in row] for row in S])
    print(f"wrote {args.out}")
    return 0


def cmd_manifold_density(args) -> int:
    ckpt = _load_checkpoint(args.ckpt)
    stack = ckpt.stack()
    data = dsets.read_csv(args.data)
    pts = data.points[: args.max_points]
    part = _default_partition(stack)
    if stack.is_injective:
        Z, _ = stack.inverse(pts)
    else:
        Z, _ = stack.inverse(pts)
    log_pm, rank = ct.batched_manifold_density(stack, Z, part, epsilon=args.epsilon)
    header = [f"x{i + 1}" for i in range(pts.shape[1])] + ["log_pm", "predicted_rank"]
    rows = []
    for i in range(len(pts)):
        row = [float(v) for v in pts[i]] + [float(log_pm[i]), int(rank[i])]
        if data.true_logpdf is not None:
            row.append(float(data.true_logpdf[i]))
        if data.true_rank is not None:
            row.append(int(data.true_rank[i]))
        rows.append(row)
    if data.true_logpdf is not None:
        header.append("true_logpdf")
    if data.true_rank is not None:
        header.append("true_rank")
    _write_matrix_csv(args.out, header, rows)
    print(f"wrote {args.out}")
    return 0


def cmd_cookbook_check(args) -> int:
    t0 = time.time()
    res = run_audit(trials=args.trials, max_dim=args.max_dim, seed=args.seed)
    payload = {
        "trials": res.trials,
        "max_violation": res.worst(),
        "violations": res.violations,
        "tolerance": args.tolerance,
        "wall_time_s": time.time() - t0,
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        _atomic_write(args.out, text)
    print(text, end="")
    if not res.passed(args.tolerance):
        print("cookbook audit FAILED", file=sys.stderr)
        return NUMERIC_ERROR
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pmflow",
        description="Flows with orthogonal-contour training, contour density "
        "decompositions, and manifold-corrected density estimation.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    g.add_argument("--name", required=True,
                   choices=list(dsets.GEN_2D_NAMES) + ["vardim3d"],
                   help="dataset family")
    g.add_argument("--n", type=int, required=True, help="number of points (count)")
    g.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    g.add_argument("--noise-sigma", type=float, default=0.01,
                   help="isotropic noise std for vardim3d (default 0.01)")
    g.add_argument("--train-frac", type=float, default=None,
                   help="if set, write <out>_train.csv/<out>_test.csv split")
    g.add_argument("--clean-out", default=None,
                   help="also write noiseless points with ground truth (vardim3d)")
    g.add_argument("--out", required=True, help="output CSV path")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a flow from a JSON config")
    t.add_argument("--config", required=True, help="TrainConfig JSON path")
    t.add_argument("--data", required=True, help="training CSV")
    t.add_argument("--eval-data", default=None, help="held-out CSV (default: 10%% split)")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--epochs", type=int, default=None, help="override config epochs")
    t.add_argument("--learning-rate", type=float, default=None, help="override config lr")
    t.add_argument("--batch-size", type=int, default=None, help="override config batch size")
    t.add_argument("--seed", type=int, default=None, help="override config seed")
    t.add_argument("--verbose", action="store_true", help="log eval rows")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate NLL and partition PMI on a dataset")
    e.add_argument("--ckpt", required=True, help="checkpoint path")
    e.add_argument("--data", required=True, help="CSV of evaluation points")
    e.add_argument("--max-points", type=int, default=2048,
                   help="cap on evaluation points (default 2048)")
    e.add_argument("--out", default=None, help="optional JSON output path")
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("sample", help="draw samples from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--n", type=int, required=True, help="number of samples")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output CSV path")
    s.set_defaults(fn=cmd_sample)

    r = sub.add_parser("report-contours",
                       help="per-point contour decompositions plus contour polylines")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--data", required=True, help="CSV of points to report at")
    r.add_argument("--max-points", type=int, default=64,
                   help="cap on reported points (default 64)")
    r.add_argument("--out", required=True, help="JSON output path")
    r.add_argument("--lines-out", default=None, help="optional contour polyline CSV")
    r.add_argument("--n-lines", type=int, default=7,
                   help="latent grid lines per block (default 7)")
    r.add_argument("--line-span", type=float, default=2.5,
                   help="latent half-range for lines (default 2.5)")
    r.add_argument("--line-points", type=int, default=120,
                   help="points per polyline (default 120)")
    r.set_defaults(fn=cmd_report_contours)

    tc = sub.add_parser("trace", help="integrate a principal manifold from a start point")
    tc.add_argument("--ckpt", required=True)
    tc.add_argument("--start", required=True, help="comma-separated data-space start point")
    tc.add_argument("--block", type=int, required=True, help="latent index to follow")
    tc.add_argument("--t-max", type=float, default=2.0, help="integration horizon (default 2.0)")
    tc.add_argument("--step", type=float, default=0.02, help="RK4 step size (default 0.02)")
    tc.add_argument("--out", required=True, help="output CSV path")
    tc.set_defaults(fn=cmd_trace)

    si = sub.add_parser("similarity",
                        help="mean |cos| between contour tangents and principal components")
    si.add_argument("--ckpt", required=True)
    si.add_argument("--data", required=True)
    si.add_argument("--max-points", type=int, default=256,
                    help="points averaged over (default 256)")
    si.add_argument("--out", required=True)
    si.set_defaults(fn=cmd_similarity)

    m = sub.add_parser("manifold-density",
                       help="stretch-thresholded density and rank per point")
    m.add_argument("--ckpt", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--epsilon", type=float, default=1e-2,
                   help="relative stretch threshold (default 0.01)")
    m.add_argument("--max-points", type=int, default=100_000,
                   help="cap on points (default 100000)")
    m.add_argument("--out", required=True)
    m.set_defaults(fn=cmd_manifold_density)

    c = sub.add_parser("cookbook-check",
                       help="randomized audit of the contour determinant identities")
    c.add_argument("--trials", type=int, default=1000, help="random Jacobians (default 1000)")
    c.add_argument("--max-dim", type=int, default=6, help="max matrix dimension (default 6)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tolerance", type=float, default=1e-8,
                   help="max allowed violation (default 1e-8)")
    c.add_argument("--out", default=None, help="optional JSON output path")
    c.set_defaults(fn=cmd_cookbook_check)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return IO_ERROR
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        print(f"error: malformed input: {e}", file=sys.stderr)
        return IO_ERROR
    except FlowError as e:
        print(f"error: {e}", file=sys.stderr)
        return NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
