"""Command-line front end.

Subcommands build the kernel-interpolation problem from the flags, run the
requested computation and write a CSV or JSON artifact that embeds the run
configuration.  Exit status is 0 on success, 1 on numerical failure and 2 on
usage errors.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io
from .calibration import weak_calibration_test
from .exceptions import ParameterError
from .lifting import (
    METHODS,
    JOINT_KINDS,
    GaussianBelief,
    gaussian_output,
    method_trajectory,
    push_samples,
    substream_seed,
)
from .testbed import (
    DEFAULT_GRID_SIZE,
    DEFAULT_INTERVALS,
    DEFAULT_JITTER,
    DESK_COUNTS,
    DESK_LENGTH_SCALE,
    INITIAL_KINDS,
    InterpolationProblem,
    build_system,
    function_space_samples,
    generate_dataset,
    initial_distribution,
    interpolant_eval,
    pc_sample_curves,
    pca_function_space,
    pointwise_std,
)

TABLE1_METHODS = ("richardson-default", "richardson-optimal", "richardson-adaptive",
                  "second-degree", "cg")
COMMANDS = ("solve", "push", "samples", "calibrate", "table1", "testbed", "pca")
DEFAULT_N = {"samples": 100, "calibrate": 100, "table1": 100, "testbed": 50}
DEFAULT_PC_SCALE = 0.1
THREADS_ENV = "PROBITER_THREADS"


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError(f"expected non-negative integers, got {text!r}")
    return values


def _d_split(text):
    values = _int_list(text)
    if len(values) != 3 or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("--d-split needs three positive counts a,b,c")
    return tuple(values)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--method", choices=METHODS, default="richardson-optimal")
    common.add_argument("--init", choices=INITIAL_KINDS, default="DEFAULT",
                        type=str.upper, help="initial distribution")
    common.add_argument("--m", type=_int_list, default=[10],
                        help="iterations (comma list for pca)")
    common.add_argument("--n-samples", type=int, default=None,
                        help="samples / curves / calibration draws N")
    common.add_argument("--n-bootstrap", type=int, default=1000, help="bootstrap samples M")
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--d-split", type=_d_split, default=DESK_COUNTS,
                        help="node counts a,b,c on the three intervals")
    common.add_argument("--length-scale", type=float, default=DESK_LENGTH_SCALE)
    common.add_argument("--jitter", type=float, default=DEFAULT_JITTER)
    common.add_argument("--omega", type=float, default=None,
                        help="step size for richardson-default")
    common.add_argument("--joint", choices=JOINT_KINDS, default="RICH",
                        help="(x0, x1) coupling for second-degree")
    common.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE)
    common.add_argument("--k", type=int, default=6, help="number of principal components")
    common.add_argument("--pc-scale", type=float, default=DEFAULT_PC_SCALE,
                        help="PC sample amplitude as a fraction of the exact interpolant's range")
    common.add_argument("--out", default="-", help="output path ('-' for stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(
        prog="probiter", description="Probabilistic iterative methods for linear systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "classical iterates: error and residual per iteration",
        "push": "closed-form Gaussian output mean and covariance",
        "samples": "sample-based pushforward ensemble",
        "calibrate": "weak calibration (MMD) test for one method",
        "table1": "weak calibration grid over methods and initial distributions",
        "testbed": "function-space samples of the output",
        "pca": "principal components of the output in function space",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def run_config(args):
    """Resolved, JSON-serializable configuration of a run (output path excluded)."""
    n = args.n_samples if args.n_samples is not None else DEFAULT_N.get(args.command)
    return {
        "command": args.command,
        "method": args.method,
        "init": args.init,
        "m": list(args.m),
        "N": n,
        "M": args.n_bootstrap,
        "alpha": args.alpha,
        "seed": args.seed,
        "d_split": list(args.d_split),
        "length_scale": args.length_scale,
        "jitter": args.jitter,
        "omega": args.omega,
        "joint": args.joint,
        "grid_size": args.grid_size,
        "k": args.k,
        "pc_scale": args.pc_scale,
        "format": args.format,
    }


def _validate(cfg):
    if cfg["N"] is not None and cfg["N"] < 1:
        raise ParameterError("--n-samples must be positive")
    if not 0 < cfg["alpha"] < 1:
        raise ParameterError("--alpha must lie in (0, 1)")
    if cfg["grid_size"] < 2:
        raise ParameterError("--grid-size must be at least 2")
    if cfg["command"] != "pca" and len(cfg["m"]) != 1:
        raise ParameterError("--m takes a single value for this command")


def _threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if n < 1:
        raise ParameterError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _problem(cfg):
    points, values = generate_dataset(tuple(cfg["d_split"]), DEFAULT_INTERVALS)
    problem = InterpolationProblem(points, values, cfg["length_scale"], cfg["jitter"])
    return problem, build_system(problem)


def _mu0(cfg, system, kind=None):
    return initial_distribution(kind or cfg["init"], system, seed=substream_seed(cfg["seed"], "ansatz"))


def _grid(cfg):
    return np.linspace(0.0, 1.0, cfg["grid_size"])


def _emit(cfg, header, rows, payload, comments=()):
    if cfg["format"] == "json":
        return io.json_text(payload, cfg)
    text = io.csv_text(header, rows, cfg)
    if comments:
        first, rest = text.split("\n", 1)
        text = "\n".join([first, *(f"# {c}" for c in comments), rest])
    return text


def cmd_solve(cfg):
    _, system = _problem(cfg)
    m = cfg["m"][0]
    x0 = _mu0(cfg, system).mean
    traj = method_trajectory(cfg["method"], system, x0, m, omega=cfg["omega"])
    errors = traj.errors(system.solve())
    rows = [[j, errors[j], traj.residual_norms[j]] for j in range(m + 1)]
    payload = {"iteration": list(range(m + 1)), "error": errors, "residual": traj.residual_norms}
    return _emit(cfg, ["iteration", "error", "residual"], rows, payload)


def cmd_push(cfg):
    if cfg["method"] == "cg":
        raise ParameterError("cg has no closed-form output; use the samples command")
    _, system = _problem(cfg)
    out = gaussian_output(cfg["method"], system, _mu0(cfg, system), cfg["m"][0],
                          joint=cfg["joint"], omega=cfg["omega"])
    d = out.dim
    header = ["index", "mean", *(f"cov_{j}" for j in range(d))]
    rows = [[i, out.mean[i], *out.cov[i]] for i in range(d)]
    return _emit(cfg, header, rows, {"mean": out.mean, "cov": out.cov})


def cmd_samples(cfg):
    _, system = _problem(cfg)
    ens = push_samples(cfg["method"], _mu0(cfg, system), cfg["m"][0], cfg["N"], cfg["seed"],
                       system, omega=cfg["omega"], joint=cfg["joint"])
    header = ["sample", *(f"x{j}" for j in range(ens.dim))]
    return _emit(cfg, header, io.ensemble_csv_rows(ens.samples), ens.to_json_dict())


def _calibrate_one(cfg, system, method, kind):
    return weak_calibration_test(method, _mu0(cfg, system, kind), system, m=cfg["m"][0],
                                 N=cfg["N"], M=cfg["M"], alpha=cfg["alpha"], seed=cfg["seed"],
                                 omega=cfg["omega"], joint=cfg["joint"],
                                 config={"init": kind})


def cmd_calibrate(cfg):
    _, system = _problem(cfg)
    rep = _calibrate_one(cfg, system, cfg["method"], cfg["init"])
    header = ["method", "init", "mmd2", "threshold", "q", "reject", "length_scale"]
    rows = [[cfg["method"], cfg["init"], rep.mmd2, rep.threshold, rep.q, rep.reject,
             rep.length_scale]]
    return _emit(cfg, header, rows, {"report": rep.to_json_dict()})


def table1(cfg, system, threads=1):
    """Reports for every (method, initial distribution) pair, in row-major order."""
    jobs = [(meth, kind) for meth in TABLE1_METHODS for kind in INITIAL_KINDS]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        reports = list(pool.map(lambda job: _calibrate_one(cfg, system, *job), jobs))
    return [(meth, kind, rep) for (meth, kind), rep in zip(jobs, reports)]


def cmd_table1(cfg):
    _, system = _problem(cfg)
    results = table1(cfg, system, _threads())
    header = ["method", "init", "mmd2", "q", "reject"]
    rows = [[meth, kind, rep.mmd2, rep.q, rep.reject] for meth, kind, rep in results]
    payload = {"table": [{"method": meth, "init": kind, "mmd2": rep.mmd2, "q": rep.q,
                          "reject": bool(rep.reject)} for meth, kind, rep in results]}
    return _emit(cfg, header, rows, payload)


def _output_belief(cfg, system, m):
    mu0 = _mu0(cfg, system)
    if cfg["method"] == "cg":
        return push_samples("cg", mu0, m, cfg["N"], cfg["seed"], system)
    return gaussian_output(cfg["method"], system, mu0, m, joint=cfg["joint"], omega=cfg["omega"])


def cmd_testbed(cfg):
    problem, system = _problem(cfg)
    grid = _grid(cfg)
    belief = _output_belief(cfg, system, cfg["m"][0])
    fs = function_space_samples(belief, grid, problem, n_curves=cfg["N"], seed=cfg["seed"],
                                system=system)
    if isinstance(belief, GaussianBelief):
        mean = interpolant_eval(belief.mean, grid, problem)
        std = pointwise_std(belief.cov, grid, problem)
    else:
        mean = fs.curves.mean(axis=0)
        std = fs.curves.std(axis=0, ddof=1) if fs.curves.shape[0] > 1 else np.zeros_like(mean)
    names = ["exact", "mean", "std", *(f"curve_{i}" for i in range(fs.curves.shape[0]))]
    header, rows = io.columns_csv(grid, [fs.exact, mean, std, *fs.curves], names)
    payload = {"grid": grid, "exact": fs.exact, "mean": mean, "std": std, "curves": fs.curves}
    return _emit(cfg, header, rows, payload)


def cmd_pca(cfg):
    if cfg["method"] == "cg":
        raise ParameterError("pca needs a closed-form covariance; cg is sample-based")
    problem, system = _problem(cfg)
    grid = _grid(cfg)
    exact = interpolant_eval(system.solve(), grid, problem)
    amplitude = cfg["pc_scale"] * float(np.ptp(exact))
    columns, names, comments, results = [exact], ["exact"], [], []
    for m in cfg["m"]:
        out = _output_belief(cfg, system, m)
        summary = pca_function_space(out.cov, k=cfg["k"], problem=problem, grid=grid)
        mean = interpolant_eval(out.mean, grid, problem)
        columns.append(mean)
        names.append(f"mean_m{m}")
        entry = {"m": m, "zero_variance": summary.zero_variance,
                 "total_variance": summary.total_variance,
                 "explained_fraction": summary.explained_fraction,
                 "components": summary.components, "samples": []}
        if summary.zero_variance:
            comments.append(f"m={m} zero-variance=true")
        else:
            pct = " ".join(f"pc{j + 1}={100 * f:.6f}%" for j, f in enumerate(summary.explained_fraction))
            comments.append(f"m={m} explained-variance {pct}")
        for j, comp in enumerate(summary.components):
            sample = pc_sample_curves(mean, comp, n=1, scale=amplitude,
                                      seed=substream_seed(cfg["seed"], "pc", m, j))[0]
            columns += [comp, sample]
            names += [f"pc{j + 1}_m{m}", f"sample_pc{j + 1}_m{m}"]
            entry["samples"].append(sample)
        results.append(entry)
    header, rows = io.columns_csv(grid, columns, names)
    payload = {"grid": grid, "exact": exact, "pca": results}
    return _emit(cfg, header, rows, payload, comments)


HANDLERS = {
    "solve": cmd_solve,
    "push": cmd_push,
    "samples": cmd_samples,
    "calibrate": cmd_calibrate,
    "table1": cmd_table1,
    "testbed": cmd_testbed,
    "pca": cmd_pca,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = run_config(args)
    try:
        _validate(cfg)
        text = HANDLERS[cfg["command"]](cfg)
        io.write_text(args.out, text)
    except np.linalg.LinAlgError as exc:
        print(f"probiter: numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"probiter: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
