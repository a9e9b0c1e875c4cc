"""Command-line harness: ``sketchreg gen | solve | verify | bench``.

Every command prints (or writes with ``--out``) one JSON object; sweeps can be
flattened to CSV with ``--format csv``. All randomness derives from
``--seed`` through :func:`sketchreg.config.derive_seed`.

Exit codes: 0 success, 1 guarantee or threshold failure, 2 usage or input
error, 3 numerical error (rank, definiteness, overflow).

Matrix files use the APKR layout: ``b"APKR"``, ``u16`` version, ``u64`` rows,
``u64`` cols (little-endian), then ``rows * cols`` little-endian float64
values in row-major order. A ``.csv`` suffix selects plain CSV instead.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import struct
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import attention_kernel as ak
from . import config, oracle, power_regression as pr, solvers
from .errors import NumericalError, SketchregError
from .sketch import check_embedding, check_famp, embedding_dim, srht_new

MAGIC = b"APKR"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHQQ")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# file formats


def write_matrix(path, M) -> None:
    """Write ``M`` as APKR binary, or CSV when ``path`` ends in ``.csv``."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    path = Path(path)
    if path.suffix.lower() == ".csv":
        np.savetxt(path, M, delimiter=",", fmt="%.17g")
        return
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, M.shape[0], M.shape[1]))
        fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def read_matrix(path) -> np.ndarray:
    """Read a matrix written by :func:`write_matrix`."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return np.loadtxt(path, delimiter=",", ndmin=2)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    body = raw[_HEADER.size:]
    if len(body) != rows * cols * 8:
        raise ValueError(f"{path}: expected {rows * cols} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)


def _emit(payload, args) -> None:
    if getattr(args, "format", "json") == "csv" and isinstance(payload.get("rows"), list):
        buf = io.StringIO()
        rows = payload["rows"]
        keys = list(dict.fromkeys(k for row in rows for k in row))
        w = csv.DictWriter(buf, fieldnames=keys, restval="")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2, default=_json_default) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _workers() -> int:
    env = os.environ.get("APKR_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, cap)


def _map_trials(fn, seeds):
    """Run ``fn`` over ``seeds`` on up to ``APKR_THREADS`` workers, results in seed order."""
    seeds = list(seeds)
    if _workers() == 1 or len(seeds) < 2:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=_workers()) as ex:
        return list(ex.map(fn, seeds))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Validated flags shared by all subcommands (defaults live in the parser)."""

    command: str
    kind: str = ""
    n: int = 0
    d: int = 0
    j: int = 1
    kappa_target: float = 1.0
    eps_final: float = 1e-6
    delta_final: float = 0.05
    seed: int = 0
    trials: int = 1
    c_m: float = config.KERNEL_CM
    c_q: float = config.KERNEL_CQ
    embedding_constant: float = config.EMBEDDING_CONSTANT
    eps0: float = config.KERNEL_EPS0
    paths: dict = field(default_factory=dict)
    output_format: str = "json"

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        cfg = cls(command=args.command, kind=getattr(args, "kind", "") or "")
        for name, attr in [("n", "n"), ("d", "d"), ("j", "j"), ("kappa_target", "kappa"),
                           ("eps_final", "eps"), ("delta_final", "delta"), ("seed", "seed"),
                           ("trials", "trials"), ("c_m", "c_m"), ("c_q", "c_q"),
                           ("embedding_constant", "embedding_constant"), ("eps0", "eps0")]:
            if getattr(args, attr, None) is not None:
                setattr(cfg, name, getattr(args, attr))
        cfg.paths = {k: getattr(args, k) for k in ("matrix", "rhs", "out")
                     if getattr(args, k, None)}
        cfg.output_format = getattr(args, "format", "json")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.n < 0 or self.d < 0:
            raise argparse.ArgumentTypeError("dimensions must be nonnegative")
        if self.j < 1:
            raise argparse.ArgumentTypeError("--j must be >= 1")
        if self.kappa_target < 1:
            raise argparse.ArgumentTypeError("--kappa must be >= 1")
        if not (0 < self.eps_final < 1 and 0 < self.delta_final < 1):
            raise argparse.ArgumentTypeError("--eps and --delta must lie in (0, 1)")
        if self.trials < 1:
            raise argparse.ArgumentTypeError("--trials must be >= 1")


# ---------------------------------------------------------------------------
# gen


def cmd_gen(cfg: RunConfig) -> tuple[dict, int]:
    if cfg.d < 1 or cfg.n < cfg.d:
        raise argparse.ArgumentTypeError("gen needs n >= d >= 1")
    A = oracle.gen_matrix(cfg.n, cfg.d, cfg.kappa_target, cfg.seed)
    path = cfg.paths.get("matrix")
    meta = {"rows": cfg.n, "cols": cfg.d, "seed": cfg.seed, "kappa_target": cfg.kappa_target,
            "kappa": oracle.spectrum(A).kappa, "format_version": FORMAT_VERSION}
    if path:
        write_matrix(path, A)
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2) + "\n")
        meta["path"] = str(path)
    return meta, EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _instance(cfg: RunConfig, seed: int, rhs_len: str):
    """Load or generate ``(A, b)`` for a solve; ``rhs_len`` is ``"n"`` or ``"d"``."""
    if "matrix" in cfg.paths:
        A = read_matrix(cfg.paths["matrix"])
    elif cfg.kind == "kernel":
        A = oracle.gen_unit_rows(cfg.n, cfg.d, seed)
    else:
        A = oracle.gen_matrix(cfg.n, cfg.d, cfg.kappa_target, seed)
    n, d = A.shape
    if "rhs" in cfg.paths:
        b = read_matrix(cfg.paths["rhs"]).ravel()
    else:
        g = config.rng(seed, 11)
        if rhs_len == "d":
            b = g.standard_normal(d)
        elif cfg.kind == "kernel":
            b = g.standard_normal(n)
        else:
            b = A @ g.standard_normal(d)
            b = b / np.linalg.norm(b) + 1e-3 * g.standard_normal(n) / math.sqrt(n)
    return A, b


def _solve_one(cfg: RunConfig, seed: int) -> dict:
    kind = cfg.kind
    rhs_len = "d" if kind in ("even", "four") else "n"
    A, b = _instance(cfg, seed, rhs_len)
    eps, delta = cfg.eps_final, cfg.delta_final
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if kind == "even":
            rep = pr.even_powers(A, b, cfg.j, eps, delta, seed=seed)
        elif kind == "odd":
            rep = pr.odd_powers(A, b, cfg.j, eps, delta, seed=seed)
        elif kind == "three":
            rep = pr.three_matrices(A, b, eps, delta, seed=seed)
        elif kind == "four":
            rep = pr.four_matrices(A, b, eps, delta, seed=seed)
        else:
            rep = ak.attention_kernel_regression(A, b, eps, delta, seed=seed, c_m=cfg.c_m,
                                                 c_q=cfg.c_q, eps0=cfg.eps0)
    out = rep.to_dict()
    out["seed"] = seed
    out["oracle"] = _oracle_check(kind, A, b, rep.solution, cfg)
    if kind == "kernel":
        out.setdefault("factor_residual", None)
        out.setdefault("kernel_residual", out["oracle"].get("relative_residual"))
    return out


def _oracle_check(kind: str, A, b, x, cfg: RunConfig) -> dict:
    n = A.shape[0]
    if n > oracle.MAX_KERNEL_N:
        return {"skipped": f"n = {n} exceeds the oracle limit"}
    bnorm = float(np.linalg.norm(b))
    eps = cfg.eps_final
    if kind == "kernel":
        res = float(np.linalg.norm(oracle.exact_kernel(A) @ x - b))
        target = eps * bnorm
    elif kind in ("even", "four"):
        res = oracle.exact_power_residual(A, x, b, cfg.j if kind == "even" else 2)
        target = eps * bnorm
    else:
        res = oracle.exact_power_residual(A, x, b, cfg.j if kind == "odd" else 1, "odd")
        target = (1 + eps) * oracle.range_residual(A, b) + eps * bnorm
    return {"exact_residual": res, "relative_residual": res / bnorm if bnorm else 0.0,
            "target": target, "guarantee_satisfied": bool(res <= target)}


def cmd_solve(cfg: RunConfig) -> tuple[dict, int]:
    if "matrix" not in cfg.paths and (cfg.d < 1 or cfg.n < cfg.d):
        raise argparse.ArgumentTypeError("solve needs --matrix or n >= d >= 1")
    seeds = [config.derive_seed(cfg.seed, t) if cfg.trials > 1 else cfg.seed
             for t in range(cfg.trials)]
    runs = _map_trials(lambda s: _solve_one(cfg, s), seeds)
    flags = [r["oracle"].get("guarantee_satisfied", True) for r in runs]
    if cfg.trials == 1:
        return runs[0], EXIT_OK if flags[0] else EXIT_FAIL
    summary = {"kind": cfg.kind, "trials": cfg.trials, "satisfied": int(sum(flags)),
               "runs": runs}
    return summary, EXIT_OK if all(flags) else EXIT_FAIL


# ---------------------------------------------------------------------------
# verify


def _verify_embedding(cfg, args):
    A = oracle.gen_matrix(cfg.n, cfg.d, 10.0 if cfg.d > 1 else 1.0, cfg.seed)
    m = args.m or embedding_dim(cfg.n, cfg.d, cfg.eps_final, cfg.delta_final,
                                cfg.embedding_constant)
    rep = check_embedding(lambda t: srht_new(cfg.n, m, config.derive_seed(cfg.seed, 100 + t)),
                          A, cfg.eps_final, cfg.trials)
    detail = {"sketch_dim": m, "failure_rate": rep.failure_rate,
              "epsilon_observed": rep.epsilon_observed, "min_singular": rep.min_singular,
              "max_singular": rep.max_singular}
    return rep.failure_rate <= cfg.delta_final, detail


def _verify_famp(cfg, args):
    g = config.rng(cfg.seed, 3)
    A = g.standard_normal((cfg.n, cfg.d))
    B = g.standard_normal((cfg.n, cfg.d))
    m = args.m or embedding_dim(cfg.n, cfg.d, cfg.eps_final, cfg.delta_final,
                                cfg.embedding_constant)
    rate = check_famp(lambda t: srht_new(cfg.n, m, config.derive_seed(cfg.seed, 100 + t)),
                      A, B, cfg.eps_final, cfg.trials)
    return rate <= cfg.delta_final, {"sketch_dim": m, "failure_rate": rate}


def _sandwich_trial(cfg, seed):
    X = oracle.gen_unit_rows(cfg.n, cfg.d, seed)
    F = ak.build_kernel_factor(X, cfg.eps_final, cfg.delta_final, seed=seed, c_m=cfg.c_m,
                               c_q=cfg.c_q)
    K = oracle.exact_kernel(X)
    lo, hi = oracle.sandwich_margins(K, F.gram(), cfg.eps_final)
    tail = np.linalg.norm(K - oracle.taylor_kernel(X, F.q), 2)
    return {"seed": seed, "pass": lo >= -1e-8 and hi >= -1e-8, "lower_margin": lo,
            "upper_margin": hi, "q": F.q, "rows": F.m,
            "taylor_ok": bool(tail <= cfg.eps_final / 2 * np.linalg.norm(K, 2))}


def _verify_sandwich(cfg, args):
    seeds = [config.derive_seed(cfg.seed, t) for t in range(cfg.trials)]
    trials = _map_trials(lambda s: _sandwich_trial(cfg, s), seeds)
    rate = sum(t["pass"] for t in trials) / len(trials)
    taylor = all(t["taylor_ok"] for t in trials)
    return rate >= args.min_pass and taylor, {"pass_rate": rate, "taylor_ok": taylor,
                                              "trials": trials}


def _entries_trial(cfg, r, seed):
    X = oracle.gen_unit_rows(cfg.n, cfg.d, seed) * math.sqrt(r)
    F = ak.build_kernel_factor(X, cfg.eps_final, cfg.delta_final, seed=seed, c_m=cfg.c_m,
                               c_q=cfg.c_q)
    return bool(np.all(ak.kernel_entry_bound_check(F.gram(), r, cfg.eps_final)))


def _verify_entries(cfg, args):
    r = args.radius
    seeds = [config.derive_seed(cfg.seed, t) for t in range(cfg.trials)]
    passes = _map_trials(lambda s: _entries_trial(cfg, r, s), seeds)
    rate = sum(passes) / len(passes)
    return rate >= 0.95, {"pass_rate": rate, "radius": r}


def _verify_psd_minor(cfg, args):
    fails = 0
    for t in range(cfg.trials):
        s = config.derive_seed(cfg.seed, t)
        X = oracle.gen_unit_rows(cfg.n, cfg.d, s)
        F = ak.build_kernel_factor(X, 0.5, 0.1, seed=s, c_m=cfg.c_m, c_q=cfg.c_q)
        fails += not ak.psd_minor_check(F.gram())
    return fails == 0, {"failures": fails}


def _verify_induction(cfg, args):
    records = []
    ok = True
    for t in range(cfg.trials):
        s = config.derive_seed(cfg.seed, t)
        A = oracle.gen_matrix(cfg.n, cfg.d, cfg.kappa_target, s)
        b = config.rng(s, 11).standard_normal(cfg.d)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = pr.even_powers(A, b, cfg.j, cfg.eps_final, cfg.delta_final, seed=s,
                                 keep_stages=True)
        audit = pr.induction_audit(A, b, rep)
        flagged = not all(st.converged for st in rep.stage_log)
        good = all(a["norm_ok"] for a in audit) and (flagged or all(a["residual_ok"] for a in audit))
        ok &= good
        records.append({"seed": s, "flagged": flagged, "pass": good, "stages": audit})
    return ok, {"runs": records}


def _verify_forward_error(cfg, args):
    results = []
    for t in range(cfg.trials):
        s = config.derive_seed(cfg.seed, t)
        A = oracle.gen_matrix(cfg.n, cfg.d, cfg.kappa_target, s)
        g = config.rng(s, 11)
        smin = oracle.spectrum(A).sigma_min
        b = g.standard_normal(cfg.n)
        eps1 = min(cfg.eps_final, 0.05)
        lin = solvers.fast_linear_regression(A, b, eps1, cfg.delta_final, seed=s)
        ref = oracle.svd_lstsq(A, b, lin.solution)
        opt = ref.exact_cost
        applies = ref.residual_of_candidate <= (1 + eps1) * opt
        err = float(np.linalg.norm(lin.solution - ref.exact_solution))
        lin_ok = (not applies) or err <= 2 * math.sqrt(eps1) * opt / smin + 1e-12
        b2 = g.standard_normal(cfg.d)
        psd = solvers.fast_psd_regression(A, b2, eps1, cfg.delta_final, seed=s)
        xs = oracle.psd_power_solution(A, b2, 1)
        applies2 = np.linalg.norm(A.T @ (A @ psd.solution) - b2) <= eps1 * np.linalg.norm(b2)
        err2 = float(np.linalg.norm(psd.solution - xs))
        psd_ok = (not applies2) or err2 <= eps1 * np.linalg.norm(b2) / smin**2 * (1 + 1e-9)
        results.append({"seed": s, "linear_ok": bool(lin_ok), "psd_ok": bool(psd_ok)})
    ok = all(r["linear_ok"] and r["psd_ok"] for r in results)
    return ok, {"runs": results}


_VERIFY = {
    "embedding": _verify_embedding,
    "famp": _verify_famp,
    "sandwich": _verify_sandwich,
    "entries": _verify_entries,
    "psd-minor": _verify_psd_minor,
    "induction": _verify_induction,
    "forward-error": _verify_forward_error,
}


def cmd_verify(cfg: RunConfig, args) -> tuple[dict, int]:
    t0 = time.perf_counter()
    ok, detail = _VERIFY[cfg.kind](cfg, args)
    out = {"check": cfg.kind, "pass": bool(ok), "trials": cfg.trials,
           "wall_time": time.perf_counter() - t0, "detail": detail}
    return out, EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# bench


def _timed(fn, repeats: int):
    best = math.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _psd_iteration_time(A, b, eps, seed, repeats):
    P = solvers.build_preconditioner(A, 0.05, seed)
    best = math.inf
    its = 0
    for _ in range(repeats):
        rep = solvers.fast_psd_regression(A, b, eps, 0.05, precond=P)
        its = rep.iterations
        best = min(best, rep.wall_time / max(its, 1))
    return best, its


def _dense_even_baseline(A, b, j):
    P = oracle.dense_power_matrix(A, j, check=False)
    return np.linalg.solve(P, b)


def cmd_bench(cfg: RunConfig, args) -> tuple[dict, int]:
    rows = []
    reps = args.repeats
    if cfg.kind == "n":
        for n in args.sweep or [32768, 65536, 131072]:
            A = oracle.gen_matrix(int(n), cfg.d, cfg.kappa_target, cfg.seed)
            b = config.rng(cfg.seed, 11).standard_normal(cfg.d)
            per_it, its = _psd_iteration_time(A, b, cfg.eps_final, cfg.seed, reps)
            rows.append({"n": int(n), "d": cfg.d, "iterations": its, "per_iteration_s": per_it})
        for prev, row in zip(rows, rows[1:]):
            row["ratio"] = row["per_iteration_s"] / prev["per_iteration_s"]
    elif cfg.kind == "eps":
        A = oracle.gen_matrix(cfg.n, cfg.d, cfg.kappa_target, cfg.seed)
        b = config.rng(cfg.seed, 11).standard_normal(cfg.d)
        for eps in args.sweep or [1e-2, 1e-4, 1e-6, 1e-8, 1e-10]:
            rep = solvers.fast_psd_regression(A, b, float(eps), 0.05, seed=cfg.seed)
            rows.append({"eps": float(eps), "iterations": rep.iterations,
                         "total_s": rep.wall_time, "converged": rep.converged})
    elif cfg.kind == "j":
        A = oracle.gen_matrix(cfg.n, cfg.d, cfg.kappa_target, cfg.seed)
        b = config.rng(cfg.seed, 11).standard_normal(cfg.d)
        for j in args.sweep or [1, 2, 3, 4, 5]:
            j = int(j)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                t, rep = _timed(lambda: pr.even_powers(A, b, j, cfg.eps_final,
                                                       cfg.delta_final, seed=cfg.seed), reps)
            td, _ = _timed(lambda: _dense_even_baseline(A, b, j), reps)
            rows.append({"j": j, "iterations": rep.iterations, "total_s": t,
                         "dense_baseline_s": td})
        for prev, row in zip(rows, rows[1:]):
            row["ratio"] = row["total_s"] / prev["total_s"]
    else:
        for n in args.sweep or [64, 128, 256]:
            X = oracle.gen_unit_rows(int(n), cfg.d, cfg.seed)
            b = config.rng(cfg.seed, 11).standard_normal(int(n))
            t, rep = _timed(lambda: ak.attention_kernel_regression(
                X, b, cfg.eps_final, cfg.delta_final, seed=cfg.seed), reps)
            rows.append({"n": int(n), "branch": rep.info.get("branch"), "total_s": t,
                         "kernel_residual": rep.info.get("kernel_residual")})
    return {"sweep": cfg.kind, "rows": rows}, EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p, n=None, d=None, eps=1e-6, delta=0.05, kappa=10.0, trials=1):
    p.add_argument("--n", type=int, default=n, help=f"rows (default {n})")
    p.add_argument("--d", type=int, default=d, help=f"columns (default {d})")
    p.add_argument("--kappa", type=float, default=kappa,
                   help=f"target condition number (default {kappa})")
    p.add_argument("--eps", type=float, default=eps, help=f"accuracy (default {eps})")
    p.add_argument("--delta", type=float, default=delta,
                   help=f"failure probability (default {delta})")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--trials", type=int, default=trials, help=f"trials (default {trials})")
    p.add_argument("--j", type=int, default=1, help="power j (default 1)")
    p.add_argument("--c-m", dest="c_m", type=float, default=config.KERNEL_CM,
                   help=f"kernel sketch-size constant (default {config.KERNEL_CM})")
    p.add_argument("--c-q", dest="c_q", type=float, default=config.KERNEL_CQ,
                   help=f"kernel truncation constant (default {config.KERNEL_CQ})")
    p.add_argument("--embedding-constant", type=float, default=config.EMBEDDING_CONSTANT,
                   help=f"SRHT size constant (default {config.EMBEDDING_CONSTANT})")
    p.add_argument("--eps0", type=float, default=config.KERNEL_EPS0,
                   help=f"kernel inner-sketch distortion (default {config.KERNEL_EPS0})")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=["json", "csv"], default="json",
                   help="report format (default json; csv flattens sweep rows)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchreg", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a matrix with a planted condition number")
    _common(g, n=64, d=8, kappa=100.0)
    g.add_argument("--matrix", "--path", dest="matrix", required=True, help="output matrix file")

    s = sub.add_parser("solve", help="run a solver and compare with the dense oracle")
    s.add_argument("kind", choices=["even", "odd", "three", "four", "kernel"])
    _common(s, n=1024, d=16, eps=1e-6, kappa=30.0)
    s.add_argument("--matrix", help="input matrix file (default: generated from --seed)")
    s.add_argument("--rhs", help="right-hand side file (default: generated from --seed)")

    v = sub.add_parser("verify", help="run a statistical or structural property check")
    v.add_argument("kind", choices=list(_VERIFY))
    _common(v, n=1024, d=16, eps=0.25, trials=20)
    v.add_argument("--m", type=int, default=None,
                   help="sketch rows for embedding/famp (default: formula)")
    v.add_argument("--min-pass", type=float, default=0.9,
                   help="required sandwich pass rate (default 0.9)")
    v.add_argument("--radius", type=float, default=0.1,
                   help="inner-product radius for the entry check (default 0.1)")

    b = sub.add_parser("bench", help="timing sweeps")
    b.add_argument("kind", choices=["n", "eps", "j", "kernel"])
    _common(b, n=8192, d=16, eps=1e-6, kappa=10.0)
    b.add_argument("--sweep", type=float, nargs="+", help="values to sweep")
    b.add_argument("--repeats", type=int, default=3, help="timing repeats, best kept (default 3)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        if cfg.command == "gen":
            payload, code = cmd_gen(cfg)
        elif cfg.command == "solve":
            payload, code = cmd_solve(cfg)
        elif cfg.command == "verify":
            payload, code = cmd_verify(cfg, args)
        else:
            payload, code = cmd_bench(cfg, args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        _error(args, "usage", str(exc))
        return EXIT_USAGE
    except NumericalError as exc:
        _error(args, type(exc).__name__, str(exc))
        return EXIT_NUMERIC
    except (SketchregError, OSError, ValueError) as exc:
        _error(args, type(exc).__name__, str(exc))
        return EXIT_USAGE
    _emit(payload, args)
    return code


def _error(args, kind: str, message: str) -> None:
    record = {"error": kind, "message": message}
    if getattr(args, "out", None):
        try:
            Path(args.out).write_text(json.dumps(record, indent=2) + "\n")
        except OSError:
            pass
    sys.stderr.write(json.dumps(record) + "\n")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
