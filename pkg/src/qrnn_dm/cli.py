"""``qrnn-dm`` command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 numerical/training failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io
from .ansatz import CASE_CONFIGS
from .derivatives import (EvalBudget, central_difference, eval_count_hessian, hessian_all,
                          jacobian_expectation)
from .engine import forward
from .exceptions import QRNNError, SpecError, TrainingFailureError
from .training import QRNNModel, default_workers, evaluate, train_multi_restart

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3

GRAD_TOL = 1e-6
HESS_TOL = 1e-5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --- config resolution ------------------------------------------------------

def resolve_config(args) -> io.RunConfig:
    if args.config is not None:
        try:
            raw = io.read_json(args.config)
        except FileNotFoundError as exc:
            raise SpecError(f"config file not found: {args.config}") from exc
        except ValueError as exc:
            raise SpecError(f"{args.config}: not valid JSON ({exc})") from exc
    elif args.case is not None:
        raw = {}
    else:
        raise SpecError("give a config file or --case")
    if not isinstance(raw, dict):
        raise SpecError("config must be a JSON object")
    raw = dict(raw)
    if args.case is not None:
        raw["case"] = args.case
    train = dict(raw.get("train", {}) or {})
    for flag, key in (("g_tol", "g_tol"), ("max_iter", "max_iter"), ("restarts", "restarts"),
                      ("gradient", "gradient"), ("eps", "epsilon"), ("init_seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            train[key] = v
    raw["train"] = train
    if args.data_seed is not None:
        raw["data_seed"] = args.data_seed
    if args.out is not None:
        raw["output_dir"] = args.out
    if getattr(args, "workers", None) is not None:
        raw["workers"] = args.workers
    cfg = io.RunConfig.from_dict(raw)
    if cfg.workers is not None:
        cfg.train.workers = int(cfg.workers)
    return cfg


def _outdir(cfg: io.RunConfig) -> Path:
    path = Path(cfg.output_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SpecError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _load_model(args, cfg: io.RunConfig) -> QRNNModel:
    path = Path(args.model) if args.model else Path(cfg.output_dir) / "model.json"
    try:
        return io.read_model(path)
    except FileNotFoundError as exc:
        raise SpecError(f"model file not found: {path}") from exc
    except (KeyError, ValueError) as exc:
        raise SpecError(f"{path}: malformed model file ({exc})") from exc


# --- commands ---------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(cfg)
    ds = io.build_dataset(cfg)
    prov = cfg.provenance()
    io.write_series(ds.series, out / "series.csv", prov)
    io.write_json(out / "split.json", io.split_sidecar(ds), prov)
    io.save_config(cfg, out / "config.json")
    counts = io.split_sidecar(ds)["counts"]
    print(f"case {cfg.case}: {len(ds.series)} points, {ds.series.inputs.shape[1]} input(s), "
          f"{len(ds.starts)} windows (train {counts['train']}, val {counts['val']}, "
          f"test {counts['test']}), {len(ds.full_test_starts)} full-test windows -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(cfg)
    ds = io.build_dataset(cfg)
    prov = cfg.provenance()
    tc = dataclasses.replace(cfg.train, workers=cfg.train.workers or default_workers())
    try:
        model, report = train_multi_restart(ds, cfg.ansatz, tc)
    except TrainingFailureError as exc:
        io.write_json(out / "report.json", {"error": str(exc), "restarts": exc.reports}, prov)
        raise CommandError(f"training failed: {exc}", EXIT_NUMERICAL) from exc
    io.write_model(model, out / "model.json", prov)
    io.write_json(out / "report.json", report.to_dict(), prov)
    io.write_csv(out / "loss_curve.csv", ["iteration", "train_rmse", "val_rmse"],
           report.loss_curve, prov)
    io.write_csv(out / "predictions.csv", io.PREDICTION_HEADER,
           io.prediction_rows(model, ds), prov)
    row = report.table_row()
    print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    print(f"best restart {report.best_restart}: {report.message}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    model = _load_model(args, cfg)
    scores = evaluate(model, io.build_dataset(cfg))
    for k, v in scores.items():
        print(f"{k} {v:.17g}")
    if args.output:
        io.write_json(args.output, scores, cfg.provenance())
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = resolve_config(args)
    model = _load_model(args, cfg)
    ds = io.build_dataset(cfg)
    path = Path(args.output) if args.output else _outdir(cfg) / "predictions.csv"
    io.write_csv(path, io.PREDICTION_HEADER, io.prediction_rows(model, ds), cfg.provenance())
    print(f"wrote {path}")
    return EXIT_OK


def _check_instances(cfg: io.RunConfig, n: int, T: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        theta = rng.uniform(0.0, 2 * np.pi, cfg.ansatz.n_params)
        series = rng.uniform(-0.75, 0.75, (T, cfg.ansatz.n_v))
        yield theta, series


def _fd_jacobian(series, theta, config, h):
    def expectations(th):
        return forward(series, th, config).expectations

    return central_difference(expectations, theta, h)[:, : config.n_angles]


def run_grad_check(cfg: io.RunConfig, n_samples: int, T: int, seed: int = 0, hessian: bool = False,
                   flip_sign=(), h: float = 1e-6, h_hess: float = 1e-5, out=print) -> bool:
    """Compare analytical derivatives with finite differences; True when every check passes."""
    config = cfg.ansatz
    ok = True
    worst = np.zeros(config.n_angles)
    for k, (theta, series) in enumerate(_check_instances(cfg, n_samples, T, seed)):
        J = jacobian_expectation(series, theta, config, flip_sign=flip_sign)
        dev = np.abs(J - _fd_jacobian(series, theta, config, h))
        worst = np.maximum(worst, dev.max(axis=0))
        bad = np.argwhere(dev > GRAD_TOL)
        if len(bad):
            ok = False
            for t, i in bad[:10]:
                out(f"FAIL gradient instance {k} t={t} param={i} deviation={dev[t, i]:.3e}")
        if hessian:
            budget = EvalBudget()
            H, n_circ = hessian_all(series, theta, config, budget)
            Hfd = central_difference(
                lambda th: jacobian_expectation(series, th, config), theta, h_hess)[..., : config.n_angles]
            hdev = np.abs(H - Hfd)
            expected = eval_count_hessian(T, config.n_angles)
            if not np.array_equal(H, np.swapaxes(H, 1, 2)):
                ok = False
                out(f"FAIL hessian instance {k}: not symmetric")
            if n_circ != expected:
                ok = False
                out(f"FAIL hessian instance {k}: {n_circ} circuits, expected {expected}")
            for t, i, j in np.argwhere(hdev > HESS_TOL)[:10]:
                ok = False
                out(f"FAIL hessian instance {k} t={t} params=({i},{j}) deviation={hdev[t, i, j]:.3e}")
            out(f"hessian instance {k}: max deviation {hdev.max():.3e}, circuits {n_circ}/{expected}")
    for block, sl in (("alpha (encoding)", slice(0, config.n_alpha)),
                      ("beta (evolution)", slice(config.n_alpha, config.n_angles))):
        part = worst[sl]
        if part.size:
            i = int(np.argmax(part)) + sl.start
            out(f"{block}: max deviation {part.max():.3e} at param {i}")
    out(("PASS" if ok else "FAIL") + f" gradient check ({n_samples} instances, T={T}, tol {GRAD_TOL:g})")
    return ok


def cmd_grad_check(args) -> int:
    cfg = resolve_config(args)
    ok = run_grad_check(cfg, args.samples, args.steps, args.check_seed, args.hessian,
                        tuple(args.fault_flip_sign or ()))
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_hessian_check(args) -> int:
    if args.config is None and args.case is None:
        # small default instance keeps the literal circuit count manageable
        cfg = io.RunConfig.from_dict({"case": "a", "ansatz": {"n_E": 1, "n_M": 1, "L": 1, "R": 0}})
    else:
        cfg = resolve_config(args)
    ok = run_grad_check(cfg, args.samples, args.steps, args.check_seed, True,
                        tuple(args.fault_flip_sign or ()))
    return EXIT_OK if ok else EXIT_VERIFY


# --- parser -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="JSON run config (flags override its values)")
    p.add_argument("--case", choices=sorted(CASE_CONFIGS), help="dataset/ansatz case tag")
    p.add_argument("--data-seed", type=int, help="seed of the validation split")
    p.add_argument("--out", help="output directory")


def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gradient", choices=("analytical", "numerical"))
    p.add_argument("--eps", type=float, help="finite-difference step for --gradient numerical")
    p.add_argument("--g-tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--init-seed", type=int, help="seed of the random initial parameters")
    p.add_argument("--workers", type=int, help="parallel restarts (default: QRNN_WORKERS or CPU count)")


def _check_flags(p: argparse.ArgumentParser, samples: int, steps: int) -> None:
    p.add_argument("--samples", type=int, default=samples, help="number of random instances")
    p.add_argument("--steps", type=int, default=steps, help="sequence length T")
    p.add_argument("--check-seed", type=int, default=0)
    p.add_argument("--fault-flip-sign", type=int, action="append", metavar="INDEX",
                   help=argparse.SUPPRESS)  # test hook: corrupt the shift sign of one angle


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qrnn-dm", description="Density-matrix QRNN emulator and trainer.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a series CSV and split sidecar")
    _common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="multi-restart L-BFGS training")
    _common(p)
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("evaluate", cmd_evaluate, "RMSE of a saved model on every split"),
                                 ("predict", cmd_predict, "write the prediction CSV of a saved model")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--model", help="model JSON (default: <out>/model.json)")
        p.add_argument("--output", help="output file")
        p.set_defaults(func=func)

    p = sub.add_parser("grad-check", help="parameter-shift gradient vs finite differences")
    _common(p)
    _check_flags(p, samples=5, steps=5)
    p.add_argument("--hessian", action="store_true", help="also check the Hessian")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("hessian-check", help="parameter-shift Hessian vs finite differences")
    _common(p)
    _check_flags(p, samples=1, steps=3)
    p.set_defaults(func=cmd_hessian_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"qrnn-dm: {exc}", file=sys.stderr)
        return exc.code
    except SpecError as exc:
        print(f"qrnn-dm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QRNNError as exc:
        print(f"qrnn-dm: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"qrnn-dm: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"qrnn-dm: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
