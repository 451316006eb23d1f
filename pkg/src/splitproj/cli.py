"""Command-line surface.

Commands: generate | tune | train | eval | project | bench | ablate.
Report-producing commands write CSVs with a rendered PNG next to each.

Exit codes: 0 success, 2 configuration error (bad flags, malformed files),
3 numerical failure (non-finite loss, infeasible generation), 4 missing
artifact (dataset or checkpoint path not found).

Environment: SPLITPROJ_NUM_THREADS pins the BLAS thread pools;
SPLITPROJ_DETERMINISTIC=1 forces single-threaded numerics. Both must be
honored before numpy loads, so this module defers heavy imports until
after they are applied.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_env() -> None:
    n = os.environ.get("SPLITPROJ_NUM_THREADS")
    if os.environ.get("SPLITPROJ_DETERMINISTIC") == "1":
        n = "1"
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = n


def _csv_ints(text: str):
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def _parse_scalar(value: str):
    low = value.strip()
    if low.lower() in ("true", "false"):
        return low.lower() == "true"
    for caster in (int, float):
        try:
            return caster(low)
        except ValueError:
            pass
    return low


def _read_config(path: str) -> dict:
    from .exceptions import ConfigError, MissingArtifactError

    if not os.path.exists(path):
        raise MissingArtifactError(path)
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key = value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _load_dataset(path: str):
    from .problems import Dataset

    return Dataset.load(path)


# ---------------------------------------------------------------- handlers

def _cmd_generate(args) -> int:
    from . import problems

    if args.family == "dc3":
        ds = problems.gen_dc3_family(
            d=args.d, n_eq=args.n_eq, n_ineq=args.n_ineq,
            n_samples=args.n_samples, seed=args.seed,
            convex=not args.nonconvex,
        )
    elif args.family == "mpc":
        ds = problems.gen_toy_mpc(
            n_samples=args.n_samples, horizon=args.horizon, seed=args.seed
        )
    elif args.family == "soc":
        ds = problems.gen_soc_family(
            d1=args.d1, d2=args.d2, batch=args.n_samples, seed=args.seed
        )
    else:
        ds = problems.gen_trajectory_family(
            n_vehicles=args.vehicles, horizon=args.horizon, seed=args.seed,
            n_samples=args.n_samples, lambda_pref=args.lambda_pref,
            nu_cov=args.nu_cov,
        )
    if args.oracles:
        problems.compute_oracles(ds)
    ds.save(args.out)
    print(f"dataset kind={ds.kind} n={ds.n_samples} d={ds.d} -> {args.out}")
    return 0


def _tune_target(dataset, equilibrate: bool):
    from .equilibration import rescale_constraint, ruiz_equilibrate
    from .exceptions import ConfigError

    structure = dataset.structure
    if not equilibrate:
        return structure
    try:
        return rescale_constraint(structure, ruiz_equilibrate(structure.hyperplane.a))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_tune(args) -> int:
    from . import report as rpt
    from .autotune import TuneThresholds, save_report, tune

    ds = _load_dataset(args.dataset)
    target = _tune_target(ds, args.equilibrate)
    rows = ds.rhs[ds.split("train")[: args.n_probes]]
    rep = tune(target, rhs_rows=rows, seed=args.seed, n_probes=args.n_probes,
               thresholds=TuneThresholds(cv=args.cv_threshold,
                                         subopt=args.subopt_threshold))
    os.makedirs(args.out_dir, exist_ok=True)
    save_report(rep, os.path.join(args.out_dir, "tune_report.npz"))
    rpt.tune_csv(rep, os.path.join(args.out_dir, "tune.csv"))
    rpt.tune_figure(rep, os.path.join(args.out_dir, "tune.png"))
    flag = " (warning: no candidate met the thresholds)" if rep.warning else ""
    print(f"sigma={rep.chosen_sigma:.6g} n_iter={rep.chosen_n_iter}{flag}")
    return 0


_CONFIG_KEYS = {
    "epochs": int, "batch_size": int, "lr": float, "lr_schedule": str,
    "seed": int, "mode": str, "penalty": float, "equilibrate": bool,
    "tune": bool, "hidden": None, "max_seconds": float, "sigma": float,
    "omega": float, "n_iter_fwd": int, "n_iter_test": int, "n_iter_bwd": int,
}


def _build_train_config(args):
    from .exceptions import ConfigError
    from .projection import DRSettings
    from .training import TrainConfig

    values = {}
    if args.config:
        for key, raw in _read_config(args.config).items():
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "hidden":
                values[key] = _csv_ints(raw)
            else:
                parsed = _parse_scalar(raw)
                caster = _CONFIG_KEYS[key]
                if caster is bool and not isinstance(parsed, bool):
                    raise ConfigError(f"config key {key!r} expects true/false")
                values[key] = parsed if caster is bool else caster(parsed)
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            values[key] = flag

    dr_kwargs = {k: values.pop(k) for k in
                 ("sigma", "omega", "n_iter_fwd", "n_iter_test", "n_iter_bwd")
                 if k in values}
    try:
        settings = DRSettings(**dr_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return TrainConfig(settings=settings, **values)


def _echo_config(config, path: str) -> None:
    s = config.settings
    lines = [
        f"epochs = {config.epochs}",
        f"batch_size = {config.batch_size}",
        f"lr = {config.lr}",
        f"optimizer = {config.optimizer}",
        f"seed = {config.seed}",
        f"mode = {config.mode}",
        f"penalty = {config.penalty}",
        f"equilibrate = {str(config.equilibrate).lower()}",
        f"tune = {str(config.tune).lower()}",
        f"hidden = {','.join(str(h) for h in config.hidden)}",
        f"sigma = {s.sigma}",
        f"omega = {s.omega}",
        f"n_iter_fwd = {s.n_iter_fwd}",
        f"n_iter_test = {s.n_iter_test}",
        f"n_iter_bwd = {s.n_iter_bwd}",
    ]
    if config.max_seconds is not None:
        lines.append(f"max_seconds = {config.max_seconds}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_train(args) -> int:
    from . import report as rpt
    from .autotune import save_report
    from .layer import save_model
    from .training import evaluate, make_model, train

    ds = _load_dataset(args.dataset)
    config = _build_train_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    _echo_config(config, os.path.join(args.out_dir, "config.txt"))

    model, info = make_model(ds, config)
    if info.tune_report is not None:
        save_report(info.tune_report,
                    os.path.join(args.out_dir, "tune_report.npz"))
    log = train(model, ds, config, setup_seconds=info.seconds)
    save_model(model, os.path.join(args.out_dir, "checkpoint.npz"))
    rpt.runlog_csv(log, os.path.join(args.out_dir, "runlog.csv"))
    rpt.runlog_figure(log, os.path.join(args.out_dir, "learning_curve.png"))
    val = evaluate(model, ds, "val")
    print(f"trained epochs={len(log.entries)} setup={log.setup_seconds:.2f}s "
          f"train={log.train_seconds:.2f}s val_rs={val.rs:.6g} "
          f"val_cv_max={val.cv_max:.3g}")
    return 0


def _cmd_eval(args) -> int:
    from . import report as rpt
    from .layer import load_model
    from .training import evaluate

    ds = _load_dataset(args.dataset)
    model = load_model(args.checkpoint, ds.structure)
    metrics = evaluate(model, ds, args.split, n_iter=args.n_iter)
    os.makedirs(args.out_dir, exist_ok=True)
    ids = ds.split(args.split)
    rpt.metrics_csv(metrics, os.path.join(args.out_dir, "metrics.csv"), ids=ids)
    rpt.metrics_figure(metrics, os.path.join(args.out_dir, "metrics.png"))
    print(f"split={args.split} n={len(ids)} rs={metrics.rs:.6g} "
          f"cv={metrics.cv:.3g} cv_max={metrics.cv_max:.3g} "
          f"optimal_frac={metrics.optimal_frac:.4f}")
    return 0


def _cmd_project(args) -> int:
    import numpy as np

    from .exceptions import ConfigError
    from .projection import DRSettings, dr_project_batch
    from .report import write_csv

    ds = _load_dataset(args.dataset)
    try:
        points = np.loadtxt(args.points, delimiter=",", ndmin=2)
    except OSError:
        from .exceptions import MissingArtifactError

        raise MissingArtifactError(args.points) from None
    except ValueError as exc:
        raise ConfigError(f"bad points file: {exc}") from exc
    if points.shape[1] != ds.structure.d:
        raise ConfigError(
            f"points have {points.shape[1]} columns, constraint has d={ds.structure.d}"
        )
    if not 0 <= args.index < ds.n_samples:
        raise ConfigError(f"--index {args.index} out of range [0, {ds.n_samples})")
    rhs = np.repeat(ds.rhs[args.index][None], points.shape[0], axis=0)
    settings = DRSettings() if args.sigma is None else DRSettings(sigma=args.sigma)
    res = dr_project_batch(ds.structure, points, settings, rhs=rhs,
                           n_iter=args.n_iter)
    eq_rhs = ds.structure.raw_eq_rhs_rows(rhs)
    resid = ds.structure.raw.violation_batch(res.y, eq_rhs)
    rows = [list(res.y[i]) + [resid[i]] for i in range(points.shape[0])]
    header = [f"y{j}" for j in range(ds.structure.d)] + ["residual"]
    write_csv(args.out, header, rows)
    print(f"projected {points.shape[0]} points, max residual {resid.max():.3g}")
    return 0


def _cmd_bench(args) -> int:
    import numpy as np

    from . import report as rpt
    from .autotune import tune
    from .projection import DRSettings, convergence_profile_batch, iterations_to_threshold

    ds = _load_dataset(args.dataset)
    rng = np.random.default_rng(args.seed)
    probes = rng.standard_normal((args.n_probes, ds.structure.d))
    train_idx = ds.split("train")
    reps = np.arange(args.n_probes) % train_idx.size
    rhs = ds.rhs[train_idx[reps]]
    checkpoints = args.checkpoints

    configs = {"default": (ds.structure, DRSettings())}
    if args.tuned:
        target = ds.structure
        rep = tune(target, rhs_rows=rhs, seed=args.seed, n_probes=args.n_probes)
        configs["tuned"] = (target, rep.as_settings())
    if args.equilibrate:
        target = _tune_target(ds, True)
        configs["equilibrated"] = (target, DRSettings())
        if args.tuned:
            rep = tune(target, rhs_rows=rhs, seed=args.seed,
                       n_probes=args.n_probes)
            configs["tuned+equilibrated"] = (target, rep.as_settings())

    profiles = {}
    for label, (target, settings) in configs.items():
        profiles[label] = convergence_profile_batch(
            target, probes, settings, checkpoints, rhs=rhs
        )
    os.makedirs(args.out_dir, exist_ok=True)
    rpt.profiles_csv(profiles, os.path.join(args.out_dir, "bench.csv"))
    rpt.profiles_figure(profiles, os.path.join(args.out_dir, "bench.png"),
                        threshold=args.threshold)
    for label, profile in profiles.items():
        k = iterations_to_threshold(profile, args.threshold)
        print(f"{label}: reaches cv<={args.threshold:g} at "
              f"{'n/a' if k is None else k} iterations")
    return 0


def _cmd_ablate(args) -> int:
    if args.which == "conditioning":
        return _ablate_conditioning(args)
    return _ablate_training(args)


def _ablate_conditioning(args) -> int:
    import numpy as np

    from . import report as rpt
    from .autotune import tune
    from .projection import DRSettings, convergence_profile_batch, iterations_to_threshold

    ds = _load_dataset(args.dataset)
    rng = np.random.default_rng(args.seed)
    probes = rng.standard_normal((args.n_probes, ds.structure.d))
    train_idx = ds.split("train")
    reps = np.arange(args.n_probes) % train_idx.size
    rhs = ds.rhs[train_idx[reps]]
    checkpoints = args.checkpoints

    plain = ds.structure
    scaled = _tune_target(ds, True)
    configs = {"default": (plain, DRSettings())}
    rep_plain = tune(plain, rhs_rows=rhs, seed=args.seed, n_probes=args.n_probes)
    configs["tuned"] = (plain, rep_plain.as_settings())
    rep_eq = tune(scaled, rhs_rows=rhs, seed=args.seed, n_probes=args.n_probes)
    configs["tuned_equilibrated"] = (scaled, rep_eq.as_settings())

    profiles = {}
    rows = []
    for label, (target, settings) in configs.items():
        profile = convergence_profile_batch(target, probes, settings,
                                            checkpoints, rhs=rhs)
        profiles[label] = profile
        k = iterations_to_threshold(profile, args.threshold)
        final = float(np.max(profile[-1][1]))
        rows.append((label, settings.sigma, -1 if k is None else k, final))

    os.makedirs(args.out_dir, exist_ok=True)
    rpt.comparison_csv(
        os.path.join(args.out_dir, "ablate_conditioning.csv"),
        ["config", "sigma", "iters_to_threshold", "final_max_cv"], rows,
    )
    rpt.profiles_figure(profiles,
                        os.path.join(args.out_dir, "ablate_conditioning.png"),
                        threshold=args.threshold)
    for label, sigma, k, final in rows:
        print(f"{label}: sigma={sigma:.6g} iters_to_threshold="
              f"{'n/a' if k < 0 else k} final_max_cv={final:.3g}")
    return 0


def _ablate_training(args) -> int:
    import dataclasses

    from . import report as rpt
    from .projection import DRSettings
    from .training import TrainConfig, evaluate, make_model, train

    ds = _load_dataset(args.dataset)
    base = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=args.seed, hidden=args.hidden, max_seconds=args.budget_seconds,
        settings=DRSettings(sigma=args.sigma, n_iter_fwd=args.n_iter_fwd,
                            n_iter_test=args.n_iter_test),
    )
    runs = {
        "project_at_train": dataclasses.replace(base, mode="project"),
        "inference_only": dataclasses.replace(
            base, mode="soft_penalty", penalty=args.penalty
        ),
    }
    rows = []
    labels = []
    rs_vals = []
    cv_vals = []
    for label, config in runs.items():
        model, info = make_model(ds, config)
        log = train(model, ds, config, setup_seconds=info.seconds)
        metrics = evaluate(model, ds, "test")
        rows.append((label, len(log.entries), log.setup_seconds + log.train_seconds,
                     metrics.rs, metrics.cv, metrics.cv_max, metrics.optimal_frac))
        labels.append(label)
        rs_vals.append(metrics.rs)
        cv_vals.append(metrics.cv)
        print(f"{label}: epochs={len(log.entries)} "
              f"time={log.setup_seconds + log.train_seconds:.1f}s "
              f"test_rs={metrics.rs:.6g} test_cv={metrics.cv:.3g}")

    os.makedirs(args.out_dir, exist_ok=True)
    rpt.comparison_csv(
        os.path.join(args.out_dir, "ablate_training.csv"),
        ["mode", "epochs", "seconds", "mean_rs", "mean_cv", "max_cv",
         "optimal_frac"], rows,
    )
    rpt.comparison_figure(
        labels, {"mean RS": rs_vals, "mean CV": cv_vals},
        os.path.join(args.out_dir, "ablate_training.png"),
    )
    return 0


# ------------------------------------------------------------------ parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitproj",
        description="Constraint-projected learning: datasets, tuning, "
                    "training, evaluation, and benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a benchmark dataset")
    g.add_argument("family", choices=("dc3", "mpc", "soc", "trajectory"))
    g.add_argument("--out", required=True)
    g.add_argument("--n-samples", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--d", type=int, default=20)
    g.add_argument("--n-eq", type=int, default=10)
    g.add_argument("--n-ineq", type=int, default=10)
    g.add_argument("--nonconvex", action="store_true")
    g.add_argument("--horizon", type=int, default=8)
    g.add_argument("--d1", type=int, default=50)
    g.add_argument("--d2", type=int, default=50)
    g.add_argument("--vehicles", type=int, default=1)
    g.add_argument("--lambda-pref", type=float, default=0.0)
    g.add_argument("--nu-cov", type=float, default=0.0)
    g.add_argument("--oracles", action="store_true",
                   help="solve val/test instances to high accuracy")
    g.set_defaults(func=_cmd_generate)

    t = sub.add_parser("tune", help="recommend sigma and n_iter_fwd")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--n-probes", type=int, default=150)
    t.add_argument("--equilibrate", action="store_true")
    t.add_argument("--cv-threshold", type=float, default=1e-3)
    t.add_argument("--subopt-threshold", type=float, default=1.05)
    t.set_defaults(func=_cmd_tune)

    tr = sub.add_parser("train", help="train a model on a dataset")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--out-dir", required=True)
    tr.add_argument("--config", help="key = value overrides file")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch-size", type=int, dest="batch_size")
    tr.add_argument("--lr", type=float)
    tr.add_argument("--lr-schedule", choices=("constant", "cosine"), dest="lr_schedule")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--mode", choices=("project", "inference_only", "soft_penalty"))
    tr.add_argument("--penalty", type=float)
    tr.add_argument("--equilibrate", action="store_true", default=None)
    tr.add_argument("--tune", action="store_true", default=None)
    tr.add_argument("--hidden", type=_csv_ints)
    tr.add_argument("--max-seconds", type=float, dest="max_seconds")
    tr.add_argument("--sigma", type=float)
    tr.add_argument("--omega", type=float)
    tr.add_argument("--n-iter-fwd", type=int, dest="n_iter_fwd")
    tr.add_argument("--n-iter-test", type=int, dest="n_iter_test")
    tr.add_argument("--n-iter-bwd", type=int, dest="n_iter_bwd")
    tr.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a split")
    e.add_argument("--dataset", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--n-iter", type=int, dest="n_iter")
    e.set_defaults(func=_cmd_eval)

    p = sub.add_parser("project", help="project points from a CSV file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--points", required=True, help="CSV rows of d floats")
    p.add_argument("--out", required=True)
    p.add_argument("--index", type=int, default=0,
                   help="dataset instance whose right-hand side applies")
    p.add_argument("--n-iter", type=int, dest="n_iter")
    p.add_argument("--sigma", type=float)
    p.set_defaults(func=_cmd_project)

    b = sub.add_parser("bench", help="convergence profile sweeps")
    b.add_argument("--dataset", required=True)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--n-probes", type=int, default=32)
    b.add_argument("--checkpoints", type=_csv_ints,
                   default=(25, 50, 100, 200, 400))
    b.add_argument("--threshold", type=float, default=1e-3)
    b.add_argument("--tuned", action="store_true")
    b.add_argument("--equilibrate", action="store_true")
    b.set_defaults(func=_cmd_bench)

    a = sub.add_parser("ablate", help="paired comparison protocols")
    a.add_argument("which", choices=("conditioning", "training"))
    a.add_argument("--dataset", required=True)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--n-probes", type=int, default=32)
    a.add_argument("--checkpoints", type=_csv_ints,
                   default=(25, 50, 100, 200, 400, 800))
    a.add_argument("--threshold", type=float, default=1e-3)
    a.add_argument("--budget-seconds", type=float, default=None,
                   dest="budget_seconds")
    a.add_argument("--epochs", type=int, default=50)
    a.add_argument("--batch-size", type=int, default=256, dest="batch_size")
    a.add_argument("--lr", type=float, default=1e-3)
    a.add_argument("--hidden", type=_csv_ints, default=(200, 200))
    a.add_argument("--penalty", type=float, default=10.0)
    a.add_argument("--sigma", type=float, default=1.0)
    a.add_argument("--n-iter-fwd", type=int, default=100, dest="n_iter_fwd")
    a.add_argument("--n-iter-test", type=int, default=100, dest="n_iter_test")
    a.set_defaults(func=_cmd_ablate)

    return parser


def main(argv=None) -> int:
    _apply_env()
    parser = _build_parser()
    args = parser.parse_args(argv)

    from .exceptions import (
        ConfigError,
        InfeasibleConstraintError,
        MissingArtifactError,
        NumericalFailureError,
    )

    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailureError, InfeasibleConstraintError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (MissingArtifactError, FileNotFoundError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
