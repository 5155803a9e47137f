"""Command-line front end.

    spikedgf simulate --config run.json [--out DIR] [--seed S] [--deterministic]
    spikedgf population --config run.json
    spikedgf predict --config run.json
    spikedgf concentration --N 400 --r 2 --samples 10000
    spikedgf sweep --config sweep.json --threads 4

Exit codes: 0 success, 1 configuration error, 2 memory budget exceeded,
3 integration failure (partial outputs are kept and flagged).
"""

import argparse
import json
import os
import sys

import numpy as np

from .config import RunConfig, load_config, with_overrides
from .dynamics import integrate
from .errors import BudgetError, ConfigError, IntegrationError
from .experiments import SweepSpec, concentration_experiment, recovery_sweep, write_sweep
from .manifold import sample_positive, sample_uniform
from .model import correlations, generate, point_with_correlations
from .population import detect_elimination, integrate_population
from .svgplot import trajectory_svg
from .theory import greedy_selection, init_matrix, prediction_report

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_INTEGRATION = 0, 1, 2, 3


def _write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _seeds(cfg):
    """Model seed (fresh if absent) and the init stream derived from it."""
    seed = cfg.model.get("seed")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
    init_seed = cfg.init.get("seed")
    ss = np.random.SeedSequence([seed, 1] if init_seed is None else [init_seed])
    return seed, np.random.default_rng(ss)


def _initial_point(cfg, V, rng):
    mode = cfg.init["mode"]
    if mode == "explicit":
        return point_with_correlations(V, np.array(cfg.init["m0"]), rng)
    if mode == "uniform":
        return sample_uniform(V.shape[0], V.shape[1], rng)
    return sample_positive(V, rng)


def _model(cfg, noise=True):
    mc = cfg.model
    seed, rng = _seeds(cfg)
    model = generate(mc["p"], mc["r"], mc["N"], mc["lambdas"], mc["sqrt_m"], seed=seed, noise=noise)
    return model, rng


def _initial_m0(cfg):
    if "m0" in cfg.init:
        return np.array(cfg.init["m0"]), None
    model, rng = _model(cfg, noise=False)
    return correlations(model, _initial_point(cfg, model.spikes, rng)), model.seed


def _report(cfg, m0):
    mc = cfg.model
    return prediction_report(m0, mc["lambdas"], mc["p"], mc["N"], max(mc["sqrt_m"] ** 2, 1.0),
                             threshold=cfg.predict.get("threshold", 0.1))


def cmd_simulate(cfg: RunConfig):
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    model, rng = _model(cfg)
    X0 = _initial_point(cfg, model.spikes, rng)
    m0 = correlations(model, X0)
    sel = greedy_selection(init_matrix(m0, model.lambdas, model.p))
    report = _report(cfg, m0)
    report["seed"] = model.seed
    _write_json(os.path.join(out, "prediction.json"), report)
    status = EXIT_OK
    try:
        traj = integrate(model, X0, cfg.flow)
    except IntegrationError as exc:
        traj = exc.trajectory
        status = EXIT_INTEGRATION
        _write_json(os.path.join(out, "FAILED.json"), {"error": str(exc), "partial": traj is not None})
        print(f"simulate: integration failed: {exc}", file=sys.stderr)
        if traj is None:
            return status
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    rep = detect_elimination(traj, eps=cfg.eps, eps_prime=cfg.detect.get("eps_prime"), prediction=sel)
    elim = rep.to_json()
    elim.update(termination=traj.termination, partial=status != EXIT_OK)
    _write_json(os.path.join(out, "elimination.json"), elim)
    if cfg.output.get("emit_svg", False):
        trajectory_svg(traj, os.path.join(out, "trajectory.svg"), selection=sel,
                       log_time=cfg.output.get("log_time", False), title="correlations m_ij(t)")
    pairs = " ".join(f"({i + 1},{j + 1})" for i, j in rep.pairs)
    print(f"simulate: {traj.termination} at t={traj.times[-1]:.6g}, ordering {pairs or '-'}, "
          f"matches prediction: {rep.matched_prediction}")
    return status


def cmd_population(cfg: RunConfig):
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    mc = cfg.model
    m0, seed = _initial_m0(cfg)
    sel = greedy_selection(init_matrix(m0, mc["lambdas"], mc["p"]))
    report = _report(cfg, m0)
    report["seed"] = seed
    _write_json(os.path.join(out, "prediction.json"), report)
    try:
        traj = integrate_population(m0, mc["lambdas"], mc["p"], cfg.flow, method=cfg.method)
    except IntegrationError as exc:
        _write_json(os.path.join(out, "FAILED.json"), {"error": str(exc), "partial": exc.trajectory is not None})
        if exc.trajectory is not None:
            exc.trajectory.to_csv(os.path.join(out, "population.csv"))
        print(f"population: integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    traj.to_csv(os.path.join(out, "population.csv"))
    rep = detect_elimination(traj, eps=cfg.eps, eps_prime=cfg.detect.get("eps_prime"), prediction=sel)
    elim = rep.to_json()
    elim["termination"] = traj.termination
    _write_json(os.path.join(out, "elimination.json"), elim)
    if cfg.output.get("emit_svg", False):
        trajectory_svg(traj, os.path.join(out, "population.svg"), selection=sel,
                       log_time=cfg.output.get("log_time", True), title="noiseless correlations")
    pairs = " ".join(f"({i + 1},{j + 1})" for i, j in rep.pairs)
    print(f"population: {traj.termination}, ordering {pairs or '-'}, matches prediction: {rep.matched_prediction}")
    return EXIT_OK


def cmd_predict(cfg: RunConfig):
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    m0, seed = _initial_m0(cfg)
    report = _report(cfg, m0)
    report["m0"] = m0.tolist()
    report["seed"] = seed
    _write_json(os.path.join(out, "prediction.json"), report)
    print(f"predict: selection {report['selection']}, regime {report['regime']}")
    return EXIT_OK


def cmd_concentration(args, cfg: RunConfig | None):
    conc = dict(cfg.concentration) if cfg is not None else {}
    N = args.N if args.N is not None else conc.get("N", 400)
    r = args.r if args.r is not None else conc.get("r", 2)
    n = args.samples if args.samples is not None else conc.get("samples", 10_000)
    seed = args.seed if args.seed is not None else conc.get("seed")
    out = args.out or (cfg.out_dir if cfg is not None else "out")
    os.makedirs(out, exist_ok=True)
    try:
        tab = concentration_experiment(N, r, n, np.random.default_rng(seed))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with open(os.path.join(out, "concentration_tail.csv"), "w", newline="\n") as fh:
        fh.write("t,sqrtN_t,tail_prob,fit\n")
        for t, q in zip(tab.t_grid, tab.tail_prob):
            fit = tab.C * np.exp(-tab.c * N * t * t)
            fh.write(f"{t:.17g},{t * np.sqrt(N):.17g},{q:.17g},{fit:.17g}\n")
    _write_json(os.path.join(out, "concentration.json"), {
        "N": N, "r": r, "n_samples": n, "seed": seed, "C": tab.C, "c": tab.c, "ks": tab.ks,
        "small_ball": [{"t": t, "empirical": e, "gaussian": g}
                       for t, e, g in zip(tab.small_t, tab.small_ball_prob, tab.small_ball_gauss)],
    })
    print(f"concentration: N={N} r={r} samples={n} KS={tab.ks:.4f} fit C={tab.C:.3g} c={tab.c:.3g}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, threads=1):
    sw = cfg.sweep
    if sw is None:
        raise ConfigError("sweep command needs a sweep section")
    lams = sw["lambdas"]
    if not all(isinstance(x, list) for x in lams):
        raise ConfigError("sweep.lambdas must be a list of lists")
    kw = {"sqrt_m": sw["sqrt_m"]} if "sqrt_m" in sw else {"alpha": sw["alpha"]}
    try:
        spec = SweepSpec.grid(sw["N"], sw["p"], sw["r"], lams, seeds_per_cell=sw["seeds_per_cell"],
                              init_mode=cfg.init["mode"], flow=cfg.flow, eps=cfg.eps,
                              master_seed=sw.get("master_seed", 0),
                              m0=tuple(map(tuple, cfg.init["m0"])) if "m0" in cfg.init else None, **kw)
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from None
    for c in spec.cells:
        if c.N ** c.p > 50_000_000:
            raise BudgetError(f"cell N={c.N}, p={c.p} needs {c.N ** c.p:.3e} tensor entries")
    out = cfg.out_dir
    results = recovery_sweep(spec, threads=threads, out_dir=out)
    path = write_sweep(results, out)
    fails = sum(cr.failures for cr in results)
    print(f"sweep: {len(results)} cells x {spec.seeds_per_cell} seeds -> {path} ({fails} failed runs)")
    return EXIT_OK


def _common(suppress):
    # subparsers must not reset values given before the command name
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="JSON run configuration")
    common.add_argument("--out", default=d(None), help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, default=d(None), help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=d(1), help="worker processes for sweeps")
    common.add_argument("--deterministic", action="store_true", default=d(False),
                        help="single-threaded BLAS for bit-reproducible reductions")
    return common


def build_parser():
    common = _common(suppress=True)
    parser = argparse.ArgumentParser(prog="spikedgf", parents=[_common(suppress=False)],
                                     description="Gradient flow for multi-spiked tensor estimation.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="full gradient flow on the manifold")
    sub.add_parser("population", parents=[common], help="noiseless correlation dynamics")
    sub.add_parser("predict", parents=[common], help="greedy prediction from initial correlations")
    conc = sub.add_parser("concentration", parents=[common], help="uniform-measure tail checks")
    conc.add_argument("--N", type=int, default=None)
    conc.add_argument("--r", type=int, default=None)
    conc.add_argument("--samples", type=int, default=None)
    sub.add_parser("sweep", parents=[common], help="recovery-rate sweep over a parameter grid")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = None
        if args.config:
            cfg = with_overrides(load_config(args.config), out=args.out, seed=args.seed,
                                 deterministic=args.deterministic)
        if args.command == "concentration":
            return cmd_concentration(args, cfg)
        if cfg is None:
            raise ConfigError(f"{args.command} needs --config")
        if args.command != "sweep" and cfg.model is None:
            raise ConfigError(f"{args.command} needs a model section")
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "population":
            return cmd_population(cfg)
        if args.command == "predict":
            return cmd_predict(cfg)
        return cmd_sweep(cfg, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except IntegrationError as exc:
        print(f"integration error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
