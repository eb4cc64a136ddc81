"""Command-line front end: train, estimate, benchmark, sweep, oracle.

Every command takes a JSON config (see :mod:`pinnrel.config`); all randomness
is seeded from it, so reruns are bit-reproducible.  Exit codes: 0 ok, 2 config
error, 3 numeric failure.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import time

import click
import numpy as np

from . import __version__, reliability as rel
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import (
    ConfigError,
    config_hash,
    load_config,
    problem_from_config,
    train_config_from_config,
)
from .oracles import OracleError
from .problems import oracle_limit_state, surrogate_limit_state
from .reliability import CSV_COLUMNS, EvaluationError
from .training import DivergenceError, TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_NUMERIC_ERRORS = (
    DivergenceError,
    OracleError,
    EvaluationError,
    FloatingPointError,
    CheckpointError,
)


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config_path):
    try:
        return load_config(config_path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


def _set_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        pass


def _outdir(out):
    os.makedirs(out, exist_ok=True)
    os.makedirs(os.path.join(out, "tables"), exist_ok=True)
    return out


def _write_manifest(out, payload):
    path = os.path.join(out, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def _estimate_csv_row(est):
    return [est.method, repr(est.pf), repr(est.beta), est.n_evals,
            "" if est.cov is None else repr(est.cov),
            "" if est.epsilon_vs_ref is None else repr(est.epsilon_vs_ref),
            est.converged]


def _run_estimator(ls, section, seed_override=None):
    method = section["method"]
    seed = section.get("seed", 0) if seed_override is None else seed_override
    n = section.get("n_samples", 10**6)
    if method == "mcs":
        return rel.pf_mcs(ls, n, seed=seed)
    if method == "form":
        return rel.form_hlrf(ls)
    if method == "is":
        form = rel.form_hlrf(ls)
        return rel.importance_sampling(ls, form.extras["mpp"], section.get("n_samples", 1000), seed=seed)
    # ss
    return rel.subset_simulation(
        ls,
        p0=section.get("p0", 0.1),
        n_per_level=section.get("n_per_level", 1000),
        seed=seed,
    )


@click.group()
@click.version_option(version=__version__, prog_name="pinnrel")
def main():
    """Simulation-free reliability analysis with physics-trained surrogates."""


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=".", type=click.Path(), help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override init and LHS seeds.")
@click.option("--threads", type=int, default=None)
def cmd_train(config_path, out, seed, threads):
    """Train a surrogate and write checkpoint + manifest."""
    _set_threads(threads)
    cfg = _load(config_path)
    try:
        problem = problem_from_config(cfg)
        tc = train_config_from_config(cfg)
    except (ConfigError, TypeError, ValueError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    if seed is not None:
        tc.init_seed = seed
        tc.lhs_seed = seed
    out = _outdir(out)
    t0 = time.perf_counter()
    try:
        surrogate, report = train(problem, tc)
    except _NUMERIC_ERRORS as exc:
        _fail(EXIT_NUMERIC, str(exc))
    ckpt = Checkpoint.from_surrogate(
        surrogate, cfg["benchmark"], train_config=tc.__dict__ | {"hidden_layers": list(tc.hidden_layers)},
        final_loss=report.final_loss,
    )
    ckpt_path = os.path.join(out, f"{cfg['benchmark']}.ckpt")
    save_checkpoint(ckpt, ckpt_path)
    _write_manifest(out, {
        "command": "train",
        "benchmark": cfg["benchmark"],
        "config_hash": config_hash(cfg),
        "seeds": {"init": tc.init_seed, "lhs": tc.lhs_seed},
        "final_loss": report.final_loss,
        "terminal_condition": report.terminal_condition,
        "stage_iterations": report.stage_iterations,
        "loss_history_tail": [list(h) for h in report.loss_history[-20:]],
        "wall_time_seconds": time.perf_counter() - t0,
        "checkpoint": os.path.basename(ckpt_path),
        "version": __version__,
    })
    click.echo(f"checkpoint: {ckpt_path}")
    click.echo(f"final loss: {report.final_loss:.6e} ({report.terminal_condition})")


@main.command("estimate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=".", type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the estimation seed.")
@click.option("--threads", type=int, default=None)
def cmd_estimate(config_path, ckpt_path, out, seed, threads):
    """Run one failure-probability estimator on a trained surrogate."""
    _set_threads(threads)
    cfg = _load(config_path)
    section = cfg.get("estimate")
    if section is None:
        _fail(EXIT_CONFIG, "config has no 'estimate' section")
    out = _outdir(out)
    try:
        problem = problem_from_config(cfg)
        surrogate = load_checkpoint(ckpt_path).to_surrogate()
        ls = surrogate_limit_state(
            surrogate, problem,
            threshold=section.get("threshold"), t=section.get("time"),
        )
        est = _run_estimator(ls, section, seed_override=seed)
    except _NUMERIC_ERRORS as exc:
        _fail(EXIT_NUMERIC, str(exc))
    except (ConfigError, TypeError, ValueError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    if "reference_beta" in section:
        est = est.with_reference(section["reference_beta"])
    if est.pf == 0.0 and "pf_upper_bound_95" in est.extras:
        click.echo(f"note: no failures observed; 95% upper bound "
                   f"Pf <= {est.extras['pf_upper_bound_95']:.3e}")
    click.echo(",".join(str(c) for c in CSV_COLUMNS))
    click.echo(",".join(str(c) for c in _estimate_csv_row(est)))
    path = os.path.join(out, "tables", "estimates.csv")
    new = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(CSV_COLUMNS)
        writer.writerow(_estimate_csv_row(est))
    sys.exit(EXIT_OK)


@main.command("benchmark")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=".", type=click.Path())
@click.option("--threads", type=int, default=None)
def cmd_benchmark(config_path, out, threads):
    """Reproduce a robustness table (architecture or collocation grid)."""
    _set_threads(threads)
    cfg = _load(config_path)
    section = cfg.get("tables")
    if section is None:
        _fail(EXIT_CONFIG, "config has no 'tables' section")
    out = _outdir(out)
    try:
        problem = problem_from_config(cfg)
        base = train_config_from_config(cfg)
    except (ConfigError, TypeError, ValueError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    n_mcs = section.get("n_samples", 10**6)
    seed = section.get("seed", 0)

    def run_cell(tc):
        surrogate, report = train(problem, tc)
        ls = surrogate_limit_state(surrogate, problem)
        est = rel.pf_mcs(ls, n_mcs, seed=seed)
        return est, report

    rows = []
    if section["table"] == "architecture":
        layers = section.get("layers", [2, 3])
        neurons = section.get("neurons", [30, 40, 50, 60])
        columns = ["n_layers", "n_neurons", "pf", "beta", "status"]
        for nl in layers:
            for nn in neurons:
                tc = TrainConfig(**{**base.__dict__, "hidden_layers": (nn,) * nl})
                try:
                    est, _ = run_cell(tc)
                    beta = "inf" if est.pf == 0.0 else repr(est.beta)
                    rows.append([nl, nn, repr(est.pf), beta, "ok"])
                except _NUMERIC_ERRORS as exc:
                    rows.append([nl, nn, "", "", f"failed: {exc}"])
                click.echo(f"cell layers={nl} neurons={nn}: {rows[-1][2:]}")
        name = "table_architecture.csv"
    else:
        counts = section.get("collocation_counts", [250, 500, 1000, 2000, 4000])
        columns = ["n_collocation", "pf", "beta", "status"]
        for nc in counts:
            tc = TrainConfig(**{**base.__dict__, "n_collocation": int(nc)})
            try:
                est, _ = run_cell(tc)
                beta = "inf" if est.pf == 0.0 else repr(est.beta)
                rows.append([nc, repr(est.pf), beta, "ok"])
            except _NUMERIC_ERRORS as exc:
                rows.append([nc, "", "", f"failed: {exc}"])
            click.echo(f"cell n_collocation={nc}: {rows[-1][1:]}")
        name = "table_collocation.csv"
    path = _write_csv(os.path.join(out, "tables", name), columns, rows)
    _write_manifest(out, {
        "command": "benchmark",
        "benchmark": cfg["benchmark"],
        "config_hash": config_hash(cfg),
        "table": section["table"],
        "csv": os.path.relpath(path, out),
        "version": __version__,
    })
    click.echo(f"table: {path}")


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=".", type=click.Path())
@click.option("--with-oracle", is_flag=True, default=False,
              help="Add matching oracle-MCS rows.")
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
def cmd_sweep(config_path, ckpt_path, out, with_oracle, seed, threads):
    """Threshold or time sweep of Pf/beta on a trained surrogate."""
    _set_threads(threads)
    cfg = _load(config_path)
    section = cfg.get("sweep")
    if section is None:
        _fail(EXIT_CONFIG, "config has no 'sweep' section")
    out = _outdir(out)
    values = [float(v) for v in section["values"]]
    n = section.get("n_samples", 10**5)
    sweep_seed = section.get("seed", 0) if seed is None else seed
    try:
        problem = problem_from_config(cfg)
        surrogate = load_checkpoint(ckpt_path).to_surrogate()
        if section["kind"] == "threshold":
            family = lambda thr: surrogate_limit_state(surrogate, problem, threshold=thr)
            estimates = rel.threshold_sweep(family, values, n, seed=sweep_seed)
            if with_oracle:
                ofamily = lambda thr: oracle_limit_state(problem, threshold=thr)
                oracle_rows = rel.threshold_sweep(ofamily, values, n, seed=sweep_seed)
        else:
            family = lambda t: surrogate_limit_state(surrogate, problem, t=t)
            estimates = rel.time_sweep(family, values, n, seed=sweep_seed)
            if with_oracle:
                ofamily = lambda t: oracle_limit_state(problem, t=t)
                oracle_rows = rel.time_sweep(ofamily, values, n, seed=sweep_seed)
    except _NUMERIC_ERRORS as exc:
        _fail(EXIT_NUMERIC, str(exc))
    except (ConfigError, TypeError, ValueError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    columns = [section["kind"], "source"] + list(CSV_COLUMNS)
    rows = [[repr(v), "surrogate"] + _estimate_csv_row(e) for v, e in estimates]
    if with_oracle:
        rows += [[repr(v), "oracle"] + _estimate_csv_row(e) for v, e in oracle_rows]
    path = _write_csv(os.path.join(out, "tables", f"sweep_{section['kind']}.csv"), columns, rows)
    for row in rows:
        click.echo(",".join(str(c) for c in row))
    click.echo(f"table: {path}")


@main.command("oracle")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=".", type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
def cmd_oracle(config_path, out, seed, threads):
    """Reference Monte Carlo with the independent solver (no surrogate)."""
    _set_threads(threads)
    cfg = _load(config_path)
    section = cfg.get("oracle", {})
    out = _outdir(out)
    n = section.get("n_samples", 10**4)
    mcs_seed = section.get("seed", 0) if seed is None else seed
    try:
        problem = problem_from_config(cfg)
        kwargs = {}
        if "nx" in section:
            kwargs["nx"] = section["nx"]
        if "dt" in section:
            kwargs["dt"] = section["dt"]
        ls = oracle_limit_state(
            problem, threshold=section.get("threshold"), t=section.get("time"), **kwargs
        )
        est = rel.pf_mcs(ls, n, seed=mcs_seed)
    except _NUMERIC_ERRORS as exc:
        _fail(EXIT_NUMERIC, str(exc))
    except (ConfigError, TypeError, ValueError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    click.echo(",".join(str(c) for c in CSV_COLUMNS))
    click.echo(",".join(str(c) for c in _estimate_csv_row(est)))
    path = os.path.join(out, "tables", "oracle.csv")
    _write_csv(path, CSV_COLUMNS, [_estimate_csv_row(est)])
    _write_manifest(out, {
        "command": "oracle",
        "benchmark": cfg["benchmark"],
        "config_hash": config_hash(cfg),
        "seeds": {"mcs": mcs_seed},
        "n_samples": n,
        "pf": est.pf,
        "beta": est.beta,
        "version": __version__,
    })


if __name__ == "__main__":
    main()
