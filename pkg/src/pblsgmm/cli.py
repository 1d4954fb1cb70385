"""Command-line entry point: ``python -m pblsgmm <command> [options]``.

Every run writes into a temporary sibling of ``--output`` that is moved into
place only when the command finishes; on error nothing is left behind.

Exit codes: 0 success, 2 invalid input or configuration, 3 estimation failure,
4 simulation study aborted before reaching S converged replications (the
partial report is kept).
"""
from __future__ import annotations

import argparse
import logging
import platform
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .errors import EstimationFailure, InvalidInputError, NumericalFailure, UndefinedKappaError
from .io import COMMANDS, RunConfig, export, ingest, write_csv, write_json

log = logging.getLogger("pblsgmm")

EXIT_OK, EXIT_INVALID, EXIT_ESTIMATION, EXIT_PARTIAL = 0, 2, 3, 4


def _manifest(cfg: RunConfig, extra=None) -> dict:
    m = {
        "package": "pblsgmm", "version": __version__, "command": cfg.command, "seed": cfg.seed,
        "config": cfg.to_dict(), "numpy": np.__version__, "python": platform.python_version(),
    }
    m.update(extra or {})
    return m


def _classes_frame(ids, classes, posteriors) -> pd.DataFrame:
    df = pd.DataFrame({"id": ids, "class": np.asarray(classes) + 1})
    for k in range(posteriors.shape[1]):
        df[f"post{k + 1}"] = posteriors[:, k]
    return df


def _cmd_fit(cfg: RunConfig, out: Path) -> tuple:
    from .estimation.fit import fit, odds_ratio_table, report_original_scale, reparam_names
    from .model_selection import information_criteria

    data = ingest(cfg.data, cfg.covariates)
    cov_names = cfg.covariates if cfg.covariates is not None else _header_covariates(cfg.data)
    cols = [("y", "z").index(o) for o in cfg.outcomes]
    if cols != [0, 1]:
        data = [ind.select(cols) for ind in data]
    res = fit(data, cfg.K, cfg.fit_config(), outcomes=cfg.outcomes, covariates=cov_names)
    aic, bic = information_criteria(-2 * res.loglik, res.n_parameters, res.n_obs)
    table = report_original_scale(res)
    write_csv(table, out / "estimates.csv")
    write_csv(pd.DataFrame({"parameter": reparam_names(res.layout), "estimate": res.reparam_estimates}),
              out / "estimates_reparam.csv")
    if res.K > 1 and cov_names:
        write_csv(odds_ratio_table(res).reset_index(), out / "odds_ratios.csv")
    write_csv(_classes_frame(res.ids, res.classes, res.posteriors), out / "classes.csv")
    report = {
        "status": res.status, "loglik": res.loglik, "minus_two_ll": -2 * res.loglik, "aic": aic, "bic": bic,
        "n": res.n_obs, "K": res.K, "n_parameters": res.n_parameters, "n_attempts": res.n_attempts,
        "attempt_logliks": res.attempt_logliks, "n_iter": res.n_iter, "se_available": res.se_available,
        "proportions": res.proportions, "outcomes": list(res.layout.outcomes),
        "covariates": list(res.layout.covariates),
        "estimates": {"original": dict(zip(res.names, res.estimates)),
                      "reparameterized": dict(zip(reparam_names(res.layout), res.reparam_estimates))},
        "se": dict(zip(res.names, res.se)) if res.se is not None else None,
    }
    return report, res.status, EXIT_OK


def _header_covariates(path) -> list:
    with open(path) as fh:
        return [h.strip() for h in fh.readline().strip().split(",")[4:]]


def _cmd_enumerate(cfg: RunConfig, out: Path) -> tuple:
    from .model_selection import enumerate_classes

    data = ingest(cfg.data, [])
    rows = enumerate_classes(data, cfg.Kmax, tuple(cfg.outcomes), cfg.fit_config())
    df = pd.DataFrame([{
        "K": r.K, "minus_two_ll": r.minus_two_ll, "aic": r.aic, "bic": r.bic,
        "n_parameters": r.n_parameters,
        "proportions": ";".join(f"{100 * p:.1f}%" for p in r.proportions),
        "status": r.status, "bic_best": r.bic_best,
    } for r in rows])
    write_csv(df, out / "enumeration.csv")
    report = {"outcomes": cfg.outcomes, "n": len(data), "rows": [r.to_dict() for r in rows]}
    status = "converged" if all(r.status.startswith("converged") for r in rows) else "incomplete"
    return report, status, EXIT_OK


def _cmd_simulate(cfg: RunConfig, out: Path) -> tuple:
    from .simulation.study import run_study

    rep = run_study(cfg.condition(), cfg.S, cfg.fit_config(), cfg.assignment_mode, cfg.n_workers(),
                    master_seed=cfg.seed, outcomes=tuple(cfg.outcomes))
    write_csv(rep.table(), out / "metrics.csv")
    write_csv(rep.replication_table(), out / "replications.csv")
    report = rep.summary() | {"metrics": rep.table().to_dict(orient="records")}
    return report, "partial" if rep.partial else "complete", EXIT_PARTIAL if rep.partial else EXIT_OK


def _cmd_compare(cfg: RunConfig, out: Path) -> tuple:
    from .simulation.study import compare_joint_vs_univariate

    rep = compare_joint_vs_univariate(cfg.condition(), cfg.S, cfg.fit_config(), cfg.assignment_mode,
                                      cfg.n_workers(), master_seed=cfg.seed)
    write_csv(rep.table(), out / "comparison.csv")
    return rep.summary(), "partial" if rep.partial else "complete", EXIT_PARTIAL if rep.partial else EXIT_OK


def _cmd_generate(cfg: RunConfig, out: Path) -> tuple:
    from .simulation.design import generate_dataset

    cond = cfg.condition()
    ds = generate_dataset(cond, cfg.seed, cfg.assignment_mode)
    export(ds.individuals, out / "data.csv")
    write_csv(pd.DataFrame({"id": [i.id for i in ds.individuals], "class": ds.classes + 1}),
              out / "true_classes.csv")
    report = {"condition": cond.label, "n": ds.n, "seed": cfg.seed, "assignment_mode": cfg.assignment_mode,
              "class_shares": np.bincount(ds.classes, minlength=2) / ds.n,
              "mahalanobis_joint": cond.mahalanobis_joint()}
    return report, "complete", EXIT_OK


def _read_labels(path) -> pd.Series:
    try:
        df = pd.read_csv(path)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read labels {path}: {exc}") from None
    if not {"id", "class"} <= set(df.columns):
        raise InvalidInputError(f"{path}: label file needs 'id' and 'class' columns")
    return df.set_index("id")["class"]


def _cmd_kappa(cfg: RunConfig, out: Path) -> tuple:
    from .simulation.metrics import cohen_kappa

    a, b = (_read_labels(p) for p in cfg.labels)
    common = a.index.intersection(b.index)
    if len(common) != len(a) or len(common) != len(b):
        raise InvalidInputError("label files must cover the same ids")
    a, b = a.loc[common].to_numpy(), b.loc[common].to_numpy()
    kappa, (lo, hi), se = cohen_kappa(a, b)
    report = {"kappa": kappa, "ci_low": lo, "ci_high": hi, "se": se, "n": int(len(a)),
              "n_disagree": int(np.sum(a != b))}
    return report, "complete", EXIT_OK


HANDLERS = {
    "fit": _cmd_fit, "enumerate": _cmd_enumerate, "simulate": _cmd_simulate,
    "generate": _cmd_generate, "compare": _cmd_compare, "kappa": _cmd_kappa,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; artifacts land in ``cfg.output`` only on completion."""
    target = Path(cfg.output).resolve()
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        report, status, code = HANDLERS[cfg.command](cfg, tmp)
        write_json(tmp / "report.json", report)
        write_json(tmp / "status.json", {"command": cfg.command, "status": status, "exit_code": code})
        write_json(tmp / "manifest.json", _manifest(cfg))
    except (InvalidInputError, UndefinedKappaError) as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except (EstimationFailure, NumericalFailure) as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        log.error("estimation failed: %s", exc)
        return EXIT_ESTIMATION
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    tmp.rename(target)
    log.info("%s: %s -> %s", cfg.command, status, target)
    return code


def _add_common(p: argparse.ArgumentParser):
    g = p.add_argument_group("run")
    g.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    g.add_argument("--output", "-o")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int, help="default from $PBLSGMM_WORKERS, else 1")
    g.add_argument("-v", "--verbose", action="store_true")


def _add_fit_options(p):
    g = p.add_argument_group("estimation")
    g.add_argument("--max-restarts", dest="max_restarts", type=int)
    g.add_argument("--gtol", type=float)
    g.add_argument("--ftol", type=float)
    g.add_argument("--fd-step", dest="fd_step", type=float)
    g.add_argument("--hessian-step", dest="hessian_step", type=float)
    g.add_argument("--knot-margin", dest="knot_margin", type=float)
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--no-se", dest="compute_se", action="store_const", const=False)


def _add_condition(p):
    g = p.add_argument_group("simulation condition")
    g.add_argument("--scenario", type=int)
    g.add_argument("--separation", type=float)
    g.add_argument("--beta0", type=float)
    g.add_argument("--resid-var", dest="resid_var", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("-n", "--n", dest="n", type=int)
    g.add_argument("--assignment-mode", dest="assignment_mode", choices=("multinomial", "argmax"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pblsgmm", description="Parallel bilinear-spline growth mixture models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a K-class model to a long-format CSV")
    p.add_argument("data")
    p.add_argument("-K", "--K", dest="K", type=int)
    p.add_argument("--outcomes", nargs="+", choices=("y", "z"))
    p.add_argument("--covariates", nargs="*")
    _add_fit_options(p)
    _add_common(p)

    p = sub.add_parser("enumerate", help="fit K = 1..Kmax without covariates, report AIC/BIC")
    p.add_argument("data")
    p.add_argument("--Kmax", type=int)
    p.add_argument("--outcomes", nargs="+", choices=("y", "z"))
    _add_fit_options(p)
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo study at one design cell")
    p.add_argument("-S", "--S", dest="S", type=int)
    p.add_argument("--outcomes", nargs="+", choices=("y", "z"))
    _add_condition(p)
    _add_fit_options(p)
    _add_common(p)

    p = sub.add_parser("compare", help="joint versus univariate accuracy on paired datasets")
    p.add_argument("-S", "--S", dest="S", type=int)
    _add_condition(p)
    _add_fit_options(p)
    _add_common(p)

    p = sub.add_parser("generate", help="write one simulated dataset")
    _add_condition(p)
    _add_common(p)

    p = sub.add_parser("kappa", help="Cohen's kappa between two class-label files (id,class)")
    p.add_argument("labels", nargs=2)
    _add_common(p)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    d = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "verbose")}
    if args.config:
        return RunConfig.load(args.config, d)
    return RunConfig.from_dict(d)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except InvalidInputError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["COMMANDS", "build_parser", "main", "run"]
