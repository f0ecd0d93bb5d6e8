"""Command-line interface: ``rankgas {fit,simulate,study,predict}``.

Exit codes: 0 success, 1 usage or config error, 2 data validation error,
3 numerical failure (divergence or non-convergence).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .estimation import EstimationError, FitResult, fit, parameter_table
from .gas_filter import (
    MEAN_REVERTING,
    RANDOM_WALK,
    STATIC,
    FilterDivergence,
    ModelSpec,
    ParameterVector,
    filter_path,
)
from .io import (
    ConfigError,
    DataError,
    RunConfig,
    fmt,
    load_dataset,
    read_rows,
    sorted_items,
    write_dataset,
    write_rows,
    write_worth_paths,
)
from .prediction import (
    RankingEvent,
    event_probability,
    predict_worth,
    predicted_ranking,
    winner_probabilities,
)
from .simulation import SimulationDesign, replication_study, simulate_panel

log = logging.getLogger("rankgas")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(cfg: RunConfig):
    if not cfg.rankings:
        raise ConfigError("no rankings file given (--rankings or 'rankings' key)")
    return load_dataset(cfg.rankings, cfg.covariates, cfg.covariate_names,
                        cfg.sparse_covariates, cfg.absent_mode)


def _parameter_rows(res: FitResult, level: float):
    data = res.data
    rows = parameter_table(res, level)
    n = res.spec.universe_size
    named = []
    for k, row in enumerate(rows):
        if k < n:
            name = f"omega[{data.item_labels[k]}]"
        else:
            name = row["parameter"]
            if name.startswith("beta_"):
                name = f"beta[{data.covariate_names[int(name[5:]) - 1]}]"
        named.append({**row, "parameter": name})
    omegas = sorted(named[:n], key=lambda r: r["parameter"])
    return omegas + named[n:]


def _write_fit(res: FitResult, out: Path, level: float, suffix: str = "") -> None:
    rows = _parameter_rows(res, level)
    cols = ("parameter", "estimate", "std_error", "z", "p_value", "ci_lower", "ci_upper")
    write_rows(out / f"parameters{suffix}.csv", cols,
               [[r["parameter"]] + [fmt(r[c]) for c in cols[1:]] for r in rows])
    write_rows(out / f"summary{suffix}.csv",
               ("variant", "loglik", "aic", "n_params", "converged", "iterations"),
               [[res.spec.variant, fmt(res.loglik), fmt(res.aic), res.n_params,
                 int(res.converged), res.iterations]])
    write_worth_paths(out / f"worth_paths{suffix}.csv", res.data, res.filter.worth_path)
    payload = {
        "spec": {
            "universe_size": res.spec.universe_size,
            "covariate_count": res.spec.covariate_count,
            "score_order": res.spec.score_order,
            "ar_order": res.spec.ar_order,
            "variant": res.spec.variant,
            "absent_mode": res.spec.absent_mode,
            "rw_init": res.spec.rw_init,
        },
        "item_labels": list(res.data.item_labels),
        "covariate_names": list(res.data.covariate_names),
        "omega": res.params.omega.tolist(),
        "beta": res.params.beta.tolist(),
        "alpha": res.params.alpha.tolist(),
        "phi": res.params.phi.tolist(),
        "loglik": res.loglik,
        "aic": res.aic,
        "converged": res.converged,
    }
    (out / f"fit{suffix}.json").write_text(json.dumps(payload, indent=2) + "\n",
                                           encoding="utf-8")


def cmd_fit(cfg: RunConfig) -> int:
    data = _load(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = (MEAN_REVERTING, STATIC, RANDOM_WALK) if cfg.variant == "all" else (cfg.variant,)
    results = []
    for variant in variants:
        spec = cfg.spec(data.universe_size, data.covariate_count, variant)
        res = fit(data, spec, cfg.optimizer())
        suffix = f"_{variant}" if len(variants) > 1 else ""
        _write_fit(res, out, cfg.level, suffix)
        results.append(res)
        print(f"{variant}: loglik={res.loglik:.3f} aic={res.aic:.3f} "
              f"converged={res.converged}")
    if len(results) > 1:
        best = min(results, key=lambda r: r.aic)
        write_rows(out / "aic_comparison.csv",
                   ("variant", "loglik", "n_params", "aic", "lowest_aic"),
                   [[r.spec.variant, fmt(r.loglik), r.n_params, fmt(r.aic), int(r is best)]
                    for r in results])
    return EXIT_OK if all(r.converged for r in results) else EXIT_NUMERIC


def cmd_simulate(cfg: RunConfig) -> int:
    n, m = cfg.n_items, cfg.covariate_count
    variant = MEAN_REVERTING if cfg.variant == "all" else cfg.variant
    spec = cfg.spec(n, m, variant)
    omega = 4.0 * np.arange(n) / max(n - 1, 1) - 2.0
    omega -= omega.mean()
    alpha = [cfg.alpha] * spec.score_order
    phi = [1.0] if variant == RANDOM_WALK else [cfg.phi] * spec.ar_order
    params = ParameterVector(omega, [cfg.beta] * m, alpha, phi)
    width = len(str(n))
    labels = [f"item{i + 1:0{width}d}" for i in range(n)]
    rng = np.random.default_rng(cfg.seed)
    data, latent = simulate_panel(params, spec, cfg.n_periods, rng, top=cfg.top,
                                  item_labels=labels)
    paths = write_dataset(data, cfg.out, latent=latent)
    for path in paths.values():
        print(path)
    return EXIT_OK


def cmd_study(cfg: RunConfig) -> int:
    design = SimulationDesign(tuple(cfg.item_counts), tuple(cfg.horizons), cfg.replications,
                              cfg.beta, cfg.alpha, cfg.phi, cfg.seed, cfg.level)
    report = replication_study(design, cfg.optimizer(), n_jobs=cfg.n_jobs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "study.csv")
    print(out / "study.csv")
    return EXIT_OK


def _fit_for_prediction(cfg: RunConfig, data) -> FitResult:
    if not cfg.fit_file:
        spec = cfg.spec(data.universe_size, data.covariate_count,
                        MEAN_REVERTING if cfg.variant == "all" else None)
        return fit(data, spec, cfg.optimizer())
    try:
        saved = json.loads(Path(cfg.fit_file).read_text(encoding="utf-8"))
        spec = ModelSpec(**saved["spec"])
        params = ParameterVector(saved["omega"], saved["beta"], saved["alpha"], saved["phi"])
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read fit file {cfg.fit_file}: {exc}") from exc
    if list(data.item_labels) != saved.get("item_labels"):
        raise DataError("fit file items do not match the dataset")
    filt = filter_path(params, spec, data)
    return FitResult(spec, params, params.to_free(spec), filt.total_loglik,
                     2.0 * spec.n_free - 2.0 * filt.total_loglik, filt, True, 0, data)


def _next_covariates(cfg: RunConfig, data) -> np.ndarray:
    x = np.zeros((data.universe_size, data.covariate_count))
    if not cfg.next_covariates:
        return x
    index = {lab: i for i, lab in enumerate(data.item_labels)}
    names = {name: j for j, name in enumerate(data.covariate_names)}
    for line, row in read_rows(cfg.next_covariates, ("item", "covariate", "value")):
        where = f"{cfg.next_covariates}:{line}"
        if row["item"] not in index:
            raise DataError(f"{where}: unknown item {row['item']!r}")
        if row["covariate"] not in names:
            raise DataError(f"{where}: unknown covariate {row['covariate']!r}")
        try:
            x[index[row["item"]], names[row["covariate"]]] = float(row["value"])
        except ValueError:
            raise DataError(f"{where}: value {row['value']!r} is not a number")
    return x


def parse_event(text: str, index: dict[str, int], participants) -> RankingEvent:
    """Parse ``top:ITEM:K``, ``rank:ITEM:R`` or ``order:ITEM1,ITEM2,...``."""
    kind, _, rest = text.partition(":")

    def item(label):
        if label not in index:
            raise ConfigError(f"event {text!r}: unknown item {label!r}")
        return index[label]

    try:
        if kind == "order":
            return RankingEvent.ordering([item(x) for x in rest.split(",")], participants)
        if kind in ("top", "rank"):
            label, _, k = rest.rpartition(":")
            maker = RankingEvent.in_top if kind == "top" else RankingEvent.at_rank
            return maker(item(label), int(k), participants)
    except ValueError as exc:
        raise ConfigError(f"event {text!r}: {exc}") from exc
    raise ConfigError(f"event {text!r}: expected top:ITEM:K, rank:ITEM:R or order:A,B,...")


def cmd_predict(cfg: RunConfig) -> int:
    data = _load(cfg)
    res = _fit_for_prediction(cfg, data)
    f = predict_worth(res, _next_covariates(cfg, data))
    index = {lab: i for i, lab in enumerate(data.item_labels)}
    if cfg.participants:
        missing = [p for p in cfg.participants if p not in index]
        if missing:
            raise ConfigError(f"unknown participants {missing}")
        parts = [index[p] for p in cfg.participants]
    else:
        parts = list(range(data.universe_size))
    order = predicted_ranking(f, parts)
    rank_of = {i: r + 1 for r, i in enumerate(order)}
    win = winner_probabilities(f, parts)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [[data.item_labels[i], f"{f[i]:.6f}", rank_of[i], f"{win[i]:.6f}"]
            for i in sorted_items(data) if i in rank_of]
    write_rows(out / "prediction.csv", ("item", "worth", "predicted_rank", "p_win"), rows)
    event_rows = []
    rng = np.random.default_rng(cfg.seed)
    for text in cfg.events:
        event = parse_event(text, index, parts)
        prob = event_probability(f, event, rng=rng)
        event_rows.append([text, f"{prob.probability:.6f}", f"{prob.std_error:.6f}",
                           prob.method])
        print(f"P[{text}] = {prob.probability:.6f}")
    write_rows(out / "events.csv", ("event", "probability", "std_error", "method"), event_rows)
    for i in order:
        print(f"{rank_of[i]:>3} {data.item_labels[i]:<20} {f[i]:.6f}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "study": cmd_study,
            "predict": cmd_predict}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rankgas", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with flat run settings")
        p.add_argument("--rankings", help="long-format rankings CSV (time,item,rank)")
        p.add_argument("--covariates", help="long-format covariates CSV")
        p.add_argument("--variant", choices=[STATIC, MEAN_REVERTING, RANDOM_WALK, "all"])
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (VALUE parsed as JSON when possible)")
        if name == "predict":
            p.add_argument("--participants", help="comma-separated item labels")
            p.add_argument("--event", action="append", default=[],
                           help="top:ITEM:K, rank:ITEM:R or order:ITEM1,ITEM2,...")
            p.add_argument("--next-covariates", help="CSV item,covariate,value for T+1")
            p.add_argument("--fit", dest="fit_file", help="fit.json written by 'fit'")
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key] = value
    for key in ("rankings", "covariates", "variant", "seed", "out"):
        overrides[key] = getattr(args, key)
    if args.command == "predict":
        if args.participants:
            overrides["participants"] = [p.strip() for p in args.participants.split(",")]
        if args.event:
            overrides["events"] = args.event
        overrides["next_covariates"] = args.next_covariates
        overrides["fit_file"] = args.fit_file
    return cfg.updated(overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, FilterDivergence, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
