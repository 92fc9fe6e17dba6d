"""Command-line interface.

    bremark simulate --config run.cfg --out data/
    bremark fit      --config run.cfg --histories data/histories.txt --out fit/
    bremark oracle   --config run.cfg --counts data/counts.csv --out oracle/
    bremark study    --config run.cfg --threads 4 --out study/

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 data error,
5 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .basis import MoveError
from .constraints import ConstraintSystem
from .fileio import (
    ConfigError,
    DataError,
    dump_json,
    format_counts,
    format_histories,
    format_samples,
    format_study_rows,
    histories_to_counts,
    parse_config_text,
    parse_counts,
    parse_histories,
)
from .histories import decode, format_history, latent_code_at
from .model import CaptureParams, ErrorParam
from .oracle import (
    FibreSizeError,
    check_connectivity,
    enumerate_fibre,
    exact_conditional_posterior,
    exact_observed_likelihood,
)
from .sampler import ObservedData, SamplerConfig, posterior_summary, run
from .simulate import FitSettings, StudyDesign, corrupt_bre, replication_study, simulate_cjs, study_phi_groups

log = logging.getLogger("bremark")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DATA, EXIT_CAP = 0, 2, 3, 4, 5


# ---------------------------------------------------------------------------
# config schema


def _int(v):
    return int(v)


def _float(v):
    return float(Fraction(v))


def _prob(v):
    f = _float(v)
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"{v} is not a probability")
    return f


def _bool(v):
    s = v.lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


def _list(conv):
    def parse(v):
        return [conv(s.strip()) for s in v.split(",") if s.strip()]
    return parse


def _str(v):
    return v


SCHEMA = {
    "seed": (_int, 0),
    "study.T": (_int, 4),
    "study.releases": (_list(_int), [10, 10, 10]),
    "study.phi": (_list(_prob), [0.8]),
    "study.p": (_list(_prob), [0.5]),
    "study.alpha": (_prob, 1.0),
    "study.alphas": (_list(_prob), [8 / 9, 6 / 9]),
    "study.replicates": (_int, 20),
    "data.histories": (_str, ""),
    "data.counts": (_str, ""),
    "data.T": (_int, 0),
    "model.alpha": (_prob, 1.0),
    "model.estimate_alpha": (_bool, False),
    "model.alpha_prior": (_list(_float), [19.0, 1.0]),
    "model.phi": (_list(_prob), None),
    "model.p": (_list(_prob), None),
    "model.phi_groups": (_list(_int), None),
    "model.p_groups": (_list(_int), None),
    "sampler.algorithm": (_str, "dynamic"),
    "sampler.iterations": (_int, 10_000),
    "sampler.burnin": (_int, 1_000),
    "sampler.thin": (_int, 1),
    "sampler.x_steps": (_int, 1),
    "sampler.update_x": (_bool, True),
    "sampler.update_theta": (_bool, True),
    "sampler.step_size": (_float, 0.5),
    "sampler.adapt": (_bool, True),
    "sampler.chunk": (_int, 2_000),
    "sampler.backend": (_str, ""),
    "oracle.size_cap": (_int, 100_000),
}


def load_config(text: str = "", overrides=()) -> dict:
    """Typed config with defaults; unknown keys and bad values raise ConfigError."""
    raw = parse_config_text(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = {k: default for k, (_, default) in SCHEMA.items()}
    for k, v in raw.items():
        conv = SCHEMA[k][0]
        try:
            cfg[k] = conv(v)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{k}: {exc}") from None
    if cfg["sampler.backend"] not in ("", "python", "cython"):
        raise ConfigError("sampler.backend must be python or cython")
    if len(cfg["model.alpha_prior"]) != 2 or min(cfg["model.alpha_prior"]) <= 0:
        raise ConfigError("model.alpha_prior needs two positive numbers")
    return cfg


def _design(cfg, alphas=None) -> StudyDesign:
    T = cfg["study.T"]
    try:
        return StudyDesign(
            T=T,
            releases=cfg["study.releases"],
            phi=_per_occasion(cfg["study.phi"], T, "study.phi"),
            p=_per_occasion(cfg["study.p"], T, "study.p"),
            alphas=alphas if alphas is not None else cfg["study.alphas"],
            replicates=cfg["study.replicates"],
            seed=cfg["seed"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _per_occasion(values, T, key):
    if values is None:
        return None
    if len(values) == 1:
        return values * (T - 1)
    if len(values) != T - 1:
        raise ConfigError(f"{key} needs 1 or {T - 1} values, got {len(values)}")
    return list(values)


def _sampler_config(cfg, T) -> SamplerConfig:
    try:
        return SamplerConfig(
            algorithm=cfg["sampler.algorithm"],
            iterations=cfg["sampler.iterations"],
            burnin=cfg["sampler.burnin"],
            thin=cfg["sampler.thin"],
            seed=cfg["seed"],
            x_steps=cfg["sampler.x_steps"],
            update_x=cfg["sampler.update_x"],
            update_theta=cfg["sampler.update_theta"],
            phi_groups=cfg["model.phi_groups"],
            p_groups=cfg["model.p_groups"],
            init_phi=_per_occasion(cfg["model.phi"], T, "model.phi"),
            init_p=_per_occasion(cfg["model.p"], T, "model.p"),
            alpha=cfg["model.alpha"],
            estimate_alpha=cfg["model.estimate_alpha"],
            alpha_prior=tuple(cfg["model.alpha_prior"]),
            step_size=cfg["sampler.step_size"],
            adapt=cfg["sampler.adapt"],
            chunk=cfg["sampler.chunk"],
            backend=cfg["sampler.backend"] or None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# I/O helpers


def _read(path) -> str:
    return Path(path).read_text()


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_data(cfg, args) -> ObservedData:
    hist = args.histories or cfg["data.histories"]
    counts = args.counts or cfg["data.counts"]
    T = cfg["data.T"] or None
    if hist and counts:
        raise ConfigError("give either a history file or a counts file, not both")
    if hist:
        histories, T, dropped = parse_histories(_read(hist), T)
        if dropped:
            log.info("dropped %d individuals first recorded on the final occasion", dropped)
        return ObservedData(T, histories_to_counts(histories, T))
    if counts:
        n, T = parse_counts(_read(counts), T)
        return ObservedData(T, n)
    raise ConfigError("no data: pass --histories or --counts (or set data.histories / data.counts)")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, args) -> int:
    design = _design(cfg, alphas=[cfg["study.alpha"]])
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    truth = simulate_cjs(design.releases, design.theta1, rng)
    corrupted = corrupt_bre(truth, cfg["study.alpha"], rng)
    observed = [tuple(int(v) for v in row) for row in corrupted.observed]
    out = Path(args.out)
    header = f"# T={design.T} seed={cfg['seed']} alpha={cfg['study.alpha']!r}\n"
    _write(out / "histories.txt", header + format_histories(observed))
    _write(out / "counts.csv", format_counts(histories_to_counts(observed, design.T), design.T))
    latent = "".join("".join(str(int(v)) for v in row) + "\n" for row in corrupted.latent)
    _write(out / "latent.txt", header + latent)
    log.info("simulated %d individuals, %d misreads", len(observed), int(corrupted.errors.sum()))
    return EXIT_OK


def cmd_fit(cfg, args) -> int:
    data = _load_data(cfg, args)
    config = _sampler_config(cfg, data.T)
    result = run(data, config)
    out = Path(args.out)
    _write(out / "samples.csv", format_samples(result))
    d = result.diagnostics
    summary = {
        "posterior": posterior_summary(result),
        "errors": posterior_summary(result.errors[:, None], ["errors"])["errors"],
        "diagnostics": {
            "x_acceptance": d.x_acceptance,
            "x_acceptance_all": d.x_acceptance_all,
            "x_proposed": d.x_proposed,
            "x_accepted": d.x_accepted,
            "x_empty": d.x_empty,
            "distinct_x": d.distinct_x,
            "distinct_x_all": d.distinct_x_all,
            "retained_x_steps": d.retained_x_steps,
            "theta_acceptance": d.theta_acceptance,
            "ess": d.ess,
        },
        "individuals": data.individuals,
        "T": data.T,
        "seed": cfg["seed"],
        "config": cfg,
    }
    _write(out / "summary.json", dump_json(summary))
    log.info("x acceptance %.3f, %d distinct configurations", d.x_acceptance, d.distinct_x)
    return EXIT_OK


def cmd_oracle(cfg, args) -> int:
    data = _load_data(cfg, args)
    T = data.T
    if cfg["model.phi"] is None or cfg["model.p"] is None:
        raise ConfigError("the oracle needs model.phi and model.p")
    theta1 = CaptureParams(_per_occasion(cfg["model.phi"], T, "model.phi"),
                           _per_occasion(cfg["model.p"], T, "model.p"))
    theta2 = ErrorParam(cfg["model.alpha"])
    uni = data.universe
    sys_ = ConstraintSystem(uni)
    fibre = enumerate_fibre(data.n, uni, sys_, size_cap=cfg["oracle.size_cap"])
    connected, witness = check_connectivity(fibre, uni)
    loglik = exact_observed_likelihood(data.n, theta1, theta2, fibre, log=True)
    try:
        post = exact_conditional_posterior(fibre, theta1, theta2, sys_)
    except ValueError:
        post = np.zeros(len(fibre))
    elements = []
    for x, pr in zip(fibre.elements, post):
        hist = {format_history(decode(latent_code_at(j, T), T, 4)): c for j, c in sorted(x.items())}
        errors = sum(c * format_history(decode(latent_code_at(j, T), T, 4)).count("2") for j, c in x.items())
        elements.append({"x": hist, "errors": errors, "probability": float(pr)})
    report = {
        "T": T,
        "fibre_size": len(fibre),
        "connected": connected,
        "witness": witness,
        "log_likelihood": loglik,
        "likelihood": float(np.exp(loglik)),
        "theta": {"phi": theta1.phi, "p": theta1.p, "alpha": theta2.alpha},
        "posterior": elements,
    }
    _write(Path(args.out) / "oracle.json", dump_json(report))
    log.info("fibre size %d, connected=%s", len(fibre), connected)
    return EXIT_OK


def cmd_study(cfg, args) -> int:
    design = _design(cfg)
    sc = _sampler_config(cfg, design.T)
    settings = FitSettings(
        iterations=sc.iterations,
        burnin=sc.burnin,
        thin=sc.thin,
        x_steps=sc.x_steps,
        phi_groups=sc.phi_groups if sc.phi_groups is not None else study_phi_groups(design.T),
        p_groups=sc.p_groups,
        estimate_alpha=sc.estimate_alpha,
        alpha_prior=sc.alpha_prior,
        backend=sc.backend,
    )
    workers = max(1, args.threads or 1)
    report = replication_study(design, settings, workers=workers)
    out = Path(args.out)
    _write(out / "study.csv", format_study_rows(report.rows))
    _write(out / "study.json", dump_json({
        "rows": report.rows,
        "failures": report.failures,
        "replicates": report.replicates,
        "design": report.design,
        "settings": vars(settings),
    }))
    ok = design.replicates - len(report.failures)
    if ok < 0.9 * design.replicates:
        log.error("only %d of %d replicates succeeded", ok, design.replicates)
        return EXIT_DATA
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "oracle": cmd_oracle, "study": cmd_study}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bremark", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="maximum worker processes")
        p.add_argument("--out", default=".", help="output directory")
        if name in ("fit", "oracle"):
            p.add_argument("--histories", help="history file")
            p.add_argument("--counts", help="counts CSV")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        text = _read(args.config) if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = load_config(text, args.set)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FibreSizeError, MoveError, MemoryError) as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
