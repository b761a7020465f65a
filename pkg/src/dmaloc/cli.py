"""Command-line entry points.

Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
failures (singular noise covariance, unidentifiable Fisher matrix, or an
infeasible search).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .beamopt import design_beamformer, objective_matrix
from .channel import channel_derivatives, propagation_matrix
from .exceptions import (
    ConfigError,
    DmalocError,
    InfeasibleSearchError,
    SingularCovarianceError,
    UnidentifiableConfigurationError,
)
from .config import load_scenario
from .fim import fim_matrix, peb as guarded_peb
from .harness import emit, run_fig2, run_fig3, run_fig4

log = logging.getLogger("dmaloc")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML or JSON scenario file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config value by dotted path (repeatable)",
    )
    parser.add_argument("--out", default=None, help="output directory or file")
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--scale", choices=["full", "desk"], default="desk")
    parser.add_argument("--solver", default=None, help="solver name (comma list for figures)")
    parser.add_argument("--threads", type=int, default=None)


def _scenario(args, restrict_solvers: bool = False):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"master_seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    if args.solver:
        names = [s.strip() for s in args.solver.split(",") if s.strip()]
        overrides.append(f"solver.name={names[0]}")
        if restrict_solvers:
            overrides.append("solvers=[" + ",".join(names) + "]")
    return load_scenario(args.config, args.scale, overrides)


def _run_figure(args, runner, default_out: str) -> int:
    cfg = _scenario(args, restrict_solvers=True)
    result = runner(cfg)
    written = emit(result, format=args.format, path=args.out or default_out)
    for notice in result.notices:
        log.warning(notice)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_fig2(args) -> int:
    return _run_figure(args, run_fig2, "results/fig2")


def _cmd_fig3(args) -> int:
    return _run_figure(args, run_fig3, "results/fig3")


def _cmd_fig4(args) -> int:
    return _run_figure(args, run_fig4, "results/fig4")


def _design_solution(cfg):
    prop = propagation_matrix(cfg.geom)
    channels = [channel_derivatives(cfg.radio, cfg.geom, ue) for ue in cfg.ues]
    cb = cfg.build_codebook()
    q = objective_matrix(channels, prop, noise_power=cfg.radio.noise_power)
    sol = design_beamformer(
        cfg.solver.name, q, cb, channels, prop,
        seed=cfg.solver.seed, distinct=cfg.solver.distinct, cap=cfg.solver.cap,
    )
    return prop, channels, sol


def _cmd_peb(args) -> int:
    cfg = _scenario(args)
    prop, channels, sol = _design_solution(cfg)
    fimres = fim_matrix(
        channels, sol.beamformer, prop, cfg.pilot_block(), cfg.radio.noise_power,
        cfg.conjugate_model,
    )
    doc = {
        "solver": sol.solver,
        "objective": sol.objective,
        "peb": guarded_peb(fimres),
        "crb": fimres.crb,
        "trace_bound": fimres.trace_bound,
        "condition": fimres.condition,
        "per_param_crb": dict(zip(fimres.param_labels(), fimres.per_param_crb().tolist())),
    }
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_design(args) -> int:
    cfg = _scenario(args)
    _, _, sol = _design_solution(cfg)
    doc = {
        "solver": sol.solver,
        "objective": sol.objective,
        "per_strip_quotients": sol.per_strip_quotients.tolist(),
        "codeword_indices": None
        if sol.codeword_indices is None
        else sol.codeword_indices.tolist(),
        "weights": [
            [[float(w.real), float(w.imag)] for w in strip] for strip in sol.beamformer.weights
        ],
    }
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_codebook(args) -> int:
    cfg = _scenario(args)
    cb = cfg.build_codebook()
    out = args.out or "codebook.json"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(cb.to_json())
    print(f"wrote {out} ({len(cb)} codewords, bits={cb.bits})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmaloc",
        description="Near-field localization simulator for metasurface receive panels",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("fig2", _cmd_fig2, "localization error and bounds versus transmit power"),
        ("fig3", _cmd_fig3, "error bound versus panel diagonal, metasurface vs phase shifters"),
        ("fig4", _cmd_fig4, "area-wide estimation error maps"),
        ("peb", _cmd_peb, "design a beamformer and report its position error bound"),
        ("design", _cmd_design, "run one solver and dump the weights"),
        ("codebook", _cmd_codebook, "build and export the beam codebook"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (
        SingularCovarianceError,
        UnidentifiableConfigurationError,
        InfeasibleSearchError,
        np.linalg.LinAlgError,
    ) as exc:
        log.error("numerical failure: %s", exc)
        return 3
    except DmalocError as exc:
        log.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
