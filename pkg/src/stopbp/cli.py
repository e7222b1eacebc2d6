"""Command-line front end: model ingestion, experiments, CSV reports.

Subcommand style; every run is deterministic given its flags and seed.
Exit codes: 0 success, 1 mathematical check failure, 2 usage or input
failure.  Set BP_LOG=debug|info|warning for verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from stopbp import asymptotics, exact_engine, genfun, montecarlo, spectral
from stopbp.builtin_models import builtin
from stopbp.model import (
    BranchingModel,
    ModelFormatError,
    ModelValidationError,
    PopulationState,
    StoppingSet,
    load_model,
    load_stopping_set,
    parse_state,
    validate_model,
)

log = logging.getLogger("stopbp")

EXIT_OK = 0
EXIT_MATH = 1
EXIT_USAGE = 2

_CONFIG_KEYS = {
    "model", "stop_set", "cap", "t", "tol", "seed", "reps", "workers", "out",
    "n", "r", "j", "a", "n_grid", "what", "k_ref",
}

_DEFAULTS = {
    "cap": 200,
    "t": 30,
    "tol": 1e-9,
    "seed": 0,
    "reps": 100_000,
    "workers": 1,
}


class UsageError(ValueError):
    """Input or configuration problem; maps to exit code 2."""


@dataclass
class RunConfig:
    """Fully merged run options: flags > config file > defaults."""

    command: str
    model: Optional[str] = None
    stop_set: Optional[str] = None
    cap: int = _DEFAULTS["cap"]
    t: int = _DEFAULTS["t"]
    tol: float = _DEFAULTS["tol"]
    seed: int = _DEFAULTS["seed"]
    reps: int = _DEFAULTS["reps"]
    workers: int = _DEFAULTS["workers"]
    out: Optional[str] = None
    n: Optional[str] = None
    r: Optional[str] = None
    j: int = 1
    a: Optional[str] = None
    n_grid: Optional[str] = None
    what: str = "absorption"
    k_ref: int = 1
    inject_fault: bool = False

    def validate(self):
        for name in ("cap", "t", "reps", "workers"):
            if getattr(self, name) < 0 or (name in ("reps", "workers") and getattr(self, name) == 0):
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.tol <= 0:
            raise UsageError("--tol must be positive")


def _merge_config(args: argparse.Namespace) -> RunConfig:
    file_values = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file: line {exc.lineno}: {exc.msg}")
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise UsageError(f"config file has unknown fields {sorted(unknown)}")
        file_values = raw
    cfg = RunConfig(command=args.command)
    for key in _CONFIG_KEYS | {"inject_fault"}:
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, flag)
        elif key in file_values:
            setattr(cfg, key, file_values[key])
    cfg.validate()
    return cfg


def _load(cfg: RunConfig) -> tuple[BranchingModel, Optional[StoppingSet]]:
    if cfg.model is None:
        raise UsageError("--model is required for this command")
    try:
        with open(cfg.model) as fh:
            model, stopping = load_model(fh.read())
    except FileNotFoundError:
        raise UsageError(f"model file not found: {cfg.model}")
    if cfg.stop_set is not None:
        try:
            with open(cfg.stop_set) as fh:
                stopping = load_stopping_set(fh.read(), model.k)
        except FileNotFoundError:
            raise UsageError(f"stop-set file not found: {cfg.stop_set}")
    return model, stopping


def _need_stopping(stopping: Optional[StoppingSet]) -> StoppingSet:
    if stopping is None:
        raise UsageError("no stopping set: give one in the model file or via --stop-set")
    return stopping


def _out_stream(cfg: RunConfig):
    if cfg.out is None:
        return sys.stdout, False
    return open(cfg.out, "w"), True


def _write(cfg: RunConfig, writer):
    fh, close = _out_stream(cfg)
    try:
        writer(fh)
    finally:
        if close:
            fh.close()


def _parse_state_arg(text: Optional[str], what: str) -> PopulationState:
    if text is None:
        raise UsageError(f"--{what} is required for this command")
    try:
        return parse_state(text)
    except (ModelFormatError, ModelValidationError) as exc:
        raise UsageError(f"--{what}: {exc}")


def _parse_direction(text: Optional[str], k: int) -> np.ndarray:
    if text is None:
        return np.full(k, 1.0 / k)
    try:
        a = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise UsageError(f"--a: expected comma-separated numbers, got {text!r}")
    if len(a) != k:
        raise UsageError(f"--a has {len(a)} entries for {k} types")
    if np.any(a < 0) or a.sum() <= 0:
        raise UsageError("--a must be nonnegative with positive sum")
    return a / a.sum()


def _parse_grid(text: Optional[str]) -> list[int]:
    """Geometric grid syntax lo:hi:count, or a comma list of totals."""
    if text is None:
        raise UsageError("--n-grid is required (lo:hi:count or comma list)")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError("--n-grid expects lo:hi:count")
        try:
            lo, hi, count = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise UsageError("--n-grid expects integers lo:hi:count")
        if not (0 < lo <= hi and count >= 1):
            raise UsageError("--n-grid needs 0 < lo <= hi and count >= 1")
        grid = np.unique(np.round(np.geomspace(lo, hi, count)).astype(int))
        return [int(x) for x in grid]
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--n-grid: expected integers, got {text!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_classify(cfg: RunConfig) -> int:
    model, stopping = _load(cfg)
    report = validate_model(model, stopping)
    if not report.ok:
        for failure in report.failures():
            log.error("validation: %s (%s)", failure.name, failure.detail)
        return EXIT_USAGE
    classification = spectral.classify(spectral.moments(model))
    doc = {
        "indecomposable": classification.indecomposable,
        "period": classification.period,
        "criticality": classification.criticality,
        "delta": classification.delta,
    }
    ok = (
        classification.indecomposable
        and classification.period == 1
        and classification.criticality == "subcritical"
    )
    if classification.indecomposable and classification.period == 1:
        summary = spectral.perron_triple(spectral.moments(model))
        doc.update(summary.report())
    _write(cfg, lambda fh: fh.write(json.dumps(doc, indent=2) + "\n"))
    return EXIT_OK if ok else EXIT_MATH


def cmd_stop_prob(cfg: RunConfig) -> int:
    model, stopping = _load(cfg)
    stopping = _need_stopping(stopping)
    n = _parse_state_arg(cfg.n, "n")
    r = _parse_state_arg(cfg.r, "r")
    space = exact_engine.enumerate_states(model.k, cfg.cap)
    kernel = exact_engine.one_step_kernel(model, space)
    try:
        table = exact_engine.absorption_table(
            kernel, stopping, [n], r, t_list=[cfg.t]
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    by_method = {row.method: row.q for row in table.rows}
    dev_df = abs(by_method["direct"] - by_method["formula"])
    dev_dr = abs(by_method["direct"] - by_method["restricted"])
    table.add(n, r, cfg.t, "deviation_direct_formula", dev_df)
    table.add(n, r, cfg.t, "deviation_direct_restricted", dev_dr)
    _write(cfg, table.write_csv)
    if dev_df > cfg.tol or dev_dr > cfg.tol:
        log.error("routes disagree: |d-f|=%.3g |d-r|=%.3g > tol=%g", dev_df, dev_dr, cfg.tol)
        return EXIT_MATH
    return EXIT_OK


def cmd_series(cfg: RunConfig) -> int:
    model, stopping = _load(cfg)
    stopping = _need_stopping(stopping)
    n = _parse_state_arg(cfg.n, "n")
    r = _parse_state_arg(cfg.r, "r")
    summary = spectral.perron_triple(spectral.moments(model))
    if not summary.delta < 1.0:
        log.error("series needs a subcritical model; delta = %.6g", summary.delta)
        return EXIT_MATH
    space = exact_engine.enumerate_states(model.k, cfg.cap)
    kernel = exact_engine.one_step_kernel(model, space)
    # deep first-passage horizon keeps the coefficient-truncation share of
    # the reported bound far below tol
    horizon = max(
        20, int(math.ceil(math.log(cfg.tol / 100.0) / math.log(summary.delta)))
    )
    restricted = exact_engine.restricted_kernel(kernel, stopping, horizon)
    try:
        result = exact_engine.limiting_absorption(
            kernel, restricted, summary, n, r, tol=cfg.tol
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    table = exact_engine.AbsorptionTable()
    table.add(n, r, None, "series", result.value, result.overflow_mass)
    table.add(n, r, None, "series_tail_bound", result.tail_bound, result.overflow_mass)
    _write(cfg, table.write_csv)
    return EXIT_OK


def cmd_yaglom(cfg: RunConfig) -> int:
    model, stopping = _load(cfg)
    if not 1 <= cfg.j <= model.k:
        raise UsageError(f"--j {cfg.j} out of range 1..{model.k}")
    summary = spectral.perron_triple(spectral.moments(model))
    if not summary.delta < 1.0:
        log.error("conditional limit needs a subcritical model")
        return EXIT_MATH
    space = exact_engine.enumerate_states(model.k, cfg.cap)
    data = genfun.yaglom(model, space, cfg.j, cfg.t)
    residual = genfun.yaglom_residual(
        model, data, summary, genfun.make_s_grid(model.k, 50)
    )

    def write(fh):
        fh.write("state,p\n")
        for ordinal in np.nonzero(data.p)[0]:
            fh.write(f'"{space.state(ordinal).label()}",{data.p[ordinal]:.17g}\n')

    _write(cfg, write)
    log.info(
        "deficit=%.3g residual=%.3g boundary(0)=%.3g boundary(1)=%.6g snapshot=%.3g",
        data.deficit, residual.max_residual, residual.boundary_at_zero,
        residual.boundary_at_one, data.snapshot_distance,
    )
    if genfun.single_offspring_reachable(model):
        from stopbp.model import unit_state

        worst = min(data.probability(unit_state(i, model.k)) for i in range(1, model.k + 1))
        if not worst > 0.0:
            log.error("conditional law fails to charge some single-particle state")
            return EXIT_MATH
    mean = data.mean_vector()
    if not mean.sum() > 0.0:
        log.error("conditional law has nonpositive mean")
        return EXIT_MATH
    return EXIT_OK


def cmd_probe(cfg: RunConfig) -> int:
    model, stopping = _load(cfg)
    stopping = _need_stopping(stopping)
    r = _parse_state_arg(cfg.r, "r")
    a = _parse_direction(cfg.a, model.k)
    grid = _parse_grid(cfg.n_grid)
    try:
        report = asymptotics.periodicity_probe(
            model, stopping, r, a, grid, cap=cfg.cap, tol=cfg.tol
        )
    except exact_engine.CapacityError as exc:
        log.error("%s", exc)
        return EXIT_MATH
    _write(cfg, report.write_csv)
    log.info("theta=%.6g over %d rows", report.theta, len(report.rows))
    if not report.theta > 0.0:
        return EXIT_MATH
    return EXIT_OK


def cmd_estimate(cfg: RunConfig) -> int:
    model, stopping = _load(cfg)

    def write_rows(fh, rows):
        fh.write("quantity,value,stderr,reps,seed\n")
        for name, value, err in rows:
            fh.write(f"{name},{value:.17g},{err:.17g},{cfg.reps},{cfg.seed}\n")

    if cfg.what == "absorption":
        stopping = _need_stopping(stopping)
        n = _parse_state_arg(cfg.n, "n")
        r = _parse_state_arg(cfg.r, "r")
        try:
            est = montecarlo.estimate_absorption(
                n, r, stopping, model, cfg.t, cfg.reps, cfg.seed, workers=cfg.workers
            )
        except ValueError as exc:
            raise UsageError(str(exc))
        _write(cfg, lambda fh: write_rows(fh, [("absorption", est.value, est.stderr)]))
        return EXIT_OK
    if cfg.what == "yaglom":
        if not 1 <= cfg.j <= model.k:
            raise UsageError(f"--j {cfg.j} out of range 1..{model.k}")
        est = montecarlo.estimate_yaglom(
            cfg.j, model, cfg.t, cfg.reps, cfg.seed, workers=cfg.workers
        )
        rows = [
            ("conditioning_frequency", est.conditioning_frequency, est.conditioning_stderr)
        ]
        for counts, share in sorted(est.distribution().items()):
            err = math.sqrt(share * (1.0 - share) / max(est.survivors, 1))
            rows.append((f"p{PopulationState(counts).label()}", share, err))
        _write(cfg, lambda fh: write_rows(fh, rows))
        return EXIT_OK
    raise UsageError(f"--what must be absorption or yaglom, got {cfg.what!r}")


def _verify_checks(model: BranchingModel, stopping: StoppingSet, cfg: RunConfig):
    """Yield (name, callable) pairs; callables return (ok, detail)."""
    cap = min(cfg.cap, 30) if model.k > 1 else min(cfg.cap, 200)
    space = exact_engine.enumerate_states(model.k, cap)
    kernel = exact_engine.one_step_kernel(model, space)
    if cfg.inject_fault:
        kernel.matrix[1, 0] += 1e-6
    moment_data = spectral.moments(model)
    classification = spectral.classify(moment_data)
    perron_ready = classification.indecomposable and classification.period == 1
    subcritical = perron_ready and classification.criticality == "subcritical"

    def check_rows():
        try:
            kernel.validate(tol=1e-12)
        except ArithmeticError as exc:
            return False, str(exc)
        return True, "rows stochastic within 1e-12"

    def check_ck():
        lhs = exact_engine.t_step_kernel(kernel, 5).matrix
        rhs = exact_engine.compose(
            exact_engine.t_step_kernel(kernel, 2), exact_engine.t_step_kernel(kernel, 3)
        ).matrix
        worst = float(np.max(np.abs(lhs - rhs)))
        return worst <= 1e-12, f"composition residual {worst:.3g}"

    def check_first_passage_identity():
        a = exact_engine.restricted_kernel(kernel, stopping, 8).values
        b = exact_engine.restricted_via_inclusion_exclusion(kernel, stopping, 8)
        worst = float(np.max(np.abs(a - b)))
        return worst <= 1e-12, f"dual-route gap {worst:.3g}"

    def check_restricted_dominated():
        restricted = exact_engine.restricted_kernel(kernel, stopping, 8)
        free = exact_engine.hitting_columns(kernel, restricted.targets, 8)
        worst = float(np.max(restricted.values - free[1:]))
        return worst <= 1e-12, f"max excess {worst:.3g}"

    def check_three_routes():
        restricted = exact_engine.restricted_kernel(kernel, stopping, 10)
        coeffs = exact_engine.stop_coefficients(restricted)
        r = stopping.sorted_members()[0]
        worst = 0.0
        for state in space.states[1: min(space.n_states, 25)]:
            if state in stopping:
                continue
            for t in (1, 4, 8):
                d = exact_engine.absorb_direct(kernel, stopping, state, r, t)
                f = exact_engine.absorb_via_formula(kernel, coeffs, state, r, t)
                p = exact_engine.absorb_via_restricted(restricted, state, r, t)
                worst = max(worst, abs(d - f), abs(d - p))
        return worst <= 1e-10, f"worst route gap {worst:.3g}"

    def check_monotone():
        r = stopping.sorted_members()[0]
        col = exact_engine.stopped_hitting_column(kernel, stopping, r, 15)
        worst = float(np.min(np.diff(col, axis=0)))
        return worst >= -1e-15, f"min increment {worst:.3g}"

    def check_semigroup():
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(20):
            s = rng.uniform(0, 1, size=model.k)
            lhs = genfun.iterate_h(model, 7, s).h
            rhs = genfun.iterate_h(model, 3, genfun.iterate_h(model, 4, s).h).h
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        return worst <= 1e-12, f"worst semigroup gap {worst:.3g}"

    def check_survival_bounds():
        rng = np.random.default_rng(1)
        s = rng.uniform(0, 1, size=(200, model.k))
        ok = True
        for t in (1, 5, 15):
            ev = genfun.iterate_h(model, t, s)
            ok &= bool(np.all(ev.R >= -1e-15) and np.all(ev.R <= ev.Q + 1e-12))
        return ok, "0 <= R(t,s) <= Q(t)"

    def check_mean_dominance():
        violation = genfun.mean_dominance(model, genfun.make_s_grid(model.k, 200))
        return violation <= 1e-12, f"worst violation {violation:.3g}"

    def check_perron():
        if not perron_ready:
            return True, "skipped: decomposable or periodic"
        summary = spectral.perron_triple(moment_data)
        worst = max(summary.residual_f, summary.residual_nu)
        return worst <= 1e-10, f"eigen residual {worst:.3g}"

    def check_survival_constants():
        if not subcritical:
            return True, "skipped: not subcritical"
        K = spectral.survival_constants(model, 50)
        return bool(np.all(K > 0)), f"K = {np.array2string(K, precision=4)}"

    def check_extinction_cross_module():
        worst = 0.0
        from stopbp.model import unit_state

        for i in range(1, model.k + 1):
            v = exact_engine.distribution_after(kernel, unit_state(i, model.k), 6)
            h = genfun.iterate_h(model, 6, np.zeros(model.k)).h[i - 1]
            worst = max(worst, abs(float(v[0]) - float(h)) - float(v[space.overflow]))
        return worst <= 1e-12, f"worst gap beyond overflow {worst:.3g}"

    return [
        ("kernel rows stochastic", check_rows),
        ("kernel composition", check_ck),
        ("first-passage dual route", check_first_passage_identity),
        ("first-passage dominated by free", check_restricted_dominated),
        ("three absorption routes agree", check_three_routes),
        ("absorption monotone in horizon", check_monotone),
        ("generating map semigroup", check_semigroup),
        ("survival inequalities", check_survival_bounds),
        ("mean dominance", check_mean_dominance),
        ("Perron residuals", check_perron),
        ("survival constants positive", check_survival_constants),
        ("extinction matches generating map", check_extinction_cross_module),
    ]


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.model is not None:
        pairs = [(cfg.model, *_load(cfg))]
    else:
        pairs = [(name, *builtin(name)) for name in ("m1", "m2")]
    failures = 0
    for label, model, stopping in pairs:
        stopping = _need_stopping(stopping)
        report = validate_model(model, stopping)
        if not report.ok:
            for failure in report.failures():
                print(f"[FAIL] {label}: {failure.name} ({failure.detail})")
            failures += 1
            continue
        for name, check in _verify_checks(model, stopping, cfg):
            start = time.perf_counter()
            ok, detail = check()
            elapsed = time.perf_counter() - start
            status = "PASS" if ok else "FAIL"
            print(f"[{status}] {label}: {name} ({detail}) [{elapsed:.3f}s]")
            failures += 0 if ok else 1
    return EXIT_OK if failures == 0 else EXIT_MATH


_COMMANDS = {
    "classify": cmd_classify,
    "stop-prob": cmd_stop_prob,
    "series": cmd_series,
    "yaglom": cmd_yaglom,
    "probe": cmd_probe,
    "estimate": cmd_estimate,
    "verify": cmd_verify,
}


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--model", help="model file (JSON)")
    sub.add_argument("--stop-set", dest="stop_set", help="stopping-set file override")
    sub.add_argument("--config", help="JSON config file; flags take precedence")
    sub.add_argument("--cap", type=int, help="state-space cap on the total population")
    sub.add_argument("--t", type=int, help="horizon (steps)")
    sub.add_argument("--tol", type=float, help="tolerance for series/route checks")
    sub.add_argument("--seed", type=int, help="master seed for Monte Carlo")
    sub.add_argument("--reps", type=int, help="Monte Carlo trajectories")
    sub.add_argument("--workers", type=int, help="worker threads")
    sub.add_argument("--out", help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stopbp",
        description="Absorption probabilities of stopped branching processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="structure flags and Perron data")
    _add_common(p)

    p = sub.add_parser("stop-prob", help="finite-horizon absorption, three routes")
    _add_common(p)
    p.add_argument("--n", help="start state, e.g. [1,0]")
    p.add_argument("--r", help="target stopping state, e.g. [2,0]")

    p = sub.add_parser("series", help="infinite-horizon absorption by series")
    _add_common(p)
    p.add_argument("--n", help="start state")
    p.add_argument("--r", help="target stopping state")

    p = sub.add_parser("yaglom", help="conditional law given non-extinction")
    _add_common(p)
    p.add_argument("--j", type=int, help="source type (1-based)")

    p = sub.add_parser("probe", help="cyclic-limit probe over large start totals")
    _add_common(p)
    p.add_argument("--r", help="target stopping state")
    p.add_argument("--a", help="direction, e.g. 0.5,0.5 (default uniform)")
    p.add_argument("--n-grid", dest="n_grid", help="lo:hi:count geometric, or comma list")

    p = sub.add_parser("estimate", help="Monte Carlo estimators")
    _add_common(p)
    p.add_argument("--what", choices=("absorption", "yaglom"))
    p.add_argument("--n", help="start state (absorption)")
    p.add_argument("--r", help="target stopping state (absorption)")
    p.add_argument("--j", type=int, help="source type (yaglom)")

    p = sub.add_parser("verify", help="run the invariant battery")
    _add_common(p)
    p.add_argument(
        "--inject-fault",
        dest="inject_fault",
        action="store_true",
        default=None,
        help="perturb a kernel row first (testing aid; the battery must fail)",
    )
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    level = os.environ.get("BP_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors
        return EXIT_OK if exc.code in (None, 0) else EXIT_USAGE
    try:
        cfg = _merge_config(args)
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (ModelFormatError, ModelValidationError) as exc:
        log.error("model: %s", exc)
        return EXIT_USAGE
    except exact_engine.CapacityError as exc:
        log.error("%s", exc)
        return EXIT_MATH
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


def entry_point():  # pragma: no cover - thin wrapper
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
