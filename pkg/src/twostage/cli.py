"""Command-line interface.

Three subcommands: ``analyze`` estimates effects from an observed-data
CSV, ``simulate`` runs the built-in Monte Carlo studies, and ``check``
runs the enumeration identity battery on a small design.

Exit codes: 0 success; 1 structural problems (bad flags, malformed or
invalid input, bad configuration); 2 a computation refused because it
exceeds a size cap; 3 numerical estimation failure.

Input CSV format: a header row naming at least ``household_id``,
``individual_id``, ``h`` (1 if the household is treated), ``z`` (1 if
the individual is the treated member), and ``y`` (outcome), matched
case-insensitively and in any column order.  Further columns are
ignored unless listed in ``--covariates``.  Rows may appear in any
order; households are numbered by first appearance.  A key=value file
can supply any long option via ``--config``; explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .analysis import analyze
from .diagnostics import identity_checks
from .errors import EstimationError, ParseError, StructuralError, TwoStageError
from .estimate import estimate_unbiased, fit_adjustment, stratum_decomposition
from .model import (
    EffectKind,
    EstimatorFamily,
    ExperimentDesign,
    ObservedData,
    StrataSpec,
    WeightScheme,
)
from .randomize import DEFAULT_MAX_ASSIGNMENTS, count_assignments
from .simulate import (
    CoverageStudyConfig,
    SizeBiasStudyConfig,
    StudyResult,
    run_coverage_study,
    run_size_bias_study,
)
from .variance import confidence_interval, variance_unbiased

__all__ = ["main", "read_observed_csv", "write_observed_csv"]

_REQUIRED_COLUMNS = ("household_id", "individual_id", "h", "z", "y")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors follow the package exit codes."""

    def error(self, message):
        raise StructuralError(message)


# ---------------------------------------------------------------------------
# input and output files


def _parse_flag(value: str, line: int, column: str) -> bool:
    if value in ("0", "1"):
        return value == "1"
    raise ParseError(f"column {column!r} must be 0 or 1, got {value!r}", line)


def _resolve_columns(header: list[str], wanted, path: str,
                     kind: str) -> list[int]:
    lower = {}
    for position, name in enumerate(header):
        lower.setdefault(name.strip().lower(), position)
    missing = [c for c in wanted if c.lower() not in lower]
    if missing:
        raise ParseError(
            f"missing {kind} column(s) {', '.join(missing)} in {path}",
            line=1)
    return [lower[c.lower()] for c in wanted]


def read_observed_csv(path: str,
                      covariates: tuple[str, ...] | None = None) -> ObservedData:
    """Read an observed-data CSV (format described in the module docstring).

    ``covariates`` names additional numeric columns to load.  Raises
    :class:`~twostage.errors.ParseError` with a line number for
    malformed rows and :class:`~twostage.errors.StructuralError` naming
    the offending household for design violations: duplicate
    individuals, mixed ``h`` flags inside one household, a treated
    household without exactly one treated member, a treated member in a
    control household, or a single-member household (which has no
    untreated members, so its spillover cell can never be observed).
    """
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise StructuralError(f"cannot open {path}: {exc.strerror}")
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path} is empty")
        idx = _resolve_columns(header, _REQUIRED_COLUMNS, path, "required")
        cov_names = tuple(covariates) if covariates else ()
        cov_idx = _resolve_columns(header, cov_names, path, "covariate")
        labels: list[str] = []
        codes: dict[str, int] = {}
        seen_individuals: set[tuple[str, str]] = set()
        households, h_flags, z_flags, outcomes = [], [], [], []
        cov_rows: list[list[float]] = []
        width = len(header)
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise ParseError(
                    f"expected {width} fields, got {len(row)}", line_no)
            label = row[idx[0]].strip()
            individual = row[idx[1]].strip()
            if not label:
                raise ParseError("empty household_id", line_no)
            if not individual:
                raise ParseError("empty individual_id", line_no)
            if (label, individual) in seen_individuals:
                raise ParseError(
                    f"duplicate individual {individual!r} in household "
                    f"{label!r}", line_no)
            seen_individuals.add((label, individual))
            if label not in codes:
                codes[label] = len(labels)
                labels.append(label)
            households.append(codes[label])
            h_flags.append(_parse_flag(row[idx[2]].strip(), line_no, "h"))
            z_flags.append(_parse_flag(row[idx[3]].strip(), line_no, "z"))
            raw = row[idx[4]].strip()
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(f"cannot parse outcome {raw!r}", line_no)
            if not np.isfinite(value):
                raise ParseError(f"outcome {raw!r} is not finite", line_no)
            outcomes.append(value)
            if cov_idx:
                values = []
                for name, j in zip(cov_names, cov_idx):
                    raw = row[j].strip()
                    try:
                        values.append(float(raw))
                    except ValueError:
                        raise ParseError(
                            f"cannot parse covariate {name!r} value {raw!r}",
                            line_no)
                cov_rows.append(values)
    if not households:
        raise ParseError(f"{path} has a header but no data rows")
    house = np.asarray(households, dtype=np.int64)
    h_arr = np.asarray(h_flags, dtype=np.bool_)
    z_arr = np.asarray(z_flags, dtype=np.bool_)
    for code, label in enumerate(labels):
        members = house == code
        if int(members.sum()) < 2:
            raise StructuralError(
                f"household {label!r} has a single member, so its "
                "spillover cell can never be observed; households must "
                "have at least two members")
        flags = h_arr[members]
        if flags.any() != flags.all():
            raise StructuralError(
                f"household {label!r} mixes h=0 and h=1 rows")
        treated_members = int(z_arr[members].sum())
        if flags.all() and treated_members != 1:
            raise StructuralError(
                f"treated household {label!r} has {treated_members} "
                "members with z=1; exactly one is required")
        if not flags.any() and treated_members != 0:
            raise StructuralError(
                f"control household {label!r} has a member with z=1")
    order = np.argsort(house, kind="stable")
    cov = None
    if cov_idx:
        cov = np.asarray(cov_rows, dtype=np.float64)[order]
    return ObservedData(
        household=house[order],
        household_treated=h_arr[order],
        individual_treated=z_arr[order],
        outcome=np.asarray(outcomes, dtype=np.float64)[order],
        covariates=cov,
        covariate_names=cov_names or None,
    )


def write_observed_csv(data: ObservedData, path: str) -> None:
    """Write data in the format :func:`read_observed_csv` accepts.

    Households and individuals are numbered from 1; floats are written
    with ``repr`` so a round trip reproduces them bit for bit.
    """
    names = data.covariate_names or ()
    offsets = data.design.household_offsets
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(_REQUIRED_COLUMNS) + list(names))
        for i in range(data.outcome.shape[0]):
            code = int(data.household[i])
            row = [code + 1, i - int(offsets[code]) + 1,
                   int(data.household_treated[i]),
                   int(data.individual_treated[i]),
                   repr(float(data.outcome[i]))]
            if data.covariates is not None:
                row.extend(repr(float(v)) for v in data.covariates[i])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# configuration files


def _read_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        handle = open(path)
    except OSError as exc:
        raise StructuralError(f"cannot open config {path}: {exc.strerror}")
    with handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError(f"expected key=value, got {text!r}", line_no)
            key, value = text.split("=", 1)
            key = key.strip().replace("-", "_")
            if not key:
                raise ParseError("empty key", line_no)
            values[key] = value.strip()
    return values


def _setting(args, config: dict[str, str], name: str, default,
             convert=str):
    """Resolution order: explicit flag, config file entry, default."""
    value = getattr(args, name)
    if value is not None:
        return value
    if name in config:
        raw = config[name]
        try:
            if convert is bool:
                if raw.lower() in ("1", "true", "yes"):
                    return True
                if raw.lower() in ("0", "false", "no"):
                    return False
                raise ValueError(raw)
            return convert(raw)
        except ValueError:
            raise StructuralError(
                f"config value {name}={raw!r} is not a valid {convert.__name__}")
    return default


def _split_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


# ---------------------------------------------------------------------------
# output helpers


_FORMATS = ("table", "csv", "jsonl")


def _emit(result: StudyResult, fmt: str, out_dir: str | None,
          stem: str) -> None:
    if fmt == "table":
        payload = result.format_table()
        extension = "txt"
    elif fmt == "csv":
        payload = result.to_csv_text().rstrip("\n")
        extension = "csv"
    elif fmt == "jsonl":
        lines = []
        for row in result.rows:
            record = {c: (None if v == "" else v)
                      for c, v in zip(result.columns, row)}
            lines.append(json.dumps(record))
        payload = "\n".join(lines)
        extension = "jsonl"
    else:
        raise StructuralError(
            f"unknown format {fmt!r}; expected one of {', '.join(_FORMATS)}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        target = os.path.join(out_dir, f"{stem}.{extension}")
        with open(target, "w") as handle:
            handle.write(payload + "\n")
        print(f"wrote {target}")
    else:
        print(payload)


# ---------------------------------------------------------------------------
# subcommands


_SCHEME_CHOICES = {"hw": [WeightScheme.household()],
                   "iw": [WeightScheme.individual()],
                   "both": [WeightScheme.household(), WeightScheme.individual()]}


def _estimate_row(est) -> tuple:
    se = est.std_error
    lo, hi = est.interval if est.interval is not None else ("", "")
    return (est.effect.value, est.scheme, est.family.value, est.point,
            se if se is not None else "", lo, hi)


def _stratum_rows(data: ObservedData, scheme: WeightScheme,
                  effect: EffectKind, strata: StrataSpec,
                  ci_level: float) -> list[tuple]:
    """Per-stratum companion rows for a post-stratified analysis."""
    rows = []
    for code, _, sub, sub_scheme in stratum_decomposition(data, scheme, strata):
        point = estimate_unbiased(sub, sub_scheme, effect).point
        label = f"post-stratified[{strata.names[code]}]"
        try:
            variance = variance_unbiased(sub, sub_scheme, effect)
        except EstimationError:
            rows.append((effect.value, scheme.label, label, point,
                         "", "", ""))
            continue
        lo, hi = confidence_interval(point, variance, ci_level)
        rows.append((effect.value, scheme.label, label,
                     point, float(np.sqrt(variance)), lo, hi))
    return rows


def _cmd_analyze(args) -> int:
    config = _read_config(args.config) if args.config else {}
    input_path = _setting(args, config, "input", None)
    if input_path is None:
        raise StructuralError("analyze requires --input")
    scheme_key = _setting(args, config, "scheme", "both")
    if scheme_key not in _SCHEME_CHOICES:
        raise StructuralError(
            f"unknown scheme {scheme_key!r}; expected hw, iw, or both")
    schemes = _SCHEME_CHOICES[scheme_key]
    effects = [EffectKind.parse(e) for e in _split_list(
        _setting(args, config, "effects", "primary,spillover"))]
    families = [EstimatorFamily.parse(e) for e in _split_list(
        _setting(args, config, "estimators", "unbiased"))]
    ci_level = _setting(args, config, "ci_level", 0.95, float)
    if not 0.0 < ci_level < 1.0:
        raise StructuralError("ci-level must be in (0, 1)")
    covariate_names = tuple(_split_list(
        _setting(args, config, "covariates", "")))
    data = read_observed_csv(input_path, covariate_names or None)

    strata = None
    strata_spec = _setting(args, config, "post_stratify", None)
    if EstimatorFamily.POST_STRATIFIED in families and strata_spec is None:
        raise StructuralError(
            "post-stratified estimation requires --post-stratify "
            "(for example --post-stratify 2,3,4+)")
    if strata_spec is not None:
        strata = StrataSpec.by_size(data.design, strata_spec)

    adjustment = None
    if EstimatorFamily.MODEL_ASSISTED in families:
        if not covariate_names:
            raise StructuralError(
                "model-assisted estimation requires --covariates")
        holdout_path = _setting(args, config, "holdout", None)
        if holdout_path is None:
            raise StructuralError(
                "model-assisted estimation requires --holdout, a CSV in "
                "the input format whose rows fit the adjustment")
        holdout = read_observed_csv(holdout_path, covariate_names)
        adjustment = fit_adjustment(holdout.covariates, holdout.outcome)

    columns = ("effect", "scheme", "estimator", "estimate", "std_error",
               "ci_low", "ci_high")
    rows: list[tuple] = []
    seen: set[tuple] = set()
    for family in families:
        for effect in effects:
            for scheme in schemes:
                est = analyze(data, scheme, effect, family,
                              ci_level=ci_level, strata=strata,
                              adjustment=adjustment, require_variance=False)
                key = (family, effect, est.scheme)
                if key in seen:  # simple difference ignores the scheme
                    continue
                seen.add(key)
                rows.append(_estimate_row(est))
                if family is EstimatorFamily.POST_STRATIFIED:
                    rows.extend(_stratum_rows(data, scheme, effect, strata,
                                              ci_level))
    design = data.design
    meta = {
        "input": input_path,
        "ci_level": ci_level,
        "num_households": design.num_households,
        "num_treated_households": design.num_treated_households,
        "num_control_households": design.num_control_households,
        "num_individuals": design.num_individuals,
    }
    if strata is not None:
        meta["strata"] = {
            strata.names[code]: int((strata.labels == code).sum())
            for code in range(strata.num_strata)
        }
    result = StudyResult(columns, rows, meta)
    fmt = _setting(args, config, "format", "table")
    if fmt == "table":
        print(f"input: {input_path}")
        print(f"households: {design.num_households} "
              f"(treated {design.num_treated_households}, "
              f"control {design.num_control_households})")
        print(f"individuals: {design.num_individuals}")
        if strata is not None:
            summary = ", ".join(f"{name}: {count} households"
                                for name, count in meta["strata"].items())
            print(f"strata: {summary}")
        print()
    _emit(result, fmt, _setting(args, config, "out_dir", None), "estimates")
    return 0


_STUDY_CHOICES = ("coverage", "iw-study")
_SCENARIO_ALIASES = {"a": "constant", "b": "by-size"}


def _cmd_simulate(args) -> int:
    config = _read_config(args.config) if args.config else {}
    study = _setting(args, config, "study", None)
    if study is None:
        raise StructuralError(
            "simulate requires --study coverage or iw-study")
    reps = _setting(args, config, "reps", 2000, int)
    seed = _setting(args, config, "seed", 0, int)
    fixed = _setting(args, config, "fixed_table", False, bool)
    fmt = _setting(args, config, "format", "table")
    out_dir = _setting(args, config, "out_dir", None)
    if study == "coverage":
        cfg = CoverageStudyConfig(
            replications=reps, seed=seed, fixed_table=fixed,
            ci_level=_setting(args, config, "ci_level", 0.95, float))
        result = run_coverage_study(cfg)
        stem = "coverage"
    elif study == "iw-study":
        scenario = _setting(args, config, "scenario", "b")
        scenario = _SCENARIO_ALIASES.get(scenario, scenario)
        cfg = SizeBiasStudyConfig(
            replications=reps, seed=seed, fixed_table=fixed,
            scenario=scenario)
        result = run_size_bias_study(cfg)
        stem = "iw_study"
    else:
        raise StructuralError(
            f"unknown study {study!r}; expected coverage or iw-study")
    _emit(result, fmt, out_dir, stem)
    if stem == "coverage" and (fmt == "table" or out_dir):
        agg = result.meta["aggregate_coverage"]
        for flavor in ("cluster", "hc2", "nominal"):
            print(f"aggregate {flavor}: "
                  f"primary {agg[flavor]['primary']:.3f}, "
                  f"spillover {agg[flavor]['spillover']:.3f}")
    return 0


def _cmd_check(args) -> int:
    config = _read_config(args.config) if args.config else {}
    sizes_text = _setting(args, config, "sizes", None)
    input_path = _setting(args, config, "input", None)
    if (sizes_text is None) == (input_path is None):
        raise StructuralError(
            "check requires exactly one of --sizes (with --treated) or "
            "--input")
    if sizes_text is not None:
        try:
            sizes = [int(s) for s in _split_list(sizes_text)]
        except ValueError:
            raise StructuralError(f"cannot parse --sizes {sizes_text!r}")
        treated = _setting(args, config, "treated", None, int)
        if treated is None:
            raise StructuralError("check --sizes requires --treated")
        design = ExperimentDesign(
            num_households=len(sizes), num_treated_households=treated,
            household_sizes=np.asarray(sizes, dtype=np.int64))
    else:
        design = read_observed_csv(input_path).design
    seed = _setting(args, config, "seed", 0, int)
    cap = _setting(args, config, "max_assignments",
                   DEFAULT_MAX_ASSIGNMENTS, int)
    size_list = ",".join(str(int(s)) for s in design.household_sizes)
    print(f"design: {design.num_households} households (sizes {size_list}), "
          f"{design.num_treated_households} treated, "
          f"{count_assignments(design)} possible assignments")
    checks = identity_checks(design, seed=seed, max_assignments=cap)
    failures = 0
    for check in checks:
        if check.status == "skipped":
            print(f"{check.name}: skipped ({check.detail})")
        elif check.status == "pass":
            print(f"{check.name}: pass (max deviation {check.deviation:.2e})")
        else:
            failures += 1
            print(f"{check.name}: FAIL (max deviation {check.deviation:.2e})")
    ran = sum(1 for c in checks if c.status != "skipped")
    if failures:
        print(f"status: {failures} of {ran} identities failed")
        return 3
    print(f"status: all {ran} identities pass")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> _Parser:
    parser = _Parser(prog="twostage",
                     description="Design-based analysis of two-stage "
                                 "randomized household experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value defaults file")
        p.add_argument("--format", choices=_FORMATS, default=None,
                       help="output format (default table)")
        p.add_argument("--out-dir", dest="out_dir", default=None,
                       help="write output files here instead of stdout")

    p_analyze = sub.add_parser("analyze", help="estimate effects from a CSV")
    p_analyze.add_argument("--input", default=None, help="observed-data CSV")
    p_analyze.add_argument("--scheme", choices=("hw", "iw", "both"),
                           default=None,
                           help="weighting: per household, per individual, "
                                "or both (default both)")
    p_analyze.add_argument("--effects", default=None,
                           help="comma list of primary, spillover, overall")
    p_analyze.add_argument("--estimators", default=None,
                           help="comma list of unbiased, hajek, "
                                "simple-difference, post-stratified, "
                                "model-assisted, regression")
    p_analyze.add_argument("--ci-level", dest="ci_level", type=float,
                           default=None, help="confidence level (default 0.95)")
    p_analyze.add_argument("--post-stratify", dest="post_stratify",
                           default=None,
                           help="household-size strata, e.g. 2,3,4+")
    p_analyze.add_argument("--covariates", default=None,
                           help="comma list of covariate columns")
    p_analyze.add_argument("--holdout", default=None,
                           help="CSV (input format, with covariates) whose "
                                "rows fit the model-assisted adjustment")
    common(p_analyze)
    p_analyze.set_defaults(func=_cmd_analyze)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    p_sim.add_argument("--study", choices=_STUDY_CHOICES, default=None,
                       help="coverage: interval coverage on equal-size "
                            "households; iw-study: estimator bias on mixed "
                            "sizes")
    p_sim.add_argument("--reps", type=int, default=None,
                       help="replicates per cell (default 2000)")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--scenario", choices=("a", "b", "constant", "by-size"),
                       default=None,
                       help="iw-study scenario: a/constant shares parameters "
                            "across sizes, b/by-size varies them (default b)")
    p_sim.add_argument("--ci-level", dest="ci_level", type=float, default=None)
    p_sim.add_argument("--fixed-table", dest="fixed_table",
                       action="store_const", const=True, default=None,
                       help="draw one outcome table per cell instead of "
                            "one per replicate")
    common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_check = sub.add_parser(
        "check", help="verify estimator identities by enumeration")
    p_check.add_argument("--sizes", default=None,
                         help="household sizes, e.g. 2,2,3,3")
    p_check.add_argument("--treated", type=int, default=None,
                         help="number of treated households")
    p_check.add_argument("--input", default=None,
                         help="take the design from this observed-data CSV")
    p_check.add_argument("--seed", type=int, default=None,
                         help="seed for the random outcome table (default 0)")
    p_check.add_argument("--max-assignments", dest="max_assignments",
                         type=int, default=None,
                         help="refuse designs with more assignments than "
                              f"this (default {DEFAULT_MAX_ASSIGNMENTS})")
    common(p_check)
    p_check.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except TwoStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: linear algebra failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
