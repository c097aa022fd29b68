"""Command line front end: space spec parsing, file I/O and the report
pipeline."""

import argparse
import io
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from snowprobe import __version__
from snowprobe.betweenness import (
    count_between_points,
    find_between_points,
    uniform_nonconvexity,
)
from snowprobe.chains import chain_decay, segment_oracle
from snowprobe.dimension import (
    auto_radii,
    box_dimension,
    dimension_bound_holds,
    doubling_constant,
    sphere_surjectivity,
)
from snowprobe.errors import InputError, InvalidMetricError
from snowprobe.example_spaces import (
    SpaceDescriptor,
    euclidean,
    materialize,
    mixed_product,
    normed,
    sample,
    shift_space,
    snowflaked,
)
from snowprobe.exponents import (
    CriticalExponentResult,
    GaugeContext,
    desnowflake_exponent,
    gauge_scan,
)
from snowprobe.geodesics import (
    adjacent_additivity_defect,
    construct_geodesic,
    isometry_defect,
    linear_between_oracle,
    running_defect,
)
from snowprobe.metric_core import (
    FiniteMetricSpace,
    load_space,
    space_to_dict,
    validate_metric,
)
from snowprobe.settings import SnowprobeSettings
from snowprobe.utils import dumps_deterministic

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INVALID_METRIC = 2
EXIT_INCONCLUSIVE = 3


class _SpecParser:
    """Recursive descent parser for space specs:

    spec := "euclidean:" INT | "normed:" INT ":" (NUMBER | "inf")
          | "shift:" INT | "snowflake(" spec "," NUMBER ")"
          | "mixed(" NUMBER ("," NUMBER)* ")"
    """

    def __init__(self, text: str):
        """
        Parameters
        ----------
        text : str
        """
        self.text = text
        self.pos = 0

    def error(self, message: str, pos: Optional[int] = None) -> InputError:
        """InputError with the byte offset of pos."""
        pos = self.pos if pos is None else pos
        offset = len(self.text[:pos].encode("utf-8"))
        return InputError(f"{message} in space spec {self.text!r}", offset)

    def skip_spaces(self) -> None:
        """Whitespace is allowed between tokens."""
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, token: str) -> None:
        """Consume token or fail."""
        self.skip_spaces()
        if not self.text.startswith(token, self.pos):
            raise self.error(f"Expected {token!r}")
        self.pos += len(token)

    def peek(self, token: str) -> bool:
        """True when token comes next."""
        self.skip_spaces()
        return self.text.startswith(token, self.pos)

    def word(self) -> str:
        """A run of letters."""
        self.skip_spaces()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isalpha():
            self.pos += 1
        return self.text[start : self.pos]

    def number(self) -> Tuple[float, int]:
        """A decimal number or inf, with its start position."""
        self.skip_spaces()
        start = self.pos
        allowed = "0123456789+-.eE"
        if self.text.startswith("inf", self.pos):
            self.pos += 3
            return math.inf, start
        while self.pos < len(self.text) and self.text[self.pos] in allowed:
            self.pos += 1
        token = self.text[start : self.pos]
        try:
            return float(token), start
        except ValueError:
            raise self.error("Expected a number", start)

    def integer(self) -> Tuple[int, int]:
        """A positive integer with its start position."""
        value, start = self.number()
        if not (math.isfinite(value) and value == int(value) and value >= 1):
            raise self.error(
                f"Expected a positive integer, got {value}", start
            )
        return int(value), start

    def spec(self) -> SpaceDescriptor:
        """Parse one spec."""
        self.skip_spaces()
        start = self.pos
        kind = self.word()
        if kind == "euclidean":
            self.expect(":")
            n, _ = self.integer()
            return euclidean(n)
        if kind == "normed":
            self.expect(":")
            n, _ = self.integer()
            self.expect(":")
            q, q_pos = self.number()
            if not q >= 1:
                raise self.error(f"Norm exponent must be >= 1, got {q}", q_pos)
            return normed(n, q)
        if kind == "shift":
            self.expect(":")
            window, _ = self.integer()
            return shift_space(window)
        if kind == "snowflake":
            self.expect("(")
            base = self.spec()
            self.expect(",")
            eps, eps_pos = self.number()
            if not 0 < eps <= 1:
                raise self.error(
                    f"Snowflake exponent must be in (0, 1], got {eps}",
                    eps_pos,
                )
            self.expect(")")
            return snowflaked(base, eps)
        if kind == "mixed":
            self.expect("(")
            exponents = []
            while True:
                e, e_pos = self.number()
                if not 0 < e <= 1:
                    raise self.error(
                        f"Mixed exponents must be in (0, 1], got {e}", e_pos
                    )
                exponents.append(e)
                if not self.peek(","):
                    break
                self.expect(",")
            self.expect(")")
            return mixed_product(exponents)
        raise self.error(f"Unknown space kind {kind!r}", start)


def parse_space_spec(text: str) -> SpaceDescriptor:
    """
    Parse compact specs such as "euclidean:2", "normed:2:inf",
    "snowflake(euclidean:2,0.5)", "mixed(1,0.5)" or "shift:4".

    Parameters
    ----------
    text : str

    Returns
    -------
    SpaceDescriptor
      Nested snowflakes are merged.

    Raises
    ------
    InputError
      With the byte offset of the offending token.

    """
    parser = _SpecParser(text)
    desc = parser.spec()
    parser.skip_spaces()
    if parser.pos != len(text):
        raise parser.error("Unexpected trailing text")
    return desc


class AnalysisReport(BaseModel):
    """Evidence gathered by the report pipeline and the conclusion it
    supports."""

    model_config = ConfigDict(frozen=True)

    source: str
    points: int
    valid_metric: bool
    violations: List[Dict[str, Any]] = Field(default_factory=list)
    p_star: Optional[float] = None
    witness: Optional[Dict[str, Any]] = None
    between_count: Optional[int] = None
    between_tol: float
    best_between: Optional[Dict[str, Any]] = None
    nonconvexity: Optional[Dict[str, Any]] = None
    dimension: Optional[Dict[str, Any]] = None
    dimension_bound: Optional[bool] = None
    conclusion: str
    exit_code: int


def _witness_dict(result: CriticalExponentResult) -> Optional[Dict]:
    """Witness as {i, j, k, a, b}: i = x, j = z, k = y of the triple with
    base d(x, y)."""
    if result.witness is None:
        return None
    x, z, y = result.witness.triple
    return {
        "i": x,
        "j": z,
        "k": y,
        "a": result.witness.a,
        "b": result.witness.b,
        "p_crit": result.witness.p_crit,
    }


def load_input(
    source: str,
    settings: SnowprobeSettings,
    count: Optional[int] = None,
) -> FiniteMetricSpace:
    """
    A metric space from a .json/.csv path, or sampled from a space spec.

    Parameters
    ----------
    source : str
      Existing file path, or a space spec.
    settings : SnowprobeSettings
      Seed, sample count and redraw budget for specs.
    count : Optional[int]
      Overrides settings.sample_count.

    Returns
    -------
    FiniteMetricSpace

    """
    if Path(source).is_file():
        return load_space(source)
    desc = parse_space_spec(source)
    samples = sample(
        desc,
        settings.sample_count if count is None else count,
        seed=settings.seed,
        max_redraws=settings.max_redraws,
    )
    return materialize(samples)


def run_report(
    source: Union[str, FiniteMetricSpace],
    settings: Optional[SnowprobeSettings] = None,
) -> AnalysisReport:
    """
    validate -> between -> exponent -> nonconvexity -> dimension, then
    tag the space: invalid-metric, inconclusive (fewer than 3 points),
    geodesic-like (between-points at report_between_tol), ultrametric-like
    (p* infinite) or snowflake-like(p*).

    Parameters
    ----------
    source : Union[str, FiniteMetricSpace]
      A space, a file path or a space spec.
    settings : Optional[SnowprobeSettings]
      Default is SnowprobeSettings().

    Returns
    -------
    AnalysisReport

    """
    settings = SnowprobeSettings() if settings is None else settings
    if isinstance(source, FiniteMetricSpace):
        space, label = source, "<in-memory>"
    else:
        space, label = load_input(source, settings), source
    tol = settings.report_between_tol
    violations = validate_metric(
        space, rel_tol=settings.rel_tol, threads=settings.threads
    )
    if violations:
        logging.warning(f"Found {len(violations)} metric violations.")
        return AnalysisReport(
            source=label,
            points=space.n,
            valid_metric=False,
            violations=[v.model_dump() for v in violations],
            between_tol=tol,
            conclusion="invalid-metric",
            exit_code=EXIT_INVALID_METRIC,
        )
    if space.n < 3:
        return AnalysisReport(
            source=label,
            points=space.n,
            valid_metric=True,
            between_tol=tol,
            conclusion="inconclusive",
            exit_code=EXIT_INCONCLUSIVE,
        )
    threads = settings.threads
    best = find_between_points(space, rel_tol=tol, limit=1, threads=threads)
    between_count = count_between_points(space, rel_tol=tol, threads=threads)
    exponent = desnowflake_exponent(
        space, abs_tol=settings.abs_tol, threads=threads
    )
    verdict = uniform_nonconvexity(
        space,
        pair_budget=settings.pair_budget,
        seed=settings.seed,
        threads=threads,
    )
    try:
        dimension = box_dimension(space, threads=threads)
    except InputError as e:
        logging.warning(f"Skipped the dimension estimate: {e}")
        dimension = None
    if between_count > 0:
        conclusion = "geodesic-like"
    elif math.isinf(exponent.p_star):
        conclusion = "ultrametric-like"
    else:
        conclusion = f"snowflake-like({exponent.p_star:.6g})"
    logging.info(f"Report conclusion: {conclusion}.")
    return AnalysisReport(
        source=label,
        points=space.n,
        valid_metric=True,
        p_star=exponent.p_star,
        witness=_witness_dict(exponent),
        between_count=between_count,
        between_tol=tol,
        best_between=best[0].model_dump() if best else None,
        nonconvexity={
            "verdict": type(verdict).__name__,
            **verdict.model_dump(),
        },
        dimension=None if dimension is None else dimension.model_dump(),
        dimension_bound=(
            None
            if dimension is None
            else dimension_bound_holds(exponent.p_star, dimension)
        ),
        conclusion=conclusion,
        exit_code=EXIT_OK,
    )


def _parse_floats(text: str) -> List[float]:
    """Comma separated reals, e.g. point coordinates."""
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"Could not parse {text!r} as numbers")


def _settings_from_args(args: argparse.Namespace) -> SnowprobeSettings:
    """Settings from --config or the environment, then flag overrides."""
    if args.config is not None:
        settings = SnowprobeSettings(config_file=args.config)
    else:
        settings = SnowprobeSettings()
    overrides = {
        key: getattr(args, key)
        for key in ("seed", "threads", "log_level")
        if getattr(args, key, None) is not None
    }
    if getattr(args, "count", None) is not None:
        overrides["sample_count"] = args.count
    return settings.model_copy(update=overrides)


def _space_from_args(
    args: argparse.Namespace, settings: SnowprobeSettings
) -> FiniteMetricSpace:
    """--in file, or a --space spec sampled with the settings."""
    if args.input is not None:
        return load_space(args.input)
    if args.space is not None:
        return load_input(args.space, settings)
    raise InputError("Give --in FILE or --space SPEC")


def _emit(args: argparse.Namespace, payload: Any, rows=None) -> None:
    """Json when --json or no rows are given, otherwise csv rows. Written
    to --out or stdout."""
    if args.json or rows is None:
        text = dumps_deterministic(payload)
    else:
        buffer = io.StringIO()
        rows.to_csv(buffer, index=False, float_format="%.17g")
        text = buffer.getvalue()
    if args.out is not None:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _cmd_generate(args, settings) -> int:
    """Sample a descriptor and write the metric space json."""
    if args.space is None:
        raise InputError("generate needs --space SPEC")
    desc = parse_space_spec(args.space)
    samples = sample(
        desc,
        settings.sample_count,
        seed=settings.seed,
        max_redraws=settings.max_redraws,
    )
    contents = space_to_dict(materialize(samples))
    contents["descriptor"] = desc.to_spec()
    contents["seed"] = settings.seed
    _emit(args, contents)
    return EXIT_OK


def _cmd_validate(args, settings) -> int:
    """Report metric axiom violations."""
    space = _space_from_args(args, settings)
    rel_tol = settings.rel_tol if args.tol is None else args.tol
    violations = validate_metric(
        space,
        rel_tol=rel_tol,
        allow_zero=args.allow_zero,
        threads=settings.threads,
    )
    _emit(
        args,
        {
            "points": space.n,
            "valid": not violations,
            "violations": [v.model_dump() for v in violations],
        },
    )
    return EXIT_INVALID_METRIC if violations else EXIT_OK


def _cmd_exponent(args, settings) -> int:
    """De-snowflake exponent with its witness."""
    space = _space_from_args(args, settings)
    abs_tol = settings.abs_tol if args.tol is None else args.tol
    result = desnowflake_exponent(
        space, abs_tol=abs_tol, threads=settings.threads
    )
    _emit(
        args,
        {
            "p_star": result.p_star,
            "witness": _witness_dict(result),
            "trace": result.solver_trace.model_dump(),
        },
    )
    return EXIT_OK


def _cmd_gauge(args, settings) -> int:
    """phi(p) rows for plotting."""
    space = _space_from_args(args, settings)
    ctx = GaugeContext.build(space, args.a, args.b)
    rows = gauge_scan(ctx, args.pmin, args.pmax, args.steps)
    frame = pd.DataFrame(rows, columns=["p", "phi"])
    _emit(args, {"a": ctx.a, "b": ctx.b, "rows": rows}, rows=frame)
    return EXIT_OK


def _cmd_between(args, settings) -> int:
    """Approximate between-points."""
    space = _space_from_args(args, settings)
    rel_tol = settings.between_tol if args.tol is None else args.tol
    certificates = find_between_points(
        space, rel_tol=rel_tol, limit=args.limit, threads=settings.threads
    )
    count = count_between_points(
        space, rel_tol=rel_tol, threads=settings.threads
    )
    _emit(
        args,
        {
            "count": count,
            "rel_tol": rel_tol,
            "certificates": [c.model_dump() for c in certificates],
        },
    )
    return EXIT_OK


def _cmd_nonconvexity(args, settings) -> int:
    """Uniform non-convexity certificate or refutation."""
    space = _space_from_args(args, settings)
    verdict = uniform_nonconvexity(
        space,
        delta_grid=None if args.deltas is None else _parse_floats(args.deltas),
        lambda_grid=(
            None if args.lambdas is None else _parse_floats(args.lambdas)
        ),
        pair_budget=args.pairs or settings.pair_budget,
        seed=settings.seed,
        threads=settings.threads,
    )
    _emit(args, {"verdict": type(verdict).__name__, **verdict.model_dump()})
    return EXIT_OK


def _segment_ends(
    desc: SpaceDescriptor, args: argparse.Namespace
) -> Tuple[List[float], List[float]]:
    """--from/--to, defaulting to 0 and the first unit vector."""
    width = desc.point_dimension
    start = [0.0] * width if args.start is None else _parse_floats(args.start)
    if args.end is None:
        end = [1.0] + [0.0] * (width - 1)
    else:
        end = _parse_floats(args.end)
    return start, end


def _cmd_chains(args, settings) -> int:
    """Chain p-lengths per depth against the recursion."""
    if args.space is None:
        raise InputError("chains needs --space SPEC")
    desc = parse_space_spec(args.space)
    start, end = _segment_ends(desc, args)
    oracle = segment_oracle(desc, start, end, args.t)
    rows = chain_decay(oracle, args.p, args.depth)
    deviation = max(row.relative_error for row in rows)
    frame = pd.DataFrame([row.model_dump() for row in rows])
    _emit(
        args,
        {
            "p": args.p,
            "rows": [row.model_dump() for row in rows],
            "recursion_deviation": deviation,
        },
        rows=frame,
    )
    return EXIT_OK


def _cmd_geodesic(args, settings) -> int:
    """Dyadic geodesic rows (t, point, running defect)."""
    if args.space is None:
        raise InputError("geodesic needs --space SPEC")
    desc = parse_space_spec(args.space)
    start, end = _segment_ends(desc, args)
    check_tol = 1e-10 if args.tol is None else args.tol
    oracle = linear_between_oracle(desc, args.delta, check_tol=check_tol)
    g = construct_geodesic(oracle, start, end, args.delta, args.depth)
    rows = running_defect(g)
    deviation = isometry_defect(g)
    frame = pd.DataFrame(
        [
            {
                "t": t,
                "point": ",".join(format(c, ".17g") for c in point),
                "running_defect": defect,
            }
            for t, point, defect in rows
        ]
    )
    _emit(
        args,
        {
            "delta": args.delta,
            "depth": args.depth,
            "rows": [
                {"t": t, "point": point, "running_defect": defect}
                for t, point, defect in rows
            ],
            "isometry_defect": deviation.model_dump(),
            "adjacent_additivity_defect": adjacent_additivity_defect(g),
        },
        rows=frame,
    )
    return EXIT_OK


def _cmd_dimension(args, settings) -> int:
    """Box dimension and doubling estimate."""
    space = _space_from_args(args, settings)
    scales = None if args.scales is None else _parse_floats(args.scales)
    estimate = box_dimension(space, scales, threads=settings.threads)
    radii = [r.scale for r in estimate.records]
    doubling = doubling_constant(
        space,
        radii,
        center_budget=settings.center_budget,
        seed=settings.seed,
        threads=settings.threads,
    )
    _emit(
        args,
        {"box": estimate.model_dump(), "doubling": doubling.model_dump()},
    )
    return EXIT_OK


def _cmd_spheres(args, settings) -> int:
    """Distance-surjectivity gaps around a center."""
    space = _space_from_args(args, settings)
    center = space.index_of(args.center)
    text = args.radii
    if text.startswith("auto:"):
        try:
            count = int(text[len("auto:") :])
        except ValueError:
            raise InputError(f"Could not parse radii {text!r}", 5)
        radii = auto_radii(space, center, count)
    else:
        radii = _parse_floats(text)
    if args.gap_tol is not None:
        gap_tol = args.gap_tol
    elif len(radii) > 1:
        gap_tol = float(np.max(np.diff(sorted(radii))))
    else:
        gap_tol = 0.0
    result = sphere_surjectivity(space, center, radii, gap_tol)
    _emit(args, result.model_dump())
    return EXIT_OK


def _cmd_report(args, settings) -> int:
    """Full pipeline with a conclusion tag."""
    if args.tol is not None:
        settings = settings.model_copy(update={"report_between_tol": args.tol})
    if args.input is not None:
        report = run_report(load_space(args.input), settings)
        report = report.model_copy(update={"source": args.input})
    elif args.space is not None:
        report = run_report(args.space, settings)
    else:
        raise InputError("Give --in FILE or --space SPEC")
    _emit(args, report.model_dump())
    return report.exit_code


def _build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per analysis."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--in", dest="input", help="Metric space json/csv")
    common.add_argument("--space", help="Space spec, sampled when analysed")
    common.add_argument("--count", type=int, help="Points to sample")
    common.add_argument("--out", help="Output file; default is stdout")
    common.add_argument("--seed", type=int, help="Seed for every sampler")
    common.add_argument("--tol", type=float, help="Command tolerance")
    common.add_argument("--threads", type=int, help="Worker threads")
    common.add_argument("--json", action="store_true", help="Emit json")
    common.add_argument("--config", help="Settings json file")
    common.add_argument("--log-level", dest="log_level", help="Log level")

    parser = argparse.ArgumentParser(
        prog="snowprobe", description="Snowflake structure in metric spaces"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        """Register a subcommand."""
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler)
        return p

    add("generate", _cmd_generate, "Sample a space spec")
    p = add("validate", _cmd_validate, "Check the metric axioms")
    p.add_argument("--allow-zero", dest="allow_zero", action="store_true")
    add("exponent", _cmd_exponent, "De-snowflake exponent p*")
    p = add("gauge", _cmd_gauge, "Gauge function rows")
    p.add_argument("--a", type=int, required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--pmin", type=float, default=1.0)
    p.add_argument("--pmax", type=float, default=6.0)
    p.add_argument("--steps", type=int, default=51)
    p = add("between", _cmd_between, "Approximate between-points")
    p.add_argument("--limit", type=int, default=None)
    p = add("nonconvexity", _cmd_nonconvexity, "Uniform non-convexity")
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--deltas", default=None, help="Comma separated")
    p.add_argument("--lambdas", default=None, help="Comma separated")
    p = add("chains", _cmd_chains, "Chain refinement decay")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--from", dest="start", default=None)
    p.add_argument("--to", dest="end", default=None)
    p = add("geodesic", _cmd_geodesic, "Dyadic geodesic construction")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--from", dest="start", default=None)
    p.add_argument("--to", dest="end", default=None)
    p = add("dimension", _cmd_dimension, "Box and doubling dimension")
    p.add_argument("--scales", default=None, help="Comma separated")
    p = add("spheres", _cmd_spheres, "Distance-surjectivity gaps")
    p.add_argument("--center", type=int, default=0)
    p.add_argument("--radii", default="auto:64")
    p.add_argument("--gap-tol", dest="gap_tol", type=float, default=None)
    add("report", _cmd_report, "Full analysis with a conclusion")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the CLI.

    Parameters
    ----------
    argv : Optional[List[str]]
      Default is sys.argv[1:].

    Returns
    -------
    int
      0 on success, 1 on input errors, 2 on invalid metrics, 3 on
      inconclusive reports.

    """
    args = _build_parser().parse_args(argv)
    try:
        settings = _settings_from_args(args)
        logging.basicConfig(
            level=settings.log_level.upper(),
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
    except ValueError as e:
        sys.stderr.write(f"snowprobe: {e}\n")
        return EXIT_INPUT
    try:
        return args.handler(args, settings)
    except InvalidMetricError as e:
        sys.stderr.write(f"snowprobe: {e}\n")
        return EXIT_INVALID_METRIC
    except (ValueError, OSError) as e:
        sys.stderr.write(f"snowprobe: {e}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
