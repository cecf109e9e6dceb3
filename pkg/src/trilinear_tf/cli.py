"""Command-line drivers for the numerical batteries.

Every subcommand reads its parameters from three layers, later ones winning:
built-in defaults, an optional ``--config`` file, then command-line flags.

Config files come in two forms.  A file whose first non-blank character is
``{`` is a JSON object.  Anything else is read line by line:

    # comment
    key = value

Keys are the long flag names with dashes or underscores.  Values are parsed
by the same rules as the flag of that name (lists are comma separated, point
lists use ``;`` between points, grids are ``lo:hi:count``).

Randomness: the master seed (``--seed``, a 64-bit unsigned integer) feeds
``numpy.random.SeedSequence(master, spawn_key=(c,))`` for item counter c, so
item c of a battery gets the same stream no matter how many items run or in
what order.

Each run writes ``<command>.csv`` or ``<command>.json`` and ``manifest.json``
into ``--out``.  The data file depends only on (config, seed); the manifest
adds timestamps.  Exit status: 0 success, 1 invalid input, 2 a verification
battery found a violation.
"""

import argparse
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import ExperimentConfig, log4_trend, rwt_experiment, rwt_sweep
from .fourier_coeff import sample_cubes, verify_decay
from .maximal import (
    covering_check,
    default_lambdas,
    friend_offsets,
    random_step_function,
    weak_type_test,
)
from .multiplier_op import HolderSweepConfig, holder_ratio_sweep, validate_exponents
from .symbol import DELTA_IDENTITIES, MOLLIFIER_WIDTHS, delta_width_sweep, m_plus, m_sgn
from .tilenorms import (
    JOHN_NIRENBERG_RANGE,
    enumerate_trees,
    john_nirenberg_check,
    random_coefficients,
    random_rank10_collection,
    single_tree_bound_check,
    size_energy_decompose,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED = 0, 1, 2
MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    pass


def item_rng(master, counter):
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=(counter,)))


# ---------------------------------------------------------------------------
# value parsers; each accepts a string (flag or key-value file) or a JSON value


def _split(value, sep=","):
    if isinstance(value, str):
        return [v.strip() for v in value.split(sep) if v.strip()]
    return list(value)


def parse_bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def parse_int_list(value):
    return [int(v) for v in _split(value)]


def parse_float_list(value):
    return [float(v) for v in _split(value)]


def parse_fraction_list(value):
    out = []
    for v in _split(value):
        if isinstance(v, str) and v.lower() in ("inf", "infinity"):
            out.append(math.inf)
        else:
            out.append(Fraction(v) if isinstance(v, str) else v)
    return out


def parse_axis(value):
    """``lo:hi:count`` for an evenly spaced axis, otherwise a list of values."""
    if isinstance(value, str) and ":" in value:
        lo, hi, count = value.split(":")
        count = int(count)
        if count < 0:
            raise ConfigError("axis count must be non-negative")
        return [float(x) for x in np.linspace(float(lo), float(hi), count)]
    return parse_float_list(value)


def parse_int_range(value):
    """``lo:hi`` (inclusive) or a list of integers."""
    if isinstance(value, str) and ":" in value:
        lo, hi = value.split(":")
        return list(range(int(lo), int(hi) + 1))
    return parse_int_list(value)


def parse_points(value):
    """Triples separated by ``;`` (string form) or a list of triples."""
    raw = [_split(p) for p in _split(value, ";")] if isinstance(value, str) else list(value)
    points = [tuple(float(x) for x in p) for p in raw]
    if any(len(p) != 3 for p in points):
        raise ConfigError("every point needs three coordinates")
    return points


def parse_str(value):
    return str(value)


@dataclass(frozen=True)
class Param:
    name: str
    default: object
    parse: object
    help: str = ""


def _normalize(value):
    """JSON-friendly canonical form used for hashing and for the manifest."""
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    if isinstance(value, dict):
        return {k: _normalize(v) for k, v in value.items()}
    return value


def config_hash(config):
    text = json.dumps(_normalize(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def read_config_file(path):
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return {k.replace("-", "_"): v for k, v in data.items()}
    data = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        data[key.replace("-", "_")] = value
    return data


def resolve_config(params, file_values, flag_values):
    known = {p.name: p for p in params}
    unknown = sorted(set(file_values) - set(known) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    config = {}
    for p in params:
        if flag_values.get(p.name) is not None:
            raw = flag_values[p.name]
        elif p.name in file_values:
            raw = file_values[p.name]
        else:
            config[p.name] = p.default
            continue
        try:
            config[p.name] = p.parse(raw)
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {p.name}: {raw!r} ({exc})") from None
    return config


# ---------------------------------------------------------------------------
# results and output


@dataclass
class CommandResult:
    columns: list
    rows: list
    key_columns: int  # rows are sorted on their first key_columns entries; 0 keeps the given order
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, dict):
        return {str(k): _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    if isinstance(value, Fraction):
        return str(value)
    return value


def render(result, fmt):
    rows = result.rows
    if result.key_columns:
        rows = sorted(rows, key=lambda r: tuple(r[: result.key_columns]))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(result.columns)
        writer.writerows([_cell(v) for v in row] for row in rows)
        return buf.getvalue()
    doc = {"columns": result.columns, "rows": _json_value(rows), "summary": _json_value(result.summary)}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def parallel_map(fn, items, threads):
    """Results in input order; the caller is the only writer."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# subcommands


def cmd_symbol_table(config, seed, threads):
    beta = config["beta"]
    if config["points"]:
        points = config["points"]
    else:
        points = list(itertools.product(config["xi1"], config["xi2"], config["xi3"]))
    if config["exclude_singular"]:
        tol = config["singular_tol"]
        points = [p for p in points if not (p[0] == 0 and abs(beta * p[1] + p[2]) <= tol)]
    if not points:
        raise ConfigError("the frequency grid is empty")
    xi = np.array(points, dtype=float)
    mp = m_plus(beta, xi[:, 0], xi[:, 1], xi[:, 2])
    ms = m_sgn(beta, xi[:, 0], xi[:, 1], xi[:, 2])
    rows = [[*map(float, p), float(a), float(b)] for p, a, b in zip(xi, mp, ms)]
    return CommandResult(["xi1", "xi2", "xi3", "m_plus", "m_sgn"], rows, 3, {"rows": len(rows)})


def cmd_coeff_decay(config, seed, threads):
    if not config["cases"] or not config["scales"] or not config["n_values"]:
        raise ConfigError("cases, scales and n_values must be non-empty")
    if any(c not in (1, 2, 3) for c in config["cases"]):
        raise ConfigError("cases must be drawn from 1, 2, 3")
    if config["per_scale"] < 1:
        raise ConfigError("per_scale must be positive")
    # sample_cubes already derives its per-scale streams from (seed, case, scale)
    cube_seed = int(np.random.SeedSequence(seed).generate_state(1)[0])
    cubes = [
        cube
        for case in config["cases"]
        for cube in sample_cubes(case, config["beta"], config["scales"], config["per_scale"], cube_seed)
    ]
    band = tuple(config["band"])
    report = verify_decay(cubes, config["n_values"], config["beta"], band=band)
    rows = [list(r) for r in report.rows]
    summary = {"K": {f"{c},{s}": k for (c, s), k in sorted(report.K.items())}, "violations": report.violations}
    failures = [f"case {c} scale {s}: K ratio {r:.3g} outside {band}" for c, s, r in report.violations]
    columns = ["case", "scale", "n1", "n2", "n3", "abs_C", "envelope", "ratio"]
    return CommandResult(columns, rows, 5, summary, failures)


def cmd_norm_sweep(config, seed, threads):
    exponents = tuple(config["exponents"])
    if len(exponents) != 3:
        raise ConfigError("exponents needs three values")
    accepted, _ = validate_exponents(*exponents)
    if not accepted:
        raise ConfigError(f"exponents {[str(e) for e in exponents]} are outside the admissible range")
    if config["trials"] < 1 or config["modes"] < 1:
        raise ConfigError("trials and modes must be positive")
    base = HolderSweepConfig(
        exponents=exponents,
        beta=config["beta"],
        trials=config["trials"],
        modes=config["modes"],
        seed=seed,
        oversample=config["oversample"],
    )
    records = holder_ratio_sweep(base)
    columns = ["trial", "seed", "p1", "p2", "p3", "p", "beta", "modes", "ratio"]
    rows = [r.as_row() for r in records]
    failures, summary = [], {"max_ratio": max(r.ratio for r in records)}
    if config["dilation"] != 1:
        dilated = holder_ratio_sweep(HolderSweepConfig(**{**base.__dict__, "dilation": config["dilation"]}))
        columns.append("ratio_dilated")
        worst = 0.0
        for row, rec in zip(rows, dilated):
            row.append(rec.ratio)
            worst = max(worst, abs(rec.ratio - row[-2]) / row[-2])
        summary["dilation_max_rel_change"] = worst
        if worst > config["dilation_tol"]:
            failures.append(f"dilation changed a ratio by {worst:.3g} (tolerance {config['dilation_tol']})")
    return CommandResult(columns, rows, 1, summary, failures)


def cmd_maximal(config, seed, threads):
    if config["functions"] < 1 or not config["ns"]:
        raise ConfigError("need at least one function and one shift")
    if config["lambdas"] < 1:
        raise ConfigError("lambdas must be positive")

    def run(k):
        f = random_step_function(item_rng(seed, k), J=config["J"], pieces=config["pieces"])
        lambdas = default_lambdas(f, config["lambdas"])
        out = []
        for n in config["ns"]:
            report = weak_type_test(f, n, lambdas)
            covered = all(covering_check(f, n, lam) for lam in lambdas) if config["covering"] else True
            out.append([n, k, report.max_ratio, report.max_ratio / math.log2(2 + abs(n)),
                        len(friend_offsets(n)), covered])
        return out

    rows = [row for rows in parallel_map(run, range(config["functions"]), threads) for row in rows]
    failures = [f"n={r[0]} function {r[1]}: covering failed" for r in rows if not r[5]]
    failures += [f"n={r[0]} function {r[1]}: ratio {r[2]:.4g} above friend count {r[4]}"
                 for r in rows if r[2] > r[4]]
    summary = {"fitted_constant": max(r[3] for r in rows)}
    columns = ["n", "function", "max_ratio", "normalized", "friend_count", "covering"]
    return CommandResult(columns, rows, 2, summary, failures)


def cmd_tilenorms(config, seed, threads):
    if config["instances"] < 1 or config["collection_size"] < 1:
        raise ConfigError("instances and collection_size must be positive")
    cases = config["cases"]
    if not cases or any(c not in (1, 2, 3) for c in cases):
        raise ConfigError("cases must be a non-empty list drawn from 1, 2, 3")

    def run(k):
        rng = item_rng(seed, k)
        case = cases[k % len(cases)]
        quads = random_rank10_collection(rng, config["collection_size"], case, config["beta"],
                                         config["max_scale"], config["positions"])
        coeffs = random_coefficients(rng, quads)
        trees = [t for i in (2, 3, 4) for t in enumerate_trees(quads, i)]
        picks = rng.choice(len(trees), size=min(config["trees"], len(trees)), replace=False)
        margin = min(single_tree_bound_check(coeffs, trees[t]) for t in picks)
        out = []
        for j in (1, 2, 3, 4):
            strat = size_energy_decompose(coeffs, quads, j)
            out.append([k, j, case, john_nirenberg_check(coeffs, quads, j), strat.energy, strat.size,
                        strat.fitted_constant(), strat.bounds_hold(), margin])
        return out

    rows = [row for rows in parallel_map(run, range(config["instances"]), threads) for row in rows]
    lo, hi = JOHN_NIRENBERG_RANGE
    failures = [f"instance {r[0]} j={r[1]}: John-Nirenberg ratio {r[3]:.4g}" for r in rows if not lo <= r[3] <= hi]
    failures += [f"instance {r[0]} j={r[1]}: stratum size bound broken" for r in rows if not r[7]]
    failures += [f"instance {r[0]}: single-tree margin {r[8]:.3g}" for r in rows if r[1] == 1 and r[8] < -1e-12]
    constants = [r[6] for r in rows if r[6] > 0]
    summary = {"stratification_constant_spread": max(constants) / min(constants) if constants else 1.0}
    columns = ["instance", "j", "case", "john_nirenberg", "energy", "size", "strat_constant",
               "bounds_hold", "min_tree_margin"]
    return CommandResult(columns, rows, 2, summary, failures)


_RWT_KEYS = ("beta", "gammas", "case", "max_scale", "collection_size", "positions", "measures",
             "set_family", "shifts", "C", "grid_J", "random_phases")


def cmd_rwt(config, seed, threads):
    try:
        exp = ExperimentConfig(seed=seed, **{k: config[k] for k in _RWT_KEYS})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    failures = []
    if config["sweep"]:
        sweep = rwt_sweep(exp)
        rows = [
            [r.label, *r.measures, *r.shifts, r.ratio, r.omega, r.e4_prime, r.stratum_sum_error, r.decay_slope]
            for r in sweep
        ]
        columns = ["label", "m1", "m2", "m3", "n1", "n2", "n3", "ratio", "omega", "e4_prime",
                   "stratum_sum_error", "decay_slope"]
        summary = {"log4_trend": log4_trend(sweep),
                   "max_ratio": max(r[7] for r in rows)}
        failures += [f"{r[0]} run: |E4'| = {r[9]}" for r in rows if r[9] < 0.5]
        return CommandResult(columns, rows, 7, summary, failures)
    rep = rwt_experiment(exp)
    rows = [[d, n, re, im] for d, n, (re, im) in rep.strata]
    scale = sum(math.hypot(re, im) for _, _, re, im in rows)
    summary = {k: v for k, v in rep.to_dict().items() if k not in ("config", "strata")}
    if rep.e4_prime_measure < 0.5:
        failures.append(f"|E4'| = {rep.e4_prime_measure} < 1/2")
    if rep.stratum_sum_error > 1e-10 * max(scale, abs(rep.total)):
        failures.append(f"strata miss the total by {rep.stratum_sum_error:.3g}")
    return CommandResult(["d", "count", "contribution_re", "contribution_im"], rows, 1, summary, failures)


def cmd_identity(config, seed, threads):
    identities = config["identities"]
    if not identities or not config["points"] or len(config["widths"]) < 2:
        raise ConfigError("need identities, points and at least two widths")
    bad = sorted(set(identities) - set(DELTA_IDENTITIES))
    if bad:
        raise ConfigError(f"unknown identities: {bad}")
    widths = tuple(config["widths"])

    def run(job):
        identity, (pi, point) = job
        residuals, orders = delta_width_sweep(identity, config["beta"], point, widths)
        orders = [math.nan, *orders]
        return [[identity, pi, *point, w, r, o] for w, r, o in zip(widths, residuals, orders)]

    jobs = list(itertools.product(identities, enumerate(config["points"])))
    rows = [row for rows in parallel_map(run, jobs, threads) for row in rows]
    failures = []
    for identity, (pi, _) in jobs:
        mine = [r for r in rows if r[0] == identity and r[1] == pi]
        if mine[-1][6] > config["tolerance"]:
            failures.append(f"identity {identity} point {pi}: final residual {mine[-1][6]:.3g}")
        if any(r[7] < config["min_order"] for r in mine[1:]):
            failures.append(f"identity {identity} point {pi}: observed order below {config['min_order']}")
    columns = ["identity", "point", "xi1", "xi2", "xi3", "width", "residual", "order"]
    rows.sort(key=lambda r: (r[0], r[1], -r[5]))  # widths in halving order
    return CommandResult(columns, rows, 0, {}, failures)


@dataclass(frozen=True)
class Command:
    name: str
    run: object
    params: tuple
    help: str


COMMANDS = {
    c.name: c
    for c in (
        Command("symbol-table", cmd_symbol_table, (
            Param("beta", 2.0, float),
            Param("xi1", [-1.0, 0.0, 1.0], parse_axis, "values or lo:hi:count"),
            Param("xi2", [-1.0, 0.0, 1.0], parse_axis, "values or lo:hi:count"),
            Param("xi3", [-2.0, 0.0, 2.0], parse_axis, "values or lo:hi:count"),
            Param("points", [], parse_points, "explicit triples 'a,b,c;d,e,f' (replaces the grid)"),
            Param("exclude_singular", False, parse_bool, "drop points with xi1 = 0 and beta*xi2 + xi3 = 0"),
            Param("singular_tol", 1e-12, float),
        ), "m_plus and m_sgn over a frequency grid"),
        Command("coeff-decay", cmd_coeff_decay, (
            Param("beta", 2.0, float),
            Param("cases", [1, 2, 3], parse_int_list),
            Param("scales", [-1, 0, 1], parse_int_range, "lo:hi or a list"),
            Param("per_scale", 1, int),
            Param("n_values", [-2, -1, 0, 1, 2], parse_int_range, "lo:hi or a list"),
            Param("band", [0.25, 4.0], parse_float_list, "allowed K ratio against scale 0"),
        ), "fitted constants of the Fourier coefficient envelope"),
        Command("norm-sweep", cmd_norm_sweep, (
            Param("exponents", [4, 4, 4], parse_fraction_list, "p1,p2,p3; fractions like 4/3 allowed"),
            Param("beta", 2.0, float),
            Param("trials", 20, int),
            Param("modes", 8, int),
            Param("oversample", 8, int),
            Param("dilation", 1, int, "rerun with the inputs dilated by this integer and compare; "
                  "powers of two reuse the same samples, other factors carry the Riemann-sum error"),
            Param("dilation_tol", 1e-6, float),
        ), "Hoelder ratios of the reduced operator on random band-limited inputs"),
        Command("maximal-test", cmd_maximal, (
            Param("functions", 4, int),
            Param("ns", [1, 2, 4, 8, 16, 32, 64], parse_int_list),
            Param("J", 10, int),
            Param("pieces", 8, int),
            Param("lambdas", 8, int),
            Param("covering", True, parse_bool),
        ), "weak-type ratios and covering checks for the shifted maximal function"),
        Command("tilenorm-test", cmd_tilenorms, (
            Param("instances", 3, int),
            Param("cases", [1, 2, 3], parse_int_list),
            Param("beta", 2.0, float),
            Param("collection_size", 40, int),
            Param("max_scale", 7, int),
            Param("positions", 8, int),
            Param("trees", 10, int),
        ), "size, energy, John-Nirenberg and stratification battery"),
        Command("rwt", cmd_rwt, (
            Param("beta", 2.0, float),
            Param("gammas", [0.95, 0.45, 0.95], parse_float_list),
            Param("case", 2, int),
            Param("max_scale", 6, int),
            Param("collection_size", 40, int),
            Param("positions", 16, int),
            Param("measures", [1 / 64, 1 / 16, 1 / 64], parse_float_list),
            Param("set_family", "concentrated", parse_str),
            Param("shifts", [0, 0, 0], parse_int_list),
            Param("C", 8.0, float),
            Param("grid_J", 10, int),
            Param("random_phases", False, parse_bool),
            Param("sweep", False, parse_bool, "run the size and shift sweep instead of one run"),
        ), "restricted weak type pipeline"),
        Command("identity-check", cmd_identity, (
            Param("beta", 2.0, float),
            Param("identities", list("abcdef"), lambda v: list(v) if isinstance(v, (list, tuple)) else
                  [c for c in str(v) if c not in ", "]),
            Param("points", [(1.0, 0.3, -0.8)], parse_points),
            Param("widths", list(MOLLIFIER_WIDTHS), parse_float_list),
            Param("tolerance", 1e-4, float),
            Param("min_order", 1.0, float),
        ), "mollified residuals of the distributional identities"),
    )
}


# ---------------------------------------------------------------------------
# entry point


def _seed(text):
    value = int(text)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key-value or JSON config file")
    common.add_argument("--seed", type=_seed, default=None, help="64-bit master seed (default 0)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="trilinear-tf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS.values():
        p = sub.add_parser(cmd.name, parents=[common], help=cmd.help)
        for param in cmd.params:
            p.add_argument("--" + param.name.replace("_", "-"), dest=param.name, default=None,
                           help=f"{param.help} (default {_normalize(param.default)})".strip())
    return parser


def run(argv=None, now=None):
    """Parse, execute and write outputs; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    now = now or (lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    cmd = COMMANDS[args.command]
    started = now()
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        file_values = read_config_file(args.config) if args.config else {}
        seed = args.seed if args.seed is not None else _seed(file_values.get("seed", 0))
        config = resolve_config(cmd.params, file_values, vars(args))
        result = cmd.run(config, seed, args.threads)
    except (ConfigError, ValueError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"{cmd.name}: {exc}", file=sys.stderr)
        return EXIT_INVALID

    args.out.mkdir(parents=True, exist_ok=True)
    data = args.out / f"{cmd.name}.{args.format}"
    data.write_text(render(result, args.format), encoding="utf-8")
    manifest = {
        "tool": "trilinear-tf",
        "tool_version": __version__,
        "command": cmd.name,
        "config": _normalize(config),
        "config_hash": config_hash(config),
        "seed": seed,
        "started": started,
        "finished": now(),
        "outputs": [{"path": data.name, "sha256": hashlib.sha256(data.read_bytes()).hexdigest()}],
        "summary": _json_value(result.summary),
        "failures": result.failures,
    }
    (args.out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    for line in result.failures:
        print(f"{cmd.name}: FAILED {line}", file=sys.stderr)
    return EXIT_CHECK_FAILED if result.failures else EXIT_OK


def main():
    sys.exit(run())
