"""Command-line experiment driver.

Every subcommand reads its parameters from flags (optionally prefilled from a
key=value config file; flags win), runs one experiment, writes CSV outputs
plus a JSON run manifest, and exits 0 on success.  Outputs are a pure
function of (config, seed) byte for byte; the manifest additionally records
wall-clock time, output checksums, any capacity caps that fired, and the
random-substream derivation identifier.

Exit codes: 2 for configuration errors, 3 for capacity errors, 4 for
numerical invariant violations.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, cube, discrete, profiles, yule
from .acceptance import DEFAULT_SEED, run_all
from .errors import (
    CapacityError,
    ConfigError,
    NumericalInvariantError,
    RecombError,
)
from .streams import STREAM_ALGORITHM, rng_substream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_NUMERICAL = 4

OUT_DIR_ENV = "RECOMBLAB_OUT_DIR"

# fixed Monte Carlo chunk size: the chunk plan depends only on the sample
# count, so results are identical for every worker-pool width
CHUNK_SIZE = 10_000
CHUNK_TASK_BASE = 100


# ---------------------------------------------------------------------------
# small parsing helpers
# ---------------------------------------------------------------------------

_NUMBER_VALUE = re.compile(r"^-[0-9][0-9.,]*(\.\.\-?[0-9][0-9.]*)?$")


def _join_negative_values(argv: List[str]) -> List[str]:
    """Fold `--flag -4..4` into `--flag=-4..4` so argparse accepts it."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (
            tok.startswith("--")
            and "=" not in tok
            and i + 1 < len(argv)
            and _NUMBER_VALUE.match(argv[i + 1])
        ):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _parse_grid(text: str) -> List[float]:
    """Grid syntax: `a..b` (inclusive integer range), `a,b,c`, or a scalar."""
    text = text.strip()
    try:
        if ".." in text:
            lo_txt, hi_txt = text.split("..", 1)
            lo, hi = int(lo_txt), int(hi_txt)
            if hi < lo:
                raise ValueError("range upper end below lower end")
            return [float(v) for v in range(lo, hi + 1)]
        if "," in text:
            return [float(v) for v in text.split(",")]
        return [float(text)]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {err}") from None


def _load_config_file(path: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        values[key] = value.strip()
    return values


def _apply_config_file(parser: argparse.ArgumentParser, ns: argparse.Namespace):
    """Fill flags the user left unset from the config file, then defaults.

    Every option is declared with a None default and its real default kept
    in the action's metadata, so 'unset' is detectable and precedence is
    flag > file > default.
    """
    cfg = _load_config_file(ns.config) if ns.config else {}
    known = set()
    for action in parser._actions:
        if action.dest in ("help", "config"):
            continue
        known.add(action.dest)
        if getattr(ns, action.dest, None) is not None:
            continue
        hard_default = getattr(action, "real_default", None)
        if action.dest in cfg:
            text = cfg.pop(action.dest)
            if isinstance(action, argparse._StoreTrueAction):
                lowered = text.lower()
                if lowered not in ("true", "false", "1", "0"):
                    raise ConfigError(
                        f"config key {action.dest}: expected true/false, got {text!r}"
                    )
                setattr(ns, action.dest, lowered in ("true", "1"))
            else:
                convert = action.type or str
                try:
                    setattr(ns, action.dest, convert(text))
                except (ValueError, argparse.ArgumentTypeError) as err:
                    raise ConfigError(f"config key {action.dest}: {err}") from None
        else:
            setattr(ns, action.dest, hard_default)
    cfg.pop("command", None)
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")


def _require(ns: argparse.Namespace, *names: str):
    for name in names:
        if getattr(ns, name, None) is None:
            flag = "--" + name.replace("_", "-")
            raise ConfigError(f"{flag} is required (flag or config file)")


# ---------------------------------------------------------------------------
# run context: outputs, checksums, manifest
# ---------------------------------------------------------------------------


@dataclass
class RunContext:
    command: str
    out_dir: Path
    parameters: Dict[str, object]
    outputs: List[Dict[str, object]] = field(default_factory=list)
    capacity_events: List[Dict[str, object]] = field(default_factory=list)
    started_at: str = ""
    _clock: float = 0.0

    def __post_init__(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.started_at = datetime.now(timezone.utc).isoformat()
        self._clock = time.perf_counter()

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def _register(self, path: Path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.outputs.append(
            {"file": path.name, "sha256": digest, "bytes": path.stat().st_size}
        )

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, newline="")
        os.replace(tmp, path)
        self._register(path)
        return path

    def write_with(self, name: str, writer_fn) -> Path:
        """Write through a callable that takes a path, atomically."""
        path = self.path(name)
        tmp = path.with_name(path.name + ".tmp")
        writer_fn(tmp)
        os.replace(tmp, path)
        self._register(path)
        return path

    def write_rows(self, name: str, header: Sequence[str], rows) -> Path:
        buf = []
        writer_target = _ListWriter(buf)
        writer = csv.writer(writer_target, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        return self.write_text(name, "".join(buf))

    def record_capacity(self, err: CapacityError):
        self.capacity_events.append({"message": str(err), **err.stats})

    def finish(self, status: int) -> Path:
        manifest = {
            "command": self.command,
            "version": __version__,
            "stream_algorithm": STREAM_ALGORITHM,
            "started_at": self.started_at,
            "wall_seconds": round(time.perf_counter() - self._clock, 6),
            "parameters": self.parameters,
            "outputs": self.outputs,
            "capacity_events": self.capacity_events,
            "exit_status": status,
        }
        path = self.path(f"{self.command.replace('-', '_')}_manifest.json")
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)
        return path


class _ListWriter:
    def __init__(self, sink: List[str]):
        self.sink = sink

    def write(self, text: str):
        self.sink.append(text)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def _resolve_out_dir(flag_value: Optional[str]) -> Path:
    if flag_value:
        return Path(flag_value)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    return Path.cwd()


# ---------------------------------------------------------------------------
# shared input loading
# ---------------------------------------------------------------------------


def _load_start(spec: str, n: Optional[int]) -> cube.Pmf:
    """A start measure: `mono`, `uniform`, `point:BITS`, or a CSV path."""
    if spec in ("mono", "uniform") or spec.startswith("point:"):
        if n is None:
            raise ConfigError(f"--n is required with start {spec!r}")
        if spec == "mono":
            return cube.monochromatic_pmf(n)
        if spec == "uniform":
            return cube.uniform_pmf(n)
        try:
            bits = int(spec.split(":", 1)[1], 0)
        except ValueError:
            raise ConfigError(f"bad point spec {spec!r}") from None
        return cube.point_mass(n, bits)
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"start {spec!r} is neither a named start nor a file")
    pmf = cube.pmf_from_csv(path)
    if n is not None and pmf.n != n:
        raise ConfigError(f"{spec} holds {pmf.n} sites, --n says {n}")
    return pmf


def _chunk_plan(total: int) -> List[int]:
    sizes = []
    left = total
    while left > 0:
        take = min(CHUNK_SIZE, left)
        # Welford/std needs at least 2 per chunk; merge a trailing 1
        if left - take == 1:
            take += 1
        sizes.append(take)
        left -= take
    return sizes


def _sample_martingale(
    t: float, total: int, seed: int, workers: int, method: str
) -> yule.MartingaleBatch:
    """Chunked martingale sampling with order fixed by task id.

    The sampler choice and the chunk plan depend only on (t, total), never
    on the worker count, so the concatenated batch is reproducible for any
    parallelism degree.
    """
    if method == "auto":
        method = "direct" if 2.0 * total * math.exp(t) <= 250_000_000 else "cascade"
    sizes = _chunk_plan(total)

    def run_chunk(task: tuple) -> yule.MartingaleBatch:
        idx, size = task
        rng = rng_substream(seed, CHUNK_TASK_BASE + idx)
        return yule.martingale_samples(t, size, rng, method=method)

    tasks = list(enumerate(sizes))
    if workers <= 1 or len(tasks) == 1:
        parts = [run_chunk(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, tasks))
    return yule.MartingaleBatch(
        horizon=float(t),
        values=np.concatenate([p.values for p in parts]),
        leaf_counts=np.concatenate([p.leaf_counts for p in parts]),
        method=method,
    )


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_collide(ns, ctx: RunContext) -> int:
    _require(ns, "a", "b")
    a = _load_start(ns.a, ns.n)
    b = _load_start(ns.b, ns.n)
    out = discrete.collide_pmf(a, b)
    ctx.write_with(ns.out, lambda p: cube.pmf_to_csv(out, p))
    return EXIT_OK


def _cmd_evolve_discrete(ns, ctx: RunContext) -> int:
    _require(ns, "start", "steps")
    state = discrete.evolve_discrete(_load_start(ns.start, ns.n), ns.steps)
    ctx.write_with(ns.out, lambda p: cube.pmf_to_csv(state, p))
    return EXIT_OK


def _cmd_evolve_continuous(ns, ctx: RunContext) -> int:
    _require(ns, "start", "t")
    state = yule.evolve_continuous(_load_start(ns.start, ns.n), ns.t, step=ns.step)
    ctx.write_with(ns.out, lambda p: cube.pmf_to_csv(state, p))
    return EXIT_OK


def _cmd_profile_discrete(ns, ctx: RunContext) -> int:
    _require(ns, "n", "lambda_grid")
    windows = []
    for w in ns.lambda_grid:
        if w != int(w):
            raise ConfigError(f"discrete profile windows must be integers, got {w}")
        windows.append(int(w))
    points = profiles.discrete_profile(ns.n, windows, t_base=ns.t_base)
    rows = [
        (float(p.window), p.scale, p.tv, profiles.gaussian_tv(p.scale), p.bound_upper)
        for p in points
    ]
    ctx.write_rows(ns.out, ["lambda", "s", "tv_exact", "phi_s", "upper_bound"], rows)
    return EXIT_OK


def _cmd_profile_continuous(ns, ctx: RunContext) -> int:
    _require(ns, "lambda_grid", "seed")
    batch = _sample_martingale(ns.horizon, ns.samples, ns.seed, ns.workers, ns.method)
    points = profiles.continuous_profile(ns.lambda_grid, batch.values, dz=ns.z_step)
    rows = [(p.window, p.scale, p.tv, p.bound_upper, p.bound_lower) for p in points]
    ctx.write_rows(ns.out, ["lambda", "scale", "tv", "upper", "lower"], rows)
    return EXIT_OK


def _cmd_fragmentation(ns, ctx: RunContext) -> int:
    _require(ns, "n", "trials", "seed")
    rng = rng_substream(ns.seed, 0)
    rows = []
    for trial in range(ns.trials):
        rows.append((trial, discrete.fragmentation_time(ns.n, rng)))
    ctx.write_rows(ns.out, ["trial", "time"], rows)
    return EXIT_OK


def _cmd_martingale(ns, ctx: RunContext) -> int:
    _require(ns, "t", "samples", "seed")
    batch = _sample_martingale(ns.t, ns.samples, ns.seed, ns.workers, ns.method)
    rows = [
        (i, float(ns.t), float(v), int(c))
        for i, (v, c) in enumerate(zip(batch.values, batch.leaf_counts))
    ]
    ctx.write_rows(ns.out, ["sample", "t", "W", "leaves"], rows)
    return EXIT_OK


def _cmd_w_tail(ns, ctx: RunContext) -> int:
    _require(ns, "samples", "seed", "eps")
    horizon = ns.horizon if ns.t is None else ns.t
    batch = _sample_martingale(horizon, ns.samples, ns.seed, ns.workers, ns.method)
    rows = []
    for eps in ns.eps:
        est = yule.tail_probability_from_samples(batch.values, eps)
        rows.append(
            (eps, est.probability, est.stderr, est.ci_low, est.ci_high, est.samples)
        )
    ctx.write_rows(
        ns.out,
        ["eps", "probability", "stderr", "ci_low", "ci_high", "samples"],
        rows,
    )
    return EXIT_OK


def _report_rows(report) -> List[tuple]:
    rows = []
    for name, value in vars(report).items():
        if name in ("spec",):
            spec = value
            rows.append(("block_size", spec.block_size))
            rows.append(("block_count", spec.block_count))
            rows.append(("leftover", spec.leftover))
        elif value is None or isinstance(value, (int, float, bool, str)):
            rows.append((name, value))
    return rows


def _cmd_lowerbound_discrete(ns, ctx: RunContext) -> int:
    _require(ns, "n", "t")
    rng = None
    if ns.mc_samples:
        _require(ns, "seed")
        rng = rng_substream(ns.seed, 0)
    report = profiles.lowerbound_experiment_discrete(
        ns.n, int(ns.t), rng=rng, mc_samples=ns.mc_samples or 0
    )
    rows = _report_rows(report)
    if report.mc is not None:
        rows.extend(_report_rows(report.mc))
    ctx.write_rows(ns.out, ["key", "value"], rows)
    return EXIT_OK


def _cmd_lowerbound_continuous(ns, ctx: RunContext) -> int:
    _require(ns, "n", "t", "trees", "seed")
    report = profiles.lowerbound_experiment_continuous(
        ns.n, ns.t, ns.trees, rng_substream(ns.seed, 0), inner_samples=ns.inner
    )
    ctx.write_rows(ns.out, ["key", "value"], _report_rows(report))
    return EXIT_OK


def _cmd_spinal_check(ns, ctx: RunContext) -> int:
    _require(ns, "t", "samples", "seed")
    report = yule.spinal_identity_check(ns.t, ns.samples, rng_substream(ns.seed, 0))
    rows = [
        (r.name, r.weighted_mean, r.plain_mean, r.z, r.analytic, r.z_analytic)
        for r in report.results
    ]
    ctx.write_rows(
        ns.out,
        ["functional", "weighted_mean", "plain_mean", "z", "analytic", "z_analytic"],
        rows,
    )
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def _cmd_selftest(ns, ctx: RunContext) -> int:
    seed = ns.seed if ns.seed is not None else DEFAULT_SEED
    results = run_all(seed, printer=print)
    rows = [(r.number, r.slug, int(r.passed), round(r.seconds, 3), r.summary) for r in results]
    ctx.write_rows(ns.out, ["criterion", "slug", "passed", "seconds", "summary"], rows)
    return EXIT_OK if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# parser construction
# ---------------------------------------------------------------------------


def _add(parser, flag, *, type=None, default=None, help="", dest=None):
    kwargs = {"help": help, "default": None, "type": type or str}
    if dest:
        kwargs["dest"] = dest
    act = parser.add_argument(flag, **kwargs)
    act.real_default = default
    return act


def _common_flags(sub):
    _add(sub, "--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or cwd)")
    sub.add_argument("--config", default=None, help="key=value config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recomblab",
        description="Recombination dynamics on the Boolean cube: exact evolution, "
        "Monte Carlo tree representations, and mixing profiles.",
    )
    parser.add_argument("--version", action="version", version=f"recomblab {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="command")

    p = subs.add_parser("collide", help="one collision of two measures")
    _add(p, "--n", type=int, help="number of sites (needed for named starts)")
    _add(p, "--a", help="first measure: mono | uniform | point:BITS | csv path")
    _add(p, "--b", help="second measure")
    _add(p, "--out", default="collide.csv", help="output pmf csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_collide)

    p = subs.add_parser("evolve-discrete", help="iterate the self-collision map")
    _add(p, "--n", type=int, help="number of sites")
    _add(p, "--start", help="start measure: mono | uniform | point:BITS | csv path")
    _add(p, "--steps", type=int, help="number of steps")
    _add(p, "--out", default="evolved_discrete.csv", help="output pmf csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_evolve_discrete)

    p = subs.add_parser("evolve-continuous", help="integrate the continuous dynamics")
    _add(p, "--n", type=int, help="number of sites")
    _add(p, "--start", help="start measure: mono | uniform | point:BITS | csv path")
    _add(p, "--t", type=float, help="horizon")
    _add(p, "--step", type=float, default=0.01, help="integrator step bound")
    _add(p, "--out", default="evolved_continuous.csv", help="output pmf csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_evolve_continuous)

    p = subs.add_parser(
        "profile-discrete", help="exact distance profile around the mixing window"
    )
    _add(p, "--n", type=int, help="number of sites")
    _add(p, "--lambda", type=_parse_grid, dest="lambda_grid", help="window grid, e.g. -4..4")
    _add(p, "--t-base", type=int, help="base step count (default: round(log2 n))")
    _add(p, "--seed", type=int, help="echoed to the manifest; unused (exact pipeline)")
    _add(p, "--out", default="profile_discrete.csv", help="output csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_profile_discrete)

    p = subs.add_parser(
        "profile-continuous", help="sampled mixture profile of the continuous limit"
    )
    _add(p, "--lambda", type=_parse_grid, dest="lambda_grid", help="window grid, e.g. -4..4")
    _add(p, "--samples", type=int, default=10_000, help="martingale sample count")
    _add(p, "--horizon", type=float, default=30.0, help="limit surrogate horizon")
    _add(p, "--method", default="auto", help="martingale sampler: auto|direct|cascade")
    _add(p, "--z-step", type=float, default=1e-3, help="quadrature step")
    _add(p, "--seed", type=int, help="master seed (required)")
    _add(p, "--workers", type=int, default=1, help="worker threads")
    _add(p, "--out", default="profile_continuous.csv", help="output csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_profile_continuous)

    p = subs.add_parser("fragmentation", help="sample full-fragmentation times")
    _add(p, "--n", type=int, help="number of sites")
    _add(p, "--trials", type=int, default=1000, help="number of runs")
    _add(p, "--seed", type=int, help="master seed (required)")
    _add(p, "--out", default="fragmentation.csv", help="output csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_fragmentation)

    p = subs.add_parser("martingale", help="sample the additive leaf-weight martingale")
    _add(p, "--t", type=float, help="horizon")
    _add(p, "--samples", type=int, default=10_000, help="sample count")
    _add(p, "--method", default="auto", help="auto|direct|cascade")
    _add(p, "--seed", type=int, help="master seed (required)")
    _add(p, "--workers", type=int, default=1, help="worker threads")
    _add(p, "--out", default="martingale.csv", help="output csv (sample,t,W,leaves)")
    _common_flags(p)
    p.set_defaults(fn=_cmd_martingale)

    p = subs.add_parser("w-tail", help="small-value tail of the martingale")
    _add(p, "--t", type=float, help="horizon (omit to use --horizon limit surrogate)")
    _add(p, "--horizon", type=float, default=30.0, help="limit surrogate horizon")
    _add(p, "--eps", type=_parse_grid, help="thresholds, e.g. 0.5,0.25,0.125")
    _add(p, "--samples", type=int, default=100_000, help="sample count")
    _add(p, "--method", default="auto", help="auto|direct|cascade")
    _add(p, "--seed", type=int, help="master seed (required)")
    _add(p, "--workers", type=int, default=1, help="worker threads")
    _add(p, "--out", default="w_tail.csv", help="output csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_w_tail)

    p = subs.add_parser(
        "lowerbound-discrete", help="exact block-event distance lower bound"
    )
    _add(p, "--n", type=int, help="number of sites")
    _add(p, "--t", type=float, help="step count")
    _add(p, "--mc-samples", type=int, default=0, help="optional MC moment validation")
    _add(p, "--seed", type=int, help="master seed (required with --mc-samples)")
    _add(p, "--out", default="lowerbound_discrete.csv", help="output csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_lowerbound_discrete)

    p = subs.add_parser(
        "lowerbound-continuous", help="sampled block-event lower bound, continuous time"
    )
    _add(p, "--n", type=int, help="number of sites")
    _add(p, "--t", type=float, help="horizon")
    _add(p, "--trees", type=int, default=400, help="sampled trees")
    _add(p, "--inner", type=int, default=2048, help="sign draws per tree")
    _add(p, "--seed", type=int, help="master seed (required)")
    _add(p, "--out", default="lowerbound_continuous.csv", help="output csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_lowerbound_continuous)

    p = subs.add_parser("spinal-check", help="size-biased reweighting identity check")
    _add(p, "--t", type=float, help="horizon")
    _add(p, "--samples", type=int, default=200_000, help="paths per side")
    _add(p, "--seed", type=int, help="master seed (required)")
    _add(p, "--out", default="spinal_check.csv", help="output csv")
    _common_flags(p)
    p.set_defaults(fn=_cmd_spinal_check)

    p = subs.add_parser("selftest", help="run the acceptance registry")
    _add(p, "--seed", type=int, default=DEFAULT_SEED, help="registry master seed")
    _add(p, "--out", default="selftest.csv", help="result table")
    _common_flags(p)
    p.set_defaults(fn=_cmd_selftest)

    return parser


def _echo_parameters(ns: argparse.Namespace) -> Dict[str, object]:
    skip = {"fn", "command"}
    return {
        key: value
        for key, value in sorted(vars(ns).items())
        if key not in skip
    }


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    ns = parser.parse_args(_join_negative_values(argv))
    if ns.command is None:
        parser.print_help()
        return EXIT_CONFIG
    sub = next(
        action.choices[ns.command]
        for action in parser._actions
        if isinstance(action, argparse._SubParsersAction)
    )
    try:
        _apply_config_file(sub, ns)
        ctx = RunContext(
            command=ns.command,
            out_dir=_resolve_out_dir(ns.out_dir),
            parameters=_echo_parameters(ns),
        )
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    status = EXIT_OK
    try:
        status = ns.fn(ns, ctx)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        status = EXIT_CONFIG
    except CapacityError as err:
        print(f"capacity error: {err}", file=sys.stderr)
        ctx.record_capacity(err)
        status = EXIT_CAPACITY
    except NumericalInvariantError as err:
        print(f"numerical invariant violated: {err}", file=sys.stderr)
        status = EXIT_NUMERICAL
    except RecombError as err:
        print(f"error: {err}", file=sys.stderr)
        status = EXIT_CONFIG
    ctx.finish(status)
    return status


if __name__ == "__main__":
    sys.exit(main())
