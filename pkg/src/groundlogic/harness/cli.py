"""Command-line entry point: ground, eval, trace, record.

Exit codes: 0 success, 1 usage error (bad flags, missing or malformed input
files), 2 runtime failure (a backend aborted the run).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from PIL import Image

from ..automaton import TABLE, GroundingResult, run
from ..backends import ReplayStore, recording_suite, replay_suite, suite_from_configs
from ..validation import annotate_candidate
from .config import ConfigError, RunConfig, load_config
from .dataset import SchemaError, load_dataset
from .evaluate import DEFAULT_TIMEOUT, evaluate

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file with [automaton] and [backends.<role>] sections")
    p.add_argument("--replay", type=Path, action="append", default=[], metavar="DIR",
                   help="answer backend calls from a recorded fixture (repeatable)")
    p.add_argument("--record", type=Path, metavar="DIR", help="record live backend traffic into DIR")


def _ground_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", type=Path, help="write the result JSON here instead of stdout")
    p.add_argument("--annotate", type=Path, metavar="PNG", help="save the image with the target outlined")


def _eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--parallel", type=int, default=1, metavar="N")
    p.add_argument("--report", type=Path, help="write the report JSON here instead of stdout")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="per-sample timeout in seconds")
    p.add_argument("--timing", action="store_true", help="include wall-clock timings in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="groundlogic", description="Ground referring expressions in images.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground", help="ground one query in one image")
    _ground_flags(p)
    _backend_flags(p)

    p = sub.add_parser("eval", help="evaluate a dataset file")
    _eval_flags(p)
    _backend_flags(p)

    p = sub.add_parser("trace", help="pretty-print the transition trace of a result file")
    p.add_argument("--result", type=Path, required=True)

    p = sub.add_parser("record", help="run live backends once and save a replay fixture")
    p.add_argument("--fixture", type=Path, required=True, metavar="DIR")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--image", type=Path)
    p.add_argument("--query")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--parallel", type=int, default=1, metavar="N")
    return parser


def _suite(config: RunConfig, replay: list[Path], record: Path | None):
    if replay:
        if record is not None:
            raise UsageError("--replay and --record are mutually exclusive")
        for d in replay:
            if not (d / "index.json").is_file():
                raise UsageError(f"{d} is not a replay fixture (no index.json)")
        return replay_suite(ReplayStore(replay[0], extra=replay[1:]))
    if not config.backends:
        raise UsageError("no backends configured: pass --config with [backends] sections, or --replay")
    try:
        suite = suite_from_configs(config.backends)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if record is not None:
        suite = recording_suite(suite, ReplayStore(record))
    return suite


def _run_config(path: Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    return load_config(path)


def _open_image(path: Path) -> Image.Image:
    if not path.is_file():
        raise UsageError(f"image {path} not found")
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except OSError as exc:
        raise UsageError(f"cannot read image {path}: {exc}") from exc


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _ground(image_path, query, out, annotate, suite, config) -> int:
    image = _open_image(image_path)
    if not query.strip():
        raise UsageError("--query must not be empty")
    result = run(image, query, suite, config.automaton)
    _emit(result.to_json(), out)
    if annotate is not None:
        if result.target_box is None:
            print("no target to annotate", file=sys.stderr)
        else:
            annotate.parent.mkdir(parents=True, exist_ok=True)
            annotate_candidate(image, result.target_box).image.save(annotate)
    status = result.status.value + (f" ({result.stop_reason})" if result.stop_reason else "")
    print(f"{status}: {result.target_id or 'no target'}", file=sys.stderr)
    return EXIT_RUNTIME if result.error is not None else EXIT_OK


def _eval(dataset, parallel, report_path, timeout, timing, suite, config) -> int:
    if parallel < 1:
        raise UsageError("--parallel must be >= 1")
    if timeout <= 0:
        raise UsageError("--timeout must be positive")
    if not dataset.is_file():
        raise UsageError(f"dataset {dataset} not found")
    entries = load_dataset(dataset)
    report = evaluate(entries, suite, config.automaton, parallelism=parallel, timeout=timeout)
    _emit(report.to_json(include_timing=timing), report_path)
    inc = report.metrics["including_errors"]
    print(f"{report.n_total} samples, {report.n_failed} failed, "
          f"acc@0.5 {inc['accuracy_at_50']}, mean IoU {inc['mean_iou']}", file=sys.stderr)
    return EXIT_OK


def format_trace(result: GroundingResult) -> str:
    rows = {r.row: r for r in TABLE}
    lines = [f"query: {result.query}", f"status: {result.status.value}"]
    for e in result.trace:
        lines.append(f"{e.step:>3}  row {e.row:>2}  {e.source.value} -> {e.target.value}  {rows[e.row].condition}")
        lines.append(f"           {e.snapshot}")
        if e.feedback:
            lines.append(f"           feedback: {e.feedback}")
    if result.stop_reason:
        lines.append(f"stopped: {result.stop_reason}")
    target = f"{result.target_id} {result.target_box.as_list()}" if result.target_box else "none"
    lines.append(f"target: {target}")
    return "\n".join(lines) + "\n"


def _trace(path: Path) -> int:
    if not path.is_file():
        raise UsageError(f"result file {path} not found")
    try:
        result = GroundingResult.from_dict(json.loads(path.read_text()))
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path} is not a result file: {exc}") from exc
    sys.stdout.write(format_trace(result))
    return EXIT_OK


def _dispatch(args) -> int:
    if args.command == "trace":
        return _trace(args.result)
    if args.command == "record":
        if (args.dataset is None) == (args.image is None):
            raise UsageError("record needs either --image/--query or --dataset")
        config = _run_config(args.config)
        suite = _suite(config, [], args.fixture)
        if args.dataset is not None:
            return _eval(args.dataset, args.parallel, args.out, DEFAULT_TIMEOUT, False, suite, config)
        if args.query is None:
            raise UsageError("--image requires --query")
        return _ground(args.image, args.query, args.out, None, suite, config)

    # Check inputs before touching backends so a typo fails fast.
    if args.command == "ground":
        _open_image(args.image)
    elif not args.dataset.is_file():
        raise UsageError(f"dataset {args.dataset} not found")
    config = _run_config(args.config)
    suite = _suite(config, args.replay, args.record)
    if args.command == "ground":
        return _ground(args.image, args.query, args.out, args.annotate, suite, config)
    return _eval(args.dataset, args.parallel, args.report, args.timeout, args.timing, suite, config)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (UsageError, ConfigError, SchemaError) as exc:
        print(f"groundlogic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"groundlogic: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
