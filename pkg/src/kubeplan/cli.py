"""Command-line entry point: plan, emit, simulate, bench.

Exit codes: 0 success, 1 usage or parse error, 2 no feasible plan,
3 pods left unschedulable.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bench import CASE_NAMES, POLICIES, MissingFixture, UnknownCase, compare_all, fixtures_dir, load_case, simulate
from .model import ModelError, parse_application, parse_offers, parse_plan, write_plan
from .optimizer import Status, solve
from .predeployer import ManifestFlavor, TranslationError, emit_manifests, provisioning_script, translate
from .scheduler import K8sSimParams, render_table

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_UNSCHEDULABLE = 3

log = logging.getLogger("kubeplan")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from exc


def _write_or_print(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_plan(args: argparse.Namespace) -> int:
    if args.case:
        case = load_case(args.case)
        app, catalog = case.app, case.catalog
    else:
        if not (args.app and args.offers):
            raise ModelError("plan needs --app and --offers, or --case")
        app = parse_application(_read(args.app))
        catalog = parse_offers(_read(args.offers))
    report = solve(app, catalog, args.max_nodes)
    log.info("solve: %s after %d search nodes in %.2fs", report.status.value, report.nodes_explored, report.elapsed)
    if report.status is not Status.OPTIMAL:
        print(f"no plan: {report.status.value}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write_or_print(write_plan(app, report.plan), args.out)
    return EXIT_OK


def cmd_emit(args: argparse.Namespace) -> int:
    app, plan = parse_plan(_read(args.plan))
    manifests = translate(app, plan, ManifestFlavor(args.flavor))
    out = Path(args.out)
    try:
        paths = emit_manifests(manifests, out)
        script = out / "provision.sh"
        script.write_text(provisioning_script(plan), encoding="utf-8")
    except OSError as exc:
        print(f"cannot write to {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    for p in [*paths, script]:
        print(p)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    app, plan = parse_plan(_read(args.plan))
    params = K8sSimParams(percentage_of_nodes_to_score=args.percent)
    cluster, result = simulate(app, plan, args.policy, params)
    sys.stdout.write(render_table(result, cluster, app))
    if args.out:
        _write_or_print("\n".join(result.trace) + "\n", args.out)
        print(f"trace: {args.out}")
    return EXIT_OK if result.all_scheduled else EXIT_UNSCHEDULABLE


def cmd_bench(args: argparse.Namespace) -> int:
    names = [args.case] if args.case else None
    summary = compare_all(names)
    sys.stdout.write(summary.text)
    if args.out:
        _write_or_print(summary.text, args.out)
    return EXIT_OK if summary.ok else EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kubeplan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="compute a cost-minimal deployment plan")
    p.add_argument("--app", help="application description (JSON)")
    p.add_argument("--offers", help="offer catalog (JSON)")
    p.add_argument("--case", choices=CASE_NAMES, help="use a bundled scenario instead of --app/--offers")
    p.add_argument("--max-nodes", type=int, default=None)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("emit", help="write manifests and a provisioning script for a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--flavor", choices=[f.value for f in ManifestFlavor], default="sage")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("simulate", help="place a plan's pods with one scheduler policy")
    p.add_argument("--plan", required=True)
    p.add_argument("--policy", choices=POLICIES, default="sage")
    p.add_argument("--percent", type=int, default=50, help="percentage of nodes to score (k8s)")
    p.add_argument("--out", help="write the decision trace here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="replay the bundled scenarios under every policy")
    p.add_argument("--case", help="run one scenario only")
    p.add_argument("--out", help="also write the summary here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    log.debug("fixtures: %s", fixtures_dir())
    try:
        if getattr(args, "max_nodes", None) is not None and args.max_nodes < 1:
            raise ModelError("--max-nodes must be at least 1")
        if getattr(args, "percent", 50) is not None and not 0 < getattr(args, "percent", 50) <= 100:
            raise ModelError("--percent must be in 1..100")
        return args.func(args)
    except (ModelError, TranslationError, UnknownCase, MissingFixture) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"kubeplan: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
