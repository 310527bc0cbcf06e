"""Command-line front end: `linksim {source,swap,link,budget,sweep}`."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from app.config.settings import Settings, get_settings
from app.domain.models.errors import LinkSimError, ScenarioError
from app.domain.models.scenario_models import ScenarioConfig
from app.main import ServiceContainer
from app.utils.file_utils import config_hash, render_csv, render_json, write_text

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_SCHEMA = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linksim", description="Heralded entanglement link simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Scenario JSON (defaults to the bundled scenario)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--cycles", type=int, default=None)
    common.add_argument("--jobs", type=int, default=None)
    common.add_argument("--out", type=Path, default=None, help="Directory for output files; stdout when omitted")
    common.add_argument("--format", choices=("csv", "json"), default=None, dest="output_format")

    commands = parser.add_subparsers(dest="command", required=True)

    source = commands.add_parser("source", parents=[common], help="Pair-source sweep or tomography")
    mode = source.add_mutually_exclusive_group()
    mode.add_argument("--sweep", choices=("pump",), default=None)
    mode.add_argument("--tomography", action="store_true")
    source.add_argument("--counts", type=Path, default=None, help="Measured count records (CSV) to reconstruct; implies --tomography")

    swap = commands.add_parser("swap", parents=[common], help="Swapping without storage against g²")
    swap.add_argument("--g2-sweep", type=float, nargs="*", default=None, dest="g2_grid")

    commands.add_parser("link", parents=[common], help="Full heralded-link run with Monte Carlo")
    commands.add_parser("budget", parents=[common], help="Closed-form rate and latency budget")

    sweep = commands.add_parser("sweep", parents=[common], help="Curve data along one axis")
    sweep.add_argument("--axis", choices=("efficiency", "modes", "storage-time"), required=True)
    return parser


class CommandRunner:
    """Runs one subcommand against the shared service container."""

    def __init__(self, container: ServiceContainer) -> None:
        self._container = container
        self._experiments = container.experiment_service

    def load(self, args: argparse.Namespace) -> ScenarioConfig:
        scenarios = self._container.scenario_service
        scenario = scenarios.load(self._container.settings.resolve_scenario_path(args.config))
        return scenarios.with_run_overrides(scenario, seed=args.seed, cycles=args.cycles, jobs=args.jobs)

    def run(self, args: argparse.Namespace) -> Dict[str, str]:
        """Return output file names mapped to their rendered content."""
        scenario = self.load(args)
        provenance = {"config_hash": config_hash(scenario.model_dump(mode="json")), "seed": scenario.run.seed}
        command = args.command

        if command == "source" and (args.tomography or args.counts is not None):
            report = self._experiments.source_tomography(scenario, args.counts)
            return {"source-tomography.json": render_json({"provenance": provenance, **report})}
        if command == "link":
            final = self._container.graph.run(scenario)
            outputs = {"link.json": render_json({"provenance": provenance, **final["report"]})}
            if args.out is not None:
                outputs["link-events.csv"] = render_csv(
                    ["time_ns", "kind", "payload"], final["events"].rows(), provenance=provenance
                )
            return outputs

        if command == "source":
            header, rows = self._experiments.source_sweep(scenario)
        elif command == "swap":
            header, rows = self._experiments.swap_g2_sweep(scenario, args.g2_grid or None)
        elif command == "budget":
            header, rows = self._experiments.budget_rows(scenario)
        else:
            header, rows = self._experiments.sweep(scenario, args.axis)
        name = f"{command}-{args.axis}" if command == "sweep" else command
        return {f"{name}.{args.output_format or 'csv'}": _render_table(header, rows, provenance, args.output_format)}


def _render_table(header: Sequence[str], rows: List[List[Any]], provenance: Dict[str, Any], output_format: Optional[str]) -> str:
    if output_format == "json":
        return render_json({"provenance": provenance, "header": list(header), "rows": rows})
    return render_csv(header, rows, provenance=provenance)


def main(argv: Optional[Sequence[str]] = None, settings: Optional[Settings] = None) -> int:
    args = build_parser().parse_args(argv)
    container = ServiceContainer(settings or get_settings())
    try:
        outputs = CommandRunner(container).run(args)
    except ScenarioError as exc:
        print(f"linksim: {exc}", file=sys.stderr)
        for path in exc.key_paths:
            print(f"  at {path}", file=sys.stderr)
        return EXIT_SCHEMA
    except LinkSimError as exc:
        print(f"linksim: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    for name, content in outputs.items():
        if args.out is None:
            sys.stdout.write(content)
        else:
            destination = write_text(args.out / name, content)
            container.logger.info("Wrote %s", destination)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
