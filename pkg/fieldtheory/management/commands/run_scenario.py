# fieldtheory/management/commands/run_scenario.py
import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from fieldtheory.errors import FieldTheoryError
from fieldtheory.models import ScenarioRun
from fieldtheory.serializers import SCENARIO_CHOICES
from fieldtheory.services import scenarios


def _parse_tolerances(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise CommandError(f"--tol expects NAME=VALUE, got {item!r}", returncode=2)
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise CommandError(f"--tol {key}: {value!r} is not a number", returncode=2)
    return out


def _format_errors(detail, prefix=""):
    """Flatten DRF error details into 'section.field: message' lines."""
    if isinstance(detail, dict):
        lines = []
        for key, value in detail.items():
            name = key if not prefix or key == "non_field_errors" else f"{prefix}.{key}"
            lines += _format_errors(value, name)
        return lines
    if isinstance(detail, list):
        lines = []
        for value in detail:
            lines += _format_errors(value, prefix)
        return lines
    return [f"{prefix}: {detail}" if prefix else str(detail)]


class Command(BaseCommand):
    help = "Run one of the collar experiments and write telemetry, plot data and a summary."

    def add_arguments(self, parser):
        parser.add_argument("scenario", choices=SCENARIO_CHOICES)
        parser.add_argument("--config", type=str, default=None, help="JSON run config (sections algebra, mesh, run, dynamics, tolerances)")
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--out", type=str, default=None, help="Output directory")
        parser.add_argument("--tol", action="append", default=None, metavar="NAME=VALUE", help="Override one tolerance; repeatable")
        parser.add_argument("--lambda", dest="lambdas", type=float, action="append", default=None,
                            help="Coupling; repeat for lambda-sweep")
        parser.add_argument("--steps", type=int, default=None)
        parser.add_argument("--record", action="store_true", help="Store the run in the database")

    def _load_file(self, path):
        if not path:
            return {}
        path = Path(path).expanduser().resolve()
        if not path.exists():
            raise CommandError(f"Config file not found: {path}", returncode=2)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CommandError(f"Config file is not valid JSON: {exc}", returncode=2)
        if not isinstance(data, dict):
            raise CommandError("Config file must hold a JSON object", returncode=2)
        return data

    def _overrides(self, opts):
        overrides = {}
        if opts["seed"] is not None:
            overrides["seed"] = opts["seed"]
        if opts["out"]:
            overrides["out"] = opts["out"]
        if opts["steps"] is not None:
            overrides["run"] = {"steps": opts["steps"]}
        if opts["lambdas"]:
            dynamics = {"lambdas": list(opts["lambdas"])}
            if len(opts["lambdas"]) == 1:
                dynamics["coupling"] = opts["lambdas"][0]
            overrides["dynamics"] = dynamics
        tolerances = _parse_tolerances(opts["tol"])
        if tolerances:
            overrides["tolerances"] = tolerances
        return overrides

    def handle(self, *args, **opts):
        scenario = opts["scenario"]
        try:
            config = scenarios.build_run_config(scenario, self._load_file(opts["config"]), self._overrides(opts))
        except serializers.ValidationError as exc:
            lines = _format_errors(exc.detail)
            raise CommandError("Invalid run config:\n  " + "\n  ".join(lines), returncode=2)

        out_dir = config["out"] or None
        try:
            result = scenarios.run(config, out_dir)
        except FieldTheoryError as exc:
            raise CommandError(f"{scenario} failed: {type(exc).__name__}: {exc}", returncode=1)

        summary = scenarios.summary_lines(config, result)
        if opts["record"]:
            ScenarioRun.objects.create(
                scenario=scenario,
                seed=config["seed"],
                passed=result.passed,
                config=config,
                summary="\n".join(summary),
                output_dir=str(out_dir or ""),
            )

        for name, check in result.checks.items():
            style = self.style.SUCCESS if check.passed else self.style.ERROR
            self.stdout.write(style(f"{name}: {check.value:.3e} (tol {check.tol:.1e})"))
        if not result.passed:
            failed = ", ".join(n for n, c in result.checks.items() if not c.passed)
            raise CommandError(f"{scenario}: checks failed: {failed}", returncode=1)
        self.stdout.write(self.style.SUCCESS(f"{scenario}: all checks passed"))
