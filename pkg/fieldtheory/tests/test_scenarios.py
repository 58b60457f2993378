import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase
from rest_framework import serializers

from fieldtheory.services import scenarios
from fieldtheory.services.dynamics import RESIDUAL_NAMES, EvolutionRecord
from fieldtheory.services.telemetry import (
    PLOT_COLUMNS,
    emit_plotdata,
    read_plotdata,
    write_summary,
    write_telemetry,
)


def _record(step, h, gauss):
    return EvolutionRecord(step=step, t=0.1 * step, state=None, hamiltonian=h,
                           constraint_residuals={"gauss": gauss})


class PlotDataTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_single_record_gives_header_and_one_row(self):
        path = emit_plotdata([_record(0, 1.5, 1e-3)], self.dir / "plot.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(lines), 2)
        self.assertEqual(lines[0], ",".join(PLOT_COLUMNS))
        self.assertEqual(len(lines[1].split(",")), 2 + len(RESIDUAL_NAMES))

    def test_values_parse_back_exactly(self):
        records = [_record(i, 1.0 / 3.0 + i, 0.1 ** (i + 1)) for i in range(4)]
        columns = read_plotdata(emit_plotdata(records, self.dir / "plot.csv"))
        self.assertEqual(columns["H"], [r.hamiltonian for r in records])
        self.assertEqual(columns["gauss"], [r.constraint_residuals["gauss"] for r in records])
        # residuals the record does not carry are written as zero
        self.assertEqual(columns["torsion1"], [0.0] * 4)

    def test_empty_records(self):
        with self.assertRaises(ValueError):
            emit_plotdata([], self.dir / "plot.csv")

    def test_telemetry_lines(self):
        checks = {"energy_drift": scenarios.Check(1e-9, 1e-6, True)}
        path = write_telemetry(self.dir / "t.jsonl", "ym-evolve", [_record(0, 2.0, 0.0)], checks)
        rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
        self.assertEqual([row["kind"] for row in rows], ["record", "check"])
        self.assertEqual(rows[0]["H"], 2.0)
        self.assertEqual(rows[1]["name"], "energy_drift")
        self.assertTrue(rows[1]["passed"])

    def test_summary_ends_with_newline(self):
        path = write_summary(self.dir / "s.txt", ["a", "b"])
        self.assertEqual(path.read_text(encoding="utf-8"), "a\nb\n")


class RunConfigTests(SimpleTestCase):
    def test_defaults_come_from_settings(self):
        config = scenarios.build_run_config("ym-evolve")
        self.assertEqual(config["scenario"], "ym-evolve")
        self.assertEqual(config["algebra"]["kind"], "su2")
        self.assertEqual(config["mesh"]["sites"], [8, 8])
        self.assertEqual(config["tolerances"]["residual"], 1e-10)

    def test_overrides_win_over_file(self):
        config = scenarios.build_run_config(
            "ym-evolve",
            {"seed": 3, "run": {"steps": 5}, "tolerances": {"energy_drift": 1e-4}},
            {"seed": 9},
        )
        self.assertEqual(config["seed"], 9)
        self.assertEqual(config["run"]["steps"], 5)
        self.assertEqual(config["tolerances"]["energy_drift"], 1e-4)
        self.assertEqual(config["tolerances"]["gauge"], 1e-12)

    def test_file_for_another_scenario(self):
        with self.assertRaises(serializers.ValidationError):
            scenarios.build_run_config("ym-evolve", {"scenario": "lambda-sweep"})

    def test_unknown_key_rejected(self):
        with self.assertRaises(serializers.ValidationError):
            scenarios.build_run_config("ym-evolve", {"mesh": {"sites": [4], "spacing": 0.1}})

    def test_palatini_needs_matching_lorentz_algebra(self):
        with self.assertRaises(serializers.ValidationError):
            scenarios.build_run_config("palatini-evolve", {"algebra": {"kind": "su2"}})
        with self.assertRaises(serializers.ValidationError):
            scenarios.build_run_config("palatini-evolve", {"algebra": {"kind": "so", "dim": 3}})

    def test_sweep_needs_two_couplings(self):
        with self.assertRaises(serializers.ValidationError):
            scenarios.build_run_config("lambda-sweep", {"dynamics": {"lambdas": [0.1]}})


class ScenarioRunTests(SimpleTestCase):
    """Every catalogued scenario passes on its lab defaults."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def _run(self, name, **file_data):
        config = scenarios.build_run_config(name, file_data)
        out = Path(self.tmp.name) / name
        result = scenarios.run(config, out)
        failed = {n: c.as_dict() for n, c in result.checks.items() if not c.passed}
        self.assertTrue(result.passed, msg=failed)
        self.assertTrue((out / "telemetry.jsonl").exists())
        self.assertTrue((out / "summary.txt").exists())
        return result, out

    def test_ym_evolve(self):
        result, out = self._run("ym-evolve", run={"steps": 10})
        self.assertEqual(len(read_plotdata(out / "plotdata.csv")["t"]), len(result.records))

    def test_palatini_evolve(self):
        result, out = self._run("palatini-evolve", mesh={"sites": [4, 4]}, run={"steps": 5})
        self.assertIn("vacuum_residual", result.checks)
        self.assertTrue((out / "plotdata.csv").exists())

    def test_pca_analyze(self):
        result, out = self._run("pca-analyze")
        self.assertIn("multiplier_identity", result.checks)
        self.assertFalse((out / "plotdata.csv").exists())

    def test_lambda_sweep(self):
        result, _ = self._run("lambda-sweep", mesh={"sites": [5, 5]}, run={"steps": 10})
        self.assertIn("flatness_slope", result.checks)

    def test_reduction_report(self):
        result, _ = self._run("reduction-report", run={"samples": 4})
        self.assertIn("gauss_coisotropic", result.checks)
        self.assertIn("control_rejected", result.checks)

    def test_summary_reports_verdict(self):
        config = scenarios.build_run_config("pca-analyze")
        result = scenarios.run(config, Path(self.tmp.name) / "summary")
        lines = scenarios.summary_lines(config, result)
        self.assertEqual(lines[0], "scenario: pca-analyze")
        self.assertEqual(lines[-1], "result: PASSED")
