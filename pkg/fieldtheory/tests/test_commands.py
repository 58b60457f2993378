import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase
from rest_framework.test import APIClient

from fieldtheory.models import ScenarioRun


class _TempDirMixin:
    def make_dir(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        return Path(tmp.name)


class RunScenarioCommandTests(_TempDirMixin, SimpleTestCase):
    def _call(self, *args):
        out = StringIO()
        call_command("run_scenario", *args, stdout=out)
        return out.getvalue()

    def test_reruns_are_byte_identical(self):
        base = self.make_dir()
        for name in ("one", "two"):
            self._call("check-invariants", "--seed", "42", "--out", str(base / name))
        for artifact in ("telemetry.jsonl", "summary.txt"):
            first = (base / "one" / artifact).read_bytes()
            self.assertEqual(first, (base / "two" / artifact).read_bytes(), msg=artifact)
        self.assertTrue((base / "one" / "summary.txt").read_text().endswith("result: PASSED\n"))

    def test_palatini_vacuum_run_succeeds(self):
        out_dir = self.make_dir()
        text = self._call("palatini-evolve", "--steps", "5", "--out", str(out_dir))
        self.assertIn("all checks passed", text)
        header = (out_dir / "plotdata.csv").read_text().splitlines()[0]
        self.assertEqual(header, "t,H,gauss,flatness,beta,p,torsion0,torsion1")

    def test_config_file_is_merged(self):
        base = self.make_dir()
        cfg = base / "run.json"
        cfg.write_text(json.dumps({"scenario": "ym-evolve", "run": {"steps": 3}, "mesh": {"sites": [4, 4]}}))
        self._call("ym-evolve", "--config", str(cfg), "--out", str(base / "out"))
        summary = (base / "out" / "summary.txt").read_text()
        self.assertIn('"steps": 3', summary)
        self.assertNotIn(str(base / "out"), summary)

    def test_invalid_config_exits_with_two(self):
        base = self.make_dir()
        cfg = base / "bad.json"
        cfg.write_text(json.dumps({"mesh": {"sites": [2, 4]}}))
        with self.assertRaises(CommandError) as ctx:
            self._call("ym-evolve", "--config", str(cfg), "--out", str(base / "out"))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("mesh.sites", str(ctx.exception))
        self.assertFalse((base / "out").exists())

    def test_unknown_key_exits_with_two(self):
        base = self.make_dir()
        cfg = base / "bad.json"
        cfg.write_text(json.dumps({"dynamics": {"coupling": 0.1, "colour": "red"}}))
        with self.assertRaises(CommandError) as ctx:
            self._call("ym-evolve", "--config", str(cfg))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("dynamics.colour", str(ctx.exception))

    def test_missing_or_malformed_file(self):
        base = self.make_dir()
        with self.assertRaises(CommandError) as ctx:
            self._call("ym-evolve", "--config", str(base / "nope.json"))
        self.assertEqual(ctx.exception.returncode, 2)
        broken = base / "broken.json"
        broken.write_text("{not json")
        with self.assertRaises(CommandError) as ctx:
            self._call("ym-evolve", "--config", str(broken))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_tolerance_override_format(self):
        with self.assertRaises(CommandError) as ctx:
            self._call("ym-evolve", "--tol", "residual")
        self.assertEqual(ctx.exception.returncode, 2)
        with self.assertRaises(CommandError) as ctx:
            self._call("ym-evolve", "--tol", "residual=tiny")
        self.assertEqual(ctx.exception.returncode, 2)

    def test_impossible_tolerance_fails_the_run(self):
        out_dir = self.make_dir()
        with self.assertRaises(CommandError) as ctx:
            self._call("ym-evolve", "--steps", "3", "--tol", "energy_drift=0", "--out", str(out_dir))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertTrue((out_dir / "summary.txt").read_text().endswith("result: FAILED\n"))


class RecordedRunTests(_TempDirMixin, TestCase):
    def test_record_flag_stores_run_and_api_lists_it(self):
        out_dir = self.make_dir()
        call_command("run_scenario", "ym-evolve", "--steps", "3", "--lambda", "0.2",
                     "--out", str(out_dir), "--record", stdout=StringIO())
        run = ScenarioRun.objects.get()
        self.assertEqual(run.scenario, "ym-evolve")
        self.assertTrue(run.passed)
        self.assertEqual(run.config["dynamics"]["coupling"], 0.2)

        client = APIClient()
        listing = client.get("/api/runs/", {"scenario": "ym-evolve"}).json()
        self.assertEqual([row["id"] for row in listing], [run.id])
        self.assertEqual(client.get("/api/runs/", {"scenario": "lambda-sweep"}).json(), [])
        detail = client.get(f"/api/runs/{run.id}/").json()
        self.assertIn("result: PASSED", detail["summary"])
        self.assertEqual(client.get("/api/runs/9999/").status_code, 404)


class ExportAlgebraCommandTests(_TempDirMixin, SimpleTestCase):
    def test_writes_loadable_golden_file(self):
        path = self.make_dir() / "so12.json"
        call_command("export_algebra", "so", "--dim", "2", "--out", str(path), stdout=StringIO())
        payload = json.loads(path.read_text())
        self.assertEqual(payload["kind"], "so")
        self.assertEqual(payload["dim"], 3)

    def test_bad_dimension(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("export_algebra", "so", "--dim", "0", "--out", str(self.make_dir() / "x.json"))
        self.assertEqual(ctx.exception.returncode, 2)
