"""
End-to-end tests of the command-line interface
"""

import contextlib
import io
import json
import os
import sys
import tempfile
import unittest
from unittest import mock

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from reflectkit.__main__ import main
from reflectkit.artifacts import manifest_path, read_csv_rows, read_jsonl_rows
from reflectkit.runner import (EXIT_MODEL, EXIT_NUMERICAL, EXIT_OK, EXIT_PARSE,
                               EXIT_STATISTICAL, EXIT_UNEXPECTED)
from tests.test_helpers import write_text

HALFLINE = """
[run]
command = simulate
seed = 7

[model]
kind = halfline
potential = linear
c = 2.0

[numerics]
T = 1.0
dt = 0.01
"""

QUADRANT = """
[run]
command = simulate
seed = 3

[model]
kind = quadrant
x0 = [0.5, 0.5]

[numerics]
T = 0.2
dt = 0.01
n_paths = 300
"""

PLANET = """
[run]
command = planet
mode = clustering-curve
seed = 1

[model]
n = 2
d = 2
R = 1.0
r_minus = 0.1
r_plus = 0.15
gravity_c = 3.0
temperature = 0.5

[numerics]
temperatures = [0.5, 0.25]
eps = 0.2
n_samples = 20
T = 0.1
"""


class CLITestCase(unittest.TestCase):
    """Temporary working directory and a captured invocation helper"""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.dir = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()

    def config(self, text, name="run.cfg"):
        return write_text(self.dir, name, text)

    def invoke(self, *argv):
        err, out = io.StringIO(), io.StringIO()
        with contextlib.redirect_stderr(err), contextlib.redirect_stdout(out):
            code = main(list(argv))
        return code, err.getvalue()

    def out(self, name="out"):
        return os.path.join(self.dir, name)


class TestArguments(CLITestCase):
    """Test argument and configuration errors"""

    def test_version_and_help(self):
        self.assertEqual(self.invoke("--version")[0], EXIT_OK)
        self.assertEqual(self.invoke("simulate", "--help")[0], EXIT_OK)

    def test_usage_errors(self):
        cases = [
            ("fly", "--config", "x.cfg"),
            ("simulate",),
            ("planet", "orbit", "--config", "x.cfg"),
            ("simulate", "--config", "x.cfg", "--format", "xml"),
        ]
        for argv in cases:
            with self.subTest(argv=argv):
                self.assertEqual(self.invoke(*argv)[0], EXIT_PARSE)

    def test_missing_file(self):
        code, err = self.invoke("simulate", "--config", os.path.join(self.dir, "none.cfg"))
        self.assertEqual(code, EXIT_PARSE)
        self.assertIn("none.cfg", err)

    def test_bad_configuration(self):
        path = self.config(HALFLINE.replace("c = 2.0", "c = [2.0"))
        code, err = self.invoke("simulate", "--config", path)
        self.assertEqual(code, EXIT_PARSE)
        self.assertIn("line 9", err)

    def test_bad_override(self):
        path = self.config(HALFLINE)
        code, _ = self.invoke("simulate", "--config", path, "--workers", "0")
        self.assertEqual(code, EXIT_PARSE)


class TestSimulate(CLITestCase):
    """Test the simulate command and its artifacts"""

    def test_single_path(self):
        path = self.config(HALFLINE)
        code, _ = self.invoke("simulate", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_OK)
        table = os.path.join(self.out(), "path.csv")
        header, rows = read_csv_rows(table)
        self.assertEqual(header, ["time", "x0", "L[x0>0]"])
        self.assertEqual(len(rows), 101)
        self.assertEqual(rows[0][0], 0.0)
        self.assertTrue(all(r[1] >= -1e-8 for r in rows))
        with open(manifest_path(table), encoding="utf-8") as f:
            manifest = json.load(f)
        self.assertEqual(manifest["seed"], 7)
        self.assertEqual(manifest["artifact"], "path.csv")
        self.assertEqual(manifest["config"]["model"]["kind"], "halfline")
        self.assertEqual(manifest["support_violations"], 0)
        self.assertIn("numpy", manifest["versions"])

    def test_reruns_are_byte_identical(self):
        path = self.config(HALFLINE)
        for name in ("a", "b"):
            self.assertEqual(self.invoke("simulate", "--config", path, "--out", self.out(name))[0],
                             EXIT_OK)
        with open(os.path.join(self.out("a"), "path.csv"), "rb") as f:
            first = f.read()
        with open(os.path.join(self.out("b"), "path.csv"), "rb") as f:
            second = f.read()
        self.assertEqual(first, second)

    def test_seed_override_changes_path(self):
        path = self.config(HALFLINE)
        self.invoke("simulate", "--config", path, "--out", self.out("a"))
        self.invoke("simulate", "--config", path, "--out", self.out("b"), "--seed", "8")
        _, a = read_csv_rows(os.path.join(self.out("a"), "path.csv"))
        _, b = read_csv_rows(os.path.join(self.out("b"), "path.csv"))
        self.assertNotEqual(a, b)

    def test_jsonl_format(self):
        path = self.config(HALFLINE)
        code, _ = self.invoke("simulate", "--config", path, "--out", self.out(),
                              "--format", "jsonl")
        self.assertEqual(code, EXIT_OK)
        rows = read_jsonl_rows(os.path.join(self.out(), "path.jsonl"))
        self.assertEqual(len(rows), 101)
        self.assertEqual(set(rows[0]), {"time", "x0", "L[x0>0]"})

    def test_ensemble_independent_of_workers(self):
        path = self.config(QUADRANT)
        self.invoke("simulate", "--config", path, "--out", self.out("one"), "--workers", "1")
        self.invoke("simulate", "--config", path, "--out", self.out("many"), "--workers", "3")
        with open(os.path.join(self.out("one"), "ensemble.csv"), "rb") as f:
            one = f.read()
        with open(os.path.join(self.out("many"), "ensemble.csv"), "rb") as f:
            many = f.read()
        self.assertEqual(one, many)
        header, rows = read_csv_rows(os.path.join(self.out("one"), "ensemble.csv"))
        self.assertEqual(header, ["path", "x0", "x1", "L[x0>0]", "L[x1>0]"])
        self.assertEqual(len(rows), 300)
        self.assertFalse(os.path.exists(os.path.join(self.out("one"), "snapshots.csv")))

    def test_ensemble_snapshots(self):
        path = self.config(QUADRANT.replace("n_paths = 300", "n_paths = 30\nrecord_every = 10"))
        self.assertEqual(self.invoke("simulate", "--config", path, "--out", self.out())[0],
                         EXIT_OK)
        header, rows = read_csv_rows(os.path.join(self.out(), "snapshots.csv"))
        self.assertEqual(header, ["step", "time", "path", "x0", "x1"])
        self.assertEqual(len(rows), 60)
        self.assertEqual([int(r[0]) for r in rows[::30]], [10, 20])

    def test_rotation_needs_two_dimensions(self):
        path = self.config(HALFLINE.replace("c = 2.0", "c = 2.0\nrotation = 1.0"))
        code, err = self.invoke("simulate", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_MODEL)
        self.assertIn("two dimensions", err)

    def test_internal_value_error_is_unexpected(self):
        """Test that a plain ValueError from inside the library is not blamed on the model"""
        path = self.config(HALFLINE)
        with mock.patch("reflectkit.runner.simulate", side_effect=ValueError("sigma has shape")):
            code, err = self.invoke("simulate", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_UNEXPECTED)
        self.assertNotIn("Invalid model", err)

    def test_bad_model_values_are_model_errors(self):
        cases = [
            ("annulus", HALFLINE.replace("potential = linear\nc = 2.0", "")
             .replace("kind = halfline", "kind = annulus\ninner = 2.0\nouter = 1.0")),
            ("obliquity", HALFLINE.replace("c = 2.0", "c = 2.0\nobliquity = [1.0, 2.0]")),
        ]
        for name, text in cases:
            with self.subTest(case=name):
                path = self.config(text)
                code, err = self.invoke("simulate", "--config", path, "--out", self.out())
                self.assertEqual(code, EXIT_MODEL)
                self.assertIn("Invalid model", err)


class TestOtherCommands(CLITestCase):
    """Test compatibility, sampling and reversibility commands"""

    WEDGE = ("[run]\ncommand = check-compat\nseed = 2\n[model]\nkind = wedge\nangle = 170\n"
             "[numerics]\nn_samples = 200\n")

    def test_check_compat_certified(self):
        path = self.config(self.WEDGE)
        code, _ = self.invoke("check-compat", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_OK)
        with open(os.path.join(self.out(), "compat.json"), encoding="utf-8") as f:
            report = json.load(f)
        self.assertEqual(report["verdict"], "certified-at-samples")
        self.assertTrue(os.path.exists(manifest_path(os.path.join(self.out(), "compat.json"))))

    def test_check_compat_refuted(self):
        path = self.config(self.WEDGE + "refute_tol = 0.1\n")
        code, err = self.invoke("check-compat", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_MODEL)
        self.assertIn("refuted", err)

    def test_sample_gibbs(self):
        for sampler, extra in (("rejection", ""), ("mcmc", "chains = 2\nburn_in = 100\n")):
            with self.subTest(sampler=sampler):
                text = HALFLINE.replace("command = simulate", "command = sample-gibbs") \
                    + f"n_samples = 301\nsampler = {sampler}\n" + extra
                path = self.config(text)
                out = self.out(sampler)
                self.assertEqual(self.invoke("sample-gibbs", "--config", path, "--out", out)[0],
                                 EXIT_OK)
                header, rows = read_csv_rows(os.path.join(out, "samples.csv"))
                self.assertEqual(header, ["x0"])
                self.assertEqual(len(rows), 301)
                self.assertTrue(all(r[0] > 0.0 for r in rows))

    def test_rejection_floor_is_numerical(self):
        text = HALFLINE.replace("c = 2.0", "c = 5000.0") + "sampler = rejection\n"
        path = self.config(text)
        code, err = self.invoke("sample-gibbs", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_NUMERICAL)
        self.assertIn("acceptance", err)

    def test_reversibility_inconclusive(self):
        text = QUADRANT.replace("n_paths = 300", "n_samples = 50")
        path = self.config(text)
        code, _ = self.invoke("reversibility", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_STATISTICAL)
        with open(os.path.join(self.out(), "reversibility.json"), encoding="utf-8") as f:
            self.assertEqual(json.load(f)["verdict"], "inconclusive")

    def test_reversibility_rotation_fails(self):
        text = QUADRANT.replace("x0 = [0.5, 0.5]", "rotation = 3.0") \
            .replace("T = 0.2", "T = 0.5").replace("dt = 0.01", "dt = 0.001") \
            .replace("n_paths = 300", "n_paths = 600")
        path = self.config(text)
        code, _ = self.invoke("reversibility", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_STATISTICAL)
        with open(os.path.join(self.out(), "reversibility.json"), encoding="utf-8") as f:
            self.assertEqual(json.load(f)["verdict"], "fail")


class TestPlanet(CLITestCase):
    """Test the planet command"""

    def test_clustering_curve(self):
        path = self.config(PLANET)
        code, _ = self.invoke("planet", "clustering-curve", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_OK)
        curve = os.path.join(self.out(), "curve.csv")
        with open(curve, encoding="utf-8") as f:
            self.assertEqual(f.readline().strip(), "tau,estimate,ci_low,ci_high,n_samples")
        header, rows = read_csv_rows(curve)
        self.assertEqual([r[0] for r in rows], [0.5, 0.25])
        for row in rows:
            with self.subTest(tau=row[0]):
                self.assertLessEqual(row[2], row[1])
                self.assertLessEqual(row[1], row[3])
                self.assertEqual(row[4], 20)
        with open(manifest_path(curve), encoding="utf-8") as f:
            manifest = json.load(f)
        self.assertEqual(manifest["integrability"], {"0.5": "finite", "0.25": "finite"})

    def test_integrability_refusal(self):
        path = self.config(PLANET.replace("[0.5, 0.25]", "[2.0]").replace("n_samples = 20",
                                                                           "n_samples = 5"))
        code, err = self.invoke("planet", "clustering-curve", "--config", path,
                                "--out", self.out("refused"))
        self.assertEqual(code, EXIT_MODEL)
        self.assertIn("override-integrability", err)
        code, _ = self.invoke("planet", "clustering-curve", "--config", path,
                              "--out", self.out("forced"), "--override-integrability")
        self.assertEqual(code, EXIT_OK)

    def test_sample_gibbs_refusal(self):
        text = PLANET.replace("command = planet\nmode = clustering-curve",
                              "command = sample-gibbs").replace("temperature = 0.5",
                                                                "temperature = 2.0\nkind = planet")
        path = self.config(text)
        code, _ = self.invoke("sample-gibbs", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_MODEL)

    def test_check_model(self):
        path = self.config(PLANET.replace("n_samples = 20", "n_samples = 50"))
        code, _ = self.invoke("planet", "check-model", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_OK)
        with open(os.path.join(self.out(), "model_check.json"), encoding="utf-8") as f:
            self.assertTrue(json.load(f)["ok"])

    def test_simulate(self):
        path = self.config(PLANET)
        code, _ = self.invoke("planet", "simulate", "--config", path, "--out", self.out())
        self.assertEqual(code, EXIT_OK)
        for name in ("path.csv", "physical_local_times.csv", "particles.csv"):
            with self.subTest(artifact=name):
                self.assertTrue(os.path.exists(os.path.join(self.out(), name)))
        header, rows = read_csv_rows(os.path.join(self.out(), "particles.csv"))
        self.assertEqual(header, ["particle", "x0", "x1", "radius"])
        self.assertEqual([r[0] for r in rows], [0, 1])
        header, _ = read_csv_rows(os.path.join(self.out(), "physical_local_times.csv"))
        self.assertIn("L_pair[0,1]", header)


if __name__ == '__main__':
    unittest.main()
