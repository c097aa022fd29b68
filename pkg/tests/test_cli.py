"""Tests methods in cli module"""

import json
import os
import tempfile
import unittest
from io import StringIO
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd

from snowprobe.cli import (
    EXIT_INCONCLUSIVE,
    EXIT_INPUT,
    EXIT_INVALID_METRIC,
    EXIT_OK,
    main,
    parse_space_spec,
    run_report,
)
from snowprobe.errors import InputError
from snowprobe.example_spaces import euclidean, mixed_product, shift_space
from snowprobe.metric_core import FiniteMetricSpace
from snowprobe.settings import SnowprobeSettings

TEST_DIR = Path(os.path.dirname(os.path.realpath(__file__)))
RESOURCES_DIR = TEST_DIR / "resources"
CLI_DIR = RESOURCES_DIR / "cli"
TRIANGLE = str(RESOURCES_DIR / "metric_core" / "triangle.json")
TWO_POINTS = str(CLI_DIR / "two_points.json")
SEGMENT = str(CLI_DIR / "segment.csv")
CONFIG = str(RESOURCES_DIR / "settings" / "config.json")


class TestParseSpaceSpec(unittest.TestCase):
    """Tests parse_space_spec"""

    def test_examples(self):
        """Tests every kind of spec"""
        self.assertEqual(euclidean(2), parse_space_spec("euclidean:2"))
        self.assertEqual(euclidean(2), parse_space_spec(" euclidean : 2 "))
        self.assertEqual(shift_space(4), parse_space_spec("shift:4"))
        self.assertEqual(
            mixed_product([1.0, 0.5]), parse_space_spec("mixed(1,0.5)")
        )
        self.assertEqual(
            "normed:3:inf", parse_space_spec("normed:3:inf").to_spec()
        )

    def test_nested_snowflakes_merge(self):
        """Tests that (X^a)^b parses to X^(a b)"""
        desc = parse_space_spec("snowflake(snowflake(euclidean:2,0.5),0.5)")
        self.assertEqual("snowflake(euclidean:2,0.25)", desc.to_spec())

    def test_error_offsets(self):
        """Tests that errors carry the offset of the bad token"""
        cases = [
            ("torus:2", 0),
            ("euclidean:x", 10),
            ("euclidean:0", 10),
            ("snowflake(euclidean:2,1.5)", 22),
            ("shift:4)", 7),
            ("normed:2:0.5", 9),
        ]
        for text, offset in cases:
            with self.subTest(text=text):
                with self.assertRaises(InputError) as e:
                    parse_space_spec(text)
                self.assertEqual(offset, e.exception.offset)


class TestCommands(unittest.TestCase):
    """Tests the subcommands through main"""

    def setUp(self) -> None:
        """Fresh output directory per test."""
        self.tmp = tempfile.TemporaryDirectory()
        self.out = os.path.join(self.tmp.name, "out.txt")

    def tearDown(self) -> None:
        """Remove the output directory."""
        self.tmp.cleanup()

    def read_json(self) -> dict:
        """Contents of the --out file."""
        with open(self.out) as f:
            return json.load(f)

    def test_generate_and_validate(self):
        """Tests that generated files validate and are reproducible"""
        argv = ["generate", "--space", "euclidean:2", "--count", "5"]
        code = main(argv + ["--seed", "3", "--out", self.out])
        self.assertEqual(EXIT_OK, code)
        contents = self.read_json()
        self.assertEqual(5, len(contents["labels"]))
        self.assertEqual("euclidean:2", contents["descriptor"])
        self.assertEqual(3, contents["seed"])
        with open(self.out) as f:
            first = f.read()
        again = os.path.join(self.tmp.name, "again.json")
        main(argv + ["--seed", "3", "--out", again])
        with open(again) as f:
            self.assertEqual(first, f.read())
        report = os.path.join(self.tmp.name, "valid.json")
        code = main(["validate", "--in", self.out, "--out", report])
        self.assertEqual(EXIT_OK, code)
        with open(report) as f:
            self.assertTrue(json.load(f)["valid"])

    def test_generate_with_config(self):
        """Tests that --config supplies the seed"""
        argv = ["generate", "--space", "shift:3", "--count", "4"]
        code = main(argv + ["--config", CONFIG, "--out", self.out])
        self.assertEqual(EXIT_OK, code)
        self.assertEqual(42, self.read_json()["seed"])

    def test_thread_count_does_not_change_output(self):
        """Tests byte-identical json for 1 and 8 threads"""
        space = ["--space", "snowflake(euclidean:1,0.5)", "--count", "30"]
        commands = [
            ["report"],
            ["exponent"],
            ["between", "--tol", "1e-3"],
            ["nonconvexity", "--pairs", "100"],
            ["dimension"],
            ["validate"],
        ]
        for command in commands:
            with self.subTest(command=command[0]):
                texts = []
                for threads in ["1", "8"]:
                    out = os.path.join(
                        self.tmp.name, f"{command[0]}_{threads}.json"
                    )
                    argv = command + space + ["--seed", "5", "--json"]
                    code = main(argv + ["--threads", threads, "--out", out])
                    self.assertEqual(EXIT_OK, code)
                    with open(out, "rb") as f:
                        texts.append(f.read())
                self.assertEqual(texts[0], texts[1])

    def test_validate_invalid(self):
        """Tests exit code 2 and the violation list on stdout"""
        with patch("sys.stdout", new_callable=StringIO) as stdout:
            code = main(["validate", "--in", TRIANGLE])
        self.assertEqual(EXIT_INVALID_METRIC, code)
        contents = json.loads(stdout.getvalue())
        self.assertFalse(contents["valid"])
        self.assertEqual(3, contents["points"])
        self.assertNotEqual([], contents["violations"])

    def test_exponent(self):
        """Tests p* = 2 on a snowflaked segment"""
        argv = ["exponent", "--space", "snowflake(euclidean:1,0.5)"]
        code = main(argv + ["--count", "30", "--out", self.out])
        self.assertEqual(EXIT_OK, code)
        contents = self.read_json()
        self.assertAlmostEqual(2.0, contents["p_star"], delta=1e-6)
        witness = contents["witness"]
        self.assertEqual(
            3, len({witness["i"], witness["j"], witness["k"]})
        )
        self.assertIn("iterations", contents["trace"])

    def test_exponent_invalid_metric(self):
        """Tests exit code 2 when the exponent meets a violation"""
        with patch("sys.stderr", new_callable=StringIO) as stderr:
            code = main(["exponent", "--in", TRIANGLE, "--out", self.out])
        self.assertEqual(EXIT_INVALID_METRIC, code)
        self.assertIn("snowprobe:", stderr.getvalue())

    def test_bad_spec(self):
        """Tests exit code 1 with the offset in the message"""
        with patch("sys.stderr", new_callable=StringIO) as stderr:
            code = main(["exponent", "--space", "torus:2"])
        self.assertEqual(EXIT_INPUT, code)
        self.assertIn("offset 0", stderr.getvalue())

    def test_missing_input(self):
        """Tests that analysis commands need --in or --space"""
        with patch("sys.stderr", new_callable=StringIO):
            self.assertEqual(EXIT_INPUT, main(["validate"]))
            missing = os.path.join(self.tmp.name, "missing.json")
            self.assertEqual(EXIT_INPUT, main(["validate", "--in", missing]))

    def test_gauge_csv(self):
        """Tests the p, phi rows"""
        argv = ["gauge", "--in", SEGMENT, "--a", "0", "--b", "3"]
        argv += ["--pmin", "1", "--pmax", "3", "--steps", "3"]
        self.assertEqual(EXIT_OK, main(argv + ["--out", self.out]))
        frame = pd.read_csv(self.out)
        self.assertEqual(["p", "phi"], list(frame.columns))
        self.assertEqual([1.0, 2.0, 3.0], frame["p"].tolist())
        self.assertAlmostEqual(1.0, frame["phi"][0], places=12)
        phi = frame["phi"].to_numpy()
        self.assertTrue(np.all(np.diff(phi) <= 0))

    def test_between(self):
        """Tests that all four triples of a segment sample are between"""
        argv = ["between", "--in", SEGMENT, "--limit", "2"]
        self.assertEqual(EXIT_OK, main(argv + ["--out", self.out]))
        contents = self.read_json()
        self.assertEqual(4, contents["count"])
        self.assertEqual(2, len(contents["certificates"]))

    def test_nonconvexity(self):
        """Tests that a verdict is written"""
        argv = ["nonconvexity", "--in", SEGMENT, "--deltas", "0.1,0.2"]
        self.assertEqual(EXIT_OK, main(argv + ["--out", self.out]))
        self.assertIn(
            self.read_json()["verdict"],
            ["NonConvexityCertificate", "NonConvexityRefutation"],
        )

    def test_chains_csv(self):
        """Tests decay rows on a snowflaked segment"""
        argv = ["chains", "--space", "snowflake(euclidean:1,0.5)"]
        argv += ["--p", "4", "--depth", "5"]
        self.assertEqual(EXIT_OK, main(argv + ["--out", self.out]))
        frame = pd.read_csv(self.out)
        self.assertEqual(
            ["depth", "segments", "p_length", "predicted", "relative_error"],
            list(frame.columns),
        )
        self.assertEqual(list(range(6)), frame["depth"].tolist())
        self.assertTrue(np.all(frame["relative_error"] <= 1e-10))

    def test_geodesic(self):
        """Tests the plane geodesic rows and defects"""
        argv = ["geodesic", "--space", "euclidean:2", "--delta", "0.5"]
        argv += ["--depth", "3", "--to", "3,4", "--json"]
        self.assertEqual(EXIT_OK, main(argv + ["--out", self.out]))
        contents = self.read_json()
        self.assertEqual(9, len(contents["rows"]))
        self.assertEqual([3.0, 4.0], contents["rows"][-1]["point"])
        self.assertLessEqual(contents["isometry_defect"]["max_defect"], 1e-12)
        self.assertLessEqual(contents["adjacent_additivity_defect"], 1e-12)

    def test_geodesic_csv(self):
        """Tests the csv layout of geodesic rows"""
        argv = ["geodesic", "--space", "euclidean:1", "--delta", "0.5"]
        self.assertEqual(EXIT_OK, main(argv + ["--out", self.out]))
        frame = pd.read_csv(self.out)
        self.assertEqual(["t", "point", "running_defect"], list(frame.columns))
        self.assertEqual(257, len(frame))

    def test_geodesic_on_snowflake(self):
        """Tests that an oracle violation exits with 1"""
        argv = ["geodesic", "--space", "snowflake(euclidean:2,0.5)"]
        with patch("sys.stderr", new_callable=StringIO) as stderr:
            code = main(argv + ["--delta", "0.5", "--out", self.out])
        self.assertEqual(EXIT_INPUT, code)
        self.assertIn("snowprobe:", stderr.getvalue())

    def test_dimension(self):
        """Tests that box and doubling estimates are written"""
        argv = ["dimension", "--space", "euclidean:1", "--count", "100"]
        self.assertEqual(EXIT_OK, main(argv + ["--out", self.out]))
        contents = self.read_json()
        self.assertEqual({"box", "doubling"}, set(contents))
        self.assertEqual(8, len(contents["box"]["records"]))

    def test_spheres(self):
        """Tests explicit radii and a malformed auto count"""
        argv = ["spheres", "--in", SEGMENT, "--radii", "0,0.5,1"]
        argv += ["--gap-tol", "0.01"]
        self.assertEqual(EXIT_OK, main(argv + ["--out", self.out]))
        self.assertTrue(self.read_json()["surjective"])
        with patch("sys.stderr", new_callable=StringIO):
            code = main(["spheres", "--in", SEGMENT, "--radii", "auto:x"])
        self.assertEqual(EXIT_INPUT, code)


class TestReport(unittest.TestCase):
    """Tests run_report and the report command"""

    def setUp(self) -> None:
        """Small samples keep the pipeline quick."""
        self.settings = SnowprobeSettings(sample_count=20, pair_budget=200)

    def test_geodesic_like(self):
        """Tests that a Euclidean segment sample has between-points"""
        report = run_report("euclidean:1", self.settings)
        self.assertEqual("geodesic-like", report.conclusion)
        self.assertEqual(EXIT_OK, report.exit_code)
        self.assertGreater(report.between_count, 0)
        self.assertEqual(20, report.points)

    def test_ultrametric_like(self):
        """Tests that shift space samples have p* = inf"""
        report = run_report("shift:3", self.settings)
        self.assertEqual("ultrametric-like", report.conclusion)
        self.assertEqual(0, report.between_count)

    def test_snowflake_like(self):
        """Tests the tag carries p*"""
        report = run_report("snowflake(euclidean:1,0.5)", self.settings)
        self.assertEqual("snowflake-like(2)", report.conclusion)
        self.assertAlmostEqual(2.0, report.p_star, delta=1e-6)
        self.assertEqual(0, report.between_count)

    def test_dimension_bound_on_segment(self):
        """Tests that a 300 point segment sample keeps p* <= D"""
        settings = SnowprobeSettings(sample_count=300, pair_budget=200)
        report = run_report("euclidean:1", settings)
        self.assertAlmostEqual(1.0, report.p_star, delta=1e-9)
        self.assertTrue(report.dimension_bound)

    def test_in_memory_space(self):
        """Tests a space passed directly"""
        space = FiniteMetricSpace.from_matrix(
            [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]
        )
        report = run_report(space, self.settings)
        self.assertEqual("<in-memory>", report.source)
        self.assertEqual("geodesic-like", report.conclusion)
        self.assertEqual([0, 1, 2], list(report.best_between["triple"]))

    def test_report_command_exit_codes(self):
        """Tests exit codes 2 and 3 and the source path"""
        with tempfile.TemporaryDirectory() as tmp:
            out = os.path.join(tmp, "report.json")
            code = main(["report", "--in", TRIANGLE, "--out", out])
            self.assertEqual(EXIT_INVALID_METRIC, code)
            with open(out) as f:
                contents = json.load(f)
            self.assertEqual("invalid-metric", contents["conclusion"])
            self.assertEqual(TRIANGLE, contents["source"])
            code = main(["report", "--in", TWO_POINTS, "--out", out])
            self.assertEqual(EXIT_INCONCLUSIVE, code)
            with open(out) as f:
                contents = json.load(f)
            self.assertEqual("inconclusive", contents["conclusion"])
            self.assertEqual(2, contents["points"])


if __name__ == "__main__":
    unittest.main()
