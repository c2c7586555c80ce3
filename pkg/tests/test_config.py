"""
Unit tests for run configuration parsing
"""

import os
import sys
import unittest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from reflectkit.config import TokenType, parse_config, parse_value, tokenize
from reflectkit.errors import ConfigError

HALFLINE = """
# reflected Brownian motion with constant drift
[run]
command = simulate
seed = 7

[model]
kind = halfline
potential = linear
c = 2.0          # Φ(x) = 2x

[numerics]
dt = 1e-3
T = 10
"""

CURVE = """
[run]
command = planet
mode = clustering-curve
seed = 1
format = jsonl

[model]
n = 4
d = 2
R = 1.0
r_minus = 0.1
r_plus = 0.15
gravity_c = 3.0

[numerics]
temperatures = [1.0, 0.5, 0.25]
eps = 0.2
n_samples = 100
"""


class TestTokenizer(unittest.TestCase):
    """Test tokenization of values"""

    def test_token_types(self):
        tokens = tokenize('[1, -2.5e-3, "a b", word, true]')
        types = [t.type for t in tokens]
        self.assertEqual(types, [
            TokenType.LBRACKET, TokenType.NUMBER, TokenType.COMMA, TokenType.NUMBER,
            TokenType.COMMA, TokenType.STRING, TokenType.COMMA, TokenType.WORD,
            TokenType.COMMA, TokenType.KEYWORD, TokenType.RBRACKET, TokenType.EOF,
        ])
        self.assertEqual(tokens[3].value, -2.5e-3)
        self.assertIs(tokens[9].value, True)

    def test_scalar_values(self):
        cases = [
            ("42", 42),
            ("-3", -3),
            ("0.5", 0.5),
            (".25", 0.25),
            ("1e-4", 1e-4),
            ('"out dir"', "out dir"),
            ('"say \\"hi\\""', 'say "hi"'),
            ("check-compat", "check-compat"),
            ("FALSE", False),
        ]
        for text, expected in cases:
            with self.subTest(text=text):
                value = parse_value(text)
                self.assertEqual(value, expected)
                self.assertIs(type(value), type(expected))

    def test_lists(self):
        self.assertEqual(parse_value("[]"), [])
        self.assertEqual(parse_value("[1.0, 0.5, 0.25]"), [1.0, 0.5, 0.25])
        self.assertEqual(parse_value("[ 1 ,2 ]"), [1, 2])

    def test_malformed_values(self):
        for text in ("[1, 2", "1 2", '"open', "@", "[,]", "1.2.3"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigError):
                    parse_value(text, lineno=5)


class TestParseConfig(unittest.TestCase):
    """Test sections, schema checks and defaults"""

    def test_halfline(self):
        config = parse_config(HALFLINE)
        self.assertEqual(config.command, "simulate")
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.model, {"kind": "halfline", "potential": "linear", "c": 2.0})
        self.assertEqual(config.numerics["T"], 10.0)
        self.assertIsInstance(config.numerics["T"], float)
        self.assertEqual(config.numerics["n_paths"], 1)
        self.assertEqual(config.format, "csv")
        self.assertEqual(config.out, "out")
        self.assertEqual(config.lines[("model", "c")], 10)
        self.assertEqual(config.plan(), [{"command": "simulate", "mode": None}])

    def test_clustering_curve_plan(self):
        config = parse_config(CURVE)
        self.assertEqual(config.model["kind"], "planet")
        self.assertEqual(config.format, "jsonl")
        plan = config.plan()
        self.assertEqual([p["tau"] for p in plan], [1.0, 0.5, 0.25])
        self.assertTrue(all(p["n_samples"] == 100 for p in plan))

    def test_to_dict(self):
        data = parse_config(CURVE).to_dict()
        self.assertEqual(data["run"]["mode"], "clustering-curve")
        self.assertEqual(data["model"]["gravity_c"], 3.0)
        self.assertFalse(data["run"]["override_integrability"])

    def test_errors_carry_line_numbers(self):
        cases = [
            ("[run]\ncommand = fly\nseed = 1\n", 2),
            ("[run]\ncommand = simulate\nseed = -1\n", 3),
            ("[run]\ncommand = simulate\ncolour = red\n", 3),
            ("[run]\ncommand = simulate\ncommand = simulate\n", 3),
            ("seed = 1\n", 1),
            ("[run]\n[extra]\n", 2),
            ("[run]\n[run]\n", 2),
            ("[run\n", 1),
            ("[run]\ncommand simulate\n", 2),
            ("[run]\nseed = [1, 2]\n", 2),
            ("[run]\nseed = 1\ncommand = simulate\n[model]\nkind = halfline\n"
             "[numerics]\ndt = 0.5\nT = 0.1\n", 7),
            ("[run]\nseed = 1\ncommand = simulate\n[model]\nkind = halfline\n"
             "[numerics]\nalpha = 1.5\n", 7),
        ]
        for text, line in cases:
            with self.subTest(text=text):
                with self.assertRaises(ConfigError) as ctx:
                    parse_config(text)
                self.assertEqual(ctx.exception.lineno, line)
                self.assertIn(f"line {line}", str(ctx.exception))

    def test_required_keys(self):
        cases = [
            "[run]\nseed = 1\n",
            "[run]\ncommand = simulate\n[model]\nkind = halfline\n",
            "[run]\ncommand = simulate\nseed = 1\n",
            "[run]\ncommand = planet\nseed = 1\n[model]\nn = 2\nd = 2\nR = 1.0\n"
            "r_minus = 0.1\nr_plus = 0.2\n",
            "[run]\ncommand = planet\nmode = simulate\nseed = 1\n[model]\nn = 2\n",
            "[run]\ncommand = planet\nmode = clustering-curve\nseed = 1\n[model]\nn = 2\n"
            "d = 2\nR = 1.0\nr_minus = 0.1\nr_plus = 0.2\n",
            "[run]\ncommand = planet\nmode = simulate\nseed = 1\n[model]\nkind = quadrant\n",
            "[run]\ncommand = planet\nmode = simulate\nseed = 1\n[model]\nn = 2\nd = 2\n"
            "R = 1.0\nr_minus = 0.3\nr_plus = 0.2\n",
        ]
        for text in cases:
            with self.subTest(text=text):
                with self.assertRaises(ConfigError):
                    parse_config(text)

    def test_seed_range(self):
        text = "[run]\ncommand = simulate\nseed = 18446744073709551616\n[model]\nkind = halfline\n"
        with self.assertRaises(ConfigError):
            parse_config(text)

    def test_overrides(self):
        text = HALFLINE.replace("seed = 7\n", "")
        config = parse_config(text, {"seed": 11, "workers": 4, "out": "elsewhere",
                                     "format": None, "override_integrability": True})
        self.assertEqual(config.seed, 11)
        self.assertEqual(config.workers, 4)
        self.assertEqual(config.out, "elsewhere")
        self.assertEqual(config.format, "csv")
        self.assertTrue(config.override_integrability)
        self.assertEqual(parse_config(HALFLINE, {"seed": 3}).seed, 3)

    def test_integrability_override_in_file(self):
        text = CURVE.replace("format = jsonl", "override_integrability = true")
        self.assertTrue(parse_config(text).override_integrability)
        self.assertTrue(parse_config(text, {"override_integrability": False})
                        .override_integrability)
        self.assertFalse(parse_config(CURVE).override_integrability)
        with self.assertRaises(ConfigError) as ctx:
            parse_config(CURVE.replace("format = jsonl", "override_integrability = 1"))
        self.assertEqual(ctx.exception.lineno, 6)

    def test_bad_override(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(HALFLINE, {"workers": 0})
        self.assertIsNone(ctx.exception.lineno)


if __name__ == '__main__':
    unittest.main()
