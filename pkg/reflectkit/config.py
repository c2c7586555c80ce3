"""
Run configuration files.

A configuration is a sequence of ``[section]`` headers and ``key = value``
lines. Values are integers, floats, quoted strings, bare words, ``true`` /
``false`` or bracketed lists of those; ``#`` starts a comment outside
strings. Every key is checked against a schema, and every error names the
line it comes from.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

from .errors import ConfigError
from .rng import MASK64

COMMANDS = ("check-compat", "simulate", "sample-gibbs", "reversibility", "planet")
PLANET_MODES = ("simulate", "clustering-curve", "check-model")
FORMATS = ("csv", "jsonl")
KINDS = ("halfline", "box", "quadrant", "wedge", "slab", "annulus", "planet")


class TokenType(Enum):
    NUMBER = "NUMBER"
    STRING = "STRING"
    WORD = "WORD"
    KEYWORD = "KEYWORD"
    LBRACKET = "LBRACKET"
    RBRACKET = "RBRACKET"
    COMMA = "COMMA"
    EQUALS = "EQUALS"
    EOF = "EOF"


@dataclass
class Token:
    type: TokenType
    value: Any
    position: int


def _split_lines(text: str) -> List[Tuple[int, str]]:
    """Non-empty lines with comments removed, paired with their 1-based number."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = ""
        in_string = False
        escape_next = False
        for char in raw:
            if escape_next:
                escape_next = False
            elif char == "\\" and in_string:
                escape_next = True
            elif char == '"':
                in_string = not in_string
            elif char == "#" and not in_string:
                break
            line += char
        line = line.strip()
        if line:
            out.append((lineno, line))
    return out


def _number(text: str, start: int, lineno: int) -> Tuple[Any, int]:
    i = start
    if text[i] in "+-":
        i += 1
    digits = i
    while i < len(text) and (text[i].isdigit() or text[i] == "."):
        i += 1
    if i < len(text) and text[i] in "eE":
        i += 1
        if i < len(text) and text[i] in "+-":
            i += 1
        while i < len(text) and text[i].isdigit():
            i += 1
    literal = text[start:i]
    if i == digits:
        raise ConfigError(f"malformed number at position {start}", lineno)
    try:
        if any(c in literal for c in ".eE"):
            return float(literal), i
        return int(literal), i
    except ValueError:
        raise ConfigError(f"malformed number '{literal}'", lineno) from None


def tokenize(text: str, lineno: int = 0) -> List[Token]:
    """Tokens of one value expression."""
    tokens = []
    i = 0
    while i < len(text):
        char = text[i]
        if char.isspace():
            i += 1
            continue

        if char.isdigit() or (char in "+-." and i + 1 < len(text)
                              and (text[i + 1].isdigit() or text[i + 1] == ".")):
            value, end = _number(text, i, lineno)
            tokens.append(Token(TokenType.NUMBER, value, i))
            i = end
            continue

        if char == '"':
            start = i
            i += 1
            value = ""
            while i < len(text) and text[i] != '"':
                if text[i] == "\\" and i + 1 < len(text):
                    escape = text[i + 1]
                    value += {"n": "\n", "t": "\t", "\\": "\\", '"': '"'}.get(escape,
                                                                           "\\" + escape)
                    i += 2
                else:
                    value += text[i]
                    i += 1
            if i >= len(text):
                raise ConfigError(f"unterminated string starting at position {start}", lineno)
            i += 1
            tokens.append(Token(TokenType.STRING, value, start))
            continue

        if char.isalpha() or char == "_":
            start = i
            while i < len(text) and (text[i].isalnum() or text[i] in "_-."):
                i += 1
            word = text[start:i]
            if word.lower() in ("true", "false"):
                tokens.append(Token(TokenType.KEYWORD, word.lower() == "true", start))
            else:
                tokens.append(Token(TokenType.WORD, word, start))
            continue

        single = {"[": TokenType.LBRACKET, "]": TokenType.RBRACKET, ",": TokenType.COMMA,
                  "=": TokenType.EQUALS}
        if char in single:
            tokens.append(Token(single[char], char, i))
            i += 1
            continue
        raise ConfigError(f"unexpected character '{char}' at position {i}", lineno)

    tokens.append(Token(TokenType.EOF, None, len(text)))
    return tokens


def parse_value(text: str, lineno: int = 0) -> Any:
    """Scalar or list value of one ``key = value`` line."""
    tokens = tokenize(text, lineno)
    pos = 0

    def scalar():
        nonlocal pos
        tok = tokens[pos]
        if tok.type in (TokenType.NUMBER, TokenType.STRING, TokenType.WORD, TokenType.KEYWORD):
            pos += 1
            return tok.value
        raise ConfigError(f"expected a value at position {tok.position}", lineno)

    if tokens[0].type == TokenType.LBRACKET:
        pos = 1
        items = []
        if tokens[pos].type != TokenType.RBRACKET:
            while True:
                items.append(scalar())
                if tokens[pos].type == TokenType.COMMA:
                    pos += 1
                    continue
                break
        if tokens[pos].type != TokenType.RBRACKET:
            raise ConfigError(f"expected ']' at position {tokens[pos].position}", lineno)
        pos += 1
        value = items
    else:
        value = scalar()
    if tokens[pos].type != TokenType.EOF:
        raise ConfigError(f"unexpected trailing input at position {tokens[pos].position}", lineno)
    return value


def _integer(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("an integer")
    return v


def _real(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("a number")
    return float(v)


def _text(v):
    if not isinstance(v, str):
        raise TypeError("a string")
    return v


def _flag(v):
    if not isinstance(v, bool):
        raise TypeError("true or false")
    return v


def _reals(v):
    if not isinstance(v, list):
        raise TypeError("a list of numbers")
    return [_real(x) for x in v]


def _choice(*options):
    def check(v):
        if v not in options:
            raise TypeError("one of " + ", ".join(options))
        return v
    return check


def _positive(conv):
    def check(v):
        v = conv(v)
        if not v > 0:
            raise TypeError("a positive value")
        return v
    return check


def _nonnegative_int(v):
    v = _integer(v)
    if v < 0:
        raise TypeError("a nonnegative integer")
    return v


def _probability(v):
    v = _real(v)
    if not 0 < v < 1:
        raise TypeError("a number in (0, 1)")
    return v


SCHEMA: Dict[str, Dict[str, Callable[[Any], Any]]] = {
    "run": {
        "command": _choice(*COMMANDS),
        "mode": _choice(*PLANET_MODES),
        "seed": _nonnegative_int,
        "format": _choice(*FORMATS),
        "workers": _positive(_integer),
        "out": _text,
        "override_integrability": _flag,
    },
    "model": {
        "kind": _choice(*KINDS),
        "dim": _positive(_integer),
        "low": _reals,
        "high": _reals,
        "angle": _positive(_real),
        "inner": _positive(_real),
        "outer": _positive(_real),
        "axis": _nonnegative_int,
        "obliquity": _reals,
        "potential": _choice("zero", "linear", "quadratic"),
        "c": _real,
        "weight": _positive(_real),
        "rotation": _real,
        "x0": _reals,
        "n": _positive(_integer),
        "d": _positive(_integer),
        "R": _positive(_real),
        "r_minus": _positive(_real),
        "r_plus": _positive(_real),
        "elasticity": _positive(_real),
        "temperature": _positive(_real),
        "gravity": _choice("log", "zero"),
        "gravity_c": _positive(_real),
        "container": _positive(_real),
        "eta": _positive(_real),
    },
    "numerics": {
        "dt": _positive(_real),
        "T": _positive(_real),
        "n_samples": _positive(_integer),
        "n_paths": _positive(_integer),
        "burn_in": _nonnegative_int,
        "thin": _positive(_integer),
        "chains": _positive(_integer),
        "proposal_scale": _positive(_real),
        "sampler": _choice("mcmc", "rejection"),
        "act_tol": _positive(_real),
        "feas_tol": _positive(_real),
        "refute_tol": _positive(_real),
        "alpha": _probability,
        "eps": _positive(_real),
        "temperatures": _reals,
        "max_sweeps": _positive(_integer),
        "record_every": _positive(_integer),
    },
}

DEFAULTS = {
    "run": {"format": "csv", "workers": 1, "out": "out", "override_integrability": False},
    "model": {},
    "numerics": {"dt": 1e-3, "T": 1.0, "n_samples": 1000, "n_paths": 1, "thin": 1,
                 "chains": 1, "sampler": "mcmc", "refute_tol": 1e-6,
                 "alpha": 0.01, "eps": 0.2, "max_sweeps": 50},
}


@dataclass
class RunConfig:
    command: str
    seed: int
    mode: Optional[str] = None
    format: str = "csv"
    workers: int = 1
    out: str = "out"
    model: Dict[str, Any] = field(default_factory=dict)
    numerics: Dict[str, Any] = field(default_factory=dict)
    override_integrability: bool = False
    lines: Dict[Tuple[str, str], int] = field(default_factory=dict, repr=False)

    def plan(self) -> List[Dict[str, Any]]:
        """Units of work: one per temperature for a clustering curve, else one."""
        if self.command == "planet" and self.mode == "clustering-curve":
            return [{"tau": tau, "n_samples": self.numerics["n_samples"],
                     "eps": self.numerics["eps"]} for tau in self.numerics["temperatures"]]
        return [{"command": self.command, "mode": self.mode}]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run": {"command": self.command, "mode": self.mode, "seed": self.seed,
                    "format": self.format, "workers": self.workers, "out": self.out,
                    "override_integrability": self.override_integrability},
            "model": dict(self.model),
            "numerics": dict(self.numerics),
        }


def parse_config(text: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Parse and validate a configuration.

    ``overrides`` holds ``[run]`` values given on the command line; they win
    over the file and count as present for required keys.
    """
    sections: Dict[str, Dict[str, Any]] = {name: {} for name in SCHEMA}
    lines: Dict[Tuple[str, str], int] = {}
    headers: Dict[str, int] = {}
    current = None
    for lineno, line in _split_lines(text):
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header '{line}'", lineno)
            name = line[1:-1].strip()
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]", lineno)
            if name in headers:
                raise ConfigError(f"section [{name}] appears twice", lineno)
            headers[name] = lineno
            current = name
            continue
        key, eq, rest = line.partition("=")
        key = key.strip()
        if not eq or not key:
            raise ConfigError(f"expected 'key = value', got '{line}'", lineno)
        if current is None:
            raise ConfigError(f"key '{key}' appears before any section", lineno)
        if key not in SCHEMA[current]:
            raise ConfigError(f"unknown key '{key}' in [{current}]", lineno)
        if key in sections[current]:
            raise ConfigError(f"key '{key}' is set twice in [{current}]", lineno)
        raw = parse_value(rest.strip(), lineno)
        try:
            sections[current][key] = SCHEMA[current][key](raw)
        except TypeError as e:
            raise ConfigError(f"[{current}] {key} must be {e}", lineno) from None
        lines[(current, key)] = lineno

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "override_integrability" and not value:
            continue
        try:
            sections["run"][key] = SCHEMA["run"][key](value)
        except TypeError as e:
            raise ConfigError(f"--{key} must be {e}") from None

    run_line = headers.get("run", 1)
    run = {**DEFAULTS["run"], **sections["run"]}
    if "command" not in run:
        raise ConfigError("[run] command is required", run_line)
    if "seed" not in run:
        raise ConfigError("[run] seed is required (or pass --seed)", run_line)
    if run["seed"] > MASK64:
        raise ConfigError("[run] seed must fit in 64 bits", lines.get(("run", "seed"), run_line))
    if run["command"] == "planet":
        if "mode" not in run:
            raise ConfigError("[run] mode is required for the planet command", run_line)
    model = dict(sections["model"])
    model_line = headers.get("model", run_line)
    if "kind" not in model:
        if run["command"] == "planet":
            model["kind"] = "planet"
        else:
            raise ConfigError("[model] kind is required", model_line)
    if run["command"] == "planet" and model["kind"] != "planet":
        raise ConfigError("the planet command needs [model] kind = planet",
                          lines.get(("model", "kind"), model_line))
    numerics = {**DEFAULTS["numerics"], **sections["numerics"]}
    if numerics["dt"] >= numerics["T"]:
        line = lines.get(("numerics", "dt"), lines.get(("numerics", "T"), run_line))
        raise ConfigError(f"dt = {numerics['dt']} must be smaller than T = {numerics['T']}", line)
    if run["command"] == "planet" and run["mode"] == "clustering-curve":
        temps = numerics.get("temperatures")
        if not temps:
            raise ConfigError("clustering-curve needs [numerics] temperatures",
                              headers.get("numerics", run_line))
        if any(t <= 0 for t in temps):
            raise ConfigError("temperatures must be positive",
                              lines.get(("numerics", "temperatures"), run_line))
    if model["kind"] == "planet":
        for key in ("n", "d", "R", "r_minus", "r_plus"):
            if key not in model:
                raise ConfigError(f"[model] {key} is required for a planet model", model_line)
        if model["r_minus"] >= model["r_plus"]:
            raise ConfigError("r_minus must be smaller than r_plus",
                              lines.get(("model", "r_minus"), model_line))

    return RunConfig(
        command=run["command"],
        seed=run["seed"],
        mode=run.get("mode"),
        format=run["format"],
        workers=run["workers"],
        out=run["out"],
        model=model,
        numerics=numerics,
        override_integrability=run["override_integrability"],
        lines=lines,
    )
