"""Built-in benchmark subjects.

Each subject is an IR program under ``subjects_data/`` plus a small TOML
manifest describing how to instantiate it: the problem size ``n`` (array
length, key count, text length), how many input bytes one unit of ``n``
consumes, the default cost model, and which analytic worst-case oracle
applies, if any.

Manifests use a flat TOML subset: one ``key = value`` pair per line,
values either double-quoted strings, integers, or true/false. That is
all these files need, and it keeps the loader dependency-free on
interpreters without tomllib.

Manifest keys: name, file, default_n, bytes_per_n, cost_model,
description, oracle, and optional max_n for subjects whose scratch
memory is provisioned for a bounded problem size.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .vm import COST_MODELS, InputLayout, Program, load_program

SEED_TEXT = b"Hello World"

_ORACLE_KINDS = ("none", "reverse_sorted", "python_re", "gas_formula", "abs_formula")

_ORACLE_NOTES = {
    "reverse_sorted": "strictly decreasing input maximizes cost; inner loop runs N(N-1)/2 times",
    "gas_formula": "every item at the magnitude bound; cost = N * (21 + max(|lo|, |hi|))",
    "abs_formula": "every item at the magnitude bound; cost = N * max(|lo|, |hi|)",
}


class SubjectError(ValueError):
    """Unknown subject name or unusable instantiation parameters."""


def parse_flat_toml(text: str) -> dict:
    """Parse the flat TOML subset used by subject manifests.

    Supports comments, blank lines, and ``key = value`` with string,
    integer, or boolean values. No tables, arrays, or multi-line
    strings.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"manifest line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ValueError(f"manifest line {lineno}: empty key")
        if value.startswith('"'):
            if len(value) < 2 or not value.endswith('"'):
                raise ValueError(f"manifest line {lineno}: unterminated string")
            out[key] = value[1:-1]
        elif value in ("true", "false"):
            out[key] = value == "true"
        else:
            try:
                out[key] = int(value)
            except ValueError:
                raise ValueError(
                    f"manifest line {lineno}: unsupported value {value!r}"
                ) from None
    return out


@dataclass(frozen=True)
class Manifest:
    """Static description of a subject, straight from its .toml file."""

    name: str
    file: str
    default_n: int
    bytes_per_n: int
    cost_model: str
    description: str
    oracle: str
    max_n: int | None = None


@dataclass(frozen=True)
class SubjectSpec:
    """A subject instantiated at a concrete problem size.

    ``oracle`` is a human-readable description of the analytic worst
    case when one is known; ``oracle_kind`` is the machine tag tests
    use to pick the matching checker.
    """

    name: str
    program: Program
    n: int
    seed_input: bytes
    cost_model: str
    description: str
    oracle: str | None
    oracle_kind: str
    value_range: tuple[int, int] | None = None

    @property
    def layout(self) -> InputLayout:
        return self.program.input_layout


def _data_dir():
    return resources.files(__package__) / "subjects_data"


@lru_cache(maxsize=1)
def _manifests() -> dict[str, Manifest]:
    found = {}
    for entry in _data_dir().iterdir():
        if not entry.name.endswith(".toml"):
            continue
        raw = parse_flat_toml(entry.read_text())
        man = Manifest(
            name=raw["name"],
            file=raw["file"],
            default_n=raw["default_n"],
            bytes_per_n=raw["bytes_per_n"],
            cost_model=raw["cost_model"],
            description=raw["description"],
            oracle=raw.get("oracle", "none"),
            max_n=raw.get("max_n"),
        )
        if man.cost_model not in COST_MODELS:
            raise ValueError(f"{entry.name}: unknown cost model {man.cost_model!r}")
        if man.oracle not in _ORACLE_KINDS:
            raise ValueError(f"{entry.name}: unknown oracle kind {man.oracle!r}")
        found[man.name] = man
    if not found:
        raise RuntimeError("no subject manifests found in subjects_data")
    return found


def subject_names() -> list[str]:
    return sorted(_manifests())


def seed_input_for(layout: InputLayout) -> bytes:
    """Deterministic filler input: ASCII 'Hello World' cycled to length."""
    need = layout.byte_len
    reps = need // len(SEED_TEXT) + 1
    return (SEED_TEXT * reps)[:need]


def _patch_input_directive(source: str, count: int,
                           value_range: tuple[int, int] | None) -> str:
    lines = source.splitlines()
    for i, raw in enumerate(lines):
        code = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not code.startswith(".input"):
            continue
        fields = {}
        for tok in code[len(".input"):].split():
            k, _, v = tok.partition("=")
            fields[k] = v
        fields["count"] = str(count)
        if value_range is not None:
            fields["min"] = str(value_range[0])
            fields["max"] = str(value_range[1])
        order = ("count", "width", "signed", "min", "max")
        parts = [f"{k}={fields[k]}" for k in order if k in fields]
        parts += [f"{k}={v}" for k, v in fields.items() if k not in order]
        lines[i] = ".input " + " ".join(parts)
        return "\n".join(lines) + "\n"
    raise ValueError("subject source has no .input directive")


def get_subject(name: str, n: int | None = None,
                value_range: tuple[int, int] | None = None,
                seed: int = 0) -> SubjectSpec:
    """Instantiate a subject at problem size ``n``.

    ``value_range`` overrides the per-field (min, max) bounds, e.g. to
    shrink a signed domain so brute-force oracles stay enumerable.
    ``seed`` feeds block-id assignment in the loaded program.
    """
    mans = _manifests()
    if name not in mans:
        raise SubjectError(
            f"unknown subject {name!r}; available: {', '.join(sorted(mans))}")
    man = mans[name]
    if n is None:
        n = man.default_n
    if n < 1:
        raise SubjectError(f"{name}: n must be >= 1, got {n}")
    if man.max_n is not None and n > man.max_n:
        raise SubjectError(
            f"{name}: n={n} exceeds max_n={man.max_n} (scratch memory bound)")
    if value_range is not None:
        lo, hi = value_range
        if lo > hi:
            raise SubjectError(f"{name}: empty value range [{lo}, {hi}]")
    source = (_data_dir() / man.file).read_text()
    patched = _patch_input_directive(source, n * man.bytes_per_n, value_range)
    program = load_program(patched, seed=seed, name=man.name)
    return SubjectSpec(
        name=man.name,
        program=program,
        n=n,
        seed_input=seed_input_for(program.input_layout),
        cost_model=man.cost_model,
        description=man.description,
        oracle=_ORACLE_NOTES.get(man.oracle),
        oracle_kind=man.oracle,
        value_range=value_range,
    )


def list_subjects(seed: int = 0) -> list[SubjectSpec]:
    """All built-in subjects at their default sizes, sorted by name."""
    return [get_subject(name, seed=seed) for name in subject_names()]


def worst_input(spec: SubjectSpec) -> bytes | None:
    """Analytic worst-case input for subjects with a known oracle.

    Returns None when no closed-form adversarial input is known
    (quicksort, hash_table) or the oracle checks correctness rather
    than cost (regex_toy vs Python's re).
    """
    layout = spec.layout
    if spec.oracle_kind == "reverse_sorted":
        # Strictly decreasing when the range allows it, clamped at lo
        # otherwise; ties at the bottom cannot increase shift work.
        values = [max(layout.hi - i, layout.lo) for i in range(layout.count)]
        return layout.encode(values)
    if spec.oracle_kind in ("gas_formula", "abs_formula"):
        bound = layout.lo if abs(layout.lo) >= abs(layout.hi) else layout.hi
        return layout.encode([bound] * layout.count)
    return None


def worst_cost(spec: SubjectSpec) -> int | None:
    """Closed-form worst-case cost under the subject's own cost model."""
    layout = spec.layout
    mag = max(abs(layout.lo), abs(layout.hi))
    if spec.oracle_kind == "gas_formula":
        return spec.n * (21 + mag)
    if spec.oracle_kind == "abs_formula":
        return spec.n * mag
    return None
