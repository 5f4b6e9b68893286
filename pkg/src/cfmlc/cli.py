"""Command-line front end.

    cfmlc constellation CONFIG [-o out.csv]
    cfmlc rates CONFIG --seed N [--threads T] [-o rates.csv]
    cfmlc lattice-demo [CONFIG] --seed N [-o report.json]
    cfmlc verify [-o verify.csv]

Configs are JSON files; unknown keys are rejected and command-line flags
override file values.  Every output gets a ``<name>.json`` sidecar carrying
the effective config and its SHA-256 digest.  Exit codes: 0 ok, 2 config
error, 3 budget exceeded, 4 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import jsonschema
import numpy as np

from . import __version__
from .algebra import INTEGERS, RINGS, PrimeSpec, RingElement, classify_rational_prime, element
from .constellation import (
    CRT_RING_ISO,
    EXTFIELD_RING_ISO,
    KINDS,
    MODULE_ISO_CUSTOM,
    MODULE_ISO_GENERAL,
    NAIVE_UNGERBOECK,
    TIE_BREAK,
    TIE_BREAKS,
    ConstellationSpec,
    LabelingError,
    build_constellation,
    dump_csv,
    labeling_header,
    make_labeling,
    verify_homomorphism,
)
from .lattice import BudgetExceededError, LinearCode, NestedPair, ProductLattice, nested_codebook, second_moment_mc
from .rates import MODES, RESULT_COLUMNS, SweepConfig, computation_rate, random_channels, sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schema

_INT_PAIR = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}
_COMPLEX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}
_PRIME = {
    "oneOf": [
        {"type": "integer"},
        _INT_PAIR,
        {
            "type": "object",
            "properties": {"p": {"type": "integer"}, "select": {"enum": ["phi", "conj"]}},
            "required": ["p"],
            "additionalProperties": False,
        },
    ]
}
_CONSTELLATION = {
    "type": "object",
    "properties": {
        "ring": {"enum": list(RINGS)},
        "primes": {"type": "array", "items": _PRIME, "minItems": 1},
        "labeling": {"enum": list(KINDS)},
        "generators": {"type": "array", "items": _INT_PAIR},
        "poly": {"type": "object", "patternProperties": {"^[0-9]+$": _INT_PAIR}, "additionalProperties": False},
        "tie_break": {"enum": list(TIE_BREAKS)},
    },
    "required": ["ring", "primes"],
    "additionalProperties": False,
}
_CHANNEL = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"h": {"type": "array", "items": {"type": "array", "items": _COMPLEX, "minItems": 1}}},
            "required": ["h"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "random": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "K": {"type": "integer", "minimum": 1},
            },
            "required": ["random"],
            "additionalProperties": False,
        },
    ]
}
_SNR_GRID = {
    "oneOf": [
        {"type": "array", "items": {"type": "number"}},
        {
            "type": "object",
            "properties": {"start": {"type": "number"}, "stop": {"type": "number"}, "step": {"type": "number"}},
            "required": ["start", "stop", "step"],
            "additionalProperties": False,
        },
    ]
}
_COEFFS = {
    "oneOf": [
        {"const": "search"},
        {
            "type": "object",
            "properties": {
                "levels": {"type": "array", "items": _INT_PAIR},
                "direct": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer"}},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
            "additionalProperties": False,
        },
    ]
}
_LATTICE = {
    "type": "object",
    "properties": {
        "primes": {"type": "array", "items": {"type": "integer"}},
        "generators": {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}}},
        "messages": {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}}},
        "gains": {"type": "array", "items": {"type": "integer"}},
        "gamma": {"type": "number", "exclusiveMinimum": 0},
        "second_moment_dims": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "second_moment_samples": {"type": "integer", "minimum": 2},
        "closure_pairs": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}
_OUTPUT = {
    "type": "object",
    "properties": {"csv": {"type": "string"}, "report": {"type": "string"}},
    "additionalProperties": False,
}
SCHEMA = {
    "type": "object",
    "properties": {
        "constellation": _CONSTELLATION,
        "channel": _CHANNEL,
        "snr_grid_db": _SNR_GRID,
        "modes": {"type": "array", "items": {"enum": list(MODES)}},
        "coefficients": _COEFFS,
        "n_samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "lattice": _LATTICE,
        "output": _OUTPUT,
    },
    "additionalProperties": False,
}

# worked integer example: F_2 x F_3 with G^1 = [1, 1]^T, G^2 = [1, 2]^T
DEFAULT_LATTICE = {
    "primes": [2, 3],
    "generators": [[[1], [1]], [[1], [2]]],
    "messages": [[[1], [1]], [[0], [2]]],
    "gains": [3, 4],
    "gamma": 1.0,
    "second_moment_dims": [1, 2, 4],
    "second_moment_samples": 200_000,
    "closure_pairs": 200,
}


def validate(config: dict) -> None:
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def config_digest(command: str, config: dict) -> str:
    """SHA-256 of the canonical JSON of the experiment (output paths excluded)."""
    body = {k: v for k, v in config.items() if k != "output"}
    blob = json.dumps({"command": command, "config": body}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# config -> objects


def _prime_specs(ring: str, entries: Sequence) -> list[PrimeSpec]:
    out = []
    for e in entries:
        if isinstance(e, list):
            out.append(PrimeSpec.from_element(element(ring, *e)))
            continue
        p, select = (e, None) if isinstance(e, int) else (e["p"], e.get("select"))
        got = classify_rational_prime(p, ring)
        if isinstance(got, tuple):
            if select is None:
                raise ConfigError(f"{p} splits in the {ring} ring; give select: phi or conj")
            out.append(got[0] if select == "phi" else got[1])
        else:
            if select is not None:
                raise ConfigError(f"{p} does not split in the {ring} ring; select is not allowed")
            out.append(got)
    return out


def build_labeling(section: dict):
    ring = section["ring"]
    try:
        primes = _prime_specs(ring, section["primes"])
        spec = ConstellationSpec(ring, tuple(primes), section.get("tie_break", TIE_BREAK))
        const = build_constellation(spec)
        gens = section.get("generators")
        gens = None if gens is None else [element(ring, *g) for g in gens]
        poly = {int(k): tuple(v) for k, v in section.get("poly", {}).items()} or None
        return make_labeling(const, section.get("labeling", CRT_RING_ISO), gens, poly)
    except ConfigError:
        raise
    except (ValueError, LabelingError) as exc:
        raise ConfigError(str(exc)) from None


def snr_grid(value) -> tuple[float, ...]:
    if value is None:
        return ()
    if isinstance(value, list):
        return tuple(float(v) for v in value)
    start, stop, step = value["start"], value["stop"], value["step"]
    if step <= 0:
        raise ConfigError("snr_grid_db step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(max(n, 0)))


def _complex(v) -> complex:
    return complex(v) if not isinstance(v, list) else complex(v[0], v[1])


def channels(section: dict | None, master_seed: int) -> tuple[tuple[complex, ...], ...]:
    if section is None:
        raise ConfigError("rates needs a channel section")
    if "h" in section:
        return tuple(tuple(_complex(x) for x in row) for row in section["h"])
    return random_channels(section["random"], section.get("seed", master_seed), section.get("K", 2))


# ---------------------------------------------------------------------------
# output helpers


def _csv_bytes(header: Sequence[str], rows: Sequence[Sequence]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode()


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_sidecar(path: Path, command: str, config: dict, extra: dict | None = None) -> Path:
    data = {
        "command": command,
        "version": __version__,
        "config": config,
        "config_digest": config_digest(command, config),
        "seed": config.get("seed"),
        "output": path.name,
        "output_sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
    }
    if extra:
        data.update(extra)
    side = path.with_name(path.name + ".json")
    side.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return side


def _output_path(config: dict, key: str, default: str) -> Path:
    return Path(config.get("output", {}).get(key, default))


# ---------------------------------------------------------------------------
# commands


def cmd_constellation(config: dict, threads: int) -> int:
    if "constellation" not in config:
        raise ConfigError("constellation section is required")
    lm = build_labeling(config["constellation"])
    report = verify_homomorphism(lm)
    out = _output_path(config, "csv", "constellation.csv")
    dump_csv(lm, out)
    write_sidecar(out, "constellation", config, {"labeling": labeling_header(lm), "verification": report.to_dict()})
    print(f"{lm.constellation.size} points, {lm.kind}: additive={report.additive} multiplicative={report.multiplicative}")
    if lm.kind != NAIVE_UNGERBOECK and not report.ok:
        print("homomorphism check failed", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_rates(config: dict, threads: int) -> int:
    for key in ("constellation", "seed"):
        if key not in config:
            raise ConfigError(f"{key} is required for rates")
    lm = build_labeling(config["constellation"])
    chans = channels(config.get("channel"), config["seed"])
    try:
        cfg = SweepConfig(
            labeling=lm,
            snr_grid_db=snr_grid(config.get("snr_grid_db")),
            channels=chans,
            modes=tuple(config.get("modes", ["direct", "mlc"])),
            n_samples=config.get("n_samples", 100_000),
            seed=config["seed"],
            coefficients=config.get("coefficients", "search"),
        )
        rows = sweep(cfg, threads)
    except BudgetExceededError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _output_path(config, "csv", "rates.csv")
    out.write_bytes(_csv_bytes(RESULT_COLUMNS, [[_fmt(v) for v in r.as_tuple()] for r in rows]))
    write_sidecar(out, "rates", config, {"channels": [[[z.real, z.imag] for z in h] for h in chans]})
    print(f"{len(rows)} rows written to {out}")
    return EXIT_OK


def _as_list(a) -> list:
    return np.asarray(a).tolist()


def lattice_demo(section: dict, seed: int, threads: int) -> dict:
    """Encode, combine, decompose, plus second-moment and closure checks."""
    d = {**DEFAULT_LATTICE, **section}
    primes = tuple(d["primes"])
    if len(d["generators"]) != len(primes):
        raise ConfigError("one generator matrix per prime")
    try:
        codes = tuple(LinearCode(p, np.array(G, dtype=np.int64)) for p, G in zip(primes, d["generators"]))
        lat = ProductLattice(primes, codes, d["gamma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    xs = [lat.encode(m) for m in d["messages"]]
    if len(d["gains"]) != len(xs):
        raise ConfigError("one integer gain per message")
    y = sum(int(g) * x for g, x in zip(d["gains"], xs))
    words, zeta = lat.decompose(y)
    report: dict[str, Any] = {
        "lattice": json.loads(lat.to_json(seed)),
        "idempotents": _as_list(lat.idempotents),
        "transmitted": [_as_list(x) for x in xs],
        "received": _as_list(y),
        "level_words": [_as_list(w) for w in words],
        "carry": _as_list(zeta),
        "received_is_member": lat.is_member(y),
    }
    ss = np.random.SeedSequence(seed)
    moments = []
    for N, child in zip(d["second_moment_dims"], ss.spawn(len(d["second_moment_dims"]))):
        m = second_moment_mc(
            ProductLattice.integer_lattice(N), d["second_moment_samples"], int(child.generate_state(1)[0]), threads=threads
        )
        moments.append({"N": N, "G": m.G, "stderr": m.stderr, "n_samples": m.n_samples})
    report["second_moment"] = {"lattice": "integer", "reference": 1.0 / 12.0, "estimates": moments}
    rng = np.random.default_rng(ss.spawn(len(d["second_moment_dims"]) + 1)[-1])
    fails = 0
    for _ in range(d["closure_pairs"]):
        a = lat.encode([rng.integers(0, p, c.m) for p, c in zip(primes, codes)]) + lat.q * rng.integers(-3, 4, lat.N)
        b = lat.encode([rng.integers(0, p, c.m) for p, c in zip(primes, codes)]) + lat.q * rng.integers(-3, 4, lat.N)
        u, v = rng.integers(-5, 6, 2)
        fails += not lat.is_member(u * a + v * b)
    report["closure"] = {"pairs": d["closure_pairs"], "failures": int(fails)}
    return report


def cmd_lattice_demo(config: dict, threads: int) -> int:
    if "seed" not in config:
        raise ConfigError("--seed is required for lattice-demo")
    report = lattice_demo(config.get("lattice", {}), config["seed"], threads)
    out = _output_path(config, "report", "lattice_demo.json")
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_sidecar(out, "lattice-demo", config)
    print(json.dumps({k: report[k] for k in ("transmitted", "received", "level_words", "carry")}))
    return EXIT_OK if report["closure"]["failures"] == 0 else EXIT_VERIFY


# golden checks ---------------------------------------------------------------


def _check_lattice_example():
    r = lattice_demo({"second_moment_dims": [], "closure_pairs": 0}, 0, 1)
    got = f"x={r['transmitted']} y={r['received']} words={r['level_words']} carry={r['carry']}"
    return "x=[[1, 5], [2, 4]] y=[11, 31] words=[[1, 1], [2, 1]] carry=[1, 5]", got


def _lm(ring, primes, kind=CRT_RING_ISO, generators=None, poly=None):
    section = {"ring": ring, "primes": primes, "labeling": kind}
    if generators:
        section["generators"] = generators
    if poly:
        section["poly"] = poly
    return build_labeling(section)


def _check_21pt():
    lm = _lm("eisenstein", [3, {"p": 7, "select": "phi"}])
    got = f"M(1,1)={lm.map((1, 1))} M(2,6)={lm.map((2, 6))} demap(1-w)={lm.demap(element('eisenstein', 1, -1))}"
    return "M(1,1)=1+0w M(2,6)=-1+0w demap(1-w)=(0, 6)", got


def _suite(ring, primes, kind, generators=None, poly=None, expect_ok=True):
    def run():
        lm = _lm(ring, primes, kind, generators, poly)
        rep = verify_homomorphism(lm)
        want = f"{lm.constellation.size}pt ok" if expect_ok else f"{lm.constellation.size}pt counterexample"
        if expect_ok:
            got = f"{lm.constellation.size}pt ok" if rep.ok else f"{lm.constellation.size}pt failed"
        else:
            got = f"{lm.constellation.size}pt counterexample" if rep.additive_counterexample else "no counterexample"
        return want, got

    return run


def _check_split_primes():
    got = []
    for ring, p in (("eisenstein", 7), ("eisenstein", 13), ("gaussian", 5)):
        phi, phib = classify_rational_prime(p, ring)
        got.append(f"{p}:{phi.element},{phib.element}")
    return "7:3+2w,1-2w 13:4+3w,1-3w 5:1+2j,1-2j", " ".join(got)


def _check_rates():
    bad = 0
    for P in (0.5, 1.0, 10.0, 100.0, 1e4):
        bad += abs(computation_rate([1.0], [1], P) - math.log2(1 + P)) > 1e-12
        bad += abs(computation_rate([1.0, 1.0], [1, 1], P) - math.log2(0.5 + P)) > 1e-12
    return "0 mismatches", f"{bad} mismatches"


def _check_nested():
    empty = np.zeros((2, 0), dtype=np.int64)
    pair = NestedPair((2, 3), (empty, empty), ([[1], [1]], [[1], [2]]))
    book = nested_codebook(pair)
    return "6 points rate 1.2925", f"{len(book)} points rate {pair.design_rate():.4f}"


GOLDEN_CHECKS: tuple[tuple[str, Callable[[], tuple[str, str]]], ...] = (
    ("lattice-worked-example", _check_lattice_example),
    ("21pt-labels-and-demap", _check_21pt),
    ("split-prime-factors", _check_split_primes),
    ("computation-rate-closed-forms", _check_rates),
    ("nested-codebook-size", _check_nested),
    ("hom-21pt-crt", _suite("eisenstein", [3, {"p": 7, "select": "phi"}], CRT_RING_ISO)),
    ("hom-21pt-general", _suite("eisenstein", [3, {"p": 7, "select": "phi"}], MODULE_ISO_GENERAL)),
    ("hom-25pt-extfield", _suite("eisenstein", [5], EXTFIELD_RING_ISO, poly={"5": [2, 4]})),
    ("hom-49pt-general", _suite("eisenstein", [{"p": 7, "select": "phi"}, {"p": 7, "select": "conj"}], MODULE_ISO_GENERAL)),
    ("hom-49pt-custom", _suite("eisenstein", [{"p": 7, "select": "phi"}, {"p": 7, "select": "conj"}], MODULE_ISO_CUSTOM, [[1, 0], [0, 1]])),
    ("hom-147pt-crt", _suite("eisenstein", [3, {"p": 7, "select": "conj"}, {"p": 7, "select": "phi"}], CRT_RING_ISO)),
    ("hom-65pt-custom", _suite("gaussian", [[1, 2], [3, 2]], MODULE_ISO_CUSTOM, [[9, 6], [6, 12]])),
    ("hom-65pt-crt", _suite("gaussian", [[1, 2], [3, 2]], CRT_RING_ISO)),
    ("hom-12pt-mixed-crt", _suite("eisenstein", [3, 2], CRT_RING_ISO)),
    ("hom-2pt-integers", _suite(INTEGERS, [2], CRT_RING_ISO)),
    (
        "naive-49pt-not-additive",
        _suite("eisenstein", [{"p": 7, "select": "phi"}, {"p": 7, "select": "conj"}], NAIVE_UNGERBOECK, expect_ok=False),
    ),
)


def run_verify(threads: int = 1) -> list[tuple[str, str, str, bool]]:
    def one(item):
        name, fn = item
        try:
            want, got = fn()
        except Exception as exc:  # a crash is a failed check, not a crash of verify
            want, got = "no error", f"{type(exc).__name__}: {exc}"
        return name, want, got, want == got

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, GOLDEN_CHECKS))
    return [one(c) for c in GOLDEN_CHECKS]


def cmd_verify(config: dict, threads: int) -> int:
    results = run_verify(threads)
    out = _output_path(config, "csv", "verify.csv")
    out.write_bytes(
        _csv_bytes(("check", "expected", "observed", "status"), [(n, w, g, "pass" if ok else "FAIL") for n, w, g, ok in results])
    )
    write_sidecar(out, "verify", config)
    for n, _, g, ok in results:
        print(f"{'PASS' if ok else 'FAIL'} {n}: {g}")
    return EXIT_OK if all(r[3] for r in results) else EXIT_VERIFY


COMMANDS = {
    "constellation": cmd_constellation,
    "rates": cmd_rates,
    "lattice-demo": cmd_lattice_demo,
    "verify": cmd_verify,
}
NEEDS_SEED = ("rates", "lattice-demo")


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cfmlc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", nargs="?", help="JSON config file")
        s.add_argument("-o", "--output", help="output file (overrides output.csv / output.report)")
        s.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads (output is identical)")
        if name in NEEDS_SEED:
            s.add_argument("--seed", type=int, required=True, help="master seed")
        if name == "rates":
            s.add_argument("--n-samples", type=int)
            s.add_argument("--snr-grid", help="comma list or start:stop:step in dB")
            s.add_argument("--modes", help="comma list of " + ",".join(MODES))
        if name == "constellation":
            s.add_argument("--labeling", choices=KINDS)
    return p


def _parse_grid(text: str):
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("--snr-grid range must be start:stop:step")
        start, stop, step = (float(x) for x in parts)
        return {"start": start, "stop": stop, "step": step}
    return [float(x) for x in text.split(",") if x.strip()]


def effective_config(args: argparse.Namespace) -> dict:
    config = copy.deepcopy(load_config(args.config))
    validate(config)
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "n_samples", None) is not None:
        config["n_samples"] = args.n_samples
    if getattr(args, "snr_grid", None) is not None:
        try:
            config["snr_grid_db"] = _parse_grid(args.snr_grid)
        except ValueError:
            raise ConfigError(f"bad --snr-grid {args.snr_grid!r}") from None
    if getattr(args, "modes", None) is not None:
        config["modes"] = [m for m in args.modes.split(",") if m]
    if getattr(args, "labeling", None) is not None:
        config.setdefault("constellation", {})["labeling"] = args.labeling
    if args.output is not None:
        key = "report" if args.command == "lattice-demo" else "csv"
        config.setdefault("output", {})[key] = args.output
    validate(config)
    return config


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("cfmlc: error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = effective_config(args)
        return COMMANDS[args.command](config, args.threads)
    except ConfigError as exc:
        print(f"cfmlc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceededError as exc:
        print(f"cfmlc: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    raise SystemExit(main())
