"""Structured text I/O: the repo-wide JSON document formats.

Every number that must stay exact travels as a string: rationals are
written "n/d" (or a plain integer string) and parsed back without any
float round trip. Decimal strings like "0.25" are accepted on input and
converted exactly. Bare JSON integers are accepted; JSON floats are
rejected, because they have already lost exactness.

Document shapes:

  distribution   {"alphabet": [...], "pmf": ["1/2", ...]}
  joint          {"x_labels": [...], "y_labels": [...], "joint": [[...], ...]}
  key law        {"atoms": [["010", "1/8"], ...], "tail": "0"}
  hash table     {"labels": [...], "values": [1, 2, ...], "m": 2}
  decomposition  {"alphabet": [...], "rounds": [{"w", "weight",
                  "conditional", "codewords"}, ...]}
  transcript     [{"sender": "alice", "kind": "hash", "value": 1}, ...]
  run log        {"runs": [{"transcript": [...], "keys": {...}}, ...]}
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .dyadic import DyadicDecomposition
from .errors import FormatError
from .keylaws import KeyLaw, PointwiseVerdict, RsbsVerdict
from .probability import JointPmf, Pmf
from .reconciled import HashFunction, Transcript


def parse_rational(value: Any) -> Fraction:
    """Exact rational from a document value: int, "n/d", or decimal string."""
    if isinstance(value, bool):
        raise FormatError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        raise FormatError(
            f"float {value!r} rejected: write rationals as strings ('1/3', '0.25')"
        )
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise FormatError(f"not a rational: {value!r} ({exc})") from None
    raise FormatError(f"not a rational: {value!r}")


def format_rational(value: Fraction) -> str:
    return str(Fraction(value))


def _require(doc: Mapping, key: str, kind: type) -> Any:
    if key not in doc:
        raise FormatError(f"missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise FormatError(f"field {key!r} must be {kind.__name__}")
    return value


def _labels(raw: Sequence) -> tuple[str, ...]:
    out = []
    for item in raw:
        if not isinstance(item, str):
            raise FormatError(f"label {item!r} must be a string")
        out.append(item)
    return tuple(out)


# ---------------------------------------------------------------------------
# Source distributions.


def parse_pmf(doc: Mapping) -> Pmf:
    alphabet = _labels(_require(doc, "alphabet", list))
    raw = _require(doc, "pmf", list)
    if len(raw) != len(alphabet):
        raise FormatError(
            f"{len(alphabet)} labels but {len(raw)} masses"
        )
    masses = tuple(parse_rational(v) for v in raw)
    try:
        return Pmf(alphabet, masses)
    except FormatError:
        raise
    except Exception as exc:  # normalization and label errors, deficit included
        raise FormatError(str(exc)) from None


def pmf_document(p: Pmf) -> dict:
    return {
        "alphabet": list(p.labels),
        "pmf": [format_rational(m) for m in p.masses],
    }


def parse_joint(doc: Mapping) -> JointPmf:
    x_labels = _labels(_require(doc, "x_labels", list))
    y_labels = _labels(_require(doc, "y_labels", list))
    rows = _require(doc, "joint", list)
    if len(rows) != len(x_labels):
        raise FormatError(f"{len(x_labels)} x labels but {len(rows)} rows")
    matrix = []
    for row in rows:
        if not isinstance(row, list) or len(row) != len(y_labels):
            raise FormatError("joint rows must match y_labels in length")
        matrix.append(tuple(parse_rational(v) for v in row))
    try:
        return JointPmf(x_labels, y_labels, tuple(matrix))
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(str(exc)) from None


def joint_document(j: JointPmf) -> dict:
    return {
        "x_labels": list(j.x_labels),
        "y_labels": list(j.y_labels),
        "joint": [[format_rational(m) for m in row] for row in j.masses],
    }


def parse_source(doc: Mapping) -> Pmf | JointPmf:
    """Sniff a distribution document: single pmf or joint."""
    if "joint" in doc:
        return parse_joint(doc)
    if "pmf" in doc:
        return parse_pmf(doc)
    raise FormatError("document has neither 'pmf' nor 'joint'")


def read_document(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid document: {exc}") from None


def write_document(doc: Any, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))


def dumps(doc: Any) -> str:
    """Deterministic rendering: sorted keys, stable indentation."""
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_distribution(path: str) -> Pmf:
    doc = read_document(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected an object document")
    return parse_pmf(doc)


def load_joint(path: str) -> JointPmf:
    doc = read_document(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected an object document")
    return parse_joint(doc)


def load_source(path: str) -> Pmf | JointPmf:
    doc = read_document(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected an object document")
    return parse_source(doc)


# ---------------------------------------------------------------------------
# Key laws and verifier verdicts.


def key_law_document(law: KeyLaw) -> dict:
    return {
        "atoms": [[k, format_rational(m)] for k, m in law.atoms],
        "tail": format_rational(law.tail),
    }


def parse_key_law(doc: Mapping) -> KeyLaw:
    atoms = _require(doc, "atoms", list)
    table = {}
    for entry in atoms:
        if not isinstance(entry, list) or len(entry) != 2:
            raise FormatError(f"law atom {entry!r} must be a [key, mass] pair")
        key, mass = entry
        if not isinstance(key, str):
            raise FormatError(f"law key {key!r} must be a string")
        if key in table:
            raise FormatError(f"duplicate law key {key!r}")
        table[key] = parse_rational(mass)
    tail = parse_rational(doc.get("tail", 0))
    try:
        return KeyLaw.from_dict(table, tail)
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(str(exc)) from None


def rsbs_verdict_document(v: RsbsVerdict) -> dict:
    return {
        "valid": v.valid,
        "checked_prefixes": v.checked_prefixes,
        "tail": format_rational(v.tail),
        "tail_slack": None if v.tail_slack is None else format_rational(v.tail_slack),
        "violations": [
            {
                "position": viol.position,
                "prefix": viol.prefix,
                "p_zero": format_rational(viol.p_zero),
                "p_one": format_rational(viol.p_one),
            }
            for viol in v.violations
        ],
    }


def pointwise_verdict_document(v: PointwiseVerdict) -> dict:
    return {
        "valid": v.valid,
        "violations": [
            {"key": k, "mass": format_rational(m), "bound": format_rational(b)}
            for k, m, b in v.violations
        ],
    }


# ---------------------------------------------------------------------------
# Decomposition dumps.


def decomposition_document(dec: DyadicDecomposition, upto: int) -> dict:
    """Per-round dump to depth ``upto``, diffable against any oracle."""
    labels = dec.source.labels
    rounds = []
    for rnd in dec.rounds(upto):
        rounds.append(
            {
                "w": rnd.w,
                "weight": format_rational(rnd.weight),
                "conditional": [format_rational(m) for m in rnd.conditional.masses],
                # selection order, the order the protocol emits in
                "codewords": {labels[i]: rnd.codewords[i] for i in rnd.order},
            }
        )
    return {
        "alphabet": list(labels),
        "pmf": [format_rational(m) for m in dec.source.masses],
        "rounds": rounds,
        "tail": format_rational(dec.tail(upto)),
    }


# ---------------------------------------------------------------------------
# Hash tables.


def hash_function_document(h: HashFunction) -> dict:
    return {
        "labels": list(h.labels),
        "values": list(h.values),
        "m": h.m,
        "provenance": h.provenance,
    }


def parse_hash_function(doc: Mapping) -> HashFunction:
    labels = _labels(_require(doc, "labels", list))
    values = _require(doc, "values", list)
    m = _require(doc, "m", int)
    for v in values:
        if not isinstance(v, int) or isinstance(v, bool):
            raise FormatError(f"bucket value {v!r} must be an integer")
    provenance = doc.get("provenance", "fixed")
    try:
        return HashFunction(labels, tuple(values), m, provenance)
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(str(exc)) from None


def load_hash_function(path: str) -> HashFunction:
    doc = read_document(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected an object document")
    return parse_hash_function(doc)


# ---------------------------------------------------------------------------
# Transcript and run logs.


def transcript_document(t: Transcript) -> list[dict]:
    return [{"sender": s, "kind": k, "value": v} for s, k, v in t]


def parse_transcript(doc: Iterable) -> Transcript:
    records = []
    for entry in doc:
        if not isinstance(entry, Mapping):
            raise FormatError(f"transcript record {entry!r} must be an object")
        sender = _require(entry, "sender", str)
        kind = _require(entry, "kind", str)
        if "value" not in entry:
            raise FormatError("transcript record missing 'value'")
        value = entry["value"]
        if not isinstance(value, (str, int)) or isinstance(value, bool):
            raise FormatError(f"transcript value {value!r} must be int or string")
        records.append((sender, kind, value))
    return tuple(records)


def run_record(transcript: Transcript, key_a: str, key_b: str, ideal: str) -> dict:
    return {
        "transcript": transcript_document(transcript),
        "keys": {"alice": key_a, "bob": key_b, "ideal": ideal},
    }


def parse_run_log(doc: Mapping) -> list[tuple[Transcript, str, str, str]]:
    runs = _require(doc, "runs", list)
    out = []
    for entry in runs:
        if not isinstance(entry, Mapping):
            raise FormatError("run record must be an object")
        transcript = parse_transcript(_require(entry, "transcript", list))
        keys = _require(entry, "keys", dict)
        try:
            out.append(
                (transcript, keys["alice"], keys["bob"], keys["ideal"])
            )
        except KeyError as exc:
            raise FormatError(f"run record missing key slot {exc}") from None
    return out
