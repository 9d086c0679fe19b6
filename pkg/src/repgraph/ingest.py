"""Repertoire file parsing, frequency imputation and batch planning.

Input files are UTF-8, tab-separated, with a header row. Only the residues
column is required; ``id``, ``frequency`` and ``subgroup`` are recognised when
present and every other column is carried through as string metadata.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, TextIO

import numpy as np

from .errors import (
    AlphabetError,
    DuplicateKeyError,
    EmptyInputError,
    ImputationError,
    InvalidParameterError,
    ParseError,
)

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
NUCLEOTIDES = "ACGT"

_MISSING = {"", "na", "nan", "none", "null", "."}


def make_alphabet(kind: str = "aa", wildcard: bool = True) -> frozenset[str]:
    """Character set for ``kind`` ("aa" or "nt"), optionally with its wildcard (X / N)."""
    if kind == "aa":
        chars, wild = AMINO_ACIDS, "X"
    elif kind == "nt":
        chars, wild = NUCLEOTIDES, "N"
    else:
        raise InvalidParameterError(f"unknown alphabet {kind!r}; expected 'aa' or 'nt'")
    return frozenset(chars + wild) if wildcard else frozenset(chars)


@dataclass(frozen=True)
class Schema:
    """Maps logical fields to column names in the input header."""

    id: str = "id"
    residues: str = "cdr3"
    frequency: str = "frequency"
    subgroup: str = "subgroup"


@dataclass(frozen=True)
class SequenceRecord:
    id: str
    residues: str
    frequency: float | None = None
    subgroup: str | None = None
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.residues:
            raise InvalidParameterError(f"record {self.id!r} has empty residues")
        if self.frequency is not None and not (
            math.isfinite(self.frequency) and self.frequency >= 0
        ):
            raise InvalidParameterError(
                f"record {self.id!r}: frequency must be finite and >= 0, got {self.frequency}"
            )


@dataclass(frozen=True)
class RepertoireDataset:
    records: tuple[SequenceRecord, ...]
    alphabet: frozenset[str] = field(default_factory=lambda: make_alphabet("aa"))
    columns: tuple[str, ...] = ()
    rejected: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise DuplicateKeyError(f"duplicate id {rec.id!r}")
            seen.add(rec.id)

    @property
    def n(self) -> int:
        return len(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def sequences(self) -> list[str]:
        return [r.residues for r in self.records]

    @property
    def subgroup_table(self) -> dict[str, list[int]]:
        """Subgroup label -> member indices, in order of first appearance."""
        table: dict[str, list[int]] = {}
        for i, rec in enumerate(self.records):
            if rec.subgroup is not None:
                table.setdefault(rec.subgroup, []).append(i)
        return table

    @property
    def subgroup_labels(self) -> list[str | None]:
        return [r.subgroup for r in self.records]

    def column_values(self, name: str) -> list[str | None]:
        return [r.metadata.get(name) for r in self.records]


def _open_text(stream) -> TextIO:
    if isinstance(stream, (str, os.PathLike)):
        return open(stream, "r", encoding="utf-8", newline="")
    return stream


def parse_repertoire(
    stream,
    schema: Schema | None = None,
    alphabet: Iterable[str] | str = "aa",
    max_len: int | None = None,
    on_invalid: str = "raise",
) -> RepertoireDataset:
    """Parse a tab-separated repertoire file.

    Args:
        stream: path or text stream.
        schema: column names; defaults to ``id``/``cdr3``/``frequency``/``subgroup``.
        alphabet: ``"aa"``, ``"nt"`` or an explicit character collection.
        max_len: truncate residues to this length (no padding is ever added).
        on_invalid: ``"raise"`` stops at the first row whose residues fall
            outside the alphabet; ``"skip"`` drops such rows and records them
            in ``dataset.rejected`` as ``(lineno, reason)``.

    Raises:
        EmptyInputError: no header or no data rows.
        ParseError: malformed row (wrong field count, bad frequency).
        AlphabetError: illegal residue character (``on_invalid="raise"``).
        DuplicateKeyError: repeated id.
    """
    schema = schema or Schema()
    if isinstance(alphabet, str) and alphabet in ("aa", "nt"):
        alpha = make_alphabet(alphabet)
    else:
        alpha = frozenset(alphabet)
    if on_invalid not in ("raise", "skip"):
        raise InvalidParameterError("on_invalid must be 'raise' or 'skip'")
    if max_len is not None and max_len < 1:
        raise InvalidParameterError("max_len must be >= 1")

    fh = _open_text(stream)
    try:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise EmptyInputError("input is empty")
        header = [h.strip() for h in header]
        if schema.residues not in header:
            raise ParseError(f"header lacks residues column {schema.residues!r}", 1)
        col = {name: i for i, name in enumerate(header)}
        special = {schema.id, schema.residues, schema.frequency, schema.subgroup}
        meta_cols = [h for h in header if h not in special]

        records: list[SequenceRecord] = []
        rejected: list[tuple[int, str]] = []
        seen: dict[str, int] = {}
        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
            residues = row[col[schema.residues]].strip().upper()
            if not residues:
                raise ParseError("empty residues", lineno)
            bad = sorted(set(residues) - alpha)
            if bad:
                reason = f"illegal residue(s) {''.join(bad)!r} in {residues!r}"
                if on_invalid == "raise":
                    raise AlphabetError(reason, lineno)
                rejected.append((lineno, reason))
                continue
            if max_len is not None:
                residues = residues[:max_len]

            rid = row[col[schema.id]].strip() if schema.id in col else f"seq{len(records)}"
            if not rid:
                raise ParseError("empty id", lineno)
            if rid in seen:
                raise DuplicateKeyError(
                    f"line {lineno}: duplicate id {rid!r} (first seen on line {seen[rid]})"
                )
            seen[rid] = lineno

            freq = None
            if schema.frequency in col:
                raw = row[col[schema.frequency]].strip()
                if raw.lower() not in _MISSING:
                    try:
                        freq = float(raw)
                    except ValueError:
                        raise ParseError(f"frequency {raw!r} is not a number", lineno) from None
                    if not math.isfinite(freq) or freq < 0:
                        raise ParseError(f"frequency {raw!r} must be finite and >= 0", lineno)

            subgroup = None
            if schema.subgroup in col:
                raw = row[col[schema.subgroup]].strip()
                subgroup = raw or None

            meta = {h: row[col[h]] for h in meta_cols}
            records.append(SequenceRecord(rid, residues, freq, subgroup, meta))
    finally:
        if fh is not stream:
            fh.close()

    if not records:
        raise EmptyInputError("input has a header but no valid data rows")
    return RepertoireDataset(tuple(records), alpha, tuple(header), tuple(rejected))


def serialize_repertoire(dataset: RepertoireDataset, schema: Schema | None = None) -> str:
    """Write ``dataset`` back to TSV text; inverse of :func:`parse_repertoire` for valid rows."""
    schema = schema or Schema()
    columns = list(dataset.columns)
    if not columns:
        columns = [schema.id, schema.residues]
        if any(r.frequency is not None for r in dataset.records):
            columns.append(schema.frequency)
        if any(r.subgroup is not None for r in dataset.records):
            columns.append(schema.subgroup)
        extra = []
        for r in dataset.records:
            extra.extend(k for k in r.metadata if k not in extra)
        columns.extend(extra)
    if schema.id not in columns:
        columns.insert(0, schema.id)

    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", quoting=csv.QUOTE_NONE, lineterminator="\n")
    writer.writerow(columns)
    for r in dataset.records:
        out = []
        for c in columns:
            if c == schema.id:
                out.append(r.id)
            elif c == schema.residues:
                out.append(r.residues)
            elif c == schema.frequency:
                out.append("" if r.frequency is None else repr(r.frequency))
            elif c == schema.subgroup:
                out.append(r.subgroup or "")
            else:
                out.append(r.metadata.get(c, ""))
        writer.writerow(out)
    return buf.getvalue()


def impute_frequencies(dataset: RepertoireDataset) -> RepertoireDataset:
    """Replace missing frequencies with the median of the observed ones.

    Even-sized samples use the mean of the two middle order statistics.
    """
    present = [r.frequency for r in dataset.records if r.frequency is not None]
    if not present:
        raise ImputationError("all frequencies are missing; nothing to impute from")
    if len(present) == dataset.n:
        return dataset
    fill = float(np.median(present))
    records = tuple(
        r if r.frequency is not None else replace(r, frequency=fill) for r in dataset.records
    )
    return replace(dataset, records=records)


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    mem_available: float
    len_max: int
    per_seq_cost: float


def plan_batches(n: int, mem_available: float, len_max: int, per_seq_cost: float) -> BatchPlan:
    """Memory-bounded batch size: ``min(n, max(32, floor(sqrt(mem / (c * len_max)))))``."""
    if per_seq_cost <= 0 or len_max <= 0:
        raise InvalidParameterError("per_seq_cost and len_max must be positive")
    if n < 1 or mem_available <= 0:
        raise InvalidParameterError("n and mem_available must be positive")
    ratio = mem_available / (per_seq_cost * len_max)
    # floor(sqrt(x)) == isqrt(floor(x)) for x >= 0; avoids float sqrt rounding at perfect squares
    inner = math.isqrt(int(math.floor(ratio)))
    return BatchPlan(min(n, max(32, inner)), mem_available, len_max, per_seq_cost)
