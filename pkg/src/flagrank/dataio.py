"""Sparse Boolean dataset I/O, synthetic data with planted anomalies, stats.

The on-disk format is a tiny sparse text format ("FVS v1"): a header line
``FVS v1 <num_attrs>`` followed by one line per process, ``<process_id>``
plus the ascending indices of the attributes that are 1.  ``#`` lines are
comments; a ``#! attrs`` directive (written by the serializer) carries
optional attribute names so a round-trip preserves them.
"""

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    AttrRangeError,
    DuplicateError,
    FormatError,
    PreconditionError,
)

_ATTRS_DIRECTIVE = "#! attrs\t"


@dataclass(frozen=True)
class BooleanDataset:
    """An immutable sparse Boolean matrix with named rows.

    rows is a tuple of (process_id, attrs) pairs where attrs is a sorted
    tuple of attribute indices that are 1; everything else in the row is 0.
    """

    num_attrs: int
    rows: tuple
    attr_names: tuple = None

    def __post_init__(self):
        if self.num_attrs < 0:
            raise PreconditionError("num_attrs must be >= 0")
        seen = set()
        for pid, attrs in self.rows:
            if pid in seen:
                raise DuplicateError(f"duplicate process_id {pid!r}")
            seen.add(pid)
            prev = -1
            for idx in attrs:
                if idx <= prev:
                    raise FormatError(
                        f"row {pid!r}: attribute indices must be strictly ascending"
                    )
                prev = idx
            if prev >= self.num_attrs:
                raise AttrRangeError(
                    f"row {pid!r}: attribute index {prev} out of range "
                    f"(num_attrs={self.num_attrs})"
                )
        if self.attr_names is not None and len(self.attr_names) != self.num_attrs:
            raise PreconditionError(
                f"attr_names has {len(self.attr_names)} entries, expected {self.num_attrs}"
            )

    @property
    def num_rows(self):
        return len(self.rows)

    def ids(self):
        return [pid for pid, _ in self.rows]

    def to_dense(self):
        """Dense (num_rows, num_attrs) float64 matrix. Desk-scale only."""
        X = np.zeros((len(self.rows), self.num_attrs))
        for i, (_, attrs) in enumerate(self.rows):
            if attrs:
                X[i, list(attrs)] = 1.0
        return X

    def frequencies(self):
        """Per-attribute frequency of 1s, computed sparsely."""
        counts = np.zeros(self.num_attrs)
        for _, attrs in self.rows:
            if attrs:
                np.add.at(counts, list(attrs), 1.0)
        if not self.rows:
            return counts
        return counts / len(self.rows)


@dataclass(frozen=True)
class GroundTruth:
    attack_ids: frozenset


@dataclass(frozen=True, eq=False)
class DatasetStats:
    num_rows: int
    num_attrs: int
    num_attacks: int
    attack_ratio: Fraction
    frequencies: np.ndarray


def parse_fvs(lines):
    """Parse an iterable of text lines in FVS v1 form into a BooleanDataset.

    Errors name the offending 1-based line number.
    """
    header = None
    header_lineno = 0
    attr_names = None
    rows = []
    seen = set()
    num_attrs = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if line.startswith(_ATTRS_DIRECTIVE):
            if header is None:
                raise FormatError(f"line {lineno}: attrs directive before header")
            names = line[len(_ATTRS_DIRECTIVE):].split("\t")
            if len(names) != num_attrs:
                raise FormatError(
                    f"line {lineno}: attrs directive lists {len(names)} names, "
                    f"expected {num_attrs}"
                )
            attr_names = tuple(names)
            continue
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if header is None:
            parts = line.split()
            if len(parts) != 3 or parts[0] != "FVS" or parts[1] != "v1":
                raise FormatError(
                    f"line {lineno}: expected header 'FVS v1 <num_attrs>', got {line!r}"
                )
            try:
                num_attrs = int(parts[2])
            except ValueError:
                raise FormatError(
                    f"line {lineno}: num_attrs is not an integer: {parts[2]!r}"
                ) from None
            if num_attrs < 0:
                raise FormatError(f"line {lineno}: num_attrs must be >= 0")
            header = parts
            header_lineno = lineno
            continue
        parts = line.split()
        pid = parts[0]
        if pid in seen:
            raise DuplicateError(f"line {lineno}: duplicate process_id {pid!r}")
        seen.add(pid)
        attrs = []
        prev = -1
        for tok in parts[1:]:
            try:
                idx = int(tok)
            except ValueError:
                raise FormatError(
                    f"line {lineno}: attribute index is not an integer: {tok!r}"
                ) from None
            if idx <= prev:
                raise FormatError(
                    f"line {lineno}: attribute indices must be strictly ascending"
                )
            if idx < 0 or idx >= num_attrs:
                raise AttrRangeError(
                    f"line {lineno}: attribute index {idx} out of range "
                    f"(num_attrs={num_attrs})"
                )
            prev = idx
            attrs.append(idx)
        rows.append((pid, tuple(attrs)))
    if header is None:
        raise FormatError(f"line {header_lineno + 1}: missing 'FVS v1' header")
    return BooleanDataset(num_attrs=num_attrs, rows=tuple(rows), attr_names=attr_names)


def serialize_fvs(dataset):
    """Render a BooleanDataset back to FVS v1 text (inverse of parse_fvs)."""
    out = [f"FVS v1 {dataset.num_attrs}"]
    if dataset.attr_names is not None:
        for name in dataset.attr_names:
            if "\t" in name or "\n" in name:
                raise FormatError(f"attribute name {name!r} contains tab/newline")
        out.append(_ATTRS_DIRECTIVE + "\t".join(dataset.attr_names))
    for pid, attrs in dataset.rows:
        if attrs:
            out.append(pid + " " + " ".join(str(i) for i in attrs))
        else:
            out.append(pid)
    return "\n".join(out) + "\n"


def convert_dense_csv(lines):
    """Convert dense CSV (header: process_id,<attr names>; cells 0/1)."""
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("line 1: empty file, expected a CSV header") from None
    if not header or header[0] != "process_id":
        raise FormatError("line 1: first CSV column must be 'process_id'")
    attr_names = tuple(header[1:])
    num_attrs = len(attr_names)
    rows = []
    seen = set()
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != num_attrs + 1:
            raise FormatError(
                f"line {lineno}: expected {num_attrs + 1} cells, got {len(rec)}"
            )
        pid = rec[0]
        if pid in seen:
            raise DuplicateError(f"line {lineno}: duplicate process_id {pid!r}")
        seen.add(pid)
        attrs = []
        for j, cell in enumerate(rec[1:]):
            if cell == "1":
                attrs.append(j)
            elif cell != "0":
                raise FormatError(
                    f"line {lineno}: cell for {attr_names[j]!r} must be 0 or 1, "
                    f"got {cell!r}"
                )
        rows.append((pid, tuple(attrs)))
    return BooleanDataset(num_attrs=num_attrs, rows=tuple(rows), attr_names=attr_names)


def load_ground_truth(lines, dataset):
    """Read one attack process_id per line; unknown ids warn, not fail."""
    known = set(dataset.ids())
    ids = set()
    warnings = []
    for raw in lines:
        pid = raw.strip()
        if not pid or pid.startswith("#"):
            continue
        ids.add(pid)
    for pid in sorted(ids - known):
        warnings.append(f"ground-truth id not present in dataset: {pid}")
    return GroundTruth(attack_ids=frozenset(ids)), warnings


def synth_planted(n_normal, n_attack, num_attrs, seed):
    """Generate a seeded dataset with planted rare-pattern anomalies.

    Normal rows are independent Bernoulli draws from a per-attribute
    frequency profile sampled once in [0.02, 0.6].  The last
    ceil(num_attrs/10) attributes are reserved: near-silent among normals
    (frequency <= 0.005) but forced to 1 in every attack row, so attacks
    are separable in principle and acceptance checks have a known optimum.
    """
    if n_normal < 0 or n_attack < 0:
        raise PreconditionError("row counts must be >= 0")
    if num_attrs < 4:
        raise PreconditionError("num_attrs must be >= 4")
    rng = np.random.default_rng(seed)
    profile = rng.uniform(0.02, 0.6, size=num_attrs)
    n_reserved = -(-num_attrs // 10)
    profile[num_attrs - n_reserved:] = rng.uniform(
        0.0005, 0.005, size=n_reserved
    )
    rows = []
    total = n_normal + n_attack
    width = max(6, len(str(max(total - 1, 0))))
    draws = rng.random((total, num_attrs)) < profile
    draws[n_normal:, num_attrs - n_reserved:] = True
    for i in range(total):
        pid = f"proc-{i:0{width}d}"
        attrs = tuple(int(j) for j in np.nonzero(draws[i])[0])
        rows.append((pid, attrs))
    attack_ids = frozenset(pid for pid, _ in rows[n_normal:])
    dataset = BooleanDataset(num_attrs=num_attrs, rows=tuple(rows))
    return dataset, GroundTruth(attack_ids=attack_ids)


def stats(dataset, truth):
    """Row/attribute/attack counts plus the attribute frequency vector."""
    known = set(dataset.ids())
    num_attacks = len(truth.attack_ids & known)
    if dataset.num_rows > 0:
        ratio = Fraction(num_attacks, dataset.num_rows)
    else:
        ratio = Fraction(0)
    return DatasetStats(
        num_rows=dataset.num_rows,
        num_attrs=dataset.num_attrs,
        num_attacks=num_attacks,
        attack_ratio=ratio,
        frequencies=dataset.frequencies(),
    )


def format_percent(ratio):
    """Ratio -> percentage string truncated (not rounded) to 2 decimals."""
    pct = Fraction(ratio) * 100
    hundredths = (pct.numerator * 100) // pct.denominator
    return f"{hundredths // 100}.{hundredths % 100:02d}"
