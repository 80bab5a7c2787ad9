"""Role-tagged columnar datasets and their CSV form.

CSV headers are ``role:name``; a role may span several columns (an image
treatment is stored as ``treatment:a0 .. treatment:a255``). Values are
written with ``repr`` so a write/read round trip is bit-exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionMismatch, MissingColumn

ROLES = ("treatment", "outcome", "backdoor", "frontdoor", "confounder")


@dataclass
class ColumnarDataset:
    columns: dict[str, np.ndarray]
    names: dict[str, list[str]] = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self) -> None:
        n = None
        for role, arr in list(self.columns.items()):
            if role not in ROLES:
                raise DataError(f"unknown role {role!r}; expected one of {ROLES}")
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2:
                raise DimensionMismatch(f"role {role!r} must be 1-D or 2-D")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DimensionMismatch(f"role {role!r} has {arr.shape[0]} rows, expected {n}")
            self.columns[role] = arr
            if role not in self.names:
                self.names[role] = _default_names(role, arr.shape[1])
            elif len(self.names[role]) != arr.shape[1]:
                raise DimensionMismatch(f"role {role!r}: {len(self.names[role])} names for {arr.shape[1]} columns")

    @property
    def n(self) -> int:
        return next(iter(self.columns.values())).shape[0] if self.columns else 0

    def __getitem__(self, role: str) -> np.ndarray:
        try:
            return self.columns[role]
        except KeyError:
            raise MissingColumn(f"dataset has no {role!r} column (has {sorted(self.columns)})") from None

    def __contains__(self, role: str) -> bool:
        return role in self.columns

    def outcome(self) -> np.ndarray:
        y = self["outcome"]
        if y.shape[1] != 1:
            raise DimensionMismatch("outcome must be a single column")
        return y[:, 0]

    def subset(self, idx) -> ColumnarDataset:
        return ColumnarDataset(
            {r: a[idx] for r, a in self.columns.items()},
            {r: list(v) for r, v in self.names.items()},
            self.seed,
        )

    # csv ------------------------------------------------------------------

    def header(self) -> list[str]:
        return [f"{role}:{name}" for role in ROLES if role in self.columns for name in self.names[role]]

    def to_csv(self, path) -> None:
        roles = [r for r in ROLES if r in self.columns]
        block = np.hstack([self.columns[r] for r in roles])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for row in block:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, required: tuple[str, ...] = ()) -> ColumnarDataset:
        """Read and validate a dataset; errors name the offending row/column."""
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            roles_of, names_of = [], {}
            for j, col in enumerate(header):
                role, sep, name = col.strip().partition(":")
                if not sep or not name:
                    raise DataError(f"{path}: header column {j + 1} {col!r} is not 'role:name'")
                if role not in ROLES:
                    raise DataError(f"{path}: header column {j + 1} has unknown role {role!r}")
                if roles_of and role != roles_of[-1] and role in names_of:
                    raise DataError(f"{path}: columns of role {role!r} are not contiguous")
                roles_of.append(role)
                names_of.setdefault(role, []).append(name)
            rows = []
            for r, line in enumerate(reader, start=2):
                if not line:
                    continue
                if len(line) != len(header):
                    raise DataError(f"{path}: row {r} has {len(line)} cells, expected {len(header)}")
                vals = []
                for j, cell in enumerate(line):
                    try:
                        v = float(cell)
                    except ValueError:
                        raise DataError(f"{path}: row {r}, column {header[j]!r}: not a number ({cell!r})") from None
                    if not math.isfinite(v):
                        raise DataError(f"{path}: row {r}, column {header[j]!r}: non-finite value {cell!r}")
                    vals.append(v)
                rows.append(vals)
        if not rows:
            raise DataError(f"{path}: no data rows")
        block = np.array(rows, dtype=np.float64)
        columns = {}
        start = 0
        for role, names in names_of.items():
            columns[role] = block[:, start:start + len(names)]
            start += len(names)
        for role in required:
            if role not in columns:
                raise MissingColumn(f"{path}: required role {role!r} missing")
        return cls(columns, names_of)


def _default_names(role: str, k: int) -> list[str]:
    stem = {"treatment": "a", "outcome": "y", "backdoor": "x", "frontdoor": "m", "confounder": "o"}[role]
    if k == 1:
        return [stem]
    return [f"{stem}{i}" for i in range(k)]
