"""
Published crossing tables and headline estimates shipped with the package.

Each dataset is a CSV file under ``sawstrip/data/tables`` whose SHA-256 is
recorded in ``SHA256SUMS`` next to it.
"""

import csv
import hashlib
import logging
from importlib import resources
from typing import Dict, Optional

import mpmath
from mpmath import mpf
from pydantic import BaseModel, ConfigDict

from ..core.geometry import LatticeKind, WeightingMode
from ..errors import ConfigError, ReferenceDataError
from .crossing import fixed

logger = logging.getLogger(__name__)

TABLES_PACKAGE = "sawstrip.data.tables"
CHECKSUM_FILE = "SHA256SUMS"

# dataset -> (lattice, mode) of the crossing tables
CROSSING_DATASETS: Dict[str, tuple[LatticeKind, WeightingMode]] = {
    "honeycomb-all-site": (LatticeKind.HONEYCOMB, WeightingMode.ALL_SITE),
    "square-all-site": (LatticeKind.SQUARE, WeightingMode.ALL_SITE),
    "square-edge": (LatticeKind.SQUARE, WeightingMode.EDGE),
    "triangular-all-site": (LatticeKind.TRIANGULAR, WeightingMode.ALL_SITE),
    "triangular-edge": (LatticeKind.TRIANGULAR, WeightingMode.EDGE),
}
CONVERGENCE_DATASET = "square-convergence"
# y_c(9) of square all-site strips, from the T = 9 and 10 crossing
CONVERGENCE_WIDTH = 9
HEADLINE_DATASET = "headline"
ALL_DATASETS = [CONVERGENCE_DATASET, *CROSSING_DATASETS, HEADLINE_DATASET]

_EXACT = {
    "1+sqrt(2)": lambda: 1 + mpmath.sqrt(2),
    "sqrt(1+sqrt(2))": lambda: mpmath.sqrt(1 + mpmath.sqrt(2)),
    "1/cos(3*pi/8)": lambda: 1 / mpmath.cos(3 * mpmath.pi / 8),
}


class CrossingRow(BaseModel):
    T: int
    y_c: str
    A: str


class ConvergenceRow(BaseModel):
    M: int
    L: int
    y_c: str


class Headline(BaseModel):
    """Best estimate of y_c (and A(x_c, y_c)) for one lattice/weighting pair."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    lattice: LatticeKind
    mode: WeightingMode
    y_c: Optional[mpf] = None
    A: Optional[mpf] = None
    y_c_text: str = ""
    A_text: str = ""
    exact: bool = False


def _read(name: str) -> bytes:
    try:
        return resources.files(TABLES_PACKAGE).joinpath(f"{name}.csv").read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"unknown reference dataset {name!r}; choose from {', '.join(ALL_DATASETS)}")


def _rows(name: str) -> list[dict]:
    return list(csv.DictReader(_read(name).decode().splitlines()))


def recorded_checksums() -> Dict[str, str]:
    text = resources.files(TABLES_PACKAGE).joinpath(CHECKSUM_FILE).read_text()
    sums = {}
    for line in text.splitlines():
        if line.strip():
            digest, filename = line.split()
            sums[filename.lstrip("*").removesuffix(".csv")] = digest
    return sums


def verify_checksums() -> Dict[str, bool]:
    """
    Compare every dataset against its recorded SHA-256.

    Raises:
        ReferenceDataError: a dataset is missing from the checksum file
    """
    recorded = recorded_checksums()
    status = {}
    for name in ALL_DATASETS:
        if name not in recorded:
            raise ReferenceDataError(f"no checksum recorded for {name}")
        status[name] = hashlib.sha256(_read(name)).hexdigest() == recorded[name]
        if not status[name]:
            logger.warning(f"Checksum mismatch for reference dataset {name}")
    return status


def crossing_table(name: str) -> list[CrossingRow]:
    if name not in CROSSING_DATASETS:
        raise ConfigError(f"{name!r} is not a crossing table; choose from {', '.join(CROSSING_DATASETS)}")
    return [CrossingRow(T=int(r["T"]), y_c=r["y_c"], A=r["A"]) for r in _rows(name)]


def dataset_for(lattice: LatticeKind, mode: WeightingMode) -> Optional[str]:
    for name, key in CROSSING_DATASETS.items():
        if key == (LatticeKind(lattice), WeightingMode(mode)):
            return name
    return None


def convergence_table() -> list[ConvergenceRow]:
    return [
        ConvergenceRow(M=int(r["M"]), L=int(r["L"]), y_c=r["y_c"])
        for r in _rows(CONVERGENCE_DATASET)
    ]


def headlines() -> list[Headline]:
    out = []
    for r in _rows(HEADLINE_DATASET):
        exact = bool(r["exact_y_c"])
        y_text = r["exact_y_c"] or r["y_c"]
        a_text = r["exact_A"] or r["A"]
        out.append(
            Headline(
                lattice=LatticeKind(r["lattice"]),
                mode=WeightingMode(r["mode"]),
                y_c=_value(y_text),
                A=_value(a_text),
                y_c_text=y_text,
                A_text=a_text,
                exact=exact,
            )
        )
    return out


def headline(lattice: LatticeKind, mode: WeightingMode) -> Headline:
    for h in headlines():
        if h.lattice == LatticeKind(lattice) and h.mode == WeightingMode(mode):
            return h
    raise ConfigError(f"no published estimate for {lattice}/{mode}")


def _value(text: str) -> Optional[mpf]:
    if not text:
        return None
    if text in _EXACT:
        return _EXACT[text]()
    return mpf(text)


def agreeing_digits(computed, published: str) -> int:
    """
    Leading significant digits shared by ``computed`` and a published decimal.

    ``computed`` is rounded to the published number of decimals first.
    """
    decimals = len(published.split(".", 1)[1]) if "." in published else 0
    ours = fixed(computed, decimals)
    theirs = published.strip()
    count = 0
    started = False
    for a, b in zip(ours, theirs):
        if a in ".-":
            if a != b:
                break
            continue
        if a != b:
            break
        if a != "0":
            started = True
        if started:
            count += 1
    return count


def parse_cell(text: str) -> tuple[int, int]:
    """'M=100,L=200' -> (100, 200)."""
    values: Dict[str, int] = {}
    try:
        for part in text.split(","):
            key, value = part.split("=", 1)
            values[key.strip().upper()] = int(value)
        return values["M"], values["L"]
    except (KeyError, ValueError):
        raise ConfigError(f"cannot parse cell {text!r}; use e.g. 'M=100,L=200'")


def convergence_cell(M: int, L: int) -> ConvergenceRow:
    for row in convergence_table():
        if row.M == M and row.L == L:
            return row
    cells = ", ".join(f"M={r.M},L={r.L}" for r in convergence_table())
    raise ConfigError(f"no published cell M={M},L={L}; choose from {cells}")
