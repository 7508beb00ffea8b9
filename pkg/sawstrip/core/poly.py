"""
Truncated contact polynomials with double-double coefficients.

A ContactPolynomial holds coefficients ``p[k]`` (k = number of surface
contacts, 0 <= k <= trunc_M) as a pair of float64 arrays ``hi``/``lo`` whose
unevaluated sum carries ~31 significant digits. The array kernels at the top
of the module are shared with the transfer-matrix engine, which stores whole
state sets as ``(n_states, trunc_M + 1)`` hi/lo matrices.
"""

import csv
import io
import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence

import mpmath
import numpy as np
from mpmath import mpf

from ..errors import ConstantTermError, TruncationMismatchError

logger = logging.getLogger(__name__)

SPLITTER = 134217729.0  # 2**27 + 1

# Bits needed to hold hi + lo exactly in mpmath
DD_PREC = 110
CSV_DIGITS = 34


# ---------------------------------------------------------------------------
# Vectorised double-double kernels (numpy arrays or scalars)
# ---------------------------------------------------------------------------


def split(a):
    """Dekker split of a into two halves of at most 26 significant bits."""
    c = SPLITTER * a
    abig = c - a
    ahi = c - abig
    return ahi, a - ahi


def two_sum(a, b):
    """(s, err) with s + err == a + b exactly."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a, b):
    """two_sum for |a| >= |b|."""
    s = a + b
    return s, b - (s - a)


def two_prod(a, b):
    """(p, err) with p + err == a * b exactly."""
    p = a * b
    ahi, alo = split(a)
    bhi, blo = split(b)
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


def dd_add(ahi, alo, bhi, blo):
    s, e = two_sum(ahi, bhi)
    t, f = two_sum(alo, blo)
    e = e + t
    s, e = quick_two_sum(s, e)
    e = e + f
    return quick_two_sum(s, e)


def dd_mul(ahi, alo, bhi, blo):
    p, e = two_prod(ahi, bhi)
    e = e + (ahi * blo + alo * bhi)
    return quick_two_sum(p, e)


def dd_sum_rows(hi: np.ndarray, lo: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Pairwise double-double sum over axis 0.

    The reduction tree depends only on the number of rows, so the result is
    reproducible for a fixed row order.
    """
    if hi.shape[0] == 0:
        return np.zeros(hi.shape[1:]), np.zeros(hi.shape[1:])
    while hi.shape[0] > 1:
        n = hi.shape[0]
        half = n // 2
        shi, slo = dd_add(hi[0:2 * half:2], lo[0:2 * half:2], hi[1:2 * half:2], lo[1:2 * half:2])
        if n % 2:
            shi = np.concatenate([shi, hi[-1:]])
            slo = np.concatenate([slo, lo[-1:]])
        hi, lo = shi, slo
    return hi[0], lo[0]


def dd_from_mpf(value) -> tuple[float, float]:
    """Round an mpmath/str/float value to the nearest double-double."""
    with mpmath.workprec(max(mpmath.mp.prec, DD_PREC + 20)):
        v = mpf(value)
        hi = float(v)
        lo = float(v - hi)
    return hi, lo


def dd_to_mpf(hi: float, lo: float) -> mpf:
    """Exact value of hi + lo (at least double-double precision)."""
    with mpmath.workprec(max(mpmath.mp.prec, DD_PREC)):
        value = mpf(float(hi)) + mpf(float(lo))
    return +value


def dd_powers(base, count: int) -> list[tuple[float, float]]:
    """[base**0, ..., base**(count-1)] each rounded once from high precision."""
    with mpmath.workprec(DD_PREC + 64):
        b = mpf(base)
        return [dd_from_mpf(b ** k) for k in range(count)]


# ---------------------------------------------------------------------------
# ContactPolynomial
# ---------------------------------------------------------------------------


class ContactPolynomial:
    """
    Polynomial in the contact fugacity y, truncated at degree trunc_M.

    Contributions beyond trunc_M are dropped silently by every operation.
    """

    __slots__ = ("hi", "lo")

    def __init__(self, hi: np.ndarray, lo: Optional[np.ndarray] = None):
        self.hi = np.ascontiguousarray(hi, dtype=np.float64)
        self.lo = (
            np.zeros_like(self.hi)
            if lo is None
            else np.ascontiguousarray(lo, dtype=np.float64)
        )
        if self.hi.ndim != 1 or self.hi.shape != self.lo.shape or len(self.hi) == 0:
            raise ValueError("coefficient arrays must be 1-d, equal length and non-empty")

    # -- construction -------------------------------------------------------

    @classmethod
    def zeros(cls, trunc_M: int) -> "ContactPolynomial":
        return cls(np.zeros(trunc_M + 1))

    @classmethod
    def from_coefficients(
        cls, coeffs: Sequence, trunc_M: Optional[int] = None
    ) -> "ContactPolynomial":
        """Build from numbers or decimal strings; extra terms beyond trunc_M are dropped."""
        coeffs = list(coeffs)
        if trunc_M is None:
            trunc_M = max(len(coeffs) - 1, 0)
        poly = cls.zeros(trunc_M)
        for k, c in enumerate(coeffs[: trunc_M + 1]):
            poly.hi[k], poly.lo[k] = dd_from_mpf(c)
        return poly

    @classmethod
    def monomial(cls, k: int, coeff, trunc_M: int) -> "ContactPolynomial":
        poly = cls.zeros(trunc_M)
        if k <= trunc_M:
            poly.hi[k], poly.lo[k] = dd_from_mpf(coeff)
        return poly

    def copy(self) -> "ContactPolynomial":
        return ContactPolynomial(self.hi.copy(), self.lo.copy())

    # -- inspection ---------------------------------------------------------

    @property
    def trunc_M(self) -> int:
        return len(self.hi) - 1

    @property
    def degree(self) -> int:
        """Highest index with a nonzero coefficient, -1 for the zero polynomial."""
        nz = np.flatnonzero((self.hi != 0) | (self.lo != 0))
        return int(nz[-1]) if len(nz) else -1

    def is_zero(self) -> bool:
        return self.degree < 0

    def __len__(self) -> int:
        return len(self.hi)

    def __getitem__(self, k: int) -> mpf:
        return dd_to_mpf(self.hi[k], self.lo[k])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ContactPolynomial):
            return NotImplemented
        return np.array_equal(self.hi, other.hi) and np.array_equal(self.lo, other.lo)

    def __repr__(self) -> str:
        head = ", ".join(mpmath.nstr(self[k], 8) for k in range(min(len(self), 4)))
        more = ", ..." if len(self) > 4 else ""
        return f"ContactPolynomial(M={self.trunc_M}, [{head}{more}])"

    def to_mpf(self) -> list[mpf]:
        return [self[k] for k in range(len(self))]

    def max_deviation(self, other: "ContactPolynomial") -> mpf:
        """Largest coefficient-wise |p[k] - q[k]|."""
        diff = self.sub(other)
        return max((abs(c) for c in diff.to_mpf()), default=mpf(0))

    # -- arithmetic ---------------------------------------------------------

    def _check_trunc(self, other: "ContactPolynomial") -> None:
        if other.trunc_M != self.trunc_M:
            raise TruncationMismatchError(
                f"truncation degrees differ: {self.trunc_M} vs {other.trunc_M}"
            )

    def axpy_shift(self, src: "ContactPolynomial", scale, y_shift: int = 0) -> "ContactPolynomial":
        """
        In place: self[k + y_shift] += scale * src[k] for k + y_shift <= trunc_M.

        Returns self.
        """
        self._check_trunc(src)
        if y_shift not in (0, 1):
            raise ValueError(f"y_shift must be 0 or 1, got {y_shift}")
        shi, slo = dd_from_mpf(scale)
        if not np.isfinite(shi):
            raise ValueError("scale must be finite")
        n = len(self.hi) - y_shift
        phi, plo = dd_mul(src.hi[:n], src.lo[:n], shi, slo)
        self.hi[y_shift:], self.lo[y_shift:] = dd_add(
            self.hi[y_shift:], self.lo[y_shift:], phi, plo
        )
        return self

    def eval(self, y) -> mpf:
        """Horner evaluation at the current mpmath precision."""
        y = mpf(y)
        if y < 0:
            raise ValueError("contact polynomials are evaluated at y >= 0")
        acc = mpf(0)
        for k in range(self.degree, -1, -1):
            acc = acc * y + self[k]
        return acc

    def sub(self, other: "ContactPolynomial") -> "ContactPolynomial":
        self._check_trunc(other)
        hi, lo = dd_add(self.hi, self.lo, -other.hi, -other.lo)
        return ContactPolynomial(hi, lo)

    def truncate(self, trunc_M: int) -> "ContactPolynomial":
        """Same coefficients, cut (or zero-padded) to a new truncation degree."""
        out = ContactPolynomial.zeros(trunc_M)
        n = min(trunc_M, self.trunc_M) + 1
        out.hi[:n] = self.hi[:n]
        out.lo[:n] = self.lo[:n]
        return out

    def compose_square(self, trunc_M: Optional[int] = None) -> "ContactPolynomial":
        """p(y) -> p(y**2). Result truncated at trunc_M (default 2 * self.trunc_M)."""
        if trunc_M is None:
            trunc_M = 2 * self.trunc_M
        out = ContactPolynomial.zeros(trunc_M)
        keep = min(self.trunc_M, trunc_M // 2) + 1
        out.hi[0:2 * keep:2] = self.hi[:keep]
        out.lo[0:2 * keep:2] = self.lo[:keep]
        return out

    def scale_div_y(self) -> "ContactPolynomial":
        """p(y) / y, keeping trunc_M; requires p[0] == 0."""
        if self.hi[0] != 0 or self.lo[0] != 0:
            raise ConstantTermError("cannot divide by y: constant term is nonzero")
        out = ContactPolynomial.zeros(self.trunc_M)
        out.hi[:-1] = self.hi[1:]
        out.lo[:-1] = self.lo[1:]
        return out

    # -- serialisation ------------------------------------------------------

    def to_csv(self, target: Optional[Path | str] = None) -> str:
        """Write ``index,coefficient`` rows at full precision; returns the text."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["index", "coefficient"])
        with mpmath.workprec(DD_PREC + 20):
            for k in range(len(self)):
                writer.writerow([k, mpmath.nstr(self[k], CSV_DIGITS, strip_zeros=False)])
        text = buffer.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: Path | str | Iterable[str]) -> "ContactPolynomial":
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            lines = Path(source).read_text().splitlines()
        elif isinstance(source, str):
            lines = source.splitlines()
        else:
            lines = list(source)
        rows = list(csv.DictReader(lines))
        coeffs = ["0"] * len(rows)
        for row in rows:
            coeffs[int(row["index"])] = row["coefficient"]
        return cls.from_coefficients(coeffs, trunc_M=len(coeffs) - 1)
