"""Scalars, Laurent polynomials, truncated series, sparse matrices and exact
linear algebra.

Two scalar backends are supported: ``"exact"`` (``fractions.Fraction``) and
``"numeric"`` (Python ``complex``).  Containers carry the backend tag and
refuse to mix backends.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
import numbers

import numpy as np

from .errors import (BackendMismatch, DimensionMismatch, ExactOnly,
                     OutsideAnnulus, SiteOutOfRange, VariableMismatch)

EXACT = "exact"
NUMERIC = "numeric"


def backend_of(x):
    if isinstance(x, (Fraction, int)) and not isinstance(x, bool):
        return EXACT
    if isinstance(x, (float, complex, np.floating, np.complexfloating)):
        return NUMERIC
    raise BackendMismatch("unsupported scalar type %r" % type(x))


def to_backend(x, backend):
    if backend == EXACT:
        if backend_of(x) != EXACT:
            raise BackendMismatch("cannot convert %r to an exact scalar" % (x,))
        return Fraction(x)
    return complex(x)


def parse_rational(text):
    """'3/7' -> Fraction(3, 7).  Decimal strings are accepted only if exact."""
    if isinstance(text, numbers.Rational):
        return Fraction(text)
    return Fraction(str(text).strip())


@dataclass(frozen=True)
class Scalar:
    """A tagged scalar.  Numeric comparisons always take an explicit tolerance."""

    backend: str
    value: object

    @classmethod
    def exact(cls, x):
        return cls(EXACT, Fraction(x))

    @classmethod
    def numeric(cls, x):
        return cls(NUMERIC, complex(x))

    def _check(self, other):
        if other.backend != self.backend:
            raise BackendMismatch("%s vs %s" % (self.backend, other.backend))

    def __add__(self, other):
        self._check(other)
        return Scalar(self.backend, self.value + other.value)

    def __sub__(self, other):
        self._check(other)
        return Scalar(self.backend, self.value - other.value)

    def __mul__(self, other):
        self._check(other)
        return Scalar(self.backend, self.value * other.value)

    def __truediv__(self, other):
        self._check(other)
        return Scalar(self.backend, self.value / other.value)

    def __neg__(self):
        return Scalar(self.backend, -self.value)

    def equals(self, other, tol=None):
        self._check(other)
        if self.backend == EXACT:
            return self.value == other.value
        if tol is None:
            raise ValueError("numeric comparison requires an explicit tolerance")
        return abs(self.value - other.value) <= tol


def _is_zero(c):
    if isinstance(c, SparseMatrix):
        return c.nnz == 0
    return c == 0


def _coeff_backend(c):
    if isinstance(c, SparseMatrix):
        return c.backend
    return backend_of(c)


class LaurentPoly:
    """Finite Laurent polynomial sum_e c_e var^e.

    Coefficients are scalars of one backend or SparseMatrix objects of one
    backend (operator-valued polynomials).  Zero coefficients are dropped.
    """

    __slots__ = ("var", "backend", "coeffs")

    def __init__(self, var, coeffs=None, backend=EXACT):
        self.var = var
        self.backend = backend
        clean = {}
        for e, c in (coeffs or {}).items():
            if _is_zero(c):
                continue
            if _coeff_backend(c) != backend:
                raise BackendMismatch("coefficient backend differs from %s" % backend)
            clean[int(e)] = c
        self.coeffs = clean

    @classmethod
    def monomial(cls, var, exp, coeff=1, backend=EXACT):
        if not isinstance(coeff, SparseMatrix):
            coeff = to_backend(coeff, backend)
        return cls(var, {exp: coeff}, backend)

    def _check(self, other):
        if self.var != other.var:
            raise VariableMismatch("%s vs %s" % (self.var, other.var))
        if self.backend != other.backend:
            raise BackendMismatch("%s vs %s" % (self.backend, other.backend))

    def _coerce(self, other):
        if isinstance(other, LaurentPoly):
            self._check(other)
            return other
        if isinstance(other, SparseMatrix):
            return LaurentPoly(self.var, {0: other}, self.backend)
        return LaurentPoly(self.var, {0: to_backend(other, self.backend)}, self.backend)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out[e] + c if e in out else c
        return LaurentPoly(self.var, out, self.backend)

    __radd__ = __add__

    def __neg__(self):
        return LaurentPoly(self.var, {e: -c for e, c in self.coeffs.items()}, self.backend)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, (LaurentPoly, SparseMatrix)):
            c = to_backend(other, self.backend)
            return LaurentPoly(self.var, {e: v * c for e, v in self.coeffs.items()}, self.backend)
        other = self._coerce(other)
        out = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                p = c1 @ c2 if isinstance(c1, SparseMatrix) and isinstance(c2, SparseMatrix) else c1 * c2
                e = e1 + e2
                out[e] = out[e] + p if e in out else p
        return LaurentPoly(self.var, out, self.backend)

    def __rmul__(self, other):
        if isinstance(other, (SparseMatrix, LaurentPoly)):
            return self._coerce(other) * self
        return self * other

    def __eq__(self, other):
        if not isinstance(other, LaurentPoly):
            other = self._coerce(other)
        if self.var != other.var or self.backend != other.backend:
            return False
        return (self - other).is_zero()

    def __hash__(self):
        return id(self)

    def is_zero(self):
        return not self.coeffs

    def coeff(self, e):
        return self.coeffs.get(e, 0)

    def exponents(self):
        return sorted(self.coeffs)

    def degree_range(self):
        if not self.coeffs:
            return None
        return min(self.coeffs), max(self.coeffs)

    def evaluate(self, x):
        x = to_backend(x, self.backend)
        total = 0
        for e, c in self.coeffs.items():
            total = total + c * (x ** e)
        return total

    def derivative(self):
        return LaurentPoly(self.var, {e - 1: c * e for e, c in self.coeffs.items() if e}, self.backend)

    def map(self, fn):
        return LaurentPoly(self.var, {e: fn(c) for e, c in self.coeffs.items()}, self.backend)

    def substitute_power(self, k):
        """p(x) -> p(x^k)."""
        return LaurentPoly(self.var, {e * k: c for e, c in self.coeffs.items()}, self.backend)

    def __repr__(self):
        if not self.coeffs:
            return "0"
        terms = []
        for e in sorted(self.coeffs, reverse=True):
            terms.append("(%s)*%s^%d" % (self.coeffs[e], self.var, e))
        return " + ".join(terms)


def laurent_arith(a, b, op):
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    raise ValueError("unknown op %r" % op)


def u_variable(q, var="zeta"):
    """U(zeta) = (q zeta^2 + q^-1 zeta^-2) / (q + q^-1) as a Laurent polynomial."""
    backend = backend_of(q)
    q = to_backend(q, backend)
    s = q + 1 / q
    return LaurentPoly(var, {2: q / s, -2: 1 / (q * s)}, backend)


class TruncatedSeries:
    """Series sum_e c_e x^e whose coefficients are known for lo <= e <= hi.

    Coefficients below ``lo`` are known to vanish; above ``hi`` they are
    unknown.  ``annulus`` = (rmin, rmax) is where the series is declared to
    converge.
    """

    def __init__(self, var, coeffs, lo, hi, annulus=(0.0, float("inf")), backend=NUMERIC):
        self.var = var
        self.lo = lo
        self.hi = hi
        self.annulus = annulus
        self.backend = backend
        self.coeffs = {e: c for e, c in coeffs.items() if lo <= e <= hi and c != 0}

    def _check(self, other):
        if self.var != other.var:
            raise VariableMismatch("%s vs %s" % (self.var, other.var))
        if self.backend != other.backend:
            raise BackendMismatch("%s vs %s" % (self.backend, other.backend))

    def _annulus(self, other):
        return (max(self.annulus[0], other.annulus[0]), min(self.annulus[1], other.annulus[1]))

    def __add__(self, other):
        self._check(other)
        lo, hi = min(self.lo, other.lo), min(self.hi, other.hi)
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0) + c
        return TruncatedSeries(self.var, out, lo, hi, self._annulus(other), self.backend)

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            c = to_backend(other, self.backend)
            return TruncatedSeries(self.var, {e: v * c for e, v in self.coeffs.items()},
                                   self.lo, self.hi, self.annulus, self.backend)
        self._check(other)
        lo = self.lo + other.lo
        hi = min(self.hi + other.lo, other.hi + self.lo)
        out = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = e1 + e2
                if e <= hi:
                    out[e] = out.get(e, 0) + c1 * c2
        return TruncatedSeries(self.var, out, lo, hi, self._annulus(other), self.backend)

    def coeff(self, e):
        if e < self.lo:
            return 0
        if e > self.hi:
            raise KeyError("coefficient of %s^%d is outside the known window" % (self.var, e))
        return self.coeffs.get(e, 0)


def series_eval(s, point):
    """Partial sum of ``s`` at ``point`` and the size of the last retained term."""
    r = abs(complex(point))
    rmin, rmax = s.annulus
    if not (rmin <= r <= rmax):
        raise OutsideAnnulus("|%s| = %g outside [%g, %g]" % (s.var, r, rmin, rmax))
    if not s.coeffs:
        return 0, 0.0
    if s.backend == EXACT and backend_of(point) == EXACT:
        x = Fraction(point)
    else:
        x = complex(point)
    total = 0
    for e in sorted(s.coeffs):
        total += s.coeffs[e] * x ** e
    top = max(s.coeffs)
    err = abs(complex(s.coeffs[top] * x ** top))
    return total, err


class SparseMatrix:
    """Square or rectangular sparse matrix stored as {row: {col: value}}."""

    __slots__ = ("shape", "rows", "backend")

    def __init__(self, shape, rows=None, backend=EXACT):
        if isinstance(shape, int):
            shape = (shape, shape)
        self.shape = tuple(shape)
        self.backend = backend
        clean = {}
        for i, row in (rows or {}).items():
            r = {j: v for j, v in row.items() if v != 0}
            if r:
                clean[i] = r
        self.rows = clean

    @property
    def dim(self):
        return self.shape[0]

    @property
    def nnz(self):
        return sum(len(r) for r in self.rows.values())

    @classmethod
    def identity(cls, n, backend=EXACT, scale=1):
        s = to_backend(scale, backend)
        return cls(n, {i: {i: s} for i in range(n)}, backend)

    @classmethod
    def zero(cls, n, backend=EXACT):
        return cls(n, {}, backend)

    @classmethod
    def from_dense(cls, a, backend=EXACT):
        a = [list(r) for r in a]
        rows = {}
        for i, r in enumerate(a):
            rows[i] = {j: to_backend(v, backend) for j, v in enumerate(r) if v != 0}
        return cls((len(a), len(a[0]) if a else 0), rows, backend)

    def to_dense(self):
        dtype = object if self.backend == EXACT else complex
        out = np.zeros(self.shape, dtype=dtype)
        if self.backend == EXACT:
            out[:, :] = Fraction(0)
        for i, r in self.rows.items():
            for j, v in r.items():
                out[i, j] = v
        return out

    def to_numpy(self):
        out = np.zeros(self.shape, dtype=complex)
        for i, r in self.rows.items():
            for j, v in r.items():
                out[i, j] = complex(v)
        return out

    def entry(self, i, j):
        return self.rows.get(i, {}).get(j, 0)

    def _check(self, other, op="+"):
        if not isinstance(other, SparseMatrix):
            raise TypeError("expected SparseMatrix")
        if self.backend != other.backend:
            raise BackendMismatch("%s vs %s" % (self.backend, other.backend))
        if op == "+" and self.shape != other.shape:
            raise DimensionMismatch("%s vs %s" % (self.shape, other.shape))
        if op == "@" and self.shape[1] != other.shape[0]:
            raise DimensionMismatch("%s @ %s" % (self.shape, other.shape))

    def __add__(self, other):
        if not isinstance(other, SparseMatrix):
            if other == 0:
                return self
            return NotImplemented
        self._check(other)
        out = {i: dict(r) for i, r in self.rows.items()}
        for i, r in other.rows.items():
            row = out.setdefault(i, {})
            for j, v in r.items():
                row[j] = row.get(j, 0) + v
        return SparseMatrix(self.shape, out, self.backend)

    def __radd__(self, other):
        if other == 0:
            return self
        return NotImplemented

    def __neg__(self):
        return SparseMatrix(self.shape, {i: {j: -v for j, v in r.items()} for i, r in self.rows.items()},
                            self.backend)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        if isinstance(c, SparseMatrix):
            return self @ c
        c = to_backend(c, self.backend) if self.backend == EXACT else complex(c)
        if c == 0:
            return SparseMatrix(self.shape, {}, self.backend)
        return SparseMatrix(self.shape, {i: {j: v * c for j, v in r.items()} for i, r in self.rows.items()},
                            self.backend)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1 / to_backend(c, self.backend))

    def __matmul__(self, other):
        self._check(other, "@")
        out = {}
        orows = other.rows
        for i, r in self.rows.items():
            acc = {}
            for k, v in r.items():
                ok = orows.get(k)
                if not ok:
                    continue
                for j, w in ok.items():
                    acc[j] = acc.get(j, 0) + v * w
            if acc:
                out[i] = acc
        return SparseMatrix((self.shape[0], other.shape[1]), out, self.backend)

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return self.shape == other.shape and (self - other).nnz == 0

    def __hash__(self):
        return id(self)

    def is_zero(self):
        return self.nnz == 0

    def kron(self, other):
        if self.backend != other.backend:
            raise BackendMismatch("%s vs %s" % (self.backend, other.backend))
        m, n = other.shape
        out = {}
        for i, r in self.rows.items():
            for k, ro in other.rows.items():
                row = {}
                for j, v in r.items():
                    for l, w in ro.items():
                        row[j * n + l] = v * w
                out[i * m + k] = row
        return SparseMatrix((self.shape[0] * m, self.shape[1] * n), out, self.backend)

    def transpose(self):
        out = {}
        for i, r in self.rows.items():
            for j, v in r.items():
                out.setdefault(j, {})[i] = v
        return SparseMatrix((self.shape[1], self.shape[0]), out, self.backend)

    def trace(self):
        return sum((r.get(i, 0) for i, r in self.rows.items()), to_backend(0, self.backend))

    def max_abs(self):
        return max((abs(complex(v)) for r in self.rows.values() for v in r.values()), default=0.0)

    def flatten(self):
        """Row-major list of all entries (zeros included)."""
        n, m = self.shape
        out = [to_backend(0, self.backend)] * (n * m)
        for i, r in self.rows.items():
            for j, v in r.items():
                out[i * m + j] = v
        return out

    def to_numeric(self):
        return SparseMatrix(self.shape, {i: {j: complex(v) for j, v in r.items()} for i, r in self.rows.items()},
                            NUMERIC)

    def __repr__(self):
        return "SparseMatrix(%dx%d, nnz=%d, %s)" % (self.shape[0], self.shape[1], self.nnz, self.backend)


def kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = out.kron(m)
    return out


def comm(a, b):
    return a @ b - b @ a


def qcomm(a, b, q):
    """[a, b]_q = q a b - q^{-1} b a."""
    return a @ b * q - b @ a * (1 / q)


# Pauli-type building blocks for one spin-1/2 site

def sigma_plus(backend=EXACT):
    return SparseMatrix(2, {0: {1: to_backend(1, backend)}}, backend)


def sigma_minus(backend=EXACT):
    return SparseMatrix(2, {1: {0: to_backend(1, backend)}}, backend)


def sigma_z(backend=EXACT):
    one = to_backend(1, backend)
    return SparseMatrix(2, {0: {0: one}, 1: {1: -one}}, backend)


def sigma_x(backend=EXACT):
    return sigma_plus(backend) + sigma_minus(backend)


def sigma_y(backend=EXACT):
    # sigma_y = -i(sigma_+ - sigma_-); only used with the numeric backend
    if backend == EXACT:
        raise ExactOnly("sigma_y needs complex entries; use sigma_x/sigma_+- combinations")
    return SparseMatrix(2, {0: {1: -1j}, 1: {0: 1j}}, backend)


def q_sigma_z(q, power=1):
    """q^{power * sigma_z} = diag(q^power, q^-power)."""
    backend = backend_of(q)
    q = to_backend(q, backend)
    return SparseMatrix(2, {0: {0: q ** power}, 1: {1: q ** (-power)}}, backend)


def tensor_embed(local, site, n_sites):
    """Embed a one-site (2x2) or adjacent-pair (4x4) operator into V_N x ... x V_1.

    Site 1 is the rightmost Kronecker factor.  A 4x4 operator at ``site``
    acts on sites site+1 (left factor) and site (right factor).
    """
    width = {2: 1, 4: 2}.get(local.dim)
    if width is None:
        raise DimensionMismatch("local operator must be 2x2 or 4x4, got %s" % (local.shape,))
    if site < 1 or site + width - 1 > n_sites:
        raise SiteOutOfRange("site %d (width %d) outside 1..%d" % (site, width, n_sites))
    left = SparseMatrix.identity(2 ** (n_sites - site - width + 1), local.backend)
    right = SparseMatrix.identity(2 ** (site - 1), local.backend)
    return left.kron(local).kron(right)


def nullspace_exact(m):
    """Exact right nullspace of a rational matrix.

    ``m`` may be a SparseMatrix or a list of rows.  Rows are scaled to
    integers and reduced with fraction-free (Bareiss) elimination; the basis
    is returned as lists of Fractions, one free column per vector.
    """
    if isinstance(m, SparseMatrix):
        if m.backend != EXACT:
            raise ExactOnly("nullspace_exact requires the exact backend")
        n_cols = m.shape[1]
        rows = []
        for i in sorted(m.rows):
            rows.append([m.rows[i].get(j, 0) for j in range(n_cols)])
    else:
        rows = [list(r) for r in m]
        n_cols = len(rows[0]) if rows else 0
        for r in rows:
            for v in r:
                if backend_of(v) != EXACT:
                    raise ExactOnly("nullspace_exact requires the exact backend")
    ints = []
    for r in rows:
        r = [Fraction(v) for v in r]
        if not any(r):
            continue
        d = lcm(*[v.denominator for v in r])
        ints.append([int(v * d) for v in r])

    # Bareiss elimination to row echelon form
    pivots = []
    a = ints
    n_rows = len(a)
    prev = 1
    row = 0
    for col in range(n_cols):
        if row >= n_rows:
            break
        p = next((i for i in range(row, n_rows) if a[i][col] != 0), None)
        if p is None:
            continue
        a[row], a[p] = a[p], a[row]
        piv = a[row][col]
        for i in range(row + 1, n_rows):
            f = a[i][col]
            a[i] = [(piv * a[i][j] - f * a[row][j]) // prev for j in range(n_cols)]
        prev = piv
        pivots.append(col)
        row += 1

    rank = len(pivots)
    free = [c for c in range(n_cols) if c not in pivots]
    basis = []
    for fcol in free:
        x = [Fraction(0)] * n_cols
        x[fcol] = Fraction(1)
        for k in range(rank - 1, -1, -1):
            pc = pivots[k]
            s = sum((Fraction(a[k][j]) * x[j] for j in range(pc + 1, n_cols) if a[k][j]), Fraction(0))
            x[pc] = -s / a[k][pc]
        basis.append(x)
    return basis


def solve_exact(a_cols, b):
    """Solve sum_j x_j a_cols[j] = b exactly (least-norm not needed).

    ``a_cols`` are equal-length lists of Fractions.  Returns (x, residual)
    where residual is b - A x, zero iff b lies in the span.
    """
    n = len(a_cols)
    m = len(b)
    aug = [[a_cols[j][i] for j in range(n)] + [b[i]] for i in range(m)]
    basis = nullspace_exact(aug)
    x = None
    for v in basis:
        if v[n] != 0:
            x = [-v[j] / v[n] for j in range(n)]
            break
    if x is None:
        # b is not in the span: return the projection-free residual b itself
        return None, list(b)
    res = [b[i] - sum(x[j] * a_cols[j][i] for j in range(n)) for i in range(m)]
    return x, res
