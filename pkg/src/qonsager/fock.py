"""Level-one bosonic Fock modules, q-vertex operators and the spectral
checks of the bosonized half-infinite chain.

Both sectors i = 0, 1 live in one space labelled by m, the eigenvalue of the
zero-mode operator d on e^{Lambda_i + n alpha} (m = i + 2n), times the
polynomial ring in the creation modes.  Half-integer powers of q in the
mode expansions are absorbed by the normalization b_m = q^{-m/2} a_m, which
preserves [b_m, b_n] = delta_{m+n,0} [m][2m]/m; every matrix is then built
from integer powers of q and stays real for real q and zeta.

Contour integrals over the vertex-operator variable w are evaluated exactly
as a sum of residues at the poles the contour encloses.  The integrand is a
Laurent polynomial in w (on the truncated module) times a rational factor,
so only finitely many Taylor coefficients are ever needed.
"""

import csv
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from math import comb, factorial

import numpy as np

from . import qseries
from .errors import (ConventionError, DimensionMismatch, InvalidParameters, OutsideAnnulus,
                     TruncationError)

ANNULUS = (0.55, 0.95)
EXCITATION_ANNULUS = (1.0, 3.0)
KINDS = ("Phi-", "Phi+", "Psi*-", "Psi*+", "X+", "X-")


def qint(n, q):
    return (q ** n - q ** -n) / (q - 1 / q)


def _partitions(max_degree, max_part):
    """Multiplicity vectors (k_1..k_L) with sum n k_n <= max_degree."""
    out = []

    def rec(n, left, cur):
        if n > max_part:
            out.append(tuple(cur))
            return
        for k in range(left // n + 1):
            cur.append(k)
            rec(n + 1, left - k * n, cur)
            cur.pop()

    rec(1, max_degree, [])
    out.sort(key=lambda k: (sum((i + 1) * x for i, x in enumerate(k)), tuple(-x for x in k)))
    return out


@dataclass(frozen=True)
class Cutoffs:
    L: int
    D: int
    charge: int

    def __post_init__(self):
        if min(self.L, self.D, self.charge) < 1:
            raise InvalidParameters(f"cutoffs must be >= 1, got {self}")


class FockSpace:
    """Truncated direct sum of the two level-one Fock modules.

    Basis: pairs (m, k) with m = i + 2n, |n| <= charge, and k a multiplicity
    vector of the modes b_{-1}..b_{-L} of degree <= D.  Index = block(m) * P + k.
    """

    def __init__(self, q, cutoffs):
        self.q = float(q)
        if not -1 < self.q < 1 or self.q == 0:
            raise InvalidParameters(f"need 0 < |q| < 1, got {q}")
        self.cut = cutoffs
        self.parts = _partitions(cutoffs.D, cutoffs.L)
        self.P = len(self.parts)
        self.index = {k: i for i, k in enumerate(self.parts)}
        self.degree = np.array([sum((i + 1) * x for i, x in enumerate(k)) for k in self.parts])
        c = cutoffs.charge
        self.m_values = [i + 2 * n for n in range(-c, c + 1) for i in (0, 1)]
        self.m_values.sort()
        self.block = {m: b for b, m in enumerate(self.m_values)}
        self.dim = self.P * len(self.m_values)
        self.heis = np.array([0.0] + [qint(n, self.q) * qint(2 * n, self.q) / n
                                      for n in range(1, cutoffs.L + 1)])

    @cached_property
    def norms(self):
        """sqrt|<k|k>| for the monomial basis under the Heisenberg form,
        tiled over the charge blocks; residuals are measured in the basis
        rescaled by these."""
        one = np.array([np.sqrt(np.prod([abs(self.heis[n + 1]) ** x * factorial(x)
                                         for n, x in enumerate(k)])) for k in self.parts])
        return np.tile(one, len(self.m_values))

    def normalized(self, mat):
        """Matrix elements between normalized basis states."""
        return mat * self.norms[None, :] / self.norms[:, None]

    # Heisenberg part -------------------------------------------------
    @cached_property
    def create(self):
        """b_{-n} as P x P matrices, n = 1..L (index 0 unused)."""
        mats = [None]
        for n in range(1, self.cut.L + 1):
            m = np.zeros((self.P, self.P))
            for j, k in enumerate(self.parts):
                kk = list(k)
                kk[n - 1] += 1
                i = self.index.get(tuple(kk))
                if i is not None:
                    m[i, j] = 1.0
            mats.append(m)
        return mats

    @cached_property
    def annihilate(self):
        """b_n = [n][2n]/n d/d(b_{-n})."""
        mats = [None]
        for n in range(1, self.cut.L + 1):
            m = np.zeros((self.P, self.P))
            for j, k in enumerate(self.parts):
                if k[n - 1]:
                    kk = list(k)
                    kk[n - 1] -= 1
                    m[self.index[tuple(kk)], j] = k[n - 1] * self.heis[n]
            mats.append(m)
        return mats

    def _exp_nilpotent(self, gen, dtype):
        out = np.eye(self.P, dtype=dtype)
        term = np.eye(self.P, dtype=dtype)
        for k in range(1, self.cut.D + 1):
            term = gen @ term / k
            if not term.any():
                break
            out = out + term
        return out

    def exp_creation(self, alpha):
        """exp(sum_n alpha[n] b_{-n}) for n = 1..L (alpha[0] ignored)."""
        alpha = np.asarray(alpha)
        gen = sum(alpha[n] * self.create[n] for n in range(1, self.cut.L + 1))
        return self._exp_nilpotent(gen, np.result_type(alpha, float))

    def exp_annihilation(self, beta):
        beta = np.asarray(beta)
        gen = sum(beta[n] * self.annihilate[n] for n in range(1, self.cut.L + 1))
        return self._exp_nilpotent(gen, np.result_type(beta, float))

    def graded(self, mat, d):
        """Part of `mat` changing the degree by exactly d."""
        mask = (self.degree[:, None] - self.degree[None, :]) == d
        return np.where(mask, mat, 0)

    def sector(self, m):
        return m % 2

    def charge_of(self, m):
        return (m - m % 2) // 2

    def vacuum(self, m=0):
        v = np.zeros(self.dim)
        v[self.block[m] * self.P] = 1.0
        return v

    def basis_label(self, idx):
        b, k = divmod(idx, self.P)
        m = self.m_values[b]
        return m, self.parts[k]

    def faithful_mask(self, max_degree=None, charge_margin=1):
        """States of degree <= max_degree (default D // 2) and charge at least
        `charge_margin` away from the cutoff."""
        dmax = self.cut.D // 2 if max_degree is None else max_degree
        c = self.cut.charge - charge_margin
        mask = np.zeros(self.dim, dtype=bool)
        for m in self.m_values:
            if abs(self.charge_of(m)) <= c:
                b = self.block[m]
                mask[b * self.P:(b + 1) * self.P] = self.degree <= dmax
        return mask


class FockOperator:
    """Block-sparse operator: {(m_out, m_in): P x P array}.  Every operator
    built here shifts m by a fixed amount per block, so products stay sparse."""

    def __init__(self, space, blocks=None, meta=None):
        self.space = space
        self.blocks = dict(blocks or {})
        self.meta = dict(meta or {})

    @property
    def mat(self):
        s = self.space
        dtype = np.result_type(float, *self.blocks.values())
        out = np.zeros((s.dim, s.dim), dtype=dtype)
        for (mo, mi), blk in self.blocks.items():
            bo, bi = s.block[mo], s.block[mi]
            out[bo * s.P:(bo + 1) * s.P, bi * s.P:(bi + 1) * s.P] = blk
        return out

    def _same(self, other):
        if other.space is not self.space:
            raise DimensionMismatch("operators live on different Fock spaces")

    def __matmul__(self, other):
        if not isinstance(other, FockOperator):
            return self.apply(other)
        self._same(other)
        by_in = {}
        for (mo, mi), blk in self.blocks.items():
            by_in.setdefault(mi, []).append((mo, blk))
        out = {}
        for (mo2, mi2), blk2 in other.blocks.items():
            for mo, blk in by_in.get(mo2, ()):
                prod = blk @ blk2
                key = (mo, mi2)
                out[key] = out[key] + prod if key in out else prod
        return FockOperator(self.space, out, {"product": [self.meta.get("kind"), other.meta.get("kind")]})

    def _combine(self, other, sign):
        self._same(other)
        out = dict(self.blocks)
        for k, blk in other.blocks.items():
            out[k] = out[k] + sign * blk if k in out else sign * blk
        return FockOperator(self.space, out, {"sum": True})

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __mul__(self, c):
        return FockOperator(self.space, {k: c * v for k, v in self.blocks.items()}, self.meta)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def apply(self, vec):
        s = self.space
        vec = np.asarray(vec)
        out = np.zeros(s.dim, dtype=np.result_type(vec, *self.blocks.values()))
        for (mo, mi), blk in self.blocks.items():
            bo, bi = s.block[mo], s.block[mi]
            out[bo * s.P:(bo + 1) * s.P] += blk @ vec[bi * s.P:(bi + 1) * s.P]
        return out

    def block(self, m_out, m_in):
        return self.blocks.get((m_out, m_in), np.zeros((self.space.P, self.space.P)))


def zero_operator(space):
    return FockOperator(space, {}, {"kind": "0"})


def identity(space):
    return FockOperator(space, {(m, m): np.eye(space.P) for m in space.m_values}, {"kind": "id"})


def scalar_operator(space, fn):
    """Diagonal operator acting on charge block m by the scalar fn(m)."""
    return FockOperator(space, {(m, m): fn(m) * np.eye(space.P) for m in space.m_values})


def relative_residual(lhs, rhs, mask=None):
    """max |lhs - rhs| / max |lhs| over normalized matrix elements between
    states in `mask` (default: the space's faithful states)."""
    s = lhs.space
    if mask is None:
        mask = s.faithful_mask()
    keys = set(lhs.blocks) | set(rhs.blocks)
    diff = scale = 0.0
    nrm = s.norms[:s.P]
    for mo, mi in keys:
        bo, bi = s.block[mo], s.block[mi]
        ro, ri = mask[bo * s.P:(bo + 1) * s.P], mask[bi * s.P:(bi + 1) * s.P]
        if not ro.any() or not ri.any():
            continue
        sc = (nrm[None, :] / nrm[:, None])[np.ix_(ro, ri)]
        a = lhs.block(mo, mi)[np.ix_(ro, ri)] * sc
        b = rhs.block(mo, mi)[np.ix_(ro, ri)] * sc
        diff = max(diff, float(np.abs(a - b).max()))
        scale = max(scale, float(np.abs(a).max()), float(np.abs(b).max()))
    return diff / scale if scale else diff


@dataclass(frozen=True)
class FockBasisState:
    sector: int
    charge: int
    occupation: tuple

    @property
    def d_eigenvalue(self):
        return self.sector + 2 * self.charge


@dataclass
class FockModule:
    """One sector of a FockSpace with its basis and elementary actions.

    Heisenberg modes act in the b-normalization; their commutators agree
    with those of the a-modes.  All actions are FockOperators on the full
    space (both sectors), since e^{alpha/2} changes the sector."""
    space: FockSpace
    sector: int
    basis: list

    def heisenberg(self, n):
        """b_n for n != 0 (n < 0 creates)."""
        s = self.space
        if n == 0 or abs(n) > s.cut.L:
            raise InvalidParameters(f"mode {n} outside 1..{s.cut.L}")
        mat = s.create[-n] if n < 0 else s.annihilate[n]
        return FockOperator(s, {(m, m): mat for m in s.m_values}, {"kind": f"b[{n}]"})

    def shift(self, k):
        """e^{k alpha / 2}: m -> m + k, dropping states leaving the window."""
        s = self.space
        return FockOperator(s, {(m + k, m): np.eye(s.P) for m in s.m_values if m + k in s.block},
                            {"kind": f"e^({k}alpha/2)"})

    def z_d(self, z):
        """z^d acting on the zero-mode part."""
        return scalar_operator(self.space, lambda m: z ** m)

    def d_operator(self):
        return scalar_operator(self.space, float)


def build_fock(i, cutoffs, q=-0.4):
    """Basis and actions of sector i at the given cutoffs."""
    if i not in (0, 1):
        raise InvalidParameters(f"sector must be 0 or 1, got {i}")
    s = FockSpace(q, cutoffs)
    basis = [FockBasisState(i, s.charge_of(m), k) for m in s.m_values if m % 2 == i for k in s.parts]
    return FockModule(s, i, basis)


# residues ----------------------------------------------------------------

def _taylor_at_zero(roots, order):
    """Taylor coefficients 0..order of prod (w - r)^e at w = 0."""
    out = np.zeros(order + 1, dtype=complex)
    out[0] = 1.0
    for r, e in roots:
        ser = np.array([comb_general(e, k) * (-1 / r) ** k for k in range(order + 1)],
                       dtype=complex) * (-r) ** e
        out = np.convolve(out, ser)[:order + 1]
    return out


def comb_general(e, k):
    """Binomial coefficient C(e, k) for any integer e."""
    if e >= 0:
        return comb(e, k) if k <= e else 0
    # C(-n, k) = (-1)^k C(n + k - 1, k)
    return (-1) ** k * comb(-e + k - 1, k)


def _pole_residues(const, roots, k, powers):
    """Residue of w^t const prod (w - r)^e at the pole roots[k], for each t
    in `powers`.  Poles of order m use the Taylor coefficient u^(m-1) of the
    remaining factors at w = r + u."""
    r, e = complex(roots[k][0]), roots[k][1]
    rest = const
    others = []
    for j, (rj, ej, _) in enumerate(roots):
        if j != k:
            if abs(r - complex(rj)) < 1e-13 * max(1.0, abs(r)):
                raise TruncationError(f"coincident poles at w = {r}")
            rest = rest * (r - complex(rj)) ** ej
            others.append((r - complex(rj), ej))
    powers = np.asarray(powers)
    if e == -1:
        return rest * r ** powers
    order = -e - 1
    ser = np.zeros(order + 1, dtype=complex)
    ser[0] = 1.0
    for d, ej in others:
        ser = np.convolve(ser, [comb_general(ej, n) / d ** n for n in range(order + 1)])[:order + 1]
    out = np.zeros(len(powers), dtype=complex)
    for a, t in enumerate(powers):
        wt = np.array([comb_general(int(t), n) / r ** n for n in range(order + 1)])
        out[a] = rest * r ** t * np.dot(wt[::-1], ser)
    return out


def contour_moments(const, shift, roots, powers):
    """m_p = (1/2 pi i) oint w^(p + shift) const prod (w - r)^e dw for p in
    `powers`, the contour enclosing 0 and the roots flagged inside.

    roots: list of (r, e, inside) with r != 0.
    When the residue at infinity vanishes and the power of w is negative the
    integral is taken as minus the residues outside the contour: the residues
    at 0 and at the inside poles then cancel to many digits, so summing them
    directly would lose precision.
    """
    powers = np.asarray(powers) + shift
    out = np.zeros(len(powers), dtype=complex)
    total = sum(e for _, e, _ in roots)
    outer = (powers < 0) & (powers + total <= -2)
    inner = ~outer
    for k, (_, e, inside) in enumerate(roots):
        if e >= 0:
            continue
        if inside:
            out[inner] += _pole_residues(const, roots, k, powers[inner])
        else:
            out[outer] -= _pole_residues(const, roots, k, powers[outer])
    need = -1 - powers[inner]
    if need.size and need.max() >= 0:
        tay = _taylor_at_zero([(complex(r), e) for r, e, _ in roots], int(need.max())) * const
        vals = np.zeros(need.size, dtype=complex)
        ok = need >= 0
        vals[ok] = tay[need[ok]]
        out[inner] += vals
    return out


def _real_if_close(x):
    x = np.asarray(x)
    if np.iscomplexobj(x) and np.all(np.abs(x.imag) <= 1e-14 * np.maximum(1.0, np.abs(x.real))):
        return x.real
    return x


# normal-ordered vertex terms --------------------------------------------

@dataclass(frozen=True)
class Item:
    """One exponential factor exp(sum_n s (c w)^{+-n} b_{-+n} / den_n).

    side: "cre" (b_{-n}, power (c w)^n) or "ann" (b_n, power (c / w)^n);
    den: "PQ" for [2n], "RS" for [n]; var: index of the contour variable w,
    or None for a pure number."""
    side: str
    den: str
    s: int
    c: complex
    var: object = None


@dataclass(frozen=True)
class ZeroMode:
    """Zero-mode part of one vertex operator: charge step dm and the scalar
    and w-power it contributes on input charge label m."""
    kind: str
    zeta: complex
    dm: int
    var: object = None

    def value(self, q, m):
        i = m % 2
        base = -q ** 3 * self.zeta * self.zeta
        if self.kind == "Phi-":
            return base ** ((m + i) // 2) * self.zeta ** -i, 0
        if self.kind == "Phi+":
            return base ** ((m + i) // 2) * self.zeta ** -i, -m
        if self.kind == "Psi*-":
            return base ** ((-m + i) // 2) * self.zeta ** (1 - i), 0
        if self.kind == "Psi*+":
            return base ** ((-m + i) // 2) * self.zeta ** (1 - i), m
        if self.kind in ("X-", "X+"):
            pw = m if self.kind == "X+" else -m
            if self.var is None:             # numeric w stored in zeta
                return self.zeta ** pw, 0
            return 1.0, pw
        raise InvalidParameters(self.kind)


@dataclass
class Contour:
    """Rational weight const * w^shift * prod (w - r)^e of one contour
    variable; roots are (r, e, inside)."""
    const: complex
    shift: int
    roots: list


@dataclass
class NormalTerm:
    """coef * :prod of vertex operators: with every contraction done.

    cross: list of (v, u, a, e) meaning (w_v - a w_u)^e with v left of u
    (the u contour is the smaller one)."""
    coef: complex
    items: list
    zero: list
    contours: list
    cross: list = field(default_factory=list)
    label: str = ""


def _pure_number(z):
    z = complex(z)
    return z.real if z.imag == 0 else z


def vertex_term(kind, zeta, q):
    """Normal-ordered form of one vertex operator component."""
    z2 = zeta * zeta
    if kind.startswith("Phi"):
        items = [Item("cre", "PQ", 1, q ** 3 * z2), Item("ann", "PQ", -1, q ** -2 / z2)]
    elif kind.startswith("Psi*"):
        items = [Item("cre", "PQ", -1, q * q * z2), Item("ann", "PQ", 1, q ** -3 / z2)]
    elif kind in ("X+", "X-"):
        return x_term(1 if kind == "X+" else -1, q, w=zeta)
    else:
        raise InvalidParameters(f"unknown vertex operator {kind!r}")
    if kind in ("Phi-", "Psi*-"):
        dm = 1 if kind == "Phi-" else -1
        return NormalTerm(1.0, items, [ZeroMode(kind, zeta, dm)], [], label=kind)
    if kind == "Phi+":        # :Phi_-(zeta) X^-(w):, q^4 zeta^2 inside, q^2 zeta^2 outside
        items += [Item("cre", "RS", -1, 1.0, 0), Item("ann", "RS", 1, q, 0)]
        cont = Contour((1 - q * q) * zeta / q, 1, [(q * q * z2, -1, False), (q ** 4 * z2, -1, True)])
        return NormalTerm(1.0, items, [ZeroMode(kind, zeta, -1, 0)], [cont], label=kind)
    # :Psi*_-(zeta) X^+(w):, q^2 zeta^2 inside, q^4 zeta^2 outside
    items += [Item("cre", "RS", 1, 1 / q, 0), Item("ann", "RS", -1, 1.0, 0)]
    cont = Contour(q * q * (1 - q * q) * zeta, 0, [(q * q * z2, -1, True), (q ** 4 * z2, -1, False)])
    return NormalTerm(1.0, items, [ZeroMode(kind, zeta, 1, 0)], [cont], label=kind)


def x_term(sign, q, w=None, weight=None):
    """X^{sign}(w) in normal-ordered form.  With w=None the variable is a
    contour variable integrated against `weight` (a Contour)."""
    if w is None:
        var, c = 0, 1.0
        contours = [weight]
    else:
        var, c = None, w
        contours = []
    if sign > 0:
        items = [Item("cre", "RS", 1, c / q, var), Item("ann", "RS", -1, 1 / c, var)]
    else:
        items = [Item("cre", "RS", -1, c, var), Item("ann", "RS", 1, q / c, var)]
    kind = "X+" if sign > 0 else "X-"
    return NormalTerm(1.0, items, [ZeroMode(kind, c, 2 * sign, var)], contours, label=kind)


def multiply_terms(left, right, q):
    """Normal-ordered product left * right."""
    nl = len(left.contours)
    shift_var = lambda v: None if v is None else v + nl
    r_items = [Item(it.side, it.den, it.s, it.c, shift_var(it.var)) for it in right.items]
    r_zero = [ZeroMode(z.kind, z.zeta, z.dm, shift_var(z.var)) for z in right.zero]
    contours = [Contour(c.const, c.shift, list(c.roots)) for c in left.contours + right.contours]
    cross = list(left.cross) + [(v + nl, u + nl, a, e) for v, u, a, e in right.cross]
    coef = left.coef * right.coef
    for ann in (it for it in left.items if it.side == "ann"):
        for cre in (it for it in r_items if it.side == "cre"):
            mu_c = ann.c * cre.c
            s = ann.s * cre.s
            if ann.den == cre.den == "PQ":
                q4 = q ** 4
                val = qseries.qpoch(q ** 3 * mu_c, q4) / qseries.qpoch(q * mu_c, q4)
                coef *= val ** s
                continue
            scales = [1.0] if ann.den != cre.den else [q, 1 / q]
            for sc in scales:
                C, e = mu_c * sc, -s
                v, u = ann.var, cre.var
                if v is None and u is None:
                    coef *= (1 - C) ** e
                elif u is None:          # (1 - C / w_v)^e
                    contours[v].shift -= e
                    contours[v].roots.append((C, e, True))
                elif v is None:          # (1 - C w_u)^e
                    coef *= (-C) ** e
                    contours[u].roots.append((1 / C, e, False))
                else:                    # (1 - C w_u / w_v)^e
                    contours[v].shift -= e
                    cross.append((v, u, C, e))
    # zero modes: the right factor acts first
    return NormalTerm(coef, list(left.items) + r_items, r_zero + list(left.zero), contours, cross,
                      label=f"{left.label}*{right.label}")


# iterated residues ------------------------------------------------------

def _merge_roots(roots, tol=1e-12):
    """Combine equal roots with equal designation; coincident roots with
    opposite designation pinch the contour."""
    out = []
    for r, e, ins in roots:
        for k, (r2, e2, ins2) in enumerate(out):
            if abs(complex(r) - complex(r2)) <= tol * max(1.0, abs(r)):
                if ins != ins2 and e < 0 and e2 < 0:
                    raise TruncationError(f"contour pinched between poles at w = {r}")
                # a zero carries no designation; keep the pole's
                out[k] = (r2, e + e2, ins2 if e2 < 0 else ins)
                break
        else:
            out.append((r, e, ins))
    return [x for x in out if x[1] != 0]


def _series_coeffs(factors, order):
    """Taylor coefficients 0..order of prod (1 - a x)^e."""
    out = np.zeros(order + 1, dtype=complex)
    out[0] = 1.0
    for a, e in factors:
        ser = np.array([comb_general(e, k) * (-a) ** k for k in range(order + 1)], dtype=complex)
        out = np.convolve(out, ser)[:order + 1]
    return out


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for k in range(total + 1):
        for rest in _compositions(total - k, parts - 1):
            yield (k,) + rest


@dataclass
class _Integrand:
    """coef * prod_k w_k^shift[k] prod (w_k - r)^e * prod (w_i - a w_j)^e over
    the variables not yet integrated; cross entries are (i, j, a, e), i < j."""
    coef: complex
    shift: list
    roots: list
    cross: list


def _integrate_last(f, t_extra):
    """Integrate the highest-index variable j of f at power w_j^t_extra.

    Poles of the cross factors in w_j lie outside the w_j contour (the
    operator product converges for |w_j| < |w_i|).  Returns integrands in
    the remaining variables."""
    j = len(f.shift) - 1
    t = t_extra + f.shift[j]
    R = _merge_roots(f.roots[j])
    cj = [c for c in f.cross if c[1] == j]
    rest = [c for c in f.cross if c[1] != j]
    deg = sum(e for _, e, _ in R) + sum(c[3] for c in cj)
    out = []

    def spawn(coef, shift, roots, cross):
        out.append(_Integrand(coef, shift, roots, cross))

    def with_root_poles(inside, sign):
        for k, (r, e, ins) in enumerate(R):
            if ins != inside or e >= 0:
                continue
            res = _pole_residues(1.0, R, k, np.array([t]))[0]
            roots = [list(x) for x in f.roots[:j]]
            for i, _, a, e2 in cj:
                roots[i].append((a * r, e2, inside))
            spawn(sign * f.coef * res, list(f.shift[:j]), roots, list(rest))

    if t < 0 and t + deg <= -2:
        # minus the residues outside the contour: roots flagged outside and
        # the cross poles w_j = w_i / a
        with_root_poles(False, -1)
        for c in cj:
            i, _, a, e = c
            if e >= 0:
                continue
            if e < -1:
                raise NotImplementedError("double cross poles do not occur")
            coef = -f.coef * (-1 / a) * a ** -t
            shift = list(f.shift[:j])
            shift[i] += t
            roots = [list(x) for x in f.roots[:j]]
            for r, e2, ins in R:
                coef *= a ** -e2
                roots[i].append((a * r, e2, ins))
            cross = list(rest)
            for c2 in cj:
                if c2 is c:
                    continue
                i2, _, a2, e2 = c2
                if i2 == i:
                    shift[i] += e2
                    coef *= (1 - a2 / a) ** e2
                elif i2 < i:
                    cross.append((i2, i, a2 / a, e2))
                else:
                    coef *= (-a2 / a) ** e2
                    cross.append((i, i2, a / a2, e2))
            spawn(coef, shift, roots, cross)
        return out
    with_root_poles(True, 1)
    need = -1 - t
    if need >= 0:
        tay = _taylor_at_zero([(complex(r), e) for r, e, _ in R], need)
        outer = sorted({c[0] for c in cj})
        series = {i: _series_coeffs([(a, e) for i2, _, a, e in cj if i2 == i], need) for i in outer}
        E = {i: sum(e for i2, _, _, e in cj if i2 == i) for i in outer}
        for comp in _compositions(need, len(outer) + 1):
            coef = tay[comp[0]]
            shift = list(f.shift[:j])
            for i, n in zip(outer, comp[1:]):
                coef = coef * series[i][n]
                shift[i] += E[i] - n
            if coef:
                spawn(f.coef * coef, shift, [list(x) for x in f.roots[:j]], list(rest))
    return out


def contour_moments_nd(contours, cross, ranges):
    """M[p_0, .., p_{n-1}] = oint .. oint prod_k w_k^p_k F_k(w_k) prod (w_i - a w_j)^e,
    innermost (highest-index) variable first."""
    n = len(contours)
    shape = tuple(len(r) for r in ranges)
    M = np.zeros(shape, dtype=complex)
    top = _Integrand(np.prod([complex(c.const) for c in contours]), [c.shift for c in contours],
                     [list(c.roots) for c in contours], list(cross))

    def rec(f, idx):
        j = len(f.shift) - 1
        if j == 0:
            M[(slice(None),) + idx] += contour_moments(f.coef, f.shift[0], _merge_roots(f.roots[0]),
                                                       ranges[0])
            return
        for k, p in enumerate(ranges[j]):
            for g in _integrate_last(f, p):
                rec(g, (k,) + idx)

    rec(top, ())
    return M


# materialization ----------------------------------------------------------

def _item_coeffs(space, it, w=1.0):
    """Mode coefficients of one item with its variable set to w."""
    q, L = space.q, space.cut.L
    n = np.arange(L + 1)
    n[0] = 1
    den = np.array([qint(2 * k, q) if it.den == "PQ" else qint(k, q) for k in n])
    x = it.c * w if it.side == "cre" else it.c / w
    out = it.s * x ** n / den
    out[0] = 0
    return _real_if_close(out)


def materialize(term, space, meta=None):
    """Matrix blocks of a NormalTerm on the truncated module."""
    q, P, D = space.q, space.P, space.cut.D
    nv = len(term.contours)
    cre0 = np.eye(P)
    ann0 = np.eye(P)
    cre_v = [np.eye(P) for _ in range(nv)]
    ann_v = [np.eye(P) for _ in range(nv)]
    for it in term.items:
        if it.side == "cre":
            m = space.exp_creation(_item_coeffs(space, it))
            if it.var is None:
                cre0 = cre0 @ m
            else:
                cre_v[it.var] = cre_v[it.var] @ m
        else:
            m = space.exp_annihilation(_item_coeffs(space, it))
            if it.var is None:
                ann0 = ann0 @ m
            else:
                ann_v[it.var] = ann_v[it.var] @ m
    dm = sum(z.dm for z in term.zero)
    # zero-mode data per input block
    zinfo = {}
    for m in space.m_values:
        mo = m + dm
        if mo not in space.block:
            continue
        scal, pw, cur = term.coef, [0] * nv, m
        for z in term.zero:
            val, wp = z.value(q, cur)
            scal *= val
            if z.var is not None:
                pw[z.var] += wp
            elif wp:
                raise InvalidParameters("w-power without a contour variable")
            cur += z.dm
        zinfo[m] = (mo, scal, tuple(pw))
    blocks = {}
    if nv == 0:
        main = cre0 @ ann0
        for m, (mo, scal, _) in zinfo.items():
            blocks[(mo, m)] = scal * main
        return FockOperator(space, _clean(blocks), meta)
    G = [[space.graded(cre_v[v], d) for d in range(D + 1)] for v in range(nv)]
    H = [[space.graded(ann_v[v], -e) for e in range(D + 1)] for v in range(nv)]
    pmin = [min(z[2][v] for z in zinfo.values()) - D for v in range(nv)] if zinfo else [0] * nv
    pmax = [max(z[2][v] for z in zinfo.values()) + D for v in range(nv)] if zinfo else [0] * nv
    ranges = [np.arange(pmin[v], pmax[v] + 1) for v in range(nv)]
    if nv == 1:
        c = term.contours[0]
        mom = contour_moments(c.const, c.shift, _merge_roots(c.roots), ranges[0])
    else:
        mom = contour_moments_nd(term.contours, term.cross, ranges)
    # degree splits: creation degrees d_v (w_v^d_v), annihilation degrees e_v (w_v^-e_v)
    tuples = [t for t in product(range(D + 1), repeat=nv) if sum(t) <= D]
    left = []
    for t in tuples:
        m = cre0
        for v in reversed(range(nv)):
            m = G[v][t[v]] @ m
        left.append(m)
    left = np.stack(left)
    right = []
    for t in tuples:
        m = ann0
        for v in range(nv):
            m = m @ H[v][t[v]]
        right.append(m)
    dt = np.array(tuples)
    for m, (mo, scal, pw) in zinfo.items():
        blk = 0
        for et, r in zip(tuples, right):
            idx = tuple(dt[:, v] - et[v] + pw[v] - pmin[v] for v in range(nv))
            blk = blk + np.tensordot(mom[idx], left, 1) @ r
        blocks[(mo, m)] = scal * blk
    return FockOperator(space, _clean(blocks), meta)


def _clean(blocks):
    return {k: _real_if_close(v) for k, v in blocks.items()}


# vertex operators --------------------------------------------------------

def _check_annulus(zeta, annulus):
    if annulus is None:
        return
    lo, hi = annulus
    if not lo - 1e-12 <= abs(zeta) <= hi + 1e-12:
        raise OutsideAnnulus(f"|zeta| = {abs(zeta):.4g} outside the validated annulus {annulus}")


def build_vertex(kind, zeta, space, annulus=None):
    """Matrix of a vertex operator component (or X^+-(w) at numeric w) on
    the truncated module.  annulus: optional (lo, hi) bounds on |zeta|."""
    if kind not in KINDS:
        raise InvalidParameters(f"unknown vertex operator {kind!r}")
    _check_annulus(zeta, annulus)
    zeta = _pure_number(zeta)
    return materialize(vertex_term(kind, zeta, space.q), space,
                       {"kind": kind, "zeta": zeta, "cutoffs": space.cut})


def normal_product(kinds, zetas, space):
    """Exact normal-ordered product of vertex operators, leftmost first."""
    q = space.q
    terms = [vertex_term(k, _pure_number(z), q) for k, z in zip(kinds, zetas)]
    prod = terms[0]
    for t in terms[1:]:
        prod = multiply_terms(prod, t, q)
    return materialize(prod, space, {"kind": "*".join(kinds), "zeta": tuple(zetas), "cutoffs": space.cut})


def contour_coefficient(sign, power, space):
    """Coefficient of w^power in X^{sign}(w), i.e. oint dw/(2 pi i) w^(-power-1) X(w)."""
    term = x_term(sign, space.q, weight=Contour(1.0, -power - 1, []))
    return materialize(term, space, {"kind": f"X{'+' if sign > 0 else '-'}[w^{power}]", "cutoffs": space.cut})


def drinfeld_mode(sign, n, space):
    """x^{sign}_n in the expansion X^{sign}(w) = sum_n x_n w^(-n-1)."""
    return contour_coefficient(sign, -n - 1, space)


# exchange relations --------------------------------------------------------

SIGNS = (1, -1)
ZF_RELATIONS = ("comI", "psicom", "phipsi", "invert")


def _name(base, e):
    return base + ("+" if e > 0 else "-")


def _pair(kinds, zetas, space, route):
    if route == "normal":
        return normal_product(kinds, zetas, space)
    return build_vertex(kinds[0], zetas[0], space) @ build_vertex(kinds[1], zetas[1], space)


def check_zf_relations(relation, zeta1, zeta2, space, mask=None, route="normal"):
    """Largest relative residual over all components of an exchange or
    inversion relation, on the faithful states of `space`.

    comI:   Phi_e2(z2) Phi_e1(z1) = sum R^{e1'e2'}_{e1e2}(z1/z2) Phi_e1'(z1) Phi_e2'(z2)
    psicom: Psi*_a(z1) Psi*_b(z2) = -sum R^{ab}_{m1m2}(z1/z2) Psi*_m2(z2) Psi*_m1(z1)
    phipsi: Phi_e(z1) Psi*_m(z2) = tau(z1/z2) Psi*_m(z2) Phi_e(z1)
    invert: g sum_e Phi_{-e}(-z1/q) Phi_e(z1) = id   (zeta2 unused)

    route: "normal" multiplies the two operators exactly in normal-ordered
    form; "direct" multiplies the truncated matrices, which converges only
    when the spectral parameters are far enough apart.
    """
    q = space.q
    if relation not in ZF_RELATIONS:
        raise InvalidParameters(f"unknown relation {relation!r}")
    if route not in ("normal", "direct"):
        raise InvalidParameters(f"unknown route {route!r}")
    if relation == "invert":
        lhs = zero_operator(space)
        for e in SIGNS:
            lhs = lhs + _pair((_name("Phi", -e), _name("Phi", e)), (-zeta1 / q, zeta1), space, route)
        return relative_residual(qseries.g_const(q) * lhs, identity(space), mask)
    worst = 0.0
    if relation == "phipsi":
        t = _real(qseries.tau(zeta1 / zeta2, q))
        for e in SIGNS:
            for m in SIGNS:
                ka, kb = _name("Phi", e), _name("Psi*", m)
                lhs = _pair((ka, kb), (zeta1, zeta2), space, route)
                rhs = _pair((kb, ka), (zeta2, zeta1), space, route)
                worst = max(worst, relative_residual(lhs, t * rhs, mask))
        return worst
    base = "Psi*" if relation == "psicom" else "Phi"
    R = qseries.r_matrix(zeta1 / zeta2, q)
    for e1 in SIGNS:
        for e2 in SIGNS:
            rhs = zero_operator(space)
            if relation == "comI":
                lhs = _pair((_name(base, e2), _name(base, e1)), (zeta2, zeta1), space, route)
                for a in SIGNS:
                    for b in SIGNS:
                        c = qseries.r_entry(R, (a, b), (e1, e2))
                        if c:
                            rhs = rhs + _real(c) * _pair((_name(base, a), _name(base, b)),
                                                         (zeta1, zeta2), space, route)
            else:
                lhs = _pair((_name(base, e1), _name(base, e2)), (zeta1, zeta2), space, route)
                for m1 in SIGNS:
                    for m2 in SIGNS:
                        c = qseries.r_entry(R, (e1, e2), (m1, m2))
                        if c:
                            rhs = rhs - _real(c) * _pair((_name(base, m2), _name(base, m1)),
                                                         (zeta2, zeta1), space, route)
            worst = max(worst, relative_residual(lhs, rhs, mask))
    return worst


def _real(c):
    c = complex(c)
    return c.real if abs(c.imag) <= 1e-15 * max(1.0, abs(c.real)) else c


# Chevalley action on the level-one module -----------------------------------

CHEVALLEY_CONVENTIONS = ("right", "left")


@dataclass
class ChevalleyRep:
    """e_i, f_i and q^{+-h_i} on the truncated module.

    With X^{+-}(w) = sum_n x^{+-}_n w^{-n-1}: e_1 = x^+_0, f_1 = x^-_0 and
    q^{h_1} = q^d.  The "right" convention puts the Cartan dressing of
    e_0 = x^-_1 q^{-h_1}, f_0 = q^{h_1} x^+_{-1} on the outside; "left" puts
    it on the inside."""
    space: FockSpace
    convention: str
    e0: FockOperator
    e1: FockOperator
    f0: FockOperator
    f1: FockOperator
    k0: FockOperator
    k0inv: FockOperator
    k1: FockOperator
    k1inv: FockOperator
    report: dict = field(default_factory=dict)


def _chevalley_candidate(space, convention):
    q = space.q
    k1 = scalar_operator(space, lambda m: q ** m)
    k1inv = scalar_operator(space, lambda m: q ** -m)
    k0 = scalar_operator(space, lambda m: q ** (1 - m))
    k0inv = scalar_operator(space, lambda m: q ** (m - 1))
    xm, xp = drinfeld_mode(-1, 1, space), drinfeld_mode(1, -1, space)
    if convention == "right":
        e0, f0 = xm @ k1inv, k1 @ xp
    elif convention == "left":
        e0, f0 = k1inv @ xm, xp @ k1
    else:
        raise InvalidParameters(f"unknown convention {convention!r}")
    return ChevalleyRep(space, convention, e0, drinfeld_mode(1, 0, space), f0, drinfeld_mode(-1, 0, space),
                        k0, k0inv, k1, k1inv)


def validate_chevalley(rep, zeta=0.8, mask=None):
    """Residuals of the algebra relations and of the intertwining relations
    of the type I vertex operators, keyed by relation name."""
    s, q = rep.space, rep.space.q
    res = lambda a, b: relative_residual(a, b, mask)
    comm = lambda a, b: a @ b - b @ a
    e, f = (rep.e0, rep.e1), (rep.f0, rep.f1)
    k, kinv = (rep.k0, rep.k1), (rep.k0inv, rep.k1inv)
    out = {}
    for i in (0, 1):
        out[f"[e{i},f{i}]"] = res(comm(e[i], f[i]), (k[i] - kinv[i]) * (1 / (q - 1 / q)))
        out[f"[e{i},f{1 - i}]"] = res(e[i] @ f[1 - i], f[1 - i] @ e[i])
        for j in (0, 1):
            a = 2 if i == j else -2
            out[f"q^h{i} e{j}"] = res(k[i] @ e[j] @ kinv[i], q ** a * e[j])
            out[f"q^h{i} f{j}"] = res(k[i] @ f[j] @ kinv[i], q ** -a * f[j])
    out["q^(h0+h1)"] = res(rep.k0 @ rep.k1, q * identity(s))
    q3 = qint(3, q)
    for name, (a, b) in {"serre e0": (e[0], e[1]), "serre e1": (e[1], e[0]),
                         "serre f0": (f[0], f[1]), "serre f1": (f[1], f[0])}.items():
        out[name] = res(a @ a @ a @ b + q3 * (a @ b @ a @ a), q3 * (a @ a @ b @ a) + b @ a @ a @ a)
    pp, pm = build_vertex("Phi+", zeta, s), build_vertex("Phi-", zeta, s)
    e0, e1, f0, f1 = rep.e0, rep.e1, rep.f0, rep.f1
    k0, k1 = rep.k0, rep.k1
    out["cochi e0 Phi+"] = res(e0 @ pp, pp @ e0)
    out["cochi e1 Phi+"] = res(e1 @ pp + zeta * (k1 @ pm), pp @ e1)
    out["cochi e0 Phi-"] = res(e0 @ pm + zeta * (k0 @ pp), pm @ e0)
    out["cochi e1 Phi-"] = res(e1 @ pm, pm @ e1)
    out["cochi f0 Phi+"] = res(f0 @ k0 @ pp + (q / zeta) * (k0 @ pm), pp @ f0 @ k0)
    out["cochi f1 Phi+"] = res(f1 @ k1 @ pp, pp @ f1 @ k1)
    out["cochi f0 Phi-"] = res(f0 @ k0 @ pm, pm @ f0 @ k0)
    out["cochi f1 Phi-"] = res(f1 @ k1 @ pm + (q / zeta) * (k1 @ pp), pm @ f1 @ k1)
    out["cochi q^h0"] = max(res(k0 @ pp, q * (pp @ k0)), res(k0 @ pm, (1 / q) * (pm @ k0)))
    out["cochi q^h1"] = max(res(k1 @ pp, (1 / q) * (pp @ k1)), res(k1 @ pm, q * (pm @ k1)))
    return out


def chevalley_on_fock(space, zeta=0.8, tol=1e-8, conventions=CHEVALLEY_CONVENTIONS, mask=None):
    """First convention whose validation suite passes at `tol`; the report
    records the residuals of every convention tried."""
    tried = {}
    for conv in conventions:
        rep = _chevalley_candidate(space, conv)
        resid = validate_chevalley(rep, zeta, mask)
        tried[conv] = resid
        if max(resid.values()) <= tol:
            rep.report = {"convention": conv, "zeta": zeta, "tol": tol, "tried": tried}
            return rep
    worst = {c: max(r, key=r.get) for c, r in tried.items()}
    raise ConventionError(f"no Chevalley identification passed at tol {tol}: worst relations {worst}")


# states ------------------------------------------------------------------------

@dataclass
class FockVector:
    space: FockSpace
    coeffs: np.ndarray
    kind: str = ""
    meta: dict = field(default_factory=dict)

    def norm(self, mask=None):
        """Norm in the normalized basis, restricted to `mask` if given."""
        w = self.coeffs * self.space.norms
        return float(np.linalg.norm(w if mask is None else w[mask]))

    def rows(self, tol=0.0):
        """(m, sector, charge, occupation, value) for each coefficient above tol."""
        s = self.space
        out = []
        for idx in np.flatnonzero(np.abs(self.coeffs) > tol):
            m, k = s.basis_label(idx)
            occ = " ".join(f"{n + 1}^{x}" for n, x in enumerate(k) if x)
            out.append((m, s.sector(m), s.charge_of(m), occ, self.coeffs[idx]))
        return out


def vector_distance(s, a, b, mask=None):
    """|a - b| / max(|a|, |b|) in the normalized basis over `mask` (default:
    faithful states); a, b are FockVectors or coefficient arrays."""
    ca = a.coeffs if isinstance(a, FockVector) else np.asarray(a)
    cb = b.coeffs if isinstance(b, FockVector) else np.asarray(b)
    if mask is None:
        mask = s.faithful_mask()
    wa, wb = (ca * s.norms)[mask], (cb * s.norms)[mask]
    scale = max(np.linalg.norm(wa), np.linalg.norm(wb))
    return float(np.linalg.norm(wa - wb) / scale) if scale else 0.0


def write_vectors_csv(vectors, path, tol=0.0):
    """CSV of state coefficients; header only when there is nothing to write."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "m", "sector", "charge", "occupation", "re", "im"])
        for vec in vectors:
            for m, i, n, occ, val in vec.rows(tol):
                val = complex(val)
                w.writerow([vec.kind, m, i, n, occ, f"{val.real:.17g}", f"{val.imag:.17g}"])


def _floats(p):
    """(q, ep, em, kp, km) as floats; a bare number is taken as q."""
    if not hasattr(p, "q"):
        return float(p), 0.0, 0.0, 0.0, 0.0
    return tuple(float(getattr(p, n)) for n in ("q", "ep", "em", "kp", "km"))


def _creation_state(space, m, quad, lin):
    """exp(sum_n quad[n] b_{-n}^2 + lin[n] b_{-n}) |m>, exact up to degree D."""
    gen = np.zeros((space.P, space.P))
    for n in range(1, space.cut.L + 1):
        c = space.create[n]
        gen = gen + quad[n] * (c @ c) + lin[n] * c
    v = np.zeros(space.dim)
    b = space.block[m]
    v[b * space.P:(b + 1) * space.P] = space._exp_nilpotent(gen, float)[:, 0]
    return v


def _f_coeffs(space, x):
    """Coefficients of f(v) = -sum_n q^{3n} v^{2n} b_{-n} / [2n] at v^2 = x."""
    q = space.q
    return np.array([0.0] + [-q ** (3 * n) * x ** n / qint(2 * n, q) for n in range(1, space.cut.L + 1)])


def nondiag_parameters(p):
    """k'' and k' fixed by requiring the non-diagonal vacua to be eigenstates."""
    q, ep, em, kp, km = _floats(p)
    qq = q - 1 / q
    return {"k''+": kp / (qq * em) if kp else 0.0, "k'+": -kp / (qq * ep) if kp else 0.0,
            "k''-": -km / (qq * em) if km else 0.0, "k'-": km / (qq * ep) if km else 0.0}


VACUA = ("B+", "B-", "diag0", "diag1", "nondiag+0", "nondiag+1", "nondiag-0", "nondiag-1")


def _vacuum_kind(kind):
    if isinstance(kind, tuple):
        _, sign, i = kind
        sign = "+" if sign in ("+", 1) else "-"
        kind = f"nondiag{sign}{int(i)}"
    if kind not in VACUA:
        raise InvalidParameters(f"unknown vacuum {kind!r}")
    return kind


def build_vacua(kind, p, space, chev=None, tol=1e-14, max_terms=60):
    """Vacuum and current eigenstates on the truncated module.

    kind: B+, B-, diag0, diag1 or nondiag(sign, i), given as the tuple
    ("nondiag", sign, i) or the string "nondiag+0" etc.  The non-diagonal
    series stops once a term falls below tol times the partial sum; it also
    ends when the raising operator leaves the charge window."""
    kind = _vacuum_kind(kind)
    q, ep, em, kp, km = _floats(p)
    if abs(q - space.q) > 1e-15:
        raise InvalidParameters("parameter q differs from the Fock space q")
    L = space.cut.L
    n = np.arange(1, L + 1)
    quad = np.zeros(L + 1)
    lin = np.zeros(L + 1)
    quad[1:] = -0.5 * n * q ** (5 * n) / (np.array([qint(2 * k, q) * qint(k, q) for k in n]))
    lin[1:] = -q ** (2 * n) * (1 - q ** n) * (n % 2 == 0) / np.array([qint(2 * k, q) for k in n])
    if kind == "B+":
        return FockVector(space, _creation_state(space, 0, quad, lin), kind)
    if kind == "B-":
        return FockVector(space, _creation_state(space, 1, quad, lin), kind)
    if em == 0:
        raise InvalidParameters("the diagonal vacua need em != 0")
    r = -ep / em
    sector = int(kind[-1])
    if sector == 0:
        lin0 = lin + _f_coeffs(space, r)
        base = FockVector(space, _creation_state(space, 0, quad, lin0), "diag0", {"r": r})
    else:
        if r == 0:
            raise InvalidParameters("diag1 needs r = -ep/em != 0")
        lin1 = lin - _f_coeffs(space, 1 / (q * q * r))
        base = FockVector(space, _creation_state(space, 1, quad, lin1), "diag1", {"r": r})
    if kind.startswith("diag"):
        return base
    sign = kind[7]
    if (sign == "+" and km) or (sign == "-" and kp):
        raise InvalidParameters(f"{kind} needs {'km' if sign == '+' else 'kp'} = 0")
    chev = chev or chevalley_on_fock(space)
    kk = nondiag_parameters(p)
    if sign == "+":
        op, expo = (kk["k''+"] * chev.f0, -1) if sector == 0 else ((kk["k'+"] / q) * (chev.e1 @ chev.k1inv), 1)
    else:
        op, expo = ((kk["k''-"] / q) * (chev.e0 @ chev.k0inv), 1) if sector == 0 else (kk["k'-"] * chev.f1, -1)
    total = base.coeffs.copy()
    term = base.coeffs.copy()
    qfact, last, n_terms = 1.0, 0.0, 0
    for k in range(1, max_terms + 1):
        term = op @ term
        qfact *= qint(k, q)
        add = term * q ** (expo * k * (k - 1) / 2) / qfact
        last = FockVector(space, add).norm()
        if last == 0.0:
            break
        total = total + add
        n_terms = k
        if last < tol * FockVector(space, total).norm():
            break
    else:
        raise TruncationError(f"{kind} series not converged after {max_terms} terms; last term norm {last:.3g}")
    return FockVector(space, total, kind, {"r": r, "terms": n_terms, "last_term_norm": last, **kk})


# currents and transfer matrix ------------------------------------------------------

CURRENTS = ("W+", "W-", "Z+", "Z-")


def _current_terms(name, zeta, q, realization):
    """(coef, kinds, zetas) whose sum of normal products realizes a current.

    type1: the barred currents as bilinears in Phi, type2: the currents as
    bilinears in Psi*."""
    if name not in CURRENTS:
        raise InvalidParameters(f"unknown current {name!r}")
    e = 1 if name[1] == "+" else -1
    if realization == "type1":
        base, z1, z2 = "Phi", zeta, -1 / (zeta * q)
        if name[0] == "W":
            den = (zeta * q) ** 2 - (zeta * q) ** -2
            return [(zeta * q / den, (_name(base, -e), _name(base, e)), (z1, z2)),
                    (1 / (zeta * q * den), (_name(base, e), _name(base, -e)), (z1, z2))]
        return [(q + 1 / q, (_name(base, -e), _name(base, -e)), (z1, z2))]
    if realization == "type2":
        base, z1, z2 = "Psi*", 1 / zeta, -zeta * q
        if name[0] == "W":
            den = (zeta * q) ** 2 - (zeta * q) ** -2
            return [(zeta * q / den, (_name(base, e), _name(base, -e)), (z1, z2)),
                    (1 / (zeta * q * den), (_name(base, -e), _name(base, e)), (z1, z2))]
        return [(q + 1 / q, (_name(base, e), _name(base, e)), (z1, z2))]
    raise InvalidParameters(f"unknown realization {realization!r}")


def _sum_products(terms, space):
    out = zero_operator(space)
    for c, kinds, zetas in terms:
        out = out + _real(c) * normal_product(kinds, zetas, space)
    return out


def current(name, zeta, space, realization="type1"):
    """W+-, Z+- at numeric zeta as an operator on the truncated module."""
    return _sum_products(_current_terms(name, zeta, space.q, realization), space)


def _transfer_terms(p, zeta):
    q, ep, em, kp, km = _floats(p)
    if kp and km:
        raise InvalidParameters("the normalization rho is only known for kp km = 0")
    zp = -1 / (zeta * q)
    pref = qseries.g_const(q) * (zeta ** 2 - zeta ** -2) / qseries.rho_norm(zeta, ep, em, q)
    out = []
    for coef, name in ((ep, "W-"), (em, "W+"), (km / (q * q - q ** -2), "Z-"), (kp / (q * q - q ** -2), "Z+")):
        if coef:
            out += [(pref * coef * c, k, z) for c, k, z in _current_terms(name, zp, q, "type1")]
    return out


def transfer_matrix(p, zeta, space):
    """t(zeta) = g (zeta^2 - zeta^-2) I(zeta) / rho(zeta) with
    I(zeta) = ep W-(z') + em W+(z') + (km Z-(z') + kp Z+(z')) / (q^2 - q^-2), z' = -1/(q zeta)."""
    return _sum_products(_transfer_terms(p, zeta), space)


# spectral checks ------------------------------------------------------------------

REGIMES = {"diagonal": "diag", "upper": "nondiag+", "lower": "nondiag-"}


def _expected_eigenvalue(i, zeta, r, q):
    return 1.0 if i == 0 else _real(qseries.Lambda(zeta, r, q))


def _worst_component(space, diff, mask):
    w = np.where(mask, np.abs(diff * space.norms), 0)
    m, k = space.basis_label(int(np.argmax(w)))
    return {"m": m, "occupation": list(k), "abs": float(w.max())}


def eigencheck_transfer(i, p, space, zetas, regime="diagonal", chev=None, tol=1e-6, mask=None):
    """Apply t(zeta) to the sector-i vacuum of the regime and compare with
    the expected eigenvalue (1 for i = 0, Lambda(zeta; r) for i = 1).

    Also checks t(zeta) = t(-1/(q zeta)), t(zeta) t(1/zeta) = id and
    t(1) = id on the vacuum; t(1) is taken as the mean of t(1 +- h)."""
    if regime not in REGIMES:
        raise InvalidParameters(f"unknown regime {regime!r}")
    mask = space.faithful_mask() if mask is None else mask
    vac = build_vacua(f"{REGIMES[regime]}{i}", p, space, chev)
    v = vac.coeffs
    r = vac.meta["r"]
    q = space.q
    rows = []
    for z in zetas:
        tv = transfer_matrix(p, z, space) @ v
        lam = _expected_eigenvalue(i, z, r, q)
        wv, wt = (v * space.norms)[mask], (tv * space.norms)[mask]
        measured = complex(np.vdot(wv, wt) / np.vdot(wv, wv))
        measured = measured.real if abs(measured.imag) < 1e-12 * abs(measured) else measured
        resid = vector_distance(space, lam * v, tv, mask)
        prop = vector_distance(space, measured * v, tv, mask)
        cross = vector_distance(space, tv, transfer_matrix(p, -1 / (q * z), space) @ v, mask)
        unit = vector_distance(space, v, transfer_matrix(p, z, space) @ (transfer_matrix(p, 1 / z, space) @ v), mask)
        rows.append({"zeta": z, "expected": lam, "measured": measured, "residual": resid,
                     "proportionality": prop, "worst": _worst_component(space, tv - lam * v, mask),
                     "t(z)=t(-1/qz)": cross, "t(z)t(1/z)=1": unit})
    h = 1e-4
    t1 = 0.5 * (transfer_matrix(p, 1 + h, space) @ v + transfer_matrix(p, 1 - h, space) @ v)
    t_one = vector_distance(space, v, t1, mask)
    worst = max([max(x["residual"], x["t(z)=t(-1/qz)"], x["t(z)t(1/z)=1"]) for x in rows] + [t_one])
    return {"sector": i, "regime": regime, "vacuum": vac.kind, "r": r, "rows": rows,
            "t(1)=1": t_one, "max_residual": worst, "pass": worst <= tol, "tol": tol,
            "vacuum_meta": {k: x for k, x in vac.meta.items() if k != "r"}}


def lambda_check(p_or_q, space, zetas, mask=None):
    """W+(z') B+ = lambda(z') B+ and W-(z') B- = lambda(z') B- at
    z' = -1/(q zeta), against the closed-form lambda."""
    mask = space.faithful_mask() if mask is None else mask
    q = space.q
    rows = []
    for name, state in (("W+", "B+"), ("W-", "B-")):
        v = build_vacua(state, p_or_q, space).coeffs
        for z in zetas:
            zp = -1 / (z * q)
            lam = _real(qseries.lambda_pm(zp, q))
            rows.append({"current": name, "state": state, "zeta": z, "lambda": lam,
                         "residual": vector_distance(space, lam * v, current(name, zp, space) @ v, mask)})
    return {"rows": rows, "max_residual": max(x["residual"] for x in rows)}


REFLECTIONS = ("eq1", "eq2", "eqdiag1", "eqdiag2", "eqdiagp1", "eqdiagp2",
               "eqdiagpri1", "eqdiagpri2", "eqdiagpri3", "eqdiagpri4")


def check_reflection(kind, p, space, zetas, chev=None, mask=None):
    """Residuals of one boundary reflection relation of the vacua at each zeta:
    the relations exchange Phi(zeta) and Phi(1/zeta) acting on a vacuum."""
    if kind not in REFLECTIONS:
        raise InvalidParameters(f"unknown reflection relation {kind!r}")
    mask = space.faithful_mask() if mask is None else mask
    q = space.q
    g = qseries.g_const(q)
    V = lambda k, z: build_vertex(k, z, space)
    if kind in ("eq1", "eq2"):
        vac = build_vacua("B+" if kind == "eq1" else "B-", p, space).coeffs
    elif kind.startswith("eqdiagpri"):
        vac = build_vacua("nondiag+0" if kind in ("eqdiagpri1", "eqdiagpri2") else "nondiag+1", p, space, chev)
        vac = vac.coeffs
    else:
        vac = build_vacua("diag0" if kind in ("eqdiag1", "eqdiag2") else "diag1", p, space).coeffs
    _, ep, em, kp, _ = _floats(p)
    r = -ep / em if em else 0.0
    kk = nondiag_parameters(p)
    rows = []
    for z in zetas:
        lhs_rhs = []
        if kind in ("eq1", "eq2"):
            lam = _real(qseries.lambda_pm(-1 / (z * q), q))
            for up in (1, -1):          # upper sign: Phi_-, lower sign: Phi_+
                k = "Phi-" if up == 1 else "Phi+"
                pw = up if kind == "eq1" else -up
                lhs_rhs.append((z ** pw / (z * z - z ** -2) * (V(k, z) @ vac), g * lam * (V(k, 1 / z) @ vac)))
        else:
            ratio = _real(qseries.varphi(z ** -2, r, q) / qseries.varphi(z ** 2, r, q))
            if kind in ("eqdiagp1", "eqdiagp2", "eqdiagpri3", "eqdiagpri4"):
                ratio *= _real(qseries.Lambda(z, r, q))
            frac = (z * z - r) / (1 - r * z * z)
            if kind in ("eqdiag1", "eqdiagp1", "eqdiagpri1", "eqdiagpri3"):
                lhs_rhs.append((V("Phi-", z) @ vac, ratio * (V("Phi-", 1 / z) @ vac)))
            else:
                rhs = frac * (V("Phi+", 1 / z) @ vac)
                extra = {"eqdiagpri2": kk["k''+"], "eqdiagpri4": kk["k'+"] * r}.get(kind, 0.0)
                if extra:
                    rhs = rhs - extra * z * (z * z - z ** -2) / (1 - r * z * z) * (V("Phi-", 1 / z) @ vac)
                lhs_rhs.append((V("Phi+", z) @ vac, ratio * rhs))
        rows.append({"zeta": z, "residual": max(vector_distance(space, a, b, mask) for a, b in lhs_rhs)})
    return {"relation": kind, "rows": rows, "max_residual": max(x["residual"] for x in rows)}


@dataclass
class ExcitedState:
    vector: FockVector
    insertions: list

    def factor(self, zeta):
        """prod_j tau(zeta/xi_j) tau(zeta xi_j)."""
        q = self.vector.space.q
        out = 1.0
        for _, xi in self.insertions:
            out *= qseries.tau(zeta / xi, q) * qseries.tau(zeta * xi, q)
        return _real(out)


def _psi_product(insertions, space):
    kinds = [_name("Psi*", mu) for mu, _ in insertions]
    return normal_product(kinds, [xi for _, xi in insertions], space)


def build_excited(base, insertions, annulus=EXCITATION_ANNULUS):
    """Psi*_{mu_1}(xi_1) ... Psi*_{mu_m}(xi_m) applied to a vacuum; the
    insertion product is normal-ordered exactly before acting."""
    insertions = [(int(mu), xi) for mu, xi in insertions]
    for _, xi in insertions:
        _check_annulus(xi, annulus)
    if not insertions:
        return ExcitedState(base, [])
    vec = _psi_product(insertions, base.space) @ base.coeffs
    return ExcitedState(FockVector(base.space, vec, f"{base.kind}+{len(insertions)}",
                                   {"insertions": insertions}), insertions)


def check_excited(p, space, i, insertions, zetas, regime="diagonal", chev=None, mask=None,
                  annulus=EXCITATION_ANNULUS):
    """t(zeta) on an excited state against Lambda^(i) prod tau(zeta/xi) tau(zeta xi)."""
    mask = space.faithful_mask() if mask is None else mask
    base = build_vacua(f"{REGIMES[regime]}{i}", p, space, chev)
    st = build_excited(base, insertions, annulus)
    v = st.vector.coeffs
    rows = []
    kinds = tuple(_name("Psi*", mu) for mu, _ in st.insertions)
    xis = tuple(xi for _, xi in st.insertions)
    for z in zetas:
        lam = _expected_eigenvalue(i, z, base.meta["r"], space.q) * st.factor(z)
        # t(zeta) Psi*...Psi* is normal-ordered as one product before acting
        tv = _sum_products([(c, k + kinds, zz + xis) for c, k, zz in _transfer_terms(p, z)], space) @ base.coeffs
        rows.append({"zeta": z, "expected": lam, "residual": vector_distance(space, lam * v, tv, mask)})
    return {"insertions": insertions, "rows": rows, "max_residual": max(x["residual"] for x in rows)}


def check_excited_swap(base, ins1, ins2, mask=None):
    """Psi*_a(x1) Psi*_b(x2)|v> = -sum R^{ab}_{m1 m2}(x1/x2) Psi*_{m2}(x2) Psi*_{m1}(x1)|v>."""
    space = base.space
    (a, x1), (b, x2) = ins1, ins2
    lhs = build_excited(base, [ins1, ins2]).vector.coeffs
    R = qseries.r_matrix(x1 / x2, space.q)
    rhs = np.zeros_like(lhs)
    for m1 in SIGNS:
        for m2 in SIGNS:
            c = qseries.r_entry(R, (a, b), (m1, m2))
            if c:
                rhs = rhs - _real(c) * build_excited(base, [(m2, x2), (m1, x1)]).vector.coeffs
    return vector_distance(space, lhs, rhs, mask)


# current / vertex-operator relations ------------------------------------------------

def _u(x2, q):
    """U as a function of x^2: U(x) = (q x^2 + q^-1 x^-2) / (q + q^-1)."""
    return (q * x2 + 1 / (q * x2)) / (q + 1 / q)


def _ac_table(zeta, v, q):
    """Right-hand sides of the displayed current / chi_-(v) relations:
    {current: (prefactor, [(coef, chi component, current)])}."""
    s, qq, c = q + 1 / q, q - 1 / q, q * q - q ** -2
    kk = _real(qseries.kappa(v * zeta, q) * qseries.kappa(-v / (zeta * q), q))
    U = _u(zeta * zeta, q)
    den = U - _u(q * q / (v * v), q)
    u_sq = _u(q / (v * v), q)          # U(sqrt(q)/v) depends on q / v^2 only
    return {
        "W-": (kk / den, [(U / q - u_sq, -1, "W-"), (q * qq / s, -1, "W+"), (-v / q * qq / s ** 2, 1, "Z-")]),
        "W+": (kk / den, [(q * U - u_sq, -1, "W+"), (-qq / (q * s), -1, "W-"), (-q / v * qq / s ** 2, 1, "Z-")]),
        "Z-": (kk, [(1.0, -1, "Z-")]),
        "Z+": (kk / den, [(U - _u(v * v / (q * q), q), -1, "Z+"), (-c * (v / q * U - q / v), 1, "W+"),
                          (-c * (q / v * U - v / q), 1, "W-")]),
    }


def _flip(name):
    return name[0] + ("-" if name[1] == "+" else "+")


def check_current_vertex_relations(zeta, v, space, families=("displayed", "swapped")):
    """Residuals of the relations moving a type II vertex operator chi(v) =
    Psi*(v) through the currents realized as Psi* bilinears.

    "displayed": the four relations for chi_-(v); "swapped": the same with
    every +- label exchanged.  All products are normal-ordered exactly."""
    q = space.q
    out = {}
    for fam in families:
        flip = fam == "swapped"
        for name, (pref, terms) in _ac_table(zeta, v, q).items():
            X = _flip(name) if flip else name
            chi = 1 if flip else -1
            lhs_terms = [(c, k + (_name("Psi*", chi),), z + (v,))
                         for c, k, z in _current_terms(X, zeta, q, "type2")]
            rhs_terms = []
            for coef, comp, Y in terms:
                Y = _flip(Y) if flip else Y
                comp = -comp if flip else comp
                rhs_terms += [(pref * coef * c, (_name("Psi*", comp),) + k, (v,) + z)
                              for c, k, z in _current_terms(Y, zeta, q, "type2")]
            out[f"{fam}:{X}"] = relative_residual(_sum_products(lhs_terms, space), _sum_products(rhs_terms, space))
    return out


def check_current_commutativity(name, zeta, xi, space, realization="type1"):
    """[X(zeta), X(xi)] for one current, both products normal-ordered exactly."""
    q = space.q
    a = _current_terms(name, zeta, q, realization)
    b = _current_terms(name, xi, q, realization)
    ab = [(c1 * c2, k1 + k2, z1 + z2) for c1, k1, z1 in a for c2, k2, z2 in b]
    ba = [(c2 * c1, k2 + k1, z2 + z1) for c1, k1, z1 in a for c2, k2, z2 in b]
    return relative_residual(_sum_products(ab, space), _sum_products(ba, space))


def x_minus_check(space, state=None, powers=(-1, 0)):
    """The literal w^-1 coefficient of X^-(w) applied to B+, falling back to
    the neighbouring coefficient if it does not annihilate the state.
    Returns (power used, relative norm of the image, all norms tried)."""
    vec = build_vacua("B+", space.q, space) if state is None else state
    tried = {}
    for pw in powers:
        img = contour_coefficient(-1, pw, space) @ vec.coeffs
        tried[pw] = FockVector(space, img).norm() / vec.norm()
        if tried[pw] <= 1e-8:
            return pw, tried[pw], tried
    return None, min(tried.values()), tried
