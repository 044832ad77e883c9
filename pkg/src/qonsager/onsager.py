"""Finite-chain generator families of A_q and A_q^diag and their relations.

Modes are built by a double recursion in the number of sites N and the mode
index k.  The N = 0 seeds are the U^{-1} expansion coefficients of the scalar
boundary K-matrix, normalized so that G_1 = [W_1, W_0]_q holds at every N.
"""

from dataclasses import dataclass, field, replace
from fractions import Fraction
import random

from .errors import InsufficientDepth, InvalidParameters
from .numerics import (EXACT, SparseMatrix, backend_of, comm, nullspace_exact,
                       parse_rational, q_sigma_z, qcomm, sigma_minus,
                       sigma_plus, to_backend)

KINDS = ("A_q", "A_q_diag", "A_q_barred", "A_q_diag_barred")
PARAM_NAMES = ("q", "ep", "em", "kp", "km", "ebp", "ebm", "kbp", "kbm")


@dataclass(frozen=True)
class ModelParams:
    """Bulk anisotropy q, right boundary (ep, em, kp, km), left boundary (ebp, ebm, kbp, kbm)."""

    q: object
    ep: object = Fraction(0)
    em: object = Fraction(0)
    kp: object = Fraction(0)
    km: object = Fraction(0)
    ebp: object = Fraction(0)
    ebm: object = Fraction(0)
    kbp: object = Fraction(0)
    kbm: object = Fraction(0)

    def __post_init__(self):
        backend = backend_of(self.q)
        for name in PARAM_NAMES:
            object.__setattr__(self, name, to_backend(getattr(self, name), backend))
        if self.q in (0, 1, -1):
            raise InvalidParameters("q must avoid 0 and +-1")

    @property
    def backend(self):
        return backend_of(self.q)

    @property
    def s(self):
        return self.q + 1 / self.q

    @property
    def rho(self):
        return self.s ** 2 * self.kp * self.km

    @property
    def rho_bar(self):
        return self.s ** 2 * self.kbp * self.kbm

    @property
    def rho_diag(self):
        q = self.q
        return (q ** 3 - q ** -3) * (q ** 2 - q ** -2) ** 3 / (q - 1 / q)

    @property
    def r(self):
        return -self.ep / self.em

    @property
    def diagonal(self):
        return self.kp == 0 and self.km == 0

    @property
    def left_diagonal(self):
        return self.kbp == 0 and self.kbm == 0

    def with_(self, **kw):
        return replace(self, **kw)

    def mirrored(self):
        """Swap the roles of the two boundaries (used for barred families)."""
        return replace(self, ep=self.ebp, em=self.ebm, kp=self.kbp, km=self.kbm,
                       ebp=self.ep, ebm=self.em, kbp=self.kp, kbm=self.km)

    def to_dict(self):
        return {n: _fmt(getattr(self, n)) for n in PARAM_NAMES}

    @classmethod
    def from_dict(cls, d):
        return cls(**{n: parse_rational(d[n]) for n in PARAM_NAMES if n in d})

    @classmethod
    def random(cls, rng, regime="generic", bound=97):
        """Random rational parameters for one of the four boundary regimes.

        regime: generic | right_diagonal | left_diagonal | diagonal.
        """
        def draw():
            while True:
                num = rng.randint(-bound, bound)
                den = rng.randint(1, bound)
                x = Fraction(num, den)
                if x != 0:
                    return x

        while True:
            q = draw()
            # rational roots of unity are only +-1
            if q not in (1, -1):
                break
        vals = {n: draw() for n in PARAM_NAMES[1:]}
        if vals["ep"] + vals["em"] == 0 or vals["ebp"] + vals["ebm"] == 0:
            vals["em"] += 1
            vals["ebm"] += 1
        if regime in ("right_diagonal", "diagonal"):
            vals["kp"] = vals["km"] = Fraction(0)
        if regime in ("left_diagonal", "diagonal"):
            vals["kbp"] = vals["kbm"] = Fraction(0)
        return cls(q=q, **vals)


def _fmt(x):
    if isinstance(x, Fraction):
        return str(x)
    return repr(x)


def random_params(seed, regime="generic"):
    return ModelParams.random(random.Random(seed), regime)


@dataclass
class GeneratorFamily:
    """Modes of a finite chain.

    ``neg[k]`` = W_{-k}, ``pos[k]`` = W_{k+1}, ``g[k]`` = G_{k+1},
    ``gt[k]`` = G~_{k+1} for k = 0..K (K, Z letters for diagonal kinds).
    """

    kind: str
    N: int
    K: int
    params: ModelParams
    neg: list
    pos: list
    g: list
    gt: list
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return 2 ** self.N

    @property
    def diagonal(self):
        return self.kind in ("A_q_diag", "A_q_diag_barred")

    @property
    def barred(self):
        return self.kind in ("A_q_barred", "A_q_diag_barred")

    def identity(self):
        return SparseMatrix.identity(self.dim, self.params.backend)

    def g0(self):
        """G_0 = G~_0 convention (zero for the diagonal algebra)."""
        if self.diagonal:
            return SparseMatrix.zero(self.dim, self.params.backend)
        kp, km = self._k()
        p = self.params
        return self.identity() * (kp * km * p.s ** 2 / (p.q - 1 / p.q))

    def _k(self):
        p = self.params
        return (p.kbp, p.kbm) if self.barred else (p.kp, p.km)

    def rho(self):
        kp, km = self._k()
        return self.params.s ** 2 * kp * km

    def need(self, k):
        if k > self.K:
            raise InsufficientDepth("mode index %d requested but family built to K=%d" % (k, self.K))

    def W_neg(self, k):
        self.need(k)
        return self.neg[k]

    def W_pos(self, k):
        """W_k for k >= 1 (zero at k = 0 by convention)."""
        if k == 0:
            return SparseMatrix.zero(self.dim, self.params.backend)
        self.need(k - 1)
        return self.pos[k - 1]

    def G(self, k):
        if k == 0:
            return self.g0()
        self.need(k - 1)
        return self.g[k - 1]

    def Gt(self, k):
        if k == 0:
            return self.g0()
        self.need(k - 1)
        return self.gt[k - 1]


def _seeds(p, K, diagonal, gauge="standard"):
    """N = 0 modes as 1x1 matrices.

    Expanding the scalar K-matrix in U^{-1} gives W_{-k} alternating between
    ep and em, W_{k+1} alternating between em and ep, and no G modes.  The
    standard gauge multiplies all currents by (1 + a1/U) with
    a1 = ep em (q - 1/q)^2 / rho, which produces G_1 = ep em (q - 1/q).
    """
    one = lambda x: SparseMatrix(1, {0: {0: x}}, p.backend)
    base_neg = [p.ep if k % 2 == 0 else p.em for k in range(K + 1)]
    base_pos = [p.em if k % 2 == 0 else p.ep for k in range(K + 1)]
    zero = to_backend(0, p.backend)
    g = [zero] * (K + 1)
    gt = [zero] * (K + 1)
    if not diagonal and gauge == "standard":
        a1 = p.ep * p.em * (p.q - 1 / p.q) ** 2 / p.rho
        neg = [base_neg[0]] + [base_neg[k] + a1 * base_neg[k - 1] for k in range(1, K + 1)]
        pos = [base_pos[0]] + [base_pos[k] + a1 * base_pos[k - 1] for k in range(1, K + 1)]
        g[0] = gt[0] = p.ep * p.em * (p.q - 1 / p.q)
    else:
        neg, pos = base_neg, base_pos
    return [one(x) for x in neg], [one(x) for x in pos], [one(x) for x in g], [one(x) for x in gt]


def _step(prev, n_sites, p, K, diagonal):
    """One site of the spin-1/2 (v = 1) recursion, V_N added as the left factor.

    For spin 1/2 every q^{+-1/2} S_+- q^{+-s_3} combination reduces to a plain
    sigma_+-, S_+-^2 = 0 and v^2 q^{2 s_3} + v^{-2} q^{-2 s_3} = (q + 1/q) I.
    """
    neg0, pos0, g0, gt0 = prev
    q, s, b = p.q, p.s, p.backend
    d = 2 ** (n_sites - 1)
    I = SparseMatrix.identity(d, b)
    I2 = SparseMatrix.identity(2, b)
    Z = SparseMatrix.zero(d, b)
    Z2 = SparseMatrix.zero(2 * d, b)
    w0 = q ** 2 + q ** -2
    shift = 2 * w0 / s ** 2
    qs, qsi = q_sigma_z(q), q_sigma_z(q, -1)
    sp, sm = sigma_plus(b), sigma_minus(b)
    if diagonal:
        c0 = Z
        sig_w = (q - 1 / q) / s ** 2
        ck_p = ck_m = to_backend(1, b)
    else:
        c0 = I * (p.kp * p.km * s ** 2 / (q - 1 / q))
        sig_w = (q - 1 / q) / (p.kp * p.km * s ** 2)
        ck_p, ck_m = p.kp, p.km
    sig_g = q ** 2 - q ** -2

    w_k = lambda k: pos0[k - 1] if k > 0 else Z        # W_k^{(N-1)}
    w_1mk = lambda k: neg0[k - 1] if k > 0 else Z      # W_{-k+1}^{(N-1)}
    g_k = lambda k: g0[k - 1] if k > 0 else c0
    gt_k = lambda k: gt0[k - 1] if k > 0 else c0

    left_neg = (I2 * w0 - qs * s) / s
    left_pos = (I2 * w0 - qsi * s) / s
    neg, pos, g, gt = [], [], [], []
    for k in range(K + 1):
        sig = (sp.kron(g_k(k)) * ck_p + sm.kron(gt_k(k)) * ck_m) * sig_w
        neg.append(left_neg.kron(w_k(k)) - I2.kron(w_1mk(k)) * (2 / s)
                   + (neg[k - 1] if k else Z2) * shift + sig + qs.kron(neg0[k]))
        pos.append(left_pos.kron(w_1mk(k)) - I2.kron(w_k(k)) * (2 / s)
                   + (pos[k - 1] if k else Z2) * shift + sig + qsi.kron(pos0[k]))
        dw = neg0[k] - w_k(k) + pos0[k] - w_1mk(k)
        prev_g = g[k - 1] if k else I2.kron(c0)
        prev_gt = gt[k - 1] if k else I2.kron(c0)
        g.append(I2.kron(g0[k]) - I2.kron(g_k(k)) + sm.kron(dw) * (sig_g * ck_m) + prev_g * shift)
        gt.append(I2.kron(gt0[k]) - I2.kron(gt_k(k)) + sp.kron(dw) * (sig_g * ck_p) + prev_gt * shift)
    return neg, pos, g, gt


def reverse_sites(m, n_sites):
    """Pi_N: reverse the order of the N tensor factors."""
    def rev(i):
        out = 0
        for _ in range(n_sites):
            out = (out << 1) | (i & 1)
            i >>= 1
        return out
    rows = {}
    for i, r in m.rows.items():
        rows[rev(i)] = {rev(j): v for j, v in r.items()}
    return SparseMatrix(m.shape, rows, m.backend)


def build_family(p, N, K=None, kind="A_q", gauge="standard"):
    """Modes of the N-site chain up to index K (default N + 1).

    Barred kinds are obtained from the unbarred ones built with the left
    boundary parameters, followed by the site reversal Pi_N and the exchange
    W_{-k} <-> W_{k+1}, G <-> G~.
    """
    if kind not in KINDS:
        raise ValueError("unknown kind %r" % kind)
    if K is None:
        K = N + 1
    barred = kind.endswith("barred")
    diagonal = kind.startswith("A_q_diag")
    q_params = p.mirrored() if barred else p
    if not diagonal and q_params.kp * q_params.km == 0:
        side = "k-bar" if barred else "k"
        raise InvalidParameters("%s_+ %s_- = 0: the A_q recursion divides by it; use kind %s"
                                % (side, side, "A_q_diag_barred" if barred else "A_q_diag"))
    modes = _seeds(q_params, K, diagonal, gauge)
    for n in range(1, N + 1):
        modes = _step(modes, n, q_params, K, diagonal)
    neg, pos, g, gt = modes
    if barred:
        neg, pos, g, gt = ([reverse_sites(m, N) for m in pos], [reverse_sites(m, N) for m in neg],
                           [reverse_sites(m, N) for m in gt], [reverse_sites(m, N) for m in g])
    return GeneratorFamily(kind, N, K, p, list(neg), list(pos), list(g), list(gt), {"gauge": gauge})


# --- direct builders for the first modes -----------------------------------

def fundamentals(p, N, kind="A_q"):
    """First modes by their one-step tensor recursions.

    A_q: (W_0, W_1); A_q_diag: (K_0, K_1, Z_1, Z~_1); barred kinds use the
    left boundary parameters and grow towards the right.
    """
    b = p.backend
    q = p.q
    one = lambda x: SparseMatrix(1, {0: {0: to_backend(x, b)}}, b)
    sp, sm = sigma_plus(b), sigma_minus(b)
    qs, qsi = q_sigma_z(q), q_sigma_z(q, -1)
    c = q ** 2 - q ** -2
    if kind == "A_q":
        w0, w1 = one(p.ep), one(p.em)
        loc = sp * p.kp + sm * p.km
        for n in range(1, N + 1):
            I = SparseMatrix.identity(2 ** (n - 1), b)
            w0, w1 = loc.kron(I) + qs.kron(w0), loc.kron(I) + qsi.kron(w1)
        return w0, w1
    if kind == "A_q_barred":
        w0, w1 = one(p.ebm), one(p.ebp)
        loc = sp * p.kbp + sm * p.kbm
        for n in range(1, N + 1):
            I = SparseMatrix.identity(2 ** (n - 1), b)
            w0, w1 = I.kron(loc) + w0.kron(qsi), I.kron(loc) + w1.kron(qs)
        return w0, w1
    if kind == "A_q_diag":
        k0, k1, z1, zt1 = one(p.ep), one(p.em), one(0), one(0)
        for n in range(1, N + 1):
            I2 = SparseMatrix.identity(2, b)
            s01 = k0 + k1
            k0, k1, z1, zt1 = (qs.kron(k0), qsi.kron(k1),
                               I2.kron(z1) + sm.kron(s01) * c, I2.kron(zt1) + sp.kron(s01) * c)
        return k0, k1, z1, zt1
    if kind == "A_q_diag_barred":
        k0, k1, z1, zt1 = one(p.ebm), one(p.ebp), one(0), one(0)
        for n in range(1, N + 1):
            I2 = SparseMatrix.identity(2, b)
            s01 = k0 + k1
            k0, k1, z1, zt1 = (k0.kron(qsi), k1.kron(qs),
                               z1.kron(I2) + s01.kron(sp) * c, zt1.kron(I2) + s01.kron(sm) * c)
        return k0, k1, z1, zt1
    raise ValueError("unknown kind %r" % kind)


# --- relation checks -------------------------------------------------------

def dolan_grady(a, b, q, rho):
    """[a,[a,[a,b]_q]_{q^-1}] - rho [a,b]."""
    return comm(a, qcomm(a, qcomm(a, b, q), 1 / q)) - comm(a, b) * rho


def augmented_relations(k0, k1, z1, zt1, q, rho_diag):
    """Residual operators of the augmented q-Onsager relations, keyed by name."""
    out = {
        "K0K1": comm(k0, k1),
        "K0Z1": k0 @ z1 - z1 @ k0 * q ** -2,
        "K0Zt1": k0 @ zt1 - zt1 @ k0 * q ** 2,
        "K1Z1": k1 @ z1 - z1 @ k1 * q ** 2,
        "K1Zt1": k1 @ zt1 - zt1 @ k1 * q ** -2,
    }
    out["Z1cubic"] = (comm(z1, qcomm(z1, qcomm(z1, zt1, q), 1 / q))
                      - z1 @ (k1 @ k1 - k0 @ k0) @ z1 * rho_diag)
    out["Zt1cubic"] = (comm(zt1, qcomm(zt1, qcomm(zt1, z1, q), 1 / q))
                       - zt1 @ (k0 @ k0 - k1 @ k1) @ zt1 * rho_diag)
    return out


def qons_relations(f, K):
    """Residuals of the A_q defining relations for k, l <= K."""
    p = f.params
    q, s = p.q, p.s
    rho = f.rho()
    f.need(K + 1)
    out = {}
    for k in range(K + 1):
        d = (f.Gt(k + 1) - f.G(k + 1)) / s
        out["W0_Wk+1[k=%d]" % k] = comm(f.W_neg(0), f.W_pos(k + 1)) - d
        out["W-k_W1[k=%d]" % k] = comm(f.W_neg(k), f.W_pos(1)) - d
        lo = (f.W_neg(k + 1) - f.W_pos(k + 1)) * rho
        out["W0_Gk+1[k=%d]" % k] = qcomm(f.W_neg(0), f.G(k + 1), q) - lo
        out["Gtk+1_W0[k=%d]" % k] = qcomm(f.Gt(k + 1), f.W_neg(0), q) - lo
        hi = (f.W_pos(k + 2) - f.W_neg(k)) * rho
        out["Gk+1_W1[k=%d]" % k] = qcomm(f.G(k + 1), f.W_pos(1), q) - hi
        out["W1_Gtk+1[k=%d]" % k] = qcomm(f.W_pos(1), f.Gt(k + 1), q) - hi
        for l in range(K + 1):
            tag = "[k=%d,l=%d]" % (k, l)
            out["W-k_W-l" + tag] = comm(f.W_neg(k), f.W_neg(l))
            out["Wk+1_Wl+1" + tag] = comm(f.W_pos(k + 1), f.W_pos(l + 1))
            out["W-k_Wl+1" + tag] = comm(f.W_neg(k), f.W_pos(l + 1)) + comm(f.W_pos(k + 1), f.W_neg(l))
            out["G_G" + tag] = comm(f.G(k + 1), f.G(l + 1))
            out["Gt_Gt" + tag] = comm(f.Gt(k + 1), f.Gt(l + 1))
            out["Gt_G" + tag] = comm(f.Gt(k + 1), f.G(l + 1)) + comm(f.G(k + 1), f.Gt(l + 1))
    return out


def _instances(residuals):
    return [{"relation": name, "pass": m.is_zero(), "residual": m.max_abs()}
            for name, m in residuals.items()]


def check_relations(f, relation_set, K=None):
    """Exact pass/fail per relation instance.

    relation_set: 'qDG' (first modes of A_q kinds), 'augmented' (first modes
    of diagonal kinds) or 'Aq_full' (all A_q relations with k, l <= K).
    """
    p = f.params
    if relation_set == "qDG":
        if f.diagonal:
            raise ValueError("qDG relations apply to A_q kinds; use 'augmented'")
        w0, w1 = f.W_neg(0), f.W_pos(1)
        res = {"Talg[W0]": dolan_grady(w0, w1, p.q, f.rho()),
               "Talg[W1]": dolan_grady(w1, w0, p.q, f.rho())}
    elif relation_set == "augmented":
        if not f.diagonal:
            raise ValueError("augmented relations apply to diagonal kinds; use 'qDG'")
        res = augmented_relations(f.W_neg(0), f.W_pos(1), f.G(1), f.Gt(1), p.q, p.rho_diag)
    elif relation_set == "Aq_full":
        if f.diagonal:
            raise ValueError("Aq_full relations apply to A_q kinds")
        if K is None:
            K = f.K - 1
        res = qons_relations(f, K)
    else:
        raise ValueError("unknown relation set %r" % relation_set)
    inst = _instances(res)
    return {"relation_set": relation_set, "kind": f.kind, "N": f.N,
            "instances": inst, "all_pass": all(i["pass"] for i in inst)}


def footnote_identity(f):
    """G_1 - [W_1, W_0]_q and G~_1 - [W_0, W_1]_q (both zero for A_q kinds)."""
    q = f.params.q
    return (f.G(1) - qcomm(f.W_pos(1), f.W_neg(0), q),
            f.Gt(1) - qcomm(f.W_neg(0), f.W_pos(1), q))


# --- Davies-type linear relations ------------------------------------------

@dataclass
class DaviesRelation:
    strand: str
    coefficients: list       # multipliers of the leading mode and the tail modes
    inhomogeneous: object     # multiplier of the identity
    annihilates: bool


def find_linear_relations(f):
    """Exact linear relations among {mode_0, ..., mode_N, I} for each strand.

    Returns (relations, report).  The report records whether the four strands
    share the same homogeneous coefficient profile.
    """
    if f.params.backend != EXACT:
        raise TypeError("find_linear_relations needs the exact backend")
    N = f.N
    f.need(N)
    I = f.identity()
    strands = {
        "W_-k": [f.W_neg(k) for k in range(N + 1)],
        "W_k+1": [f.W_pos(k + 1) for k in range(N + 1)],
        "G_k+1": [f.G(k + 1) for k in range(N + 1)],
        "Gt_k+1": [f.Gt(k + 1) for k in range(N + 1)],
    }
    relations = []
    degenerate = all(m.is_zero() for ops in strands.values() for m in ops)
    for name, ops in strands.items():
        cols = [m.flatten() for m in ops] + [I.flatten()]
        rows = [list(r) for r in zip(*cols)]
        basis = nullspace_exact(rows)
        # keep the relation with the fewest modes: the one with the lowest top index
        for v in _minimal_relations(basis, len(ops)):
            total = I * v[-1]
            for c, m in zip(v[:-1], ops):
                total = total + m * c
            relations.append(DaviesRelation(name, v[:-1], v[-1], total.is_zero()))
    profiles = {}
    for rel in relations:
        lead = next((c for c in rel.coefficients if c != 0), None)
        if lead is None:
            continue
        profiles.setdefault(rel.strand, tuple(c / lead for c in rel.coefficients))
    shared = len(set(profiles.values())) == 1 and len(profiles) == 4
    report = {"N": N, "kind": f.kind, "degenerate": degenerate,
              "n_relations": {k: sum(1 for r in relations if r.strand == k) for k in strands},
              "shared_profile": shared,
              "all_annihilate": all(r.annihilates for r in relations)}
    if not relations:
        report["note"] = "no relation at this depth"
    return relations, report


def _minimal_relations(basis, n_modes):
    """Reduce a nullspace basis to echelon form (by last nonzero mode index)."""
    if not basis:
        return []
    vecs = [list(v) for v in basis]
    out = []
    # eliminate from the highest mode index downwards
    order = list(range(n_modes - 1, -1, -1)) + [n_modes]
    for idx in order:
        piv = next((v for v in vecs if v[idx] != 0), None)
        if piv is None:
            continue
        vecs.remove(piv)
        vecs = [[a - b * (v[idx] / piv[idx]) for a, b in zip(v, piv)] for v in vecs]
        out.append(piv)
    # normalize each relation by its first nonzero entry
    normed = []
    for v in out:
        lead = next(c for c in v if c != 0)
        normed.append([c / lead for c in v])
    return normed


# --- q-Dolan-Grady hierarchies ---------------------------------------------

def build_hierarchy(f, p=None):
    """Mutually commuting charges for k = 0..N-1.

    A_q -> I, A_q_barred -> I-bar, A_q_diag -> J, A_q_diag_barred -> J-bar.
    The coefficients always come from the opposite boundary.
    """
    p = p or f.params
    f.need(max(f.N - 1, 0))
    c = 1 / (p.q ** 2 - p.q ** -2)
    out = []
    for k in range(f.N):
        if f.kind == "A_q":
            if p.kp == 0 or p.km == 0:
                raise InvalidParameters("k_+ or k_- vanishes in the I-hierarchy ratios")
            h = (f.W_neg(k) * p.ebp + f.W_pos(k + 1) * p.ebm
                 + (f.G(k + 1) * (p.kbm / p.km) + f.Gt(k + 1) * (p.kbp / p.kp)) * c)
        elif f.kind == "A_q_barred":
            if p.kbp == 0 or p.kbm == 0:
                raise InvalidParameters("k-bar_+ or k-bar_- vanishes in the I-bar ratios")
            h = (f.W_pos(k + 1) * p.ep + f.W_neg(k) * p.em
                 + (f.Gt(k + 1) * (p.km / p.kbm) + f.G(k + 1) * (p.kp / p.kbp)) * c)
        elif f.kind == "A_q_diag":
            h = (f.W_neg(k) * p.ebp + f.W_pos(k + 1) * p.ebm
                 + (f.G(k + 1) * p.kbm + f.Gt(k + 1) * p.kbp) * c)
        else:
            h = (f.W_pos(k + 1) * p.ep + f.W_neg(k) * p.em
                 + (f.Gt(k + 1) * p.km + f.G(k + 1) * p.kp) * c)
        out.append(h)
    return out


def hierarchy_commutes(hier):
    return all(comm(a, b).is_zero() for i, a in enumerate(hier) for b in hier[i + 1:])


# --- gauge change and the diagonal limit -----------------------------------

def to_unshifted(f):
    """Undo the (1 + a1/U) normalization of the standard A_q gauge.

    In the unshifted gauge every mode is polynomial in k_+-, so the
    k_+- -> 0 limit exists and reproduces the diagonal family.
    """
    if f.diagonal or f.barred:
        raise ValueError("gauge change implemented for kind A_q only")
    p = f.params
    a1 = p.ep * p.em * (p.q - 1 / p.q) ** 2 / p.rho
    neg, pos, g, gt = [], [], [], []
    for k in range(f.K + 1):
        neg.append(f.neg[k] - (neg[k - 1] * a1 if k else f.identity() * 0))
        pos.append(f.pos[k] - (pos[k - 1] * a1 if k else f.identity() * 0))
        g.append(f.g[k] - (g[k - 1] if k else f.g0()) * a1)
        gt.append(f.gt[k] - (gt[k - 1] if k else f.g0()) * a1)
    return GeneratorFamily(f.kind, f.N, f.K, p, neg, pos, g, gt, {"gauge": "unshifted"})


def diagonal_consistency(p, N, K=None, deltas=None):
    """Compare the k_+- -> 0 limit of A_q with the diagonal family.

    A_q is built at k_+- = delta * kappa_+- for several rational delta in the
    unshifted gauge; each entry is a polynomial in delta, so Lagrange
    extrapolation to delta = 0 is exact once enough samples are used.  The
    limit of W_{-k}, W_{k+1} must equal K_{-k}, K_{k+1}, and the limit of
    G_{k+1}/k_-, G~_{k+1}/k_+ must equal Z_{k+1}, Z~_{k+1}.
    """
    if K is None:
        K = N + 1
    kap_p = p.kp if p.kp != 0 else Fraction(1)
    kap_m = p.km if p.km != 0 else Fraction(1)
    n_pts = 2 * N + 4
    if deltas is None:
        deltas = [Fraction(1, 3 + 2 * i) for i in range(n_pts + 1)]
    samples = []
    for d in deltas:
        pd = p.with_(kp=kap_p * d, km=kap_m * d)
        f = to_unshifted(build_family(pd, N, K, "A_q"))
        samples.append((d, f, pd))
    diag = build_family(p.with_(kp=Fraction(0), km=Fraction(0)), N, K, "A_q_diag")

    def limit(getter, pts):
        # Lagrange interpolation evaluated at delta = 0
        total = None
        for i, (di, fi, pi) in enumerate(pts):
            w = Fraction(1)
            for j, (dj, _, _) in enumerate(pts):
                if j != i:
                    w *= (0 - dj) / (di - dj)
            term = getter(fi, pi) * w
            total = term if total is None else total + term
        return total

    getters = {
        "K_-k": lambda k: (lambda f, pd: f.neg[k]),
        "K_k+1": lambda k: (lambda f, pd: f.pos[k]),
        "Z_k+1": lambda k: (lambda f, pd: f.g[k] / pd.km),
        "Zt_k+1": lambda k: (lambda f, pd: f.gt[k] / pd.kp),
    }
    targets = {"K_-k": diag.neg, "K_k+1": diag.pos, "Z_k+1": diag.g, "Zt_k+1": diag.gt}
    out = {}
    for name, get in getters.items():
        for k in range(K + 1):
            full = limit(get(k), samples)
            fewer = limit(get(k), samples[:-1])
            out["%s[k=%d]" % (name, k)] = {
                "stable": (full - fewer).is_zero(),
                "match": (full - targets[name][k]).is_zero(),
            }
    return {"N": N, "K": K, "samples": len(deltas),
            "instances": out, "all_pass": all(v["stable"] and v["match"] for v in out.values())}
