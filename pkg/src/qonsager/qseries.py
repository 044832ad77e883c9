"""Infinite q-products, theta functions and the scalar factors of the
bosonized half-infinite chain, together with the normalization constraints
they satisfy.

Every product is truncated: by default 64 factors, doubled until the last
factor differs from 1 by less than the requested tolerance.  Values are
plain Python floats/complex numbers.
"""

import cmath
import contextvars
import csv
import threading
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameters, TruncationError

DEFAULT_TERMS = 64
DEFAULT_TOL = 1e-17
MAX_TERMS = 1 << 14

_cache = {}
_cache_lock = threading.Lock()
# fixed number of factors for every product, or None for adaptive doubling
_order = contextvars.ContextVar("qseries_order", default=None)


@dataclass(frozen=True)
class Evaluation:
    kind: str
    args: tuple
    value: complex
    order: int
    error: float


def _num(x):
    """Return a float when x is real, a complex otherwise."""
    x = complex(x)
    return x.real if x.imag == 0 else x


def qpoch_info(z, p, terms=None, tol=DEFAULT_TOL):
    """(z; p)_inf as an Evaluation; `error` is |z p^terms|, the size of the
    first neglected deviation from 1."""
    z, p = complex(z), complex(p)
    if terms is None:
        terms = _order.get()
    if abs(p) >= 1:
        raise InvalidParameters(f"(z;p)_inf needs |p| < 1, got p={p}")
    key = (z, p, terms, tol)
    hit = _cache.get(key)
    if hit is not None:
        return hit
    n = terms or DEFAULT_TERMS
    while True:
        pw = p ** np.arange(n)
        val = complex(np.prod(1 - z * pw))
        err = abs(z * p ** n)
        if terms is not None or err <= tol * max(1.0, abs(val)) or p == 0:
            break
        if n >= MAX_TERMS:
            raise TruncationError(f"(z;p)_inf not converged at {n} factors (error {err:.3g})")
        n *= 2
    ev = Evaluation("qpoch", (z, p), _num(val), n, err)
    with _cache_lock:
        _cache.setdefault(key, ev)
    return ev


def qpoch(z, p, terms=None, tol=DEFAULT_TOL):
    return qpoch_info(z, p, terms, tol).value


def clear_cache():
    with _cache_lock:
        _cache.clear()


def theta(z, p):
    """Theta_p(z) = (z;p)(p/z;p)(p;p)."""
    return _num(qpoch(z, p) * qpoch(p / complex(z), p) * qpoch(p, p))


def kappa(zeta, q):
    """Scalar normalization of the principal-picture R-matrix."""
    z2, q2, q4 = complex(zeta) ** 2, q * q, q ** 4
    return _num(zeta * qpoch(q4 * z2, q4) * qpoch(q2 / z2, q4)
                / (qpoch(q4 / z2, q4) * qpoch(q2 * z2, q4)))


def tau(zeta, q):
    """Exchange factor between type I and type II vertex operators."""
    z2, q4 = complex(zeta) ** 2, q ** 4
    return _num(theta(q * z2, q4) / (zeta * theta(q / z2, q4)))


def g_const(q):
    """(q^2;q^4)/(q^4;q^4), the normalization of the inversion relation."""
    return _num(qpoch(q * q, q ** 4) / qpoch(q ** 4, q ** 4))


def delta(z, q):
    """(q^6 z^2; q^8)/(q^8 z^2; q^8)."""
    z2, q8 = complex(z) ** 2, q ** 8
    return _num(qpoch(q ** 6 * z2, q8) / qpoch(q8 * z2, q8))


def phi_tilde(z, r, q):
    """(q^4 r z; q^4)/(q^2 r z; q^4)."""
    q4 = q ** 4
    return _num(qpoch(q4 * r * z, q4) / qpoch(q * q * r * z, q4))


def varphi(z, r, q):
    return _num(delta(z, q) * phi_tilde(z, r, q))


def Lambda(zeta, r, q):
    """Eigenvalue of the transfer matrix on the second diagonal vacuum."""
    z2 = complex(zeta) ** 2
    return _num(z2 * phi_tilde(z2 / q ** 2, 1 / r, q) * phi_tilde(z2, r, q)
                / (phi_tilde(1 / (q ** 2 * z2), 1 / r, q) * phi_tilde(1 / z2, r, q)))


def lambda_pm(zeta, q):
    """Common eigenvalue of the W_+ and W_- currents on the states B_+ and B_-."""
    z = complex(zeta)
    zq2 = (z * q) ** 2
    return _num((1 / (z * q)) / (g_const(q) * (zq2 - 1 / zq2))
                * delta(zq2, q) / delta(1 / zq2, q))


def rho_norm(zeta, ep, em, q):
    """Normalization of the transfer matrix for k_+ k_- = 0, r = -ep/em."""
    z = complex(zeta)
    ep, em = float(ep), float(em)
    r = -ep / em
    return _num((z * em + ep / z) * delta(z ** -2, q) / delta(z ** 2, q)
                * phi_tilde(z ** -2, r, q) / phi_tilde(z ** 2, r, q))


def r_matrix(zeta, q):
    """4x4 R-matrix on V x V in the basis (++, +-, -+, --)."""
    z = complex(zeta)
    b = (1 - z * z) * q / (1 - q * q * z * z)
    c = (1 - q * q) * z / (1 - q * q * z * z)
    m = np.array([[1, 0, 0, 0], [0, b, c, 0], [0, c, b, 0], [0, 0, 0, 1]], dtype=complex)
    return m / kappa(z, q)


def r_entry(m, up, down):
    """R^{up}_{down} with up = (e1', e2'), down = (e1, e2) and signs +/-1."""
    idx = {(1, 1): 0, (1, -1): 1, (-1, 1): 2, (-1, -1): 3}
    return m[idx[tuple(up)], idx[tuple(down)]]


_KINDS = {
    "qpoch": lambda a: qpoch(a["z"], a["p"]),
    "theta": lambda a: theta(a["z"], a["p"]),
    "kappa": lambda a: kappa(a["zeta"], a["q"]),
    "tau": lambda a: tau(a["zeta"], a["q"]),
    "g": lambda a: g_const(a["q"]),
    "delta": lambda a: delta(a["z"], a["q"]),
    "phi_tilde": lambda a: phi_tilde(a["z"], a["r"], a["q"]),
    "Lambda": lambda a: Lambda(a["zeta"], a["r"], a["q"]),
    "lambda_pm": lambda a: lambda_pm(a["zeta"], a["q"]),
    "rho_norm": lambda a: rho_norm(a["zeta"], a["ep"], a["em"], a["q"]),
}


def eval_fn(kind, order=DEFAULT_TERMS, **args):
    """Evaluate a named function with `order` factors per product; the error
    proxy is the change when every product is taken with twice as many."""
    if kind not in _KINDS:
        raise InvalidParameters(f"unknown function kind {kind!r}")
    vals = []
    for n in (order, 2 * order):
        tok = _order.set(n)
        try:
            vals.append(_KINDS[kind](args))
        finally:
            _order.reset(tok)
    return Evaluation(kind, tuple(sorted(args.items())), vals[0], order, abs(vals[1] - vals[0]))


def check_constraints(p, zetas):
    """Residuals of the normalization constraints (ratio under zeta -> -1/(q zeta),
    product rho(zeta) rho(1/zeta), value at 1) plus R-matrix unitarity and crossing."""
    q = float(p.q)
    ep, em = float(p.ep), float(p.em)
    kk = float(p.kp) * float(p.km)
    out = {"constr_ratio": [], "constr_product": [], "constr_one": None,
           "unitarity": [], "crossing": []}
    for z in zetas:
        z = complex(z)
        lhs = rho_norm(z, ep, em, q) / rho_norm(-1 / (q * z), ep, em, q)
        rhs = -(z * z - z ** -2) / (kappa(-q * z * z, q) * (q * q * z * z - 1 / (q * q * z * z)))
        out["constr_ratio"].append(abs(lhs - rhs))
        lhs = rho_norm(z, ep, em, q) * rho_norm(1 / z, ep, em, q)
        rhs = ((ep + em) ** 2 + (z - 1 / z) ** 2 * ep * em
               - (z * z - z ** -2) ** 2 * kk / (q - 1 / q) ** 2)
        out["constr_product"].append(abs(lhs - rhs))
        u = r_matrix(z, q) @ r_matrix(1 / z, q)
        out["unitarity"].append(float(np.max(np.abs(u - np.eye(4)))))
        out["crossing"].append(crossing_residual(z, q))
    out["constr_one"] = abs(rho_norm(1, ep, em, q) - (ep + em))
    out["max"] = {k: (max(v) if isinstance(v, list) else v) for k, v in out.items()}
    return out


def crossing_residual(zeta, q):
    a, b = r_matrix(1 / complex(zeta), q), r_matrix(-complex(zeta) / q, q)
    worst = 0.0
    s = (1, -1)
    for e1 in s:
        for e1p in s:
            for e2 in s:
                for e2p in s:
                    lhs = r_entry(a, (e2p, e1), (e2, e1p))
                    rhs = r_entry(b, (-e1p, e2p), (-e1, e2))
                    worst = max(worst, abs(lhs - rhs))
    return worst


def write_table(rows, path):
    """CSV of (kind, args, value, order) for a list of Evaluations."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "args", "value", "order"])
        for ev in rows:
            args = ";".join(f"{k}={v!r}" for k, v in ev.args)
            w.writerow([ev.kind, args, repr(ev.value), ev.order])


def principal_sqrt(x):
    """Square root on the principal branch; used for v = sqrt(r)."""
    return _num(cmath.sqrt(complex(x)))
