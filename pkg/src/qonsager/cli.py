"""Batch driver for the verification suites.

    verify <suite> --config <path> [--seed S] [--out DIR] [--tolerance T]

The config is an INI file; exact parameters are written as "num/den".  Each
run writes <out>/<suite>.json (schema 1) and one CSV per check family.
Reports contain no timings so that reruns are byte-identical.
"""

import argparse
import configparser
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from . import currents, fock, lattice, onsager, qseries
from .errors import ConfigError, WorkbenchError
from .numerics import parse_rational

SCHEMA = 1
OUT_ENV = "QONSAGER_OUT"
SUITES = ("onsager-relations", "davies", "transfer", "onsager-fit", "symmetry", "coideal",
          "zf", "reflection", "eigencheck", "qseries")
BOUNDARY_REGIMES = ("generic", "right_diagonal", "left_diagonal", "diagonal")

DEFAULT_CONFIG = """
[run]
seed = 7
out = reports

[chain]
sizes = 1,2,3
draws = 3
mode_depth = 3
symmetry_sizes = 2,3,4
coideal_sizes = 1,2,3,4

[fock]
q = -2/5
L = 8
D = 8
charge = 2
refine = 10
zetas = 0.7,0.75,0.8,0.85,0.9
zf_pairs = 0.72:0.9
v = 0.7
xi = 2.5

[vacuum]
em = -1
ep0 = 1/10
ep1 = 100
kp = 1
km = 1

[tolerance]
numeric = 1e-6
reflection = 1e-5
nondiag = 1e-5
excited = 1e-4
x_minus = 1e-8
constraints = 1e-10
r_matrix = 1e-12
"""


@dataclass
class RunConfig:
    suite: str
    seed: int = 7
    out: str = "reports"
    sizes: tuple = (1, 2, 3)
    draws: int = 3
    mode_depth: int = 3
    symmetry_sizes: tuple = (2, 3, 4)
    coideal_sizes: tuple = (1, 2, 3, 4)
    q: Fraction = Fraction(-2, 5)
    L: int = 8
    D: int = 8
    charge: int = 2
    refine: int = 10
    zetas: tuple = (0.7, 0.75, 0.8, 0.85, 0.9)
    zf_pairs: tuple = ((0.72, 0.9),)
    v: float = 0.7
    xi: float = 2.5
    em: Fraction = Fraction(-1)
    ep0: Fraction = Fraction(1, 10)
    ep1: Fraction = Fraction(100)
    kp: Fraction = Fraction(1)
    km: Fraction = Fraction(1)
    tolerance: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, Fraction):
                d[k] = str(v)
            elif isinstance(v, tuple):
                d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
        d["tolerance"] = dict(sorted(self.tolerance.items()))
        return d

    def tol(self, name):
        return self.tolerance[name]

    @property
    def cutoffs(self):
        return fock.Cutoffs(self.L, self.D, self.charge)


def _get(parser, section, key, conv):
    try:
        return conv(parser.get(section, key))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _pairs(text):
    return tuple(tuple(float(y) for y in x.split(":")) for x in text.split(",") if x.strip())


_FIELDS = {
    ("run", "seed"): int, ("run", "out"): str,
    ("chain", "sizes"): _ints, ("chain", "draws"): int, ("chain", "mode_depth"): int,
    ("chain", "symmetry_sizes"): _ints, ("chain", "coideal_sizes"): _ints,
    ("fock", "q"): parse_rational, ("fock", "L"): int, ("fock", "D"): int,
    ("fock", "charge"): int, ("fock", "refine"): int, ("fock", "zetas"): _floats,
    ("fock", "zf_pairs"): _pairs, ("fock", "v"): float, ("fock", "xi"): float,
    ("vacuum", "em"): parse_rational, ("vacuum", "ep0"): parse_rational,
    ("vacuum", "ep1"): parse_rational, ("vacuum", "kp"): parse_rational,
    ("vacuum", "km"): parse_rational,
}


def load_config(suite, path=None, seed=None, out=None, tolerance=None, env=None):
    """RunConfig from the defaults, an optional INI file and CLI overrides.

    Output directory precedence: --out, then $QONSAGER_OUT, then the file."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string(DEFAULT_CONFIG)
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from None
    known = {s for s, _ in _FIELDS} | {"tolerance"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if section != "tolerance" and (section, key) not in _FIELDS:
                raise ConfigError(f"unknown field [{section}] {key}")
    values = {key: _get(parser, s, key, conv) for (s, key), conv in _FIELDS.items()}
    tol = {k: _get(parser, "tolerance", k, float) for k in parser["tolerance"]}
    if tolerance is not None:
        tol["numeric"] = float(tolerance)
    if seed is not None:
        values["seed"] = int(seed)
    env = os.environ if env is None else env
    if env.get(OUT_ENV):
        values["out"] = env[OUT_ENV]
    if out is not None:
        values["out"] = out
    if not suite:
        raise ConfigError("suite: empty selector")
    if suite != "all" and suite not in SUITES:
        raise ConfigError(f"suite: unknown suite {suite!r}")
    cfg = RunConfig(suite=suite, tolerance=tol, **values)
    if cfg.q.denominator == 0 or not -1 < cfg.q < 0:
        raise ConfigError("[fock] q: the Fock suites need -1 < q < 0")
    if min(cfg.L, cfg.D, cfg.charge) < 1:
        raise ConfigError("[fock] L, D, charge must be >= 1")
    return cfg


# records ---------------------------------------------------------------------

def record(rid, anchor, passed, residual=None, params=None, cutoffs=None, exact=False, **detail):
    rec = {"id": rid, "anchor": anchor, "pass": bool(passed), "exact": exact,
           "residual": None if residual is None else float(residual),
           "params": params or {}, "cutoffs": None if cutoffs is None else list(cutoffs)}
    if detail:
        rec["detail"] = detail
    return rec


def _cut(space):
    c = space.cut
    return (c.L, c.D, c.charge)


def _draws(cfg, regime):
    return [onsager.random_params(cfg.seed + j, regime) for j in range(cfg.draws)]


def _kind_for(regime, barred):
    diag = regime in (("right_diagonal", "diagonal") if not barred else ("left_diagonal", "diagonal"))
    base = "A_q_diag" if diag else "A_q"
    return base + ("_barred" if barred else "")


# exact suites ------------------------------------------------------------------

def suite_onsager_relations(cfg):
    out = []
    for regime in BOUNDARY_REGIMES:
        for j, p in enumerate(_draws(cfg, regime)):
            for N in cfg.sizes:
                for barred in (False, True):
                    kind = _kind_for(regime, barred)
                    f = onsager.build_family(p, N, cfg.mode_depth + 2, kind)
                    sets = ["augmented"] if f.diagonal else ["qDG", "Aq_full"]
                    for rs in sets:
                        rep = onsager.check_relations(f, rs, cfg.mode_depth if rs == "Aq_full" else None)
                        anchor = {"qDG": "Talg", "augmented": "Taug", "Aq_full": "qOns"}[rs]
                        failed = [i for i in rep["instances"] if not i["pass"]]
                        out.append(record(f"{regime}/draw{j}/N{N}/{kind}/{rs}", anchor, rep["all_pass"],
                                          params=p.to_dict(), exact=True,
                                          instances=len(rep["instances"]), failed=len(failed)))
    return out


def suite_davies(cfg):
    out = []
    for regime in ("generic", "diagonal"):
        p = _draws(cfg, regime)[0]
        kind = "A_q" if regime == "generic" else "A_q_diag"
        for N in (1, 2):
            rels, rep = onsager.find_linear_relations(onsager.build_family(p, N, kind=kind))
            ok = (bool(rels) and rep["all_annihilate"] and rep["shared_profile"]
                  and all(v > 0 for v in rep["n_relations"].values()))
            out.append(record(f"{regime}/N{N}/{kind}", "c4", ok, params=p.to_dict(), exact=True,
                              n_relations=rep["n_relations"], shared_profile=rep["shared_profile"]))
    return out


def suite_transfer(cfg):
    out = []
    for regime in BOUNDARY_REGIMES:
        p = _draws(cfg, regime)[0]
        out.append(record(f"{regime}/K-duality", "Kp-dual", lattice.k_duality_residual(p).is_zero(),
                          params=p.to_dict(), exact=True))
        for N in cfg.sizes:
            t = lattice.build_transfer(p, N)
            ok, _ = lattice.transfer_commutes(t)
            out.append(record(f"{regime}/N{N}/commute", "transfer", ok, params=p.to_dict(), exact=True))
            _, rep = lattice.extract_hamiltonian(t)
            out.append(record(f"{regime}/N{N}/hamiltonian", "HN", rep["matches_direct"],
                              params=p.to_dict(), exact=True))
            out.append(record(f"{regime}/N{N}/identity-term", "expH", rep["identity_match"],
                              params=p.to_dict(), exact=True))
    return out


def suite_onsager_fit(cfg):
    out = []
    for regime in BOUNDARY_REGIMES:
        p = _draws(cfg, regime)[0]
        kind = "A_q" if regime in ("generic", "left_diagonal") else "A_q_diag"
        for N in [n for n in cfg.sizes if n <= 2]:
            t = lattice.build_transfer(p, N)
            hier = onsager.build_hierarchy(onsager.build_family(p, N, kind=kind), p)
            rep = lattice.fit_onsager_decomposition(t, hier)
            even = rep["exact"] and all(e % 2 == 0 for F in rep["F"] for e in F.exponents())
            sym = rep["exact"] and all(rep["u_symmetric"])
            out.append(record(f"{regime}/N{N}", "Iinf", rep["exact"] and even and sym,
                              params=p.to_dict(), exact=True, even_in_zeta=bool(even), in_U=bool(sym),
                              offending_powers=rep["offending_powers"]))
    return out


def suite_symmetry(cfg):
    out = []
    for regime, anchor, gen in (("nondiagonal", "sym", "generic"), ("diagonal", "symdiag", "diagonal")):
        p = _draws(cfg, gen)[0]
        scan = lattice.symmetry_locality_scan(p, cfg.symmetry_sizes, regime)
        for name, stable in scan["D_stable"].items():
            support = [r["generators"][name]["support"] for r in scan["reports"]]
            local = all(r["generators"][name]["support"] <= 2 for r in scan["reports"])
            out.append(record(f"{regime}/{name}", anchor, stable and local, params=p.to_dict(), exact=True,
                              sizes=list(cfg.symmetry_sizes), support=support, D_stable=stable))
    return out


def suite_coideal(cfg):
    out = []
    for j, p in enumerate(_draws(cfg, "generic")):
        for reg in currents.REGIMES:
            for N in cfg.coideal_sizes:
                try:
                    rep = currents.build_coideal(p, N, reg).report
                    ok, why = rep["all_pass"], None
                except currents.CoidealMismatch as exc:
                    ok, why = False, str(exc)
                anchor = "odeltadef" if reg.endswith("left") else "deltadef"
                if reg.startswith("augmented"):
                    anchor += "aug"
                out.append(record(f"draw{j}/{reg}/N{N}", anchor, ok, params=p.to_dict(), exact=True,
                                  **({"mismatch": why} if why else {})))
            out.append(record(f"draw{j}/{reg}/coassociative", "coideal",
                              currents.check_coassociativity(p, reg)["all_pass"], params=p.to_dict(),
                              exact=True))
        for N in [n for n in cfg.coideal_sizes if n <= 3]:
            rep = currents.check_defUq(currents.build_chevalley(p, N))
            out.append(record(f"draw{j}/defUq/N{N}", "defUq", rep["all_pass"], params=p.to_dict(), exact=True))
    return out


# numeric suites ------------------------------------------------------------------

def _space(cfg, LD=None):
    LD = (cfg.L, cfg.D) if LD is None else LD
    return fock.FockSpace(float(cfg.q), fock.Cutoffs(LD[0], LD[1], cfg.charge))


def _vacuum_params(cfg, i, kp=0, km=0):
    ep = cfg.ep0 if i == 0 else cfg.ep1
    return onsager.ModelParams(q=cfg.q, ep=ep, em=cfg.em, kp=kp, km=km)


def _fparams(p):
    return {k: v for k, v in p.to_dict().items() if k in ("q", "ep", "em", "kp", "km")}


def suite_zf(cfg):
    tol = cfg.tol("numeric")
    coarse = _space(cfg)
    fine = _space(cfg, (cfg.refine, cfg.refine))
    # the same set of states at both cutoffs
    dmax = cfg.D // 2
    out = []
    for z1, z2 in cfg.zf_pairs:
        for rel in fock.ZF_RELATIONS:
            anchor = "eqn:" + rel
            r8 = fock.check_zf_relations(rel, z1, z2, coarse, coarse.faithful_mask(dmax))
            r10 = fock.check_zf_relations(rel, z1, z2, fine, fine.faithful_mask(dmax))
            # exact normal ordering leaves only roundoff; "decreasing" is
            # read as not increasing beyond that floor
            settled = r10 <= r8 * 1.5 + 1e-12
            d8 = fock.check_zf_relations(rel, z1, z2, coarse, coarse.faithful_mask(dmax), "direct")
            d10 = fock.check_zf_relations(rel, z1, z2, fine, fine.faithful_mask(dmax), "direct")
            out.append(record(f"{rel}/{z1}:{z2}", anchor, r8 <= tol and settled, r8,
                              {"q": str(cfg.q), "zeta1": z1, "zeta2": z2}, _cut(coarse),
                              refined_residual=r10, refined_cutoffs=list(_cut(fine)),
                              direct_product=[d8, d10], tolerance=tol))
    return out


def suite_reflection(cfg):
    tol = cfg.tol("reflection")
    sp = _space(cfg)
    out = []
    for kind in fock.REFLECTIONS:
        sector1 = kind in ("eqdiagp1", "eqdiagp2", "eqdiagpri3", "eqdiagpri4")
        kp = cfg.kp if kind.startswith("eqdiagpri") else 0
        p = _vacuum_params(cfg, 1 if sector1 else 0, kp=kp)
        rep = fock.check_reflection(kind, p, sp, cfg.zetas)
        out.append(record(kind, kind, rep["max_residual"] <= tol, rep["max_residual"], _fparams(p), _cut(sp),
                          per_zeta=[[x["zeta"], x["residual"]] for x in rep["rows"]], tolerance=tol))
    small = _space(cfg, (min(cfg.L, 6), min(cfg.D, 6)))
    # zeta = v pinches the contours of the chi(v) and current variables
    for z in [z for z in cfg.zetas if abs(z - cfg.v) > 0.02][:2]:
        res = fock.check_current_vertex_relations(z, cfg.v, small)
        for key, r in sorted(res.items()):
            out.append(record(f"ac/{key}/zeta={z}", "ac" if key.startswith("displayed") else "acbar",
                              r <= tol, r, {"q": str(cfg.q), "zeta": z, "v": cfg.v}, _cut(small)))
    return out


def _eigen_record(rep, p, sp, tol, anchor):
    rows = [[r["zeta"], r["expected"], _plain(r["measured"]), r["residual"], r["t(z)=t(-1/qz)"],
             r["t(z)t(1/z)=1"]] for r in rep["rows"]]
    return record(f"{rep['regime']}/i={rep['sector']}", anchor, rep["max_residual"] <= tol,
                  rep["max_residual"], _fparams(p), _cut(sp), rows=rows, t_one=rep["t(1)=1"],
                  vacuum=rep["vacuum"], tolerance=tol)


def _plain(x):
    x = complex(x)
    return x.real if x.imag == 0 else [x.real, x.imag]


def suite_eigencheck(cfg):
    tol = cfg.tol("numeric")
    sp = _space(cfg)
    out = []
    chev = fock.chevalley_on_fock(sp)
    worst = max(chev.report["tried"][chev.convention].values())
    out.append(record("chevalley", "defUq+cochi", True, worst, {"q": str(cfg.q)}, _cut(sp),
                      convention=chev.convention, tried=sorted(chev.report["tried"])))
    pw, nrm, tried = fock.x_minus_check(sp)
    out.append(record("x-minus", "x-1B+", pw == -1 and nrm <= cfg.tol("x_minus"), nrm, {"q": str(cfg.q)},
                      _cut(sp), power=pw, tried={str(k): v for k, v in sorted(tried.items())}))
    lam = fock.lambda_check(float(cfg.q), sp, cfg.zetas)
    out.append(record("lambda", "lambda_pm", lam["max_residual"] <= tol, lam["max_residual"],
                      {"q": str(cfg.q)}, _cut(sp)))
    for i in (0, 1):
        p = _vacuum_params(cfg, i)
        rep = fock.eigencheck_transfer(i, p, sp, cfg.zetas, chev=chev, tol=tol)
        out.append(_eigen_record(rep, p, sp, tol, "t(i)"))
    for regime, kw in (("upper", {"kp": cfg.kp}), ("lower", {"km": cfg.km})):
        for i in (0, 1):
            p = _vacuum_params(cfg, i, **kw)
            rep = fock.eigencheck_transfer(i, p, sp, cfg.zetas, regime, chev=chev, tol=cfg.tol("nondiag"))
            out.append(_eigen_record(rep, p, sp, cfg.tol("nondiag"), "vacND+" if regime == "upper" else "vacND-"))
    for i in (0, 1):
        p = _vacuum_params(cfg, i)
        for mu in (1, -1):
            rep = fock.check_excited(p, sp, i, [(mu, cfg.xi)], cfg.zetas)
            out.append(record(f"excited/i={i}/mu={mu}", "tau-factor", rep["max_residual"] <= cfg.tol("excited"),
                              rep["max_residual"], {**_fparams(p), "xi": cfg.xi}, _cut(sp),
                              rows=[[r["zeta"], r["expected"], r["residual"]] for r in rep["rows"]]))
    base = fock.build_vacua("diag0", _vacuum_params(cfg, 0), sp)
    sw = fock.check_excited_swap(base, (1, cfg.xi), (-1, cfg.xi * 0.8))
    out.append(record("excited/swap", "eqn:psicom", sw <= tol, sw, {"xi": [cfg.xi, cfg.xi * 0.8]}, _cut(sp)))
    z = cfg.zetas
    ec = fock.check_current_commutativity("W+", z[0], z[-1], sp)
    out.append(record("currents/W+W+", "ec1", ec <= tol, ec, {"zeta": z[0], "xi": z[-1]}, _cut(sp)))
    return out


def suite_qseries(cfg):
    out = []
    for i in (0, 1):
        p = _vacuum_params(cfg, i)
        rep = qseries.check_constraints(p, cfg.zetas)
        for key in ("constr_ratio", "constr_product", "constr_one"):
            r = rep["max"][key]
            out.append(record(f"i={i}/{key}", "constr", r <= cfg.tol("constraints"), r, _fparams(p)))
        for key, anchor in (("unitarity", "unit"), ("crossing", "crossing")):
            r = rep["max"][key]
            out.append(record(f"i={i}/{key}", anchor, r <= cfg.tol("r_matrix"), r, _fparams(p)))
    q = float(cfg.q)
    g = qseries.g_const(q)
    rhs = qseries.qpoch(q * q, q ** 4) / qseries.qpoch(q ** 4, q ** 4)
    out.append(record("g", "g", abs(g - rhs) <= 1e-15, abs(g - rhs), {"q": str(cfg.q)}))
    t1 = abs(qseries.tau(1.0, q) - 1)
    out.append(record("tau(1)", "eqn:tau", t1 <= 1e-15, t1, {"q": str(cfg.q)}))
    return out


RUNNERS = {
    "onsager-relations": suite_onsager_relations, "davies": suite_davies, "transfer": suite_transfer,
    "onsager-fit": suite_onsager_fit, "symmetry": suite_symmetry, "coideal": suite_coideal,
    "zf": suite_zf, "reflection": suite_reflection, "eigencheck": suite_eigencheck,
    "qseries": suite_qseries,
}


def run_suite(cfg):
    """Run one suite (or all) and return the report dict."""
    names = SUITES if cfg.suite == "all" else (cfg.suite,)
    records = []
    for name in names:
        for rec in RUNNERS[name](cfg):
            rec["id"] = f"{name}:{rec['id']}"
            records.append(rec)
    records.sort(key=lambda r: r["id"])
    failed = [r["id"] for r in records if not r["pass"]]
    return {"schema": SCHEMA, "suite": cfg.suite, "config": cfg.to_dict(), "records": records,
            "summary": {"checks": len(records), "failed": failed, "pass": not failed}}


def _num(x):
    if isinstance(x, float):
        return repr(x)
    return json.dumps(x, sort_keys=True) if isinstance(x, (list, dict)) else str(x)


TABLE_COLUMNS = ("id", "anchor", "pass", "exact", "residual", "cutoffs", "params")
EIGEN_COLUMNS = ("i", "regime", "zeta", "measured", "predicted", "residual")


def emit_tables(report, out_dir):
    """Flat CSVs: <suite>.csv with one row per record, plus eigencheck.csv
    with the per-zeta eigenvalue table when the report has one."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        path = os.path.join(out_dir, f"{report['suite']}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TABLE_COLUMNS)
            for r in report["records"]:
                w.writerow([_num(r[c]) for c in TABLE_COLUMNS])
        paths.append(path)
        eig = [r for r in report["records"]
               if r["id"].startswith("eigencheck:") and "rows" in r.get("detail", {})
               and r["id"].split(":")[1].split("/")[0] in fock.REGIMES]
        if report["suite"] in ("eigencheck", "all"):
            path = os.path.join(out_dir, "eigencheck_table.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(EIGEN_COLUMNS)
                for r in eig:
                    regime, i = r["id"].split(":")[1].split("/")
                    for z, pred, meas, res, *_ in r["detail"]["rows"]:
                        w.writerow([i[2:], regime, _num(z), _num(meas), _num(pred), _num(res)])
            paths.append(path)
    except OSError as exc:
        raise ConfigError(f"out: cannot write tables to {out_dir}: {exc}") from None
    return paths


def write_report(report, out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"{report['suite']}.json")
        with open(path, "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ConfigError(f"out: cannot write report to {out_dir}: {exc}") from None
    return path


def main(argv=None):
    ap = argparse.ArgumentParser(prog="verify", description="Run a verification suite.")
    ap.add_argument("suite", nargs="?", default="", help="one of: " + ", ".join(SUITES + ("all",)))
    ap.add_argument("--config", default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--tolerance", type=float, default=None)
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        cfg = load_config(args.suite, args.config, args.seed, args.out, args.tolerance)
        report = run_suite(cfg)
        path = write_report(report, cfg.out)
        emit_tables(report, cfg.out)
    except ConfigError as exc:
        print(f"verify: {exc}", file=sys.stderr)
        return 1
    except WorkbenchError as exc:
        print(f"verify: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    s = report["summary"]
    print(f"{cfg.suite}: {s['checks'] - len(s['failed'])}/{s['checks']} checks pass -> {path}")
    for rid in s["failed"]:
        print(f"  FAIL {rid}")
    return 0 if s["pass"] else 2


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
