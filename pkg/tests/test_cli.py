import csv
import json

import pytest

from qonsager import cli
from qonsager.errors import ConfigError

SMALL_CHAIN = """
[chain]
sizes = 2
draws = 1
mode_depth = 2
"""

SMALL_FOCK = """
[fock]
L = 6
D = 6
zetas = 0.8
"""


def _write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults():
    cfg = cli.load_config("zf", env={})
    assert cfg.L == cfg.D == 8 and cfg.refine == 10
    assert cfg.zf_pairs == ((0.72, 0.9),)
    assert cfg.tol("numeric") == 1e-6 and cfg.out == "reports"


def test_out_precedence(tmp_path):
    path = _write(tmp_path, "[run]\nout = from_file\n")
    assert cli.load_config("zf", path, env={}).out == "from_file"
    assert cli.load_config("zf", path, env={cli.OUT_ENV: "from_env"}).out == "from_env"
    assert cli.load_config("zf", path, out="flag", env={cli.OUT_ENV: "from_env"}).out == "flag"


def test_overrides(tmp_path):
    cfg = cli.load_config("davies", seed=11, tolerance=1e-3, env={})
    assert cfg.seed == 11 and cfg.tol("numeric") == 1e-3


@pytest.mark.parametrize("text, field", [
    ("[chain]\nsizes = 1,x\n", "[chain] sizes"),
    ("[fock]\nq = 1/0\n", "[fock] q"),
    ("[fock]\nbogus = 1\n", "[fock] bogus"),
    ("[extra]\na = 1\n", "[extra]"),
    ("[fock]\nq = 2/5\n", "[fock] q"),
    ("[fock]\nL = 0\n", "[fock] L"),
])
def test_config_errors_name_the_field(tmp_path, text, field):
    with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
        cli.load_config("zf", _write(tmp_path, text), env={})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        cli.load_config("zf", str(tmp_path / "none.ini"), env={})


def test_usage_errors_exit_one(tmp_path, capsys):
    assert cli.main([]) == 1
    assert cli.main(["nope"]) == 1
    assert cli.main(["zf", "--bogus"]) == 1


def test_relation_suite_report(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["onsager-relations", "--config", _write(tmp_path, SMALL_CHAIN),
                     "--seed", "7", "--out", str(out)]) == 0
    report = json.loads((out / "onsager-relations.json").read_text())
    assert report["schema"] == cli.SCHEMA and report["summary"]["pass"]
    recs = report["records"]
    assert recs and all(r["exact"] and r["pass"] and r["anchor"] for r in recs)
    assert {r["anchor"] for r in recs} >= {"Talg", "Taug", "qOns"}
    rows = list(csv.reader((out / "onsager-relations.csv").open()))
    assert tuple(rows[0]) == cli.TABLE_COLUMNS and len(rows) == len(recs) + 1


def test_failures_exit_two(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "davies", lambda cfg: [cli.record("x", "c4", False)])
    assert cli.main(["davies", "--out", str(tmp_path)]) == 2


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL_CHAIN)
    outs = []
    d = tmp_path / "run"
    for _ in range(2):
        assert cli.main(["davies", "--config", cfg, "--out", str(d)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]


def test_eigencheck_table_header_only(tmp_path):
    report = {"suite": "eigencheck", "records": []}
    cli.emit_tables(report, str(tmp_path))
    assert (tmp_path / "eigencheck_table.csv").read_text() == ",".join(cli.EIGEN_COLUMNS) + "\n"


@pytest.mark.slow
def test_eigencheck_suite_table(tmp_path):
    out = tmp_path / "eig"
    assert cli.main(["eigencheck", "--config", _write(tmp_path, SMALL_FOCK), "--out", str(out)]) == 0
    with (out / "eigencheck_table.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    diag0 = [r for r in rows if r["regime"] == "diagonal" and r["i"] == "0"]
    assert diag0 and all(float(r["predicted"]) == 1.0 for r in diag0)
    assert all(abs(float(r["measured"]) - 1) < 1e-4 for r in diag0)
