import json
import xml.etree.ElementTree as ET

import pytest

from ccekit import cli, report
from ccekit import montecarlo as mc

TABLE = {"schema_version": 1, "reps": 4, "seed": 11,
         "table": {"cells": [{"N": 10, "T": 10, "tau": 0.0}, {"N": 20, "T": 20, "tau": 0.9}]}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg, indent=1))
    return str(p)


def lines(path):
    return open(path).read().splitlines()


def test_table_shape_and_determinism(tmp_path):
    cfg = write(tmp_path, TABLE)
    assert cli.main(["table", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["table", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "table.csv").read_bytes()
    assert a == (tmp_path / "b" / "table.csv").read_bytes()
    assert b"\r" not in a
    rows = report.read_csv(tmp_path / "a" / "table.csv")
    assert len(rows) == 8
    assert list(rows[0]) == list(mc.ROW_FIELDS)
    assert a.decode().startswith("# tool=ccekit-")


def test_overrides_round_trip_into_provenance(tmp_path):
    cfg = write(tmp_path, TABLE)
    out = tmp_path / "o"
    assert cli.main(["table", "--config", cfg, "--out", str(out), "--reps", "3",
                     "--seed", "99", "--threads", "2"]) == 0
    head = lines(out / "table.csv")[0]
    assert "seed=99" in head and "reps=3" in head
    prov = json.loads((out / "table.provenance.json").read_text())
    assert prov["threads"] == 2 and prov["seed"] == 99 and prov["reps"] == 3
    assert report.read_csv(out / "table.csv")[0]["reps"] == "3"


def test_thread_count_leaves_csv_unchanged(tmp_path):
    cfg = write(tmp_path, TABLE)
    cli.main(["table", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
    cli.main(["table", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"])
    assert (tmp_path / "a" / "table.csv").read_bytes() == (tmp_path / "b" / "table.csv").read_bytes()


@pytest.mark.parametrize("text,line,fragment", [
    ('{"schema_version": 1,\n "reps": 2,\n "bogus": 3}\n', 3, "bogus"),
    ('{"schema_version": 1,\n "reps": 2,,\n}\n', 2, "invalid JSON"),
    ('{"schema_version": 1,\n "reps": 0}\n', 2, "reps"),
    ('{"schema_version": 2}\n', 1, "schema_version"),
    ('{"schema_version": 1,\n "table": {"cells": [\n  {"N": 10, "T": 30, "tau": 0},\n'
     '  {"N": 10, "T": 3, "tau": 0}]}}\n', 4, "cells[1]"),
    ('{"schema_version": 1,\n "dgp": {\n  "errors": {"mode": "weird"}}}\n', 3, "mode"),
])
def test_config_errors_are_line_precise(tmp_path, capsys, text, line, fragment):
    cfg = write(tmp_path, text)
    assert cli.main(["table", "--config", cfg, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:{line}:" in err and fragment in err


def test_missing_config_file_and_bad_args(tmp_path):
    assert cli.main(["table", "--config", str(tmp_path / "nope.json")]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["table", "--reps", "x"]) == 2


def test_missing_section_is_config_error(tmp_path):
    cfg = write(tmp_path, {"schema_version": 1})
    assert cli.main(["table", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_runtime_failure_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("worker died")
    monkeypatch.setattr(mc, "run_experiment", boom)
    cfg = write(tmp_path, TABLE)
    assert cli.main(["table", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_sweep_csv_and_svg(tmp_path):
    cfg = write(tmp_path, {"schema_version": 1, "reps": 2,
                           "sweep": {"N": 15, "T": 15, "taus": [0.0, 0.45, 0.9]}})
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path), "--svg"]) == 0
    rows = report.read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 3 * 4
    assert list(rows[0]) == ["tau", "criterion", "error_mode", "share_misselected"]
    root = ET.parse(tmp_path / "sweep.svg").getroot()
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == 4
    texts = [t.text for t in root.findall(f"{ns}text")]
    assert "tau" in texts and "share misselected" in texts


def test_rate_csv_layout(tmp_path):
    cfg = write(tmp_path, {"schema_version": 1, "rate": {
        "checks": [{"statistic": "corA1", "tau": 0.5}, {"statistic": "lemA2", "tau": 0.2}],
        "N_fixed": 10, "T_grid": [12, 24, 48, 96], "reps": 3}})
    assert cli.main(["rate", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = report.read_csv(tmp_path / "rate.csv")
    assert len(rows) == 2 * (4 + 1)
    slope = [r for r in rows if r["statistic"] == "corA1" and r["T"] == "slope"][0]
    assert float(slope["theoretical_slope"]) == -0.75
    assert [r["T"] for r in rows[:4]] == ["12", "24", "48", "96"]


def test_default_config_is_valid():
    cli.validate(cli.default_config())
    cells = cli.default_config()["table"]["cells"]
    assert len(cells) == 48


def test_csv_formatting_is_locale_free():
    text = report.csv_text(["a", "b", "c"], [{"a": 1, "b": 0.5, "c": float("nan")}], {"seed": 1})
    assert text == "# seed=1\na,b,c\n1,0.500000,nan\n"
