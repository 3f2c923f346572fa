import csv
import json

import pytest

from nsblowup import cli
from nsblowup.cli import (CSV_COLUMNS, ConfigError, ExperimentConfig, ReportBundle, emit, load_config,
                          parse_config)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parse_config_typed():
    d = parse_config("T = 2.0  # horizon\nk_max = 8\n\nvariant = B\ngrid-n = 32\n")
    assert d == {"T": 2.0, "k_max": 8, "variant": "B", "grid_n": 32}


def test_parse_config_reports_line_and_key():
    with pytest.raises(ConfigError) as e:
        parse_config("T = 1\nk_max = eight\n")
    assert e.value.key == "k_max" and e.value.line == 2
    with pytest.raises(ConfigError) as e:
        parse_config("bogus = 1\n")
    assert e.value.key == "bogus"


def test_negative_T_names_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("T = -1\n")
    with pytest.raises(ConfigError) as e:
        load_config(str(cfg))
    assert e.value.key == "T"
    assert cli.main(["heat", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "'T'" in capsys.readouterr().err


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("k_max = 8\nseed = 3\n")
    c = load_config(str(cfg), {"k_max": 5, "seed": None})
    assert c.k_max == 5 and c.seed == 3


def test_config_digest_ignores_output_dir():
    a = ExperimentConfig(out="x").digest()
    assert a == ExperimentConfig(out="y").digest()
    assert a != ExperimentConfig(seed=1).digest()


def test_empty_series_header_only(tmp_path):
    b = ReportBundle()
    b.add_series("h1_origin", [])
    (path,) = emit(b, tmp_path, "csv")
    assert _read(path) == [list(CSV_COLUMNS)]


def test_structured_report_mirrors_csv(tmp_path):
    b = ReportBundle()
    b.add_series("s", [(0, 0.0, 1.5, 1e-9, 0.0), (1, 0.5, 2.5, 1e-9, 0.0)])
    b.audit("a", False, worst=-0.1)
    cfg = ExperimentConfig()
    emit(b, tmp_path, "both", cfg)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["config_hash"] == cfg.digest() and doc["version"]
    assert doc["failed_audits"] == ["a"]
    rows = _read(tmp_path / "s.csv")[1:]
    assert [[float(x) for x in r] for r in rows] == doc["series"]["s"]["rows"]


def test_failed_suite_is_recorded(monkeypatch):
    def boom(ctx):
        raise RuntimeError("evaluator broke")
    monkeypatch.setitem(cli.SUITES, "baseline", boom)
    b = cli.run("baseline", ExperimentConfig(k_max=2))
    assert b.failed == ["baseline_suite"]
    assert "evaluator broke" in b.records["baseline_suite"]["error"]


@pytest.fixture(scope="module")
def heat_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.cfg"
    cfg.write_text("k_max = 6\ncloud_size = 8\nseed = 4\n")
    codes = [cli.main(["run", "heat", str(cfg), "--out", str(root / f"r{i}")]) for i in range(2)]
    return root, codes


def test_heat_run_exit_status(heat_runs):
    root, codes = heat_runs
    doc = json.loads((root / "r0" / "report.json").read_text())
    assert codes[0] == (1 if doc["failed_audits"] else 0)
    assert codes == [0, 0]


def test_blowup_fit_csv_rows(heat_runs):
    root, _ = heat_runs
    rows = _read(root / "r0" / "h1_origin.csv")
    assert rows[0] == list(CSV_COLUMNS)
    assert len(rows) - 1 == 7
    assert [int(r[0]) for r in rows[1:]] == list(range(7))


def test_runs_byte_identical(heat_runs):
    root, _ = heat_runs
    assert (root / "r0" / "h1_origin.csv").read_bytes() == (root / "r1" / "h1_origin.csv").read_bytes()
    a = json.loads((root / "r0" / "report.json").read_text())
    b = json.loads((root / "r1" / "report.json").read_text())
    a["config"].pop("out"), b["config"].pop("out")
    assert a == b


def test_exit_status_nonzero_on_failed_audit(monkeypatch, tmp_path):
    def failing(ctx):
        b = ReportBundle()
        b.audit("forced", False)
        return b
    monkeypatch.setitem(cli.SUITES, "baseline", failing)
    assert cli.main(["baseline", "--kmax", "2", "--out", str(tmp_path)]) == 1
