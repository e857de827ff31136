import hashlib
import json

import pytest

from sfselect import cli, sweep as sweep_mod
from sfselect.data import load_csv, sf_from_snr
from sfselect.models import ModelKind
from sfselect.sweep import SweepInterrupted, SweepReport

def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out.strip().splitlines()[-1]) if out.strip() else None)


@pytest.fixture
def fast_config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"hyperparams": {"rf_n_estimators": 5, "mlr_max_iter": 100}}))
    return str(p)


@pytest.fixture
def csv_path(tmp_path, capsys):
    code, info = run(capsys, "synth", "--rows", "600", "--seed", "3",
                     "--output", str(tmp_path / "d.csv"), "--json")
    assert code == 0
    return tmp_path / "d.csv"


def test_synth_rows_and_repeatability(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    code, info = run(capsys, "synth", "--rows", "1000", "--seed", "7", "--output", str(a), "--json")
    assert code == 0 and info["rows"] == 1000
    run(capsys, "synth", "--rows", "1000", "--seed", "7", "--output", str(b), "--json")
    assert hashlib.sha256(a.read_bytes()).hexdigest() == hashlib.sha256(b.read_bytes()).hexdigest()
    assert load_csv(a).n_rows == 1000


def test_synth_zero_sigma_matches_threshold_oracle(tmp_path, capsys):
    p = tmp_path / "s.csv"
    run(capsys, "synth", "--rows", "500", "--sigma", "0", "--output", str(p), "--json")
    ds = load_csv(p)
    assert ds.y.tolist() == sf_from_snr(ds.column("SNR")).tolist()


def test_ingest_summary(csv_path, capsys):
    code, info = run(capsys, "ingest", "--dataset", str(csv_path), "--json")
    assert code == 0
    assert info["rows"] == 600 and sum(info["labels"].values()) == 600
    assert info["clean"]["rows_out"] == 600


def test_ingest_header_only_warns(tmp_path, capsys):
    p = tmp_path / "h.csv"
    p.write_text("rssi,snr,frequency,ed_height,distance,sf\n")
    code, info = run(capsys, "ingest", "--dataset", str(p), "--json")
    assert code == cli.EXIT_WARNING and info["rows"] == 0


def test_ingest_bad_mapping_names_column(csv_path, tmp_path, capsys):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"rssi_dBm": "RSSI_dBm"}))
    code, err = run(capsys, "ingest", "--dataset", str(csv_path), "--mapping", str(m), "--json")
    assert code == cli.EXIT_ERROR
    assert err["error"] == "MissingColumnError" and err["column"] == "RSSI_dBm"


def test_sweep_serial_6(csv_path, tmp_path, capsys, fast_config):
    out = tmp_path / "o"
    code, info = run(capsys, "sweep", "--config", fast_config, "--dataset", str(csv_path),
                     "--serials", "6", "--out", str(out), "--json")
    assert code == 0 and info["runs"] == 4 and info["status"] == "ok"
    rep = SweepReport.load(out / "report.json")
    assert {r.serial for r in rep.results} == {6}
    for rel in ("runs.csv", "runs.jsonl", "metadata.json", "tables/pairs.md",
                "figures/fig2.csv", "ranking.csv"):
        assert (out / rel).exists(), rel


def test_flags_override_config(csv_path, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"serials": [6], "kinds": ["DTC"], "workers": 2,
                               "dataset": str(csv_path), "out": str(tmp_path / "o1")}))
    out = tmp_path / "o2"
    code, _ = run(capsys, "sweep", "--config", str(cfg), "--serials", "5", "--out", str(out),
                  "--json")
    assert code == 0
    rep = SweepReport.load(out / "report.json")
    assert [(r.serial, r.kind) for r in rep.results] == [(5, "DTC")]
    meta = json.loads((out / "metadata.json").read_text())
    eff = meta["effective_config"]
    assert eff["serials"] == [5] and eff["workers"] == 2 and eff["kinds"] == ["DTC"]
    assert not (tmp_path / "o1").exists()


def test_synthetic_sweep_and_kinds_flag(tmp_path, capsys, fast_config):
    out = tmp_path / "o"
    code, info = run(capsys, "sweep", "--config", fast_config, "--synthetic", "--rows", "400",
                     "--serials", "1-3", "--kinds", "dtc,rf", "--out", str(out), "--json")
    assert code == 0 and info["runs"] == 6


def test_resume_after_kill_gives_same_report(csv_path, tmp_path, capsys, fast_config):
    full = tmp_path / "full"
    args = ["sweep", "--config", fast_config, "--dataset", str(csv_path), "--serials", "1-4",
            "--json"]
    code, ref = run(capsys, *args, "--out", str(full))
    assert code == 0
    # simulate a kill: keep three finished runs plus a torn line
    killed = tmp_path / "killed"
    killed.mkdir()
    lines = (full / "runs.jsonl").read_text().splitlines()
    (killed / "runs.jsonl").write_text("\n".join(lines[:3]) + "\n" + lines[3][:40])
    code, info = run(capsys, *args, "--out", str(tmp_path / "resumed"),
                     "--resume", str(killed / "runs.jsonl"))
    assert code == 0
    assert info["digest"] == ref["digest"]


def test_keep_going_exit_code(csv_path, tmp_path, capsys, monkeypatch, fast_config):
    real = sweep_mod.train

    def flaky(kind, *a, **k):
        if kind is ModelKind.KNN:
            raise RuntimeError("boom")
        return real(kind, *a, **k)

    monkeypatch.setattr(sweep_mod, "train", flaky)
    base = ["sweep", "--config", fast_config, "--dataset", str(csv_path), "--serials", "6",
            "--json"]
    code, err = run(capsys, *base, "--out", str(tmp_path / "a"))
    assert code == cli.EXIT_ERROR and err["serial"] == 6 and err["kind"] == "KNN"
    code, info = run(capsys, *base, "--keep-going", "--out", str(tmp_path / "b"))
    assert code == cli.EXIT_ERROR and info["status"] == "failed" and info["runs"] == 3
    assert (tmp_path / "b" / "report.json").exists()


def test_interrupt_writes_partial_report(csv_path, tmp_path, capsys, monkeypatch, fast_config):
    real = cli.run_sweep

    def interrupted(ds, plan, **kw):
        rep = real(ds, plan, **kw)
        rep.results = rep.results[:2]
        rep.averages = {}
        raise SweepInterrupted(rep)

    monkeypatch.setattr(cli, "run_sweep", interrupted)
    out = tmp_path / "o"
    code, info = run(capsys, "sweep", "--config", fast_config, "--dataset", str(csv_path),
                     "--serials", "6", "--out", str(out), "--json")
    assert code == cli.EXIT_INTERRUPTED and info["status"] == "interrupted"
    assert len(SweepReport.load(out / "report.json").results) == 2
    assert (out / "tables" / "pairs.csv").exists()


def test_rank(csv_path, tmp_path, capsys):
    code, info = run(capsys, "rank", "--dataset", str(csv_path), "--out", str(tmp_path), "--json")
    assert code == 0
    assert [e["rank"] for e in info["ranking"]] == [1, 2, 3, 4, 5]
    assert info["ranking"][0]["feature"] == "SNR"
    assert (tmp_path / "ranking.csv").exists() and (tmp_path / "figures" / "fig3.svg").exists()


def test_report_rerender_strict_and_partial(csv_path, tmp_path, capsys, fast_config):
    out = tmp_path / "o"
    run(capsys, "sweep", "--config", fast_config, "--dataset", str(csv_path), "--serials", "6",
        "--out", str(out), "--json")
    code, err = run(capsys, "report", "--out", str(out), "--json")
    assert code == cli.EXIT_ERROR and err["error"] == "IncompleteReportError"
    code, info = run(capsys, "report", "--out", str(out), "--partial", "--json")
    assert code == 0 and info["complete"] is False


def test_conflicting_inputs_rejected(csv_path, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": "x.csv", "synthetic": {"n_rows": 10}}))
    code, err = run(capsys, "sweep", "--config", str(cfg), "--json")
    assert code == cli.EXIT_ERROR and "exactly one" in err["message"]


def test_missing_input_and_bad_config(tmp_path, capsys):
    code, err = run(capsys, "sweep", "--json")
    assert code == cli.EXIT_ERROR and err["error"] == "ConfigError"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    code, err = run(capsys, "sweep", "--config", str(bad), "--json")
    assert code == cli.EXIT_ERROR and "unknown config keys" in err["message"]


def test_serial_list_parsing():
    assert cli._int_list("1-3,6,31") == [1, 2, 3, 6, 31]
    assert cli._kind_list("k-nn,RF") == ["KNN", "RF"]
