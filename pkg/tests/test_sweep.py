from dataclasses import replace

import pytest

from sfselect import sweep as sweep_mod
from sfselect.data import SyntheticConfig, generate_synthetic
from sfselect.features import CATALOG
from sfselect.metrics import EvalResult
from sfselect.models import Hyperparams, ModelKind
from sfselect.report import format_pct
from sfselect.sweep import (SweepError, SweepInterrupted, SweepPlan, SweepReport,
                            aggregate_averages, run_seed, run_sweep)

FAST = Hyperparams(rf_n_estimators=8, mlr_max_iter=200)


@pytest.fixture(scope="module")
def ds():
    return generate_synthetic(SyntheticConfig(n_rows=800, seed=21))


@pytest.fixture(scope="module")
def small_report(ds):
    return run_sweep(ds, SweepPlan(serials=(2, 3, 6), hyperparams=FAST))


def _result(serial, kind, acc, f1=None):
    return EvalResult(serial=serial, label=CATALOG[serial].label, kind=kind, accuracy=acc,
                      f1_weighted=acc if f1 is None else f1, f1_macro=0.0, per_class=(),
                      confusion=None, n_train=0, n_test=0, run_seed=0, run_key="",
                      partition_hash="")


def test_default_plan_has_124_runs():
    plan = SweepPlan()
    assert len(plan) == 124 == len(plan.runs)


def test_plan_validation():
    with pytest.raises(KeyError):
        SweepPlan(serials=(32,))
    with pytest.raises(ValueError):
        SweepPlan(kinds=())
    with pytest.raises(ValueError):
        SweepPlan(workers=0)
    assert SweepPlan(kinds=("rf", "knn")).kinds == (ModelKind.KNN, ModelKind.RF)


def test_serial_6_only_gives_four_results(ds):
    rep = run_sweep(ds, SweepPlan(serials=(6,), hyperparams=FAST))
    assert len(rep.results) == 4
    assert {r.serial for r in rep.results} == {6}
    assert [r.kind for r in rep.results] == ["KNN", "DTC", "MLR", "RF"]


def test_result_count_and_shared_partition(small_report):
    assert len(small_report.results) == 3 * 4
    assert len({r.partition_hash for r in small_report.results}) == 1
    assert small_report.results[0].partition_hash == small_report.metadata["partition_hash"]
    assert len({r.n_train for r in small_report.results}) == 1


def test_averages_are_means_of_four(small_report):
    for serial, (acc, f1) in small_report.averages.items():
        rs = [r for r in small_report.results if r.serial == serial]
        assert len(rs) == 4
        assert abs(acc - sum(r.accuracy for r in rs) / 4) <= 1e-12
        assert abs(f1 - sum(r.f1_weighted for r in rs) / 4) <= 1e-12


def test_aggregate_examples():
    kinds = ["KNN", "MLR", "DTC", "RF"]
    assert aggregate_averages([_result(1, k, 0.5) for k in kinds]) == {1: (0.5, 0.5)}
    row6 = [_result(6, k, v) for k, v in zip(kinds, (0.6443, 0.5969, 0.6623, 0.6621))]
    assert format_pct(aggregate_averages(row6)[6][0]) == "64.14"
    row31 = [_result(31, k, v) for k, v in zip(kinds, (0.6648, 0.6033, 0.6804, 0.6805))]
    avg = aggregate_averages(row31)[31][0]
    assert avg == pytest.approx(0.65725, abs=1e-15)
    assert format_pct(avg) == "65.73"


def test_aggregate_missing_kind_raises():
    with pytest.raises(ValueError, match="lacks"):
        aggregate_averages([_result(1, k, 0.5) for k in ["KNN", "MLR", "DTC"]])
    with pytest.raises(ValueError, match="duplicate"):
        aggregate_averages([_result(1, "KNN", 0.5)] * 2)


def test_run_seeds_are_independent_of_plan(ds):
    a = run_sweep(ds, SweepPlan(serials=(6,), kinds=("RF",), hyperparams=FAST))
    b = run_sweep(ds, SweepPlan(serials=(5, 6), kinds=("DTC", "RF"), hyperparams=FAST))
    ra, rb = a.result(6, "RF"), b.result(6, "RF")
    assert ra.run_seed == rb.run_seed == run_seed(42, 6, ModelKind.RF)
    assert ra.to_dict(timing=False) == rb.to_dict(timing=False)


def test_run_seeds_differ_per_run():
    seeds = {run_seed(42, s, k) for s in range(1, 32) for k in ModelKind}
    assert len(seeds) == 124
    assert all(0 <= s < 2**63 for s in seeds)


def test_worker_count_does_not_change_report(ds, small_report):
    par = run_sweep(ds, SweepPlan(serials=(2, 3, 6), hyperparams=FAST, workers=4))
    assert par.canonical_json() == small_report.canonical_json()
    assert par.metadata["runtime"]["workers"] == 4


def test_report_json_round_trip(tmp_path, small_report):
    p = tmp_path / "r.json"
    small_report.save(p)
    back = SweepReport.load(p)
    assert back.digest() == small_report.digest()
    assert back.to_json() == small_report.to_json()


def test_canonical_json_excludes_timing(small_report):
    text = small_report.canonical_json()
    assert '"seconds"' not in text and '"runtime"' not in text
    assert '"seconds"' in small_report.to_json()


def test_resume_reuses_matching_runs(ds, small_report):
    plan = SweepPlan(serials=(2, 3, 6), hyperparams=FAST)
    calls = []
    partial = small_report.results[:5]
    rep = run_sweep(ds, plan, resume=partial, on_result=calls.append)
    assert len(calls) == 12 - 5
    assert rep.digest() == small_report.digest()


def test_resume_ignores_runs_with_other_settings(ds, small_report):
    plan = SweepPlan(serials=(2, 3, 6), hyperparams=replace(FAST, rf_n_estimators=9))
    calls = []
    run_sweep(ds, plan, resume=small_report.results, on_result=calls.append)
    assert len(calls) == 12


def test_failure_aborts_with_run_identified(ds, monkeypatch):
    real = sweep_mod.train

    def flaky(kind, *a, **k):
        if kind is ModelKind.MLR:
            raise RuntimeError("boom")
        return real(kind, *a, **k)

    monkeypatch.setattr(sweep_mod, "train", flaky)
    with pytest.raises(SweepError) as err:
        run_sweep(ds, SweepPlan(serials=(4,), hyperparams=FAST))
    assert (err.value.serial, err.value.kind) == (4, "MLR")

    rep = run_sweep(ds, SweepPlan(serials=(4, 5), hyperparams=FAST, keep_going=True))
    assert [(f["serial"], f["kind"]) for f in rep.failures] == [(4, "MLR"), (5, "MLR")]
    assert len(rep.results) == 6
    assert rep.averages == {}
    assert not rep.complete


def test_interrupt_returns_partial_report(ds):
    seen = []

    def stop_after_two(r):
        seen.append(r)
        if len(seen) == 2:
            raise KeyboardInterrupt

    with pytest.raises(SweepInterrupted) as err:
        run_sweep(ds, SweepPlan(serials=(1, 2, 3), hyperparams=FAST), on_result=stop_after_two)
    rep = err.value.report
    assert rep.metadata["interrupted"] is True
    assert len(rep.results) >= 2
    assert len(rep.results) < 12


def test_requires_all_five_features(ds):
    from sfselect.data import Dataset, MissingColumnError
    part = Dataset(ds.columns[:4], ds.X[:, :4], ds.y)
    with pytest.raises(MissingColumnError):
        run_sweep(part, SweepPlan(serials=(1,)))


def test_metadata_fields(small_report):
    m = small_report.metadata
    for key in ("dataset_hash", "partition_hash", "base_seed", "standardize", "software",
                "split_convention", "hyperparams"):
        assert key in m
    assert m["software"]["name"] == "sfselect"


def test_csv_rows(small_report):
    rows = small_report.to_csv_rows()
    assert rows[0] == ["serial", "label", "kind", "accuracy", "f1_weighted", "k", "seconds"]
    assert len(rows) == 13
    knn = [r for r in rows[1:] if r[2] == "KNN"]
    assert all(isinstance(r[5], int) for r in knn)


def test_snr_combinations_beat_frequency_for_every_kind():
    # with standardized inputs every kind separates SNR-bearing sets from
    # frequency alone; raw-scale MLR is covered by the averaged acceptance check
    data = generate_synthetic(SyntheticConfig(n_rows=3000, seed=7))
    snr = [fs.serial for fs in CATALOG if "SNR" in fs.names]
    hp = Hyperparams(standardize=True, rf_n_estimators=20)
    rep = run_sweep(data, SweepPlan(serials=tuple(snr) + (3,), hyperparams=hp))
    for kind in ModelKind:
        base = rep.result(3, kind).accuracy
        for s in snr:
            assert rep.result(s, kind).accuracy > base, (s, kind)
