import os

import numpy as np
import pytest

from nelab import experiments as ex
from nelab import integrands as ig


SMOKE = {
    "double_phase_dichotomy": dict(mesh_levels=(17, 25, 33),
                                   parameters={"points_per_regime": 1}),
    "variable_exponent_log": dict(mesh_levels=(17, 25, 33)),
    "lavrentiev_detect": dict(mesh_levels=(25, 33, 49)),
    "potential_estimate": dict(mesh_levels=(33, 49, 65),
                               parameters={"grid_n": 65}),
    "stein_sweep": dict(mesh_levels=(17, 25, 33)),
    "caccioppoli_suite": dict(parameters={"grid_n": 33, "kappa_count": 4,
                                          "ball_count": 4}),
    "fractional_suite": dict(parameters={"grid_n": 25, "fields": 6}),
    "moser_reference": dict(parameters={"grid_n": 33}),
    "lemma_suite": dict(parameters={"grid_n": 25, "de_giorgi": 4, "moser": 4,
                                    "hole_filling": 4, "embedding": 3,
                                    "sup_potential": 3}),
    "exp_growth_probe": dict(parameters={"samples": 400}),
}


def smoke_scenario(sid, seed=0):
    cfg = SMOKE[sid]
    return ex.Scenario(sid, seed=seed, mesh_levels=cfg.get("mesh_levels", (33, 65, 129)),
                       parameters=cfg.get("parameters", {}))


def test_scenario_validation():
    with pytest.raises(ValueError):
        ex.Scenario("unknown_thing")
    with pytest.raises(ValueError):
        ex.Scenario("lemma_suite", mesh_levels=(65, 33))


@pytest.mark.parametrize("sid", ex.SCENARIO_IDS)
def test_smoke_scenarios_pass(sid):
    records, plotrows = ex.run_scenario(smoke_scenario(sid))
    assert records, "every scenario must produce records"
    failed = [(r.case_id, name) for r in records
              for name, ok in r.assertions.items() if not ok]
    assert failed == []
    # one record per sweep point, never silently dropped
    assert all(r.case_id for r in records)


def test_dichotomy_verdicts_consistent():
    records, _ = ex.run_scenario(smoke_scenario("double_phase_dichotomy"))
    for rec in records:
        rep = ig.classify_regime(2, rec.params["p"], rec.params["q"],
                                 rec.params["alpha"], family="DoublePhase")
        assert rec.verdict == rep.verdict


def test_emit_report_files(tmp_path):
    records, plotrows = ex.run_scenario(smoke_scenario("exp_growth_probe"))
    failures = ex.emit_report(records, plotrows, "exp_growth_probe", tmp_path)
    assert failures == 0
    recs = (tmp_path / "records.csv").read_text().splitlines()
    assert recs[0] == "# schema: records-v1"
    assert recs[1] == "scenario,case_id,params,verdict,kind,name,value,passed"
    assert len(recs) > 3
    plot = (tmp_path / "plotdata_exp_growth_probe.csv").read_text().splitlines()
    assert plot[0].startswith("# schema: plotdata-")
    assert os.path.exists(tmp_path / "plot_exp_growth_probe.png")


def test_emit_report_empty_and_counts(tmp_path):
    failures = ex.emit_report([], [], "lemma_suite", tmp_path, figures=False)
    assert failures == 0
    recs = (tmp_path / "records.csv").read_text().splitlines()
    assert len(recs) == 2  # schema + header only
    rec = ex.SweepRecord("lemma_suite", "one", {"a": 1.0})
    rec.metrics["x"] = 1.0
    rec.assertions["ok"] = False
    failures = ex.emit_report([rec], [dict(case_id="one", lhs=1.0, rhs=2.0)],
                              "lemma_suite", tmp_path, figures=False)
    assert failures == 1
    assert len((tmp_path / "records.csv").read_text().splitlines()) == 4


def test_determinism_byte_identical(tmp_path):
    sc1 = smoke_scenario("lemma_suite", seed=3)
    sc2 = smoke_scenario("lemma_suite", seed=3)
    r1, p1 = ex.run_scenario(sc1)
    r2, p2 = ex.run_scenario(sc2)
    ex.emit_report(r1, p1, "lemma_suite", tmp_path / "a", figures=False)
    ex.emit_report(r2, p2, "lemma_suite", tmp_path / "b", figures=False)
    a = (tmp_path / "a" / "records.csv").read_bytes()
    b = (tmp_path / "b" / "records.csv").read_bytes()
    assert a == b
    pa = (tmp_path / "a" / "plotdata_lemma_suite.csv").read_bytes()
    pb = (tmp_path / "b" / "plotdata_lemma_suite.csv").read_bytes()
    assert pa == pb


def test_worker_count_does_not_change_records(tmp_path, monkeypatch):
    sc = smoke_scenario("double_phase_dichotomy")
    r1, p1 = ex.run_scenario(sc)
    monkeypatch.setenv("NELAB_WORKERS", "3")
    r2, p2 = ex.run_scenario(smoke_scenario("double_phase_dichotomy"))
    ex.emit_report(r1, p1, sc.id, tmp_path / "serial", figures=False)
    ex.emit_report(r2, p2, sc.id, tmp_path / "parallel", figures=False)
    assert ((tmp_path / "serial" / "records.csv").read_bytes()
            == (tmp_path / "parallel" / "records.csv").read_bytes())


def test_module_refusal_becomes_failed_record(monkeypatch):
    from nelab.iterate import HypothesisError

    def boom(sc):
        raise HypothesisError("synthetic refusal")

    monkeypatch.setitem(ex.SCENARIOS, "lemma_suite", boom)
    records, plotrows = ex.run_scenario(ex.Scenario("lemma_suite"))
    assert len(records) == 1 and not records[0].passed()
    assert "synthetic refusal" in records[0].params["message"]


def test_lemma_plotdata_column_order(tmp_path):
    records, plotrows = ex.run_scenario(smoke_scenario("lemma_suite"))
    path = tmp_path / "plotdata_lemma_suite.csv"
    ex.write_plotdata_csv(plotrows, "lemma_suite", path)
    header = path.read_text().splitlines()[1]
    assert header == "lemma,case_id,lhs,rhs,ratio,pass"


def test_scenario_text_roundtrip():
    text = """\
[scenario]
id = stein_sweep
seed = 5
mesh_levels = 17 25 33
[parameters]
p = 2.5
"""
    sc = ex.scenario_from_text(text)
    assert sc.id == "stein_sweep" and sc.seed == 5
    assert sc.mesh_levels == (17, 25, 33)
    assert sc.parameters["p"] == 2.5


def test_radial_lorentz_finite_flags():
    assert ex.radial_lorentz_finite(0.0, 0.0)
    assert ex.radial_lorentz_finite(0.5, 0.0)
    assert ex.radial_lorentz_finite(1.0, 2.0)
    assert not ex.radial_lorentz_finite(1.0, 1.0)
    assert not ex.radial_lorentz_finite(1.5, 3.0)


def test_ladder_prefactor_exponent():
    assert ex.ladder_prefactor_exponent(2, 2.0, 2.0) == pytest.approx(0.5)
    assert ex.ladder_prefactor_exponent(3, 2.0, 2.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ex.ladder_prefactor_exponent(2, 2.0, 3.5)


def test_fixture_regression():
    """Frozen smoke outputs; field-wise comparison at 1e-9 on floats."""
    fixdir = os.path.join(os.path.dirname(__file__), "fixtures")
    names = sorted(os.listdir(fixdir))
    assert len(names) == 12
    for name in names:
        sid, seed = name.rsplit("_seed", 1)
        seed = int(seed.split(".")[0])
        records, _ = ex.run_scenario(smoke_scenario(sid, seed=seed))
        import io

        buf = io.StringIO()
        rows = []
        for rec in records:
            base = (rec.scenario, rec.case_id, ex._params_str(rec.params), rec.verdict)
            for nm in sorted(rec.metrics):
                rows.append(base + ("metric", nm, ex._fmt(rec.metrics[nm]), ""))
            for nm in sorted(rec.assertions):
                rows.append(base + ("assertion", nm, "", ex._fmt(rec.assertions[nm])))
        rows.sort()
        with open(os.path.join(fixdir, name)) as fh:
            frozen = [ln.rstrip("\n").split(",") for ln in fh
                      if not ln.startswith("#") and not ln.startswith("scenario,")]
        assert len(frozen) == len(rows), name
        for got, want in zip(rows, frozen):
            got = [str(c) for c in got]
            for gc, wc in zip(got, want):
                try:
                    assert abs(float(gc) - float(wc)) <= 1e-9 * (1 + abs(float(wc)))
                except ValueError:
                    assert gc == wc, name
