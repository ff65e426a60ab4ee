import numpy as np
import pytest

from ccaedge import detectors as det
from ccaedge import harness
from ccaedge.errors import ScenarioError
from ccaedge.harness import Scenario, SyncConfig
from ccaedge.signal import real_to_complex_unstack


def small(**kw):
    base = dict(scenario_id="t", m_antennas=(6, 6), k_users=(3, 3), k_edge=(1, 1), t_symbols=60,
                snr_grid_db=(0.0, 10.0), trials=3, seed=11, detectors=("cca_racma", "zf_sic"))
    base.update(kw)
    return Scenario(**base)


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_file_gives_defaults(tmp_path):
    assert harness.load_scenario(write(tmp_path, "")) == Scenario()
    sc = Scenario()
    assert (sc.cell_radius_m, sc.tx_power_dbm, sc.t_symbols, sc.trials) == (500.0, 25.0, 800, 1000)
    assert (sc.carrier_ghz, sc.l_paths, sc.edge_band) == (2.0, 8, (0.95, 1.05))


def test_k_edge_must_be_below_k_users(tmp_path):
    with pytest.raises(ScenarioError, match=r"k_edge\[0\]=3 must be < k_users\[0\]=3"):
        harness.load_scenario(write(tmp_path, "k_users = [3, 3]\nk_edge = [3, 1]\n"))


@pytest.mark.parametrize("text,match", [
    ("antennas = 3\n", "unknown key 'antennas'"),
    ("trials = 0\n", "trials must be >= 1"),
    ("trials = 2.5\n", "trials: expected int"),
    ("snr_grid_db = []\n", "non-empty"),
    ("detectors = ['cca_racma', 'magic']\n", "unknown detectors"),
    ("center_spread_z = 1.5\n", "center_spread_z"),
    ("m_antennas = [1, 2, 3]\n", "expected 2 values"),
    ("[sync]\nwindow = [0, 3]\n", "t_tilde is required"),
    ("[sync]\nt_tilde = 830\nwindow = [0, 40]\n", "sync.window"),
    ("[sync]\nt_tilde = 830\nfoo = 1\n", "unknown keys"),
    ("[sweep]\nseed = [1, 2]\n", "cannot be swept"),
    ("[sweep]\nk_users = [2, 3]\nm_antennas = [4]\n", "exactly one key"),
    ("snr_reference = 'peak'\n", "snr_reference"),
    ("trials = \n", "s.toml"),
])
def test_invalid_files_name_the_problem(tmp_path, text, match):
    with pytest.raises(ScenarioError, match=match):
        harness.load_scenario(write(tmp_path, text))


def test_sweep_values_are_validated(tmp_path):
    with pytest.raises(ScenarioError, match="k_edge"):
        harness.load_scenario(write(tmp_path, "k_edge = 1\n[sweep]\nk_users = [1, 4]\n"))


def test_scalar_broadcast_for_pairs(tmp_path):
    sc = harness.load_scenario(write(tmp_path, "m_antennas = 12\nk_users = 5\nk_edge = [1, 0]\n"))
    assert sc.m_antennas == (12, 12) and sc.k_users == (5, 5) and sc.n_edge == 1


def test_presets():
    names = harness.preset_names()
    assert names == ["fig2", "fig3", "fig4", "fig5", "fig6a", "fig6b", "fig7"]
    fig2 = harness.load_scenario("fig2")
    assert fig2.m_antennas == (10, 10) and fig2.k_users == (8, 8) and fig2.k_edge == (1, 1)
    assert fig2.center_spread_z == 0.3 and fig2.t_symbols == 800 and fig2.n_edge == 2
    assert harness.load_scenario("fig3").m_antennas == (20, 20)
    assert harness.load_scenario("fig7").sync == SyncConfig(t_tilde=830)
    assert harness.load_scenario("fig5").sweep[0] == "k_users"
    for n in names:
        assert harness.load_scenario(n).scenario_id == n
    with pytest.raises(ScenarioError, match="no preset"):
        harness.load_scenario("fig9")


def test_missing_file():
    with pytest.raises(ScenarioError, match="cannot read"):
        harness.load_scenario("/nonexistent/x.toml")


def test_scenario_dict_round_trip():
    for n in harness.preset_names():
        sc = harness.load_scenario(n)
        d = harness.scenario_to_dict(sc)
        d = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        if "sweep" in d:
            name, vals = next(iter(d["sweep"].items()))
            d["sweep"] = {name: [list(v) if isinstance(v, tuple) else v for v in vals]}
        assert harness.parse_scenario(d) == sc


def test_bits_total_for_fig2():
    sc = harness.with_overrides(harness.load_scenario("fig2"), detectors=("cca_racma", "zf_sic"))
    recs = harness.run_trial(sc, 6.0, 0)
    assert [r.detector_id for r in recs] == ["cca_racma", "zf_sic"]
    assert all(r.bits_total == 1600 and r.bit_errors <= r.bits_total for r in recs)
    assert len(recs[0].aux["rho"]) == 2


def test_run_trial_is_deterministic():
    sc = small()
    a, b = harness.run_trial(sc, 4.0, 2), harness.run_trial(sc, 4.0, 2)
    assert [(r.bit_errors, r.detector_id) for r in a] == [(r.bit_errors, r.detector_id) for r in b]
    assert harness.realize(sc, 2).digest() == harness.realize(sc, 2).digest()
    assert harness.realize(sc, 2).digest() != harness.realize(sc, 3).digest()


def test_detectors_see_identical_blocks(monkeypatch):
    seen = {}
    real_cca, real_zf = det.detect_cca_racma, det.zf_sic_edge_detect

    def cca(y1, y2, k_e, *a, **kw):
        seen["cca"] = (real_to_complex_unstack(y1), real_to_complex_unstack(y2))
        return real_cca(y1, y2, k_e, *a, **kw)

    def zf(y1, y2, *a, **kw):
        seen["zf"] = (y1, y2)
        return real_zf(y1, y2, *a, **kw)

    monkeypatch.setattr(det, "detect_cca_racma", cca)
    monkeypatch.setattr(det, "zf_sic_edge_detect", zf)
    harness.run_trial(small(), 4.0, 0)
    for a, b in zip(seen["cca"], seen["zf"]):
        np.testing.assert_array_equal(a, b)


def test_best_of_variant_is_flagged():
    recs = harness.run_trial(small(detectors=("zf_sic", "zf_sic_best")), 10.0, 0)
    assert recs[1].aux["oracle_selected"] is True
    assert recs[1].bit_errors <= recs[0].bits_total


def test_ml_sic_cap_is_enforced():
    with pytest.raises(Exception, match="max_enum_users"):
        harness.run_trial(small(detectors=("ml_sic",), ml_max_users=1), 4.0, 0)


def test_failures_are_counted(monkeypatch):
    from ccaedge.errors import NonIdentifiableError

    def boom(*a, **kw):
        raise NonIdentifiableError("rank")

    monkeypatch.setattr(det, "detect_cca_racma", boom)
    rows = harness.run_experiment(small())
    cca = [r for r in rows if r.detector == "cca_racma"]
    assert all(r.trials == 0 and r.failures == 3 and r.bits_total == 0 and r.ber == 0.0 for r in cca)


def test_run_experiment_rows():
    rows = harness.run_experiment(small(trials=1))
    assert [(r.snr_db, r.detector) for r in rows] == [
        (0.0, "cca_racma"), (0.0, "zf_sic"), (10.0, "cca_racma"), (10.0, "zf_sic")]
    for r in rows:
        assert r.trials == 1 and r.bits_total == 120
        assert r.ber == r.bit_errors / r.bits_total
        assert r.wall_time_s == 0.0
    assert np.isnan(rows[1].mean_rho1) and 0 < rows[0].mean_rho1 <= 1


def test_sweep_expansion():
    sc = small(sweep=("center_spread_z", (0.1, 0.4)), trials=1, snr_grid_db=(5.0,))
    ids = [r.scenario_id for r in harness.run_experiment(sc)]
    assert ids == ["t[center_spread_z=0.1]"] * 2 + ["t[center_spread_z=0.4]"] * 2
    pts = harness.expand_sweep(small(sweep=("k_users", ((4, 4), (5, 5)))))
    assert [p.scenario_id for p in pts] == ["t[k_users=4/4]", "t[k_users=5/5]"]


def test_csv_format_and_round_trip(tmp_path):
    rows = harness.run_experiment(small())
    path = tmp_path / "out.csv"
    harness.emit_csv(rows[:1], path)
    text = path.read_bytes()
    assert text.count(b"\n") == 2 and b"\r" not in text
    assert text.startswith(b"scenario_id,snr_db,detector,trials,bit_errors,bits_total,ber,mean_rho1,wall_time_s\n")
    harness.emit_csv(rows, path)
    back = harness.read_csv(path)
    assert len(back) == len(rows)
    for a, b in zip(back, rows):
        assert a.ber == b.ber and a.bit_errors == b.bit_errors and a.snr_db == b.snr_db
        assert a.scenario_id == b.scenario_id and a.detector == b.detector
        assert a.mean_rho1 == b.mean_rho1 or (np.isnan(a.mean_rho1) and np.isnan(b.mean_rho1))
    with pytest.raises(ValueError):
        harness.emit_csv([], path)
    with pytest.raises(OSError, match="cannot write"):
        harness.emit_csv(rows, tmp_path / "missing" / "x.csv")


def test_plotdata(tmp_path):
    rows = harness.run_experiment(small(trials=1))
    path = tmp_path / "p.dat"
    harness.emit_plotdata(rows, path)
    blocks = [b for b in path.read_text().split("\n\n\n") if b.strip()]
    assert len(blocks) == 2
    assert blocks[0].startswith("# detector cca_racma")
    assert len(blocks[0].strip().splitlines()) == 4


def test_csv_identical_across_workers():
    sc = small(trials=6)
    one = harness._csv_text(harness.run_experiment(sc, workers=1))
    two = harness._csv_text(harness.run_experiment(sc, workers=2))
    assert one == two


def test_timing_fills_wall_time():
    rows = harness.run_experiment(small(trials=1), timing=True)
    assert all(r.wall_time_s > 0 for r in rows)


def test_sync_scenario_records_delay():
    sc = small(sync=SyncConfig(t_tilde=70), snr_grid_db=(10.0,), t_symbols=60, m_antennas=(8, 8))
    rec = harness.run_trial(sc, 10.0, 0)[0]
    assert 0 <= rec.aux["tau_true"] <= 10 and "tau_star" in rec.aux
    rz = harness.realize(harness.with_overrides(sc, sync=SyncConfig(t_tilde=70, delay=4)), 0)
    assert rz.delay == 4
    with pytest.raises(ScenarioError):
        harness.sync_trace_for(small(), harness.realize(small(), 0), 0.0)
