import json

import numpy as np
import pytest

from heavyvar.dependence import solve_lyapunov
from heavyvar.exceptions import DimensionError, ParameterError
from heavyvar.experiments import (
    CONCENTRATION_HEADER,
    FIGSW_HEADER,
    LS_CELLS,
    LS_TABLES_HEADER,
    ConcentrationReport,
    ExperimentConfig,
    emit_results,
    read_results,
    run_concentration,
    run_figsw,
    run_ls_tables,
)
from heavyvar.model import VarModel, build_design
from heavyvar.sampling import (
    NoiseSpec,
    TransitionGenSpec,
    gen_sparse_transition,
    simulate_var,
)


class TestExperimentConfig:
    def test_figsw_defaults(self):
        cfg = ExperimentConfig(experiment="figsw")
        assert cfg.p_list == (30, 50, 100)
        assert cfg.gamma2_list == (0.5, 1.0, 2.0)
        assert cfg.m_list == (1, 3, 5, 7, 9, 13, 15, 17, 19)
        assert cfg.replications == 30
        assert cfg.rho_target == 0.5

    def test_p150_flag(self):
        cfg = ExperimentConfig(experiment="figsw", include_p150=True)
        assert cfg.p_list[-1] == 150

    def test_ls_defaults(self):
        cfg = ExperimentConfig(experiment="ls_tables")
        assert cfg.p_list == (10, 30)
        assert cfg.gamma2_list == (2.0, 1.0, 0.5)
        assert cfg.replications == 20
        assert cfg.rho_target == 0.7

    def test_concentration_defaults(self):
        cfg = ExperimentConfig(experiment="concentration")
        assert cfg.m_list == (200, 800)
        assert cfg.replications == 1000

    def test_bad_experiment(self):
        with pytest.raises(ParameterError):
            ExperimentConfig(experiment="nope")

    def test_small_p_rejected(self):
        with pytest.raises(ParameterError):
            ExperimentConfig(experiment="figsw", p_list=(1,))

    def test_bad_rho_rejected(self):
        with pytest.raises(ParameterError):
            ExperimentConfig(experiment="figsw", rho_target=1.5)

    def test_from_dict_unknown_key(self):
        with pytest.raises(ParameterError):
            ExperimentConfig.from_dict({"experiment": "figsw", "bogus": 1})

    def test_from_dict_requires_experiment(self):
        with pytest.raises(ParameterError):
            ExperimentConfig.from_dict({"p_list": [10]})

    def test_from_dict_round_trip(self):
        cfg = ExperimentConfig.from_dict(
            {"experiment": "figsw", "p_list": [8], "replications": 5})
        assert cfg.p_list == (8,)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_hash_ignores_execution_knobs(self):
        a = ExperimentConfig(experiment="figsw", threads=1)
        b = ExperimentConfig(experiment="figsw", threads=8,
                             output_path="other.csv")
        assert a.config_hash() == b.config_hash()

    def test_hash_tracks_grid(self):
        a = ExperimentConfig(experiment="figsw")
        b = ExperimentConfig(experiment="figsw", p_list=(8,))
        assert a.config_hash() != b.config_hash()


@pytest.fixture(scope="module")
def figsw_rows():
    cfg = ExperimentConfig(experiment="figsw", p_list=(8,), gamma2_list=(2.0,),
                           m_list=(3,), replications=3, base_seed=5)
    return cfg, run_figsw(cfg)


class TestFigsw:
    def test_row_shape(self, figsw_rows):
        _, rows = figsw_rows
        assert len(rows) == 1
        assert tuple(rows[0].keys()) == FIGSW_HEADER

    def test_sample_size_rule(self, figsw_rows):
        _, rows = figsw_rows
        s = round(np.sqrt(8))
        assert rows[0]["n"] == round(3 * s * np.log(8))

    def test_errors_finite(self, figsw_rows):
        _, rows = figsw_rows
        assert rows[0]["mean_err"] > 0
        assert rows[0]["std_err"] >= 0
        assert np.isfinite(rows[0]["mean_err"])

    def test_deterministic_rerun(self, figsw_rows):
        cfg, rows = figsw_rows
        assert run_figsw(cfg) == rows

    def test_thread_count_invariant(self, figsw_rows, tmp_path):
        cfg, rows = figsw_rows
        threaded = ExperimentConfig(experiment="figsw", p_list=(8,),
                                    gamma2_list=(2.0,), m_list=(3,),
                                    replications=3, base_seed=5, threads=4)
        rows_t = run_figsw(threaded)
        a = tmp_path / "one.csv"
        b = tmp_path / "four.csv"
        emit_results(rows, a, "csv", header=FIGSW_HEADER, config=cfg)
        emit_results(rows_t, b, "csv", header=FIGSW_HEADER, config=threaded)
        assert a.read_bytes() == b.read_bytes()

    def test_wrong_config_rejected(self):
        cfg = ExperimentConfig(experiment="ls_tables")
        with pytest.raises(ParameterError):
            run_figsw(cfg)


class TestLsTables:
    def test_unknown_cell_rejected(self):
        cfg = ExperimentConfig(experiment="ls_tables", p_list=(12,),
                               replications=2)
        with pytest.raises(ParameterError):
            run_ls_tables(cfg)

    def test_rows_and_methods(self):
        cfg = ExperimentConfig(experiment="ls_tables", p_list=(10,),
                               gamma2_list=(2.0,), replications=2, base_seed=9)
        rows = run_ls_tables(cfg)
        assert len(rows) == len(LS_CELLS[10]) * 3
        assert all(tuple(r.keys()) == LS_TABLES_HEADER for r in rows)
        for n_obs in LS_CELLS[10]:
            methods = {r["method"] for r in rows if r["n"] == n_obs}
            assert methods == {"ols", "lasso", "ls"}
        assert all(r["rel_err"] >= 0 and r["pred_err"] >= 0 for r in rows)


class TestConcentrationValidation:
    def test_too_few_replications(self):
        with pytest.raises(ParameterError):
            run_concentration(ExperimentConfig(
                experiment="concentration", replications=50))

    def test_large_p_rejected(self):
        with pytest.raises(ParameterError):
            run_concentration(ExperimentConfig(
                experiment="concentration", p_list=(25,)))

    def test_probs_must_be_probabilities(self):
        t = np.array([0.0, 0.5, 1.0])
        with pytest.raises(ParameterError):
            ConcentrationReport(t_grid=t,
                                empirical_tail_prob=np.array([1.0, 0.5, 1.1]),
                                bound_value=np.ones(3), n=10, p=2, gamma2=2.0,
                                c_factor=1.0)

    def test_probs_must_decrease(self):
        t = np.array([0.0, 0.5, 1.0])
        with pytest.raises(ParameterError):
            ConcentrationReport(t_grid=t,
                                empirical_tail_prob=np.array([0.5, 0.9, 0.1]),
                                bound_value=np.ones(3), n=10, p=2, gamma2=2.0,
                                c_factor=1.0)

    def test_grid_mismatch(self):
        with pytest.raises(DimensionError):
            ConcentrationReport(t_grid=np.array([0.0, 1.0]),
                                empirical_tail_prob=np.array([1.0, 0.5, 0.0]),
                                bound_value=np.ones(3), n=10, p=2, gamma2=2.0,
                                c_factor=1.0)


@pytest.fixture(scope="module")
def concentration_reports():
    cfg = ExperimentConfig(experiment="concentration", p_list=(4,),
                           gamma2_list=(2.0,), m_list=(200,),
                           replications=1000, base_seed=3)
    return cfg, run_concentration(cfg)


class TestConcentration:
    def test_quantities_present(self, concentration_reports):
        _, reports = concentration_reports
        assert {r.quantity for r in reports} == {"gram", "cross"}

    def test_tail_endpoints(self, concentration_reports):
        _, reports = concentration_reports
        for r in reports:
            emp = np.asarray(r.empirical_tail_prob)
            assert emp[0] == 1.0
            assert emp[-1] == 0.0

    def test_calibrated_bound_majorizes(self, concentration_reports):
        _, reports = concentration_reports
        for r in reports:
            assert np.all(np.asarray(r.bound_calibrated)
                          >= np.asarray(r.empirical_tail_prob))

    def test_long_rows(self, concentration_reports):
        _, reports = concentration_reports
        rows = reports[0].rows()
        assert len(rows) == np.asarray(reports[0].t_grid).size
        assert tuple(rows[0].keys()) == CONCENTRATION_HEADER


class TestDependenceInflatesDeviations:
    def test_strong_dependence_dominates(self):
        # same support pattern rescaled to two radii; the raw Gram deviation
        # tails of the rho=0.9 process sit above the rho=0.1 ones pointwise
        p, n, reps = 5, 150, 500
        rng0 = np.random.default_rng(11)
        u = rng0.standard_normal(p)
        u /= np.linalg.norm(u)
        noise = NoiseSpec(gamma2=2.0, scale=1.0, p=p)
        tails = {}
        for rho in (0.1, 0.9):
            B = gen_sparse_transition(
                TransitionGenSpec(p=p, s=3, target_rho=rho, seed=11))
            model = VarModel(coeffs=(B,))
            sig = solve_lyapunov(B, np.eye(p))
            vals = []
            for r in range(reps):
                traj = simulate_var(
                    model, noise, T=n, burn_in=200,
                    rng=np.random.default_rng([11, int(rho * 10), r]))
                reg = build_design(traj, 1)
                vals.append(abs(float(u @ (reg.X.T @ reg.X / n - sig) @ u)))
            values = np.asarray(vals)
            taus = np.geomspace(3e-3, 1.0, 8)
            tails[rho] = np.asarray([np.mean(values > t) for t in taus])
        assert np.all(tails[0.9] >= tails[0.1])
        assert np.any(tails[0.9] > tails[0.1] + 0.2)


class TestEmitResults:
    def _rows(self):
        return [{"p": 8, "gamma2": 2.0, "m": 3, "n": 18,
                 "mean_err": 0.5, "std_err": 0.125},
                {"p": 8, "gamma2": 0.5, "m": 3, "n": 18,
                 "mean_err": 1.0 / 3.0, "std_err": 0.25}]

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_results(self._rows(), path, "csv", header=FIGSW_HEADER)
        back = read_results(path)
        assert back == self._rows()

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "out.json"
        cfg = ExperimentConfig(experiment="figsw", p_list=(8,))
        emit_results(self._rows(), path, "json", header=FIGSW_HEADER,
                     config=cfg)
        back = read_results(path)
        for orig, parsed in zip(self._rows(), back):
            for k, v in orig.items():
                assert parsed[k] == v
            assert parsed["config_hash"] == cfg.config_hash()

    def test_figsw_header_exact(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_results(self._rows(), path, "csv", header=FIGSW_HEADER)
        assert path.read_text().splitlines()[0] == "p,gamma2,m,n,mean_err,std_err"

    def test_json_mirror_written(self, tmp_path):
        path = tmp_path / "out.csv"
        cfg = ExperimentConfig(experiment="figsw", p_list=(8,))
        emit_results(self._rows(), path, "csv", header=FIGSW_HEADER,
                     config=cfg)
        mirror = json.loads((tmp_path / "out.json").read_text())
        assert mirror["version"]
        assert mirror["config"]["p_list"] == [8]
        assert mirror["config_hash"] == cfg.config_hash()
        assert all(r["config_hash"] == cfg.config_hash()
                   for r in mirror["rows"])

    def test_byte_identical_rewrites(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        emit_results(self._rows(), a, "csv", header=FIGSW_HEADER)
        emit_results(self._rows(), b, "csv", header=FIGSW_HEADER)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_format(self, tmp_path):
        with pytest.raises(ParameterError):
            emit_results(self._rows(), tmp_path / "x", "yaml")

    def test_empty_rows(self, tmp_path):
        with pytest.raises(ParameterError):
            emit_results([], tmp_path / "x.csv", "csv")

    def test_concentration_reports_flatten(self, tmp_path,
                                           concentration_reports):
        cfg, reports = concentration_reports
        path = tmp_path / "conc.csv"
        emit_results(reports, path, "csv", header=CONCENTRATION_HEADER,
                     config=cfg)
        back = read_results(path)
        grid = np.asarray(reports[0].t_grid).size
        assert len(back) == len(reports) * grid
        assert back[0]["quantity"] == "gram"
