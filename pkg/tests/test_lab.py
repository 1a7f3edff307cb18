import json
import math

import numpy as np
import pytest

from ffsplit import lab
from ffsplit.lab import FidelityReport, Scenario, perturb, run_batch, run_scenario, step, sweep

INV_SQRT2 = 1 / np.sqrt(2)
# short, coarse scenario for structural checks that do not need the full 320 ms duration
QUICK = Scenario("two_bump", t_f=15.6, n_t=400)


def fidelities(rep):
    return np.array([rep.F_S, rep.F_D0, rep.F_D, rep.F_I])


def crossover(lams, F_S, level):
    """Lambda where F_S first falls through ``level``, log-linear in lambda."""
    for i in range(1, len(lams)):
        if F_S[i] <= level < F_S[i - 1]:
            la, lb = np.log(lams[i - 1]), np.log(lams[i])
            u = (F_S[i - 1] - level) / (F_S[i - 1] - F_S[i])
            return float(np.exp(la + u * (lb - la)))
    return math.nan


class TestScenario:
    def test_defaults(self):
        s = Scenario()
        assert (s.protocol, s.a, s.t_f, s.n_x) == ("two_bump", 4.126, 249.6, 513)
        assert s.time_step == pytest.approx(249.6 / 2**17)

    def test_short_runs_keep_minimum_step_count(self):
        assert round(QUICK.t_f / QUICK.time_step) >= 2**15

    def test_validation(self):
        with pytest.raises(ValueError):
            Scenario("triple_well")
        with pytest.raises(ValueError):
            Scenario(lams=(-0.1,))
        with pytest.raises(ValueError):
            Scenario(initial="random")

    def test_scaled(self):
        s = Scenario().scaled(2)
        assert (s.n_x, s.n_t) == (1025, 8000)
        assert s.time_step == pytest.approx(Scenario().time_step / 2)


class TestPerturb:
    def test_zero_is_identity(self):
        trace = lab.design_for(QUICK)[0]
        assert np.array_equal(perturb(trace, 0.0).full(), trace.full())

    def test_step_heights(self):
        trace = lab.design_for(QUICK)[0]
        lam = 0.37
        diff = perturb(trace, lam).full() - trace.full()
        c = trace.grid.center
        assert np.allclose(diff[:, -1], lam, rtol=0, atol=1e-13)
        assert np.allclose(diff[:, c], lam / 2, rtol=0, atol=1e-13)
        assert np.all(diff[:, :c] == 0.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            perturb(lab.design_for(QUICK)[0], -1e-3)


class TestRunScenario:
    def test_unperturbed_run(self, fig2_runs):
        rep = fig2_runs[320.0][1][0]
        assert rep.lam == 0.0
        assert rep.F_S == pytest.approx(1.0, abs=1e-9)
        assert rep.F_I == pytest.approx(1.0, abs=1e-9)
        assert rep.F_D0 == pytest.approx(rep.F_D, abs=1e-12)
        assert rep.F_D0 >= 0.999

    def test_collapse_at_large_bias(self, fig2_runs):
        rep = fig2_runs[320.0][1][-1]
        assert rep.F_S == pytest.approx(INV_SQRT2, abs=0.01)

    def test_plateau_example(self):
        rep = run_scenario(Scenario("two_bump", lams=(0.2 / 249.6,)))
        assert rep.F_D0 >= 0.95

    def test_fidelity_bounds(self, fig2_runs, fig4_run, fig5_run):
        reports = [r for _, reps in fig2_runs.values() for r in reps]
        reports += fig4_run[1] + fig5_run[1]
        for rep in reports:
            f = fidelities(rep)
            assert np.all((f >= 0) & (f <= 1 + 1e-9)), rep

    def test_mirror_property(self):
        lam = 0.01
        direct = run_batch(QUICK, [lam])[0]
        mirrored = run_batch(QUICK, [lam], profile=step(QUICK.grid)[::-1])[0]
        assert np.allclose(fidelities(direct), fidelities(mirrored), atol=1e-9)

    def test_initial_state_insensitivity(self):
        lam = 1e-3
        perturbed = run_scenario(Scenario("two_bump", t_f=15.6, n_t=400, lams=(lam,)))
        plain = run_scenario(Scenario("two_bump", t_f=15.6, n_t=400, lams=(lam,),
                                      initial="unperturbed"))
        assert perturbed.F_I > 0.9999
        assert abs(perturbed.F_D0 - plain.F_D0) < 1e-3

    def test_diagnostics(self):
        rep = run_scenario(QUICK)
        assert rep.diagnostics["final_norm"] == pytest.approx(1.0, abs=1e-9)
        assert rep.diagnostics["left_population_target"] == pytest.approx(0.5, abs=1e-6)


class TestRegimes:
    def test_structural_transition_scale(self, fig2_runs):
        scn, reps = fig2_runs[320.0]
        delta_f = lab.two_mode_system(scn).delta[-1]
        lams = np.array([r.lam for r in reps[1:]])
        F_S = np.array([r.F_S for r in reps[1:]])
        lam_c = crossover(lams, F_S, 0.5 * (1 + INV_SQRT2))
        assert delta_f / 3 <= lam_c <= 3 * delta_f

    def test_bracketing(self, fig2_runs):
        reps = fig2_runs[320.0][1]
        assert reps[1].F_D == pytest.approx(reps[1].F_S, abs=0.01)
        assert reps[-1].F_D >= 0.95

    def test_adiabatic_limb_from_minimum(self, fig2_runs):
        # F_D recovers monotonically once past its dip
        F_D = np.array([r.F_D for r in fig2_runs[320.0][1]])
        k = int(np.argmin(F_D))
        assert np.all(np.diff(F_D[k:]) >= -1e-6)
        assert F_D[-1] >= 0.95

    def test_shorter_processes_are_more_stable(self, duration_run):
        _, reps = duration_run
        F = [r.F_D0 for r in reps]
        assert F[0] >= F[1] >= F[2]

    def test_interaction_stabilizes(self, fig5_run):
        _, reps = fig5_run
        picked = [r.F_D0 for r in reps if r.g in (0.0, 0.5, 1.38)]
        assert len(picked) == 3
        assert picked[0] <= picked[1] <= picked[2]
        assert picked[2] > 0.99


class TestSweep:
    def test_single_zero(self):
        reps = sweep("lambda", [0.0], QUICK)
        assert len(reps) == 1 and reps[0].F_S == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("values", [[0.1, 0.0], [0.0, math.nan], []])
    def test_rejects_bad_values(self, values):
        with pytest.raises(ValueError):
            sweep("lambda", values, QUICK)

    def test_rejects_unknown_axis(self):
        with pytest.raises(ValueError):
            sweep("gamma", [1.0], QUICK)

    def test_failed_rows_are_recorded(self, monkeypatch):
        real = lab.run_batch

        def flaky(scn, lams=None, profile=None):
            if 0.3 in scn.lams:
                raise FloatingPointError("injected")
            return real(scn, lams, profile)

        monkeypatch.setattr(lab, "run_batch", flaky)
        reps = sweep("lambda", [0.0, 0.1, 0.3], QUICK, threads=1)
        assert [r.lam for r in reps] == [0.0, 0.1, 0.3]
        assert reps[0].ok and reps[1].ok
        assert not reps[2].ok and "injected" in reps[2].error
        assert math.isnan(reps[2].F_S)

    def test_thread_count_does_not_change_results(self, tmp_path):
        values = np.geomspace(1e-4, 0.1, 10)
        serial = sweep("lambda", values, QUICK, threads=1)
        parallel = sweep("lambda", values, QUICK, threads=2)
        lab.write_sweep_csv(serial, tmp_path / "a.csv")
        lab.write_sweep_csv(parallel, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_thread_env_fallback(self, monkeypatch):
        monkeypatch.setenv("FFSPLIT_THREADS", "3")
        assert lab.thread_count() == 3
        assert lab.thread_count(2) == 2


class TestOutput:
    def test_csv_round_trip(self, tmp_path):
        reps = [FidelityReport(0.1, 15.6, 0.0, "two_bump", 1.0, 0.5, 0.25, 1.0),
                FidelityReport(0.2, 15.6, 0.0, "two_bump", sudden=0.3)]
        lab.write_sweep_csv(reps, tmp_path / "s.csv")
        text = (tmp_path / "s.csv").read_text()
        assert text.splitlines()[0] == (
            "lambda,tf,gN,F_S,F_D0,F_D,F_I,F_S_2m,F_D0_2m,F_D_2m,sudden_metric,adiabatic_metric")
        rows = lab.read_sweep_csv(tmp_path / "s.csv")
        assert rows[0]["F_D"] == 0.25 and rows[0]["F_S_2m"] is None
        assert rows[1]["sudden_metric"] == 0.3 and rows[1]["F_S"] is None

    def test_summary_json(self, tmp_path):
        reps = [FidelityReport(0.1, 15.6, 0.0, "two_bump", math.nan, math.nan, math.nan,
                               math.nan, error="boom")]
        lab.write_summary(reps, QUICK, tmp_path / "s.json", {"axis": "lambda"})
        data = json.loads((tmp_path / "s.json").read_text())
        assert data["failed"] == 1 and data["axis"] == "lambda"
        assert data["rows"][0]["F_S"] is None
        assert data["resolution"]["n_x"] == 513
