import json
from io import StringIO

import mock
import numpy as np
import pandas as pd
import pytest
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from network.rates import nominal_rates
from network.serializers import BUNDLED_SPECS_DIR, load_bundled_spec
from policies import updates
from .checks import CheckResult, CheckResults
from .config import RunConfig, get_preset, resolve_run_config
from .exceptions import InvalidRunConfig, UnknownPreset
from .management.commands.run import Command as RunCommand
from .management.commands.run import with_mode_lambdas
from .oracles import factorized_vertices, fixed_point_rates, project_onto_hull, subset_rho_star
from .replication import execute_replication, verdict
from .tasks import run_replication


def call(name, *args, **options):
    out = StringIO()
    call_command(name, *args, stdout=out, stderr=StringIO(), **options)
    return out.getvalue()


def wrong_sign(nu, mu, p):
    return mu * p - nu


class TestOracles(SimpleTestCase):
    def test_fixed_point_matches_routing_inverse(self):
        spec = load_bundled_spec("fqn3")
        nu = fixed_point_rates(spec.routing_matrix(), spec.arrival_vector())
        np.testing.assert_allclose(nu, nominal_rates(spec).nu, atol=1e-12)
        np.testing.assert_allclose(nu, [0.2, 0.2, 0.1])

    def test_subset_bound_on_dag5(self):
        spec = load_bundled_spec("dag5")
        rho = subset_rho_star(spec.task_rate_vector(), spec.speeds(), spec.capability_mask() > 0, nominal_rates(spec).nu)
        self.assertAlmostEqual(rho, 0.23 * 23 / 6)

    def test_hull_projection_of_unit_square_corner(self):
        vertices = factorized_vertices(np.ones(1), np.ones((2, 1)))
        np.testing.assert_allclose(project_onto_hull(vertices, np.array([0.8, 0.8])), [0.5, 0.5])


class TestRunConfig(SimpleTestCase):
    def test_preset_values(self):
        config = resolve_run_config("fig4c")
        assert config.policy == "robust-delta"
        assert config.delta == 0.02
        assert config.arrival_rates == [0.23]
        assert config.preset == "fig4c"

    def test_flags_win_over_preset(self):
        config = resolve_run_config("fig4a", overrides={"horizon": 500, "delta": None, "policy": "robust-eps"})
        assert config.horizon == 500
        assert config.delta == 0.0
        assert config.policy == "robust-eps"

    def test_bursty_preset_builds_two_modes(self):
        config = resolve_run_config("fig4d")
        process = config.arrival_process()
        assert process.kind == "mode-switch"
        assert process.batch_size == 5
        assert process.period == 1000
        specs = process.mode_specs(config.network_spec())
        np.testing.assert_allclose(specs[1].task_rate_vector(), [0.5, 2.0, 1.0, 0.4, 1.0])
        self.assertAlmostEqual(specs[0].arrival_rates[0], 0.2)

    def test_unknown_preset(self):
        with self.assertRaises(UnknownPreset):
            get_preset("fig9")

    def test_invalid_values(self):
        for overrides in (
            {"network": "dag5", "exponent": 0.4},
            {"network": "dag5", "policy": "robust-delta"},
            {"network": "dag5", "modes": [{"lambda": 0.1}]},
            {"network": "dag5", "policy": "maxweight"},
            {"network": "dag5", "p0": "high"},
        ):
            with self.assertRaises(InvalidRunConfig):
                resolve_run_config(overrides=overrides)

    def test_check_catches_model_errors(self):
        for overrides in (
            {"network": "no-such-network"},
            {"network": "dag5", "lambda": 1.5},
            {"network": "dag5", "policy": "robust-eps", "epsilon0": 0.9},
            {"network": "xmodel", "policy": "robust"},
        ):
            with self.assertRaises(InvalidRunConfig):
                resolve_run_config(overrides=overrides).check()

    def test_primitive_form_rebuilds_the_same_config(self):
        config = resolve_run_config("fig4d", overrides={"p0": [0.1, 0.1, 0.1, 0.1, 0.1]})
        data = json.loads(json.dumps(config.to_data()))
        assert RunConfig.from_data(data) == config

    def test_echo_lists_assumptions(self):
        echo = resolve_run_config("fig4a-eps").echo("run")
        assert "initial queues: empty" in echo["assumed"]
        assert "p0: projection of the zero allocation" in echo["assumed"]
        assert any(line.startswith("eps0:") for line in echo["assumed"])
        assert any("edges" in line for line in echo["assumed"])
        assert echo["resolved"]["nu"] == pytest.approx([0.23] * 5)
        assert echo["network_document"]["name"] == "dag5"

    def test_routed_demo_projects_onto_c_eps(self):
        config = resolve_run_config("fqn-demo")
        assert config.policy == "robust-eps"
        echo = config.echo("run")
        assert echo["resolved"]["policy"]["polyhedron"]["mode"] == "c-eps"
        assert "eps0: 0.1 (half the smallest nu_k / mu_k)" in echo["assumed"]

    def test_mode_lambdas(self):
        config = with_mode_lambdas(resolve_run_config("fig4d"), [0.1, 0.15])
        assert [mode["arrival_rates"] for mode in config.modes] == [[0.1], [0.15]]
        assert config.modes[1]["task_rates"][4] == 0.4
        with self.assertRaises(InvalidRunConfig):
            with_mode_lambdas(config, [0.1])

    def test_worker_count(self):
        command = RunCommand()
        with override_settings(FLEXNET={**settings.FLEXNET, "THREADS": 2}):
            assert command._workers({"threads": None}, 5) == 2
        assert command._workers({"threads": 8}, 3) == 3


def test_project_needs_no_database():
    assert settings.DATABASES.get("default", {}).get("ENGINE", "django.db.backends.dummy") == "django.db.backends.dummy"
    assert not [app for app in settings.INSTALLED_APPS if app.startswith("django.contrib")]


def test_config_file_sits_between_preset_and_flags(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("horizon: 700\nseed: 4\ndelta: 0.01\npolicy: robust-delta\n")
    config = resolve_run_config("fig4a", path, {"seed": 9})
    assert config.horizon == 700
    assert config.delta == 0.01
    assert config.seed == 9
    assert config.exponent == 0.6


def test_unreadable_config_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("horizon: [1, 2\n")
    with pytest.raises(InvalidRunConfig):
        resolve_run_config(config_path=path)
    with pytest.raises(InvalidRunConfig):
        resolve_run_config(config_path=tmp_path / "missing.yaml")


class TestCheckResults(SimpleTestCase):
    def test_table_and_counts(self):
        results = CheckResults(
            [
                CheckResult("First", "suite.first", True, "ok"),
                CheckResult("Second", "suite.second", False, "off by 1"),
                CheckResult("Third", "suite.third", None, "skipped"),
            ]
        )
        assert results.num_passed == 1
        assert results.num_failed == 1
        assert results.num_run == 2
        assert not results.oll_korrect()
        table = results.table().splitlines()
        assert table[1].startswith("FAIL  suite.second")
        assert table[-1] == "1 passed, 1 failed"
        assert results.failure_summary() == "Second: off by 1"
        assert results.serialize()[0]["key"] == "suite.first"


def test_replication_writes_its_csv(tmp_path):
    config = resolve_run_config(overrides={"network": "dag5", "horizon": 2000, "stride": 500, "seed": 3})
    summary = execute_replication(config.to_data(), 1, str(tmp_path))
    assert summary["seed"] == 4
    assert not summary["aborted"]
    frame = pd.read_csv(tmp_path / "rep-01.csv")
    assert list(frame["slot"]) == [500, 1000, 1500, 2000]
    assert "q_2-4" in frame.columns
    assert summary["objective"] >= 0


def test_celery_task_runs_a_replication(tmp_path):
    config = resolve_run_config(overrides={"network": "fqn3", "horizon": 1000})
    summary = run_replication(config.to_data(), 0, str(tmp_path))
    assert summary["slots"] == 1000
    assert (tmp_path / "rep-00.csv").exists()


def test_verdict():
    stable = {"aborted": False, "max_q_over_n": 0.001}
    assert verdict([stable, stable]) == "stable-suspect"
    assert verdict([stable, {"aborted": True, "max_q_over_n": 0.001}]) == "unstable-suspect"
    assert verdict([{"aborted": False, "max_q_over_n": 0.05}]) == "unstable-suspect"


class TestPlanCommand(SimpleTestCase):
    def test_dag5_at_the_boundary(self):
        result = json.loads(call("plan", spec="dag5", **{"lambda": "0.2608695"}))
        assert abs(result["rho_star"] - 1.0) <= 1e-5
        assert result["nu"] == pytest.approx([0.2608695] * 5)
        assert set(result["effective_allocation"]) == {"1", "2", "3", "4", "5"}

    def test_xmodel_boundary(self):
        result = json.loads(call("plan", spec="xmodel", direction="1,1"))
        assert abs(result["boundary"] - 0.375) <= 1e-5
        self.assertAlmostEqual(result["rho_star"], 0.8)
        assert "effective_allocation" not in result

    def test_preset_network(self):
        result = json.loads(call("plan", preset="fqn-demo"))
        self.assertAlmostEqual(result["rho_star"], 0.5)

    def test_summary_line(self):
        first, *rest = call("plan", spec="dag5", json_only=False).splitlines()
        assert first.startswith("rho* = ")
        assert json.loads("\n".join(rest))["feasible"]

    def test_invalid_spec_values(self):
        with self.assertRaises(CommandError) as context:
            call("plan", spec="dag5", **{"lambda": "0.1,0.2"})
        assert context.exception.returncode == 2


def test_plan_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"kind": "dag", "classes": [')
    with pytest.raises(CommandError) as info:
        call("plan", spec=str(path))
    assert info.value.returncode == 2
    assert "not valid JSON" in str(info.value)


def test_plan_spec_that_fails_validation(tmp_path):
    data = json.loads((BUNDLED_SPECS_DIR / "dag5.json").read_text())
    data["mu"]["1"] = 2.0
    path = tmp_path / "fast.json"
    path.write_text(json.dumps(data))
    with pytest.raises(CommandError) as info:
        call("plan", spec=str(path))
    assert info.value.returncode == 2
    assert "RateScalingViolation" in str(info.value)


class TestProjectCommand(SimpleTestCase):
    def test_reads_stdin(self):
        result = json.loads(call("project", spec="diamond", stdin=StringIO("[0.0, 0.0, 0.0, 0.0]")))
        assert result["point"] == [0.0, 0.0, 0.0, 0.0]
        assert result["iterations"] == 0
        assert result["mode"] == "c"

    def test_lifted_whitespace_input(self):
        result = json.loads(call("project", spec="xmodel", mode="lifted", point="0.7 0.7\n0.7 0.7"))
        np.testing.assert_allclose(result["point"], [[0.5, 0.5], [0.5, 0.5]])

    def test_c_eps_lower_bound(self):
        result = json.loads(call("project", spec="fqn3", mode="c-eps", eps0=0.1, point="[1.0, 0.0, 0.0]"))
        assert result["epsilon0"] == 0.1
        assert min(result["point"]) >= 0.1 - 1e-8

    def test_wrong_dimension(self):
        with self.assertRaises(CommandError) as context:
            call("project", spec="dag5", point="[0.1, 0.2]")
        assert context.exception.returncode == 2


def run_command(tmp_path, run_id, **options):
    output = call("run", out=str(tmp_path), run_id=run_id, threads=1, **options)
    return json.loads(output), tmp_path / run_id


def test_run_writes_results(tmp_path):
    result, run_dir = run_command(tmp_path, "first", preset="fig4a", horizon=3000, stride=1000, reps=2)
    assert result["verdict"] in ("stable-suspect", "unstable-suspect")
    assert sorted(p.name for p in run_dir.iterdir()) == ["config.json", "rep-00.csv", "rep-01.csv", "summary.json"]
    summary = json.loads((run_dir / "summary.json").read_text())
    assert [r["seed"] for r in summary["replications"]] == [0, 1]
    assert summary["replications"][0]["slots"] == 3000
    config = json.loads((run_dir / "config.json").read_text())
    assert config["run_id"] == "first"
    assert config["horizon"] == 3000
    assert "initial queues: empty" in config["assumed"]


def test_run_is_reproducible_from_its_config_echo(tmp_path):
    _, first = run_command(tmp_path, "first", preset="fig4c", horizon=2000, stride=500, seed=6)
    _, again = run_command(tmp_path, "again", config=str(first / "config.json"))
    pd.testing.assert_frame_equal(pd.read_csv(first / "rep-00.csv"), pd.read_csv(again / "rep-00.csv"))


def test_run_flags(tmp_path):
    _, run_dir = run_command(
        tmp_path, "flags", spec="dag5", policy="robust-delta", delta=0.01, horizon=1000,
        delta_placement="scaled", p0="0.1", batch=2, a=0.8,
    )
    config = json.loads((run_dir / "config.json").read_text())
    assert config["delta_placement"] == "scaled"
    assert config["exponent"] == 0.8
    assert config["batch"] == 2
    assert config["resolved"]["policy"]["p0"] == pytest.approx([0.1] * 5)


def test_run_memory_guard_exit_code(tmp_path):
    path = tmp_path / "guard.yaml"
    path.write_text("network: xmodel\npolicy: frozen\nhorizon: 10000\nqueue_cap: 50\n")
    with pytest.raises(CommandError) as info:
        run_command(tmp_path, "guard", config=str(path))
    assert info.value.returncode == 3
    assert "unstable-suspect" in str(info.value)
    summary = json.loads((tmp_path / "guard" / "summary.json").read_text())
    assert summary["verdict"] == "unstable-suspect"
    assert summary["replications"][0]["aborted"]


def test_run_config_errors_exit_code(tmp_path):
    for options in ({"preset": "fig9"}, {"spec": "dag5", "policy": "robust-delta"}, {}):
        with pytest.raises(CommandError) as info:
            run_command(tmp_path, "bad", **options)
        assert info.value.returncode == 2
    assert not (tmp_path / "bad").exists()


class TestVerifyCommand(SimpleTestCase):
    def test_only_projection(self):
        output = call("verify", only="projection", instances=20)
        assert "projection.oracle" in output
        assert "lp." not in output
        assert output.splitlines()[-1] == "4 passed, 0 failed"

    def test_lp_suite(self):
        results = json.loads(call("verify", only="lp", instances=20, json=True))
        assert all(r["passed"] for r in results)
        assert {r["key"] for r in results} >= {"lp.boundary.dag5", "lp.boundary.dag5_mode2", "lp.boundary.xmodel"}

    def test_convergence_suite_passes(self):
        output = call("verify", only="convergence")
        assert "FAIL" not in output

    def test_wrong_sign_fails_convergence(self):
        with mock.patch.object(updates, "skewed_drift", wrong_sign):
            with self.assertRaises(CommandError) as context:
                call("verify", only="convergence", steps=500)
        assert context.exception.returncode == 1
        assert "Noiseless update on dag5" in str(context.exception)

    def test_wrong_sign_robust_step_fails_convergence(self):
        robust_step = updates._robust_step

        def flipped(state, gradient, gate):
            return -robust_step(state, gradient, gate)

        with mock.patch.object(updates, "_robust_step", flipped):
            with self.assertRaises(CommandError) as context:
                call("verify", only="convergence", horizon=4000)
        assert context.exception.returncode == 1
        message = str(context.exception)
        assert message.startswith("1 of 4 checks failed")
        assert "Robust update on dag5" in message
        assert "Noiseless update" not in message

    def test_short_stochastic_suites(self):
        output = call("verify", only="estimator,conservation", samples=5000, horizon=2000, seed=1)
        assert "FAIL" not in output

    def test_unknown_suite(self):
        with self.assertRaises(CommandError) as context:
            call("verify", only="projection,speed")
        assert context.exception.returncode == 2


@pytest.mark.slow
def test_bursty_preset_is_stable_suspect(tmp_path):
    result, run_dir = run_command(tmp_path, "fig4d", preset="fig4d")
    assert result["verdict"] == "stable-suspect"
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["replications"][0]["max_q_over_n"] <= 0.02


@pytest.mark.slow
def test_full_verify_passes():
    output = call("verify")
    assert output.splitlines()[-1].endswith("0 failed")
