import pytest

from agentpipe.domain import Fixed
from agentpipe.engine import run
from agentpipe.scenario import (
    ScenarioError,
    JobSpec,
    dumps_scenario,
    list_presets,
    load_preset,
    load_scenario,
    loads_scenario,
    write_scenario,
)

from corpus import random_scenario

MINIMAL = """\
version: 1
name: tiny
robots:
  count: 1
resources:
  - {id: a}
jobs:
  - id: J1
    chains:
      - - {id: T1, resources: [a], duration: {fixed: 100}}
"""


def test_minimal_file(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(MINIMAL)
    s = load_scenario(p)
    assert [r.robot_id for r in s.robot_specs()] == ["R1"]
    (job,) = s.all_jobs()
    assert isinstance(job, JobSpec) and job.tasks[0].duration == Fixed(100)
    assert s.engine.hop_latency == 1 and s.engine.ticks_per_second == 1000


def test_undeclared_resource_is_named_with_its_line():
    with pytest.raises(ScenarioError) as exc:
        loads_scenario(MINIMAL.replace("resources: [a]", "resources: [ghost]"))
    (msg,) = exc.value.errors
    assert "ghost" in msg and msg.startswith("line 10:")


def test_unknown_field_and_missing_version():
    with pytest.raises(ScenarioError) as exc:
        loads_scenario(MINIMAL.replace("name: tiny", "name: tiny\ncolour: red"))
    assert any("colour" in e for e in exc.value.errors)
    with pytest.raises(ScenarioError) as exc:
        loads_scenario(MINIMAL.replace("version: 1\n", ""))
    assert any("version" in e for e in exc.value.errors)


def test_errors_are_collected_not_first_only():
    text = MINIMAL.replace("fixed: 100", "fixed: -3").replace("count: 1", "count: many")
    with pytest.raises(ScenarioError) as exc:
        loads_scenario(text)
    assert len(exc.value.errors) >= 2


def test_malformed_yaml_reports_position():
    with pytest.raises(ScenarioError) as exc:
        loads_scenario("version: 1\nrobots: [\n")
    assert exc.value.errors[0].startswith("line ")


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("/nonexistent/file.yaml")


def test_warehouse_preset_shape():
    s = load_preset("warehouse_4x4")
    assert len(s.robot_specs()) == 4
    jobs = s.all_jobs()
    assert len(jobs) == 4
    assert [t.task_id for t in s.workflow_tasks()] == ["T1", "T2", "T3", "T4"]
    assert all(t.duration == Fixed(2000) for t in s.workflow_tasks())


@pytest.mark.parametrize("name", list_presets())
def test_presets_round_trip_and_run(name, tmp_path):
    s = load_preset(name)
    p = tmp_path / f"{name}.yaml"
    write_scenario(s, p)
    assert load_scenario(p) == s
    if name != "sweep_fig3":
        result = run(s)
        assert result.status == "completed"
        assert result.trace.events[-1].at <= s.engine.t_max


def test_random_scenarios_round_trip():
    for seed in range(50):
        s = random_scenario(seed)
        assert loads_scenario(dumps_scenario(s)) == s
