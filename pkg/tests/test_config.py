from __future__ import annotations

import copy

import pytest
import yaml

from memfpk import config
from memfpk.config import ConfigError


def _doc(example="ex1"):
    return yaml.safe_load(config.example_text(example))


@pytest.mark.parametrize("example", config.EXAMPLES)
def test_examples_parse_and_build(example):
    cfg = config.load_example(example)
    model = cfg.build_model()
    assert cfg.name == example and cfg.scale == "desk"
    assert model.name == cfg.model.name


def test_example_parameters():
    ex1 = config.load_example("ex1")
    assert ex1.model.params == {"k": 1.0, "c": 0.4}
    assert ex1.model.hurst == (0.8, 0.8) and ex1.model.init_mean == (-1.0, -1.0)
    assert ex1.solver.spacing == (0.15, 0.15) and ex1.solver.dt == 1e-3
    assert ex1.reference.kind == "analytic"
    ex2 = config.load_example("ex2")
    assert ex2.model.sigma[1] ** 2 == pytest.approx(0.36) and ex2.model.hurst[1] == 0.65
    assert ex2.sim.n_samples == 2000 and ex2.reference.n_samples == 100_000
    assert ex2.solver.spacing == (0.083, 0.083)
    ex3 = config.load_example("ex3")
    assert ex3.model.params["eta"] == 2.0 and ex3.model.hurst[1] == 0.6
    ex4 = config.load_example("ex4")
    assert ex4.outputs.report_times == (2.0, 5.0, 16.0)


def test_paper_scale_overrides():
    assert config.load_example("ex2", "paper").reference.n_samples == 6_000_000
    assert config.load_example("ex1", "paper").solver.t_final == 20.0
    with pytest.raises(ConfigError):
        config.parse(_doc("ex4"), "huge")


def test_digest_and_seed_override():
    a = config.load_example("ex2")
    assert a.digest() == config.load_example("ex2").digest()
    b = a.with_seed(7)
    assert b.sim.seed == 7 and b.digest() != a.digest()


def _mutate(path, value, example="ex2"):
    doc = _doc(example)
    node = doc
    for k in path[:-1]:
        node = node[k]
    if value is KeyError:
        del node[path[-1]]
    else:
        node[path[-1]] = value
    return doc


@pytest.mark.parametrize("path,value,field", [
    (("sim", "n_samples"), 0, "sim.n_samples"),
    (("sim", "dt"), -1, "sim.dt"),
    (("sim", "snapshot_stride"), 3, "sim.snapshot_stride"),
    (("sim", "n_steps"), 1000, "sim.n_steps"),
    (("solver", "coefficients"), "magic", "solver.coefficients"),
    (("solver", "t_final"), KeyError, "solver.t_final"),
    (("solver", "clamp"), "yes", "solver.clamp"),
    (("solver", "domain"), [[1, 0], [0, 1]], "solver.domain[0]"),
    (("outputs", "report_times"), [9.0], "outputs.report_times[0]"),
    (("outputs", "report_times"), [1.0005], "outputs.report_times[0]"),
    (("outputs", "formats"), ["png"], "outputs.formats"),
    (("dlmm", "radius"), -1, "dlmm.radius"),
    (("reference", "kind"), "kde", "reference.kind"),
    (("model", "name"), "lorenz", "model"),
    (("model", "init"), {"mean": [0, 0], "var": 0}, "model.init.var"),
    (("model", "params"), {"eta": 1.0}, "model"),
])
def test_field_level_errors(path, value, field):
    with pytest.raises(ConfigError) as info:
        config.parse(_mutate(path, value))
    assert info.value.field == field


def test_analytic_coefficients_need_linear_model():
    doc = _mutate(("solver", "coefficients"), "analytic")
    with pytest.raises(ConfigError) as info:
        config.parse(doc)
    assert info.value.field == "solver.coefficients"


def test_unknown_top_level_key():
    doc = _doc()
    doc["extra"] = 1
    with pytest.raises(ConfigError):
        config.parse(doc)


def test_load_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(config.example_text("ex1"))
    assert config.load(p) == config.load_example("ex1")
    p.write_text("model: [unclosed")
    with pytest.raises(ConfigError):
        config.load(p)


def test_as_dict_is_plain():
    d = config.load_example("ex3").as_dict()
    assert isinstance(d["solver"]["domain"], list)
    assert copy.deepcopy(d) == d
