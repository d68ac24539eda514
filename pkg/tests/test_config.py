from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melnikovkit import instances
from melnikovkit.config import ConfigError, config_hash, dumps, load, loads

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize("name", ["reference", "dissipative", "zero", "two_pendulum"])
def test_shipped_configs_round_trip(name):
    rc = load(CONFIGS / f"{name}.toml")
    again = loads(rc.to_toml())
    assert again.document == rc.document
    assert again.system == rc.system
    assert again.hash == rc.hash


def test_shipped_configs_match_instances():
    assert load(CONFIGS / "reference.toml").system == instances.reference()
    assert load(CONFIGS / "dissipative.toml").system == instances.dissipative()
    assert load(CONFIGS / "two_pendulum.toml").system == instances.two_pendulum(0.5)


coef = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
var = st.sampled_from(["p1", "q1", "I1", "phi1", "t"])


@st.composite
def documents(draw):
    terms = []
    for _ in range(draw(st.integers(0, 4))):
        facs = []
        for _ in range(draw(st.integers(0, 3))):
            v = draw(var)
            fn = "pow" if v in ("p1", "I1") else "cos"
            a = float(draw(st.integers(0, 3))) if fn == "pow" else float(draw(st.integers(-3, 3)))
            facs.append({"var": v, "fn": fn, "a": a, "b": draw(st.floats(0, 1))})
        terms.append({"coef": draw(coef), "factors": facs})
    return {
        "schema_version": 1,
        "eps": draw(st.floats(0, 0.1)),
        "penduli": {"signs": [draw(st.sampled_from([1, -1]))],
                    "potential": [{"cosine_amplitude": draw(st.floats(0.001, 1.0))}]},
        "rotator": {"h0": [{"coef": 0.5, "factors": [{"var": "I1", "fn": "pow", "a": 2.0}]}]},
        "perturbation": {"type": "hamiltonian", "h": terms},
        "domain": {"tube": draw(st.floats(0.001, 1.0))},
        "run": {"tol": draw(st.floats(1e-14, 1e-6)), "eps_list": [0.01, 0.005]},
    }


@settings(max_examples=60, deadline=None)
@given(documents())
def test_round_trip_is_lossless(doc):
    rc = loads(dumps(doc))
    again = loads(rc.to_toml())
    assert again.document == rc.document
    assert again.system == rc.system
    assert again.run == rc.run


def test_hash_is_deterministic_and_sensitive():
    a = load(CONFIGS / "reference.toml")
    b = load(CONFIGS / "reference.toml")
    assert a.hash == b.hash
    doc = dict(a.document, eps=0.5)
    assert config_hash(doc) != a.hash


@pytest.mark.parametrize(
    "text, where",
    [
        ("schema_version = 2\n", "schema_version"),
        ("schema_version = 1\nbogus = 1\n", "bogus"),
        ("schema_version = 1\n[penduli\n", "line 2"),
    ],
)
def test_top_level_errors(text, where):
    with pytest.raises(ConfigError, match=where):
        loads(text)


def _base():
    return (CONFIGS / "reference.toml").read_text()


def test_field_errors_name_their_path():
    bad_var = _base().replace('var = "t"', 'var = "time"')
    with pytest.raises(ConfigError, match=r"perturbation\.h\[1\]\.factors\[1\]\.var"):
        loads(bad_var)
    bad_fn = _base().replace('fn = "pow"', 'fn = "exp"')
    with pytest.raises(ConfigError, match=r"rotator\.h0\[0\]\.factors\[0\]\.fn"):
        loads(bad_fn)
    extra = _base().replace("tube = 0.04", "tube = 0.04\nwidth = 3")
    with pytest.raises(ConfigError, match="domain"):
        loads(extra)
    nonperiodic = _base().replace('{ var = "phi1", fn = "cos" }', '{ var = "phi1", fn = "pow", a = 1 }')
    with pytest.raises(ConfigError, match="periodic"):
        loads(nonperiodic)
    custom = _base().replace('kind = "affine-time"', 'kind = "custom"')
    with pytest.raises(ConfigError, match="custom"):
        loads(custom)
