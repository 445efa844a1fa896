import json

import pytest

from apenv.config import ConfigError, build_context, load_config, resolve_defaults, validate_config


def write(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg, indent=2))
    return p


BASE = {
    "problem": {"name": "gaussian-mean"},
    "null_support": [[0.0]],
    "alt_support": [[-1.0], [1.0]],
    "fine_null_grid": [[0.0]],
    "fine_alt_grid": [[-2.0], [2.0]],
    "draws": {"fit": 2000, "verify": 2000},
}


def test_minimal_config_gets_generic_defaults(tmp_path):
    cfg, _ = load_config(write(tmp_path, BASE))
    assert cfg["alpha"] == 0.05
    assert cfg["seeds"]["fit"] != cfg["seeds"]["verify"]
    assert cfg["loops"]["outer_select"] == "last"
    ctx = build_context(cfg)
    assert ctx.fit_bank.n_draws == 2000 and ctx.fit_bank.seed != ctx.verify_bank.seed


def test_unknown_key_reports_line(tmp_path):
    path = write(tmp_path, {**BASE, "colour": 1})
    with pytest.raises(ConfigError, match="unknown key") as err:
        load_config(path)
    lines = path.read_text().splitlines()
    assert '"colour"' in lines[err.value.line - 1]
    assert str(path) in str(err.value)


def test_equal_seeds_are_rejected(tmp_path):
    path = write(tmp_path, {**BASE, "seeds": {"fit": 4, "verify": 4}})
    with pytest.raises(ConfigError, match="differ") as err:
        load_config(path)
    assert '"verify"' in path.read_text().splitlines()[err.value.line - 1]


@pytest.mark.parametrize(
    "patch, fragment",
    [
        ({"alpha": 1.5}, "alpha"),
        ({"draws": {"fit": 2001, "verify": 2000}}, "even"),
        ({"loops": {"outer_select": "median"}}, "outer_select"),
        ({"loops": {"dual_stride": 0}}, "dual_stride"),
        ({"problem": {"name": "nope"}}, "problem"),
    ],
)
def test_invalid_values(tmp_path, patch, fragment):
    with pytest.raises(ConfigError, match=fragment):
        load_config(write(tmp_path, {**BASE, **patch}))


def test_bad_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "alpha": 0.05,\n  "x": \n}\n')
    with pytest.raises(ConfigError) as err:
        load_config(p)
    assert err.value.line == 4


def test_named_defaults_and_overrides():
    cfg = resolve_defaults({"loops": {"n_outer": 7}}, "boundary-iici-desk")
    validate_config(cfg)
    assert cfg["loops"]["n_outer"] == 7
    assert cfg["problem"]["name"] == "boundary-iici"
    flagged = resolve_defaults({"paper-defaults": True, "problem": {"name": "linear-iv", "design": "fixed-sigma", "k": 5}})
    assert flagged["problem"]["design"] == "fixed-sigma" and flagged["loops"]["n_outer"] > 7
