from dataclasses import replace

import pytest

from finco import __version__
from finco.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from finco.config import PRESETS, apply_overrides, dump_config, loads_config, preset


def test_version(capsys):
    assert main(["version"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == __version__


def test_presets_list(capsys):
    assert main(["presets", "list"]) == EXIT_OK
    assert capsys.readouterr().out.split() == sorted(PRESETS)


def test_presets_show_is_loadable(capsys):
    assert main(["presets", "show", "identity"]) == EXIT_OK
    assert loads_config(capsys.readouterr().out) == preset("identity")


def test_presets_show_unknown():
    assert main(["presets", "show", "nope"]) == EXIT_CONFIG


@pytest.mark.parametrize(
    "argv",
    [
        ["run"],
        ["run", "--preset", "identity", "--override", "bogus=1"],
        ["run", "--preset", "identity", "--override", "filters.phase_convention='none'"],
        ["run", "missing.toml"],
    ],
)
def test_configuration_errors(argv, tmp_path):
    assert main(argv + ["--output", str(tmp_path)]) == EXIT_CONFIG


def test_identity_run(tmp_path):
    out = tmp_path / "identity"
    assert main(["run", "--preset", "identity", "--mode", "finco", "--output", str(out)]) == EXIT_OK
    assert (out / "resolved_config.toml").exists()
    assert (out / "finco_00_t0.0000.dat").exists()
    assert (out / "finco_summary.dat").exists()


def test_run_from_file(tmp_path):
    path = dump_config(preset("identity"), tmp_path / "run.toml")
    out = tmp_path / "out"
    assert main(["run", str(path), "--workers", "1", "--output", str(out)]) == EXIT_OK
    resolved = loads_config((out / "resolved_config.toml").read_text())
    assert resolved.output.directory == str(out)
    expected = preset("identity")
    assert resolved == replace(expected, output=replace(expected.output, directory=str(out)))


def test_output_defaults_to_config_directory(tmp_path):
    out = tmp_path / "from-config"
    path = dump_config(apply_overrides(preset("identity"), [f"output.directory=\"{out.as_posix()}\""]), tmp_path / "run.toml")
    assert main(["run", str(path)]) == EXIT_OK
    assert loads_config((out / "resolved_config.toml").read_text()).output.directory == out.as_posix()


def test_everything_rejected_is_a_numerical_failure(tmp_path):
    argv = ["run", "--preset", "identity", "--override", "filters.eps=0", "--output", str(tmp_path)]
    assert main(argv) == EXIT_NUMERICAL


def test_runs_are_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--preset", "identity", "--output", str(tmp_path / name)]) == EXIT_OK
    for path in sorted((tmp_path / "a").iterdir()):
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes(), path.name
