import csv

import pytest

from spnls.cli import COMMANDS, ConfigError, Param, _ints, main, parse_config_file, resolve_config

EVOLVE_SMALL = ["--n1", "8", "--nper", "8", "--T", "0.01", "--dt", "0.002", "--record-stride", "1"]


def only_run(out):
    dirs = [p for p in out.iterdir() if p.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


def read_summary(d):
    with open(d / "summary.csv") as fh:
        return {row["key"]: row["value"] for row in csv.DictReader(fh)}


def test_usage_errors(capsys):
    assert main(["no-such-command"]) == 2
    assert main(["evolve", "--bogus", "1"]) == 2
    assert main([]) == 2


def test_help_lists_csv_schema(capsys):
    assert main(["weyl", "--help"]) == 0
    out = capsys.readouterr().out
    assert "CSV output" in out and "weyl.csv: N,t,a,q,beta,sup_S,ratio" in out


def test_missing_config_names_file(tmp_path, capsys):
    missing = tmp_path / "nope.cfg"
    assert main(["evolve", "--config", str(missing), "--out", str(tmp_path / "o")]) == 3
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("text", ["T = 1\nbogus = 2\n", "T = abc\n", "just a line\n", " = 3\n",
                                  "subcommand = weyl\n", "n1 = 12\n", "dt = -1\n"])
def test_invalid_config(tmp_path, capsys, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "invalid configuration" in capsys.readouterr().err


def test_non_dyadic_band_rejected(tmp_path):
    assert main(["conserve", "--N", "3", "--out", str(tmp_path)]) == 3


def test_resolve_order():
    params = {"a": Param(int, 1), "b": Param(_ints, (1, 2))}
    cfg = resolve_config(params, {"a": "2", "b": "3,4"}, {"a": "5"})
    assert cfg == {"a": 5, "b": (3, 4)}
    with pytest.raises(ConfigError):
        resolve_config(params, {"a": "1.5"}, {})


def test_parse_config_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nrecord-stride = 5  # trailing\n\nT=2\n")
    assert parse_config_file(p) == {"record_stride": "5", "T": "2"}


def test_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["evolve", "--dry-run", "--out", str(out)] + EVOLVE_SMALL) == 0
    assert "dry run" in capsys.readouterr().out
    assert not out.exists()


def test_numerical_abort_exit_code(tmp_path):
    # band 4 on a 16-grid puts energy above half the Nyquist frequency
    out = tmp_path / "runs"
    rc = main(["evolve", "--data", "random", "--N", "4", "--out", str(out)] + EVOLVE_SMALL[4:])
    assert rc == 4
    d = only_run(out)
    assert "ResolutionError" in (d / "diagnostic.txt").read_text()


def test_runs_are_deterministic_under_seed(tmp_path):
    args = ["evolve", "--data", "random", "--N", "1", "--n1", "16", "--nper", "8", "--T", "0.01",
            "--dt", "0.002", "--record-stride", "1", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert main(args[:-1] + ["8", "--out", str(tmp_path / "c")]) == 0
    a, b, c = (only_run(tmp_path / x) for x in "abc")
    assert (a / "evolve.csv").read_bytes() == (b / "evolve.csv").read_bytes()
    assert (a / "evolve.csv").read_bytes() != (c / "evolve.csv").read_bytes()


def test_config_resolved_reproduces_run(tmp_path):
    assert main(["conserve", "--n1", "8", "--nper", "8", "--N", "1", "--T", "0.02", "--dt", "0.002",
                 "--sample-every", "0.01", "--seed", "3", "--out", str(tmp_path / "a")]) == 0
    a = only_run(tmp_path / "a")
    resolved = (a / "config.resolved").read_text()
    assert "subcommand = conserve" in resolved and "seed = 3" in resolved
    assert main(["conserve", "--config", str(a / "config.resolved"), "--out", str(tmp_path / "b")]) == 0
    b = only_run(tmp_path / "b")
    for name in ("conserve.csv", "conserve_series.csv", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (b / "config.resolved").read_text().replace(str(tmp_path / "b"), "") == \
        resolved.replace(str(tmp_path / "a"), "")


def test_plot_writes_svg(tmp_path):
    pytest.importorskip("matplotlib")
    assert main(["evolve", "--plot", "--out", str(tmp_path)] + EVOLVE_SMALL) == 0
    d = only_run(tmp_path)
    svg = (d / "energy.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg


def test_plane_wave_summary(tmp_path):
    assert main(["evolve", "--out", str(tmp_path)] + EVOLVE_SMALL) == 0
    s = read_summary(only_run(tmp_path))
    assert float(s["max_rel_l2_error"]) < 1e-12


@pytest.mark.parametrize("args", [
    ["weyl", "--Ns", "16", "--n-t", "16"],
    ["farey-coeffs", "--Q", "4", "--M", "32", "--n-t", "256", "--m-max", "50"],
    ["divisors", "--Q", "16", "--m-lo", "-100", "--m-hi", "100", "--P", "200"],
    ["dispersive-scan", "--Ns", "2,4", "--n-t", "4", "--L1", "2"],
    ["strichartz-scan", "--Ns", "2", "--ensemble", "2", "--n-t", "5", "--p", "4"],
    ["lambda", "--n1", "16", "--nper", "16", "--N", "2", "--n-t", "5"],
    ["picard", "--n1", "8", "--nper", "8", "--N", "1", "--I", "0,0.01", "--dt", "0.002"],
])
def test_small_subcommands_run(tmp_path, args):
    assert main(args + ["--out", str(tmp_path)]) == 0
    d = only_run(tmp_path)
    assert (d / "config.resolved").exists()
    assert any(p.suffix == ".csv" for p in d.iterdir())


def test_every_subcommand_registered():
    assert set(COMMANDS) == {
        "evolve", "conserve", "picard", "stability", "euclid-compare", "strichartz-scan", "dispersive-scan",
        "bilinear-scan", "smoothing-check", "extinction", "weyl", "farey-coeffs", "divisors", "kernel-decomp",
        "distr-check", "lambda", "profile-decompose", "sobolev-check"}
    for name in COMMANDS:
        assert main([name, "--dry-run", "--out", "unused-dir"]) == 0
