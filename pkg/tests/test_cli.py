import json

import pytest

from dickemix import cli, io


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path / "out")])


def test_critical_curve(tmp_path, capsys):
    assert run(tmp_path, "critical-curve", "--points", "4") == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["g_c_at_s1"] == pytest.approx(0.5590169943749474, abs=1e-15)
    rows = io.read_csv(tmp_path / "out" / "critical_curve.csv")
    assert len(rows) == 4 and set(rows[0]) == {"s_tilde", "g_c"}


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ng = 1.2\nn-atoms = 6\nkappa=0.5\n")
    args = cli.build_parser().parse_args(["dpt", "--config", str(cfg), "--g", "0.7"])
    p = cli.resolve_params(args)
    assert (p.g, p.n_atoms, p.kappa) == (0.7, 6, 0.5)
    assert args.out == "results" and args.workers == 1


def test_bad_config_line(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("g 0.3\n")
    assert run(tmp_path, "critical-curve", "--config", str(cfg)) == 2


def test_domain_error_exit_code(tmp_path, capsys):
    assert run(tmp_path, "oracle", "--n-atoms", "6") == 2
    assert "dimension-cap" in capsys.readouterr().err


def test_dpt_outputs(tmp_path, capsys):
    assert run(tmp_path, "dpt", "--n-atoms", "4", "--moments", "dm", "--f", "1") == 0
    out = tmp_path / "out"
    with open(out / "distribution_N4_f1.csv") as fh:
        assert fh.readline().strip() == ",".join(io.DISTRIBUTION_COLUMNS)
    with open(out / "spectrum_N4_f1.csv") as fh:
        assert fh.readline().strip() == ",".join(io.SPECTRUM_COLUMNS)
    summary = json.loads(capsys.readouterr().out)
    assert summary["method"] == "DPT-DM"


def test_subspace_cache_reuse(tmp_path):
    cache = tmp_path / "cache"
    argv = ["subspace", "--n-atoms", "6", "--method", "mf2", "--cache", str(cache)]
    assert run(tmp_path, *argv) == 0
    first = (tmp_path / "out" / "moments_mf2_N6.csv").read_bytes()
    assert len(list(cache.rglob("*.json"))) == 4
    assert run(tmp_path, *argv) == 0
    assert (tmp_path / "out" / "moments_mf2_N6.csv").read_bytes() == first


def test_figure_unknown_id_rejected(tmp_path):
    with pytest.raises(SystemExit):
        run(tmp_path, "figure", "no-such-figure")


def test_override_parsing():
    assert cli._parse_override("n_list=8,12") == ("n_list", [8, 12])
    assert cli._parse_override("gamma=1e-4") == ("gamma", 1e-4)
    assert cli._parse_override("source=dm") == ("source", "dm")
