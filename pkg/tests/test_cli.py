import json

import pytest

from imrm.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, build_parser, main, parse

FAST = ["--iters", "6", "--k-init", "4", "--thin", "1"]


@pytest.fixture
def edges(tmp_path):
    prefix = tmp_path / "d"
    assert main(["synth", "--family", "mhw", "--k", "2", "--size", "8", "--rho-c", "0.8",
                 "--rho-0", "0.05", "--seed", "1", "--out", str(prefix)]) == EXIT_OK
    return tmp_path / "d.edges"


def test_synth_writes_edges_and_truth(edges):
    truth = edges.with_name("d.truth.csv").read_text().splitlines()
    assert truth[0] == "vertex,features" and len(truth) == 17
    assert all(len(line.split('"')[1].split(",")) == 2 for line in truth[1:])
    assert edges.read_text().strip()


@pytest.mark.parametrize("argv", [
    ["synth", "--family", "hw"],
    ["synth", "--k", "3"],
    ["synth", "--family", "zz", "--k", "3", "--rho-c", "0.5"],
    ["synth", "--family", "hw", "--k", "3", "--rho-c", "0.5,0.6"],
    ["fit", "--bogus-flag"],
    ["frobnicate"],
])
def test_usage_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "x")] if argv[0] == "synth" else argv) == EXIT_USAGE


def test_missing_input_is_io_error(tmp_path):
    assert main(["stats", "--input", str(tmp_path / "nope.edges")]) == EXIT_IO
    assert main(["fit", "--input", str(tmp_path / "nope.edges")] + FAST) == EXIT_IO


def test_malformed_input_is_io_error(tmp_path):
    bad = tmp_path / "bad.edges"
    bad.write_text("0 1\nzero two\n")
    assert main(["stats", "--input", str(bad)]) == EXIT_IO


def test_unknown_model_is_usage_error(edges, tmp_path):
    assert main(["fit", "--input", str(edges), "--model", "mmsb", "--out", str(tmp_path / "f")] + FAST) == EXIT_USAGE


def test_stats_prints_json(edges, capsys):
    assert main(["stats", "--input", str(edges)]) == EXIT_OK
    d = json.loads(capsys.readouterr().out)
    assert d["n"] == 16 and {"m", "density", "r", "c", "L"} <= set(d)


@pytest.mark.parametrize("model", ["imhw", "irm"])
def test_fit_is_byte_deterministic(edges, tmp_path, model):
    outs = []
    for tag in "ab":
        prefix = tmp_path / tag
        assert main(["fit", "--input", str(edges), "--model", model, "--out", str(prefix)] + FAST) == EXIT_OK
        outs.append([(tmp_path / f"{tag}.{ext}").read_bytes() for ext in ("trace.csv", "snapshots.json", "state.json")])
    assert outs[0] == outs[1]


def test_irm_trace_has_zero_hmc_column(edges, tmp_path):
    main(["fit", "--input", str(edges), "--model", "irm", "--out", str(tmp_path / "f")] + FAST)
    rows = (tmp_path / "f.trace.csv").read_text().splitlines()
    assert rows[0] == "iter,K,logjoint,hmc_acc,sm_acc,ms"
    assert all(r.split(",")[3] == "0.0" for r in rows[1:])


def test_resume_continues_numbering(edges, tmp_path):
    main(["fit", "--input", str(edges), "--model", "imdb", "--out", str(tmp_path / "f")] + FAST)
    assert main(["fit", "--input", str(edges), "--model", "imdb", "--resume", str(tmp_path / "f.state.json"),
                 "--out", str(tmp_path / "g"), "--iters", "9", "--k-init", "4", "--thin", "1"]) == EXIT_OK
    rows = (tmp_path / "g.trace.csv").read_text().splitlines()[1:]
    assert [int(r.split(",")[0]) for r in rows] == [7, 8, 9]
    assert main(["fit", "--input", str(edges), "--model", "imdb", "--resume", str(tmp_path / "f.state.json"),
                 "--out", str(tmp_path / "h")] + FAST) == EXIT_USAGE


def test_eval_baselines_and_snapshots(edges, tmp_path, capsys):
    fit = tmp_path / "f"
    assert main(["fit", "--input", str(edges), "--model", "ihw", "--holdout", "0.1", "--split-seeds", "0,1",
                 "--out", str(fit)] + FAST) == EXIT_OK
    capsys.readouterr()
    snaps = [str(tmp_path / f"f.split{s}.snapshots.json") for s in (0, 1)]
    ev = tmp_path / "e"
    assert main(["eval", "--input", str(edges), "--holdout", "0.1", "--splits", "2", "--baselines", "all",
                 "--snapshots", *snaps, "--out", str(ev)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    rows = [json.loads(line) for line in lines]
    assert len(rows) == 2 * 5
    assert all(set(r) == {"model", "split_seed", "auc", "pll"} for r in rows)
    assert sum(r["model"] == "IHW" for r in rows) == 2
    assert (tmp_path / "e.summary.jsonl").read_text().splitlines() == lines
    assert (tmp_path / "e.Jacc.split1.scores.csv").read_text().startswith("i,j,score,label\n")
    # snapshots fitted on other splits or hold-out fractions are refused
    assert main(["eval", "--input", str(edges), "--holdout", "0.1", "--splits", "1", "--split-seed", "5",
                 "--snapshots", snaps[0], "--out", str(ev)]) == EXIT_USAGE
    assert main(["eval", "--input", str(edges), "--holdout", "0.2", "--splits", "2",
                 "--snapshots", snaps[0], "--out", str(ev)]) == EXIT_USAGE


def test_eval_scores_are_byte_deterministic(edges, tmp_path, capsys):
    for tag in "ab":
        assert main(["eval", "--input", str(edges), "--holdout", "0.1", "--splits", "1", "--baselines", "ComN",
                     "--models", "irm", "--out", str(tmp_path / tag)] + FAST) == EXIT_OK
    for name in ("IRM", "ComN"):
        a = (tmp_path / f"a.{name}.split0.scores.csv").read_bytes()
        assert a == (tmp_path / f"b.{name}.split0.scores.csv").read_bytes()


def test_config_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("iters = 77\nalpha = 1.5  # comment\nmodel = irm\n")
    cfg = parse(["fit", "--config", str(conf), "--iters", "12"])
    h = cfg.hyper()
    assert h.iterations == 12 and h.alpha == 1.5 and cfg.options["model"] == "irm"
    assert parse(["fit"]).hyper().iterations == 2500


def test_config_rejects_unknown_keys(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("iterz = 5\n")
    assert main(["fit", "--config", str(conf)]) == EXIT_USAGE
    conf.write_text("no equals sign\n")
    assert main(["fit", "--config", str(conf)]) == EXIT_USAGE


@pytest.mark.parametrize("command", ["synth", "fit", "eval", "stats"])
def test_help_lists_every_flag(command, capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args([command, "--help"])
    text = capsys.readouterr().out
    sub = [a for a in build_parser()._subparsers._group_actions[0].choices[command]._actions]
    for action in sub:
        for flag in action.option_strings:
            assert flag in text
