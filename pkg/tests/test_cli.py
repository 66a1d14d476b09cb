import json

import pytest

from graphssl.cli import build_parser, main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


SMALL = ["--n", "120", "--noise", "0.1", "--trials", "2", "--seed", "7"]


def test_bench_writes_report(tmp_path, capsys):
    out = tmp_path / "report.json"
    code, _, err = run(["bench", "--dataset", "two-moons", *SMALL, "--solver", "igrf",
                        "--labels-per-class", "3", "--out", str(out)], capsys)
    assert code == 0
    data = json.loads(out.read_text())
    assert data["config"]["base_seed"] == 7
    assert data["config"]["solver"]["name"] == "igrf"
    assert len(data["per_trial"]) == 2
    assert "effective configuration" in err and "labels-per-class = 3" in err


def test_example_one_parameters_reach_the_solver(tmp_path, capsys):
    out = tmp_path / "one.json"
    code, _, _ = run(["bench", *SMALL, "--solver", "ipl", "--alpha1", "0.001", "--alpha2", "0.02",
                      "--alpha3", "1", "--out", str(out)], capsys)
    assert code == 0
    assert json.loads(out.read_text())["config"]["solver"]["alphas"] == [0.001, 0.02, 1.0]
    code, stdout, _ = run(["solve", "--n", "120", "--solver", "ipl", "--alpha1", "0.001", "--alpha2", "0.02",
                           "--alpha3", "1"], capsys)
    assert code == 0 and stdout.startswith("accuracy")


def test_partial_alphas_fill_from_defaults(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["bench", *SMALL, "--solver", "igrf", "--alpha2", "0.0", "--out", str(out)], capsys)[0] == 0
    assert json.loads(out.read_text())["config"]["solver"]["alphas"] == [0.99, 0.0, 0.05]


def test_unknown_flag_is_a_usage_error(capsys):
    code, _, err = run(["bench", "--frobnicate"], capsys)
    assert code == 1
    assert "usage:" in err and "--frobnicate" in err


def test_bad_values_are_usage_errors(capsys):
    assert run(["bench", "--trials", "many"], capsys)[0] == 1
    assert run(["bench", "--solver", "laplace"], capsys)[0] == 1
    assert run(["bench", "--trials", "0"], capsys)[0] == 1
    assert run(["bench", "--dataset", "csv"], capsys)[0] == 1
    assert run([], capsys)[0] == 1


def test_runtime_failure_exit_code(tmp_path, capsys):
    code, _, err = run(["bench", "--dataset", "csv", "--path", str(tmp_path / "missing.csv")], capsys)
    assert code == 2 and "error" in err


def test_help_lists_defaults(capsys):
    for name in ("generate", "graph", "solve", "bench", "sweep", "report"):
        with pytest.raises(SystemExit) as info:
            main([name, "--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        assert "--config" in text and "(default:" in text
    with pytest.raises(SystemExit):
        main(["bench", "--help"])
    text = capsys.readouterr().out
    for flag in ("--dataset", "--n", "--noise", "--solver", "--labels-per-class", "--trials", "--seed",
                 "--out", "--alpha1", "--jobs"):
        assert flag in text


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# moons\nn = 120\nnoise = 0.1\ntrials = 3\nseed = 11\nsolver = mgrf\nlabels_per_class = 2\n")
    out = tmp_path / "r.json"
    code, _, err = run(["bench", "--config", str(cfg), "--trials", "2", "--out", str(out)], capsys)
    assert code == 0
    data = json.loads(out.read_text())
    assert len(data["per_trial"]) == 2  # flag beats file
    assert data["config"]["base_seed"] == 11  # file beats default
    assert data["config"]["sampling"]["per_class"] == 2
    assert data["config"]["solver"]["max_iterations"] == 1500  # default
    assert "trials = 2" in err


def test_config_file_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("frobnicate = 1\n")
    code, _, err = run(["bench", "--config", str(cfg)], capsys)
    assert code == 1 and "bad.cfg:1" in err


def test_bench_is_deterministic_across_jobs(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = ["bench", *SMALL, "--trials", "4", "--solver", "mgrf"]
    assert run(base + ["--out", str(a)], capsys)[0] == 0
    assert run(base + ["--jobs", "2", "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("GRAPHSSL_OUTPUT_DIR", str(tmp_path / "outdir"))
    assert run(["bench", *SMALL, "--solver", "mgrf"], capsys)[0] == 0
    assert (tmp_path / "outdir" / "bench.json").exists()


def test_multi_run_table(tmp_path, capsys):
    out = tmp_path / "t.txt"
    code, _, _ = run(["bench", *SMALL, "--solver", "mgrf,poisson", "--labels-per-class", "1,2",
                      "--out", str(out)], capsys)
    assert code == 0
    text = out.read_text()
    header, mgrf_row, poisson_row = text.splitlines()[:3]
    assert header.split()[-2:] == ["1", "2"]
    assert mgrf_row.startswith("MGRF") and poisson_row.startswith("POISSON")


def test_report_renders_saved_json(tmp_path, capsys):
    src = tmp_path / "r.json"
    run(["bench", *SMALL, "--solver", "mgrf", "--out", str(src)], capsys)
    for fmt, marker in (("table-text", "config:"), ("csv", "trial,seed")):
        code, stdout, _ = run(["report", "--input", str(src), "--format", fmt], capsys)
        assert code == 0 and stdout.startswith(marker)
    code, stdout, _ = run(["report", "--input", str(src)], capsys)
    assert stdout == src.read_text()


def test_generate_and_load_back(tmp_path, capsys):
    out = tmp_path / "moons.csv"
    assert run(["generate", "--n", "40", "--n-minor", "10", "--seed", "3", "--out", str(out)], capsys)[0] == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x0,x1,label" and len(lines) == 41
    res = tmp_path / "r.json"
    code, _, _ = run(["bench", "--dataset", "csv", "--path", str(out), "--standardize", "false",
                      "--solver", "grf", "--labels-per-class", "2", "--trials", "2", "--out", str(res)], capsys)
    assert code == 0
    assert json.loads(res.read_text())["per_trial"][0]["confusion"][1] != [0, 0]


def test_graph_stats_and_edges(tmp_path, capsys):
    out = tmp_path / "edges.csv"
    code, stdout, _ = run(["graph", "--n", "50", "--k", "5", "--out", str(out)], capsys)
    assert code == 0
    stats = json.loads(stdout)
    assert stats["n"] == 50 and stats["connected"]
    assert len(out.read_text().splitlines()) == stats["edges"] + 1


def test_sweep(tmp_path, capsys):
    out = tmp_path / "s.json"
    code, _, err = run(["sweep", *SMALL, "--solver", "mgrf", "--grid", "alpha1=0.5,0.9", "--grid", "k=6,8",
                        "--out", str(out)], capsys)
    assert code == 0
    data = json.loads(out.read_text())
    assert [p["params"] for p in data["grid"]] == [
        {"alpha1": 0.5, "graph.k": 6}, {"alpha1": 0.5, "graph.k": 8},
        {"alpha1": 0.9, "graph.k": 6}, {"alpha1": 0.9, "graph.k": 8},
    ]
    assert 0 <= data["best"] < 4
    assert run(["sweep", "--grid", "k=1,2,3", "--grid", "alpha1=0.1,0.2", "--cap", "5"], capsys)[0] == 1
    assert run(["sweep", "--grid", "colour=1"], capsys)[0] == 1


def test_scatter_from_solve(tmp_path, capsys):
    svg = tmp_path / "s.svg"
    assert run(["solve", "--n", "60", "--solver", "mgrf", "--scatter", str(svg)], capsys)[0] == 0
    assert svg.read_text().count('class="point"') == 60


def test_parser_builds():
    assert build_parser().prog == "graphssl"
