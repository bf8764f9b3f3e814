import numpy as np
import pytest

from qrna import cli, oracle
from qrna import density as dm
from qrna.errors import ParseError, ResourceLimit
from qrna.harness import REPORT_COLUMNS, Scenario, bundled, run
from qrna.requests import OK, StateSpec, target_state

SCENARIOS = ["ra_noiseless.scn", "ra_noisy.scn", "bell_purified.scn", "teleport.scn"]


def report_rows(report):
    lines = report.splitlines()
    assert lines[0].split("\t") == list(REPORT_COLUMNS)
    return [dict(zip(REPORT_COLUMNS, line.split("\t"))) for line in lines[1:]]


@pytest.mark.parametrize("text, line", [
    ("mode deterministic\nmode sideways\n", 2),
    ("seed 1\n\nseed -4\n", 3),
    ("set flink=0.9 colour=red\n", 1),
    ("# comment\nNode11 REQ 1 STATE spec=bel fmin=0 smax=0 targets=(A:1) enc=RAW\n", 2),
    ("launch\n", 1),
])
def test_scenario_errors_name_the_line(text, line):
    with pytest.raises(ParseError) as err:
        Scenario.parse(text, source="s.scn")
    assert err.value.line == line
    assert "s.scn" in str(err.value)


def test_scenario_header_and_requests():
    sc = Scenario.load(bundled("ra_noisy.scn"))
    assert sc.knobs == {"flink": 0.9, "rounds": 0}
    assert sc.topology == bundled("example.topo")
    ((who, req),) = sc.requests
    assert who == "Node11" and len(req.targets) == 3


def test_noiseless_report_row():
    (row,) = report_rows(run(Scenario.load(bundled("ra_noiseless.scn"))).report)
    assert row["request"] == "1" and row["status"] == OK
    assert float(row["f"]) == pytest.approx(1.0, abs=1e-9)
    assert float(row["s"]) == pytest.approx(0.0, abs=1e-9)
    assert row["teleports"] == "3" and row["why"] == "-"


def test_unknown_names_become_failures():
    text = bundled("ra_noiseless.scn").read_text().replace("Node77:", "Node78:")
    result = run(Scenario.parse(text, base=bundled("example.topo").parent))
    (row,) = report_rows(result.report)
    assert row["status"] == "FAIL" and not result.all_ok


@pytest.mark.parametrize("name", SCENARIOS)
def test_runs_are_byte_identical(name):
    a = run(Scenario.load(bundled(name)))
    b = run(Scenario.load(bundled(name)))
    assert a.trace == b.trace and a.report == b.report


@pytest.mark.parametrize("name", SCENARIOS)
def test_bundled_scenarios_agree_with_flat_replay(name):
    result = run(Scenario.load(bundled(name)))
    reg, deliveries = oracle.replay(result.trace)
    for b in reg.branches:
        assert b.p0 + b.p1 == pytest.approx(1.0, abs=1e-9)
    assert len(deliveries) == len(result.responses)
    for d, resp in zip(deliveries, result.responses):
        assert d.status == resp.status
        got = dm.DensityMatrix(d.rho, resp.rho.qubits)
        assert dm.trace_distance(resp.rho, got) <= 1e-9
        assert resp.measured_f == pytest.approx(d.f, abs=1e-9)
        assert resp.measured_s == pytest.approx(d.s, abs=1e-9)


def test_stochastic_runs_follow_the_seed():
    sc = lambda: Scenario.load(bundled("bell_purified.scn"))  # noqa: E731
    a = run(sc(), seed=9, mode="stochastic")
    b = run(sc(), seed=9, mode="stochastic")
    assert a.trace == b.trace


# -- command line ------------------------------------------------------------------

def test_cli_run_writes_trace_and_report(tmp_path, capsys):
    trace, report = tmp_path / "t.tsv", tmp_path / "r.tsv"
    code = cli.main(["run", "--scenario", str(bundled("ra_noiseless.scn")),
                     "--trace", str(trace), "--report", str(report)])
    assert code == 0
    assert report_rows(report.read_text())[0]["status"] == OK
    assert cli.main(["oracle", "--trace", str(trace)]) == 0
    out = capsys.readouterr().out
    assert "max_deviation=" in out and out.splitlines()[1].startswith("1\tOK\t")


def test_cli_run_fails_on_violation(capsys):
    assert cli.main(["run", "--scenario", str(bundled("ra_noisy.scn"))]) == 1
    assert "CONSTRAINT_VIOLATION" in capsys.readouterr().out


def test_cli_routes_and_tables(capsys):
    topo = str(bundled("example.topo"))
    assert cli.main(["routes", "--topology", topo]) == 0
    assert "table Node51\nNode52\t(direct)\n" in capsys.readouterr().out
    assert cli.main(["check-tables", "--topology", topo]) == 0
    assert "tables match" in capsys.readouterr().out


def test_cli_check_tables_reports_diff(tmp_path, capsys):
    golden = tmp_path / "g.golden"
    golden.write_text("table Node11\nNode19\t(direct)\nNet1\tLocal\n")
    assert cli.main(["check-tables", "--topology", str(bundled("example.topo")),
                     "--golden", str(golden)]) == 1
    assert "+Net5\tNode19" in capsys.readouterr().out


def test_cli_bad_input_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.topo"
    bad.write_text("net A\nnode X in Nowhere\n")
    assert cli.main(["routes", "--topology", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["routes", "--topology", str(tmp_path / "missing.topo")]) == 2


def test_cli_seed_range():
    with pytest.raises(SystemExit):
        cli.main(["run", "--scenario", "x.scn", "--seed", str(2**64)])


def test_oracle_flags_a_tampered_trace(tmp_path, capsys):
    result = run(Scenario.load(bundled("teleport.scn")))
    lines = result.trace.splitlines()
    idx = next(i for i, l in enumerate(lines) if "root=1" in l)
    fields = lines[idx].split("\t")
    fields = [f"f={float(f[2:]) - 1e-3!r}" if f.startswith("f=") else f for f in fields]
    lines[idx] = "\t".join(fields)
    path = tmp_path / "t.tsv"
    path.write_text("\n".join(lines) + "\n")
    assert cli.main(["oracle", "--trace", str(path)]) == 1
    capsys.readouterr()


def test_flat_register_rejects_oversized_replay():
    trace = run(Scenario.load(bundled("ra_noiseless.scn"))).trace
    with pytest.raises(ResourceLimit):
        oracle.replay(trace, cap=3)


def test_target_vector_matches_cluster():
    np.testing.assert_allclose(oracle.target_vector(StateSpec.cluster(3), 3, None),
                               target_state(StateSpec.cluster(3)), atol=1e-15)
