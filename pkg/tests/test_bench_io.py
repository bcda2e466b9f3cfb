import json
from pathlib import Path

import numpy as np
import pytest

from copmdp.bench_io import cli, tsplib
from copmdp.bench_io.files import FileFormatError, Record, generate, read_records, write_records
from copmdp.bench_io.report import MissingReference, Result, format_table, gap, report
from copmdp.bench_io.svg import render_svg
from copmdp.core import PartialSolution, Step
from copmdp.oracles import solve_exact
from copmdp.policy import config_for, init_model, save_model
from copmdp.problems import PathCvrp, PathTsp, random_instance

from conftest import PROBLEMS

FIX = Path(__file__).parent / "fixtures"


# -- generation and files -------------------------------------------------------------


@pytest.mark.parametrize("problem", PROBLEMS)
def test_generate_is_byte_identical(problem, tmp_path):
    generate(problem, 7, 5, 3, tmp_path / "a.jsonl")
    generate(problem, 7, 5, 3, tmp_path / "b.jsonl")
    generate(problem, 7, 5, 4, tmp_path / "c.jsonl")
    a = (tmp_path / "a.jsonl").read_bytes()
    assert a == (tmp_path / "b.jsonl").read_bytes()
    assert a != (tmp_path / "c.jsonl").read_bytes()


def test_generated_prefix_is_stable():
    # instance i depends only on (seed, i), not on how many are drawn
    few = generate("tsp", 5, 3, 9)
    many = generate("tsp", 5, 10, 9)
    assert all(np.array_equal(a.coords, b.coords) for a, b in zip(few, many))


def test_cvrp_capacity_by_size():
    assert generate("cvrp", 100, 1, 0)[0].capacity == 50
    assert generate("cvrp", 10, 1, 0, capacity=12)[0].capacity == 12


def test_atsp_generator_breaks_symmetry():
    inst = generate("atsp", 8, 1, 0)[0]
    assert not np.allclose(inst.cost, inst.cost.T)
    flat = generate("atsp", 8, 1, 0, asym_noise=0.0)[0]
    assert np.allclose(flat.cost, flat.cost.T)


def test_generate_rejects_bad_sizes():
    with pytest.raises(ValueError):
        generate("tsp", 0, 1, 0)


@pytest.mark.parametrize("problem", PROBLEMS)
def test_dataset_round_trip(problem, tmp_path):
    rng = np.random.default_rng(0)
    recs = []
    for i in range(4):
        inst = random_instance(problem, 5, rng)
        sol, obj = solve_exact(inst)
        recs.append(Record(inst, sol, obj, {"index": i}))
    write_records(tmp_path / "d.jsonl", "dataset", recs, problem=problem)
    header, back = read_records(tmp_path / "d.jsonl", "dataset")
    assert header["problem"] == problem and header["version"] == 1
    for r, b in zip(recs, back):
        assert b.solution == r.solution and b.objective == r.objective and b.extra == {"index": r.extra["index"]}
        assert b.instance.objective(b.solution) == r.objective
    write_records(tmp_path / "e.jsonl", "dataset", back, problem=problem)
    assert (tmp_path / "d.jsonl").read_bytes() == (tmp_path / "e.jsonl").read_bytes()


def test_bad_files_are_rejected(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text("")
    with pytest.raises(FileFormatError):
        read_records(p)
    p.write_text('{"format":"other","version":1}\n')
    with pytest.raises(FileFormatError):
        read_records(p)
    p.write_text('{"format":"copmdp","version":1,"kind":"instances"}\n{"problem":"tsp"}\n')
    with pytest.raises(FileFormatError):
        read_records(p)
    generate("tsp", 4, 1, 0, p)
    with pytest.raises(FileFormatError):
        read_records(p, "dataset")
    with pytest.raises(FileFormatError):
        write_records(p, "notes", [])


# -- TSPLib / CVRPLib -------------------------------------------------------------------


def test_euc_2d_rounding():
    assert tsplib.euc_2d(np.array([0, 0]), np.array([3, 4])) == 5
    assert tsplib.nint(2.5) == 3 and tsplib.nint(2.49) == 2
    prob = tsplib.parse_tsplib(FIX / "tri3.tsp")
    assert tsplib.route_length(prob.coords, [0, 1, 2, 0]) == 16
    assert prob.nint_matrix()[0, 1] == 5


def test_tsplib_fields_and_round_trip(tmp_path):
    prob = tsplib.parse_tsplib(FIX / "tri3.tsp")
    assert prob.name == "tri3" and prob.type == "TSP" and prob.dimension == 3
    np.testing.assert_array_equal(prob.coords, [[0, 0], [3, 4], [6, 0]])
    tsplib.write(prob, tmp_path / "t.tsp")
    again = tsplib.parse(tmp_path / "t.tsp")
    np.testing.assert_array_equal(again.coords, prob.coords)
    tsplib.write(again, tmp_path / "u.tsp")
    assert (tmp_path / "t.tsp").read_text() == (tmp_path / "u.tsp").read_text()


def test_cvrplib_depot_mapping(tmp_path):
    prob = tsplib.parse_cvrplib(FIX / "small6.vrp")
    assert prob.depot == 2 and prob.capacity == 10
    assert list(prob.demands) == [4, 6, 0, 5, 1, 3]
    inst = prob.instance(scaled=False)
    assert isinstance(inst, PathCvrp) and inst.depot == 0 and inst.capacity == 10
    np.testing.assert_array_equal(inst.coords[0], [15, 15])
    assert list(inst.demands[1:]) == [4, 6, 5, 1, 3]
    assert prob.node_order()[0] == 2
    tsplib.write(prob, tmp_path / "v.vrp")
    back = tsplib.parse_cvrplib(tmp_path / "v.vrp")
    assert back.depot == 2 and list(back.demands) == list(prob.demands)


def test_unsupported_and_malformed_files(tmp_path):
    with pytest.raises(tsplib.UnsupportedEdgeWeightType):
        tsplib.parse(FIX / "ewt_geo.tsp")
    with pytest.raises(tsplib.MalformedSection):
        tsplib.parse(FIX / "short_section.tsp")
    with pytest.raises(tsplib.TsplibError):
        tsplib.parse_cvrplib(FIX / "tri3.tsp")
    bad = tmp_path / "b.vrp"
    bad.write_text((FIX / "small6.vrp").read_text().replace("3\n-1", "3"))
    with pytest.raises(tsplib.MalformedSection):
        tsplib.parse(bad)


def test_ring_fixture_optimum():
    prob = tsplib.parse_tsplib(FIX / "ring12.tsp")
    inst = prob.instance()
    sol, _ = solve_exact(inst)
    route = [prob.node_order()[i] for i in inst.route(sol)]
    assert tsplib.route_length(prob.coords, route) == 120


# -- reports --------------------------------------------------------------------------------


def test_gap_conventions():
    assert gap(105, 100, maximize=False) == pytest.approx(0.05)
    assert gap(101, 100, maximize=True) == pytest.approx(-0.01)
    rep = report("tsp", [Result(105, 100, 0.5), Result(100, 100, 0.25)], "greedy")
    assert rep["count"] == 2 and rep["mean_gap"] == pytest.approx(0.025) and rep["seconds"] == 0.75
    assert "2.50%" in format_table([rep])
    assert "-1.00%" in format_table([report("op", [Result(101, 100)])])
    with pytest.raises(MissingReference):
        report("tsp", [Result(1.0, None)])


# -- SVG ---------------------------------------------------------------------------------------


def polyline_points(doc):
    return [line.split('points="')[1].split('"')[0].split() for line in doc.splitlines() if "<polyline" in line]


def test_svg_square_tour():
    xy = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    inst = PathTsp.tour(xy)
    doc = render_svg(inst, PartialSolution.of([1, 2, 3]))
    (pts,) = polyline_points(doc)
    assert len(pts) - 1 == 4 and pts[0] == pts[-1]


def test_svg_empty_solution_draws_nodes_only(tmp_path):
    inst = PathTsp.tour(np.random.default_rng(0).random((5, 2)))
    doc = render_svg(inst, PartialSolution.of([]), tmp_path / "e.svg", title="a<b")
    assert polyline_points(doc) == []
    assert doc.count("<circle") + doc.count("<rect") == 6
    assert (tmp_path / "e.svg").read_text() == doc and "a&lt;b" in doc


def test_svg_cvrp_subtours():
    xy = np.array([[1, 0], [2, 0], [0, 1], [0, 2]], dtype=float)
    inst = PathCvrp.fresh([0.0, 0.0], xy, [4, 6, 5, 1], capacity=10)
    sol = PartialSolution((Step(1), Step(2), Step(3, True), Step(4, True)))
    doc = render_svg(inst, sol)
    assert len(polyline_points(doc)) == 3
    assert len({line.split('stroke="')[1][:7] for line in doc.splitlines() if "<polyline" in line}) == 3


def test_svg_needs_coordinates():
    with pytest.raises(TypeError):
        render_svg(random_instance("kp", 3, np.random.default_rng(0)), PartialSolution.of([], ordered=False))


# -- CLI -----------------------------------------------------------------------------------


def run(args, capsys=None):
    code = cli.main([str(a) for a in args])
    out = capsys.readouterr().out if capsys else ""
    return code, out


def tiny_model(problem, path):
    save_model(init_model(config_for(problem, d=8, heads=2, layers=1, d_ff=8), np.random.default_rng(0)), path)


def test_cli_generate_solve_eval_render(tmp_path, capsys):
    inst = tmp_path / "i.jsonl"
    assert run(["generate", "--problem", "cvrp", "--n", 6, "--count", 4, "--seed", 1, "--out", inst])[0] == 0
    data = tmp_path / "d.jsonl"
    assert run(["solve-exact", "--data", inst, "--out", data, "--workers", 2])[0] == 0
    serial = tmp_path / "s.jsonl"
    assert run(["make-dataset", "--problem", "cvrp", "--n", 6, "--count", 4, "--seed", 1, "--out", serial, "--workers", 1])[0] == 0
    _, a = read_records(data)
    _, b = read_records(serial)
    assert [r.solution for r in a] == [r.solution for r in b]
    model = tmp_path / "m.npz"
    tiny_model("cvrp", model)
    capsys.readouterr()
    res = tmp_path / "r.jsonl"
    code, out = run(["eval", "--model", model, "--data", data, "--out", res, "--beam", 2, "--report", tmp_path / "rep.json", "--workers", 1], capsys)
    assert code == 0 and "beam2" in out
    assert json.loads((tmp_path / "rep.json").read_text())[0]["count"] == 4
    _, rows = read_records(res, "results")
    assert all(r.instance.is_feasible(r.solution) and r.extra["reference"] is not None for r in rows)
    svg = tmp_path / "x.svg"
    assert run(["render", "--data", data, "--index", 1, "--out", svg])[0] == 0
    assert svg.read_text().startswith("<svg")
    assert run(["render", "--data", data, "--index", 9, "--out", svg])[0] == cli.EXIT_USAGE


def test_cli_train_with_config(tmp_path, capsys):
    data = tmp_path / "d.jsonl"
    run(["make-dataset", "--problem", "tsp", "--n", 6, "--count", 8, "--seed", 0, "--out", data, "--workers", 1])
    cfg = tmp_path / "c.yaml"
    cfg.write_text("epochs: 5\nbatch_size: 4\nd: 8\nheads: 2\nlayers: 1\nd_ff: 8\n")
    log = tmp_path / "log.jsonl"
    code, _ = run(["train", "--config", cfg, "--data", data, "--held-out", data, "--out", tmp_path / "m.npz", "--epochs", 2, "--log", log], capsys)
    assert code == 0
    lines = [json.loads(x) for x in log.read_text().splitlines()]
    assert len(lines) == 2 and {"epoch", "loss", "gap", "wall_time"} <= set(lines[0])
    cfg.write_text("epoch: 5\n")
    assert run(["train", "--config", cfg, "--data", data, "--out", tmp_path / "n.npz"], capsys)[0] == cli.EXIT_USAGE


def test_cli_knn_no_op_files_identical(tmp_path):
    data = tmp_path / "d.jsonl"
    run(["make-dataset", "--problem", "tsp", "--n", 7, "--count", 6, "--seed", 2, "--out", data, "--workers", 1])
    model = tmp_path / "m.npz"
    tiny_model("tsp", model)
    run(["eval", "--model", model, "--data", data, "--out", tmp_path / "a.jsonl", "--workers", 1])
    run(["eval", "--model", model, "--data", data, "--out", tmp_path / "b.jsonl", "--knn", 8, "--workers", 2])
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_cli_verify_and_bench(tmp_path, capsys):
    code, out = run(["verify", "--problems", "tsp", "kp", "--count", 20], capsys)
    assert code == 0 and out.count("PASS") == 4
    code, out = run(["bench", FIX / "ring12.tsp", "--exact", "--opt", 120], capsys)
    assert code == 0 and json.loads(out.splitlines()[0])["length"] == 120 and "0.00%" in out
    code, out = run(["bench", FIX / "small6.vrp", "--exact"], capsys)
    assert code == 0 and json.loads(out.splitlines()[0])["name"] == "small6"


def test_cli_exit_codes(tmp_path, capsys):
    assert run(["generate", "--problem", "tsp", "--n", 4])[0] == cli.EXIT_USAGE
    assert run(["eval", "--model", tmp_path / "none.npz", "--data", tmp_path / "none.jsonl", "--out", tmp_path / "o"])[0] == cli.EXIT_INPUT
    assert run(["bench", FIX / "ewt_geo.tsp", "--exact"])[0] == cli.EXIT_INPUT
    big = tmp_path / "big.jsonl"
    generate("cvrp", 30, 1, 0, big)
    assert run(["solve-exact", "--data", big, "--out", tmp_path / "o.jsonl", "--workers", 1])[0] == cli.EXIT_SIZE
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-verb"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
