import json

import numpy as np
import pytest

from dsfm.core import InputError, SubmodularityError
from dsfm.flow import solve_flow_ibfs
from dsfm.harness import (
    BenchmarkConfig,
    ImageParams,
    ParseError,
    cli_main,
    dump_instance,
    grid_counts,
    image_to_instance,
    load_instance,
    parse_instance,
    read_image,
    run_benchmark,
    write_image,
    write_instance,
)
from dsfm.harness.cli import EXIT_CODES, default_threads
from dsfm.harness.imaging import grow_regions, neighbour_pairs, square_tiles
from oracles import exhaustive_minimum, mincut_minimum, random_table_instance

SAMPLE = """dsfm-instance 1
# a comment
n 4 r 6
unary 0 -2.5
edge 0 1 1
square 0 1 2 3 0.5
region 3 0 1 2   # trailing comment
table 2 0 3 0 1 1 0
matching 2 0 1 2 3 1 0.25
"""


def test_parse_sample():
    inst = parse_instance(SAMPLE)
    assert (inst.n, inst.r) == (4, 6)
    assert [p.kind for p in inst.potentials] == ["unary", "edge-cut", "square", "region", "table", "matching-cut"]
    assert inst.potentials[0].delta == -2.5


def test_round_trip_is_exact(rng, tmp_path):
    for _ in range(5):
        inst = random_table_instance(rng)
        back = parse_instance(dump_instance(inst))
        for a, b in zip(inst.potentials, back.potentials):
            np.testing.assert_array_equal(a.support, b.support)
            np.testing.assert_array_equal(a.all_values, b.all_values)
    inst = parse_instance(SAMPLE)
    write_instance(inst, tmp_path / "x.dsfm")
    again = load_instance(tmp_path / "x.dsfm")
    assert dump_instance(again) == dump_instance(inst)
    assert exhaustive_minimum(again) == exhaustive_minimum(inst)


@pytest.mark.parametrize("text, line", [
    ("dsfm-instance 2\nn 1 r 1\nunary 0 1\n", 1),
    ("nonsense\n", 1),
    ("dsfm-instance 1\nn x r 1\n", 2),
    ("dsfm-instance 1\nn 2 r 1\nedge 0 1\n", 3),
    ("dsfm-instance 1\nn 2 r 1\n\nedge 0 5 1\n", 4),
    ("dsfm-instance 1\nn 2 r 1\ntable 1 0 0\n", 3),
    ("dsfm-instance 1\nn 2 r 1\nblob 0\n", 3),
    ("dsfm-instance 1\nn 2 r 1\nedge 0 1 -1\n", 3),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_instance(text, "case.dsfm")
    assert info.value.line == line
    assert f"case.dsfm:{line}:" in str(info.value)
    assert info.value.category == "parse"


def test_parse_count_mismatch():
    with pytest.raises(ParseError):
        parse_instance("dsfm-instance 1\nn 2 r 2\nunary 0 1\n")
    with pytest.raises(InputError):
        load_instance("/nonexistent/file.dsfm")


def test_supermodular_fixture_rejected(data_dir):
    with pytest.raises(SubmodularityError) as info:
        load_instance(data_dir / "supermodular.dsfm")
    X, Y = info.value.witness
    assert {frozenset(X), frozenset(Y)} == {frozenset({0}), frozenset({1})}
    assert load_instance(data_dir / "supermodular.dsfm", check=False).r == 1


def test_grid_construction_counts():
    inst = image_to_instance(np.random.default_rng(0).random((2, 2)), ImageParams(lambda_square=1.0))
    kinds = [p.kind for p in inst.potentials]
    assert kinds.count("unary") == 4 and kinds.count("edge-cut") == 6 and kinds.count("square") == 1
    c = grid_counts(5, 7)
    assert c["edges"] == len(neighbour_pairs(7, 5)) and c["squares"] == len(square_tiles(7, 5))
    assert len({tuple(sorted(p)) for p in neighbour_pairs(7, 5).tolist()}) == c["edges"]


@pytest.mark.parametrize("W, H, pixels, edges, squares, r", [
    (481, 321, 154401, 615200, 38400, (769601, 808001, 808051)),
    (640, 427, 273280, 1089921, 68160, (1363201, 1431361, 1431411)),
])
def test_grid_counts_for_benchmark_images(W, H, pixels, edges, squares, r):
    c = grid_counts(W, H, regions=50)
    assert (c["pixels"], c["edges"], c["squares"]) == (pixels, edges, squares)
    assert (c["r_mincut"], c["r_small_cliques"], c["r_large_cliques"]) == r


def test_square_tiles_are_disjoint():
    tiles = square_tiles(5, 6)
    assert tiles.shape == (6, 4)
    assert len(set(tiles.ravel().tolist())) == tiles.size
    np.testing.assert_array_equal(tiles[0], [0, 1, 6, 7])


def test_constant_image_has_uniform_edges():
    inst = image_to_instance(np.full((3, 3, 3), 0.4), ImageParams(lambda_pair=2.0))
    weights = {p.weight for p in inst.potentials if p.kind == "edge-cut"}
    assert weights == {2.0}
    assert all(p.delta == 0.0 for p in inst.potentials if p.kind == "unary")


def test_regions_are_disjoint_and_connected(rng):
    regs = grow_regions(12, 12, 4, (5, 15), rng)
    flat = [p for r in regs for p in r]
    assert len(flat) == len(set(flat)) and all(5 <= len(r) <= 15 for r in regs)
    for r in regs:
        seen, todo, members = {r[0]}, [r[0]], set(r)
        while todo:
            p = todo.pop()
            y, x = divmod(p, 12)
            for q in ((y - 1) * 12 + x, (y + 1) * 12 + x, p - 1 if x else -1, p + 1 if x < 11 else -1):
                if q in members and q not in seen:
                    seen.add(q)
                    todo.append(q)
        assert seen == members


def test_image_io_round_trip(tmp_path, rng):
    img = rng.random((5, 4, 3))
    write_image(img, tmp_path / "a.ppm")
    back = read_image(tmp_path / "a.ppm")
    assert back.shape == (5, 4, 3)
    np.testing.assert_allclose(back, np.rint(img * 255) / 255)
    write_image(img[:, :, 0], tmp_path / "g.pgm")
    assert read_image(tmp_path / "g.pgm").shape == (5, 4, 1)
    (tmp_path / "bad.ppm").write_bytes(b"not an image")
    with pytest.raises(InputError):
        read_image(tmp_path / "bad.ppm")


def test_ingested_fixture_matches_maxflow(data_dir):
    inst = image_to_instance(read_image(data_dir / "mincut_sample.ppm"), ImageParams(lambda_pair=0.5))
    ref = load_instance(data_dir / "mincut_sample.dsfm")
    assert inst.r == ref.r
    assert solve_flow_ibfs(inst).value == pytest.approx(mincut_minimum(ref), abs=1e-8)


def test_benchmark_structure_and_determinism(data_dir):
    cfg = BenchmarkConfig(solvers=["ekd", "rcdm", "ap"], budgets=[1, 5], trials=2)
    inst = load_instance(data_dir / "bench_tiny.dsfm")
    a = run_benchmark(cfg, inst)
    b = run_benchmark(cfg, inst)
    assert [(r.solver, r.budget) for r in a.rows] == [("ekd", None), ("rcdm", 1), ("rcdm", 5), ("ap", 1), ("ap", 5)]
    assert [r.values for r in a.rows] == [r.values for r in b.rows]
    assert all(r.complete and r.trials == 2 for r in a.rows)
    table = a.table()
    assert "averaged over 2 trials" in table
    rec = a.to_record()
    assert rec["schema"] == "dsfm-bench/1" and len(rec["rows"]) == 5
    json.dumps(rec)
    assert a.row("rcdm", 5).oracle_calls == [5 * inst.r] * 2


def test_benchmark_config_validation(tmp_path):
    with pytest.raises(InputError):
        BenchmarkConfig(solvers=["magic"])
    with pytest.raises(InputError):
        BenchmarkConfig(budgets=[0])
    (tmp_path / "c.json").write_text(json.dumps({"instance": "x.dsfm", "trials": 3}))
    cfg = BenchmarkConfig.from_file(tmp_path / "c.json")
    assert cfg.instance == str(tmp_path / "x.dsfm") and cfg.trials == 3
    (tmp_path / "d.json").write_text(json.dumps({"bogus": 1}))
    with pytest.raises(InputError):
        BenchmarkConfig.from_file(tmp_path / "d.json")


def test_benchmark_records_failures(data_dir):
    cfg = BenchmarkConfig(solvers=["ekd"], trials=2, strict=True, oracle="wolfe:1")
    res = run_benchmark(cfg, load_instance(data_dir / "bench_tiny.dsfm"))
    row = res.row("ekd")
    assert row.failures == 2 and not row.complete
    assert "failed" in res.table()


def test_cli_solve(data_dir, capsys, tmp_path):
    out = tmp_path / "out.json"
    code = cli_main(["solve", str(data_dir / "mincut_sample.dsfm"), "--solver", "ibfs", "--json", str(out)])
    assert code == 0
    rec = json.loads(out.read_text())
    ref = mincut_minimum(load_instance(data_dir / "mincut_sample.dsfm"))
    assert rec["value"] == pytest.approx(ref, abs=1e-8)
    assert rec["gap"] <= 1e-8
    assert "certified  yes" in capsys.readouterr().out


def test_cli_gradient_solver(data_dir, capsys):
    code = cli_main(["solve", str(data_dir / "bench_tiny.dsfm"), "--solver", "acdm", "--budget", "50",
                     "--show-set", "--tol", "1e-9"])
    assert code == 0
    assert "minimizer  [5, 6, 9, 10, 13, 14]" in capsys.readouterr().out


def test_cli_error_exits(data_dir, capsys, tmp_path):
    assert cli_main(["validate", str(data_dir / "supermodular.dsfm")]) == EXIT_CODES["submodularity"]
    assert cli_main(["solve", str(data_dir / "supermodular.dsfm")]) == EXIT_CODES["submodularity"]
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "submodularity"
    code = cli_main(["solve", str(data_dir / "regions.dsfm"), "--solver", "ekd", "--strict",
                     "--oracle-kind", "region=wolfe:10"])
    assert code == EXIT_CODES["oracle-exactness"]
    (tmp_path / "bad.dsfm").write_text("dsfm-instance 1\nn 1 r 1\nunary 0\n")
    assert cli_main(["solve", str(tmp_path / "bad.dsfm")]) == EXIT_CODES["parse"]


def test_cli_validate_and_ingest(data_dir, capsys, tmp_path):
    assert cli_main(["validate", str(data_dir / "small_cliques.dsfm"), "--threads", "2"]) == 0
    assert "0 invalid" in capsys.readouterr().out
    out = tmp_path / "x.dsfm"
    assert cli_main(["ingest", str(data_dir / "bench_tiny.ppm"), "-o", str(out), "--lambda-pair", "0.5",
                     "--lambda-square", "0.5", "--unary-scale", "3"]) == 0
    assert dump_instance(load_instance(out)) == dump_instance(load_instance(data_dir / "bench_tiny.dsfm"))


def test_cli_diagnose(data_dir, capsys, tmp_path):
    inst = random_table_instance(np.random.default_rng(1), n_max=6)
    write_instance(inst, tmp_path / "d.dsfm")
    assert cli_main(["diagnose", str(tmp_path / "d.dsfm"), "--samples", "10"]) == 0
    assert "violations 0" in capsys.readouterr().out


def test_thread_count(monkeypatch):
    monkeypatch.setenv("DSFM_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("DSFM_THREADS", "zero")
    with pytest.raises(InputError):
        default_threads()
