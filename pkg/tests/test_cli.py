import json

import numpy as np
import pytest

from locmix import __version__, cli, scenarios


def read_csv(path):
    lines = [ln for ln in open(path).read().splitlines() if ln and not ln.startswith("#")]
    return lines[0].split(","), [[float(v) for v in ln.split(",")] for ln in lines[1:]]


def header(path):
    return {ln[2:].split(":", 1)[0]: ln.split(":", 1)[1].strip()
            for ln in open(path).read().splitlines() if ln.startswith("# ") and ":" in ln}


def write_data(tmp_path, xs, name="data.csv"):
    p = tmp_path / name
    np.savetxt(p, np.asarray(xs), fmt="%g")
    return str(p)


@pytest.fixture
def fiber_data(tmp_path):
    return write_data(tmp_path, scenarios.fiber_sample())


class TestErrors:
    def test_empty_sample(self, tmp_path, capsys):
        p = tmp_path / "empty.csv"
        p.write_text("# nothing here\n")
        assert cli.run(["fit", "--family", "binomial:10", "--data", str(p)]) == 2
        assert "empty sample" in capsys.readouterr().err

    def test_missing_eps(self, fiber_data, capsys):
        assert cli.run(["marginal", "--family", "binomial:10", "--data", fiber_data]) == 2
        assert "--eps" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"family": "poisson", "mu": 2.0, "colour": "red"}))
        assert cli.run(["boundary", "--config", str(cfg)]) == 2

    def test_bad_family(self):
        assert cli.run(["boundary", "--family", "gamma", "--mu", "1"]) == 2

    def test_argparse_usage(self):
        with pytest.raises(SystemExit) as info:
            cli.run(["nonsense"])
        assert info.value.code == 2

    def test_numerical_failure(self, tmp_path, capsys):
        # every fiber of a single extreme observation is unbounded
        data = write_data(tmp_path, [10, 10, 10])
        assert cli.run(["fit", "--family", "binomial:10", "--data", data, "--order", "3"]) == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_mu0_outside_domain(self, fiber_data):
        assert cli.run(["fiber-scan", "--family", "binomial:10", "--data", fiber_data, "--mu0", "12"]) == 2

    def test_version(self, capsys):
        with pytest.raises(SystemExit):
            cli.run(["--version"])
        assert __version__ in capsys.readouterr().out


class TestConfig:
    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"family": {"kind": "binomial", "n": 10}, "mu": 5.0, "order": 4}))
        out = tmp_path / "b.csv"
        assert cli.run(["boundary", "--config", str(cfg), "--order", "3", "--out", str(out)]) == 0
        cols, rows = read_csv(out)
        assert cols == ["x", "c0", "c2", "c3"] and len(rows) == 11
        echo = json.loads(header(out)["config"])
        assert echo["order"] == 3 and echo["family"] == {"kind": "binomial", "n": 10}

    def test_defaults_recorded(self, tmp_path, fiber_data):
        out = tmp_path / "m.csv"
        cli.run(["marginal", "--family", "binomial:10", "--data", fiber_data, "--eps", "0.5",
                 "--mu-grid", "4", "6", "3", "--n-draws", "64", "--out", str(out)])
        h = header(out)
        assert json.loads(h["config"])["grid_size"] == 41
        assert h["seed"] == "0"
        assert open(out).readline().strip() == f"# locmix {__version__}"


class TestFit:
    def test_unmixed_order2(self, tmp_path):
        from locmix import nef
        data = write_data(tmp_path, nef.sample(nef.binomial(10), 4.0, 500, seed=0))
        out = tmp_path / "fit.json"
        assert cli.run(["fit", "--family", "binomial:10", "--data", data, "--order", "2",
                        "--out", str(out)]) == 0
        rep = json.load(open(out))
        assert abs(rep["lambda"][0]) < 0.3
        assert rep["meta"]["locmix"] == __version__
        assert rep["positivity"]["status"] in ("interior", "boundary")
        assert sum(rep["solver"]["grid_status"].values()) == 101

    def test_two_component_order6(self, tmp_path):
        xs, _ = scenarios.separated_sample()
        data = write_data(tmp_path, xs)
        out = tmp_path / "fit.json"
        assert cli.run(["fit", "--family", "binomial:12", "--data", data, "--order", "6",
                        "--out", str(out)]) == 0
        rep = json.load(open(out))
        assert rep["loglik"] > rep["unmixed"]["loglik"]

    def test_weighted_data_column(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text("3,2\n5,1\n6,0\n")
        out = tmp_path / "fit.json"
        assert cli.run(["fit", "--family", "binomial:10", "--data", str(p), "--order", "2",
                        "--out", str(out)]) == 0
        assert json.load(open(out))["unmixed"]["mu"] == pytest.approx(11 / 3)


class TestFiberScan:
    def run_scan(self, tmp_path, data, *extra):
        out, ann = tmp_path / "scan.csv", tmp_path / "scan.json"
        assert cli.run(["fiber-scan", "--family", "binomial:10", "--data", data, "--out", str(out),
                        "--annotations", str(ann), *extra]) == 0
        return read_csv(out), json.load(open(ann))

    def test_interior_lines(self, tmp_path, fiber_data):
        (cols, rows), ann = self.run_scan(tmp_path, fiber_data, "--lam2", "-1", "1", "11",
                                          "--lam3", "-1", "1", "11")
        assert cols == ["lambda2", "lambda3", "loglik", "singular_flag"] and len(rows) == 121
        lines = ann["singularity_lines"]
        assert [ln["x"] for ln in lines] == [1.0, 8.0]
        assert all(not ln["on_facet"] and ln["clearance"] > 0 for ln in lines)
        assert set(ann["hard_boundary"]["facets"]) >= {0.0, 10.0}

    def test_swapped_extreme_on_facet(self, tmp_path):
        data = write_data(tmp_path, scenarios.with_extreme(scenarios.fiber_sample()))
        _, ann = self.run_scan(tmp_path, data)
        line = [ln for ln in ann["singularity_lines"] if ln["x"] == 10.0][0]
        assert line["on_facet"] and line["clearance"] == 0.0

    def test_small_window_has_no_singular_cells(self, tmp_path, fiber_data):
        (_, rows), ann = self.run_scan(tmp_path, fiber_data, "--lam2", "-0.05", "0.05", "5",
                                       "--lam3", "-0.05", "0.05", "5")
        assert all(r[3] == 0 for r in rows) and ann["singular_cells"] == 0

    def test_higher_order_requires_fixed(self, tmp_path, fiber_data):
        assert cli.run(["fiber-scan", "--family", "binomial:10", "--data", fiber_data, "--order", "4",
                        "--out", str(tmp_path / "x.csv")]) == 2
        assert cli.run(["fiber-scan", "--family", "binomial:10", "--data", fiber_data, "--order", "4",
                        "--fixed", "0.01", "--lam2", "0", "0.1", "2", "--lam3", "0", "0", "1",
                        "--out", str(tmp_path / "x.csv")]) == 0


class TestRegion:
    def run_region(self, tmp_path, *extra):
        out = tmp_path / "region.csv"
        assert cli.run(["region", "--family", "binomial:10", "--mu", "5", "--lo", "2", "--hi", "8",
                        "--out", str(out), *extra]) == 0
        return read_csv(out)

    def test_grid_two(self, tmp_path):
        _, rows = self.run_region(tmp_path, "--grid-size", "2")
        assert len(rows) == 2

    @pytest.mark.parametrize("g", [3, 7, 10])
    def test_row_count(self, tmp_path, g):
        _, rows = self.run_region(tmp_path, "--grid-size", str(g))
        grid = np.linspace(2, 8, g)
        pairs = sum(1 for a in grid for b in grid if a <= 5 <= b and a != b)
        assert len(rows) == pairs + 1

    def test_central_coordinates(self, tmp_path):
        cols, rows = self.run_region(tmp_path, "--grid-size", "9", "--coords", "central", "--order", "3")
        assert cols == ["mu1", "mu2", "rho", "central2", "central3"]
        assert all(r[3] >= 0 for r in rows)

    def test_needs_interval(self, tmp_path):
        assert cli.run(["region", "--family", "binomial:10", "--mu", "5"]) == 2


class TestMarginal:
    def test_small_eps(self, tmp_path, fiber_data):
        out = tmp_path / "m.csv"
        assert cli.run(["marginal", "--family", "binomial:10", "--data", fiber_data, "--eps", "1e-6",
                        "--n-draws", "128", "--mu-grid", "3", "7", "9", "--out", str(out)]) == 0
        cols, rows = read_csv(out)
        assert cols == ["mu", "log_integrated", "mc_se", "log_unmixed", "discard_frac"]
        rows = np.array(rows)
        np.testing.assert_allclose(rows[:, 1], rows[:, 3], atol=1e-3)
        assert "max_discard_frac" in header(out)

    def test_byte_identical_rerun(self, tmp_path, fiber_data):
        args = ["marginal", "--family", "binomial:10", "--data", fiber_data, "--eps", "2",
                "--n-draws", "256", "--mu-grid", "4", "6", "5", "--seed", "3"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.run(args + ["--out", str(a)])
        cli.run(args + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestRateCheck:
    def test_discrete_rows(self, tmp_path):
        out = tmp_path / "r.csv"
        assert cli.run(["rate-check", "--family", "normal", "--check", "discrete", "--orders", "2", "3",
                        "--out", str(out)]) == 0
        lines = [ln.split(",") for ln in out.read_text().splitlines() if not ln.startswith("#")]
        assert lines[0] == ["check", "order", "slope", "expected", "inconclusive", "n_usable"]
        for row in lines[1:]:
            assert row[0] == "discrete"
            assert abs(float(row[2]) - float(row[3])) <= 0.3


class TestSimulate:
    def test_point_mass_and_determinism(self, tmp_path):
        args = ["simulate", "--family", "binomial:10", "--mixing", '{"atoms": [[4.0, 1.0]]}',
                "--count", "2000", "--seed", "8"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert cli.run(args + ["--out", str(a)]) == 0
        cli.run(args + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        xs = np.loadtxt(a, comments="#")
        assert xs.size == 2000 and abs(xs.mean() - 4.0) < 4 * np.sqrt(2.4 / 2000)
        assert header(a)["modes"] == "1"

    def test_two_point_bimodal(self, tmp_path):
        out = tmp_path / "s.csv"
        assert cli.run(["simulate", "--family", "binomial:12", "--mixing",
                        '{"atoms": [[3, 0.5], [9, 0.5]]}', "--count", "400", "--seed", "12",
                        "--out", str(out)]) == 0
        assert header(out)["modes"] == "2"
        np.testing.assert_array_equal(np.loadtxt(out, comments="#"), scenarios.separated_sample()[0])

    def test_no_temp_files_left(self, tmp_path):
        out = tmp_path / "s.csv"
        cli.run(["simulate", "--family", "poisson", "--mixing", '{"atoms": [[2, 1]]}', "--count", "5",
                 "--out", str(out)])
        assert [p.name for p in tmp_path.iterdir()] == ["s.csv"]
