import csv
import io
import math

import numpy as np
import pytest

from threshold_dynamics import experiments
from threshold_dynamics.cli import EXIT_CHECK_FAILED, EXIT_OK, main, parse_args, read_config
from threshold_dynamics.experiments import ConvergenceReport, first_split
from threshold_dynamics.grid import load_snapshot


class TestReport:
    def test_orders_and_csv(self):
        rep = ConvergenceReport("mbo", "grim-reaper", "graph-lattice", 100)
        rep.add(8, 4e-3)
        rep.add(16, 1e-3)
        assert rep.orders == [pytest.approx(2.0)]
        rows = list(csv.reader(io.StringIO(rep.to_csv())))
        assert rows[0] == ["scheme", "problem", "backend", "resolution", "num_steps", "error", "order"]
        assert rows[1][-1] == "" and float(rows[2][-1]) == pytest.approx(2.0)

    def test_doubling_enforced(self):
        rep = ConvergenceReport("mbo", "grim-reaper", "graph-lattice", 100)
        rep.add(8, 1.0)
        with pytest.raises(ValueError):
            rep.add(12, 0.5)
        with pytest.raises(ValueError):
            experiments.run_grim_reaper("mbo", [8, 24], N=200)

    def test_l2_error_scaling(self):
        f = experiments.grim_reaper_initial(201)
        assert experiments.l2_error(f, f.heights + 1.0) == pytest.approx(math.sqrt(f.size * f.spacing[0]))

    def test_small_grim_reaper_deterministic(self):
        a = experiments.run_grim_reaper("mbo", [4, 8], N=200, T=0.25)
        b = experiments.run_grim_reaper("mbo", [4, 8], N=200, T=0.25)
        assert a.errors == b.errors
        assert 0 < a.errors[1] < a.errors[0]

    def test_first_split(self):
        assert first_split([1, 1, 2, 2, 0]) == 2
        assert first_split([1, 1, 0]) is None
        assert first_split([2, 1, 3]) == 2

    def test_energy_trace_rows(self, tmp_path):
        tr = experiments.run_energy_trace("mbo", n=32, dt=2e-3, steps=3, seed=1)
        assert [r[0] for r in tr.rows] == [0, 1, 2, 3]
        tr.to_csv(tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text().startswith("step,time,energy\n")

    def test_small_dumbbell_runs(self, tmp_path):
        res = experiments.run_dumbbell("mbo", n=32, dt=2e-3, T=0.01, outdir=tmp_path, snapshot_every=2)
        assert res.counts[0] == 1 and len(res.snapshots) >= 2
        load_snapshot(res.snapshots[-1])

    def test_gamma_report(self):
        rep = experiments.verify_gamma()
        assert rep.passed
        assert "stability   pass" in rep.text()


class TestCLI:
    def test_config_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("scheme = twokernel\nsteps = 4,8  # comment\npoints = 300\n")
        args = parse_args(["converge", "--config", str(cfg), "--points", "250"])
        assert args.scheme == "twokernel" and args.steps == [4, 8] and args.points == 250
        assert read_config(cfg)["points"] == "300"

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus = 1\n")
        with pytest.raises(SystemExit) as exc:
            parse_args(["converge", "--config", str(cfg)])
        assert exc.value.code == 2

    def test_bad_scheme_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["converge", "--scheme", "nope"])
        assert exc.value.code == 2

    def test_converge_csv(self, tmp_path):
        out = tmp_path / "c.csv"
        code = main(["converge", "--scheme", "mbo", "--steps", "4,8", "--points", "200", "-o", str(out)])
        assert code == EXIT_OK
        rows = list(csv.DictReader(out.open()))
        assert [int(r["num_steps"]) for r in rows] == [4, 8]
        # an impossible order band fails the check
        code = main(["converge", "--steps", "4,8", "--points", "200", "--min-order", "5", "-o", str(out)])
        assert code == EXIT_CHECK_FAILED

    def test_bad_points_is_usage_error(self, tmp_path):
        assert main(["converge", "--steps", "4,8", "--points", "10", "-o", str(tmp_path / "x")]) == 2

    def test_verify_gamma(self, tmp_path, capsys):
        assert main(["verify-gamma", "--csv", str(tmp_path / "g.csv")]) == EXIT_OK
        assert "consistency pass" in capsys.readouterr().out
        assert "S_diag" in (tmp_path / "g.csv").read_text()

    def test_energy_trace(self, tmp_path):
        out = tmp_path / "e.csv"
        assert main(["energy-trace", "--scheme", "mbo", "--n", "32", "--steps", "3", "-o", str(out)]) == EXIT_OK
        assert len(out.read_text().splitlines()) == 5

    def test_evolve_grid(self, tmp_path):
        code = main(
            ["evolve-grid", "--initial", "ball", "--n", "32", "--radius", "0.5",
             "--steps", "4", "--every", "2", "--outdir", str(tmp_path)]
        )
        assert code == EXIT_OK
        names = sorted(p.name for p in tmp_path.glob("*.raw"))
        assert names == ["mbo_00000.raw", "mbo_00002.raw", "mbo_00004.raw"]
        sigma, meta = load_snapshot(tmp_path / "mbo_00004.raw")
        assert meta["time"] == pytest.approx(4e-3) and sigma.values.sum() > 0

    def test_graph3d_with_saved_reference(self, tmp_path):
        ref = experiments.graph3d_reference(16, T=0.01, cfl=0.2, extrapolate=False)
        ref.save(tmp_path / "ref.txt")
        code = main(
            ["converge", "--problem", "graph3d", "--points", "16", "--steps", "2,4",
             "--reference", str(tmp_path / "ref.txt"), "-o", str(tmp_path / "c.csv")]
        )
        # T defaults to 0.1 for graph3d, so a T=0.01 reference only checks plumbing
        assert code == EXIT_OK
        assert len((tmp_path / "c.csv").read_text().splitlines()) == 3
