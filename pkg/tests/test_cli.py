import csv
import subprocess
import sys

import numpy as np
import pytest

from photon_src import cli
from photon_src.closedform import p_si_total_rre
from photon_src.lindblad import IntegrationError
from photon_src.qmodel import SystemParams

BASE = """# Fig. 2 baseline
scheme = four
kappa_ex = optimal   # kappa_in * sqrt(1 + g^2/(kappa_in gamma))
kappa_in = 0.01
gamma_u = 0.1
gamma_o = 0.01
omega2 = 3.2
omega0 = 0.07
"""


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def column(path, name):
    head, rows = read_csv(path)
    k = head.index(name)
    return np.array([float(r[k]) for r in rows])


def summary(path):
    head, rows = read_csv(path)
    assert head == ["quantity", "value"]
    return {k: float(v) for k, v in rows}


@pytest.fixture
def cfg(tmp_path):
    def make(extra="", base=BASE):
        path = tmp_path / f"run{len(list(tmp_path.glob('*.cfg')))}.cfg"
        path.write_text(base + extra, encoding="utf-8")
        return str(path)

    return make


@pytest.fixture
def serial(monkeypatch):
    monkeypatch.setenv("PHOTON_SRC_THREADS", "1")


class TestConfig:
    def test_comments_and_blanks(self):
        raw = cli.parse_config_text("# c\n\n gamma_u = 0.2  # inline\nscheme=three\n")
        assert raw == {"gamma_u": "0.2", "scheme": "three"}

    def test_unknown_key(self):
        with pytest.raises(cli.ConfigError, match="gama_u"):
            cli.parse_config_text("gama_u = 0.1\n")

    def test_malformed_line(self):
        with pytest.raises(cli.ConfigError, match="line 2"):
            cli.parse_config_text("gamma_u = 0.1\ngamma_o 0.2\n")

    def test_bad_number(self):
        with pytest.raises(cli.ConfigError, match="gamma_o"):
            cli.resolve_config({"gamma_o": "abc"})

    def test_optimal_kappa(self):
        rc = cli.resolve_config(cli.parse_config_text(BASE))
        assert rc.params().kappa_ex == pytest.approx(SystemParams.fig2_baseline().kappa_ex, rel=1e-15)
        # re-derived when gamma changes
        assert rc.params(gamma_u=0.2).kappa_ex == pytest.approx(0.01 * np.sqrt(1 + 1 / (0.01 * 0.21)))

    def test_negative_rate(self):
        with pytest.raises(cli.ConfigError):
            cli.resolve_config({"gamma_u": "-0.1"})

    def test_three_level_defaults(self):
        rc = cli.resolve_config({"scheme": "three"})
        assert rc.params().omega2 == 0.0

    def test_tabulated_pulse_file(self, tmp_path):
        f = tmp_path / "pulse.csv"
        t = np.linspace(0, 60, 601)
        np.savetxt(f, np.column_stack([t, 0.07 * t]), delimiter=",")
        rc = cli.resolve_config({"pulse": "tabulated", "pulse_file": str(f)})
        assert rc.pulse().amplitude(10.0) == pytest.approx(0.7)

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("PHOTON_SRC_THREADS", "zero")
        with pytest.raises(cli.ConfigError):
            cli._workers()
        monkeypatch.setenv("PHOTON_SRC_THREADS", "3")
        assert cli._workers() == 3


class TestSimulate:
    def test_baseline(self, cfg, tmp_path):
        out = tmp_path / "sim"
        assert cli.main(["simulate", "--config", cfg(), "--out", str(out)]) == 0
        s = summary(out / "summary.csv")
        # quoted to 6 decimals as 0.964909; the formula itself gives 0.96490812
        assert s["P_total"] == pytest.approx(0.964909, abs=1e-6)
        assert s["P_total"] == pytest.approx(p_si_total_rre(SystemParams.fig2_baseline(), "four")[1], abs=5e-9)
        assert "P_total,9.64908118e-01" in (out / "summary.csv").read_text().splitlines()
        assert s["kappa_ex"] == pytest.approx(0.301677, abs=5e-7)
        assert s["dev_P_total"] == pytest.approx(abs(s["P_total_num"] - s["P_total"]), rel=1e-6)
        head, rows = read_csv(out / "populations.csv")
        assert head == ["t", "rho_u0", "rho_e2_0", "rho_e0", "rho_g1", "rho_g0", "rho_o0", "flux"]
        pops = np.array(rows, dtype=float)[:, 1:7]
        np.testing.assert_allclose(pops.sum(axis=1), 1.0, atol=1e-7)
        head, _ = read_csv(out / "record.csv")
        assert head == ["t", "re_psi0", "im_psi0"]

    def test_csv_number_format(self, cfg, tmp_path):
        out = tmp_path / "sim"
        cli.main(["simulate", "--config", cfg(), "--out", str(out)])
        _, rows = read_csv(out / "summary.csv")
        for _, v in rows:
            mant, exp = v.split("e")
            assert len(mant.replace("-", "").replace(".", "")) == 9

    def test_no_recycling(self, cfg, tmp_path):
        out = tmp_path / "sim"
        assert cli.main(["simulate", "--config", cfg("gamma_u = 0\n"), "--out", str(out)]) == 0
        line = [l for l in (out / "summary.csv").read_text().splitlines() if l.startswith("R_re,")][0]
        assert line == "R_re,0.00000000e+00"

    def test_deterministic(self, cfg, tmp_path):
        path = cfg()
        for d in ("a", "b"):
            assert cli.main(["simulate", "--config", path, "--out", str(tmp_path / d)]) == 0
        for name in ("summary.csv", "populations.csv", "record.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_bad_key(self, cfg, tmp_path, capsys):
        assert cli.main(["simulate", "--config", cfg("omega_2 = 1\n"), "--out", str(tmp_path / "x")]) == 2
        assert "omega_2" in capsys.readouterr().err

    def test_unreadable(self, tmp_path, capsys):
        assert cli.main(["simulate", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2
        assert "cannot read" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert cli.main(["simulate", "--out", str(tmp_path)]) == 2

    def test_integration_failure(self, cfg, tmp_path, monkeypatch, capsys):
        def boom(*a, **k):
            raise IntegrationError("step size underflow")

        monkeypatch.setattr(cli, "evolve", boom)
        assert cli.main(["simulate", "--config", cfg(), "--out", str(tmp_path / "x")]) == 3
        assert "underflow" in capsys.readouterr().err

    def test_module_entry_point(self, cfg, tmp_path):
        r = subprocess.run([sys.executable, "-m", "photon_src", "simulate", "--config", cfg("bogus = 1\n"),
                            "--out", str(tmp_path)], capture_output=True, text=True)
        assert r.returncode == 2
        assert "bogus" in r.stderr


class TestSweep:
    def test_gamma_o2(self, cfg, tmp_path, serial):
        out = tmp_path / "s"
        path = cfg("sweep_param = gamma_o2\nsweep_values = 0.02, 0, 0.01\n")
        assert cli.main(["sweep", "--config", path, "--out", str(out)]) == 0
        np.testing.assert_array_equal(column(out / "sweep.csv", "gamma_o2"), [0, 0.01, 0.02])
        tot = column(out / "sweep.csv", "P_total")
        assert np.all(np.diff(tot) < 0)
        assert tot[1] == pytest.approx(0.961885, abs=1e-6)

    def test_delta_e_symmetric(self, cfg, tmp_path, serial):
        out = tmp_path / "s"
        path = cfg("sweep_param = delta_e\nsweep_start = -1\nsweep_stop = 1\nsweep_points = 9\n")
        assert cli.main(["sweep", "--config", path, "--out", str(out)]) == 0
        r = column(out / "sweep.csv", "R_re")
        np.testing.assert_array_equal(r, r[::-1])

    def test_omega2_total_constant(self, cfg, tmp_path, serial):
        out = tmp_path / "s"
        path = cfg("sweep_param = omega2\nsweep_start = 0.5\nsweep_stop = 100\nsweep_scale = log\n")
        assert cli.main(["sweep", "--config", path, "--out", str(out), "--points", "12"]) == 0
        tot = column(out / "sweep.csv", "P_total")
        assert tot.size == 12
        assert np.ptp(tot) == 0.0

    def test_unknown_parameter(self, cfg, tmp_path, capsys):
        assert cli.main(["sweep", "--config", cfg("sweep_param = colour\nsweep_values = 1\n"),
                         "--out", str(tmp_path)]) == 2
        assert "colour" in capsys.readouterr().err

    def test_missing_sweep_settings(self, cfg, tmp_path):
        assert cli.main(["sweep", "--config", cfg(), "--out", str(tmp_path)]) == 2

    def test_invalid_value(self, cfg, tmp_path):
        assert cli.main(["sweep", "--config", cfg("sweep_param = gamma_u\nsweep_values = -1, 1\n"),
                         "--out", str(tmp_path)]) == 2

    def test_numeric_columns(self, cfg, tmp_path, serial):
        out = tmp_path / "s"
        path = cfg("sweep_param = omega0\nsweep_values = 0.02, 0.04\n")
        assert cli.main(["sweep", "--config", path, "--out", str(out), "--numeric"]) == 0
        f = out / "sweep.csv"
        dev = column(f, "dev_P_total")
        np.testing.assert_allclose(dev, np.abs(column(f, "P_total_num") - column(f, "P_total")), atol=2e-9)
        assert np.all(dev < 5e-3)
        assert np.all(column(f, "dev_D_S") < 2e-3)

    def test_parallel_matches_serial(self, cfg, tmp_path, monkeypatch):
        path = cfg("sweep_param = omega2\nsweep_values = 5, 1, 3, 2\n")
        for n in ("1", "3"):
            monkeypatch.setenv("PHOTON_SRC_THREADS", n)
            assert cli.main(["sweep", "--config", path, "--out", str(tmp_path / n), "--numeric"]) == 0
        assert (tmp_path / "1" / "sweep.csv").read_bytes() == (tmp_path / "3" / "sweep.csv").read_bytes()


class TestFig2:
    def test_default_grid(self):
        p = SystemParams.fig2_baseline()
        grid = cli.fig2_omega2_grid(None, p)
        assert len(grid) == 24
        assert grid[0] == 0.5 and grid[-1] == 10.0
        assert any(abs(x - 3.21844843) < 1e-8 for x in grid)
        assert len(cli.fig2_omega2_grid(7, p)) == 7

    def test_small_run(self, cfg, tmp_path, capsys):
        out = tmp_path / "f"
        path = cfg("omega0_values = 0.01\nomega2_values = 3.2, 1, 10\n")
        assert cli.main(["fig2", "--config", path, "--out", str(out)]) == 0
        assert "kappa_ex = 3.01677130e-01" in capsys.readouterr().out
        head, _ = read_csv(out / "fig2b.csv")
        assert head == ["omega0", "omega2", "P_total_analytic", "P_total_numeric", "dev_P_total"]
        np.testing.assert_array_equal(column(out / "fig2b.csv", "omega2"), [1, 3.2, 10])
        assert column(out / "fig2b.csv", "dev_P_total")[1] < 5e-3
        assert np.all(column(out / "fig2a.csv", "dev_P_re") < 5e-3)
        t_em = column(out / "fig2c.csv", "t_em_analytic")
        assert np.all(np.diff(t_em) > 0)
        const = summary(out / "fig2_constants.csv")
        assert const["R_re_three_level"] == pytest.approx(0.030135, abs=1e-6)
        assert const["omega0_three_level"] == 0.07

    def test_rejects_three_level(self, tmp_path, cfg):
        assert cli.main(["fig2", "--config", cfg("scheme = three\nomega2 = 0\n"), "--out", str(tmp_path)]) == 2


class TestFigC:
    def test_map(self, tmp_path):
        out = tmp_path / "c"
        assert cli.main(["figC", "--out", str(out)]) == 0
        f = out / "ratio_map.csv"
        g, om, ratio = column(f, "g_over_gamma"), column(f, "omega2_over_gamma"), column(f, "ratio")
        assert ratio.size == 2500
        above = om >= g ** 2 / 1.0 + 0.5
        assert np.all(ratio[above] <= 1.0)
        c = out / "ratio_contour.csv"
        assert np.all(np.isfinite(column(c, "omega2_over_gamma")))
        np.testing.assert_allclose(column(c, "omega2_over_gamma"), column(c, "omega2_threshold"), rtol=1e-8)

    def test_refinement_keeps_cells(self, tmp_path):
        for n in ("10", "19"):
            assert cli.main(["figC", "--out", str(tmp_path / n), "--points", n]) == 0
        _, coarse = read_csv(tmp_path / "10" / "ratio_map.csv")
        _, fine = read_csv(tmp_path / "19" / "ratio_map.csv")
        fine = {(r[0], r[1]): r[2] for r in fine}
        # a 19-point log grid contains every point of the 10-point one
        hits = [fine[(r[0], r[1])] == r[2] for r in coarse if (r[0], r[1]) in fine]
        assert len(hits) >= 80 and all(hits)

    def test_bad_range(self, tmp_path, cfg):
        assert cli.main(["figC", "--config", cfg("g_min = -1\n", base=""), "--out", str(tmp_path)]) == 2
