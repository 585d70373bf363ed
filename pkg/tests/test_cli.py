import time

import numpy as np
import pytest

from multibang import cli, oracle, penalty
from multibang.cli import (
    CSV_HEADER,
    PhantomKind,
    PhantomSpec,
    build_phantom,
    format_row,
    main,
    read_study_csv,
    write_field_image,
    write_study_csv,
)
from multibang.penalty import AdmissibleSet
from multibang.poisson import Grid, ScalarField
from multibang.regpath import StudyRow


def node_value(field, x1, x2):
    g = field.grid
    i = round(x1 / g.h) - 1
    j = round(x2 / g.h) - 1
    return field.data[j * g.n + i]


class TestPhantom:
    def test_two_disks_values(self):
        # grid chosen so the probe points are exact nodes (h = 1/20)
        spec = PhantomSpec(PhantomKind.TWO_DISKS, AdmissibleSet((0.0, 0.1, 0.15)))
        u = build_phantom(spec, Grid(19))
        assert node_value(u, 0.45, 0.55) == pytest.approx(0.15)
        assert node_value(u, 0.9, 0.9) == 0.0

    def test_two_disks_linear_value(self):
        spec = PhantomSpec(
            PhantomKind.TWO_DISKS_LINEAR, AdmissibleSet((0.0, 0.1, 0.12))
        )
        u = build_phantom(spec, Grid(19))
        assert node_value(u, 0.4, 0.6) == pytest.approx(0.1 + 0.02 * 0.6)

    def test_admissibility(self):
        U = AdmissibleSet((0.0, 0.1, 0.15))
        u = build_phantom(PhantomSpec(PhantomKind.TWO_DISKS, U), Grid(33))
        assert np.all(np.isin(u.data, U.values))
        U2 = AdmissibleSet((0.0, 0.1, 0.12))
        u2 = build_phantom(PhantomSpec(PhantomKind.TWO_DISKS_LINEAR, U2), Grid(33))
        assert np.any(~np.isin(u2.data, U2.values))

    def test_requires_three_values(self):
        with pytest.raises(ValueError):
            PhantomSpec(PhantomKind.TWO_DISKS, AdmissibleSet((0.0, 1.0)))


class TestFieldImage:
    def test_header_and_extremes(self, tmp_path):
        g = Grid(5)
        path = tmp_path / "f.pgm"
        write_field_image(ScalarField.full(g, 0.0), 0.0, 1.0, path)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n5 5\n255\n")
        assert raw[len(b"P5\n5 5\n255\n"):] == bytes(25)
        write_field_image(ScalarField.full(g, 1.0), 0.0, 1.0, path)
        assert path.read_bytes()[-25:] == b"\xff" * 25

    def test_row_zero_is_top(self, tmp_path):
        # put the bright node at large x2: it must land in the first row
        g = Grid(3)
        data = np.zeros(9)
        data[2 * 3 + 1] = 1.0  # j=2 -> x2 = 0.75 (top), i=1
        path = tmp_path / "f.pgm"
        write_field_image(ScalarField(g, data), 0.0, 1.0, path)
        pixels = path.read_bytes()[len(b"P5\n3 3\n255\n"):]
        assert pixels[1] == 255  # row 0, column 1
        assert sum(pixels) == 255

    def test_clamps_out_of_range(self, tmp_path):
        g = Grid(3)
        path = tmp_path / "f.pgm"
        write_field_image(ScalarField.full(g, 7.0), 0.0, 1.0, path)
        assert path.read_bytes()[-9:] == b"\xff" * 9

    def test_needs_ordered_range(self, tmp_path):
        with pytest.raises(ValueError):
            write_field_image(ScalarField.zeros(Grid(3)), 1.0, 1.0, tmp_path / "x.pgm")


class TestCsv:
    def row(self, **kw):
        base = dict(
            delta_rel=0.5, delta_eff=1.5e-3, delta_raw=3.0e-2, alpha=1e-3,
            e2=2e-2, e2_raw=4e-1, einf=0.1, singular_nodes=7,
            newton_total=123, residual=1.6e-3, flags=(),
        )
        base.update(kw)
        return StudyRow(**base)

    def test_format(self):
        line = format_row(self.row())
        assert line == (
            "5.000000e-01,1.500000e-03,3.000000e-02,1.000000e-03,"
            "2.000000e-02,4.000000e-01,1.000000e-01,7,123,"
        )

    def test_flags_joined(self):
        line = format_row(self.row(flags=("over_resolved", "exhausted")))
        assert line.endswith(",over_resolved;exhausted")

    def test_round_trip(self, tmp_path):
        rows = [self.row(), self.row(delta_rel=0.25, flags=("exhausted",))]
        path = tmp_path / "study.csv"
        write_study_csv(rows, path)
        text = path.read_bytes()
        assert b"\r" not in text
        assert text.decode().splitlines()[0] == CSV_HEADER
        back = read_study_csv(path)
        assert len(back) == 2
        for orig, rt in zip(rows, back):
            assert rt.delta_rel == orig.delta_rel
            assert rt.alpha == orig.alpha
            assert rt.singular_nodes == orig.singular_nodes
            assert rt.flags == orig.flags


class TestCommands:
    def test_solve_smoke(self, tmp_path):
        out = tmp_path / "nested" / "run"  # missing directory is created
        code = main([
            "solve", "--grid", "16", "--alpha", "1e-4",
            "--noise-levels", "0.03125", "--out", str(out),
        ])
        assert code == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["dual.pgm", "labels.pgm", "recon.pgm", "solve.csv"]

    def test_study_smoke_and_determinism(self, tmp_path):
        args = [
            "study", "--grid", "16", "--noise-levels", "0.25,0.125,0.0625",
            "--seed", "0",
        ]
        code = main(args + ["--out", str(tmp_path / "a")])
        assert code == 0
        csv_a = (tmp_path / "a" / "study.csv").read_bytes()
        assert len(csv_a.decode().splitlines()) == 4
        code = main(args + ["--out", str(tmp_path / "b")])
        assert code == 0
        assert csv_a == (tmp_path / "b" / "study.csv").read_bytes()
        recon = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert "recon_00.pgm" in recon and "truth.pgm" in recon

    def test_phantom_smoke(self, tmp_path, capsys):
        code = main(["phantom", "--grid", "16", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "truth.pgm").exists()
        assert (tmp_path / "data.pgm").exists()
        assert "u=0.15" in capsys.readouterr().out

    def test_unsorted_values_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--values", "0,2,1"])
        assert exc.value.code == 1
        assert "--values" in capsys.readouterr().err

    def test_bad_noise_levels_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["study", "--noise-levels", "0.1,0.5"])
        assert exc.value.code == 1

    def test_config_file_flags_win(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text(
            "grid = 16\nalpha = 1e-3  # comment\nnoise-levels = 0.25\n"
            f"out = {tmp_path / 'fromfile'}\n"
        )
        code = main([
            "solve", "--config", str(conf), "--out", str(tmp_path / "fromflag"),
        ])
        assert code == 0
        assert (tmp_path / "fromflag" / "solve.csv").exists()
        assert not (tmp_path / "fromfile").exists()

    def test_unknown_config_key(self, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("gridd = 16\n")
        assert main(["solve", "--config", str(conf)]) == 1


class TestValidate:
    def test_clean_pass_and_budget(self, capsys):
        t0 = time.time()
        code = cli.cmd_validate()
        elapsed = time.time() - t0
        out = capsys.readouterr().out
        assert code == 0
        assert "FAIL" not in out
        assert elapsed < 60.0

    def test_mutation_detected(self, monkeypatch, capsys):
        # corrupt the prox branch: validation must fail naming the property
        real = penalty.prox_H

        def corrupted(p, params, U):
            v = real(p, params, U)
            return v + 0.01 * (v > U.lo)

        monkeypatch.setattr(penalty, "prox_H", corrupted)
        code = cli.cmd_validate()
        out = capsys.readouterr().out
        assert code == 2
        assert "[FAIL] prox_matches_bruteforce" in out
