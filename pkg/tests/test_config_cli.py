import math

import numpy as np
import pytest

from mvsde.cli import main
from mvsde.config import (
    ExperimentConfig,
    build_scheme,
    exact_divide,
    load_config,
    paper_scale,
    parse_number,
    scheme_label,
)
from mvsde.errors import ConfigError
from mvsde.models import cubic_interaction_model
from mvsde.output import format_value, render_csv
from mvsde.svgplot import series_svg


CONV_TEMPLATE = """
[model]
name = cubic

[schemes]
schemes = me, se(1)

[grid]
T = 1
h_ref = 2^-8
h_list = 2^-4, 2^-5, 2^-6

[experiment]
n = 16
seed = 5

[output]
out_dir = {out}
formats = {formats}
"""


class TestParsing:
    def test_numbers(self):
        assert parse_number("2^-14") == 2.0**-14
        assert parse_number("2^3") == 8.0
        assert parse_number("1e-4") == 1e-4
        assert parse_number("0.25") == 0.25
        with pytest.raises(ConfigError):
            parse_number("two")

    def test_exact_divide(self):
        assert exact_divide(1.0, 2.0**-14, "x") == 2**14
        assert exact_divide(10.0, 0.01, "x") == 1000
        with pytest.raises(ConfigError):
            exact_divide(1.0, 0.3, "x")

    def test_scheme_labels(self):
        assert scheme_label("me") == "me"
        assert scheme_label("te(1)") == "te_a1"
        assert scheme_label("se(0.5)") == "se_a0.5"
        assert scheme_label("dte(0.5)") == "dte_l0.5"
        assert scheme_label("dte") == "dte_l0.5"
        assert scheme_label("ssm") == "ssm"
        assert scheme_label("fte") == "fte"
        with pytest.raises(ConfigError):
            scheme_label("xx")

    def test_build_scheme_ssm_and_fte(self):
        model = cubic_interaction_model()
        ssm = build_scheme("ssm", model)
        assert ssm.method == "split_step"
        fte = build_scheme("fte", model)
        assert fte.t1.rho == model.rho

    def test_load_config_full(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text(CONV_TEMPLATE.format(out=tmp_path / "o", formats="csv, svg"))
        cfg = load_config(str(path))
        assert cfg.model_name == "cubic"
        assert cfg.schemes == ["me", "se(1)"]
        assert cfg.h_ref == 2.0**-8
        assert cfg.h_list == [2.0**-4, 2.0**-5, 2.0**-6]
        assert cfg.N == 16 and cfg.seed == 5
        assert cfg.formats == ["csv", "svg"]
        cfg.validate_convergence()

    def test_load_config_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/definitely/not/here.ini")

    def test_load_config_bad_format(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[output]\nformats = pdf\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_model_params_forwarded(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[model]\nname = doublewell\nmu0 = 3\nsigma0sq = 9\n")
        cfg = load_config(str(path))
        model = cfg.build_model()
        assert model.params == {"mu0": 3.0, "sigma0sq": 9.0}

    def test_paper_scale(self):
        cfg = ExperimentConfig(h_ref=2.0**-14, h_list=[2.0**-7], N=32)
        scaled = paper_scale(cfg)
        assert scaled.h_ref == 2.0**-17
        assert scaled.h_list == [2.0**-13, 2.0**-14, 2.0**-15, 2.0**-16]
        assert scaled.N == 100
        scaled.validate_convergence()


class TestCsv:
    def test_float_seventeen_digits_round_trip(self):
        vals = [0.1, 1 / 3, 2.0**-14, math.pi, 1e-300]
        for v in vals:
            assert float(format_value(v)) == v

    def test_special_values(self):
        assert format_value(float("nan")) == "nan"
        assert format_value(float("inf")) == "inf"
        assert format_value(True) == "true"
        assert format_value(None) == ""
        assert format_value(7) == "7"

    def test_rfc4180_quoting_and_lf(self):
        data = render_csv(("a", "b"), [("x,y", 'he said "hi"')])
        assert data == b'a,b\n"x,y","he said ""hi"""\n'
        assert b"\r" not in data


class TestSvg:
    def test_two_point_series_single_polyline(self):
        doc = series_svg([("s", [0.0, 1.0], [0.0, 1.0])])
        assert doc.count("<polyline") == 1
        start = doc.index('<polyline points="') + len('<polyline points="')
        pts = doc[start : doc.index('"', start)]
        assert len(pts.split()) == 2

    def test_byte_identical_rerun(self):
        series = [("a", [0, 1, 2], [3.0, 1.0, 2.0]), ("b", [0, 1, 2], [1.0, 2.0, 0.5])]
        assert series_svg(series) == series_svg(series)

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            series_svg([])

    def test_slope_label_three_decimals(self, tmp_path):
        from mvsde.experiments import run_convergence
        from mvsde.svgplot import convergence_svg

        cfg = ExperimentConfig(
            model_name="cubic", schemes=["me"], T=1.0, N=8, seed=5,
            h_ref=2.0**-8, h_list=[2.0**-4, 2.0**-5, 2.0**-6],
        )
        rep = run_convergence(cfg)[0]
        doc = convergence_svg(rep)
        assert f"slope {rep.slope:.3f}" in doc


def write_conv_config(tmp_path, formats="csv"):
    path = tmp_path / "conv.ini"
    path.write_text(CONV_TEMPLATE.format(out=tmp_path / "out", formats=formats))
    return path


def read_all(out_dir):
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}


class TestCli:
    def test_converge_writes_expected_files(self, tmp_path, capsys):
        path = write_conv_config(tmp_path, formats="csv, svg")
        assert main(["converge", "--config", str(path)]) == 0
        names = set(read_all(tmp_path / "out"))
        assert names == {
            "converge_cubic_me.csv",
            "converge_cubic_me.svg",
            "converge_cubic_se_a1.csv",
            "converge_cubic_se_a1.svg",
            "converge_summary.csv",
        }

    def test_byte_identical_across_runs_and_workers(self, tmp_path):
        path = write_conv_config(tmp_path, formats="csv, svg")
        outputs = []
        for threads, sub in (("1", "a"), ("2", "b"), ("8", "c")):
            out = tmp_path / sub
            code = main(
                ["converge", "--config", str(path), "--threads", threads,
                 "--out-dir", str(out)]
            )
            assert code == 0
            outputs.append(read_all(out))
        assert outputs[0] == outputs[1] == outputs[2]

    def test_seed_override_changes_bytes(self, tmp_path):
        path = write_conv_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        main(["converge", "--config", str(path), "--out-dir", str(a)])
        main(["converge", "--config", str(path), "--out-dir", str(b), "--seed", "99"])
        assert read_all(a)["converge_cubic_me.csv"] != read_all(b)["converge_cubic_me.csv"]

    def test_config_error_exit_code(self, tmp_path, capsys):
        assert main(["converge", "--config", str(tmp_path / "none.ini")]) == 2
        bad = tmp_path / "bad.ini"
        bad.write_text("[grid]\nT = 1\nh_ref = 0.3\nh_list = 0.3\n")
        assert main(["converge", "--config", str(bad)]) == 2

    def test_strict_divergence_exit_code(self, tmp_path, capsys):
        # plain Euler-Maruyama on the quintic model overflows by t=1.875
        path = tmp_path / "div.ini"
        path.write_text(
            "[model]\nname = quintic\n"
            "[schemes]\nschemes = identity\n"
            "[grid]\nT = 2\nh = 2^-3\n"
            "[experiment]\nn = 100\nseed = 0\n"
            f"[output]\nout_dir = {tmp_path / 'o'}\n"
        )
        assert main(["paths", "--config", str(path)]) == 0
        assert main(["paths", "--config", str(path), "--strict"]) == 3

    def test_density_and_moments_csv_shapes(self, tmp_path, capsys):
        path = tmp_path / "d.ini"
        path.write_text(
            "[model]\nname = cubic\n"
            "[schemes]\nschemes = me\n"
            "[grid]\nT = 1\nh = 0.125\n"
            "[experiment]\nn = 32\nseed = 4\n"
            f"[output]\nout_dir = {tmp_path / 'o'}\n"
        )
        assert main(["density", "--config", str(path)]) == 0
        assert main(["moments", "--config", str(path)]) == 0
        out = read_all(tmp_path / "o")
        dens = out["density_me_T1.csv"].decode().splitlines()
        assert dens[0] == "x,density"
        assert len(dens) == 513  # header + 512 grid points
        mom = out["moments_me.csv"].decode().splitlines()
        assert mom[0] == "t,m2,m4"
        assert len(mom) == 1 + 9  # header + all nine grid times

    def test_list_models(self, capsys):
        assert main(["list-models"]) == 0
        out = capsys.readouterr().out
        assert "cubic" in out and "quintic" in out and "doublewell" in out

    def test_check_subcommand_writes_report(self, tmp_path, capsys, monkeypatch):
        # narrow the battery to one model via config and a light sample spec
        from mvsde.verify import SampleSpec

        fast = SampleSpec(h_exponents=(1, 5, 10, 20), n_magnitudes=7)
        monkeypatch.setattr("mvsde.verify.SampleSpec", lambda: fast)
        path = tmp_path / "c.ini"
        path.write_text(f"[model]\nname = cubic\n[output]\nout_dir = {tmp_path / 'o'}\n")
        assert main(["check", "--config", str(path)]) == 0
        report = (tmp_path / "o" / "check_report.csv").read_bytes().decode()
        lines = report.splitlines()
        assert lines[0] == "subject,assumption,pass,max_violation,witness"
        assert any(line.startswith("identity,H1,false") for line in lines)
        assert any(line.startswith("modified,H1,true") for line in lines)
        assert any("fully_tamed" in line and ",H1,false" in line for line in lines)


class TestSvgDispatch:
    def test_emit_svg_dispatch(self, tmp_path):
        from mvsde.experiments import run_convergence, run_density, run_paths, run_nscaling
        from mvsde.svgplot import density_svg, emit_svg

        cfg = ExperimentConfig(
            model_name="cubic", schemes=["me"], T=1.0, N=8, seed=5,
            h_ref=2.0**-8, h_list=[2.0**-4, 2.0**-5, 2.0**-6],
        )
        conv = run_convergence(cfg)[0]
        doc = emit_svg(conv, fingerprint="abc123")
        assert doc.startswith("<svg") and "abc123" in doc and doc == emit_svg(conv, fingerprint="abc123")

        pcfg = ExperimentConfig(
            model_name="cubic", schemes=["me"], T=1.0, N=8, seed=5,
            h_values=[0.25], trace_particles=[0, 1],
        )
        cell = run_paths(pcfg).cells[0]
        assert "<polyline" in emit_svg(cell)

        dcfg = ExperimentConfig(
            model_name="cubic", schemes=["me", "te(1)"], T=1.0, N=32, seed=5,
            h_values=[0.125], record_times=[1.0],
        )
        bundle = run_density(dcfg)
        ddoc = density_svg(bundle.entries, 1.0)
        assert ddoc.count("<polyline") == 2  # one curve per scheme

        ncfg = ExperimentConfig(
            model_name="cubic", schemes=["me"], T=1.0, seed=42,
            h_values=[2.0**-5], n_list=[16, 32], proxy_n=64, repetitions=2,
        )
        nrep = run_nscaling(ncfg)
        assert "slope" in emit_svg(nrep)

        assert "<polyline" in emit_svg([("s", [0, 1], [0, 1])])
        with pytest.raises(TypeError):
            emit_svg(object())


class TestCliFlagWiring:
    def test_format_override_csv_only(self, tmp_path):
        path = write_conv_config(tmp_path, formats="csv, svg")
        out = tmp_path / "csvonly"
        assert main(["converge", "--config", str(path), "--out-dir", str(out),
                     "--format", "csv"]) == 0
        assert all(p.suffix == ".csv" for p in out.iterdir())
        assert main(["converge", "--config", str(path), "--format", "pdf"]) == 2

    def test_paper_scale_flag_rewrites_grid(self, tmp_path, monkeypatch):
        import mvsde.cli as cli

        captured = {}

        def fake_run(cfg, threads=1):
            captured["h_ref"] = cfg.h_ref
            captured["h_list"] = cfg.h_list
            captured["N"] = cfg.N
            return []

        monkeypatch.setattr(cli.experiments, "run_convergence", fake_run)
        path = write_conv_config(tmp_path)
        assert main(["converge", "--config", str(path), "--paper-scale"]) == 0
        assert captured["h_ref"] == 2.0**-17
        assert captured["h_list"] == [2.0**-13, 2.0**-14, 2.0**-15, 2.0**-16]
        assert captured["N"] == 100
