import numpy as np
import pytest

from jointsa.cli import main, parse_dists, parse_terms
from jointsa.design import Dataset, Design, Uniform, sample_monte_carlo, write_csv
from jointsa.errors import ConfigurationError


@pytest.fixture()
def hetero_csv(tmp_path):
    rng = np.random.default_rng(21)
    design = sample_monte_carlo([Uniform(-2, 2), Uniform(-2, 2)], 400, seed=21)
    x = design.points
    y = np.sin(x[:, 0]) + 0.5 * x[:, 1] + (0.3 + 0.5 * x[:, 0] ** 2) * rng.standard_normal(400)
    path = tmp_path / "data.csv"
    write_csv(Dataset(design, y), path)
    return path


class TestTermLanguage:
    def test_basic_forms(self):
        par, sm = parse_terms("1 + x1 + x2^3, s(x1), s(x1,x2,k=12)")
        assert [t.kind for t in par] == ["intercept", "linear", "power"]
        assert par[2].exponent == 3
        assert sm[0].columns == ("x1",)
        assert sm[1].columns == ("x1", "x2") and sm[1].k == 12

    def test_whitespace_insensitive(self):
        par1, sm1 = parse_terms("1+x1+s(x1,k=8)")
        par2, sm2 = parse_terms(" 1 + x1 + s( x1 , k=8 ) ")
        assert par1 == par2 and sm1 == sm2

    def test_unbalanced_smooth(self):
        with pytest.raises(ConfigurationError, match="term 1"):
            parse_terms("s(")

    def test_bad_exponent(self):
        with pytest.raises(ConfigurationError, match="exponent"):
            parse_terms("x1^a")

    def test_bad_token_positions(self):
        with pytest.raises(ConfigurationError, match="term 2"):
            parse_terms("x1, ??")


class TestDistLanguage:
    def test_named(self):
        dists = parse_dists("x2=U(0,1), x1=U(-1,2)", ["x1", "x2"])
        assert dists[0].lower == -1 and dists[0].upper == 2
        assert dists[1].lower == 0 and dists[1].upper == 1

    def test_positional_broadcast(self):
        dists = parse_dists("U(-3.14,3.14)", ["a", "b", "c"])
        assert len(dists) == 3

    def test_missing_column(self):
        with pytest.raises(ConfigurationError, match="no distribution"):
            parse_dists("x1=U(0,1)", ["x1", "x2"])

    def test_malformed(self):
        with pytest.raises(ConfigurationError, match="cannot parse"):
            parse_dists("N(0,1)", ["x1"])


class TestFitCommand:
    def test_fit_glm_and_reports(self, hetero_csv, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(
            [
                "fit",
                "--input", str(hetero_csv),
                "--engine", "glm",
                "--mean-terms", "1+x1+x2+x1^3",
                "--disp-terms", "1+x1^2",
                "--out", str(out),
            ]
        )
        assert rc == 0
        assert (out / "model.json").exists()
        assert (out / "fit_summary.txt").exists()
        assert (out / "fit_report.csv").exists()
        text = (out / "fit_summary.txt").read_text()
        assert "fit/mean/coef/x1" in text

    def test_bad_term_string_exits_2(self, hetero_csv, tmp_path, capsys):
        rc = main(
            [
                "fit",
                "--input", str(hetero_csv),
                "--engine", "glm",
                "--mean-terms", "s(",
                "--out", str(tmp_path / "o"),
            ]
        )
        assert rc == 2
        assert "term 1" in capsys.readouterr().err

    def test_missing_input_exits_2(self, tmp_path, capsys):
        rc = main(["fit", "--engine", "glm", "--mean-terms", "1", "--out", str(tmp_path)])
        assert rc == 2

    def test_deterministic_model_file(self, hetero_csv, tmp_path):
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            rc = main(
                [
                    "fit",
                    "--input", str(hetero_csv),
                    "--engine", "gam",
                    "--mean-terms", "1+s(x1)+s(x2)",
                    "--disp-terms", "1+s(x1)",
                    "--out", str(out),
                ]
            )
            assert rc == 0
            outs.append((out / "model.json").read_bytes())
        assert outs[0] == outs[1]

    def test_config_file_with_flag_override(self, hetero_csv, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text(
            f"[fit]\ninput = {hetero_csv}\nengine = glm\nmean_terms = 1+x1\nout = {tmp_path / 'cfg_out'}\n"
        )
        rc = main(["fit", "--config", str(cfg), "--mean-terms", "1+x1+x2"])
        assert rc == 0
        text = (tmp_path / "cfg_out" / "fit_summary.txt").read_text()
        assert "fit/mean/coef/x2" in text  # flag value won


class TestSobolCommand:
    def test_indices_from_model(self, hetero_csv, tmp_path):
        out = tmp_path / "out"
        assert (
            main(
                [
                    "fit",
                    "--input", str(hetero_csv),
                    "--engine", "glm",
                    "--mean-terms", "1+x1+x2+x1^3",
                    "--disp-terms", "1+x1^2",
                    "--out", str(out),
                ]
            )
            == 0
        )
        rc = main(
            [
                "sobol",
                "--model", str(out / "model.json"),
                "--dists", "U(-2,2)",
                "--n", "2000",
                "--reps", "5",
                "--out", str(out),
            ]
        )
        assert rc == 0
        import csv

        with open(out / "sobol_report.csv") as fh:
            cells = {row["key"]: row for row in csv.DictReader(fh)}
        assert "sobol/S(x1)" in cells and "sobol/ST_eps" in cells
        # x2 absent from the dispersion terms: its noise interaction is known zero
        assert float(cells["sobol/S(x2,eps)"]["value"]) == 0.0
        assert cells["sobol/S(x1,eps)"]["value"].startswith("]0,")
        assert cells["sobol/S(x1)"]["method"] == "MC"

    def test_schema_mismatch_exits_2(self, hetero_csv, tmp_path, capsys):
        out = tmp_path / "out"
        main(
            [
                "fit",
                "--input", str(hetero_csv),
                "--engine", "glm",
                "--mean-terms", "1+x1+x2",
                "--out", str(out),
            ]
        )
        rc = main(
            [
                "sobol",
                "--model", str(out / "model.json"),
                "--dists", "x1=U(0,1),x9=U(0,1)",
                "--out", str(out),
            ]
        )
        assert rc == 2


class TestBenchCommand:
    def test_unknown_bench_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["bench", "tableX"])
        assert exc.value.code == 2
        assert "table1" in capsys.readouterr().err

    def test_convergence_reduced(self, tmp_path, monkeypatch):
        import jointsa.cli as cli_mod

        original = cli_mod.ishigami.convergence_study

        def tiny_convergence(replicates, seed, n_jobs):
            return original(
                ns=[40], replicates=replicates, seed=seed, n_test=300, n_disp=5000, n_jobs=n_jobs
            )

        monkeypatch.setattr(cli_mod.ishigami, "convergence_study", tiny_convergence)
        rc = main(["bench", "convergence", "--reps", "2", "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "convergence_report.csv").exists()
