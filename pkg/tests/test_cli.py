import json
import logging
from types import SimpleNamespace

import pytest
from mpmath import mpf
from typer.testing import CliRunner

from sawstrip.analysis import reference
from sawstrip.cli import main as cli
from sawstrip.cli.main import EXIT_CODES, app, exit_code_for
from sawstrip.core.poly import ContactPolynomial
from sawstrip.errors import (
    CheckpointError,
    ConfigError,
    CrossingError,
    EngineError,
    IdentityError,
    WidthLimitError,
)

runner = CliRunner()


@pytest.fixture(autouse=True)
def _isolated(tmp_path, monkeypatch):
    """Run every command in an empty directory and drop the handlers it installs."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("SAWSTRIP_THREADS", "1")
    yield
    logger = logging.getLogger("sawstrip")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)


@pytest.fixture
def power_series(monkeypatch):
    """Replace the sweep by A_T(y) = y**T / T, whose crossings are known."""
    built = []

    def fake_build_A(spec, **kwargs):
        built.append(spec.width_T)
        T = spec.width_T
        return SimpleNamespace(A=ContactPolynomial.monomial(T, mpf(1) / T, spec.trunc_M))

    monkeypatch.setattr(cli, "build_A", fake_build_A)
    return built


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


class TestBasics:
    def test_version(self):
        result = invoke("version")
        assert result.exit_code == 0
        assert "sawstrip version 0.1.0" in result.output

    @pytest.mark.parametrize(
        "error, code",
        [
            (ConfigError("x"), 2),
            (CheckpointError("x"), 2),
            (WidthLimitError("x"), 3),
            (CrossingError("x"), 4),
            (IdentityError("x"), 4),
            (EngineError("x"), 1),
            (RuntimeError("x"), 1),
        ],
    )
    def test_exit_code_for(self, error, code):
        assert exit_code_for(error) == code

    def test_exit_codes_are_distinct(self):
        assert len(set(EXIT_CODES.values())) == len(EXIT_CODES)


class TestEnumerate:
    ARGS = ("enumerate", "-T", 0, "--lattice", "honeycomb", "--mode", "alternate-site", "-L", 6, "-M", 3, "--with-b")

    def test_csv_file(self, tmp_path):
        out = tmp_path / "series.csv"
        result = invoke(*self.ARGS, "-o", out)
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "index,A,B"
        assert len(lines) == 5

    def test_json_file(self, tmp_path):
        out = tmp_path / "series.json"
        result = invoke(*self.ARGS, "-f", "json", "-o", out)
        assert result.exit_code == 0, result.output
        document = json.loads(out.read_text())
        assert document["schema_version"] == 1
        assert document["spec"]["width_T"] == 0
        assert set(document["series"]) == {"A", "B"}
        assert len(document["series"]["A"]) == 4

    def test_invalid_pairing(self):
        result = invoke("enumerate", "-T", 1, "--lattice", "square", "--mode", "alternate-site")
        assert result.exit_code == EXIT_CODES["config"]

    def test_bad_format(self):
        result = invoke("enumerate", "-T", 1, "-f", "xml")
        assert result.exit_code == EXIT_CODES["config"]

    def test_over_budget(self):
        result = invoke("enumerate", "-T", 12, "--budget-mb", 1)
        assert result.exit_code == EXIT_CODES["resource"]
        assert "Cost estimate" in result.output

    def test_too_wide(self):
        result = invoke("enumerate", "-T", 30)
        assert result.exit_code == EXIT_CODES["resource"]


class TestCross:
    def test_csv(self, tmp_path, power_series):
        out = tmp_path / "cross.csv"
        result = invoke("cross", "-w", "1..2", "--lattice", "square", "-M", 8, "-o", out)
        assert result.exit_code == 0, result.output
        assert out.read_text().splitlines() == [
            "T,y_c,A",
            "1,2.000000000000000,2.000000000000000",
            "2,1.500000000000000,1.125000000000000",
        ]
        assert sorted(power_series) == [1, 2, 3]

    def test_json(self, tmp_path, power_series):
        out = tmp_path / "cross.json"
        result = invoke("cross", "-w", "1,2", "--lattice", "square", "-M", 8, "-f", "json", "-o", out)
        assert result.exit_code == 0, result.output
        document = json.loads(out.read_text())
        assert [row["T"] for row in document["rows"]] == [1, 2]
        assert document["monotone"] == "decreasing"
        assert document["M"] == 8

    def test_unexpected_failure(self, monkeypatch):
        def broken(spec, **kwargs):
            raise RuntimeError("boom")

        monkeypatch.setattr(cli, "build_A", broken)
        result = invoke("cross", "-w", "1", "-M", 8)
        assert result.exit_code == EXIT_CODES["unexpected"]

    def test_bad_widths(self):
        assert invoke("cross", "-w", "one..two").exit_code == EXIT_CODES["config"]


class TestPlotData:
    def test_grid(self, tmp_path, power_series):
        out = tmp_path / "plot.csv"
        result = invoke(
            "plot-data", "-w", "1,2", "--lattice", "square", "-M", 8,
            "--y-min", 1, "--y-max", 2, "--points", 3, "-o", out,
        )
        assert result.exit_code == 0, result.output
        assert out.read_text().splitlines() == [
            "y,A_1,A_2",
            "1.000000,1.000000000000,0.500000000000",
            "1.500000,1.500000000000,1.125000000000",
            "2.000000,2.000000000000,2.000000000000",
        ]

    @pytest.mark.parametrize("extra", [("--points", 1), ("--y-min", 3, "--y-max", 2)])
    def test_bad_grid(self, power_series, extra):
        result = invoke("plot-data", "-w", "1", "-M", 8, *extra)
        assert result.exit_code == EXIT_CODES["config"]


class TestExtrapolate:
    def test_shipped_dataset(self, tmp_path):
        out = tmp_path / "limit.json"
        result = invoke("extrapolate", "--dataset", "square-all-site", "-f", "json", "-o", out)
        assert result.exit_code == 0, result.output
        document = json.loads(out.read_text())
        assert document["terms"] == 14
        assert abs(float(document["consensus"]) - 1.77564) < 1e-3
        assert "bulirsch-stoer" in document["per_algorithm"]

    def test_input_file(self, tmp_path):
        source = tmp_path / "seq.csv"
        source.write_text("T,y_c\n" + "".join(f"{T},{2 + mpf(1) / T}\n" for T in range(1, 7)))
        out = tmp_path / "limit.csv"
        result = invoke("extrapolate", "-i", source, "-a", "neville", "-a", "barber-hamer", "-o", out)
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "algorithm,best,spread,best_column,settled,stability"
        assert [line.split(",")[0] for line in lines[1:]] == ["neville", "barber-hamer", "consensus"]
        assert abs(float(lines[-1].split(",")[1]) - 2) < 1e-12

    @pytest.mark.parametrize(
        "args",
        [
            (),
            ("--dataset", "square-edge", "-i", "seq.csv"),
            ("--dataset", "square-edge", "--column", "T"),
            ("-i", "missing.csv"),
            ("--dataset", "headline"),
        ],
    )
    def test_bad_requests(self, args):
        assert invoke("extrapolate", *args).exit_code == EXIT_CODES["config"]


class TestVerifyIdentity:
    def test_exhaustive_patch(self, tmp_path):
        out = tmp_path / "identity.json"
        result = invoke("verify-identity", "-T", 1, "--length", 1, "--exhaustive", "-f", "json", "-o", out)
        assert result.exit_code == 0, result.output
        document = json.loads(out.read_text())
        assert document["identity"]["passed"] is True
        assert set(document["constants_check"]) == {"y_star_x_c_squared", "y_star_from_x_c"}
        assert "maps" not in document

    def test_swept_patch_with_maps(self, tmp_path):
        out = tmp_path / "identity.csv"
        result = invoke(
            "verify-identity", "-T", 1, "--length", 1, "--maps", "-L", 8, "-M", 8, "--points", 4, "-o", out,
        )
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "y,residual"
        assert len(lines) == 5


class TestReproduce:
    def test_headline(self, tmp_path):
        out = tmp_path / "headline.csv"
        result = invoke("reproduce", "headline", "-o", out)
        assert result.exit_code == 0, result.output
        rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
        assert len(rows) == 5
        assert all(int(row[4]) >= 2 for row in rows)

    def test_crossing_table_layout(self, tmp_path, power_series):
        out = tmp_path / "repro.json"
        result = invoke("reproduce", "square-all-site", "-w", 1, "-M", 8, "-f", "json", "-o", out)
        assert result.exit_code == 0, result.output
        (row,) = json.loads(out.read_text())["rows"]
        assert row["T"] == 1
        assert row["y_c"] == "2.000000000000000"
        assert row["published_y_c"] == "1.781782909906119"
        assert row["digits_y_c"] == 0

    @pytest.mark.parametrize(
        "args",
        [
            ("no-such-table",),
            ("square-convergence",),
            ("square-convergence", "--cell", "M=7,L=7"),
            ("square-all-site", "-w", 99),
        ],
    )
    def test_bad_requests(self, args):
        assert invoke("reproduce", *args).exit_code == EXIT_CODES["config"]

    def test_tampered_table(self, monkeypatch):
        monkeypatch.setattr(reference, "verify_checksums", lambda: {"square-edge": False})
        assert invoke("reproduce", "square-edge").exit_code == EXIT_CODES["config"]


class TestConfigFile:
    def test_yaml_settings(self, tmp_path, power_series):
        config = tmp_path / "run.yml"
        config.write_text('lattice: square\nwidths: "1..2"\ndegree_M: 8\nformat: json\n')
        out = tmp_path / "cross.json"
        result = invoke("--config", config, "cross", "-o", out)
        assert result.exit_code == 0, result.output
        assert len(json.loads(out.read_text())["rows"]) == 2

    def test_default_file_in_working_directory(self, tmp_path, power_series):
        (tmp_path / "sawstrip.yml").write_text("widths: [1]\ndegree_M: 8\n")
        out = tmp_path / "cross.csv"
        assert invoke("cross", "-o", out).exit_code == 0
        assert len(out.read_text().splitlines()) == 2

    def test_flags_override_file(self, tmp_path, power_series):
        config = tmp_path / "run.yml"
        config.write_text("widths: [1, 2]\ndegree_M: 8\n")
        out = tmp_path / "cross.csv"
        assert invoke("--config", config, "cross", "-w", 2, "-o", out).exit_code == 0
        assert out.read_text().splitlines()[1].startswith("2,")

    @pytest.mark.parametrize("content", ["widths: [1\n", "- just\n- a list\n", "degree_M: 0\n"])
    def test_bad_file(self, tmp_path, content):
        config = tmp_path / "run.yml"
        config.write_text(content)
        assert invoke("--config", config, "cross").exit_code == EXIT_CODES["config"]

    def test_missing_file(self, tmp_path):
        assert invoke("--config", tmp_path / "nope.yml", "cross").exit_code == EXIT_CODES["config"]
