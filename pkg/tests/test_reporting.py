import numpy as np
import pandas as pd
import pytest

from sigma2lab.config.settings import ExitCodes, Settings
from sigma2lab.schemas.lab_schemas import ExperimentReport
from sigma2lab.services.reporting import (
    format_value,
    parse_summary,
    render_report,
    summary_line,
    write_report,
)


@pytest.fixture
def report() -> ExperimentReport:
    table = pd.DataFrame({"x": [0.1, 1.0 / 3.0], "ok": [True, False]})
    return ExperimentReport(name="demo", table=table, summary={"n": 4, "max_error": 0.25, "control": False})


class TestFormatting:
    def test_scalars(self):
        assert format_value(True) == "true"
        assert format_value(np.bool_(False)) == "false"
        assert format_value(np.int64(7)) == "7"
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(float("inf")) == "inf"
        assert format_value(None) == "none"
        assert format_value("a;b") == "a,b"

    def test_summary_keys_are_sorted(self, report):
        line = summary_line(report)
        assert line == "# summary: control=false; max_error=0.25; n=4; success=true; violations=0"

    def test_render(self, report):
        text = render_report(report)
        lines = text.split("\n")
        assert lines[0] == "x,ok"
        assert lines[1] == "0.10000000000000001,True"
        assert lines[2] == "0.33333333333333331,False"
        assert lines[3].startswith("# summary:")
        assert text.endswith("\n")

    def test_parse_summary(self, report):
        pairs = parse_summary(render_report(report))
        assert pairs["n"] == "4"
        assert pairs["success"] == "true"
        assert parse_summary("a,b\n1,2\n") == {}


class TestWriting:
    def test_write_to_nested_path(self, report, tmp_path):
        target = tmp_path / "deep" / "demo.csv"
        write_report(report, target)
        assert target.read_text(encoding="utf-8") == render_report(report)

    def test_write_to_stream(self, report, capsys):
        write_report(report)
        assert capsys.readouterr().out == render_report(report)


class TestSettings:
    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("SIGMA2_SEED", "7")
        monkeypatch.setenv("WOLFF_STEPS", "500")
        s = Settings()
        assert s.default_seed == 7
        assert s.wolff_steps == 500

    def test_exit_codes(self):
        assert ExitCodes.get_code("usage") == 2
        assert ExitCodes.get_code("admissibility") == 1
        assert ExitCodes.get_message("nonconvergence") == ExitCodes.NONCONVERGENCE
        assert ExitCodes.get_message("unknown") == ExitCodes.GENERAL_FAILURE
