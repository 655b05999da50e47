"""
命令行测试

退出码: 0 成功，1 配置错误，2 运行失败，3 验收检查未通过
"""

import json
from pathlib import Path

import pytest

from edit_sim import cli
from edit_sim.harness.checks import CheckReport, CheckResult


class TestExitCodes:
    """退出码测试"""

    @pytest.mark.integration
    def test_run_ok(self, config_file: Path, tmp_path: Path, capsys):
        code = cli.main(["--quiet", "run", "-c", str(config_file), "--out", str(tmp_path / "out")])
        assert code == cli.EXIT_OK
        assert (tmp_path / "out" / "summary.csv").is_file()
        assert (tmp_path / "out" / "edit-default-s0.jsonl").is_file()
        assert "summary:" in capsys.readouterr().out

    @pytest.mark.unit
    def test_bad_config(self, tmp_path: Path, small_config_dict: dict):
        small_config_dict["mesh"]["M"] = 0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(small_config_dict), encoding="utf-8")
        assert cli.main(["--quiet", "run", "-c", str(path)]) == cli.EXIT_CONFIG

    @pytest.mark.unit
    def test_missing_config(self, tmp_path: Path):
        assert cli.main(["--quiet", "run", "-c", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG

    @pytest.mark.unit
    def test_bad_protocol_override(self, config_file: Path):
        assert cli.main(["--quiet", "run", "-c", str(config_file), "--protocol", "ddp"]) == cli.EXIT_CONFIG

    @pytest.mark.integration
    def test_failed_cell(self, config_file: Path, tmp_path: Path, mocker):
        mocker.patch("edit_sim.harness.runner.build_engine", side_effect=RuntimeError("boom"))
        code = cli.main(["--quiet", "run", "-c", str(config_file), "--out", str(tmp_path / "out")])
        assert code == cli.EXIT_RUNTIME

    @pytest.mark.unit
    def test_check_failure(self, config_file: Path, mocker, capsys):
        failing = CheckReport()
        failing.add(CheckResult("theorem", False, "bound violated"))
        mocker.patch("edit_sim.harness.run_checks", return_value=failing)
        assert cli.main(["--quiet", "run", "-c", str(config_file), "--check"]) == cli.EXIT_CHECK
        assert "FAIL" in capsys.readouterr().out

    @pytest.mark.unit
    def test_check_pass(self, config_file: Path, mocker):
        passing = CheckReport()
        passing.add(CheckResult("determinism", True, "identical"))
        mocker.patch("edit_sim.harness.run_checks", return_value=passing)
        assert cli.main(["--quiet", "run", "-c", str(config_file), "--check"]) == cli.EXIT_OK

    @pytest.mark.unit
    def test_report_without_paths(self, tmp_path: Path):
        assert cli.main(["--quiet", "report", "--out", str(tmp_path / "r")]) == cli.EXIT_OK
        assert (tmp_path / "r" / "summary.csv").is_file()

    @pytest.mark.unit
    def test_report_missing_file(self, tmp_path: Path):
        code = cli.main(["--quiet", "report", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "r")])
        assert code == cli.EXIT_RUNTIME

    @pytest.mark.unit
    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            cli.main([])
