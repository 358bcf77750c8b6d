# tests/test_cli.py
# Tests for the pbcalc command driver: each subcommand's output formats and the exit codes
# RELEVANT FILES: pbcalc/cli.py, programs/*.pb

import json

import pytest

from pbcalc.cli import EXIT_FAILED, EXIT_FUEL, EXIT_INVALID, EXIT_OK, main


@pytest.fixture
def running_file(programs_dir):
    return str(programs_dir / "running.pb")


@pytest.fixture
def sum_file(programs_dir):
    return str(programs_dir / "sum.pb")


@pytest.fixture
def write_program(tmp_path):
    def write(text, name="program.pb"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write


def json_lines(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


class TestCheck:
    """pbcalc check"""

    def test_running_example(self, running_file, capsys):
        assert main(["check", running_file]) == EXIT_OK
        assert capsys.readouterr().out == "R^2*\n"

    def test_sum_example(self, sum_file, capsys):
        assert main(["check", sum_file]) == EXIT_OK
        assert capsys.readouterr().out == "((R -> R -> R) -> R -> R)*\n"

    def test_lines(self, running_file, capsys):
        main(["check", running_file, "--format", "lines"])
        [record] = json_lines(capsys.readouterr().out)
        assert record["ok"] is True
        assert record["type"] == "R^2*"

    def test_type_error(self, write_program, capsys):
        path = write_program("pi1 1.0")
        assert main(["check", path, "--format", "lines"]) == EXIT_INVALID
        [record] = json_lines(capsys.readouterr().out)
        assert record["ok"] is False
        assert record["kind"] == "mismatch"

    def test_parse_error_position(self, write_program, capsys):
        path = write_program("given w : R;\npb (")
        assert main(["check", path, "--format", "lines"]) == EXIT_INVALID
        [record] = json_lines(capsys.readouterr().out)
        assert record["kind"] == "parse"
        assert record["line"] >= 1


class TestAnf:
    """pbcalc anf"""

    def test_running_body(self, running_file, capsys):
        assert main(["anf", running_file]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("let\n")
        assert "  z2 = g(z1);\n" in out
        assert out.endswith("  z4 = pow2(z3)\nin z4\n")

    def test_lines(self, running_file, capsys):
        main(["anf", running_file, "--format", "lines"])
        records = json_lines(capsys.readouterr().out)
        assert [r["name"] for r in records] == ["z1", "z2", "z3", "z4"]
        assert records[3]["bound"] == "pow2(z3)"

    def test_sum_body_numbers_top_level_bindings(self, sum_file, capsys):
        assert main(["anf", sum_file]) == EXIT_OK
        out = capsys.readouterr().out
        assert "  z2 = " in out and "z2'" in out and "z2''" in out
        assert "z6" not in out
        assert out.endswith("  z5 = z3 z4\nin z5\n")


class TestRun:
    """pbcalc run"""

    def test_running_example(self, running_file, capsys):
        assert main(["run", running_file]) == EXIT_OK
        assert capsys.readouterr().out == "([660, 528]* : R^2)\n"

    def test_check_types(self, running_file, capsys):
        assert main(["run", running_file, "--check-types"]) == EXIT_OK
        assert "[660, 528]*" in capsys.readouterr().out

    def test_lines(self, running_file, capsys):
        main(["run", running_file, "--format", "lines"])
        [report] = json_lines(capsys.readouterr().out)
        assert report["type"] == "R^2*"
        assert report["steps"] > 0
        assert report["notes"] == []

    def test_sum_example(self, sum_file, capsys):
        assert main(["run", sum_file]) == EXIT_OK
        assert "ω 6" in capsys.readouterr().out

    def test_fuel_exhaustion(self, running_file, capsys):
        assert main(["run", running_file, "--fuel", "3"]) == EXIT_FUEL
        err = capsys.readouterr().err
        assert "no value within 3 steps" in err
        assert '"rule":"A"' in err


class TestGrad:
    """pbcalc grad"""

    def test_embedded_point(self, running_file, capsys):
        assert main(["grad", running_file]) == EXIT_OK
        assert capsys.readouterr().out == "660 528\n"

    def test_explicit_point_and_row(self, running_file, capsys):
        assert main(["grad", running_file, "--at", "1,3", "--row", "1"]) == EXIT_OK
        assert capsys.readouterr().out == "660 528\n"

    def test_other_point(self, running_file, capsys):
        # at <0, 0>: g = <1, 0>, so mult and its derivative vanish along y
        assert main(["grad", running_file, "--at", "0,0"]) == EXIT_OK
        assert capsys.readouterr().out == "0.0 0.0\n"

    def test_check(self, running_file, capsys):
        assert main(["grad", running_file, "--check"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("660 528  [ok; oracle 660 528; fd ")

    def test_lines(self, running_file, capsys):
        main(["grad", running_file, "--format", "lines", "--check"])
        [report] = json_lines(capsys.readouterr().out)
        assert report["gradient"] == [660.0, 528.0]
        assert report["ok"] is True

    def test_all_rows_of_a_function(self, write_program, capsys):
        path = write_program("\\<a, b>. g<a, b>")
        assert main(["grad", path, "--at", "1,3"]) == EXIT_OK
        assert capsys.readouterr().out == "1 0.0\n2 6\n"

    def test_missing_point(self, write_program, capsys):
        path = write_program("\\<a, b>. g<a, b>")
        assert main(["grad", path]) == EXIT_INVALID
        assert "--at" in capsys.readouterr().err

    def test_wrong_point_size(self, write_program):
        path = write_program("\\x:R^2. g(x)")
        assert main(["grad", path, "--at", "1,2,3"]) == EXIT_FAILED


class TestTrace:
    """pbcalc trace"""

    def test_top_level(self, running_file, capsys):
        assert main(["trace", running_file, "--depth", "0"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("[1] (A) ")
        assert lines[-1] == "value: ([660, 528]* : R^2)"
        assert not any(line.startswith("  [") for line in lines)

    def test_premises_are_indented(self, running_file, capsys):
        main(["trace", running_file])
        assert any(line.startswith("  [") for line in capsys.readouterr().out.splitlines())

    def test_lines(self, running_file, capsys):
        main(["trace", running_file, "--format", "lines"])
        records = json_lines(capsys.readouterr().out)
        assert records[0]["rule"] == "A"
        assert records[-1]["rule"] == "5"
        assert records[-1]["phase"] == "reverse"


class TestMisc:
    """prims, exit codes and argument handling"""

    def test_prims(self, capsys):
        assert main(["prims"]) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert "g: R^2 -> R^2" in out
        assert "sin: R^1 -> R^1" in out

    def test_prims_lines(self, capsys):
        main(["prims", "--format", "lines"])
        names = [r["name"] for r in json_lines(capsys.readouterr().out)]
        assert "pow2" in names

    def test_missing_file(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "absent.pb")]) == EXIT_FAILED
        assert "error: " in capsys.readouterr().err

    def test_parse_error_in_run(self, write_program):
        assert main(["run", write_program("pb (")]) == EXIT_INVALID

    def test_command_required(self):
        with pytest.raises(SystemExit):
            main([])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
