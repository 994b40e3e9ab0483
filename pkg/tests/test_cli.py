"""
Tests for the statbench command line.
"""

import json
import os
import sys
import unittest
from pathlib import Path

import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cli.workbench import (
    EXIT_DOMAIN, EXIT_IO, EXIT_OK, EXIT_USAGE, RunConfig, SUBCOMMANDS, build_parser,
    format_summary, main, parse_args,
)
from core.config import DEFAULT_SEED, reload_config
from core.io_formats import read_pgm
from core.rng import GENERATOR_NAME

PET_SMALL = ["--width", "8", "--height", "8", "--angles", "12", "--bins", "12",
             "--total-counts", "10000"]


def summary_of(captured: str) -> dict:
    """key=value pairs from the last line printed."""
    line = captured.strip().splitlines()[-1]
    return dict(part.split("=", 1) for part in line.split())


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def clean_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("STATBENCH_"):
            monkeypatch.delenv(key)
    reload_config()
    yield
    reload_config()


class TestParser(unittest.TestCase):
    """Test argument parsing."""

    def test_every_subcommand_registered(self):
        parser = build_parser()
        for name in SUBCOMMANDS:
            args = parser.parse_args([name])
            self.assertEqual(args.subcommand, name)

    def test_defaults_and_overrides(self):
        config = parse_args(["renewal-check", "--q", "0.5", "--seed", "7", "--out-dir", "res"])
        self.assertIsInstance(config, RunConfig)
        self.assertEqual(config.subcommand, "renewal-check")
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.out_dir, "res")
        self.assertEqual(config.options["q"], 0.5)
        self.assertEqual(config.options["dist"], "exp")
        self.assertNotIn("seed", config.options)

    def test_rates_list(self):
        config = parse_args(["nettomo-simulate", "--rates", "1,2.5,4"])
        self.assertEqual(config.options["rates"], [1.0, 2.5, 4.0])

    def test_format_summary(self):
        line = format_summary({"a": 1, "b": 0.1, "c": True, "d": "x"})
        self.assertEqual(line, "a=1 b=0.1 c=true d=x")


def test_seed_defaults_from_config(clean_env, monkeypatch):
    assert parse_args(["ocr-gen"]).seed == DEFAULT_SEED
    monkeypatch.setenv("STATBENCH_SEED", "42")
    reload_config()
    assert parse_args(["ocr-gen"]).seed == 42


@pytest.mark.parametrize("argv", [
    [],
    ["bogus-cmd"],
    ["pet-simulate", "--width", "0"],
    ["renewal-check", "--dist", "cauchy"],
    ["ocr-gen", "--seed", "-1"],
    ["nettomo-simulate", "--rates", "1,x"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "renewal-solve" in capsys.readouterr().out


def test_domain_error_exit(capsys):
    assert main(["renewal-solve", "--q", "1.5", "--grid", "300", "--out-dir", "o"]) == EXIT_DOMAIN
    assert "QOutOfRange" in capsys.readouterr().err


def test_domain_error_from_geometry(capsys):
    argv = ["pet-simulate", "--width", "3", "--height", "3", "--angles", "1", "--bins", "1",
            "--out-dir", "o"]
    assert main(argv) == EXIT_DOMAIN
    assert "PixelOutsideFOV" in capsys.readouterr().err


def test_missing_input_is_io_error(capsys):
    argv = ["pet-reconstruct", "--in-dir", "does-not-exist", "--out-dir", "o"]
    assert main(argv) == EXIT_IO


def test_malformed_graph_is_io_error(capsys):
    Path("g.txt").write_text("3 2\n0 1 1.0\n2 2 1.0\n")
    assert main(["nettomo-simulate", "--graph", "g.txt", "--out-dir", "o"]) == EXIT_IO
    assert "line 3" in capsys.readouterr().err


def test_truncated_pgm_corpus_is_io_error(capsys):
    Path("d.pgm").write_bytes(b"P5\n16 16\n255\n" + bytes(100))
    Path("list.csv").write_text("file,label\nd.pgm,1\n")
    argv = ["ocr-bench", "--train", "list.csv", "--n-test", "10", "--out-dir", "o"]
    assert main(argv) == EXIT_IO
    assert "byte offset" in capsys.readouterr().err


def test_undecodable_corpus_is_io_error(capsys):
    Path("c.csv").write_bytes(b"label,p0\n\xff\xfe\n")
    argv = ["ocr-bench", "--train", "c.csv", "--n-test", "10", "--out-dir", "o"]
    assert main(argv) == EXIT_IO
    assert "byte offset 9" in capsys.readouterr().err


def test_pet_pipeline_is_reproducible(capsys):
    for out in ("a", "b"):
        assert main(["pet-simulate", *PET_SMALL, "--seed", "3", "--out-dir", out]) == EXIT_OK
        sim = summary_of(capsys.readouterr().out)
        assert sim["subcommand"] == "pet-simulate"
        assert sim["pixels"] == "64"
        assert main(["pet-reconstruct", "--width", "8", "--height", "8", "--iters", "20",
                     "--seed", "3", "--out-dir", out]) == EXIT_OK
        rec = summary_of(capsys.readouterr().out)
        assert rec["counts"] == sim["counts"]

    for name in ("phantom.pgm", "phantom.pgm.scale.txt", "sinogram.csv", "system_matrix.txt",
                 "ellipses.csv", "expected.txt", "reconstruction.pgm", "reconstruction.txt",
                 "likelihood_trace.csv", "run_config.json"):
        assert (Path("a") / name).exists(), name
    assert tree_bytes(Path("a")) == tree_bytes(Path("b"))

    config = json.loads(Path("a/run_config.json").read_text())
    assert config["seed"] == 3
    assert config["generator"] == GENERATOR_NAME
    assert config["subcommand"] == "pet-reconstruct"


def test_pet_reconstruct_reads_grid_from_simulate_run(capsys):
    """Without --width/--height the grid comes from the simulate run's run_config.json."""
    assert main(["pet-simulate", "--width", "8", "--height", "6", "--angles", "12",
                 "--bins", "12", "--out-dir", "sim"]) == EXIT_OK
    capsys.readouterr()
    assert main(["pet-reconstruct", "--in-dir", "sim", "--iters", "5",
                 "--out-dir", "rec"]) == EXIT_OK
    assert read_pgm("rec/reconstruction.pgm").pixels.shape == (6, 8)
    config = json.loads(Path("rec/run_config.json").read_text())
    assert (config["options"]["width"], config["options"]["height"]) == (8, 6)


def test_pet_reconstruct_flags_override_recorded_grid(capsys):
    main(["pet-simulate", *PET_SMALL, "--out-dir", "sim"])
    argv = ["pet-reconstruct", "--in-dir", "sim", "--width", "4", "--height", "16",
            "--iters", "5", "--out-dir", "rec"]
    assert main(argv) == EXIT_OK
    assert read_pgm("rec/reconstruction.pgm").pixels.shape == (16, 4)


def test_seed_changes_sinogram(capsys):
    main(["pet-simulate", *PET_SMALL, "--seed", "1", "--out-dir", "a"])
    main(["pet-simulate", *PET_SMALL, "--seed", "2", "--out-dir", "b"])
    assert Path("a/sinogram.csv").read_bytes() != Path("b/sinogram.csv").read_bytes()


def test_nettomo_pipeline(capsys):
    assert main(["nettomo-simulate", "--epochs", "1000", "--out-dir", "n"]) == EXIT_OK
    sim = summary_of(capsys.readouterr().out)
    assert sim["rank"] == "3"
    assert main(["nettomo-estimate", "--tol", "1e-12", "--out-dir", "n"]) == EXIT_OK
    est = summary_of(capsys.readouterr().out)
    assert float(est["max_rel_error"]) <= 0.10
    lines = Path("n/estimates.csv").read_text().splitlines()
    assert lines[0] == "route_id,origin,destination,rate"
    assert len(lines) == 4


def test_ocr_gen(capsys):
    assert main(["ocr-gen", "--n-per-class", "2", "--out-dir", "g"]) == EXIT_OK
    assert summary_of(capsys.readouterr().out)["items"] == "20"
    assert len(Path("g/corpus.csv").read_text().splitlines()) == 21


def test_ocr_bench_report(capsys):
    assert main(["ocr-bench", "--n-train", "1000", "--n-test", "200", "--out-dir", "b"]) == EXIT_OK
    summary = summary_of(capsys.readouterr().out)
    assert float(summary["tangent_error_rate"]) <= float(summary["l2_error_rate"])
    lines = Path("b/bench_report.csv").read_text().splitlines()
    assert lines[0] == "method,n_train,n_test,errors,error_rate,wall_ms"
    assert [line.split(",")[0] for line in lines[1:]] == ["tangent", "l2"]


def test_renewal_check_exponential(capsys):
    argv = ["renewal-check", "--dist", "exp", "--q", "1", "--grid", "3000", "--out-dir", "r"]
    assert main(argv) == EXIT_OK
    summary = summary_of(capsys.readouterr().out)
    assert float(summary["defect"]) <= 2 * float(summary["dx"])
    assert Path("r/check.csv").read_text().splitlines()[0] == "dist,param,q,operator,defect,dx"


def test_renewal_solve(capsys):
    argv = ["renewal-solve", "--q", "1", "--init", "exp", "--grid", "3000", "--out-dir", "r"]
    assert main(argv) == EXIT_OK
    summary = summary_of(capsys.readouterr().out)
    assert float(summary["defect"]) <= 1e-3
    assert Path("r/solution.csv").read_text().startswith("# x_max=")


def test_renewal_bias(capsys):
    argv = ["renewal-bias", "--n", "20000", "--grid", "3000", "--bins", "10", "--out-dir", "r"]
    assert main(argv) == EXIT_OK
    summary = summary_of(capsys.readouterr().out)
    assert float(summary["length_biased_mean"]) > float(summary["plain_mean"])
    assert len(Path("r/bias_histogram.csv").read_text().splitlines()) == 21
    assert len(Path("r/bias_summary.csv").read_text().splitlines()) == 3
