"""Command-line behaviour: exit codes, table output, reproducibility."""

from __future__ import annotations

import json
import re
import subprocess
import sys

import pytest

from simsurp.cli import RunConfig, main, parse_predictor_set


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def split_table(text, sep="\t"):
    meta = [l for l in text.splitlines() if l.startswith("#")]
    body = [l.split(sep) for l in text.splitlines() if l and not l.startswith("#")]
    return meta, body[0], body[1:]


class TestValidateCommand:
    def test_clean_corpus(self, capsys, corpus3_path):
        code, out, err = run(capsys, "validate", "--corpus", str(corpus3_path))
        assert code == 0
        assert "# violations: 0" in out
        assert err == ""

    def test_violations_reported_and_exit_1(self, capsys, corpus3_path, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(
            corpus3_path.read_text(encoding="utf-8").replace(
                '"mean_rt":250.0', '"mean_rt":-250.0'
            ),
            encoding="utf-8",
        )
        code, out, _ = run(capsys, "validate", "--corpus", str(bad))
        assert code == 1
        assert "mean_rt_positive" in out
        assert "# violations: 1" in out

    def test_missing_file_is_error_record(self, capsys, tmp_path):
        code, out, err = run(capsys, "validate", "--corpus", str(tmp_path / "nope.jsonl"))
        assert code == 2
        record = json.loads(err)
        assert record["error"] == "FileNotFoundError"
        assert record["command"] == "validate"

    def test_bad_unigram_table_reported(self, capsys, corpus3_path, tmp_path):
        tsv = tmp_path / "u.tsv"
        tsv.write_text("the\t-3\n", encoding="utf-8")
        code, out, _ = run(
            capsys, "validate", "--corpus", str(corpus3_path), "--unigrams", str(tsv)
        )
        assert code == 1
        assert "unigram_table" in out


class TestMetricsCommand:
    def test_meta_lines(self, capsys, corpus3_path):
        code, out, _ = run(capsys, "metrics", "--corpus", str(corpus3_path))
        assert code == 0
        meta, header, rows = split_table(out)
        assert meta[0] == "# format_version: 1"
        assert re.fullmatch(r"# config_hash: [0-9a-f]{16}", meta[1])
        assert meta[2] == "# seed: 0"
        assert header[:4] == ["doc_id", "word_index", "surface", "mean_rt"]
        assert len(rows) == 3

    def test_identity_column_equals_surprisal(self, capsys, corpus3_path):
        code, out, _ = run(
            capsys, "metrics", "--corpus", str(corpus3_path), "--similarity", "identity"
        )
        assert code == 0
        _, header, rows = split_table(out)
        s = header.index("surprisal")
        h = header.index("sim_adjusted_surprisal:identity")
        est = header.index("estimator:identity")
        for row in rows:
            assert row[s] == row[h]
            assert row[est] == "exact"

    def test_unigram_column(self, capsys, corpus3_path, unigram_path):
        code, out, _ = run(
            capsys,
            "metrics",
            "--corpus",
            str(corpus3_path),
            "--unigrams",
            str(unigram_path),
        )
        assert code == 0
        _, header, rows = split_table(out)
        assert "log_unigram_freq" in header

    def test_agg_first_changes_multipiece_words(self, capsys, corpus3_path):
        _, out_sum, _ = run(capsys, "metrics", "--corpus", str(corpus3_path))
        _, out_first, _ = run(
            capsys, "metrics", "--corpus", str(corpus3_path), "--agg", "first"
        )
        _, header, rows_sum = split_table(out_sum)
        _, _, rows_first = split_table(out_first)
        s = header.index("surprisal")
        # 'runs' is two pieces; the single-piece words are unchanged
        assert rows_sum[2][s] != rows_first[2][s]
        assert rows_sum[0][s] == rows_first[0][s]

    def test_mc_estimator_reproducible(self, capsys, corpus3_path):
        args = (
            "metrics",
            "--corpus",
            str(corpus3_path),
            "--similarity",
            "cosine:noncontextual",
            "--estimator",
            "mc",
            "--samples",
            "25",
            "--seed",
            "7",
        )
        _, out1, _ = run(capsys, *args)
        _, out2, _ = run(capsys, *args)
        assert out1 == out2
        _, out3, _ = run(capsys, *args[:-1], "8")
        assert out1 != out3

    def test_zero_similarity_is_an_error_record(self, capsys, tmp_path):
        import math

        from simsurp.interchange import (
            EXACT_VOCAB,
            AlternativeBlock,
            AlternativeEntry,
            Corpus,
            CorpusHeader,
            CorpusRecord,
            SubwordPiece,
            dump_corpus,
        )

        block = AlternativeBlock(
            mode=EXACT_VOCAB,
            entries=[
                AlternativeEntry("rare", 1e-9),
                AlternativeEntry("common", 1.0 - 1e-9),
            ],
        )
        corpus = Corpus(
            CorpusHeader(),
            [
                CorpusRecord(
                    "d", 0, "rare", 200.0, [SubwordPiece("rare", math.log(1e-9))], block
                )
            ],
        )
        path = tmp_path / "rare.jsonl"
        dump_corpus(corpus, path)
        code, _, err = run(
            capsys,
            "metrics",
            "--corpus",
            str(path),
            "--similarity",
            "identity",
            "--estimator",
            "mc",
        )
        assert code == 2
        record = json.loads(err)
        assert record["error"] == "ZeroSimilarityError"
        assert "doc=d" in record["message"]

    def test_out_writes_file_not_stdout(self, capsys, corpus3_path, tmp_path):
        dest = tmp_path / "metrics.tsv"
        code, out, _ = run(
            capsys, "metrics", "--corpus", str(corpus3_path), "--out", str(dest)
        )
        assert code == 0
        assert out == ""
        assert dest.read_text(encoding="utf-8").startswith("# format_version: 1")


class TestOracleCommand:
    def test_checks_pass(self, capsys):
        code, out, _ = run(capsys, "oracle", "--seed", "0")
        assert code == 0
        assert out.count("PASS") == 3
        assert out.rstrip().endswith("all checks passed")

    def test_reproducible(self, capsys):
        _, out1, _ = run(capsys, "oracle", "--seed", "3")
        _, out2, _ = run(capsys, "oracle", "--seed", "3")
        assert out1 == out2


class TestEvaluateCommand:
    def evaluate(self, capsys, path, predictors, baseline, *extra):
        return run(
            capsys,
            "evaluate",
            "--corpus",
            str(path),
            "--predictors",
            predictors,
            "--baseline-predictors",
            baseline,
            *extra,
        )

    def test_planted_effect(self, capsys, planted_corpus_path):
        code, out, _ = self.evaluate(
            capsys, planted_corpus_path, "surprisal,length", "length"
        )
        assert code == 0
        _, header, rows = split_table(out)
        assert header[0] == "comparison"
        row = dict(zip(header, rows[0]))
        assert row["added"] == "surprisal"
        assert float(row["delta_llh_e2"]) > 0
        assert float(row["p_value"]) == pytest.approx(2 / 1024)
        assert row["stars"] == "**"
        deltas_line = next(l for l in out.splitlines() if l.startswith("# fold_deltas:"))
        deltas = [float(x) for x in deltas_line.split(":", 1)[1].split(",")]
        assert len(deltas) == 10 and all(d > 0 for d in deltas)

    def test_identical_sets_null(self, capsys, planted_corpus_path):
        code, out, _ = self.evaluate(
            capsys, planted_corpus_path, "surprisal,length", "surprisal,length"
        )
        assert code == 0
        _, header, rows = split_table(out)
        row = dict(zip(header, rows[0]))
        assert row["added"] == "(none)"
        assert float(row["delta_llh_e2"]) == 0.0
        assert float(row["p_value"]) == 1.0
        assert row["stars"] == ""

    def test_spillover_override_syntax(self, capsys, planted_corpus_path):
        code, out, _ = self.evaluate(
            capsys, planted_corpus_path, "surprisal=0,length", "length"
        )
        assert code == 0

    def test_not_nested_is_error_record(self, capsys, planted_corpus_path):
        code, _, err = self.evaluate(
            capsys, planted_corpus_path, "surprisal,length", "log_unigram_freq"
        )
        assert code == 2
        assert json.loads(err)["error"] == "RegressionError"

    def test_missing_required_flag_exits_2(self, capsys, planted_corpus_path):
        with pytest.raises(SystemExit) as err:
            main(["evaluate", "--corpus", str(planted_corpus_path)])
        assert err.value.code == 2


class TestSweepAlphaCommand:
    def test_sweep_with_reference_row(self, capsys, planted_corpus_path):
        code, out, _ = run(
            capsys,
            "sweep-alpha",
            "--corpus",
            str(planted_corpus_path),
            "--similarity",
            "cosine:noncontextual",
            "--alphas",
            "1,8,64",
        )
        assert code == 0
        _, header, rows = split_table(out, sep=",")
        assert header == ["alpha", "predictor", "delta_llh_e2", "p_value", "stars"]
        assert [r[0] for r in rows] == ["1", "8", "64", "inf"]
        assert rows[-1][1] == "surprisal"
        deltas = [float(r[2]) for r in rows]
        # sharpening drives the smeared metric toward plain surprisal,
        # which is what planted the reading times
        assert deltas == sorted(deltas)
        assert deltas[-1] > deltas[0]

    def test_identity_kernel_rejected(self, capsys, planted_corpus_path):
        code, _, err = run(
            capsys,
            "sweep-alpha",
            "--corpus",
            str(planted_corpus_path),
            "--similarity",
            "identity",
        )
        assert code == 2
        assert "identity" in json.loads(err)["message"]

    def test_exactly_one_kernel_required(self, capsys, planted_corpus_path):
        code, _, err = run(
            capsys,
            "sweep-alpha",
            "--corpus",
            str(planted_corpus_path),
            "--similarity",
            "cosine:noncontextual",
            "--similarity",
            "orthographic",
        )
        assert code == 2
        assert "exactly one" in json.loads(err)["message"]

    def test_surprisal_baseline_skips_reference_row(self, capsys, planted_corpus_path):
        code, out, _ = run(
            capsys,
            "sweep-alpha",
            "--corpus",
            str(planted_corpus_path),
            "--similarity",
            "cosine:noncontextual",
            "--alphas",
            "1,4",
            "--baseline-predictors",
            "length,surprisal",
        )
        assert code == 0
        _, _, rows = split_table(out, sep=",")
        assert [r[0] for r in rows] == ["1", "4"]


class TestReproducibility:
    def test_byte_identical_reruns(self, capsys, planted_corpus_path, tmp_path):
        dest = tmp_path / "report.tsv"
        argv = [
            "evaluate",
            "--corpus",
            str(planted_corpus_path),
            "--predictors",
            "surprisal,length",
            "--baseline-predictors",
            "length",
            "--seed",
            "5",
            "--out",
            str(dest),
        ]
        assert main(argv) == 0
        first = dest.read_bytes()
        dest.unlink()
        assert main(argv) == 0
        assert dest.read_bytes() == first
        capsys.readouterr()

    def test_config_hash_tracks_inputs(self, corpus3_path):
        c1 = RunConfig(command="metrics", corpus=str(corpus3_path), seed=0)
        c2 = RunConfig(command="metrics", corpus=str(corpus3_path), seed=0)
        c3 = RunConfig(command="metrics", corpus=str(corpus3_path), seed=1)
        assert c1.hash() == c2.hash()
        assert c1.hash() != c3.hash()
        assert re.fullmatch(r"[0-9a-f]{16}", c1.hash())

    def test_run_config_validation(self, corpus3_path):
        with pytest.raises(FileNotFoundError):
            RunConfig(command="metrics", corpus="/no/such/corpus.jsonl")
        with pytest.raises(ValueError, match="seed"):
            RunConfig(command="metrics", corpus=str(corpus3_path), seed=-1)


class TestParsePredictorSet:
    def test_names_and_default_spillover(self):
        ps = parse_predictor_set("surprisal, length")
        assert ps.names == ("surprisal", "length")
        assert ps.spillover == 3

    def test_override_suffix(self):
        ps = parse_predictor_set("length,info_value:orthographic=0")
        assert ps.names == ("length", "info_value:orthographic")
        assert ps.spillover_overrides == {"info_value:orthographic": 0}

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no predictor names"):
            parse_predictor_set(" , ")


class TestModuleEntryPoint:
    def test_python_dash_m(self):
        proc = subprocess.run(
            [sys.executable, "-m", "simsurp", "oracle", "--seed", "0"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "all checks passed" in proc.stdout
