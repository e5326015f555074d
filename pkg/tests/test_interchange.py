"""Corpus format: parsing, invariant validation, serialization, unigrams."""

from __future__ import annotations

import json
import math

import pytest

from simsurp.interchange import (
    AlternativeBlock,
    AlternativeEntry,
    Corpus,
    CorpusFormatError,
    CorpusHeader,
    CorpusRecord,
    CorpusValidationError,
    SubwordPiece,
    UnigramTableError,
    audit_corpus_file,
    dump_corpus,
    dumps_corpus,
    load_corpus,
    load_unigram_table,
    record_to_json,
    strip_marker,
    validate_corpus,
)


def write_lines(tmp_path, lines, name="c.jsonl"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


HEADER = '{"format_version":1,"embedding_dim":2,"tagset":["DT","NN","VB"],"subword_space_marker":"Ġ"}'


def record_obj(**overrides):
    """A canonical valid record as a plain dict, ready for corruption."""
    obj = {
        "doc_id": "d1",
        "word_index": 0,
        "surface": "the",
        "mean_rt": 210.0,
        "subwords": [{"token": "the", "logprob": math.log(0.5)}],
        "alternatives": {
            "mode": "exact_vocab",
            "entries": [
                {"surface": "the", "prob": 0.5, "embedding": [1.0, 0.0], "pos_tag": "DT"},
                {"surface": "dog", "prob": 0.25, "embedding": [0.0, 1.0], "pos_tag": "NN"},
                {"surface": "runs", "prob": 0.25, "embedding": [0.6, 0.8], "pos_tag": "VB"},
            ],
        },
    }
    obj.update(overrides)
    return obj


class TestLoadCorpus:
    def test_three_valid_records_order_preserved(self, corpus3_path):
        corpus = load_corpus(corpus3_path)
        assert len(corpus) == 3
        assert [r.surface for r in corpus] == ["the", "dog", "runs"]
        assert corpus.header.embedding_dim == 2
        assert corpus.header.tagset == ("DT", "NN", "VB")

    def test_round_trip_byte_for_byte(self, corpus3_path):
        original = corpus3_path.read_text(encoding="utf-8")
        assert dumps_corpus(load_corpus(corpus3_path)) == original

    def test_prob_mass_violation_message(self, tmp_path):
        bad = record_obj()
        bad["alternatives"]["entries"][0]["prob"] = 0.4  # mass 0.90
        path = write_lines(tmp_path, [HEADER, json.dumps(bad)])
        with pytest.raises(CorpusValidationError, match="probability mass 0.90 outside tolerance"):
            load_corpus(path)

    def test_surface_mismatch_rejected(self, tmp_path):
        bad = record_obj(surface="thy")
        path = write_lines(tmp_path, [HEADER, json.dumps(bad)])
        with pytest.raises(CorpusValidationError, match="surface_mismatch"):
            load_corpus(path)

    def test_parse_error_carries_line_number(self, tmp_path):
        path = write_lines(tmp_path, [HEADER, "{not json"])
        with pytest.raises(CorpusFormatError, match="line 2"):
            load_corpus(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(CorpusFormatError, match="empty file"):
            load_corpus(path)

    def test_unsupported_format_version(self, tmp_path):
        path = write_lines(tmp_path, ['{"format_version":2}'])
        with pytest.raises(CorpusFormatError, match="format_version"):
            load_corpus(path)

    def test_missing_required_key(self, tmp_path):
        bad = record_obj()
        del bad["mean_rt"]
        path = write_lines(tmp_path, [HEADER, json.dumps(bad)])
        with pytest.raises(CorpusFormatError, match="mean_rt"):
            load_corpus(path)

    def test_default_header_marker(self, tmp_path):
        path = write_lines(tmp_path, ['{"format_version":1}'])
        assert load_corpus(path).header.subword_space_marker == "Ġ"


class TestValidateCorpus:
    def test_valid_corpus_empty_report(self, corpus3):
        report = validate_corpus(corpus3)
        assert report.ok
        assert "no violations" in str(report)

    def test_word_index_gap_named(self, corpus3):
        records = list(corpus3)
        records[1] = CorpusRecord(
            "d1", 2, records[1].surface, records[1].mean_rt, records[1].subwords,
            records[1].alternatives,
        )
        report = validate_corpus(Corpus(corpus3.header, records))
        assert "index_contiguity" in report.rules()
        # resync: only the gap itself is reported, not every later record
        assert sum(v.rule == "index_contiguity" for v in report.violations) == 2

    def test_sample_count_mismatch_named(self, corpus3):
        block = AlternativeBlock(
            mode="mc_samples",
            entries=[AlternativeEntry("dog"), AlternativeEntry("dog")],
            sample_count=5,
        )
        record = CorpusRecord("d9", 0, "x", 200.0, [SubwordPiece("x", -1.0)], block)
        report = validate_corpus([record], corpus3.header)
        assert "sample_count" in report.rules()

    # every single-field corruption of a canonical record must be rejected
    @pytest.mark.parametrize(
        "mutate,rule",
        [
            (lambda o: o.update(mean_rt=0.0), "mean_rt_positive"),
            (lambda o: o.update(mean_rt=-3.0), "mean_rt_positive"),
            (lambda o: o.update(subwords=[]), "subwords_nonempty"),
            (lambda o: o["subwords"][0].update(logprob=0.5), "subword_logprob"),
            (lambda o: o["subwords"][0].update(token="thy"), "surface_mismatch"),
            (lambda o: o.update(word_index=5), "index_contiguity"),
            (lambda o: o["alternatives"]["entries"][0].update(prob=0.2), "probability_mass"),
            (lambda o: o["alternatives"]["entries"][0].update(prob=1.5), "prob_range"),
            (lambda o: o["alternatives"]["entries"][0].pop("prob"), "prob_required"),
            (lambda o: o["alternatives"]["entries"][1].update(surface="the", prob=0.5)
             or o["alternatives"]["entries"][0].update(prob=0.25), "duplicate_entry"),
            (lambda o: o["alternatives"]["entries"][0].update(embedding=[1.0, 0.0, 0.0]),
             "embedding_dim"),
            (lambda o: o["alternatives"]["entries"][0].update(pos_tag="XX"), "pos_tag_unknown"),
        ],
    )
    def test_single_field_corruptions_rejected(self, tmp_path, mutate, rule):
        obj = record_obj()
        mutate(obj)
        path = write_lines(tmp_path, [HEADER, json.dumps(obj)])
        report = audit_corpus_file(path)
        assert rule in report.rules(), f"expected {rule}, got {report.rules()}"
        with pytest.raises(CorpusValidationError):
            load_corpus(path)

    def test_mc_entries_must_not_carry_probs(self, tmp_path):
        obj = record_obj()
        obj["alternatives"] = {
            "mode": "mc_samples",
            "sample_count": 2,
            "entries": [{"surface": "dog", "prob": 0.5}, {"surface": "cat"}],
        }
        path = write_lines(tmp_path, [HEADER, json.dumps(obj)])
        assert "prob_forbidden" in audit_corpus_file(path).rules()

    def test_embedding_dim_inferred_when_header_silent(self):
        header = CorpusHeader()
        entries = [
            AlternativeEntry("a", None, (1.0, 0.0)),
            AlternativeEntry("b", None, (1.0, 0.0, 0.0)),
        ]
        block = AlternativeBlock(mode="mc_samples", entries=entries, sample_count=2)
        record = CorpusRecord("d", 0, "a", 100.0, [SubwordPiece("a", -1.0)], block)
        report = validate_corpus([record], header)
        assert "embedding_dim" in report.rules()

    def test_independent_docs_each_start_at_zero(self, corpus3):
        records = list(corpus3) + [
            CorpusRecord("d2", 0, "the", 190.0, [SubwordPiece("the", -0.7)])
        ]
        assert validate_corpus(Corpus(corpus3.header, records)).ok


class TestAuditCorpusFile:
    def test_collects_parse_and_invariant_violations(self, tmp_path):
        bad_mass = record_obj()
        bad_mass["alternatives"]["entries"][0]["prob"] = 0.4
        path = write_lines(
            tmp_path,
            [HEADER, "not json at all", json.dumps(bad_mass)],
        )
        report = audit_corpus_file(path)
        assert {"parse", "probability_mass"} <= report.rules()
        assert not report.ok

    def test_violation_locates_record(self, tmp_path):
        bad = record_obj(mean_rt=-1.0)
        path = write_lines(tmp_path, [HEADER, json.dumps(bad)])
        v = audit_corpus_file(path).violations[0]
        assert (v.doc_id, v.word_index, v.line) == ("d1", 0, 2)


class TestSerialization:
    def test_marker_stripping(self):
        assert strip_marker("Ġdog", "Ġ") == "dog"
        assert strip_marker("dog", "Ġ") == "dog"
        assert strip_marker("dog", "") == "dog"

    def test_record_json_is_compact_and_ordered(self, corpus3):
        line = record_to_json(corpus3[0])
        assert ": " not in line and ", " not in line
        keys = list(json.loads(line).keys())
        assert keys == ["doc_id", "word_index", "surface", "mean_rt", "subwords", "alternatives"]

    def test_dump_load_dump_stable(self, tmp_path, corpus3):
        p1 = tmp_path / "a.jsonl"
        p2 = tmp_path / "b.jsonl"
        dump_corpus(corpus3, p1)
        dump_corpus(load_corpus(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unicode_surfaces_survive(self, tmp_path):
        record = CorpusRecord("d", 0, "naïve", 200.0, [SubwordPiece("naïve", -1.0)])
        corpus = Corpus(CorpusHeader(), [record])
        path = tmp_path / "u.jsonl"
        dump_corpus(corpus, path)
        assert load_corpus(path)[0].surface == "naïve"
        assert "naïve" in path.read_text(encoding="utf-8")


class TestUnigramTable:
    def test_laplace_one_hand_values(self, unigram_path):
        table = load_unigram_table(unigram_path)
        # N = 200, V = 3: seen (c+1)/203, unseen 1/203
        assert table.freq("the") == pytest.approx(101 / 203, rel=0, abs=1e-15)
        assert table.freq("zyx") == pytest.approx(1 / 203, rel=0, abs=1e-15)

    def test_lookup_case_insensitive(self, unigram_path):
        table = load_unigram_table(unigram_path)
        assert table.freq("The") == table.freq("the")
        assert table.log_freq("CAT") == math.log(51 / 203)

    def test_min_observed_policy(self, unigram_path):
        table = load_unigram_table(unigram_path, oov_policy="min_observed")
        assert table.freq("the") == pytest.approx(100 / 200)
        assert table.freq("zyx") == pytest.approx(50 / 200)

    def test_duplicate_surfaces_after_lowercasing_merge(self, tmp_path):
        path = tmp_path / "u.tsv"
        path.write_text("The\t10\nthe\t20\n", encoding="utf-8")
        table = load_unigram_table(path, oov_policy="min_observed")
        assert table.freq("the") == pytest.approx(1.0)
        assert table.total_count == 30

    @pytest.mark.parametrize("line", ["the\t0", "the\t-5", "the\tabc", "no-tab-here"])
    def test_bad_rows_rejected(self, tmp_path, line):
        path = tmp_path / "u.tsv"
        path.write_text(line + "\n", encoding="utf-8")
        with pytest.raises(UnigramTableError):
            load_unigram_table(path)

    def test_empty_table_rejected(self, tmp_path):
        path = tmp_path / "u.tsv"
        path.write_text("\n", encoding="utf-8")
        with pytest.raises(UnigramTableError, match="empty"):
            load_unigram_table(path)

    def test_unknown_policy_rejected(self, unigram_path):
        with pytest.raises(UnigramTableError, match="oov_policy"):
            load_unigram_table(unigram_path, oov_policy="zipf")

    def test_all_frequencies_positive(self, unigram_path):
        table = load_unigram_table(unigram_path)
        assert all(f > 0 for f in table.frequencies.values())
        assert table.oov_frequency > 0
