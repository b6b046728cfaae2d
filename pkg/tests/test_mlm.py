import json
import logging
import random

import pytest

from topoterm.mlm import (
    DEFAULT_SCORE,
    TokenProbabilityRecord,
    aggregate_mlm_scores,
    iter_probability_records,
    load_score_table,
    save_score_table,
)


def rec(word, p, idx=0, utt="u1"):
    return TokenProbabilityRecord(utt_id=utt, token_index=idx, word=word, p_mask=p)


class TestAggregate:
    def test_mean_of_complements(self):
        table = aggregate_mlm_scores([rec("cat", 0.2), rec("cat", 0.4), rec("dog", 1.0)])
        assert table.score("cat") == pytest.approx(0.7)
        assert table.score("dog") == pytest.approx(0.0)
        assert table.occurrence_count == {"cat": 2, "dog": 1}

    def test_order_invariance_is_exact(self):
        rng = random.Random(5)
        records = [rec(f"w{i % 7}", rng.random(), idx=i) for i in range(500)]
        a = aggregate_mlm_scores(records)
        shuffled = records[:]
        rng.shuffle(shuffled)
        b = aggregate_mlm_scores(shuffled)
        assert a.score_of == b.score_of  # bitwise, not approximate

    def test_out_of_range_probability_rejected(self):
        with pytest.raises(ValueError, match="u9#3"):
            aggregate_mlm_scores([rec("x", 1.5, idx=3, utt="u9")])
        with pytest.raises(ValueError):
            aggregate_mlm_scores([rec("x", -0.01)])

    def test_empty_stream(self):
        table = aggregate_mlm_scores([])
        assert len(table) == 0


class TestScoreTable:
    def test_unseen_word_default_with_warning(self, caplog):
        table = aggregate_mlm_scores([rec("cat", 0.2)])
        with caplog.at_level(logging.WARNING):
            assert table.score("zebra") == DEFAULT_SCORE
        assert "zebra" in caplog.text
        assert "zebra" not in table
        assert "cat" in table

    def test_tsv_roundtrip(self, tmp_path):
        table = aggregate_mlm_scores(
            [rec("cat", 0.25), rec("cat", 0.75), rec("dog", 0.125)]
        )
        path = tmp_path / "scores.tsv"
        save_score_table(path, table)
        loaded = load_score_table(path)
        assert loaded.score_of == table.score_of
        assert loaded.occurrence_count == table.occurrence_count


class TestIterRecords:
    def write(self, tmp_path, lines):
        path = tmp_path / "probs.jsonl"
        path.write_text("\n".join(json.dumps(x) for x in lines) + "\n")
        return path

    def test_stream_expansion(self, tmp_path):
        path = self.write(
            tmp_path,
            [
                {"utt_id": "u1", "tokens": ["a", "b"], "p_mask": [0.1, 0.2]},
                {"utt_id": "u2", "tokens": ["c"], "p_mask": [0.3]},
            ],
        )
        records = list(iter_probability_records(path))
        assert [r.word for r in records] == ["a", "b", "c"]
        assert [r.token_index for r in records] == [0, 1, 0]
        assert records[1].p_mask == 0.2

    def test_length_mismatch_rejected(self, tmp_path):
        path = self.write(
            tmp_path, [{"utt_id": "u1", "tokens": ["a", "b"], "p_mask": [0.1]}]
        )
        with pytest.raises(ValueError, match="length mismatch"):
            list(iter_probability_records(path))

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "probs.jsonl"
        path.write_text(
            '\n{"utt_id": "u1", "tokens": ["a"], "p_mask": [0.5]}\n\n'
        )
        assert len(list(iter_probability_records(path))) == 1
