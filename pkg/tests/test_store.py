import json
import math
import random

import numpy as np
import pytest

from entroguide.entropy import TaskKind, tokenize
from entroguide.store import (ExperienceRecord, ExperienceStore,
                              StoreFormatError, VectorizerState,
                              classify_difficulty, cosine_similarity)
from entroguide.tasks import (CodeReference, Difficulty, MathReference,
                              TaskInstance)
from entroguide.routing import generate_instance


def make_record(problem, steps=("step one",), answer="42",
                difficulty=Difficulty.EASY, entropy=1.0, usage=0):
    return ExperienceRecord(problem_text=problem, solution_steps=tuple(steps),
                            final_answer=answer, difficulty=difficulty,
                            success_entropy=entropy, usage_count=usage)


def dense_oracle(store, query_text):
    """Independent dense TF-IDF + cosine over the same statistics.

    Recomputes df from the raw record texts, builds dense numpy vectors
    over a sorted vocabulary, and scores with numpy's dot product.
    """
    texts = [r.problem_text for r in store.records]
    n = len(texts)
    token_lists = [list(tokenize(t).tokens) for t in texts]
    vocab = sorted({tok for toks in token_lists for tok in toks})
    index = {term: i for i, term in enumerate(vocab)}
    df = np.zeros(len(vocab))
    for toks in token_lists:
        for term in set(toks):
            df[index[term]] += 1

    def vectorize(tokens):
        vec = np.zeros(len(vocab))
        for tok in tokens:
            if tok in index:
                vec[index[tok]] += 1
        nonzero = vec > 0
        out = np.zeros(len(vocab))
        out[nonzero] = vec[nonzero] * np.log(n / df[nonzero])
        return out

    q = vectorize(list(tokenize(query_text).tokens))
    sims = []
    for i, toks in enumerate(token_lists):
        v = vectorize(toks)
        qn, vn = np.linalg.norm(q), np.linalg.norm(v)
        sims.append(0.0 if qn == 0 or vn == 0 else float(np.dot(q, v) / (qn * vn)))
    order = sorted(range(n),
                   key=lambda i: (-sims[i], -store.records[i].usage_count,
                                  store.records[i].id))
    return sims, order


class TestEncode:
    def test_empty_repository_zero_vector(self):
        assert ExperienceStore().encode("any problem at all") == {}

    def test_term_in_all_records_weighs_zero(self):
        store = ExperienceStore()
        store.insert(make_record("area of square"))
        store.insert(make_record("area of circle"))
        vec = store.encode("area")
        assert vec["area"] == 0.0

    def test_weight_formula(self):
        # Eq oracle: independent scalar computation 2 * ln(4/2)
        store = ExperienceStore()
        for text in ["route a", "route b", "walk c", "walk d"]:
            store.insert(make_record(text))
        vec = store.encode("route depot route")
        assert vec["route"] == pytest.approx(2 * math.log(2), abs=1e-12)
        assert "depot" not in vec  # query-only terms dropped

    def test_encode_is_value_not_view(self):
        store = ExperienceStore()
        store.insert(make_record("alpha beta"))
        before = store.encode("alpha beta")
        snapshot = dict(before)
        store.insert(make_record("gamma delta"))
        assert before == snapshot


class TestInsert:
    def test_insert_into_empty(self):
        store = ExperienceStore()
        store.insert(make_record("two words here"))
        state = store.vectorizer_state()
        assert state.record_count == 1
        assert all(df == 1 for df in state.document_frequency.values())

    def test_df_counts_documents_not_occurrences(self):
        store = ExperienceStore()
        store.insert(make_record("area area area"))
        store.insert(make_record("the area"))
        assert store.vectorizer_state().document_frequency["area"] == 2

    def test_ids_monotone(self):
        store = ExperienceStore()
        first = store.insert(make_record("a"))
        second = store.insert(make_record("b"))
        assert (first.id, second.id) == (0, 1)

    def test_duplicate_problem_text_allowed(self):
        store = ExperienceStore()
        store.insert(make_record("same text"))
        store.insert(make_record("same text"))
        assert len(store) == 2
        assert store.vectorizer_state().document_frequency["same"] == 2

    def test_hundred_random_inserts_match_scratch_rebuild(self):
        rng = random.Random(11)
        store = ExperienceStore()
        vocab = [f"w{i}" for i in range(30)]
        texts = [" ".join(rng.choices(vocab, k=rng.randint(1, 12)))
                 for _ in range(100)]
        for text in texts:
            store.insert(make_record(text))
        # scratch oracle
        df = {}
        for text in texts:
            for term in set(tokenize(text).tokens):
                df[term] = df.get(term, 0) + 1
        state = store.vectorizer_state()
        assert state.record_count == 100
        assert state.document_frequency == df
        assert all(v <= 100 for v in state.document_frequency.values())
        state.validate()


class TestRetrieve:
    def test_empty_repository(self):
        assert ExperienceStore().retrieve_top_k("anything", k=3) == []

    def test_self_similarity(self):
        store = ExperienceStore()
        store.insert(make_record("alpha bravo"))
        store.insert(make_record("charlie delta"))
        store.insert(make_record("echo foxtrot"))
        hits = store.retrieve_top_k("charlie delta", k=1, s_min=0.5)
        assert hits[0].record.problem_text == "charlie delta"
        assert hits[0].similarity == pytest.approx(1.0, abs=1e-9)
        assert hits[0].injected

    def test_oracle_order_on_synthetic_repo(self):
        rng = random.Random(5)
        store = ExperienceStore()
        vocab = [f"t{i}" for i in range(12)]
        for _ in range(10):
            store.insert(make_record(
                " ".join(rng.choices(vocab, k=rng.randint(2, 8)))))
        query = " ".join(rng.choices(vocab, k=5))
        sims, order = dense_oracle(store, query)
        hits = store.retrieve_top_k(query, k=3, s_min=math.inf)
        assert [h.record.id for h in hits] == order[:3]
        for hit in hits:
            assert hit.similarity == pytest.approx(sims[hit.record.id], abs=1e-9)

    def test_injection_threshold_and_usage_bump(self):
        store = ExperienceStore()
        store.insert(make_record("alpha bravo"))
        store.insert(make_record("zulu yankee"))
        hits = store.retrieve_top_k("alpha bravo", k=2, s_min=0.9)
        injected = [h for h in hits if h.injected]
        assert len(injected) == 1
        assert injected[0].record.usage_count == 1
        not_injected = [h for h in hits if not h.injected]
        assert not_injected[0].record.usage_count == 0

    def test_no_injection_is_idempotent(self):
        store = ExperienceStore()
        store.insert(make_record("one two"))
        before = [r.usage_count for r in store.records]
        store.retrieve_top_k("one two", k=1, s_min=math.inf)
        store.retrieve_top_k("one two", k=1, s_min=math.inf)
        assert [r.usage_count for r in store.records] == before

    def test_tie_break_usage_then_id(self):
        store = ExperienceStore()
        store.insert(make_record("same words", usage=0))
        store.insert(make_record("same words", usage=5))
        store.insert(make_record("same words", usage=5))
        hits = store.retrieve_top_k("same words", k=3, s_min=math.inf)
        assert [h.record.id for h in hits] == [1, 2, 0]

    def test_k_truncation(self):
        store = ExperienceStore()
        for i in range(5):
            store.insert(make_record(f"text {i}"))
        assert len(store.retrieve_top_k("text", k=3, s_min=math.inf)) == 3
        assert len(store.retrieve_top_k("text", k=10, s_min=math.inf)) == 5


class TestSaveLoad:
    def test_round_trip(self, tmp_path):
        store = ExperienceStore()
        store.insert(make_record("alpha beta", steps=("s1", "s2"),
                                 difficulty=Difficulty.HARD, entropy=2.5))
        store.insert(make_record("gamma delta"))
        path = tmp_path / "repo.jsonl"
        store.save(path)
        loaded = ExperienceStore.load(path)
        assert [r.to_dict() for r in loaded.records] == \
               [r.to_dict() for r in store.records]
        query = "alpha gamma"
        a = [(h.record.id, h.similarity)
             for h in store.retrieve_top_k(query, s_min=math.inf)]
        b = [(h.record.id, h.similarity)
             for h in loaded.retrieve_top_k(query, s_min=math.inf)]
        assert a == b

    def test_jsonl_key_set(self, tmp_path):
        store = ExperienceStore()
        store.insert(make_record("alpha"))
        path = tmp_path / "repo.jsonl"
        store.save(path)
        row = json.loads(path.read_text().splitlines()[0])
        assert set(row) == {"problem_text", "solution_steps", "final_answer",
                            "difficulty", "success_entropy", "usage_count",
                            "id"}

    def test_load_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert len(ExperienceStore.load(path)) == 0

    def test_malformed_line_names_line_number(self, tmp_path):
        store = ExperienceStore()
        store.insert(make_record("fine"))
        path = tmp_path / "repo.jsonl"
        store.save(path)
        with path.open("a") as fh:
            fh.write("{not json\n")
        with pytest.raises(StoreFormatError) as err:
            ExperienceStore.load(path)
        assert err.value.line == 2
        assert ":2:" in str(err.value)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(StoreFormatError):
            ExperienceStore.load(tmp_path / "missing.jsonl")

    def test_non_monotone_ids_rejected(self, tmp_path):
        record = make_record("x")
        row = record.to_dict()
        row["id"] = 3
        lines = [json.dumps(row)]
        row2 = dict(row)
        row2["id"] = 3
        lines.append(json.dumps(row2))
        path = tmp_path / "bad.jsonl"
        path.write_text("\n".join(lines))
        with pytest.raises(StoreFormatError):
            ExperienceStore.load(path)


class TestCosine:
    def test_symmetric(self):
        a = {"x": 1.0, "y": 2.0}
        b = {"y": 3.0, "z": 1.0}
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a))

    def test_identical_nonzero(self):
        a = {"x": 0.3, "y": 1.7}
        assert cosine_similarity(a, dict(a)) == pytest.approx(1.0, abs=1e-9)

    def test_zero_vector(self):
        assert cosine_similarity({}, {"x": 1.0}) == 0.0
        assert cosine_similarity({"x": 0.0}, {"x": 1.0}) == 0.0


class TestVectorizerState:
    def test_invariant_violation_detected(self):
        state = VectorizerState(vocabulary={"a": 0},
                                document_frequency={"a": 5}, record_count=3)
        with pytest.raises(StoreFormatError):
            state.validate()

    def test_key_mismatch_detected(self):
        state = VectorizerState(vocabulary={"a": 0},
                                document_frequency={"b": 1}, record_count=3)
        with pytest.raises(StoreFormatError):
            state.validate()


class TestClassifyDifficulty:
    def test_label_echoed(self):
        task = TaskInstance(id="t", kind=TaskKind.MATH, problem="1 2 3 4 5 6",
                            reference=MathReference(answer=1.0),
                            difficulty=Difficulty.EASY)
        assert classify_difficulty(task) is Difficulty.EASY

    def test_math_boundaries(self):
        def math_task(problem):
            return TaskInstance(id="m", kind=TaskKind.MATH, problem=problem,
                                reference=MathReference(answer=0.0))
        assert classify_difficulty(math_task("add 2 and 3")) is Difficulty.EASY
        assert classify_difficulty(math_task("2 3 4")) is Difficulty.MEDIUM
        assert classify_difficulty(math_task("1 2 3 4 5")) is Difficulty.HARD

    def test_code_by_test_count(self):
        task = TaskInstance(id="c", kind=TaskKind.CODE, problem="p",
                            reference=CodeReference(entry_point="f",
                                                    tests=("a", "b", "c", "d")))
        assert classify_difficulty(task) is Difficulty.HARD

    def test_routing_boundaries(self):
        def routing_task(n):
            return TaskInstance(id="r", kind=TaskKind.ROUTING, problem="p",
                                reference=generate_instance(n, seed=1,
                                                            solve=False))
        assert classify_difficulty(routing_task(5)) is Difficulty.EASY
        assert classify_difficulty(routing_task(6)) is Difficulty.MEDIUM
        assert classify_difficulty(routing_task(12)) is Difficulty.HARD
