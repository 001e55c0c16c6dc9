import csv
import io
import json
import sys

import pytest

from entroguide.agents import Strength, Verdict
from entroguide.bench import (BenchReport, MetricCell, StratumError,
                              compute_metrics, render_report, run_batch,
                              stratified_sample, stratum_counts)
from entroguide.engine import (RoundRecord, SessionConfig, SessionMode,
                               SessionTranscript, run_session)
from entroguide.entropy import EntropyReport, TaskKind
from entroguide.policy import ThresholdState
from entroguide.store import ExperienceStore
from entroguide.tasks import (CodeReference, CodeVerdict, DatasetError,
                              Difficulty, MathReference, SandboxConfig,
                              TaskInstance, check_code, check_math,
                              extract_answer, ingest_gsm8k, ingest_mbpp,
                              load_dataset, save_dataset)
from conftest import scripted_profile, write_script


class TestCheckMath:
    @pytest.mark.parametrize("response, reference, expected", [
        ("...so Area = 8 x 5 = 40", 40.0, True),
        ("Area = 25", 40.0, False),
        ("no idea", 40.0, False),
        ("the total is #### 72", 72.0, True),
        ("answer: 3.5", 3.5, True),
        ("Answer:   -12", -12.0, True),
        ("I get 10 then 20 then 30", 30.0, True),   # last number fallback
        ("I get 10 then 20 then 30", 10.0, False),
        ("", 1.0, False),
    ])
    def test_examples(self, response, reference, expected):
        assert check_math(response, reference) is expected

    def test_trailing_whitespace_invariance(self):
        assert check_math("answer: 40   \n\t ", 40.0)

    def test_comma_thousands_separators(self):
        assert check_math("the answer is 1,234,567", 1234567.0)
        assert check_math("= 1,234.5", 1234.5)

    def test_relative_tolerance(self):
        assert check_math("= 40.0000001", 40.0)
        assert not check_math("= 40.1", 40.0)
        assert check_math("= 0.0000000001", 0.0)

    def test_number_after_marker_preferred(self):
        assert extract_answer("with 5 boxes, answer: 7 total") == 7.0

    def test_marker_without_number_falls_back(self):
        assert extract_answer("7 is what x equals =") == 7.0


class TestCheckCode:
    REFERENCE = CodeReference(entry_point="add",
                              tests=("assert add(1, 2) == 3",
                                     "assert add(0, 0) == 0"))

    def sandbox(self, timeout=10.0):
        return SandboxConfig(command=(sys.executable, "{file}"),
                             timeout=timeout)

    def test_passing_code(self):
        response = "```python\ndef add(a, b):\n    return a + b\n```"
        verdict, _note = check_code(response, self.REFERENCE, self.sandbox())
        assert verdict is CodeVerdict.PASS

    def test_failing_assertion(self):
        response = "```python\ndef add(a, b):\n    return a - b\n```"
        verdict, _note = check_code(response, self.REFERENCE, self.sandbox())
        assert verdict is CodeVerdict.FAIL

    def test_no_sandbox_skips(self):
        verdict, note = check_code("def add(a, b): return a + b",
                                   self.REFERENCE, None)
        assert verdict is CodeVerdict.SKIPPED
        assert "sandbox" in note

    def test_unfenced_response_used_whole(self):
        verdict, _ = check_code("def add(a, b):\n    return a + b",
                                self.REFERENCE, self.sandbox())
        assert verdict is CodeVerdict.PASS

    def test_timeout_fails_with_note(self):
        response = "```python\nimport time\ntime.sleep(30)\ndef add(a,b):\n    return a+b\n```"
        verdict, note = check_code(response, self.REFERENCE,
                                   self.sandbox(timeout=1.0))
        assert verdict is CodeVerdict.FAIL
        assert "timeout" in note


def oracle_counts(n):
    """Integer-arithmetic largest remainder for the 30/50/20 split."""
    pcts = [(Difficulty.EASY, 30), (Difficulty.MEDIUM, 50),
            (Difficulty.HARD, 20)]
    floors = {s: (p * n) // 100 for s, p in pcts}
    rems = {s: (p * n) % 100 for s, p in pcts}
    leftover = n - sum(floors.values())
    order = sorted(pcts, key=lambda sp: (-rems[sp[0]],
                                         [d for d, _ in pcts].index(sp[0])))
    for s, _p in order[:leftover]:
        floors[s] += 1
    return floors


class TestStratifiedSample:
    def make_pool(self, easy=80, medium=80, hard=80):
        pool = []
        specs = [(Difficulty.EASY, easy), (Difficulty.MEDIUM, medium),
                 (Difficulty.HARD, hard)]
        for difficulty, count in specs:
            for i in range(count):
                pool.append(TaskInstance(
                    id=f"{difficulty.value}-{i}", kind=TaskKind.MATH,
                    problem=f"problem {i}",
                    reference=MathReference(answer=1.0),
                    difficulty=difficulty))
        return pool

    def test_paper_counts_for_n50(self):
        counts = stratum_counts(None or {Difficulty.EASY: 0.30,
                                         Difficulty.MEDIUM: 0.50,
                                         Difficulty.HARD: 0.20}, 50)
        assert counts == {Difficulty.EASY: 15, Difficulty.MEDIUM: 25,
                          Difficulty.HARD: 10}

    def test_exact_fractions_n10(self):
        sample = stratified_sample(self.make_pool(), None, 10, seed=1)
        by = {d: 0 for d in Difficulty}
        for task in sample:
            by[task.difficulty] += 1
        assert by == {Difficulty.EASY: 3, Difficulty.MEDIUM: 5,
                      Difficulty.HARD: 2}

    def test_counts_match_integer_oracle_exhaustively(self):
        fractions = {Difficulty.EASY: 0.30, Difficulty.MEDIUM: 0.50,
                     Difficulty.HARD: 0.20}
        for n in range(1, 201):
            counts = stratum_counts(fractions, n)
            assert sum(counts.values()) == n
            assert counts == oracle_counts(n), f"n={n}"

    def test_same_seed_same_sample(self):
        pool = self.make_pool()
        a = [t.id for t in stratified_sample(pool, None, 50, seed=9)]
        b = [t.id for t in stratified_sample(pool, None, 50, seed=9)]
        assert a == b
        c = [t.id for t in stratified_sample(pool, None, 50, seed=10)]
        assert a != c

    def test_without_replacement(self):
        sample = stratified_sample(self.make_pool(), None, 100, seed=3)
        assert len({t.id for t in sample}) == 100

    def test_stratum_exhausted_names_stratum(self):
        pool = self.make_pool(easy=2, medium=50, hard=50)
        with pytest.raises(StratumError) as err:
            stratified_sample(pool, None, 50, seed=1)
        assert err.value.stratum is Difficulty.EASY
        assert "easy" in str(err.value)

    def test_unlabeled_pool_uses_heuristic(self):
        pool = [TaskInstance(id=f"t{i}", kind=TaskKind.MATH,
                             problem="1 2 3",  # 3 numbers -> medium
                             reference=MathReference(answer=1.0))
                for i in range(40)]
        sample = stratified_sample(pool, {Difficulty.EASY: 0.0,
                                          Difficulty.MEDIUM: 1.0,
                                          Difficulty.HARD: 0.0}, 5, seed=0)
        assert len(sample) == 5


def make_transcript(task_id="t", success=True, first_verdict=None,
                    rounds_used=1, rag_used=False, skipped=False,
                    accuracy_pct=None, kind=TaskKind.MATH):
    report = EntropyReport(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.5)
    state = ThresholdState.initial()
    if first_verdict is None:
        first_verdict = Verdict.CORRECT if success and rounds_used == 1 \
            else Verdict.INCORRECT
    rounds = []
    for t in range(1, rounds_used + 1):
        if t == rounds_used:
            verdict = Verdict.CORRECT if success else Verdict.INCORRECT
        elif t == 1:
            verdict = first_verdict
        else:
            verdict = Verdict.INCORRECT
        rounds.append(RoundRecord(round=t, weak_response="r", entropy=report,
                                  thresholds=state, verdict=verdict))
    task = TaskInstance(id=task_id, kind=kind, problem="p",
                        reference=MathReference(answer=1.0)
                        if kind is TaskKind.MATH else None)
    return SessionTranscript(
        task=task, config={"mode": "guided"}, rounds=rounds,
        final_answer="r", success=success, rounds_used=rounds_used,
        rag_used=rag_used, entropy_trace=[1.0] * rounds_used,
        accuracy_pct=accuracy_pct, checker_skipped=skipped)


class TestComputeMetrics:
    def test_plain_accuracy(self):
        transcripts = [make_transcript(success=i < 7) for i in range(10)]
        cell = compute_metrics(transcripts)
        assert cell.accuracy_pct == pytest.approx(70.0)
        assert cell.n == 10

    def test_improvement_rate(self):
        transcripts = (
            [make_transcript(success=True, first_verdict=Verdict.INCORRECT,
                             rounds_used=2) for _ in range(3)]
            + [make_transcript(success=False, first_verdict=Verdict.INCORRECT,
                               rounds_used=3)]
            + [make_transcript(success=True, rounds_used=1)])
        cell = compute_metrics(transcripts)
        assert cell.improvement_rate_pct == pytest.approx(75.0)

    def test_improvement_zero_denominator(self):
        transcripts = [make_transcript(success=True, rounds_used=1)]
        assert compute_metrics(transcripts).improvement_rate_pct == 0.0

    def test_rag_usage(self):
        transcripts = [make_transcript(rag_used=(i % 4 == 0))
                       for i in range(8)]
        assert compute_metrics(transcripts).rag_usage_pct == pytest.approx(25.0)

    def test_skipped_excluded_from_denominator(self):
        transcripts = ([make_transcript(success=True) for _ in range(3)]
                       + [make_transcript(success=False, skipped=True)
                          for _ in range(2)])
        cell = compute_metrics(transcripts)
        assert cell.skipped == 2
        assert cell.accuracy_pct == pytest.approx(100.0)
        assert cell.n == 5

    def test_avg_rounds(self):
        transcripts = [make_transcript(rounds_used=r, success=False)
                       for r in (1, 2, 3)]
        assert compute_metrics(transcripts).avg_rounds == pytest.approx(2.0)

    def test_routing_mean_accuracy(self):
        transcripts = [
            make_transcript(kind=TaskKind.MATH, accuracy_pct=80.0),
            make_transcript(kind=TaskKind.MATH, accuracy_pct=100.0),
            make_transcript(kind=TaskKind.MATH, accuracy_pct=0.0,
                            success=False),
        ]
        assert compute_metrics(transcripts).mean_accuracy_pct == pytest.approx(60.0)

    def test_empty_list_is_error(self):
        with pytest.raises(ValueError):
            compute_metrics([])


def sample_report():
    cell_a = MetricCell(n=10, accuracy_pct=70.0, pass_rate_pct=70.0,
                        improvement_rate_pct=50.0, mean_accuracy_pct=None,
                        avg_rounds=2.1, rag_usage_pct=0.0)
    cell_b = MetricCell(n=10, accuracy_pct=80.0, pass_rate_pct=80.0,
                        improvement_rate_pct=60.0, mean_accuracy_pct=None,
                        avg_rounds=1.9, rag_usage_pct=40.0)
    return BenchReport(cells={
        ("gsm8k", "s+w", "guided"): cell_a,
        ("gsm8k", "s+w", "guided_rag"): cell_b,
    })


class TestRenderReport:
    def test_single_cell_single_row(self):
        report = BenchReport(cells={("d", "p", "guided"): MetricCell(
            n=1, accuracy_pct=100.0, pass_rate_pct=100.0,
            improvement_rate_pct=0.0, mean_accuracy_pct=None, avg_rounds=1.0,
            rag_usage_pct=0.0)})
        text = render_report(report, "csv")
        rows = text.strip().splitlines()
        assert len(rows) == 2  # header + one data row

    def test_csv_round_trips(self):
        text = render_report(sample_report(), "csv")
        rows = list(csv.reader(io.StringIO(text)))
        header, data = rows[0], rows[1:]
        assert header[0] == "dataset"
        assert len(data) == 2
        by_mode = {row[header.index("mode")]: row for row in data}
        assert float(by_mode["guided"][header.index("accuracy_pct")]) == 70.0
        assert float(by_mode["guided_rag"][header.index("rag_usage_pct")]) == 40.0

    def test_markdown_has_header_per_dataset(self):
        report = sample_report()
        report.cells[("cvrp", "s+w", "guided")] = MetricCell(
            n=5, accuracy_pct=60.0, pass_rate_pct=60.0,
            improvement_rate_pct=0.0, mean_accuracy_pct=72.5, avg_rounds=2.0,
            rag_usage_pct=0.0)
        text = render_report(report, "markdown")
        assert "## gsm8k" in text
        assert "## cvrp" in text
        assert "| Method |" in text
        assert "72.50" in text  # routing headline is mean accuracy

    def test_mode_order_follows_canonical_sequence(self):
        text = render_report(sample_report(), "csv")
        rows = text.strip().splitlines()[1:]
        modes = [row.split(",")[2] for row in rows]
        assert modes == ["guided", "guided_rag"]

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            render_report(sample_report(), "xml")


class TestRunBatch:
    def build_tasks(self, count):
        return [TaskInstance(id=f"t{i}", kind=TaskKind.MATH,
                             problem=f"what is {i} plus 0?",
                             reference=MathReference(answer=float(i)))
                for i in range(count)]

    def scripted_pair(self, tmp_path, reply):
        weak = write_script(tmp_path / "w.jsonl",
                            [(t, "weak", reply) for t in (1, 2, 3)])
        strong = write_script(tmp_path / "s.jsonl",
                              [(t, "strong", "## Analysis\nfix it")
                               for t in (1, 2)])
        return (scripted_profile(strong, Strength.STRONG),
                scripted_profile(weak, Strength.WEAK))

    def test_results_in_task_order(self, tmp_path):
        strong, weak = self.scripted_pair(tmp_path, "the answer is 2")
        tasks = self.build_tasks(6)
        config = SessionConfig(strong_profile=strong, weak_profile=weak,
                               mode=SessionMode.GUIDED, t_max=3)
        transcripts = run_batch(tasks, config, workers=3)
        assert [t.task.id for t in transcripts] == [t.id for t in tasks]
        successes = [t for t in transcripts if t.success]
        assert len(successes) == 1  # only "what is 2 plus 0?"

    def test_repo_growth_equals_successes(self, tmp_path):
        strong, weak = self.scripted_pair(tmp_path, "the answer is 2")
        tasks = self.build_tasks(6)
        repo = ExperienceStore()
        config = SessionConfig(strong_profile=strong, weak_profile=weak,
                               mode=SessionMode.GUIDED_RAG, t_max=3)
        transcripts = run_batch(tasks, config, repo, workers=2)
        assert len(repo) == sum(1 for t in transcripts if t.success) == 1


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        tasks = [TaskInstance(id="a", kind=TaskKind.MATH, problem="p",
                              reference=MathReference(answer=2.0),
                              difficulty=Difficulty.MEDIUM)]
        path = tmp_path / "d.jsonl"
        save_dataset(tasks, path)
        loaded = load_dataset(path)
        assert loaded == tasks

    def test_malformed_line_reports_position(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "kind": "math"}\n')
        with pytest.raises(DatasetError) as err:
            load_dataset(path)
        assert ":1:" in str(err.value)

    def test_unsolvable_routing_rejected_at_load(self, tmp_path):
        from entroguide.routing import generate_instance
        instance = generate_instance(9, seed=1, solve=False)
        task = TaskInstance(id="big", kind=TaskKind.ROUTING, problem="p",
                            reference=instance)
        path = tmp_path / "d.jsonl"
        save_dataset([task], path)
        with pytest.raises(DatasetError) as err:
            load_dataset(path)
        assert "optimal_distance" in str(err.value)

    def test_ingest_gsm8k(self, tmp_path):
        raw = tmp_path / "raw.jsonl"
        raw.write_text(json.dumps({
            "question": "Farmer has 3 pens with 4 hens each. Total hens?",
            "answer": "3 * 4 = 12 hens\n#### 12"}) + "\n")
        out = tmp_path / "tasks.jsonl"
        assert ingest_gsm8k(raw, out) == 1
        task = load_dataset(out)[0]
        assert task.kind is TaskKind.MATH
        assert task.reference.answer == 12.0

    def test_ingest_gsm8k_commas(self, tmp_path):
        raw = tmp_path / "raw.jsonl"
        raw.write_text(json.dumps({"question": "q",
                                   "answer": "#### 1,200"}) + "\n")
        out = tmp_path / "tasks.jsonl"
        ingest_gsm8k(raw, out)
        assert load_dataset(out)[0].reference.answer == 1200.0

    def test_ingest_mbpp(self, tmp_path):
        raw = tmp_path / "raw.jsonl"
        raw.write_text(json.dumps({
            "task_id": 11,
            "text": "Write a function to add two numbers.",
            "code": "def add(a, b):\n    return a + b",
            "test_list": ["assert add(1, 2) == 3"]}) + "\n")
        out = tmp_path / "tasks.jsonl"
        assert ingest_mbpp(raw, out) == 1
        task = load_dataset(out)[0]
        assert task.id == "mbpp-11"
        assert task.reference.entry_point == "add"
        assert task.reference.tests == ("assert add(1, 2) == 3",)

    def test_ingest_error_names_line(self, tmp_path):
        raw = tmp_path / "raw.jsonl"
        raw.write_text(json.dumps({"question": "q", "answer": "no marker"}) + "\n")
        with pytest.raises(DatasetError) as err:
            ingest_gsm8k(raw, tmp_path / "out.jsonl")
        assert ":1:" in str(err.value)
