import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from ncga.bench import (ExperimentSpec, ResultRow, SpecError, emit_tradeoff, main, paired_t_test,
                        repetition_seed, run_experiment, summarize)

SPEC = """\
# small experiment
topology=butterfly_prime
algorithms=B,C,D:2,E
N=40
reps=3
seed=5
max_generations=150
"""


def _row(alg, rep, time, evals):
    return ResultRow(alg, rep, 0, time, evals, evals / time, None, 1, True, 0, 0)


# -- t-test -------------------------------------------------------------------------

def test_t_test_identical_samples():
    assert paired_t_test([1, 2, 3], [1, 2, 3]) == 1.0


def test_t_test_constant_shift_is_zero():
    assert paired_t_test([2, 3, 4], [1, 2, 3]) == 0.0


def test_t_test_fixture_matches_scipy():
    a = [13907, 12011, 15020, 9980, 14410, 13300, 12875, 16002, 11120, 14550]
    b = [2590, 3012, 2210, 2875, 3302, 2450, 2999, 2601, 3120, 2777]
    assert paired_t_test(a, b) == pytest.approx(sps.ttest_rel(a, b).pvalue, abs=1e-6)


def test_t_test_fixture_by_hand():
    # d = (1, 2, 3, 4, 0): mean 2, sd sqrt(2.5), t = 2 / sqrt(0.5) = 2.828427, df = 4
    p = paired_t_test([2, 4, 6, 8, 5], [1, 2, 3, 4, 5])
    assert p == pytest.approx(0.047421, abs=1e-6)


def test_t_test_errors():
    with pytest.raises(ValueError):
        paired_t_test([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        paired_t_test([1], [2])


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 1000), st.integers(0, 1000)), min_size=2, max_size=20))
def test_t_test_range_and_symmetry(pairs):
    a, b = zip(*pairs)
    p = paired_t_test(a, b)
    assert 0.0 <= p <= 1.0
    assert p == pytest.approx(paired_t_test(b, a))


# -- summaries ----------------------------------------------------------------------

def _rows():
    rows = []
    rng = np.random.default_rng(0)
    for alg, scale in (("B", 100), ("C", 40), ("E", 30)):
        for rep in range(4):
            rows.append(_row(alg, rep, int(scale + rng.integers(0, 10)), int(scale * 10 + rng.integers(0, 50))))
    return rows


@settings(max_examples=20)
@given(st.randoms())
def test_summary_is_order_invariant(rnd: random.Random):
    rows = _rows()
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    assert summarize(rows, ["B", "C", "E"]) == summarize(shuffled, ["B", "C", "E"])
    assert emit_tradeoff(rows, ["B", "C", "E"]) == emit_tradeoff(shuffled, ["B", "C", "E"])


def test_p_values_compare_with_next_best():
    summary, with_p = summarize(_rows(), ["B", "C", "E"])
    assert with_p
    by = {s.algorithm: s for s in summary}
    # E has the smallest mean time, so it has no comparator
    assert by["E"].p_time is None and by["C"].p_time is not None and by["B"].p_time is not None


def test_single_repetition_has_no_p_values():
    summary, with_p = summarize([_row("B", 0, 10, 10), _row("C", 0, 5, 20)])
    assert not with_p and all(s.p_time is None for s in summary)


def test_tradeoff_format():
    text = emit_tradeoff([_row("B", 0, 10, 100), _row("B", 1, 20, 100)])
    assert text == "algorithm,mean_evals,mean_eff,mean_time\nB,100.000000,7.500000,15.000000\n"
    with pytest.raises(ValueError):
        emit_tradeoff([])


# -- spec parsing -------------------------------------------------------------------

def test_spec_parsing():
    spec = ExperimentSpec.parse(SPEC + "D2.mutation_rate=0.05\nk=auto\n")
    assert [a.label for a in spec.algorithms] == ["B", "C", "D2", "E"]
    d2 = spec.algorithms[2].config
    assert d2.f == 2 and d2.mutation_rate == 0.05 and d2.N == 40 and d2.k is None
    assert spec.algorithms[0].config.mutation_rate == 0.015
    assert spec.repetitions == 3 and spec.seed == 5


@pytest.mark.parametrize("text", [
    "algorithms=B\n",
    "topology=butterfly\n",
    "topology=butterfly\nalgorithms=B,Q\n",
    "topology=butterfly\nalgorithms=D\n",
    "topology=butterfly\nalgorithms=B\nreps=0\n",
    "topology=butterfly\nalgorithms=B\nN=7\n",
    "topology=butterfly\nalgorithms=B\nbogus=1\n",
    "topology=butterfly\nalgorithms=B\nN=x\n",
    "topology=butterfly\nalgorithms=B,B\n",
    "topology=butterfly\nalgorithms=B\nC.N=4\n",
    "topology=butterfly\nalgorithms=C:3\n",
    "just a line\n",
])
def test_spec_errors(text):
    with pytest.raises(SpecError):
        ExperimentSpec.parse(text)


def test_repetition_seeds_are_shared_and_distinct():
    assert repetition_seed(1, 0) == repetition_seed(1, 0)
    assert len({repetition_seed(1, r) for r in range(50)}) == 50


# -- experiments and CLI --------------------------------------------------------------

def test_experiment_rows_and_eff_t(tmp_path):
    spec = ExperimentSpec.parse(SPEC + f"out={tmp_path}\n")
    res = run_experiment(spec)
    assert len(res.rows) == 12
    assert all(r.best_fitness == 0 for r in res.rows)
    assert all(r.eff_t == 1.0 for r in res.rows if r.algorithm == "B")
    assert res.has_p_values
    for name in ("results.csv", "summary.csv", "tradeoff.csv", "timing.csv"):
        assert (tmp_path / name).is_file()
    assert (tmp_path / "results.csv").read_bytes().endswith(b"\n")
    assert b"\r" not in (tmp_path / "results.csv").read_bytes()


def test_cascade_two_b_and_c_reach_zero():
    spec = ExperimentSpec.parse("topology=cascade:2\nalgorithms=B,C\nN=40\nreps=5\nseed=1\n"
                                "max_generations=400\nsweep=false\n")
    rows = run_experiment(spec).rows
    assert len(rows) == 10
    assert all(r.best_fitness == 0 for r in rows)


def test_same_spec_twice_is_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        spec = ExperimentSpec.parse(SPEC + f"trace=true\nout={tmp_path / name}\n")
        run_experiment(spec)
        outs.append({p.relative_to(tmp_path / name): p.read_bytes()
                     for p in sorted((tmp_path / name).rglob("*")) if p.is_file() and p.name != "timing.csv"})
    assert outs[0] == outs[1]
    assert any(str(k).startswith("traces") for k in outs[0])


def test_single_rep_summary_has_no_p_columns(tmp_path):
    spec = ExperimentSpec.parse("topology=butterfly_prime\nalgorithms=B,C\nN=8\nreps=1\n"
                                f"max_generations=20\nout={tmp_path}\n")
    run_experiment(spec)
    head = (tmp_path / "summary.csv").read_text().splitlines()[0]
    assert "p_time" not in head


def test_cli_run(tmp_path, capsys):
    spec = tmp_path / "spec.txt"
    spec.write_text(SPEC + "out=out\n")
    assert main(["run", "--spec", str(spec), "--quiet"]) == 0
    assert (tmp_path / "out" / "results.csv").is_file()
    assert capsys.readouterr().out.startswith("algorithm,n,converged")


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("topology=nowhere\nalgorithms=B\n")
    assert main(["run", "--spec", str(bad)]) == 2
    assert main(["run", "--spec", str(tmp_path / "missing.txt")]) == 2
    assert main(["topo", "emit", "--name", "bogus"]) == 2
    assert main(["sweep", "--topology", "butterfly", "--genotype", "10"]) == 3
    assert main(["sweep", "--topology", "butterfly", "--genotype", "1"]) == 2
    assert main(["frobnicate"]) == 2


def test_cli_topology_and_sweep(tmp_path, capsys):
    assert main(["topo", "emit", "--name", "butterfly_prime"]) == 0
    text = capsys.readouterr().out
    topo = tmp_path / "bp.txt"
    topo.write_text(text)
    assert main(["sweep", "--topology", str(topo), "--genotype", "11|11|11|11"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[-1] == "coding_links=0"
