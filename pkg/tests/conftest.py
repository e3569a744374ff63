import numpy as np
import pytest
from scipy import stats

from sparsehdp.corpus import Corpus
from sparsehdp.synthetic import mixture_corpus


def chi2_gof(samples, pmf, support=None, min_expected=5.0):
    """Chi-square goodness of fit of integer ``samples`` against ``pmf`` over ``support``.

    Adjacent cells are pooled until each expects ``min_expected`` counts; mass
    outside ``support`` forms its own cell.  Returns the p-value.
    """
    samples = np.asarray(samples)
    pmf = np.asarray(pmf, float)
    if support is None:
        support = np.arange(pmf.size)
    support = np.asarray(support)
    n = samples.size
    lookup = {int(s): i for i, s in enumerate(support)}
    observed = np.zeros(pmf.size + 1)
    for value, count in zip(*np.unique(samples, return_counts=True)):
        observed[lookup.get(int(value), pmf.size)] += count
    expected = np.append(pmf, max(0.0, 1.0 - pmf.sum())) * n
    obs_cells, exp_cells = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_cells.append(acc_o)
            exp_cells.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if obs_cells:
            obs_cells[-1] += acc_o
            exp_cells[-1] += acc_e
        else:
            obs_cells.append(acc_o)
            exp_cells.append(acc_e)
    if len(obs_cells) < 2:
        return 1.0
    return float(stats.chisquare(obs_cells, exp_cells).pvalue)


def total_variation(samples, pmf, support):
    samples = np.asarray(samples)
    emp = np.array([(samples == s).mean() for s in support])
    outside = 1.0 - emp.sum()
    return 0.5 * (np.abs(emp - pmf).sum() + outside)


@pytest.fixture(scope="session")
def two_doc_corpus():
    return Corpus([[0, 1, 2], [2, 1, 1]], 3)


@pytest.fixture(scope="session")
def synthetic_corpus():
    corpus, _ = mixture_corpus(seed=0)
    return corpus


_CRITERIA: list[str] = []


def report_criterion(number, ok, detail):
    """Record one acceptance line; ``ok`` is a bool or a status word such as SKIP or WARN."""
    status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
    line = f"criterion {number:>2}: {status}  {detail}"
    _CRITERIA.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
