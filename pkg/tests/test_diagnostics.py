"""IACT by overlapping batch means and chain summaries."""
import json

import numpy as np
import pytest

from pmcmc import ChainRecord
from pmcmc.diagnostics import ZeroVariance, format_table, iact_obm, summarize_chain, table_rows


def ar1(n, rho, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - rho**2)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x


def test_white_noise_iact_is_one():
    x = np.random.default_rng(1).standard_normal(100_000)
    est = iact_obm(x, 200)
    assert 0.9 <= est.iact <= 1.1
    assert est.batch_length == 200 and est.n_samples == 100_000
    assert est.mc_se_of_mean == pytest.approx(np.sqrt(est.iact * x.var(ddof=1) / x.size))


def test_ar1_iact():
    est = iact_obm(ar1(1_000_000, 0.9, 2), 5000)
    assert abs(est.iact - 19.0) < 1.9


def test_ar1_with_zero_correlation_is_white_noise():
    assert 0.9 <= iact_obm(ar1(100_000, 0.0, 3), 200).iact <= 1.1


def test_obm_formula_by_hand():
    x = np.array([1.0, 3.0, 2.0, 5.0, 4.0, 0.0, 2.0, 1.0])
    n, b = x.size, 2
    means = np.array([x[j:j + b].mean() for j in range(n - b + 1)])
    sigma2 = n * b / ((n - b) * (n - b + 1)) * np.sum((means - x.mean()) ** 2)
    est = iact_obm(x, b)
    assert est.iact == pytest.approx(sigma2 / x.var(ddof=1), rel=1e-12)
    assert est.mc_se_of_mean == pytest.approx(np.sqrt(sigma2 / n), rel=1e-12)


def test_affine_invariance():
    x = ar1(20_000, 0.5, 4)
    base = iact_obm(x, 100).iact
    for a, b in ((3.0, -7.0), (-0.25, 100.0)):
        assert iact_obm(a * x + b, 100).iact == pytest.approx(base, rel=1e-9)


def test_mc_se_shrinks_with_sample_size():
    x = ar1(400_000, 0.7, 5)
    se1 = iact_obm(x[:200_000], 500).mc_se_of_mean
    se2 = iact_obm(x, 500).mc_se_of_mean
    assert se1**2 / se2**2 == pytest.approx(2.0, rel=0.2)


def test_errors():
    with pytest.raises(ZeroVariance, match="zero-variance chain"):
        iact_obm(np.zeros(1000), 10)
    with pytest.raises(ZeroVariance):
        iact_obm(np.full(1000, 3.7), 10)
    with pytest.raises(ValueError, match="2 \\* batch_length"):
        iact_obm(np.arange(10.0), 6)


def test_negative_estimate_clamped():
    # strongly alternating chain: batch means of even length are all equal
    x = np.tile([1.0, -1.0], 50)
    est = iact_obm(x, 2)
    assert est.iact >= 0.0


def make_record(columns, draws, warmup=0, labels=("pmmh(a)",), accept=None):
    n = draws.shape[0]
    accept = np.ones((n, len(labels)), dtype=np.int8) if accept is None else accept
    return ChainRecord(list(columns), draws, list(labels), accept, np.zeros(n), np.zeros(n, bool), warmup,
                       seconds=2.0)


def test_constant_record_flags_undefined():
    rec = make_record(["a", "b"], np.zeros((2000, 2)))
    rep = summarize_chain(rec, 100)
    for p in rep.params.values():
        assert p.iact is None and p.mc_se is None
        assert any("zero-variance" in f for f in p.flags)
    assert dict(table_rows(rep))["IACT(a)"] == "undef"


def test_summary_iact_is_plumbed_from_iact_obm():
    x = ar1(20_000, 0.8, 6)
    rec = make_record(["a", "beta[1]", "beta[2]"],
                      np.column_stack([x, ar1(20_000, 0.2, 7), ar1(20_000, 0.5, 8)]), warmup=1000)
    rep = summarize_chain(rec, 300, groups=["beta"], label="arm", N=50)
    assert rep.params["a"].iact == iact_obm(x[1000:], 300).iact
    assert rep.params["a"].mean == pytest.approx(x[1000:].mean())
    g = rep.groups["beta"]
    assert g["min_iact"] == rep.params["beta[1]"].iact and g["max_iact"] == rep.params["beta[2]"].iact
    assert rep.n_used == 19_000 and rep.time_per_1000 == pytest.approx(0.1)


def test_bandwidth_doubling_flag():
    x = ar1(20_000, 0.995, 9)
    rec = make_record(["a"], x[:, None])
    rep = summarize_chain(rec, 50)
    assert rep.params["a"].iact_doubled is not None
    assert any("underestimated" in f for f in rep.params["a"].flags)


def test_table_layout_and_json(tmp_path):
    rng = np.random.default_rng(10)
    cols = ["mu", "phi", "tau"] + [f"beta[{k}]" for k in range(1, 4)]
    acc = np.column_stack([rng.random(3000) < 0.2, np.ones(3000)]).astype(np.int8)
    rec = make_record(cols, rng.standard_normal((3000, 6)), labels=("pmmh(mu,phi,tau)", "gibbs(beta)"), accept=acc)
    rep = summarize_chain(rec, 500, label="PMMH+PG", N=100)
    keys = [k for k, _ in table_rows(rep)]
    assert keys == ["IACT(mu)", "IACT(phi)", "IACT(tau)", "min_i IACT(beta_i)", "max_i IACT(beta_i)",
                    "time/1000 iterations", "# particles", "acc. rate"]
    rows = dict(table_rows(rep))
    assert rows["# particles"] == "100"
    assert rows["acc. rate"].endswith("%") and "/" not in rows["acc. rate"]
    text = format_table([rep, rep])
    assert text.splitlines()[0].split() == ["PMMH+PG", "PMMH+PG"]
    rep.to_json(tmp_path / "s.json")
    d = json.loads((tmp_path / "s.json").read_text())
    assert d["bandwidth"] == 500 and set(d["params"]) == set(cols)
