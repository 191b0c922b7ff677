import numpy as np
import pytest

import robust_batches as rb
from robust_batches.clean import clean_pipeline
from robust_batches.simulate import (
    ClassificationTarget,
    FkTargetedAttack,
    GaussianMixtureTarget,
    HistogramTarget,
    MeanShiftAttack,
    PiecewisePolynomialTarget,
    ReplaySkewAttack,
    SimContext,
    SpikeAttack,
    UniformTarget,
    attack_fk_targeted,
    batch_rng,
    opt_estimate,
    parse_attack,
    parse_target,
)


def test_build_collection_counts():
    target = UniformTarget(0, 1)
    all_good = rb.build_collection(target, None, 10, 5, 0.0, 0)
    assert all_good.truth == ("good",) * 10
    attacked = rb.build_collection(target, SpikeAttack(1.0, 0.5), 10, 5, 0.4, 0)
    assert attacked.truth.count("good") == 6
    assert attacked.truth.count("adversarial") == 4
    assert all(b.n == 5 for b in attacked.batches)


def test_build_collection_deterministic():
    target = GaussianMixtureTarget((0.5, 0.5), (0.0, 3.0), (1.0, 0.5))
    a = rb.build_collection(target, SpikeAttack(0.5, 1.0), 8, 20, 0.25, 99)
    b = rb.build_collection(target, SpikeAttack(0.5, 1.0), 8, 20, 0.25, 99)
    for ba, bb in zip(a.batches, b.batches):
        np.testing.assert_array_equal(ba.samples, bb.samples)
    c = rb.build_collection(target, SpikeAttack(0.5, 1.0), 8, 20, 0.25, 100)
    assert any(
        not np.array_equal(ba.samples, bc.samples) for ba, bc in zip(a.batches, c.batches)
    )


def test_build_collection_threads_do_not_change_output():
    target = UniformTarget(0, 1)
    a = rb.build_collection(target, None, 12, 30, 0.0, 7, threads=1)
    b = rb.build_collection(target, None, 12, 30, 0.0, 7, threads=4)
    for ba, bb in zip(a.batches, b.batches):
        np.testing.assert_array_equal(ba.samples, bb.samples)


def test_beta_zero_needs_no_attack_but_positive_does():
    target = UniformTarget(0, 1)
    rb.build_collection(target, None, 4, 3, 0.0, 0)
    with pytest.raises(rb.UsageError):
        rb.build_collection(target, None, 4, 3, 0.25, 0)


def test_mean_shift_moves_expected_mass():
    # pooled uncleaned empirical differs from the target by about beta*delta
    target = UniformTarget(0, 1)
    delta, beta, m, n = 0.5, 0.2, 400, 250
    region = (2.0, 2.1)  # far outside the support: moved mass is unambiguous
    coll = rb.build_collection(target, MeanShiftAttack(delta, region), m, n, beta, 17)
    pooled = np.concatenate([b.samples for b in coll.batches])
    outside = float(np.mean(pooled >= 2.0))
    frac_adv = 1.0 - coll.truth.count("good") / m
    expect = frac_adv * delta
    sd = np.sqrt(expect * (1 - expect) / pooled.size)
    assert abs(outside - expect) <= 3 * sd + 1e-12


def test_spike_attack_exact_counts():
    target = UniformTarget(0, 1)
    atk = SpikeAttack(0.3, 7.5)
    ctx_coll = rb.build_collection(target, atk, 10, 40, 0.3, 5)
    for b, t in zip(ctx_coll.batches, ctx_coll.truth):
        if t == "adversarial":
            assert int((b.samples == 7.5).sum()) == 12


def test_replay_skew_reuses_good_samples():
    target = UniformTarget(0, 1)
    atk = ReplaySkewAttack(0.0, (0.0, 1.0))
    coll = rb.build_collection(target, atk, 6, 50, 0.3, 21)
    good_pool = set()
    for b, t in zip(coll.batches, coll.truth):
        if t == "good":
            good_pool.update(b.samples.tolist())
    for b, t in zip(coll.batches, coll.truth):
        if t == "adversarial":
            assert all(x in good_pool for x in b.samples.tolist())


def test_fk_targeted_attack_deviates_above_tau():
    target = UniformTarget(0, 1)
    beta, n = 0.2, 100
    good = [rb.Batch(i, batch_rng(1, i).random(n)) for i in range(50)]
    batches = attack_fk_targeted(good, target, 2, n, 5, beta, seed=42)
    assert len(batches) == 5
    assert attack_fk_targeted(good, target, 2, n, 0, beta, seed=42) == []
    tau = rb.CorruptionParams(beta, n, 50).tau
    samples = tuple(b.samples for b in good)
    ctx = SimContext(
        target=target, beta=beta, n=n,
        good_x=np.concatenate(samples), good_batch_samples=samples,
    )
    from robust_batches.simulate import _fk_attack_plan

    plan = _fk_attack_plan(ctx, 0.3, 2)
    for xs in batches:
        assert xs.size == n
        dev = float(plan.region.contains(xs).mean()) - plan.med_good
        assert dev > tau


def test_fk_targeted_attack_end_to_end():
    # the tau-brushing adversary hurts the naive estimate but is cleanable
    import warnings

    target = UniformTarget(0, 1)
    mag, beta, n = 0.3, 0.2, 100
    coll = rb.build_collection(target, FkTargetedAttack(mag, k=2), 400, n, beta, 7)
    pooled_part = rb.build_partition(coll.pooled_samples(), rb.choose_ell(2, n, beta, 400))
    disc = rb.discretize(coll, pooled_part)
    naive = rb.fk_distance(disc.pooled(), target.bin_masses(pooled_part), 2)
    assert naive >= 0.5 * beta * mag
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = clean_pipeline(
            coll, 2, beta, np.random.default_rng(7),
            trigger_factor=5, stop_factor=4, reference=target,
        )
    assert res.report.fk_after <= 10 * beta * np.sqrt(np.log(1 / beta) / n)
    assert res.report.fk_after <= 0.5 * res.report.fk_before


def test_metrics_trivials():
    target = UniformTarget(0, 1)
    coll = rb.build_collection(target, SpikeAttack(1.0, 0.5), 20, 50, 0.2, 9)
    good = coll.good_ids()
    out = rb.metrics(coll, good, target, 2)
    assert out["retention_good"] == 1.0
    flat = rb.PiecewisePolynomial((0.0, 1.0), ((1.0,),))
    out2 = rb.metrics(coll, good, target, 2, fit=flat)
    assert out2["tv_fit"] == pytest.approx(0.0, abs=1e-9)
    assert opt_estimate(target, 1, 0, resolution=64) == pytest.approx(0.0, abs=1e-9)


def test_metrics_needs_truth():
    coll = rb.BatchCollection((rb.Batch(0, np.array([0.1, 0.2])),))
    with pytest.raises(rb.UsageError):
        rb.metrics(coll, [0], UniformTarget(0, 1), 1)


def test_metrics_fk_before_after():
    target = UniformTarget(0, 1)
    attack = MeanShiftAttack(1.0, (0.45, 0.55))
    coll = rb.build_collection(target, attack, 100, 100, 0.2, 4)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = clean_pipeline(
            coll, 2, 0.2, np.random.default_rng(4), trigger_factor=5, stop_factor=4
        )
    out = rb.metrics(coll, res.report.retained_ids, target, 2, partition=res.partition)
    assert out["fk_after"] <= out["fk_before"]


def test_good_batches_satisfy_properties_most_seeds():
    # desk-scale slice of the acceptance run: the bounds are ~5 sigma at
    # s = n*m = 50k, so good-only collections pass nearly always
    target = GaussianMixtureTarget((0.5, 0.5), (0.0, 3.0), (1.0, 0.5))
    n, m, beta = 100, 500, 0.1
    passes = 0
    for seed in range(5):
        coll = rb.build_collection(target, None, m, n, 0.0, seed)
        pooled = coll.pooled_samples()
        part = rb.build_partition(pooled, 200)
        disc = rb.discretize(coll, part)
        params = rb.CorruptionParams(beta, n, m)
        rng = np.random.default_rng(seed)
        subsets = [
            rb.BinSubset(frozenset(int(j) + 1 for j in np.nonzero(rng.random(part.ell) < 0.5)[0]))
            for _ in range(30)
        ]
        report = rb.check_properties(disc, target.bin_masses(part), subsets, params)
        passes += report.all_ok
    assert passes >= 4


def test_gaussian_mixture_cdf_pdf_consistency():
    gm = GaussianMixtureTarget((0.3, 0.7), (-1.0, 2.0), (0.5, 1.5))
    xs = np.linspace(-4, 7, 200)
    pdf = gm.pdf(xs)
    cdf = gm.cdf(xs)
    assert np.all(np.diff(cdf) >= 0)
    mid = 0.5 * (xs[1:] + xs[:-1])
    np.testing.assert_allclose(np.diff(cdf) / np.diff(xs), gm.pdf(mid), atol=2e-3)


def test_parse_target_and_attack_roundtrip():
    specs = [
        "uniform:0,1",
        "gm:0.5N(0,1)+0.5N(3,0.5)",
        "hist:0,0.5,1|0.75,0.25",
        "labeled:0,0.5,1|0.5,0.5|0.8,0.2",
    ]
    for s in specs:
        t = parse_target(s)
        assert parse_target(t.describe()).describe() == t.describe()
    attacks = ["mean_shift:1.0@0.45,0.55", "spike:0.3@1.5", "label_flip:1.0@0,0.25"]
    for s in attacks:
        a = parse_attack(s)
        assert parse_attack(a.describe()).describe() == a.describe()
    assert parse_attack("none") is None
    with pytest.raises(rb.UsageError):
        parse_target("weibull:1,2")
    with pytest.raises(rb.UsageError):
        parse_attack("mean_shift:oops")


def test_histogram_and_pwpoly_sampling_match_cdf():
    hist = HistogramTarget((0.0, 0.25, 1.0), (0.5, 0.5))
    rng = np.random.default_rng(0)
    xs = hist.sample(rng, 50_000)
    assert abs(np.mean(xs <= 0.25) - 0.5) < 0.01
    dens = rb.PiecewisePolynomial((0.0, 1.0), ((0.5, 1.0),))
    tgt = PiecewisePolynomialTarget(dens)
    ys = tgt.sample(rng, 50_000)
    assert abs(np.mean(ys <= 0.5) - float(tgt.cdf(np.array([0.5]))[0])) < 0.01


def test_classification_target_risks():
    ct = ClassificationTarget((0.0, 0.5, 1.0), (0.5, 0.5), (0.8, 0.2))
    assert ct.optimal_risk() == pytest.approx(0.2)
    bayes = ct.bayes_hypothesis()
    assert ct.risk_of(bayes) == pytest.approx(0.2)
    from robust_batches.partition import Interval, IntervalUnion

    wrong = rb.KIntervalHypothesis(IntervalUnion((Interval(0.5, 1.0),)))
    assert ct.risk_of(wrong) == pytest.approx(0.8)
    x, y = ct.sample(np.random.default_rng(0), 30)
    assert x.shape == y.shape == (30,)
