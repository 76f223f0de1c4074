"""Acceptance suite: one test per project acceptance target.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line
per target. Two sub-checks (a05b, a10c) encode pinned reference targets
that are analytically unattainable; they are asserted as stated and fail
with the measured values, see the assertion messages and README.
"""

import time
from math import ceil, comb, log, sqrt

import numpy as np
import pytest
from conftest import set_partitions

from kernel_budget.cli import ExperimentConfig, run as run_experiment
from kernel_budget.errors import BoundRangeError
from kernel_budget.instances import (CLASS_S1, CLASS_S2, gen_kkmc, gen_krr,
                                     gen_mog, gen_rank, make_balanced_kkmc)
from kernel_budget.kkmc import (Clustering, block_clustering, cost_explicit,
                                coordinate_counts, multi_cluster_lower_bound,
                                rank_cost_gap, recover_labels,
                                single_block_cost, small_cluster_lower_bound)
from kernel_budget.krr import (classify_rows, d_eff, d_eff_from_gram,
                               hard_instance_optimum, indicator_solve,
                               solve_exact)
from kernel_budget.mog import (FIRST, SECOND, build_sketch, cluster_mog,
                               pair_test, separation_thresholds,
                               sketch_dimension)
from kernel_budget.rng import stream

# mixture configuration for a10: the sketch constant is calibrated to desk
# scale (default 8 would put m near 1000 and the bootstrap past n/3)
MOG_CFG = dict(n=5000, d=64, k=4, eps=0.25, sigma=1.0, c_sketch=0.25)


def announce(tag: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")


class TestA01HardInstanceClosedForm:
    def test_closed_form_and_value_clusters(self):
        tic = time.perf_counter()
        n, J, eps = 1000, 100, 0.1
        worst = 0.0
        s1_vals, s2_vals = [], []
        for seed in range(5):
            inst = gen_krr(n, J, eps, seed=seed)
            K = inst.gram.full()
            sol = solve_exact(K, inst.z, inst.lam)
            worst = max(worst, float(np.abs(sol.alpha - hard_instance_optimum(inst)).max()))
            scaled = (inst.n / inst.k) * sol.alpha
            s1_vals.append(scaled[inst.classes == CLASS_S1])
            s2_vals.append(scaled[inst.classes == CLASS_S2])
        dev1 = abs(np.concatenate(s1_vals).mean() - 1 / (1 + eps))
        dev2 = abs(np.concatenate(s2_vals).mean() - 1 / (1 + 2 * eps))
        allow = 12 * eps / 100
        elapsed = time.perf_counter() - tic
        ok = worst <= 1e-9 and dev1 <= allow and dev2 <= allow and elapsed < 10
        announce("a01 closed-form optimum", ok,
                 f"max |solve - closed form| {worst:.2e} (tol 1e-9); scaled "
                 f"cluster deviations {dev1:.4f}/{dev2:.4f} (tol {allow}); "
                 f"{elapsed:.1f}s")
        assert worst <= 1e-9
        assert dev1 <= allow and dev2 <= allow
        assert elapsed < 10


class TestA02EffectiveDimension:
    def test_theta_k_window(self):
        tic = time.perf_counter()
        n, J, eps = 100_000, 100, 0.1
        k = eps * J
        center = (k / 2) * (1 / (1 + eps) + 1 / (1 + 2 * eps))
        vals = []
        for seed in range(5):
            inst = gen_krr(n, J, eps, seed=seed)
            vals.append(d_eff(inst.counts, inst.lam))
        in_window = [center * 0.95 <= v <= center * 1.05 for v in vals]
        # the count route equals trace(K (K + lam I)^{-1}) on a dense check
        small = gen_krr(1500, J, eps, seed=0)
        K = small.points @ small.points.T
        gap = abs(d_eff_from_gram(K, small.lam) - d_eff(small.counts, small.lam))
        elapsed = time.perf_counter() - tic
        ok = all(in_window) and gap <= 1e-9 and elapsed < 10
        announce("a02 effective dimension", ok,
                 f"values {['%.3f' % v for v in vals]} in {center:.3f} +-5%; "
                 f"gram-route gap {gap:.1e}; {elapsed:.1f}s")
        assert all(in_window)
        assert gap <= 1e-9
        assert elapsed < 10


class TestA03ClassificationReduction:
    def test_nine_tenths_of_rows(self):
        n, J, eps = 5000, 100, 0.1
        passes = 0
        accs = []
        for seed in range(20):
            inst = gen_krr(n, J, eps, seed=seed)
            K = inst.points @ inst.points.T
            sol = solve_exact(K, inst.z, inst.lam)
            labels = classify_rows(sol.alpha, inst.n, inst.k, inst.eps)
            acc = float(np.mean(labels == inst.classes))
            accs.append(acc)
            passes += int(acc >= 0.9)
        ok = passes >= 19
        announce("a03 classification reduction", ok,
                 f"{passes}/20 seeds at >=9/10 rows (min acc {min(accs):.4f})")
        assert passes >= 19


class TestA04IndicatorPath:
    def test_fifty_random_offsets(self):
        worst = 0.0
        for seed in range(50):
            rng = stream(seed, "a04")
            n = int(rng.integers(20, 201))
            inst = gen_krr(n, 8, 0.25, seed=seed)
            c0 = float(rng.uniform(0.0, 0.9))
            c1 = c0 + float(rng.uniform(0.05, 2.0))
            G = inst.points @ inst.points.T
            fast = indicator_solve(G, inst.z, inst.lam, c0, c1)
            K = c0 * np.ones((n, n)) + (c1 - c0) * G
            direct = solve_exact(K, inst.z, inst.lam)
            worst = max(worst, float(np.abs(fast.alpha - direct.alpha).max()))
        ok = worst <= 1e-9
        announce("a04 indicator-kernel path", ok,
                 f"max |rank-one path - direct assembly| {worst:.2e} over 50 draws")
        assert worst <= 1e-9


class TestA05CostEnvelope:
    N, K, EPS = 100_000, 5, 0.1

    def test_a_sampled_envelope(self):
        lo = self.N * (1 - (81 / 40) * self.EPS)
        hi = self.N * (1 - (79 / 40) * self.EPS)
        inside = 0
        totals = []
        for seed in range(20):
            inst = gen_kkmc(self.N, self.K, self.EPS, seed=seed)
            total = cost_explicit(inst.points, block_clustering(inst)).total
            totals.append(total)
            inside += int(lo <= total <= hi)
        ok = inside >= 19
        announce("a05a block-clustering cost envelope", ok,
                 f"{inside}/20 seeds inside [{lo:.0f}, {hi:.0f}] "
                 f"(range seen [{min(totals):.0f}, {max(totals):.0f}])")
        assert inside >= 19

    def test_b_balanced_exact_value(self):
        inst = make_balanced_kkmc(k=self.K, eps=self.EPS, copies=100)
        per_point = cost_explicit(inst.points, block_clustering(inst)).total / inst.n
        target = 1 - 2 * self.EPS - 4 * self.EPS ** 2  # pinned at 0.76
        ok = abs(per_point - target) <= 1e-12
        announce("a05b balanced per-point value", ok,
                 f"measured {per_point!r} vs pinned target {target!r}")
        assert abs(per_point - target) <= 1e-12, (
            f"measured balanced per-point cost is {per_point!r}; the centroid "
            f"algebra gives exactly 1 - 2*eps = {1 - 2 * self.EPS!r} for every "
            f"balanced instance (the per-point expansion is "
            f"2*(1/sqrt(2) - sqrt(2)*eps)**2 + (1/eps - 2)*2*eps**2 = 1 - 2*eps), "
            f"so the pinned target {target!r} = 1 - 2*eps - 4*eps**2 cannot be "
            f"produced by any faithful cost computation; it also contradicts the "
            f"a05a envelope, whose lower edge is 1 - 2.025*eps = 0.7975 per point")


class TestA06SumOfSquaresIdentity:
    def test_hundred_random_clusters(self):
        worst = 0.0
        for seed in range(100):
            rng = stream(seed, "a06")
            inv_eps = int(rng.choice([2, 4, 5, 10]))
            inst = gen_kkmc(600, 2, 1.0 / inv_eps, seed=seed)
            b = int(rng.integers(0, 2))
            members = np.flatnonzero(inst.block == b)
            size = int(rng.integers(2, min(50, members.size)))
            idx = rng.choice(members, size=size, replace=False)
            ident = single_block_cost(size, coordinate_counts(inst, idx))
            direct = cost_explicit(inst.points[idx],
                                   Clustering(np.zeros(size, dtype=int))).total
            worst = max(worst, abs(ident - direct))
        ok = worst <= 1e-9
        announce("a06 sum-of-squares identity", ok,
                 f"max |identity - explicit| {worst:.2e} over 100 clusters")
        assert worst <= 1e-9


class TestA07LowerBoundSoundness:
    def test_exhaustive_enumeration_never_beats_bounds(self):
        tic = time.perf_counter()
        instances = [gen_kkmc(10, 3, 1 / 3, seed=s) for s in range(3)]
        instances += [gen_kkmc(12, 2, 1 / 3, seed=s) for s in range(3)]
        instances.append(make_balanced_kkmc(k=2, eps=1 / 3, copies=2))
        small_checked = multi_checked = violations = 0
        for inst in instances:
            k_max = inst.k
            for labels in set_partitions(inst.n, k_max):
                clus = Clustering(labels)
                costs = cost_explicit(inst.points, clus).per_cluster
                for j in range(clus.n_clusters):
                    try:
                        bound = small_cluster_lower_bound(
                            int(clus.sizes[j]), inst.n, inst.k, inst.eps)
                    except BoundRangeError:
                        continue
                    small_checked += 1
                    violations += int(costs[j] < bound - 1e-9)
                for mask in range(1, 2 ** clus.n_clusters):
                    sel = [j for j in range(clus.n_clusters) if mask >> j & 1]
                    size_s = int(sum(clus.sizes[j] for j in sel))
                    if size_s > 2 * inst.n / 5:
                        continue
                    bound = multi_cluster_lower_bound(size_s, inst.n, inst.eps)
                    multi_checked += 1
                    violations += int(sum(costs[j] for j in sel) < bound - 1e-9)
        elapsed = time.perf_counter() - tic
        ok = violations == 0 and elapsed < 60
        announce("a07 lower-bound soundness", ok,
                 f"{multi_checked} multi-cluster and {small_checked} small-cluster "
                 f"checks applicable, {violations} violations; {elapsed:.1f}s "
                 f"(the small-cluster range precondition admits no cluster at "
                 f"these sizes, so its checks are vacuous here)")
        assert violations == 0
        assert elapsed < 60


class TestA08LabelRecovery:
    def test_recovery_rate_and_query_bound(self):
        n, k, eps = 20_000, 5, 0.1
        passes = 0
        rates = []
        cap = 160.0 * n / eps
        for seed in range(20):
            inst = gen_kkmc(n, k, eps, seed=seed)
            labeled = {i: int(inst.block[i]) for i in range(n // 2)}
            found = recover_labels(inst.gram, block_clustering(inst), labeled,
                                   eps, seed=seed)
            unlabeled = n - n // 2
            correct = sum(1 for i, b in found.items() if b == inst.block[i])
            rate = correct / unlabeled
            rates.append(rate)
            queries = inst.gram.ledger_report().distinct_entries
            passes += int(rate >= 1 / 6 and queries <= cap)
        ok = passes >= 19
        announce("a08 label recovery", ok,
                 f"{passes}/20 seeds with rate >= 1/6 under {cap:.0f} queries "
                 f"(min rate {min(rates):.3f})")
        assert passes >= 19


class TestA09RankGap:
    def test_gap_matches_enumeration(self):
        worst = 0.0
        planted_seen = unplanted_seen = 0
        for seed in range(30):
            inst = gen_rank(50, 5, seed=seed)
            gap = rank_cost_gap(inst)
            if not inst.planted:
                unplanted_seen += 1
                assert gap == 0.0
                continue
            planted_seen += 1
            best = min(
                cost_explicit(inst.points, Clustering(
                    np.where(np.arange(50) == inst.planted_index, b,
                             inst.basis_index))).total
                for b in range(inst.k))
            worst = max(worst, abs(gap - best))
            assert gap > 0.0
        ok = worst <= 1e-12 and planted_seen and unplanted_seen
        announce("a09 rank cost gap", ok,
                 f"{planted_seen} planted / {unplanted_seen} unplanted seeds, "
                 f"max |gap - enumeration| {worst:.2e}")
        assert worst <= 1e-12


@pytest.fixture(scope="module")
def trials():
    cfg = MOG_CFG
    m = sketch_dimension(cfg["n"], cfg["k"], cfg["eps"], cfg["c_sketch"])
    sep = separation_thresholds(cfg["n"], cfg["d"], cfg["k"], cfg["eps"],
                                cfg["sigma"], m)["max"]
    tic = time.perf_counter()
    out = []
    for seed in range(30):
        inst = gen_mog(cfg["n"], cfg["d"], cfg["k"], cfg["sigma"], sep,
                       seed=seed)
        res = cluster_mog(inst.gram, k=cfg["k"], eps=cfg["eps"],
                          sigma=cfg["sigma"], d=cfg["d"],
                          bootstrap_labels=inst.labels,
                          c_sketch=cfg["c_sketch"])
        cost = cost_explicit(inst.points, res.clustering).total
        truth = cost_explicit(inst.points, Clustering(inst.labels.copy())).total
        closed = res.t * (res.t + 1) // 2 + 2 * res.m * (cfg["n"] - res.t)
        out.append((cost / truth, res.report.distinct_entries, closed))
    return out, time.perf_counter() - tic


class TestA10MixturePipeline:
    def test_a_cost_ratio(self, trials):
        out, elapsed = trials
        eps = MOG_CFG["eps"]
        good = sum(1 for ratio, _, _ in out if ratio <= 1 + 8 * eps)
        ok = good >= 20 and elapsed < 300
        announce("a10a mixture cost ratio", ok,
                 f"{good}/30 trials within 1+8*eps = {1 + 8 * eps} "
                 f"(worst {max(r for r, _, _ in out):.4f}); {elapsed:.0f}s")
        assert good >= 20
        assert elapsed < 300

    def test_b_query_count_closed_form(self, trials):
        out, _ = trials
        mismatches = sum(1 for _, seen, closed in out if seen != closed)
        ok = mismatches == 0
        announce("a10b query accounting", ok,
                 f"ledger equals t(t+1)/2 + 2m(n-t) in {30 - mismatches}/30 trials "
                 f"(distinct = {out[0][1]})")
        assert mismatches == 0

    def test_c_query_budget_target(self, trials):
        out, _ = trials
        cfg = MOG_CFG
        target = cfg["n"] * cfg["k"] / (4 * cfg["eps"])
        seen = max(d for _, d, _ in out)
        ok = seen < target
        announce("a10c query budget target", ok,
                 f"distinct entries {seen} vs pinned target nk/(4 eps) = {target:.0f}")
        assert seen < target, (
            f"every trial reads {seen} distinct entries against the pinned "
            f"target nk/(4 eps) = {target:.0f}; the target is unreachable at "
            f"this configuration: sigma-accurate empirical means need roughly "
            f"d labeled bootstrap points per component, so t is a few hundred "
            f"and the bootstrap block alone costs t(t+1)/2 > 130000 entries, "
            f"and any sketch with m >= 2 adds 2m(n-t) > 17000 more; the "
            f"factor-k saving over the nk/eps floor only emerges when "
            f"n >> (k d)^2, far past this desk-scale n")


class TestA11PairTestCalibration:
    def test_error_rate_at_threshold(self):
        d, sigma, trials = 16, 1.0, 100_000
        rates = {}
        for delta in (0.1, 0.01):
            sep = sqrt(144.0 * sigma**2 * log(1.0 / delta))
            mu1 = np.zeros(d)
            mu2 = np.zeros(d)
            mu2[0] = sep
            unit = (mu2 - mu1) / sep
            mu1_hat, mu2_hat = mu1 + sigma * unit, mu2 - sigma * unit
            rng = stream(17, "a11", str(delta))
            x = mu1 + sigma * rng.standard_normal((trials, d))
            c = 0.5 * (mu1_hat + mu2_hat)
            scores = (x - c) @ (mu1_hat - c)
            rates[delta] = float((scores <= 0).mean())
            for row in range(0, trials, 20_000):
                want = FIRST if scores[row] > 0 else SECOND
                assert pair_test(x[row], mu1_hat, mu2_hat) == want
        ok = all(rates[d_] <= d_ for d_ in rates)
        announce("a11 distinguishing-test calibration", ok,
                 f"error rates {rates} at separation^2 = 144 sigma^2 ln(1/delta)")
        assert all(rates[d_] <= d_ for d_ in rates)


class TestA12ProjectionMoments:
    def test_expected_projected_separation(self):
        m, d, sigma = 16, 64, 1.0
        rng = stream(18, "a12")
        delta_mu = rng.standard_normal(d)
        delta_mu *= 3.0 / np.linalg.norm(delta_mu)
        ratios = []
        for _ in range(1000):
            pts = 4.0 + sigma * rng.standard_normal((2 * m, d))
            sk = build_sketch(pts, np.arange(2 * m).reshape(m, 2), sigma)
            proj = sk.project_direct(delta_mu)
            ratios.append(float(proj @ proj) / float(delta_mu @ delta_mu))
        mean_ratio = float(np.mean(ratios))
        rel = abs(mean_ratio - m / d) / (m / d)
        ok = rel <= 0.05
        announce("a12 projection moments", ok,
                 f"mean ||Vt delta||^2 / ||delta||^2 = {mean_ratio:.4f} vs "
                 f"m/d = {m / d} (rel err {rel:.3f}, tol 0.05)")
        assert rel <= 0.05


class TestA13BudgetCurves:
    def test_accuracy_monotone_and_small_budget_fails(self):
        budgets = ["0.1*n*J/4", "0.5*n*J/4", "n*J/4", "2*n*J/4"]
        cfg = ExperimentConfig(
            kind="budget-curve", seeds=list(range(20)),
            instance={"n": 4000, "J": 40, "epsilon": 0.1, "budgets": budgets})
        rows, errors = run_experiment(cfg)
        assert not errors
        acc = {b: [] for b in budgets}
        for row in rows:
            acc[row.metric.split("@", 1)[1]].append(row.value)
        means = [float(np.mean(acc[b])) for b in budgets]
        monotone = all(b >= a - 1e-12 for a, b in zip(means, means[1:]))
        ok = monotone and means[0] < 0.9
        announce("a13 budget curves", ok,
                 f"mean accuracies {['%.3f' % m_ for m_ in means]} over budgets "
                 f"{{0.1, 0.5, 1, 2}} x nJ/4: monotone {monotone}, smallest "
                 f"below 9/10 criterion {means[0] < 0.9}")
        assert monotone
        assert means[0] < 0.9
