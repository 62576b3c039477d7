"""Acceptance suite: one test per criterion, full-scale pipeline.

The pipeline fixture builds both tasks end to end at the production
dataset sizes (granular 400/200, rope 200/100), evaluates all five
method tags, and is shared by the end-to-end criteria. Expect roughly
half an hour wall time for the whole module on a desktop CPU.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from pam import config, datastore, diffusion, nn, oracle, pipeline, plots, policy, preference, ras, stats
from pam.actions import ActionPrimitive
from pam.diffusion import MlpEpsModel, NoiseSchedule, l_simple, q_jump, q_step
from pam.envs import get_task, metrics
from pam.preference import PreferencePair, build_pairs, dpo_loss
from pam.rng import Rng

from helpers import brute_force_emd, finite_diff_grads, max_rel_err

PIPE_SEED = 7
EVAL_SEED = 106
TRIALS = 20
N_CANDIDATES = 8


# --- criterion 1: gradient fidelity -----------------------------------------

def test_criterion_01_gradient_fidelity():
    start = time.time()
    worst = 0.0
    rng = Rng(11)
    sched = NoiseSchedule.linear(t_steps=10)
    # l_simple
    for i in range(40):
        mlp = nn.init_mlp((4 + 2 + 5, 6, 4), rng.spawn(i))
        model = MlpEpsModel(mlp, rng.normals(2), sched.T)
        x0 = rng.normals(4)
        t = rng.randint(1, sched.T)
        eps = rng.normals(4)
        _, analytic = l_simple(sched, model, x0, t=t, eps=eps)
        fd = finite_diff_grads(lambda: l_simple(sched, model, x0, t=t, eps=eps)[0], mlp)
        worst = max(worst, max_rel_err(analytic, fd))
    # dpo_loss
    for i in range(40):
        cond = rng.normals(2)
        ft = MlpEpsModel(nn.init_mlp((4 + 2 + 5, 6, 4), rng.spawn(100 + i)), cond, sched.T)
        ref = MlpEpsModel(nn.init_mlp((4 + 2 + 5, 6, 4), rng.spawn(200 + i)), cond, sched.T)
        pair = PreferencePair(
            winner=ActionPrimitive("sweep", rng.uniforms(4)),
            loser=ActionPrimitive("sweep", rng.uniforms(4)),
            obs=get_task("granular").observe(get_task("granular").reset(rng.spawn(300 + i))),
            rank_distance=2)
        t = rng.randint(1, sched.T)
        eps = rng.normals(4)
        _, analytic = dpo_loss(sched, ft, ref, pair, beta=0.02, t=t, eps=eps)
        fd = finite_diff_grads(
            lambda: dpo_loss(sched, ft, ref, pair, beta=0.02, t=t, eps=eps)[0], ft.mlp)
        worst = max(worst, max_rel_err(analytic, fd))
    # explicit pairwise-logistic objective
    for i in range(40):
        head = nn.init_mlp((6, 5, 1), rng.spawn(400 + i))
        xw = rng.normals((3, 6))
        xl = rng.normals((3, 6))
        _, analytic = preference.explicit_loss_and_grads(head, xw, xl)
        fd = finite_diff_grads(
            lambda: preference.explicit_loss_and_grads(head, xw, xl)[0], head)
        worst = max(worst, max_rel_err(analytic, fd))
    elapsed = time.time() - start
    assert worst < 1e-4, f"max relative gradient error {worst}"
    assert elapsed < 60.0, f"gradient checks took {elapsed:.1f}s"


# --- criterion 2: DPO identities ---------------------------------------------

def test_criterion_02_dpo_identities():
    sched = NoiseSchedule.linear()
    rng = Rng(22)
    mlp = nn.init_mlp((4 + 3 + 5, 8, 4), rng)
    cond = rng.normals(3)
    ft = MlpEpsModel(mlp, cond, sched.T)
    ref = MlpEpsModel(mlp.copy(), cond, sched.T)
    obs = get_task("granular").observe(get_task("granular").reset(Rng(1)))
    for seed in range(30):
        r = Rng(seed)
        pair = PreferencePair(winner=ActionPrimitive("sweep", r.uniforms(4)),
                              loser=ActionPrimitive("sweep", r.uniforms(4)),
                              obs=obs, rank_distance=1 + seed % 8)
        loss, _ = dpo_loss(sched, ft, ref, pair, beta=config.DPO_BETA, rng=r)
        assert abs(loss - math.log(2.0)) < 1e-9
    net = policy.new_policy("sweep", Rng(23))
    clone = net.copy()
    for seed in range(10):
        r = Rng(40 + seed)
        actions = [ActionPrimitive("sweep", r.uniforms(4)) for _ in range(4)]
        rewards = ras.implicit_rewards(clone, net, actions, obs, beta=config.DPO_BETA, rng=r)
        assert np.all(np.abs(rewards) <= 1e-12)


# --- criterion 3: pair-count closed form ---------------------------------------

def test_criterion_03_pair_counts():
    obs = get_task("granular").observe(get_task("granular").reset(Rng(2)))
    rng = Rng(33)
    for trial in range(1000):
        n = 1 + rng.randint(0, 11)
        r = rng.randint(0, n)
        idx = list(range(n))
        rng.shuffle(idx)
        ranking = oracle.OracleRanking(
            ordering=tuple(idx[:r]), unrankable=tuple(idx[r:]),
            optimal_action=ActionPrimitive("sweep", rng.uniforms(4)))
        candidates = [ActionPrimitive("sweep", rng.uniforms(4)) for _ in range(n)]
        pairs = build_pairs(ranking, candidates, obs)
        u = n - r
        expected = r * (r - 1) // 2 + r * u + n
        assert len(pairs) == expected
        # independent enumeration oracle
        enum = ([(ranking.ordering[i], ranking.ordering[j])
                 for i in range(r) for j in range(i + 1, r)]
                + [(a, b) for a in ranking.ordering for b in ranking.unrankable]
                + [("opt", i) for i in range(n)])
        assert len(pairs) == len(enum)


# --- criterion 4: EMD exactness -----------------------------------------------

def test_criterion_04_emd_exactness():
    start = time.time()
    rng = Rng(44)
    for trial in range(200):
        n = 2 + rng.randint(0, 5)
        a = rng.uniforms(n * 2).reshape(n, 2)
        b = rng.uniforms(n * 2).reshape(n, 2)
        ours, _ = metrics.emd(a, b)
        assert abs(ours - brute_force_emd(a, b)) < 1e-9
    elapsed = time.time() - start
    assert elapsed < 60.0, f"EMD checks took {elapsed:.1f}s"


# --- criterion 5: diffusion marginal consistency -------------------------------

def test_criterion_05_marginal_consistency():
    start = time.time()
    sched = NoiseSchedule.linear()
    rng = Rng(55)
    t_target = 60
    x0 = np.array([0.7, -0.4, 0.2, -0.1])
    trials = 10_000
    chained = np.empty((trials, 4))
    x0_batch = x0.copy()
    for i in range(trials):
        x = x0_batch.copy()
        for t in range(1, t_target + 1):
            x = q_step(sched, x, t, rng.normals(4))
        chained[i] = x
    jumped = np.empty((trials, 4))
    for i in range(trials):
        jumped[i] = q_jump(sched, x0, t_target, rng.normals(4))
    mean_th = np.sqrt(sched.alpha_bar(t_target)) * x0
    var_th = 1.0 - sched.alpha_bar(t_target)
    for arr in (chained, jumped):
        assert np.max(np.abs(arr.mean(axis=0) - mean_th)) <= 0.02 * max(1.0, np.abs(mean_th).max())
        pooled_var = ((arr - mean_th) ** 2).mean()
        assert abs(pooled_var - var_th) / var_th <= 0.02
    elapsed = time.time() - start
    assert elapsed < 60.0, f"marginal checks took {elapsed:.1f}s"


# --- full pipeline fixture ------------------------------------------------------

METHOD_SPECS = (
    ("SL", ()),
    ("SL+SL", ()),
    ("DPO+ImplicitRAS", ("finetuned",)),
    ("SL+ExplicitRAS", ("reward",)),
    ("SL+ImplicitRAS", ("finetuned",)),
)


def _tag(method):
    return method.replace("+", "_")


@pytest.fixture(scope="session")
def pipeline_artifacts(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    started = time.time()
    out = {"root": root, "tasks": {}}
    for task_name in ("granular", "rope"):
        n1, n2 = config.STAGE_SIZES[task_name]
        d = root / task_name
        os.makedirs(d, exist_ok=True)
        paths = {
            "dsl": d / "dsl.jsonl", "ref": d / "ref.ckpt", "dpl": d / "dpl.jsonl",
            "ft": d / "ft.ckpt", "head": d / "head.ckpt", "slsl": d / "slsl.ckpt",
            "evals": d / "evals",
        }
        pipeline.collect_stage1(task_name, num_states=n1, k=config.AUX_ACTIONS_K,
                                seed=PIPE_SEED, out_path=paths["dsl"])
        pipeline.train_sl([paths["dsl"]], epochs=config.SL_EPOCHS, seed=PIPE_SEED + 1,
                          out_ckpt=paths["ref"])
        pipeline.rollout_stage2(task_name, paths["ref"], num_states=n2, n=N_CANDIDATES,
                                seed=PIPE_SEED + 2, out_path=paths["dpl"])
        pipeline.train_dpo_cmd(paths["dpl"], paths["ref"], beta=config.DPO_BETA,
                               epochs=config.DPO_EPOCHS, seed=PIPE_SEED + 3,
                               out_ckpt=paths["ft"])
        pipeline.train_explicit_cmd(paths["dpl"], paths["ref"], epochs=config.EXPLICIT_EPOCHS,
                                    seed=PIPE_SEED + 4, out_ckpt=paths["head"])
        pipeline.train_sl([paths["dsl"]], epochs=config.SL_EPOCHS, seed=PIPE_SEED + 5,
                          out_ckpt=paths["slsl"], pl_paths=[paths["dpl"]])
        for method, needs in METHOD_SPECS:
            kw = {}
            if "finetuned" in needs:
                kw["finetuned_path"] = paths["ft"]
            if "reward" in needs:
                kw["reward_path"] = paths["head"]
            ref_path = paths["slsl"] if method == "SL+SL" else paths["ref"]
            pipeline.evaluate(task_name, method, trials=TRIALS, n=N_CANDIDATES,
                              seed=EVAL_SEED, out_dir=paths["evals"],
                              reference_path=ref_path, **kw)
        out["tasks"][task_name] = paths
    out["elapsed"] = time.time() - started
    return out


def _final_emds(evals_dir, method):
    rows = datastore.load_json_lines(os.path.join(evals_dir, f"trials_{_tag(method)}.jsonl"))
    rows.sort(key=lambda r: r["trial"])
    return np.array([r["metrics"][-1]["emd"] for r in rows])


def _spearman_holdout(task_name, paths, n_states=50):
    task = get_task(task_name)
    ref, _ = datastore.load_policy_checkpoint(paths["ref"])
    ft, _ = datastore.load_policy_checkpoint(paths["ft"])
    cors = []
    for i in range(n_states):
        st = task.reset(Rng(500_000 + i))
        obs = task.observe(st)
        acts = policy.predict_actions(ref, obs, N_CANDIDATES, Rng(600_000 + i))
        rewards = ras.implicit_rewards(ft, ref, acts, obs, beta=config.DPO_BETA,
                                       rng=Rng(700_000 + i))
        posts = oracle.rank_scores(task, st, acts)
        cors.append(stats.spearman(rewards, [-p for p in posts]))
    return float(np.mean(cors))


# --- criterion 6: end-to-end directional claim ---------------------------------

def test_criterion_06_directional_claim(pipeline_artifacts):
    assert pipeline_artifacts["elapsed"] < 7200, "pipeline exceeded the 2-hour target"
    report = {}
    failures = []
    for task_name in ("granular", "rope"):
        paths = pipeline_artifacts["tasks"][task_name]
        sl = _final_emds(paths["evals"], "SL")
        rr = _final_emds(paths["evals"], "SL+ImplicitRAS")
        wins = int((rr < sl).sum())
        spear = _spearman_holdout(task_name, paths)
        report[task_name] = {
            "sl_mean": float(sl.mean()), "ras_mean": float(rr.mean()),
            "wins": wins, "trials": len(sl), "spearman": spear,
        }
        if not rr.mean() < sl.mean():
            failures.append(f"{task_name}: mean final EMD not improved "
                            f"({rr.mean():.4f} vs {sl.mean():.4f})")
        if not wins >= 0.6 * len(sl):
            failures.append(f"{task_name}: paired win rate {wins}/{len(sl)} below 60%")
        if not spear > 0.3:
            failures.append(f"{task_name}: reward-oracle spearman {spear:.3f} <= 0.3")
    print("\ncriterion 6 report:", json.dumps(report, indent=2))
    assert not failures, "; ".join(failures)


# --- criterion 7: N-sweep monotonicity ------------------------------------------

def test_criterion_07_n_sweep(pipeline_artifacts):
    paths = pipeline_artifacts["tasks"]["rope"]
    sweep_dir = pipeline_artifacts["root"] / "nsweep"
    finals = {}
    for n in (1, 2, 4, 8):
        if n == 8:
            finals[n] = _final_emds(paths["evals"], "SL+ImplicitRAS")
            continue
        pipeline.evaluate("rope", "SL+ImplicitRAS", trials=TRIALS, n=n, seed=EVAL_SEED,
                          out_dir=sweep_dir / f"n{n}", reference_path=paths["ref"],
                          finetuned_path=paths["ft"])
        finals[n] = _final_emds(sweep_dir / f"n{n}", "SL+ImplicitRAS")
    quality = {n: -finals[n].mean() for n in (1, 2, 4, 8)}
    sems = {n: finals[n].std() / math.sqrt(len(finals[n])) for n in (1, 2, 4, 8)}
    print("\nN-sweep (rope): " + ", ".join(
        f"N={n}: EMD {-quality[n]:.4f} (sem {sems[n]:.4f})" for n in (1, 2, 4, 8)))
    inversions = []
    ns = [1, 2, 4, 8]
    for a, b in zip(ns, ns[1:]):
        if quality[b] < quality[a]:
            inversions.append((a, b, quality[a] - quality[b]))
    band = max(sems.values())
    assert len(inversions) <= 1, f"more than one inversion: {inversions}"
    for a, b, gap in inversions:
        assert gap <= band, f"inversion N={a}->N={b} of {gap:.4f} exceeds noise band {band:.4f}"
    # N=1 must coincide with plain SL under matched seeds
    sl = _final_emds(paths["evals"], "SL")
    assert np.array_equal(finals[1], sl), "N=1 selection differs from plain SL"


# --- criterion 8: harness completeness -------------------------------------------

def test_criterion_08_harness_reproducibility(pipeline_artifacts):
    for task_name in ("granular", "rope"):
        evals = pipeline_artifacts["tasks"][task_name]["evals"]
        for method, _ in METHOD_SPECS:
            tag = _tag(method)
            for stem in (f"curve_{tag}.json", f"heatmap_{tag}.csv", f"manifest_{tag}.json",
                         f"trials_{tag}.jsonl"):
                assert (evals / stem).exists(), f"{task_name}/{stem} missing"
    # identical-seed rerun is byte-identical (rope, all five methods)
    paths = pipeline_artifacts["tasks"]["rope"]
    rerun = pipeline_artifacts["root"] / "rope_rerun"
    for method, needs in METHOD_SPECS:
        kw = {}
        if "finetuned" in needs:
            kw["finetuned_path"] = paths["ft"]
        if "reward" in needs:
            kw["reward_path"] = paths["head"]
        ref_path = paths["slsl"] if method == "SL+SL" else paths["ref"]
        pipeline.evaluate("rope", method, trials=TRIALS, n=N_CANDIDATES, seed=EVAL_SEED,
                          out_dir=rerun, reference_path=ref_path, **kw)
    for name in sorted(os.listdir(paths["evals"])):
        a = (paths["evals"] / name).read_bytes()
        b = (rerun / name).read_bytes()
        assert a == b, f"rerun differs for {name}"


# --- criterion 9: reward-distribution artifact ------------------------------------

def test_criterion_09_reward_distribution(pipeline_artifacts):
    total = 0
    moved = 0
    for task_name in ("granular", "rope"):
        evals = pipeline_artifacts["tasks"][task_name]["evals"]
        log_path = evals / "inference_log_SL_ImplicitRAS.jsonl"
        records = datastore.load_json_lines(log_path)
        assert records, f"no inference log for {task_name}"
        for r in records:
            assert r["n"] == N_CANDIDATES
            assert len(r["rewards_norm"]) == N_CANDIDATES
            assert 0.0 <= min(r["rewards_norm"]) and max(r["rewards_norm"]) <= 1.0
            total += 1
            moved += r["selected"] != 0
        out = pipeline_artifacts["root"] / f"plots_{task_name}"
        artifacts = plots.render([log_path], out)
        hist = [a for a in artifacts if a.endswith("_reward_hist.csv")]
        assert hist and os.path.getsize(hist[0]) > 0
        lines = open(hist[0]).read().strip().splitlines()
        assert lines[0] == "bin_left,bin_right,count"
        # histogram totals one count per (state, candidate)
        assert sum(int(l.split(",")[2]) for l in lines[1:]) == len(records) * N_CANDIDATES
    frac = moved / total
    print(f"\nselected != first-sample in {moved}/{total} states ({frac:.1%})")
    assert frac >= 0.30, f"selection moved in only {frac:.1%} of states"
