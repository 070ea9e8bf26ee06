"""Acceptance criteria: one printed pass/fail line per criterion."""
import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from nn_helpers import gradient_check, perturbed_net, tiny_config
from oracles import exhaustive_calibration, exhaustive_stump, naive_stats, pairwise_auc, random_case, stump_config
from pipeline import gbm_spec
from landslide_fusion.cvharness import AblationPlan, run_ablation, run_cv, run_ensemble
from landslide_fusion.dataio import PatchStack, load_patch_stack, write_patch_stack
from landslide_fusion.evalcal import (
    ConfusionMatrix,
    calibrate_threshold,
    f1_at,
    overall_score,
    precision_recall_f1,
    roc_auc,
)
from landslide_fusion.features import compute_indices, compute_patch_statistics, load_feature_table
from landslide_fusion.fusionnet import (
    FusionNet,
    Tensor,
    combined_loss,
    hflip,
    load_weights,
    predict_net,
    save_weights,
    tta_predict,
    vflip,
)
from landslide_fusion.gbm import PRESETS, GbmConfig, GbmModel, fit_gbm, predict_gbm, quantile_bin

FIXTURES = Path(__file__).parent / "fixtures"


class Criterion:
    """Collects named checks, then prints and records one verdict line."""

    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.checks = []
        self.start = time.perf_counter()

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def finish(self, elapsed=None):
        elapsed = time.perf_counter() - self.start if elapsed is None else elapsed
        self.check(f"runtime < {self.budget:g}s", elapsed < self.budget, f"{elapsed:.1f}s")
        failed = [f"{n} ({d})" if d else n for n, ok, d in self.checks if not ok]
        mark = "✓" if not failed else "✗"
        detail = "; ".join(f"{n}: {d}" for n, ok, d in self.checks if d)
        line = f"{mark} [{self.number}] {self.title} | {detail}"
        if failed:
            line += " | FAILED: " + ", ".join(failed)
        conftest.ACCEPTANCE_LINES.append(line)
        print(line)
        assert not failed, line


def test_criterion_1_metric_fixtures():
    c = Criterion(1, "metric fixtures", 1.0)
    p, r, f1 = precision_recall_f1(ConfusionMatrix(tn=5832, fp=60, fn=129, tp=1126))
    c.check("precision", abs(p - 0.9494) <= 1e-4, f"P={p:.5f}")
    c.check("recall", abs(r - 0.8972) <= 1e-4, f"R={r:.5f}")
    c.check("f1", abs(f1 - 0.9226) <= 1e-4, f"F1={f1:.5f}")
    gbm_row = overall_score(0.8740, 0.8792, 0.8408).overall
    ens_row = overall_score(0.9216, 0.9409, 0.9058).overall
    c.check("overall gbm row", abs(gbm_row - 0.8632) <= 1e-4, f"{gbm_row:.5f}")
    c.check("overall ensemble row", abs(ens_row - 0.9190) <= 1e-4, f"{ens_row:.5f}")
    c.finish()


def test_criterion_2_oracle_equivalence():
    c = Criterion(2, "oracle equivalence", 30.0)
    rng = np.random.default_rng(2)
    auc_err = max(abs(roc_auc(y, p).auc - pairwise_auc(y, p))
                  for y, p in (random_case(rng) for _ in range(50)))
    c.check("AUC vs pairwise (50 cases)", auc_err <= 1e-12, f"max err {auc_err:.1e}")

    stat_err = 0.0
    for k in range(100):
        x = [rng.normal(0, 1, (64, 64, 18)), rng.exponential(2, (64, 64, 18)),
             rng.integers(0, 3, (64, 64, 18)).astype(float), rng.uniform(-5, 5, (64, 64, 18))][k % 4]
        row = compute_patch_statistics(PatchStack(x[None])).matrix[0]
        for ch in (k % 18, 17 - k % 18):
            stat_err = max(stat_err, np.abs(row[7 * ch:7 * ch + 7] - naive_stats(x[..., ch].ravel())).max())
    c.check("patch statistics vs naive (100 patches)", stat_err <= 1e-9, f"max err {stat_err:.1e}")

    mismatches = 0
    for _ in range(50):
        y, p = random_case(rng)
        res = calibrate_threshold(y, p)
        mismatches += (res.threshold, res.f1) != exhaustive_calibration(y, p)
    c.check("calibration vs exhaustive sweep", mismatches == 0, f"{mismatches}/50 mismatches")
    c.finish()


def test_criterion_3_gbm_correctness():
    c = Criterion(3, "GBM correctness", 60.0)
    worst, structural = 0.0, 0
    for case in range(20):
        rng = np.random.default_rng(1000 + case)
        n, f = int(rng.integers(8, 65)), int(rng.integers(1, 5))
        x = rng.normal(0, 1, (n, f))
        y = (rng.random(n) < 0.4).astype(np.int64)
        y[:2] = (0, 1)
        spw, lam = [1.0, 1.5][case % 2], [0.0, 1.0, 1.2][case % 3]
        _, (_, feat, thr, lv, rv) = exhaustive_stump(x, y, spw, lam, 0.3)
        tree = fit_gbm(quantile_bin(x), y, stump_config(lam, 0.3, spw)).trees[0]
        structural += tree.feature[0] != feat or tree.cut[0] != thr
        worst = max(worst, abs(tree.value[tree.left[0]] - lv), abs(tree.value[tree.right[0]] - rv))
    c.check("stump oracle (20 datasets)", structural == 0 and worst <= 1e-9,
            f"{structural} split mismatches, leaf err {worst:.1e}")

    rng = np.random.default_rng(3)
    x = rng.normal(0, 1, (300, 5))
    y = (x[:, 0] - x[:, 1] + rng.normal(0, 1, 300) > 0).astype(int)
    m = fit_gbm(quantile_bin(x), y, GbmConfig(n_rounds=40, learning_rate=0.1, num_leaves=8),
                record_loss=True)
    rise = float(np.max(np.diff(m.train_loss)))
    c.check("loss non-increasing", rise <= 1e-12, f"max step {rise:+.1e}")

    x = rng.normal(0, 1, (300, 4))
    y = (x[:, 0] * x[:, 2] > 0).astype(int)
    warp = lambda z: np.column_stack([np.exp(z[:, 0]), z[:, 1] ** 3, 5 * z[:, 2] - 2, np.arctan(z[:, 3])])
    cfg = GbmConfig(n_rounds=30, subsample=0.8, colsample=0.75, num_leaves=8)
    m1, m2 = fit_gbm(quantile_bin(x), y, cfg), fit_gbm(quantile_bin(warp(x)), y, cfg)
    test = rng.normal(0, 1, (100, 4))
    c.check("monotone-transform invariance",
            np.array_equal(predict_gbm(m1, test), predict_gbm(m2, warp(test))))

    x = rng.normal(0, 1, (300, 12))
    y = (x[:, 0] + x[:, 5] > 0).astype(int)
    b = quantile_bin(x)
    docs = {fit_gbm(b, y, PRESETS["boost-a"].with_(n_rounds=15), n_jobs=j).to_json() for j in (1, 2, 4)}
    c.check("thread-count determinism", len(docs) == 1, f"{len(docs)} distinct models for 1/2/4 threads")
    c.finish()


def test_criterion_4_autodiff():
    c = Criterion(4, "autodiff correctness", 60.0)
    net = perturbed_net(tiny_config(embed_dim=8, depth=1))
    x = np.random.default_rng(1).standard_normal((4, 16, 16, 12))
    worst, where = gradient_check(net, x, np.array([0, 1, 1, 0]))
    c.check(f"finite differences over {net.n_parameters()} parameters", worst <= 1e-4,
            f"max rel err {worst:.1e} at {where[0] if where else '-'}")
    loss = float(combined_loss(Tensor(np.zeros((1, 1))), [1]).data)
    c.check("combined loss fixture", abs(loss - 0.51324) <= 1e-5, f"{loss:.6f}")
    c.finish()


def test_criterion_5_fusion_mechanism():
    c = Criterion(5, "fusion mechanism", 30.0)
    rng = np.random.default_rng(5)
    net = perturbed_net(tiny_config((("RGBN",), ("SARdiff",)))).eval()
    x = rng.normal(0, 1, (3, 16, 16, 18))
    base = net.forward(x).data
    unassigned = (4, 5, 8, 9, *range(12, 18))
    moved = 0
    for ch in unassigned:
        z = x.copy()
        z[..., ch] = rng.normal(0, 5, z.shape[:-1])
        moved += not np.array_equal(net.forward(z).data, base)
    c.check("unassigned channels inert", moved == 0, f"{moved}/{len(unassigned)} changed output")

    deep = perturbed_net(tiny_config(depth=2), scale=1.0).eval()
    deep.record_attention = True
    deep.forward(rng.normal(0, 3, (3, 16, 16, 12)))
    row_err = max(np.abs(a.sum(axis=-1) - 1).max() for a in deep.attention_maps)
    c.check("attention rows sum to 1", row_err <= 1e-6, f"max err {row_err:.1e}")

    xs = rng.normal(0, 1, (3, 16, 16, 12))
    ref = tta_predict(net, xs)
    tta_err = max(np.abs(tta_predict(net, g(xs)) - ref).max()
                  for g in (hflip, vflip, lambda z: hflip(vflip(z))))
    c.check("TTA flip-group invariance", tta_err <= 1e-6, f"max err {tta_err:.1e}")
    c.check("eval-mode determinism", net.forward(x).data.tobytes() == base.tobytes())
    c.finish()


def test_criterion_6_end_to_end(end_to_end):
    c = Criterion(6, "end-to-end synthetic run", 600.0)
    for name, res in end_to_end.results.items():
        c.check(f"{name} AUC > 0.9", res.auc > 0.9, f"{name} AUC {res.auc:.4f}")
    ens = run_ensemble(end_to_end.bundle)
    rep = ens.report
    c.check("calibrated F1 >= F1@0.5", rep["f1"] >= rep["f1_at_0.5"],
            f"ensemble F1 {rep['f1']:.4f} vs {rep['f1_at_0.5']:.4f}")
    best = max(rep["member_auc"].values())
    c.check("ensemble AUC >= best - 0.01", rep["auc"] >= best - 0.01,
            f"ensemble AUC {rep['auc']:.4f}, best {best:.4f}")
    c.finish(end_to_end.elapsed + (time.perf_counter() - c.start))


def test_criterion_7_ablation_ordering(synthetic_400):
    c = Criterion(7, "ablation ordering", 600.0)
    d = synthetic_400
    base = gbm_spec("boost-a")
    full = run_cv(base, d["table"], d["labels"], d["folds"])
    optical = run_ablation(AblationPlan("drop-modality", ("SAR", "SARdiff"), base),
                           d["table"], d["labels"], d["folds"], full)["oof_f1"]
    sar = run_ablation(AblationPlan("drop-modality", ("RGBN", "Indices"), base),
                       d["table"], d["labels"], d["folds"], full)["oof_f1"]
    c.check("full > optical-only > SAR-only", full.f1 > optical > sar,
            f"F1 full {full.f1:.4f}, optical {optical:.4f}, SAR {sar:.4f}")
    c.finish(d["seconds"] + (time.perf_counter() - c.start))


def test_criterion_8_format_round_trips(tmp_path):
    c = Criterion(8, "format round-trips", 10.0)
    expected = json.loads((FIXTURES / "expected.json").read_text())

    stack = load_patch_stack(FIXTURES / "golden_stack.npy")
    digest = hashlib.sha256(stack.data.tobytes()).hexdigest()
    write_patch_stack(stack, tmp_path / "s.npy")
    c.check("patch stack", digest == expected["stack_sha256"]
            and (tmp_path / "s.npy").read_bytes() == (FIXTURES / "golden_stack.npy").read_bytes(),
            f"{stack.n} patches")

    model = GbmModel.load(FIXTURES / "golden_gbm.json")
    probs = predict_gbm(model, load_feature_table(FIXTURES / "golden_rows.csv").matrix)
    model.save(tmp_path / "m.json")
    c.check("GBM JSON model", probs.tolist() == expected["gbm_probabilities"]
            and (tmp_path / "m.json").read_bytes() == (FIXTURES / "golden_gbm.json").read_bytes(),
            f"{len(model.trees)} trees, {probs.size} rows")

    net, _ = load_weights(FIXTURES / "golden_nn.json")
    x = compute_indices(stack).data
    plain, tta = predict_net(net, x, tta=False), predict_net(net, x, tta=True)
    save_weights(net, tmp_path / "w.bin", metadata={"note": "golden fixture"})
    c.check("NN weight blob", plain.tolist() == expected["nn_probabilities"]
            and tta.tolist() == expected["nn_probabilities_tta"]
            and (tmp_path / "w.bin").read_bytes() == (FIXTURES / "golden_nn.bin").read_bytes(),
            f"{net.n_parameters()} weights, {plain.size} patches")
    c.finish()
