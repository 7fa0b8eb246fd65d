"""Acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line; pytest also repeats all of them in an
"acceptance criteria" section of the terminal summary. Run alone with

    pytest tests/test_acceptance.py -v
"""

import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from hypdense import cli
from hypdense.checkpoint import load_checkpoint
from hypdense.datasynth import generate
from hypdense.density import HyperbolicDensity
from hypdense.divergence import divergence_oracle, kl_divergence, random_density_pair, renyi_alpha_divergence
from hypdense.evalmetrics import RankedList, auc, f1, ndcg_at_k, precision_at_k, recall_at_fraction, zero_shot_classify
from hypdense.evaluation import evaluate
from hypdense.geometry import (
    CURVATURE_MAX,
    CURVATURE_MIN,
    constraint_residual,
    exp_map_origin,
    geodesic_distance,
    log_map_origin,
    origin,
)
from hypdense.gradcheck import REL_TOL, run_gradcheck
from hypdense.losses import LossConfig, PairBatch, contrastive_loss, loss_components, order_loss

pytestmark = pytest.mark.slow

TOY_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "toy.yaml"


def report(name: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# -- 1. manifold suite ----------------------------------------------------------


def test_1_manifold_suite():
    rng = np.random.default_rng(0)
    n, dim = 10_000, 4
    start = time.perf_counter()
    worst_res = worst_trip = worst_iso = 0.0
    cs = np.exp(rng.uniform(math.log(CURVATURE_MIN), math.log(CURVATURE_MAX), n))
    dirs = rng.normal(size=(n, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    # radii up to sqrt(c)|u| = 6, where double precision can still hold 1e-9 absolute
    radii = rng.uniform(0.0, 6.0, n) / np.sqrt(cs)
    for c, d, r in zip(cs, dirs, radii):
        u = np.concatenate([[0.0], r * d])
        z = exp_map_origin(u, c)
        worst_res = max(worst_res, float(abs(constraint_residual(z, c))))
        worst_trip = max(worst_trip, float(np.max(np.abs(log_map_origin(z, c) - u))))
        worst_iso = max(worst_iso, abs(float(geodesic_distance(origin(dim, c), z, c)) - r))
    elapsed = time.perf_counter() - start
    ok = worst_res < 1e-9 and worst_trip < 1e-7 and worst_iso < 1e-9 and elapsed < 5.0
    report(
        "1 manifold",
        ok,
        f"residual {worst_res:.1e} (<1e-9), round trip {worst_trip:.1e} (<1e-7), "
        f"isometry {worst_iso:.1e} (<1e-9), {elapsed:.2f}s (<5s)",
    )
    assert ok


# -- 2. divergence oracle --------------------------------------------------------


def test_2_divergence_oracle():
    start = time.perf_counter()
    rows = divergence_oracle([0.3, 0.5, 0.7, 0.9], trials=50, samples=10_000_000, seed=0, max_dim=4)
    elapsed = time.perf_counter() - start
    outside = [r for r in rows if not r.within(3.0)]
    worst_z = max(abs(r.z_score) for r in rows)
    dims_ok = all(r.dim <= 4 for r in rows)

    rng = np.random.default_rng(1)
    worst_sym = worst_kl = 0.0
    for _ in range(50):
        f, g = random_density_pair(rng, 4)
        worst_sym = max(worst_sym, abs(renyi_alpha_divergence(f, g, 0.5) - renyi_alpha_divergence(g, f, 0.5)))
        kl_fg, kl_gf = kl_divergence(f, g), kl_divergence(g, f)
        worst_kl = max(
            worst_kl,
            abs(renyi_alpha_divergence(f, g, 1 - 1e-3) - kl_fg) / kl_fg,
            abs(renyi_alpha_divergence(f, g, 1e-3) - kl_gf) / kl_gf,
        )
    ok = not outside and dims_ok and worst_sym < 1e-10 and worst_kl < 1e-2 and elapsed < 120.0
    report(
        "2 divergence oracle",
        ok,
        f"{len(rows) - len(outside)}/{len(rows)} within 3 SE (max |z| {worst_z:.2f}), "
        f"symmetry {worst_sym:.1e} (<1e-10), KL limits rel {worst_kl:.1e} (<1e-2), {elapsed:.1f}s (<120s)",
    )
    assert ok


# -- 3. gradients ----------------------------------------------------------------


def test_3_gradient_suite():
    start = time.perf_counter()
    results = run_gradcheck(seed=0, configs=20)
    elapsed = time.perf_counter() - start
    worst = max(r.worst_error for r in results)
    ok = len(results) == 20 and worst < 1e-4 and all(r.passed for r in results) and elapsed < 60.0
    report("3 gradients", ok, f"20 configs, worst relative error {worst:.1e} (<1e-4, tol {REL_TOL:g}), {elapsed:.1f}s (<60s)")
    assert ok


# -- 4. loss contracts -------------------------------------------------------------


def _pair(target_div, alpha=0.7):
    """(text, image) with equal scales b so D_alpha(image || text) = |dmu|^2 / (2 b)."""
    a = origin(2)
    b = exp_map_origin(np.array([0.0, 0.8, 0.0]))
    beta = float(np.sum((a - b) ** 2) / (2 * target_div))
    return HyperbolicDensity(b, beta), HyperbolicDensity(a, beta)


def test_4_loss_contracts():
    n = 8
    point = exp_map_origin(np.array([0.0, 0.4, -0.2]))
    same = HyperbolicDensity(np.tile(point, (n, 1)), np.ones(n))
    uniform_err = abs(contrastive_loss(same, same, 1.0, 0.07) - math.log(n))

    cfg = LossConfig(gamma=0.5, margin=5.0)
    zero_pos = order_loss(PairBatch.from_pairs([_pair(0.3)]), cfg)
    zero_neg = order_loss(PairBatch.from_pairs([_pair(0.1)], [_pair(6.0)]), cfg)
    # positive penalty 0.8 - 0.5, negative hinge 5 - (1.5 - 0.5)
    excess = order_loss(PairBatch.from_pairs([_pair(0.8)], [_pair(1.5)]), cfg)
    excess_err = abs(excess - 4.3)

    rng = np.random.default_rng(0)
    worst_sum = 0.0
    for _ in range(20):
        m = 5
        texts = HyperbolicDensity(exp_map_origin(np.c_[np.zeros(m), rng.normal(size=(m, 3))]), np.exp(rng.normal(size=m)))
        images = HyperbolicDensity(exp_map_origin(np.c_[np.zeros(m), rng.normal(size=(m, 3))]), np.exp(rng.normal(size=m)))
        batch = PairBatch(texts, images, texts, images[rng.permutation(m)])
        lc = LossConfig(order_weight=float(rng.uniform(0, 3)), gamma=float(rng.uniform(0, 2)))
        con, order, total = loss_components(batch, lc, float(rng.uniform(0.1, 10)), float(rng.uniform(0.01, 1)))
        worst_sum = max(worst_sum, abs(total - (con + lc.order_weight * order)))
    ok = uniform_err < 1e-12 and zero_pos == 0.0 and zero_neg == 0.0 and excess_err < 1e-12 and worst_sum < 1e-12
    report(
        "4 loss contracts",
        ok,
        f"uniform logits |L - ln 8| {uniform_err:.1e}, order zero cases {zero_pos} / {zero_neg}, "
        f"excess case err {excess_err:.1e}, |total - parts| {worst_sum:.1e} (all <1e-12)",
    )
    assert ok


# -- 5, 6. toy experiment and ablations --------------------------------------------


def _run(tmp: Path, name: str, *overrides) -> tuple[float, dict, dict, list]:
    """Train and evaluate through the command line; returns (seconds, test metrics, train metrics, loss rows)."""
    out = tmp / name
    start = time.perf_counter()
    assert cli.main(["train", "--config", str(TOY_CONFIG), "--out", str(out / "train"), *overrides]) == 0
    elapsed = time.perf_counter() - start
    assert cli.main(
        ["eval", "--config", str(TOY_CONFIG), "--out", str(out / "eval"), "--checkpoint", str(out / "train" / "checkpoint.hydn"), *overrides]
    ) == 0
    test_metrics = json.loads((out / "eval" / "metrics.json").read_text())
    cfg = cli.resolve_config(cli.load_config_file(TOY_CONFIG), cli.parse_overrides(list(overrides)))
    params = load_checkpoint(out / "train" / "checkpoint.hydn").params
    train_metrics, _ = evaluate(params, generate(cfg.synth).subset("train"), tasks=("hierarchy",), loss=cfg.loss)
    rows = list(csv.DictReader(open(out / "train" / "metrics.csv")))
    return elapsed, test_metrics, train_metrics, rows


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    return _run(tmp_path_factory.mktemp("toy"), "full")


def test_5_toy_setup(toy):
    cfg = cli.resolve_config(cli.load_config_file(TOY_CONFIG))
    elapsed, _, _, rows = toy
    data = generate(cfg.synth)
    leaves = {s.concept_id for s in data.samples}
    per_concept = {cid: sum(s.concept_id == cid and s.split == "train" for s in data.samples) for cid in leaves}
    ok = len(leaves) == 8 and set(per_concept.values()) == {16} and len(rows) <= 2000 and elapsed < 300.0
    report("5 toy setup", ok, f"{len(leaves)} concepts x {sorted(set(per_concept.values()))} train images, {len(rows)} steps (<=2000), {elapsed:.1f}s (<300s)")
    assert ok


def test_5a_precision_at_10(toy):
    _, test_m, _, _ = toy
    prec, chance = test_m["retrieval"]["prec@10"], test_m["retrieval"]["chance_prec"]
    ok = prec >= 3 * chance
    report("5a Prec@10", ok, f"{prec:.1f} on held-out images vs 3 x chance = {3 * chance:.1f}")
    assert ok


def test_5b_texts_nearer_root_than_images(toy):
    _, test_m, train_m, _ = toy
    h = test_m["hierarchy"]
    d_text, d_image = h["mean_root_distance_text"], h["mean_root_distance_image"]
    tr = train_m["hierarchy"]
    ok = d_text < d_image
    report(
        "5b root distance",
        ok,
        f"text {d_text:.3f} vs image {d_image:.3f} on held-out images "
        f"(train images: text {tr['mean_root_distance_text']:.3f} vs image {tr['mean_root_distance_image']:.3f})",
    )
    assert ok


def test_5c_positive_encapsulation(toy):
    _, _, train_m, _ = toy
    rate = train_m["hierarchy"]["positive_encapsulation_rate"]
    ok = rate >= 0.9
    report("5c encapsulation", ok, f"{100 * rate:.1f}% of training positives have D_alpha <= gamma (>=90%)")
    assert ok


def test_5d_loss_drop(toy):
    _, _, _, rows = toy
    first, last = float(rows[0]["total"]), float(rows[-1]["total"])
    ok = last < 0.25 * first
    report("5d loss drop", ok, f"final {last:.4g} vs initial {first:.4g} (ratio {last / first:.2e}, <0.25)")
    assert ok


def test_6_ablations(toy, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ablate")
    full = toy[1]["retrieval"]["prec@10"]
    no_order = _run(tmp, "no_order", "--order_weight", "0")[1]["retrieval"]["prec@10"]
    no_local = _run(tmp, "no_local", "--use_local", "false")[1]["retrieval"]["prec@10"]
    ok = no_order < full and no_local < full
    report("6 ablations", ok, f"Prec@10 full {full:.1f}, order weight 0 {no_order:.1f}, no local attention {no_local:.1f}")
    assert ok


# -- 7. determinism ------------------------------------------------------------------


def test_7_determinism(tmp_path):
    def once(name):
        out = tmp_path / name
        assert cli.main(["train", "--config", str(TOY_CONFIG), "--out", str(out / "t")]) == 0
        assert cli.main(["eval", "--config", str(TOY_CONFIG), "--out", str(out / "e"), "--checkpoint", str(out / "t" / "checkpoint.hydn")]) == 0
        return [(out / rel).read_bytes() for rel in ("t/checkpoint.hydn", "t/metrics.csv", "e/metrics.json", "e/metrics.csv", "e/histogram.csv")]

    same = [a == b for a, b in zip(once("a"), once("b"))]
    ok = all(same)
    report("7 determinism", ok, f"{sum(same)}/{len(same)} output files byte-identical (checkpoint, train metrics, eval metrics, histogram)")
    assert ok


# -- 8. metric fixtures ----------------------------------------------------------------


def test_8_metric_fixtures():
    checks = {}
    # tied positive counts one half: (2.5 + 3 + 3) / 9
    checks["auc"] = auc([0.1, 0.4, 0.4, 0.8, 0.6, 0.2], [0, 0, 1, 1, 1, 0]) == 8.5 / 9
    # tp 2, fp 1, fn 1
    checks["f1"] = f1([1, 1, 0, 0, 1], [1, 0, 1, 0, 1]) == 2 * (2 / 3) * (2 / 3) / (4 / 3)
    ranked = RankedList.from_scores(0, np.arange(5), -np.arange(5.0), [0, 1, 0, 1, 1])
    checks["prec@3"] = precision_at_k(ranked, 3) == 100.0 / 3
    checks["recall@50%"] = recall_at_fraction(ranked, 0.5) == 100.0 / 3
    dcg = 1 / math.log2(3)
    ideal = 1 + 1 / math.log2(3) + 1 / math.log2(4)
    checks["ndcg@3"] = ndcg_at_k(ranked, 3) == dcg / ideal
    classes = exp_map_origin(np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]))
    images = exp_map_origin(np.array([[0.0, 0.0, 0.0], [0.0, -0.5, 0.2]]))
    preds, _ = zero_shot_classify(images, classes)
    checks["zero-shot tie -> lowest index"] = preds.tolist() == [0, 1]
    ok = all(checks.values())
    report("8 metric fixtures", ok, ", ".join(f"{k} {'ok' if v else 'MISMATCH'}" for k, v in checks.items()))
    assert ok
