"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line, printed in a dedicated section at the
end of the pytest run. ``python3 tests/test_acceptance.py`` runs the same
checks without pytest and prints the lines directly.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from _oracles import (  # noqa: E402
    AUGMENTED_COUNTS,
    FD_COUNTS,
    ABLATION_SPLIT_COUNTS,
    brute_metrics,
    gradient_check,
    reference_documents,
    tiny_problem,
)

from narrative_cantm import augment, cantm, cli, corpus, evaluation, explain, synthetic  # noqa: E402
from narrative_cantm.corpus import Document  # noqa: E402
from narrative_cantm.labels import CLASSES, N_CLASSES  # noqa: E402
from narrative_cantm.models import ModelSpec  # noqa: E402

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script outside pytest
    ACCEPTANCE_LINES = []


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ------------------------------------------------------------ shared fixtures


_cache = {}


def synthetic_corpus():
    if "syn" not in _cache:
        _cache["syn"] = synthetic.make_corpus(vocab_size=200, words_per_class=20, signal=0.7, seed=0)
    return _cache["syn"]


# ------------------------------------------------------------ criteria


def test_gradient_oracle():
    t = time.perf_counter()
    worst, count = gradient_check(*tiny_problem(seed=0))
    dt = time.perf_counter() - t
    record("gradient oracle", worst <= 1e-4 and dt < 10,
           f"{count} entries, worst relative error {worst:.2e} (<= 1e-4), {dt:.2f}s (< 10s)")


def test_kl_monte_carlo():
    t = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    n = 100_000
    for _ in range(20):
        k = int(rng.integers(1, 4))
        mu, lv = rng.normal(0, 1, k), rng.normal(0, 0.5, k)
        sd = np.exp(0.5 * lv)
        z = mu + sd * rng.standard_normal((n, k))
        log_q = (-0.5 * (((z - mu) / sd) ** 2 + lv + np.log(2 * np.pi))).sum(axis=1)
        log_p = (-0.5 * (z ** 2 + np.log(2 * np.pi))).sum(axis=1)
        mc = float(np.mean(log_q - log_p))
        worst = max(worst, abs(mc - cantm.kl_std_normal(cantm.GaussianParams(mu, lv))))
    zero = cantm.kl_std_normal(cantm.GaussianParams(np.zeros(5), np.zeros(5)))
    dt = time.perf_counter() - t
    record("KL vs Monte-Carlo", worst <= 1e-2 and zero == 0.0 and dt < 30,
           f"worst |closed - MC| {worst:.2e} (<= 1e-2) over 20 Gaussians at 1e5 samples, "
           f"KL(0,0) = {zero!r}, {dt:.2f}s (< 30s)")


def test_normalization():
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(1000):
        D, K, K_s, V, B = (int(v) for v in rng.integers(1, 12, 5))
        params = cantm.init_params(rng, D, K, K_s, V)
        scale = 10.0 ** rng.uniform(-2, 2)
        for key in params:
            params[key] = params[key] * scale + rng.normal(0, scale, params[key].shape)
        H = rng.normal(0, scale, (B, D))
        gp1 = cantm.m1_encode(H, params)
        z = cantm.reparameterize(gp1, rng.standard_normal(gp1.mu.shape))
        yhat = cantm.classify_m1(z, params)
        gp2 = cantm.m2_encode(H, yhat, params)
        zs = cantm.reparameterize(gp2, rng.standard_normal(gp2.mu.shape), "m2")
        bow2, cls2 = cantm.m2_decode(zs, yhat, params)
        outputs = [
            cantm.decode_bow(z.z, params["dec1_W"], params["dec1_b"]),
            yhat,
            cantm.decode_bow(yhat, params["clsdec_W"], params["clsdec_b"]),
            bow2,
            cls2,
        ]
        for o in outputs:
            worst = max(worst, float(np.abs(o.sum(axis=-1) - 1.0).max()))
    record("normalization", worst <= 1e-6,
           f"5 output distributions x 1000 random models, worst |sum - 1| {worst:.2e} (<= 1e-6)")


def test_synthetic_end_to_end():
    t = time.perf_counter()
    docs = synthetic_corpus().docs
    cantm_rep = evaluation.run_cv(docs, ModelSpec("cantm"), k=5, seed=0)
    lr_rep = evaluation.run_cv(docs, ModelSpec("bow_lr"), k=5, seed=0)
    dt = time.perf_counter() - t
    ok = cantm_rep.macro_f1 >= 0.90 and lr_rep.macro_f1 >= 0.85 and dt < 300
    record("synthetic end-to-end", ok,
           f"{len(docs)} docs, 5-fold CV macro-F1 CANTM {cantm_rep.macro_f1:.3f} (>= 0.90), "
           f"BOW-LR {lr_rep.macro_f1:.3f} (>= 0.85), {dt:.1f}s (< 300s)")


def test_explanation_fidelity():
    syn = synthetic_corpus()
    model = cantm.train(syn.docs, config=cantm.CantmConfig(seed=0))
    overlaps = {}
    for c in CLASSES:
        top = explain.class_associated_words(model, c, 10).tokens
        overlaps[c] = len(set(top) & set(syn.keywords[c])) / 10
    worst = min(overlaps.values())
    record("explanation fidelity", worst >= 0.5,
           "top-10 class word overlap with generating keywords, min "
           f"{worst:.0%} (>= 50%): " + ", ".join(f"{c} {v:.0%}" for c, v in overlaps.items()))


def test_metric_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        gold = [CLASSES[i] for i in rng.integers(0, N_CLASSES, n)]
        pred = [CLASSES[i] for i in rng.integers(0, N_CLASSES, n)]
        rep = evaluation.metrics(gold, pred)
        acc, macro, f1 = brute_metrics(gold, pred)
        diffs = [abs(rep.accuracy - acc), abs(rep.macro_f1 - macro)]
        diffs += [abs(rep.per_class_f1[i] - f1[c]) for i, c in enumerate(CLASSES) if rep.per_class_f1[i] is not None]
        worst = max(worst, max(diffs))
    A, B = CLASSES[:2]
    example = evaluation.metrics([A, A, B, B], [A, B, B, B]).macro_f1
    expected = (2 / 3 + 4 / 5) / 2
    record("metric oracle", worst <= 1e-12 and example == expected,
           f"worst deviation from brute force {worst:.1e} (<= 1e-12) on 1000 pairs; "
           f"worked example macro-F1 {example!r} (expected {expected!r})")


def test_stratification():
    docs = reference_documents()
    folds = corpus.stratified_kfold(docs, 5, seed=0)
    sizes = [len(folds.fold_ids(f)) for f in range(5)]
    spread = 0
    for c in CLASSES:
        per_fold = [sum(1 for d in docs if d.label == c and folds.assignment[d.id] == f) for f in range(5)]
        spread = max(spread, max(per_fold) - min(per_fold))
    record("stratification", len(docs) == 805 and sizes == [161] * 5 and spread <= 1,
           f"{len(docs)} docs, fold sizes {sizes}, max per-class fold spread {spread} (<= 1)")


def test_class_statistics_replay(tmp_path):
    fd_path, aug_path = tmp_path / "fd.jsonl", tmp_path / "aug.jsonl"
    corpus.save_jsonl(synthetic.replay_counts(FD_COUNTS, "fd", "fd"), fd_path)
    corpus.save_jsonl(reference_documents(), aug_path)
    fd = corpus.class_distribution(corpus.load_dataset(fd_path))
    aug = corpus.class_distribution(corpus.load_dataset(aug_path))
    fd_pct = [fd.percent_row()[c] for c in CLASSES]
    aug_pct = [aug.percent_row()[c] for c in CLASSES]
    ok = (fd_pct == [6, 27, 9, 2, 25, 31, 0] and aug_pct == [13, 14, 12, 19, 13, 17, 12]
          and fd.counts == FD_COUNTS and aug.counts == AUGMENTED_COUNTS)
    record("class statistics replay", ok, f"FD {fd_pct} (total {fd.total}), augmented {aug_pct} (total {aug.total})")


def test_ablation_split_replay():
    docs = reference_documents()
    splits = evaluation.split_augmentation_sets(docs, seed=0, test_sizes=evaluation.REFERENCE_TEST_SIZES)
    counts = splits.counts()
    rows = {name: [counts[name][c] for c in CLASSES] for name in ABLATION_SPLIT_COUNTS}
    mismatched = [name for name in ABLATION_SPLIT_COUNTS if rows[name] != ABLATION_SPLIT_COUNTS[name]]
    fd_mre = {d.id for d in docs if d.origin == "fd" and d.label == "MRE"}
    leaked = any(fd_mre & {d.id for d in splits.train(v)} for v in evaluation.TRAIN_VARIANTS)
    in_test = all(fd_mre <= {d.id for d in splits.test(v)} for v in evaluation.TEST_VARIANTS)
    ok = not mismatched and not leaked and in_test
    record("ablation split replay", ok,
           f"{len(ABLATION_SPLIT_COUNTS) - len(mismatched)}/{len(ABLATION_SPLIT_COUNTS)} rows exact, AnimalVac "
           f"{counts['train_seven_class']['AnimalVac']}/{counts['test_seven_class']['AnimalVac']}, "
           f"{len(fd_mre)} FD MRE docs test-only: {not leaked and in_test}")


RULE_EXAMPLES = [
    ("Cons", "Vaccination day. When the time comes, get vaccinated. No one will microchip you like a cat and 5G "
             "will not control your mind."),
    ("Cons", "Filled with nano particles to alter our DNA! The Moderna vaccine is the Gates vaccine."),
    ("LF", "Before you all start, this is NOT about Pro #Vaccination or those against. This is about how the "
           "#nojabnopay discriminates against free choice and the rich/poor."),
    ("LF", "This is how I feel!!! We should have all of our rights and freedoms to choose what is best for us. "
           "#freedom #ourbodyourchoice #NoVaccineForMe #novaccinepassport."),
    ("MRE", "Vatican says use of Covid vaccines made from aborted fetal tissue is ethical."),
    ("MRE", "Africans let's rise up and put an end to this menace.. We are not lab rats!! We are not test tubes!! "
            "#Nomorevaccinetesting"),
    ("AnimalVac", "Will Your Pet Need a COVID-19 Vaccine? #covid19 #AnimalHealth"),
    ("AnimalVac", "Outbreaks of disease are unpredictable and can have a major financial impact on your farm "
                  "business. Vaccination is a planned approach to help to protect your livestock and improve "
                  "animal health #VaccinesWork #WorldAnimalVaccinationDay"),
]


def test_rule_engine():
    rules = augment.load_rules()
    hits = [cls in augment.match_rules(Document(f"t{i}", text), rules).classes
            for i, (cls, text) in enumerate(RULE_EXAMPLES)]
    negative = augment.match_rules(Document("w", "The weather is nice"), rules)
    record("rule engine", all(hits) and not negative,
           f"{sum(hits)}/{len(hits)} example posts match their class; "
           f"'The weather is nice' matches {list(negative.classes)}")


def test_determinism(tmp_path):
    from fastapi.testclient import TestClient

    from narrative_cantm import service

    data = tmp_path / "syn.jsonl"
    corpus.save_jsonl(synthetic.make_corpus({c: 15 for c in CLASSES}, seed=4).docs, data)
    outs = []
    for run in range(2):
        out = tmp_path / f"cv{run}.md"
        code = cli.main(["cv", "--data", str(data), "--k", "5", "--seed", "1", "--epochs", "5", "--out", str(out)])
        assert code == 0
        outs.append(out.with_suffix(".json").read_bytes())
    cv_same = outs[0] == outs[1] and bool(json.loads(outs[0]))

    model = cantm.train(corpus.load_dataset(data), config=cantm.CantmConfig(epochs=3, seed=0))
    client = TestClient(service.create_app(model))
    body = json.dumps({"text": "pekw01 and some noise003 words"})
    responses = [client.post("/classify", content=body).content for _ in range(3)]
    svc_same = len(set(responses)) == 1
    record("determinism", cv_same and svc_same,
           f"cv --seed 1 JSON byte-identical: {cv_same}; identical service requests identical: {svc_same}")


MINORITY = ("LF", "MRE")


def test_augmentation_ablation_analog():
    """Training on 10 vs 100 minority docs; test set drawn from the imbalanced distribution."""
    majority = [c for c in CLASSES if c not in MINORITY]
    gains, deltas = [], []
    t = time.perf_counter()
    for seed in range(5):
        pool = synthetic.make_corpus({c: 100 for c in CLASSES}, signal=0.5, seed=100 + seed,
                                     id_prefix=f"tr{seed}").docs
        test = synthetic.make_corpus({c: 10 if c in MINORITY else 100 for c in CLASSES}, signal=0.5,
                                     seed=200 + seed, id_prefix=f"te{seed}").docs
        by_class = {c: [d for d in pool if d.label == c] for c in CLASSES}
        imbalanced = [d for c in CLASSES for d in (by_class[c][:10] if c in MINORITY else by_class[c])]
        reports = []
        for train in (imbalanced, pool):
            model = cantm.train(train, config=cantm.CantmConfig(seed=seed))
            reports.append(evaluation.metrics([d.label for d in test], model.predict_labels(test)))
        recall = [np.mean([r.per_class_recall[CLASSES.index(c)] for c in MINORITY]) for r in reports]
        f1 = [np.mean([r.per_class_f1[CLASSES.index(c)] for c in majority]) for r in reports]
        gains.append(recall[1] - recall[0])
        deltas.append(f1[1] - f1[0])
    gain, delta = float(np.mean(gains)), float(np.mean(deltas))
    dt = time.perf_counter() - t
    record("augmentation ablation analog", gain >= 0.15 and abs(delta) <= 0.05,
           f"minority recall gain {gain:+.3f} (>= 0.15), majority F1 change {delta:+.3f} (|.| <= 0.05), "
           f"5 seeds, {dt:.1f}s")


if __name__ == "__main__":
    import inspect
    import tempfile

    failed = 0
    for name, fn in list(globals().items()):
        if not name.startswith("test_") or not callable(fn):
            continue
        kwargs = {}
        if "tmp_path" in inspect.signature(fn).parameters:
            kwargs["tmp_path"] = Path(tempfile.mkdtemp())
        try:
            fn(**kwargs)
        except AssertionError:
            failed += 1
        except Exception as e:  # report and keep going
            failed += 1
            print(f"FAIL  {name}: raised {type(e).__name__}: {e}")
    sys.exit(1 if failed else 0)
