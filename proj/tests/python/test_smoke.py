import math

import pytest

import genderfuse as gf

TINY = {
    "word_dim": 8,
    "char_dim": 4,
    "pos_dim": 3,
    "char_filters": 4,
    "word_filters_per_width": 4,
    "dense_units": 8,
    "batch_size": 8,
    "folds": 3,
    "epochs": 2,
}


def test_text_pipeline():
    assert gf.normalize("Check http://a.b/c @bob :)") == "check <url> <user> <smile>"
    assert gf.tokenize("don't stop") == ["don't", "stop"]
    tokens = gf.tokenize(gf.normalize("We will win #HPV"))
    assert len(gf.pos_tag(tokens)) == len(tokens)
    assert gf.tagset()[0] == "<pad>"


def test_synth_and_corpus_round_trip(tmp_path):
    users = gf.synth_gender_corpus(users_per_class=5, tweets_per_user=3, seed=1)
    assert len(users) == 10
    assert users[0]["gender"] == "female" and users[1]["gender"] == "male"
    path = tmp_path / "c.jsonl"
    gf.write_corpus(path, users)
    assert gf.read_corpus(path) == users
    folds = gf.split_folds(users, 5, 3)
    assert sorted(i for f in folds for i in f) == list(range(10))


def test_ensemble_train_predict_and_reload(tmp_path):
    train = gf.synth_gender_corpus(users_per_class=10, tweets_per_user=4, seed=1)
    test = gf.synth_gender_corpus(users_per_class=4, tweets_per_user=4, seed=2, prefix="t")
    model = gf.Ensemble.train(train, TINY, seed=5, out_dir=str(tmp_path))
    assert len(model) == 3
    assert model.variant == "cnn_char_pos"
    assert all(not r["failed"] for r in model.fold_results)
    preds = model.predict(test)
    assert [p["user_id"] for p in preds] == [u["user_id"] for u in test]
    for p in preds:
        assert len(p["fold_probs"]) == 3
        assert 0.0 <= p["avg_prob"] <= 1.0
    summary = gf.evaluate(preds, test)
    assert 0.0 <= summary["voting"] <= 1.0

    reloaded = gf.Ensemble.load(sorted(tmp_path.glob("fold_*.gfus")))
    assert reloaded.predict(test) == preds
    assert 0.0 <= gf.coverage(preds) <= 1.0


def test_baseline_learns_word_signal():
    train = gf.synth_gender_corpus(users_per_class=30, tweets_per_user=10, seed=1)
    test = gf.synth_gender_corpus(users_per_class=10, tweets_per_user=10, seed=2, prefix="t")
    model = gf.Baseline.train(train, "lr", {"folds": 3}, seed=4)
    assert len(model.val_accuracies) == 3
    assert gf.evaluate(model.predict(test), test)["voting"] >= 0.9


def test_statistics():
    assert gf.odds_ratio(6, 3, 2, 4) == 4.0
    stat, p = gf.chi2_test(30, 10, 10, 30)
    assert stat == pytest.approx(20.0)
    assert p == pytest.approx(gf.chi2_sf(stat))
    assert gf.chi2_sf(3.841) == pytest.approx(0.05, abs=1e-3)
    tweets, preds = gf.synth_labeled_tweets(years=[2016], tweets_per_year=20000, users=500, seed=3)
    rows = gf.analyze(tweets, preds)
    assert len(rows) == 5
    for row in rows:
        assert math.isfinite(row["odds_ratio"])
        assert row["significant"]


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        gf.Ensemble.train(gf.synth_gender_corpus(users_per_class=3, tweets_per_user=2), {"nope": 1})
    with pytest.raises(RuntimeError):
        gf.read_corpus("/nonexistent/corpus.jsonl")
    with pytest.raises(RuntimeError):
        gf.chi2_test(0, 0, 1, 1)


def test_verification_entry_points():
    report = gf.grad_check(3, coords=6)
    assert report["passed"] and report["max_rel_error"] < 1e-4
    results = gf.selftest(2)
    assert results and all(ok for _, ok, _ in results)
    assert any(k["name"] == "word_dim" for k in gf.config_keys())
