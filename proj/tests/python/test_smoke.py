"""End-to-end checks of the Python bindings."""

import math

import numpy as np
import pytest

import diffnet


@pytest.fixture(scope="module")
def data():
    return diffnet.synthesize(
        num_users=30, num_items=60, avg_degree=4.0, homophily_strength=0.6,
        latent_dim=4, positives_per_user=6, feature_noise=0.2, seed=5,
    )


@pytest.fixture(scope="module")
def splits(data):
    return diffnet.split(data, test_fraction=0.2, validation_fraction=0.1, seed=5)


def test_dataset_shape(data):
    assert data.num_users == 30
    assert data.num_items == 60
    assert data.num_interactions == 30 * 6
    assert data.total_trust_edges() > 0
    assert len(data.user_ids) == 30

    feats = data.user_features()
    assert isinstance(feats, np.ndarray)
    assert feats.shape == (30, 4)
    assert np.isfinite(feats).all()

    u0_items = data.items_of(0)
    assert len(u0_items) == 6
    assert all(data.rated(0, i) for i in u0_items)
    assert data.find_user(data.user_ids[3]) == 3
    assert data.find_item("definitely-not-an-item") == -1


def test_split_partitions(data, splits):
    for u in range(data.num_users):
        merged = sorted(
            list(splits.train.items_of(u))
            + list(splits.validation.items_of(u))
            + list(splits.test.items_of(u))
        )
        assert merged == list(data.items_of(u))


def test_save_load_roundtrip(data, tmp_path):
    diffnet.save_dataset(data, str(tmp_path))
    back = diffnet.load_dataset(
        str(tmp_path / "ratings.tsv"),
        str(tmp_path / "trust.tsv"),
        str(tmp_path / "user_features.tsv"),
        str(tmp_path / "item_features.tsv"),
    )
    assert back.num_users == data.num_users
    assert back.num_interactions == data.num_interactions
    assert back.total_trust_edges() == data.total_trust_edges()


def test_train_evaluate_recommend(splits, tmp_path):
    model = diffnet.make_model("diffnet", splits.train, seed=9, embed_dim=8, depth=1)
    assert model.kind == "diffnet"
    assert "P" in model.param_names()
    assert model.param("P").shape == (30, 8)

    result = diffnet.train(
        model, splits, learning_rate=0.01, batch_size=64, neg_samples_per_pos=2,
        max_epochs=3, early_stop_patience=0, val_num_negatives=20, seed=9,
    )
    assert result["epochs_completed"] == 3
    assert len(result["log"]) == 3
    assert all(math.isfinite(e["mean_loss"]) for e in result["log"])

    metrics = diffnet.evaluate(
        model, splits, top_n=[5, 10], num_sampled_negatives=20,
        num_repetitions=2, seed=11,
    )
    assert set(metrics["hr"]) == {5, 10}
    assert 0.0 <= metrics["ndcg"][10] <= 1.0
    assert metrics["users_evaluated"] > 0

    again = diffnet.evaluate(
        model, splits, top_n=[5, 10], num_sampled_negatives=20,
        num_repetitions=2, seed=11,
    )
    assert again == metrics

    recs = diffnet.recommend(model, splits.train, user_id="0", top_n=4)
    assert len(recs) == 4
    scores = [s for (_, s) in recs]
    assert scores == sorted(scores, reverse=True)
    rated = {splits.train.item_ids[i] for i in splits.train.items_of(0)}
    assert not rated.intersection({item for (item, _) in recs})

    path = str(tmp_path / "model.bin")
    model.save(path)
    loaded = diffnet.load_model(path, splits.train, embed_dim=8, depth=1)
    for u in range(0, 30, 7):
        for i in range(0, 60, 13):
            assert loaded.score(u, i) == model.score(u, i)


def test_baseline_models(splits):
    bpr = diffnet.make_model("bpr", splits.train, seed=3, embed_dim=6)
    diffnet.train(bpr, splits, max_epochs=2, early_stop_patience=0,
                  batch_size=64, neg_samples_per_pos=2, val_num_negatives=10, seed=3)
    out = diffnet.evaluate(bpr, splits, top_n=[10], num_sampled_negatives=20,
                           num_repetitions=1, seed=3)
    assert 0.0 <= out["hr"][10] <= 1.0


def test_config_errors(splits):
    with pytest.raises(diffnet.DiffnetError):
        diffnet.make_model("diffnet", splits.train, embed_dim=0)
    with pytest.raises(diffnet.DiffnetError):
        diffnet.make_model("diffnet", splits.train, pooling="sum")
    with pytest.raises(diffnet.DiffnetError):
        # free embeddings off on both sides with no feature substitute
        diffnet.make_model(
            "diffnet", splits.train, use_user_features=False,
            use_free_user_embed=False,
        )
