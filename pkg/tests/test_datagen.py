import dataclasses
import hashlib

import numpy as np
import pytest

from mlpstruct.datagen import (
    COLUMNS,
    DECOYS,
    EmptyFileError,
    GeneratorConfig,
    MissingColumnError,
    ParseError,
    dumps_csv,
    generate,
    generate_csv,
    load_csv,
    planted_model,
    planted_response,
    save_csv,
)
from mlpstruct.training import TrainConfig, evaluate, nsse, train

# sha256 of generate_csv(GeneratorConfig(n_rows=1000, seed=7)), frozen at first release
CSV_1000_SHA256 = "9367abec2a818bbc156ff49c8066f557c36714113869a187bd0246d54d1015b2"


@pytest.fixture(scope="module")
def planted():
    cfg = GeneratorConfig(n_rows=4000, seed=0)
    return cfg, generate(cfg)


class TestGenerate:
    def test_deterministic_bytes(self):
        cfg = GeneratorConfig(n_rows=300, seed=11)
        assert generate_csv(cfg) == generate_csv(cfg)

    def test_pinned_checksum(self):
        text = generate_csv(GeneratorConfig(n_rows=1000, seed=7))
        assert hashlib.sha256(text.encode()).hexdigest() == CSV_1000_SHA256

    def test_seed_in_header(self):
        assert generate_csv(GeneratorConfig(n_rows=50, seed=123)).startswith("# seed=123\n")

    def test_seeds_differ(self):
        a = generate(GeneratorConfig(n_rows=100, seed=1))
        b = generate(GeneratorConfig(n_rows=100, seed=2))
        assert not np.array_equal(a.targets, b.targets)

    def test_shape_and_split(self, planted):
        _, ds = planted
        assert ds.names == COLUMNS
        assert ds.raw_inputs.shape == (4000, 10)
        assert abs(ds.is_train.mean() - 2 / 3) < 0.03

    def test_redundant_pair(self, planted):
        _, ds = planted
        X = ds.raw_inputs
        r = np.corrcoef(X[:, COLUMNS.index("produit")], X[:, COLUMNS.index("type_piece")])[0, 1]
        assert r == pytest.approx(1.0, abs=1e-12)

    def test_redundancy_off(self):
        ds = generate(GeneratorConfig(n_rows=2000, redundancy=False))
        r = np.corrcoef(ds.raw_inputs[:, COLUMNS.index("produit")], ds.raw_inputs[:, COLUMNS.index("type_piece")])[0, 1]
        assert abs(r) < 0.1

    def test_oracle_error_near_noise(self, planted):
        cfg, ds = planted
        oracle = planted_model(cfg, ds)
        for split in ("train", "validation"):
            assert nsse(oracle, ds, split) <= cfg.noise_std**2 * 1.1

    def test_oracle_matches_response(self, planted):
        cfg, ds = planted
        oracle = planted_model(cfg, ds)
        np.testing.assert_allclose(oracle.predict(ds.inputs), planted_response(ds.raw_inputs, cfg), rtol=1e-12)

    @pytest.mark.parametrize("name", DECOYS)
    def test_decoys_have_no_effect(self, planted, name):
        cfg, ds = planted
        X = ds.raw_inputs.copy()
        h = COLUMNS.index(name)
        X[:, h] = np.random.default_rng(0).permutation(X[:, h])
        np.testing.assert_array_equal(planted_response(X, cfg), planted_response(ds.raw_inputs, cfg))

    def test_informative_input_matters(self, planted):
        cfg, ds = planted
        X = ds.raw_inputs.copy()
        X[:, COLUMNS.index("Q_eboueur")] += 3
        assert np.abs(planted_response(X, cfg) - planted_response(ds.raw_inputs, cfg)).max() > 10

    def test_outliers_leave_clean_part_alone(self):
        clean = generate(GeneratorConfig(n_rows=1000, seed=3))
        dirty = generate(GeneratorConfig(n_rows=1000, seed=3, outlier_fraction=0.1))
        changed = clean.targets != dirty.targets
        assert 0.05 < changed.mean() < 0.15
        np.testing.assert_array_equal(clean.raw_inputs, dirty.raw_inputs)
        np.testing.assert_array_equal(clean.is_train, dirty.is_train)
        # outliers sit around outlier_scale * noise_std
        assert np.std((dirty.targets - clean.targets)[changed]) > 100

    def test_out_of_class_shift(self):
        cfg = GeneratorConfig(n_rows=500, noise_std=0, out_of_class=True)
        ds = generate(cfg)
        base = planted_response(ds.raw_inputs, dataclasses.replace(cfg, out_of_class=False))
        assert set(np.round(ds.targets - base, 9)) <= {0.0, 120.0}
        with pytest.raises(ValueError):
            planted_model(cfg, ds)

    def test_noiseless_fit(self):
        ds = generate(GeneratorConfig(n_rows=600, noise_std=0.0, seed=5))
        _, rep = train(ds, 2, seed=0, config=TrainConfig(max_iterations=300, robust=False))
        assert rep.nsse_val < 1e-2 * ds.targets.var()

    @pytest.mark.parametrize(
        "kw", [dict(n_rows=1), dict(noise_std=-1), dict(outlier_fraction=1.0), dict(irrelevant_inputs=("nope",))]
    )
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            GeneratorConfig(**kw)


class TestCsv:
    def test_round_trip(self, tmp_path):
        ds = generate(GeneratorConfig(n_rows=200, seed=9))
        p = tmp_path / "d.csv"
        save_csv(ds, p, ["seed=9"])
        back = load_csv(p)
        np.testing.assert_array_equal(back.raw_inputs, ds.raw_inputs)
        np.testing.assert_array_equal(back.targets, ds.targets)
        np.testing.assert_array_equal(back.is_train, ds.is_train)
        assert dumps_csv(back) == dumps_csv(ds)

    def test_without_split_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,delta_T\n" + "".join(f"{i},{i * i % 7},{i * 0.5}\n" for i in range(30)))
        ds = load_csv(p)
        assert ds.names == ("a", "b")
        assert ds.is_train.sum() == 20
        assert load_csv(p).is_train.tolist() == ds.is_train.tolist()

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("# only a comment\n")
        with pytest.raises(EmptyFileError):
            load_csv(p)

    def test_missing_target(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(MissingColumnError, match="delta_T"):
            load_csv(p)

    def test_bad_cell_reports_row_and_column(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("a,b,delta_T\n1,2,3\n4,oops,6\n")
        with pytest.raises(ParseError, match=r"row 3.*'b'"):
            load_csv(p)

    def test_ragged_row(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("a,b,delta_T\n1,2,3\n4,5\n")
        with pytest.raises(MissingColumnError, match="row 3"):
            load_csv(p)

    def test_bad_split_label(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("a,delta_T,split\n1,2,train\n2,3,test\n")
        with pytest.raises(ParseError, match="split"):
            load_csv(p)


def test_evaluate_keys(planted):
    cfg, ds = planted
    m = evaluate(planted_model(cfg, ds), ds)
    assert set(m) == {
        "nsse_train",
        "nsse_val",
        "error_mean_train",
        "error_std_train",
        "error_mean_val",
        "error_std_val",
    }
