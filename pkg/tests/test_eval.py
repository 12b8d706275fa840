import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tabssl.errors import ConfigError, ContractError
from tabssl.eval import (
    BASELINE,
    AccuracyCurve,
    Cell,
    FreshEncoder,
    PretrainedEncoder,
    SweepGrid,
    architecture_sweep,
    aupc,
    collapse_report,
    data_savings,
    embedding_covariance,
    gain,
    parse_grid,
    pretrain_fraction_grid,
    pretrain_size_sweep,
    proportion_sweep,
    run_seed,
    singular_spectrum,
)
from tabssl.finetune import FitConfig
from tabssl.nn import MlpSpec, Network
from tabssl.pretext import PretrainConfig, pretrain

FIT = FitConfig(max_epochs=4, patience=2)
TINY = dict(epochs=2, batch_size=32, hidden_dims=(16,), scarf_proj_hidden=16, scarf_proj_dim=8,
            byol_hidden_dim=16, byol_out_dim=8)


# grids

def test_parse_grid_inclusive():
    assert parse_grid("0.02:0.3:0.04") == (0.02, 0.06, 0.1, 0.14, 0.18, 0.22, 0.26, 0.3)
    assert len(parse_grid("0.02:0.3:0.01")) == 29
    assert parse_grid("0.1, 0.5") == (0.1, 0.5)


@pytest.mark.parametrize("text", ["", "0.3:0.1:0.1", "0.1:0.2", "0.1:0.2:0", "a,b"])
def test_parse_grid_rejects(text):
    with pytest.raises(ConfigError):
        parse_grid(text)


def test_sweep_grid_validation():
    with pytest.raises(ConfigError):
        SweepGrid(())
    with pytest.raises(ConfigError):
        SweepGrid((0.2, 0.1))
    with pytest.raises(ConfigError):
        SweepGrid((0.0, 0.1))


def test_pretrain_fraction_grid_deduplicates_shared_point():
    q = pretrain_fraction_grid()
    assert q[:5] == (0.01, 0.02, 0.03, 0.04, 0.05)
    assert q[-1] == 1.0 and q.count(0.05) == 1
    assert len(q) == 24


# AUPC and gain

GRID = parse_grid("0.02:0.3:0.01")


def test_aupc_constant_curve():
    assert aupc((GRID, np.full(len(GRID), 0.7))) == pytest.approx(0.28 * 0.7, abs=1e-12)


def test_aupc_linear_ramp():
    ps = parse_grid("0:1:0.01")
    assert aupc((ps, np.array(ps))) == pytest.approx(0.0448, abs=1e-12)


def test_aupc_single_point_in_range():
    with pytest.raises(ContractError):
        aupc(((0.01, 0.1, 0.5), (0.5, 0.5, 0.5)))


def test_aupc_missing_mean_in_range():
    curve = AccuracyCurve("m", (0.02, 0.1, 0.3), [[0.5], [None], [0.7]])
    with pytest.raises(ContractError):
        aupc(curve)


def test_gain_examples():
    base = np.linspace(0.3, 0.8, len(GRID))
    assert gain((GRID, base), (GRID, base)) == 0.0
    assert gain((GRID, base + 0.1), (GRID, base)) == pytest.approx(0.028, abs=1e-12)


def test_gain_grid_mismatch():
    with pytest.raises(ContractError):
        gain(((0.02, 0.3), (1, 1)), ((0.02, 0.2, 0.3), (1, 1, 1)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=29, max_size=29),
       st.lists(st.floats(0, 1), min_size=29, max_size=29))
def test_gain_antisymmetry(a, b):
    assert gain((GRID, a), (GRID, b)) == -gain((GRID, b), (GRID, a))


def test_curve_means_skip_missing():
    c = AccuracyCurve("m", (0.1, 0.2), [[0.5, None, 0.7], [None, None]])
    assert c.means[0] == pytest.approx(0.6)
    assert np.isnan(c.means[1])
    assert c.missing == 3
    assert c.to_json()["mean"] == [pytest.approx(0.6), None]


def test_curve_rejects_bad_accuracy():
    with pytest.raises(ContractError):
        AccuracyCurve("m", (0.1,), [[1.5]])


def test_data_savings():
    base = AccuracyCurve.from_means(BASELINE, (0.1, 0.2, 0.4), (0.5, 0.6, 0.7))
    better = AccuracyCurve.from_means("m", (0.1, 0.2, 0.4), (0.6, 0.7, 0.8))
    worse = AccuracyCurve.from_means("w", (0.1, 0.2, 0.4), (0.4, 0.5, 0.6))
    s = data_savings(better, base)
    assert s["first_p"] == 0.2 and s["saving"] == pytest.approx(0.5)
    assert data_savings(worse, base)["saving"] is None


# collapse spectrum

def test_covariance_examples():
    assert np.array_equal(embedding_covariance(np.ones((4, 3))), np.zeros((3, 3)))
    assert np.array_equal(embedding_covariance([[1.0, 0.0], [-1.0, 0.0]]), [[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ContractError):
        embedding_covariance(np.ones((1, 3)))


def test_spectrum_identity_and_rank_one():
    r = singular_spectrum(np.eye(3))
    assert r.singular_values.tolist() == [1.0, 1.0, 1.0] and r.collapsed_count == 0
    r = singular_spectrum([[1.0, 0.0], [0.0, 0.0]])
    assert r.singular_values.tolist() == [1.0, 0.0] and r.collapsed_count == 1
    assert r.rows() == [(1, 1.0), (2, 0.0)]
    assert r.log_spectrum[1] == -np.inf


def test_spectrum_rejects_asymmetric():
    with pytest.raises(ContractError):
        singular_spectrum([[1.0, 0.1], [0.0, 1.0]])


def test_rank_limited_embeddings():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(2000, 5)) @ rng.normal(size=(5, 32))
    assert collapse_report(z).collapsed_count == 27


def test_fresh_encoder_is_near_full_rank():
    enc = Network.create(MlpSpec(32, (64, 64)), 0)
    enc.forward(np.random.default_rng(1).normal(size=(2000, 32)))  # settle running stats
    z = enc(np.random.default_rng(2).normal(size=(2000, 32)))
    r = collapse_report(z)
    assert r.collapsed_count <= 0.05 * r.dim


# seeds and cells

def test_run_seed_is_stable_and_distinct():
    assert run_seed(0, "scarf", 0.1, 2) == run_seed(0, "scarf", 0.1, 2)
    assert run_seed(0, "scarf", 0.1, 2) != run_seed(0, "scarf", 0.1, 3)
    assert run_seed(0, "scarf", 0.1, 2) != run_seed(1, "scarf", 0.1, 2)
    assert 0 <= run_seed(5, "x") < 2**63


def test_cell_key_depends_on_encoder():
    assert Cell("scarf", "unfrozen", 0.1, 0).key(0) != Cell("scarf", "unfrozen", 0.1, 0, "scarf@0.5").key(0)


# sweeps

class Broken:
    """Encoder factory that always fails."""

    def __call__(self, seed):
        raise RuntimeError("no encoder")


def _factories(pre, methods=("scarf",)):
    out = {}
    for m in methods:
        enc, _ = pretrain(m, pre, PretrainConfig(method=m, **TINY))
        out[m] = PretrainedEncoder(enc)
    out[BASELINE] = FreshEncoder(MlpSpec(pre.n_features, (16,)))
    return out


def test_proportion_sweep_is_deterministic_and_paired(small_corpus):
    pre, ft, test = small_corpus
    grid = SweepGrid((0.3, 1.0), 2)
    facs = _factories(pre)
    a = proportion_sweep(facs, ft, test, grid, fit_cfg=FIT)
    b = proportion_sweep(facs, ft, test, grid, fit_cfg=FIT)
    assert a.results_csv() == b.results_csv()
    assert a.complete and len(a.results) == 8
    assert set(a.curves) == {"scarf", BASELINE}
    assert "wall_ms" in a.results_csv().splitlines()[0]
    assert a.results_csv().splitlines()[1].endswith(",")  # wall time left blank by default
    g = a.gains(0.3, 1.0)
    assert set(g) == {"scarf"}


def test_baseline_seeds_differ_at_full_labels(small_corpus):
    pre, ft, test = small_corpus
    res = proportion_sweep({BASELINE: FreshEncoder(MlpSpec(pre.n_features, (16,)))}, ft, test,
                           SweepGrid((1.0,), 5), fit_cfg=FIT)
    seeds = {r.seed for r in res.results}
    assert len(seeds) == 5 and res.curves[BASELINE].missing == 0


def test_failed_cell_is_missing(small_corpus):
    pre, ft, test = small_corpus
    facs = {"broken": Broken(), BASELINE: FreshEncoder(MlpSpec(pre.n_features, (16,)))}
    res = proportion_sweep(facs, ft, test, SweepGrid((0.5,), 2), fit_cfg=FIT)
    assert not res.complete
    assert res.curves["broken"].accuracies == [[None, None]]
    bad = [r for r in res.results if r.method == "broken"]
    assert all(r.accuracy is None and "no encoder" in r.error for r in bad)
    row = next(line for line in res.results_csv().splitlines() if line.startswith("broken"))
    assert row.split(",")[4] == ""


def test_resume_and_limit(small_corpus):
    pre, ft, test = small_corpus
    grid = SweepGrid((0.3, 1.0), 2)
    facs = _factories(pre)
    full = proportion_sweep(facs, ft, test, grid, fit_cfg=FIT)
    store = {}
    part = proportion_sweep(facs, ft, test, grid, fit_cfg=FIT, limit=3,
                            on_result=lambda c, r: store.__setitem__(c.key(0), r))
    assert part.pending == 5 and part.ran == 3 and len(store) == 3
    rest = proportion_sweep(facs, ft, test, grid, fit_cfg=FIT, done=store)
    assert rest.ran == 5
    assert rest.results_csv() == full.results_csv()


def test_pretrain_size_sweep(small_corpus, tmp_path):
    pre, ft, test = small_corpus
    res = pretrain_size_sweep("vime", pre, ft, test, (0.5, 1.0), proportion=0.5, seeds=2,
                              pretrain_cfg=PretrainConfig(method="vime", **TINY), fit_cfg=FIT,
                              checkpoint_dir=tmp_path)
    assert res.curve.proportions == (0.5, 1.0)
    assert len(res.baseline) == 2 and None not in res.baseline
    assert sorted(p.name for p in tmp_path.iterdir()) == ["vime_q0.5.tssl", "vime_q1.0.tssl"]
    header, *rows = res.results_csv().splitlines()
    assert header.startswith("pretrain_fraction,method")
    assert len(rows) == 6


def test_architecture_sweep(small_corpus):
    pre, ft, test = small_corpus
    res = architecture_sweep([1, 2], [8], ["scarf"], pre, ft, test, SweepGrid((0.5, 1.0), 1),
                             pretrain_cfg=PretrainConfig(**{**TINY, "scarf_proj_hidden": 32}),
                             fit_cfg=FIT, gain_range=(0.5, 1.0))
    assert [(d, w, m) for d, w, m, _ in res.gains] == [(1, 8, "scarf"), (2, 8, "scarf")]
    assert all(g is not None for *_, g in res.gains)
    assert set(res.spectra) == {(1, 8, "scarf"), (2, 8, "scarf")}
    assert res.spectra[(2, 8, "scarf")].dim == 8
    assert res.results_csv().splitlines()[0].startswith("depth,width,method")
    assert res.spectrum_csv().count("\n") == 1 + 16
