import numpy as np
import pytest
from dataclasses import replace

from disharmony import pipeline as pl
from disharmony.data import DataError, Dataset
from disharmony.harness import kfold_split, poisoned
from disharmony.losses import cross_entropy
from disharmony.model import BASE, MAIN, AuxTaskSpec, ModelConfig, aux_segment, forward_batch
from disharmony.objective import HeadTerm, Objective
from disharmony.optimize import TrainConfig, fit
from disharmony.synthsites import SiteConfig, Subgroup, make_site

MODEL = ModelConfig(5, (8,), (6, 4))
FAST = TrainConfig(lr=1e-3, epochs=4, cycles=2, seed=1)
FULL = TrainConfig(seed=1)  # default schedule; ends near lr_min, needed for the proximal limits
SEX = AuxTaskSpec("sex")
AGE = AuxTaskSpec("age", "regression")


@pytest.fixture(scope="module")
def pre(small_site):
    return pl.pretrain(small_site, MODEL, [SEX], FAST)


def _dist(a, b, seg):
    return float(np.linalg.norm(a.segment(seg) - b.segment(seg)))


def test_pretrain_rejects_bad_inputs(small_site):
    with pytest.raises(ValueError):
        pl.pretrain(small_site, MODEL, [], FAST)
    with pytest.raises(DataError):
        pl.pretrain(small_site, MODEL, [AuxTaskSpec("race")], FAST)
    with pytest.raises(DataError):
        pl.pretrain(small_site.without_primary(), MODEL, [SEX], FAST)


def test_pretrain_deterministic(small_site, pre):
    again = pl.pretrain(small_site, MODEL, [SEX], FAST)
    assert again.values.tobytes() == pre.values.tobytes()


def test_pretrain_with_zero_beta_matches_erm(small_site, backend):
    p = pl.pretrain(small_site, MODEL, [SEX.with_beta(0.0)], FAST)
    erm = pl.train_erm(small_site, MODEL, FAST)
    for seg in (BASE, MAIN):
        assert p.segment(seg).tobytes() == erm.segment(seg).tobytes()


def test_pretrain_fits_separable_data():
    from scipy.optimize import linprog

    data = make_site(SiteConfig("sep", n=200, dim=5, class_sep=12.0, flip_prob=0.0), 2)
    # linear separability: find (w, b) with y_i (w.x_i + b) >= 1
    s = np.where(data.primary == 1, 1.0, -1.0)
    A = -s[:, None] * np.hstack([data.features, np.ones((len(data), 1))])
    lp = linprog(np.zeros(6), A_ub=A, b_ub=-np.ones(len(data)), bounds=[(None, None)] * 6)
    assert lp.status == 0
    p = pl.pretrain(data, MODEL, [SEX, AGE], replace(FAST, epochs=20))
    assert pl.evaluate(p, MODEL, data) >= 0.99


def test_finetune_proximal_limit_and_reduction(shifted_site, pre):
    tight = pl.finetune_subgroup(pre, shifted_site, MODEL, pl.AdaptConfig(alpha=1e6), FULL)
    assert float(np.linalg.norm(tight.values - pre.values)) <= 1e-3
    free = pl.finetune_subgroup(pre, shifted_site, MODEL, pl.AdaptConfig(alpha=0.0), FAST)
    erm = pl.train_erm(shifted_site, MODEL, FAST, init=pre, weight_decay=0.1)
    assert free.values.tobytes() == erm.values.tobytes()
    with pytest.raises(DataError):
        pl.finetune_subgroup(pre, shifted_site.without_primary(), MODEL, pl.AdaptConfig(), FAST)


def test_proximal_distance_monotone_in_alpha(shifted_site, pre):
    d = [float(np.linalg.norm(pl.finetune_subgroup(pre, shifted_site, MODEL, pl.AdaptConfig(alpha=a),
                                                   FULL).values - pre.values))
         for a in (1e3, 1e4, 1e5)]
    assert d[0] >= d[1] >= d[2]


def test_adapt_features_contract(shifted_site, pre):
    adapt = pl.AdaptConfig.inter()
    out = pl.adapt_features(pre, shifted_site.without_primary(), MODEL, [SEX], adapt, FAST)
    assert out.segment(MAIN).tobytes() == pre.segment(MAIN).tobytes()
    assert not np.array_equal(out.segment(BASE), pre.segment(BASE))
    assert not np.array_equal(out.segment(aux_segment("sex")), pre.segment(aux_segment("sex")))
    # label blindness: deleted, poisoned and clean primary columns all give the same weights
    for variant in (shifted_site, poisoned(shifted_site)):
        other = pl.adapt_features(pre, variant, MODEL, [SEX], adapt, FAST)
        assert other.values.tobytes() == out.values.tobytes()
    tight = pl.adapt_features(pre, shifted_site, MODEL, [SEX], pl.AdaptConfig.inter(1e6), FULL)
    assert _dist(tight, pre, BASE) <= 1e-3


def test_adapt_features_errors(shifted_site, pre):
    with pytest.raises(ValueError):
        pl.adapt_features(pre, shifted_site, MODEL, [SEX],
                          pl.AdaptConfig.inter(frozen_segments=(BASE,)), FAST)
    with pytest.raises(DataError):
        pl.adapt_features(pre, Dataset(shifted_site.features, None, {}), MODEL, [SEX],
                          pl.AdaptConfig.inter(), FAST)
    with pytest.raises(ValueError):
        pl.AdaptConfig(penalized_segments=(BASE,), frozen_segments=(BASE,))


def test_adapt_primary_contract(small_site, shifted_site, pre):
    adapt = pl.AdaptConfig.inter()
    base = pl.adapt_features(pre, shifted_site, MODEL, [SEX], adapt, FAST)
    main = pl.adapt_primary(pre, base, small_site, MODEL, adapt, FAST)
    assert main.segment(BASE).tobytes() == base.segment(BASE).tobytes()
    assert not np.array_equal(main.segment(MAIN), base.segment(MAIN))
    tight = pl.adapt_primary(pre, pre, small_site, MODEL, pl.AdaptConfig.inter(1e6), FULL)
    assert _dist(tight, pre, MAIN) <= 1e-3
    other = pl.pretrain(small_site, ModelConfig(5, (4,), (6, 4)), [SEX], FAST)
    with pytest.raises(ValueError):
        pl.adapt_primary(pre, other, small_site, MODEL, adapt, FAST)


def test_zero_alpha_steps_reduce_to_plain_training(small_site, shifted_site, pre):
    zero = pl.AdaptConfig.inter(0.0)
    base = pl.adapt_features(pre, shifted_site, MODEL, [SEX], zero, FAST)
    obj = Objective(MODEL, pre, [HeadTerm("sex", 1.0)])
    plain, _ = fit(pre.copy(), shifted_site, obj.builder(FAST), (BASE, aux_segment("sex")), FAST)
    assert base.values.tobytes() == plain.values.tobytes()

    main = pl.adapt_primary(pre, base, small_site, MODEL, zero, FAST)
    obj = Objective(MODEL, base, [HeadTerm("primary", 1.0)])
    plain, _ = fit(base.copy(), small_site, obj.builder(FAST), (MAIN,), FAST)
    assert main.values.tobytes() == plain.values.tobytes()


def _aux_loss(params, model, data):
    out = forward_batch(params, model, data.features, "sex")
    return np.mean([cross_entropy(o, int(y)) for o, y in zip(out, data.aux["sex"])])


def test_unshifted_target_adaptation_is_harmless():
    source = make_site(SiteConfig("one", n=300), 11)
    target = make_site(SiteConfig("two", n=300), 11)
    model, train = ModelConfig(20), TrainConfig(seed=3)
    pre = pl.pretrain(source, model, [SEX], train)
    base = pl.adapt_features(pre, target, model, [SEX], pl.AdaptConfig.inter(), train)
    assert _aux_loss(base, model, target) <= _aux_loss(pre, model, target)
    assert abs(pl.evaluate(base, model, target) - pl.evaluate(pre, model, target)) < 0.02


def test_finetuned_subgroup_beats_scratch():
    cfg = SiteConfig("study", n=400, dim=5,
                     subgroups=(Subgroup("main", 0.9, 0.0), Subgroup("minor", 0.1, 3.0)))
    study = make_site(cfg, 4)
    model = replace(MODEL, input_dim=5)
    train = TrainConfig(lr=1e-3, epochs=20, cycles=1)
    minor = np.flatnonzero(study.subgroup == "minor")
    assert minor.size == 40
    sub = study.subset(minor)
    base = pl.train_erm(study.subset(np.flatnonzero(study.subgroup == "main")), model, train)
    tuned, scratch = [], []
    for f, (tr, va) in enumerate(kfold_split(sub, 5, 0)):
        t = replace(train, seed=f)
        ft = pl.finetune_subgroup(base, sub.subset(tr), model, pl.AdaptConfig(), t)
        sc = pl.train_erm(sub.subset(tr), model, t)
        tuned.append(pl.evaluate(ft, model, sub.subset(va)))
        scratch.append(pl.evaluate(sc, model, sub.subset(va)))
    assert np.mean(tuned) >= np.mean(scratch)


def test_run_pipeline_provenance(small_site, shifted_site):
    art = pl.run_pipeline(small_site, shifted_site.without_primary(), MODEL, [SEX],
                          pl.AdaptConfig.inter(), FAST, seeds=(4, 5, 6))
    again = pl.run_pipeline(small_site, shifted_site.without_primary(), MODEL, [SEX],
                            pl.AdaptConfig.inter(), FAST, seeds=(4, 5, 6))
    assert art.adapted_main.values.tobytes() == again.adapted_main.values.tobytes()
    assert art.provenance == again.provenance
    assert [p["train"]["seed"] for p in art.provenance["phases"]] == [4, 5, 6]
    assert art.adapted_base.layout == art.pretrained.layout


def test_infer_dimension_check(pre):
    with pytest.raises(ValueError):
        pl.infer(pre, MODEL, np.zeros(4))
