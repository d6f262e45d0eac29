import math

import numpy as np
import pytest

from disharmony import data as io
from disharmony.data import DataError, Dataset
from disharmony.kernel_dr import KernelSpec
from disharmony.synthsites import (SiteConfig, Subgroup, default_consortium, make_consortium,
                                   make_site, mmd)


def test_deterministic():
    cfg = SiteConfig("a", n=50, dim=4, shift=1.0)
    assert make_site(cfg, 3).equals(make_site(cfg, 3))
    assert not np.array_equal(make_site(cfg, 3).features, make_site(cfg, 4).features)


def test_unshifted_sites_share_distribution():
    n, dim, sd = 2000, 6, 1.0
    a = make_site(SiteConfig("a", n=n, dim=dim), 0)
    b = make_site(SiteConfig("b", n=n, dim=dim), 0)
    gap = np.linalg.norm(a.features.mean(0) - b.features.mean(0))
    assert gap <= 3 * (sd / math.sqrt(n)) * math.sqrt(dim)


def test_wide_separation_centroid_oracle():
    d = make_site(SiteConfig("s", n=400, dim=5, class_sep=10.0, noise_sd=0.1), 1)
    c0, c1 = (d.features[d.primary == k].mean(0) for k in (0, 1))
    pred = (np.linalg.norm(d.features - c1, axis=1) < np.linalg.norm(d.features - c0, axis=1))
    assert np.mean(pred == d.primary) >= 0.99


def test_no_flips_makes_sex_a_function_of_latent_sign():
    cfg = SiteConfig("s", n=300, dim=4, flip_prob=0.0, rotation_seed=5)
    d = make_site(cfg, 2)
    from disharmony.synthsites import orthogonal
    latent = d.features @ orthogonal(4, 5)
    assert np.array_equal(d.aux["sex"], (latent[:, 0] > 0).astype(int))


def test_age_tracks_primary_label():
    d = make_site(SiteConfig("s", n=600, age_slope=1.0, age_noise_sd=0.3), 0)
    assert np.corrcoef(d.aux["age"], d.primary)[0, 1] > 0.5


def test_subgroup_fractions():
    subs = (Subgroup("g0", 0.6), Subgroup("g1", 0.25, 1.0), Subgroup("g2", 0.15, 2.0))
    d = make_site(SiteConfig("s", n=101, subgroups=subs), 0)
    for s in subs:
        assert abs(np.sum(d.subgroup == s.tag) - s.fraction * 101) <= 1


def test_config_errors():
    with pytest.raises(ValueError):
        SiteConfig("s", subgroups=(Subgroup("a", 0.5), Subgroup("b", 0.4)))
    with pytest.raises(ValueError):
        SiteConfig("s", dim=3, shift=(1.0, 2.0))
    with pytest.raises(ValueError):
        SiteConfig("s", flip_prob=0.5)


def test_consortium_seed_isolation():
    a, b = SiteConfig("A", n=40), SiteConfig("B", n=40, shift=2.0)
    two = make_consortium([a, b], 9)
    three = make_consortium([a, b, SiteConfig("C", n=40)], 9)
    assert two[0].equals(three[0]) and two[1].equals(three[1])
    assert make_consortium([], 9) == []
    with pytest.raises(ValueError):
        make_consortium([a, a], 9)


def test_default_consortium_shape():
    sites = default_consortium()
    assert [s.shift for s in sites] == [0.0, 2.0, 4.0]
    assert all(s.n == 600 and s.dim == 20 for s in sites)


def test_mmd_identical_samples_is_zero(backend):
    X = np.random.default_rng(0).standard_normal((50, 3))
    assert mmd(X, X) <= 1e-9


def test_mmd_far_clusters(backend):
    rng = np.random.default_rng(1)
    X = 0.01 * rng.standard_normal((40, 2))
    spec = KernelSpec("rbf", 1.0)
    vals = [mmd(X, 0.01 * rng.standard_normal((40, 2)) + s, spec) for s in (2.0, 4.0, 8.0)]
    assert vals == sorted(vals)
    assert vals[-1] == pytest.approx(math.sqrt(2.0), rel=1e-3)
    assert vals[-1] <= math.sqrt(2.0)


def test_mmd_matches_brute_force_u_statistic():
    rng = np.random.default_rng(2)
    X, Y = rng.standard_normal((8, 2)), rng.standard_normal((6, 2)) + 0.5

    def k(a, b):
        return math.exp(-0.5 * float(np.sum((a - b) ** 2)))

    xx = sum(k(X[i], X[j]) for i in range(8) for j in range(8) if i != j) / (8 * 7)
    yy = sum(k(Y[i], Y[j]) for i in range(6) for j in range(6) if i != j) / (6 * 5)
    xy = sum(k(x, y) for x in X for y in Y) / 48
    assert mmd(X, Y) == pytest.approx(math.sqrt(max(xx + yy - 2 * xy, 0.0)), rel=1e-12)


def test_mmd_same_distribution_small():
    a = make_site(SiteConfig("a", n=500), 0).features
    b = make_site(SiteConfig("b", n=500), 0).features
    assert mmd(a, b) <= 0.1


def test_mmd_needs_two_samples():
    with pytest.raises(DataError):
        mmd(np.zeros((1, 2)), np.zeros((3, 2)))


def test_mmd_shift_monotone():
    base = make_site(SiteConfig("s", n=300, dim=10), 0).features
    vals = [mmd(base, make_site(SiteConfig("s", n=300, dim=10, shift=s), 1).features)
            for s in (0.0, 1.0, 2.0, 4.0)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    far = mmd(base, make_site(SiteConfig("t", n=300, dim=10, shift=5.0), 1).features)
    near = mmd(base, make_site(SiteConfig("t", n=300, dim=10), 1).features)
    assert far > near


def _sample():
    subs = (Subgroup("x", 0.5), Subgroup("y", 0.5, 1.0))
    return make_site(SiteConfig("rt", n=30, dim=3, subgroups=subs), 4)


def test_binary_round_trip_exact(tmp_path):
    d = _sample()
    io.save_binary(d, tmp_path / "d.npz")
    assert io.load(tmp_path / "d.npz").equals(d)


def test_csv_round_trip(tmp_path):
    d = _sample()
    io.write_csv(d, tmp_path / "d.csv")
    back = io.load(tmp_path / "d.csv")
    assert np.allclose(back.features, d.features, rtol=1e-12, atol=0)
    assert np.array_equal(back.primary, d.primary)
    assert np.array_equal(back.aux["sex"], d.aux["sex"])
    assert np.array_equal(back.subgroup, d.subgroup)
    assert back.site_id == "rt"


def test_csv_without_primary(tmp_path):
    d = _sample().without_primary()
    io.write_csv(d, tmp_path / "d.csv")
    assert io.read_csv(tmp_path / "d.csv").primary is None


def test_csv_rejects_garbage(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        io.read_csv(p)


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(DataError):
        Dataset(np.full((2, 2), np.nan), None)
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), None).require_primary()
