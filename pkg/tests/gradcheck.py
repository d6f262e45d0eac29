"""Randomized finite-difference checks of the training objectives."""
import numpy as np

from disharmony import autodiff as ad
from disharmony.losses import grad as tape_grad
from disharmony.model import BASE, MAIN, AuxTaskSpec, ModelConfig, dropout_masks, init_params
from disharmony.objective import HeadTerm, Objective, Penalty

KINDS = ("step_1", "step_2", "step_3", "fine_tuning")


def random_problem(seed: int):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    ext = tuple(int(w) for w in rng.integers(2, 7, size=rng.integers(0, 3)))
    head = tuple(int(w) for w in rng.integers(2, 6, size=rng.integers(0, 3)))
    C = int(rng.integers(2, 4))
    cfg = ModelConfig(d, ext, head, dropout_rate=float(rng.choice([0.0, 0.5])), num_primary_classes=C)
    aux = [AuxTaskSpec("sex"), AuxTaskSpec("age", "regression", delta=float(rng.uniform(0.3, 2.0)))]
    aux = aux[: int(rng.integers(1, 3))]
    params = init_params(cfg, aux, seed)
    params = params.with_values(params.values + 0.1 * rng.standard_normal(params.values.size))
    anchor = params.values + 0.3 * rng.standard_normal(params.values.size)
    kind = KINDS[seed % len(KINDS)]
    alpha, lam = float(rng.uniform(0.01, 1.0)), float(rng.uniform(0.0, 0.2))
    aux_terms = [HeadTerm(t.task_id, t.beta / len(aux), t.loss, t.delta) for t in aux]
    segs = tuple(params.segments)
    if kind == "step_1":
        heads, pens = [HeadTerm("primary", 1.0)] + aux_terms, [Penalty(segs, lam)]
    elif kind == "step_2":
        heads = [HeadTerm(t.task_id, 1.0 / len(aux), t.loss, t.delta) for t in aux]
        pens = [Penalty((BASE,), alpha, anchor)]
    elif kind == "step_3":
        heads, pens = [HeadTerm("primary", 1.0)], [Penalty((MAIN,), alpha, anchor)]
    else:
        heads, pens = [HeadTerm("primary", 1.0)], [Penalty(segs, lam), Penalty(segs, alpha, anchor)]
    obj = Objective(cfg, params, heads, pens)

    B = int(rng.integers(1, 7))
    X = rng.standard_normal((B, d)) * 1.5
    T = []
    for h in heads:
        if h.head == "primary":
            T.append(rng.integers(0, C, B))
        elif h.loss == "cross_entropy":
            T.append(rng.integers(0, 2, B))
        else:
            T.append(rng.normal(0.0, 2.0, B))
    T = np.stack(T).astype(np.float64)
    masks = dropout_masks(cfg, len(heads), B, rng)
    return obj, params, X, T, masks, kind


def fd_check(seed: int, h: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-7):
    """Returns ``(ok, worst relative error, kind)`` for one random problem."""
    obj, params, X, T, masks, kind = random_problem(seed)
    w = params.values
    _, g = obj.value_and_grad(w, X, T, masks)
    num = np.empty_like(w)
    for i in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        num[i] = (obj.value_and_grad(wp, X, T, masks)[0] - obj.value_and_grad(wm, X, T, masks)[0]) / (2 * h)
    err = np.abs(g - num)
    scale = np.maximum(np.abs(g), np.abs(num))
    ok = bool(np.all(err <= np.maximum(rtol * scale, atol)))
    rel = float(np.max(err / np.maximum(scale, atol)))
    return ok, rel, kind


def tape_vs_fused(seed: int) -> float:
    obj, params, X, T, masks, _ = random_problem(seed)
    _, g = obj.value_and_grad(params.values, X, T, masks)
    gt = tape_grad(lambda w: obj.tape_loss(w, X, T, masks), params, params.segments)
    return float(np.max(np.abs(g - gt)))


def tape_loss_value(seed: int):
    obj, params, X, T, masks, _ = random_problem(seed)
    fused = obj.value_and_grad(params.values, X, T, masks)[0]
    tape = float(obj.tape_loss(ad.Var(params.values), X, T, masks).value)
    return fused, tape
