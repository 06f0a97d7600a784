"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (collected again in the terminal summary) and
then asserts at the stated tolerance.
"""

import filecmp
import json
import time

import numpy as np
import pytest

from relugp import experiments as ex
from relugp.baseline_gp import BnoPosterior, bno_from_net
from relugp.cli import main
from relugp.kernels import LayeredDscsParams, cov_finite, cubic_spline_1d, dscs_multi
from relugp.laplace import PredictiveGaussian, fit_laplace, ggn_precision, linearized_predictive, probit_predict
from relugp.network import ReluNet, forward, init_net, jacobian, loss_and_grad, softmax
from relugp.rgpr import RgprModel, confidence, rgpr_predictive
from relugp.tuning import TuneConfig, tune_sigmas, tuning_outliers

pytestmark = pytest.mark.slow


def unit_directions(rng, n, dims):
    d = rng.standard_normal((n, dims))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def loglog_slopes(alphas, values):
    """Least-squares slope of log(values) against log(alphas), per column."""
    A = np.log(alphas)
    return np.polyfit(A, np.log(values), 1)[0]


def test_c01_kernel_convergence(record_criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    pairs = rng.uniform(0.0, 9.5, size=(20, 2))
    exact = cubic_spline_1d(pairs[:, 0], pairs[:, 1])
    errs = [np.max(np.abs(cov_finite(pairs[:, 0], pairs[:, 1], d, 0.0, 10.0) - exact))
            for d in (10**2, 10**3, 10**4, 10**5)]
    elapsed = time.perf_counter() - start
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    ok = errs[-1] <= 5e-3 and decreasing and elapsed < 5.0
    record_criterion(1, ok, f"max err by D {['%.2e' % e for e in errs]}, {elapsed:.2f}s")
    assert ok


def test_c02_cubic_homogeneity(record_criterion):
    rng = np.random.default_rng(2)
    X = rng.standard_normal((50, 3))
    base = dscs_multi(X, X)
    worst = max(np.max(np.abs(dscs_multi(a * X, a * X) / (a**3 * base) - 1.0)) for a in (1.0, 10.0, 100.0))
    ok = worst <= 1e-10
    record_criterion(2, ok, f"max relative deviation {worst:.2e}")
    assert ok


def test_c03_prediction_invariance(record_criterion, moons_model, moons_fit):
    net, post, splits = moons_fit
    X = splits.test.inputs
    assert len(X) == 1000
    aug = rgpr_predictive(moons_model, X)
    base = linearized_predictive(net, post, X)
    same_mean = np.array_equal(aug.mean, base.mean)
    arg_map = np.argmax(forward(net, X).logits, axis=1)
    arg_rgpr = np.argmax(probit_predict(aug), axis=1)
    arg_lll = np.argmax(probit_predict(base), axis=1)
    n_diff = int(np.sum(arg_rgpr != arg_map) + np.sum(arg_rgpr != arg_lll))
    ok = same_mean and n_diff == 0
    record_criterion(3, ok, f"means bit-identical={same_mean}, argmax mismatches={n_diff}/1000")
    assert ok


def test_c04_variance_growth(record_criterion, moons_fit):
    net, post, _ = moons_fit
    model = RgprModel(net, post, LayeredDscsParams.input_only(net.n_representations, 1.0))
    dirs = unit_directions(np.random.default_rng(4), 10, 2)
    alphas = np.array([1e2, 1e3, 1e4])
    slopes = []
    for d in dirs:
        v = np.array([rgpr_predictive(model, a * d).variances() for a in alphas])
        slopes.extend(loglog_slopes(alphas, v))
    slopes = np.array(slopes)
    worst = np.max(np.abs(slopes - 3.0))
    ok = worst <= 0.05
    record_criterion(4, ok, f"slopes in [{slopes.min():.4f}, {slopes.max():.4f}] over 10 directions")
    assert ok


def _c05_models():
    """Trained and freshly initialized nets for C = 2, 3, 10 with last-layer Laplace."""
    for C in (2, 3, 10):
        cfg = ex.resolve_config({"dataset": "two_moons" if C == 2 else "blobs", "n_classes": C})
        net, post, splits = ex.train_and_fit(cfg)
        yield C, "trained", net, post
        fresh = init_net(ex.layer_dims(cfg, splits), ex.stream_rng(0, f"fresh-{C}"))
        yield C, "random-init", fresh, fit_laplace(fresh, splits.train, cfg["laplace_prior_precision"])


def test_c05_uniform_asymptotic_confidence(record_criterion):
    X = 1e6 * unit_directions(np.random.default_rng(5), 100, 2)
    worst, parts = 0.0, []
    for C, kind, net, post in _c05_models():
        model = RgprModel(net, post, LayeredDscsParams.uniform(net.n_representations, 1.0))
        dev = float(np.max(np.abs(probit_predict(rgpr_predictive(model, X)) - 1.0 / C)))
        worst = max(worst, dev)
        parts.append(f"C={C} {kind} {dev:.1e}")
    ok = worst <= 1e-3
    record_criterion(5, ok, "max |p - 1/C| at alpha=1e6: " + ", ".join(parts))
    assert ok


def test_c06_binary_decay(record_criterion, moons_model, moons_fit):
    _, _, splits = moons_fit
    X = splits.test.inputs[:100]
    alphas = (1e4, 1e6, 1e8)
    scaled = np.array([(confidence(probit_predict(rgpr_predictive(moons_model, a * X))) - 0.5) * np.sqrt(a)
                       for a in alphas])
    ratios = scaled[1:] / scaled[:-1]
    ok = bool(np.all((ratios >= 0.8) & (ratios <= 1.25)))
    record_criterion(6, ok, f"(conf - 1/2) sqrt(alpha) ratios in [{ratios.min():.4f}, {ratios.max():.4f}]")
    assert ok


def test_c07_far_outlier_detection(record_criterion):
    start = time.perf_counter()
    cfg = ex.resolve_config({"dataset": "two_moons", "seed": 0})
    net, post, splits = ex.train_and_fit(cfg)
    model = RgprModel(net, post, ex.kernel_from(cfg, net.n_representations))
    assert cfg["sigma2"] == 1.0 and cfg["n_outliers"] == 2000 and cfg["outlier_alpha"] == 2000.0
    rows = dict(ex.eval_ood(cfg, model, splits))
    elapsed = time.perf_counter() - start
    lll, rgpr = rows["lll"], rows["lll-rgpr"]
    drop = lll.mmc_in - rgpr.mmc_in
    ok = rgpr.aur >= 0.99 and rgpr.mmc_out <= 0.6 and drop <= 0.05 and elapsed < 120
    record_criterion(7, ok, f"RGPR AUR {100 * rgpr.aur:.2f} (LLL {100 * lll.aur:.2f}), "
                            f"MMC-out {rgpr.mmc_out:.3f}, MMC-in drop {drop:.4f}, {elapsed:.1f}s")
    assert ok


def test_c08_regression_error_bars(record_criterion, regression_cfg, regression_fit):
    net, post, splits = regression_fit
    model = RgprModel(net, post, ex.kernel_from(regression_cfg, net.n_representations))
    rows = {m: (e_in, e_out, rmse) for m, e_in, e_out, rmse in ex.regression_eval(regression_cfg, model, splits)}
    e_in, e_out, rmse_rgpr = rows["lll-rgpr"]
    rmse_lll = rows["lll"][2]
    ratio = e_out / e_in
    ok = ratio >= 100 and abs(rmse_rgpr - rmse_lll) <= 1e-8
    record_criterion(8, ok, f"error-bar ratio {ratio:.1f}, |RMSE diff| {abs(rmse_rgpr - rmse_lll):.1e}")
    assert ok


def test_c09_bno_baseline(record_criterion, regression_cfg, regression_fit):
    net, _, splits = regression_fit
    lam, noise = regression_cfg["laplace_prior_precision"], regression_cfg["bno_noise_var"]
    Xs = splits.test.inputs[:50]

    tiny = BnoPosterior(bno_from_net(net, splits.train, 1e-12, noise, lam))
    mean, var = tiny.predict(Xs)
    h = forward(net, splits.train.inputs).activations[-1]
    G = np.hstack([h, np.ones((len(h), 1))])
    S = np.linalg.inv(lam * np.eye(G.shape[1]) + G.T @ G / noise)
    mu = S @ G.T @ splits.train.targets / noise
    hs = forward(net, Xs).activations[-1]
    Gs = np.hstack([hs, np.ones((len(hs), 1))])
    err = max(np.max(np.abs(mean - Gs @ mu)), np.max(np.abs(var - np.einsum("ip,pq,iq->i", Gs, S, Gs))))

    full = BnoPosterior(bno_from_net(net, splits.train, regression_cfg["bno_kernel_sigma2"], noise, lam))
    alphas = np.array([1e2, 1e3, 1e4])
    dirs = np.array([[1.0], [-1.0]])  # unit directions, so alpha is the distance from the data
    v = np.array([full.predict(a * dirs)[1] for a in alphas])
    slopes = loglog_slopes(alphas, v)
    worst = np.max(np.abs(slopes - 3.0))
    ok = err <= 1e-8 and worst <= 0.1
    record_criterion(9, ok, f"BLR oracle err {err:.1e}, far-field slopes in [{slopes.min():.3f}, {slopes.max():.3f}]")
    assert ok


def test_c10_probit_and_laplace_oracles(record_criterion):
    rng = np.random.default_rng(10)
    # GGN equals the exact Hessian for a linear softmax model
    X = rng.standard_normal((25, 2))
    y = rng.integers(0, 2, 25)
    net = ReluNet([rng.standard_normal((2, 2))], [rng.standard_normal(2)])
    lam, h = 0.1, 1e-5
    theta = net.get_params()
    assert theta.size <= 10

    def grad(t):
        return loss_and_grad(net.with_params(t), X, y, "classification")[1] + lam * t

    H = np.column_stack([(grad(theta + h * e) - grad(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])
    ggn_err = np.max(np.abs(ggn_precision(net, X, "classification", lam, "all") - 0.5 * (H + H.T)))

    m = rng.standard_normal((200, 5)) * 4
    probit_err = np.max(np.abs(probit_predict(PredictiveGaussian(m, np.zeros((200, 5, 5)), 0.0)) - softmax(m)))

    deep = init_net([3, 6, 5, 3], rng)
    for b in deep.biases:
        # zero biases put dead-layer pre-activations exactly on the ReLU kink
        b += 0.1 * rng.standard_normal(b.shape)
    x = rng.standard_normal(3)
    fd_err = 0.0
    for subset in ("last_layer", "all"):
        t0 = deep.get_params(subset)
        fd = np.stack([(forward(deep.with_params(t0 + h * e, subset), x).logits
                        - forward(deep.with_params(t0 - h * e, subset), x).logits) / (2 * h)
                       for e in np.eye(t0.size)], axis=-1)
        fd_err = max(fd_err, np.max(np.abs(jacobian(deep, x, subset) - fd)))
    Xb, yb = rng.standard_normal((8, 3)), rng.integers(0, 3, 8)
    t0 = deep.get_params()
    g = loss_and_grad(deep, Xb, yb, "classification")[1]
    fd = np.array([(loss_and_grad(deep.with_params(t0 + h * e), Xb, yb, "classification")[0]
                    - loss_and_grad(deep.with_params(t0 - h * e), Xb, yb, "classification")[0]) / (2 * h)
                   for e in np.eye(t0.size)])
    fd_err = max(fd_err, np.max(np.abs(g - fd)))

    ok = ggn_err <= 1e-6 and probit_err <= 1e-12 and fd_err <= 1e-5
    record_criterion(10, ok, f"GGN-Hessian {ggn_err:.1e}, probit-softmax {probit_err:.1e}, gradient FD {fd_err:.1e}")
    assert ok


def test_c11_tuning(record_criterion, moons_model, moons_fit):
    _, _, splits = moons_fit
    cfg = TuneConfig(seed=0)
    train_out = tuning_outliers(splits.train.inputs, cfg, ex.stream_rng(0, "tune-outliers"))
    held_out = tuning_outliers(splits.train.inputs, cfg, ex.stream_rng(0, "tune-heldout"))
    history = []
    tuned = moons_model.with_kernel(tune_sigmas(moons_model, splits.val, cfg, train_out, history))
    monotone = all(b <= a for a, b in zip(history, history[1:]))
    aur_before = ex.ood_auroc(moons_model, splits.test.inputs, held_out)
    aur_after = ex.ood_auroc(tuned, splits.test.inputs, held_out)
    ok = monotone and aur_after >= aur_before
    record_criterion(11, ok, f"L {history[0]:.4f} -> {history[-1]:.4f} (monotone={monotone}), "
                             f"held-out AUR {aur_before:.4f} -> {aur_after:.4f}")
    assert ok


def _run_all(out, config_path, input_path, regression):
    base = ["--config", str(config_path), "--out", str(out), "--seed", "7"]
    cmds = ["train", "sweep-alpha", "eval-ood"] + ([] if regression else ["tune"])
    codes = [main([c] + base) for c in cmds]
    codes.append(main(["predict", "--input", str(input_path)] + base))
    return codes


def test_c12_cli_determinism(record_criterion, tmp_path):
    inp = tmp_path / "in.csv"
    inp.write_text("x0,x1\n0.1,0.2\n-3.0,40.0\n")
    inp1 = tmp_path / "in1.csv"
    inp1.write_text("x0\n0.5\n-120.0\n")
    mismatched, compared, codes = [], 0, []
    for name, settings, path in (("moons", {"samples": 50}, inp),
                                 ("regression", {"dataset": "toy_regression"}, inp1)):
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps(settings))
        runs = [tmp_path / f"{name}-a", tmp_path / f"{name}-b"]
        for r in runs:
            codes += _run_all(r, cfg, path, name == "regression")
        csvs = sorted(p.name for p in runs[0].glob("*.csv"))
        for f in csvs:
            compared += 1
            if not filecmp.cmp(runs[0] / f, runs[1] / f, shallow=False):
                mismatched.append(f"{name}/{f}")
    ok = not mismatched and all(c == 0 for c in codes) and compared >= 9
    record_criterion(12, ok, f"{compared} CSV files compared, mismatches: {mismatched or 'none'}")
    assert ok
