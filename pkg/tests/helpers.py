"""Finite-difference oracles shared by the tensor and acceptance tests."""
import numpy as np

from apkgan.tensor import Tensor, grad

H = 1e-5


def fd_rel_error(fn, arrays, h=H):
    """max |g_AD - g_FD| / max(1, |g_FD|) over every entry of every input.

    ``fn(*tensors)`` must return a scalar Tensor.
    """
    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    ad = grad(fn(*ts), ts, allow_unused=True)
    worst = 0.0
    for k, a in enumerate(arrays):
        g = ad[k].data
        flat = a.reshape(-1)
        for i in range(flat.size):
            def f(delta):
                b = flat.copy()
                b[i] += delta
                args = [Tensor(x) for x in arrays]
                args[k] = Tensor(b.reshape(a.shape))
                return fn(*args).item()
            g_fd = (f(h) - f(-h)) / (2 * h)
            worst = max(worst, abs(g.reshape(-1)[i] - g_fd) / max(1.0, abs(g_fd)))
    return worst


def away_from_zero(rng, shape, lo=0.05):
    """Normal draws pushed off the kinks of leaky-rectifier/L2-norm."""
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < lo, np.sign(x + 1e-12) * lo, x)


def _weighted(out_shape, rng):
    from apkgan.tensor import Tensor, mul, sum_

    r = Tensor(rng.normal(size=out_shape))
    return lambda y: sum_(mul(y, r))


def _case(rng):
    """Random small shapes; returns a dict primitive -> (fn, arrays)."""
    from apkgan.tensor import (add, broadcast_to, conv2d, conv_transpose2d, div, fold, l2_norm,
                               leaky_relu, linear, matmul, max_pool2d, mean, mul, reshape, sigmoid,
                               softplus, sqrt, square, sub, sum_, swapaxes, tanh, unfold)

    a, b, c = (int(v) for v in rng.integers(1, 4, size=3))
    x = rng.normal(size=(a, b))
    cases = {}

    def unary(name, op, arr):
        w = _weighted(arr.shape, rng)
        cases[name] = (lambda t: w(op(t)), [arr])

    unary("tanh", tanh, x)
    unary("sigmoid", sigmoid, 3 * x)
    unary("softplus", softplus, 3 * x)
    unary("leaky_relu", lambda t: leaky_relu(t, 0.2), away_from_zero(rng, (a, b)))
    unary("square", square, x)
    unary("sqrt", sqrt, np.abs(x) + 0.5)
    unary("neg_via_sub", lambda t: sub(0.0, t), x)
    w_r = _weighted((b, a), rng)
    cases["reshape"] = (lambda t: w_r(reshape(t, (b, a))), [x])
    w_s = _weighted((b, a), rng)
    cases["swapaxes"] = (lambda t: w_s(swapaxes(t)), [x])
    w_b = _weighted((c, a, b), rng)
    cases["broadcast_to"] = (lambda t: w_b(broadcast_to(t, (c, a, b))), [x])
    w0, w1 = _weighted((b,), rng), _weighted((a, 1), rng)
    cases["sum"] = (lambda t: mul(sum_(t), w0(sum_(t, axis=0))) + w1(sum_(t, axis=1, keepdims=True)), [x])
    w2 = _weighted((a,), rng)
    cases["mean"] = (lambda t: square(mean(t)) + w2(mean(mul(t, t), axis=1)), [x])
    w3 = _weighted((a,), rng)
    cases["l2_norm"] = (lambda t: l2_norm(t) + w3(l2_norm(t, axis=1)), [away_from_zero(rng, (a, b))])
    y = rng.normal(size=(a, b))
    for name, op in (("add", add), ("sub", sub), ("mul", mul)):
        w = _weighted((a, b), rng)
        cases[name] = ((lambda op, w: lambda s, t: w(op(s, t)))(op, w), [x, y])
    wd = _weighted((a, b), rng)
    cases["div"] = (lambda s, t: wd(div(s, t)), [x, np.abs(y) + 0.5])
    wb2 = _weighted((a, b), rng)
    cases["add_broadcast"] = (lambda s, t: wb2(add(s, t)), [x, rng.normal(size=(b,))])
    m = rng.normal(size=(b, c))
    wm = _weighted((a, c), rng)
    cases["matmul"] = (lambda s, t: wm(matmul(s, t)), [x, m])
    wl = _weighted((a, c), rng)
    cases["affine"] = (lambda s, t, u: wl(linear(s, t, u)), [x, m, rng.normal(size=(c,))])

    n, ch, hw = int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(4, 7))
    oc, k = int(rng.integers(1, 3)), int(rng.integers(1, 4))
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    img = rng.normal(size=(n, ch, hw, hw))
    ker = rng.normal(size=(oc, ch, k, k))
    oh = (hw + 2 * pad - k) // stride + 1
    wc = _weighted((n, oc, oh, oh), rng)
    cases["conv2d"] = (lambda s, t, u: wc(conv2d(s, t, u, stride, pad)), [img, ker, rng.normal(size=(oc,))])
    small = rng.normal(size=(n, ch, 3, 3))
    kt = rng.normal(size=(ch, oc, k + 1, k + 1))
    th = (3 - 1) * stride - 2 * 0 + k + 1
    wt = _weighted((n, oc, th, th), rng)
    cases["conv_transpose2d"] = (lambda s, t, u: wt(conv_transpose2d(s, t, u, stride, 0)),
                                 [small, kt, rng.normal(size=(oc,))])
    cols_shape = (n, ch * k * k, oh * oh)
    wu = _weighted(cols_shape, rng)
    cases["unfold"] = (lambda s: wu(unfold(s, k, k, stride, pad)), [img])
    wf = _weighted((n, ch, hw, hw), rng)
    cases["fold"] = (lambda s: wf(fold(s, (hw, hw), k, k, stride, pad)), [rng.normal(size=cols_shape)])
    # distinct values keep the pooling argmax away from ties
    pool_in = rng.permutation(n * ch * 16).reshape(n, ch, 4, 4) / 7.0
    wp = _weighted((n, ch, 2, 2), rng)
    cases["max_pool2d"] = (lambda s: wp(max_pool2d(s, 2)), [pool_in])
    return cases


PRIMITIVES = tuple(_case(np.random.default_rng(0)))


def primitive_trials(name, trials, seed=0):
    """Worst relative FD error over ``trials`` random instances of one primitive."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        fn, arrays = _case(rng)[name]
        worst = max(worst, fd_rel_error(fn, arrays))
    return worst


def tanh_critic_penalty_check(seed=0, h=H):
    """d/dθ ‖∇x D_θ(x)‖ vs central differences on a 2-layer tanh critic.

    Returns the worst relative error over all parameter entries.
    """
    from apkgan.tensor import Tensor, grad, l2_norm, linear, sum_, tanh

    rng = np.random.default_rng(seed)
    d, hidden, m = 3, 4, 2
    params = [rng.normal(size=(d, hidden)), rng.normal(size=(hidden,)), rng.normal(size=(hidden, 1)),
              rng.normal(size=(1,))]
    x0 = rng.normal(size=(m, d))

    def penalty(*theta):
        x = Tensor(x0, requires_grad=True)
        out = linear(tanh(linear(x, theta[0], theta[1])), theta[2], theta[3])
        [gx] = grad(sum_(out), [x], create_graph=True)
        return sum_(l2_norm(gx, axis=1))

    return fd_rel_error(penalty, params, h)
