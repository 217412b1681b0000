"""Equivalence of the compiled kernels against the numpy/scipy fallback and
against direct numpy references."""
import numpy as np
import pytest

from poisonprobe import _pykernels

try:
    from poisonprobe import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels is not None else [])


def random_csr(rng, n_rows, n_cols, density=0.25):
    mask = rng.random((n_rows, n_cols)) < density
    dense = np.where(mask, rng.standard_normal((n_rows, n_cols)), 0.0)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    indices = []
    data = []
    for i in range(n_rows):
        cols = np.flatnonzero(dense[i])
        indices.extend(cols.tolist())
        data.extend(dense[i, cols].tolist())
        indptr[i + 1] = len(indices)
    return (indptr, np.array(indices, dtype=np.int64), np.array(data)), dense


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.NAME)
class TestKernels:
    def test_csr_matmul(self, impl):
        rng = np.random.default_rng(0)
        (indptr, indices, data), dense = random_csr(rng, 7, 5)
        B = np.ascontiguousarray(rng.standard_normal((5, 3)))
        np.testing.assert_allclose(impl.csr_dense_matmul(indptr, indices, data, B),
                                   dense @ B, rtol=1e-13, atol=1e-13)

    def test_csr_transpose_matmul(self, impl):
        rng = np.random.default_rng(1)
        (indptr, indices, data), dense = random_csr(rng, 6, 9)
        G = np.ascontiguousarray(rng.standard_normal((6, 4)))
        np.testing.assert_allclose(impl.csr_t_dense_matmul(indptr, indices, data, 9, G),
                                   dense.T @ G, rtol=1e-13, atol=1e-13)

    def test_empty_rows(self, impl):
        indptr = np.zeros(4, dtype=np.int64)
        indices = np.zeros(0, dtype=np.int64)
        data = np.zeros(0)
        B = np.ones((2, 3))
        out = impl.csr_dense_matmul(indptr, indices, data, B)
        np.testing.assert_array_equal(out, np.zeros((3, 3)))

    def test_tanh_reparam_and_grad(self, impl):
        rng = np.random.default_rng(2)
        xt = rng.standard_normal((3, 6)) * 4
        w = rng.standard_normal((3, 6))
        x = impl.tanh_reparam(xt, w)
        # libm vs numpy SIMD tanh differ by a few ULP
        np.testing.assert_allclose(x, 0.5 * (np.tanh(xt + w) + 1.0), rtol=1e-12, atol=1e-15)
        assert x.min() >= 0.0 and x.max() <= 1.0
        gx = rng.standard_normal((3, 6))
        th = np.tanh(xt + w)
        np.testing.assert_allclose(impl.tanh_reparam_grad(xt, w, gx),
                                   gx * 0.5 * (1 - th * th), rtol=1e-13, atol=1e-15)

    def test_relu_delta_and_mask(self, impl):
        rng = np.random.default_rng(3)
        pre = rng.standard_normal((4, 5))
        dpre = rng.standard_normal((4, 5))
        np.testing.assert_allclose(impl.relu_delta(pre, dpre),
                                   np.maximum(pre + dpre, 0) - np.maximum(pre, 0), rtol=1e-15)
        adj = rng.standard_normal((4, 5))
        np.testing.assert_array_equal(impl.relu_mask(pre, dpre, adj),
                                      np.where(pre + dpre > 0, adj, 0.0))

    def test_adam_step_matches_reference(self, impl):
        rng = np.random.default_rng(4)
        w = rng.standard_normal((2, 4))
        w_ref = w.copy()
        m = np.zeros_like(w)
        v = np.zeros_like(w)
        m_ref, v_ref = m.copy(), v.copy()
        for t in range(1, 6):
            g = rng.standard_normal((2, 4))
            impl.adam_step(w, g, m, v, t, 0.01, 0.9, 0.999, 1e-8)
            m_ref = 0.9 * m_ref + 0.1 * g
            v_ref = 0.999 * v_ref + 0.001 * g * g
            w_ref -= 0.01 * (m_ref / (1 - 0.9 ** t)) / (np.sqrt(v_ref / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(w, w_ref, rtol=1e-12)


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
class TestCrossBackend:
    def test_attack_results_agree(self, synth_setup, monkeypatch):
        """The same attack run under both kernel sets lands on the same answer."""
        from poisonprobe import AttackConfig, backend, poison_probe
        graph, ahat, model, _ = synth_setup
        u = next(int(v) for v in range(graph.n) if graph.degree(v) >= 2)
        v = int(graph.neighbors(u)[0])
        from poisonprobe import predict
        clean = int(predict(model, ahat, graph.X)[u])
        t = (clean + 1) % graph.class_count
        results = {}
        for impl in (_pykernels, _ckernels):
            for name in ("csr_dense_matmul", "csr_t_dense_matmul", "tanh_reparam",
                         "tanh_reparam_grad", "relu_delta", "relu_mask", "adam_step"):
                monkeypatch.setattr(backend, name, getattr(impl, name))
            results[impl.NAME] = poison_probe(model, ahat, graph.X, u, t, [v],
                                              AttackConfig(max_iter=150, max_search_steps=3))
        a, b = results["py"], results["c"]
        assert a.success == b.success
        if a.success:
            assert abs(a.distance - b.distance) < 1e-6 * max(1.0, a.distance)
