import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxdg import _kernels


@settings(max_examples=25, deadline=None)
@given(nf=st.integers(0, 6), nq=st.integers(1, 9), na=st.integers(1, 7), nb=st.integers(1, 7),
       seed=st.integers(0, 1000))
def test_backends_agree(nf, nq, na, nb, seed):
    r = np.random.default_rng(seed)
    w, g = r.random((nf, nq)), r.standard_normal((nf, nq))
    x, y = r.standard_normal((nf, nq, na)), r.standard_normal((nf, nq, nb))
    ref = np.einsum("fq,fqa,fqb->fab", w, x, y)
    np.testing.assert_allclose(_kernels.weighted_outer(w, x, y), ref, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(_kernels.weighted_moments(w, g, x), np.einsum("fq,fq,fqa->fa", w, g, x),
                               rtol=1e-12, atol=1e-12)
    if _kernels.NUMBA_AVAILABLE and nf:
        np.testing.assert_allclose(_kernels.weighted_outer_numba(w, x, y), _kernels.weighted_outer_numpy(w, x, y),
                                   rtol=1e-12, atol=1e-12)


def test_non_contiguous_inputs():
    r = np.random.default_rng(0)
    x = r.standard_normal((5, 6, 4)).transpose(0, 1, 2)[:, ::2]
    w = np.ones((5, 3))
    np.testing.assert_allclose(_kernels.weighted_outer(w, x, x), np.einsum("fq,fqa,fqb->fab", w, x, x))


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("0", None)])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, FLUXDG_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from fluxdg import _kernels; print(_kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True).stdout.strip()
    assert out == (expected or _kernels.BACKEND)
