"""Shared builders for synthetic bundles and pools."""

import numpy as np
import pytest

from lms3 import Demonstration, DemonstrationPool, ProjectionBundle, TestItem


def make_pool(rng, d, m, prefix="demo"):
    items = tuple(
        Demonstration(id=f"{prefix}-{i}", problem=f"problem text {i}",
                      solution=f"solution text {i}", embedding=rng.standard_normal(d))
        for i in range(m)
    )
    return DemonstrationPool(items=items, d=d)


def make_bundle(rng, d, d_prime, m, n, source="synthetic"):
    bundle = ProjectionBundle(w_kq=rng.standard_normal((d, d)),
                              w_v=rng.standard_normal((d_prime, d)),
                              source=source)
    pool = make_pool(rng, d, m)
    tests = [TestItem(id=f"test-{j}", problem=f"test problem {j}",
                      embedding=rng.standard_normal(d)) for j in range(n)]
    return bundle, pool, tests


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def toy_bundle_dir(tmp_path, rng):
    from lms3 import write_bundle

    bundle, pool, tests = make_bundle(rng, d=4, d_prime=2, m=6, n=3)
    path = tmp_path / "bundle"
    write_bundle(bundle, pool, tests, path)
    return path
