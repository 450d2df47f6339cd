"""Quick invariant battery behind the ``selftest`` CLI subcommand."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from nulltrack.boxes import BoxLTRB
from nulltrack.editing import build_edit_context, edit_and_localize, localize
from nulltrack.linalg import (
    ThresholdPolicy,
    nullspace_projector,
    regularized_correlation,
    whiten_matrix,
)
from nulltrack.predictor import WeightVector
from nulltrack.regression import giou
from nulltrack.scenes import SceneRecipe, build_sequence_spec, gen_scene
from nulltrack.tensorio import Tensor, tensor_read, tensor_write
from nulltrack.tracker import default_tracker_config, run_tracker


def _check_roundtrip() -> bool:
    rng = np.random.default_rng(7)
    t = Tensor(rng.normal(size=(3, 4, 4)).astype(np.float32))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.gted")
        tensor_write(t, path)
        back = tensor_read(path)
    return back == t


def _check_projector_invariants() -> bool:
    rng = np.random.default_rng(11)
    for c in (4, 8, 16):
        zm = whiten_matrix(rng.normal(size=(c, 4 * c)))
        m = regularized_correlation(zm, 1e-3)
        proj = nullspace_projector(m)
        p = proj.p
        if not np.array_equal(p, p.T):
            return False
        if np.linalg.norm(p @ p - p) > 1e-6:
            return False
        if abs(np.trace(p) - proj.retained_rank) > 1e-6:
            return False
    return True


def _check_exact_null() -> bool:
    rng = np.random.default_rng(13)
    c, r, n = 8, 3, 40
    raw = rng.normal(size=(c, r)) @ rng.normal(size=(r, n))
    zm = whiten_matrix(raw)
    m = regularized_correlation(zm, 0.0)
    proj = nullspace_projector(m, ThresholdPolicy(eps_rel=1e-6))
    ok_null = np.linalg.norm(proj.p @ zm.z) <= 1e-8 * np.linalg.norm(zm.z)
    return ok_null and proj.retained_rank == c - r


def _check_giou() -> bool:
    a = BoxLTRB(0, 0, 2, 2)
    b = BoxLTRB(1, 1, 3, 3)
    expected = 1.0 / 7.0 - 2.0 / 9.0
    return abs(giou(a, b) - expected) <= 1e-9 and giou(a, a) == 1.0


def _check_edit_identity() -> bool:
    recipe = SceneRecipe(frames=6, noise_std=0.02, occlusion=False)
    spec = build_sequence_spec(recipe, seed=3)
    scene = gen_scene(spec)
    cfg = default_tracker_config(
        spec.c_sem, spec.c_geo, spec.grid, seed=0, force_projector="identity"
    )
    run_naive = run_tracker(scene, "naive_fusion", cfg)
    run_forced = run_tracker(scene, "nullspace_edit", cfg)
    return all(
        a.left == b.left and a.top == b.top and a.right == b.right and a.bottom == b.bottom
        for a, b in zip(run_naive.boxes(), run_forced.boxes())
    )


CHECKS = (
    ("gted round-trip", _check_roundtrip),
    ("projector symmetry/idempotence/trace", _check_projector_invariants),
    ("exact null-space annihilation", _check_exact_null),
    ("giou hand case and identity", _check_giou),
    ("naive == edit under forced identity projector", _check_edit_identity),
)


def run_selftest(verbose: bool = True) -> int:
    failures = 0
    for name, fn in CHECKS:
        try:
            ok = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok = False
            if verbose:
                print(f"FAIL {name}: {exc}")
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        failures += 0 if ok else 1
    if verbose:
        print(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return 0 if failures == 0 else 1
