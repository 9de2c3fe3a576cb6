from __future__ import annotations

import numpy as np
import pytest

from sinedit.errors import InvalidInputError
from sinedit.sampling import (
    GAMMA_GUARD,
    IdentityHooks,
    SamplerState,
    ascend_scale,
    deblend,
    entry_noise,
    reblend,
    reverse_step,
    step_noise,
)
from sinedit.schedule import make_schedule


def _state(x, blurred, scale, t, seed=0):
    return SamplerState(
        scale=scale, t=t, x=x, blurred=blurred, clean_prev=None, seed=seed
    )


def test_noise_generators_are_counter_keyed():
    shape = (5, 5, 3)
    assert np.array_equal(entry_noise(7, 1, shape), entry_noise(7, 1, shape))
    assert not np.array_equal(entry_noise(7, 1, shape), entry_noise(7, 2, shape))
    assert not np.array_equal(entry_noise(7, 1, shape), entry_noise(8, 1, shape))
    assert np.array_equal(step_noise(7, 1, 3, shape), step_noise(7, 1, 3, shape))
    assert not np.array_equal(step_noise(7, 1, 3, shape), step_noise(7, 1, 4, shape))
    # the entry and step streams never collide
    assert not np.array_equal(entry_noise(7, 1, shape), step_noise(7, 1, 0, shape))


def test_reblend_inverts_deblend():
    rng = np.random.default_rng(0)
    mix = rng.standard_normal((6, 6, 3))
    blurred = rng.standard_normal((6, 6, 3))
    for gamma in [0.1, 0.25, 0.5, 0.75, 0.9, 0.99]:
        clean = deblend(mix, blurred, gamma)
        back = reblend(clean, blurred, gamma)
        assert np.abs(back - mix).max() < 1e-6, gamma


def test_deblend_guard_branches():
    rng = np.random.default_rng(1)
    mix = rng.standard_normal((4, 4, 3))
    blurred = rng.standard_normal((4, 4, 3))
    assert deblend(mix, blurred, 0.0) is mix
    assert deblend(mix, blurred, 1.0) is mix
    assert deblend(mix, blurred, GAMMA_GUARD + 1e-6) is mix
    # just inside the guard the division still runs
    out = deblend(mix, blurred, 0.999)
    assert not np.array_equal(out, mix)


def test_reverse_step_recovers_planted_clean_image():
    # feed the exact noise the forward process used; the clean estimate
    # must come back as the planted image
    sched = make_schedule(t0=10, ts=5, num_scales=1)
    rng = np.random.default_rng(2)
    x0 = rng.uniform(-1, 1, (8, 8, 3)).astype(np.float32)
    eps = rng.standard_normal((8, 8, 3)).astype(np.float32)
    t = 5
    ab = sched.alpha_bar(t)
    x_t = (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(np.float32)

    state = _state(x_t, np.zeros_like(x0), scale=0, t=t)
    result = reverse_step(state, lambda x, tt, ss: eps, sched)
    assert result.t == t - 1
    assert np.abs(result.clean_prev - x0).max() < 1e-5


def test_reverse_step_is_deterministic():
    sched = make_schedule(t0=8, ts=4, num_scales=2, stochastic=True)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 6, 3)).astype(np.float32)
    blurred = rng.standard_normal((6, 6, 3)).astype(np.float32)
    eps = rng.standard_normal((6, 6, 3)).astype(np.float32)
    a = reverse_step(_state(x, blurred, 1, 3, seed=9), lambda *_: eps, sched)
    b = reverse_step(_state(x, blurred, 1, 3, seed=9), lambda *_: eps, sched)
    assert np.array_equal(a.x, b.x)
    # a different seed draws different step noise at sigma > 0
    c = reverse_step(_state(x, blurred, 1, 3, seed=10), lambda *_: eps, sched)
    assert sched.sigma(1, 3) > 0
    assert not np.array_equal(a.x, c.x)


def test_deterministic_schedule_adds_no_step_noise():
    sched = make_schedule(t0=8, ts=4, num_scales=2, stochastic=False)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((6, 6, 3)).astype(np.float32)
    blurred = rng.standard_normal((6, 6, 3)).astype(np.float32)
    eps = rng.standard_normal((6, 6, 3)).astype(np.float32)
    a = reverse_step(_state(x, blurred, 1, 3, seed=0), lambda *_: eps, sched)
    b = reverse_step(_state(x, blurred, 1, 3, seed=123), lambda *_: eps, sched)
    assert np.array_equal(a.x, b.x)


def test_single_step_scale_lands_on_clean_estimate():
    # with T[s] = 1 the only step jumps straight to t = 0, where the noise
    # coefficient vanishes and gamma is 0
    sched = make_schedule(t0=4, ts=1, num_scales=2)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((5, 5, 3)).astype(np.float32)
    blurred = rng.standard_normal((5, 5, 3)).astype(np.float32)
    eps = rng.standard_normal((5, 5, 3)).astype(np.float32)
    result = reverse_step(_state(x, blurred, 1, 1), lambda *_: eps, sched)
    assert result.t == 0
    assert np.abs(result.x - result.clean_prev).max() < 1e-6


def test_reverse_step_validation():
    sched = make_schedule(t0=4, ts=2, num_scales=1)
    x = np.zeros((4, 4, 3), dtype=np.float32)
    with pytest.raises(InvalidInputError):
        reverse_step(_state(x, x, 0, 0), lambda *_: x, sched)
    with pytest.raises(InvalidInputError):
        reverse_step(
            _state(x, x, 0, 2),
            lambda *_: np.zeros((2, 2, 3), dtype=np.float32),
            sched,
        )


def test_ascend_scale_noiseless_is_scaled_upsample():
    sched = make_schedule(t0=10, ts=5, num_scales=2)
    rng = np.random.default_rng(6)
    clean = rng.uniform(-1, 1, (6, 6, 3)).astype(np.float32)
    zero = np.zeros((9, 9, 3), dtype=np.float32)
    x, up = ascend_scale(clean, sched, next_scale=1, target_dims=(9, 9), noise=zero)
    ab = sched.alpha_bar(sched.steps_per_scale[1])
    assert up.shape == (9, 9, 3)
    assert np.abs(x - np.float32(np.sqrt(ab)) * up).max() < 1e-6
    with pytest.raises(InvalidInputError):
        ascend_scale(clean, sched, 1, (9, 9), np.zeros((4, 4, 3), dtype=np.float32))


def test_ascend_scale_marginal_statistics():
    # over many draws the re-noised image must match its analytic mean and
    # variance; identical target dims make the upsample an exact copy
    sched = make_schedule(t0=10, ts=5, num_scales=2)
    rng = np.random.default_rng(7)
    clean = rng.uniform(-1, 1, (6, 6, 3)).astype(np.float32)
    t_entry = sched.steps_per_scale[1]
    ab = sched.alpha_bar(t_entry)
    draws = 10_000
    total = np.zeros_like(clean, dtype=np.float64)
    total_sq = np.zeros_like(clean, dtype=np.float64)
    for _ in range(draws):
        noise = rng.standard_normal(clean.shape).astype(np.float32)
        x, up = ascend_scale(clean, sched, 1, (6, 6), noise)
        total += x
        total_sq += x.astype(np.float64) ** 2
    assert np.array_equal(up, clean)

    mean = total / draws
    expected_mean = np.sqrt(ab) * clean.astype(np.float64)
    se = np.sqrt((1.0 - ab) / draws)
    z = (mean - expected_mean) / se
    npix = z.size
    assert abs(z.mean()) < 3.0 / np.sqrt(npix)
    assert (np.abs(z) < 4.5).all()

    var = total_sq / draws - mean**2
    # sample variance of a normal has relative se sqrt(2/n)
    rel = np.abs(var - (1.0 - ab)) / (1.0 - ab)
    assert rel.mean() < 3.0 * np.sqrt(2.0 / draws)


def test_sampler_output_shape_and_range(golden_bundle):
    out = golden_bundle.sampler.run(seed=1)
    assert out.shape == golden_bundle.source.shape
    assert out.dtype == np.float32
    assert out.min() >= -1.0
    assert out.max() <= 1.0


def test_sampler_bitwise_deterministic(golden_bundle):
    a = golden_bundle.sampler.run(seed=42)
    b = golden_bundle.sampler.run(seed=42)
    assert np.array_equal(a, b)


def test_identity_hooks_match_unguided(golden_bundle):
    plain = golden_bundle.sampler.run(seed=3)
    hooked = golden_bundle.sampler.run(seed=3, hooks=IdentityHooks())
    assert np.array_equal(plain, hooked)


def test_different_seeds_differ(golden_bundle):
    a = golden_bundle.sampler.run(seed=0)
    b = golden_bundle.sampler.run(seed=1)
    assert not np.array_equal(a, b)


def test_on_step_sees_every_step(golden_bundle):
    sampler = golden_bundle.sampler
    states = []
    sampler.run(seed=2, on_step=states.append)
    assert len(states) == sum(sampler.schedule.steps_per_scale)
    # each scale counts down to zero
    for s in range(sampler.pyramid.num_scales):
        ts = [st.t for st in states if st.scale == s]
        assert ts == list(range(sampler.schedule.steps_per_scale[s] - 1, -1, -1))


def test_samples_track_source_palette(golden_bundle):
    # free samples from a single-image model stay near the training image's
    # per-channel means; 16 seeded runs, compared channel by channel
    source = golden_bundle.source
    sampler = golden_bundle.sampler
    total = np.zeros(3, dtype=np.float64)
    count = 16
    for i in range(count):
        out = sampler.run(seed=100 + i)
        total += out.reshape(-1, 3).mean(axis=0)
    sample_means = total / count
    source_means = source.reshape(-1, 3).mean(axis=0)
    diff = np.abs(sample_means - source_means)
    assert (diff < 0.1).all(), diff
