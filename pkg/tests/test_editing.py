from __future__ import annotations

import numpy as np
import pytest

from sinedit.editing import (
    EditRequest,
    ModelBundle,
    Rect,
    build_guidance,
    content_target,
    edit_fn_for_request,
    reconstruct_source,
    run_edit,
    text_embedding_for,
    tile_edit,
)
from sinedit.embedders import MockEmbedder
from sinedit.errors import InvalidInputError, InvalidRequestError
from sinedit.prompts import build_prompt_bundle

from .conftest import make_synthetic_image


@pytest.fixture(scope="module")
def embedder() -> MockEmbedder:
    return MockEmbedder()


# -- rectangles -----------------------------------------------------------


def test_rect_parse():
    assert Rect.parse("1,2,3,4") == Rect(x=1, y=2, w=3, h=4)
    assert Rect.parse(" 0 , 0 , 10 , 20 ") == Rect(0, 0, 10, 20)
    with pytest.raises(InvalidRequestError) as err:
        Rect.parse("1,2,3")
    assert err.value.field == "rect"
    with pytest.raises(InvalidRequestError):
        Rect.parse("a,b,c,d")


def test_rect_bounds():
    Rect(0, 0, 8, 8).validate_within(8, 8)
    with pytest.raises(InvalidRequestError):
        Rect(0, 0, 9, 8).validate_within(8, 8)
    with pytest.raises(InvalidRequestError):
        Rect(-1, 0, 4, 4).validate_within(8, 8)
    with pytest.raises(InvalidRequestError):
        Rect(0, 0, 0, 4).validate_within(8, 8)
    with pytest.raises(InvalidRequestError) as err:
        Rect(5, 5, 4, 4).validate_within(8, 8, "dest")
    assert err.value.field == "dest"


def test_rect_slices():
    rows, cols = Rect(x=2, y=1, w=3, h=4).slices()
    grid = np.zeros((8, 8))
    grid[rows, cols] = 1
    assert grid.sum() == 12
    assert grid[1:5, 2:5].all()


# -- request validation ---------------------------------------------------


def test_edit_request_validation_fields():
    def failing_field(**kwargs) -> str:
        with pytest.raises(InvalidRequestError) as err:
            EditRequest(checkpoint="m.ckpt", **kwargs).validate()
        return err.value.field

    assert failing_field(mode="blur") == "mode"
    assert failing_field(mode="text-full") == "prompt"
    assert failing_field(mode="text-full", prompt="   ") == "prompt"
    assert failing_field(mode="text-roi", prompt="fire") == "mask"
    assert failing_field(mode="roi-content") == "source_rect"
    assert (
        failing_field(mode="roi-content", source_rect=Rect(0, 0, 4, 4)) == "dest_rects"
    )
    assert failing_field(mode="text-full", prompt="fire", eta=1.2) == "eta"
    assert failing_field(mode="text-full", prompt="fire", momentum=2.0) == "momentum"
    assert (
        failing_field(mode="text-full", prompt="fire", variant_count=0)
        == "variant_count"
    )
    ok = EditRequest(checkpoint="m.ckpt", mode="text-full", prompt="fire").validate()
    assert ok.mode == "text-full"


def test_text_roi_mask_error_message():
    with pytest.raises(InvalidRequestError) as err:
        EditRequest(checkpoint="m.ckpt", mode="text-roi", prompt="fire").validate()
    assert "text-roi requires a mask" in str(err.value)


# -- content targets ------------------------------------------------------


def test_content_target_copies_patch():
    source = make_synthetic_image(16, 16, seed=1)
    src_rect = Rect(x=2, y=3, w=4, h=5)
    dests = [Rect(x=10, y=1, w=4, h=5), Rect(x=1, y=10, w=4, h=5)]
    target, mask = content_target(source, src_rect, dests)
    patch = source[3:8, 2:6]
    for rect in dests:
        rows, cols = rect.slices()
        assert np.array_equal(target[rows, cols], patch)
        assert np.all(mask[rows, cols] == 1.0)
    untouched = mask == 0.0
    assert np.array_equal(target[untouched], source[untouched])
    assert mask.sum() == 2 * 4 * 5


def test_content_target_validation():
    source = make_synthetic_image(16, 16, seed=1)
    with pytest.raises(InvalidRequestError) as err:
        content_target(source, Rect(0, 0, 4, 4), [Rect(0, 0, 5, 4)])
    assert err.value.field == "dest_rects[0]"
    with pytest.raises(InvalidRequestError) as err:
        content_target(source, Rect(14, 14, 4, 4), [])
    assert err.value.field == "source_rect"
    with pytest.raises(InvalidRequestError):
        content_target(source, Rect(0, 0, 4, 4), [Rect(14, 0, 4, 4)])


# -- guidance construction ------------------------------------------------


def test_build_guidance_text_roi_accepts_255_mask(embedder):
    source = make_synthetic_image(16, 16, seed=2)
    mask = np.zeros((16, 16), dtype=np.uint8)
    mask[4:8, 4:8] = 255
    request = EditRequest(
        checkpoint="m.ckpt", mode="text-roi", prompt="fire", mask=mask
    )
    spec = build_guidance(request, source, embedder)
    assert spec.mode == "text-roi"
    assert set(np.unique(spec.mask)) == {0.0, 1.0}
    assert spec.mask.sum() == 16


def test_build_guidance_rejects_mask_dims(embedder):
    source = make_synthetic_image(16, 16, seed=2)
    request = EditRequest(
        checkpoint="m.ckpt",
        mode="text-roi",
        prompt="fire",
        mask=np.ones((8, 8), dtype=np.uint8),
    )
    with pytest.raises(InvalidRequestError) as err:
        build_guidance(request, source, embedder)
    assert err.value.field == "mask"


def test_build_guidance_roi_content(embedder):
    source = make_synthetic_image(16, 16, seed=3)
    request = EditRequest(
        checkpoint="m.ckpt",
        mode="roi-content",
        source_rect=Rect(0, 0, 4, 4),
        dest_rects=[Rect(8, 8, 4, 4)],
        eta=0.7,
    )
    spec = build_guidance(request, source, embedder)
    assert spec.mode == "roi-content"
    assert spec.target.shape == source.shape
    assert spec.mask.sum() == 16
    assert spec.eta == 0.7
    assert spec.text_embedding is None


def test_text_embedding_for_pe_matches_bundle(embedder):
    request = EditRequest(
        checkpoint="m.ckpt",
        mode="text-full",
        prompt="A ship is on fire",
        use_pe=True,
        variant_count=5,
    )
    got = text_embedding_for(request, embedder)
    expected = build_prompt_bundle("A ship is on fire", embedder, k=5).ensembled
    assert np.array_equal(got, expected)
    request.use_pe = False
    direct = text_embedding_for(request, embedder)
    assert np.array_equal(direct, embedder.embed_text("A ship is on fire"))
    assert not np.array_equal(got, direct)


# -- tiling ---------------------------------------------------------------


def test_tile_identity_round_trip_is_bit_exact():
    scene = make_synthetic_image(40, 56, seed=4)
    rect = Rect(x=10, y=6, w=24, h=24)
    out = tile_edit(scene, rect, lambda tile: tile, feather=0)
    assert np.array_equal(out, scene)
    # an identity edit with feathering also changes nothing: the blend
    # interpolates between two equal images
    out = tile_edit(scene, rect, lambda tile: tile, feather=6)
    assert np.abs(out - scene).max() < 1e-6


def test_tile_edit_leaves_outside_untouched():
    scene = make_synthetic_image(40, 56, seed=5)
    rect = Rect(x=10, y=6, w=24, h=24)
    rows, cols = rect.slices()
    inside = np.zeros((40, 56), dtype=bool)
    inside[rows, cols] = True

    for feather in (0, 5):
        out = tile_edit(scene, rect, lambda tile: -tile, feather=feather)
        assert np.array_equal(out[~inside], scene[~inside]), feather
        assert not np.array_equal(out[inside], scene[inside])


def test_tile_edit_feather_zero_pastes_verbatim():
    scene = make_synthetic_image(32, 32, seed=6)
    rect = Rect(x=4, y=4, w=16, h=16)
    replacement = np.full((16, 16, 3), 0.5, dtype=np.float32)
    out = tile_edit(scene, rect, lambda tile: replacement, feather=0)
    rows, cols = rect.slices()
    assert np.array_equal(out[rows, cols], replacement)


def test_tile_edit_feather_ramps_toward_seam():
    scene = np.zeros((32, 32, 3), dtype=np.float32)
    rect = Rect(x=8, y=8, w=16, h=16)
    replacement = np.ones((16, 16, 3), dtype=np.float32)
    feather = 4
    out = tile_edit(scene, rect, lambda tile: replacement, feather=feather)
    # first ring inside the seam carries the smallest weight
    assert out[8, 16, 0] == pytest.approx(1.0 / (feather + 1))
    assert out[9, 16, 0] == pytest.approx(2.0 / (feather + 1))
    # tile center is fully replaced
    assert out[16, 16, 0] == pytest.approx(1.0)


def test_tile_edit_full_image_rect_has_no_seam():
    scene = make_synthetic_image(24, 24, seed=7)
    replacement = np.full((24, 24, 3), -0.25, dtype=np.float32)
    out = tile_edit(scene, Rect(0, 0, 24, 24), lambda tile: replacement, feather=8)
    # every side is flush with the image boundary, so no ramp applies
    assert np.array_equal(out, replacement)


def test_tile_edit_corner_rect_feathers_inner_sides_only():
    scene = np.zeros((32, 32, 3), dtype=np.float32)
    rect = Rect(x=0, y=0, w=16, h=16)
    replacement = np.ones((16, 16, 3), dtype=np.float32)
    out = tile_edit(scene, rect, lambda tile: replacement, feather=4)
    assert out[0, 0, 0] == pytest.approx(1.0)
    assert out[0, 15, 0] == pytest.approx(1.0 / 5.0)
    assert out[15, 0, 0] == pytest.approx(1.0 / 5.0)


def test_tile_edit_validation():
    scene = make_synthetic_image(24, 24, seed=8)
    with pytest.raises(InvalidRequestError):
        tile_edit(scene, Rect(10, 10, 24, 24), lambda tile: tile)
    with pytest.raises(InvalidInputError):
        tile_edit(scene, Rect(0, 0, 12, 12), lambda tile: tile, feather=-1)
    with pytest.raises(InvalidInputError):
        tile_edit(scene, Rect(0, 0, 12, 12), lambda tile: tile[:6])


# -- end-to-end edits on the toy model ------------------------------------


def test_run_edit_text_full(toy32_bundle, embedder):
    request = EditRequest(
        checkpoint="unused",
        mode="text-full",
        prompt="a dark burning field",
        eta=0.1,
        seed=3,
    )
    out = run_edit(request, bundle=toy32_bundle, embedder=embedder)
    assert out.shape == toy32_bundle.source.shape
    assert out.dtype == np.float32
    assert out.min() >= -1.0 and out.max() <= 1.0
    again = run_edit(request, bundle=toy32_bundle, embedder=embedder)
    assert np.array_equal(out, again)


def test_run_edit_loads_checkpoint_from_path(toy32_checkpoint, embedder):
    request = EditRequest(
        checkpoint=toy32_checkpoint,
        mode="text-full",
        prompt="a dark burning field",
        seed=1,
    )
    out = run_edit(request, embedder=embedder)
    bundle = ModelBundle.load(toy32_checkpoint)
    expected = run_edit(request, bundle=bundle, embedder=embedder)
    assert np.array_equal(out, expected)


def test_reconstruct_source_matches_training_image(toy32_bundle):
    recon = reconstruct_source(toy32_bundle, seed=0)
    assert np.allclose(recon, toy32_bundle.source, atol=1e-6)


def test_edit_fn_for_request_checks_tile_shape(toy32_bundle, embedder):
    request = EditRequest(
        checkpoint="unused", mode="text-full", prompt="fire", seed=0
    )
    fn = edit_fn_for_request(request, toy32_bundle, embedder)
    with pytest.raises(InvalidRequestError) as err:
        fn(np.zeros((8, 8, 3), dtype=np.float32))
    assert err.value.field == "tile_rect"

    tile = toy32_bundle.source.copy()
    out = fn(tile)
    assert out.shape == tile.shape
