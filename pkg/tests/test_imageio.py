import numpy as np
import pytest

from motionscore.errors import (
    CorruptData,
    EmptyImage,
    MissingFile,
    UnsupportedFormat,
)
from motionscore.imageio import (
    GrayImage,
    Image,
    MIN_PYRAMID_SIZE,
    build_pyramid,
    load_image,
    resize_bilinear,
    save_image,
    to_grayscale,
)


def _random_u8(rng, h, w, c):
    return rng.integers(0, 256, size=(h, w, c)).astype(np.uint8)


def test_png_round_trip_gray(tmp_path, rng):
    raw = _random_u8(rng, 13, 17, 1)
    img = Image(width=17, height=13, channels=1, data=raw.astype(np.float64) / 255.0)
    path = tmp_path / "g.png"
    save_image(img, path)
    back = load_image(path)
    assert (back.width, back.height, back.channels) == (17, 13, 1)
    np.testing.assert_array_equal(
        np.rint(back.data * 255.0).astype(np.uint8), raw
    )


def test_png_round_trip_rgb(tmp_path, rng):
    raw = _random_u8(rng, 9, 11, 3)
    img = Image(width=11, height=9, channels=3, data=raw.astype(np.float64) / 255.0)
    path = tmp_path / "c.png"
    save_image(img, path)
    back = load_image(path)
    assert back.channels == 3
    np.testing.assert_array_equal(
        np.rint(back.data * 255.0).astype(np.uint8), raw
    )


def test_pgm_round_trip(tmp_path, rng):
    raw = _random_u8(rng, 7, 5, 1)
    img = Image(width=5, height=7, channels=1, data=raw.astype(np.float64) / 255.0)
    path = tmp_path / "g.pgm"
    save_image(img, path)
    back = load_image(path)
    assert back.channels == 1
    np.testing.assert_array_equal(
        np.rint(back.data * 255.0).astype(np.uint8), raw
    )


def test_ppm_round_trip(tmp_path, rng):
    raw = _random_u8(rng, 6, 4, 3)
    img = Image(width=4, height=6, channels=3, data=raw.astype(np.float64) / 255.0)
    path = tmp_path / "c.ppm"
    save_image(img, path)
    back = load_image(path)
    assert back.channels == 3
    np.testing.assert_array_equal(
        np.rint(back.data * 255.0).astype(np.uint8), raw
    )


def test_pnm_header_comments(tmp_path):
    payload = bytes(range(6))
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n3 2\n# another\n255\n" + payload)
    img = load_image(path)
    assert (img.width, img.height) == (3, 2)
    np.testing.assert_array_equal(
        np.rint(img.data[:, :, 0] * 255.0).astype(np.uint8),
        np.arange(6, dtype=np.uint8).reshape(2, 3),
    )


def test_pnm_16bit_rejected(tmp_path):
    path = tmp_path / "deep.pgm"
    path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(UnsupportedFormat):
        load_image(path)


def test_pnm_truncated_payload(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + bytes(5))
    with pytest.raises(CorruptData):
        load_image(path)


def test_pnm_malformed_header(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P5\nxx 4\n255\n" + bytes(16))
    with pytest.raises(CorruptData):
        load_image(path)


def test_missing_file():
    with pytest.raises(MissingFile):
        load_image("/nonexistent/nowhere.png")


def test_ascii_pnm_unsupported(tmp_path):
    path = tmp_path / "ascii.pgm"
    path.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
    with pytest.raises(UnsupportedFormat):
        load_image(path)


def test_gif_unsupported(tmp_path):
    path = tmp_path / "anim.gif"
    path.write_bytes(b"GIF89a" + bytes(32))
    with pytest.raises(UnsupportedFormat):
        load_image(path)


def test_garbage_rejected(tmp_path):
    path = tmp_path / "junk.png"
    path.write_bytes(b"\x00\x01\x02\x03 not an image at all")
    with pytest.raises(CorruptData):
        load_image(path)


def test_truncated_png(tmp_path):
    path = tmp_path / "trunc.png"
    path.write_bytes(b"\x89PNG\r\n\x1a\n" + bytes(10))
    with pytest.raises(CorruptData):
        load_image(path)


def test_image_shape_validation():
    with pytest.raises(ValueError):
        Image(width=4, height=3, channels=1, data=np.zeros((3, 5, 1)))
    with pytest.raises(ValueError):
        Image(width=4, height=3, channels=2, data=np.zeros((3, 4, 2)))
    with pytest.raises(ValueError):
        GrayImage(width=4, height=3, data=np.zeros((4, 3)))


def test_grayscale_rec601_weights():
    data = np.zeros((1, 3, 3))
    data[0, 0] = (1.0, 0.0, 0.0)
    data[0, 1] = (0.0, 1.0, 0.0)
    data[0, 2] = (0.0, 0.0, 1.0)
    gray = to_grayscale(Image(width=3, height=1, channels=3, data=data))
    np.testing.assert_allclose(gray.data[0], [0.299, 0.587, 0.114], rtol=0, atol=0)


def test_grayscale_passthrough_copies(rng):
    arr = rng.random((4, 4))
    g = GrayImage(width=4, height=4, data=arr)
    out = to_grayscale(g)
    assert out.data is not g.data
    np.testing.assert_array_equal(out.data, arr)
    single = Image(width=4, height=4, channels=1, data=arr[:, :, None])
    np.testing.assert_array_equal(to_grayscale(single).data, arr)


def test_pyramid_halving_oracle():
    # 4x4 with known 2x2 block means.
    arr = np.arange(16, dtype=np.float64).reshape(4, 4)
    pyr = build_pyramid(GrayImage(width=4, height=4, data=arr), 2)
    # MIN_PYRAMID_SIZE stops this pyramid at one level for small images.
    assert len(pyr.levels) == 1

    arr = np.arange(32 * 32, dtype=np.float64).reshape(32, 32)
    pyr = build_pyramid(GrayImage(width=32, height=32, data=arr), 3)
    assert [lvl.width for lvl in pyr.levels] == [32, 16, 8]
    expected = 0.25 * (
        arr[0::2, 0::2] + arr[0::2, 1::2] + arr[1::2, 0::2] + arr[1::2, 1::2]
    )
    np.testing.assert_allclose(pyr.levels[1].data, expected, rtol=0, atol=1e-15)


def test_pyramid_respects_min_size():
    img = GrayImage(width=20, height=20, data=np.zeros((20, 20)))
    pyr = build_pyramid(img, 10)
    # 20 -> 10 -> next would be 5 < MIN_PYRAMID_SIZE, so two levels.
    assert len(pyr.levels) == 2
    assert pyr.levels[-1].width >= MIN_PYRAMID_SIZE


def test_pyramid_odd_dimensions():
    arr = np.random.default_rng(3).random((21, 17))
    pyr = build_pyramid(GrayImage(width=17, height=21, data=arr), 2)
    assert (pyr.levels[1].height, pyr.levels[1].width) == (11, 9)


def test_pyramid_validation():
    img = GrayImage(width=4, height=4, data=np.zeros((4, 4)))
    with pytest.raises(ValueError):
        build_pyramid(img, 0)
    empty = GrayImage(width=0, height=0, data=np.zeros((0, 0)))
    with pytest.raises(EmptyImage):
        build_pyramid(empty, 2)


def test_resize_bilinear_identity(rng):
    arr = rng.random((5, 7))
    out = resize_bilinear(arr, 7, 5)
    assert out is not arr
    np.testing.assert_array_equal(out, arr)


def test_resize_bilinear_preserves_corners_and_linearity():
    ys, xs = np.mgrid[0:4, 0:6].astype(np.float64)
    arr = 2.0 * xs + 3.0 * ys
    out = resize_bilinear(arr, 11, 7)
    # Align-corners sampling keeps the corner values.
    assert out[0, 0] == arr[0, 0]
    assert out[-1, -1] == arr[-1, -1]
    # A bilinear resample of a plane is the same plane on the new grid.
    ys2 = np.linspace(0.0, 3.0, 7)[:, None]
    xs2 = np.linspace(0.0, 5.0, 11)[None, :]
    np.testing.assert_allclose(out, 2.0 * xs2 + 3.0 * ys2, atol=1e-12)


def test_resize_bilinear_single_row_column(rng):
    arr = rng.random((4, 4))
    row = resize_bilinear(arr, 4, 1)
    assert row.shape == (1, 4)
    col = resize_bilinear(arr, 1, 4)
    assert col.shape == (4, 1)
