import numpy as np
import pytest

from unetsr.images import ImageBuf, PairEntry, PairManifest, bicubic_resize, encode_png


def rect_image(seed: int, size: int = 64, n_rects: int = 4,
               background: float = 0.15) -> np.ndarray:
    """Hard-edged synthetic test image: colored rectangles on a flat field."""
    rng = np.random.default_rng(seed)
    img = np.full((size, size, 3), background)
    for _ in range(n_rects):
        r0, c0 = rng.integers(0, max(size - 8, 1), 2)
        rh, cw = rng.integers(max(size // 8, 2), max(size // 3, 3), 2)
        img[r0:r0 + rh, c0:c0 + cw] = rng.uniform(0.35, 0.95, 3)
    return np.clip(img, 0.0, 1.0)


def write_pair(work, img: np.ndarray, scale: int, name: str = "img") -> PairEntry:
    """Write one HR image and its bicubic LR counterpart, return the entry."""
    hr = ImageBuf.from_array(img)
    lr = bicubic_resize(hr, hr.height // scale, hr.width // scale)
    hr_path = work / f"hr_{name}.png"
    lr_path = work / f"lr_{name}.png"
    encode_png(hr, hr_path)
    encode_png(lr, lr_path)
    return PairEntry(lr=str(lr_path), hr=str(hr_path), scale=scale)


def rect_manifest(work, n_images: int, hr_size: int, scale: int,
                  seed: int = 99) -> PairManifest:
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_images):
        img = np.full((hr_size, hr_size, 3), rng.uniform(0.05, 0.2))
        for _ in range(rng.integers(3, 6)):
            r0, c0 = rng.integers(0, hr_size - 8, 2)
            rh, cw = rng.integers(6, hr_size // 2, 2)
            img[r0:r0 + rh, c0:c0 + cw] = rng.uniform(0.3, 1.0, 3)
        entries.append(write_pair(work, np.clip(img, 0, 1), scale, name=f"{i:02d}"))
    entries.sort(key=lambda e: e.hr)
    return PairManifest(entries=entries)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
