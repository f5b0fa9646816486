"""Fixed blur/sharpen filter pool applied to recurrent hidden states.

The bank holds five classical kernels: two box means, one 3x3 Gaussian
blur, and two Gaussian bases used for unsharp-masking sharpening. Blur
variants are plain depthwise convolutions; sharp variants are unsharp
masking, h + (h - h * k) = 2h - h * k. All filtering uses edge-replicate
padding and unit-DC-gain (normalized) kernels so constant inputs are
exact fixed points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

MODE_BLUR = "blur"
MODE_SHARP = "sharp"

# published 5x5 sharpening base repeats its 3rd row in the 5th; we restore
# top/bottom symmetry (row 5 := row 1) and renormalize to unit sum, since a
# USM base kernel must not change the DC level
_SHARP_GAUSS_5_ROWS = [
    [0.0369, 0.0392, 0.0400, 0.0392, 0.0369],
    [0.0392, 0.0416, 0.0424, 0.0416, 0.0392],
    [0.0400, 0.0424, 0.0433, 0.0424, 0.0400],
    [0.0392, 0.0416, 0.0424, 0.0416, 0.0392],
    [0.0369, 0.0392, 0.0400, 0.0392, 0.0369],
]


@dataclass(frozen=True)
class FilterKernel:
    """A named fixed kernel plus the variant mode it produces."""

    name: str
    mode: str
    base: np.ndarray

    def __post_init__(self):
        if self.mode not in (MODE_BLUR, MODE_SHARP):
            raise ValueError(f"unknown kernel mode {self.mode!r}")
        base = np.asarray(self.base, dtype=np.float32)
        if base.ndim != 2 or base.shape[0] % 2 == 0 or base.shape[1] % 2 == 0:
            raise ValueError(f"kernel {self.name!r} must be odd-sized 2-D, "
                             f"got shape {base.shape}")
        total = float(base.astype(np.float64).sum())
        if abs(total - 1.0) > 5e-3:
            raise ValueError(f"kernel {self.name!r} sums to {total:.4f}, "
                             "expected unit DC gain within 5e-3")
        object.__setattr__(self, "base", base)

    @property
    def normalized(self) -> np.ndarray:
        """Base kernel rescaled to exactly unit sum (used for filtering)."""
        b64 = self.base.astype(np.float64)
        return (b64 / b64.sum()).astype(np.float32)


@dataclass(frozen=True)
class FilterBank:
    """Ordered, immutable list of kernels; order is serialized with models."""

    kernels: tuple[FilterKernel, ...]

    def __len__(self):
        return len(self.kernels)

    def __iter__(self):
        return iter(self.kernels)

    def __getitem__(self, i) -> FilterKernel:
        return self.kernels[i]

    @property
    def modes(self) -> list[str]:
        return [k.mode for k in self.kernels]

    def of_mode(self, mode: str) -> list[FilterKernel]:
        return [k for k in self.kernels if k.mode == mode]


@dataclass
class HiddenStatePool:
    """The N filtered variants of one hidden state, aligned with the bank."""

    entries: list
    bank: FilterBank = field(repr=False)

    def __len__(self):
        return len(self.entries)


def default_bank(include_identity: bool = False) -> FilterBank:
    """The standard pool: 3 blur kernels and 2 sharpening bases.

    include_identity optionally appends an unfiltered (delta kernel) entry;
    the default pool contains only the blurry and sharp variants.
    """
    gauss3_blur = np.array([[0.1108, 0.1113, 0.1108],
                            [0.1113, 0.1117, 0.1113],
                            [0.1108, 0.1113, 0.1108]], dtype=np.float32)
    gauss3_sharp = np.array([[0.1096, 0.1118, 0.1096],
                             [0.1118, 0.1141, 0.1118],
                             [0.1096, 0.1118, 0.1096]], dtype=np.float32)
    gauss5 = np.array(_SHARP_GAUSS_5_ROWS, dtype=np.float64)
    gauss5 = (gauss5 / gauss5.sum()).astype(np.float32)
    kernels = [
        FilterKernel("blur-mean-3x3", MODE_BLUR, np.full((3, 3), 1 / 9, np.float32)),
        FilterKernel("blur-mean-5x5", MODE_BLUR, np.full((5, 5), 1 / 25, np.float32)),
        FilterKernel("blur-gauss-3x3", MODE_BLUR, gauss3_blur),
        FilterKernel("sharp-gauss-3x3", MODE_SHARP, gauss3_sharp),
        FilterKernel("sharp-gauss-5x5", MODE_SHARP, gauss5),
    ]
    if include_identity:
        kernels.append(
            FilterKernel("identity-1x1", MODE_BLUR, np.ones((1, 1), np.float32)))
    return FilterBank(tuple(kernels))


def blur_variant(h, kernel: FilterKernel):
    """Depthwise blur of a hidden state, edge-replicate padded."""
    if kernel.mode != MODE_BLUR:
        raise ValueError(f"blur_variant needs a blur kernel, got "
                         f"{kernel.name!r} ({kernel.mode})")
    return ad.filter2d(h, kernel.normalized)


def sharp_variant(h, kernel: FilterKernel):
    """Unsharp masking: h + (h - blur(h)) = 2h - blur(h)."""
    if kernel.mode != MODE_SHARP:
        raise ValueError(f"sharp_variant needs a sharp kernel, got "
                         f"{kernel.name!r} ({kernel.mode})")
    return ad.sub(ad.scale(h, 2.0), ad.filter2d(h, kernel.normalized))


def apply_kernel(h, kernel: FilterKernel):
    if kernel.mode == MODE_BLUR:
        return blur_variant(h, kernel)
    return sharp_variant(h, kernel)


def build_pool(h, bank: FilterBank) -> HiddenStatePool:
    """Filter h with every bank kernel, in bank order."""
    if len(bank) == 0:
        raise ValueError("build_pool: empty filter bank")
    return HiddenStatePool([apply_kernel(h, k) for k in bank], bank)


def build_override_pool(h, bank: FilterBank, mode: str,
                        kernel_index: int) -> HiddenStatePool:
    """Pool with all N slots replaced by one chosen variant (same N).

    kernel_index selects within the kernels of the requested mode.
    """
    candidates = bank.of_mode(mode)
    if not candidates:
        raise ValueError(f"bank has no kernels of mode {mode!r}")
    if not (0 <= kernel_index < len(candidates)):
        raise ValueError(f"kernel_index {kernel_index} out of range for "
                         f"{len(candidates)} {mode} kernels")
    variant = apply_kernel(h, candidates[kernel_index])
    return HiddenStatePool([variant] * len(bank), bank)
