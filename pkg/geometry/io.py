"""
File formats: 300-W ".pts" landmark files and PNG images/masks (through pygame).
"""

import os
from typing import List
import numpy as np
import pygame

from shared.constants import NUM_LANDMARKS
from shared.types import LandmarkSet, SegMask
from shared.exceptions import ResourceLoadError, ValidationException

_GRAY_PALETTE = [(value, value, value) for value in range(256)]


def parse_pts_text(text: str, source: str = "<text>") -> LandmarkSet:
    """
    Parse the contents of a 300-W pts file.

    Raises:
        ResourceLoadError: If the header, brace structure or point count is wrong
    """
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    header = {}
    index = 0
    while index < len(lines) and lines[index] != "{":
        if ":" not in lines[index]:
            raise ResourceLoadError(f"{source}: unexpected header line {lines[index]!r}")
        key, value = (part.strip() for part in lines[index].split(":", 1))
        header[key] = value
        index += 1

    if index == len(lines):
        raise ResourceLoadError(f"{source}: missing '{{'")
    try:
        n_points = int(header.get("n_points", ""))
    except ValueError as e:
        raise ResourceLoadError(f"{source}: missing or invalid n_points") from e
    if n_points != NUM_LANDMARKS:
        raise ResourceLoadError(f"{source}: expected n_points: {NUM_LANDMARKS}, got {n_points}")

    body = lines[index + 1:]
    if not body or body[-1] != "}":
        raise ResourceLoadError(f"{source}: missing '}}'")
    rows: List[List[float]] = []
    for line in body[:-1]:
        parts = line.split()
        if len(parts) != 2:
            raise ResourceLoadError(f"{source}: bad point line {line!r}")
        try:
            rows.append([float(parts[0]), float(parts[1])])
        except ValueError as e:
            raise ResourceLoadError(f"{source}: bad point line {line!r}") from e
    if len(rows) != n_points:
        raise ResourceLoadError(f"{source}: header says {n_points} points, found {len(rows)}")
    try:
        return LandmarkSet(rows)
    except ValidationException as e:
        raise ResourceLoadError(f"{source}: {e}") from e


def parse_pts(path: str) -> LandmarkSet:
    """Read a pts file from disk."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ResourceLoadError(f"Failed to read pts file: {path}") from e
    return parse_pts_text(text, source=path)


def write_pts(path: str, landmarks: LandmarkSet) -> None:
    """Write landmarks in 300-W pts layout with round-trippable floats."""
    lines = ["version: 1", f"n_points: {NUM_LANDMARKS}", "{"]
    lines.extend(f"{x!r} {y!r}" for x, y in landmarks.points.tolist())
    lines.append("}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def save_mask_png(path: str, mask: SegMask) -> None:
    """Save raw label values 0-7 as an 8-bit single-channel PNG."""
    surface = pygame.surfarray.make_surface(np.ascontiguousarray(mask.labels.T))
    surface.set_palette(_GRAY_PALETTE)
    pygame.image.save(surface, path)


def load_mask_png(path: str) -> SegMask:
    """
    Load a mask PNG written by `save_mask_png`.

    Raises:
        ResourceLoadError: If the file cannot be decoded or holds invalid labels
    """
    try:
        surface = pygame.image.load(path)
    except (pygame.error, FileNotFoundError) as e:
        raise ResourceLoadError(f"Failed to load mask: {path}") from e
    if surface.get_bitsize() == 8:
        labels = pygame.surfarray.array2d(surface).T
    else:
        labels = pygame.surfarray.array_red(surface).T
    try:
        return SegMask.from_labels(labels.astype(np.uint8))
    except ValidationException as e:
        raise ResourceLoadError(f"{path}: {e}") from e


def image_to_surface(image: np.ndarray) -> pygame.Surface:
    """Quantise an H x W x 3 image in [0, 1] to an 8-bit RGB surface."""
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return pygame.surfarray.make_surface(np.ascontiguousarray(pixels.transpose(1, 0, 2)))


def surface_to_image(surface: pygame.Surface) -> np.ndarray:
    """H x W x 3 float64 intensities in [0, 1] from an RGB surface."""
    return pygame.surfarray.array3d(surface).transpose(1, 0, 2).astype(np.float64) / 255.0


def save_image_png(path: str, image: np.ndarray) -> None:
    """Save an H x W x 3 image with intensities in [0, 1] as 8-bit RGB."""
    pygame.image.save(image_to_surface(image), path)


def load_image_png(path: str) -> np.ndarray:
    """Load an image as H x W x 3 float64 intensities in [0, 1]."""
    if not os.path.exists(path):
        raise ResourceLoadError(f"Image not found: {path}")
    try:
        surface = pygame.image.load(path)
    except pygame.error as e:
        raise ResourceLoadError(f"Failed to load image: {path}") from e
    return surface_to_image(surface)
