"""Core shared types: tag vocabulary, samples, datasets, and modality combos.

All types are immutable after construction (frozen dataclasses; numpy arrays
are marked read-only), so instances can be shared freely across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np

from .errors import DuplicateId, GeotagError

NUM_TAGS = 49
EMBED_DIM = 512
LOCATION_DIM = 2

# Guard band around the normalized [0,1] UK bounding box. The bounds in the
# normalization are rough, so slightly-outside values are legal; values far
# outside indicate upstream corruption and are rejected, never clamped.
LOCATION_RANGE = (-0.1, 1.1)

# The 49-tag taxonomy in canonical row order (index 0 = Coastal ...
# index 48 = Communications). Files and reports use indices; names are
# resolved only for display.
_TAG_TABLE: tuple[tuple[str, str], ...] = (
    # Topography
    ("Coastal", "Topography"),
    ("Islands", "Topography"),
    ("Flat landscapes", "Topography"),
    ("Lowlands", "Topography"),
    ("Uplands", "Topography"),
    ("Geological interest", "Topography"),
    # Natural environment
    ("Air, Sky, Weather", "Natural environment"),
    ("Estuary, Marine", "Natural environment"),
    ("Lakes, Wetland, Bog", "Natural environment"),
    ("Rivers, Streams, Drainage", "Natural environment"),
    ("Grassland", "Natural environment"),
    ("Rocks, Scree, Cliffs", "Natural environment"),
    ("Barren Plateaux", "Natural environment"),
    ("Moorland", "Natural environment"),
    ("Heath, Scrub", "Natural environment"),
    ("Woodland, Forest", "Natural environment"),
    ("Wild Animals, Plants and Mushrooms", "Natural environment"),
    # Human use
    ("Farm, Fishery, Market Gardening", "Human use"),
    ("Quarrying, Mining", "Human use"),
    ("Water resources", "Human use"),
    ("Energy infrastructure", "Human use"),
    ("Country estates", "Human use"),
    ("Industry", "Human use"),
    ("Defence, Military", "Human use"),
    ("Construction, Development", "Human use"),
    ("Business, Retail, Services", "Human use"),
    ("Sport, Leisure", "Human use"),
    ("Waste, Waste management", "Human use"),
    ("Derelict, Disused", "Human use"),
    # Human habitat
    ("City, Town centre", "Human habitat"),
    ("Suburb, Urban fringe", "Human habitat"),
    ("Village, Rural settlement", "Human habitat"),
    ("Park and Public Gardens", "Human habitat"),
    ("Public buildings and spaces", "Human habitat"),
    ("Housing, Dwellings", "Human habitat"),
    ("Educational sites", "Human habitat"),
    ("Health and social services", "Human habitat"),
    ("Historic sites and artefacts", "Human habitat"),
    ("Religious sites", "Human habitat"),
    ("Boundary, Barrier", "Human habitat"),
    ("People, Events", "Human habitat"),
    ("Burial ground, Crematorium", "Human habitat"),
    # Communications
    ("Canals", "Communications"),
    ("Docks, Harbours", "Communications"),
    ("Railways", "Communications"),
    ("Paths", "Communications"),
    ("Roads, Road transport", "Communications"),
    ("Air transport", "Communications"),
    ("Communications", "Communications"),
)

TAG_GROUPS = ("Topography", "Natural environment", "Human use",
              "Human habitat", "Communications")


@dataclass(frozen=True)
class TagEntry:
    index: int
    name: str
    group: str


@dataclass(frozen=True)
class TagVocabulary:
    """Ordered 49-tag taxonomy with index <-> name mapping."""

    entries: tuple[TagEntry, ...]
    _by_name: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.entries) != NUM_TAGS:
            raise GeotagError(f"vocabulary must have {NUM_TAGS} entries, got {len(self.entries)}")
        for i, e in enumerate(self.entries):
            if e.index != i:
                raise GeotagError(f"entry {e.name!r} has index {e.index}, expected {i}")
            if e.group not in TAG_GROUPS:
                raise GeotagError(f"entry {e.name!r} has unknown group {e.group!r}")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise GeotagError("tag names must be unique")
        object.__setattr__(self, "_by_name", {e.name: e.index for e in self.entries})

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[TagEntry]:
        return iter(self.entries)

    def index_of(self, name: str) -> int:
        """Index of a tag name; raises KeyError for unknown names."""
        return self._by_name[name]

    def name_of(self, index: int) -> str:
        return self.entries[index].name

    def group_of(self, index: int) -> str:
        return self.entries[index].group

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def group_sizes(self) -> dict[str, int]:
        sizes = {g: 0 for g in TAG_GROUPS}
        for e in self.entries:
            sizes[e.group] += 1
        return sizes


@lru_cache(maxsize=1)
def builtin_vocabulary() -> TagVocabulary:
    """The canonical 49-tag vocabulary (index 0 = Coastal ... 48 = Communications)."""
    return TagVocabulary(tuple(
        TagEntry(i, name, group) for i, (name, group) in enumerate(_TAG_TABLE)
    ))


class ModalityCombo(enum.Enum):
    """The seven fusion variants; value is the canonical config-file name."""

    IMAGE = "image"
    TITLE = "title"
    LOCATION = "location"
    IMAGE_TITLE = "image_title"
    IMAGE_LOCATION = "image_location"
    TITLE_LOCATION = "title_location"
    ALL = "all"

    @property
    def uses_image(self) -> bool:
        return self in (ModalityCombo.IMAGE, ModalityCombo.IMAGE_TITLE,
                        ModalityCombo.IMAGE_LOCATION, ModalityCombo.ALL)

    @property
    def uses_title(self) -> bool:
        return self in (ModalityCombo.TITLE, ModalityCombo.IMAGE_TITLE,
                        ModalityCombo.TITLE_LOCATION, ModalityCombo.ALL)

    @property
    def uses_location(self) -> bool:
        return self in (ModalityCombo.LOCATION, ModalityCombo.IMAGE_LOCATION,
                        ModalityCombo.TITLE_LOCATION, ModalityCombo.ALL)

    @staticmethod
    def from_string(text: str) -> "ModalityCombo":
        try:
            return ModalityCombo(text.strip().lower())
        except ValueError:
            valid = ", ".join(c.value for c in ModalityCombo)
            raise GeotagError(f"unknown modality combo {text!r} (valid: {valid})") from None


def combo_dim(combo: ModalityCombo) -> int:
    """Fused feature dimension for a combo (image 512 + title 512 + location 2)."""
    dim = 0
    if combo.uses_image:
        dim += EMBED_DIM
    if combo.uses_title:
        dim += EMBED_DIM
    if combo.uses_location:
        dim += LOCATION_DIM
    return dim


def _frozen_f32(values, length: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.shape != (length,):
        raise GeotagError(f"{what} must have shape ({length},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeotagError(f"{what} contains non-finite values")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def make_label_vector(bits) -> np.ndarray:
    """Validate and freeze a 49-wide multi-hot label vector."""
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.shape != (NUM_TAGS,):
        raise GeotagError(f"label vector must have shape ({NUM_TAGS},), got {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise GeotagError("label vector entries must be 0 or 1")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """One image's id plus whatever modalities and labels are available.

    Labeled samples must carry at least one set bit: every training image is
    annotated with one or more tags, and all-zero vectors only occur as raw
    model predictions, which never pass through Sample.
    """

    id: int
    title: Optional[str] = None
    image_emb: Optional[np.ndarray] = None
    text_emb: Optional[np.ndarray] = None
    loc: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (0 <= self.id < 2 ** 64):
            raise GeotagError(f"sample id {self.id} outside unsigned 64-bit range")
        if self.image_emb is not None:
            object.__setattr__(self, "image_emb",
                               _frozen_f32(self.image_emb, EMBED_DIM, "image embedding"))
        if self.text_emb is not None:
            object.__setattr__(self, "text_emb",
                               _frozen_f32(self.text_emb, EMBED_DIM, "text embedding"))
        if self.loc is not None:
            loc = _frozen_f32(self.loc, LOCATION_DIM, "location feature")
            lo, hi = LOCATION_RANGE
            if np.any(loc < lo) or np.any(loc > hi):
                raise GeotagError(
                    f"location feature {loc.tolist()} outside sanity range [{lo}, {hi}]")
            object.__setattr__(self, "loc", loc)
        if self.labels is not None:
            labels = make_label_vector(self.labels)
            if int(labels.sum()) == 0:
                raise GeotagError(f"sample {self.id}: labeled samples need >= 1 set bit")
            object.__setattr__(self, "labels", labels)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered collection of samples sharing one tag vocabulary."""

    samples: tuple[Sample, ...]
    vocabulary: TagVocabulary

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        seen: set[int] = set()
        for s in self.samples:
            if s.id in seen:
                raise DuplicateId(f"duplicate sample id {s.id}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    @property
    def labeled(self) -> bool:
        return all(s.labels is not None for s in self.samples) and len(self.samples) > 0

    def ids(self) -> list[int]:
        return [s.id for s in self.samples]
