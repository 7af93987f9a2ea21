"""Synthetic paired image/sentence corpus for end-to-end pipeline checks.

Each image is a noisy linear view of a latent vector; each of its sentences is
a bag of word vectors drawn around a jittered linear view of the same latent.
Cross-modal structure therefore exists by construction, and a run is fully
determined by its config.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError
from .matrix_io import (
    DatasetManifest,
    DescriptorSetIndex,
    SPLITS,
    save_ids,
    save_manifest,
    save_matrix,
    save_set_index,
)


@dataclass(frozen=True)
class FixtureConfig:
    seed: int = 0
    n_images: int = 100
    sentences_per_image: int = 5
    latent_dim: int = 8
    image_dim: int = 24
    word_dim: int = 8
    min_words: int = 6
    max_words: int = 14
    image_noise: float = 0.1
    sentence_jitter: float = 0.15
    word_noise: float = 0.3

    def __post_init__(self):
        if self.n_images < 5:
            raise DataValidationError("n_images must be >= 5 so every split gets images")
        if self.sentences_per_image < 2:
            raise DataValidationError("sentences_per_image must be >= 2")
        if min(self.latent_dim, self.image_dim, self.word_dim) < 1:
            raise DataValidationError("dimensions must be >= 1")
        if not 1 <= self.min_words <= self.max_words:
            raise DataValidationError("need 1 <= min_words <= max_words")
        if min(self.image_noise, self.sentence_jitter, self.word_noise) <= 0:
            raise DataValidationError("noise scales must be > 0")


@dataclass(frozen=True)
class Fixture:
    """Per-split arrays plus the manifest tying sentences to images."""

    words: dict
    sets: dict
    sentence_ids: dict
    images: dict
    image_ids: dict
    images_by_sentence: dict
    manifest: DatasetManifest


def _split_counts(n_images: int) -> dict[str, int]:
    n_train = max(1, int(round(0.6 * n_images)))
    n_val = max(1, int(round(0.2 * n_images)))
    if n_train + n_val >= n_images:
        n_train = n_images - n_val - 1
    return {"train": n_train, "validation": n_val, "test": n_images - n_train - n_val}


def make_fixture(config: FixtureConfig = FixtureConfig()) -> Fixture:
    rng = np.random.default_rng(config.seed)
    n, per = config.n_images, config.sentences_per_image

    # mixing matrices, column-scaled so outputs stay O(1)
    img_map = rng.standard_normal((config.image_dim, config.latent_dim)) / np.sqrt(config.latent_dim)
    word_map = rng.standard_normal((config.word_dim, config.latent_dim)) / np.sqrt(config.latent_dim)

    latents = rng.standard_normal((n, config.latent_dim))
    image_vecs = latents @ img_map.T + config.image_noise * rng.standard_normal(
        (n, config.image_dim)
    )

    counts = _split_counts(n)
    shuffled = rng.permutation(n)
    split_of = {}
    cursor = 0
    for split in SPLITS:
        for idx in shuffled[cursor : cursor + counts[split]]:
            split_of[int(idx)] = split
        cursor += counts[split]

    words = {split: [] for split in SPLITS}
    sets = {split: [] for split in SPLITS}
    sentence_ids = {split: [] for split in SPLITS}
    images = {split: [] for split in SPLITS}
    image_ids = {split: [] for split in SPLITS}
    images_by_sentence = {split: [] for split in SPLITS}
    pairs = []

    for i in range(n):
        split = split_of[i]
        image_id = f"img{i:04d}"
        images[split].append(image_vecs[i])
        image_ids[split].append(image_id)
        for j in range(per):
            sentence_id = f"{image_id}_s{j}"
            view = latents[i] + config.sentence_jitter * rng.standard_normal(config.latent_dim)
            n_words = int(rng.integers(config.min_words, config.max_words + 1))
            bag = view @ word_map.T + config.word_noise * rng.laplace(
                size=(n_words, config.word_dim)
            )
            start = sum(w.shape[0] for w in words[split])
            sets[split].append((sentence_id, start, start + n_words))
            words[split].append(bag)
            sentence_ids[split].append(sentence_id)
            images_by_sentence[split].append(image_vecs[i])
            pairs.append((sentence_id, image_id, split))

    return Fixture(
        words={s: np.vstack(words[s]) for s in SPLITS},
        sets={s: DescriptorSetIndex(tuple(sets[s])) for s in SPLITS},
        sentence_ids={s: list(sentence_ids[s]) for s in SPLITS},
        images={s: np.vstack(images[s]) for s in SPLITS},
        image_ids={s: list(image_ids[s]) for s in SPLITS},
        images_by_sentence={s: np.vstack(images_by_sentence[s]) for s in SPLITS},
        manifest=DatasetManifest(tuple(pairs)),
    )


def write_fixture(fixture: Fixture, out_dir) -> dict[str, str]:
    """Write every split's matrices, indexes and id lists plus the manifest.

    Returns a name -> path mapping of everything written.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def emit(name, writer, *args):
        path = os.path.join(out_dir, name)
        writer(*args, path)
        paths[name] = path
        return path

    for split in SPLITS:
        emit(f"words_{split}.fvm", save_matrix, fixture.words[split])
        emit(f"sets_{split}.tsv", save_set_index, fixture.sets[split])
        emit(f"sentence_ids_{split}.txt", save_ids, fixture.sentence_ids[split])
        emit(f"images_{split}.fvm", save_matrix, fixture.images[split])
        emit(f"image_ids_{split}.txt", save_ids, fixture.image_ids[split])
        emit(f"images_by_sentence_{split}.fvm", save_matrix, fixture.images_by_sentence[split])
    emit("manifest.tsv", save_manifest, fixture.manifest)
    return paths
