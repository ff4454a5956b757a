import numpy as np
import pytest

from geotag.data_model import (Dataset, ModalityCombo, Sample, builtin_vocabulary,
                               combo_dim, make_label_vector)
from geotag.errors import DuplicateId, GeotagError


class TestBuiltinVocabulary:
    def test_has_49_entries_with_contiguous_indices(self):
        vocab = builtin_vocabulary()
        assert len(vocab) == 49
        assert [e.index for e in vocab] == list(range(49))

    def test_first_and_last_rows(self):
        vocab = builtin_vocabulary()
        assert vocab.entries[0].name == "Coastal"
        assert vocab.entries[0].group == "Topography"
        assert vocab.entries[48].name == "Communications"
        assert vocab.entries[48].group == "Communications"

    def test_group_sizes(self):
        sizes = builtin_vocabulary().group_sizes()
        assert sizes == {"Topography": 6, "Natural environment": 11,
                         "Human use": 12, "Human habitat": 13, "Communications": 7}

    def test_names_unique(self):
        names = [e.name for e in builtin_vocabulary()]
        assert len(set(names)) == 49

    def test_name_index_roundtrip(self):
        vocab = builtin_vocabulary()
        for e in vocab:
            assert vocab.name_of(vocab.index_of(e.name)) == e.name

    def test_known_spot_checks(self):
        vocab = builtin_vocabulary()
        assert vocab.index_of("Wild Animals, Plants and Mushrooms") == 16
        assert vocab.group_of(vocab.index_of("Docks, Harbours")) == "Communications"
        assert "Costal" not in vocab


class TestComboDim:
    @pytest.mark.parametrize("combo,dim", [
        (ModalityCombo.IMAGE, 512),
        (ModalityCombo.TITLE, 512),
        (ModalityCombo.LOCATION, 2),
        (ModalityCombo.IMAGE_TITLE, 1024),
        (ModalityCombo.IMAGE_LOCATION, 514),
        (ModalityCombo.TITLE_LOCATION, 514),
        (ModalityCombo.ALL, 1026),
    ])
    def test_dims(self, combo, dim):
        assert combo_dim(combo) == dim

    def test_all_is_sum_of_singles(self):
        assert combo_dim(ModalityCombo.ALL) == (
            combo_dim(ModalityCombo.IMAGE) + combo_dim(ModalityCombo.TITLE)
            + combo_dim(ModalityCombo.LOCATION))

    def test_from_string(self):
        assert ModalityCombo.from_string("image_title") is ModalityCombo.IMAGE_TITLE
        assert ModalityCombo.from_string(" ALL ") is ModalityCombo.ALL
        with pytest.raises(GeotagError):
            ModalityCombo.from_string("image+title")


class TestSample:
    def test_valid_sample_freezes_arrays(self):
        s = Sample(id=1, image_emb=np.zeros(512), loc=[0.5, 0.5],
                   labels=[1] + [0] * 48)
        assert s.image_emb.dtype == np.float32
        assert not s.image_emb.flags.writeable
        assert s.labels.sum() == 1

    def test_wrong_embedding_length_rejected(self):
        with pytest.raises(GeotagError):
            Sample(id=1, image_emb=np.zeros(511))

    def test_nonfinite_embedding_rejected(self):
        bad = np.zeros(512)
        bad[3] = np.nan
        with pytest.raises(GeotagError):
            Sample(id=1, image_emb=bad)

    def test_location_sanity_range(self):
        Sample(id=1, loc=[-0.05, 1.05])  # slightly outside [0,1] is legal
        with pytest.raises(GeotagError):
            Sample(id=1, loc=[-0.2, 0.5])

    def test_all_zero_labels_rejected(self):
        with pytest.raises(GeotagError):
            Sample(id=1, labels=np.zeros(49, dtype=np.uint8))

    def test_label_vector_validation(self):
        with pytest.raises(GeotagError):
            make_label_vector(np.full(49, 2))
        with pytest.raises(GeotagError):
            make_label_vector(np.ones(48))


class TestDataset:
    def test_duplicate_ids_rejected(self):
        s = Sample(id=7)
        with pytest.raises(DuplicateId):
            Dataset(samples=(s, Sample(id=7)), vocabulary=builtin_vocabulary())

    def test_len_and_ids(self):
        ds = Dataset(samples=(Sample(id=1), Sample(id=2)),
                     vocabulary=builtin_vocabulary())
        assert len(ds) == 2
        assert ds.ids() == [1, 2]
        assert not ds.labeled
