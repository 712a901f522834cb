import numpy as np
import pytest

from src.core.exceptions import CheckpointFormatError, CheckpointMismatchError, CorpusIOError
from src.numerics.optim import AdamWState
from src.pairing.corpus import render_image
from src.pairing.scenes import SEMANTIC_KEYS
from src.persistence.checkpoint import (
    Checkpoint,
    CheckpointRepository,
    check_compatible,
    decode_checkpoint,
    decode_counter,
    encode_checkpoint,
    encode_counter,
    inspect_records,
)
from src.persistence.corpus_repository import CorpusRepository
from src.persistence.models import TripletIndexEntry


@pytest.fixture
def checkpoint(tiny_config):
    params = {"a.w": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array([0.5], dtype=np.float32)}
    optimizer = AdamWState(
        m={name: value * 0.1 for name, value in params.items()},
        v={name: value * 0.01 for name, value in params.items()},
        step=7,
    )
    return Checkpoint(config=tiny_config, params=params, optimizer=optimizer, step=7)


class TestCheckpoint:
    def test_save_load_preserves_everything(self, checkpoint, tmp_path):
        repository = CheckpointRepository()
        path = repository.save(checkpoint, tmp_path / "ckpt" / "a.ckpt")
        loaded = repository.load(path)
        assert loaded.step == 7
        assert loaded.optimizer.step == 7
        assert loaded.config == checkpoint.config
        for name, value in checkpoint.params.items():
            assert np.array_equal(loaded.params[name], value)
            assert np.array_equal(loaded.optimizer.m[name], checkpoint.optimizer.m[name])
        assert not (tmp_path / "ckpt" / "a.ckpt.tmp").exists()

    def test_encoding_is_canonical(self, checkpoint):
        assert encode_checkpoint(checkpoint) == encode_checkpoint(checkpoint)

    def test_encode_decode_encode_is_byte_identical(self, checkpoint):
        data = encode_checkpoint(checkpoint)
        assert encode_checkpoint(decode_checkpoint(data)) == data

    @pytest.mark.parametrize("step", [0, 2**24 + 1, 2**40 + 3, 2**64 - 1])
    def test_step_counters_survive_exactly(self, checkpoint, step):
        checkpoint.step = step
        checkpoint.optimizer.step = step // 2
        loaded = decode_checkpoint(encode_checkpoint(checkpoint))
        assert loaded.step == step
        assert loaded.optimizer.step == step // 2
        assert decode_counter(encode_counter(step)) == step

    def test_malformed_counter(self):
        with pytest.raises(CheckpointFormatError):
            decode_counter(np.zeros(3, dtype=np.float32))

    def test_inspect_lists_records(self, checkpoint):
        config_text, infos = inspect_records(encode_checkpoint(checkpoint))
        names = [info.name for info in infos]
        assert "param/a.w" in names and "adam.m/b" in names and "meta/step" in names
        assert dict((i.name, i.shape) for i in infos)["param/a.w"] == (2, 3)
        assert config_text.startswith("# resolved configuration")

    @pytest.mark.parametrize("mutate", [lambda d: b"XXXX" + d[4:], lambda d: d[:-3]])
    def test_corrupted_bytes(self, checkpoint, tmp_path, mutate):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(mutate(encode_checkpoint(checkpoint)))
        with pytest.raises(CheckpointFormatError):
            CheckpointRepository().load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointFormatError):
            CheckpointRepository().load(tmp_path / "missing.ckpt")

    def test_compatibility(self):
        expected = {"w": np.zeros((2, 2))}
        check_compatible({"w": np.ones((2, 2))}, expected)
        with pytest.raises(CheckpointMismatchError):
            check_compatible({"w": np.ones((3, 2))}, expected)
        with pytest.raises(CheckpointMismatchError):
            check_compatible({"v": np.ones((2, 2))}, expected)


class TestCorpusRepository:
    def test_write_and_load_triplets(self, tiny_config, tmp_path):
        corpus = tiny_config.corpus_config()
        images = [render_image(i, corpus) for i in (0, len(SEMANTIC_KEYS), 1)]
        repository = CorpusRepository(tmp_path / "corpus")
        repository.write_corpus(images)

        records = repository.read_records()
        assert [r.id for r in records] == [0, 1, len(SEMANTIC_KEYS)]
        assert records[0] == images[0].record

        repository.write_index("test", [TripletIndexEntry(input_id=0, reference_id=len(SEMANTIC_KEYS))])
        (triplet,) = repository.load_triplets("test")
        assert triplet.input_id == 0
        assert triplet.input_image.shape == (32, 32, 3)
        # 8-bit storage
        assert np.abs(triplet.input_image - images[0].image).max() <= 0.5 / 255 + 1e-6
        assert np.array_equal(triplet.input_mask, images[0].mask)

    def test_unknown_ids_in_index(self, tiny_config, tmp_path):
        repository = CorpusRepository(tmp_path / "corpus")
        repository.write_corpus([render_image(0, tiny_config.corpus_config())])
        repository.write_index("train", [TripletIndexEntry(input_id=0, reference_id=99)])
        with pytest.raises(CorpusIOError):
            repository.load_triplets("train")

    def test_missing_metadata(self, tmp_path):
        with pytest.raises(CorpusIOError):
            CorpusRepository(tmp_path / "nowhere").read_records()

    def test_stats_absent_until_written(self, tmp_path):
        assert CorpusRepository(tmp_path).read_stats() is None
