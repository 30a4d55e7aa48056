from .archive import dex_order, extract_streams
from .imaging import (DEFAULT_SIZES, ByteStream, EntryKind, GrayImage, bytes_to_image, decode_pgm,
                      encode_pgm, read_image, resample_bytes, resize_image, write_image)
from .manifest import (CorpusManifest, Label, Origin, SampleRecord, Split, build_corpus,
                       classifier_train_pool, load_label_map, split_corpus)
from .perturb import Perturbation, PerturbParams, perturb_manifest, perturb_stream
from .synth import synth_corpus, synth_stream

__all__ = [
    "dex_order", "extract_streams", "DEFAULT_SIZES", "ByteStream", "EntryKind", "GrayImage",
    "bytes_to_image", "decode_pgm", "encode_pgm", "read_image", "resample_bytes", "resize_image",
    "write_image", "CorpusManifest", "Label", "Origin", "SampleRecord", "Split", "build_corpus",
    "classifier_train_pool", "load_label_map", "split_corpus", "Perturbation", "PerturbParams",
    "perturb_manifest", "perturb_stream", "synth_corpus", "synth_stream",
]
