"""Corpora: synthetic generation, loading from disk and example sampling."""
from app.services.data.corpus_tools import (
    class_distribution,
    combine_solo_recordings,
    one_stem_per_class,
)
from app.services.data.loader import (
    DirectoryCorpusSource,
    SyntheticCorpusSource,
    identity_mapping,
    load_corpus_dir,
    load_multitrack_dir,
    write_corpus,
)
from app.services.data.sampler import (
    ConditioningDrawer,
    TrainingExampleSampler,
    class_segment,
    sample_training_example,
)
from app.services.data.synthetic import (
    SyntheticCorpusGenerator,
    generate_synthetic_corpus,
    spectral_centroid,
)

__all__ = [
    "ConditioningDrawer",
    "DirectoryCorpusSource",
    "SyntheticCorpusGenerator",
    "SyntheticCorpusSource",
    "TrainingExampleSampler",
    "class_distribution",
    "class_segment",
    "combine_solo_recordings",
    "generate_synthetic_corpus",
    "identity_mapping",
    "load_corpus_dir",
    "load_multitrack_dir",
    "one_stem_per_class",
    "sample_training_example",
    "spectral_centroid",
    "write_corpus",
]
