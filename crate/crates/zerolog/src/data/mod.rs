//! Corpora: loading the public datasets, label handling with the
//! evaluation-only gold firewall, stratified splitting, shipped dataset
//! profiles, and the deterministic synthetic generator.

pub mod corpus;
pub mod loaders;
pub mod profiles;
pub mod synth;
pub mod words;

pub use corpus::{
    join_labels, load_label_map, save_label_map, split_corpus, strip_labels, take_fraction,
    Corpus, DataPair, EvalGold, JoinStats, LabelCounts,
};
pub use loaders::{
    bgl_default_spec, ingest_files, ingest_lines, label_by_key_list, load_bgl, load_hdfs,
    load_openstack, load_profiled, parse_synthetic_pair, read_hdfs_labels, Ingest, IngestReport,
};
pub use profiles::{DatasetProfile, ProfileSession};
pub use synth::{generate_synthetic_pair, synthetic_word_vectors, SyntheticPair, SyntheticSpec};
