//! Raw tabular data, vocabulary construction, index encoding, splitting and
//! the synthetic planted-structure generator.

mod cache;
mod raw;
mod schema;
mod split;
mod synth;

pub use cache::{
    dataset_from_bytes, dataset_to_bytes, read_dataset, write_dataset, DATASET_MAGIC,
    DATASET_VERSION,
};
pub use raw::{discretize_numeric, FieldKind, LogBase, RawDataset, RawRow};
pub use schema::{build_schema, encode, EncodedDataset, FieldInfo, FieldSchema};
pub use split::{split, Split};
pub use synth::{synth_generate, SynthSpec};
