//! On-disk feature sets, manifests, and synthetic data.

mod featureset;
mod manifest;
mod synth;

pub use featureset::{
    decode_featureset, encode_featureset, read_featureset, write_featureset, FeatureSet,
    FEATURE_HEADER_LEN, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use manifest::{
    load_manifest, manifest_to_csv, parse_manifest, read_manifest, write_manifest, Dataset,
    Manifest, ManifestEntry,
};
pub use synth::{
    generate_synthetic, write_synthetic, SynthDataset, SynthGroup, SynthSpec,
    DEFAULT_CENSOR_HORIZON,
};
