//! Corpora: synthetic two-factor generation, manifest loading, feature
//! extraction and batch packing.

mod audio;
mod batch;
mod dump;
mod features;
mod manifest;
mod synthetic;

pub use audio::{probe_wav, read_wav, write_wav};
pub use batch::{batch_frames, BatchPlan, BatchSampler, FrameBatchPair};
pub use dump::{decode_feature_dump, encode_feature_dump, read_feature_dump, write_feature_dump, FEATURE_MAGIC};
pub use features::{
    extract_features, hz_to_mel, log_mel_spectrogram, mel_band_centers, mel_filterbank, mel_to_hz,
    normalize_utterance, FeatureConfig,
};
pub use manifest::{
    load_corpus, CorpusManifest, ManifestHeader, Source, SyntheticHeader, Utterance,
};
pub use synthetic::{
    generate_synthetic_corpus, PhoneShape, SyntheticFeatures, SyntheticMode, SyntheticRenderer,
    SyntheticSpec, Voice, BASE_F0_HZ,
};

pub(crate) use features::hann;

pub const SAMPLE_RATE: u32 = 16_000;
/// Frames per second of every feature stream and label track.
pub const FRAME_RATE: f64 = 50.0;
/// Audio samples per frame hop (20 ms).
pub const SAMPLES_PER_FRAME: usize = 320;
