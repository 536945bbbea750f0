//! File formats: WAV, dataset and HRIR manifests, `.npy` dumps.

mod manifest;
mod npy;
mod wav;

pub use manifest::{
    load_hrir_set, load_manifest, make_manifest, DatasetManifest, HrirEntry, HrirManifest, ManifestEntry, Split,
    SplitRule, AMBI_SUFFIX, BINAURAL_SUFFIX,
};
pub use npy::{npy_bytes, write_npy};
pub use wav::{read_wav, wav_info, write_wav, WavCodec, WavInfo, WriteReport};
