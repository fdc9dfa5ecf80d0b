//! File formats: NIfTI-1 volumes, `key = value` pipeline configuration and
//! JSON/CSV case reports.

mod config;
mod nifti;
mod report;

pub use config::{load_config, parse_config, PipelineConfig, TopK};
pub use nifti::{
    decode_nifti, read_mask, read_nifti, read_nifti_typed, write_nifti, write_nifti_as, NiftiDatatype,
    NiftiImage, NiftiWrite, HEADER_SIZE, VOX_OFFSET,
};
pub use report::{read_report_json, write_report, CaseReport, ReportFormat};
