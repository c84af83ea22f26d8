//! Panoramic map accumulation for registered frame sequences.

mod map;
mod seam;
mod sequence;

pub use map::{PlacedFrame, StitchMap, DEFAULT_MAX_DIM, GROWTH_STEP};
pub use seam::{
    blend, idw_weights, junction_jump, seam_diffs, seam_offset, seam_points, BlendReport, Layer, LayerRef, MaskView, Seam,
    FEATHER_BAND, MAX_SEAM_POINTS, SEAM_DIFF_RADIUS,
};
pub use sequence::{
    prepare_frame, register_pair, stitch_sequence, FrameRecord, InitRecord, Manifest, PairRegistration, PairStatus,
    PreparedFrame, SegmentRecord, SequenceFrame, StitchOptions, StitchOutput, Timings, MANIFEST_SCHEMA_VERSION,
};
