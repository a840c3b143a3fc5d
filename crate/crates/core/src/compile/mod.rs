//! Generators for the treewidth SIDs and the SLR to SO translation.

mod translate;
mod twformsid;
mod twsid;

pub use twformsid::{
    gen_tw_form_sid, gen_tw_form_sid_full, strip_annotations, tw_form_top, FormSidOptions, TwFormSid, TYPE_CUTOFF,
};
pub use translate::{
    build_frame_formula, build_tree_formula, extract_certificate, slr_to_so, Certificate, RuleShape, Side, SlotFlowGraph,
};
pub use twsid::{gen_tw_sid, small_pred, tw_top, TW_PRED};
pub(crate) use twsid::functions;
